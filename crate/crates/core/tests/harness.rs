use dbp_mcmc::harness::sim::{simulate_point, trial_instance, worker_pool};
use dbp_mcmc::harness::{
    run_bandwidth_report, run_ber_sweep, run_convergence, DetectorKind, DetectorSpec, ExperimentSpec, StoppingRule,
    SystemSpec,
};
use dbp_mcmc::modem::Constellation;

fn small_spec(workers: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::preset("fig4-desk").unwrap();
    spec.system = SystemSpec {
        antennas: 16,
        users: 4,
        clusters: 4,
        qam_order: 16,
    };
    spec.run.snr_db = vec![4.0, 10.0];
    spec.run.max_bits = 20_000;
    spec.run.max_errors = 200;
    spec.run.workers = workers;
    spec.detectors = vec![DetectorSpec::mini(2, 8), DetectorSpec::new(DetectorKind::Lmmse)];
    spec
}

fn csv_bytes(spec: &ExperimentSpec) -> Vec<u8> {
    let res = run_ber_sweep(spec).unwrap();
    let mut buf = Vec::new();
    res.write_ber_csv(&mut buf).unwrap();
    res.write_ser_csv(&mut buf).unwrap();
    buf
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let one = csv_bytes(&small_spec(1));
    let three = csv_bytes(&small_spec(3));
    assert_eq!(one, three);
    let mut other_seed = small_spec(1);
    other_seed.run.seed += 1;
    assert_ne!(one, csv_bytes(&other_seed));
}

#[test]
fn stopping_rule_stops_at_the_first_qualifying_trial() {
    let spec = small_spec(2);
    let res = run_ber_sweep(&spec).unwrap();
    let bits_per_trial = 16u64;
    for (d, per_snr) in res.per_trial.iter().enumerate() {
        for trials in per_snr {
            let mut bits = 0u64;
            let mut errors = 0u64;
            for (i, e) in trials.iter().enumerate() {
                bits += bits_per_trial;
                errors += e.bit_errors as u64;
                let done = bits >= spec.run.max_bits || errors > spec.run.max_errors;
                assert_eq!(done, i + 1 == trials.len(), "detector {d} trial {i}");
            }
        }
    }
    // Error-limited at low SNR, bit-limited at high SNR for LMMSE.
    let low = res.row("lmmse", 0).unwrap();
    assert!(low.bit_errors > spec.run.max_errors && low.bits < spec.run.max_bits);
    let high = res.row("lmmse", 1).unwrap();
    assert_eq!(high.bits, 20_000);
}

#[test]
fn detectors_see_common_trials() {
    let system = SystemSpec {
        antennas: 8,
        users: 2,
        clusters: 2,
        qam_order: 4,
    };
    let k = Constellation::<f64>::new(4).unwrap();
    let a = trial_instance(&system, &k, 10.0, 3, 17).unwrap();
    let b = trial_instance(&system, &k, 10.0, 3, 17).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.x_true, b.x_true);
    let c = trial_instance(&system, &k, 10.0, 3, 18).unwrap();
    assert_ne!(a.y, c.y);
    // Two copies of the same detector produce identical per-trial errors.
    let dets = vec![
        DetectorSpec::mini(1, 4).build(&system, 3).unwrap(),
        DetectorSpec::mini(1, 4).build(&system, 3).unwrap(),
    ];
    let pool = worker_pool(2).unwrap();
    let out = simulate_point(
        &system,
        &dets,
        6.0,
        3,
        StoppingRule {
            max_bits: 4_000,
            max_errors: 10_000,
        },
        &pool,
    )
    .unwrap();
    assert_eq!(out[0], out[1]);
    assert_eq!(out[0].len(), 1000);
}

#[test]
fn convergence_covers_the_grid() {
    let mut spec = ExperimentSpec::preset("fig3-desk").unwrap();
    spec.run.trials = 100;
    let res = run_convergence(&spec).unwrap();
    for d in &res.detectors {
        for &s in &res.samples_grid {
            assert_eq!(res.errors(d, s).unwrap().len(), 100);
        }
    }
    let mut buf = Vec::new();
    res.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("detector,S,bits,bit_errors,ber,ci_lo,ci_hi"));
    assert_eq!(text.lines().count(), 1 + res.detectors.len() * res.samples_grid.len());
}

#[test]
fn bandwidth_ratio_shrinks_with_antennas() {
    let spec = ExperimentSpec::preset("fig4-desk").unwrap();
    let rep = run_bandwidth_report(&spec).unwrap();
    assert!(rep.rows.iter().all(|r| r.bits == r.measured_bits));
    let ratios = rep.ratios();
    for w in ratios.windows(2) {
        assert!(w[1].1 < w[0].1 && w[1].2 < w[0].2);
    }
    // Chain never needs more than star.
    assert!(ratios.iter().all(|r| r.2 <= r.1));
}

#[test]
fn config_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let spec = ExperimentSpec::preset("oracle").unwrap();
    std::fs::write(&path, spec.to_toml().unwrap()).unwrap();
    assert_eq!(ExperimentSpec::load(&path).unwrap(), spec);
    std::fs::write(
        &path,
        "[system]\nantennas = 8\nusers = 2\nclusters = 3\nqam_order = 4\n",
    )
    .unwrap();
    assert!(ExperimentSpec::load(&path).is_err());
}

#[test]
fn sweep_outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(1);
    spec.run.snr_db = vec![6.0];
    spec.run.max_bits = 2_000;
    run_ber_sweep(&spec).unwrap().write_outputs(dir.path()).unwrap();
    let ber = std::fs::read_to_string(dir.path().join("ber.csv")).unwrap();
    assert!(ber.starts_with("detector,snr_db,bits,bit_errors,ber,ci_lo,ci_hi"));
    assert_eq!(ber.lines().count(), 3);
    assert!(dir.path().join("ser.csv").exists());
}
