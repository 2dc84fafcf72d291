use dbp_mcmc::channel::{db_to_linear, generate_rayleigh, ClusteredChannel, MimoInstance};
use dbp_mcmc::detectors::{
    learning_rate, mh_accept, ml_brute_force, Detector, DetectorConfig, LearningRateMode, MiniNagMcmc, NagMcmc,
};
use dbp_mcmc::fabric::{predicted_bandwidth, BandwidthMode, BandwidthParams, TopologyKind};
use dbp_mcmc::harness::reports::{measured_centralized_bits, measured_mini_bits};
use dbp_mcmc::harness::SystemSpec;
use dbp_mcmc::modem::Constellation;
use dbp_mcmc::rng::{stream_rng, Stream};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn instance(b: usize, u: usize, order: usize, snr_db: f64, seed: u64) -> MimoInstance<f64> {
    let k = Constellation::new(order).unwrap();
    let h = generate_rayleigh(b, u, &mut stream_rng(seed, 0, Stream::Channel)).unwrap();
    MimoInstance::synthesize(
        h,
        &k,
        db_to_linear(snr_db),
        &mut stream_rng(seed, 0, Stream::Symbols),
        &mut stream_rng(seed, 0, Stream::Noise),
    )
    .unwrap()
}

fn divisor_of(c: usize, pick: usize) -> usize {
    let d: Vec<usize> = (1..=c).filter(|m| c % m == 0).collect();
    d[pick % d.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acceptance_probability_is_bounded(f_prev in -50.0f64..50.0, f_cand in -50.0f64..50.0, seed in any::<u64>()) {
        let (acc, alpha) = mh_accept(f_cand, f_prev, &mut stream_rng(seed, 0, Stream::Accept)).unwrap();
        prop_assert!((0.0..=1.0).contains(&alpha));
        if f_cand <= f_prev {
            prop_assert_eq!(alpha, 1.0);
            prop_assert!(acc);
        } else {
            prop_assert!((alpha - (2.0 * (f_prev - f_cand)).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn detection_is_deterministic_and_cached_objectives_agree(
        seed in 0u64..1000, trial in 0u64..1000, cpick in 0usize..3, mpick in 0usize..4, samplers in 1usize..3,
    ) {
        let c = [2usize, 4, 8][cpick];
        let m = divisor_of(c, mpick);
        let inst = instance(16, 4, 16, 8.0, seed);
        let k = Constellation::new(16).unwrap();
        let cfg = DetectorConfig { samples: 6, batch_size: m, samplers, seed, ..Default::default() };
        let det = MiniNagMcmc::new(cfg, c, k.clone()).unwrap();
        let a = det.detect(&inst, trial).unwrap();
        let b = det.detect(&inst, trial).unwrap();
        prop_assert_eq!(&a.symbols, &b.symbols);
        prop_assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            prop_assert_eq!(&ra.sample, &rb.sample);
            prop_assert_eq!(ra.f.to_bits(), rb.f.to_bits());
        }
        // Table-based objectives agree with the direct residual.
        for r in &a.trace {
            let x: Vec<Complex64> = r.sample.iter().map(|&i| k.point(i)).collect();
            prop_assert!((r.f - inst.objective(&x)).abs() <= 1e-9 * (1.0 + r.f.abs()));
        }
        let best = a.trace.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(a.objective, best);
        prop_assert!(a.symbols.iter().all(|&s| s < 16));
    }

    #[test]
    fn ml_lower_bounds_every_sampler(seed in 0u64..500, snr in 0.0f64..20.0) {
        let inst = instance(4, 2, 4, snr, seed);
        let k = Constellation::new(4).unwrap();
        let (_, f_ml) = ml_brute_force(&inst.h, &inst.y, &k, 1 << 10).unwrap();
        let cfg = DetectorConfig { samples: 8, batch_size: 1, seed, ..Default::default() };
        let mini = MiniNagMcmc::new(cfg.clone(), 2, k.clone()).unwrap().detect(&inst, 0).unwrap();
        let nag = NagMcmc::new(cfg, k).unwrap().detect(&inst, 0).unwrap();
        prop_assert!(f_ml <= mini.objective + 1e-12);
        prop_assert!(f_ml <= nag.objective + 1e-12);
    }

    #[test]
    fn exact_learning_rate_is_below_inverse_lipschitz(seed in 0u64..1000, cpick in 0usize..3) {
        let c = [1usize, 2, 4][cpick];
        let inst = instance(8, 4, 4, 10.0, seed);
        let ch = ClusteredChannel::partition(&inst.h, &inst.y, c).unwrap();
        let tau: f64 = learning_rate(&ch, LearningRateMode::ExactGramFnorm).unwrap();
        let h = DMatrix::from_fn(8, 4, |r, col| inst.h[(r, col)]);
        let g = h.adjoint() * &h;
        let lmax = g.clone().symmetric_eigenvalues().max();
        prop_assert!((tau - 1.0 / g.norm()).abs() < 1e-12 / g.norm());
        prop_assert!(tau * lmax <= 1.0 + 1e-12);
        let d: f64 = (0..4).map(|i| g[(i, i)].re.powi(2)).sum::<f64>().sqrt();
        let tau_d: f64 = learning_rate(&ch, LearningRateMode::DiagApprox).unwrap();
        prop_assert!((tau_d - 1.0 / d).abs() < 1e-12 / d);
    }

    #[test]
    fn measured_bandwidth_equals_closed_form(
        cpick in 0usize..4, mpick in 0usize..4, u in 1usize..5, bc in 1usize..5,
        opick in 0usize..4, s in 0usize..6, ng in 1usize..6, omega in 4u32..33, seed in 0u64..100,
    ) {
        let c = [1usize, 2, 4, 8][cpick];
        let m = divisor_of(c, mpick);
        let order = [4usize, 16, 64, 256][opick];
        let b = c * bc.max(u);
        let system = SystemSpec { antennas: b, users: u, clusters: c, qam_order: order };
        let cfg = DetectorConfig { samples: s, nag_iterations: ng, batch_size: m, omega, seed, ..Default::default() };
        let p = BandwidthParams {
            b: b as u64, u: u as u64, c: c as u64, m: m as u64, s: s as u64,
            ng: ng as u64, omega: omega as u64, qam_order: order as u64,
        };
        prop_assert_eq!(
            measured_mini_bits(&system, cfg.clone(), TopologyKind::Star, seed).unwrap(),
            predicted_bandwidth(BandwidthMode::MiniStar, &p)
        );
        prop_assert_eq!(
            measured_mini_bits(&system, cfg, TopologyKind::DaisyChain, seed).unwrap(),
            predicted_bandwidth(BandwidthMode::MiniChain, &p)
        );
        prop_assert_eq!(
            measured_centralized_bits(&system, omega, seed).unwrap(),
            predicted_bandwidth(BandwidthMode::Centralized, &p)
        );
    }

    #[test]
    fn topology_does_not_change_decisions(seed in 0u64..1000, mpick in 0usize..3) {
        let m = [1usize, 2, 4][mpick];
        let inst = instance(16, 4, 16, 6.0, seed);
        let k = Constellation::new(16).unwrap();
        let star = DetectorConfig { batch_size: m, seed, ..Default::default() };
        let chain = DetectorConfig { topology: TopologyKind::DaisyChain, ..star.clone() };
        let a = MiniNagMcmc::new(star, 4, k.clone()).unwrap().detect(&inst, 3).unwrap();
        let b = MiniNagMcmc::new(chain, 4, k).unwrap().detect(&inst, 3).unwrap();
        prop_assert_eq!(a.symbols, b.symbols);
    }
}
