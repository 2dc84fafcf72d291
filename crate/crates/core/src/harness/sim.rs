//! Monte-Carlo BER/SER sweeps and convergence runs.
//!
//! Trial `t` draws its channel, symbols and noise from streams keyed by
//! `(seed, t)` only, so every detector and every SNR point sees the same
//! realizations. Trials are evaluated in fixed-size chunks on a worker
//! pool and merged in trial order, which makes results independent of the
//! worker count.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentSpec, SystemSpec};
use super::stats::{wilson_interval, Z95};
use crate::channel::{db_to_linear, generate_rayleigh, MimoInstance};
use crate::detectors::{Detection, Detector};
use crate::error::{Error, Result};
use crate::modem::Constellation;
use crate::rng::{stream_rng, Stream};

/// Trials evaluated per pool dispatch.
pub const CHUNK: usize = 64;

pub fn trial_instance(
    system: &SystemSpec,
    k: &Constellation<f64>,
    snr_db: f64,
    seed: u64,
    trial: u64,
) -> Result<MimoInstance<f64>> {
    let h = generate_rayleigh(
        system.antennas,
        system.users,
        &mut stream_rng(seed, trial, Stream::Channel),
    )?;
    MimoInstance::synthesize(
        h,
        k,
        db_to_linear(snr_db),
        &mut stream_rng(seed, trial, Stream::Symbols),
        &mut stream_rng(seed, trial, Stream::Noise),
    )
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Errors made on one transmitted vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TrialErrors {
    pub bit_errors: u32,
    pub symbol_errors: u32,
}

pub fn count_errors(k: &Constellation<f64>, truth: &[usize], decided: &[usize]) -> TrialErrors {
    let mut e = TrialErrors::default();
    for (&a, &b) in truth.iter().zip(decided) {
        let d = k.bit_distance(a, b);
        e.bit_errors += d;
        e.symbol_errors += u32::from(a != b);
    }
    e
}

/// One row of the BER table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerRow {
    pub detector: String,
    pub snr_db: f64,
    pub trials: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub symbols: u64,
    pub symbol_errors: u64,
    pub ser: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<BerRow>,
    /// `per_trial[d][s]`: errors of detector `d` at SNR index `s`, in trial order.
    pub per_trial: Vec<Vec<Vec<TrialErrors>>>,
    pub detectors: Vec<String>,
    pub snr_db: Vec<f64>,
}

impl SweepResult {
    pub fn row(&self, detector: &str, snr_idx: usize) -> Option<&BerRow> {
        let d = self.detectors.iter().position(|n| n == detector)?;
        self.rows.get(d * self.snr_db.len() + snr_idx)
    }

    pub fn ber_curve(&self, detector: &str) -> Option<Vec<f64>> {
        (0..self.snr_db.len())
            .map(|s| self.row(detector, s).map(|r| r.ber))
            .collect()
    }

    pub fn write_ber_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["detector", "snr_db", "bits", "bit_errors", "ber", "ci_lo", "ci_hi"])?;
        for r in &self.rows {
            wr.write_record([
                r.detector.clone(),
                r.snr_db.to_string(),
                r.bits.to_string(),
                r.bit_errors.to_string(),
                format!("{:e}", r.ber),
                format!("{:e}", r.ci_lo),
                format!("{:e}", r.ci_hi),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_ser_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["detector", "snr_db", "symbols", "symbol_errors", "ser"])?;
        for r in &self.rows {
            wr.write_record([
                r.detector.clone(),
                r.snr_db.to_string(),
                r.symbols.to_string(),
                r.symbol_errors.to_string(),
                format!("{:e}", r.ser),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_ber_csv(std::fs::File::create(dir.join("ber.csv"))?)?;
        self.write_ser_csv(std::fs::File::create(dir.join("ser.csv"))?)?;
        Ok(())
    }
}

/// Stopping rule: a point is done at the first trial after which
/// `bits >= max_bits` or `bit_errors > max_errors`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingRule {
    pub max_bits: u64,
    pub max_errors: u64,
}

impl StoppingRule {
    pub fn done(&self, bits: u64, errors: u64) -> bool {
        bits >= self.max_bits || errors > self.max_errors
    }
}

fn detect_symbols(det: &dyn Detector<f64>, inst: &MimoInstance<f64>, trial: u64) -> Result<Vec<usize>> {
    det.detect(inst, trial).map(|d| d.symbols)
}

/// Runs one SNR point for every detector under the stopping rule.
pub fn simulate_point(
    system: &SystemSpec,
    detectors: &[Box<dyn Detector<f64>>],
    snr_db: f64,
    seed: u64,
    rule: StoppingRule,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Vec<TrialErrors>>> {
    let k = Constellation::<f64>::new(system.qam_order)?;
    let bits_per_trial = (system.users * k.bits_per_symbol()) as u64;
    let mut out: Vec<Vec<TrialErrors>> = vec![Vec::new(); detectors.len()];
    let mut tallies = vec![(0u64, 0u64); detectors.len()];
    let mut active: Vec<bool> = vec![true; detectors.len()];
    let mut start = 0u64;
    while active.iter().any(|&a| a) {
        let chunk: Vec<u64> = (start..start + CHUNK as u64).collect();
        let act = active.clone();
        let results: Vec<Result<Vec<Option<TrialErrors>>>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&t| {
                    let inst = trial_instance(system, &k, snr_db, seed, t)?;
                    let truth = inst.x_true.as_deref().unwrap_or_default();
                    detectors
                        .iter()
                        .zip(&act)
                        .map(|(d, &on)| {
                            if !on {
                                return Ok(None);
                            }
                            let dec = detect_symbols(d.as_ref(), &inst, t)?;
                            Ok(Some(count_errors(&k, truth, &dec)))
                        })
                        .collect()
                })
                .collect()
        });
        for per_det in results {
            let per_det = per_det?;
            for (d, e) in per_det.into_iter().enumerate() {
                if !active[d] {
                    continue;
                }
                let e = e.expect("active detector has a result");
                out[d].push(e);
                tallies[d].0 += bits_per_trial;
                tallies[d].1 += e.bit_errors as u64;
                if rule.done(tallies[d].0, tallies[d].1) {
                    active[d] = false;
                }
            }
        }
        start += CHUNK as u64;
    }
    Ok(out)
}

fn summarize(name: &str, snr_db: f64, trials: &[TrialErrors], bits_per_trial: u64, users: u64) -> BerRow {
    let bits = trials.len() as u64 * bits_per_trial;
    let bit_errors: u64 = trials.iter().map(|e| e.bit_errors as u64).sum();
    let symbols = trials.len() as u64 * users;
    let symbol_errors: u64 = trials.iter().map(|e| e.symbol_errors as u64).sum();
    let (ci_lo, ci_hi) = wilson_interval(bit_errors, bits, Z95);
    BerRow {
        detector: name.to_string(),
        snr_db,
        trials: trials.len() as u64,
        bits,
        bit_errors,
        ber: if bits > 0 { bit_errors as f64 / bits as f64 } else { 0.0 },
        ci_lo,
        ci_hi,
        symbols,
        symbol_errors,
        ser: if symbols > 0 {
            symbol_errors as f64 / symbols as f64
        } else {
            0.0
        },
    }
}

/// BER/SER for every configured detector at every SNR point.
pub fn run_ber_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    if spec.detectors.is_empty() {
        return Err(Error::config("no detectors configured"));
    }
    let seed = spec.run.seed;
    let detectors: Vec<Box<dyn Detector<f64>>> = spec
        .detectors
        .iter()
        .map(|d| d.build(&spec.system, seed))
        .collect::<Result<_>>()?;
    let names: Vec<String> = detectors.iter().map(|d| d.name().to_string()).collect();
    let pool = worker_pool(spec.run.workers)?;
    let rule = StoppingRule {
        max_bits: spec.run.max_bits,
        max_errors: spec.run.max_errors,
    };
    let k = Constellation::<f64>::new(spec.system.qam_order)?;
    let users = spec.system.users as u64;
    let bits_per_trial = users * k.bits_per_symbol() as u64;
    let mut per_trial = vec![Vec::new(); detectors.len()];
    for &snr in &spec.run.snr_db {
        let res = simulate_point(&spec.system, &detectors, snr, seed, rule, &pool)?;
        for (d, r) in res.into_iter().enumerate() {
            per_trial[d].push(r);
        }
    }
    let mut rows = Vec::new();
    for (d, name) in names.iter().enumerate() {
        for (s, &snr) in spec.run.snr_db.iter().enumerate() {
            rows.push(summarize(name, snr, &per_trial[d][s], bits_per_trial, users));
        }
    }
    Ok(SweepResult {
        rows,
        per_trial,
        detectors: names,
        snr_db: spec.run.snr_db.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub detector: String,
    pub samples: usize,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    /// `per_trial[d][g]`: bit errors of sampler `d` at grid index `g`.
    pub per_trial: Vec<Vec<Vec<u32>>>,
    pub detectors: Vec<String>,
    pub samples_grid: Vec<usize>,
}

impl ConvergenceResult {
    pub fn errors(&self, detector: &str, samples: usize) -> Option<&[u32]> {
        let d = self.detectors.iter().position(|n| n == detector)?;
        let g = self.samples_grid.iter().position(|&s| s == samples)?;
        Some(&self.per_trial[d][g])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["detector", "S", "bits", "bit_errors", "ber", "ci_lo", "ci_hi"])?;
        for r in &self.rows {
            wr.write_record([
                r.detector.clone(),
                r.samples.to_string(),
                r.bits.to_string(),
                r.bit_errors.to_string(),
                format!("{:e}", r.ber),
                format!("{:e}", r.ci_lo),
                format!("{:e}", r.ci_hi),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn prefix_errors(k: &Constellation<f64>, truth: &[usize], det: &Detection<f64>, grid: &[usize]) -> Vec<u32> {
    grid.iter()
        .map(|&s| {
            let best = det.best_up_to(s).expect("trace holds the initial sample");
            count_errors(k, truth, &best.sample).bit_errors
        })
        .collect()
}

/// BER versus the number of sampling iterations `S` for every sampler in
/// the spec, at `run.convergence_snr_db` over `run.trials` trials. Each
/// trial runs once with `S = max(grid)`; the decision after `s` samples is
/// the best state among the first `s` (the chain prefix is identical).
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ConvergenceResult> {
    spec.validate()?;
    let grid = spec.run.samples_grid.clone();
    let s_max = *grid.iter().max().expect("validated non-empty");
    let seed = spec.run.seed;
    let samplers: Vec<Box<dyn Detector<f64>>> = spec
        .detectors
        .iter()
        .filter(|d| d.is_sampler())
        .map(|d| {
            let mut d = d.clone();
            d.samples = Some(s_max);
            d.build(&spec.system, seed)
        })
        .collect::<Result<_>>()?;
    if samplers.is_empty() {
        return Err(Error::config("convergence needs at least one sampling detector"));
    }
    let k = Constellation::<f64>::new(spec.system.qam_order)?;
    let pool = worker_pool(spec.run.workers)?;
    let snr = spec.run.convergence_snr_db;
    let trials: Vec<u64> = (0..spec.run.trials as u64).collect();
    let mut per_trial: Vec<Vec<Vec<u32>>> = vec![vec![Vec::with_capacity(trials.len()); grid.len()]; samplers.len()];
    for chunk in trials.chunks(CHUNK) {
        let res: Vec<Result<Vec<Vec<u32>>>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&t| {
                    let inst = trial_instance(&spec.system, &k, snr, seed, t)?;
                    let truth = inst.x_true.as_deref().unwrap_or_default();
                    samplers
                        .iter()
                        .map(|d| Ok(prefix_errors(&k, truth, &d.detect(&inst, t)?, &grid)))
                        .collect()
                })
                .collect()
        });
        for r in res {
            for (d, errs) in r?.into_iter().enumerate() {
                for (g, e) in errs.into_iter().enumerate() {
                    per_trial[d][g].push(e);
                }
            }
        }
    }
    let bits_per_trial = (spec.system.users * k.bits_per_symbol()) as u64;
    let names: Vec<String> = samplers.iter().map(|d| d.name().to_string()).collect();
    let mut rows = Vec::new();
    for (d, name) in names.iter().enumerate() {
        for (g, &s) in grid.iter().enumerate() {
            let bits = per_trial[d][g].len() as u64 * bits_per_trial;
            let bit_errors: u64 = per_trial[d][g].iter().map(|&e| e as u64).sum();
            let (ci_lo, ci_hi) = wilson_interval(bit_errors, bits, Z95);
            rows.push(ConvergenceRow {
                detector: name.clone(),
                samples: s,
                bits,
                bit_errors,
                ber: bit_errors as f64 / bits.max(1) as f64,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(ConvergenceResult {
        rows,
        per_trial,
        detectors: names,
        samples_grid: grid,
    })
}
