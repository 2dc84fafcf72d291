//! Detectors sharing the [`Detector`] interface: the decentralized
//! mini-batch NAG-MCMC sampler, its centralized full-gradient counterpart,
//! LMMSE, and exhaustive maximum likelihood.

mod linear;
mod ml;
mod sampler;
mod schedule;

use std::io::Write;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

pub use linear::{lmmse_detect, lmmse_estimate, Lmmse};
pub use ml::{ml_brute_force, BruteForceMl, DEFAULT_ENUMERATION_CAP};
pub use sampler::{
    learning_rate, mh_accept, mini_batch_gradient, nag_stage, propose_candidate, sample_batch, CentralBackend,
    FabricBackend, MiniNagMcmc, NagMcmc, SamplerBackend,
};
pub use schedule::momentum_schedule;

use crate::channel::MimoInstance;
use crate::error::{Error, Result};
use crate::fabric::{MessageLedger, OpCounters, TopologyKind};
use crate::modem::Constellation;
use crate::scalar::Real;

/// How the NAG learning rate is derived from the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningRateMode {
    /// `τ = 1/‖Σ_c H_cᴴH_c‖_F` from full local Gram matrices.
    ExactGramFnorm,
    /// `τ = 1/‖D‖_F` from the uploaded Gram diagonals only.
    #[default]
    DiagApprox,
}

/// Starting state of every chain.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InitialSample {
    /// Uniform over the lattice, drawn from the chain's own stream.
    #[default]
    Random,
    /// Fixed symbol indices.
    Given(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Sampling iterations `S`.
    pub samples: usize,
    /// NAG iterations per sample `N_g`.
    pub nag_iterations: usize,
    /// Mini-batch size `m`; must divide the cluster count.
    pub batch_size: usize,
    /// Random-walk step `γ`.
    pub step_size: f64,
    pub learning_rate: LearningRateMode,
    /// Independent parallel chains `P`.
    pub samplers: usize,
    /// Master seed; per-detection streams also mix in a trial index.
    pub seed: u64,
    pub topology: TopologyKind,
    /// Bit width `ω` of one real value on the interconnect.
    pub omega: u32,
    pub initial: InitialSample,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            samples: 16,
            nag_iterations: 4,
            batch_size: 1,
            step_size: 0.05,
            learning_rate: LearningRateMode::DiagApprox,
            samplers: 1,
            seed: 0,
            topology: TopologyKind::Star,
            omega: 16,
            initial: InitialSample::Random,
        }
    }
}

impl DetectorConfig {
    /// Checks the configuration against a cluster count `C`.
    pub fn validate(&self, clusters: usize) -> Result<()> {
        if clusters == 0 {
            return Err(Error::config("cluster count must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > clusters || clusters % self.batch_size != 0 {
            return Err(Error::config(format!(
                "mini-batch size m={} must divide C={clusters}",
                self.batch_size
            )));
        }
        if self.nag_iterations == 0 {
            return Err(Error::config("need at least one NAG iteration"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(format!(
                "random-walk step must be positive, got {}",
                self.step_size
            )));
        }
        if self.samplers == 0 {
            return Err(Error::config("need at least one sampler"));
        }
        if self.omega == 0 {
            return Err(Error::config("bit width must be positive"));
        }
        Ok(())
    }
}

/// One Markov-chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord<T> {
    pub sampler: usize,
    pub t: usize,
    /// `x_t` as symbol indices.
    pub sample: Vec<usize>,
    /// Stored `f(x_t)`.
    pub f: T,
    /// `f(x_{t-1})`; equals `f` at `t = 0`.
    pub f_prev: T,
    /// Candidate objective; `None` for the initial state.
    pub f_cand: Option<T>,
    pub alpha: T,
    pub accepted: bool,
}

#[derive(Debug)]
pub struct Detection<T> {
    /// Hard decision as symbol indices.
    pub symbols: Vec<usize>,
    /// `f(x̂) = ½‖y − Hx̂‖²`.
    pub objective: T,
    pub trace: Vec<SampleRecord<T>>,
    pub ledger: Option<MessageLedger>,
    pub counters: Option<OpCounters>,
}

impl<T: Real> Detection<T> {
    pub fn decision(&self, constellation: &Constellation<T>) -> Vec<Complex<T>> {
        self.symbols.iter().map(|&i| constellation.point(i)).collect()
    }

    /// Best sample among records with `t <= s`, per sampler union; ties keep
    /// the earliest record.
    pub fn best_up_to(&self, s: usize) -> Option<&SampleRecord<T>> {
        let mut best: Option<&SampleRecord<T>> = None;
        for r in self.trace.iter().filter(|r| r.t <= s) {
            if best.is_none_or(|b| r.f < b.f) {
                best = Some(r);
            }
        }
        best
    }

    /// Trace CSV with header `t,f_prev,f_cand,alpha,accepted,f_best`.
    /// Initial states are not written; `f_best` is the running minimum of
    /// the sampler the row belongs to.
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "f_prev", "f_cand", "alpha", "accepted", "f_best"])?;
        let mut best = T::infinity();
        for r in &self.trace {
            if r.t == 0 {
                best = r.f;
                continue;
            }
            best = best.min(r.f);
            let f_cand = r.f_cand.map(|v| format!("{v:?}")).unwrap_or_default();
            wr.write_record([
                r.t.to_string(),
                format!("{:?}", r.f_prev),
                f_cand,
                format!("{:?}", r.alpha),
                u8::from(r.accepted).to_string(),
                format!("{best:?}"),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Shared detector interface.
pub trait Detector<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    fn constellation(&self) -> &Constellation<T>;

    /// Detects one instance. `trial` selects independent random streams.
    fn detect(&self, instance: &MimoInstance<T>, trial: u64) -> Result<Detection<T>>;
}
