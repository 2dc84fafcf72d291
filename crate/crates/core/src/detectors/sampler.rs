//! Gradient-based MCMC sampling: NAG refinement, Gaussian random walk onto
//! the lattice, and Metropolis-Hastings acceptance. The same chain logic
//! drives the decentralized detector (gradients gathered through the
//! fabric from a random mini-batch of DUs) and the centralized one (full
//! gradients from the whole channel).

use num_complex::Complex;
use num_traits::Zero;
use rand::seq::index;
use rand::Rng;

use super::{Detection, Detector, DetectorConfig, InitialSample, LearningRateMode, SampleRecord};
use crate::channel::{ClusteredChannel, MimoInstance};
use crate::error::{Error, Result};
use crate::fabric::{Fabric, OpCounters, Phase, SymbolTable};
use crate::linalg::CMatrix;
use crate::modem::Constellation;
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};
use crate::scalar::{complex_normal, Real};

use super::schedule::momentum_schedule;

fn tau_from_diag<T: Real>(diag: &[T]) -> Result<T> {
    let norm = diag.iter().map(|&d| d * d).sum::<T>().sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::DegenerateChannel(format!("‖D‖_F = {norm}")));
    }
    Ok(T::one() / norm)
}

fn tau_from_gram<T: Real>(gram: &CMatrix<T>) -> Result<T> {
    let norm = gram.frobenius_norm();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::DegenerateChannel(format!("‖G‖_F = {norm}")));
    }
    Ok(T::one() / norm)
}

/// Learning rate computed directly from the partitioned channel.
pub fn learning_rate<T: Real>(channel: &ClusteredChannel<T>, mode: LearningRateMode) -> Result<T> {
    match mode {
        LearningRateMode::DiagApprox => {
            let mut d = vec![T::zero(); channel.users()];
            for view in channel.clusters() {
                for (a, b) in d.iter_mut().zip(&view.diag_gram) {
                    *a += *b;
                }
            }
            tau_from_diag(&d)
        }
        LearningRateMode::ExactGramFnorm => {
            let n = channel.users();
            let mut g = CMatrix::zeros(n, n);
            for view in channel.clusters() {
                g.add_assign(&view.h.gram());
            }
            tau_from_gram(&g)
        }
    }
}

/// Uniform size-`m` subset of `0..clusters` without replacement, ascending.
pub fn sample_batch<R: Rng + ?Sized>(rng: &mut R, clusters: usize, m: usize) -> Vec<usize> {
    let mut v = index::sample(rng, clusters, m).into_vec();
    v.sort_unstable();
    v
}

/// `(C/m) Σ_{c∈batch} ∇f_c(p)` gathered through the fabric.
pub fn mini_batch_gradient<T: Real>(
    fabric: &mut Fabric<T>,
    p: &[Complex<T>],
    batch: &[usize],
) -> Result<Vec<Complex<T>>> {
    let scale = T::lit(fabric.num_units() as f64) / T::lit(batch.len().max(1) as f64);
    let sum = fabric.batch_gradient(p, batch)?;
    Ok(sum.into_iter().map(|g| g.scale(scale)).collect())
}

/// Everything the chain needs from the processing architecture.
pub trait SamplerBackend<T: Real> {
    fn users(&self) -> usize;

    /// Preprocessing: returns the learning rate `τ`.
    fn preprocess(&mut self, mode: LearningRateMode) -> Result<T>;

    /// Gradient estimate at `p` as `(unscaled sum, scale)`; the estimate is
    /// `scale · sum`.
    fn gradient(&mut self, p: &[Complex<T>], batch_rng: &mut SimRng) -> Result<(Vec<Complex<T>>, T)>;

    /// `f(x)` for a lattice point given by symbol indices.
    fn objective(&mut self, symbols: &[usize]) -> Result<T>;

    fn charge_cu(&mut self, phase: Phase, mults: u64);
}

/// Decentralized backend: mini-batch gradients through a [`Fabric`].
#[derive(Debug)]
pub struct FabricBackend<T> {
    pub fabric: Fabric<T>,
    pub batch_size: usize,
}

impl<T: Real> SamplerBackend<T> for FabricBackend<T> {
    fn users(&self) -> usize {
        self.fabric.users()
    }

    fn preprocess(&mut self, mode: LearningRateMode) -> Result<T> {
        self.fabric.prepare_symbol_tables();
        let u = self.fabric.users() as u64;
        match mode {
            LearningRateMode::DiagApprox => {
                let d = self.fabric.gather_gram_diag()?;
                self.fabric.counters_mut().add_cu(Phase::Preprocessing, u + 1);
                tau_from_diag(&d)
            }
            LearningRateMode::ExactGramFnorm => {
                let g = self.fabric.gather_gram()?;
                self.fabric.counters_mut().add_cu(Phase::Preprocessing, 2 * u * u + 1);
                tau_from_gram(&g)
            }
        }
    }

    fn gradient(&mut self, p: &[Complex<T>], batch_rng: &mut SimRng) -> Result<(Vec<Complex<T>>, T)> {
        let c = self.fabric.num_units();
        let batch = sample_batch(batch_rng, c, self.batch_size);
        let sum = self.fabric.batch_gradient(p, &batch)?;
        Ok((sum, T::lit(c as f64) / T::lit(self.batch_size as f64)))
    }

    fn objective(&mut self, symbols: &[usize]) -> Result<T> {
        self.fabric.evaluate_candidate(symbols)
    }

    fn charge_cu(&mut self, phase: Phase, mults: u64) {
        self.fabric.counters_mut().add_cu(phase, mults);
    }
}

/// Centralized backend: full gradients from the complete channel.
#[derive(Debug)]
pub struct CentralBackend<'a, T> {
    h: &'a CMatrix<T>,
    y: &'a [Complex<T>],
    constellation: &'a Constellation<T>,
    table: SymbolTable<T>,
    pub counters: OpCounters,
}

impl<'a, T: Real> CentralBackend<'a, T> {
    pub fn new(h: &'a CMatrix<T>, y: &'a [Complex<T>], constellation: &'a Constellation<T>) -> Self {
        Self {
            h,
            y,
            constellation,
            table: SymbolTable::default(),
            counters: OpCounters::new(0),
        }
    }
}

impl<T: Real> SamplerBackend<T> for CentralBackend<'_, T> {
    fn users(&self) -> usize {
        self.h.cols()
    }

    fn preprocess(&mut self, mode: LearningRateMode) -> Result<T> {
        let (b, u) = (self.h.rows() as u64, self.h.cols() as u64);
        self.table = SymbolTable::build(self.h, self.constellation);
        self.counters.add_cu(
            Phase::Preprocessing,
            SymbolTable::<T>::build_cost(self.h.rows(), self.h.cols(), self.constellation.side()),
        );
        match mode {
            LearningRateMode::DiagApprox => {
                self.counters.add_cu(Phase::Preprocessing, 2 * b * u + u + 1);
                tau_from_diag(&self.h.column_norms_sqr())
            }
            LearningRateMode::ExactGramFnorm => {
                self.counters
                    .add_cu(Phase::Preprocessing, 4 * b * u * u + 2 * u * u + 1);
                tau_from_gram(&self.h.gram())
            }
        }
    }

    fn gradient(&mut self, p: &[Complex<T>], _batch_rng: &mut SimRng) -> Result<(Vec<Complex<T>>, T)> {
        if p.len() != self.h.cols() {
            return Err(Error::Dimension {
                expected: self.h.cols(),
                got: p.len(),
            });
        }
        let (b, u) = (self.h.rows() as u64, self.h.cols() as u64);
        self.counters.add_cu(Phase::Gradient, 8 * b * u);
        let hp = self.h.mul_vec(p);
        let r: Vec<Complex<T>> = self.y.iter().zip(&hp).map(|(a, b)| b - a).collect();
        Ok((self.h.mul_adjoint_vec(&r), T::one()))
    }

    fn objective(&mut self, symbols: &[usize]) -> Result<T> {
        if self.table.is_empty() {
            self.table = SymbolTable::build(self.h, self.constellation);
        }
        self.counters.add_cu(Phase::Sampling, 2 * self.h.rows() as u64);
        Ok(self.table.objective(self.y, symbols))
    }

    fn charge_cu(&mut self, phase: Phase, mults: u64) {
        self.counters.add_cu(phase, mults);
    }
}

/// Runs `schedule.len()` NAG iterations from `start` and returns the final
/// iterate. Momentum starts from rest.
pub fn nag_stage<T: Real, B: SamplerBackend<T>>(
    start: &[Complex<T>],
    schedule: &[T],
    tau: T,
    backend: &mut B,
    batch_rng: &mut SimRng,
) -> Result<Vec<Complex<T>>> {
    let u = start.len() as u64;
    let mut z = start.to_vec();
    let mut dz = vec![Complex::<T>::zero(); start.len()];
    for &rho in schedule {
        let p: Vec<Complex<T>> = z.iter().zip(&dz).map(|(a, d)| a + d.scale(rho)).collect();
        let (g, scale) = backend.gradient(&p, batch_rng)?;
        let step = tau * scale;
        backend.charge_cu(Phase::Gradient, 4 * u + 1);
        for ((zk, dzk), (pk, gk)) in z.iter_mut().zip(dz.iter_mut()).zip(p.iter().zip(&g)) {
            let next = pk - gk.scale(step);
            *dzk = next - *zk;
            *zk = next;
        }
    }
    Ok(z)
}

/// `Q(z + γw)` with `w ~ CN(0, I)`, as symbol indices.
pub fn propose_candidate<T: Real, R: Rng + ?Sized>(
    z: &[Complex<T>],
    step: T,
    constellation: &Constellation<T>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let perturbed: Vec<Complex<T>> = z.iter().map(|&v| v + complex_normal::<T, _>(rng).scale(step)).collect();
    constellation.qam_map_indices(&perturbed)
}

/// Acceptance probability `α = min{1, exp(2f_prev − 2f_cand)}` and the
/// accept decision `α ≥ ν`, `ν ~ U(0,1)`. One uniform is always consumed.
pub fn mh_accept<T: Real, R: Rng + ?Sized>(f_cand: T, f_prev: T, rng: &mut R) -> Result<(bool, T)> {
    if !f_cand.is_finite() || !f_prev.is_finite() {
        return Err(Error::NumericInput(format!(
            "objective values f_cand={f_cand}, f_prev={f_prev}"
        )));
    }
    let two = T::lit(2.0);
    let alpha = (two * f_prev - two * f_cand).exp().min(T::one());
    let nu = T::unit_uniform(rng);
    Ok((alpha >= nu, alpha))
}

fn initial_state<T: Real>(
    init: &InitialSample,
    users: usize,
    constellation: &Constellation<T>,
    rng: &mut SimRng,
) -> Result<Vec<usize>> {
    match init {
        InitialSample::Random => Ok((0..users).map(|_| constellation.random_index(rng)).collect()),
        InitialSample::Given(x) => {
            if x.len() != users {
                return Err(Error::Dimension {
                    expected: users,
                    got: x.len(),
                });
            }
            if let Some(&bad) = x.iter().find(|&&i| i >= constellation.order()) {
                return Err(Error::Mapping(format!("symbol index {bad} out of range")));
            }
            Ok(x.clone())
        }
    }
}

struct ChainParams<'a, T> {
    config: &'a DetectorConfig,
    constellation: &'a Constellation<T>,
    schedule: &'a [T],
    tau: T,
    step: T,
}

fn run_chain<T: Real, B: SamplerBackend<T>>(
    backend: &mut B,
    params: &ChainParams<'_, T>,
    base_seed: u64,
    sampler: usize,
    records: &mut Vec<SampleRecord<T>>,
) -> Result<()> {
    let users = backend.users();
    let u = users as u64;
    let idx = sampler as u64;
    let mut init_rng = stream_rng(base_seed, idx, Stream::InitialSample);
    let mut batch_rng = stream_rng(base_seed, idx, Stream::Batch);
    let mut walk_rng = stream_rng(base_seed, idx, Stream::Walk);
    let mut accept_rng = stream_rng(base_seed, idx, Stream::Accept);

    let k = params.constellation;
    let mut x = initial_state(&params.config.initial, users, k, &mut init_rng)?;
    let mut f_x = backend.objective(&x)?;
    records.push(SampleRecord {
        sampler,
        t: 0,
        sample: x.clone(),
        f: f_x,
        f_prev: f_x,
        f_cand: None,
        alpha: T::one(),
        accepted: true,
    });

    for t in 1..=params.config.samples {
        let start: Vec<Complex<T>> = x.iter().map(|&i| k.point(i)).collect();
        let z = nag_stage(&start, params.schedule, params.tau, backend, &mut batch_rng)?;
        let cand = propose_candidate(&z, params.step, k, &mut walk_rng)?;
        backend.charge_cu(Phase::Sampling, 4 * u);
        let f_cand = backend.objective(&cand)?;
        let (accepted, alpha) = mh_accept(f_cand, f_x, &mut accept_rng)?;
        backend.charge_cu(Phase::Sampling, 2);
        let f_prev = f_x;
        if accepted {
            x = cand;
            f_x = f_cand;
        }
        records.push(SampleRecord {
            sampler,
            t,
            sample: x.clone(),
            f: f_x,
            f_prev,
            f_cand: Some(f_cand),
            alpha,
            accepted,
        });
    }
    Ok(())
}

/// Runs preprocessing and all chains; returns `(x̂, f(x̂), trace)`.
fn run_detection<T: Real, B: SamplerBackend<T>>(
    backend: &mut B,
    config: &DetectorConfig,
    constellation: &Constellation<T>,
    trial: u64,
) -> Result<(Vec<usize>, T, Vec<SampleRecord<T>>)> {
    let tau = backend.preprocess(config.learning_rate)?;
    let schedule = momentum_schedule::<T>(config.nag_iterations);
    let params = ChainParams {
        config,
        constellation,
        schedule: &schedule,
        tau,
        step: T::lit(config.step_size),
    };
    let base = derive_seed(config.seed, trial, Stream::Detector);
    let mut records = Vec::with_capacity(config.samplers * (config.samples + 1));
    for p in 0..config.samplers {
        run_chain(backend, &params, base, p, &mut records)?;
    }
    let mut best = &records[0];
    for r in &records[1..] {
        if r.f < best.f {
            best = r;
        }
    }
    Ok((best.sample.clone(), best.f, records))
}

/// Decentralized mini-batch NAG-MCMC detector.
#[derive(Debug, Clone)]
pub struct MiniNagMcmc<T> {
    pub config: DetectorConfig,
    pub clusters: usize,
    constellation: Constellation<T>,
    name: String,
}

impl<T: Real> MiniNagMcmc<T> {
    pub fn new(config: DetectorConfig, clusters: usize, constellation: Constellation<T>) -> Result<Self> {
        config.validate(clusters)?;
        let name = format!("mini-nag-mcmc(m={})", config.batch_size);
        Ok(Self {
            config,
            clusters,
            constellation,
            name,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Runs detection on an already-built fabric.
    pub fn detect_on(&self, fabric: Fabric<T>, trial: u64) -> Result<Detection<T>> {
        let mut backend = FabricBackend {
            fabric,
            batch_size: self.config.batch_size,
        };
        let (symbols, objective, trace) = run_detection(&mut backend, &self.config, &self.constellation, trial)?;
        let (ledger, counters) = backend.fabric.into_parts();
        Ok(Detection {
            symbols,
            objective,
            trace,
            ledger: Some(ledger),
            counters: Some(counters),
        })
    }

    pub fn build_fabric(&self, instance: &MimoInstance<T>) -> Result<Fabric<T>> {
        let cc = ClusteredChannel::partition(&instance.h, &instance.y, self.clusters)?;
        Fabric::new(cc, self.config.topology, &self.constellation, self.config.omega)
    }
}

impl<T: Real> Detector<T> for MiniNagMcmc<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn constellation(&self) -> &Constellation<T> {
        &self.constellation
    }

    fn detect(&self, instance: &MimoInstance<T>, trial: u64) -> Result<Detection<T>> {
        let fabric = self.build_fabric(instance)?;
        self.detect_on(fabric, trial)
    }
}

/// Centralized NAG-MCMC: full gradients, no interconnect.
#[derive(Debug, Clone)]
pub struct NagMcmc<T> {
    pub config: DetectorConfig,
    constellation: Constellation<T>,
    name: String,
}

impl<T: Real> NagMcmc<T> {
    pub fn new(config: DetectorConfig, constellation: Constellation<T>) -> Result<Self> {
        config.validate(config.batch_size.max(1))?;
        Ok(Self {
            config,
            constellation,
            name: "nag-mcmc".to_string(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl<T: Real> Detector<T> for NagMcmc<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn constellation(&self) -> &Constellation<T> {
        &self.constellation
    }

    fn detect(&self, instance: &MimoInstance<T>, trial: u64) -> Result<Detection<T>> {
        let mut backend = CentralBackend::new(&instance.h, &instance.y, &self.constellation);
        let (symbols, objective, trace) = run_detection(&mut backend, &self.config, &self.constellation, trial)?;
        Ok(Detection {
            symbols,
            objective,
            trace,
            ledger: None,
            counters: Some(backend.counters),
        })
    }
}
