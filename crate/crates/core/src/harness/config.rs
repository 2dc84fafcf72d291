//! Experiment specification: a TOML file with `[system]`, `[run]`,
//! `[[detector]]`, `[bandwidth]` and `[complexity]` sections, plus the
//! built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detectors::{
    BruteForceMl, Detector, DetectorConfig, LearningRateMode, Lmmse, MiniNagMcmc, NagMcmc, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::fabric::TopologyKind;
use crate::modem::Constellation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// Receive antennas `B`.
    pub antennas: usize,
    /// Users `U`.
    pub users: usize,
    /// Antenna clusters `C`.
    pub clusters: usize,
    /// QAM order `M`.
    pub qam_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub snr_db: Vec<f64>,
    pub max_bits: u64,
    /// A point stops once its bit-error count exceeds this.
    pub max_errors: u64,
    pub seed: u64,
    pub workers: usize,
    /// Trials per point for convergence runs.
    pub trials: usize,
    pub samples_grid: Vec<usize>,
    pub convergence_snr_db: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 5.0, 10.0],
            max_bits: 1_000_000,
            max_errors: 1000,
            seed: 1,
            workers: 1,
            trials: 1000,
            samples_grid: vec![2, 4, 6, 8, 10, 12],
            convergence_snr_db: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    MiniNagMcmc,
    NagMcmc,
    Lmmse,
    Ml,
}

/// One `[[detector]]` section; omitted sampler fields take the
/// [`DetectorConfig`] defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nag_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<LearningRateMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samplers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<u32>,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            name: None,
            samples: None,
            nag_iterations: None,
            batch_size: None,
            step_size: None,
            learning_rate: None,
            samplers: None,
            topology: None,
            omega: None,
        }
    }

    pub fn mini(batch_size: usize, samples: usize) -> Self {
        Self {
            batch_size: Some(batch_size),
            samples: Some(samples),
            ..Self::new(DetectorKind::MiniNagMcmc)
        }
    }

    pub fn is_sampler(&self) -> bool {
        matches!(self.kind, DetectorKind::MiniNagMcmc | DetectorKind::NagMcmc)
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match self.kind {
            DetectorKind::MiniNagMcmc => format!("mini-nag-mcmc-m{}", self.batch_size.unwrap_or(1)),
            DetectorKind::NagMcmc => "nag-mcmc".into(),
            DetectorKind::Lmmse => "lmmse".into(),
            DetectorKind::Ml => "ml".into(),
        }
    }

    pub fn detector_config(&self, seed: u64) -> DetectorConfig {
        let d = DetectorConfig::default();
        DetectorConfig {
            samples: self.samples.unwrap_or(d.samples),
            nag_iterations: self.nag_iterations.unwrap_or(d.nag_iterations),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            step_size: self.step_size.unwrap_or(d.step_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            samplers: self.samplers.unwrap_or(d.samplers),
            seed,
            topology: self.topology.unwrap_or(d.topology),
            omega: self.omega.unwrap_or(d.omega),
            initial: d.initial,
        }
    }

    pub fn build(&self, system: &SystemSpec, seed: u64) -> Result<Box<dyn Detector<f64>>> {
        let k = Constellation::new(system.qam_order)?;
        let name = self.label();
        Ok(match self.kind {
            DetectorKind::MiniNagMcmc => {
                Box::new(MiniNagMcmc::new(self.detector_config(seed), system.clusters, k)?.with_name(name))
            }
            DetectorKind::NagMcmc => {
                let cfg = DetectorConfig {
                    batch_size: 1,
                    ..self.detector_config(seed)
                };
                Box::new(NagMcmc::new(cfg, k)?.with_name(name))
            }
            DetectorKind::Lmmse => Box::new(Lmmse::new(k)),
            DetectorKind::Ml => Box::new(BruteForceMl::new(k)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandwidthSpec {
    pub antennas: Vec<usize>,
    pub batch_size: usize,
    pub samples: usize,
    pub nag_iterations: usize,
    pub omega: u32,
}

impl Default for BandwidthSpec {
    fn default() -> Self {
        Self {
            antennas: vec![64, 128, 256, 512],
            batch_size: 2,
            samples: 4,
            nag_iterations: 4,
            omega: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexitySpec {
    /// Cluster sizes `B_c` swept with `C` fixed.
    pub cluster_sizes: Vec<usize>,
    pub samples: Vec<usize>,
    pub nag_iterations: Vec<usize>,
    /// Cluster counts swept with `B_c` fixed (so `B` grows).
    pub cluster_counts: Vec<usize>,
    pub batch_size: usize,
}

impl Default for ComplexitySpec {
    fn default() -> Self {
        Self {
            cluster_sizes: vec![2, 4, 8, 16, 32],
            samples: vec![2, 4, 8, 16, 32],
            nag_iterations: vec![1, 2, 4, 8, 16],
            cluster_counts: vec![4, 8, 16, 32],
            batch_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub system: SystemSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default, rename = "detector")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub bandwidth: BandwidthSpec,
    #[serde(default)]
    pub complexity: ComplexitySpec,
}

pub const PRESETS: [&str; 3] = ["fig3-desk", "fig4-desk", "oracle"];

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            // Convergence versus S for several batch sizes.
            "fig3-desk" => Self {
                system: SystemSpec {
                    antennas: 32,
                    users: 8,
                    clusters: 8,
                    qam_order: 16,
                },
                run: RunSpec {
                    snr_db: vec![5.0],
                    trials: 2000,
                    ..RunSpec::default()
                },
                detectors: vec![
                    DetectorSpec::mini(1, 12),
                    DetectorSpec::mini(2, 12),
                    DetectorSpec::mini(4, 12),
                    DetectorSpec::mini(8, 12),
                ],
                bandwidth: BandwidthSpec::default(),
                complexity: ComplexitySpec::default(),
            },
            // BER versus SNR.
            "fig4-desk" => Self {
                system: SystemSpec {
                    antennas: 32,
                    users: 8,
                    clusters: 8,
                    qam_order: 16,
                },
                run: RunSpec {
                    snr_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
                    ..RunSpec::default()
                },
                detectors: vec![
                    DetectorSpec::mini(2, 16),
                    DetectorSpec::mini(4, 16),
                    DetectorSpec {
                        samples: Some(16),
                        ..DetectorSpec::new(DetectorKind::NagMcmc)
                    },
                    DetectorSpec::new(DetectorKind::Lmmse),
                ],
                bandwidth: BandwidthSpec::default(),
                complexity: ComplexitySpec::default(),
            },
            // Small enough for exhaustive ML.
            "oracle" => Self {
                system: SystemSpec {
                    antennas: 16,
                    users: 4,
                    clusters: 4,
                    qam_order: 16,
                },
                run: RunSpec {
                    snr_db: vec![8.0, 10.0, 12.0, 14.0, 16.0, 18.0],
                    max_bits: 400_000,
                    max_errors: 1000,
                    ..RunSpec::default()
                },
                detectors: vec![
                    DetectorSpec::mini(2, 16),
                    DetectorSpec::new(DetectorKind::Lmmse),
                    DetectorSpec::new(DetectorKind::Ml),
                ],
                bandwidth: BandwidthSpec::default(),
                complexity: ComplexitySpec::default(),
            },
            other => {
                return Err(Error::config(format!(
                    "unknown preset '{other}' (available: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        let k = Constellation::<f64>::new(s.qam_order)?;
        if s.users == 0 || s.antennas < s.users {
            return Err(Error::config(format!(
                "need 1 <= U <= B, got B={}, U={}",
                s.antennas, s.users
            )));
        }
        if s.clusters == 0 || s.antennas % s.clusters != 0 {
            return Err(Error::config(format!(
                "cluster count {} must divide B={}",
                s.clusters, s.antennas
            )));
        }
        if self.run.snr_db.is_empty() {
            return Err(Error::config("SNR grid must not be empty"));
        }
        if let Some(bad) = self.run.snr_db.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("SNR value {bad} is not finite")));
        }
        if self.run.max_bits == 0 {
            return Err(Error::config("max_bits must be positive"));
        }
        if self.run.workers == 0 {
            return Err(Error::config("need at least one worker"));
        }
        if self.run.samples_grid.is_empty() {
            return Err(Error::config("samples grid must not be empty"));
        }
        let mut labels = std::collections::HashSet::new();
        for d in &self.detectors {
            if !labels.insert(d.label()) {
                return Err(Error::config(format!("duplicate detector name '{}'", d.label())));
            }
            match d.kind {
                DetectorKind::MiniNagMcmc => d.detector_config(0).validate(s.clusters)?,
                DetectorKind::NagMcmc => DetectorConfig {
                    batch_size: 1,
                    ..d.detector_config(0)
                }
                .validate(1)?,
                DetectorKind::Ml => {
                    let states = (k.order() as u128).checked_pow(s.users as u32).unwrap_or(u128::MAX);
                    if states > DEFAULT_ENUMERATION_CAP {
                        return Err(Error::Capacity {
                            states,
                            cap: DEFAULT_ENUMERATION_CAP,
                        });
                    }
                }
                DetectorKind::Lmmse => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let spec = ExperimentSpec::preset(name).unwrap();
            let text = spec.to_toml().unwrap();
            assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), spec);
        }
        assert!(ExperimentSpec::preset("fig9").is_err());
    }

    #[test]
    fn parses_minimal_file() {
        let spec = ExperimentSpec::from_toml(
            r#"
            [system]
            antennas = 8
            users = 2
            clusters = 2
            qam_order = 4

            [run]
            snr_db = [5.0]

            [[detector]]
            kind = "mini-nag-mcmc"
            batch_size = 1
            topology = "daisy-chain"
            learning-rate = "exact-gram-fnorm"
            "#,
        );
        // Field names are snake_case; the kebab-case key is rejected.
        assert!(matches!(spec, Err(Error::Config(_))));
        let spec = ExperimentSpec::from_toml(
            r#"
            [system]
            antennas = 8
            users = 2
            clusters = 2
            qam_order = 4

            [[detector]]
            kind = "mini-nag-mcmc"
            batch_size = 1
            topology = "daisy-chain"
            learning_rate = "exact-gram-fnorm"
            "#,
        )
        .unwrap();
        let cfg = spec.detectors[0].detector_config(7);
        assert_eq!(cfg.topology, TopologyKind::DaisyChain);
        assert_eq!(cfg.learning_rate, LearningRateMode::ExactGramFnorm);
        assert_eq!(cfg.samples, 16);
    }

    #[test]
    fn rejects_bad_systems() {
        let mut spec = ExperimentSpec::preset("oracle").unwrap();
        spec.system.clusters = 3;
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::preset("oracle").unwrap();
        spec.run.snr_db.clear();
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::preset("oracle").unwrap();
        spec.system.qam_order = 64;
        assert!(matches!(spec.validate(), Err(Error::Capacity { .. })));
        let mut spec = ExperimentSpec::preset("fig3-desk").unwrap();
        spec.detectors[0].batch_size = Some(3);
        assert!(spec.validate().is_err());
    }
}
