//! Bandwidth, complexity and diagnostics reports.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentSpec, SystemSpec};
use super::sim::trial_instance;
use super::stats::{linear_fit, LinearFit};
use crate::channel::ClusteredChannel;
use crate::detectors::{Detector, DetectorConfig, MiniNagMcmc};
use crate::diagnostics::{run_suite, AcceptanceRule, DiagnosticReport, Suite};
use crate::error::{Error, Result};
use crate::fabric::{predicted_bandwidth, BandwidthMode, BandwidthParams, Fabric, OpCounters, TopologyKind};
use crate::modem::Constellation;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthRow {
    pub mode: BandwidthMode,
    pub params: BandwidthParams,
    pub bits: u64,
    pub measured_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthReport {
    pub rows: Vec<BandwidthRow>,
}

impl BandwidthReport {
    fn bits(&self, b: usize, mode: BandwidthMode) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.params.b == b as u64 && r.mode == mode)
            .map(|r| r.bits)
    }

    /// `(B, star/centralized, chain/centralized)` per grid point.
    pub fn ratios(&self) -> Vec<(u64, f64, f64)> {
        let mut bs: Vec<u64> = self.rows.iter().map(|r| r.params.b).collect();
        bs.dedup();
        bs.into_iter()
            .filter_map(|b| {
                let c = self.bits(b as usize, BandwidthMode::Centralized)? as f64;
                let s = self.bits(b as usize, BandwidthMode::MiniStar)? as f64;
                let d = self.bits(b as usize, BandwidthMode::MiniChain)? as f64;
                Some((b, s / c, d / c))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "mode",
            "B",
            "U",
            "C",
            "m",
            "S",
            "Ng",
            "omega",
            "M",
            "bits",
            "measured_bits",
        ])?;
        for r in &self.rows {
            let p = &r.params;
            wr.write_record([
                r.mode.to_string(),
                p.b.to_string(),
                p.u.to_string(),
                p.c.to_string(),
                p.m.to_string(),
                p.s.to_string(),
                p.ng.to_string(),
                p.omega.to_string(),
                p.qam_order.to_string(),
                r.bits.to_string(),
                r.measured_bits.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_ratio_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["B", "star_ratio", "chain_ratio"])?;
        for (b, s, c) in self.ratios() {
            wr.write_record([b.to_string(), format!("{s:.6}"), format!("{c:.6}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("bandwidth.csv"))?)?;
        self.write_ratio_csv(std::fs::File::create(dir.join("bandwidth_ratio.csv"))?)?;
        Ok(())
    }
}

/// Ledger total for one full detection on the given topology.
pub fn measured_mini_bits(system: &SystemSpec, cfg: DetectorConfig, topology: TopologyKind, seed: u64) -> Result<u64> {
    let k = Constellation::<f64>::new(system.qam_order)?;
    let inst = trial_instance(system, &k, 10.0, seed, 0)?;
    let det = MiniNagMcmc::new(DetectorConfig { topology, ..cfg }, system.clusters, k)?;
    let out = det.detect(&inst, 0)?;
    Ok(out.ledger.expect("fabric detection has a ledger").cu_bits())
}

/// Ledger total for a centralized detector's raw upload.
pub fn measured_centralized_bits(system: &SystemSpec, omega: u32, seed: u64) -> Result<u64> {
    let k = Constellation::<f64>::new(system.qam_order)?;
    let inst = trial_instance(system, &k, 10.0, seed, 0)?;
    let cc = ClusteredChannel::partition(&inst.h, &inst.y, system.clusters)?;
    let fabric = Fabric::new(cc, TopologyKind::Star, &k, omega)?;
    fabric.upload_raw();
    Ok(fabric.ledger().cu_bits())
}

pub fn run_bandwidth_report(spec: &ExperimentSpec) -> Result<BandwidthReport> {
    let bw = &spec.bandwidth;
    if bw.antennas.is_empty() {
        return Err(Error::config("bandwidth grid must not be empty"));
    }
    let mut rows = Vec::new();
    for &b in &bw.antennas {
        let system = SystemSpec {
            antennas: b,
            ..spec.system.clone()
        };
        let cfg = DetectorConfig {
            samples: bw.samples,
            nag_iterations: bw.nag_iterations,
            batch_size: bw.batch_size,
            omega: bw.omega,
            seed: spec.run.seed,
            ..DetectorConfig::default()
        };
        cfg.validate(system.clusters)?;
        let params = BandwidthParams {
            b: b as u64,
            u: system.users as u64,
            c: system.clusters as u64,
            m: bw.batch_size as u64,
            s: bw.samples as u64,
            ng: bw.nag_iterations as u64,
            omega: bw.omega as u64,
            qam_order: system.qam_order as u64,
        };
        rows.push(BandwidthRow {
            mode: BandwidthMode::Centralized,
            params,
            bits: predicted_bandwidth(BandwidthMode::Centralized, &params),
            measured_bits: measured_centralized_bits(&system, bw.omega, spec.run.seed)?,
        });
        for (mode, topo) in [
            (BandwidthMode::MiniStar, TopologyKind::Star),
            (BandwidthMode::MiniChain, TopologyKind::DaisyChain),
        ] {
            rows.push(BandwidthRow {
                mode,
                params,
                bits: predicted_bandwidth(mode, &params),
                measured_bits: measured_mini_bits(&system, cfg.clone(), topo, spec.run.seed)?,
            });
        }
    }
    Ok(BandwidthReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub sweep: String,
    pub x: f64,
    pub antennas: usize,
    pub clusters: usize,
    pub cluster_size: usize,
    pub batch_size: usize,
    pub samples: usize,
    pub nag_iterations: usize,
    /// Mean real multiplications per DU.
    pub du_mean: f64,
    pub du_max: u64,
    pub cu: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityFit {
    pub sweep: String,
    pub target: String,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
    pub fits: Vec<ComplexityFit>,
}

impl ComplexityReport {
    pub fn fit(&self, sweep: &str, target: &str) -> Option<&ComplexityFit> {
        self.fits.iter().find(|f| f.sweep == sweep && f.target == target)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_fit_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for f in &self.fits {
            wr.serialize(f)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("complexity.csv"))?)?;
        self.write_fit_csv(std::fs::File::create(dir.join("complexity_fit.csv"))?)?;
        Ok(())
    }
}

/// Operation counters for one detection.
pub fn count_operations(system: &SystemSpec, cfg: DetectorConfig, seed: u64) -> Result<OpCounters> {
    let k = Constellation::<f64>::new(system.qam_order)?;
    let inst = trial_instance(system, &k, 10.0, seed, 0)?;
    let det = MiniNagMcmc::new(cfg, system.clusters, k)?;
    Ok(det.detect(&inst, 0)?.counters.expect("fabric detection has counters"))
}

pub fn run_complexity_report(spec: &ExperimentSpec) -> Result<ComplexityReport> {
    let cx = &spec.complexity;
    let base_c = spec.system.clusters;
    let base_bc = spec.system.antennas / base_c;
    let base = DetectorConfig {
        batch_size: cx.batch_size,
        seed: spec.run.seed,
        ..DetectorConfig::default()
    };
    let mut rows = Vec::new();
    let mut push = |sweep: &str, x: f64, clusters: usize, bc: usize, cfg: DetectorConfig| -> Result<()> {
        let system = SystemSpec {
            antennas: clusters * bc,
            clusters,
            ..spec.system.clone()
        };
        let counters = count_operations(&system, cfg.clone(), spec.run.seed)?;
        rows.push(ComplexityRow {
            sweep: sweep.to_string(),
            x,
            antennas: system.antennas,
            clusters,
            cluster_size: bc,
            batch_size: cfg.batch_size,
            samples: cfg.samples,
            nag_iterations: cfg.nag_iterations,
            du_mean: counters.du_mean_total(),
            du_max: counters.du_max_total(),
            cu: counters.cu_total(),
        });
        Ok(())
    };
    for &bc in &cx.cluster_sizes {
        push("cluster_size", bc as f64, base_c, bc, base.clone())?;
    }
    for &s in &cx.samples {
        push(
            "samples",
            s as f64,
            base_c,
            base_bc,
            DetectorConfig {
                samples: s,
                ..base.clone()
            },
        )?;
    }
    for &n in &cx.nag_iterations {
        push(
            "nag_iterations",
            n as f64,
            base_c,
            base_bc,
            DetectorConfig {
                nag_iterations: n,
                ..base.clone()
            },
        )?;
    }
    // More clusters of the same size; the batch keeps the same fraction of C.
    for &c in &cx.cluster_counts {
        let m = c * cx.batch_size / base_c;
        if m == 0 || c * cx.batch_size % base_c != 0 {
            return Err(Error::config(format!(
                "cluster count {c} cannot keep the batch fraction {}/{base_c}",
                cx.batch_size
            )));
        }
        push(
            "antennas_fixed_cluster",
            (c * base_bc) as f64,
            c,
            base_bc,
            DetectorConfig {
                batch_size: m,
                ..base.clone()
            },
        )?;
    }
    let mut fits = Vec::new();
    for sweep in ["cluster_size", "samples", "nag_iterations", "antennas_fixed_cluster"] {
        let sel: Vec<&ComplexityRow> = rows.iter().filter(|r| r.sweep == sweep).collect();
        if sel.len() < 2 {
            continue;
        }
        let x: Vec<f64> = sel.iter().map(|r| r.x).collect();
        let cu_x: Vec<f64> = sel.iter().map(|r| r.antennas as f64).collect();
        let du: Vec<f64> = sel.iter().map(|r| r.du_mean).collect();
        // CU counts are fitted against B where B changes.
        let cu: Vec<f64> = sel.iter().map(|r| r.cu as f64).collect();
        let mk = |target: &str, f: LinearFit| ComplexityFit {
            sweep: sweep.to_string(),
            target: target.to_string(),
            slope: f.slope,
            slope_se: f.slope_se,
            intercept: f.intercept,
            r2: f.r2,
        };
        fits.push(mk("du_mean", linear_fit(&x, &du)));
        if matches!(sweep, "cluster_size" | "antennas_fixed_cluster") {
            fits.push(mk("cu_vs_antennas", linear_fit(&cu_x, &cu)));
        }
    }
    Ok(ComplexityReport { rows, fits })
}

/// Runs the diagnostic suite and optionally writes `diagnostics.json`.
pub fn run_diagnostics(suites: &[Suite], rule: AcceptanceRule, out: Option<&Path>) -> Result<DiagnosticReport> {
    let report = run_suite(suites, rule)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join("diagnostics.json"))?;
        serde_json::to_writer_pretty(f, &report)?;
    }
    Ok(report)
}
