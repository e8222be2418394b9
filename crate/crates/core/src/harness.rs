//! Scenario configuration, orchestration and artifact emission.
//!
//! A scenario is one JSON document. Running it writes CSV/JSON artifacts plus
//! `manifest.json`, which records the resolved configuration, the tool version
//! and the SHA-256 of every other file. Identical configurations produce
//! byte-identical output directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{self, GridProfile, GridRunParams, PeriodicKernel, StudyConfig};
use crate::kernels::{self, KernelSpec};
use crate::measures::{self, AtomicMeasure};
use crate::particles::{self, Formulation, InitialCloud, SimulationParams};
use crate::stability::{self, StabilityConfig};

pub const TOOL_NAME: &str = "euler-align";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Particles,
    Grid,
    VanishingViscosity,
    Stability,
    Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesSection {
    pub cloud: InitialCloud,
    pub simulation: SimulationParams,
    /// Also integrate the offset formulation and report the discrepancy.
    #[serde(default)]
    pub compare_formulations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub profile: GridProfile,
    pub length: f64,
    pub cells: usize,
    pub inv_n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_floor: Option<f64>,
    pub run: GridRunParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub mu: AtomicMeasure,
    pub nu: AtomicMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<ParticlesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vanishing_viscosity: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSection>,
    /// Where artifacts go when the caller does not say; not part of the
    /// resolved configuration recorded in the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Checks that the section for `mode` is present and that kernel and
    /// step sizes are admissible.
    pub fn validate(&self) -> Result<()> {
        let missing = |s: &str| Error::Config(format!("mode {:?} needs a \"{s}\" section", self.mode));
        let kernel = match &self.kernel {
            Some(spec) => Some(spec.build().map_err(|e| Error::Config(format!("kernel: {e}")))?),
            None => None,
        };
        let need_kernel = || kernel.clone().ok_or_else(|| missing("kernel"));
        match self.mode {
            Mode::Particles => {
                let p = self.particles.as_ref().ok_or_else(|| missing("particles"))?;
                let k = need_kernel()?;
                if p.simulation.dt > k.max_time_step() * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "dt {} exceeds the stability limit {} for this kernel",
                        p.simulation.dt,
                        k.max_time_step()
                    )));
                }
            }
            Mode::Grid => {
                self.grid.as_ref().ok_or_else(|| missing("grid"))?;
                if need_kernel()?.dim() != 1 {
                    return Err(Error::Config("grid mode needs a one-dimensional kernel".into()));
                }
            }
            Mode::VanishingViscosity => {
                let s = self
                    .vanishing_viscosity
                    .as_ref()
                    .ok_or_else(|| missing("vanishing_viscosity"))?;
                if need_kernel()?.dim() != 1 {
                    return Err(Error::Config("grid mode needs a one-dimensional kernel".into()));
                }
                if s.n_list.is_empty() {
                    return Err(Error::Config("n_list must not be empty".into()));
                }
            }
            Mode::Stability => {
                let s = self.stability.as_ref().ok_or_else(|| missing("stability"))?;
                let k = need_kernel()?;
                if s.dt > k.max_time_step() * (1.0 + 1e-12) {
                    return Err(Error::Config(format!("dt {} exceeds the stability limit", s.dt)));
                }
            }
            Mode::Metrics => {
                self.metrics.as_ref().ok_or_else(|| missing("metrics"))?;
            }
        }
        Ok(())
    }

    /// The configuration recorded in manifests: everything except
    /// `output_dir`, with defaults filled in.
    pub fn resolved(&self) -> Value {
        let mut c = self.clone();
        c.output_dir = None;
        serde_json::to_value(&c).expect("config serializes")
    }
}

/// JSON text with keys sorted at every level and a trailing newline.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's default map is ordered by key.
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let target = dir.join(name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))
}

/// Artifacts produced by one scenario, in emission order.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json(&mut self, name: &str, value: &Value) {
        self.add(name, canonical_json(value).into_bytes());
    }

    fn add_csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub manifest: Value,
}

/// Caps rayon's global pool at `SIM_THREADS` when set. Later calls are no-ops.
pub fn configure_threads() {
    if let Some(n) = std::env::var("SIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Executes the scenario in memory.
pub fn execute(cfg: &ScenarioConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let ctx = |e: Error| e.context(format!("scenario {}", cfg.name));
    let mut out = Artifacts::default();
    match cfg.mode {
        Mode::Particles => run_particles(cfg, &mut out),
        Mode::Grid => run_grid_mode(cfg, &mut out),
        Mode::VanishingViscosity => run_study(cfg, &mut out),
        Mode::Stability => run_stability(cfg, &mut out),
        Mode::Metrics => run_metrics(cfg, &mut out),
    }
    .map_err(ctx)?;
    Ok(out)
}

/// Builds the manifest for a set of artifacts.
pub fn manifest(cfg: &ScenarioConfig, artifacts: &Artifacts) -> Value {
    let files: serde_json::Map<String, Value> = artifacts
        .files
        .iter()
        .map(|(n, b)| (n.clone(), Value::String(sha256_hex(b))))
        .collect();
    let resolved = cfg.resolved();
    json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config": resolved,
        "config_sha256": sha256_hex(canonical_json(&resolved).as_bytes()),
        "files": files,
    })
}

/// Runs the scenario and writes every artifact plus `manifest.json` into
/// `out_dir` (created if needed).
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunSummary> {
    let artifacts = execute(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, bytes) in &artifacts.files {
        write_atomic(out_dir, name, bytes)?;
    }
    let manifest = manifest(cfg, &artifacts);
    write_atomic(out_dir, "manifest.json", canonical_json(&manifest).as_bytes())?;
    Ok(RunSummary {
        output_dir: out_dir.to_path_buf(),
        manifest,
    })
}

fn kernel_of(cfg: &ScenarioConfig) -> Result<kernels::Kernel> {
    cfg.kernel
        .as_ref()
        .ok_or_else(|| Error::Config("missing kernel".into()))?
        .build()
}

fn run_particles(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<()> {
    let sec = cfg.particles.as_ref().expect("validated");
    let k = kernel_of(cfg)?;
    let initial = sec.cloud.build(k.dim(), cfg.seed)?;
    let traj = particles::simulate(&initial, &k, &sec.simulation)?;
    out.add_csv("trajectory.csv", |b| traj.write_csv(b))?;
    out.add_csv("diagnostics.csv", |b| traj.write_diagnostics_csv(b))?;

    let d = &traj.diagnostics;
    let e0 = d[0].energy;
    let growth = k.hess_sup_norm * 4.0;
    let energy_bound_ok = d
        .iter()
        .all(|r| r.energy <= (growth * (r.time - d[0].time)).exp() * e0 * (1.0 + 1e-6));
    let psd_ok = d.iter().all(|r| r.energy + r.dissipation_integral <= e0 * (1.0 + 1e-6));
    let momentum_drift = d
        .iter()
        .map(|r| {
            r.momentum
                .iter()
                .zip(&d[0].momentum)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max);
    let residual = if d.len() >= 3 {
        particles::energy_identity_residual(&traj, &k)?
            .iter()
            .fold(0.0f64, |m, (_, r)| m.max(*r))
    } else {
        f64::NAN
    };
    let mut summary = json!({
        "kernel": k.name(),
        "flags": {"even": k.flags.even, "psd": k.flags.psd},
        "atoms": initial.len(),
        "records": d.len(),
        "initial_energy": e0,
        "final_energy": d[d.len() - 1].energy,
        "energy_bound_holds": energy_bound_ok,
        "psd_energy_inequality_holds": if k.flags.psd { Value::Bool(psd_ok) } else { Value::Null },
        "max_energy_identity_residual": finite_or_null(residual),
        "max_momentum_drift": momentum_drift,
        "max_w_drift": d.iter().fold(0.0f64, |m, r| m.max(r.w_drift)),
    });
    if sec.compare_formulations {
        let mut alt = sec.simulation;
        alt.formulation = match alt.formulation {
            Formulation::VelocityU => Formulation::OffsetW,
            Formulation::OffsetW => Formulation::VelocityU,
        };
        let other = particles::simulate(&initial, &k, &alt)?;
        let gap = traj
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .flat_map(|(a, b)| a.positions.iter().zip(&b.positions).map(|(p, q)| (p - q).abs()))
            .fold(0.0f64, f64::max);
        summary["max_formulation_position_gap"] = json!(gap);
    }
    out.add_json("summary.json", &summary);
    Ok(())
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn run_grid_mode(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<()> {
    let sec = cfg.grid.as_ref().expect("validated");
    let k = kernel_of(cfg)?;
    let pk = PeriodicKernel::new(&k, sec.length, sec.cells)?;
    let g0 = grid::init_grid(&sec.profile, sec.length, sec.cells, sec.inv_n, sec.rho_floor)?;
    let run = grid::run_grid(&g0, &pk, &sec.run)?;
    for (i, snap) in run.snapshots.iter().enumerate() {
        out.add_csv(&format!("snapshot_{i:03}.csv"), |b| grid::write_snapshot_csv(snap, b))?;
    }
    out.add_csv("diagnostics.csv", |b| grid::write_diagnostics_csv(&run.diagnostics, b))?;
    let d = &run.diagnostics;
    let first = &d[0];
    let last = &d[d.len() - 1];
    let summary = json!({
        "kernel": k.name(),
        "cells": sec.cells,
        "length": sec.length,
        "inv_n": sec.inv_n,
        "steps": run.steps,
        "snapshot_times": run.snapshots.iter().map(|s| s.time).collect::<Vec<_>>(),
        "mass_relative_drift": (last.mass - first.mass).abs() / first.mass,
        "momentum_drift": (last.momentum - first.momentum).abs(),
        "initial_energy": first.energy,
        "final_energy": last.energy,
        "max_bd_ratio": ratio_max(d.iter().map(|r| r.bd_functional), first.bd_functional),
        "max_mv_ratio": ratio_max(d.iter().map(|r| r.mv_functional), first.mv_functional),
    });
    out.add_json("summary.json", &summary);
    Ok(())
}

fn ratio_max(values: impl Iterator<Item = f64>, base: f64) -> Value {
    let m = values.fold(0.0f64, f64::max);
    if base > 0.0 {
        json!(m / base)
    } else {
        Value::Null
    }
}

fn run_study(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<()> {
    let sec = cfg.vanishing_viscosity.as_ref().expect("validated");
    let k = kernel_of(cfg)?;
    let table = grid::vanishing_viscosity_study(sec, &k)?;
    out.add_csv("convergence.csv", |b| grid::write_study_csv(&table, b))?;
    let pk = PeriodicKernel::new(&k, sec.length, sec.cells)?;
    let g0 = grid::init_grid(&sec.profile, sec.length, sec.cells, 0.0, sec.rho_floor)?;
    let resolved = cfg.resolved();
    let summary = json!({
        "kernel": k.name(),
        "cells": sec.cells,
        "length": sec.length,
        "n_list": sec.n_list,
        "t_probe": sec.t_probe,
        "initial_max_dt_inviscid": g0.max_dt(&pk),
        "reference": table.reference,
        "reference_energy": table.reference_energy,
        "rows": table.rows,
        "config_sha256": sha256_hex(canonical_json(&resolved).as_bytes()),
    });
    out.add_json("summary.json", &summary);
    Ok(())
}

fn run_stability(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<()> {
    let sec = cfg.stability.as_ref().expect("validated");
    let k = kernel_of(cfg)?;
    let results = stability::stability_sweep(sec, &k)?;
    out.add_csv("stability.csv", |b| {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(b);
        w.write_record([
            "delta",
            "t",
            "velocity_error",
            "w2_sq",
            "trace_mu",
            "gronwall_rhs",
            "margin",
            "fk_margin",
            "flat_metric",
        ])?;
        for r in &results {
            for (i, row) in r.rows.iter().enumerate() {
                w.write_record([
                    measures::format_float(r.delta),
                    measures::format_float(row.time),
                    measures::format_float(row.velocity_error),
                    measures::format_float(row.w2_sq),
                    measures::format_float(row.trace_mu),
                    measures::format_float(r.gronwall.rhs[i]),
                    measures::format_float(r.gronwall.margin[i]),
                    measures::format_float(r.figalli_kang.margin[i]),
                    row.flat_metric.map(measures::format_float).unwrap_or_default(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    })?;
    let runs: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "delta": r.delta,
                "initial_terms": r.initial,
                "c_star": r.gronwall.c_star,
                "gronwall_passed": r.gronwall.passed,
                "figalli_kang_passed": r.figalli_kang.passed,
                "figalli_kang_uninformative": r.figalli_kang.uninformative,
                "minimal_c0": r.minimal_c0,
                "sup_error": r.sup_error,
            })
        })
        .collect();
    let summary = json!({
        "passed": results.iter().all(|r| r.gronwall.passed && r.figalli_kang.passed),
        "c0": sec.c0,
        "runs": runs,
    });
    out.add_json("summary.json", &summary);
    Ok(())
}

/// All distances between two measures. Wasserstein entries are null unless
/// both arguments are probability measures.
pub fn metrics_report(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<Value> {
    let flat = measures::flat_metric(mu, nu)?;
    let (w1, w2) = if mu.is_probability() && nu.is_probability() {
        (
            Some(measures::wasserstein(mu, nu, 1)?.value),
            Some(measures::wasserstein(mu, nu, 2)?.value),
        )
    } else {
        (None, None)
    };
    Ok(json!({
        "flat_metric": flat.value,
        "flat_metric_bound_active": flat.lp_status.as_ref().map(|s| s.bound_active),
        "w1": w1,
        "w2": w2,
        "total_variation": measures::total_variation(mu, nu)?,
    }))
}

fn run_metrics(cfg: &ScenarioConfig, out: &mut Artifacts) -> Result<()> {
    let sec = cfg.metrics.as_ref().expect("validated");
    let report = metrics_report(&sec.mu, &sec.nu)?;
    out.add_json("metrics.json", &report);
    Ok(())
}

/// Scenarios compiled into the binary.
pub const SHIPPED: &[(&str, &str)] = &[
    (
        "two_clusters_quadratic",
        include_str!("../scenarios/two_clusters_quadratic.json"),
    ),
    (
        "smoothed_norm_cloud",
        include_str!("../scenarios/smoothed_norm_cloud.json"),
    ),
    ("skewed_control", include_str!("../scenarios/skewed_control.json")),
    (
        "gaussian_bump_cloud",
        include_str!("../scenarios/gaussian_bump_cloud.json"),
    ),
    ("viscous_bump", include_str!("../scenarios/viscous_bump.json")),
    ("colliding_bumps", include_str!("../scenarios/colliding_bumps.json")),
    ("viscosity_sweep", include_str!("../scenarios/viscosity_sweep.json")),
    ("stability_sweep", include_str!("../scenarios/stability_sweep.json")),
    ("metrics_demo", include_str!("../scenarios/metrics_demo.json")),
];

/// JSON schema for scenario files.
pub const SCENARIO_SCHEMA: &str = include_str!("../scenarios/scenario.schema.json");

pub fn shipped_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("no shipped scenario named {name:?}")))?;
    ScenarioConfig::from_json(text).map_err(|e| e.context(format!("shipped scenario {name}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogueEntry {
    pub name: String,
    pub description: String,
    /// Parse or validation failure, for malformed files.
    pub error: Option<String>,
}

fn entry(fallback: &str, text: &str) -> CatalogueEntry {
    match ScenarioConfig::from_json(text) {
        Ok(c) => CatalogueEntry {
            name: c.name,
            description: c.description,
            error: None,
        },
        Err(e) => CatalogueEntry {
            name: fallback.to_string(),
            description: String::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Shipped scenarios, or the `*.json` files of `dir` (sorted by file name).
pub fn list_scenarios(dir: Option<&Path>) -> Result<Vec<CatalogueEntry>> {
    let Some(dir) = dir else {
        return Ok(SHIPPED.iter().map(|(n, t)| entry(n, t)).collect());
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.ends_with("scenario.schema.json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(entry(&stem, &text))
        })
        .collect()
}
