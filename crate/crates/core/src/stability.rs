//! Weak–strong stability diagnostics.
//!
//! A particle solution `(rho^n, u^n)` is compared with a strong solution
//! `(r, v)` through
//!
//! ```text
//! lhs(t) = ∫ |v(t,x) - u^n(t,x)|² d rho^n_t + tr mu_t + W_2²(rho^n_t, r_t)
//! ```
//!
//! which must stay below `e^{C* t}` times the initial discrepancy. Strong
//! solutions come either from the closed form available for `K'' = I` in one
//! dimension, or from a fine particle run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::VelocityField;
use crate::kernels::{Kernel, KernelFamily};
use crate::measures::{self, AtomicMeasure};
use crate::particles::{self, Formulation, ParticleState, Scheme, SimulationParams, Trajectory};

/// Default `c0` in `C* = c0 (1 + |D²K|_{W1,inf}) (1 + |v|_{W1,inf})`.
pub const DEFAULT_C0: f64 = 16.0;
/// Absolute slack for comparisons at round-off level.
pub const ABS_TOL: f64 = 1e-12;

/// Initial density on the line, sampled through its quantile function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityProfile {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl DensityProfile {
    pub fn quantile(&self, q: f64) -> Result<f64> {
        match *self {
            DensityProfile::Uniform { lo, hi } => {
                if !(hi > lo) {
                    return Err(Error::InvalidInput(format!(
                        "uniform density needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
                Ok(lo + q * (hi - lo))
            }
            DensityProfile::Gaussian { mean, std } => {
                let n = Normal::new(mean, std).map_err(|e| Error::InvalidInput(format!("gaussian density: {e}")))?;
                Ok(n.inverse_cdf(q))
            }
        }
    }

    /// Midpoint quantile atoms `Q((k + 1/2)/n)` with masses `1/n`.
    pub fn quantile_atoms(&self, n: usize) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 quantile atoms".into()));
        }
        (0..n).map(|k| self.quantile((k as f64 + 0.5) / n as f64)).collect()
    }
}

fn velocity_slope(v: &VelocityField, x: f64) -> f64 {
    match *v {
        VelocityField::Constant { .. } => 0.0,
        VelocityField::Tanh {
            amplitude,
            scale,
            center,
            ..
        } => {
            let c = ((x - center) / scale).cosh();
            amplitude / (scale * c * c)
        }
    }
}

fn velocity_sup(v: &VelocityField) -> f64 {
    match *v {
        VelocityField::Constant { value } => value.abs(),
        VelocityField::Tanh { drift, amplitude, .. } => drift.abs() + amplitude.abs(),
    }
}

/// Closed-form strong solution for `K'' = 1` in one dimension:
/// `X(t, y) = y + m t + (v0(y) - m)(1 - e^{-t})`,
/// `v(t, X(t, y)) = m + (v0(y) - m) e^{-t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticStrong {
    atoms0: Vec<f64>,
    velocity: VelocityField,
    mean: f64,
}

impl QuadraticStrong {
    pub fn new(density: &DensityProfile, velocity: VelocityField, n_eval: usize) -> Result<Self> {
        let atoms0 = density.quantile_atoms(n_eval)?;
        // Sampled monotonicity check of the characteristic map.
        let lo = atoms0[0];
        let hi = atoms0[n_eval - 1];
        let probes = atoms0
            .iter()
            .copied()
            .chain((0..=4096).map(|k| lo + (hi - lo) * k as f64 / 4096.0));
        for x in probes {
            let s = velocity_slope(&velocity, x);
            if !(s > -1.0) {
                return Err(Error::NonMonotone { x, slope: s });
            }
        }
        if !(velocity.min_slope() > -1.0) {
            return Err(Error::NonMonotone {
                x: f64::NAN,
                slope: velocity.min_slope(),
            });
        }
        let mean = atoms0.iter().map(|&y| velocity.at(y)).sum::<f64>() / n_eval as f64;
        Ok(QuadraticStrong { atoms0, velocity, mean })
    }

    pub fn mean_velocity(&self) -> f64 {
        self.mean
    }

    pub fn initial_atoms(&self) -> &[f64] {
        &self.atoms0
    }

    pub fn initial_velocity(&self, y: f64) -> f64 {
        self.velocity.at(y)
    }

    pub fn characteristic(&self, t: f64, y: f64) -> f64 {
        y + self.mean * t + (self.velocity.at(y) - self.mean) * (1.0 - (-t).exp())
    }

    fn velocity_along(&self, t: f64, y: f64) -> f64 {
        self.mean + (self.velocity.at(y) - self.mean) * (-t).exp()
    }

    /// Quantile atoms pushed to time `t`, with their velocities.
    pub fn sample(&self, t: f64) -> Result<(AtomicMeasure, Vec<f64>)> {
        let n = self.atoms0.len();
        let xs = self.atoms0.iter().map(|&y| self.characteristic(t, y)).collect();
        let vs = self.atoms0.iter().map(|&y| self.velocity_along(t, y)).collect();
        Ok((AtomicMeasure::from_flat(1, xs, vec![1.0 / n as f64; n])?, vs))
    }

    /// `v(t, x)`, inverting the characteristic map exactly.
    pub fn velocity_at(&self, t: f64, x: f64) -> Result<f64> {
        let y = self.foot(t, x)?;
        Ok(self.velocity_along(t, y))
    }

    /// `y` with `X(t, y) = x`: safeguarded Newton on a bracket.
    fn foot(&self, t: f64, x: f64) -> Result<f64> {
        let reach = self.mean.abs() * t + velocity_sup(&self.velocity) + self.mean.abs() + 1.0;
        let (mut lo, mut hi) = (x - reach, x + reach);
        let f = |y: f64| self.characteristic(t, y) - x;
        if f(lo) > 0.0 || f(hi) < 0.0 {
            return Err(Error::Solver(format!("cannot bracket the characteristic through {x}")));
        }
        let decay = 1.0 - (-t).exp();
        let mut y = x - self.mean * t;
        for _ in 0..200 {
            let fy = f(y);
            if fy == 0.0 {
                return Ok(y);
            }
            if fy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let slope = 1.0 + velocity_slope(&self.velocity, y) * decay;
            let mut next = y - fy / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + y.abs()) {
                return Ok(next);
            }
            y = next;
        }
        Ok(y)
    }

    /// `sup_t sup_x |v| + |v_x|` over `[0, t_max]`, by sampling.
    pub fn w1inf_norm(&self, t_max: f64) -> f64 {
        let lo = self.atoms0[0];
        let hi = self.atoms0[self.atoms0.len() - 1];
        let pad = 0.5 * (hi - lo) + 1.0;
        let mut best: f64 = 0.0;
        for it in 0..=50 {
            let t = t_max * it as f64 / 50.0;
            let decay = 1.0 - (-t).exp();
            let mut sup_v: f64 = 0.0;
            let mut sup_dv: f64 = 0.0;
            for k in 0..=2000 {
                let y = lo - pad + (hi - lo + 2.0 * pad) * k as f64 / 2000.0;
                let s = velocity_slope(&self.velocity, y);
                sup_v = sup_v.max(self.velocity_along(t, y).abs());
                sup_dv = sup_dv.max((s * (-t).exp() / (1.0 + s * decay)).abs());
            }
            best = best.max(sup_v + sup_dv);
        }
        best
    }
}

/// A fine-resolution particle trajectory used as the strong solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FineReference {
    pub trajectory: Trajectory,
}

impl FineReference {
    fn snapshot(&self, t: f64) -> Result<usize> {
        self.trajectory
            .snapshots
            .iter()
            .position(|s| (s.time - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::InvalidInput(format!("fine reference has no snapshot at t = {t}")))
    }

    pub fn sample(&self, t: f64) -> Result<(AtomicMeasure, Vec<f64>)> {
        let s = self.trajectory.state(self.snapshot(t)?)?;
        Ok((s.measure, s.velocities))
    }

    /// Monotone cubic interpolation of the fine velocities; positions
    /// outside the fine support are an error.
    pub fn velocity_at(&self, t: f64, x: f64) -> Result<f64> {
        if self.trajectory.dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.trajectory.dim,
            });
        }
        let snap = &self.trajectory.snapshots[self.snapshot(t)?];
        let mut pts: Vec<(f64, f64)> = snap
            .positions
            .iter()
            .copied()
            .zip(snap.velocities.iter().copied())
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pchip(&pts, x)
    }
}

/// Fritsch–Carlson monotone cubic interpolation through sorted `(x, y)`.
fn pchip(pts: &[(f64, f64)], x: f64) -> Result<f64> {
    let n = pts.len();
    let (lo, hi) = (pts[0].0, pts[n - 1].0);
    if x < lo || x > hi {
        return Err(Error::Extrapolation { x, lo, hi });
    }
    let k = match pts.binary_search_by(|p| p.0.total_cmp(&x)) {
        Ok(i) => return Ok(pts[i].1),
        Err(i) => i - 1,
    };
    let h: Vec<f64> = pts.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let delta: Vec<f64> = pts.windows(2).zip(&h).map(|(w, h)| (w[1].1 - w[0].1) / h).collect();
    let slope = |i: usize| -> f64 {
        if n == 2 {
            return delta[0];
        }
        if i == 0 || i == n - 1 {
            // One-sided three-point estimate, limited to keep monotonicity.
            let (d0, d1, h0, h1) = if i == 0 {
                (delta[0], delta[1], h[0], h[1])
            } else {
                (delta[n - 2], delta[n - 3], h[n - 2], h[n - 3])
            };
            let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if s * d0 <= 0.0 {
                0.0
            } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                s
            }
        } else {
            let (d0, d1) = (delta[i - 1], delta[i]);
            if d0 * d1 <= 0.0 {
                0.0
            } else {
                let (w1, w2) = (2.0 * h[i] + h[i - 1], h[i] + 2.0 * h[i - 1]);
                (w1 + w2) / (w1 / d0 + w2 / d1)
            }
        }
    };
    let (x0, y0) = pts[k];
    let (_, y1) = pts[k + 1];
    let hk = h[k];
    let s = (x - x0) / hk;
    let (m0, m1) = (slope(k), slope(k + 1));
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    Ok(h00 * y0 + h10 * hk * m0 + h01 * y1 + h11 * hk * m1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrongSolution {
    QuadraticExact(QuadraticStrong),
    FineParticle(FineReference),
}

impl StrongSolution {
    pub fn sample(&self, t: f64) -> Result<(AtomicMeasure, Vec<f64>)> {
        match self {
            StrongSolution::QuadraticExact(q) => q.sample(t),
            StrongSolution::FineParticle(f) => f.sample(t),
        }
    }

    pub fn velocity_at(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            StrongSolution::QuadraticExact(q) => q.velocity_at(t, x),
            StrongSolution::FineParticle(f) => f.velocity_at(t, x),
        }
    }

    /// `|v|_{W1,inf}` on `[0, t_max]`.
    pub fn w1inf_norm(&self, t_max: f64) -> f64 {
        match self {
            StrongSolution::QuadraticExact(q) => q.w1inf_norm(t_max),
            StrongSolution::FineParticle(f) => {
                let mut best: f64 = 0.0;
                for s in &f.trajectory.snapshots {
                    if s.time > t_max + 1e-12 {
                        continue;
                    }
                    let mut pts: Vec<(f64, f64)> =
                        s.positions.iter().copied().zip(s.velocities.iter().copied()).collect();
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let sup_v = pts.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
                    let sup_dv = pts
                        .windows(2)
                        .filter(|w| w[1].0 > w[0].0)
                        .fold(0.0f64, |m, w| m.max(((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs()));
                    best = best.max(sup_v + sup_dv);
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub time: f64,
    pub velocity_error: f64,
    pub w2_sq: f64,
    pub trace_mu: f64,
    /// Flat distance between the densities, when the merged support is small
    /// enough for the exact solver.
    pub flat_metric: Option<f64>,
}

impl StabilityRow {
    pub fn lhs(&self) -> f64 {
        self.velocity_error + self.trace_mu + self.w2_sq
    }
}

/// Relative-entropy quantities of one particle state against the strong
/// solution at the same time.
pub fn relative_entropy(sol: &ParticleState, strong: &StrongSolution, with_flat: bool) -> Result<StabilityRow> {
    if sol.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: sol.dim(),
        });
    }
    let t = sol.time;
    let mut velocity_error = 0.0;
    for ((x, u), m) in sol.positions().iter().zip(&sol.velocities).zip(sol.measure.weights()) {
        let v = strong.velocity_at(t, *x)?;
        velocity_error += m * (v - u) * (v - u);
    }
    let (r, _) = strong.sample(t)?;
    let w2 = measures::wasserstein(&sol.measure, &r, 2)?.value;
    let flat_metric = if with_flat {
        match measures::flat_metric(&sol.measure, &r) {
            Ok(rep) => Some(rep.value),
            Err(Error::SupportTooLarge { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(StabilityRow {
        time: t,
        velocity_error,
        w2_sq: w2 * w2,
        trace_mu: 0.0,
        flat_metric,
    })
}

/// Rows for every recorded snapshot, evaluated in parallel.
pub fn stability_series(traj: &Trajectory, strong: &StrongSolution, with_flat: bool) -> Result<Vec<StabilityRow>> {
    (0..traj.snapshots.len())
        .into_par_iter()
        .map(|i| {
            let mut row = relative_entropy(&traj.state(i)?, strong, with_flat)?;
            row.trace_mu = traj.trace_mu[i];
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialTerms {
    pub vel_err0: f64,
    pub tv0: f64,
    pub tv_moment0: f64,
}

impl InitialTerms {
    pub fn total(&self) -> f64 {
        self.vel_err0 + self.tv0 + self.tv_moment0
    }
}

/// `C* = c0 (1 + |D²K|_{W1,inf}) (1 + |v|_{W1,inf})`.
pub fn c_star(c0: f64, kernel: &Kernel, v_w1inf: f64) -> f64 {
    c0 * (1.0 + kernel.hess_sup_norm + kernel.hess_lipschitz) * (1.0 + v_w1inf)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallReport {
    pub passed: bool,
    pub c_star: f64,
    pub rhs: Vec<f64>,
    pub margin: Vec<f64>,
}

/// Checks `lhs(t) <= e^{C* t} (vel_err0 + tv0 + tv_moment0)` at every row.
pub fn gronwall_check(rows: &[StabilityRow], c_star: f64, initial: &InitialTerms) -> Result<GronwallReport> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty stability series".into()));
    }
    let t0 = rows[0].time;
    let rhs: Vec<f64> = rows
        .iter()
        .map(|r| (c_star * (r.time - t0)).exp() * initial.total())
        .collect();
    let margin: Vec<f64> = rows.iter().zip(&rhs).map(|(r, b)| b - r.lhs()).collect();
    Ok(GronwallReport {
        passed: margin.iter().all(|m| *m >= -ABS_TOL),
        c_star,
        rhs,
        margin,
    })
}

/// Halves `c0` from `start` until the Gronwall check fails; returns the
/// smallest passing value (or `None` if `start` already fails).
pub fn minimal_c0(rows: &[StabilityRow], start: f64, scale: f64, initial: &InitialTerms) -> Result<Option<f64>> {
    let mut c0 = start;
    if !gronwall_check(rows, c0 * scale, initial)?.passed {
        return Ok(None);
    }
    for _ in 0..200 {
        let half = 0.5 * c0;
        if !gronwall_check(rows, half * scale, initial)?.passed {
            return Ok(Some(c0));
        }
        c0 = half;
    }
    Ok(Some(c0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkConstants {
    pub c_v: f64,
    pub c_t: f64,
    pub c_moment: f64,
}

impl FkConstants {
    /// Same roll-up as `C*`: `C_v = c0 (1 + |v|_{W1,inf})`,
    /// `C_T = c0 (1 + T)(1 + |v|_inf)`, `C = c0`.
    pub fn defaults(c0: f64, v_w1inf: f64, t_max: f64) -> Self {
        FkConstants {
            c_v: c0 * (1.0 + v_w1inf),
            c_t: c0 * (1.0 + t_max) * (1.0 + v_w1inf),
            c_moment: c0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FkReport {
    pub passed: bool,
    pub margin: Vec<f64>,
    /// The initial TV terms alone dominate every `W_2²`, so the check says
    /// nothing about the velocity coupling.
    pub uninformative: bool,
}

/// `W_2²(t) <= C_v e^T velerr(t) + C_T |rho0 - r0|_TV + C ||x|²(rho0 - r0)|_TV`.
pub fn figalli_kang_check(
    rows: &[StabilityRow],
    constants: &FkConstants,
    initial: &InitialTerms,
    t_max: f64,
) -> Result<FkReport> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty stability series".into()));
    }
    let tv = constants.c_t * initial.tv0 + constants.c_moment * initial.tv_moment0;
    let margin: Vec<f64> = rows
        .iter()
        .map(|r| constants.c_v * t_max.exp() * r.velocity_error + tv - r.w2_sq)
        .collect();
    let max_w2 = rows.iter().fold(0.0f64, |m, r| m.max(r.w2_sq));
    Ok(FkReport {
        passed: margin.iter().all(|m| *m >= -ABS_TOL),
        margin,
        uninformative: initial.tv0 > 0.0 && tv >= max_w2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `u0 = v0 + delta` on the same atoms.
    #[default]
    Velocity,
    /// Atoms shifted by `delta`, velocities `v0` at the new positions.
    Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub density: DensityProfile,
    pub velocity: VelocityField,
    pub n_atoms: usize,
    pub deltas: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub perturbation: PerturbationKind,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default)]
    pub fk_constants: Option<FkConstants>,
    #[serde(default = "yes")]
    pub with_flat_metric: bool,
}

fn default_record_every() -> usize {
    50
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub delta: f64,
    pub rows: Vec<StabilityRow>,
    pub initial: InitialTerms,
    pub gronwall: GronwallReport,
    pub figalli_kang: FkReport,
    /// Smallest `c0` (by halving from the configured one) that still passes.
    pub minimal_c0: Option<f64>,
    /// `sup_t (velocity_error + W_2²)`.
    pub sup_error: f64,
}

/// Runs the perturbation family against the closed-form strong solution.
pub fn stability_sweep(cfg: &StabilityConfig, kernel: &Kernel) -> Result<Vec<SweepResult>> {
    if !matches!(kernel.family(), KernelFamily::Quadratic) || kernel.dim() != 1 {
        return Err(Error::InvalidInput(
            "the stability sweep uses the one-dimensional quadratic kernel".into(),
        ));
    }
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidInput("deltas must not be empty".into()));
    }
    let q = QuadraticStrong::new(&cfg.density, cfg.velocity, cfg.n_atoms)?;
    let strong = StrongSolution::QuadraticExact(q.clone());
    let v_norm = strong.w1inf_norm(cfg.t_end);
    let scale = c_star(1.0, kernel, v_norm);
    let fk = cfg
        .fk_constants
        .unwrap_or_else(|| FkConstants::defaults(cfg.c0, v_norm, cfg.t_end));
    let params = SimulationParams {
        t_end: cfg.t_end,
        dt: cfg.dt,
        scheme: Scheme::Rk4,
        formulation: Formulation::VelocityU,
        record_every: cfg.record_every,
    };
    let (r0, _) = strong.sample(0.0)?;
    cfg.deltas
        .iter()
        .map(|&delta| {
            let (xs, us): (Vec<f64>, Vec<f64>) = match cfg.perturbation {
                PerturbationKind::Velocity => q
                    .initial_atoms()
                    .iter()
                    .map(|&y| (y, q.initial_velocity(y) + delta))
                    .unzip(),
                PerturbationKind::Position => q
                    .initial_atoms()
                    .iter()
                    .map(|&y| (y + delta, q.initial_velocity(y + delta)))
                    .unzip(),
            };
            let n = xs.len();
            let state = ParticleState::new(AtomicMeasure::from_flat(1, xs, vec![1.0 / n as f64; n])?, us)?;
            let traj = particles::simulate(&state, kernel, &params)?;
            let rows = stability_series(&traj, &strong, cfg.with_flat_metric)?;
            let initial = InitialTerms {
                vel_err0: rows[0].velocity_error,
                tv0: measures::total_variation(&state.measure, &r0)?,
                tv_moment0: measures::total_variation_second_moment(&state.measure, &r0)?,
            };
            let gronwall = gronwall_check(&rows, cfg.c0 * scale, &initial)?;
            let figalli_kang = figalli_kang_check(&rows, &fk, &initial, cfg.t_end)?;
            let minimal = minimal_c0(&rows, cfg.c0, scale, &initial)?;
            let sup_error = rows.iter().fold(0.0f64, |m, r| m.max(r.velocity_error + r.w2_sq));
            Ok(SweepResult {
                delta,
                rows,
                initial,
                gronwall,
                figalli_kang,
                minimal_c0: minimal,
                sup_error,
            })
        })
        .collect()
}
