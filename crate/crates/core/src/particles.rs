//! Empirical (atomic) solutions of the alignment system.
//!
//! Atoms carry fixed masses `m_i`, positions `x_i` and velocities `u_i` with
//!
//! ```text
//! dx_i/dt = u_i
//! du_i/dt = -sum_j m_j D²K(x_i - x_j) (u_i - u_j)
//! ```
//!
//! The offset `w_i = u_i + sum_j m_j grad K(x_i - x_j)` is constant along
//! these trajectories, which gives the second (ARZ-type) formulation: keep `w`
//! fixed, move atoms with `u = w - grad K * rho`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measures::{format_float, AtomicMeasure};
use crate::rng;

/// Below this many atoms the pair sums run on the calling thread.
const PARALLEL_THRESHOLD: usize = 256;

/// Relative slack on the time-step guard, so `dt = 0.5/sup` itself passes.
const DT_GUARD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub time: f64,
    pub measure: AtomicMeasure,
    /// Row-major `len * dim` velocities.
    pub velocities: Vec<f64>,
    /// Row-major offsets `w`, when materialized.
    pub offsets: Option<Vec<f64>>,
}

impl ParticleState {
    pub fn new(measure: AtomicMeasure, velocities: Vec<f64>) -> Result<Self> {
        let expected = measure.len() * measure.dim();
        if velocities.len() != expected {
            return Err(Error::LengthMismatch {
                what: "velocities",
                expected,
                got: velocities.len(),
            });
        }
        if !measure.is_probability() {
            return Err(Error::InvalidMeasure(format!(
                "particle states need unit total mass, got {}",
                measure.total_mass()
            )));
        }
        Ok(ParticleState {
            time: 0.0,
            measure,
            velocities,
            offsets: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        self.measure.coords()
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.velocities[i * d..(i + 1) * d]
    }

    /// Fills in `offsets` from the current positions and velocities.
    pub fn with_offsets(mut self, k: &Kernel) -> Result<Self> {
        self.offsets = Some(offsets(&self, k)?);
        Ok(self)
    }

    fn replace_positions(&self, coords: Vec<f64>) -> Result<AtomicMeasure> {
        AtomicMeasure::from_flat(self.dim(), coords, self.measure.weights().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Integrate `(x, u)`.
    #[default]
    VelocityU,
    /// Integrate `x` with `w` frozen and `u` rebuilt at every stage.
    OffsetW,
}

fn check_dims(state: &ParticleState, k: &Kernel) -> Result<()> {
    if state.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            got: state.dim(),
        });
    }
    Ok(())
}

fn first_non_finite(d: usize, fields: &[&[f64]]) -> Option<usize> {
    fields
        .iter()
        .filter_map(|f| f.iter().position(|v| !v.is_finite()).map(|p| p / d))
        .min()
}

/// Runs `body(i, out_i)` for every atom, in parallel for large clouds. Each
/// atom's inner sum is sequential, so results do not depend on thread count.
fn per_atom<F>(n: usize, d: usize, out: &mut [f64], body: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    if n >= PARALLEL_THRESHOLD {
        out.par_chunks_mut(d).enumerate().for_each(|(i, o)| body(i, o));
    } else {
        out.chunks_mut(d).enumerate().for_each(|(i, o)| body(i, o));
    }
}

fn accelerations(k: &Kernel, x: &[f64], u: &[f64], m: &[f64], out: &mut [f64]) {
    let d = k.dim();
    let n = m.len();
    per_atom(n, d, out, |i, acc| {
        let mut h = vec![0.0; d * d];
        let mut dx = vec![0.0; d];
        acc.fill(0.0);
        let xi = &x[i * d..(i + 1) * d];
        let ui = &u[i * d..(i + 1) * d];
        for j in 0..n {
            let xj = &x[j * d..(j + 1) * d];
            let uj = &u[j * d..(j + 1) * d];
            for a in 0..d {
                dx[a] = xi[a] - xj[a];
            }
            k.hess_into(&dx, &mut h);
            for a in 0..d {
                let mut s = 0.0;
                for b in 0..d {
                    s += h[a * d + b] * (ui[b] - uj[b]);
                }
                acc[a] -= m[j] * s;
            }
        }
    });
}

/// `out_i = sum_j m_j grad K(x_i - x_j)`.
fn grad_field(k: &Kernel, x: &[f64], m: &[f64], out: &mut [f64]) {
    let d = k.dim();
    let n = m.len();
    per_atom(n, d, out, |i, acc| {
        let mut g = vec![0.0; d];
        let mut dx = vec![0.0; d];
        acc.fill(0.0);
        let xi = &x[i * d..(i + 1) * d];
        for j in 0..n {
            let xj = &x[j * d..(j + 1) * d];
            for a in 0..d {
                dx[a] = xi[a] - xj[a];
            }
            k.grad_into(&dx, &mut g);
            for a in 0..d {
                acc[a] += m[j] * g[a];
            }
        }
    });
}

/// Per-atom accelerations `du_i/dt`.
pub fn rhs_u(state: &ParticleState, k: &Kernel) -> Result<Vec<f64>> {
    check_dims(state, k)?;
    let d = state.dim();
    if let Some(i) = first_non_finite(d, &[state.positions(), &state.velocities]) {
        return Err(Error::NonFinite {
            index: i,
            time: state.time,
        });
    }
    let mut out = vec![0.0; state.velocities.len()];
    accelerations(
        k,
        state.positions(),
        &state.velocities,
        state.measure.weights(),
        &mut out,
    );
    Ok(out)
}

/// `w_i = u_i + sum_j m_j grad K(x_i - x_j)`.
pub fn offsets(state: &ParticleState, k: &Kernel) -> Result<Vec<f64>> {
    check_dims(state, k)?;
    let mut w = vec![0.0; state.velocities.len()];
    grad_field(k, state.positions(), state.measure.weights(), &mut w);
    for (wi, ui) in w.iter_mut().zip(&state.velocities) {
        *wi += ui;
    }
    Ok(w)
}

fn check_dt(k: &Kernel, dt: f64) -> Result<()> {
    let max = k.max_time_step();
    if !(dt > 0.0) || dt > max * (1.0 + DT_GUARD_SLACK) {
        return Err(Error::TimeStep { dt, max });
    }
    Ok(())
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

/// Explicit step of the `(x, u)` system.
fn advance_velocity(k: &Kernel, x: &[f64], u: &[f64], m: &[f64], dt: f64, scheme: Scheme) -> (Vec<f64>, Vec<f64>) {
    let len = u.len();
    let f = |x: &[f64], u: &[f64]| {
        let mut a = vec![0.0; len];
        accelerations(k, x, u, m, &mut a);
        a
    };
    match scheme {
        Scheme::Euler => {
            let a = f(x, u);
            (axpy(x, dt, u), axpy(u, dt, &a))
        }
        Scheme::Rk4 => {
            let k1x = u.to_vec();
            let k1u = f(x, u);
            let x2 = axpy(x, 0.5 * dt, &k1x);
            let u2 = axpy(u, 0.5 * dt, &k1u);
            let k2u = f(&x2, &u2);
            let x3 = axpy(x, 0.5 * dt, &u2);
            let u3 = axpy(u, 0.5 * dt, &k2u);
            let k3u = f(&x3, &u3);
            let x4 = axpy(x, dt, &u3);
            let u4 = axpy(u, dt, &k3u);
            let k4u = f(&x4, &u4);
            let mut xn = x.to_vec();
            let mut un = u.to_vec();
            for i in 0..len {
                xn[i] += dt / 6.0 * (k1x[i] + 2.0 * u2[i] + 2.0 * u3[i] + u4[i]);
                un[i] += dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
            }
            (xn, un)
        }
    }
}

/// Explicit step of `dx/dt = w - grad K * rho(x)` with `w` frozen.
fn advance_offset(k: &Kernel, x: &[f64], w: &[f64], m: &[f64], dt: f64, scheme: Scheme) -> Vec<f64> {
    let len = w.len();
    let vel = |x: &[f64]| {
        let mut g = vec![0.0; len];
        grad_field(k, x, m, &mut g);
        w.iter().zip(&g).map(|(wi, gi)| wi - gi).collect::<Vec<f64>>()
    };
    match scheme {
        Scheme::Euler => axpy(x, dt, &vel(x)),
        Scheme::Rk4 => {
            let k1 = vel(x);
            let k2 = vel(&axpy(x, 0.5 * dt, &k1));
            let k3 = vel(&axpy(x, 0.5 * dt, &k2));
            let k4 = vel(&axpy(x, dt, &k3));
            let mut xn = x.to_vec();
            for i in 0..len {
                xn[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            xn
        }
    }
}

fn step_formulation(
    state: &ParticleState,
    k: &Kernel,
    dt: f64,
    scheme: Scheme,
    formulation: Formulation,
) -> Result<ParticleState> {
    check_dims(state, k)?;
    check_dt(k, dt)?;
    let d = state.dim();
    let m = state.measure.weights();
    let time = state.time + dt;
    let (x, u, w) = match formulation {
        Formulation::VelocityU => {
            let (x, u) = advance_velocity(k, state.positions(), &state.velocities, m, dt, scheme);
            (x, u, None)
        }
        Formulation::OffsetW => {
            let w = match &state.offsets {
                Some(w) => w.clone(),
                None => offsets(state, k)?,
            };
            let x = advance_offset(k, state.positions(), &w, m, dt, scheme);
            let mut g = vec![0.0; w.len()];
            grad_field(k, &x, m, &mut g);
            let u = w.iter().zip(&g).map(|(wi, gi)| wi - gi).collect();
            (x, u, Some(w))
        }
    };
    if let Some(i) = first_non_finite(d, &[&x, &u]) {
        return Err(Error::NonFinite { index: i, time });
    }
    Ok(ParticleState {
        time,
        measure: state.replace_positions(x)?,
        velocities: u,
        offsets: w,
    })
}

/// One explicit step of the velocity formulation. Requires
/// `0 < dt <= 0.5 / sup|D²K|`.
pub fn step(state: &ParticleState, k: &Kernel, dt: f64, scheme: Scheme) -> Result<ParticleState> {
    step_formulation(state, k, dt, scheme, Formulation::VelocityU)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub energy: f64,
    pub dissipation: f64,
    /// `∫ D dt` from the start of the run; filled in by [`simulate`], 0 otherwise.
    pub dissipation_integral: f64,
    pub momentum: Vec<f64>,
    pub second_moment: f64,
    pub first_moment_m: f64,
    pub mv_functional: f64,
    pub w_drift: f64,
}

/// `D = ½ Σ_ij m_i m_j (u_i - u_j)·D²K(x_i - x_j)(u_i - u_j)`.
fn dissipation_rate(k: &Kernel, x: &[f64], u: &[f64], m: &[f64], d: usize) -> f64 {
    let n = m.len();
    let mut row = vec![0.0; n];
    per_atom(n, 1, &mut row, |i, out| {
        let mut h = vec![0.0; d * d];
        let mut dx = vec![0.0; d];
        let mut du = vec![0.0; d];
        let mut s = 0.0;
        for j in 0..n {
            for a in 0..d {
                dx[a] = x[i * d + a] - x[j * d + a];
                du[a] = u[i * d + a] - u[j * d + a];
            }
            k.hess_into(&dx, &mut h);
            let mut q = 0.0;
            for a in 0..d {
                for b in 0..d {
                    q += du[a] * h[a * d + b] * du[b];
                }
            }
            s += m[j] * q;
        }
        out[0] = m[i] * s;
    });
    0.5 * row.iter().sum::<f64>()
}

/// `F(z) = (1 + z²)/2 · ln(1 + z²)`.
pub fn mv_weight(z: f64) -> f64 {
    let s = z * z;
    0.5 * (1.0 + s) * s.ln_1p()
}

/// Diagnostics by direct summation. `reference_offsets` are the offsets at
/// the initial time; without them `w_drift` is reported as 0.
pub fn diagnostics(state: &ParticleState, k: &Kernel, reference_offsets: Option<&[f64]>) -> Result<DiagnosticsRecord> {
    check_dims(state, k)?;
    let d = state.dim();
    let n = state.len();
    let x = state.positions();
    let u = &state.velocities;
    let m = state.measure.weights();
    let mut energy = 0.0;
    let mut momentum = vec![0.0; d];
    let mut second_moment = 0.0;
    let mut first_moment_m = 0.0;
    let mut mv = 0.0;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let ui = &u[i * d..(i + 1) * d];
        let u2: f64 = ui.iter().map(|v| v * v).sum();
        let x2: f64 = xi.iter().map(|v| v * v).sum();
        energy += 0.5 * m[i] * u2;
        for a in 0..d {
            momentum[a] += m[i] * ui[a];
        }
        second_moment += m[i] * x2;
        first_moment_m += m[i] * x2.sqrt() * u2.sqrt();
        mv += m[i] * mv_weight(u2.sqrt());
    }
    let dissipation = dissipation_rate(k, x, u, m, d);
    let w_drift = match reference_offsets {
        Some(w0) => {
            let w = offsets(state, k)?;
            w.chunks_exact(d)
                .zip(w0.chunks_exact(d))
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        }
        None => 0.0,
    };
    Ok(DiagnosticsRecord {
        time: state.time,
        energy,
        dissipation,
        dissipation_integral: 0.0,
        momentum,
        second_moment,
        first_moment_m,
        mv_functional: mv,
        w_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub formulation: Formulation,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Trace of the concentration measure; identically zero for atoms.
    pub trace_mu: Vec<f64>,
}

impl Trajectory {
    pub fn state(&self, idx: usize) -> Result<ParticleState> {
        let s = &self.snapshots[idx];
        Ok(ParticleState {
            time: s.time,
            measure: AtomicMeasure::from_flat(self.dim, s.positions.clone(), self.weights.clone())?,
            velocities: s.velocities.clone(),
            offsets: Some(s.offsets.clone()),
        })
    }

    pub fn final_state(&self) -> Result<ParticleState> {
        self.state(self.snapshots.len() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Long-format CSV: `t, atom_id, x0.., u0.., w0..`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.dim;
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = vec!["t".to_string(), "atom_id".to_string()];
        for prefix in ["x", "u", "w"] {
            header.extend((0..d).map(|a| format!("{prefix}{a}")));
        }
        wtr.write_record(&header)?;
        for s in &self.snapshots {
            for i in 0..self.weights.len() {
                let mut row = vec![format_float(s.time), i.to_string()];
                for field in [&s.positions, &s.velocities, &s.offsets] {
                    row.extend(field[i * d..(i + 1) * d].iter().map(|v| format_float(*v)));
                }
                wtr.write_record(&row)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_diagnostics_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_diagnostics_csv(&self.diagnostics, self.dim, writer)
    }
}

pub fn write_diagnostics_csv<W: Write>(records: &[DiagnosticsRecord], dim: usize, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<String> = ["t", "energy", "dissipation", "dissipation_integral"]
        .map(String::from)
        .to_vec();
    header.extend((0..dim).map(|a| format!("momentum{a}")));
    header.extend(["second_moment", "first_moment_m", "mv_functional", "w_drift"].map(String::from));
    wtr.write_record(&header)?;
    for r in records {
        let mut row = [r.time, r.energy, r.dissipation, r.dissipation_integral]
            .map(format_float)
            .to_vec();
        row.extend(r.momentum.iter().map(|v| format_float(*v)));
        row.extend([r.second_moment, r.first_moment_m, r.mv_functional, r.w_drift].map(format_float));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Integrates from `initial` to `initial.time + t_end`, recording every
/// `record_every` steps and always at the final step. `t_end / dt` must be an
/// integer up to rounding.
pub fn simulate(initial: &ParticleState, k: &Kernel, params: &SimulationParams) -> Result<Trajectory> {
    check_dims(initial, k)?;
    check_dt(k, params.dt)?;
    if !(params.t_end > 0.0) || !params.t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "t_end must be positive, got {}",
            params.t_end
        )));
    }
    if params.record_every == 0 {
        return Err(Error::InvalidInput("record_every must be at least 1".into()));
    }
    let n_steps = (params.t_end / params.dt).round();
    if n_steps < 1.0 || (n_steps * params.dt - params.t_end).abs() > 1e-9 * params.t_end {
        return Err(Error::InvalidInput(format!(
            "t_end {} is not a whole number of steps of {}",
            params.t_end, params.dt
        )));
    }
    let n_steps = n_steps as usize;
    let t0 = initial.time;
    let w0 = offsets(initial, k)?;
    let mut state = initial.clone();
    state.offsets = Some(w0.clone());
    let mass0 = state.measure.total_mass();

    let mut traj = Trajectory {
        dim: initial.dim(),
        weights: initial.measure.weights().to_vec(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        trace_mu: Vec::new(),
    };
    let record = |traj: &mut Trajectory, state: &ParticleState| -> Result<()> {
        let w = match params.formulation {
            Formulation::VelocityU => offsets(state, k)?,
            Formulation::OffsetW => state.offsets.clone().unwrap_or_default(),
        };
        let diag = diagnostics(state, k, Some(&w0))?;
        traj.snapshots.push(Snapshot {
            time: state.time,
            positions: state.positions().to_vec(),
            velocities: state.velocities.clone(),
            offsets: w,
        });
        traj.diagnostics.push(diag);
        traj.trace_mu.push(0.0);
        Ok(())
    };
    let rate = |st: &ParticleState| dissipation_rate(k, st.positions(), &st.velocities, st.measure.weights(), st.dim());
    let mut rates = Vec::with_capacity(n_steps + 1);
    let mut recorded = vec![0usize];
    rates.push(rate(&state));
    record(&mut traj, &state)?;
    for s in 1..=n_steps {
        let mut next = step_formulation(&state, k, params.dt, params.scheme, params.formulation)?;
        // Times are multiples of dt, not running sums.
        next.time = t0 + s as f64 * params.dt;
        if params.formulation == Formulation::VelocityU {
            next.offsets = None;
        }
        debug_assert_eq!(next.measure.total_mass(), mass0);
        state = next;
        rates.push(rate(&state));
        if s % params.record_every == 0 || s == n_steps {
            record(&mut traj, &state)?;
            recorded.push(s);
        }
    }
    let cumulative = cumulative_uniform(params.dt, &rates);
    for (rec, s) in traj.diagnostics.iter_mut().zip(recorded) {
        rec.dissipation_integral = cumulative[s];
    }
    Ok(traj)
}

/// `|dE/dt + D|` at interior records, with `dE/dt` from central differences.
/// Returns `(time, residual)` pairs.
pub fn energy_identity_residual(traj: &Trajectory, _k: &Kernel) -> Result<Vec<(f64, f64)>> {
    let recs = &traj.diagnostics;
    if recs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "energy identity needs at least 3 records, got {}",
            recs.len()
        )));
    }
    let h = recs[1].time - recs[0].time;
    for pair in recs.windows(2) {
        if ((pair[1].time - pair[0].time) - h).abs() > 1e-9 * h.abs().max(1e-300) {
            return Err(Error::InvalidInput("records are not uniformly spaced".into()));
        }
    }
    Ok(recs
        .windows(3)
        .map(|w| {
            let de = (w[2].energy - w[0].energy) / (w[2].time - w[0].time);
            (w[1].time, (de + w[1].dissipation).abs())
        })
        .collect())
}

/// Running integral of samples on a uniform grid of spacing `h`, fourth
/// order when at least four samples are available (interior panels use the
/// centred four-point rule, the end panels one-sided ones).
pub fn cumulative_uniform(h: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (f[i] + f[i - 1]);
        }
        return out;
    }
    let c = h / 24.0;
    for i in 0..n - 1 {
        let panel = if i == 0 {
            c * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if i == n - 2 {
            c * (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4])
        } else {
            c * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2])
        };
        out[i + 1] = out[i] + panel;
    }
    out
}

/// Seeded initial clouds for scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCloud {
    /// `n` equal-mass atoms with positions uniform in `[-half_width, half_width]^d`
    /// and velocities uniform in `[-speed, speed]^d`.
    UniformBox { n: usize, half_width: f64, speed: f64 },
    /// Two equal clusters centred at `±separation/2` on the first axis,
    /// moving toward each other with `speed` plus uniform jitter.
    TwoClusters {
        n_per_cluster: usize,
        separation: f64,
        spread: f64,
        speed: f64,
        jitter: f64,
    },
    /// Explicit atoms.
    Explicit {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        velocities: Vec<Vec<f64>>,
    },
}

impl InitialCloud {
    pub fn build(&self, dim: usize, seed: u64) -> Result<ParticleState> {
        let mut g = rng::generator(seed);
        match self {
            InitialCloud::UniformBox { n, half_width, speed } => {
                if *n == 0 {
                    return Err(Error::InvalidInput("cloud needs at least one atom".into()));
                }
                let mut x = Vec::with_capacity(n * dim);
                let mut u = Vec::with_capacity(n * dim);
                for _ in 0..*n {
                    for _ in 0..dim {
                        x.push(rng::uniform(&mut g, -half_width, *half_width));
                    }
                    for _ in 0..dim {
                        u.push(rng::uniform(&mut g, -speed, *speed));
                    }
                }
                let m = AtomicMeasure::from_flat(dim, x, vec![1.0 / *n as f64; *n])?;
                ParticleState::new(m, u)
            }
            InitialCloud::TwoClusters {
                n_per_cluster,
                separation,
                spread,
                speed,
                jitter,
            } => {
                let n = 2 * n_per_cluster;
                if n == 0 {
                    return Err(Error::InvalidInput("cloud needs at least one atom".into()));
                }
                let mut x = Vec::with_capacity(n * dim);
                let mut u = Vec::with_capacity(n * dim);
                for c in [-1.0, 1.0] {
                    for _ in 0..*n_per_cluster {
                        for a in 0..dim {
                            let centre = if a == 0 { 0.5 * c * separation } else { 0.0 };
                            x.push(centre + rng::uniform(&mut g, -spread, *spread));
                        }
                        for a in 0..dim {
                            let drift = if a == 0 { -c * speed } else { 0.0 };
                            u.push(drift + rng::uniform(&mut g, -jitter, *jitter));
                        }
                    }
                }
                let m = AtomicMeasure::from_flat(dim, x, vec![1.0 / n as f64; n])?;
                ParticleState::new(m, u)
            }
            InitialCloud::Explicit {
                points,
                weights,
                velocities,
            } => {
                let m = AtomicMeasure::new(dim, points.clone(), weights.clone())?;
                let mut u = Vec::with_capacity(points.len() * dim);
                for v in velocities {
                    if v.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: v.len(),
                        });
                    }
                    u.extend_from_slice(v);
                }
                ParticleState::new(m, u)
            }
        }
    }
}
