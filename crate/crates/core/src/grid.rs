//! One-dimensional periodic finite-volume solver for the pressureless
//! alignment system with density-weighted viscosity `1/N`:
//!
//! ```text
//! rho_t + (rho u)_x = 0
//! (rho u)_t + (rho u²)_x = (1/N) (rho u_x)_x - rho ∫ K''(x-y) (u(x) - u(y)) rho(y) dy
//! ```
//!
//! on the torus `[-L/2, L/2)`. Convection uses Rusanov fluxes (optionally on
//! minmod-limited reconstructions of `rho` and `u`), viscosity a face-centred
//! flux, and the alignment source a direct `O(M²)` periodic convolution. Time
//! stepping is Heun's method.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::measures::{format_float, AtomicMeasure};
use crate::particles::mv_weight;

/// Safety factor applied to every time-step restriction.
pub const CFL: f64 = 0.4;
/// Background density added to shaped profiles, relative to the peak.
pub const BACKGROUND: f64 = 1e-9;
/// Default velocity floor relative to the initial peak density.
pub const RHO_FLOOR_FACTOR: f64 = 1e-10;
/// Images are summed until the neglected tail is below this.
const IMAGE_TAIL: f64 = 1e-12;

/// Initial velocity fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityField {
    Constant {
        value: f64,
    },
    /// `drift + amplitude * tanh((x - center) / scale)`.
    Tanh {
        #[serde(default)]
        drift: f64,
        amplitude: f64,
        scale: f64,
        #[serde(default)]
        center: f64,
    },
}

impl VelocityField {
    pub fn at(&self, x: f64) -> f64 {
        match *self {
            VelocityField::Constant { value } => value,
            VelocityField::Tanh {
                drift,
                amplitude,
                scale,
                center,
            } => drift + amplitude * ((x - center) / scale).tanh(),
        }
    }

    /// Infimum of the derivative over the real line.
    pub fn min_slope(&self) -> f64 {
        match *self {
            VelocityField::Constant { .. } => 0.0,
            VelocityField::Tanh { amplitude, scale, .. } => (amplitude / scale).min(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridProfile {
    /// `rho = 1/L`, uniform velocity.
    Constant {
        #[serde(default)]
        velocity: f64,
    },
    /// Normalized Gaussian of standard deviation `width` on a small background.
    GaussianBump {
        #[serde(default)]
        center: f64,
        width: f64,
        velocity: VelocityField,
    },
    /// Two equal Gaussians at `±separation/2`, with
    /// `u = -speed * tanh(x / width)` driving them together.
    TwoBumps { separation: f64, width: f64, speed: f64 },
}

impl GridProfile {
    pub fn velocity_at(&self, x: f64) -> f64 {
        match self {
            GridProfile::Constant { velocity } => *velocity,
            GridProfile::GaussianBump { velocity, .. } => velocity.at(x),
            GridProfile::TwoBumps { width, speed, .. } => -speed * (x / width).tanh(),
        }
    }

    fn shape(&self, x: f64) -> f64 {
        let g = |y: f64, w: f64| (-0.5 * (y / w) * (y / w)).exp();
        match *self {
            GridProfile::Constant { .. } => 1.0,
            GridProfile::GaussianBump { center, width, .. } => g(x - center, width),
            GridProfile::TwoBumps { separation, width, .. } => {
                g(x - 0.5 * separation, width) + g(x + 0.5 * separation, width)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GridProfile::Constant { velocity } => velocity.is_finite(),
            GridProfile::GaussianBump { width, .. } => width > 0.0,
            GridProfile::TwoBumps { width, .. } => width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid grid profile {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reconstruction {
    FirstOrder,
    #[default]
    Minmod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub length: f64,
    pub rho: Vec<f64>,
    pub mom: Vec<f64>,
    pub inv_n: f64,
    pub time: f64,
    pub rho_floor: f64,
}

/// Cell centres `(i + 1/2 - M/2) dx`, exactly antisymmetric about 0.
pub fn cell_centers(length: f64, cells: usize) -> Vec<f64> {
    let dx = length / cells as f64;
    (0..cells).map(|i| (i as f64 + 0.5 - 0.5 * cells as f64) * dx).collect()
}

pub fn init_grid(
    profile: &GridProfile,
    length: f64,
    cells: usize,
    inv_n: f64,
    rho_floor: Option<f64>,
) -> Result<GridState> {
    profile.validate()?;
    if !(length > 0.0) || cells < 4 {
        return Err(Error::InvalidInput(format!(
            "grid needs L > 0 and at least 4 cells, got L = {length}, M = {cells}"
        )));
    }
    if !(inv_n >= 0.0) || !inv_n.is_finite() {
        return Err(Error::InvalidInput(format!(
            "viscosity must be nonnegative, got {inv_n}"
        )));
    }
    let dx = length / cells as f64;
    let xs = cell_centers(length, cells);
    let mut rho: Vec<f64> = xs.iter().map(|&x| profile.shape(x)).collect();
    if !matches!(profile, GridProfile::Constant { .. }) {
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        for r in &mut rho {
            *r += BACKGROUND * peak;
        }
    }
    if let Some(i) = rho.iter().position(|r| !(*r > 0.0)) {
        return Err(Error::NegativeDensity {
            cell: i,
            value: rho[i],
            time: 0.0,
        });
    }
    let mass: f64 = rho.iter().sum::<f64>() * dx;
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidInput("profile mass cannot be normalized".into()));
    }
    let scale = 1.0 / mass;
    for r in &mut rho {
        *r *= scale;
    }
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let rho_floor = rho_floor.unwrap_or(RHO_FLOOR_FACTOR * peak);
    if !(rho_floor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rho_floor must be positive, got {rho_floor}"
        )));
    }
    let mom = xs.iter().zip(&rho).map(|(&x, &r)| r * profile.velocity_at(x)).collect();
    Ok(GridState {
        length,
        rho,
        mom,
        inv_n,
        time: 0.0,
        rho_floor,
    })
}

/// `K''` sampled at all periodic cell offsets.
///
/// Kernels that decay (gaussian bump, smoothed norm) are periodized by image
/// sums; the others are restricted to the minimal image, which is the only
/// finite choice for kernels whose `K''` does not decay.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicKernel {
    table: Vec<f64>,
    pub even: bool,
    pub psd: bool,
}

impl PeriodicKernel {
    pub fn new(k: &Kernel, length: f64, cells: usize) -> Result<Self> {
        if k.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: k.dim(),
            });
        }
        let dx = length / cells as f64;
        let images = image_count(k, length);
        let mut table = Vec::with_capacity(cells);
        for r in 0..cells {
            let mut s = r as f64 * dx;
            if 2 * r > cells {
                s -= length;
            }
            let v = if 2 * r == cells {
                // Both images at distance L/2.
                0.5 * (k.hess_1d(s) + k.hess_1d(-s))
            } else {
                k.hess_1d(s)
            };
            let mut tail = 0.0;
            for img in (1..=images).rev() {
                let shift = img as f64 * length;
                tail += k.hess_1d(s + shift) + k.hess_1d(s - shift);
            }
            table.push(v + tail);
        }
        Ok(PeriodicKernel {
            table,
            even: k.flags.even,
            psd: k.flags.psd,
        })
    }

    /// `K'' ≡ 0`: pressureless Euler with viscosity only.
    pub fn zero(cells: usize) -> Self {
        PeriodicKernel {
            table: vec![0.0; cells],
            even: true,
            psd: true,
        }
    }

    pub fn cells(&self) -> usize {
        self.table.len()
    }

    /// `kappa_L(x_i - x_j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        let m = self.table.len();
        self.table[(i + m - j) % m]
    }

    pub fn sup(&self) -> f64 {
        self.table.iter().fold(0.0, |s, v| s.max(v.abs()))
    }
}

fn image_count(k: &Kernel, length: f64) -> usize {
    match k.family() {
        KernelFamily::GaussianBump { sigma } => {
            // |K''(y)| <= (1 + y²/s²)/s² e^{-y²/(2 s²)}; stop once y >= (n - 1/2) L is negligible.
            let mut n = 0usize;
            loop {
                let y = (n as f64 + 0.5) * length;
                let s2 = sigma * sigma;
                let bound = 2.0 * (1.0 + y * y / s2) / s2 * (-y * y / (2.0 * s2)).exp();
                if bound < IMAGE_TAIL || n > 1000 {
                    return n;
                }
                n += 1;
            }
        }
        KernelFamily::SmoothedNorm { eps } => {
            // Tail sum over |k| > n of eps²/(kL/2)³ is below eps²·8/(L³ n²).
            let n = (8.0 * eps * eps / (length.powi(3) * IMAGE_TAIL)).sqrt().ceil();
            n.min(1e6) as usize
        }
        _ => 0,
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl GridState {
    pub fn cells(&self) -> usize {
        self.rho.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.cells() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        cell_centers(self.length, self.cells())
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.rho
            .iter()
            .zip(&self.mom)
            .map(|(r, m)| m / r.max(self.rho_floor))
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.dx()
    }

    pub fn momentum(&self) -> f64 {
        self.mom.iter().sum::<f64>() * self.dx()
    }

    /// One atom per cell at the centre with mass `rho_i dx`.
    pub fn to_measure(&self) -> Result<AtomicMeasure> {
        let dx = self.dx();
        AtomicMeasure::from_flat(1, self.centers(), self.rho.iter().map(|r| r * dx).collect())
    }

    /// Largest admissible step: `CFL` times the smallest of the convective,
    /// viscous and alignment limits.
    pub fn max_dt(&self, kernel: &PeriodicKernel) -> f64 {
        let dx = self.dx();
        let m = self.cells();
        let u = self.velocities();
        let umax = u.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let mut limit = if umax > 0.0 { dx / umax } else { f64::INFINITY };
        if self.inv_n > 0.0 {
            let mut ratio: f64 = 0.0;
            for i in 0..m {
                let l = 0.5 * (self.rho[(i + m - 1) % m] + self.rho[i]);
                let r = 0.5 * (self.rho[i] + self.rho[(i + 1) % m]);
                ratio = ratio.max((l + r) / self.rho[i].max(self.rho_floor));
            }
            if ratio > 0.0 {
                limit = limit.min(dx * dx / (self.inv_n * ratio));
            }
        }
        let rate = kernel.sup() * self.mass();
        if rate > 0.0 {
            limit = limit.min(1.0 / rate);
        }
        CFL * limit
    }

    fn rates(&self, rho: &[f64], mom: &[f64], kernel: &PeriodicKernel, recon: Reconstruction) -> (Vec<f64>, Vec<f64>) {
        let m = rho.len();
        let dx = self.dx();
        let u: Vec<f64> = rho.iter().zip(mom).map(|(r, p)| p / r.max(self.rho_floor)).collect();
        let (sr, su) = match recon {
            Reconstruction::FirstOrder => (vec![0.0; m], vec![0.0; m]),
            Reconstruction::Minmod => {
                let slope = |f: &[f64], i: usize| minmod(f[i] - f[(i + m - 1) % m], f[(i + 1) % m] - f[i]);
                (
                    (0..m).map(|i| slope(rho, i)).collect(),
                    (0..m).map(|i| slope(&u, i)).collect(),
                )
            }
        };
        // Face i carries the flux between cells i and i + 1.
        let mut f_rho = vec![0.0; m];
        let mut f_mom = vec![0.0; m];
        for i in 0..m {
            let j = (i + 1) % m;
            let (rl, ul) = (rho[i] + 0.5 * sr[i], u[i] + 0.5 * su[i]);
            let (rr, ur) = (rho[j] - 0.5 * sr[j], u[j] - 0.5 * su[j]);
            let a = ul.abs().max(ur.abs());
            let (ml, mr) = (rl * ul, rr * ur);
            f_rho[i] = 0.5 * (ml + mr) - 0.5 * a * (rr - rl);
            f_mom[i] = 0.5 * (ml * ul + mr * ur) - 0.5 * a * (mr - ml);
            if self.inv_n > 0.0 {
                f_mom[i] -= self.inv_n * 0.5 * (rho[i] + rho[j]) * (u[j] - u[i]) / dx;
            }
        }
        let mut source = vec![0.0; m];
        source.par_iter_mut().enumerate().for_each(|(i, s)| {
            let mut acc = 0.0;
            for j in 0..m {
                acc += kernel.at(i, j) * rho[j] * (u[i] - u[j]);
            }
            *s = -rho[i] * acc * dx;
        });
        let mut drho = vec![0.0; m];
        let mut dmom = vec![0.0; m];
        for i in 0..m {
            let l = (i + m - 1) % m;
            drho[i] = -(f_rho[i] - f_rho[l]) / dx;
            dmom[i] = -(f_mom[i] - f_mom[l]) / dx + source[i];
        }
        (drho, dmom)
    }

    fn check(&self, time: f64) -> Result<()> {
        for (i, (r, p)) in self.rho.iter().zip(&self.mom).enumerate() {
            if !r.is_finite() || !p.is_finite() {
                return Err(Error::NonFinite { index: i, time });
            }
            if *r < 0.0 {
                return Err(Error::NegativeDensity {
                    cell: i,
                    value: *r,
                    time,
                });
            }
        }
        Ok(())
    }
}

/// One Heun step. Fails if `dt` exceeds [`GridState::max_dt`], or on a
/// negative or non-finite cell.
pub fn grid_step(g: &GridState, kernel: &PeriodicKernel, dt: f64, recon: Reconstruction) -> Result<GridState> {
    if kernel.cells() != g.cells() {
        return Err(Error::LengthMismatch {
            what: "periodic kernel table",
            expected: g.cells(),
            got: kernel.cells(),
        });
    }
    let max = g.max_dt(kernel);
    if !(dt > 0.0) || dt > max * (1.0 + 1e-12) {
        return Err(Error::TimeStep { dt, max });
    }
    let (k1r, k1m) = g.rates(&g.rho, &g.mom, kernel, recon);
    let rho1: Vec<f64> = g.rho.iter().zip(&k1r).map(|(r, k)| r + dt * k).collect();
    let mom1: Vec<f64> = g.mom.iter().zip(&k1m).map(|(p, k)| p + dt * k).collect();
    let (k2r, k2m) = g.rates(&rho1, &mom1, kernel, recon);
    let rho = (0..g.cells())
        .map(|i| 0.5 * (g.rho[i] + rho1[i] + dt * k2r[i]))
        .collect();
    let mom = (0..g.cells())
        .map(|i| 0.5 * (g.mom[i] + mom1[i] + dt * k2m[i]))
        .collect();
    let next = GridState {
        rho,
        mom,
        time: g.time + dt,
        ..g.clone()
    };
    next.check(next.time)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDiagnostics {
    pub time: f64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    pub viscous_dissipation: f64,
    pub alignment_dissipation: f64,
    pub bd_functional: f64,
    pub mv_functional: f64,
    pub second_moment: f64,
}

pub fn grid_diagnostics(g: &GridState, kernel: &PeriodicKernel) -> GridDiagnostics {
    let m = g.cells();
    let dx = g.dx();
    let u = g.velocities();
    let xs = g.centers();
    let mut energy = 0.0;
    let mut visc = 0.0;
    let mut bd = 0.0;
    let mut mv = 0.0;
    let mut second = 0.0;
    for i in 0..m {
        let j = (i + 1) % m;
        energy += 0.5 * g.rho[i] * u[i] * u[i];
        let du = (u[j] - u[i]) / dx;
        visc += 0.5 * (g.rho[i] + g.rho[j]) * du * du;
        let ds = (g.rho[j].sqrt() - g.rho[i].sqrt()) / dx;
        bd += ds * ds;
        mv += g.rho[i] * mv_weight(u[i].abs());
        second += g.rho[i] * xs[i] * xs[i];
    }
    let mut rows = vec![0.0; m];
    rows.par_iter_mut().enumerate().for_each(|(i, out)| {
        let mut acc = 0.0;
        for j in 0..m {
            let d = u[i] - u[j];
            acc += kernel.at(i, j) * g.rho[j] * d * d;
        }
        *out = g.rho[i] * acc;
    });
    GridDiagnostics {
        time: g.time,
        mass: g.mass(),
        momentum: g.momentum(),
        energy: energy * dx,
        viscous_dissipation: g.inv_n * visc * dx,
        alignment_dissipation: 0.5 * rows.iter().sum::<f64>() * dx * dx,
        bd_functional: bd * dx,
        mv_functional: mv * dx,
        second_moment: second * dx,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRunParams {
    pub t_end: f64,
    /// Times at which full snapshots are kept (`t_end` is always included).
    #[serde(default)]
    pub probe_times: Vec<f64>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub reconstruction: Reconstruction,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub snapshots: Vec<GridState>,
    pub diagnostics: Vec<GridDiagnostics>,
    pub steps: usize,
}

/// Advances with the largest admissible step, landing exactly on every probe
/// time and on `t_end`.
pub fn run_grid(initial: &GridState, kernel: &PeriodicKernel, params: &GridRunParams) -> Result<GridRun> {
    if !(params.t_end > 0.0) || !params.t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "t_end must be positive, got {}",
            params.t_end
        )));
    }
    if params.record_every == 0 {
        return Err(Error::InvalidInput("record_every must be at least 1".into()));
    }
    let mut stops: Vec<f64> = params
        .probe_times
        .iter()
        .copied()
        .filter(|t| *t > initial.time && *t < params.t_end)
        .collect();
    stops.push(params.t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut g = initial.clone();
    let mut run = GridRun {
        snapshots: Vec::new(),
        diagnostics: vec![grid_diagnostics(&g, kernel)],
        steps: 0,
    };
    if params.probe_times.contains(&initial.time) {
        run.snapshots.push(g.clone());
    }
    for stop in stops {
        while g.time < stop {
            let remaining = stop - g.time;
            let dt_max = g.max_dt(kernel);
            if !(dt_max > 0.0) {
                return Err(Error::TimeStep {
                    dt: dt_max,
                    max: dt_max,
                });
            }
            let last = remaining <= dt_max;
            let dt = if last { remaining } else { dt_max };
            g = grid_step(&g, kernel, dt, params.reconstruction)?;
            if last {
                g.time = stop;
            }
            run.steps += 1;
            if run.steps % params.record_every == 0 || last {
                run.diagnostics.push(grid_diagnostics(&g, kernel));
            }
        }
        run.snapshots.push(g.clone());
    }
    Ok(run)
}

/// Snapshot CSV: `cell_center, rho, mom, u`.
pub fn write_snapshot_csv<W: Write>(g: &GridState, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(["cell_center", "rho", "mom", "u"])?;
    for ((x, r), (p, u)) in g.centers().iter().zip(&g.rho).zip(g.mom.iter().zip(g.velocities())) {
        wtr.write_record([format_float(*x), format_float(*r), format_float(*p), format_float(u)])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(records: &[GridDiagnostics], writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record([
        "t",
        "mass",
        "momentum",
        "energy",
        "viscous_dissipation",
        "alignment_dissipation",
        "bd_functional",
        "mv_functional",
        "second_moment",
    ])?;
    for r in records {
        wtr.write_record(
            [
                r.time,
                r.mass,
                r.momentum,
                r.energy,
                r.viscous_dissipation,
                r.alignment_dissipation,
                r.bd_functional,
                r.mv_functional,
                r.second_moment,
            ]
            .map(format_float),
        )?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Exact inviscid solution for `K'' ≡ 1` started from the piecewise-constant
/// cell data of `initial` with velocity field `u0`, as cell averages on the
/// same grid.
///
/// Characteristics are `X(t, y) = y + p t + (u0(y) - p)(1 - e^{-t})` with `p`
/// the total momentum. Each cell is split into `sub` slabs whose images are
/// deposited uniformly onto the cells they overlap.
pub fn exact_quadratic_cells(initial: &GridState, u0: impl Fn(f64) -> f64, t: f64, sub: usize) -> Result<GridState> {
    let m = initial.cells();
    let dx = initial.dx();
    let length = initial.length;
    let p = initial.momentum() / initial.mass();
    let decay = (-t).exp();
    let map = |y: f64| y + p * t + (u0(y) - p) * (1.0 - decay);
    let sub_h = dx / sub as f64;
    let mut rho = vec![0.0; m];
    let mut mom = vec![0.0; m];
    let x_lo = -0.5 * length;
    for i in 0..m {
        let a = x_lo + i as f64 * dx;
        let mut left = map(a);
        for s in 0..sub {
            let y0 = a + s as f64 * sub_h;
            let y1 = y0 + sub_h;
            let right = map(y1);
            if !(right > left) {
                return Err(Error::NonMonotone {
                    x: y0,
                    slope: (right - left) / sub_h,
                });
            }
            let mass = initial.rho[i] * sub_h;
            let vel = p + (u0(0.5 * (y0 + y1)) - p) * decay;
            deposit(&mut rho, &mut mom, x_lo, dx, left, right, mass, vel);
            left = right;
        }
    }
    for (r, q) in rho.iter_mut().zip(mom.iter_mut()) {
        *r /= dx;
        *q /= dx;
    }
    Ok(GridState {
        rho,
        mom,
        time: initial.time + t,
        ..initial.clone()
    })
}

/// Spreads `mass` uniformly over `[left, right]` (wrapped onto the torus).
#[allow(clippy::too_many_arguments)]
fn deposit(rho: &mut [f64], mom: &mut [f64], x_lo: f64, dx: f64, left: f64, right: f64, mass: f64, vel: f64) {
    let m = rho.len() as i64;
    let width = right - left;
    let s0 = (left - x_lo) / dx;
    let s1 = (right - x_lo) / dx;
    let mut c = s0.floor() as i64;
    while (c as f64) < s1 {
        let lo = s0.max(c as f64);
        let hi = s1.min(c as f64 + 1.0);
        if hi > lo {
            let share = mass * (hi - lo) * dx / width;
            let idx = c.rem_euclid(m) as usize;
            rho[idx] += share;
            mom[idx] += share * vel;
        }
        c += 1;
    }
}

/// Energy left after merging neighbouring cell pairs into single atoms
/// carrying their combined mass and momentum. Never exceeds the grid energy.
pub fn coarse_grained_energy(g: &GridState) -> f64 {
    let dx = g.dx();
    let u = g.velocities();
    let mut e = 0.0;
    for pair in 0..g.cells() / 2 {
        let (i, j) = (2 * pair, 2 * pair + 1);
        let mass = (g.rho[i] + g.rho[j]) * dx;
        let p = (g.rho[i] * u[i] + g.rho[j] * u[j]) * dx;
        if mass > 0.0 {
            e += 0.5 * p * p / mass;
        }
    }
    e
}

/// What each viscous run is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Exact inviscid solution; requires the quadratic kernel.
    #[default]
    ExactQuadratic,
    /// The run with the largest `N` in the list.
    LargestN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub profile: GridProfile,
    pub length: f64,
    pub cells: usize,
    pub n_list: Vec<u32>,
    pub t_probe: f64,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub reconstruction: Reconstruction,
    #[serde(default)]
    pub rho_floor: Option<f64>,
    /// Sub-slabs per cell when building the exact reference.
    #[serde(default = "default_subdivisions")]
    pub reference_subdivisions: usize,
}

fn default_subdivisions() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: u32,
    pub flat_metric: f64,
    pub w2: f64,
    pub energy: f64,
    /// Grid energy minus the energy of the pairwise coarse-grained
    /// atomization; a proxy for energy hidden in unresolved oscillations.
    pub defect: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub reference: ReferenceKind,
    pub reference_energy: f64,
}

/// Runs the viscous solver at every `N` in `n_list` up to `t_probe` and
/// measures the distance of each result to the reference.
pub fn vanishing_viscosity_study(cfg: &StudyConfig, kernel: &Kernel) -> Result<StudyTable> {
    if cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
        return Err(Error::InvalidInput("n_list must hold positive integers".into()));
    }
    let pk = PeriodicKernel::new(kernel, cfg.length, cfg.cells)?;
    let params = GridRunParams {
        t_end: cfg.t_probe,
        probe_times: Vec::new(),
        record_every: usize::MAX,
        reconstruction: cfg.reconstruction,
    };
    let finals: Vec<Result<(GridState, usize)>> = cfg
        .n_list
        .par_iter()
        .map(|&n| {
            let g0 = init_grid(&cfg.profile, cfg.length, cfg.cells, 1.0 / n as f64, cfg.rho_floor)?;
            let run = run_grid(&g0, &pk, &params).map_err(|e| e.context(format!("N = {n}")))?;
            Ok((run.snapshots.last().cloned().expect("final snapshot"), run.steps))
        })
        .collect();
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;

    let reference = match cfg.reference {
        ReferenceKind::ExactQuadratic => {
            if !matches!(kernel.family(), KernelFamily::Quadratic) {
                return Err(Error::InvalidInput(
                    "the exact reference needs the quadratic kernel".into(),
                ));
            }
            let g0 = init_grid(&cfg.profile, cfg.length, cfg.cells, 0.0, cfg.rho_floor)?;
            let profile = cfg.profile;
            exact_quadratic_cells(
                &g0,
                |x| profile.velocity_at(x),
                cfg.t_probe,
                cfg.reference_subdivisions.max(1),
            )?
        }
        ReferenceKind::LargestN => {
            let idx = (0..cfg.n_list.len()).max_by_key(|&i| cfg.n_list[i]).expect("nonempty");
            finals[idx].0.clone()
        }
    };
    let ref_measure = reference.to_measure()?;
    let ref_energy = grid_diagnostics(&reference, &pk).energy;
    let mut rows = Vec::with_capacity(finals.len());
    for (&n, (g, steps)) in cfg.n_list.iter().zip(&finals) {
        let mu = g.to_measure()?;
        let energy = grid_diagnostics(g, &pk).energy;
        rows.push(StudyRow {
            n,
            flat_metric: crate::measures::flat_metric(&mu, &ref_measure)?.value,
            w2: crate::measures::wasserstein(
                &mu.scaled(1.0 / mu.total_mass())?,
                &ref_measure.scaled(1.0 / ref_measure.total_mass())?,
                2,
            )?
            .value,
            energy,
            defect: energy - coarse_grained_energy(g),
            steps: *steps,
        });
    }
    Ok(StudyTable {
        rows,
        reference: cfg.reference,
        reference_energy: ref_energy,
    })
}

pub fn write_study_csv<W: Write>(table: &StudyTable, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(["N", "flat_metric", "w2", "energy", "defect", "steps"])?;
    for r in &table.rows {
        wtr.write_record([
            r.n.to_string(),
            format_float(r.flat_metric),
            format_float(r.w2),
            format_float(r.energy),
            format_float(r.defect),
            r.steps.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_builtin;

    fn bump() -> GridProfile {
        GridProfile::GaussianBump {
            center: 0.0,
            width: 0.25,
            velocity: VelocityField::Tanh {
                drift: 0.1,
                amplitude: -0.3,
                scale: 0.5,
                center: 0.0,
            },
        }
    }

    #[test]
    fn constant_profile() {
        let g = init_grid(&GridProfile::Constant { velocity: 0.0 }, 4.0, 32, 0.01, None).unwrap();
        assert!(g.rho.iter().all(|r| *r == 0.25));
        assert!(g.mom.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn bump_is_normalized() {
        let g = init_grid(&bump(), 8.0, 256, 0.01, None).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-10);
        assert!(g.rho.iter().all(|r| *r >= g.rho_floor));
    }

    #[test]
    fn two_bumps_have_zero_momentum() {
        let p = GridProfile::TwoBumps {
            separation: 2.0,
            width: 0.3,
            speed: 0.5,
        };
        let g = init_grid(&p, 8.0, 128, 0.01, None).unwrap();
        assert!(g.momentum().abs() < 1e-15);
    }

    #[test]
    fn constant_state_is_stationary() {
        let k = make_builtin("smoothed_norm", &[0.5], 1).unwrap();
        let g = init_grid(&GridProfile::Constant { velocity: 0.7 }, 4.0, 64, 0.05, None).unwrap();
        let pk = PeriodicKernel::new(&k, 4.0, 64).unwrap();
        let dt = g.max_dt(&pk);
        let n = grid_step(&g, &pk, dt, Reconstruction::Minmod).unwrap();
        for i in 0..64 {
            assert!((n.rho[i] - g.rho[i]).abs() <= 1e-13);
            assert!((n.mom[i] - g.mom[i]).abs() <= 1e-13);
        }
    }

    #[test]
    fn step_guard() {
        let pk = PeriodicKernel::zero(64);
        let g = init_grid(&bump(), 8.0, 64, 0.05, None).unwrap();
        let dt = g.max_dt(&pk);
        assert!(matches!(
            grid_step(&g, &pk, 2.0 * dt, Reconstruction::Minmod),
            Err(Error::TimeStep { .. })
        ));
    }

    #[test]
    fn periodic_table_is_symmetric_for_even_kernels() {
        let k = make_builtin("gaussian_bump", &[0.8], 1).unwrap();
        let pk = PeriodicKernel::new(&k, 4.0, 64).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(pk.at(i, j), pk.at(j, i));
            }
        }
        // Image sum: offset 0 collects K''(0) plus the images at ±L, ±2L, ...
        let direct: f64 = (-3i32..=3).map(|n| k.hess_1d(n as f64 * 4.0)).sum();
        assert!((pk.at(0, 0) - direct).abs() < 1e-14);
    }

    #[test]
    fn bd_functional_of_gaussian() {
        // ∫ (d/dx sqrt(rho))² = 1 / (4 w²) for a Gaussian of width w.
        let w = 0.5;
        let p = GridProfile::GaussianBump {
            center: 0.0,
            width: w,
            velocity: VelocityField::Constant { value: 0.0 },
        };
        let exact = 1.0 / (4.0 * w * w);
        let err = |m: usize| {
            let g = init_grid(&p, 10.0, m, 0.0, None).unwrap();
            (grid_diagnostics(&g, &PeriodicKernel::zero(m)).bd_functional - exact).abs()
        };
        let (e1, e2) = (err(256), err(512));
        assert!(e1 < 1e-2 * exact, "{e1}");
        assert!(e2 < 0.3 * e1, "{e1} {e2}");
    }

    #[test]
    fn exact_reference_conserves_mass_and_momentum() {
        let g = init_grid(&bump(), 8.0, 128, 0.0, None).unwrap();
        let p = bump();
        let r = exact_quadratic_cells(&g, |x| p.velocity_at(x), 1.0, 8).unwrap();
        assert!((r.mass() - 1.0).abs() < 1e-12);
        assert!((r.momentum() - g.momentum()).abs() < 1e-12);
        let r0 = exact_quadratic_cells(&g, |x| p.velocity_at(x), 0.0, 8).unwrap();
        for i in 0..128 {
            assert!((r0.rho[i] - g.rho[i]).abs() < 1e-12 * g.rho[i].max(1.0));
        }
    }

    #[test]
    fn coarse_graining_never_adds_energy() {
        let p = GridProfile::TwoBumps {
            separation: 2.0,
            width: 0.3,
            speed: 0.5,
        };
        let g = init_grid(&p, 8.0, 128, 0.01, None).unwrap();
        let e = grid_diagnostics(&g, &PeriodicKernel::zero(128)).energy;
        let c = coarse_grained_energy(&g);
        assert!(c <= e * (1.0 + 1e-14) && c > 0.9 * e);
    }
}
