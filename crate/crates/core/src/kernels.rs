//! Interaction potentials `K` with analytic gradient and Hessian.
//!
//! The alignment force between two atoms is `D²K(x_i - x_j)(u_i - u_j)`, so
//! every kernel carries its Hessian explicitly together with declared
//! structural metadata (evenness, positive semi-definiteness, sup-norm and
//! Lipschitz bounds of `D²K`). [`validate`] checks that metadata by seeded
//! sampling.
//!
//! Hessians are stored row-major in flat `d*d` slices.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;
use crate::rng;
use crate::spline::UniformSpline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelFlags {
    pub even: bool,
    pub psd: bool,
}

/// Tabulated one-dimensional kernel: `K''` sampled on a uniform grid and
/// interpolated by a clamped cubic spline. `K'` and `K` are the exact
/// antiderivatives of the spline, anchored at `K'(0) = K(0) = 0` (or at the
/// left end of the table when 0 lies outside it). Beyond the table `K''` is
/// held at its end value.
#[derive(Debug, Clone, PartialEq)]
pub struct TableKernel {
    values: Vec<f64>,
    spline: UniformSpline,
    anchor: f64,
    first_at_anchor: f64,
    second_at_anchor: f64,
}

impl TableKernel {
    pub fn new(x_min: f64, x_max: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 5 {
            return Err(Error::InvalidKernel(
                "custom_table needs at least 5 samples of K''".into(),
            ));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidKernel(format!(
                "custom_table range [{x_min}, {x_max}] is empty"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("custom_table has non-finite samples".into()));
        }
        let h = (x_max - x_min) / (values.len() - 1) as f64;
        let spline = UniformSpline::new(x_min, h, &values);
        let anchor = if x_min <= 0.0 && 0.0 <= x_max { 0.0 } else { x_min };
        let first_at_anchor = spline.first_integral(anchor);
        let second_at_anchor = spline.second_integral(anchor);
        Ok(TableKernel {
            values,
            spline,
            anchor,
            first_at_anchor,
            second_at_anchor,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.spline.x_min()
    }

    pub fn x_max(&self) -> f64 {
        self.spline.x_max()
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    fn k(&self, x: f64) -> f64 {
        (self.spline.second_integral(x) - self.second_at_anchor) - self.first_at_anchor * (x - self.anchor)
    }

    fn dk(&self, x: f64) -> f64 {
        self.spline.first_integral(x) - self.first_at_anchor
    }

    fn d2k(&self, x: f64) -> f64 {
        self.spline.value(x)
    }

    fn is_symmetric(&self) -> bool {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        (self.x_min() + self.x_max()).abs() <= 1e-12 * self.x_max().abs().max(1.0)
            && self
                .values
                .iter()
                .zip(self.values.iter().rev())
                .all(|(a, b)| (a - b).abs() <= 1e-14 * scale)
    }
}

/// The kernel catalogue.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// `K(x) = |x|²/2`, `D²K = I`.
    Quadratic,
    /// `K(x) = sqrt(eps² + |x|²)`.
    SmoothedNorm { eps: f64 },
    /// `K(x) = -exp(-|x|²/(2 sigma²))`; even but not globally PSD.
    GaussianBump { sigma: f64 },
    /// `K(x) = |x|²/2 + a sin(x_1)`; its Hessian is not even. Used as a
    /// negative control for identities that need an even kernel.
    SkewedQuadratic { a: f64 },
    /// One-dimensional tabulated `K''`.
    CustomTable(TableKernel),
}

/// An interaction potential together with its declared properties.
///
/// The metadata fields are public so tests and scenarios can declare
/// deliberately wrong properties and watch [`validate`] reject them.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    dim: usize,
    /// Declared `sup_x |D²K(x)|` (spectral norm).
    pub hess_sup_norm: f64,
    /// Declared Lipschitz constant of `D²K`.
    pub hess_lipschitz: f64,
    pub flags: KernelFlags,
}

/// JSON addressable kernel description: `{"name": .., "params": {..}, "dim": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    pub dim: usize,
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        let num = |key: &str| -> Result<f64> {
            self.params
                .get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidKernel(format!("{}: missing numeric param {key:?}", self.name)))
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match self.params.keys().find(|k| !keys.contains(&k.as_str())) {
                Some(k) => Err(Error::InvalidKernel(format!("{}: unknown param {k:?}", self.name))),
                None => Ok(()),
            }
        };
        let family = match self.name.as_str() {
            "quadratic" => {
                allow(&[])?;
                KernelFamily::Quadratic
            }
            "smoothed_norm" => {
                allow(&["eps"])?;
                KernelFamily::SmoothedNorm { eps: num("eps")? }
            }
            "gaussian_bump" => {
                allow(&["sigma"])?;
                KernelFamily::GaussianBump { sigma: num("sigma")? }
            }
            "skewed_quadratic" => {
                allow(&["a"])?;
                KernelFamily::SkewedQuadratic { a: num("a")? }
            }
            "custom_table" => {
                allow(&["x_min", "x_max", "values"])?;
                let values = self
                    .params
                    .get("values")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::InvalidKernel("custom_table: missing \"values\"".into()))?
                    .iter()
                    .map(|v| {
                        v.as_f64()
                            .ok_or_else(|| Error::InvalidKernel("custom_table: non-numeric sample".into()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                KernelFamily::CustomTable(TableKernel::new(num("x_min")?, num("x_max")?, values)?)
            }
            other => return Err(Error::InvalidKernel(format!("unknown kernel {other:?}"))),
        };
        Kernel::new(family, self.dim)
    }
}

/// Builds a catalogue kernel from a flat parameter list:
/// `quadratic []`, `smoothed_norm [eps]`, `gaussian_bump [sigma]`,
/// `skewed_quadratic [a]`, `custom_table [x_min, x_max, v_0, v_1, ...]`.
pub fn make_builtin(name: &str, params: &[f64], dim: usize) -> Result<Kernel> {
    let expect = |n: usize| -> Result<()> {
        if params.len() == n {
            Ok(())
        } else {
            Err(Error::InvalidKernel(format!(
                "{name}: expected {n} params, got {}",
                params.len()
            )))
        }
    };
    let family = match name {
        "quadratic" => {
            expect(0)?;
            KernelFamily::Quadratic
        }
        "smoothed_norm" => {
            expect(1)?;
            KernelFamily::SmoothedNorm { eps: params[0] }
        }
        "gaussian_bump" => {
            expect(1)?;
            KernelFamily::GaussianBump { sigma: params[0] }
        }
        "skewed_quadratic" => {
            expect(1)?;
            KernelFamily::SkewedQuadratic { a: params[0] }
        }
        "custom_table" => {
            if params.len() < 2 {
                return Err(Error::InvalidKernel("custom_table: missing range".into()));
            }
            KernelFamily::CustomTable(TableKernel::new(params[0], params[1], params[2..].to_vec())?)
        }
        other => return Err(Error::InvalidKernel(format!("unknown kernel {other:?}"))),
    };
    Kernel::new(family, dim)
}

impl Kernel {
    /// Builds a kernel with truthful metadata for its family.
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidKernel("dimension must be at least 1".into()));
        }
        let (hess_sup_norm, hess_lipschitz, flags) = match &family {
            KernelFamily::Quadratic => (1.0, 0.0, KernelFlags { even: true, psd: true }),
            KernelFamily::SmoothedNorm { eps } => {
                if !(*eps > 0.0 && eps.is_finite()) {
                    return Err(Error::InvalidKernel(format!(
                        "smoothed_norm: eps = {eps} must be positive"
                    )));
                }
                // Third-derivative bounds: exact in 1D, a tensor-norm bound otherwise.
                let lip = if dim == 1 { 0.858_650_2 } else { 1.6 };
                (1.0 / eps, lip / (eps * eps), KernelFlags { even: true, psd: true })
            }
            KernelFamily::GaussianBump { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidKernel(format!(
                        "gaussian_bump: sigma = {sigma} must be positive"
                    )));
                }
                let lip = if dim == 1 { 1.380_6 } else { 2.62 };
                (
                    1.0 / (sigma * sigma),
                    lip / sigma.powi(3),
                    KernelFlags { even: true, psd: false },
                )
            }
            KernelFamily::SkewedQuadratic { a } => {
                if !a.is_finite() {
                    return Err(Error::InvalidKernel("skewed_quadratic: a must be finite".into()));
                }
                (
                    1.0 + a.abs(),
                    a.abs(),
                    KernelFlags {
                        even: *a == 0.0,
                        psd: a.abs() <= 1.0,
                    },
                )
            }
            KernelFamily::CustomTable(table) => {
                if dim != 1 {
                    return Err(Error::InvalidKernel("custom_table kernels are one-dimensional".into()));
                }
                let (min, max_abs, max_slope) = table.spline.sampled_bounds(16);
                (
                    max_abs * (1.0 + 1e-9),
                    max_slope * (1.0 + 1e-9),
                    KernelFlags {
                        even: table.is_symmetric(),
                        psd: min >= -1e-12,
                    },
                )
            }
        };
        Ok(Kernel {
            family,
            dim,
            hess_sup_norm,
            hess_lipschitz,
            flags,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Quadratic => "quadratic",
            KernelFamily::SmoothedNorm { .. } => "smoothed_norm",
            KernelFamily::GaussianBump { .. } => "gaussian_bump",
            KernelFamily::SkewedQuadratic { .. } => "skewed_quadratic",
            KernelFamily::CustomTable(_) => "custom_table",
        }
    }

    pub fn spec(&self) -> KernelSpec {
        let mut params = Map::new();
        match &self.family {
            KernelFamily::Quadratic => {}
            KernelFamily::SmoothedNorm { eps } => {
                params.insert("eps".into(), (*eps).into());
            }
            KernelFamily::GaussianBump { sigma } => {
                params.insert("sigma".into(), (*sigma).into());
            }
            KernelFamily::SkewedQuadratic { a } => {
                params.insert("a".into(), (*a).into());
            }
            KernelFamily::CustomTable(t) => {
                params.insert("x_min".into(), t.x_min().into());
                params.insert("x_max".into(), t.x_max().into());
                params.insert("values".into(), t.values.clone().into());
            }
        }
        KernelSpec {
            name: self.name().into(),
            params,
            dim: self.dim,
        }
    }

    /// `C` in the growth bound `|grad K(x)| <= C (1 + |x|)`.
    pub fn growth_constant(&self) -> f64 {
        norm(&self.grad(&vec![0.0; self.dim])).max(self.hess_sup_norm)
    }

    /// `K(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let r2 = dot(x, x);
        match &self.family {
            KernelFamily::Quadratic => 0.5 * r2,
            KernelFamily::SmoothedNorm { eps } => (eps * eps + r2).sqrt(),
            KernelFamily::GaussianBump { sigma } => -(-r2 / (2.0 * sigma * sigma)).exp(),
            KernelFamily::SkewedQuadratic { a } => 0.5 * r2 + a * x[0].sin(),
            KernelFamily::CustomTable(t) => t.k(x[0]),
        }
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        match &self.family {
            KernelFamily::Quadratic => out.copy_from_slice(x),
            KernelFamily::SmoothedNorm { eps } => {
                let s = (eps * eps + dot(x, x)).sqrt();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi / s;
                }
            }
            KernelFamily::GaussianBump { sigma } => {
                let s2 = sigma * sigma;
                let g = (-dot(x, x) / (2.0 * s2)).exp() / s2;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = g * xi;
                }
            }
            KernelFamily::SkewedQuadratic { a } => {
                out.copy_from_slice(x);
                out[0] += a * x[0].cos();
            }
            KernelFamily::CustomTable(t) => out[0] = t.dk(x[0]),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.grad_into(x, &mut out);
        out
    }

    /// Writes `D²K(x)` row-major into `out` (length `d*d`).
    pub fn hess_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d * d);
        match &self.family {
            KernelFamily::Quadratic => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = 1.0;
                }
            }
            KernelFamily::SmoothedNorm { eps } => {
                let s2 = eps * eps + dot(x, x);
                let s = s2.sqrt();
                let inv_s = 1.0 / s;
                let inv_s3 = inv_s / s2;
                for i in 0..d {
                    for j in 0..d {
                        let id = if i == j { inv_s } else { 0.0 };
                        out[i * d + j] = id - x[i] * x[j] * inv_s3;
                    }
                }
            }
            KernelFamily::GaussianBump { sigma } => {
                let s2 = sigma * sigma;
                let e = (-dot(x, x) / (2.0 * s2)).exp();
                for i in 0..d {
                    for j in 0..d {
                        let id = if i == j { 1.0 / s2 } else { 0.0 };
                        out[i * d + j] = e * (id - x[i] * x[j] / (s2 * s2));
                    }
                }
            }
            KernelFamily::SkewedQuadratic { a } => {
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = 1.0;
                }
                out[0] -= a * x[0].sin();
            }
            KernelFamily::CustomTable(t) => out[0] = t.d2k(x[0]),
        }
    }

    pub fn hess(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.hess_into(x, &mut out);
        out
    }

    /// `K''(x)` for one-dimensional kernels.
    pub fn hess_1d(&self, x: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        let mut out = [0.0];
        self.hess_into(&[x], &mut out);
        out[0]
    }

    /// Largest time step the explicit particle integrators accept:
    /// `0.5 / sup|D²K|`.
    pub fn max_time_step(&self) -> f64 {
        if self.hess_sup_norm > 0.0 {
            0.5 / self.hess_sup_norm
        } else {
            f64::INFINITY
        }
    }
}

/// `sum_j w_j grad K(x - x_j)`, summed in support order.
pub fn conv_grad(k: &Kernel, mu: &AtomicMeasure, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(k.dim, mu.dim())?;
    check_dim(k.dim, x.len())?;
    let d = k.dim;
    let mut out = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut diff = vec![0.0; d];
    for (p, &w) in mu.points().zip(mu.weights()) {
        sub_into(x, p, &mut diff);
        k.grad_into(&diff, &mut g);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += w * gi;
        }
    }
    Ok(out)
}

/// `sum_j w_j D²K(x - x_j)(u_x - u_j)`: the alignment force density at
/// `(x, u_x)`. `vel` holds one `d`-vector per atom, flattened.
pub fn conv_hess_pair(k: &Kernel, mu: &AtomicMeasure, vel: &[f64], x: &[f64], u_x: &[f64]) -> Result<Vec<f64>> {
    check_dim(k.dim, mu.dim())?;
    check_dim(k.dim, x.len())?;
    check_dim(k.dim, u_x.len())?;
    let d = k.dim;
    if vel.len() != mu.len() * d {
        return Err(Error::LengthMismatch {
            what: "velocity field",
            expected: mu.len() * d,
            got: vel.len(),
        });
    }
    let mut out = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    let mut diff = vec![0.0; d];
    for (j, (p, &w)) in mu.points().zip(mu.weights()).enumerate() {
        sub_into(x, p, &mut diff);
        k.hess_into(&diff, &mut h);
        let uj = &vel[j * d..(j + 1) * d];
        for a in 0..d {
            let mut acc = 0.0;
            for b in 0..d {
                acc += h[a * d + b] * (u_x[b] - uj[b]);
            }
            out[a] += w * acc;
        }
    }
    Ok(out)
}

/// Axis-aligned sampling region for [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        SampleBox {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: String,
    pub passed: bool,
    /// Largest observed excess over the property's tolerance (0 when passing).
    pub worst_violation: f64,
    /// Largest raw defect observed, before subtracting the tolerance.
    pub worst_defect: f64,
    /// Sample point where the worst violation occurred.
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kernel: String,
    pub n_samples: usize,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, property: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.property == property)
    }
}

struct Tracker {
    property: &'static str,
    worst_violation: f64,
    worst_defect: f64,
    witness: Option<Vec<f64>>,
}

impl Tracker {
    fn new(property: &'static str) -> Self {
        Tracker {
            property,
            worst_violation: 0.0,
            worst_defect: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, defect: f64, tolerance: f64, x: &[f64]) {
        let defect = if defect.is_nan() { f64::INFINITY } else { defect };
        self.worst_defect = self.worst_defect.max(defect);
        let excess = (defect - tolerance).max(0.0);
        if excess > self.worst_violation {
            self.worst_violation = excess;
            self.witness = Some(x.to_vec());
        }
    }

    fn finish(self) -> PropertyCheck {
        PropertyCheck {
            property: self.property.into(),
            passed: self.worst_violation == 0.0,
            worst_violation: self.worst_violation,
            worst_defect: self.worst_defect,
            witness: self.witness,
        }
    }
}

/// Finite-difference step used by the Hessian consistency check.
pub const FD_STEP: f64 = 1e-4;
/// Tolerance of the Hessian consistency check, scaled by `max(1, sup|D²K|)`.
pub const FD_TOLERANCE: f64 = 1e-6;

/// Seeded Monte-Carlo check of the declared kernel properties.
///
/// Properties: `symmetric`, `even` (when declared), `psd` (when declared),
/// `fd_hessian`, `sup_norm`, `linear_growth`. Failures are report entries,
/// never errors.
pub fn validate(k: &Kernel, sample_box: &SampleBox, n_samples: usize, seed: u64) -> ValidationReport {
    let d = k.dim;
    let mut rng = rng::generator(seed);
    let mut symmetric = Tracker::new("symmetric");
    let mut even = Tracker::new("even");
    let mut psd = Tracker::new("psd");
    let mut fd = Tracker::new("fd_hessian");
    let mut sup = Tracker::new("sup_norm");
    let mut growth = Tracker::new("linear_growth");
    let growth_c = k.growth_constant();
    let fd_tol = FD_TOLERANCE * k.hess_sup_norm.max(1.0);

    let mut x = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    let mut h_neg = vec![0.0; d * d];
    let mut g_plus = vec![0.0; d];
    let mut g_minus = vec![0.0; d];
    for _ in 0..n_samples {
        for (i, xi) in x.iter_mut().enumerate() {
            let lo = sample_box.lo.get(i).copied().unwrap_or(-1.0);
            let hi = sample_box.hi.get(i).copied().unwrap_or(1.0);
            *xi = rng::uniform(&mut rng, lo, hi);
        }
        k.hess_into(&x, &mut h);
        let h_norm = frobenius(&h);

        let mut asym: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                asym += (h[i * d + j] - h[j * d + i]).powi(2);
            }
        }
        symmetric.record(asym.sqrt(), 1e-12 * h_norm, &x);

        if k.flags.even {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            k.hess_into(&neg, &mut h_neg);
            let diff: f64 = h.iter().zip(&h_neg).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            even.record(diff, 1e-12 * (1.0 + h_norm), &x);
        }

        let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (h[i * d + j] + h[j * d + i]));
        let eig = SymmetricEigen::new(sym).eigenvalues;
        let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let spectral = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if k.flags.psd {
            psd.record(-min_eig, 1e-10, &x);
        }
        sup.record(spectral - k.hess_sup_norm, 1e-10, &x);

        // Column j of the Hessian from central differences of the gradient.
        let mut fd_err: f64 = 0.0;
        let mut xp = x.clone();
        for j in 0..d {
            xp[j] = x[j] + FD_STEP;
            k.grad_into(&xp, &mut g_plus);
            xp[j] = x[j] - FD_STEP;
            k.grad_into(&xp, &mut g_minus);
            xp[j] = x[j];
            for i in 0..d {
                let approx = (g_plus[i] - g_minus[i]) / (2.0 * FD_STEP);
                fd_err = fd_err.max((approx - h[i * d + j]).abs());
            }
        }
        fd.record(fd_err, fd_tol, &x);

        let g = k.grad(&x);
        growth.record(norm(&g) - growth_c * (1.0 + norm(&x)), 1e-10, &x);
    }

    let mut checks = vec![symmetric.finish()];
    if k.flags.even {
        checks.push(even.finish());
    }
    if k.flags.psd {
        checks.push(psd.finish());
    }
    checks.push(fd.finish());
    checks.push(sup.finish());
    checks.push(growth.finish());
    ValidationReport {
        kernel: k.name().into(),
        n_samples,
        seed,
        checks,
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn frobenius(a: &[f64]) -> f64 {
    norm(a)
}

pub(crate) fn sub_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x - y;
    }
}
