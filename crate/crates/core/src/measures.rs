//! Finitely supported Radon measures and distances between them.
//!
//! The flat (bounded-Lipschitz) metric is
//! `sup { ∫ φ d(μ - ν) : |φ| <= 1, Lip(φ) <= 1 }`. For atomic measures the
//! supremum reduces to a finite linear program over node values `φ_i` on the
//! merged support: any feasible node assignment extends to a 1-Lipschitz
//! function on R^d bounded by 1 (McShane extension clipped to [-1, 1]), and
//! mollification brings it into C¹ with arbitrarily small loss. We solve that
//! program through its dual, a balanced transportation problem in which the
//! positive part of `μ - ν` ships to the negative part at cost `|x - y|`, or
//! to/from an auxiliary ground node at cost 1 per unit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport;

/// Atoms closer than this are merged by [`AtomicMeasure::canonicalize`].
pub const MERGE_TOLERANCE: f64 = 1e-12;
/// Largest merged support the flat metric accepts.
pub const FLAT_METRIC_MAX_SUPPORT: usize = 512;
/// Largest `n * m` the exact Wasserstein LP accepts.
pub const WASSERSTEIN_MAX_CELLS: usize = 65_536;
/// Tolerance on total mass for probability measures.
pub const PROBABILITY_TOLERANCE: f64 = 1e-10;

/// A weighted point cloud `sum_i w_i δ_{x_i}` with nonnegative weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureFile", into = "MeasureFile")]
pub struct AtomicMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureFile {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureFile> for AtomicMeasure {
    type Error = Error;

    fn try_from(f: MeasureFile) -> Result<Self> {
        AtomicMeasure::new(f.dim, f.points, f.weights)
    }
}

impl From<AtomicMeasure> for MeasureFile {
    fn from(m: AtomicMeasure) -> Self {
        MeasureFile {
            dim: m.dim,
            points: m.points().map(<[f64]>::to_vec).collect(),
            weights: m.weights,
        }
    }
}

impl AtomicMeasure {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    /// Builds a measure from row-major coordinates (`len * dim` values).
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::LengthMismatch {
                what: "measure coordinates",
                expected: weights.len() * dim,
                got: coords.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "weight {w} is not a finite nonnegative number"
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        Ok(AtomicMeasure { dim, coords, weights })
    }

    pub fn empty(dim: usize) -> Self {
        AtomicMeasure {
            dim,
            coords: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Unit point mass.
    pub fn dirac(point: Vec<f64>) -> Self {
        AtomicMeasure {
            dim: point.len(),
            coords: point,
            weights: vec![1.0],
        }
    }

    /// Equal-weight probability measure on one-dimensional points.
    pub fn uniform_1d(points: &[f64]) -> Self {
        let w = 1.0 / points.len() as f64;
        AtomicMeasure {
            dim: 1,
            coords: points.to_vec(),
            weights: vec![w; points.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOLERANCE
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_flat(
            self.dim,
            self.coords.clone(),
            self.weights.iter().map(|w| w * c).collect(),
        )
    }

    /// Merges atoms within [`MERGE_TOLERANCE`] of each other (summing their
    /// weights) and orders the support lexicographically.
    pub fn canonicalize(&self) -> Self {
        let (coords, weights) = merge_atoms(self.dim, self.points().zip(self.weights.iter().copied()));
        AtomicMeasure {
            dim: self.dim,
            coords,
            weights,
        }
    }

    /// Reads the CSV form: header `x0,..,x{d-1},weight`, one row per atom.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let dim = headers.len().saturating_sub(1);
        if dim == 0 || &headers[dim] != "weight" {
            return Err(Error::InvalidMeasure("csv header must be x0,..,x{d-1},weight".into()));
        }
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidMeasure(format!("row {}: column {col} is not a number", row + 2)))?;
                if col < dim {
                    coords.push(v);
                } else {
                    weights.push(v);
                }
            }
        }
        Self::from_flat(dim, coords, weights)
    }

    pub fn to_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        wtr.write_record(&header)?;
        for (p, w) in self.points().zip(&self.weights) {
            let mut row: Vec<String> = p.iter().map(|v| format_float(*v)).collect();
            row.push(format_float(*w));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Order-independent merge of weighted atoms: sort lexicographically, then
/// fold each atom into an earlier representative within tolerance.
fn merge_atoms<'a>(dim: usize, atoms: impl Iterator<Item = (&'a [f64], f64)>) -> (Vec<f64>, Vec<f64>) {
    let mut items: Vec<(&[f64], f64)> = atoms.collect();
    items.sort_by(|a, b| {
        a.0.iter()
            .zip(b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut coords: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (p, w) in items {
        let mut target = None;
        for k in (0..weights.len()).rev() {
            let q = &coords[k * dim..(k + 1) * dim];
            if p[0] - q[0] > MERGE_TOLERANCE {
                break;
            }
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2.sqrt() <= MERGE_TOLERANCE {
                target = Some(k);
                break;
            }
        }
        match target {
            Some(k) => weights[k] += w,
            None => {
                coords.extend_from_slice(p);
                weights.push(w);
            }
        }
    }
    (coords, weights)
}

/// Signed node masses of `μ - ν` on the merged canonical support.
fn signed_difference(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<(Vec<f64>, Vec<f64>)> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch {
            expected: mu.dim,
            got: nu.dim,
        });
    }
    let atoms = mu
        .points()
        .zip(mu.weights.iter().copied())
        .chain(nu.points().zip(nu.weights.iter().map(|w| -w)));
    Ok(merge_atoms(mu.dim, atoms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMethod {
    Quantile1d,
    LpExact,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpStatus {
    pub iterations: usize,
    pub optimality_gap: f64,
    /// Flat metric only: whether the `|φ| <= 1` bound is active, i.e. some
    /// mass is created or destroyed instead of transported.
    pub bound_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub value: f64,
    pub method: MetricMethod,
    pub lp_status: Option<LpStatus>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Flat metric between two atomic measures (masses need not match).
pub fn flat_metric(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<MetricReport> {
    let (coords, signed) = signed_difference(mu, nu)?;
    let dim = mu.dim;
    if signed.len() > FLAT_METRIC_MAX_SUPPORT {
        return Err(Error::SupportTooLarge {
            size: signed.len(),
            limit: FLAT_METRIC_MAX_SUPPORT,
        });
    }
    let pos: Vec<usize> = (0..signed.len()).filter(|&i| signed[i] > 0.0).collect();
    let neg: Vec<usize> = (0..signed.len()).filter(|&i| signed[i] < 0.0).collect();
    if pos.is_empty() && neg.is_empty() {
        return Ok(MetricReport {
            value: 0.0,
            method: MetricMethod::LpExact,
            lp_status: Some(LpStatus {
                iterations: 0,
                optimality_gap: 0.0,
                bound_active: false,
            }),
        });
    }
    let point = |i: usize| &coords[i * dim..(i + 1) * dim];
    let total_pos: f64 = pos.iter().map(|&i| signed[i]).sum();
    let total_neg: f64 = neg.iter().map(|&i| -signed[i]).sum();

    // Rows: positive nodes + ground; columns: negative nodes + ground.
    let mut supply: Vec<f64> = pos.iter().map(|&i| signed[i]).collect();
    supply.push(total_neg);
    let mut demand: Vec<f64> = neg.iter().map(|&j| -signed[j]).collect();
    demand.push(total_pos);
    let rows = supply.len();
    let cols = demand.len();
    let mut cost = vec![0.0; rows * cols];
    for (r, &i) in pos.iter().enumerate() {
        for (c, &j) in neg.iter().enumerate() {
            cost[r * cols + c] = euclid(point(i), point(j));
        }
        cost[r * cols + cols - 1] = 1.0;
    }
    for c in 0..cols - 1 {
        cost[(rows - 1) * cols + c] = 1.0;
    }
    cost[rows * cols - 1] = 0.0;

    let sol = transport::solve(&supply, &demand, &cost)?;
    let ground_flow: f64 = sol
        .flows
        .iter()
        .filter(|&&(r, c, _)| (r == rows - 1) != (c == cols - 1))
        .map(|&(_, _, f)| f)
        .sum();
    let scale = total_pos + total_neg;
    Ok(MetricReport {
        value: sol.cost.max(0.0),
        method: MetricMethod::LpExact,
        lp_status: Some(LpStatus {
            iterations: sol.iterations,
            optimality_gap: sol.optimality_gap(),
            bound_active: ground_flow > 1e-12 * scale,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WassersteinMethod {
    /// Quantile coupling in 1D, exact LP otherwise.
    Auto,
    /// Force the exact transportation LP in any dimension.
    Lp,
}

/// Exact Wasserstein-p distance (`p` in {1, 2}) between probability measures.
pub fn wasserstein(mu: &AtomicMeasure, nu: &AtomicMeasure, p: u32) -> Result<MetricReport> {
    wasserstein_with(mu, nu, p, WassersteinMethod::Auto)
}

pub fn wasserstein_with(
    mu: &AtomicMeasure,
    nu: &AtomicMeasure,
    p: u32,
    method: WassersteinMethod,
) -> Result<MetricReport> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch {
            expected: mu.dim,
            got: nu.dim,
        });
    }
    if p != 1 && p != 2 {
        return Err(Error::InvalidInput(format!("Wasserstein order {p} not supported")));
    }
    for (name, m) in [("first", mu), ("second", nu)] {
        if !m.is_probability() {
            return Err(Error::InvalidMeasure(format!(
                "{name} argument has total mass {}, expected a probability measure",
                m.total_mass()
            )));
        }
    }
    if mu.dim == 1 && method == WassersteinMethod::Auto {
        return Ok(MetricReport {
            value: quantile_wasserstein(mu, nu, p),
            method: MetricMethod::Quantile1d,
            lp_status: None,
        });
    }
    let (n, m) = (mu.len(), nu.len());
    if n * m > WASSERSTEIN_MAX_CELLS {
        return Err(Error::SupportTooLarge {
            size: n * m,
            limit: WASSERSTEIN_MAX_CELLS,
        });
    }
    let mut cost = Vec::with_capacity(n * m);
    for x in mu.points() {
        for y in nu.points() {
            let d = euclid(x, y);
            cost.push(if p == 1 { d } else { d * d });
        }
    }
    let sol = transport::solve(&mu.weights, &nu.weights, &cost)?;
    let value = sol.cost.max(0.0);
    Ok(MetricReport {
        value: if p == 1 { value } else { value.sqrt() },
        method: MetricMethod::LpExact,
        lp_status: Some(LpStatus {
            iterations: sol.iterations,
            optimality_gap: sol.optimality_gap(),
            bound_active: false,
        }),
    })
}

/// `W_p` on the line through the monotone (quantile) coupling.
fn quantile_wasserstein(mu: &AtomicMeasure, nu: &AtomicMeasure, p: u32) -> f64 {
    let sorted = |m: &AtomicMeasure| {
        let total = m.total_mass();
        let mut atoms: Vec<(f64, f64)> = m.coords.iter().zip(&m.weights).map(|(&x, &w)| (x, w / total)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    };
    let a = sorted(mu);
    let b = sorted(nu);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let q = ra.min(rb);
        let d = (a[i].0 - b[j].0).abs();
        acc += q * if p == 1 { d } else { d * d };
        ra -= q;
        rb -= q;
        // Advance whichever side is exhausted; ties advance both.
        let adv_a = ra <= rb;
        let adv_b = rb <= ra;
        if adv_a {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if adv_b {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    if p == 1 {
        acc
    } else {
        acc.sqrt()
    }
}

/// `||μ - ν||_TV` on the merged canonical support.
pub fn total_variation(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    let (_, signed) = signed_difference(mu, nu)?;
    Ok(signed.iter().map(|c| c.abs()).sum())
}

/// `|| |x|² (μ - ν) ||_TV` on the merged canonical support.
pub fn total_variation_second_moment(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    let (coords, signed) = signed_difference(mu, nu)?;
    Ok(coords
        .chunks_exact(mu.dim)
        .zip(&signed)
        .map(|(x, c)| x.iter().map(|v| v * v).sum::<f64>() * c.abs())
        .sum())
}

/// `sum_i w_i |x_i|^order`, or `sum_i w_i |x_i| |v_i|` when a per-atom vector
/// field `v` (flattened) is supplied.
pub fn moment(mu: &AtomicMeasure, order: u32, weight_field: Option<&[f64]>) -> Result<f64> {
    if order != 1 && order != 2 {
        return Err(Error::InvalidInput(format!("moment order {order} not supported")));
    }
    let d = mu.dim;
    if let Some(v) = weight_field {
        if v.len() != mu.len() * d {
            return Err(Error::LengthMismatch {
                what: "weight field",
                expected: mu.len() * d,
                got: v.len(),
            });
        }
        return Ok(mu
            .points()
            .zip(&mu.weights)
            .zip(v.chunks_exact(d))
            .map(|((x, w), vi)| w * norm(x) * norm(vi))
            .sum());
    }
    Ok(mu
        .points()
        .zip(&mu.weights)
        .map(|(x, w)| {
            let r = norm(x);
            w * if order == 1 { r } else { r * r }
        })
        .sum())
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(points: &[f64], weights: &[f64]) -> AtomicMeasure {
        AtomicMeasure::from_flat(1, points.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn invariants_enforced() {
        assert!(AtomicMeasure::new(2, vec![vec![0.0]], vec![1.0]).is_err());
        assert!(AtomicMeasure::new(1, vec![vec![0.0]], vec![-1.0]).is_err());
        assert!(AtomicMeasure::from_flat(1, vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn canonicalize_merges_close_atoms() {
        let m = m1(&[1.0, 0.0, 1.0 + 1e-13, 0.5], &[0.25, 0.25, 0.25, 0.25]);
        let c = m.canonicalize();
        assert_eq!(c.coords(), &[0.0, 0.5, 1.0]);
        assert_eq!(c.weights(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn flat_metric_examples() {
        let mu = m1(&[0.0, 1.0, 2.5], &[0.2, 0.3, 0.5]);
        assert_eq!(flat_metric(&mu, &mu).unwrap().value, 0.0);
        let d0 = AtomicMeasure::dirac(vec![0.0, 0.0]);
        let half = AtomicMeasure::dirac(vec![0.3, 0.4]);
        let far = AtomicMeasure::dirac(vec![0.0, 7.0]);
        assert!((flat_metric(&d0, &half).unwrap().value - 0.5).abs() < 1e-15);
        let r = flat_metric(&d0, &far).unwrap();
        assert!((r.value - 2.0).abs() < 1e-15);
        assert!(r.lp_status.unwrap().bound_active);
        let two = m1(&[0.0], &[2.0]);
        let one = m1(&[0.0], &[1.0]);
        assert!((flat_metric(&two, &one).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flat_metric_support_cap() {
        let a: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..300).map(|i| i as f64 + 0.5).collect();
        let err = flat_metric(&AtomicMeasure::uniform_1d(&a), &AtomicMeasure::uniform_1d(&b));
        assert!(matches!(err, Err(Error::SupportTooLarge { size: 600, .. })));
    }

    #[test]
    fn wasserstein_examples() {
        let x = AtomicMeasure::dirac(vec![1.0, 2.0]);
        let y = AtomicMeasure::dirac(vec![4.0, 6.0]);
        assert!((wasserstein(&x, &y, 2).unwrap().value - 5.0).abs() < 1e-14);
        let a = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let b = m1(&[0.0, 2.0], &[0.5, 0.5]);
        let w = wasserstein(&a, &b, 2).unwrap();
        assert_eq!(w.method, MetricMethod::Quantile1d);
        assert!((w.value - 0.5f64.sqrt()).abs() < 1e-15);
        let lp = wasserstein_with(&a, &b, 2, WassersteinMethod::Lp).unwrap();
        assert!((lp.value - w.value).abs() < 1e-14);
        assert!(wasserstein(&m1(&[0.0], &[2.0]), &a, 1).is_err());
    }

    #[test]
    fn total_variation_examples() {
        let a = m1(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(total_variation(&a, &a).unwrap(), 0.0);
        let d0 = m1(&[0.0], &[1.0]);
        let d1 = m1(&[1.0], &[1.0]);
        assert_eq!(total_variation(&d0, &d1).unwrap(), 2.0);
        let b = m1(&[0.0, 1.0], &[0.25, 0.75]);
        assert!((total_variation(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moment_examples() {
        let d = AtomicMeasure::dirac(vec![0.0]);
        assert_eq!(moment(&d, 1, None).unwrap(), 0.0);
        assert_eq!(moment(&d, 2, None).unwrap(), 0.0);
        let s = m1(&[-2.0, 2.0], &[0.5, 0.5]);
        assert_eq!(moment(&s, 2, None).unwrap(), 4.0);
        let x3 = AtomicMeasure::dirac(vec![3.0]);
        assert_eq!(moment(&x3, 1, Some(&[-2.0])).unwrap(), 6.0);
        assert!(moment(&x3, 1, Some(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn json_and_csv_forms() {
        let m = AtomicMeasure::new(2, vec![vec![0.1, -3.0], vec![1e-300, 2.5]], vec![0.3, 0.7]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"{"dim":2,"points":[[0.1,-3.0],[1e-300,2.5]],"weights":[0.3,0.7]}"#
        );
        let mut buf = Vec::new();
        m.to_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "x0,x1,weight\n0.1,-3.0,0.3\n1e-300,2.5,0.7\n"
        );
        assert_eq!(AtomicMeasure::from_csv(&buf[..]).unwrap(), m);
        let bad: std::result::Result<AtomicMeasure, _> =
            serde_json::from_str(r#"{"dim":1,"points":[[0.0]],"weights":[-1.0]}"#);
        assert!(bad.is_err());
    }
}
