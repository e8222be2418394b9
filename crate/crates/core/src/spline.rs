//! Clamped cubic spline on a uniform grid, with exact antiderivatives.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UniformSpline {
    x0: f64,
    h: f64,
    // Per-interval coefficients: s(x0 + k h + t) = a + b t + c t^2 + d t^3.
    coef: Vec<[f64; 4]>,
    // Antiderivatives at the knots: first[k] = int_{x0}^{x_k} s,
    // second[k] = int_{x0}^{x_k} (int_{x0}^{y} s).
    first: Vec<f64>,
    second: Vec<f64>,
}

impl UniformSpline {
    /// Builds the spline through `values` sampled at `x0 + k h`. End slopes
    /// come from fourth-order one-sided differences. Needs at least 5 values.
    pub fn new(x0: f64, h: f64, values: &[f64]) -> Self {
        let n = values.len() - 1;
        assert!(n >= 4, "spline needs at least five samples");
        let y = values;
        let slope0 = (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / (12.0 * h);
        let slope_n = (25.0 * y[n] - 48.0 * y[n - 1] + 36.0 * y[n - 2] - 16.0 * y[n - 3] + 3.0 * y[n - 4]) / (12.0 * h);

        // Tridiagonal system for the knot second derivatives m[k].
        let mut sub = vec![1.0; n + 1];
        let mut diag = vec![4.0; n + 1];
        let mut sup = vec![1.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        diag[0] = 2.0;
        sub[0] = 0.0;
        rhs[0] = 6.0 / h * ((y[1] - y[0]) / h - slope0);
        diag[n] = 2.0;
        sup[n] = 0.0;
        rhs[n] = 6.0 / h * (slope_n - (y[n] - y[n - 1]) / h);
        for k in 1..n {
            rhs[k] = 6.0 * (y[k + 1] - 2.0 * y[k] + y[k - 1]) / (h * h);
        }
        // Thomas algorithm.
        for k in 1..=n {
            let w = sub[k] / diag[k - 1];
            diag[k] -= w * sup[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        let mut m = vec![0.0; n + 1];
        m[n] = rhs[n] / diag[n];
        for k in (0..n).rev() {
            m[k] = (rhs[k] - sup[k] * m[k + 1]) / diag[k];
        }

        let mut coef = Vec::with_capacity(n);
        let mut first = vec![0.0; n + 1];
        let mut second = vec![0.0; n + 1];
        for k in 0..n {
            let a = y[k];
            let b = (y[k + 1] - y[k]) / h - h * (2.0 * m[k] + m[k + 1]) / 6.0;
            let c = m[k] / 2.0;
            let d = (m[k + 1] - m[k]) / (6.0 * h);
            coef.push([a, b, c, d]);
            let (i1, i2) = integrals([a, b, c, d], h);
            first[k + 1] = first[k] + i1;
            second[k + 1] = second[k] + first[k] * h + i2;
        }
        UniformSpline {
            x0,
            h,
            coef,
            first,
            second,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * self.coef.len() as f64
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.coef.len();
        let k = ((x - self.x0) / self.h).floor();
        let k = if k < 0.0 { 0 } else { (k as usize).min(n - 1) };
        (k, x - (self.x0 + k as f64 * self.h))
    }

    fn end_values(&self) -> (f64, f64) {
        let [a, b, c, d] = self.coef[self.coef.len() - 1];
        let h = self.h;
        (self.coef[0][0], a + h * (b + h * (c + h * d)))
    }

    /// Spline value, held constant outside the table.
    pub fn value(&self, x: f64) -> f64 {
        if x <= self.x_min() {
            return self.end_values().0;
        }
        if x >= self.x_max() {
            return self.end_values().1;
        }
        let (k, t) = self.locate(x);
        let [a, b, c, d] = self.coef[k];
        a + t * (b + t * (c + t * d))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= self.x_min() || x >= self.x_max() {
            return 0.0;
        }
        let (k, t) = self.locate(x);
        let [_, b, c, d] = self.coef[k];
        b + t * (2.0 * c + 3.0 * t * d)
    }

    /// `int_{x0}^{x} s`, extended linearly with the constant end values.
    pub fn first_integral(&self, x: f64) -> f64 {
        let (left, right) = self.end_values();
        if x <= self.x_min() {
            return left * (x - self.x_min());
        }
        let n = self.coef.len();
        if x >= self.x_max() {
            return self.first[n] + right * (x - self.x_max());
        }
        let (k, t) = self.locate(x);
        self.first[k] + integrals_at(self.coef[k], t).0
    }

    /// `int_{x0}^{x} int_{x0}^{y} s dz dy`, consistent with [`Self::first_integral`].
    pub fn second_integral(&self, x: f64) -> f64 {
        let (left, right) = self.end_values();
        if x <= self.x_min() {
            let t = x - self.x_min();
            return 0.5 * left * t * t;
        }
        let n = self.coef.len();
        if x >= self.x_max() {
            let t = x - self.x_max();
            return self.second[n] + self.first[n] * t + 0.5 * right * t * t;
        }
        let (k, t) = self.locate(x);
        self.second[k] + self.first[k] * t + integrals_at(self.coef[k], t).1
    }

    /// Dense-sampled extrema of `s` and `|s'|`: (min s, max |s|, max |s'|).
    pub fn sampled_bounds(&self, per_interval: usize) -> (f64, f64, f64) {
        let mut min = f64::INFINITY;
        let mut max_abs: f64 = 0.0;
        let mut max_slope: f64 = 0.0;
        for k in 0..self.coef.len() {
            for s in 0..=per_interval {
                let x = self.x0 + self.h * (k as f64 + s as f64 / per_interval as f64);
                let v = self.value(x);
                min = min.min(v);
                max_abs = max_abs.max(v.abs());
                max_slope = max_slope.max(self.derivative(x).abs());
            }
        }
        (min, max_abs, max_slope)
    }
}

fn integrals([a, b, c, d]: [f64; 4], h: f64) -> (f64, f64) {
    integrals_at([a, b, c, d], h)
}

fn integrals_at([a, b, c, d]: [f64; 4], t: f64) -> (f64, f64) {
    let i1 = t * (a + t * (b / 2.0 + t * (c / 3.0 + t * d / 4.0)));
    let i2 = t * t * (a / 2.0 + t * (b / 6.0 + t * (c / 12.0 + t * d / 20.0)));
    (i1, i2)
}
