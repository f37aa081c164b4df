//! Radial ODE engine: adaptive Dormand–Prince 5(4) with dense output,
//! Hermite-interpolated radial profiles, zero counting, log-periodic fits
//! and Gaussian-weighted norms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at r = {at:e}")]
    StepUnderflow { at: f64 },
    #[error("non-finite solution at r = {at:e}")]
    NonFinite { at: f64 },
    #[error("step budget exhausted at r = {at:e}")]
    TooManySteps { at: f64 },
    #[error("invalid span [{a:e}, {b:e}]")]
    BadSpan { a: f64, b: f64 },
    #[error("ambiguous sign change near r = {at:e} (grazing below floor)")]
    Ambiguous { at: f64 },
    #[error("degenerate window: {0}")]
    Degenerate(String),
    #[error("tail not covered: weighted tail {tail:e} vs norm {norm:e}")]
    TailNotCovered { tail: f64, norm: f64 },
    #[error("malformed radial csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy)]
pub struct Options<T> {
    pub rtol: T,
    pub atol: T,
    pub h0: Option<T>,
    pub hmax: Option<T>,
    /// Cap on `h / |x|`, for problems oscillating in `log x`.
    pub hrel: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> Options<T> {
    pub fn tol(tol: T) -> Self {
        Options { rtol: tol, atol: tol * T::lit(1e-3), h0: None, hmax: None, hrel: None, max_steps: 2_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone)]
struct DenseStep<T, const N: usize> {
    x0: T,
    h: T,
    r: [[T; N]; 5],
}

/// Accepted steps of an integration together with the continuous extension.
#[derive(Debug, Clone)]
pub struct OdeSolution<T, const N: usize> {
    pub xs: Vec<T>,
    pub ys: Vec<[T; N]>,
    pub dys: Vec<[T; N]>,
    steps: Vec<DenseStep<T, N>>,
}

impl<T: Real, const N: usize> OdeSolution<T, N> {
    pub fn last(&self) -> [T; N] {
        *self.ys.last().unwrap()
    }

    /// Dense output (order 4) at `x` inside the integrated span.
    pub fn eval(&self, x: T) -> [T; N] {
        if self.steps.is_empty() {
            return self.ys[0];
        }
        let fwd = self.steps[0].h > T::zero();
        let idx = {
            let (mut lo, mut hi) = (0usize, self.steps.len() - 1);
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                let s = &self.steps[mid];
                if (fwd && s.x0 <= x) || (!fwd && s.x0 >= x) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            lo
        };
        let s = &self.steps[idx];
        let th = (x - s.x0) / s.h;
        let th1 = T::one() - th;
        let mut out = [T::zero(); N];
        for i in 0..N {
            out[i] = s.r[0][i] + th * (s.r[1][i] + th1 * (s.r[2][i] + th * (s.r[3][i] + th1 * s.r[4][i])));
        }
        out
    }
}

fn axpy<T: Real, const N: usize>(y: &[T; N], h: T, terms: &[(f64, &[T; N])]) -> [T; N] {
    let mut out = *y;
    for (c, k) in terms {
        let c = T::lit(*c) * h;
        for i in 0..N {
            out[i] = out[i] + c * k[i];
        }
    }
    out
}

fn all_finite<T: Real, const N: usize>(y: &[T; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrates `y' = f(x, y)` from `x0` to `x1` (either direction).
pub fn solve<T, const N: usize, F>(f: F, x0: T, y0: [T; N], x1: T, opts: &Options<T>) -> Result<OdeSolution<T, N>, OdeError>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    if !(x0.is_finite() && x1.is_finite()) || x0 == x1 {
        return Err(OdeError::BadSpan { a: x0.to_f64().unwrap(), b: x1.to_f64().unwrap() });
    }
    let dir = if x1 > x0 { T::one() } else { -T::one() };
    let span = (x1 - x0).abs();
    let at = |x: T| x.to_f64().unwrap();
    let scale = |y: &[T; N], z: &[T; N], i: usize| opts.atol + opts.rtol * y[i].abs().max(z[i].abs());

    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    if !all_finite(&k1) {
        return Err(OdeError::NonFinite { at: at(x) });
    }

    let hmax = opts.hmax.unwrap_or(span);
    let mut h = match opts.h0 {
        Some(h) => h.abs(),
        None => {
            // Hairer's starting-step heuristic
            let mut d0 = T::zero();
            let mut d1 = T::zero();
            for i in 0..N {
                let sc = opts.atol + opts.rtol * y[i].abs();
                d0 = d0 + (y[i] / sc).powi(2);
                d1 = d1 + (k1[i] / sc).powi(2);
            }
            let nn = T::lit(N as f64);
            d0 = (d0 / nn).sqrt();
            d1 = (d1 / nn).sqrt();
            let mut h0 = if d0 < T::lit(1e-10) || d1 < T::lit(1e-10) { T::lit(1e-6) * span } else { T::lit(0.01) * d0 / d1 };
            h0 = h0.min(hmax);
            let yt = axpy(&y, h0 * dir, &[(1.0, &k1)]);
            let k2 = f(x + h0 * dir, &yt);
            let mut d2 = T::zero();
            for i in 0..N {
                let sc = opts.atol + opts.rtol * y[i].abs();
                d2 = d2 + ((k2[i] - k1[i]) / sc).powi(2);
            }
            d2 = (d2 / nn).sqrt() / h0;
            let m = d1.max(d2);
            let h1 = if m <= T::lit(1e-15) { (h0 * T::lit(1e-3)).max(T::lit(1e-6)) } else { (T::lit(0.01) / m).powf(T::lit(0.2)) };
            (T::lit(100.0) * h0).min(h1).min(hmax)
        }
    };
    h = h.min(span);

    let mut sol = OdeSolution { xs: vec![x], ys: vec![y], dys: vec![k1], steps: Vec::new() };
    let mut facold = T::lit(1e-4);
    let beta = T::lit(0.04);
    let expo1 = T::lit(0.2) - beta * T::lit(0.75);
    let safe = T::lit(0.9);
    let mut reject = false;
    let mut nsteps = 0usize;

    loop {
        let remaining = (x1 - x).abs();
        if remaining <= T::epsilon() * span * T::lit(16.0) {
            break;
        }
        if nsteps >= opts.max_steps {
            return Err(OdeError::TooManySteps { at: at(x) });
        }
        nsteps += 1;
        if let Some(hr) = opts.hrel {
            h = h.min(hr * x.abs().max(T::min_positive_value()));
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        } else if h > T::lit(0.5) * remaining {
            // avoid a sliver step at the end of the span
            h = T::lit(0.5) * remaining;
        }
        if h <= T::epsilon() * x.abs() * T::lit(4.0) || h <= T::min_positive_value() {
            return Err(OdeError::StepUnderflow { at: at(x) });
        }
        let hs = h * dir;
        let k2 = f(x + T::lit(C2) * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(x + T::lit(C3) * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(x + T::lit(C4) * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(x + T::lit(C5) * hs, &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(x + hs, &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let ynew = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let xnew = if last { x1 } else { x + hs };
        let k7 = f(xnew, &ynew);

        let mut err = T::zero();
        let mut finite = all_finite(&ynew) && all_finite(&k7);
        for i in 0..N {
            let e = hs * (T::lit(E1) * k1[i] + T::lit(E3) * k3[i] + T::lit(E4) * k4[i] + T::lit(E5) * k5[i] + T::lit(E6) * k6[i] + T::lit(E7) * k7[i]);
            err = err + (e / scale(&y, &ynew, i)).powi(2);
        }
        err = (err / T::lit(N as f64)).sqrt();
        if !err.is_finite() {
            finite = false;
        }
        if !finite {
            // shrink hard and retry; persistent failure ends in underflow
            h = h * T::lit(0.1);
            reject = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        let fac = (fac11 / facold.powf(beta) / safe).max(T::lit(0.1)).min(T::lit(5.0));
        if err <= T::one() {
            facold = err.max(T::lit(1e-4));
            let mut r = [[T::zero(); N]; 5];
            for i in 0..N {
                let ydiff = ynew[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                r[0][i] = y[i];
                r[1][i] = ydiff;
                r[2][i] = bspl;
                r[3][i] = ydiff - hs * k7[i] - bspl;
                r[4][i] = hs * (T::lit(D1) * k1[i] + T::lit(D3) * k3[i] + T::lit(D4) * k4[i] + T::lit(D5) * k5[i] + T::lit(D6) * k6[i] + T::lit(D7) * k7[i]);
            }
            sol.steps.push(DenseStep { x0: x, h: hs, r });
            x = xnew;
            y = ynew;
            k1 = k7;
            sol.xs.push(x);
            sol.ys.push(y);
            sol.dys.push(k1);
            let mut hnew = h / fac;
            if reject {
                hnew = hnew.min(h);
            }
            reject = false;
            h = hnew.min(hmax);
            if last {
                break;
            }
        } else {
            h = h / (fac11 / safe).min(T::lit(10.0)).max(T::one());
            reject = true;
        }
    }
    Ok(sol)
}

/// Strictly monotone list of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid<T = f64> {
    pub nodes: Vec<T>,
}

impl<T: Real> RadialGrid<T> {
    pub fn new(nodes: Vec<T>) -> Result<Self, OdeError> {
        if nodes.len() < 2 || nodes[0] < T::zero() || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OdeError::Degenerate("grid must be strictly increasing, nonnegative, len >= 2".into()));
        }
        Ok(RadialGrid { nodes })
    }

    pub fn uniform(a: T, b: T, n: usize) -> Self {
        let h = (b - a) / T::lit(n as f64);
        RadialGrid { nodes: (0..=n).map(|i| a + h * T::lit(i as f64)).collect() }
    }

    pub fn first(&self) -> T {
        self.nodes[0]
    }

    pub fn last(&self) -> T {
        *self.nodes.last().unwrap()
    }

    /// Index `i` with `nodes[i] <= r <= nodes[i+1]`, clamped to the grid.
    pub fn locate(&self, r: T) -> usize {
        let n = &self.nodes;
        if r <= n[0] {
            return 0;
        }
        if r >= n[n.len() - 1] {
            return n.len() - 2;
        }
        let mut lo = 0;
        let mut hi = n.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if n[mid] <= r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Radial profile sampled with values and derivatives; interpolation is
/// cubic Hermite, or quintic when second derivatives are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialFunction<T = f64> {
    pub grid: RadialGrid<T>,
    pub values: Vec<T>,
    pub derivs: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<Vec<T>>,
    pub meta: String,
}

impl<T: Real> RadialFunction<T> {
    pub fn new(nodes: Vec<T>, values: Vec<T>, derivs: Vec<T>, meta: &str) -> Result<Self, OdeError> {
        if values.len() != nodes.len() || derivs.len() != nodes.len() {
            return Err(OdeError::Degenerate("length mismatch".into()));
        }
        Ok(RadialFunction { grid: RadialGrid::new(nodes)?, values, derivs, second: None, meta: meta.to_string() })
    }

    pub fn with_second(mut self, second: Vec<T>) -> Self {
        assert_eq!(second.len(), self.values.len());
        self.second = Some(second);
        self
    }

    /// Samples a closure returning `(u, u')` on the given nodes.
    pub fn from_fn(nodes: Vec<T>, f: impl Fn(T) -> (T, T), meta: &str) -> Result<Self, OdeError> {
        let (v, d): (Vec<T>, Vec<T>) = nodes.iter().map(|&r| f(r)).unzip();
        Self::new(nodes, v, d, meta)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn r_min(&self) -> T {
        self.grid.first()
    }

    pub fn r_max(&self) -> T {
        self.grid.last()
    }

    /// Value and derivative at `r` (clamped to the grid span).
    pub fn eval(&self, r: T) -> (T, T) {
        let (v, d, _) = self.jet(r);
        (v, d)
    }

    /// Value, first and second derivative of the interpolant at `r`.
    pub fn jet(&self, r: T) -> (T, T, T) {
        let i = self.grid.locate(r);
        let (a, b) = (self.grid.nodes[i], self.grid.nodes[i + 1]);
        let h = b - a;
        let t = ((r - a) / h).max(T::zero()).min(T::one());
        let (u0, u1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
        let l = T::lit;
        let (t2, t3) = (t * t, t * t * t);
        match &self.second {
            Some(s) => {
                let (s0, s1) = (s[i] * h * h, s[i + 1] * h * h);
                let (t4, t5) = (t3 * t, t3 * t2);
                let h0 = T::one() - l(10.0) * t3 + l(15.0) * t4 - l(6.0) * t5;
                let h1 = t - l(6.0) * t3 + l(8.0) * t4 - l(3.0) * t5;
                let h2 = (t2 - l(3.0) * t3 + l(3.0) * t4 - t5) * l(0.5);
                let h3 = l(10.0) * t3 - l(15.0) * t4 + l(6.0) * t5;
                let h4 = -l(4.0) * t3 + l(7.0) * t4 - l(3.0) * t5;
                let h5 = (t3 - l(2.0) * t4 + t5) * l(0.5);
                let g0 = -l(30.0) * t2 + l(60.0) * t3 - l(30.0) * t4;
                let g1 = T::one() - l(18.0) * t2 + l(32.0) * t3 - l(15.0) * t4;
                let g2 = (l(2.0) * t - l(9.0) * t2 + l(12.0) * t3 - l(5.0) * t4) * l(0.5);
                let g4 = -l(12.0) * t2 + l(28.0) * t3 - l(15.0) * t4;
                let g5 = (l(3.0) * t2 - l(8.0) * t3 + l(5.0) * t4) * l(0.5);
                let k0 = -l(60.0) * t + l(180.0) * t2 - l(120.0) * t3;
                let k1 = -l(36.0) * t + l(96.0) * t2 - l(60.0) * t3;
                let k2 = (l(2.0) - l(18.0) * t + l(36.0) * t2 - l(20.0) * t3) * l(0.5);
                let k4 = -l(24.0) * t + l(84.0) * t2 - l(60.0) * t3;
                let k5 = (l(6.0) * t - l(24.0) * t2 + l(20.0) * t3) * l(0.5);
                let v = u0 * h0 + d0 * h1 + s0 * h2 + u1 * h3 + d1 * h4 + s1 * h5;
                let dv = ((u0 - u1) * g0 + d0 * g1 + s0 * g2 + d1 * g4 + s1 * g5) / h;
                let d2v = ((u0 - u1) * k0 + d0 * k1 + s0 * k2 + d1 * k4 + s1 * k5) / (h * h);
                (v, dv, d2v)
            }
            None => {
                let h00 = l(2.0) * t3 - l(3.0) * t2 + T::one();
                let h10 = t3 - l(2.0) * t2 + t;
                let h01 = -l(2.0) * t3 + l(3.0) * t2;
                let h11 = t3 - t2;
                let g00 = l(6.0) * t2 - l(6.0) * t;
                let g10 = l(3.0) * t2 - l(4.0) * t + T::one();
                let g11 = l(3.0) * t2 - l(2.0) * t;
                let k00 = l(12.0) * t - l(6.0);
                let k10 = l(6.0) * t - l(4.0);
                let k11 = l(6.0) * t - l(2.0);
                let v = u0 * h00 + d0 * h10 + u1 * h01 + d1 * h11;
                let dv = ((u0 - u1) * g00 + d0 * g10 + d1 * g11) / h;
                let d2v = ((u0 - u1) * k00 + d0 * k10 + d1 * k11) / (h * h);
                (v, dv, d2v)
            }
        }
    }

    pub fn value(&self, r: T) -> T {
        self.eval(r).0
    }

    /// Pointwise map `(r, u, u') -> (v, v')` keeping the grid.
    pub fn map(&self, f: impl Fn(T, T, T) -> (T, T), meta: &str) -> Self {
        let (values, derivs) = self.grid.nodes.iter().zip(self.values.iter().zip(&self.derivs)).map(|(&r, (&u, &d))| f(r, u, d)).unzip();
        RadialFunction { grid: self.grid.clone(), values, derivs, second: None, meta: meta.to_string() }
    }

    /// Second derivative of the interpolant at `r`.
    pub fn second_at(&self, r: T) -> T {
        self.jet(r).2
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvHeader {
    meta: String,
    columns: Vec<String>,
}

impl RadialFunction<f64> {
    /// CSV with a JSON header line; numbers carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut cols = vec!["r".to_string(), "u".to_string(), "du".to_string()];
        if self.second.is_some() {
            cols.push("d2u".into());
        }
        let header = CsvHeader { meta: self.meta.clone(), columns: cols.clone() };
        let mut out = serde_json::to_string(&header).unwrap();
        out.push('\n');
        out.push_str(&cols.join(","));
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:.16e},{:.16e},{:.16e}", self.grid.nodes[i], self.values[i], self.derivs[i]));
            if let Some(s) = &self.second {
                out.push_str(&format!(",{:.16e}", s[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, OdeError> {
        let mut lines = text.lines();
        let header: CsvHeader = serde_json::from_str(lines.next().ok_or_else(|| OdeError::Csv("empty".into()))?).map_err(|e| OdeError::Csv(e.to_string()))?;
        let cols = lines.next().ok_or_else(|| OdeError::Csv("missing column line".into()))?;
        let ncol = cols.split(',').count();
        if ncol != header.columns.len() || !(ncol == 3 || ncol == 4) {
            return Err(OdeError::Csv("column count mismatch".into()));
        }
        let mut data: Vec<Vec<f64>> = vec![Vec::new(); ncol];
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != ncol {
                return Err(OdeError::Csv(format!("row {} has {} fields", ln + 1, fields.len())));
            }
            for (c, f) in fields.iter().enumerate() {
                data[c].push(f.trim().parse::<f64>().map_err(|e| OdeError::Csv(format!("row {}: {e}", ln + 1)))?);
            }
        }
        let second = if ncol == 4 { data.pop() } else { None };
        let du = data.pop().unwrap();
        let u = data.pop().unwrap();
        let r = data.pop().unwrap();
        let mut f = RadialFunction::new(r, u, du, &header.meta)?;
        f.second = second;
        Ok(f)
    }
}

/// Starting data for [`integrate_radial`].
#[derive(Debug, Clone, Copy)]
pub enum RadialInit<T> {
    /// Regular origin: `u = u0 + u2 r^2 + O(r^4)`, launched at `r_min`.
    Origin { u0: T, u2: T, r_min: T },
    /// Point data `(u, u')` at the start of the span.
    Point { u: T, du: T },
}

/// Integrates `u'' = field(r, u, u')` over `span` (decreasing spans allowed).
pub fn integrate_radial<T, F>(field: F, init: RadialInit<T>, span: (T, T), tol: T, meta: &str) -> Result<RadialFunction<T>, OdeError>
where
    T: Real,
    F: Fn(T, T, T) -> T,
{
    integrate_radial_with(field, init, span, &Options::tol(tol), meta)
}

/// [`integrate_radial`] with explicit solver options.
pub fn integrate_radial_with<T, F>(field: F, init: RadialInit<T>, span: (T, T), opts: &Options<T>, meta: &str) -> Result<RadialFunction<T>, OdeError>
where
    T: Real,
    F: Fn(T, T, T) -> T,
{
    let (ra, rb) = span;
    let (start, y0, origin) = match init {
        RadialInit::Origin { u0, u2, r_min } => {
            if ra != T::zero() || rb <= r_min {
                return Err(OdeError::BadSpan { a: ra.to_f64().unwrap(), b: rb.to_f64().unwrap() });
            }
            (r_min, [u0 + u2 * r_min * r_min, T::lit(2.0) * u2 * r_min], Some((u0, u2)))
        }
        RadialInit::Point { u, du } => (ra, [u, du], None),
    };
    let rhs = |r: T, y: &[T; 2]| [y[1], field(r, y[0], y[1])];
    let sol = solve(rhs, start, y0, rb, opts)?;
    let mut nodes = Vec::with_capacity(sol.xs.len() + 1);
    let mut vals = Vec::with_capacity(sol.xs.len() + 1);
    let mut ders = Vec::with_capacity(sol.xs.len() + 1);
    let mut sec = Vec::with_capacity(sol.xs.len() + 1);
    if let Some((u0, u2)) = origin {
        nodes.push(T::zero());
        vals.push(u0);
        ders.push(T::zero());
        sec.push(T::lit(2.0) * u2);
    }
    for (x, (y, dy)) in sol.xs.iter().zip(sol.ys.iter().zip(&sol.dys)) {
        nodes.push(*x);
        vals.push(y[0]);
        ders.push(y[1]);
        sec.push(dy[1]);
    }
    if rb < start {
        nodes.reverse();
        vals.reverse();
        ders.reverse();
        sec.reverse();
    }
    Ok(RadialFunction::new(nodes, vals, ders, meta)?.with_second(sec))
}

/// Zero crossings of `f` on `window`: a crossing counts when the sign flips
/// between samples whose magnitude exceeds `floor * max|f|` on the window.
pub fn count_sign_changes<T: Real>(f: &RadialFunction<T>, window: (T, T), floor: T) -> Result<(usize, Vec<T>), OdeError> {
    let (a, b) = (window.0.max(f.r_min()), window.1.min(f.r_max()));
    if !(b > a) {
        return Err(OdeError::BadSpan { a: a.to_f64().unwrap(), b: b.to_f64().unwrap() });
    }
    let sub = 4usize;
    let mut pts = vec![a];
    for &r in &f.grid.nodes {
        if r > a && r < b {
            let prev = *pts.last().unwrap();
            for k in 1..sub {
                pts.push(prev + (r - prev) * T::lit(k as f64 / sub as f64));
            }
            pts.push(r);
        }
    }
    let prev = *pts.last().unwrap();
    for k in 1..sub {
        pts.push(prev + (b - prev) * T::lit(k as f64 / sub as f64));
    }
    pts.push(b);
    let vals: Vec<T> = pts.iter().map(|&r| f.value(r)).collect();
    let vmax = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if vmax == T::zero() {
        return Ok((0, Vec::new()));
    }
    let thr = floor * vmax;
    let mut zeros = Vec::new();
    let mut last_sig: Option<usize> = None;
    for i in 0..pts.len() {
        if vals[i].abs() <= thr {
            continue;
        }
        if let Some(j) = last_sig {
            let flips = (j..i).filter(|&k| vals[k] * vals[k + 1] < T::zero()).count();
            let opposite = vals[i] * vals[j] < T::zero();
            if i > j + 1 && flips > usize::from(opposite) {
                return Err(OdeError::Ambiguous { at: pts[j].to_f64().unwrap() });
            }
            if opposite {
                let (mut lo, mut hi) = (pts[j], pts[i]);
                let slo = vals[j].signum();
                for _ in 0..200 {
                    let mid = (lo + hi) * T::lit(0.5);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f.value(mid).signum() == slo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                zeros.push((lo + hi) * T::lit(0.5));
            }
        }
        last_sig = Some(i);
    }
    Ok((zeros.len(), zeros))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationFit {
    pub amplitude: f64,
    pub phase: f64,
    pub frequency: f64,
    pub rel_residual: f64,
}

fn fit_at(samples: &[(f64, f64)], omega: f64) -> (f64, f64, f64) {
    // least squares of s against sin(w t), cos(w t)
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y) in samples {
        let (s, c) = (omega * t).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += y * s;
        yc += y * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    let mut res = 0.0;
    for &(t, y) in samples {
        let (s, c) = (omega * t).sin_cos();
        res += (y - a * s - b * c).powi(2);
    }
    (a, b, res)
}

/// Fits `sqrt(r) f(r) ≈ A sin(ω log r + φ)` on `window`. Amplitude, phase and
/// residual refer to the given `omega`; `frequency` is a free refit.
pub fn fit_log_oscillation(f: &RadialFunction<f64>, omega: f64, window: (f64, f64)) -> Result<OscillationFit, OdeError> {
    let (a, b) = (window.0.max(f.r_min()), window.1.min(f.r_max()));
    if !(a > 0.0 && b > a) {
        return Err(OdeError::BadSpan { a, b });
    }
    let (la, lb) = (a.ln(), b.ln());
    if omega * (lb - la) < 1.5 {
        return Err(OdeError::Degenerate(format!("window spans only {:.2} rad of phase", omega * (lb - la))));
    }
    let m = 4000;
    let samples: Vec<(f64, f64)> = (0..=m)
        .map(|i| {
            let t = la + (lb - la) * i as f64 / m as f64;
            let r = t.exp();
            (t, r.sqrt() * f.value(r))
        })
        .collect();
    let energy: f64 = samples.iter().map(|s| s.1 * s.1).sum();
    if energy.sqrt() / ((m + 1) as f64).sqrt() < 1e-14 {
        return Err(OdeError::Degenerate("signal below 1e-14".into()));
    }
    let (ca, cb, res) = fit_at(&samples, omega);
    // golden-section search of the residual in frequency
    let (mut lo, mut hi) = (omega * 0.9, omega * 1.1);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = fit_at(&samples, x1).2;
    let mut f2 = fit_at(&samples, x2).2;
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = fit_at(&samples, x1).2;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = fit_at(&samples, x2).2;
        }
    }
    Ok(OscillationFit { amplitude: ca.hypot(cb), phase: cb.atan2(ca), frequency: 0.5 * (lo + hi), rel_residual: (res / energy).sqrt().min(1.0) })
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub fn simpson<T: Real>(f: impl Fn(T) -> T, a: T, b: T, n: usize) -> T {
    let n = n.max(2) + n % 2;
    let h = (b - a) / T::lit(n as f64);
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        s = s + w * f(a + h * T::lit(i as f64));
    }
    s * h / T::lit(3.0)
}

/// `sqrt(sum_{j<=order} ||D^j f||^2)` in `L^2(e^{-r^2/2} r^2 dr)` with
/// `D^1 = ∂_r`, `D^2 = Δ` (radial).
pub fn weighted_norm(f: &RadialFunction<f64>, order: u8) -> Result<f64, OdeError> {
    let (a, b) = (f.r_min(), f.r_max());
    let rho = |r: f64| (-0.5 * r * r).exp();
    let r_end = b.min(40.0);
    let n = 20_000;
    let integrand = |r: f64| {
        let (u, du) = f.eval(r);
        let mut s = u * u;
        if order >= 1 {
            s += du * du;
        }
        if order >= 2 && r > 0.0 {
            let lap = f.second_at(r) + 2.0 * du / r;
            s += lap * lap;
        } else if order >= 2 {
            let lap = 3.0 * f.second_at(r);
            s += lap * lap;
        }
        s * rho(r) * r * r
    };
    let norm2 = simpson(integrand, a, r_end, n);
    let (ue, de) = f.eval(r_end);
    let tail = rho(r_end) * r_end * r_end * (ue * ue + de * de);
    if tail > 1e-16 * norm2.max(f64::MIN_POSITIVE) && r_end < 40.0 {
        return Err(OdeError::TailNotCovered { tail, norm: norm2 });
    }
    Ok(norm2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_to_tolerance() {
        let sol = solve(|_x, y: &[f64; 1]| [y[0]], 0.0, [1.0], 2.0, &Options::tol(1e-10)).unwrap();
        assert!((sol.last()[0] - 2f64.exp()).abs() < 1e-8);
        let mid = sol.eval(1.234)[0];
        assert!((mid - 1.234f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn harmonic_backward() {
        let sol = solve(|_x, y: &[f64; 2]| [y[1], -y[0]], 3.0, [3f64.sin(), 3f64.cos()], 0.0, &Options::tol(1e-11)).unwrap();
        let y = sol.last();
        assert!(y[0].abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9);
        assert!((sol.eval(1.0)[0] - 1f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn generic_f32_integration() {
        let sol = solve(|_x, y: &[f32; 1]| [-y[0]], 0.0f32, [1.0f32], 1.0, &Options::tol(1e-5f32)).unwrap();
        assert!((sol.last()[0] - (-1f32).exp()).abs() < 1e-4);
    }

    #[test]
    fn laplace_constant() {
        let f = integrate_radial(|r: f64, _u, du| -2.0 * du / r, RadialInit::Point { u: 1.0, du: 0.0 }, (1.0, 10.0), 1e-10, "harmonic").unwrap();
        assert!(f.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn sinc_from_origin() {
        // u'' + 2u'/r + u = 0, u(0)=1 -> sin r / r, u2 = -1/6
        let f = integrate_radial(|r: f64, u, du| -2.0 * du / r - u, RadialInit::Origin { u0: 1.0, u2: -1.0 / 6.0, r_min: 1e-6 }, (0.0, 10.0), 1e-11, "sinc")
            .unwrap();
        for r in [0.5, 2.0, 7.3] {
            let (u, du) = f.eval(r);
            assert!((u - r.sin() / r).abs() < 1e-9);
            assert!((du - (r.cos() / r - r.sin() / (r * r))).abs() < 1e-8);
        }
        assert_eq!(f.eval(0.0).0, 1.0);
    }

    #[test]
    fn sign_changes_of_log_sine() {
        let w = 1.14262;
        let a = (0.1 / w as f64).exp();
        let b = ((3.0 * std::f64::consts::PI - 0.1) / w).exp();
        let nodes: Vec<f64> = (0..=4000).map(|i| a * (b / a).powf(i as f64 / 4000.0)).collect();
        let f = RadialFunction::from_fn(nodes, |r| ((w * r.ln()).sin(), w * (w * r.ln()).cos() / r), "test").unwrap();
        let (n, z) = count_sign_changes(&f, (a, b), 1e-9).unwrap();
        assert_eq!(n, 2);
        assert!((z[0] - (std::f64::consts::PI / w).exp()).abs() < 1e-9);
        let c = RadialFunction::from_fn(vec![0.0, 1.0, 2.0], |_| (3.0, 0.0), "const").unwrap();
        assert_eq!(count_sign_changes(&c, (0.0, 2.0), 1e-9).unwrap().0, 0);
    }

    #[test]
    fn oscillation_fit_exact_model() {
        let w = 1.14262;
        let nodes: Vec<f64> = (0..=20000).map(|i| 1.0 * (i as f64 * 7e-4).exp()).collect();
        let f = RadialFunction::from_fn(
            nodes,
            |r| {
                let t = w * r.ln() + 0.3;
                (t.sin() / r.sqrt(), (w * t.cos() - 0.5 * t.sin()) / r.powf(1.5))
            },
            "model",
        )
        .unwrap();
        let fit = fit_log_oscillation(&f, w, (2.0, 1e6)).unwrap();
        assert!((fit.amplitude - 1.0).abs() < 1e-8, "{fit:?}");
        assert!((fit.phase - 0.3).abs() < 1e-8);
        assert!(fit.rel_residual < 1e-8);
        assert!((fit.frequency - w).abs() < 1e-6);
    }

    #[test]
    fn gaussian_moment_norm() {
        let f = RadialFunction::from_fn(RadialGrid::uniform(0.0, 40.0, 400).nodes, |_| (1.0, 0.0), "one").unwrap();
        let n = weighted_norm(&f, 0).unwrap();
        assert!((n - (std::f64::consts::PI / 2.0).sqrt().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn csv_roundtrip_bit_exact() {
        let nodes: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).powf(1.3) + 1e-3).collect();
        let f = RadialFunction::from_fn(nodes, |r| ((r * 3.1).sin() / 7.0, (r * 0.1).exp() * 1e-300), "roundtrip").unwrap().with_second(vec![1.0 / 3.0; 50]);
        let g = RadialFunction::from_csv(&f.to_csv()).unwrap();
        assert_eq!(f, g);
    }
}
