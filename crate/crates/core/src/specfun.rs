//! Complex log-gamma, the confluent hypergeometric pair `M`, `U`, and the
//! spectral phase function built from them.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::ModelParams;
use crate::ode::{self, Options};

pub type ComplexVal = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("pole of Γ at z = {0}")]
    Pole(f64),
    #[error("argument within {dist:e} of the pole at {pole}")]
    NearPole { pole: f64, dist: f64 },
    #[error("non-finite input or result ({0})")]
    NonFinite(&'static str),
    #[error("{regime} did not converge after {terms} terms")]
    Nonconvergence { regime: &'static str, terms: usize },
    #[error("connection formula lost {loss:.1e} relative accuracy")]
    CancellationLoss { loss: f64 },
    #[error("z = {0} outside the domain")]
    Domain(f64),
    #[error("ODE continuation failed: {0}")]
    Ode(#[from] ode::OdeError),
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn check(z: Complex64, what: &'static str) -> Result<Complex64, SpecError> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(SpecError::NonFinite(what))
    }
}

fn lanczos(z: Complex64) -> Complex64 {
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Principal branch of `ln Γ(z)`, analytic off the negative real axis.
///
/// Left of `Re z = 1/2` the recurrence `Γ(z) = Γ(z+k)/∏(z+j)` is used
/// instead of reflection so the imaginary part stays continuous along
/// horizontal lines.
pub fn ln_gamma(z: ComplexVal) -> Result<ComplexVal, SpecError> {
    check(z, "ln_gamma argument")?;
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(SpecError::Pole(z.re));
    }
    if z.re >= 0.5 {
        return check(lanczos(z), "ln_gamma");
    }
    let k = (0.5 - z.re).ceil() as usize;
    let mut acc = lanczos(z + k as f64);
    for j in 0..k {
        let w = z + j as f64;
        // for real negative arguments take the limit from above
        acc -= if w.im == 0.0 && w.re < 0.0 { Complex64::new((-w.re).ln(), std::f64::consts::PI) } else { w.ln() };
    }
    check(acc, "ln_gamma")
}

pub fn gamma(z: ComplexVal) -> Result<ComplexVal, SpecError> {
    Ok(ln_gamma(z)?.exp())
}

fn pole_distance(z: Complex64) -> Option<(f64, f64)> {
    if z.re > 0.5 {
        return None;
    }
    let pole = z.re.round().min(0.0);
    Some((pole, (z - pole).norm()))
}

const SERIES_MAX: usize = 4000;
const M_SERIES_LIMIT: f64 = 45.0;
const U_SMALL: f64 = 1.0;
const U_ASYMPTOTIC: f64 = 45.0;
const U_SEED: f64 = 50.0;

fn m_series(a: Complex64, b: Complex64, z: f64) -> Result<Complex64, SpecError> {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut small = 0;
    for k in 0..SERIES_MAX {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * (z / (kf + 1.0));
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            small += 1;
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(SpecError::Nonconvergence { regime: "Kummer M Taylor series", terms: SERIES_MAX })
}

/// Sum of the divergent series `Σ (p)_k (q)_k / k! · s^k`, truncated at
/// the smallest term.
fn asymptotic_sum(p: Complex64, q: Complex64, s: f64, regime: &'static str) -> Result<Complex64, SpecError> {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for k in 0..200 {
        let kf = k as f64;
        let next = term * (p + kf) * (q + kf) * (s / (kf + 1.0));
        let n = next.norm();
        if n > last {
            break;
        }
        sum += next;
        term = next;
        last = n;
        if n <= 1e-17 * sum.norm() {
            return Ok(sum);
        }
    }
    if last <= 1e-14 * sum.norm() {
        Ok(sum)
    } else {
        Err(SpecError::Nonconvergence { regime, terms: 200 })
    }
}

/// Kummer's function `M(a, b, z) = ₁F₁(a; b; z)` for real `z ≥ 0`.
pub fn kummer_m(a: ComplexVal, b: ComplexVal, z: f64) -> Result<ComplexVal, SpecError> {
    check(a, "a")?;
    check(b, "b")?;
    if !(z >= 0.0 && z.is_finite()) {
        return Err(SpecError::Domain(z));
    }
    if b.im == 0.0 && b.re <= 0.0 && b.re == b.re.round() {
        return Err(SpecError::Pole(b.re));
    }
    if z <= M_SERIES_LIMIT {
        return check(m_series(a, b, z)?, "kummer_m");
    }
    // the recessive z^{-a} contribution is below e^{-z} relative and dropped
    let pre = (ln_gamma(b)? - ln_gamma(a)? + z + (a - b) * z.ln()).exp();
    let s = asymptotic_sum(b - a, 1.0 - a, 1.0 / z, "Kummer M asymptotic series")?;
    check(pre * s, "kummer_m")
}

/// `(M, dM/dz)`.
pub fn kummer_m_with_deriv(a: ComplexVal, b: ComplexVal, z: f64) -> Result<(ComplexVal, ComplexVal), SpecError> {
    Ok((kummer_m(a, b, z)?, a / b * kummer_m(a + 1.0, b + 1.0, z)?))
}

fn u_asymptotic(a: Complex64, b: Complex64, z: f64) -> Result<Complex64, SpecError> {
    let s = asymptotic_sum(a, a - b + 1.0, -1.0 / z, "Tricomi U asymptotic series")?;
    Ok((-a * z.ln()).exp() * s)
}

fn u_connection(a: Complex64, b: Complex64, z: f64) -> Result<Complex64, SpecError> {
    let t1 = (ln_gamma(1.0 - b)? - ln_gamma(a - b + 1.0)?).exp() * kummer_m(a, b, z)?;
    let t2 = (ln_gamma(b - 1.0)? - ln_gamma(a)? + (1.0 - b) * z.ln()).exp() * kummer_m(a - b + 1.0, 2.0 - b, z)?;
    let u = t1 + t2;
    let loss = t1.norm().max(t2.norm()) / u.norm();
    if loss > 1e6 {
        return Err(SpecError::CancellationLoss { loss });
    }
    Ok(u)
}

/// `(U, U')` by integrating Kummer's equation down from the asymptotic seed.
fn u_continued(a: Complex64, b: Complex64, z: f64) -> Result<(Complex64, Complex64), SpecError> {
    let u0 = u_asymptotic(a, b, U_SEED)?;
    let du0 = -a * u_asymptotic(a + 1.0, b + 1.0, U_SEED)?;
    let rhs = |x: f64, y: &[f64; 4]| {
        let w = Complex64::new(y[0], y[1]);
        let dw = Complex64::new(y[2], y[3]);
        let d2 = ((x - b) * dw + a * w) / x;
        [y[2], y[3], d2.re, d2.im]
    };
    let mut opts = Options::tol(1e-13);
    opts.atol = 1e-15 * u0.norm().max(du0.norm());
    let sol = ode::solve(rhs, U_SEED, [u0.re, u0.im, du0.re, du0.im], z, &opts)?;
    let y = sol.last();
    Ok((Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3])))
}

fn check_u_params(a: Complex64, b: Complex64, z: f64) -> Result<(), SpecError> {
    check(a, "a")?;
    check(b, "b")?;
    if !(z > 0.0 && z.is_finite()) {
        return Err(SpecError::Domain(z));
    }
    if b.im == 0.0 && b.re == b.re.round() {
        return Err(SpecError::Pole(b.re));
    }
    Ok(())
}

/// Tricomi's function `U(a, b, z)`, the solution of Kummer's equation with
/// `U ~ z^{-a}` as `z → ∞`, for real `z > 0` and non-integer `b`.
pub fn tricomi_u(a: ComplexVal, b: ComplexVal, z: f64) -> Result<ComplexVal, SpecError> {
    check_u_params(a, b, z)?;
    let u = if z <= U_SMALL {
        // near a zero of U the two connection terms cancel; the continuation does not
        match u_connection(a, b, z) {
            Err(SpecError::CancellationLoss { .. }) => u_continued(a, b, z)?.0,
            other => other?,
        }
    } else if z >= U_ASYMPTOTIC {
        u_asymptotic(a, b, z)?
    } else {
        u_continued(a, b, z)?.0
    };
    check(u, "tricomi_u")
}

/// `(U, dU/dz)`.
pub fn tricomi_u_with_deriv(a: ComplexVal, b: ComplexVal, z: f64) -> Result<(ComplexVal, ComplexVal), SpecError> {
    check_u_params(a, b, z)?;
    if U_SMALL < z && z < U_ASYMPTOTIC {
        return u_continued(a, b, z);
    }
    Ok((tricomi_u(a, b, z)?, -a * tricomi_u(a + 1.0, b + 1.0, z)?))
}

/// Kummer parameters `(a, b)` of the eigenvalue problem `𝓛∞ψ = λψ` with
/// `ψ = r^{-γ} w(r²/2)`, `γ = 1/2 + iω`.
pub fn kummer_parameters(omega: f64, inv_pm1: f64, lambda: f64) -> (ComplexVal, ComplexVal) {
    let a = Complex64::new(inv_pm1 - 0.5 * lambda - 0.25, -0.5 * omega);
    let b = Complex64::new(1.0, -omega);
    (a, b)
}

/// Principal value of the phase `arg(2^{iω/2} Γ(iω) / Γ(c − λ/2 − 1/4 + iω/2))`
/// with `c = 1/(p−1)`, given `ω` and `c` directly.
pub fn phase_raw(omega: f64, inv_pm1: f64, lambda: f64) -> Result<f64, SpecError> {
    if !(omega > 0.0 && lambda.is_finite() && inv_pm1.is_finite()) {
        return Err(SpecError::NonFinite("phase parameters"));
    }
    let arg = Complex64::new(inv_pm1 - 0.5 * lambda - 0.25, 0.5 * omega);
    if let Some((pole, dist)) = pole_distance(arg) {
        if dist < 1e-8 {
            return Err(SpecError::NearPole { pole, dist });
        }
    }
    let top = ln_gamma(Complex64::new(0.0, omega))?;
    let bottom = ln_gamma(arg)?;
    Ok(0.5 * omega * std::f64::consts::LN_2 + top.im - bottom.im)
}

pub fn phase_phi(params: &ModelParams, lambda: f64) -> Result<f64, SpecError> {
    phase_raw(params.omega, 1.0 / (params.p - 1.0), lambda)
}

/// Frequency of the small-`r` oscillation of `𝓛∞` as `p → ∞`.
pub fn omega_limit() -> f64 {
    7f64.sqrt() / 2.0
}

pub fn phase_phi_limit(lambda: f64) -> Result<f64, SpecError> {
    phase_raw(omega_limit(), 0.0, lambda)
}

/// Removes `2π` jumps from a sequence of principal phases fed in scan order.
#[derive(Debug, Clone, Default)]
pub struct PhaseTracker {
    last: Option<f64>,
    offset: f64,
}

impl PhaseTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, raw: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        if let Some(prev) = self.last {
            let mut v = raw + self.offset;
            while v - prev > std::f64::consts::PI {
                self.offset -= tau;
                v -= tau;
            }
            while prev - v > std::f64::consts::PI {
                self.offset += tau;
                v += tau;
            }
            self.last = Some(v);
            v
        } else {
            self.last = Some(raw);
            raw
        }
    }
}

/// Branch-tracked phase along `lambdas` (in the given order).
pub fn phase_scan(omega: f64, inv_pm1: f64, lambdas: &[f64]) -> Result<Vec<f64>, SpecError> {
    let mut tr = PhaseTracker::new();
    lambdas.iter().map(|&l| Ok(tr.push(phase_raw(omega, inv_pm1, l)?))).collect()
}

/// `max_{λ ∈ window} Φ(λ) − Φ(window.0) − π` on a uniform grid, with the
/// maximizing `λ`.
pub fn phase_gap_sup(omega: f64, inv_pm1: f64, window: (f64, f64), step: f64) -> Result<(f64, f64), SpecError> {
    let n = ((window.1 - window.0) / step).round() as usize;
    let lams: Vec<f64> = (0..=n).map(|i| window.0 + (window.1 - window.0) * i as f64 / n as f64).collect();
    let ph = phase_scan(omega, inv_pm1, &lams)?;
    let mut best = (f64::NEG_INFINITY, window.0);
    for (l, v) in lams.iter().zip(&ph) {
        let g = v - ph[0] - std::f64::consts::PI;
        if g > best.0 {
            best = (g, *l);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gamma_classical_values() {
        assert!(ln_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-14);
        assert!(ln_gamma(c(2.0, 0.0)).unwrap().norm() < 1e-14);
        let h = ln_gamma(c(0.5, 0.0)).unwrap();
        assert!((h.re - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((gamma(c(5.0, 0.0)).unwrap().re - 24.0).abs() < 1e-11);
        assert!((gamma(c(-0.5, 0.0)).unwrap().re + 2.0 * std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert_eq!(ln_gamma(c(-3.0, 0.0)), Err(SpecError::Pole(-3.0)));
        assert_eq!(ln_gamma(c(0.0, 0.0)), Err(SpecError::Pole(0.0)));
    }

    #[test]
    fn gamma_on_imaginary_axis() {
        let y = 1.14262;
        let g = gamma(c(0.0, y)).unwrap().norm_sqr();
        let exact = std::f64::consts::PI / (y * (std::f64::consts::PI * y).sinh());
        assert!((g / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_principal_branch() {
        // principal loggamma, 40-digit reference
        let cases = [
            (c(0.3, 1.2), c(-0.99690416780439522216, -1.2764005926449992562)),
            (c(-2.7, 0.4), c(-0.84963045007744143538, -9.5102062715457042796)),
            (c(5.0, -3.0), c(2.2442467170202177392, -4.7140895389049293906)),
            (c(-0.4, 0.57), c(0.30365631259645979164, -2.8500788131408505249)),
        ];
        for (z, want) in cases {
            let got = ln_gamma(z).unwrap();
            assert!((got - want).norm() < 2e-13, "{z}: {got} vs {want}");
        }
    }

    #[test]
    fn schwarz_reflection() {
        for z in [c(0.2, 0.7), c(-1.3, 2.0), c(3.0, 0.1)] {
            let d = ln_gamma(z.conj()).unwrap() - ln_gamma(z).unwrap().conj();
            assert!(d.norm() < 1e-13);
        }
    }

    #[test]
    fn m_closed_forms() {
        for z in [0.0, 0.3, 5.0, 25.0, 35.0, 60.0] {
            let m = kummer_m(c(1.0, 0.0), c(1.0, 0.0), z).unwrap();
            assert!((m.re / z.exp() - 1.0).abs() < 1e-12 && m.im == 0.0, "z={z}");
        }
        assert_eq!(kummer_m(c(0.3, -0.2), c(1.0, -1.1), 0.0).unwrap(), c(1.0, 0.0));
        assert!(kummer_m(c(1.0, 0.0), c(-2.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn u_small_vs_continued_agree_at_switch() {
        let (a, b) = kummer_parameters(47f64.sqrt() / 6.0, 1.0 / 6.0, -1.0);
        let left = u_connection(a, b, U_SMALL).unwrap();
        let right = u_continued(a, b, U_SMALL).unwrap().0;
        assert!((left - right).norm() < 1e-11 * left.norm());
        let far = u_asymptotic(a, b, U_ASYMPTOTIC).unwrap();
        let mid = u_continued(a, b, U_ASYMPTOTIC).unwrap().0;
        assert!((far - mid).norm() < 1e-11 * far.norm());
    }

    #[test]
    fn phase_tracker_unwraps() {
        let mut t = PhaseTracker::new();
        assert_eq!(t.push(3.0), 3.0);
        let v = t.push(-3.0);
        assert!((v - (2.0 * std::f64::consts::PI - 3.0)).abs() < 1e-15);
    }
}
