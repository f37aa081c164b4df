//! Double-double reference evaluation of Kummer's connection formula.
//!
//! At `z ~ 20` the two terms of the connection formula for `U` cancel by a
//! factor near `e^z`, so an f64 evaluation cannot certify `U` to 1e-8. The
//! arithmetic here keeps about 28 significant digits through exp and log.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::specfun::{ComplexVal, SpecError};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd { hi: p, lo: a.mul_add(b, -p) }
}

impl Dd {
    pub const fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale(self, s: f64) -> Self {
        Dd { hi: self.hi * s, lo: self.lo * s }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let v = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(v.hi, v.lo + t.lo)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.hi, o.hi);
        quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        // long division, three quotient digits
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Dd::new(q3)
    }
}

pub const LN_2: Dd = Dd { hi: std::f64::consts::LN_2, lo: 2.319_046_813_846_299_6e-17 };
pub const PI: Dd = Dd { hi: std::f64::consts::PI, lo: 1.224_646_799_147_353_2e-16 };
pub const TAU: Dd = Dd { hi: std::f64::consts::TAU, lo: 2.449_293_598_294_706_4e-16 };

const SQUARINGS: i32 = 10;

pub fn exp(x: Dd) -> Dd {
    let k = (x.hi / std::f64::consts::LN_2).round();
    let r = (x - LN_2 * Dd::new(k)).scale(2f64.powi(-SQUARINGS));
    // |r| < 4e-4: 14 Taylor terms reach 1e-50
    let mut term = Dd::new(1.0);
    let mut sum = Dd::new(1.0);
    for j in 1..=14 {
        term = term * r / Dd::new(j as f64);
        sum = sum + term;
    }
    for _ in 0..SQUARINGS {
        sum = sum * sum;
    }
    sum.scale(2f64.powi(k as i32))
}

pub fn ln(x: Dd) -> Dd {
    assert!(x.hi > 0.0, "ln of a non-positive value");
    let mut y = Dd::new(x.hi.ln());
    for _ in 0..2 {
        y = y + x * exp(-y) - Dd::new(1.0);
    }
    y
}

pub fn sin_cos(x: Dd) -> (Dd, Dd) {
    let turns = (x.hi / std::f64::consts::TAU).round();
    let r = (x - TAU * Dd::new(turns)).scale(2f64.powi(-SQUARINGS));
    let r2 = r * r;
    let (mut s, mut c) = (r, Dd::new(1.0));
    let (mut ts, mut tc) = (r, Dd::new(1.0));
    for j in 1..=10 {
        let j2 = 2.0 * j as f64;
        ts = -(ts * r2 / Dd::new(j2 * (j2 + 1.0)));
        tc = -(tc * r2 / Dd::new(j2 * (j2 - 1.0)));
        s = s + ts;
        c = c + tc;
    }
    for _ in 0..SQUARINGS {
        let s2 = (s * c).scale(2.0);
        c = c * c - s * s;
        s = s2;
    }
    (s, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CDd {
    pub re: Dd,
    pub im: Dd,
}

impl CDd {
    pub fn new(re: Dd, im: Dd) -> Self {
        CDd { re, im }
    }

    pub fn real(x: f64) -> Self {
        CDd::new(Dd::new(x), Dd::new(0.0))
    }

    pub fn from_c64(z: ComplexVal) -> Self {
        CDd::new(Dd::new(z.re), Dd::new(z.im))
    }

    pub fn to_c64(self) -> ComplexVal {
        ComplexVal::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn norm(self) -> f64 {
        self.to_c64().norm()
    }

    fn norm_sqr(self) -> Dd {
        self.re * self.re + self.im * self.im
    }
}

impl Add for CDd {
    type Output = CDd;
    fn add(self, o: CDd) -> CDd {
        CDd::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for CDd {
    type Output = CDd;
    fn sub(self, o: CDd) -> CDd {
        CDd::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for CDd {
    type Output = CDd;
    fn mul(self, o: CDd) -> CDd {
        CDd::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl Mul<Dd> for CDd {
    type Output = CDd;
    fn mul(self, s: Dd) -> CDd {
        CDd::new(self.re * s, self.im * s)
    }
}

impl Div for CDd {
    type Output = CDd;
    fn div(self, o: CDd) -> CDd {
        let d = o.norm_sqr();
        CDd::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
}

pub fn cexp(z: CDd) -> CDd {
    let m = exp(z.re);
    let (s, c) = sin_cos(z.im);
    CDd::new(m * c, m * s)
}

/// Principal logarithm.
pub fn cln(z: CDd) -> CDd {
    let mut theta = Dd::new(z.im.hi.atan2(z.re.hi));
    for _ in 0..2 {
        let (s, c) = sin_cos(theta);
        // tangent of the angle left between z and e^{iθ}
        theta = theta + (z.im * c - z.re * s) / (z.re * c + z.im * s);
    }
    CDd::new(ln(z.norm_sqr()).scale(0.5), theta)
}

/// `B_{2k}` for k = 1..=15.
const BERNOULLI: [(f64, f64); 15] = [
    (1.0, 6.0),
    (-1.0, 30.0),
    (1.0, 42.0),
    (-1.0, 30.0),
    (5.0, 66.0),
    (-691.0, 2730.0),
    (7.0, 6.0),
    (-3617.0, 510.0),
    (43867.0, 798.0),
    (-174611.0, 330.0),
    (854513.0, 138.0),
    (-236364091.0, 2730.0),
    (8553103.0, 6.0),
    (-23749461029.0, 870.0),
    (8615841276005.0, 14322.0),
];

const STIRLING_MIN: f64 = 30.0;

/// `ln Γ(z)` up to a multiple of `2πi`, which is all the ratios below need.
pub fn ln_gamma(z: CDd) -> Result<CDd, SpecError> {
    let one = CDd::real(1.0);
    let mut w = z;
    let mut prod = one;
    while w.norm() < STIRLING_MIN || w.re.hi < STIRLING_MIN / 2.0 {
        if w.norm() < 1e-12 {
            return Err(SpecError::NearPole { pole: w.re.hi.round(), dist: w.norm() });
        }
        prod = prod * w;
        w = w + one;
    }
    let half_ln_tau = ln(TAU).scale(0.5);
    let mut s = (w - CDd::real(0.5)) * cln(w) - w + CDd::new(half_ln_tau, Dd::new(0.0));
    let inv = one / w;
    let inv2 = inv * inv;
    let mut pw = inv;
    for (k, &(num, den)) in BERNOULLI.iter().enumerate() {
        let k2 = 2.0 * (k + 1) as f64;
        s = s + pw * (Dd::new(num) / Dd::new(den * k2 * (k2 - 1.0)));
        pw = pw * inv2;
    }
    Ok(s - cln(prod))
}

/// `M(a, b, z)` by its power series.
pub fn kummer_m(a: CDd, b: CDd, z: Dd) -> Result<CDd, SpecError> {
    let one = CDd::real(1.0);
    let mut term = one;
    let mut sum = one;
    let mut peak = 1.0f64;
    for k in 0..600 {
        let kk = CDd::real(k as f64);
        term = term * (a + kk) / (b + kk) * (z / Dd::new(k as f64 + 1.0));
        sum = sum + term;
        let t = term.norm();
        peak = peak.max(t);
        if k as f64 > z.hi && t < 1e-33 * sum.norm() {
            if peak > 1e14 * sum.norm() {
                return Err(SpecError::CancellationLoss { loss: peak / sum.norm() });
            }
            return Ok(sum);
        }
    }
    Err(SpecError::Nonconvergence { regime: "double-double Kummer series", terms: 600 })
}

/// Both terms of `U(a, b, z) = Γ(1−b)/Γ(a−b+1) M(a, b, z) + Γ(b−1)/Γ(a) z^{1−b} M(a−b+1, 2−b, z)`.
pub fn connection_terms(a: ComplexVal, b: ComplexVal, z: f64) -> Result<(CDd, CDd), SpecError> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(SpecError::Domain(z));
    }
    let (a, b, zd) = (CDd::from_c64(a), CDd::from_c64(b), Dd::new(z));
    let one = CDd::real(1.0);
    let lz = CDd::new(ln(zd), Dd::new(0.0));
    let c1 = cexp(ln_gamma(one - b)? - ln_gamma(a - b + one)?);
    let c2 = cexp(ln_gamma(b - one)? - ln_gamma(a)? + (one - b) * lz);
    Ok((c1 * kummer_m(a, b, zd)?, c2 * kummer_m(a - b + one, CDd::real(2.0) - b, zd)?))
}

/// `U(a, b, z)` from the connection formula, in double-double.
pub fn tricomi_u_reference(a: ComplexVal, b: ComplexVal, z: f64) -> Result<ComplexVal, SpecError> {
    let (t1, t2) = connection_terms(a, b, z)?;
    Ok((t1 + t2).to_c64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(x: Dd, y: Dd) -> f64 {
        (x - y).to_f64().abs()
    }

    #[test]
    fn arithmetic_is_double_double() {
        let third = Dd::new(1.0) / Dd::new(3.0);
        assert!(err(third * Dd::new(3.0), Dd::new(1.0)) < 1e-28);
        assert!(third.lo != 0.0);
        let x = Dd::new(0.1) * Dd::new(0.3);
        // exact product of the two doubles
        assert_eq!(x.hi + x.lo, 0.1 * 0.3 + 0.1f64.mul_add(0.3, -(0.1 * 0.3)));
    }

    #[test]
    fn elementary_functions_exceed_f64() {
        let e = Dd { hi: std::f64::consts::E, lo: 1.445_646_891_729_250_2e-16 };
        assert!(err(exp(Dd::new(1.0)), e) < 1e-28);
        assert!(err(ln(e), Dd::new(1.0)) < 1e-28);
        assert!(err(ln(Dd::new(2.0)), LN_2) < 1e-28);
        let (s, c) = sin_cos(PI / Dd::new(6.0));
        assert!(err(s, Dd::new(0.5)) < 1e-28);
        assert!(err(c * c, Dd::new(0.75)) < 1e-28);
        let l = cln(CDd::new(Dd::new(-1.0), Dd::new(1e-300)));
        assert!(err(l.im, PI) < 1e-28);
        let (s, c) = sin_cos(Dd::new(19.5));
        assert!(err(s * s + c * c, Dd::new(1.0)) < 1e-28);
    }

    #[test]
    fn gamma_recurrence_and_values() {
        let one = CDd::real(1.0);
        for (re, im) in [(0.3, 0.7), (-2.4, 1.1), (4.0, -0.5)] {
            let z = CDd::new(Dd::new(re), Dd::new(im));
            let d = ln_gamma(z + one).unwrap() - ln_gamma(z).unwrap() - cln(z);
            let k = (d.im.hi / std::f64::consts::TAU).round();
            assert!(d.re.to_f64().abs() < 1e-28);
            assert!(err(d.im, TAU * Dd::new(k)) < 1e-28);
        }
        // Γ(1/2) = √π
        let h = ln_gamma(CDd::real(0.5)).unwrap();
        assert!(err(h.re, ln(PI).scale(0.5)) < 1e-28);
    }
}
