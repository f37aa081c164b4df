//! Closed-form constants attached to the exponent `p` in dimension 3.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("exponent p = {0} outside the supported regime p > 5 (d = 3)")]
    ExponentOutOfRange(f64),
    #[error("radius r = {0} must be positive")]
    NonPositiveRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub d: u32,
    pub two_over_pm1: f64,
    pub c_inf: f64,
    pub s_c: f64,
    pub omega: f64,
    pub gamma_re: f64,
    pub kappa: f64,
}

pub fn derive_params(p: f64) -> Result<ModelParams, ModelError> {
    if !(p.is_finite() && p > 5.0) {
        return Err(ModelError::ExponentOutOfRange(p));
    }
    let d = 3.0;
    let a = 2.0 / (p - 1.0);
    let cpow = a * (d - 2.0 - a);
    let c_inf = (cpow.ln() / (p - 1.0)).exp();
    Ok(ModelParams {
        p,
        d: 3,
        two_over_pm1: a,
        c_inf,
        s_c: d / 2.0 - a,
        omega: oscillation_frequency(p),
        gamma_re: 0.5,
        kappa: ((1.0 / (p - 1.0)).ln() / (p - 1.0)).exp(),
    })
}

/// `ω = sqrt(4p c∞^{p-1} − 1)/2`, without the range check (so `p = 5` gives 1).
pub fn oscillation_frequency(p: f64) -> f64 {
    let a = 2.0 / (p - 1.0);
    (4.0 * p * a * (1.0 - a) - 1.0).sqrt() / 2.0
}

impl ModelParams {
    /// `c_inf^{p-1}`, computed without the root.
    pub fn c_inf_pow(&self) -> f64 {
        let a = self.two_over_pm1;
        a * (1.0 - a)
    }

    /// Inverse-square coefficient of the linearized potential at `Φ*`.
    pub fn k_star(&self) -> f64 {
        self.p * self.c_inf_pow()
    }

    /// Scaling generator `Λu = 2/(p-1) u + r u'`.
    pub fn lambda_op(&self, r: f64, u: f64, du: f64) -> f64 {
        self.two_over_pm1 * u + r * du
    }

    /// `|u|^{p-1} u`.
    pub fn power(&self, u: f64) -> f64 {
        u.abs().powf(self.p - 1.0) * u
    }

    /// `u''` from the self-similar equation `Δu − Λu + u^p = 0`.
    pub fn self_similar_d2(&self, r: f64, u: f64, du: f64) -> f64 {
        -(2.0 / r - r) * du + self.two_over_pm1 * u - self.power(u)
    }

    /// Residual of `Δu − Λu + u^p` for given jets.
    pub fn self_similar_residual(&self, r: f64, u: f64, du: f64, d2u: f64) -> f64 {
        d2u + 2.0 * du / r - self.lambda_op(r, u, du) + self.power(u)
    }
}

pub fn discriminant(params: &ModelParams, m: u32) -> f64 {
    let m = m as f64;
    1.0 - 4.0 * params.k_star() + 4.0 * m * (m + 1.0)
}

pub fn phi_star(params: &ModelParams, r: f64) -> Result<f64, ModelError> {
    if !(r > 0.0) {
        return Err(ModelError::NonPositiveRadius(r));
    }
    Ok(params.c_inf * r.powf(-params.two_over_pm1))
}

/// `(Φ*, Φ*', Φ*'')` at `r > 0`.
pub fn phi_star_jet(params: &ModelParams, r: f64) -> (f64, f64, f64) {
    let a = params.two_over_pm1;
    let v = params.c_inf * r.powf(-a);
    (v, -a * v / r, a * (a + 1.0) * v / (r * r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p7_constants() {
        let m = derive_params(7.0).unwrap();
        assert!((m.two_over_pm1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.c_inf.powi(6) - 2.0 / 9.0).abs() < 1e-15);
        assert!((m.omega - 47f64.sqrt() / 6.0).abs() < 1e-14);
        assert!((m.s_c - 7.0 / 6.0).abs() < 1e-15);
        assert!((m.c_inf - 0.77828).abs() < 1e-5);
    }

    #[test]
    fn p7_discriminants() {
        let m = derive_params(7.0).unwrap();
        assert!((discriminant(&m, 0) + 47.0 / 9.0).abs() < 1e-13);
        assert!((discriminant(&m, 1) - 25.0 / 9.0).abs() < 1e-13);
        assert!((discriminant(&m, 2) - 169.0 / 9.0).abs() < 1e-13);
        assert!((discriminant(&m, 0) + 4.0 * m.omega * m.omega).abs() < 1e-13);
    }

    #[test]
    fn rejects_small_p() {
        assert!(derive_params(5.0).is_err());
        assert!(derive_params(4.0).is_err());
        assert!(derive_params(f64::NAN).is_err());
    }

    #[test]
    fn large_p_limits() {
        let m = derive_params(1e9).unwrap();
        assert!(m.two_over_pm1 < 1e-8);
        assert!((m.s_c - 1.5).abs() < 1e-8);
    }

    #[test]
    fn phi_star_solves_equation() {
        let m = derive_params(7.0).unwrap();
        for r in [0.5, 1.0, 5.0] {
            let (v, dv, d2v) = phi_star_jet(&m, r);
            assert!(m.self_similar_residual(r, v, dv, d2v).abs() < 1e-12);
        }
        assert!(phi_star(&m, 0.0).is_err());
        assert!(phi_star(&m, 2.0).unwrap() < phi_star(&m, 1.0).unwrap());
    }
}
