//! Symmetric tridiagonal kernels: Sturm counts, bisection, inverse
//! iteration and banded solves.

use crate::real::Real;

/// Number of eigenvalues of `tridiag(e, d, e)` strictly below `x`.
pub fn sturm_count<T: Real>(d: &[T], e: &[T], x: T) -> usize {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut count = 0;
    let mut q = T::one();
    for i in 0..d.len() {
        let coupling = if i == 0 { T::zero() } else { e[i - 1] * e[i - 1] / q };
        q = d[i] - x - coupling;
        if q == T::zero() {
            q = -tiny;
        }
        if q < T::zero() {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval containing the spectrum.
pub fn gershgorin<T: Real>(d: &[T], e: &[T]) -> (T, T) {
    let n = d.len();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..n {
        let mut rad = T::zero();
        if i > 0 {
            rad = rad + e[i - 1].abs();
        }
        if i + 1 < n {
            rad = rad + e[i].abs();
        }
        lo = lo.min(d[i] - rad);
        hi = hi.max(d[i] + rad);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) by bisection on the Sturm count.
pub fn bisect_eigenvalue<T: Real>(d: &[T], e: &[T], k: usize, bounds: (T, T)) -> T {
    let (mut lo, mut hi) = bounds;
    let two = T::lit(2.0);
    for _ in 0..400 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= T::lit(4.0) * T::epsilon() * lo.abs().max(hi.abs()) {
            break;
        }
    }
    (lo + hi) / two
}

/// Solves `(tridiag(e, d, e) − σ) x = b` by Gaussian elimination with
/// partial pivoting.
pub fn solve_shifted<T: Real>(d: &[T], e: &[T], sigma: T, b: &[T]) -> Vec<T> {
    let n = d.len();
    // rows hold (sub, diag, sup, sup2) after pivoting
    let mut a: Vec<[T; 3]> = (0..n).map(|i| [d[i] - sigma, if i + 1 < n { e[i] } else { T::zero() }, T::zero()]).collect();
    let mut sub: Vec<T> = (0..n).map(|i| if i > 0 { e[i - 1] } else { T::zero() }).collect();
    let mut rhs = b.to_vec();
    let guard = T::epsilon() * gershgorin(d, e).1.abs().max(gershgorin(d, e).0.abs()).max(T::one());
    for i in 0..n.saturating_sub(1) {
        let l = sub[i + 1];
        if l.abs() > a[i][0].abs() {
            // swap rows i and i+1
            let next = [l, a[i + 1][0], a[i + 1][1]];
            let cur = a[i];
            a[i] = next;
            let r = rhs[i];
            rhs[i] = rhs[i + 1];
            rhs[i + 1] = r;
            sub[i + 1] = cur[0];
            a[i + 1] = [cur[1], cur[2], T::zero()];
        }
        let piv = if a[i][0] == T::zero() { guard } else { a[i][0] };
        a[i][0] = piv;
        let f = sub[i + 1] / piv;
        a[i + 1][0] = a[i + 1][0] - f * a[i][1];
        a[i + 1][1] = a[i + 1][1] - f * a[i][2];
        rhs[i + 1] = rhs[i + 1] - f * rhs[i];
    }
    if a[n - 1][0] == T::zero() {
        a[n - 1][0] = guard;
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s = s - a[i][1] * x[i + 1];
        }
        if i + 2 < n {
            s = s - a[i][2] * x[i + 2];
        }
        x[i] = s / a[i][0];
    }
    x
}

fn normalize<T: Real>(v: &mut [T]) {
    let n = v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    for x in v.iter_mut() {
        *x = *x / n;
    }
}

/// Unit eigenvector for a computed eigenvalue `lambda`.
pub fn inverse_iteration<T: Real>(d: &[T], e: &[T], lambda: T) -> Vec<T> {
    let n = d.len();
    let scale = lambda.abs().max(T::one());
    let sigma = lambda + T::lit(64.0) * T::epsilon() * scale;
    // deterministic, non-symmetric start vector
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::lit(((i * 7919) % 101) as f64 / 303.0)).collect();
    normalize(&mut v);
    for _ in 0..3 {
        v = solve_shifted(d, e, sigma, &v);
        normalize(&mut v);
    }
    v
}

/// `yᵀ T y` for the symmetric tridiagonal `T`.
pub fn quadratic_form<T: Real>(d: &[T], e: &[T], y: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..d.len() {
        s = s + d[i] * y[i] * y[i];
        if i + 1 < d.len() {
            s = s + T::lit(2.0) * e[i] * y[i] * y[i + 1];
        }
    }
    s
}

/// Thomas solve for a general tridiagonal system `lo[i] x[i-1] + di[i] x[i] + up[i] x[i+1] = b[i]`
/// (no pivoting; for diagonally dominant systems).
pub fn thomas<T: Real>(lo: &[T], di: &[T], up: &[T], b: &[T]) -> Vec<T> {
    let n = di.len();
    let mut c = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];
    let mut den = di[0];
    c[0] = if n > 1 { up[0] / den } else { T::zero() };
    g[0] = b[0] / den;
    for i in 1..n {
        den = di[i] - lo[i] * c[i - 1];
        if i + 1 < n {
            c[i] = up[i] / den;
        }
        g[i] = (b[i] - lo[i] * g[i - 1]) / den;
    }
    let mut x = g;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] = x[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // discrete Dirichlet Laplacian: eigenvalues 2 - 2 cos(kπ/(n+1))
    fn laplacian<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
        (vec![T::lit(2.0); n], vec![T::lit(-1.0); n - 1])
    }

    #[test]
    fn laplacian_spectrum() {
        let n = 50;
        let (d, e) = laplacian::<f64>(n);
        let b = gershgorin(&d, &e);
        for k in 0..n {
            let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((bisect_eigenvalue(&d, &e, k, b) - want).abs() < 1e-13);
        }
        assert_eq!(sturm_count(&d, &e, 2.0), 25);
    }

    #[test]
    fn eigenvector_is_sine() {
        let n = 40;
        let (d, e) = laplacian::<f64>(n);
        let lam = bisect_eigenvalue(&d, &e, 2, gershgorin(&d, &e));
        let v = inverse_iteration(&d, &e, lam);
        let s = v[0].signum();
        let norm = ((n + 1) as f64 / 2.0).sqrt();
        for (i, x) in v.iter().enumerate() {
            let want = (3.0 * (i + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).sin() / norm;
            assert!((s * x - want).abs() < 1e-12);
        }
        assert!((quadratic_form(&d, &e, &v) - lam).abs() < 1e-13);
    }

    #[test]
    fn f32_counts() {
        let (d, e) = laplacian::<f32>(10);
        assert_eq!(sturm_count(&d, &e, 0.0), 0);
        assert_eq!(sturm_count(&d, &e, 4.0), 10);
    }

    #[test]
    fn pivoted_solve_matches_thomas() {
        let d = [4.0f64, -0.5, 3.0, 1e-3, 2.0];
        let e = [1.0, 2.0, -1.0, 0.7];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = solve_shifted(&d, &e, 0.0, &b);
        for i in 0..5 {
            let mut r = d[i] * x[i] - b[i];
            if i > 0 {
                r += e[i - 1] * x[i - 1];
            }
            if i < 4 {
                r += e[i] * x[i + 1];
            }
            assert!(r.abs() < 1e-12);
        }
        let lo = [0.0f64, 1.0, 1.0];
        let y: Vec<f64> = thomas(&lo, &[4.0, 4.0, 4.0], &[1.0, 1.0, 0.0], &[5.0, 6.0, 5.0]);
        for v in y {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
