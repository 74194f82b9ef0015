use std::f64::consts::{PI, TAU};

use nalgebra::{ComplexField, Matrix3};
use twofloat::TwoFloat;

/// Cofactor adjugate, generic so the eigenvector code can run on complex
/// eigenvalues as well as real ones.
pub(crate) fn adjugate<T: ComplexField + Copy>(m: &Matrix3<T>) -> Matrix3<T> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| {
        m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)]
    };
    // adj(m)_ij = cofactor_ji
    Matrix3::new(
        c(1, 2, 1, 2),
        -c(0, 2, 1, 2),
        c(0, 1, 1, 2),
        -c(1, 2, 0, 2),
        c(0, 2, 0, 2),
        -c(0, 1, 0, 2),
        c(1, 2, 0, 1),
        -c(0, 2, 0, 1),
        c(0, 1, 0, 1),
    )
}

#[cfg(test)]
pub(crate) fn max_abs(m: &Matrix3<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `(w + w_lo)·t` reduced to `(−π, π]`, with the product and reduction in
/// double-double once the phase leaves `[−π, π]`.
pub(crate) fn reduced_phase(w: f64, w_lo: f64, t: f64) -> f64 {
    let raw = w * t;
    if raw.abs() <= PI {
        return raw + w_lo * t;
    }
    let th = (TwoFloat::new_mul(w, t) + w_lo * t).rem_euclid(twofloat::consts::TAU);
    let th = th.hi() + th.lo();
    if th > PI {
        th - TAU
    } else {
        th
    }
}

/// `2 sin²(x/2)`, i.e. `1 - cos x` without cancellation.
pub(crate) fn versine(x: f64) -> f64 {
    let h = (0.5 * x).sin();
    2.0 * h * h
}

/// `sin(x t)/x` with a series for small `x t`.
pub(crate) fn sinc_t(x: f64, t: f64) -> f64 {
    let xt = x * t;
    if xt.abs() < 1e-4 {
        t * (1.0 - xt * xt / 6.0)
    } else {
        xt.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_phase_large_arguments() {
        assert_eq!(reduced_phase(2.0, 0.0, 0.5), 1.0);
        // 1e6·2π + 0.25 with 2π split exactly into hi and lo parts
        let tau_hi = TAU;
        let tau_lo = 2.4492935982947064e-16;
        let th = reduced_phase(tau_hi, tau_lo, 1e6);
        assert!(th.abs() < 1e-15, "{th}");
        // exact: 2^-22 sits on TAU's grid and t = 2^20
        let th = reduced_phase(tau_hi + 2f64.powi(-22), tau_lo, 2f64.powi(20));
        assert!((th - 0.25).abs() < 1e-12, "{th}");
        let th = reduced_phase(-3.0, 0.0, 7.0);
        assert!((th - (-21.0f64 + 3.0 * TAU)).abs() < 1e-14 && th > -PI && th <= PI);
    }

    #[test]
    fn adjugate_times_matrix_is_det() {
        let m = Matrix3::new(2.0, -1.0, 0.5, 3.0, 4.0, -2.0, 0.25, 1.5, -3.0);
        let prod = adjugate(&m) * m;
        let d = m.determinant();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { d } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-12, "{prod}");
            }
        }
    }

    #[test]
    fn versine_small_argument() {
        let x = 1e-9_f64;
        assert!((versine(x) - x * x / 2.0).abs() < 1e-30);
    }
}
