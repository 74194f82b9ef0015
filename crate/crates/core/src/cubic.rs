//! Characteristic cubic of `Γ`, its depressed form `z³ + az + b` and the
//! trigonometric / hyperbolic root formulas.

use num_complex::Complex64;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{BlochError, Result};
use crate::linalg::reduced_phase;
use crate::system::{GammaMatrix, PartitionedSystem};

/// Default relative tolerance for degeneracy decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Smallest frequency scale used when none is supplied.
const SCALE_FLOOR: f64 = 1e-100;

/// `det(s𝟙 + Γ) = s³ + c2 s² + c1 s + c0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharPolyCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn char_poly_coeffs(g: &GammaMatrix) -> CharPolyCoeffs {
    let [r1, r2, r3] = g.rates.as_array();
    let [w1, w2, w3] = g.field.as_array();
    CharPolyCoeffs {
        c0: r1 * r2 * r3 + r1 * w1 * w1 + r2 * w2 * w2 + r3 * w3 * w3,
        c1: g.field.omega_e_sq() + r1 * r2 + r1 * r3 + r2 * r3,
        c2: r1 + r2 + r3,
    }
}

/// Coefficients of the depressed cubic `q(z) = z³ + az + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalCoeffs {
    pub a: f64,
    /// Rounding residual of `a` when it was accumulated in extended
    /// precision, so that `a + a_lo` is the better value. Zero otherwise.
    pub a_lo: f64,
    pub b: f64,
    /// `|a/3|`
    pub alpha: f64,
    /// `|b/2|`
    pub beta: f64,
    /// `β/α^{3/2}`; `None` when `a = 0`.
    pub gamma_param: Option<f64>,
    /// Frequency scale against which `a` and `b` are judged to vanish.
    pub scale: f64,
}

fn gamma_param(alpha: f64, beta: f64) -> Option<f64> {
    if alpha == 0.0 {
        return None;
    }
    if beta == 0.0 {
        return Some(0.0);
    }
    let lo = 1e-150;
    let hi = 1e150;
    if alpha < lo || alpha > hi || beta < lo || beta > hi {
        Some((beta.ln() - 1.5 * alpha.ln()).exp())
    } else {
        Some(beta / (alpha * alpha.sqrt()))
    }
}

impl CanonicalCoeffs {
    /// Coefficients with the scale inferred from `a` and `b` themselves.
    pub fn new(a: f64, b: f64) -> Self {
        let scale = a.abs().sqrt().max(b.abs().cbrt());
        Self::with_scale(a, b, scale)
    }

    /// Coefficients carrying an explicit frequency scale, normally the
    /// magnitude of the terms that were summed to form `a` and `b`.
    pub fn with_scale(a: f64, b: f64, scale: f64) -> Self {
        let alpha = (a / 3.0).abs();
        let beta = (b / 2.0).abs();
        Self {
            a,
            a_lo: 0.0,
            b,
            alpha,
            beta,
            gamma_param: gamma_param(alpha, beta),
            scale: scale.max(SCALE_FLOOR),
        }
    }

    pub fn from_char_poly(c: &CharPolyCoeffs) -> Self {
        let m = c.c2 / 3.0;
        let a = c.c1 - c.c2 * c.c2 / 3.0;
        let b = 2.0 * m * m * m - c.c1 * m + c.c0;
        Self::new(a, b)
    }

    /// `D = (b/2)² + (a/3)³`.
    pub fn discriminant(&self) -> f64 {
        let h = self.b / 2.0;
        let t = self.a / 3.0;
        h * h + t * t * t
    }

    pub fn eval(&self, z: f64) -> f64 {
        (z * z + self.a) * z + self.b
    }
}

/// `a = ωe² + ΣR_ipR_jp`, `b = ΠR_ip + ΣR_ipω_i²`.
pub fn canonical_coeffs(p: &PartitionedSystem) -> CanonicalCoeffs {
    let [r1, r2, r3] = p.rates_p;
    let [w1, w2, w3] = p.field.as_array();
    // ωe² dominates `a` when the field is strong and fixes the oscillation
    // frequency, so `a` is summed in double-double and its low part kept.
    let a_dd = TwoFloat::new_mul(w1, w1)
        + TwoFloat::new_mul(w2, w2)
        + TwoFloat::new_mul(w3, w3)
        + TwoFloat::new_mul(r1, r2)
        + TwoFloat::new_mul(r1, r3)
        + TwoFloat::new_mul(r2, r3);
    // Near the triple point both coefficients are tiny differences of
    // O(scale²) and O(scale³) terms.
    let b_dd = TwoFloat::new_mul(r1, r2) * r3
        + TwoFloat::new_mul(w1, w1) * r1
        + TwoFloat::new_mul(w2, w2) * r2
        + TwoFloat::new_mul(w3, w3) * r3;
    let b = b_dd.hi() + b_dd.lo();
    let mut c = CanonicalCoeffs::with_scale(a_dd.hi(), b, p.scale());
    c.a_lo = a_dd.lo();
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RootClass {
    /// One real root and a complex-conjugate pair.
    Underdamped,
    /// Three distinct real roots.
    Overdamped,
    /// A real root plus a doubly degenerate real root.
    CriticalDouble,
    /// `a = b = 0`: three zero roots.
    CriticalTriple,
}

impl RootClass {
    pub fn name(&self) -> &'static str {
        match self {
            RootClass::Underdamped => "Underdamped",
            RootClass::Overdamped => "Overdamped",
            RootClass::CriticalDouble => "CriticalDouble",
            RootClass::CriticalTriple => "CriticalTriple",
        }
    }

    pub fn is_distinct(&self) -> bool {
        matches!(self, RootClass::Underdamped | RootClass::Overdamped)
    }
}

pub fn validate_tol(tol: f64) -> Result<f64> {
    if tol > 0.0 && tol <= 1e-3 {
        Ok(tol)
    } else {
        Err(BlochError::InvalidTolerance(tol))
    }
}

/// Root structure of `z³ + az + b`. `tol` is a relative tolerance in
/// `(0, 1e-3]`; callers are expected to have validated it.
pub fn classify(c: &CanonicalCoeffs, tol: f64) -> RootClass {
    let s = c.scale;
    if c.a.abs() <= tol * s * s && c.b.abs() <= tol * s * s * s {
        return RootClass::CriticalTriple;
    }
    if c.a >= 0.0 {
        return RootClass::Underdamped;
    }
    let g = c.gamma_param.unwrap_or(f64::INFINITY);
    if (g - 1.0).abs() <= tol {
        RootClass::CriticalDouble
    } else if g > 1.0 {
        RootClass::Underdamped
    } else {
        RootClass::Overdamped
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Roots of the depressed cubic and the shifted eigenvalues `s_i = z_i − R̄`
/// of `−Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubicSolution {
    pub a: f64,
    pub b: f64,
    pub class: RootClass,
    pub z1: f64,
    /// `3[(z1/2)² + a/3]`; negative when all roots are real.
    pub varpi_sq: f64,
    /// `|ϖ|`: the oscillation frequency, or `μ` when the roots are real.
    pub varpi: f64,
    /// Low-order part of `ϖ` (`ϖ ≈ varpi + varpi_lo`); nonzero only when it
    /// could be resolved beyond f64.
    pub varpi_lo: f64,
    pub z_plus: Complex64,
    pub z_minus: Complex64,
    pub r_bar: f64,
    pub shifted: [Complex64; 3],
    /// Frequency scale inherited from the coefficients.
    pub scale: f64,
}

impl CubicSolution {
    /// The three roots `(z1, z+, z−)` as complex numbers.
    pub fn roots(&self) -> [Complex64; 3] {
        [Complex64::new(self.z1, 0.0), self.z_plus, self.z_minus]
    }

    /// For three real roots: `(z1, −z1/2 + μ, −z1/2 − μ)`.
    pub fn real_roots(&self) -> Option<[f64; 3]> {
        match self.class {
            RootClass::Underdamped => None,
            _ => Some([self.z1, self.z_plus.re, self.z_minus.re]),
        }
    }

    /// `ϖt` reduced to `(−π, π]`. The product and reduction are carried out
    /// in double-double, so the phase stays accurate for `ϖt` far beyond
    /// `2π`.
    pub fn phase(&self, t: f64) -> f64 {
        reduced_phase(self.varpi, self.varpi_lo, t)
    }

    pub fn max_root_magnitude(&self) -> f64 {
        self.roots()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }
}

/// Solves `z³ + az + b = 0`.
///
/// For three distinct real roots `z1` follows the `sin` form, which is the
/// middle root and is continuous through `b = 0`. For a double root `z1`
/// is the nondegenerate root. `r_bar` shifts the roots into eigenvalues of
/// `−Γ`.
pub fn solve_roots(c: &CanonicalCoeffs, r_bar: f64, tol: f64) -> CubicSolution {
    let class = classify(c, tol);
    let (a, b) = (c.a, c.b);
    let sqrt_alpha = c.alpha.sqrt();
    let sqrt_3alpha = (3.0 * c.alpha).sqrt();
    let gamma = c.gamma_param.unwrap_or(f64::INFINITY);
    let mut varpi_lo = 0.0;

    // (z1, ϖ) for complex pairs, (z1, μ) with real pairs
    let (z1, w, pair_real) = match class {
        RootClass::CriticalTriple => (0.0, 0.0, true),
        RootClass::CriticalDouble => {
            // Nondegenerate root via the cosh / cos form at γ ≈ 1.
            let x = if gamma >= 1.0 {
                (gamma.acosh() / 3.0).cosh()
            } else {
                (gamma.acos() / 3.0).cos()
            };
            (-2.0 * sqrt_alpha * sgn(b) * x, 0.0, true)
        }
        RootClass::Underdamped if a > 0.0 => {
            let phi = gamma.asinh() / 3.0;
            let z1 = -2.0 * sqrt_alpha * sgn(b) * phi.sinh();
            // ϖ² = a + ¾z1² has no cancellation here; resolve it past f64.
            let w = (TwoFloat::new_add(a, c.a_lo) + TwoFloat::new_mul(0.75 * z1, z1)).sqrt();
            varpi_lo = w.lo();
            (z1, w.hi(), false)
        }
        RootClass::Underdamped if a == 0.0 => {
            let z1 = -sgn(b) * b.abs().cbrt();
            (z1, 0.75f64.sqrt() * z1.abs(), false)
        }
        RootClass::Underdamped => {
            let phi = gamma.acosh() / 3.0;
            (
                -2.0 * sqrt_alpha * sgn(b) * phi.cosh(),
                sqrt_3alpha * phi.sinh(),
                false,
            )
        }
        RootClass::Overdamped => {
            let phi = gamma.min(1.0).asin() / 3.0;
            (
                2.0 * sqrt_alpha * sgn(b) * phi.sin(),
                sqrt_3alpha * phi.cos(),
                true,
            )
        }
    };

    let half = -0.5 * z1;
    let (z_plus, z_minus, varpi_sq) = if pair_real {
        (
            Complex64::new(half + w, 0.0),
            Complex64::new(half - w, 0.0),
            -w * w,
        )
    } else {
        (Complex64::new(half, w), Complex64::new(half, -w), w * w)
    };
    let shift = Complex64::new(r_bar, 0.0);
    CubicSolution {
        a,
        b,
        class,
        z1,
        varpi_sq,
        varpi: w,
        varpi_lo,
        z_plus,
        z_minus,
        r_bar,
        shifted: [
            Complex64::new(z1 - r_bar, 0.0),
            z_plus - shift,
            z_minus - shift,
        ],
        scale: c.scale,
    }
}
