//! Root structure over the `R1 = R2` parameter plane.
//!
//! With `Rδ = (R2 − R3)/3 > 0` the field enters only through
//! `λ12 = 3ω12²/Rδ²` and `λ3 = 3ω3²/Rδ²`, and in units of `Rδ`
//! `a = (λ12 + λ3 − 9)/3`, `b = (λ12 − 2λ3 − 6)/3`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cubic::{classify, solve_roots, CanonicalCoeffs, CubicSolution, RootClass};
use crate::error::{BlochError, Result};
use crate::system::GammaMatrix;

/// Largest grid edge.
pub const MAX_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaledPoint {
    pub lambda12: f64,
    pub lambda3: f64,
}

impl ScaledPoint {
    pub fn new(lambda12: f64, lambda3: f64) -> Result<Self> {
        if !(lambda12.is_finite() && lambda3.is_finite()) {
            return Err(BlochError::NonFiniteInput("scaled field coordinate"));
        }
        if lambda12 < 0.0 || lambda3 < 0.0 {
            return Err(BlochError::NegativeInput("scaled field coordinate"));
        }
        Ok(Self { lambda12, lambda3 })
    }

    /// Canonical coefficients in units of `Rδ`.
    pub fn coeffs(&self) -> CanonicalCoeffs {
        let (l12, l3) = (self.lambda12, self.lambda3);
        let a = (l12 + l3 - 9.0) / 3.0;
        let b = (l12 - 2.0 * l3 - 6.0) / 3.0;
        // ωe/Rδ and the largest partitioned rate 2Rδ
        let scale = ((l12 + l3) / 3.0).sqrt().max(2.0);
        CanonicalCoeffs::with_scale(a, b, scale)
    }

    /// `γ = (9/2)|λ12 − 2λ3 − 6| / |λ12 + λ3 − 9|^{3/2}`.
    pub fn gamma(&self) -> Option<f64> {
        let den = self.lambda12 + self.lambda3 - 9.0;
        (den != 0.0)
            .then(|| 4.5 * (self.lambda12 - 2.0 * self.lambda3 - 6.0).abs() / den.abs().powf(1.5))
    }

    /// Roots in units of `Rδ`.
    pub fn solve(&self, tol: f64) -> CubicSolution {
        solve_roots(&self.coeffs(), 0.0, tol)
    }
}

pub fn classify_regime(pt: &ScaledPoint, tol: f64) -> RootClass {
    classify(&pt.coeffs(), tol)
}

const LAMBDA_B: f64 = 0.75 * (1.732_050_807_568_877_2 - 5.0 / 3.0);

/// Values of `λ12` at which the roots are degenerate for a given `λ3`,
/// ascending. `None` for `λ3 > 1`, where every point is underdamped.
pub fn degeneracy_boundaries(lambda3: f64) -> Result<Option<(f64, f64)>> {
    if !lambda3.is_finite() {
        return Err(BlochError::NonFiniteInput("lambda3"));
    }
    if lambda3 < 0.0 {
        return Err(BlochError::NegativeInput("lambda3"));
    }
    if lambda3 > 1.0 {
        return Ok(None);
    }
    let l = lambda3;
    let root = (8.0 * l + 1.0).sqrt();
    // asin of |8l²+20l−1| / (8l+1)^{3/2}, as atan2 since the complement
    // (8l+1)³ − (8l²+20l−1)² factors as 64 l (1−l)³.
    let num = (8.0 * l * l + 20.0 * l - 1.0).abs();
    let den = 8.0 * l.sqrt() * (1.0 - l).powf(1.5);
    let sign = if l > LAMBDA_B {
        1.0
    } else if l < LAMBDA_B {
        -1.0
    } else {
        0.0
    };
    let theta1 = sign * num.atan2(den) / 3.0;
    let theta2 = std::f64::consts::FRAC_PI_3 - theta1;
    let lam = |theta: f64| (4.5 * root * theta.sin() - l + 2.25).max(0.0);
    let (x, y) = (lam(theta1), lam(theta2));
    Ok(Some(if x <= y { (x, y) } else { (y, x) }))
}

/// The straight line `λ12 = slope·λ3 + intercept` on which `z1 = λz Rδ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Isoline {
    pub slope: f64,
    pub intercept: f64,
}

pub fn root_isoline(lambda_z: f64) -> Result<Isoline> {
    if !(lambda_z > -1.0 && lambda_z <= 2.0) {
        return Err(BlochError::OutOfRange {
            what: "lambda_z",
            value: lambda_z,
            range: "(-1, 2]",
        });
    }
    Ok(Isoline {
        slope: (2.0 - lambda_z) / (1.0 + lambda_z),
        intercept: 3.0 * (2.0 - lambda_z) * (1.0 + lambda_z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtlasCell {
    pub lambda12: f64,
    pub lambda3: f64,
    pub class: RootClass,
    pub z1_over_rdelta: f64,
    /// Oscillation frequency over `Rδ`; zero when all roots are real.
    pub varpi_over_rdelta: f64,
}

pub fn atlas_cell(pt: &ScaledPoint, tol: f64) -> AtlasCell {
    let sol = pt.solve(tol);
    let varpi = if sol.class == RootClass::Underdamped {
        sol.varpi
    } else {
        0.0
    };
    AtlasCell {
        lambda12: pt.lambda12,
        lambda3: pt.lambda3,
        class: sol.class,
        z1_over_rdelta: sol.z1,
        varpi_over_rdelta: varpi,
    }
}

/// Row-major grid: rows step through `λ3`, columns through `λ12`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtlasGrid {
    pub n_lambda12: usize,
    pub n_lambda3: usize,
    pub cells: Vec<AtlasCell>,
}

impl AtlasGrid {
    pub fn cell(&self, row: usize, col: usize) -> &AtlasCell {
        &self.cells[row * self.n_lambda12 + col]
    }
}

fn check_range(what: &'static str, r: (f64, f64)) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite()) {
        return Err(BlochError::NonFiniteInput(what));
    }
    if r.0 < 0.0 || r.1 < r.0 {
        return Err(BlochError::OutOfRange {
            what,
            value: r.1 - r.0,
            range: "0 <= min <= max",
        });
    }
    Ok(())
}

/// Cell-centre samples of the plane. Equal range endpoints are allowed and
/// sample a single line or point.
pub fn atlas_grid(
    lambda12_range: (f64, f64),
    lambda3_range: (f64, f64),
    resolution: (usize, usize),
    tol: f64,
) -> Result<AtlasGrid> {
    check_range("lambda12 range", lambda12_range)?;
    check_range("lambda3 range", lambda3_range)?;
    let (n12, n3) = resolution;
    if n12 == 0 || n3 == 0 {
        return Err(BlochError::OutOfRange {
            what: "grid resolution",
            value: 0.0,
            range: "[1, 4096]",
        });
    }
    if n12 > MAX_RESOLUTION || n3 > MAX_RESOLUTION {
        return Err(BlochError::ResolutionTooLarge {
            cells: n12 * n3,
            max: MAX_RESOLUTION * MAX_RESOLUTION,
        });
    }
    let centre =
        |(lo, hi): (f64, f64), n: usize, i: usize| lo + (i as f64 + 0.5) * (hi - lo) / n as f64;
    let cells = (0..n12 * n3)
        .into_par_iter()
        .map(|k| {
            let (row, col) = (k / n12, k % n12);
            let pt = ScaledPoint {
                lambda12: centre(lambda12_range, n12, col),
                lambda3: centre(lambda3_range, n3, row),
            };
            atlas_cell(&pt, tol)
        })
        .collect();
    Ok(AtlasGrid {
        n_lambda12: n12,
        n_lambda3: n3,
        cells,
    })
}

/// Where an `R1 = R2 ≥ R3` system sits in the scaled plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Regime {
    /// `R1 = R2 = R3`: `Rδ = 0` and the scaled coordinates are undefined.
    EqualRates,
    Scaled {
        point: ScaledPoint,
        r_delta: f64,
        class: RootClass,
    },
}

pub fn locate(g: &GammaMatrix, tol: f64) -> Result<Regime> {
    let r = g.rates;
    let rd = match r.r_delta() {
        Some(rd) if rd >= 0.0 => rd,
        _ => {
            return Err(BlochError::NotAxial {
                r1: r.r1,
                r2: r.r2,
                r3: r.r3,
            })
        }
    };
    if rd == 0.0 {
        return Ok(Regime::EqualRates);
    }
    let k = 3.0 / (rd * rd);
    let point = ScaledPoint::new(
        k * g.field.omega12_sq(),
        k * g.field.omega3 * g.field.omega3,
    )?;
    Ok(Regime::Scaled {
        point,
        r_delta: rd,
        class: classify_regime(&point, tol),
    })
}

/// `λz = Re(z_i)/Rδ` for the three roots.
pub fn lambda_z(sol: &CubicSolution, r_delta: f64) -> [f64; 3] {
    sol.roots().map(|z| z.re / r_delta)
}
