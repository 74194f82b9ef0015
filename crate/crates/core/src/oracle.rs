//! Brute-force references for checking the closed forms: a Taylor
//! scaling-and-squaring matrix exponential and fixed-step RK4 integration.
//! Nothing in the closed-form paths calls into this module.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::error::{BlochError, Result};
use crate::solution::Magnetization;
use crate::system::{FieldVector, GammaMatrix, RelaxationRates};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Series truncation: stop once a term is below this fraction of the sum.
    pub taylor_tolerance: f64,
    /// 1-norm the scaled matrix must not exceed before the series is summed.
    pub scaling_threshold: f64,
    /// RK4 step in seconds.
    pub rk4_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            taylor_tolerance: 1e-20,
            scaling_threshold: 0.5,
            rk4_step: 1e-4,
        }
    }
}

impl OracleConfig {
    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.taylor_tolerance) {
            return Err(BlochError::InvalidConfig(
                "taylor_tolerance must be positive",
            ));
        }
        if !ok(self.scaling_threshold) {
            return Err(BlochError::InvalidConfig(
                "scaling_threshold must be positive",
            ));
        }
        if !ok(self.rk4_step) {
            return Err(BlochError::InvalidConfig("rk4_step must be positive"));
        }
        Ok(())
    }
}

/// 3×3 matrix of double-double values.
type Dd = [[TwoFloat; 3]; 3];

fn dd_identity() -> Dd {
    let mut m = [[TwoFloat::from(0.0); 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = TwoFloat::from(1.0);
    }
    m
}

fn dd_mul(a: &Dd, b: &Dd) -> Dd {
    let mut c = [[TwoFloat::from(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

fn dd_norm1(m: &Dd) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[i][j].hi().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^m` by scaling and squaring, carried out in double-double arithmetic.
///
/// A multiple `s` of the identity (a third of the trace) is split off first
/// (`e^m = e^s e^{m − sI}`), which is exact because the identity commutes
/// with everything. The remainder is scaled by `2^-k` until its 1-norm is
/// at most `scaling_threshold`, the Taylor series is summed until a term
/// drops below `taylor_tolerance` relative to the sum, and the result is
/// squared `k` times. Squaring amplifies relative error by up to `2^k`, so
/// the extra precision keeps that growth below f64 roundoff until
/// `2^k ≈ 1e15`.
pub fn expm_reference(m: &Matrix3<f64>, cfg: &OracleConfig) -> Result<Matrix3<f64>> {
    cfg.validate()?;
    if m.iter().any(|x| !x.is_finite()) {
        return Err(BlochError::NonFinite);
    }
    let shift = m.trace() / 3.0;
    let mut a = [[TwoFloat::from(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = if i == j {
                TwoFloat::new_sub(m[(i, j)], shift)
            } else {
                TwoFloat::from(m[(i, j)])
            };
        }
    }
    let n = dd_norm1(&a);
    let k = if n > cfg.scaling_threshold {
        (n / cfg.scaling_threshold).log2().ceil() as i32
    } else {
        0
    };
    let scale = 2f64.powi(-k);
    for row in a.iter_mut() {
        for x in row.iter_mut() {
            *x *= scale;
        }
    }

    let mut sum = dd_identity();
    let mut term = dd_identity();
    for j in 1..100 {
        term = dd_mul(&term, &a);
        for row in term.iter_mut() {
            for x in row.iter_mut() {
                *x /= j as f64;
            }
        }
        for (srow, trow) in sum.iter_mut().zip(&term) {
            for (x, y) in srow.iter_mut().zip(trow) {
                *x += *y;
            }
        }
        if dd_norm1(&term) <= cfg.taylor_tolerance * dd_norm1(&sum) {
            break;
        }
    }
    for _ in 0..k {
        sum = dd_mul(&sum, &sum);
        if sum.iter().flatten().any(|x| !x.hi().is_finite()) {
            return Err(BlochError::NonFinite);
        }
    }
    let es = shift.exp();
    let e = Matrix3::from_fn(|i, j| {
        let x = sum[i][j].hi() + sum[i][j].lo();
        if es.is_finite() && es > 0.0 {
            x * es
        } else if x == 0.0 {
            0.0
        } else {
            // e^s alone over- or underflows; fold it into the exponent
            x.signum() * (x.abs().ln() + shift).exp()
        }
    });
    if e.iter().any(|x| !x.is_finite()) {
        return Err(BlochError::NonFinite);
    }
    Ok(e)
}

/// Largest RK4 step accepted for `g`.
pub fn max_stable_step(g: &GammaMatrix) -> f64 {
    0.1 / g.m.norm().max(g.field.omega_e())
}

fn rhs(g: &Matrix3<f64>, drive: &Vector3<f64>, m: &Vector3<f64>) -> Vector3<f64> {
    drive - g * m
}

fn rk4_step(g: &Matrix3<f64>, drive: &Vector3<f64>, m: Vector3<f64>, h: f64) -> Vector3<f64> {
    let k1 = rhs(g, drive, &m);
    let k2 = rhs(g, drive, &(m + k1 * (0.5 * h)));
    let k3 = rhs(g, drive, &(m + k2 * (0.5 * h)));
    let k4 = rhs(g, drive, &(m + k3 * h));
    m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn check_step(g: &GammaMatrix, cfg: &OracleConfig) -> Result<()> {
    cfg.validate()?;
    let max = max_stable_step(g);
    if cfg.rk4_step > max {
        return Err(BlochError::StepTooLarge {
            step: cfg.rk4_step,
            max,
        });
    }
    Ok(())
}

/// Integrates `Ṁ = −ΓM + M₀R₃ẑ` from 0 to `t_end` with classical RK4. The
/// step is `rk4_step` shortened uniformly so it divides `t_end`.
pub fn integrate_reference(
    g: &GammaMatrix,
    m_init: Magnetization,
    m0: f64,
    t_end: f64,
    cfg: &OracleConfig,
) -> Result<Magnetization> {
    let out = integrate_grid(g, m_init, m0, &[t_end], cfg)?;
    Ok(out[0])
}

/// RK4 samples on a nondecreasing time grid, stepping continuously between
/// grid points.
pub fn integrate_grid(
    g: &GammaMatrix,
    m_init: Magnetization,
    m0: f64,
    t_grid: &[f64],
    cfg: &OracleConfig,
) -> Result<Vec<Magnetization>> {
    check_step(g, cfg)?;
    if !m_init.is_finite() || !m0.is_finite() {
        return Err(BlochError::NonFiniteInput("initial state"));
    }
    let drive = Vector3::new(0.0, 0.0, m0 * g.rates.r3);
    let mut m = m_init.as_vector();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        if !target.is_finite() {
            return Err(BlochError::NonFiniteInput("time"));
        }
        if target < t {
            return Err(if target < 0.0 {
                BlochError::NegativeTime(target)
            } else {
                BlochError::OutOfRange {
                    what: "time grid step",
                    value: target - t,
                    range: "[0, inf)",
                }
            });
        }
        let span = target - t;
        let n = (span / cfg.rk4_step).ceil() as u64;
        if n > 0 {
            let h = span / n as f64;
            for _ in 0..n {
                m = rk4_step(&g.m, &drive, m, h);
            }
        }
        t = target;
        out.push(Magnetization::from_vector(m));
    }
    Ok(out)
}

/// Random test systems: rates log-uniform in `[rate_lo, rate_hi]`, field
/// components log-uniform in magnitude over `[field_lo, field_hi]` with
/// random signs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemSampler {
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub field_lo: f64,
    pub field_hi: f64,
}

impl Default for SystemSampler {
    fn default() -> Self {
        Self {
            rate_lo: 1e-2,
            rate_hi: 1e4,
            field_lo: 1e-2,
            field_hi: 1e5,
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

impl SystemSampler {
    pub fn field<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldVector {
        let mut w = [0.0; 3];
        for x in &mut w {
            let mag = log_uniform(rng, self.field_lo, self.field_hi);
            *x = if rng.random_bool(0.5) { mag } else { -mag };
        }
        FieldVector::from_array(w).expect("finite sample")
    }

    pub fn rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        log_uniform(rng, self.rate_lo, self.rate_hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GammaMatrix {
        let r = [self.rate(rng), self.rate(rng), self.rate(rng)];
        let rates = RelaxationRates::from_array(r).expect("valid sample");
        crate::system::build_gamma(self.field(rng), rates)
    }

    /// `R1 = R2 ≥ R3`.
    pub fn sample_axial<R: Rng + ?Sized>(&self, rng: &mut R) -> GammaMatrix {
        let (x, y) = (self.rate(rng), self.rate(rng));
        let rates = RelaxationRates::new(x.max(y), x.max(y), x.min(y)).expect("valid sample");
        crate::system::build_gamma(self.field(rng), rates)
    }
}

/// Relative max-norm distance `max|a − b| / max|b|`.
pub fn max_rel_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let diff = (a - b).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
