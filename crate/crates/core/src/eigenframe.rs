//! Oblique real eigenbasis of `Γ`.
//!
//! For one real root and a complex pair the basis is `{s̃1, s̃2, s̃3}` with
//! `s̃1` the real eigenvector and `s̃2 ± i s̃3` the complex pair, all read off
//! columns of `adj(z𝟙 + Γp)`. In that basis `e^{-Γt}` is a decay along `s̃1`
//! times a damped rotation in the `(s̃2, s̃3)` plane.

use nalgebra::{ComplexField, Matrix3, Vector3};
use serde::Serialize;

use crate::cubic::{CubicSolution, RootClass};
use crate::error::{BlochError, Result};
use crate::linalg::adjugate;
use crate::propagator::adjugate_coeffs;
use crate::system::PartitionedSystem;

/// Columns below this fraction of the largest column count as zero.
const COLUMN_FLOOR: f64 = 1e-10;
const SINGULAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrameKind {
    /// Real eigenvector plus the real and imaginary parts of a complex one.
    Oscillating,
    /// Three real eigenvectors.
    ThreeReal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenFrame {
    pub kind: FrameKind,
    pub s1: Vector3<f64>,
    pub s2: Vector3<f64>,
    pub s3: Vector3<f64>,
    /// Columns are `s1, s2, s3`.
    pub p_matrix: Matrix3<f64>,
    pub p_inverse: Matrix3<f64>,
    /// Decay rates along the basis; `r3s = r2s` for the oscillating kind.
    pub r1s: f64,
    pub r2s: f64,
    pub r3s: f64,
    pub varpi: f64,
    /// Adjugate column (1-based) used for `s1` and for the remaining vectors.
    pub column_used: [usize; 2],
}

impl EigenFrame {
    /// Unit-length copies of the basis vectors.
    pub fn normalized(&self) -> [Vector3<f64>; 3] {
        [
            self.s1.normalize(),
            self.s2.normalize(),
            self.s3.normalize(),
        ]
    }
}

fn col_norm<T: ComplexField<RealField = f64> + Copy>(m: &Matrix3<T>, j: usize) -> f64 {
    m.column(j).norm()
}

/// Eigenvector of `m` for the distinct eigenvalue `ev`, taken as the largest
/// column of `adj(ev𝟙 − m)`. Works for real and complex eigenvalues.
pub fn adjugate_eigenvector<T>(m: &Matrix3<T>, ev: T) -> Result<Vector3<T>>
where
    T: ComplexField<RealField = f64> + Copy,
{
    let shifted = Matrix3::<T>::identity() * ev - m;
    let adj = adjugate(&shifted);
    let (j, best) = (0..3)
        .map(|j| (j, col_norm(&adj, j)))
        .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let size = m.norm() + ev.modulus();
    if !(best > COLUMN_FLOOR * size * size) {
        return Err(BlochError::DegenerateEigenvalue);
    }
    let v: Vector3<T> = adj.column(j).into();
    let residual = (m * v - v * ev).norm();
    if residual > 1e-9 * size * best {
        return Err(BlochError::NotAnEigenvalue {
            residual: residual / (size * best),
        });
    }
    Ok(v)
}

/// Picks the adjugate column: a pinned one (1-based) or the largest.
fn choose_column(norms: [f64; 3], pinned: Option<usize>) -> Result<usize> {
    let max = norms.iter().fold(0.0f64, |a, &x| a.max(x));
    if !(max > 0.0) {
        return Err(BlochError::DegenerateEigenvalue);
    }
    match pinned {
        Some(c) => {
            if !(1..=3).contains(&c) {
                return Err(BlochError::InvalidColumn(c));
            }
            if norms[c - 1] <= COLUMN_FLOOR * max {
                return Err(BlochError::ZeroColumn { column: c });
            }
            Ok(c - 1)
        }
        None => Ok((0..3).fold(0, |b, j| if norms[j] > norms[b] { j } else { b })),
    }
}

/// Builds the real basis for an underdamped or overdamped solution.
/// `column` pins the adjugate column (1-based); otherwise the largest is
/// used for each vector.
pub fn real_basis(
    p: &PartitionedSystem,
    sol: &CubicSolution,
    column: Option<usize>,
) -> Result<EigenFrame> {
    let ac = adjugate_coeffs(p);
    let id = Matrix3::identity();
    match sol.class {
        RootClass::Underdamped => {
            let (z1, w) = (sol.z1, sol.varpi);
            let m1 = ac.at(z1);
            let m2 = ac.a0p - ac.a1p * (0.5 * z1) + id * (0.25 * z1 * z1 - w * w);
            let m3 = (ac.a1p - id * z1) * w;
            let n1 = [0, 1, 2].map(|j| m1.column(j).norm());
            let n23 = [0, 1, 2].map(|j| m2.column(j).norm().hypot(m3.column(j).norm()));
            let j1 = choose_column(n1, column)?;
            let j2 = choose_column(n23, column)?;
            let (s1, s2, s3) = (
                m1.column(j1).into_owned(),
                m2.column(j2).into_owned(),
                m3.column(j2).into_owned(),
            );
            let r1s = (p.r_bar - z1).abs();
            let r2s = (p.r_bar + 0.5 * z1).abs();
            finish(
                FrameKind::Oscillating,
                [s1, s2, s3],
                [r1s, r2s, r2s],
                w,
                [j1 + 1, j2 + 1],
            )
        }
        RootClass::Overdamped => {
            let roots = sol.real_roots().expect("overdamped roots are real");
            let mut vs = [Vector3::zeros(); 3];
            let mut cols = [0; 3];
            for (i, z) in roots.iter().enumerate() {
                let mz = ac.at(*z);
                let norms = [0, 1, 2].map(|j| mz.column(j).norm());
                let j = choose_column(norms, column)?;
                vs[i] = mz.column(j).into_owned();
                cols[i] = j + 1;
            }
            let rates = roots.map(|z| (z - p.r_bar).abs());
            finish(
                FrameKind::ThreeReal,
                vs,
                rates,
                sol.varpi,
                [cols[0], cols[1]],
            )
        }
        other => Err(BlochError::NoFrame(other)),
    }
}

fn finish(
    kind: FrameKind,
    s: [Vector3<f64>; 3],
    rates: [f64; 3],
    varpi: f64,
    column_used: [usize; 2],
) -> Result<EigenFrame> {
    let p_matrix = Matrix3::from_columns(&s);
    let p_inverse = inverse_from_basis(&s)?;
    Ok(EigenFrame {
        kind,
        s1: s[0],
        s2: s[1],
        s3: s[2],
        p_matrix,
        p_inverse,
        r1s: rates[0],
        r2s: rates[1],
        r3s: rates[2],
        varpi,
        column_used,
    })
}

fn inverse_from_basis(s: &[Vector3<f64>; 3]) -> Result<Matrix3<f64>> {
    let c23 = s[1].cross(&s[2]);
    let c31 = s[2].cross(&s[0]);
    let c12 = s[0].cross(&s[1]);
    let triple = s[0].dot(&c23);
    let size = s[0].norm() * s[1].norm() * s[2].norm();
    if !(triple.abs() > SINGULAR_FLOOR * size) {
        return Err(BlochError::NearSingularFrame(if size > 0.0 {
            triple / size
        } else {
            0.0
        }));
    }
    Ok(Matrix3::from_rows(&[c23.transpose(), c31.transpose(), c12.transpose()]) / triple)
}

/// `P⁻¹` with rows `s̃2×s̃3, s̃3×s̃1, s̃1×s̃2` over the triple product.
pub fn frame_inverse(frame: &EigenFrame) -> Result<Matrix3<f64>> {
    inverse_from_basis(&[frame.s1, frame.s2, frame.s3])
}

/// Evolution of frame coordinates: decay along `s̃1`, damped rotation by
/// `ϖt` in the `(s̃2, s̃3)` plane, or three independent decays.
pub fn transformed_evolution(
    frame: &EigenFrame,
    sol: &CubicSolution,
    r_bar: f64,
    t: f64,
    m: Vector3<f64>,
) -> Vector3<f64> {
    match frame.kind {
        FrameKind::Oscillating => {
            let e1 = ((sol.z1 - r_bar) * t).exp();
            let e23 = ((-0.5 * sol.z1 - r_bar) * t).exp();
            let (s, c) = sol.phase(t).sin_cos();
            Vector3::new(
                e1 * m[0],
                e23 * (c * m[1] + s * m[2]),
                e23 * (-s * m[1] + c * m[2]),
            )
        }
        FrameKind::ThreeReal => {
            let roots = sol
                .real_roots()
                .unwrap_or([sol.z1, sol.z_plus.re, sol.z_minus.re]);
            Vector3::new(
                ((roots[0] - r_bar) * t).exp() * m[0],
                ((roots[1] - r_bar) * t).exp() * m[1],
                ((roots[2] - r_bar) * t).exp() * m[2],
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Obliquity {
    /// Acute angle between `s̃1` and the normal `s̃2 × s̃3`.
    pub angle_s1_normal: f64,
    /// Deviation of the angle between `s̃2` and `s̃3` from a right angle.
    pub plane_skew: f64,
}

fn angle(u: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

pub fn obliquity(frame: &EigenFrame) -> Obliquity {
    let n = frame.s2.cross(&frame.s3);
    let a = angle(&frame.s1, &n);
    Obliquity {
        angle_s1_normal: a.min(std::f64::consts::PI - a),
        plane_skew: (std::f64::consts::FRAC_PI_2 - angle(&frame.s2, &frame.s3)).abs(),
    }
}
