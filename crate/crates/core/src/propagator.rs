//! `e^{-Γt}` from the roots of the depressed cubic.
//!
//! Every route produces the three scalar functions of the expansion
//! `e^{-Γt} = a0(t)𝟙 + a1(t)Γp + a2(t)Γp²` (the factor `e^{-R̄t}` folded
//! into the exponentials so large damping never overflows an intermediate).

use nalgebra::Matrix3;
use serde::Serialize;
use twofloat::TwoFloat;

use crate::cubic::{
    canonical_coeffs, solve_roots, CanonicalCoeffs, CubicSolution, RootClass, DEFAULT_TOL,
};
use crate::error::{BlochError, Result};
use crate::linalg::{reduced_phase, sinc_t, versine};
use crate::system::{partition, GammaMatrix, PartitionedSystem};

/// Largest `scale²/|q'(z)|` at which the residue formulas are used. Past
/// this the roots are clustered relative to the size of `Γp` and the
/// coefficients are summed as a power series instead.
const CLUSTER_LIMIT: f64 = 1e4;

/// Crossover in `μt` from `cosh`/`sinh` to explicit exponentials.
const HYPERBOLIC_SPLIT: f64 = 20.0;

/// `adj(z𝟙 + Γp) = a0p + a1p z + 𝟙 z²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjugateCoeffs {
    pub a0p: Matrix3<f64>,
    pub a1p: Matrix3<f64>,
}

impl AdjugateCoeffs {
    pub fn at(&self, z: f64) -> Matrix3<f64> {
        self.a0p + self.a1p * z + Matrix3::identity() * (z * z)
    }
}

/// Adjugate coefficient matrices of `z𝟙 + Γp`. `a0p` is assembled entry by
/// entry as `ω_iω_j − ε_ijk ω_k R_kp` off the diagonal and `ω_i² + R_jp R_kp`
/// on it, which equals `Γp² + a𝟙` without the cancellation hidden in `a`.
pub fn adjugate_coeffs(p: &PartitionedSystem) -> AdjugateCoeffs {
    let [w1, w2, w3] = p.field.as_array();
    let [r1, r2, r3] = p.rates_p;
    #[rustfmt::skip]
    let a0p = Matrix3::new(
        w1 * w1 + r2 * r3, w1 * w2 - w3 * r3,  w1 * w3 + w2 * r2,
        w1 * w2 + w3 * r3, w2 * w2 + r1 * r3,  w2 * w3 - w1 * r1,
        w1 * w3 - w2 * r2, w2 * w3 + w1 * r1,  w3 * w3 + r1 * r2,
    );
    AdjugateCoeffs {
        a0p,
        a1p: -p.gamma_p,
    }
}

/// Which formula produced a propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Route {
    /// Three simple poles (one real root plus a pair).
    SimplePoles,
    /// A simple pole and a second-order pole.
    DoublePole,
    /// A third-order pole at zero; the series terminates.
    TriplePole,
    /// Roots clustered relative to `‖Γp‖`: the same coefficients summed as a
    /// Cayley–Hamilton-reduced power series.
    ClusteredSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Propagator {
    pub m: Matrix3<f64>,
    pub t: f64,
    pub branch: RootClass,
    pub route: Route,
    pub roots: CubicSolution,
}

/// The partner pair of the designated real root `r`: `−r/2 ± iϖ` or
/// `−r/2 ± μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pair {
    /// `ϖ` and its low-order part.
    Oscillating(f64, f64),
    Real(f64),
}

/// Real root used as the expansion point of the simple-pole formula. With
/// three real roots the one farthest from the other two is chosen, which
/// maximizes `q'(r)`; any real root gives the same function.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SimplePole {
    r: f64,
    pair: Pair,
    /// `q'(r) = 3r² + a`, formed from root differences.
    dq: f64,
    /// `a` consistent with `r` and the pair.
    a: f64,
}

fn simple_pole(sol: &CubicSolution) -> SimplePole {
    match sol.real_roots() {
        None => {
            let (r, w) = (sol.z1, sol.varpi);
            SimplePole {
                r,
                pair: Pair::Oscillating(w, sol.varpi_lo),
                dq: 2.25 * r * r + w * w,
                a: w * w - 0.75 * r * r,
            }
        }
        Some(roots) => {
            let mut best = (0, f64::NEG_INFINITY);
            for i in 0..3 {
                let d = (roots[i] - roots[(i + 1) % 3]) * (roots[i] - roots[(i + 2) % 3]);
                if d.abs() > best.1 {
                    best = (i, d.abs());
                }
            }
            let i = best.0;
            let r = roots[i];
            let mu = 0.5 * (roots[(i + 1) % 3] - roots[(i + 2) % 3]).abs();
            SimplePole {
                r,
                pair: Pair::Real(mu),
                dq: (1.5 * r - mu) * (1.5 * r + mu),
                a: -mu * mu - 0.75 * r * r,
            }
        }
    }
}

/// `e^{ct}·{1, expm1(1.5 r t), 1 − cos ϖt, sin(ϖt)/ϖ}` with the hyperbolic
/// analogues for a real pair. Products are formed so nothing overflows when
/// the overall result is representable.
struct Kernels {
    e: f64,
    e_g: f64,
    e_vc: f64,
    e_sn: f64,
}

fn kernels(r: f64, pair: Pair, t: f64, shift: f64) -> Kernels {
    let c = -0.5 * r - shift;
    let e = (c * t).exp();
    let grow = 1.5 * r * t;
    let e_g = if grow > HYPERBOLIC_SPLIT {
        ((r - shift) * t).exp() - e
    } else {
        e * grow.exp_m1()
    };
    let (e_vc, e_sn) = match pair {
        Pair::Oscillating(w, w_lo) => {
            if (w * t).abs() < 1.0 {
                (e * versine(w * t), e * sinc_t(w, t))
            } else {
                let th = reduced_phase(w, w_lo, t);
                (e * versine(th), e * th.sin() / w)
            }
        }
        Pair::Real(mu) => {
            let mt = mu * t;
            if mt > HYPERBOLIC_SPLIT {
                let up = ((c + mu) * t).exp();
                let down = ((c - mu) * t).exp();
                (e - 0.5 * (up + down), 0.5 * (up - down) / mu)
            } else {
                let h = (0.5 * mt).sinh();
                let sn = if mt < 1e-4 {
                    t * (1.0 + mt * mt / 6.0)
                } else {
                    mt.sinh() / mu
                };
                (-2.0 * e * h * h, e * sn)
            }
        }
    };
    Kernels { e, e_g, e_vc, e_sn }
}

fn simple_pole_coeffs(sp: &SimplePole, t: f64, shift: f64) -> [f64; 3] {
    let SimplePole { r, pair, dq, a } = *sp;
    let k = kernels(r, pair, t, shift);
    // Rows of W1 applied to (e^{rt}, e^{-rt/2}cos ϖt, e^{-rt/2}sin ϖt/ϖ),
    // rewritten in terms of the cancellation-free kernels.
    let a0 = k.e + ((r * r + a) * k.e_g - 2.0 * r * r * k.e_vc - a * r * k.e_sn) / dq;
    let a1 = (-r * k.e_g - r * k.e_vc - (1.5 * r * r + a) * k.e_sn) / dq;
    let a2 = (k.e_g + k.e_vc - 1.5 * r * k.e_sn) / dq;
    [a0, a1, a2]
}

/// Expansion about the nondegenerate root `z1` of a double-root system.
/// The pair is `−z1/2 ± (residual split)`, the split taken from
/// `a + ¾z1²` in double-double; it is zero at exact degeneracy, where the
/// simple-pole coefficients reduce to the double-pole ones.
fn split_double_pole(c: &CanonicalCoeffs, z1: f64) -> SimplePole {
    let w2 = TwoFloat::new_add(c.a, c.a_lo) + TwoFloat::new_mul(0.75 * z1, z1);
    let w2 = w2.hi() + w2.lo();
    let (pair, split_sq) = if w2 >= 0.0 {
        (Pair::Oscillating(w2.sqrt(), 0.0), w2)
    } else {
        (Pair::Real((-w2).sqrt()), w2)
    };
    SimplePole {
        r: z1,
        pair,
        dq: 2.25 * z1 * z1 + split_sq,
        a: split_sq - 0.75 * z1 * z1,
    }
}

fn double_pole_coeffs(z1: f64, t: f64, shift: f64) -> [f64; 3] {
    let k = kernels(z1, Pair::Oscillating(0.0, 0.0), t, shift);
    // W2 applied to (e^{z1 t}, e^{-z1 t/2}, t e^{-z1 t/2})
    let a0 = k.e + k.e_g / 9.0 + z1 * t * k.e / 3.0;
    let a1 = -4.0 * k.e_g / (9.0 * z1) - t * k.e / 3.0;
    let a2 = 4.0 * k.e_g / (9.0 * z1 * z1) - 2.0 * t * k.e / (3.0 * z1);
    [a0, a1, a2]
}

fn triple_pole_coeffs(t: f64, shift: f64) -> [f64; 3] {
    let e = (-shift * t).exp();
    [e, -t * e, 0.5 * t * t * e]
}

/// Product of `p0 + p1X + p2X²` and `q0 + q1X + q2X²` reduced with
/// `X³ = −aX − b`.
fn reduced_product(p: [f64; 3], q: [f64; 3], a: f64, b: f64) -> [f64; 3] {
    let c0 = p[0] * q[0];
    let c1 = p[0] * q[1] + p[1] * q[0];
    let c2 = p[0] * q[2] + p[1] * q[1] + p[2] * q[0];
    let c3 = p[1] * q[2] + p[2] * q[1];
    let c4 = p[2] * q[2];
    [c0 - b * c3, c1 - a * c3 - b * c4, c2 - a * c4]
}

/// Coefficients of `e^{Xt}` in `{𝟙, X, X²}` for `X = −Γp`, summed as a power
/// series with `X³ = −aX − b`, squared up when `mt > 1`.
fn series_coeffs(a: f64, b: f64, m: f64, t: f64, shift: f64) -> [f64; 3] {
    let squarings = if m * t > 1.0 {
        (m * t).log2().ceil() as i32
    } else {
        0
    };
    let tau = t / 2f64.powi(squarings);
    let w = m.max(f64::MIN_POSITIVE.sqrt());
    let size = |c: &[f64; 3]| c[0].abs() + c[1].abs() * w + c[2].abs() * w * w;

    let mut sum = [1.0, 0.0, 0.0];
    let mut term = [1.0, 0.0, 0.0];
    for k in 0..200 {
        let f = tau / (k as f64 + 1.0);
        term = [-b * term[2] * f, (term[0] - a * term[2]) * f, term[1] * f];
        for i in 0..3 {
            sum[i] += term[i];
        }
        if k >= 2 && size(&term) <= 1e-18 * size(&sum) {
            break;
        }
    }
    let e = (-shift * tau).exp();
    let mut c = [sum[0] * e, sum[1] * e, sum[2] * e];
    for _ in 0..squarings {
        c = reduced_product(c, c, a, b);
    }
    // back to the Γp basis
    [c[0], -c[1], c[2]]
}

fn assemble(gp: &Matrix3<f64>, gp2: &Matrix3<f64>, c: [f64; 3]) -> Matrix3<f64> {
    Matrix3::identity() * c[0] + gp * c[1] + gp2 * c[2]
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(BlochError::NonFiniteInput("time"));
    }
    if t < 0.0 {
        return Err(BlochError::NegativeTime(t));
    }
    Ok(())
}

fn identity_at_zero(sol: &CubicSolution, route: Route) -> Propagator {
    Propagator {
        m: Matrix3::identity(),
        t: 0.0,
        branch: sol.class,
        route,
        roots: *sol,
    }
}

/// Simple-pole form. Valid for one real root plus a complex pair and for
/// three distinct real roots (`cos ϖt → cosh μt`).
pub fn propagator_distinct(
    p: &PartitionedSystem,
    sol: &CubicSolution,
    t: f64,
) -> Result<Propagator> {
    if !sol.class.is_distinct() {
        return Err(BlochError::BranchMismatch {
            expected: "distinct roots",
            found: sol.class,
        });
    }
    check_time(t)?;
    if t == 0.0 {
        return Ok(identity_at_zero(sol, Route::SimplePoles));
    }
    let c = simple_pole_coeffs(&simple_pole(sol), t, p.r_bar);
    let gp2 = p.gamma_p * p.gamma_p;
    Ok(Propagator {
        m: assemble(&p.gamma_p, &gp2, c),
        t,
        branch: sol.class,
        route: Route::SimplePoles,
        roots: *sol,
    })
}

fn zero_root_floor(sol: &CubicSolution) -> f64 {
    1e-12 * sol.scale
}

pub fn propagator_double(p: &PartitionedSystem, sol: &CubicSolution, t: f64) -> Result<Propagator> {
    if sol.class != RootClass::CriticalDouble {
        return Err(BlochError::BranchMismatch {
            expected: "CriticalDouble",
            found: sol.class,
        });
    }
    if sol.z1.abs() <= zero_root_floor(sol) {
        return Err(BlochError::ZeroRootInDoubleBranch(sol.z1));
    }
    check_time(t)?;
    if t == 0.0 {
        return Ok(identity_at_zero(sol, Route::DoublePole));
    }
    let c = double_pole_coeffs(sol.z1, t, p.r_bar);
    let gp2 = p.gamma_p * p.gamma_p;
    Ok(Propagator {
        m: assemble(&p.gamma_p, &gp2, c),
        t,
        branch: sol.class,
        route: Route::DoublePole,
        roots: *sol,
    })
}

/// `e^{-R̄t}(𝟙 − Γp t + ½Γp²t²)`, exact when `Γp` is nilpotent.
pub fn propagator_triple(p: &PartitionedSystem, t: f64) -> Result<Propagator> {
    let sol = solve_roots(&canonical_coeffs(p), p.r_bar, DEFAULT_TOL);
    if sol.class != RootClass::CriticalTriple {
        return Err(BlochError::BranchMismatch {
            expected: "CriticalTriple",
            found: sol.class,
        });
    }
    check_time(t)?;
    if t == 0.0 {
        return Ok(identity_at_zero(&sol, Route::TriplePole));
    }
    let gp2 = p.gamma_p * p.gamma_p;
    let m = assemble(&p.gamma_p, &gp2, triple_pole_coeffs(t, p.r_bar));
    Ok(Propagator {
        m,
        t,
        branch: sol.class,
        route: Route::TriplePole,
        roots: sol,
    })
}

/// Expansion coefficients `(a0, a1, a2)` of `e^{-Γp t}` for the branch of
/// `sol`.
pub fn ch_coefficients(sol: &CubicSolution, t: f64) -> Result<[f64; 3]> {
    check_time(t)?;
    Ok(match sol.class {
        RootClass::Underdamped | RootClass::Overdamped => {
            simple_pole_coeffs(&simple_pole(sol), t, 0.0)
        }
        RootClass::CriticalDouble => {
            if sol.z1.abs() <= zero_root_floor(sol) {
                return Err(BlochError::ZeroRootInDoubleBranch(sol.z1));
            }
            double_pole_coeffs(sol.z1, t, 0.0)
        }
        RootClass::CriticalTriple => triple_pole_coeffs(t, 0.0),
    })
}

/// Everything about `Γ` that does not depend on `t`, so a time grid costs
/// one root solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorPlan {
    pub partition: PartitionedSystem,
    pub coeffs: CanonicalCoeffs,
    pub roots: CubicSolution,
    pub route: Route,
    gp2: Matrix3<f64>,
    pole: SimplePole,
    /// Bound on the root magnitudes, which sets the series step.
    root_bound: f64,
}

impl PropagatorPlan {
    pub fn new(g: &GammaMatrix) -> Self {
        Self::with_tol(g, DEFAULT_TOL)
    }

    pub fn with_tol(g: &GammaMatrix, tol: f64) -> Self {
        let partition = partition(g);
        let coeffs = canonical_coeffs(&partition);
        let roots = solve_roots(&coeffs, partition.r_bar, tol);
        let gp2 = partition.gamma_p * partition.gamma_p;

        let pole = match roots.class {
            RootClass::CriticalDouble => split_double_pole(&coeffs, roots.z1),
            RootClass::CriticalTriple => SimplePole {
                r: 0.0,
                pair: Pair::Oscillating(0.0, 0.0),
                dq: 0.0,
                a: 0.0,
            },
            _ => simple_pole(&roots),
        };
        let scale = coeffs.scale;
        let route = if roots.class == RootClass::CriticalTriple {
            // Within tolerance of the triple point but not on it, the roots
            // are merely clustered and the truncated form would drop them.
            if coeffs.a == 0.0 && coeffs.b == 0.0 {
                Route::TriplePole
            } else {
                Route::ClusteredSeries
            }
        } else if scale * scale > CLUSTER_LIMIT * pole.dq.abs() {
            Route::ClusteredSeries
        } else if roots.class == RootClass::CriticalDouble
            || pole.dq.abs() < 1e-6 * (pole.r * pole.r).max(pole.a.abs())
        {
            Route::DoublePole
        } else {
            Route::SimplePoles
        };
        // The solver reports a near-triple cluster as exactly zero, so
        // the coefficients' own bound is folded in.
        let fujiwara = 2.0 * coeffs.a.abs().sqrt().max((0.5 * coeffs.b).abs().cbrt());
        let root_bound = roots.max_root_magnitude().max(fujiwara);
        Self {
            partition,
            coeffs,
            roots,
            route,
            gp2,
            pole,
            root_bound,
        }
    }

    fn coefficients(&self, t: f64, shift: f64) -> [f64; 3] {
        match self.route {
            Route::SimplePoles => simple_pole_coeffs(&self.pole, t, shift),
            Route::DoublePole => simple_pole_coeffs(&self.pole, t, shift),
            Route::TriplePole => triple_pole_coeffs(t, shift),
            Route::ClusteredSeries => {
                series_coeffs(self.coeffs.a, self.coeffs.b, self.root_bound, t, shift)
            }
        }
    }

    /// `e^{-Γt}`.
    pub fn at(&self, t: f64) -> Result<Propagator> {
        self.evaluate(t, self.partition.r_bar)
    }

    /// `e^{-Γp t}`, the trace-free factor alone.
    pub fn partitioned_at(&self, t: f64) -> Result<Propagator> {
        self.evaluate(t, 0.0)
    }

    fn evaluate(&self, t: f64, shift: f64) -> Result<Propagator> {
        check_time(t)?;
        let m = if t == 0.0 {
            Matrix3::identity()
        } else {
            assemble(
                &self.partition.gamma_p,
                &self.gp2,
                self.coefficients(t, shift),
            )
        };
        Ok(Propagator {
            m,
            t,
            branch: self.roots.class,
            route: self.route,
            roots: self.roots,
        })
    }
}

/// `e^{-Γt}` for `t ≥ 0`, dispatched on the root structure of `Γp`.
pub fn propagator(g: &GammaMatrix, t: f64) -> Result<Propagator> {
    check_time(t)?;
    PropagatorPlan::new(g).at(t)
}
