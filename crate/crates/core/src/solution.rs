//! Steady state and time-domain magnetization.

use nalgebra::Vector3;
use serde::Serialize;

use crate::cubic::char_poly_coeffs;
use crate::error::{BlochError, Result};
use crate::linalg::adjugate;
use crate::propagator::PropagatorPlan;
use crate::system::GammaMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Magnetization {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Magnetization {
    pub fn new(mx: f64, my: f64, mz: f64) -> Self {
        Self { mx, my, mz }
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.mx, self.my, self.mz)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mx, self.my, self.mz]
    }

    pub fn is_finite(&self) -> bool {
        self.mx.is_finite() && self.my.is_finite() && self.mz.is_finite()
    }
}

/// `M∞ = Γ⁻¹ M₀R₃ ẑ`, from the third column of `adj Γ` over `c0 = det Γ`.
/// `m0` is the equilibrium magnitude.
pub fn steady_state(g: &GammaMatrix, m0: f64) -> Result<Magnetization> {
    if !m0.is_finite() {
        return Err(BlochError::NonFiniteInput("equilibrium magnetization"));
    }
    // c0 = ΠR + ΣR_iω_i² is a sum of nonnegative terms, so it is accurate
    // even when Γ is close to singular.
    let c0 = char_poly_coeffs(g).c0;
    let scale = g.m.norm();
    if c0 <= 64.0 * f64::EPSILON * scale * scale * scale || c0 == 0.0 {
        return Err(BlochError::SingularGamma { c0 });
    }
    let adj = adjugate(&g.m);
    let drive = m0 * g.rates.r3;
    Ok(Magnetization::from_vector(adj.column(2) * (drive / c0)))
}

fn check_initial(m_init: &Magnetization) -> Result<()> {
    if m_init.is_finite() {
        Ok(())
    } else {
        Err(BlochError::NonFiniteInput("initial magnetization"))
    }
}

/// `M(t) = e^{-Γt}(M(0) − M∞) + M∞`.
pub fn evolve(g: &GammaMatrix, m_init: Magnetization, m0: f64, t: f64) -> Result<Magnetization> {
    check_initial(&m_init)?;
    let inf = steady_state(g, m0)?.as_vector();
    let p = PropagatorPlan::new(g).at(t)?;
    Ok(Magnetization::from_vector(
        p.m * (m_init.as_vector() - inf) + inf,
    ))
}

/// Closed-form samples at every time in `t_grid`, each evaluated directly.
pub fn trajectory(
    g: &GammaMatrix,
    m_init: Magnetization,
    m0: f64,
    t_grid: &[f64],
) -> Result<Vec<(f64, Magnetization)>> {
    check_initial(&m_init)?;
    for w in t_grid.windows(2) {
        if w[1] < w[0] {
            return Err(BlochError::OutOfRange {
                what: "time grid step",
                value: w[1] - w[0],
                range: "[0, inf)",
            });
        }
    }
    let inf = steady_state(g, m0)?.as_vector();
    let plan = PropagatorPlan::new(g);
    let dev = m_init.as_vector() - inf;
    t_grid
        .iter()
        .map(|&t| {
            let p = plan.at(t)?;
            Ok((t, Magnetization::from_vector(p.m * dev + inf)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::propagator;
    use proptest::prelude::*;

    fn sys(w: [f64; 3], r: [f64; 3]) -> GammaMatrix {
        GammaMatrix::from_arrays(w, r).unwrap()
    }

    /// Closed form for R1 = R2 = 1/T2, R3 = 1/T1.
    fn axial_steady_state(w: [f64; 3], t1: f64, t2: f64, m0: f64) -> [f64; 3] {
        let [w1, w2, w3] = w;
        let den = 1.0 + t1 * t2 * (w1 * w1 + w2 * w2) + t2 * t2 * w3 * w3;
        let k = m0 / den;
        [
            k * t2 * (w1 * w3 * t2 + w2),
            k * t2 * (w2 * w3 * t2 - w1),
            k * (1.0 + t2 * t2 * w3 * w3),
        ]
    }

    #[test]
    fn equilibrium_without_field() {
        let m = steady_state(&sys([0.0; 3], [0.3, 0.9, 2.0]), 1.7).unwrap();
        assert_eq!(m.as_array(), [0.0, 0.0, 1.7]);
    }

    #[test]
    fn unit_times_field_along_y() {
        let m0 = 2.5;
        let m = steady_state(&sys([0.0, 1.0, 0.0], [1.0, 1.0, 1.0]), m0).unwrap();
        let want = [m0 / 2.0, 0.0, m0 / 2.0];
        for i in 0..3 {
            assert!((m.as_array()[i] - want[i]).abs() < 1e-15);
        }
        let closed = axial_steady_state([0.0, 1.0, 0.0], 1.0, 1.0, m0);
        assert_eq!(closed, want);
    }

    #[test]
    fn singular_without_relaxation() {
        let err = steady_state(&sys([1.0, 2.0, 3.0], [0.0; 3]), 1.0).unwrap_err();
        assert!(matches!(err, BlochError::SingularGamma { .. }));
    }

    #[test]
    fn fixed_point_and_zero_time() {
        let g = sys([0.4, -2.0, 1.1], [0.5, 1.5, 0.2]);
        let inf = steady_state(&g, 1.0).unwrap();
        let later = evolve(&g, inf, 1.0, 3.0).unwrap();
        assert!((later.as_vector() - inf.as_vector()).norm() < 1e-14);
        let m_init = Magnetization::new(1.0, -1.0, 0.0);
        assert_eq!(evolve(&g, m_init, 1.0, 0.0).unwrap(), m_init);
        let traj = trajectory(&g, m_init, 1.0, &[0.0]).unwrap();
        assert_eq!(traj, vec![(0.0, m_init)]);
    }

    #[test]
    fn linear_and_affine_forms_agree() {
        // M(t) = e^{-Γt}M(0) + (𝟙 − e^{-Γt})M∞
        let g = sys([3.0, 0.5, -1.0], [1.0, 2.0, 0.5]);
        let m_init = Magnetization::new(0.3, 0.2, -0.9);
        let t = 0.8;
        let p = propagator(&g, t).unwrap().m;
        let inf = steady_state(&g, 1.0).unwrap().as_vector();
        let a = p * m_init.as_vector() + (nalgebra::Matrix3::identity() - p) * inf;
        let b = evolve(&g, m_init, 1.0, t).unwrap().as_vector();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn chained_evolution() {
        let g = sys([-2.0, 0.5, 4.0], [0.7, 0.3, 1.2]);
        let m_init = Magnetization::new(1.0, -1.0, 0.0);
        let (t1, t2) = (0.6, 1.1);
        let direct = evolve(&g, m_init, 1.0, t1 + t2).unwrap();
        let chained = evolve(&g, evolve(&g, m_init, 1.0, t1).unwrap(), 1.0, t2).unwrap();
        assert!((direct.as_vector() - chained.as_vector()).norm() < 1e-12);
    }

    #[test]
    fn envelope_decay() {
        let g = sys([5.0, -3.0, 2.0], [0.4, 0.6, 0.5]);
        let m_init = Magnetization::new(1.0, 0.0, -1.0);
        let inf = steady_state(&g, 1.0).unwrap().as_vector();
        let d0 = (m_init.as_vector() - inf).norm();
        let rmin = 0.4;
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 10.0 / rmin / 200.0).collect();
        for (t, m) in trajectory(&g, m_init, 1.0, &times).unwrap() {
            let d = (m.as_vector() - inf).norm();
            assert!(d <= 10.0 * d0 * (-rmin * t).exp(), "t={t}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn matches_axial_closed_form(
            e2 in -2.0f64..4.0, e3 in -2.0f64..4.0,
            w1 in -1e3f64..1e3, w2 in -1e3f64..1e3, w3 in -1e3f64..1e3,
            m0 in 0.1f64..10.0,
        ) {
            let (r2, r3) = (10f64.powf(e2), 10f64.powf(e3));
            let g = sys([w1, w2, w3], [r2, r2, r3]);
            let got = steady_state(&g, m0).unwrap().as_array();
            let want = axial_steady_state([w1, w2, w3], 1.0 / r3, 1.0 / r2, m0);
            let norm = want.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..3 {
                prop_assert!((got[i] - want[i]).abs() <= 1e-12 * norm, "{i}: {got:?} {want:?}");
            }
            // Γ·M∞ = M₀R₃ẑ
            let res = g.m * nalgebra::Vector3::from(got) - nalgebra::Vector3::new(0.0, 0.0, m0 * r3);
            prop_assert!(res.norm() <= 1e-12 * (m0 * r3).max(g.m.norm() * norm));
        }
    }
}
