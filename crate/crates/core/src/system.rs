//! Field and rate types, the generator `Γ`, its trace-free partition and
//! the coupling constants of the second-order (oscillator) form.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{BlochError, Result};

/// Effective field components in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldVector {
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
}

impl FieldVector {
    pub fn new(omega1: f64, omega2: f64, omega3: f64) -> Result<Self> {
        if !(omega1.is_finite() && omega2.is_finite() && omega3.is_finite()) {
            return Err(BlochError::NonFiniteInput("field component"));
        }
        Ok(Self {
            omega1,
            omega2,
            omega3,
        })
    }

    pub fn from_array(w: [f64; 3]) -> Result<Self> {
        Self::new(w[0], w[1], w[2])
    }

    pub fn zero() -> Self {
        Self {
            omega1: 0.0,
            omega2: 0.0,
            omega3: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.omega1, self.omega2, self.omega3]
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.omega1, self.omega2, self.omega3)
    }

    /// Transverse magnitude squared, `ω1² + ω2²`.
    pub fn omega12_sq(&self) -> f64 {
        self.omega1 * self.omega1 + self.omega2 * self.omega2
    }

    pub fn omega12(&self) -> f64 {
        self.omega1.hypot(self.omega2)
    }

    pub fn omega_e_sq(&self) -> f64 {
        self.omega12_sq() + self.omega3 * self.omega3
    }

    pub fn omega_e(&self) -> f64 {
        self.omega12().hypot(self.omega3)
    }

    /// Azimuth of the transverse component relative to the x axis.
    pub fn phase(&self) -> f64 {
        self.omega2.atan2(self.omega1)
    }
}

/// Relaxation rates in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationRates {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl RelaxationRates {
    pub fn new(r1: f64, r2: f64, r3: f64) -> Result<Self> {
        for (i, r) in [r1, r2, r3].into_iter().enumerate() {
            if !r.is_finite() {
                return Err(BlochError::NonFiniteInput("relaxation rate"));
            }
            if r < 0.0 {
                return Err(BlochError::NegativeRate {
                    index: i + 1,
                    value: r,
                });
            }
        }
        Ok(Self { r1, r2, r3 })
    }

    pub fn from_array(r: [f64; 3]) -> Result<Self> {
        Self::new(r[0], r[1], r[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r1, self.r2, self.r3]
    }

    pub fn r_bar(&self) -> f64 {
        (self.r1 + self.r2 + self.r3) / 3.0
    }

    /// Deviations `R_i − R̄`. Formed from pairwise differences so that equal
    /// rates give exactly equal deviations and `R1 = R2` gives exactly
    /// `(Rδ, Rδ, −2Rδ)`.
    pub fn partitioned(&self) -> [f64; 3] {
        let [r1, r2, r3] = self.as_array();
        let d12 = r1 - r2;
        let d13 = r1 - r3;
        let d23 = r2 - r3;
        [(d12 + d13) / 3.0, (d23 - d12) / 3.0, -(d13 + d23) / 3.0]
    }

    /// `Rδ = (R2 − R3)/3`, defined only for `R1 = R2`.
    pub fn r_delta(&self) -> Option<f64> {
        (self.r1 == self.r2).then(|| (self.r2 - self.r3) / 3.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMatrix {
    pub m: Matrix3<f64>,
    pub field: FieldVector,
    pub rates: RelaxationRates,
}

impl GammaMatrix {
    /// Convenience constructor from raw arrays, validating both.
    pub fn from_arrays(w: [f64; 3], r: [f64; 3]) -> Result<Self> {
        Ok(build_gamma(
            FieldVector::from_array(w)?,
            RelaxationRates::from_array(r)?,
        ))
    }

    /// Frequency scale of the trace-free part: `max(ωe, max|R_ip|)`.
    pub fn frequency_scale(&self) -> f64 {
        let rp = self.rates.partitioned();
        rp.iter()
            .fold(self.field.omega_e(), |acc, x| acc.max(x.abs()))
    }
}

/// `Γ = [[R1, ω3, −ω2], [−ω3, R2, ω1], [ω2, −ω1, R3]]`.
pub fn build_gamma(field: FieldVector, rates: RelaxationRates) -> GammaMatrix {
    let FieldVector {
        omega1: w1,
        omega2: w2,
        omega3: w3,
    } = field;
    let RelaxationRates { r1, r2, r3 } = rates;
    #[rustfmt::skip]
    let m = Matrix3::new(
        r1,  w3, -w2,
        -w3, r2,  w1,
        w2, -w1,  r3,
    );
    GammaMatrix { m, field, rates }
}

/// `Γ = R̄𝟙 + Γp` with `Γp` trace-free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionedSystem {
    pub r_bar: f64,
    pub gamma_p: Matrix3<f64>,
    pub rates_p: [f64; 3],
    pub field: FieldVector,
}

impl PartitionedSystem {
    pub fn scale(&self) -> f64 {
        self.rates_p
            .iter()
            .fold(self.field.omega_e(), |acc, x| acc.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.gamma_p.trace()
    }
}

pub fn partition(g: &GammaMatrix) -> PartitionedSystem {
    let rates_p = g.rates.partitioned();
    let mut gamma_p = g.m;
    for (i, rp) in rates_p.iter().enumerate() {
        gamma_p[(i, i)] = *rp;
    }
    PartitionedSystem {
        r_bar: g.rates.r_bar(),
        gamma_p,
        rates_p,
        field: g.field,
    }
}

/// Coupling constants of `M̈ = −Γ²M` read as unit masses on springs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingSet {
    /// `κ_ij = ω_iω_j` off the diagonal.
    pub kappa: [[f64; 3]; 3],
    /// `σ_ij = ε_ijk (R_i + R_j) ω_k`.
    pub sigma: [[f64; 3]; 3],
    pub k_diag: [f64; 3],
    pub gamma_sq: [[f64; 3]; 3],
}

fn levi_civita(i: usize, j: usize) -> Option<(usize, f64)> {
    match (i, j) {
        (0, 1) => Some((2, 1.0)),
        (1, 2) => Some((0, 1.0)),
        (2, 0) => Some((1, 1.0)),
        (1, 0) => Some((2, -1.0)),
        (2, 1) => Some((0, -1.0)),
        (0, 2) => Some((1, -1.0)),
        _ => None,
    }
}

pub fn gamma_squared_couplings(g: &GammaMatrix) -> CouplingSet {
    let w = g.field.as_array();
    let r = g.rates.as_array();
    let mut kappa = [[0.0; 3]; 3];
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            kappa[i][j] = w[i] * w[j];
            if let Some((k, sign)) = levi_civita(i, j) {
                sigma[i][j] = sign * (r[i] + r[j]) * w[k];
            }
        }
    }
    let sq = g.m * g.m;
    let mut gamma_sq = [[0.0; 3]; 3];
    let mut k_diag = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            gamma_sq[i][j] = sq[(i, j)];
        }
        let off: f64 = (0..3)
            .filter(|&j| j != i)
            .map(|j| kappa[i][j] + sigma[i][j])
            .sum();
        k_diag[i] = -sq[(i, i)] - off;
    }
    CouplingSet {
        kappa,
        sigma,
        k_diag,
        gamma_sq,
    }
}
