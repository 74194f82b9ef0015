//! Closed-form propagator for the Bloch equation
//!
//! `Ṁ + ΓM = M₀R₃` with constant field `ω = (ω1, ω2, ω3)` and relaxation
//! rates `(R1, R2, R3)`. The matrix exponential `e^{-Γt}` is evaluated from
//! the roots of the depressed characteristic cubic of the trace-free part of
//! `Γ`, with dedicated forms for every root structure.
//!
//! ```
//! use blochprop::{FieldVector, RelaxationRates, build_gamma, propagator};
//!
//! let g = build_gamma(
//!     FieldVector::new(0.0, 0.0, 1.0e4).unwrap(),
//!     RelaxationRates::new(400.0, 400.0, 200.0).unwrap(),
//! );
//! let p = propagator(&g, 1.0e-3).unwrap();
//! assert!((p.m.determinant() - (-1000.0f64 * 1.0e-3).exp()).abs() < 1e-12);
//! ```

pub mod atlas;
pub mod cli;
pub mod cubic;
pub mod eigenframe;
pub mod error;
mod linalg;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod propagator;
pub mod solution;
pub mod system;

pub use atlas::{
    atlas_grid, classify_regime, degeneracy_boundaries, lambda_z, locate, root_isoline, AtlasCell,
    AtlasGrid, Isoline, Regime, ScaledPoint,
};
pub use cubic::{
    canonical_coeffs, char_poly_coeffs, classify, solve_roots, CanonicalCoeffs, CharPolyCoeffs,
    CubicSolution, RootClass, DEFAULT_TOL,
};
pub use eigenframe::{
    adjugate_eigenvector, frame_inverse, obliquity, real_basis, transformed_evolution, EigenFrame,
    Obliquity,
};
pub use error::{BlochError, Result};
pub use propagator::{
    adjugate_coeffs, ch_coefficients, propagator, propagator_distinct, propagator_double,
    propagator_triple, AdjugateCoeffs, Propagator, PropagatorPlan, Route,
};
pub use solution::{evolve, steady_state, trajectory, Magnetization};
pub use system::{
    build_gamma, gamma_squared_couplings, partition, CouplingSet, FieldVector, GammaMatrix,
    PartitionedSystem, RelaxationRates,
};

pub use nalgebra::{Matrix3, Vector3};
