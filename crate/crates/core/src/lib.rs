//! Exact N-soliton solutions of the d×d matrix modified KdV equation
//!
//! ```text
//! V_t = V_xxx + 3{V², V_x}
//! ```
//!
//! built from discrete spectral data through a determinant formula, together
//! with the tools to check them: finite-difference PDE residuals for mKdV and
//! its Miura (KdV) and potential (pKdV) images, conserved-functional series,
//! energy partition across matrix entries, and peak tracking.
//!
//! Typical use:
//!
//! ```
//! use matsol_core::{eval, presets::Preset, spectral};
//!
//! let scenario = Preset::Scalar1.scenario();
//! let od = spectral::build_operator_data(&scenario).unwrap();
//! let v = eval::evaluate_point_fast(&od, eval::EvalPoint::new(0.0, 0.0)).unwrap();
//! assert_eq!(v.rows(), 1);
//! ```

pub mod diagnostics;
pub mod eval;
pub mod matrix;
pub mod presets;
pub mod quadrature;
pub mod random;
pub mod spectral;
pub mod verify;

pub use eval::{EvalPoint, MatrixField};
pub use matrix::{Complex, ComplexMatrix};
pub use spectral::{EvalPath, GridSpec, OperatorData, Scenario};
