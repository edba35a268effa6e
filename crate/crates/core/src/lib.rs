//! Numerical laboratory for ergodic matrix Schrödinger cocycles.
//!
//! The library evolves products of `2W × 2W` symplectic transfer matrices
//!
//! ```text
//! T_n(z) = [ zI − V_n   −I ]
//!          [    I        0 ]
//! ```
//!
//! driven by ergodic potential sequences `V_n`, and measures everything a
//! desk-scale experiment can measure about them: Lyapunov spectra and their
//! symplectic pairing, partial-sum fields `Γ_k` sampled over complex grids,
//! the Riesz measures and logarithmic potentials behind the generalized
//! Thouless formula, large-deviation tails, and the statistics of the
//! exceptional energy sets where growth departs from the Lyapunov rates
//! (liminf dips, weighted scans, interval covers with Hausdorff gauge
//! content, subsequence statistics, Lagrangian-restricted growth).
//!
//! Modules map onto the subsystems of the lab:
//!
//! * [`symplectic`] — transfer matrices, QR-reorthogonalized cursors,
//!   wedge-power log-sums, Lagrangian frames and slow subspaces.
//! * [`drivers`] — deterministic ergodic potential models (i.i.d.,
//!   quasi-periodic, constant) with counter-based random access.
//! * [`lyapunov`] — spectrum estimation, large-deviation tails, doubling
//!   monotonicity.
//! * [`subharmonic`] — grid fields, discrete Riesz measures, logarithmic
//!   potentials, circular means.
//! * [`scanner`] — exceptional-set statistics over energy grids.
//! * [`operator`] — finite-volume block Jacobi operators, integrated density
//!   of states, Green-function decay.

pub mod drivers;
pub mod error;
pub mod linalg;
pub mod lyapunov;
pub mod operator;
pub mod scanner;
pub mod stats;
pub mod subharmonic;
pub mod symplectic;

mod guide;

pub use error::{Error, Result};

/// Complex scalar used throughout the lab.
pub type C64 = num_complex::Complex<f64>;

/// Real dense matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;

/// Complex dense matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
