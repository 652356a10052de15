//! Open-system dynamics of N two-level atoms exchanging excitation with a
//! lossy cavity mode that starts in the vacuum.
//!
//! The crate evolves the joint atom-cavity Lindblad equation, quantifies
//! memory effects through an environment-reset trace-distance measure,
//! computes superradiance characteristics (collective photon number,
//! emission rate, degree of superradiance), and bounds the accuracy of the
//! quadratic early-time map through Choi-matrix and excitation errors.
//!
//! Three parameter regimes are covered: early times (g t << 1, lossless),
//! the near-Markovian regime (gamma >> g, plateau statistics), and the
//! strongly non-Markovian regime (gamma ~ g/2, photon backflow).
//!
//! Public time arguments are dimensionless (g t), decay is given as the
//! ratio gamma/g. See the `examples/` directory for one runnable program
//! per capability and `src/main.rs` for the thin command line front end.

// validation guards use `!(x > 0.0)` on purpose: the negation also traps NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod choi;
pub mod dynamics;
pub mod harness;
pub mod linalg;
pub mod memory;
pub mod model;
pub mod superradiance;
pub mod symmetry;

/// Error taxonomy. Exit-code mapping for the CLI lives in `main.rs`:
/// config/usage 2, capacity 3, integration 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Centralized numeric tolerances. Anything asserted more than once is
/// named here so tests and implementation cannot drift apart.
pub mod tol {
    /// Max allowed |m - m^dagger| entry for a state to count as Hermitian.
    pub const HERMITICITY: f64 = 1e-12;
    /// Max allowed |Tr rho - 1|.
    pub const TRACE: f64 = 1e-10;
    /// Eigenvalues of a state may undershoot zero by at most this.
    pub const PSD_FLOOR: f64 = -1e-9;
    /// Lossless trajectories must conserve total excitation this tightly.
    pub const CONSERVATION: f64 = 1e-8;
    /// Relative slack for the generator drain identity d(Nex+Np)/dt = -gamma Np.
    pub const DRAIN_REL: f64 = 1e-6;
    /// Max deviation from the maximal-spin ladder for sector routing.
    pub const SECTOR_SUPPORT: f64 = 1e-12;
    /// Grid-max refinement stops once the improvement falls below this
    /// fraction of the current maximum.
    pub const REFINE_REL: f64 = 1e-4;
    /// Default integrator relative tolerance. Kept an order below the
    /// positivity floor so accumulated step error cannot breach it.
    pub const DEFAULT_REL_TOL: f64 = 1e-10;
    /// Largest dense Hilbert-space dimension the crate will allocate.
    pub const MAX_DENSE_DIM: usize = 4096;
}
