//! Mixed quantum states prepared by entanglement swapping with imperfect
//! parametric down-conversion sources and imperfect photon detectors.
//!
//! The library evaluates, in closed form, the post-measurement state of the
//! two outgoing modes conditioned on a noisy Bell-measurement readout, and
//! derives four-fold coincidence probabilities, visibility curves,
//! post-selected fidelity and the CHSH correlation parameter. Every closed
//! form is cross-checked against a brute-force truncated-Fock-space
//! construction living in [`oracle`].

pub mod analysis;
pub mod config;
pub mod detectors;
pub mod inference;
pub mod numerics;
pub mod oracle;
pub mod sources;
pub mod swapstate;

use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A series failed to converge (bad ratio hint or term budget exhausted).
    #[error("series did not converge: {0}")]
    NonConvergence(String),
    /// The finite-temperature dark-count model is singular at eta = 1 with
    /// p_dc > 0; only the joint limit is meaningful.
    #[error("singular detector model: eta = 1 with p_dc > 0")]
    SingularModel,
    /// Conditioning on an event of probability zero.
    #[error("meaningless conditional probability: {0}")]
    MeaninglessConditional(String),
    /// Post-selection removed all weight distinguishable from truncation noise.
    #[error("post-selection success probability {success:e} is below the truncation tail bound {tail:e}")]
    EmptyPostselection { success: f64, tail: f64 },
    /// A materialization would exceed the configured memory budget.
    #[error("computation budget exceeded: {0}")]
    BudgetExceeded(String),
    /// A Bell-measurement bank mixing count and threshold detectors.
    #[error("mixed detector families within one measurement are not supported")]
    MixedDetectorFamilies,
    /// Curve with Max + Min = 0 has no defined visibility.
    #[error("degenerate coincidence curve (Max + Min = 0)")]
    DegenerateCurve,
    /// Configuration parsing or validation failure.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
