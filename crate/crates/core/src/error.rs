use thiserror::Error;

/// Errors raised by the simulation and analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A combination of parameters cannot be simulated or analysed.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates an ordering or shape requirement.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The coincidence window equals the path delay, where neither regime applies.
    #[error("window width {window_s:e} s equals the path delay ΔL/c; regime is undefined")]
    RegimeBoundary { window_s: f64 },

    /// Quadrature did not reach the requested accuracy.
    #[error("quadrature did not converge: |I(n) - I(2n)| = {discrepancy:e} with {panels} panels")]
    Quadrature { discrepancy: f64, panels: usize },

    /// The fringe fit failed.
    #[error("fit failed: {message} (chi2/dof = {reduced_chi2:.4}, {points} points)")]
    Fit { message: String, reduced_chi2: f64, points: usize },

    /// Histograms acquired with dead time carry state across chunk boundaries.
    #[error("cannot merge histograms acquired with detector dead time")]
    MergeForbidden,

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_domain(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}
