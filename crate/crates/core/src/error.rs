use thiserror::Error;

/// Failure modes surfaced by the solver stack.
///
/// Configuration problems are reported before any numerics run; numerical
/// failures carry enough context to pick a finer grid, a different spectral
/// window, or a geometry further from a degeneracy.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Geometry or solver parameters are inconsistent.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// The gauge branch cut would be evaluated where the cutoff is active.
    #[error("gauge branch cut crosses an active region: {0}")]
    BranchCut(String),

    /// The first two cross-section thresholds are too close to define a
    /// single-mode window.
    #[error("degenerate transverse thresholds: lambda1^2={lambda1_sq:.6e}, lambda2^2={lambda2_sq:.6e}")]
    DegenerateThresholds { lambda1_sq: f64, lambda2_sq: f64 },

    /// Requested an energy outside the single-mode window.
    #[error("k^2={k_sq:.6} outside the single-mode window ({lo:.6}, {hi:.6})")]
    OutsideWindow { k_sq: f64, lo: f64, hi: f64 },

    /// Cap exponent sits on an integer-order degeneracy of the radial pair.
    #[error("radial pair order {nu:.8} is too close to an integer; perturb the cone angle")]
    IntegerOrder { nu: f64 },

    /// Argument guard for the scaled radial pair.
    #[error("radial pair argument kr={kr:.3} exceeds the reliable range {max:.3}")]
    RadialRange { kr: f64, max: f64 },

    /// Eigenvalue search found no isolated candidate.
    #[error("expected exactly one eigenvalue in ({lo:.6}, {hi:.6}), found {found}")]
    WindowCount { lo: f64, hi: f64, found: usize },

    /// A tip amplitude fell below the configured floor; the mode decouples
    /// from one lead and the single-resonance model does not apply.
    #[error("tip amplitude |b{index}|={magnitude:.3e} below floor {floor:.3e} (flux-induced decoupling)")]
    TipDecoupled { index: usize, magnitude: f64, floor: f64 },

    /// A far-field or tip fit did not resolve its leading coefficient.
    #[error("{context}: fit residual {residual:.3e} exceeds {limit:.3e}")]
    FitUnresolved { context: String, residual: f64, limit: f64 },

    /// Linear algebra breakdown (singular pivot, non-convergence).
    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    /// Requested solve exceeds the configured memory budget.
    #[error("estimated factor storage {needed_mb} MB exceeds budget {budget_mb} MB; coarsen the grid or shorten the domain")]
    MemoryBudget { needed_mb: usize, budget_mb: usize },

    /// Grid spacing too coarse for the requested narrow diameter.
    #[error("grid step {h:.4} leaves {across:.1} voxels across the waist (need >= {min})")]
    NeckUnresolved { h: f64, across: f64, min: f64 },

    /// The fixed-point iteration for the pole left the asymptotic regime.
    #[error("resonance pole iteration not contracting (|correction| {correction:.3e} at eps={eps}); outside asymptotic regime")]
    OutsideRegime { eps: f64, correction: f64 },

    /// Peak search failed to bracket a resonance.
    #[error("resonance scan failed: {0}")]
    ScanFailed(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
}
