//! Reference solutions and certificates: Bregman projections, maximum-margin
//! directions and stationarity residuals.

mod bregman;
mod lp;
mod margin;
mod nnls;
mod nuclear;

pub use bregman::{
    bregman_projection, bregman_projection_with, kkt_residual, kkt_residual_with, project_affine,
    project_affine_dual, AffineProjection, BregmanProjectionResult, PROJECTION_TOL,
};
pub use lp::{solve_standard_lp, LpSolution};
pub use margin::{
    grid_margin, hard_svm_enumeration, max_margin, support_vectors, CertificateResiduals,
    MarginCertificate, SUPPORT_TOL,
};
pub use nnls::{nnls, nonneg_span_residual};
pub use nuclear::{
    factored_stationarity_residual, nuclear_grid_2x2, nuclear_margin, stationarity_residual_from,
    NuclearCertificate,
};
