//! Spectrum of the glued operator near zero.

pub mod fd;
pub mod shoot;

pub use fd::{fd_oracle, fd_pencil, FdSpectrum, FD_BUDGET};
pub use shoot::{
    box_residual, default_scan_step, eigenvector, find_eigenvalues, ktilde, l2_orthonormalize, matching_sigma,
    EigenOptions, EigenPair, Eigenvalue, KTilde, Matching, Phase, Shooter, Spectrum,
};
