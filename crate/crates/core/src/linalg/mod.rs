//! Dense kernels: Householder QR, Jacobi SVD and randomized SVD.

mod qr;
mod rsvd;
mod svd;

pub use qr::qr_decompose;
pub use rsvd::{rsvd, rsvd_detailed, RsvdConfig, RsvdInfo};
pub use svd::{svd_full, SvdResult};

pub(crate) use qr::householder_qr;
