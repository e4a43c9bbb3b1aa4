//! Shared numerical kernels: sparse symmetric storage, an envelope LDL^T
//! factorization with reverse Cuthill-McKee ordering, a shift-invert Lanczos
//! eigensolver for the generalized symmetric problem, and quadrature rules.

pub mod lanczos;
pub mod quadrature;
pub mod skyline;
pub mod sparse;
