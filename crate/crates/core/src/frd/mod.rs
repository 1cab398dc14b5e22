//! Finite-range decomposition of `C^{(a)} = (L_η^{(a)})^{−1}`.

pub mod decomposition;
pub mod io;
pub mod ptfamily;
pub mod spectral;
pub mod zd;

pub use decomposition::{bubble_beta, decompose, t_n, Backend, CovSlice, CovarianceDecomposition, SliceEvaluator};
pub use ptfamily::PtFamily;
pub use spectral::spectral_fraction;
pub use zd::{infinite_volume_tables, ScaleTables};
