//! Forward models and data-fidelity terms.

mod mask;
mod mri;
mod pet;
mod sparse;

pub use mask::{make_mask, MaskKind, SamplingMask};
pub use mri::MriOperator;
pub use pet::{build_pet_operator, build_pet_operator_rect, PetGeometry, PetOperator};
pub use sparse::CsrMatrix;
