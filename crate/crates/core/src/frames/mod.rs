//! Undecimated tensor-product tight frames built from 1D filter banks.

mod bank;
mod transform;

pub use bank::{
    cubic_bspline_bank, dct_bank, dct_vector, haar_bank, verify_uep, Filter, FilterBank, UepReport,
    UEP_TOL,
};
pub use transform::{CoefficientStack, FrameTransform, TightFrame};
