//! Joint sparsity tight-frame reconstruction of coupled emission (PET) and
//! undersampled Fourier (MRI) data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ddtf;
pub mod error;
pub mod experiment;
pub mod fmat;
pub mod frames;
pub mod image;
pub mod metrics;
pub mod operators;
pub mod solvers;
pub mod synth;
pub mod verify;
mod linalg;

pub use error::{Error, Result};
pub use image::{project_box, ComplexVector, CountVector, Image};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tight_frames.md")]
    mod tight_frames {}
    #[doc = include_str!("../../../book/src/joint_sparsity.md")]
    mod joint_sparsity {}
    #[doc = include_str!("../../../book/src/learned_frames.md")]
    mod learned_frames {}
    #[doc = include_str!("../../../book/src/forward_models.md")]
    mod forward_models {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
