//! Phantom generation and noisy acquisition simulation.

mod noise;
mod phantom;

pub use noise::{
    element_rng, sample_poisson, synth_mri, synth_pet, NoiseSpec, DEFAULT_GAUSSIAN_SIGMA, DEFAULT_POISSON_SCALE,
};
pub use phantom::{make_phantom_pair, strong_edges, MriContrast, PhantomPair, Tissue};
