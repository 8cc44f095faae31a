//! Reconstruction algorithms: initializers, the alternating minimization of
//! the joint models, the single-modality learned-frame model and split
//! Bregman for the analysis baselines.

mod bregman;
mod fidelity;
mod model;
mod pam;
mod params;

pub use bregman::{
    analysis_mri, group_shrink, soft, split_bregman_analysis, split_bregman_janal, BregmanData, BregmanResult,
};
pub use fidelity::{
    em_init, em_step, solve_u1, solve_u2, zero_fill_init, Fidelity, ImageSubproblem, Modality, MriFidelity,
    PetFidelity, PRECOND_FLOOR,
};
pub use pam::{
    coefficients_bounded, ddtf_individual, objective_eval, pam_jsddtf, pam_jstf, trace_csv, FrameSet, JointState,
    ObjectiveTerms, TraceRow, DESCENT_TOL, TRACE_HEADER,
};
pub use model::Model;
pub use params::SolverParams;
