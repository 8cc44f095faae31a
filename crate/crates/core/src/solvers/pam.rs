use ndarray::Zip;

use super::fidelity::{Fidelity, ImageSubproblem, Modality, MriFidelity, PetFidelity};
use super::params::SolverParams;
use crate::ddtf::{dictionary_update, init_channels, joint_l20, threshold_stacks, Dictionary, PatchFrame};
use crate::error::{Error, Result};
use crate::frames::{CoefficientStack, FrameTransform, TightFrame};
use crate::image::{compensated_sum, sq_dist, sq_norm, Image};
use crate::metrics::rel_err;

/// Largest objective increase tolerated between outer iterations.
pub const DESCENT_TOL: f64 = 1e-10;

/// The analysis operators of a run: one fixed transform shared by every
/// modality, or one learned patch frame per modality.
#[derive(Debug, Clone)]
pub enum FrameSet {
    Fixed(FrameTransform),
    Learned(Vec<PatchFrame>),
}

impl FrameSet {
    pub fn frame(&self, i: usize) -> &dyn TightFrame {
        match self {
            FrameSet::Fixed(w) => w,
            FrameSet::Learned(fs) => &fs[i],
        }
    }

    pub fn dictionaries(&self) -> Vec<&Dictionary> {
        match self {
            FrameSet::Fixed(_) => Vec::new(),
            FrameSet::Learned(fs) => fs.iter().map(|f| &f.dict).collect(),
        }
    }
}

/// One line of the solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub h: f64,
    pub phi1: Option<f64>,
    pub phi2: Option<f64>,
    pub l20: usize,
    pub step_length: Option<f64>,
    pub rel_err1: Option<f64>,
    pub rel_err2: Option<f64>,
    /// `‖v_i‖` per modality; kept in memory, not written to CSV.
    pub coeff_norms: Vec<f64>,
}

pub const TRACE_HEADER: &str = "k,H,Phi1,Phi2,L20,step_length,RelErr1,RelErr2";

impl TraceRow {
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|x| format!("{x:.17e}")).unwrap_or_default();
        format!(
            "{},{:.17e},{},{},{},{},{},{}",
            self.k,
            self.h,
            opt(self.phi1),
            opt(self.phi2),
            self.l20,
            opt(self.step_length),
            opt(self.rel_err1),
            opt(self.rel_err2)
        )
    }
}

/// Trace as CSV text with header.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// The iterate `x = (u, W, v)` of a PAM run plus its history.
#[derive(Debug, Clone)]
pub struct JointState {
    pub images: Vec<Image>,
    pub modalities: Vec<Modality>,
    pub frames: FrameSet,
    pub coeffs: Vec<CoefficientStack>,
    pub k: usize,
    pub objective_trace: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl JointState {
    fn image_of(&self, m: Modality) -> Option<&Image> {
        self.modalities.iter().position(|&x| x == m).map(|i| &self.images[i])
    }

    /// The PET image, if this run has one.
    pub fn u1(&self) -> Option<&Image> {
        self.image_of(Modality::Pet)
    }

    /// The MRI image, if this run has one.
    pub fn u2(&self) -> Option<&Image> {
        self.image_of(Modality::Mri)
    }
}

/// Value of the model objective split into its terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerms {
    pub fidelity: Vec<f64>,
    pub coupling: Vec<f64>,
    pub l20: usize,
    pub total: f64,
}

/// Weights of one channel's blocks.
#[derive(Debug, Clone, Copy)]
struct Weights {
    mu: f64,
    alpha: f64,
    beta: f64,
    rho: f64,
}

fn weights_for(m: Modality, p: &SolverParams) -> Weights {
    match m {
        Modality::Pet => Weights { mu: p.mu1, alpha: p.alpha1, beta: p.beta1, rho: p.rho1 },
        Modality::Mri => Weights { mu: p.mu2, alpha: p.alpha2, beta: p.beta2, rho: p.rho2 },
    }
}

/// `Σ Φ_i(u_i) + Σ (μ_i/2)‖W_i u_i − v_i‖² + λ‖v‖_{2,0}`; `+∞` when an image
/// leaves its box.
pub fn objective_eval(
    fidelities: &[&dyn Fidelity],
    images: &[Image],
    frames: &FrameSet,
    coeffs: &[CoefficientStack],
    mus: &[f64],
    lambda: f64,
) -> Result<ObjectiveTerms> {
    let n = fidelities.len();
    if images.len() != n || coeffs.len() != n || mus.len() != n {
        return Err(Error::InvalidInput("objective needs one image, stack and weight per fidelity".into()));
    }
    let l20 = joint_l20(&coeffs.iter().collect::<Vec<_>>());
    if images.iter().any(|u| !u.is_feasible()) {
        return Ok(ObjectiveTerms { fidelity: vec![f64::INFINITY; n], coupling: vec![0.0; n], l20, total: f64::INFINITY });
    }
    let mut fidelity = Vec::with_capacity(n);
    let mut coupling = Vec::with_capacity(n);
    for i in 0..n {
        fidelity.push(fidelities[i].value(images[i].view())?);
        let wu = frames.frame(i).analyze(images[i].view())?;
        coupling.push(0.5 * mus[i] * sq_dist(wu.coeffs.view(), coeffs[i].coeffs.view()));
    }
    let total = compensated_sum(fidelity.iter().chain(&coupling).copied().chain([lambda * l20 as f64]));
    Ok(ObjectiveTerms { fidelity, coupling, l20, total })
}

struct Run<'a> {
    fids: &'a [&'a dyn Fidelity],
    weights: Vec<Weights>,
    gamma: f64,
    lambda: f64,
    truths: &'a [Option<&'a Image>],
}

impl Run<'_> {
    fn mus(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.mu).collect()
    }

    fn row(&self, state: &JointState, terms: &ObjectiveTerms, step: Option<f64>) -> Result<TraceRow> {
        let mut row = TraceRow {
            k: state.k,
            h: terms.total,
            phi1: None,
            phi2: None,
            l20: terms.l20,
            step_length: step,
            rel_err1: None,
            rel_err2: None,
            coeff_norms: state.coeffs.iter().map(|v| v.norm()).collect(),
        };
        for (i, m) in state.modalities.iter().enumerate() {
            let re = match self.truths.get(i).copied().flatten() {
                Some(t) => Some(rel_err(t.view(), state.images[i].view())?),
                None => None,
            };
            match m {
                Modality::Pet => (row.phi1, row.rel_err1) = (Some(terms.fidelity[i]), re),
                Modality::Mri => (row.phi2, row.rel_err2) = (Some(terms.fidelity[i]), re),
            }
        }
        Ok(row)
    }

    fn eval(&self, state: &JointState) -> Result<ObjectiveTerms> {
        objective_eval(self.fids, &state.images, &state.frames, &state.coeffs, &self.mus(), self.lambda)
    }

    /// Exact coefficient block: joint hard threshold of the weighted averages
    /// `(μ_i W_i u_i + γ v_i)/(μ_i + γ)`.
    fn v_step(&self, images: &[Image], frames: &FrameSet, coeffs: &[CoefficientStack]) -> Result<Vec<CoefficientStack>> {
        let mut avg = Vec::with_capacity(images.len());
        for (i, (u, v)) in images.iter().zip(coeffs).enumerate() {
            let mu = self.weights[i].mu;
            let mut a = frames.frame(i).analyze(u.view())?;
            let s = mu + self.gamma;
            Zip::from(&mut a.coeffs).and(&v.coeffs).for_each(|a, &v| *a = (mu * *a + self.gamma * v) / s);
            avg.push(a);
        }
        let w: Vec<f64> = self.weights.iter().map(|w| w.mu + self.gamma).collect();
        threshold_stacks(&avg.iter().collect::<Vec<_>>(), &w, 2.0 * self.lambda)
    }

    fn check(&self, state: &JointState, prev_h: f64, terms: &ObjectiveTerms) -> Result<()> {
        let breach = |what: String| Err(Error::InvariantBreach { iteration: state.k, what });
        if !(terms.total <= prev_h + DESCENT_TOL) {
            return breach(format!(
                "objective rose from {prev_h:.17e} to {:.17e} (fidelity {:?}, coupling {:?}, l20 {})",
                terms.total, terms.fidelity, terms.coupling, terms.l20
            ));
        }
        for d in state.frames.dictionaries() {
            let defect = d.orthogonality_defect();
            if defect > 1e-10 {
                return breach(format!("dictionary lost orthogonality: max |DDᵀ − I| = {defect:e}"));
            }
        }
        for (u, v) in state.images.iter().zip(&state.coeffs) {
            let cap = u.bound() * (u.len() as f64).sqrt();
            let norm = v.norm();
            if norm > cap * (1.0 + 1e-12) {
                return breach(format!("coefficient norm {norm:e} exceeds a·√N = {cap:e}"));
            }
            if !u.is_feasible() {
                return breach("image left its box".into());
            }
        }
        Ok(())
    }

    fn solve(&self, mut state: JointState, params: &SolverParams) -> Result<JointState> {
        let n_pix = state.images[0].len();
        let tol = params.tol_for(n_pix);
        let mut terms = self.eval(&state)?;
        state.objective_trace.push(terms.total);
        state.trace.push(self.row(&state, &terms, None)?);
        self.check(&state, terms.total, &terms)?;
        for _ in 0..params.outer_iters {
            let mut step_sq = Vec::new();
            let mut images = Vec::with_capacity(state.images.len());
            for (i, u) in state.images.iter().enumerate() {
                let w = self.weights[i];
                let next = ImageSubproblem {
                    fidelity: self.fids[i],
                    frame: state.frames.frame(i),
                    coeffs: &state.coeffs[i],
                    anchor: u,
                    mu: w.mu,
                    alpha: w.alpha,
                }
                .solve(w.rho, params.inner_iters)?;
                step_sq.push(sq_dist(next.view(), u.view()));
                images.push(next);
            }
            let frames = match &state.frames {
                FrameSet::Fixed(w) => FrameSet::Fixed(w.clone()),
                FrameSet::Learned(fs) => {
                    let mut out = Vec::with_capacity(fs.len());
                    for (i, f) in fs.iter().enumerate() {
                        let w = self.weights[i];
                        let g = f.scaled_patches(images[i].view())?;
                        let d = dictionary_update(g.view(), state.coeffs[i].coeffs.view(), &f.dict, w.mu, w.beta)?;
                        step_sq.push(sq_dist(d.matrix().view(), f.dict.matrix().view()));
                        out.push(PatchFrame::new(d, f.shape())?);
                    }
                    FrameSet::Learned(out)
                }
            };
            let coeffs = self.v_step(&images, &frames, &state.coeffs)?;
            for (a, b) in coeffs.iter().zip(&state.coeffs) {
                step_sq.push(sq_dist(a.coeffs.view(), b.coeffs.view()));
            }
            let step = compensated_sum(step_sq).sqrt();
            let prev_h = terms.total;
            state.images = images;
            state.frames = frames;
            state.coeffs = coeffs;
            state.k += 1;
            terms = self.eval(&state)?;
            state.objective_trace.push(terms.total);
            state.step_lengths.push(step);
            state.trace.push(self.row(&state, &terms, Some(step))?);
            self.check(&state, prev_h, &terms)?;
            if step <= tol {
                break;
            }
        }
        Ok(state)
    }
}

fn check_shapes(fids: &[&dyn Fidelity], images: &[Image]) -> Result<()> {
    for (f, u) in fids.iter().zip(images) {
        if f.shape() != u.shape() {
            return Err(Error::Dimension(format!(
                "{} image is {:?}, operator expects {:?}",
                f.modality().name(),
                u.shape(),
                f.shape()
            )));
        }
    }
    if images.windows(2).any(|w| w[0].shape() != w[1].shape()) {
        return Err(Error::Dimension("joint images must share one shape".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn start(
    fids: &[&dyn Fidelity],
    init: Vec<Image>,
    frames: FrameSet,
    coeffs: Vec<CoefficientStack>,
    lambda: f64,
    params: &SolverParams,
    truths: &[Option<&Image>],
) -> Result<JointState> {
    let run = Run {
        fids,
        weights: fids.iter().map(|f| weights_for(f.modality(), params)).collect(),
        gamma: params.gamma,
        lambda,
        truths,
    };
    let state = JointState {
        modalities: fids.iter().map(|f| f.modality()).collect(),
        images: init,
        frames,
        coeffs,
        k: 0,
        objective_trace: Vec::new(),
        step_lengths: Vec::new(),
        trace: Vec::new(),
    };
    run.solve(state, params)
}

fn with_bounds(init: Vec<Image>, fids: &[&dyn Fidelity], params: &SolverParams) -> Result<Vec<Image>> {
    init.into_iter()
        .zip(fids)
        .map(|(u, f)| {
            let a = match f.modality() {
                Modality::Pet => params.a1,
                Modality::Mri => params.a2,
            };
            Ok(u.with_bound(a)?.project())
        })
        .collect()
}

/// Joint sparsity model over a fixed tight frame `W`. The coefficients start
/// at the joint hard threshold of `(W u1⁰, W u2⁰)`.
#[allow(clippy::too_many_arguments)]
pub fn pam_jstf(
    pet: PetFidelity<'_>,
    mri: MriFidelity<'_>,
    w: FrameTransform,
    u1_0: Image,
    u2_0: Image,
    params: &SolverParams,
    truths: [Option<&Image>; 2],
) -> Result<JointState> {
    params.validate()?;
    let fids: [&dyn Fidelity; 2] = [&pet, &mri];
    let init = with_bounds(vec![u1_0, u2_0], &fids, params)?;
    check_shapes(&fids, &init)?;
    let canon = [w.analyze(init[0].view())?, w.analyze(init[1].view())?];
    let coeffs = threshold_stacks(
        &[&canon[0], &canon[1]],
        &[2.0 * params.mu1, 2.0 * params.mu2],
        2.0 * params.init_lambda(params.lambda),
    )?;
    start(&fids, init, FrameSet::Fixed(w), coeffs, params.lambda, params, &truths)
}

/// Joint sparsity model with two learned patch frames, initialized from the
/// DCT by the multichannel dictionary learning problem.
pub fn pam_jsddtf(
    pet: PetFidelity<'_>,
    mri: MriFidelity<'_>,
    u1_0: Image,
    u2_0: Image,
    params: &SolverParams,
    truths: [Option<&Image>; 2],
) -> Result<JointState> {
    params.validate()?;
    let fids: [&dyn Fidelity; 2] = [&pet, &mri];
    let init = with_bounds(vec![u1_0, u2_0], &fids, params)?;
    check_shapes(&fids, &init)?;
    learned(&fids, init, params.lambda, params, &truths)
}

fn learned(
    fids: &[&dyn Fidelity],
    init: Vec<Image>,
    lambda: f64,
    params: &SolverParams,
    truths: &[Option<&Image>],
) -> Result<JointState> {
    let shape = init[0].shape();
    let mus: Vec<f64> = fids.iter().map(|f| weights_for(f.modality(), params).mu).collect();
    let views: Vec<_> = init.iter().map(|u| u.view()).collect();
    let fit = init_channels(&views, params.patch_size, &mus, params.init_lambda(lambda), params.init_iters)?;
    let frames = fit
        .dicts
        .into_iter()
        .map(|d| PatchFrame::new(d, shape))
        .collect::<Result<Vec<_>>>()?;
    start(fids, init, FrameSet::Learned(frames), fit.coeffs, lambda, params, truths)
}

/// Single-modality learned-frame model `Φ(u) + (μ/2)‖W u − v‖² + λ_i‖v‖₀`,
/// with `λ_i` the weight of the fidelity's modality.
pub fn ddtf_individual(
    fidelity: &dyn Fidelity,
    u0: Image,
    params: &SolverParams,
    truth: Option<&Image>,
) -> Result<JointState> {
    params.validate()?;
    let lambda = match fidelity.modality() {
        Modality::Pet => params.lambda1,
        Modality::Mri => params.lambda2,
    };
    let fids = [fidelity];
    let init = with_bounds(vec![u0], &fids, params)?;
    check_shapes(&fids, &init)?;
    learned(&fids, init, lambda, params, &[truth])
}

/// `‖v_i‖ ≤ a_i √N` for every modality.
pub fn coefficients_bounded(state: &JointState) -> bool {
    state
        .images
        .iter()
        .zip(&state.coeffs)
        .all(|(u, v)| sq_norm(v.coeffs.view()).sqrt() <= u.bound() * (u.len() as f64).sqrt())
}
