use ndarray::Zip;

use super::fidelity::{Fidelity, ImageSubproblem, Modality, MriFidelity};
use super::params::SolverParams;
use crate::error::{Error, Result};
use crate::frames::{CoefficientStack, TightFrame};
use crate::image::{sq_dist, Image};
use crate::operators::MriOperator;

/// `sign(x)·max(|x| − τ, 0)`.
pub fn soft(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// `max(1 − τ/‖(p, q)‖, 0)·(p, q)`.
pub fn group_shrink(p: f64, q: f64, tau: f64) -> (f64, f64) {
    let norm = p.hypot(q);
    if norm <= tau {
        return (0.0, 0.0);
    }
    let s = 1.0 - tau / norm;
    (s * p, s * q)
}

#[derive(Debug, Clone)]
pub struct BregmanResult {
    pub images: Vec<Image>,
    /// `‖W u − d‖` after each iteration, summed in quadrature over modalities.
    pub residuals: Vec<f64>,
}

/// The image-space data term of a split Bregman u-step.
pub enum BregmanData<'a> {
    Pet(&'a dyn Fidelity),
    Mri(MriFidelity<'a>),
}

impl BregmanData<'_> {
    fn fidelity(&self) -> &dyn Fidelity {
        match self {
            BregmanData::Pet(f) => *f,
            BregmanData::Mri(f) => f,
        }
    }
}

fn check_sb(params: &SolverParams) -> Result<()> {
    if !(params.sb_mu > 0.0) {
        return Err(Error::InvalidParams(format!("split Bregman penalty must be positive, got {}", params.sb_mu)));
    }
    if params.outer_iters == 0 || params.inner_iters == 0 {
        return Err(Error::InvalidParams("iteration counts must be >= 1".into()));
    }
    Ok(())
}

/// `argmin Φ(u) + (μ_SB/2)‖W u − (d − b)‖²`: exact in k-space for MRI then
/// clamped, projected scaled gradient for PET.
fn u_step(
    data: &BregmanData<'_>,
    w: &dyn TightFrame,
    target: &CoefficientStack,
    prev: &Image,
    params: &SolverParams,
) -> Result<Image> {
    match data {
        BregmanData::Mri(f) => {
            let mut rhs = f.op.adjoint(f.kspace)? * f.kappa;
            rhs.scaled_add(params.sb_mu, &w.synthesize(target)?);
            let u = f.op.solve_normal(rhs.view(), f.kappa, params.sb_mu)?;
            Ok(prev.with_data(u).project())
        }
        BregmanData::Pet(f) => ImageSubproblem {
            fidelity: *f,
            frame: w,
            coeffs: target,
            anchor: prev,
            mu: params.sb_mu,
            alpha: 0.0,
        }
        .solve(params.rho1, params.inner_iters),
    }
}

fn d_minus_b(d: &CoefficientStack, b: &CoefficientStack) -> CoefficientStack {
    let mut t = d.clone();
    t.coeffs -= &b.coeffs;
    t
}

/// Shared split Bregman loop, stopped once both the splitting residual and
/// the image change fall below `tol`; `shrink` maps the stacks `W u_i + b_i` to the
/// new `d_i` in place.
fn run(
    data: &[BregmanData<'_>],
    w: &dyn TightFrame,
    init: Vec<Image>,
    params: &SolverParams,
    shrink: impl Fn(&mut [CoefficientStack]),
) -> Result<BregmanResult> {
    check_sb(params)?;
    let tol = params.tol_for(init[0].len());
    let mut images = init;
    let mut d = images.iter().map(|u| w.analyze(u.view())).collect::<Result<Vec<_>>>()?;
    shrink(&mut d);
    let mut b: Vec<CoefficientStack> = d.iter().map(|s| CoefficientStack::zeros(s.channel_count(), s.shape, s.lowpass_index)).collect();
    let mut residuals = Vec::with_capacity(params.outer_iters);
    for _ in 0..params.outer_iters {
        let mut change = 0.0;
        for i in 0..images.len() {
            let next = u_step(&data[i], w, &d_minus_b(&d[i], &b[i]), &images[i], params)?;
            change += sq_dist(next.view(), images[i].view());
            images[i] = next;
        }
        let wu = images.iter().map(|u| w.analyze(u.view())).collect::<Result<Vec<_>>>()?;
        let mut next: Vec<CoefficientStack> = wu
            .iter()
            .zip(&b)
            .map(|(a, b)| {
                let mut s = a.clone();
                s.coeffs += &b.coeffs;
                s
            })
            .collect();
        shrink(&mut next);
        d = next;
        let mut res = 0.0;
        for i in 0..images.len() {
            Zip::from(&mut b[i].coeffs)
                .and(&wu[i].coeffs)
                .and(&d[i].coeffs)
                .for_each(|b, &wu, &d| *b += wu - d);
            res += sq_dist(wu[i].coeffs.view(), d[i].coeffs.view());
        }
        residuals.push(res.sqrt());
        if res.sqrt() <= tol && change.sqrt() <= tol {
            break;
        }
    }
    Ok(BregmanResult { images, residuals })
}

fn lambda_for(m: Modality, params: &SolverParams) -> f64 {
    match m {
        Modality::Pet => params.lambda1,
        Modality::Mri => params.lambda2,
    }
}

/// `min Φ(u) + λ_i‖W u‖₁` over the box, the low-pass channel unpenalized.
pub fn split_bregman_analysis(
    data: BregmanData<'_>,
    w: &dyn TightFrame,
    u0: Image,
    params: &SolverParams,
) -> Result<BregmanResult> {
    let modality = data.fidelity().modality();
    let tau = lambda_for(modality, params) / params.sb_mu;
    let bound = match modality {
        Modality::Pet => params.a1,
        Modality::Mri => params.a2,
    };
    let init = u0.with_bound(bound)?.project();
    run(&[data], w, vec![init], params, |d| {
        let low = d[0].lowpass_index;
        for (c, mut row) in d[0].coeffs.outer_iter_mut().enumerate() {
            if c != low {
                row.mapv_inplace(|x| soft(x, tau));
            }
        }
    })
}

/// `min Φ1(u1) + Φ2(u2) + λ‖(W u1, W u2)‖_{2,1}` with group shrinkage of each
/// coefficient pair.
pub fn split_bregman_janal(
    pet: &dyn Fidelity,
    mri: MriFidelity<'_>,
    w: &dyn TightFrame,
    u1_0: Image,
    u2_0: Image,
    params: &SolverParams,
) -> Result<BregmanResult> {
    let tau = params.lambda / params.sb_mu;
    let init = vec![u1_0.with_bound(params.a1)?.project(), u2_0.with_bound(params.a2)?.project()];
    run(&[BregmanData::Pet(pet), BregmanData::Mri(mri)], w, init, params, |d| {
        let low = d[0].lowpass_index;
        let (first, rest) = d.split_at_mut(1);
        let (p, q) = (&mut first[0].coeffs, &mut rest[0].coeffs);
        for c in (0..p.nrows()).filter(|&c| c != low) {
            for j in 0..p.ncols() {
                let (a, b) = group_shrink(p[[c, j]], q[[c, j]], tau);
                p[[c, j]] = a;
                q[[c, j]] = b;
            }
        }
    })
}

/// Convenience wrapper for the MRI analysis model.
pub fn analysis_mri(
    op: &MriOperator,
    g: &crate::image::ComplexVector,
    w: &dyn TightFrame,
    u0: Image,
    params: &SolverParams,
) -> Result<BregmanResult> {
    split_bregman_analysis(BregmanData::Mri(MriFidelity { op, kspace: g, kappa: params.kappa }), w, u0, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use crate::frames::{cubic_bspline_bank, FrameTransform};
    use crate::operators::{make_mask, MaskKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft(3.0, 1.0), 2.0);
        assert_eq!(soft(-0.5, 1.0), 0.0);
        assert_eq!(soft(-3.0, 1.0), -2.0);
    }

    #[test]
    fn group_shrink_values() {
        let (a, b) = group_shrink(3.0, 4.0, 2.0);
        assert!((a - 1.8).abs() < 1e-15 && (b - 2.4).abs() < 1e-15);
        assert_eq!(group_shrink(0.3, 0.4, 0.5), (0.0, 0.0));
        assert_eq!(group_shrink(0.3, 0.4, 0.6), (0.0, 0.0));
    }

    #[test]
    fn nonpositive_penalty_is_rejected() {
        let op = MriOperator::new(make_mask(MaskKind::Full, (8, 8), 0).unwrap());
        let g = op.forward(Array2::zeros((8, 8)).view()).unwrap();
        let w = FrameTransform::new(&cubic_bspline_bank(), (8, 8)).unwrap();
        let p = SolverParams { sb_mu: 0.0, ..Default::default() };
        assert!(matches!(analysis_mri(&op, &g, &w, Image::zeros(8, 8), &p), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn unregularized_full_mask_recovers_truth() {
        let op = MriOperator::new(make_mask(MaskKind::Full, (16, 16), 0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0));
        let g = op.forward(truth.view()).unwrap();
        let w = FrameTransform::new(&cubic_bspline_bank(), (16, 16)).unwrap();
        let p = SolverParams { lambda2: 0.0, outer_iters: 100, tol: Some(1e-12), ..Default::default() };
        let r = analysis_mri(&op, &g, &w, Image::zeros(16, 16), &p).unwrap();
        let dev = r.images[0].data().iter().zip(truth.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-8, "{dev}");
    }
}
