use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::frames::{CoefficientStack, TightFrame};
use crate::image::{compensated_sum, sq_dist, ComplexVector, CountVector, Image};
use crate::operators::{MriOperator, PetOperator};

/// Floor of the PET preconditioner diagonal, which vanishes where `u = 0`.
pub const PRECOND_FLOOR: f64 = 1e-12;

const MAX_BACKTRACK: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Pet,
    Mri,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Pet => "pet",
            Modality::Mri => "mri",
        }
    }
}

/// A data term `Φ(u)` together with the metric its inner solver uses.
pub trait Fidelity: Sync {
    fn modality(&self) -> Modality;
    fn shape(&self) -> (usize, usize);
    fn value(&self, u: ArrayView2<'_, f64>) -> Result<f64>;
    fn gradient(&self, u: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
    /// Diagonal scaling of the gradient step; `None` is the identity.
    fn preconditioner(&self, _u: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
        None
    }
}

/// `Φ1(u) = ⟨1, Au + c⟩ − ⟨f, ln(Au + c)⟩`, stepped with
/// `M = diag(u ⊘ Aᵀ1)`.
#[derive(Debug, Clone, Copy)]
pub struct PetFidelity<'a> {
    pub op: &'a PetOperator,
    pub counts: &'a CountVector,
}

impl Fidelity for PetFidelity<'_> {
    fn modality(&self) -> Modality {
        Modality::Pet
    }

    fn shape(&self) -> (usize, usize) {
        self.op.shape()
    }

    fn value(&self, u: ArrayView2<'_, f64>) -> Result<f64> {
        self.op.fidelity(u, self.counts)
    }

    fn gradient(&self, u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.op.gradient(u, self.counts)
    }

    fn preconditioner(&self, u: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
        let sens = self.op.sensitivity();
        let mut m = u.mapv(|x| x.max(PRECOND_FLOOR));
        m.iter_mut().zip(sens).for_each(|(m, s)| *m /= s);
        Some(m)
    }
}

/// `Φ2(u) = (κ/2)‖F_p u − g‖²`.
#[derive(Debug, Clone, Copy)]
pub struct MriFidelity<'a> {
    pub op: &'a MriOperator,
    pub kspace: &'a ComplexVector,
    pub kappa: f64,
}

impl Fidelity for MriFidelity<'_> {
    fn modality(&self) -> Modality {
        Modality::Mri
    }

    fn shape(&self) -> (usize, usize) {
        self.op.shape()
    }

    fn value(&self, u: ArrayView2<'_, f64>) -> Result<f64> {
        self.op.fidelity(u, self.kspace, self.kappa)
    }

    fn gradient(&self, u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.op.gradient(u, self.kspace, self.kappa)
    }
}

/// One multiplicative EM update `u ← (u ⊘ Aᵀ1) ⊙ Aᵀ(f ⊘ (Au + c))`.
pub fn em_step(op: &PetOperator, f: &CountVector, u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if f.len() != op.n_measurements() {
        return Err(Error::Dimension(format!("{} counts, operator has {} rays", f.len(), op.n_measurements())));
    }
    let y = op.expected_counts(u)?;
    let ratio: Vec<f64> = f.as_slice().iter().zip(&y).map(|(f, y)| f / y).collect();
    let mut back = op.adjoint(&ratio)?;
    Zip::from(&mut back)
        .and(u)
        .and(&Array2::from_shape_vec(op.shape(), op.sensitivity().to_vec()).unwrap())
        .for_each(|b, &u, &s| *b *= u / s);
    Ok(back)
}

/// EM reconstruction from an all-ones start, clamped to `[0, bound]` at the end.
pub fn em_init(op: &PetOperator, f: &CountVector, iters: usize, bound: f64) -> Result<Image> {
    let mut u = Array2::from_elem(op.shape(), 1.0);
    for _ in 0..iters {
        u = em_step(op, f, u.view())?;
    }
    Ok(Image::new(u, bound)?.project())
}

/// `clamp(Re(F^* R_Λᵀ g), 0, bound)`.
pub fn zero_fill_init(op: &MriOperator, g: &ComplexVector, bound: f64) -> Result<Image> {
    Ok(Image::new(op.adjoint(g)?, bound)?.project())
}

/// The strongly convex image subproblem
/// `Φ(u) + (μ/2)‖W u − v‖² + (α/2)‖u − u_prev‖²` over `[0, a]^N`.
pub struct ImageSubproblem<'a> {
    pub fidelity: &'a dyn Fidelity,
    pub frame: &'a dyn TightFrame,
    pub coeffs: &'a CoefficientStack,
    pub anchor: &'a Image,
    pub mu: f64,
    pub alpha: f64,
}

impl ImageSubproblem<'_> {
    pub fn objective(&self, u: ArrayView2<'_, f64>) -> Result<f64> {
        let wu = self.frame.analyze(u)?;
        Ok(compensated_sum([
            self.fidelity.value(u)?,
            0.5 * self.mu * sq_dist(wu.coeffs.view(), self.coeffs.coeffs.view()),
            0.5 * self.alpha * sq_dist(u, self.anchor.view()),
        ]))
    }

    /// `∇Φ(u) + μ(u − Wᵀv) + α(u − u_prev)`.
    pub fn gradient(&self, u: ArrayView2<'_, f64>, wtv: &Array2<f64>) -> Result<Array2<f64>> {
        let mut g = self.fidelity.gradient(u)?;
        Zip::from(&mut g)
            .and(u)
            .and(wtv)
            .and(self.anchor.data())
            .for_each(|g, &u, &w, &p| *g += self.mu * (u - w) + self.alpha * (u - p));
        Ok(g)
    }

    /// `‖u − P(u − ∇)‖`, zero exactly at the constrained minimizer.
    pub fn projected_gradient_residual(&self, u: ArrayView2<'_, f64>) -> Result<f64> {
        let wtv = self.frame.synthesize(self.coeffs)?;
        let g = self.gradient(u, &wtv)?;
        let a = self.anchor.bound();
        Ok(compensated_sum(
            u.iter().zip(g.iter()).map(|(&u, &g)| (u - (u - g).clamp(0.0, a)).powi(2)),
        )
        .sqrt())
    }

    /// Projected (scaled) gradient descent from the anchor. Each step starts at
    /// `rho` and is halved until the objective does not increase, so the result
    /// is never worse than the anchor.
    pub fn solve(&self, rho: f64, iters: usize) -> Result<Image> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParams(format!("step size must be positive, got {rho}")));
        }
        let a = self.anchor.bound();
        let wtv = self.frame.synthesize(self.coeffs)?;
        let mut u = self.anchor.data().clone();
        let mut cur = self.objective(u.view())?;
        for _ in 0..iters {
            let mut dir = self.gradient(u.view(), &wtv)?;
            if let Some(m) = self.fidelity.preconditioner(u.view()) {
                dir *= &m;
            }
            let mut step = rho;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACK {
                let mut cand = u.clone();
                Zip::from(&mut cand).and(&dir).for_each(|c, &d| *c = (*c - step * d).clamp(0.0, a));
                let val = self.objective(cand.view())?;
                if val <= cur {
                    accepted = cand != u;
                    u = cand;
                    cur = val;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(self.anchor.with_data(u))
    }
}

/// PET image block: projected scaled gradient on the PET subproblem.
#[allow(clippy::too_many_arguments)]
pub fn solve_u1(
    op: &PetOperator,
    f: &CountVector,
    frame: &dyn TightFrame,
    v1: &CoefficientStack,
    u1_prev: &Image,
    mu1: f64,
    alpha1: f64,
    rho1: f64,
    inner_iters: usize,
) -> Result<Image> {
    let fid = PetFidelity { op, counts: f };
    ImageSubproblem { fidelity: &fid, frame, coeffs: v1, anchor: u1_prev, mu: mu1, alpha: alpha1 }.solve(rho1, inner_iters)
}

/// MRI image block: projected gradient on the MRI subproblem.
#[allow(clippy::too_many_arguments)]
pub fn solve_u2(
    op: &MriOperator,
    g: &ComplexVector,
    kappa: f64,
    frame: &dyn TightFrame,
    v2: &CoefficientStack,
    u2_prev: &Image,
    mu2: f64,
    alpha2: f64,
    rho2: f64,
    inner_iters: usize,
) -> Result<Image> {
    let fid = MriFidelity { op, kspace: g, kappa };
    ImageSubproblem { fidelity: &fid, frame, coeffs: v2, anchor: u2_prev, mu: mu2, alpha: alpha2 }.solve(rho2, inner_iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{cubic_bspline_bank, FrameTransform};
    use crate::operators::{build_pet_operator, make_mask, CsrMatrix, MaskKind, PetGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(shape: (usize, usize), seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::unit(Array2::from_shape_fn(shape, |_| rng.random_range(0.05..0.95))).unwrap()
    }

    fn identity_pet(n: usize, c: f64) -> PetOperator {
        let m = CsrMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect()).unwrap();
        PetOperator::from_matrix(m, (1, n), c).unwrap()
    }

    #[test]
    fn em_step_by_hand() {
        let op = identity_pet(2, 0.1);
        let f = CountVector::new(vec![1.0, 1.0]).unwrap();
        let u = em_step(&op, &f, Array2::from_elem((1, 2), 1.0).view()).unwrap();
        for x in u.iter() {
            assert!((x - 1.0 / 1.1).abs() < 1e-15);
        }
    }

    #[test]
    fn em_fixed_point() {
        let op = build_pet_operator(12, &PetGeometry::default_for(12), None).unwrap();
        let u = random_image((12, 12), 2);
        let f = CountVector::new(op.expected_counts(u.view()).unwrap()).unwrap();
        let next = em_step(&op, &f, u.view()).unwrap();
        let dev = next.iter().zip(u.data().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-14, "{dev}");
    }

    #[test]
    fn em_decreases_likelihood() {
        let op = build_pet_operator(12, &PetGeometry::default_for(12), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = CountVector::new((0..op.n_measurements()).map(|_| rng.random_range(0.0..20.0)).collect()).unwrap();
        let mut u = Array2::from_elem((12, 12), 1.0);
        let mut last = op.fidelity(u.view(), &f).unwrap();
        for _ in 0..50 {
            u = em_step(&op, &f, u.view()).unwrap();
            assert!(u.iter().all(|&x| x >= 0.0));
            let now = op.fidelity(u.view(), &f).unwrap();
            assert!(now <= last + 1e-12 * last.abs(), "{now} > {last}");
            last = now;
        }
    }

    #[test]
    fn zero_fill_with_full_mask_inverts() {
        let op = MriOperator::new(make_mask(MaskKind::Full, (16, 16), 0).unwrap());
        let u = random_image((16, 16), 4);
        let g = op.forward(u.view()).unwrap();
        let z = zero_fill_init(&op, &g, 1.0).unwrap();
        let dev = z.data().iter().zip(u.data().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-12);
    }

    #[test]
    fn zero_fill_dc_only_recovers_constant() {
        let keep = Array2::from_shape_fn((8, 8), |(i, j)| i == 0 && j == 0);
        let op = MriOperator::new(crate::operators::SamplingMask::from_keep(keep).unwrap());
        let g = op.forward(Array2::from_elem((8, 8), 0.4).view()).unwrap();
        let z = zero_fill_init(&op, &g, 1.0).unwrap();
        assert!(z.data().iter().all(|x| (x - 0.4).abs() < 1e-14));
    }

    #[test]
    fn unit_step_without_regularization_is_em() {
        let op = build_pet_operator(10, &PetGeometry::default_for(10), None).unwrap();
        let truth = random_image((10, 10), 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = CountVector::new(
            op.expected_counts(truth.view()).unwrap().iter().map(|y| y * rng.random_range(0.9..1.1)).collect(),
        )
        .unwrap();
        let start = Image::unit(Array2::from_elem((10, 10), 0.3)).unwrap();
        let w = FrameTransform::new(&cubic_bspline_bank(), (10, 10)).unwrap();
        let v = w.analyze(start.view()).unwrap();
        let u = solve_u1(&op, &f, &w, &v, &start, 0.0, 0.0, 1.0, 1).unwrap();
        let em = em_step(&op, &f, start.view()).unwrap().mapv(|x| x.clamp(0.0, 1.0));
        let dev = u.data().iter().zip(em.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-13, "{dev}");
    }

    #[test]
    fn consistent_data_is_stationary() {
        let side = 10;
        let op = build_pet_operator(side, &PetGeometry::default_for(side), None).unwrap();
        let mri = MriOperator::new(make_mask(MaskKind::Radial { lines: 8 }, (side, side), 0).unwrap());
        let u = random_image((side, side), 7);
        let w = FrameTransform::new(&cubic_bspline_bank(), (side, side)).unwrap();
        let v = w.analyze(u.view()).unwrap();
        let f = CountVector::new(op.expected_counts(u.view()).unwrap()).unwrap();
        let g = mri.forward(u.view()).unwrap();
        let u1 = solve_u1(&op, &f, &w, &v, &u, 0.05, 1e-3, 0.5, 10).unwrap();
        let u2 = solve_u2(&mri, &g, 1.0, &w, &v, &u, 1.0, 1e-3, 0.5, 10).unwrap();
        for out in [u1, u2] {
            let dev = out.data().iter().zip(u.data().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 1e-12, "{dev}");
        }
    }

    #[test]
    fn zero_step_is_rejected() {
        let mri = MriOperator::new(make_mask(MaskKind::Full, (8, 8), 0).unwrap());
        let u = random_image((8, 8), 8);
        let w = FrameTransform::new(&cubic_bspline_bank(), (8, 8)).unwrap();
        let v = w.analyze(u.view()).unwrap();
        let g = mri.forward(u.view()).unwrap();
        let r = solve_u2(&mri, &g, 1.0, &w, &v, &u, 1.0, 1e-3, 0.0, 10);
        assert!(matches!(r, Err(Error::InvalidParams(_))));
    }

    #[test]
    fn mri_least_squares_limit_recovers_truth() {
        let mri = MriOperator::new(make_mask(MaskKind::Full, (8, 8), 0).unwrap());
        let truth = random_image((8, 8), 9);
        let g = mri.forward(truth.view()).unwrap();
        let w = FrameTransform::new(&cubic_bspline_bank(), (8, 8)).unwrap();
        let start = Image::zeros(8, 8);
        let v = w.analyze(start.view()).unwrap();
        let u = solve_u2(&mri, &g, 1.0, &w, &v, &start, 0.0, 0.0, 0.5, 200).unwrap();
        let dev = u.data().iter().zip(truth.data().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-10, "{dev}");
    }
}
