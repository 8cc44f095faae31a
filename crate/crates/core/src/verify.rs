//! A quick self-check of the numerical invariants the solvers rely on.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ddtf::{dictionary_objective, dictionary_update, joint_hard_threshold, Dictionary};
use crate::error::Result;
use crate::frames::{cubic_bspline_bank, dct_bank, haar_bank, verify_uep, FrameTransform, TightFrame};
use crate::image::{dot, sq_norm};
use crate::operators::{build_pet_operator, make_mask, MaskKind, MriOperator, PetGeometry};
use crate::solvers::{em_step, pam_jstf, MriFidelity, PetFidelity, SolverParams, DESCENT_TOL};
use crate::synth::{make_phantom_pair, synth_mri, synth_pet, MriContrast, NoiseSpec};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(0.0..1.0))
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.sample(StandardNormal))
}

/// Runs every check; none is skipped when an earlier one fails.
pub fn run_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let n = 32;

    let banks = [("cubic B-spline", cubic_bspline_bank()), ("haar", haar_bank()), ("dct8", dct_bank(8)?)];
    let worst = banks.iter().map(|(_, b)| verify_uep(b).map(|r| r.max_deviation)).collect::<Result<Vec<_>>>()?;
    let max = worst.iter().cloned().fold(0.0, f64::max);
    out.push(check("uep", max <= 1e-12, format!("max deviation {max:.2e}")));

    let u = random(&mut rng, (n, n));
    let nu = sq_norm(u.view()).sqrt();
    let mut pr: f64 = 0.0;
    let mut parseval: f64 = 0.0;
    for (_, bank) in &banks {
        let w = FrameTransform::new(bank, (n, n))?;
        let c = w.analyze(u.view())?;
        let back = w.synthesize(&c)?;
        pr = pr.max(sq_norm((&back - &u).view()).sqrt() / nu);
        parseval = parseval.max((c.norm() - nu).abs() / nu);
    }
    out.push(check(
        "tight frame",
        pr <= 1e-12 && parseval <= 1e-12,
        format!("reconstruction {pr:.2e}, norm {parseval:.2e}"),
    ));

    let pet = build_pet_operator(n, &PetGeometry::default_for(n), None)?;
    let x = random(&mut rng, (n, n));
    let y: Vec<f64> = (0..pet.n_measurements()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lhs: f64 = pet.forward(x.view())?.iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs = dot(x.view(), pet.adjoint(&y)?.view());
    let scale = nu * y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = (lhs - rhs).abs() / scale;
    out.push(check("pet adjoint", rel <= 1e-10, format!("{rel:.2e}")));

    let mut worst_mri: f64 = 0.0;
    for kind in [MaskKind::Radial { lines: 30 }, MaskKind::Random { fraction: 0.1 }] {
        let op = MriOperator::new(make_mask(kind, (n, n), seed)?);
        let x = gaussian(&mut rng, (n, n));
        let g = op.forward(x.view())?;
        let z = crate::image::ComplexVector::new(
            (0..g.len()).map(|_| num_complex::Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect(),
        );
        let lhs: f64 = g.data.iter().zip(&z.data).map(|(a, b)| (a.conj() * b).re).sum();
        let rhs = dot(x.view(), op.adjoint(&z)?.view());
        let scale = sq_norm(x.view()).sqrt() * z.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        worst_mri = worst_mri.max((lhs - rhs).abs() / scale);
    }
    out.push(check("mri adjoint", worst_mri <= 1e-10, format!("{worst_mri:.2e}")));

    let pair = make_phantom_pair((n, n), MriContrast::Pd, seed)?;
    let noise = NoiseSpec { seed, ..Default::default() };
    let f = synth_pet(&pet, pair.pet_truth.view(), &noise)?;
    let mri = MriOperator::new(make_mask(MaskKind::Radial { lines: 30 }, (n, n), seed)?);
    let g = synth_mri(&mri, pair.mri_truth.view(), &noise)?;
    let p = Array2::from_shape_fn((n, n), |_| rng.random_range(0.2..0.8));
    let d = gaussian(&mut rng, (n, n));
    let h = 1e-6;
    let fd = |phi: &dyn Fn(&Array2<f64>) -> Result<f64>| -> Result<f64> {
        Ok((phi(&(&p + &(&d * h)))? - phi(&(&p - &(&d * h)))?) / (2.0 * h))
    };
    let pet_fd = fd(&|u| pet.fidelity(u.view(), &f))?;
    let pet_an = dot(pet.gradient(p.view(), &f)?.view(), d.view());
    let mri_fd = fd(&|u| mri.fidelity(u.view(), &g, 1.0))?;
    let mri_an = dot(mri.gradient(p.view(), &g, 1.0)?.view(), d.view());
    let e1 = (pet_fd - pet_an).abs() / pet_an.abs().max(1e-12);
    let e2 = (mri_fd - mri_an).abs() / mri_an.abs().max(1e-12);
    out.push(check("gradients", e1 <= 1e-5 && e2 <= 1e-5, format!("pet {e1:.2e}, mri {e2:.2e}")));

    let mut mismatches = 0;
    for _ in 0..200 {
        let rows = rng.random_range(1..=10);
        let b1 = gaussian(&mut rng, (rows, 3));
        let b2 = gaussian(&mut rng, (rows, 2));
        let w = [rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)];
        let lambda = rng.random_range(0.0..6.0);
        let t = joint_hard_threshold(&[b1.view(), b2.view()], &w, lambda, &[])?;
        for j in 0..rows {
            let e = w[0] * b1.row(j).dot(&b1.row(j)) + w[1] * b2.row(j).dot(&b2.row(j));
            let kept = t[0].row(j) == b1.row(j) && t[1].row(j) == b2.row(j);
            let zeroed = t[0].row(j).iter().chain(t[1].row(j).iter()).all(|x| *x == 0.0);
            if (e >= lambda && !kept) || (e < lambda && !zeroed) {
                mismatches += 1;
            }
        }
    }
    out.push(check("joint threshold", mismatches == 0, format!("{mismatches} mismatched rows")));

    let r = 4;
    let gm = gaussian(&mut rng, (r * r, 40));
    let vm = gaussian(&mut rng, (r * r, 40));
    let prev = Dictionary::dct(r)?;
    let d = dictionary_update(gm.view(), vm.view(), &prev, 1.0, 0.1)?;
    let best = dictionary_objective(gm.view(), vm.view(), d.matrix().view(), prev.matrix().view(), 1.0, 0.1);
    let mut beaten = 0;
    for _ in 0..50 {
        let q = nalgebra::DMatrix::from_fn(r * r, r * r, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
        let q = Array2::from_shape_fn((r * r, r * r), |(i, j)| q[(i, j)]);
        if dictionary_objective(gm.view(), vm.view(), q.view(), prev.matrix().view(), 1.0, 0.1) < best {
            beaten += 1;
        }
    }
    let defect = d.orthogonality_defect();
    out.push(check(
        "dictionary update",
        beaten == 0 && defect <= 1e-12,
        format!("orthogonality {defect:.2e}, beaten by {beaten} random frames"),
    ));

    let mut u = Array2::from_elem((n, n), 1.0);
    let mut last = pet.fidelity(u.view(), &f)?;
    let mut rises = 0;
    for _ in 0..50 {
        u = em_step(&pet, &f, u.view())?;
        let now = pet.fidelity(u.view(), &f)?;
        if now > last + 1e-12 * last.abs() {
            rises += 1;
        }
        last = now;
    }
    out.push(check("em monotone", rises == 0, format!("{rises} increases in 50 steps")));

    let params = SolverParams { outer_iters: 5, lambda: 3e-4, ..Default::default() };
    let u1 = crate::solvers::em_init(&pet, &f, params.em_iters, 1.0)?;
    let u2 = crate::solvers::zero_fill_init(&mri, &g, 1.0)?;
    let run = pam_jstf(
        PetFidelity { op: &pet, counts: &f },
        MriFidelity { op: &mri, kspace: &g, kappa: 1.0 },
        FrameTransform::new(&cubic_bspline_bank(), (n, n))?,
        u1,
        u2,
        &params,
        [None, None],
    );
    let detail = match &run {
        Ok(st) => {
            let rise = st.objective_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max);
            format!("{} iterations, largest change {rise:.2e}", st.k)
        }
        Err(e) => e.to_string(),
    };
    let ok = run.as_ref().is_ok_and(|st| {
        st.objective_trace.windows(2).all(|w| w[1] <= w[0] + DESCENT_TOL) && crate::solvers::coefficients_bounded(st)
    });
    out.push(check("joint descent", ok, detail));
    Ok(out)
}
