use crate::error::{Error, Result};

/// Every tunable of the reconstruction models. Field names follow the
/// config keys (`solver.<name>`).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Coupling weights between images and their frame coefficients.
    pub mu1: f64,
    pub mu2: f64,
    /// Joint-sparsity weight.
    pub lambda: f64,
    /// Sparsity weights of the single-modality models.
    pub lambda1: f64,
    pub lambda2: f64,
    /// MRI data weight.
    pub kappa: f64,
    /// Proximal weights of the image, dictionary and coefficient blocks.
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    /// Bounds `L ≤ weight ≤ U` every proximal weight must respect.
    pub prox_lower: f64,
    pub prox_upper: f64,
    /// Inner step sizes.
    pub rho1: f64,
    pub rho2: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Stop once `‖x^{k+1} − x^k‖ ≤ tol`; `None` means `1e-6·√N`.
    pub tol: Option<f64>,
    /// Box bounds of the PET and MRI images.
    pub a1: f64,
    pub a2: f64,
    /// Patch size of learned dictionaries.
    pub patch_size: usize,
    /// Iterations and sparsity weight of the coefficient/dictionary
    /// initialization; `None` uses `2λ`, which makes its keep rule match
    /// the one of the main iteration.
    pub init_iters: usize,
    pub lambda_init: Option<f64>,
    pub em_iters: usize,
    /// Split Bregman penalty.
    pub sb_mu: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            mu1: 0.05,
            mu2: 1.0,
            lambda: 1e-3,
            lambda1: 1e-3,
            lambda2: 1e-3,
            kappa: 1.0,
            alpha1: 1e-3,
            alpha2: 1e-3,
            beta1: 5e-5,
            beta2: 5e-5,
            gamma: 5e-5,
            prox_lower: 1e-8,
            prox_upper: 1e4,
            rho1: 0.5,
            rho2: 0.5,
            outer_iters: 100,
            inner_iters: 10,
            tol: None,
            a1: 1.0,
            a2: 1.0,
            patch_size: 8,
            init_iters: 10,
            lambda_init: None,
            em_iters: 20,
            sb_mu: 1.0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        for (name, x) in [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("kappa", self.kappa),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("a1", self.a1),
            ("a2", self.a2),
            ("sb_mu", self.sb_mu),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {x}"));
            }
        }
        for (name, x) in [("lambda", self.lambda), ("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(x >= 0.0 && x.is_finite()) {
                return bad(format!("{name} must be >= 0, got {x}"));
            }
        }
        if let Some(l) = self.lambda_init {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda_init must be >= 0, got {l}"));
            }
        }
        if !(self.prox_lower > 0.0 && self.prox_lower <= self.prox_upper) {
            return bad(format!(
                "proximal bounds need 0 < L <= U, got L={} U={}",
                self.prox_lower, self.prox_upper
            ));
        }
        for (name, x) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma", self.gamma),
        ] {
            if !(x >= self.prox_lower && x <= self.prox_upper) {
                return bad(format!(
                    "{name}={x} outside proximal bounds [{}, {}]",
                    self.prox_lower, self.prox_upper
                ));
            }
        }
        for (name, n) in [
            ("outer_iters", self.outer_iters),
            ("inner_iters", self.inner_iters),
            ("init_iters", self.init_iters),
            ("patch_size", self.patch_size),
        ] {
            if n == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return bad(format!("tol must be positive, got {t}"));
            }
        }
        Ok(())
    }

    pub fn tol_for(&self, n_pixels: usize) -> f64 {
        self.tol.unwrap_or(1e-6 * (n_pixels as f64).sqrt())
    }

    pub fn init_lambda(&self, lambda: f64) -> f64 {
        self.lambda_init.unwrap_or(2.0 * lambda)
    }
}
