//! Experiment configuration in flat `section.key=value` text.
//!
//! ```text
//! # comments and blank lines are ignored
//! model=jstf
//! phantom.variant=pd
//! mask.kind=radial
//! mask.lines=30
//! solver.mu1=0.05
//! ```
//!
//! Keys that are absent take their defaults; the defaults of `solver.*`
//! depend on the model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::operators::{MaskKind, PetGeometry};
use crate::solvers::{Model, SolverParams};
use crate::synth::{MriContrast, NoiseSpec, DEFAULT_GAUSSIAN_SIGMA, DEFAULT_POISSON_SCALE};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub variant: MriContrast,
    pub seed: u64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PetConfig {
    pub angles: usize,
    /// `None` means `ceil(1.5 · size)`.
    pub bins: Option<usize>,
    pub strip_width: f64,
    pub background: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    pub kind: MaskKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub phantom: PhantomConfig,
    pub pet: PetConfig,
    pub mask: MaskConfig,
    pub noise: NoiseSpec,
    pub solver: SolverParams,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::for_model(Model::Jstf)
    }
}

impl ExperimentConfig {
    pub fn for_model(model: Model) -> Self {
        ExperimentConfig {
            model,
            phantom: PhantomConfig { variant: MriContrast::Pd, seed: 0, size: 64 },
            pet: PetConfig { angles: 90, bins: None, strip_width: 1.0, background: 1.0 },
            mask: MaskConfig { kind: MaskKind::Radial { lines: 30 }, seed: 0 },
            noise: NoiseSpec { poisson_scale: DEFAULT_POISSON_SCALE, gaussian_sigma: DEFAULT_GAUSSIAN_SIGMA, seed: 0 },
            solver: model.default_params(),
            output: PathBuf::from("out"),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.phantom.size, self.phantom.size)
    }

    pub fn pet_geometry(&self) -> PetGeometry {
        let mut g = PetGeometry::default_for(self.phantom.size);
        g.n_angles = self.pet.angles;
        if let Some(b) = self.pet.bins {
            g.n_bins = b;
        }
        g.strip_width = self.pet.strip_width;
        g
    }

    /// Switch model, resetting the solver parameters to that model's defaults.
    pub fn with_model(mut self, model: Model) -> Self {
        self.model = model;
        self.solver = model.default_params();
        self
    }

    /// Set every seed (phantom, mask, noise) at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.phantom.seed = seed;
        self.mask.seed = seed;
        self.noise.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.phantom.size < 32 {
            return bad(format!("phantom.size must be >= 32, got {}", self.phantom.size));
        }
        if self.pet.angles == 0 || self.pet.bins == Some(0) {
            return bad("pet.angles and pet.bins must be >= 1".into());
        }
        if !(self.pet.strip_width > 0.0) {
            return bad(format!("pet.strip_width must be > 0, got {}", self.pet.strip_width));
        }
        if !(self.pet.background > 0.0) {
            return bad(format!("pet.background must be > 0, got {}", self.pet.background));
        }
        match self.mask.kind {
            MaskKind::Radial { lines: 0 } => return bad("mask.lines must be >= 1".into()),
            MaskKind::Random { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                return bad(format!("mask.fraction must be in (0, 1], got {fraction}"))
            }
            _ => {}
        }
        if !(self.noise.poisson_scale > 0.0) || !(self.noise.gaussian_sigma >= 0.0) {
            return bad("noise.scale must be > 0 and noise.sigma >= 0".into());
        }
        if self.solver.patch_size > self.phantom.size {
            return bad(format!("solver.patch_size {} exceeds phantom.size", self.solver.patch_size));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parse `text`, then let `overrides` replace (or add) individual keys.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", ln + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if kv.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", ln + 1)));
            }
        }
        for (k, v) in overrides {
            kv.insert(k.clone(), v.clone());
        }
        Self::from_map(kv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn from_map(mut kv: BTreeMap<String, String>) -> Result<Self> {
        let model = match kv.remove("model") {
            Some(m) => m.parse()?,
            None => Model::Jstf,
        };
        let mut c = ExperimentConfig::for_model(model);
        let mut take = |key: &str| kv.remove(key);
        fn num<T: std::str::FromStr>(key: &str, v: String) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = take($key) {
                    $field = num($key, v)?;
                }
            };
        }
        if let Some(v) = take("phantom.variant") {
            c.phantom.variant = v.parse()?;
        }
        set!("phantom.seed", c.phantom.seed);
        set!("phantom.size", c.phantom.size);
        set!("pet.angles", c.pet.angles);
        if let Some(v) = take("pet.bins") {
            c.pet.bins = if v == "auto" { None } else { Some(num("pet.bins", v)?) };
        }
        set!("pet.strip_width", c.pet.strip_width);
        set!("pet.background", c.pet.background);
        let lines = take("mask.lines");
        let fraction = take("mask.fraction");
        if let Some(kind) = take("mask.kind") {
            let need = |v: Option<String>, key: &str| {
                v.ok_or_else(|| Error::Config(format!("mask.kind={kind} requires key {key}")))
            };
            c.mask.kind = match kind.as_str() {
                "radial" => MaskKind::Radial { lines: num("mask.lines", need(lines, "mask.lines")?)? },
                "random" => MaskKind::Random { fraction: num("mask.fraction", need(fraction, "mask.fraction")?)? },
                "full" => MaskKind::Full,
                other => return Err(Error::Config(format!("mask.kind: unknown kind {other:?} (radial|random|full)"))),
            };
        } else if lines.is_some() || fraction.is_some() {
            if let Some(v) = lines {
                c.mask.kind = MaskKind::Radial { lines: num("mask.lines", v)? };
            }
            if fraction.is_some() {
                return Err(Error::Config("mask.fraction given without mask.kind=random".into()));
            }
        }
        set!("mask.seed", c.mask.seed);
        set!("noise.scale", c.noise.poisson_scale);
        set!("noise.sigma", c.noise.gaussian_sigma);
        set!("noise.seed", c.noise.seed);
        let s = &mut c.solver;
        set!("solver.mu1", s.mu1);
        set!("solver.mu2", s.mu2);
        set!("solver.lambda", s.lambda);
        set!("solver.lambda1", s.lambda1);
        set!("solver.lambda2", s.lambda2);
        set!("solver.kappa", s.kappa);
        set!("solver.alpha1", s.alpha1);
        set!("solver.alpha2", s.alpha2);
        set!("solver.beta1", s.beta1);
        set!("solver.beta2", s.beta2);
        set!("solver.gamma", s.gamma);
        set!("solver.prox_lower", s.prox_lower);
        set!("solver.prox_upper", s.prox_upper);
        set!("solver.rho1", s.rho1);
        set!("solver.rho2", s.rho2);
        set!("solver.outer_iters", s.outer_iters);
        set!("solver.inner_iters", s.inner_iters);
        if let Some(v) = take("solver.tol") {
            s.tol = if v == "auto" { None } else { Some(num("solver.tol", v)?) };
        }
        set!("solver.a1", s.a1);
        set!("solver.a2", s.a2);
        set!("solver.patch_size", s.patch_size);
        set!("solver.init_iters", s.init_iters);
        if let Some(v) = take("solver.lambda_init") {
            s.lambda_init = if v == "auto" { None } else { Some(num("solver.lambda_init", v)?) };
        }
        set!("solver.em_iters", s.em_iters);
        set!("solver.sb_mu", s.sb_mu);
        if let Some(v) = take("output.dir") {
            c.output = PathBuf::from(v);
        }
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown key {k}")));
        }
        c.validate()?;
        Ok(c)
    }

    /// Every key with its value; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = Vec::new();
        let mut put = |k: &str, v: String| out.push(format!("{k}={v}"));
        put("model", self.model.to_string());
        put("phantom.variant", self.phantom.variant.to_string());
        put("phantom.seed", self.phantom.seed.to_string());
        put("phantom.size", self.phantom.size.to_string());
        put("pet.angles", self.pet.angles.to_string());
        put("pet.bins", self.pet.bins.map_or("auto".into(), |b| b.to_string()));
        put("pet.strip_width", format!("{:?}", self.pet.strip_width));
        put("pet.background", format!("{:?}", self.pet.background));
        match self.mask.kind {
            MaskKind::Radial { lines } => {
                put("mask.kind", "radial".into());
                put("mask.lines", lines.to_string());
            }
            MaskKind::Random { fraction } => {
                put("mask.kind", "random".into());
                put("mask.fraction", format!("{fraction:?}"));
            }
            MaskKind::Full => put("mask.kind", "full".into()),
        }
        put("mask.seed", self.mask.seed.to_string());
        put("noise.scale", format!("{:?}", self.noise.poisson_scale));
        put("noise.sigma", format!("{:?}", self.noise.gaussian_sigma));
        put("noise.seed", self.noise.seed.to_string());
        let s = &self.solver;
        for (k, v) in [
            ("mu1", s.mu1),
            ("mu2", s.mu2),
            ("lambda", s.lambda),
            ("lambda1", s.lambda1),
            ("lambda2", s.lambda2),
            ("kappa", s.kappa),
            ("alpha1", s.alpha1),
            ("alpha2", s.alpha2),
            ("beta1", s.beta1),
            ("beta2", s.beta2),
            ("gamma", s.gamma),
            ("prox_lower", s.prox_lower),
            ("prox_upper", s.prox_upper),
            ("rho1", s.rho1),
            ("rho2", s.rho2),
        ] {
            put(&format!("solver.{k}"), format!("{v:?}"));
        }
        put("solver.outer_iters", s.outer_iters.to_string());
        put("solver.inner_iters", s.inner_iters.to_string());
        put("solver.tol", s.tol.map_or("auto".into(), |t| format!("{t:?}")));
        put("solver.a1", format!("{:?}", s.a1));
        put("solver.a2", format!("{:?}", s.a2));
        put("solver.patch_size", s.patch_size.to_string());
        put("solver.init_iters", s.init_iters.to_string());
        put("solver.lambda_init", s.lambda_init.map_or("auto".into(), |t| format!("{t:?}")));
        put("solver.em_iters", s.em_iters.to_string());
        put("solver.sb_mu", format!("{:?}", s.sb_mu));
        put("output.dir", self.output.display().to_string());
        let mut text = out.join("\n");
        text.push('\n');
        text
    }
}
