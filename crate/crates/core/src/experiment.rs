//! End-to-end experiments: data bundles, model runs and comparison tables.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fmat;
use crate::frames::{cubic_bspline_bank, FrameTransform};
use crate::image::{ComplexVector, CountVector, Image};
use crate::metrics::{csv_row, format_value, MetricsReport, CSV_HEADER};
use crate::operators::{build_pet_operator, make_mask, MriOperator, PetOperator, SamplingMask};
use crate::solvers::{
    ddtf_individual, em_init, pam_jsddtf, pam_jstf, split_bregman_analysis, split_bregman_janal, trace_csv,
    zero_fill_init, BregmanData, Model, MriFidelity, PetFidelity, SolverParams,
};
use crate::synth::{make_phantom_pair, synth_mri, synth_pet};

pub const MANIFEST: &str = "manifest.txt";
const FILES: [&str; 5] = ["pet_counts.fmat", "kspace.fmat", "mask.fmat", "truth_pet.fmat", "truth_mri.fmat"];

/// Synthetic measurements plus the ground truth they came from.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub config: ExperimentConfig,
    pub pet_counts: CountVector,
    pub kspace: ComplexVector,
    pub mask: SamplingMask,
    pub truth_pet: Image,
    pub truth_mri: Image,
}

impl Bundle {
    pub fn synthesize(config: &ExperimentConfig) -> Result<Bundle> {
        config.validate()?;
        let shape = config.shape();
        let pair = make_phantom_pair(shape, config.phantom.variant, config.phantom.seed)?;
        let pet = pet_operator(config)?;
        let mask = make_mask(config.mask.kind, shape, config.mask.seed)?;
        let mri = MriOperator::new(mask.clone());
        Ok(Bundle {
            config: config.clone(),
            pet_counts: synth_pet(&pet, pair.pet_truth.view(), &config.noise)?,
            kspace: synth_mri(&mri, pair.mri_truth.view(), &config.noise)?,
            mask,
            truth_pet: pair.pet_truth,
            truth_mri: pair.mri_truth,
        })
    }

    fn encoded(&self) -> Result<Vec<Vec<u8>>> {
        let counts = self.pet_counts.as_slice();
        Ok(vec![
            fmat::encode_real(Array2::from_shape_vec((counts.len(), 1), counts.to_vec()).unwrap().view())?,
            fmat::encode_complex(self.kspace.len(), 1, &self.kspace.data)?,
            fmat::encode_real(self.mask.to_real().view())?,
            fmat::encode_real(self.truth_pet.view())?,
            fmat::encode_real(self.truth_mri.view())?,
        ])
    }

    /// Checksum of the encoded data files.
    pub fn fingerprint(&self) -> Result<u32> {
        let mut h = crc32fast::Hasher::new();
        for bytes in self.encoded()? {
            h.update(&bytes);
        }
        Ok(h.finalize())
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in FILES.iter().zip(self.encoded()?) {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST);
        std::fs::write(&path, self.config.serialize()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Bundle> {
        let dir = dir.as_ref();
        let config = ExperimentConfig::load(dir.join(MANIFEST))?;
        let read = |name: &str| fmat::read_matrix(dir.join(name));
        let counts = read(FILES[0])?.into_real()?;
        let kspace = read(FILES[1])?.into_complex()?;
        let mut mask = SamplingMask::from_real(&read(FILES[2])?.into_real()?)?;
        mask.kind = config.mask.kind;
        mask.seed = config.mask.seed;
        let truth_pet = Image::new(read(FILES[3])?.into_real()?, 1.0)?;
        let truth_mri = Image::new(read(FILES[4])?.into_real()?, 1.0)?;
        if mask.shape() != config.shape() || truth_pet.shape() != config.shape() || truth_mri.shape() != config.shape()
        {
            return Err(Error::Dimension(format!("bundle {} does not match its manifest size", dir.display())));
        }
        if kspace.len() != mask.count() {
            return Err(Error::Dimension(format!(
                "{} k-space samples for a mask keeping {}",
                kspace.len(),
                mask.count()
            )));
        }
        Ok(Bundle {
            config,
            pet_counts: CountVector::new(counts.into_iter().collect())?,
            kspace: ComplexVector::new(kspace),
            mask,
            truth_pet,
            truth_mri,
        })
    }

    pub fn pet_operator(&self) -> Result<PetOperator> {
        let op = pet_operator(&self.config)?;
        if op.n_measurements() != self.pet_counts.len() {
            return Err(Error::Dimension(format!(
                "{} PET counts for an operator with {} rays",
                self.pet_counts.len(),
                op.n_measurements()
            )));
        }
        Ok(op)
    }

    pub fn mri_operator(&self) -> MriOperator {
        MriOperator::new(self.mask.clone())
    }
}

fn pet_operator(config: &ExperimentConfig) -> Result<PetOperator> {
    build_pet_operator(config.phantom.size, &config.pet_geometry(), None)?.with_background(config.pet.background)
}

/// Writes the bundle described by `config` into `out`.
pub fn cmd_synth(config: &ExperimentConfig, out: impl AsRef<Path>) -> Result<Bundle> {
    let bundle = Bundle::synthesize(config)?;
    bundle.write(out)?;
    Ok(bundle)
}

/// Images and diagnostics of one model run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: Model,
    pub init_pet: Image,
    pub init_mri: Image,
    pub pet: Option<Image>,
    pub mri: Option<Image>,
    /// CSV text of the iteration trace.
    pub trace: String,
}

impl RunOutput {
    pub fn metrics(&self, bundle: &Bundle) -> Result<Vec<(&'static str, MetricsReport)>> {
        let mut out = Vec::new();
        if let Some(u) = &self.pet {
            out.push(("pet", MetricsReport::compute(bundle.truth_pet.view(), u.view())?));
        }
        if let Some(u) = &self.mri {
            out.push(("mri", MetricsReport::compute(bundle.truth_mri.view(), u.view())?));
        }
        Ok(out)
    }
}

/// Initializers followed by the model's solver.
pub fn reconstruct(bundle: &Bundle, model: Model, params: &SolverParams) -> Result<RunOutput> {
    params.validate()?;
    let pet = bundle.pet_operator()?;
    let mri = bundle.mri_operator();
    let shape = bundle.config.shape();
    let init_pet = em_init(&pet, &bundle.pet_counts, params.em_iters, params.a1)?;
    let init_mri = zero_fill_init(&mri, &bundle.kspace, params.a2)?;
    let pf = PetFidelity { op: &pet, counts: &bundle.pet_counts };
    let mf = MriFidelity { op: &mri, kspace: &bundle.kspace, kappa: params.kappa };
    let truths = [Some(&bundle.truth_pet), Some(&bundle.truth_mri)];
    let (u1, u2, trace) = match model {
        Model::Jstf | Model::Jsddtf | Model::DdtfPet | Model::DdtfMri => {
            let st = match model {
                Model::Jstf => {
                    let w = FrameTransform::new(&cubic_bspline_bank(), shape)?;
                    pam_jstf(pf, mf, w, init_pet.clone(), init_mri.clone(), params, truths)?
                }
                Model::Jsddtf => pam_jsddtf(pf, mf, init_pet.clone(), init_mri.clone(), params, truths)?,
                Model::DdtfPet => ddtf_individual(&pf, init_pet.clone(), params, truths[0])?,
                _ => ddtf_individual(&mf, init_mri.clone(), params, truths[1])?,
            };
            (st.u1().cloned(), st.u2().cloned(), trace_csv(&st.trace))
        }
        Model::AnalysisPet | Model::AnalysisMri | Model::Janal => {
            let w = FrameTransform::new(&cubic_bspline_bank(), shape)?;
            let r = match model {
                Model::AnalysisPet => split_bregman_analysis(BregmanData::Pet(&pf), &w, init_pet.clone(), params)?,
                Model::AnalysisMri => split_bregman_analysis(BregmanData::Mri(mf), &w, init_mri.clone(), params)?,
                _ => split_bregman_janal(&pf, mf, &w, init_pet.clone(), init_mri.clone(), params)?,
            };
            let mut trace = String::from("k,residual\n");
            for (k, res) in r.residuals.iter().enumerate() {
                trace.push_str(&format!("{},{res:.17e}\n", k + 1));
            }
            let mut images = r.images.into_iter();
            match model {
                Model::AnalysisPet => (images.next(), None, trace),
                Model::AnalysisMri => (None, images.next(), trace),
                _ => (images.next(), images.next(), trace),
            }
        }
    };
    Ok(RunOutput { model, init_pet, init_mri, pet: u1, mri: u2, trace })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

const FINGERPRINT_FILE: &str = "bundle.txt";

/// Runs `config.model` on the bundle in `bundle_dir` and writes images,
/// previews, the trace, metrics and the resolved config into `out`. When a
/// solver invariant breaks, the error is also written to `out/breach.txt`.
pub fn cmd_reconstruct(config: &ExperimentConfig, bundle_dir: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<RunOutput> {
    let out = out.as_ref();
    let bundle = Bundle::read(bundle_dir)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let run = match reconstruct(&bundle, config.model, &config.solver) {
        Ok(r) => r,
        Err(e @ Error::InvariantBreach { .. }) => {
            write_text(&out.join("breach.txt"), &format!("{e}\n"))?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    write_run(&bundle, config, &run, out)?;
    Ok(run)
}

fn write_run(bundle: &Bundle, config: &ExperimentConfig, run: &RunOutput, out: &Path) -> Result<()> {
    for (name, img) in [("pet", &run.pet), ("mri", &run.mri)] {
        if let Some(u) = img {
            fmat::write_real(out.join(format!("recon_{name}.fmat")), u.view())?;
            fmat::write_png(out.join(format!("recon_{name}.png")), u)?;
        }
    }
    write_text(&out.join("trace.csv"), &run.trace)?;
    let mut csv = format!("{CSV_HEADER}\n");
    for (modality, m) in run.metrics(bundle)? {
        csv.push_str(&csv_row(run.model.name(), modality, &m));
        csv.push('\n');
    }
    write_text(&out.join("metrics.csv"), &csv)?;
    write_text(&out.join("config.txt"), &config.serialize())?;
    write_text(&out.join(FINGERPRINT_FILE), &format!("fingerprint={:08x}\n", bundle.fingerprint()?))
}

pub const TABLE_COLUMNS: [&str; 6] = ["Initial", "Analysis", "DDTF", "JAnal", "JSTF", "JSDDTF"];
const INDICES: [&str; 3] = ["RelErr", "PSNR", "Corr"];

/// Rows `(modality, index)`, columns [`TABLE_COLUMNS`]; empty cells are
/// models that were not run.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub cells: BTreeMap<(String, String, String), f64>,
}

impl ComparisonTable {
    pub fn build(bundle: &Bundle, runs: &[RunOutput]) -> Result<Self> {
        let mut cells = BTreeMap::new();
        let mut put = |modality: &str, column: &str, m: &MetricsReport| {
            for (idx, v) in INDICES.iter().zip([m.rel_err, m.psnr, m.corr]) {
                cells.insert((modality.to_string(), idx.to_string(), column.to_string()), v);
            }
        };
        if let Some(run) = runs.first() {
            put("PET", "Initial", &MetricsReport::compute(bundle.truth_pet.view(), run.init_pet.view())?);
            put("MRI", "Initial", &MetricsReport::compute(bundle.truth_mri.view(), run.init_mri.view())?);
        }
        for run in runs {
            for (modality, m) in run.metrics(bundle)? {
                put(&modality.to_uppercase(), run.model.family(), &m);
            }
        }
        Ok(ComparisonTable { cells })
    }

    pub fn get(&self, modality: &str, index: &str, column: &str) -> Option<f64> {
        self.cells.get(&(modality.into(), index.into(), column.into())).copied()
    }

    fn rows(&self) -> Vec<(Vec<String>, &'static str, &'static str)> {
        let mut rows = Vec::new();
        for modality in ["PET", "MRI"] {
            for idx in INDICES {
                let vals = TABLE_COLUMNS
                    .iter()
                    .map(|c| self.get(modality, idx, c).map(format_value).unwrap_or_default())
                    .collect();
                rows.push((vals, modality, idx));
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("modality,index,{}\n", TABLE_COLUMNS.join(","));
        for (vals, m, idx) in self.rows() {
            s.push_str(&format!("{m},{idx},{}\n", vals.join(",")));
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("| Modality | Index | {} |\n", TABLE_COLUMNS.join(" | "));
        s.push_str(&format!("|---|---|{}\n", "---|".repeat(TABLE_COLUMNS.len())));
        for (vals, m, idx) in self.rows() {
            s.push_str(&format!("| {m} | {idx} | {} |\n", vals.join(" | ")));
        }
        s
    }
}

fn read_fingerprint(run_dir: &Path) -> Result<Option<u32>> {
    let path = run_dir.join(FINGERPRINT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let hex = text
        .trim()
        .strip_prefix("fingerprint=")
        .ok_or_else(|| Error::Comparison(format!("{} is malformed", path.display())))?;
    u32::from_str_radix(hex, 16)
        .map(Some)
        .map_err(|_| Error::Comparison(format!("{} is malformed", path.display())))
}

fn load_run(bundle: &Bundle, model: Model, dir: &Path) -> Result<RunOutput> {
    let config = ExperimentConfig::load(dir.join("config.txt"))?;
    let p = &config.solver;
    let pet = bundle.pet_operator()?;
    let read = |name: &str, bound: f64| -> Result<Image> { Image::new(fmat::read_matrix(dir.join(name))?.into_real()?, bound) };
    Ok(RunOutput {
        model,
        init_pet: em_init(&pet, &bundle.pet_counts, p.em_iters, p.a1)?,
        init_mri: zero_fill_init(&bundle.mri_operator(), &bundle.kspace, p.a2)?,
        pet: if model.reconstructs_pet() { Some(read("recon_pet.fmat", p.a1)?) } else { None },
        mri: if model.reconstructs_mri() { Some(read("recon_mri.fmat", p.a2)?) } else { None },
        trace: std::fs::read_to_string(dir.join("trace.csv")).unwrap_or_default(),
    })
}

/// Compares `models` on the bundle in `dir`. Runs already present in
/// `dir/<model>/` are reused after checking they came from this bundle;
/// missing runs are computed in parallel with each model's default solver
/// parameters, adjusted by `overrides`.
pub fn cmd_compare(dir: impl AsRef<Path>, models: &[Model], overrides: &(dyn Fn(&mut SolverParams) + Sync)) -> Result<ComparisonTable> {
    let dir = dir.as_ref();
    let bundle = Bundle::read(dir)?;
    let fp = bundle.fingerprint()?;
    let runs = models
        .par_iter()
        .map(|&model| {
            let run_dir = dir.join(model.name());
            match read_fingerprint(&run_dir)? {
                Some(f) if f != fp => Err(Error::Comparison(format!(
                    "{} was produced from a different bundle ({f:08x}, expected {fp:08x})",
                    run_dir.display()
                ))),
                Some(_) => load_run(&bundle, model, &run_dir),
                None => {
                    let mut config = bundle.config.clone().with_model(model);
                    overrides(&mut config.solver);
                    config.output = run_dir.clone();
                    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
                    let run = reconstruct(&bundle, model, &config.solver)?;
                    write_run(&bundle, &config, &run, &run_dir)?;
                    Ok(run)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let table = ComparisonTable::build(&bundle, &runs)?;
    write_text(&dir.join("comparison.csv"), &table.to_csv())?;
    write_text(&dir.join("comparison.md"), &table.to_markdown())?;
    Ok(table)
}
