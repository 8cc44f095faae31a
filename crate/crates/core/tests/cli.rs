use std::path::Path;
use std::process::{Command, Output};

use frameforge::experiment::Bundle;

fn frameforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frameforge"))
        .args(args)
        .env("FRAMEFORGE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, seed: &str) {
    let out = frameforge(&["synth", "--size", "32", "--seed", seed, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_reports_every_check() {
    let out = frameforge(&["verify"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<_> = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert!(lines.len() >= 5, "{text}");
    assert!(lines.iter().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn unknown_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = frameforge(&["synth", "--model", "tv", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("jsddtf"));
}

#[test]
fn bad_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "solver.mu3 = 1\n").unwrap();
    let out = frameforge(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = frameforge(&["synth", "--config", "/nonexistent/frameforge.cfg"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn missing_bundle_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = frameforge(&["reconstruct", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 4);
}

#[test]
fn zero_threads_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_frameforge"))
        .arg("verify")
        .env("FRAMEFORGE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn reconstruct_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    synth(dir.path(), "3");
    let out = frameforge(&["reconstruct", "--model", "jstf", "--size", "32", "--seed", "3", "--iters", "3", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("jstf");
    for f in ["recon_pet.fmat", "recon_mri.fmat", "recon_pet.png", "trace.csv", "config.txt", "bundle.txt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let mut rdr = csv::Reader::from_path(run.join("metrics.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["model", "modality", "RelErr", "PSNR", "Corr"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(&r[0], "jstf");
        let rel: f64 = r[2].parse().unwrap();
        assert!(rel > 0.0 && rel < 1.0);
    }
    let trace = std::fs::read_to_string(run.join("trace.csv")).unwrap();
    assert!(trace.starts_with("k,H,Phi1,Phi2,L20,step_length,RelErr1,RelErr2"));
    assert_eq!(trace.lines().count(), 1 + 4);
}

/// Plain MLEM from an all-ones start, straight from the matrix entries.
fn mlem(bundle: &Bundle, iters: usize) -> Vec<f64> {
    let op = bundle.pet_operator().unwrap();
    let a: Vec<(usize, usize, f64)> = op.matrix().triplets().collect();
    let (m, n) = (op.matrix().rows(), op.matrix().cols());
    let f = bundle.pet_counts.as_slice();
    let mut sens = vec![0.0; n];
    for &(_, j, v) in &a {
        sens[j] += v;
    }
    let mut u = vec![1.0; n];
    for _ in 0..iters {
        let mut y = vec![op.background(); m];
        for &(i, j, v) in &a {
            y[i] += v * u[j];
        }
        let mut back = vec![0.0; n];
        for &(i, j, v) in &a {
            back[j] += v * f[i] / y[i];
        }
        for j in 0..n {
            u[j] *= back[j] / sens[j];
        }
    }
    u.into_iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

#[test]
fn compare_builds_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    synth(dir.path(), "4");
    let out = frameforge(&["compare", "--models", "analysis-mri,ddtf-pet,jstf", "--iters", "3", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let mut rdr = csv::Reader::from_path(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["modality", "index", "Initial", "Analysis", "DDTF", "JAnal", "JSTF", "JSDDTF"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
    let want: Vec<(String, String)> = ["PET", "MRI"]
        .iter()
        .flat_map(|m| ["RelErr", "PSNR", "Corr"].iter().map(move |i| (m.to_string(), i.to_string())))
        .collect();
    assert_eq!(keys, want);

    let cell = |m: &str, i: &str, col: usize| rows.iter().find(|r| &r[0] == m && &r[1] == i).unwrap()[col].to_string();
    // Analysis only ran on MRI, DDTF only on PET, JAnal and JSDDTF not at all.
    assert!(cell("PET", "RelErr", 3).is_empty());
    assert!(!cell("MRI", "RelErr", 3).is_empty());
    assert!(!cell("PET", "RelErr", 4).is_empty());
    assert!(cell("MRI", "RelErr", 4).is_empty());
    assert!(cell("PET", "RelErr", 5).is_empty() && cell("MRI", "RelErr", 7).is_empty());

    let bundle = Bundle::read(dir.path()).unwrap();
    let em = mlem(&bundle, 20);
    let truth = bundle.truth_pet.as_slice();
    let num: f64 = em.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = truth.iter().map(|b| b * b).sum();
    let initial: f64 = cell("PET", "RelErr", 2).parse().unwrap();
    assert!((initial - (num / den).sqrt()).abs() < 1e-6, "{initial} vs {}", (num / den).sqrt());

    let md = std::fs::read_to_string(dir.path().join("comparison.md")).unwrap();
    assert!(md.starts_with("| Modality | Index | Initial | Analysis | DDTF | JAnal | JSTF | JSDDTF |"));
}

#[test]
fn compare_rejects_runs_from_another_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    synth(dir.path(), "5");
    let out = frameforge(&["reconstruct", "--model", "ddtf-mri", "--size", "32", "--iters", "2", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    synth(dir.path(), "6");
    let out = frameforge(&["compare", "--models", "ddtf-mri", "--out", d]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("different bundle"));
}
