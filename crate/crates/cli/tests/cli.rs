//! End-to-end checks of the `rmc` binary and its file interfaces.

use std::path::Path;
use std::process::{Command, Output};

fn rmc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_then_solve_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmc(
        &[
            "gen", "--n1", "40", "--n2", "30", "--rank", "2", "--p", "1.0", "--alpha", "0.0",
            "--seed", "7", "--out-prefix", "inst",
        ],
        dir.path(),
    );
    assert_success(&out);
    assert!(dir.path().join("inst.obs.txt").exists());
    assert!(dir.path().join("inst.truth.txt").exists());

    let out = rmc(
        &[
            "solve", "--input", "inst.obs.txt", "--rank", "2", "--threshold", "soft",
            "--beta-oracle", "inst.truth.txt", "--beta-factor", "1.1", "--gamma", "0.9",
            "--max-iters", "50", "--tol", "1e-9", "--seed", "0", "--trace-out", "trace.csv",
            "--lhat-out", "lhat.txt",
        ],
        dir.path(),
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("converged at t = 1"), "stdout: {stdout}");

    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with(
        "t,xi,successive_change,support_size,rel_inf_error,support_in_truth,wall_ms\n"
    ));
    // Full sampling, no outliers: recovered matrix matches the sidecar truth.
    let lhat = rmc_core::DenseMatrix::read_text(dir.path().join("lhat.txt")).unwrap();
    let truth = rmc_core::problem::read_truth_file(dir.path().join("inst.truth.txt"), 2).unwrap();
    assert!(lhat.max_abs_diff(&truth.l_star).unwrap() <= 1e-9 * truth.sigma1());
}

#[test]
fn solve_traces_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&rmc(
        &[
            "gen", "--n1", "30", "--n2", "30", "--rank", "2", "--p", "0.8", "--alpha", "0.1",
            "--seed", "3", "--out-prefix", "inst",
        ],
        dir.path(),
    ));
    for name in ["a.csv", "b.csv"] {
        assert_success(&rmc(
            &[
                "solve", "--input", "inst.obs.txt", "--rank", "2", "--threshold", "scad",
                "--scad-a", "3", "--beta-oracle", "inst.truth.txt", "--max-iters", "80",
                "--trace-out", name,
            ],
            dir.path(),
        ));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn solve_requires_exactly_one_beta_mode() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&rmc(
        &[
            "gen", "--n1", "20", "--n2", "20", "--rank", "2", "--p", "1.0", "--alpha", "0.0",
            "--seed", "1", "--out-prefix", "inst",
        ],
        dir.path(),
    ));
    let out = rmc(
        &["solve", "--input", "inst.obs.txt", "--rank", "2", "--threshold", "soft"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("exactly one of"), "stderr: {stderr}");
}

#[test]
fn phase_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "n1 = 30\nn2 = 30\naxis1 = p\naxis1_values = 0.7, 1.0\naxis2 = r\n\
               axis2_values = 2\nfixed_alpha = 0.0\ntrials = 2\nalgorithms = soft, hard\n\
               base_seed = 4\nmax_iters = 60\nstop_tol = 1e-7\n";
    std::fs::write(dir.path().join("exp.cfg"), cfg).unwrap();
    for sub in ["out1", "out2"] {
        assert_success(&rmc(
            &["phase", "--config", "exp.cfg", "--out-dir", sub],
            dir.path(),
        ));
    }
    for name in ["soft.csv", "soft.pgm", "hard.csv", "hard.pgm", "manifest.txt"] {
        let a = std::fs::read(dir.path().join("out1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("out2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let csv = std::fs::read_to_string(dir.path().join("out1/soft.csv")).unwrap();
    assert!(csv.starts_with(
        "algorithm,axis1_name,axis1,axis2_name,axis2,trials,successes,success_rate,mean_iters,mean_wall_ms\n"
    ));
    assert_eq!(csv.lines().count(), 3);
    let pgm = std::fs::read(dir.path().join("out1/soft.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n2 1\n255\n"));
    let manifest = std::fs::read_to_string(dir.path().join("out1/manifest.txt")).unwrap();
    assert!(manifest.contains("[config]"));
    assert_eq!(manifest.matches("sha256 ").count(), 4);
}

#[test]
fn verify_reports_all_lemmas_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmc(&["verify", "--trials", "5", "--seed", "1"], dir.path());
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for lemma in ["sparse-spectral", "perturbation", "sparse-projection", "threshold"] {
        assert!(stdout.contains(lemma), "missing {lemma} in: {stdout}");
    }
    assert_eq!(stdout.matches("PASS").count(), 4);

    let out = rmc(
        &["verify", "--trials", "5", "--lemma", "sparse-spectral"],
        dir.path(),
    );
    assert_success(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);

    let out = rmc(&["verify", "--lemma", "bogus"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn solve_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = rmc(
        &["solve", "--input", "missing.txt", "--rank", "2", "--threshold", "soft", "--beta", "1.0"],
        dir.path(),
    );
    assert!(!out.status.success());

    std::fs::write(dir.path().join("bad.txt"), "2 2 0.5\n1 1 3.0\n0 0 1.0\n").unwrap();
    let out = rmc(
        &["solve", "--input", "bad.txt", "--rank", "1", "--threshold", "soft", "--beta", "1.0"],
        dir.path(),
    );
    assert!(!out.status.success());
}
