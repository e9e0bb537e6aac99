use std::fs;
use std::path::{Path, PathBuf};

use koopreg::cli::{run_from, EXIT_DIVERGED, EXIT_INPUT, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;

fn run(args: &[&str]) -> i32 {
    run_from(["koopreg", "-q"].iter().chain(args))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn synth(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let o = p(dir, out);
    let mut args = vec!["synth", "--out", &o];
    args.extend_from_slice(extra);
    assert_eq!(run(&args), EXIT_OK);
    dir.join(out)
}

#[test]
fn synth_writes_lattice_samples_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "s", &["--system", "lin-imaginary", "--dx", "0.1", "--noise-std", "0.1", "--seed", "7"]);
    let rows = fs::read_to_string(d.join("clean.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 3721);
    assert!(d.join("noisy.csv").exists());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["system"], "lin-imaginary");

    let again =
        synth(tmp.path(), "s2", &["--system", "lin-imaginary", "--dx", "0.1", "--noise-std", "0.1", "--seed", "7"]);
    assert_eq!(fs::read(d.join("noisy.csv")).unwrap(), fs::read(again.join("noisy.csv")).unwrap());

    let l = synth(tmp.path(), "l", &["--system", "lorenz"]);
    assert!(l.join("orbit.csv").exists() && l.join("segment.csv").exists());
}

#[test]
fn bad_system_name_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let o = p(tmp.path(), "bad");
    assert_eq!(run(&["synth", "--system", "duffing", "--out", &o]), EXIT_INPUT);
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "system = \"lin-real\"\ncolour = \"red\"\n").unwrap();
    let o = p(tmp.path(), "o");
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "synth", "--out", &o]), EXIT_INPUT);

    fs::write(&cfg, "system = \"lin-real\"\ndx = 0.5\n").unwrap();
    assert_eq!(run(&["--config", cfg.to_str().unwrap(), "synth", "--dx", "1", "--out", &o]), EXIT_OK);
    let rows = fs::read_to_string(tmp.path().join("o/clean.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 49, "the flag overrides the file");
}

#[test]
fn denoise_is_deterministic_and_emits_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "s", &["--system", "lin-imaginary", "--dx", "0.2", "--noise-std", "0.1", "--seed", "3"]);
    let (noisy, clean) = (p(&d, "noisy.csv"), p(&d, "clean.csv"));
    let outs: Vec<PathBuf> = ["a", "b"]
        .iter()
        .map(|name| {
            let o = p(tmp.path(), name);
            assert_eq!(
                run(&["denoise", "--noisy", &noisy, "--clean", &clean, "--max-iters", "3000", "--out", &o]),
                EXIT_OK
            );
            tmp.path().join(name)
        })
        .collect();
    for f in [
        "restored.csv",
        "report.json",
        "m_1.json",
        "m_2.json",
        "histogram.csv",
        "quiver.svg",
        "contour_m1.svg",
        "log.jsonl",
    ] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f} differs");
    }
    let r = report(&outs[0]);
    assert!(r["noise_reduction_pct"].as_f64().unwrap() > 70.0, "{r}");

    let svg = fs::read_to_string(outs[0].join("quiver.svg")).unwrap();
    let samples = 31 * 31;
    assert_eq!(svg.matches("<line").count(), 3 * samples);
    assert_eq!(svg.matches("<polygon").count(), 3 * samples);
    for c in ["blue", "black", "red"] {
        assert!(svg.contains(c));
    }

    // Re-scoring the written files reproduces the run's numbers.
    let e = p(tmp.path(), "eval");
    let restored = p(&outs[0], "restored.csv");
    assert_eq!(run(&["eval", "--est", &restored, "--ref", &clean, "--noisy", &noisy, "--out", &e]), EXIT_OK);
    let ev = report(&tmp.path().join("eval"));
    assert_eq!(ev["relative_mse_pct"], r["relative_mse_pct"]);
    assert_eq!(ev["noise_reduction_pct"], r["noise_reduction_pct"]);
}

#[test]
fn eval_trivial_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "s", &["--system", "lin-real", "--dx", "0.5", "--noise-std", "0.2"]);
    let (noisy, clean) = (p(&d, "noisy.csv"), p(&d, "clean.csv"));
    let e = p(tmp.path(), "e");
    assert_eq!(run(&["eval", "--est", &clean, "--ref", &clean, "--noisy", &noisy, "--out", &e]), EXIT_OK);
    let r = report(&tmp.path().join("e"));
    assert_eq!(r["relative_mse_pct"].as_f64(), Some(0.0));
    assert_eq!(r["noise_reduction_pct"].as_f64(), Some(100.0));

    let sparse = synth(tmp.path(), "sp", &["--system", "lin-real", "--dx", "1"]);
    assert_eq!(run(&["eval", "--est", &clean, "--ref", &p(&sparse, "clean.csv"), "--out", &e]), EXIT_INPUT);
}

#[test]
fn error_paths_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "s", &["--system", "lin-real", "--dx", "1"]);
    let clean = p(&d, "clean.csv");
    let o = p(tmp.path(), "o");
    assert_eq!(run(&["denoise", "--noisy", &clean, "--clean", &clean, "--out", &o]), EXIT_INPUT);

    let one = tmp.path().join("one.csv");
    let text = fs::read_to_string(&clean).unwrap();
    fs::write(&one, text.lines().take(2).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    assert_eq!(run(&["generalize", "--sparse", one.to_str().unwrap(), "--out", &o]), EXIT_INPUT);

    let l = synth(tmp.path(), "l", &["--system", "lorenz"]);
    assert_eq!(run(&["reduce", "--data", &p(&l, "segment.csv"), "--k", "0", "--out", &o]), EXIT_INPUT);
    assert_eq!(run(&["denoise", "--noisy", &p(tmp.path(), "missing.csv"), "--out", &o]), EXIT_INPUT);
}

#[test]
fn overflowing_data_reports_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = synth(tmp.path(), "s", &["--system", "lin-real", "--dx", "0.5"]);
    let text = fs::read_to_string(d.join("clean.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let cols: Vec<&str> = lines[5].split(',').collect();
    lines[5] = format!("{},{},1e300,1e300", cols[0], cols[1]);
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = p(tmp.path(), "o");
    assert_eq!(run(&["denoise", "--noisy", bad.to_str().unwrap(), "--out", &o]), EXIT_DIVERGED);
    assert!(tmp.path().join("o/optimizer.json").exists());
}

#[test]
fn gradcheck_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = p(tmp.path(), "g");
    assert_eq!(run(&["gradcheck", "--seeds", "1", "--out", &o]), EXIT_OK);
    let r: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("g/gradcheck.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    assert_eq!(run(&["gradcheck", "--seeds", "1", "--tolerance", "1e-15", "--out", &o]), EXIT_VALIDATION);
}

#[test]
fn generalize_and_reduce_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let sp = synth(tmp.path(), "sp", &["--system", "lin-imaginary", "--dx", "1"]);
    let dc = synth(tmp.path(), "dc", &["--system", "lin-imaginary", "--dx", "0.1"]);
    let o = p(tmp.path(), "gen");
    assert_eq!(
        run(&["generalize", "--sparse", &p(&sp, "clean.csv"), "--reference", &p(&dc, "clean.csv"), "--out", &o]),
        EXIT_OK
    );
    let g = tmp.path().join("gen");
    assert_eq!(fs::read_to_string(g.join("generalized.csv")).unwrap().lines().count() - 1, 3721);
    assert!(report(&g)["relative_mse_pct"].as_f64().unwrap() <= 1.0);

    let l = synth(tmp.path(), "l", &["--system", "lorenz"]);
    let o = p(tmp.path(), "red");
    assert_eq!(run(&["reduce", "--data", &p(&l, "segment.csv"), "--max-iters", "500", "--out", &o]), EXIT_OK);
    let r = tmp.path().join("red");
    for f in [
        "beta_1.json",
        "beta_2.json",
        "m_1.json",
        "m_2.json",
        "restored.csv",
        "unit_speed.svg",
        "cos2.svg",
        "quiver.svg",
    ] {
        assert!(r.join(f).exists(), "{f}");
    }
    let rep = report(&r);
    assert!(rep["unit_residual_rms"].is_number() && rep["mean_cos2"].is_number());
}
