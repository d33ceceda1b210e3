use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] =
    &["--calibration-scenes", "4", "--eval-scenes", "3", "--step-budget", "12", "--bootstrap-resamples", "50"];

fn ptp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptp")).args(args).output().expect("binary runs")
}

fn ptp_in(sub: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub];
    for pair in SMALL.chunks(2) {
        if !extra.contains(&pair[0]) {
            args.extend_from_slice(pair);
        }
    }
    args.extend_from_slice(&["--output-dir", out.to_str().unwrap()]);
    args.extend_from_slice(extra);
    ptp(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&ptp(&["--help"])), 0);
    assert_eq!(code(&ptp(&["run", "--help"])), 0);
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(code(&ptp(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&ptp(&["frobnicate"])), 1);
    assert_eq!(code(&ptp(&["run", "--stride", "many"])), 1);
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&ptp_in("run", &out, &["--eval-scenes", "0"])), 1);
    assert_eq!(code(&ptp_in("run", &out, &["--strategies", "prune_then_plan@1.5"])), 1);
    assert_eq!(code(&ptp_in("run", &out, &["--strategies", "vlm_only@0.5"])), 1);
    assert_eq!(code(&ptp_in("run", &out, &["--temperature", "0"])), 1);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_field = 3\n").unwrap();
    assert_eq!(code(&ptp_in("run", &out, &["--config", cfg.to_str().unwrap()])), 1);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&ptp_in("run", &out, &["--config", missing.to_str().unwrap()])), 1);
    assert!(!out.exists());
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.txt");
    assert_eq!(code(&ptp_in("run", &out, &["--ecdf", missing.to_str().unwrap()])), 2);

    let corrupt = dir.path().join("ecdf.txt");
    std::fs::write(&corrupt, "not a number\n").unwrap();
    assert_eq!(code(&ptp_in("run", &out, &["--ecdf", corrupt.to_str().unwrap()])), 2);

    let garbage = dir.path().join("metrics.csv");
    std::fs::write(&garbage, "a,b\n1,2\n").unwrap();
    assert_eq!(code(&ptp_in("report", &out, &[garbage.to_str().unwrap()])), 2);
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&ptp_in("run", &a, &[])), 0);
    assert_eq!(code(&ptp_in("run", &b, &[])), 0);
    for name in ["metrics.csv", "summary.csv", "episodes.jsonl", "ecdf.txt", "calibration_samples.jsonl"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs between runs");
    }
    let metrics = read(&a.join("metrics.csv"));
    // header plus 3 scenes x 3 strategies
    assert_eq!(metrics.lines().count(), 10);
    assert!(metrics.starts_with("episode_id,strategy,alpha,seed,"));

    let manifest = |dir: &Path| -> serde_json::Value {
        serde_json::from_str(&read(&dir.join("manifest-run.json"))).unwrap()
    };
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["command"], "run");
    assert_eq!(ma["outputs"].as_object().unwrap().len(), 5);
    assert_eq!(ma["outputs"], mb["outputs"]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "eval_scenes = 5\nstep_budget = 4\n\n[[strategies]]\nkind = \"vlm_only\"\n").unwrap();
    let o = ptp(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--eval-scenes",
        "2",
        "--bootstrap-resamples",
        "10",
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = read(&out.join("metrics.csv"));
    let rows: Vec<_> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<_> = r.split(',').collect();
        assert_eq!(cols[1], "vlm_only");
        assert!(cols[8].parse::<usize>().unwrap() <= 4, "step budget from the file was ignored");
    }
    // no prune_then_plan strategy, so no calibration happened
    assert!(!out.join("ecdf.txt").exists());
}

#[test]
fn calibrate_then_run_with_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal");
    let o = ptp_in("calibrate", &cal, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ecdf = cal.join("ecdf.txt");
    assert!(read(&cal.join("calibration_samples.jsonl")).lines().count() > 0);

    let fresh = dir.path().join("fresh");
    let reused = dir.path().join("reused");
    assert_eq!(code(&ptp_in("run", &fresh, &[])), 0);
    assert_eq!(code(&ptp_in("run", &reused, &["--ecdf", ecdf.to_str().unwrap()])), 0);
    assert_eq!(read(&fresh.join("metrics.csv")), read(&reused.join("metrics.csv")));
    assert!(!reused.join("ecdf.txt").exists());

    let manifest = read(&reused.join("manifest-run.json"));
    assert!(manifest.contains("ecdf.txt"));
}

#[test]
fn report_matches_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&ptp_in("run", &run, &[])), 0);
    let rep = dir.path().join("rep");
    let metrics = run.join("metrics.csv");
    assert_eq!(code(&ptp_in("report", &rep, &[metrics.to_str().unwrap()])), 0);
    assert_eq!(read(&rep.join("report.csv")), read(&run.join("summary.csv")));
}

#[test]
fn gen_scenes_writes_parseable_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&ptp_in("gen-scenes", &out, &["--calibration-scenes", "2", "--eval-scenes", "3"])), 0);
    let mut names: Vec<_> =
        std::fs::read_dir(out.join("scenes")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    assert_eq!(names.iter().filter(|n| n.starts_with("cal-")).count(), 2);
    for n in &names {
        ptp_core::gridworld::parse_scene(&read(&out.join("scenes").join(n))).unwrap();
    }
}

#[test]
fn sweep_and_ablation_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    assert_eq!(code(&ptp_in("sweep-alpha", &sweep, &["--alpha-grid", "0.2,0.5,0.8"])), 0);
    assert_eq!(read(&sweep.join("alpha_sweep.csv")).lines().count(), 4);

    let noise = dir.path().join("noise");
    assert_eq!(code(&ptp_in("noise-ablation", &noise, &[])), 0);
    assert_eq!(read(&noise.join("noise_ablation.csv")).lines().count(), 4);
}
