use std::path::Path;
use std::process::{Command, Output};

fn crashforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashforge"))
        .args(args)
        .env_remove("CRASHFORGE_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const HELP_PAGES: [&[&str]; 13] = [
    &[],
    &["scenarios"],
    &["scenarios", "list"],
    &["generate"],
    &["stats"],
    &["split"],
    &["render-preview"],
    &["train"],
    &["eval"],
    &["gradcheck"],
    &["transfer-exp"],
    &["config"],
    &["config", "show"],
];

/// `--help` output is frozen in `tests/golden/`; set `UPDATE_GOLDEN=1` to rewrite.
#[test]
fn help_pages_match_golden_files() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for page in HELP_PAGES {
        let mut args = page.to_vec();
        args.push("--help");
        let out = crashforge(&args);
        assert!(out.status.success(), "{args:?}");
        let name = if page.is_empty() { "crashforge".to_string() } else { page.join("_") };
        let path = dir.join(format!("{name}.txt"));
        if update {
            std::fs::write(&path, stdout(&out)).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(stdout(&out), golden, "help for {args:?} changed");
    }
}

#[test]
fn every_flag_has_a_description_and_defaults_are_shown() {
    let out = stdout(&crashforge(&["train", "--help"]));
    for flag in ["--data", "--val", "--init", "--lr", "--batch", "--epochs", "--seed", "--out"] {
        assert!(out.contains(flag), "{flag}");
    }
    for default in ["[default: xavier]", "[default: 0.001]", "[default: 32]", "[default: 30]"] {
        assert!(out.contains(default), "{default}");
    }
}

#[test]
fn scenarios_list_has_fifteen_rows() {
    let out = crashforge(&["scenarios", "list"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 16);
}

#[test]
fn usage_errors_exit_one() {
    let out = crashforge(&["generate", "--episodes", "0", "--seed", "1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage:"));
    assert_eq!(crashforge(&["bogus"]).status.code(), Some(1));
    assert_eq!(crashforge(&["split", "d", "--seed", "1", "--ratios", "0.5,0.5"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("p.pgm");
    let out = crashforge(&["render-preview", "--scenario", "NoSuchScenario", "--seed", "7", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("NoSuchScenario"));
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);

    let missing = dir.path().join("missing");
    let out = crashforge(&["stats", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing"));
}

#[test]
fn render_preview_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    for p in [&a, &b] {
        let out = crashforge(&["render-preview", "--scenario", "RunningRedLight", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert!(bytes.starts_with(b"P5\n200 66\n255\n"));
    assert_eq!(bytes.len(), 14 + 200 * 66);
    assert_eq!(bytes, std::fs::read(&b).unwrap());
}

#[test]
fn generate_stats_split_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let ds_s = ds.to_str().unwrap();
    let out = crashforge(&["generate", "--episodes", "10", "--seed", "3", "--out", ds_s, "--frame-rate", "1", "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(ds.join("_SUCCESS").exists());

    let stats = crashforge(&["stats", ds_s]);
    assert_eq!(stats.status.code(), Some(0));
    assert!(stdout(&stats).contains("TOTAL"));

    let split = crashforge(&["split", ds_s, "--ratios", "0.6,0.2,0.2", "--seed", "1"]);
    assert_eq!(split.status.code(), Some(0), "{}", stderr(&split));
    let episodes: Vec<Vec<String>> = stdout(&split)
        .lines()
        .skip(1)
        .take(3)
        .map(|l| l.split_whitespace().take(2).map(String::from).collect())
        .collect();
    assert_eq!(episodes, [["train", "6"], ["val", "2"], ["test", "2"]]);

    let ckpt = dir.path().join("m.cfw");
    let train = crashforge(&[
        "train", "--data", ds.join("train").to_str().unwrap(), "--val", ds.join("val").to_str().unwrap(),
        "--epochs", "1", "--batch", "8", "--out", ckpt.to_str().unwrap(),
    ]);
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    assert!(dir.path().join("m.best.cfw").exists());
    let metrics = std::fs::read_to_string(dir.path().join("m.metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,val_loss,val_acc\n0,"));
    assert_eq!(metrics.lines().count(), 3);

    let eval = crashforge(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--data", ds.join("test").to_str().unwrap()]);
    assert_eq!(eval.status.code(), Some(0), "{}", stderr(&eval));
    assert!(stdout(&eval).contains("mean absolute deviation"));
    let devs = std::fs::read_to_string(dir.path().join("m.deviations.csv")).unwrap();
    assert!(devs.starts_with("image_path,label_deg,pred_deg,abs_dev_deg\n../images/"));

    // checkpoint init path and a bad init spec
    let again = crashforge(&[
        "train", "--data", ds.join("train").to_str().unwrap(), "--val", ds.join("val").to_str().unwrap(),
        "--epochs", "0", "--init", &format!("ckpt:{}", ckpt.display()), "--out", dir.path().join("n.cfw").to_str().unwrap(),
    ]);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(dir.path().join("n.cfw")).unwrap());
    assert_eq!(crashforge(&["train", "--data", "a", "--val", "b", "--init", "he", "--out", "c"]).status.code(), Some(1));
}

#[test]
fn config_show_round_trips() {
    let out = crashforge(&["config", "show"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("fog.std = 0.02"));
    assert!(text.contains("frame_rate_hz = 5"));
    assert!(text.contains("dt_s = 0.02"));
}

#[test]
fn workers_env_fallback_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "3")] {
        let out_dir = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_crashforge"))
            .args(["generate", "--episodes", "4", "--seed", "9", "--frame-rate", "1", "--out", out_dir.to_str().unwrap()])
            .env("CRASHFORGE_WORKERS", workers)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        manifests.push(std::fs::read(out_dir.join("frames.csv")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);
}
