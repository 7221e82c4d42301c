use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nextpoi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nextpoi"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NEXTPOI_OUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = nextpoi(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(String::from)
        .collect()
}

/// Output files and hashes recorded in a manifest.
fn outputs(dir: &Path) -> Vec<String> {
    data_lines(&dir.join("manifest.txt"))
        .into_iter()
        .filter(|l| l.starts_with("output="))
        .collect()
}

fn checkin(user: &str, venue: &str, lat: f64, day: u32, hour: u32) -> String {
    let t = chrono::NaiveDate::from_ymd_opt(2012, 4, day).unwrap().and_hms_opt(hour, 0, 0).unwrap();
    format!("{user}\t{venue}\tcat{venue}\tPlace\t{lat}\t-73.98\t-240\t{} +0000 2012\n", t.format("%a %b %d %H:%M:%S"))
}

fn fixture(dir: &Path) -> std::path::PathBuf {
    let mut text = String::new();
    // alice: three sessions of three
    for day in [3, 5, 7] {
        for (h, v) in [(9, "a"), (12, "b"), (18, "c")] {
            text += &checkin("alice", v, 40.70, day, h);
        }
    }
    // bob: two sessions of three and a single check-in
    for day in [3, 6] {
        for (h, v) in [(8, "c"), (10, "d"), (20, "a")] {
            text += &checkin("bob", v, 40.71, day, h);
        }
    }
    text += &checkin("bob", "d", 40.71, 9, 8);
    // carol: one session only
    for h in [8, 9, 10] {
        text += &checkin("carol", "b", 40.70, 12, h);
    }
    let path = dir.join("checkins.tsv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn ingest_fixture_and_rerun_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let input = input.to_str().unwrap();
    let args = |out: &'static str| {
        vec!["ingest", "--input", input, "--format", "foursquare", "--out", out, "--min-session-len", "2", "--min-user-sessions", "2"]
    };
    ok(&args("a"), tmp.path());
    let sessions = data_lines(&tmp.path().join("a/sessions.tsv"));
    assert_eq!(sessions.len(), 5);
    ok(&args("b"), tmp.path());
    for f in ["sessions.tsv", "pois.tsv", "idmap.txt"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
    assert_eq!(outputs(&tmp.path().join("a")), outputs(&tmp.path().join("b")));

    // canonical input is re-sessionized and filtered the same way
    ok(&["ingest", "--input", "a", "--format", "canonical", "--out", "c", "--min-session-len", "2", "--min-user-sessions", "2"], tmp.path());
    assert_eq!(data_lines(&tmp.path().join("c/sessions.tsv")), sessions);
}

#[test]
fn usage_and_input_errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = nextpoi(&["ingest", "--input", "x", "--format", "csv", "--out", "o"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
    let missing = nextpoi(&["classify", "--sessions", "nowhere", "--out", "o"], tmp.path());
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("sessions.tsv"));
    let unknown = nextpoi(&["train", "--data", "d", "--variant", "three_lstm", "--out", "o"], tmp.path());
    assert!(!unknown.status.success());
}

#[test]
fn classify_recovers_planted_labels() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "3", "--out", "syn"], tmp.path());
    ok(&["classify", "--sessions", "syn", "--out", "lab"], tmp.path());
    let planted = data_lines(&tmp.path().join("syn/sessions.tsv"));
    let labeled = data_lines(&tmp.path().join("lab/sessions.tsv"));
    assert_eq!(planted, labeled);
    assert!(tmp.path().join("lab/profiles.tsv").exists());

    ok(&["classify", "--sessions", "syn", "--window-days", "1", "--out", "lab1"], tmp.path());
    assert!(data_lines(&tmp.path().join("lab1/manifest.txt")).iter().any(|l| l.starts_with("config_hash=")));
}

#[test]
fn toy_training_loss_falls_then_eval_reports() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--kind", "toy", "--seed", "0", "--out", "toy"], tmp.path());
    fs::write(tmp.path().join("small.cfg"), "d_model=16\ntf_heads=2\ntf_ff=32\nlstm_hidden=16\n").unwrap();
    ok(
        &["train", "--data", "toy", "--epochs", "4", "--lr", "2e-3", "--config", "small.cfg", "--out", "run"],
        tmp.path(),
    );
    let losses: Vec<f64> = data_lines(&tmp.path().join("run/loss.tsv"))
        .iter()
        .filter_map(|l| l.split('\t').nth(1)?.parse().ok())
        .collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.windows(2).take(3).all(|w| w[1] < w[0]), "{losses:?}");

    ok(&["eval", "--checkpoint", "run", "--data", "toy", "--regions", "--out", "ev"], tmp.path());
    let report = data_lines(&tmp.path().join("ev/report.tsv"));
    assert_eq!(report[0], "model\tsubset\ttop1\ttop5\ttop10\tmrr\tn");
    let subsets: Vec<&str> = report[1..].iter().map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(subsets, ["familiar", "unfamiliar", "total"]);
    assert!(data_lines(&tmp.path().join("ev/regions.tsv")).len() > 1);

    ok(&["eval", "--checkpoint", "run", "--data", "toy", "--subsets", "total", "--out", "ev2"], tmp.path());
    assert_eq!(data_lines(&tmp.path().join("ev2/report.tsv")).len(), 2);
}

#[test]
fn reruns_are_byte_identical_and_config_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--users", "6", "--out", "syn"], tmp.path());
    fs::write(tmp.path().join("o.cfg"), "epochs=2\nd_model=8\ntf_heads=2\nlstm_hidden=8\n").unwrap();
    for out in ["r1", "r2"] {
        ok(&["train", "--data", "syn", "--epochs", "50", "--seed", "4", "--config", "o.cfg", "--out", out], tmp.path());
    }
    assert_eq!(outputs(&tmp.path().join("r1")), outputs(&tmp.path().join("r2")));
    assert_eq!(data_lines(&tmp.path().join("r1/loss.tsv")).len(), 2);
    let run_cfg = fs::read_to_string(tmp.path().join("r1/run.cfg")).unwrap();
    assert!(run_cfg.contains("epochs=2\n") && run_cfg.contains("seed=4\n"));

    // a non-empty output directory is only replaced on request
    let again = nextpoi(&["train", "--data", "syn", "--config", "o.cfg", "--out", "r1"], tmp.path());
    assert!(!again.status.success());
    ok(&["--force", "train", "--data", "syn", "--seed", "4", "--config", "o.cfg", "--out", "r1"], tmp.path());
    assert_eq!(outputs(&tmp.path().join("r1")), outputs(&tmp.path().join("r2")));
}

#[test]
fn variant_flag_selects_structure() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--users", "6", "--out", "syn"], tmp.path());
    fs::write(tmp.path().join("o.cfg"), "d_model=8\ntf_heads=2\nlstm_hidden=8\n").unwrap();
    ok(&["train", "--data", "syn", "--epochs", "1", "--variant", "two_lstm", "--config", "o.cfg", "--out", "run"], tmp.path());
    let cfg = fs::read_to_string(tmp.path().join("run/model/model.cfg")).unwrap();
    assert!(cfg.contains("experts=lstm,lstm\n"), "{cfg}");
    assert!(cfg.contains("gate=true\n"));
}

#[test]
fn divergence_exits_nonzero_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--users", "6", "--out", "syn"], tmp.path());
    let out = nextpoi(&["train", "--data", "syn", "--lr", "1e300", "--epochs", "3", "--out", "run"], tmp.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    assert!(!tmp.path().join("run/manifest.txt").exists());
}

#[test]
fn majority_round_trip_through_eval() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--users", "6", "--revisit-prob", "0.9", "--out", "syn"], tmp.path());
    ok(&["train", "--data", "syn", "--model", "majority", "--out", "maj"], tmp.path());
    assert!(tmp.path().join("maj/majority.tsv").exists());
    ok(&["eval", "--checkpoint", "maj", "--data", "syn", "--out", "ev"], tmp.path());
    let report = data_lines(&tmp.path().join("ev/report.tsv"));
    assert!(report[1].starts_with("majority\tfamiliar\t"));
}

#[test]
fn ablate_writes_per_seed_and_mean_rows() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--users", "6", "--out", "syn"], tmp.path());
    fs::write(tmp.path().join("o.cfg"), "d_model=8\ntf_heads=2\nlstm_hidden=8\n").unwrap();
    let out_root = tmp.path().join("root");
    let run = Command::new(env!("CARGO_BIN_EXE_nextpoi"))
        .args(["ablate", "--data", "syn", "--seeds", "2", "--epochs", "1", "--variants", "full,no_moe", "--config", "o.cfg", "--out", "abl"])
        .current_dir(tmp.path())
        .env("NEXTPOI_OUT_ROOT", &out_root)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let dir = out_root.join("abl");
    let rows = data_lines(&dir.join("ablation.tsv"));
    assert_eq!(rows[0], "variant\tseed\tsubset\ttop1\ttop5\ttop10\tmrr\tn");
    assert_eq!(rows.len(), 1 + 2 * 3 * 3);
    assert_eq!(rows.iter().filter(|r| r.contains("\tmean\t")).count(), 6);
    for f in ["loss_full_0.tsv", "loss_full_1.tsv", "loss_no_moe_0.tsv", "loss_no_moe_1.tsv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}
