use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"
seed = 7
[dataset.synthetic]
kind = "color"
n_samples = 80
image_size = 16
n_classes = 2
p_corr = 0.95
[train]
latent_dim = 4
max_epochs = 2
batch_size = 16
encoder_channels = [8, 16]
decoder_channels = [16, 8]
[probe]
max_epochs = 20
[evidence]
steps = 4
extremes = 3
"#;

fn latentscout(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentscout"))
        .args(args)
        .env("LATENTSCOUT_RUN_ROOT", root)
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    err.trim_end().to_string()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    (dir, cfg.to_str().unwrap().to_string())
}

#[test]
fn pipeline_leaves_an_analyzed_run_with_a_report() {
    let (dir, cfg) = setup();
    let root = dir.path().join("runs");
    let v = ok_json(&latentscout(&root, &["pipeline", "--config", &cfg]));
    assert_eq!(v["status"], "analyzed");
    let run_dir = root.join(v["run_id"].as_str().unwrap());
    assert!(run_dir.join("report.html").exists() && run_dir.join("report.md").exists());
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "analyzed");

    let list = ok_json(&latentscout(&root, &["list"]));
    assert_eq!(list.as_array().unwrap().len(), 1);
}

#[test]
fn stages_run_in_order_and_are_idempotent() {
    let (dir, cfg) = setup();
    let root = dir.path().join("runs");
    let created = ok_json(&latentscout(&root, &["dataset", "gen", "--config", &cfg, "--latent-dim", "3"]));
    let run = created["run_id"].as_str().unwrap().to_string();

    let out = latentscout(&root, &["analyze", "--run", &run]);
    let line = error_line(&out);
    assert!(line.starts_with("error[state]:") && line.contains("train"), "{line}");
    assert_eq!(out.status.code(), Some(3));

    assert_eq!(ok_json(&latentscout(&root, &["train", "--run", &run]))["outcome"], "ran");
    assert_eq!(ok_json(&latentscout(&root, &["train", "--run", &run]))["outcome"], "skipped");
    assert_eq!(ok_json(&latentscout(&root, &["train", "--run", &run, "--force"]))["outcome"], "ran");
    ok_json(&latentscout(&root, &["analyze", "--run", &run]));
    ok_json(&latentscout(&root, &["probe", "--run", &run]));
    let ev = latentscout(&root, &["evidence", "--run", &run, "--dims", "top", "--k", "1"]);
    assert_eq!(ok_json(&ev)["outcome"], "ran");
    ok_json(&latentscout(&root, &["report", "--run", &run]));

    let scores: Value =
        serde_json::from_str(&std::fs::read_to_string(root.join(&run).join("scores.json")).unwrap()).unwrap();
    assert_eq!(scores.as_array().unwrap().len(), 3, "--latent-dim override applied");

    let v = ok_json(&latentscout(
        &root,
        &["verdict", "--run", &run, "--dim", "2", "--verdict", "valid", "--notes", "shape"],
    ));
    assert_eq!(v["dim"], 2);
    assert_eq!(ok_json(&latentscout(&root, &["report", "--run", &run]))["outcome"], "ran");
    let md = std::fs::read_to_string(root.join(&run).join("report.md")).unwrap();
    assert!(md.contains("valid"));

    let out = latentscout(&root, &["verdict", "--run", &run, "--dim", "9", "--verdict", "valid"]);
    assert!(error_line(&out).starts_with("error[contract]:"));
}

#[test]
fn bad_input_fails_with_one_line() {
    let (dir, cfg) = setup();
    let root = dir.path().join("runs");
    let bogus = dir.path().join("bogus.toml");
    std::fs::write(&bogus, format!("{TINY}\n[analysis]\nkk = 3\n")).unwrap();
    let line = error_line(&latentscout(&root, &["pipeline", "--config", bogus.to_str().unwrap()]));
    assert!(line.starts_with("error[config]:") && line.contains("kk"), "{line}");

    let line = error_line(&latentscout(&root, &["train"]));
    assert!(line.starts_with("error[usage]:") && line.contains("--run"), "{line}");

    let line = error_line(&latentscout(&root, &["train", "--run", "missing"]));
    assert!(line.starts_with("error[not_found]:"), "{line}");

    let line = error_line(&latentscout(&root, &["pipeline", "--config", &cfg, "--beta", "-1"]));
    assert!(line.starts_with("error[config]:") && line.contains("beta"), "{line}");
}

#[test]
fn json_configs_are_accepted() {
    let (dir, _) = setup();
    let root = dir.path().join("runs");
    let cfg: toml::Value = toml::from_str(TINY).unwrap();
    let path = dir.path().join("tiny.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let v = ok_json(&latentscout(&root, &["dataset", "gen", "--config", path.to_str().unwrap()]));
    assert_eq!(v["n_samples"], 80);
}

#[test]
fn serve_reports_a_busy_port() {
    let (dir, _) = setup();
    let root = dir.path().join("runs");
    std::fs::create_dir_all(&root).unwrap();
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let line = error_line(&latentscout(&root, &["serve", "--port", &port]));
    assert!(line.contains(&port), "{line}");
}
