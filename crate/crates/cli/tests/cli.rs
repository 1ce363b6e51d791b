use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3
[dataset]
n_conditions = 10
n_realizations = 10
snr_step_db = 7.0
[training]
hidden_layers = [12]
batch_size = 16
epochs = 2
[sweep]
n_realizations = 10
grid = 3
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_numerolab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

#[test]
fn pipeline_commands_write_outputs() {
    let dir = setup();
    let d = dir.path();
    let base = ["--config", "tiny.toml", "--out", "out"];
    let ok = |args: &[&str]| {
        let mut all = base.to_vec();
        all.extend_from_slice(args);
        let o = run(d, &all);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(&["gen-dataset"]);
    let csv = fs::read_to_string(d.join("out/dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 8);
    assert!(d.join("out/dataset.meta.json").exists());

    let first = fs::read(d.join("out/dataset.csv")).unwrap();
    ok(&["gen-dataset"]);
    assert_eq!(fs::read(d.join("out/dataset.csv")).unwrap(), first);

    let text = ok(&["train"]);
    assert!(text.contains("held-out accuracy"));
    for f in ["model.mlp", "model.std", "history.csv", "train_report.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    ok(&["train", "--raw-features", "--resume", "out/model.mlp"]);

    let sel = ok(&["select", "--delay-us", "2", "--velocity-kmh", "100", "--snr-db", "20", "--model", "out/model.mlp"]);
    assert_eq!(sel.lines().count(), 1 + 3 + 6);
    assert!(sel.lines().nth(1).unwrap().starts_with("oracle,"));

    ok(&["sweep-snr", "--delay-us", "1", "--velocity-kmh", "60", "--model", "out/model.mlp"]);
    let curve = fs::read_to_string(d.join("out/snr_curve_d1.00us_v60kmh.csv")).unwrap();
    assert!(curve.starts_with("snr_db,oracle_loss_db,dnn_loss_db,baseline_loss_db,fixed_u1_loss_db"));

    ok(&["sweep-boundary", "--snr-db", "45", "--grid", "4"]);
    let grid = fs::read_to_string(d.join("out/boundary_snr45db.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 16);
    assert!(d.join("out/boundary_snr45db.meta.json").exists());
}

#[test]
fn exit_codes() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(run(d, &["--config", "missing.toml", "gen-dataset"]).status.code(), Some(2));
    fs::write(d.join("bad.toml"), "[dataset]\nnope = 1\n").unwrap();
    assert_eq!(run(d, &["--config", "bad.toml", "gen-dataset"]).status.code(), Some(2));
    assert_eq!(run(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(d, &["train", "--dataset", "absent.csv"]).status.code(), Some(2));

    fs::write(d.join("narrow.toml"), format!("{TINY}\n").replace("hidden_layers = [12]", "hidden_layers = [5]")).unwrap();
    assert!(run(d, &["--config", "tiny.toml", "--out", "o", "gen-dataset"]).status.success());
    assert!(run(d, &["--config", "tiny.toml", "--out", "o", "train"]).status.success());
    let o = run(d, &["--config", "narrow.toml", "--out", "o2", "train", "--dataset", "o/dataset.csv", "--resume", "o/model.mlp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("resume"));
}

#[test]
fn validate_detects_injected_fault() {
    let dir = setup();
    let o = run(dir.path(), &["validate", "--quick", "--inject-fault", "negate-isi-phase"]);
    assert_eq!(o.status.code(), Some(1));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().any(|l| l.starts_with("FAIL link impulse response")));
}

#[test]
fn quick_validate_passes() {
    let dir = setup();
    let o = run(dir.path(), &["validate", "--quick"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8(o.stdout).unwrap().contains(", 0 failed"));
}
