use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_abl-psp");

const SMALL_CONFIG: &str = r#"
optimizer = "psp"
seeds = [3]

[data]
n_train = 30
n_test = 12

[model]
epochs = 2
scorer_epochs = 2
pretrain_samples = 200
pretrain_epochs = 2
init_probes = 20

[abl]
iterations = 20
eval_interval = 10
"#;

fn abl(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn topk_lists_the_leading_masks() {
    let dir = tempfile::tempdir().unwrap();
    let o = abl(&["topk", "-k", "3", "0.1", "0.2", "0.6"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "FFT\t0.432\nFFF\t0.288\nFTT\t0.108\n");

    let o = abl(&["topk", "-k", "1", "0.9"], dir.path());
    assert_eq!(stdout(&o), "T\t0.9\n");
}

#[test]
fn topk_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pb.txt"), "0.1, 0.2\n0.6\n").unwrap();
    let o = abl(&["topk", "-k", "2", "--file", "pb.txt"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "FFT\t0.432\nFFF\t0.288\n");
}

#[test]
fn topk_rejects_out_of_range_input_without_output() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [&["topk", "-k", "2", "0.3", "1.2"][..], &["topk", "0.5", "x"][..]] {
        let o = abl(bad, dir.path());
        assert_eq!(o.status.code(), Some(4));
        assert!(o.stdout.is_empty());
        assert!(!o.stderr.is_empty());
    }
    let o = abl(&["topk", "--file", "missing.txt"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn generate_is_reproducible_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let a = abl(&["--config", &cfg, "--out", "a", "generate"], dir.path());
    let b = abl(&["--config", &cfg, "--out", "b", "generate"], dir.path());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let sums = |o: &Output| stdout(o).lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(sums(&a), sums(&b));
    assert_eq!(sums(&a).len(), 2);

    let train = std::fs::read_to_string(dir.path().join("a/train_seed3.jsonl")).unwrap();
    let mut lines = train.lines().map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap());
    let header = lines.next().unwrap();
    let dim = header["dim"].as_u64().unwrap() as usize;
    let records: Vec<serde_json::Value> = lines.collect();
    assert_eq!(records.len(), 30);
    for r in &records {
        let symbols = r["symbols"].as_str().unwrap();
        assert!((5..=10).contains(&symbols.len()), "{symbols}");
        assert_eq!(r["features"].as_array().unwrap().len(), symbols.len() * dim);
        assert!(r["label"] == 0 || r["label"] == 1);
    }
    let test = std::fs::read_to_string(dir.path().join("a/test_seed3.jsonl")).unwrap();
    assert_eq!(test.lines().count(), 13);
}

#[test]
fn run_twice_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    for out in ["a", "b"] {
        let o = abl(&["--config", &cfg, "--out", out, "run"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["psp_seed3.csv", "psp_seed3.json"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/psp_seed3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(csv.lines().next().unwrap(), "iter,symbol_acc,label_acc,cr,kb_accesses,rules_generated");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/psp_seed3.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["abl"]["iterations"], 20);
    assert_eq!(summary["config"]["abl"]["t_ac"], 5);
    assert!(summary["acc_final"].is_number());
    assert!(dir.path().join("a/psp_seed3.timing.json").exists());
}

#[test]
fn pretrain_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    assert!(abl(&["--config", &cfg, "--out", "m", "pretrain"], dir.path()).status.success());
    assert!(abl(&["--config", &cfg, "--out", "m", "generate"], dir.path()).status.success());
    let o = abl(
        &["--config", &cfg, "eval", "--model", "m/perception_seed3.params", "--data", "m/test_seed3.jsonl"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["instances"], 12);
    let acc = v["symbol_acc"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&acc));
}

#[test]
fn config_and_io_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[abl]\nt_ac = 0\n");
    assert_eq!(abl(&["--config", &bad, "generate"], dir.path()).status.code(), Some(2));

    let unknown = write_config(dir.path(), "[abl]\nbogus = 1\n");
    let o = abl(&["--config", &unknown, "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    assert_eq!(abl(&["--config", "nope.toml", "generate"], dir.path()).status.code(), Some(3));

    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let o = abl(&["--config", &cfg, "eval", "--model", "none.params", "--data", "none.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(3));

    let o = abl(&["--config", &cfg, "run", "--optimizer", "annealing"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
