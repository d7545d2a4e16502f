use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ensroll::read_dataset;
use serde_json::{json, Value};
use tempfile::TempDir;

const N_T: usize = 6;
const HISTORY: usize = 2;

fn ensroll(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ensroll"));
    cmd.args(args).env_remove("ER_OUT_DIR").env_remove("ER_WORKERS").env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(o), stderr(o));
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_config(cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    ensroll(&args, &[])
}

fn gen_config(out: &Path, n_ic: usize, seed: u64, split: &str) -> Value {
    json!({
        "schema_version": "1",
        "system": "gray_scott",
        "grid": 16,
        "N_T": N_T,
        "combos": [{"f": 0.029, "k": 0.057}],
        "n_ic": n_ic,
        "seed": seed,
        "split": split,
        "out_dir": out,
    })
}

fn train_config(data: &Path, out: &Path, n_members: usize) -> Value {
    json!({
        "schema_version": "1",
        "dataset_dir": data,
        "out_dir": out,
        "n_members": n_members,
        "history": HISTORY,
        "model": {"base_channels": 2, "depth": 2, "d_t": 8, "emb_out": 8, "attn_grid": 2},
        "train": {"epochs": 2, "batch_size": 4, "learning_rate": 1e-3, "seed": 7}
    })
}

/// Every regular file under `dir` (relative path, bytes), sorted.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

struct Pipeline {
    tmp: TempDir,
}

impl Pipeline {
    /// Generates train/test data and trains a two-member ensemble.
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let t = tmp.path();
        assert_ok(&run_config("gen-data", &write_config(t, "gen_train.json", &gen_config(&t.join("train"), 3, 1, "train")), &[]));
        assert_ok(&run_config("gen-data", &write_config(t, "gen_test.json", &gen_config(&t.join("test"), 2, 2, "test")), &[]));
        let cfg = write_config(t, "train.json", &train_config(&t.join("train"), &t.join("ens"), 2));
        assert_ok(&run_config("train", &cfg, &["--deterministic"]));
        Self { tmp }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.tmp.path().join(p)
    }

    fn eval_config(&self, out: &str) -> Value {
        json!({
            "schema_version": "1",
            "ensemble_dir": self.path("ens"),
            "dataset_dir": self.path("test"),
            "out_dir": self.path(out),
        })
    }
}

#[test]
fn gen_data_is_deterministic_and_prints_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let a = run_config("gen-data", &write_config(t, "a.json", &gen_config(&t.join("a"), 2, 5, "train")), &[]);
    assert_ok(&a);
    assert!(stdout(&a).contains("N_s = 2, N_T = 6, grid 16x16"), "{}", stdout(&a));
    assert_ok(&run_config("gen-data", &write_config(t, "b.json", &gen_config(&t.join("b"), 2, 5, "train")), &[]));
    assert_eq!(tree(&t.join("a")), tree(&t.join("b")));
    assert!(!t.join("a").join(".ensroll.lock").exists());

    let c = write_config(t, "c.json", &gen_config(&t.join("c"), 2, 5, "train"));
    assert_ok(&run_config("gen-data", &c, &["--seed", "6"]));
    assert_ne!(tree(&t.join("a")), tree(&t.join("c")));
}

#[test]
fn schema_violations_exit_2_and_touch_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let out = t.join("never");
    let o = run_config("gen-data", &write_config(t, "zero.json", &gen_config(&out, 0, 1, "train")), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("/n_ic"), "{}", stderr(&o));
    assert!(!out.exists());

    let mut bad = gen_config(&out, 1, 1, "train");
    bad["grid"] = json!("large");
    let o = run_config("gen-data", &write_config(t, "bad.json", &bad), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    fs::write(t.join("broken.json"), "{ not json").unwrap();
    let o = run_config("train", &t.join("broken.json"), &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = ensroll(&["rollout"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = write_config(t, "train.json", &train_config(&t.join("nowhere"), &t.join("ens"), 2));
    let o = run_config("train", &cfg, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("nowhere"));
    assert!(!t.join("ens").exists());
}

#[test]
fn load_paths_are_written_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = json!({
        "schema_version": "1", "system": "load_paths", "N_T": 40, "n_ic": 5, "seed": 3,
        "out_dir": t.join("paths"), "load_path": {"n_ctrl": 4}
    });
    let o = run_config("gen-data", &write_config(t, "p.json", &cfg), &[]);
    assert_ok(&o);
    let v: Value = serde_json::from_slice(&fs::read(t.join("paths/load_paths.json")).unwrap()).unwrap();
    let paths = v["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 5);
    for p in paths {
        let s: Vec<f64> = serde_json::from_value(p["strain"].clone()).unwrap();
        assert_eq!(s.len(), 40);
        assert_eq!(s[0], 0.0);
        assert!(s.windows(2).all(|w| w[1] >= w[0]));
        assert!((0.07..=0.11).contains(s.last().unwrap()));
        assert_eq!(p["control_x"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn out_dir_env_override_and_lockfile() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let cfg = write_config(t, "g.json", &gen_config(&t.join("configured"), 1, 1, "train"));
    let target = t.join("from_env");
    let o = ensroll(
        &["gen-data", "--config", cfg.to_str().unwrap()],
        &[("ER_OUT_DIR", target.to_str().unwrap()), ("ER_WORKERS", "1")],
    );
    assert_ok(&o);
    assert!(target.join("manifest.json").exists());
    assert!(!t.join("configured").exists());

    fs::write(target.join(".ensroll.lock"), "1").unwrap();
    let o = ensroll(&["gen-data", "--config", cfg.to_str().unwrap()], &[("ER_OUT_DIR", target.to_str().unwrap())]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("in use"), "{}", stderr(&o));

    let o = ensroll(&["gen-data", "--config", cfg.to_str().unwrap(), "--workers", "0"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_member_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_ok(&run_config("gen-data", &write_config(t, "g.json", &gen_config(&t.join("d"), 2, 1, "train")), &[]));
    let mut cfg = train_config(&t.join("d"), &t.join("ens"), 2);
    cfg["train"]["learning_rate"] = json!(1e30);
    cfg["train"]["epochs"] = json!(5);
    let o = run_config("train", &write_config(t, "t.json", &cfg), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("member 0") || stderr(&o).contains("member 1"), "{}", stderr(&o));
}

#[test]
fn single_member_training_matches_member_zero_of_a_larger_run() {
    let p = Pipeline::new();
    let t = p.tmp.path();
    let cfg = write_config(t, "solo.json", &train_config(&p.path("train"), &p.path("solo"), 1));
    assert_ok(&run_config("train", &cfg, &["--deterministic"]));
    assert_eq!(fs::read(p.path("solo/member_0.ckpt")).unwrap(), fs::read(p.path("ens/member_0.ckpt")).unwrap());
}

#[test]
fn train_rollout_evaluate_sweep_report() {
    let p = Pipeline::new();
    let t = p.tmp.path();

    for i in 0..2 {
        assert!(p.path(&format!("ens/member_{i}.ckpt")).is_file());
        let log = fs::read_to_string(p.path(&format!("ens/losses/member_{i}.csv"))).unwrap();
        assert_eq!(log.lines().count(), 3, "{log}");
    }

    let rollout = write_config(t, "rollout.json", &p.eval_config("roll"));
    assert_ok(&run_config("rollout", &rollout, &[]));
    let preds = read_dataset(p.path("roll/predictions")).unwrap();
    assert_eq!(preds.len(), 2);
    assert_eq!(preds.n_steps(), Some(N_T - HISTORY));
    let pngs: Vec<_> = fs::read_dir(p.path("roll/snapshots")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(pngs.len(), 2);
    let name = pngs[0].file_name().unwrap().to_str().unwrap().to_string();
    assert!(name.ends_with("_steps_3-3-3-6.png"), "{name}");
    let first = tree(&p.path("roll"));

    let again = write_config(t, "rollout2.json", &p.eval_config("roll2"));
    assert_ok(&run_config("rollout", &again, &[]));
    assert_eq!(first, tree(&p.path("roll2")));

    let eval = write_config(t, "eval.json", &p.eval_config("eval"));
    let o = run_config("evaluate", &eval, &[]);
    assert_ok(&o);
    assert!(stdout(&o).contains("best member"), "{}", stdout(&o));
    for f in ["metrics.csv", "decomposition.json", "best_worst.json", "mae_per_step.svg", "rle_per_step.svg"] {
        assert!(p.path("eval").join(f).is_file(), "{f}");
    }

    let mut sweep = p.eval_config("eval");
    sweep["sizes"] = json!([1, 2]);
    let o = run_config("sweep", &write_config(t, "sweep.json", &sweep), &[]);
    assert_ok(&o);
    let table = fs::read_to_string(p.path("eval/sweep_summary.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");

    sweep["sizes"] = json!([8]);
    let o = run_config("sweep", &write_config(t, "sweep8.json", &sweep), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = ensroll(&["report", p.path("eval").to_str().unwrap()], &[]);
    assert_ok(&o);
    let report = fs::read_to_string(p.path("eval/report.md")).unwrap();
    assert!(report.contains("| best |") && report.contains('%'), "{report}");
    assert!(report.contains("MSE decomposition"));
    assert!(report.contains("Ensemble size sweep"));
    assert!(p.path("eval/figures/mae.svg").is_file());
    let before = tree(&p.path("eval"));
    let rc = write_config(t, "report.json", &json!({"schema_version": "1", "run_dir": p.path("eval")}));
    assert_ok(&run_config("report", &rc, &[]));
    assert_eq!(before, tree(&p.path("eval")));

    let o = ensroll(&["report", p.path("roll").to_str().unwrap()], &[]);
    assert_ok(&o);

    fs::create_dir(p.path("empty")).unwrap();
    let o = ensroll(&["report", p.path("empty").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("metrics.csv"));
}

#[test]
fn mismatched_grid_is_a_config_error() {
    let p = Pipeline::new();
    let t = p.tmp.path();
    let mut other = gen_config(&p.path("big"), 1, 3, "test");
    other["grid"] = json!(32);
    assert_ok(&run_config("gen-data", &write_config(t, "big.json", &other), &[]));
    let mut cfg = p.eval_config("out");
    cfg["dataset_dir"] = json!(p.path("big"));
    let o = run_config("rollout", &write_config(t, "r.json", &cfg), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
    assert!(!p.path("out").exists());
}
