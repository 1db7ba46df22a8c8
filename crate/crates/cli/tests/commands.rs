//! End-to-end behaviour of the subcommands on a small synthetic dataset.

use std::fs;
use std::path::Path;
use std::process::Command;

use prmf_cli::checkpoint::Checkpoint;
use prmf_cli::commands::{checkpoint_path, cmd_evaluate, cmd_prepare, cmd_sweep, cmd_train};
use prmf_cli::config::{Method, Overrides, RunConfig};

fn write_dataset(dir: &Path) {
    let mut ratings = String::new();
    for u in 0..30u32 {
        for i in 0..40u32 {
            let h = (u.wrapping_mul(2654435761) ^ i.wrapping_mul(40503)).wrapping_mul(2246822519) >> 7;
            if h % 3 == 0 {
                let r = 1 + (u % 5 + i % 4 + h % 2) % 5;
                ratings.push_str(&format!("u{u}\ti{i}\t{r}\t{}\n", 1000 + u * 40 + i));
            }
        }
    }
    fs::write(dir.join("ratings.tsv"), ratings).unwrap();
    let social: String = (0..29).map(|u| format!("u{u}\tu{}\n", u + 1)).collect();
    fs::write(dir.join("trust.tsv"), social).unwrap();
}

const CONFIG: &str = r#"
seeds = [3, 4]
output_dir = "out"
jobs = 2

[data]
name = "synthetic"
ratings = "ratings.tsv"
social = "trust.tsv"

[params]
dim = 3
epochs = 4
max_iter = 3
admm_iterations = 5
lambda_u = 0.05
lambda_v = 0.05
learning_rate = 0.02
rho = 10.0

[sweep]
gammas = [0.0, 0.1, 10.0]
"#;

fn setup(method: Method) -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let overrides = Overrides {
        method: Some(method),
        ..Overrides::default()
    };
    let cfg = RunConfig::from_toml(CONFIG, dir.path(), &overrides).unwrap();
    (dir, cfg)
}

fn with_output(cfg: &RunConfig, dir: &Path) -> RunConfig {
    RunConfig {
        output_dir: dir.to_path_buf(),
        ..cfg.clone()
    }
}

#[test]
fn prepare_is_idempotent_and_reuses_the_prior() {
    let (_dir, cfg) = setup(Method::PrmfImp);
    let first = cmd_prepare(&cfg).unwrap();
    assert!(first.iter().all(|p| p.prior_reused == Some(false)));
    let train = cfg.output_dir.join("prepared/seed-3/train.tsv");
    let before = fs::read(&train).unwrap();
    let second = cmd_prepare(&cfg).unwrap();
    assert!(second.iter().all(|p| p.prior_reused == Some(true)));
    assert_eq!(fs::read(&train).unwrap(), before);
    let total: usize = first[0].sizes.iter().sum();
    let pool = total * 8 / 10;
    assert_eq!(first[0].sizes, [pool - pool / 10, pool / 10, total - pool]);
}

#[test]
fn train_and_evaluate_agree_and_repeat_bitwise() {
    let (dir, cfg) = setup(Method::Prmf);
    let a = with_output(&cfg, &dir.path().join("a"));
    let b = with_output(&cfg, &dir.path().join("b"));
    let rows_a = cmd_train(&a).unwrap();
    let rows_b = cmd_train(&b).unwrap();
    assert_eq!(rows_a, rows_b);
    assert_eq!(rows_a.len(), 2);
    assert_eq!(rows_a.iter().map(|r| r.seed).collect::<Vec<_>>(), [3, 4]);
    for r in &rows_a {
        assert!(r.rmse >= r.mae && r.rmse > 0.0);
    }

    for name in ["reports.csv", "reports.txt", "seed-3/trace.csv", "seed-4/model.ckpt"] {
        let fa = fs::read(a.method_dir().join(name)).unwrap();
        let fb = fs::read(b.method_dir().join(name)).unwrap();
        assert!(fa == fb, "{name} differs between identical runs");
    }

    let evaluated = cmd_evaluate(&a).unwrap();
    for (t, e) in rows_a.iter().zip(&evaluated) {
        assert!((t.rmse - e.rmse).abs() <= 1e-15);
        assert_eq!(t, e);
    }
    let ckpt = Checkpoint::load(&checkpoint_path(&a, 3)).unwrap();
    assert_eq!(Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap(), ckpt);

    let effective = fs::read_to_string(a.method_dir().join("effective-config.toml")).unwrap();
    let reloaded = RunConfig::from_toml(&effective, dir.path(), &Overrides::default()).unwrap();
    assert_eq!(reloaded, a);
}

#[test]
fn sweep_writes_one_row_per_gamma_and_repeats_bitwise() {
    let (dir, cfg) = setup(Method::Prmf);
    let cfg = RunConfig {
        seeds: vec![5],
        ..cfg
    };
    let a = with_output(&cfg, &dir.path().join("a"));
    let b = with_output(&cfg, &dir.path().join("b"));
    let results = cmd_sweep(&a).unwrap();
    cmd_sweep(&b).unwrap();
    let csv_a = fs::read_to_string(a.method_dir().join("sweep/sweep.csv")).unwrap();
    let csv_b = fs::read_to_string(b.method_dir().join("sweep/sweep.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(csv_a.lines().count(), 1 + 3);
    let jsonl = fs::read_to_string(a.method_dir().join("sweep/sweep.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
    let sparsity: Vec<f64> = results[0].1.iter().map(|p| p.outcome.as_ref().unwrap().sparsity).collect();
    assert!(sparsity[0] <= sparsity[2]);
}

#[test]
fn empty_gamma_grid_is_rejected() {
    let (_dir, cfg) = setup(Method::Prmf);
    let mut cfg = cfg;
    cfg.sweep.gammas.clear();
    let err = cmd_sweep(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn evaluate_without_training_reports_missing_files() {
    let (_dir, cfg) = setup(Method::Pmf);
    cmd_prepare(&cfg).unwrap();
    assert!(cmd_evaluate(&cfg).is_err());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let config = dir.path().join("prmf.toml");
    fs::write(&config, CONFIG.replace("social = \"trust.tsv\"\n", "")).unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_prmf"))
            .arg("--config")
            .arg(&config)
            .args(args)
            .env("RUST_LOG", "error")
            .output()
            .unwrap()
    };

    let out = run(&["--method", "prmf-exp", "prepare"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["--method", "pmf", "--seed", "9", "prepare"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("seed 9:"), "{stdout}");
    assert!(dir.path().join("out/prepared/seed-9/manifest.json").exists());

    let out = run(&["--method", "pmf", "--seed", "10", "evaluate"]);
    assert_eq!(out.status.code(), Some(1));
}
