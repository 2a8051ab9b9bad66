use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const POSITIVE: [&str; 5] = ["poor", "needy", "helpless", "pity", "charity"];
const NEGATIVE: [&str; 5] = ["council", "budget", "market", "weather", "stadium"];

/// Writes a 24-row separable dataset and a small-model config into `dir`.
fn toy_workspace(dir: &Path) {
    let mut rows = String::from("id\ttext\tlabel\n");
    for i in 0..24 {
        let (pool, label) = if i % 2 == 0 { (&POSITIVE, 1) } else { (&NEGATIVE, 0) };
        let words = [pool[i % 5], "the", pool[(i / 2 + 1) % 5], "local", pool[(i / 3 + 2) % 5]];
        rows.push_str(&format!("r{i:02}\t{}\t{label}\n", words.join(" ")));
    }
    fs::write(dir.join("data.tsv"), rows).unwrap();
    fs::write(
        dir.join("run.conf"),
        "# toy run\ndataset = data.tsv\nout = run\nstrategy = prompt,ensemble\nfolds = 3\n\
         d_model = 16\nn_heads = 2\nn_layers = 1\nd_ff = 32\nmax_seq_len = 32\n\
         learning_rate = 0.003\nmax_epochs = 3\nbatch_size = 8\nseed = 7\n",
    )
    .unwrap();
}

fn pclprompt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pclprompt"))
        .current_dir(dir)
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

#[test]
fn split_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    toy_workspace(dir.path());
    let conf = ["--config", "run.conf"];
    for cmd in ["split", "train"] {
        let out = pclprompt(dir.path(), &[&conf[..], &[cmd]].concat());
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let run = dir.path().join("run");
    assert!(run.join("folds.tsv").is_file());
    for i in 0..3 {
        assert!(run.join(format!("fold{i}/best.ckpt")).is_file());
    }

    let out = pclprompt(dir.path(), &[&conf[..], &["predict"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let preds = run.join("predictions.tsv");
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 24);

    let out = pclprompt(dir.path(), &[&conf[..], &["evaluate", "--pred", "run/predictions.tsv"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(metrics["f1"].as_f64().is_some());
    assert!(run.join("metrics.json").is_file());
}

#[test]
fn overrides_are_layered_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    toy_workspace(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_pclprompt"))
        .current_dir(dir.path())
        .env("PCLP_FOLDS", "4")
        .env("PCLP_SEED", "11")
        .args(["--config", "run.conf", "--seed", "12", "--set", "n_aug=2", "split"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = fs::read_to_string(dir.path().join("run/config.resolved")).unwrap();
    assert!(echoed.contains("folds = 4"), "{echoed}");
    assert!(echoed.contains("seed = 12"), "{echoed}");
    assert!(echoed.contains("n_aug = 2"), "{echoed}");
    assert!(echoed.contains("strategy = prompt,ensemble"), "{echoed}");
    let manifest = fs::read_to_string(dir.path().join("run/folds.tsv")).unwrap();
    assert!(manifest.starts_with("# k=4 seed=12"), "{manifest}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    toy_workspace(dir.path());
    let p = dir.path();
    assert_eq!(code(&pclprompt(p, &["--help"])), 0);
    assert_eq!(code(&pclprompt(p, &["--no-such-flag", "split"])), 1);
    assert_eq!(code(&pclprompt(p, &["--config", "run.conf", "--strategy", "bogus", "split"])), 1);
    assert_eq!(code(&pclprompt(p, &["--config", "run.conf", "--set", "folds", "split"])), 1);
    assert_eq!(code(&pclprompt(p, &["--config", "run.conf", "--folds", "1", "split"])), 1);
    assert_eq!(code(&pclprompt(p, &["--config", "run.conf", "--set", "dataset=missing.tsv", "split"])), 1);
    // Data-side failures: no checkpoint to predict with, unreadable predictions.
    assert_eq!(code(&pclprompt(p, &["--config", "run.conf", "predict"])), 2);
    assert_eq!(code(&pclprompt(p, &["--config", "run.conf", "evaluate", "--pred", "nope.tsv"])), 2);
}
