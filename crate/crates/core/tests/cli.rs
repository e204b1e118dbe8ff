use std::path::Path;
use std::process::{Command, Output};

fn biamat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biamat"))
        .args(args)
        .output()
        .expect("spawn biamat")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.cfg");
    std::fs::write(
        &path,
        "\
primary.n = 64
aux.n = 64
heldout.n = 32
test.n = 32
model.hidden = [8]
train.epochs = 3
train.warmup = 1
train.attack.iters = 2
train.eval.pgd.iters = 2
train.eval.cw = null
",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_evaluate_plot_and_robust_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();

    let t = biamat(&["train", "--config", &cfg, "--seed", "7", "--out", out]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    for f in ["metrics.jsonl", "best.ckpt", "last.ckpt", "config.cfg"] {
        assert!(Path::new(out).join(f).exists(), "{f}");
    }

    let ckpt = format!("{out}/best.ckpt");
    let e = biamat(&["evaluate", "--ckpt", &ckpt, "--config", &cfg]);
    assert!(e.status.success());
    let stdout = String::from_utf8(e.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["n"], 32);
    assert!(v["clean"].as_f64().unwrap() >= v["pgd"].as_f64().unwrap());

    let plots = dir.path().join("plots");
    let p = biamat(&[
        "emit-plots",
        "--metrics",
        &format!("{out}/metrics.jsonl"),
        "--out",
        plots.to_str().unwrap(),
    ]);
    assert!(p.status.success());
    assert!(plots.join("ratio.csv").exists());

    let rd = dir.path().join("robust");
    let r = biamat(&[
        "robust-dataset",
        "--ckpt",
        &ckpt,
        "--config",
        &cfg,
        "--out",
        rd.to_str().unwrap(),
        "--steps",
        "5",
    ]);
    assert!(r.status.success());
    assert!(rd.join("robust_x.idx").exists() && rd.join("robust_y.idx").exists());
}

#[test]
fn the_same_seed_gives_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert!(biamat(&[
            "train",
            "--config",
            &cfg,
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .success());
        std::fs::read(out.join("metrics.jsonl")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn verify_theory_writes_reports_and_reports_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("theory.cfg");
    // Every check that holds at this scale passes; the uniform-label frequencies do not.
    std::fs::write(&cfg, "theory.n = 20000\n").unwrap();
    let out = dir.path().join("reports");
    let v = biamat(&[
        "verify-theory",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(v.status.code(), Some(1));
    for stem in ["lemma2", "theorem1", "theorem2", "theorem3", "yer"] {
        assert!(out.join(format!("{stem}.json")).exists(), "{stem}");
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(biamat(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(biamat(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "train.alpah = 1\n").unwrap();
    let out = biamat(&[
        "train",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let missing = biamat(&[
        "evaluate",
        "--ckpt",
        "x.ckpt",
        "--config",
        "/nonexistent.cfg",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}
