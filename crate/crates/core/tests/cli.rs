use std::path::Path;
use std::process::{Command, Output};

fn pvrnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvrnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn pvrnn")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn failed(out: &Output) -> String {
    assert!(
        !out.status.success(),
        "expected failure: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn generate_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--profile", "smoke", "--seed", "7"];
    ok(&pvrnn(
        dir.path(),
        &[&base[..], &["--out", "a", "generate-data"]].concat(),
    ));
    ok(&pvrnn(
        dir.path(),
        &[&base[..], &["--out", "b", "generate-data"]].concat(),
    ));
    for f in ["train.dataset", "test.dataset"] {
        let a = std::fs::read(dir.path().join("a/data").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b/data").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    ok(&pvrnn(
        dir.path(),
        &[
            "--profile",
            "smoke",
            "--seed",
            "8",
            "--out",
            "c",
            "generate-data",
        ],
    ));
    assert_ne!(
        std::fs::read(dir.path().join("a/data/train.dataset")).unwrap(),
        std::fs::read(dir.path().join("c/data/train.dataset")).unwrap()
    );
}

#[test]
fn smoke_pipeline_exp1_exp2_report() {
    let dir = tempfile::tempdir().unwrap();
    let smoke = ["--profile", "smoke", "--out", "run"];
    let exp1 = ok(&pvrnn(dir.path(), &[&smoke[..], &["exp1"]].concat()));
    assert!(exp1.contains("w1") && exp1.contains("w2"), "{exp1}");
    let run = dir.path().join("run");
    for f in [
        "checkpoints/w1_seed1.ckpt",
        "checkpoints/w2_seed2.ckpt",
        "exp1/report.report",
        "exp1/report.txt",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let exp2 = ok(&pvrnn(dir.path(), &[&smoke[..], &["exp2"]].concat()));
    assert!(exp2.contains("W1") && exp2.contains("W5"), "{exp2}");
    assert!(run.join("exp2/report.report").exists());
    let report = ok(&pvrnn(dir.path(), &[&smoke[..], &["report"]].concat()));
    assert_eq!(
        report,
        std::fs::read_to_string(run.join("report.txt")).unwrap()
    );
    assert!(report.contains("W3"));

    // A stored checkpoint can be evaluated on its own.
    let er = ok(&pvrnn(
        dir.path(),
        &[
            &smoke[..],
            &[
                "er-run",
                "--checkpoint",
                "run/checkpoints/w1_seed1.ckpt",
                "--condition",
                "3",
            ],
        ]
        .concat(),
    ));
    assert!(er.contains("kld_total"), "{er}");
    assert!(run.join("er/w1_seed1_W3_test0.tsv").exists());
}

#[test]
fn desk_profile_with_config_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = "profile = \"desk\"\nrun_dir = \"custom\"\nepochs = 4\nseeds = [5]\nn_train = 2\nn_test = 1\n\
                  primitives_per_sequence = 2\nsteps_per_primitive = 12\nwindow_len = 6\niters_per_step = 2\nconditions = [1, 5]\n";
    std::fs::write(dir.path().join("run.toml"), config).unwrap();
    ok(&pvrnn(dir.path(), &["--config", "run.toml", "exp1"]));
    ok(&pvrnn(dir.path(), &["--config", "run.toml", "exp2"]));
    let run = dir.path().join("custom");
    assert!(run.join("checkpoints/w1_seed5.ckpt").exists());
    assert!(run.join("exp2/report.report").exists());
    let saved = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(saved.contains("epochs = 4"), "{saved}");
}

#[test]
fn train_subcommand_writes_checkpoints_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&pvrnn(
        dir.path(),
        &[
            "--profile",
            "smoke",
            "--seeds",
            "3",
            "--out",
            "r",
            "train",
            "--setting",
            "w2",
        ],
    ));
    assert!(out.contains("w2_seed3.ckpt"), "{out}");
    assert!(dir.path().join("r/curves/w2_seed3.tsv").exists());
}

#[test]
fn exp2_without_checkpoints_fails() {
    let dir = tempfile::tempdir().unwrap();
    let err = failed(&pvrnn(
        dir.path(),
        &["--profile", "smoke", "--out", "empty", "exp2"],
    ));
    assert!(err.contains("error:"), "{err}");
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "epochs = \"many\"\n").unwrap();
    let err = failed(&pvrnn(
        dir.path(),
        &["--config", "bad.toml", "generate-data"],
    ));
    assert!(err.contains("bad.toml"), "{err}");
    std::fs::write(dir.path().join("unknown.toml"), "no_such_key = 1\n").unwrap();
    failed(&pvrnn(
        dir.path(),
        &["--config", "unknown.toml", "generate-data"],
    ));
    failed(&pvrnn(
        dir.path(),
        &["--config", "absent.toml", "generate-data"],
    ));
}

#[test]
fn unknown_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    failed(&pvrnn(dir.path(), &["frobnicate"]));
}

#[test]
fn version_bumped_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(&pvrnn(
        dir.path(),
        &["--profile", "smoke", "--seeds", "1", "--out", "r", "train"],
    ));
    let path = dir.path().join("r/checkpoints/w1_seed1.ckpt");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(
        &path,
        text.replacen("PVRNN-CHECKPOINT 1", "PVRNN-CHECKPOINT 2", 1),
    )
    .unwrap();
    let err = failed(&pvrnn(
        dir.path(),
        &[
            "--profile",
            "smoke",
            "--out",
            "r",
            "er-run",
            "--checkpoint",
            "r/checkpoints/w1_seed1.ckpt",
        ],
    ));
    assert!(err.to_lowercase().contains("version"), "{err}");
}
