use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_collapse-unlearn"));
    c.env_remove("PMC_WORKERS").env_remove("COLLAPSE_WORKERS");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn code(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn successful_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mix");
    let status = code(bin().args(["mixture", "--config"]).arg(config("analytic_mixture.toml")).arg("--out").arg(&out));
    assert_eq!(status, 0);
    assert!(out.join("trace_seed0.csv").exists());
}

#[test]
fn seeds_and_workers_flags_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cat");
    let status = code(
        bin()
            .args(["categorical", "--config"])
            .arg(config("categorical_pure.toml"))
            .arg("--out")
            .arg(&out)
            .args(["--seeds", "3..5,9"])
            .env("PMC_WORKERS", "2"),
    );
    assert_eq!(status, 0);
    for s in [3, 4, 9] {
        assert!(out.join(format!("trace_seed{s}.csv")).exists());
    }
    assert!(!out.join("trace_seed0.csv").exists());
    let meta = std::fs::read_to_string(out.join("metadata.toml")).unwrap();
    assert!(meta.contains("workers = 2"), "{meta}");
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seeds = []\noutput_dir = \"x\"\n[experiment]\nkind = \"categorical_pure\"\ninitial = [0.7, 0.7]\nn = 0\niterations = 1\n").unwrap();
    let out = bin().args(["categorical", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("seeds") && msg.contains("initial") && msg.contains("n:"), "{msg}");

    assert_eq!(code(bin().args(["gmm", "--config"]).arg(config("analytic_mixture.toml"))), 2);
    assert_eq!(code(bin().args(["qa", "--config"]).arg(tmp.path().join("missing.toml"))), 2);
    assert_eq!(code(bin().args(["mixture", "--config"]).arg(config("analytic_mixture.toml")).args(["--seeds", "x"])), 2);
    assert_eq!(code(bin().args(["mixture"])), 2);
}

#[test]
fn unwritable_output_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("occupied");
    std::fs::write(&file, "not a directory").unwrap();
    let status = code(bin().args(["mixture", "--config"]).arg(config("analytic_mixture.toml")).arg("--out").arg(file.join("sub")));
    assert_eq!(status, 1);
}
