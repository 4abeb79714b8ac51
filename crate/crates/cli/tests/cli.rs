use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lpcfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpcfm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--epochs",
        "3",
        "--steps-per-epoch",
        "2",
        "--batch-size",
        "4",
        "--hidden",
        "8",
        "--n-eval",
        "10",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    lpcfm(&args)
}

#[test]
fn verify_suites_pass() {
    for args in [
        &["verify", "geometry", "--cases", "50"][..],
        &["verify", "signal"],
        &["gradcheck", "--models", "5"],
    ] {
        let o = lpcfm(args);
        assert!(o.status.success(), "{args:?}: {}", stdout(&o));
        let text = stdout(&o);
        assert!(text.contains("PASS") && !text.contains("FAIL"), "{text}");
    }
}

#[test]
fn train_then_sample() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = tiny(&run, &["--budgets", "1,3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["loss.csv", "metrics.csv", "report.txt", "model.ckpt"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let samples = dir.path().join("samples");
    let ck = run.join("model.ckpt");
    let o = lpcfm(&[
        "sample",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--steps",
        "4",
        "--vcs",
        "--n-eval",
        "5",
        "--out",
        samples.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = fs::read_to_string(samples.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("sample,step,t,x0,x1\n"));
    // 5 samples, 5 states each
    assert_eq!(traj.lines().count(), 1 + 5 * 5);
    assert!(samples.join("metrics.csv").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "epochs = 2\nmode = \"ot\"\nbudgets = [2]\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let a = dir.path().join("a");
    let o = lpcfm(&[
        "--config",
        cfg,
        "train",
        "--steps-per-epoch",
        "2",
        "--hidden",
        "4",
        "--n-eval",
        "5",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(a.join("loss.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 2
    );
    assert_eq!(
        fs::read_to_string(a.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let b = dir.path().join("b");
    let o = tiny(&b, &["--config", cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(b.join("loss.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 3
    );
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiny(&dir.path().join("x"), &["--task", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "epoch = 3\n").unwrap();
    let o = tiny(&dir.path().join("y"), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = lpcfm(&[
        "sample",
        "--checkpoint",
        "/nonexistent.ckpt",
        "--steps",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
