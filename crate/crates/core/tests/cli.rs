use std::path::Path;
use std::process::{Command, Output};

fn mrf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrf-pinn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn short_solve<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["solve", "mms:sinexp", "--resolution", "8x12", "--fd", "4"];
    v.extend_from_slice(&["--channels", "2", "--adam", "5", "--lbfgs", "2", "--out", out]);
    v.extend_from_slice(extra);
    v
}

#[test]
fn solve_writes_artifacts_and_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let first = mrf(&short_solve("run", &[]), tmp.path());
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let dir = tmp.path().join("run");
    for f in ["config.txt", "report.csv", "summary.txt", "prediction.fgrd", "oracle.fgrd", "final.mrfw"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.starts_with("epoch,phase,loss"));
    assert_eq!(report.lines().count(), 1 + 1 + 5 + 2);

    let before = std::fs::read(dir.join("report.csv")).unwrap();
    let again = mrf(&short_solve("run", &[]), tmp.path());
    assert_eq!(again.status.code(), Some(2));
    assert_eq!(std::fs::read(dir.join("report.csv")).unwrap(), before);

    let forced = mrf(&short_solve("run", &["--force"]), tmp.path());
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn config_errors_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = ["--resolution", "8by12"];
    let mut args = short_solve("bad", &[]);
    args.extend_from_slice(&bad);
    assert_eq!(mrf(&args, tmp.path()).status.code(), Some(2));
    assert!(!tmp.path().join("bad").exists());

    assert_eq!(mrf(&["solve", "nonsense", "--out", "x"], tmp.path()).status.code(), Some(2));
    assert_eq!(mrf(&["no-such-verb"], tmp.path()).status.code(), Some(2));
    assert_eq!(mrf(&["oracle", "ns-swirl", "--resolution", "8x12"], tmp.path()).status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mrf(&short_solve("div", &["--weights", "manual:1e14,1e14"]), tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let summary = std::fs::read_to_string(tmp.path().join("div/summary.txt")).unwrap();
    assert!(summary.contains("diverged"));
}

#[test]
fn matrix_runs_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = short_solve("grid", &[]);
    args[0] = "matrix";
    args.extend_from_slice(&["--axis", "fd=2;4", "--axis", "seed=0;1;2"]);
    let out = mrf(&args, tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("grid/matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,")));
}

#[test]
fn inspection_verbs() {
    let tmp = tempfile::tempdir().unwrap();
    let st = mrf(&["inspect-stencil", "--deriv", "1", "--acc", "4"], tmp.path());
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("[1/12, -2/3, 0, 2/3, -1/12]"));

    let gc = mrf(&["grad-check", "--resolution", "8x16", "--channels", "2", "--samples", "20"], tmp.path());
    assert_eq!(gc.status.code(), Some(0), "{}", String::from_utf8_lossy(&gc.stdout));

    let or = mrf(&["oracle", "elliptic", "--resolution", "8x12", "--out", "u.fgrd"], tmp.path());
    assert_eq!(or.status.code(), Some(0));
    assert!(tmp.path().join("u.fgrd").exists());
}
