use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uqbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqbench")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run", "--method", "der", "--dim", "0d", "--inject", "output", "--noise", "medium", "--epochs", "2",
        "--out-dir",
    ];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    uqbench(&args)
}

#[test]
fn verify_propagation_passes() {
    let o = uqbench(&["verify-propagation", "--samples", "200000", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.ends_with("PASS")).count(), 3, "{text}");
}

#[test]
fn run_logs_epochs_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = tiny_run(a.path(), &[]);
    let ob = tiny_run(b.path(), &[]);
    assert_eq!(oa.status.code(), Some(0), "{}", String::from_utf8_lossy(&oa.stderr));
    let text = stdout(&oa);
    assert_eq!(text.lines().filter(|l| l.contains(" epoch ")).count(), 2);
    assert!(text.contains("[der/0d_output_medium] epoch 1 train_loss"));
    for f in ["report.csv", "sigma_al.csv"] {
        let p = Path::new("der/0d_output_medium").join(f);
        assert_eq!(fs::read(a.path().join(&p)).unwrap(), fs::read(b.path().join(&p)).unwrap());
    }
    assert!(ob.status.success());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("runs");
    fs::write(
        &cfg,
        format!(
            "# tiny\nmethod=de\ndim=0d\ninject=input\nnoise=low\nepochs=5\nensemble_size=2\nout-dir={}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = uqbench(&["run", "--config", cfg.to_str().unwrap(), "--epochs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains(" epoch ")).count(), 2);
    let report = fs::read_to_string(out.join("de/0d_input_low/report.csv")).unwrap();
    assert!(report.lines().nth(1).unwrap().starts_with("de,0d,input,low,0.01,"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "--method", "mc", "--dim", "0d", "--inject", "output", "--noise", "low", "--out-dir", out],
        vec!["run", "--method", "de", "--dim", "0d", "--inject", "output", "--out-dir", out],
        vec!["run", "--method", "de", "--dim", "0d", "--inject", "output", "--noise", "low", "--epochs", "0"],
        vec!["run", "--config", "/nonexistent/exp.cfg"],
        vec!["grid", "--method", "de", "--jobs", "0", "--out-dir", out],
    ] {
        let o = uqbench(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("configuration"), "{args:?}");
    }
}

#[test]
fn tables_and_figure_need_finished_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiny_run(dir.path(), &[]);
    assert!(o.status.success());
    let out = dir.path().to_str().unwrap();

    let t = uqbench(&["tables", "--out-dir", out, "--noise", "medium"]);
    assert_eq!(t.status.code(), Some(4));
    let err = String::from_utf8_lossy(&t.stderr);
    assert!(err.contains("de/0d_output_medium") && !err.contains("der/0d_output_medium"), "{err}");

    let f = uqbench(&["figure", "--out-dir", out, "--method", "der"]);
    assert!(f.status.success());
    let svg = fs::read_to_string(dir.path().join("der/figure2_der.svg")).unwrap();
    assert!(svg.starts_with("<?xml") || svg.starts_with("<svg"));
    assert!(svg.trim_end().ends_with("</svg>"));

    let empty = tempfile::tempdir().unwrap();
    let f = uqbench(&["figure", "--out-dir", empty.path().to_str().unwrap(), "--method", "de"]);
    assert_eq!(f.status.code(), Some(1));
}

#[test]
fn generate_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = uqbench(&[
        "generate", "--dim", "0d", "--inject", "input", "--noise", "high", "--seed", "4", "--data-dir",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(data.join("header.txt")).unwrap();
    assert!(header.contains("injection=input"));
    assert!(header.contains("n_train=9000"));
    assert!(data.join("train.bin").is_file());
}
