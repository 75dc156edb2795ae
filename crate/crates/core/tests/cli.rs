mod common;

use std::path::Path;
use std::process::Output;

use common::bin;
use gazenet::harness::{read_records, Record, CSV_HEADER};

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn gen_data(dir: &Path, samples: &str) -> String {
    let path = dir.join("d.eegr").to_string_lossy().into_owned();
    let o = run(&["gen-data", "--out", &path, "--samples", samples, "--channels", "4", "--timesteps", "16", "--noise", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

const TINY: &[&str] = &["--spatial-filters", "4", "--block-widths", "4,8", "--fc-width", "8", "--lr", "1e-2"];

/// Report records without their wall-clock fields.
fn untimed(text: &str) -> Vec<Record> {
    read_records(text)
        .unwrap()
        .into_iter()
        .map(|r| match r {
            Record::Epoch { run, variant, seed, mut epoch } => {
                epoch.wall_seconds = 0.0;
                Record::Epoch { run, variant, seed, epoch }
            }
            Record::Run { run, mut summary } => {
                summary.wall_seconds = 0.0;
                Record::Run { run, summary }
            }
            r => r,
        })
        .collect()
}

#[test]
fn params_prints_exact_counts() {
    let o = run(&["params", "--variant", "base"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "2082162");
    assert!(stderr(&o).contains("variant=base"));
    let o = run(&["params", "--variant", "equal-convs"]);
    assert_eq!(stdout(&o).trim(), "2123122");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["train", "--data", "x", "--epochs", "0"]).status.code(), Some(2));
    assert_eq!(run(&["params", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["params", "--variant", "huge"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1() {
    let o = run(&["eval", "--data", "/nonexistent.eegr", "--checkpoint", "/nonexistent.eegm"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error:"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn gradcheck_tiny_model_passes() {
    let o = run(&["gradcheck", "--tiny-model"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 9);
    for row in rows {
        let err: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(err < 1e-4, "{row}");
    }
}

#[test]
fn gradcheck_failure_exits_nonzero() {
    let o = run(&["gradcheck", "--layer", "conv", "--threshold", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["gradcheck", "--layer", "nope"]).status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(&cfg, "# widths\nvariant = no-spatial\nfc-width=8\n").unwrap();
    let cfg = cfg.to_string_lossy().into_owned();
    let o = run(&["--config", &cfg, "params"]);
    assert!(stderr(&o).contains("variant=no-spatial"));
    let o = run(&["params", "--config", &cfg, "--fc-width", "256", "--variant", "base"]);
    assert_eq!(stdout(&o).trim(), "2082162");
    std::fs::write(dir.path().join("bad.cfg"), "no-such-flag=1\n").unwrap();
    let bad = dir.path().join("bad.cfg").to_string_lossy().into_owned();
    assert_eq!(run(&["--config", &bad, "params"]).status.code(), Some(2));
}

#[test]
fn train_eval_bench_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), "1000");
    let ckpt = dir.path().join("m.eegm").to_string_lossy().into_owned();
    let report = dir.path().join("r.jsonl").to_string_lossy().into_owned();
    let mut args = vec!["train", "--data", &data, "--epochs", "2", "--runs", "2", "--out-checkpoint", &ckpt, "--out-report", &report];
    args.extend_from_slice(TINY);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("base,0;1,"));
    let run0 = dir.path().join("m-run0.eegm");
    assert!(run0.exists() && dir.path().join("m-run1.eegm").exists());

    let records = read_records(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(records.iter().filter(|r| matches!(r, Record::Epoch { .. })).count(), 4);
    assert_eq!(records.iter().filter(|r| matches!(r, Record::Run { .. })).count(), 2);
    assert!(matches!(records.last(), Some(Record::Summary { runs: 2, std_mae: Some(_), .. })));

    let run0 = run0.to_string_lossy().into_owned();
    let o = run(&["eval", "--data", &data, "--checkpoint", &run0, "--mae", "per-axis"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("kind=per-axis") && out.contains("samples=150"));

    for mode in ["batch1", "batch64"] {
        let o = run(&["bench", "--data", &data, "--checkpoint", &run0, "--mode", mode]);
        assert!(o.status.success(), "{}", stderr(&o));
        match read_records(&stdout(&o)).unwrap().as_slice() {
            [Record::Bench(b)] => {
                assert_eq!(b.mode.to_string(), mode);
                assert!(b.samples > 0 && b.total_seconds >= 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), "150");
    let report = dir.path().join("a.jsonl").to_string_lossy().into_owned();
    let mut args = vec!["train", "--data", &data, "--epochs", "3", "--split", "per-epoch", "--seed", "7", "--out-report", &report];
    args.extend_from_slice(TINY);
    let first = run(&args);
    assert!(first.status.success(), "{}", stderr(&first));

    let resolved = stderr(&first);
    let replay_report = dir.path().join("b.jsonl").to_string_lossy().into_owned();
    let cfg = dir.path().join("resolved.cfg");
    std::fs::write(&cfg, resolved.replace(&report, &replay_report)).unwrap();
    let second = run(&["--config", &cfg.to_string_lossy(), "train"]);
    assert!(second.status.success(), "{}", stderr(&second));

    assert_eq!(stdout(&first), stdout(&second));
    assert_eq!(
        untimed(&std::fs::read_to_string(&report).unwrap()),
        untimed(&std::fs::read_to_string(&replay_report).unwrap())
    );
}

#[test]
fn ablate_emits_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_data(dir.path(), "120");
    let mut args = vec!["ablate", "--data", &data, "--epochs", "1"];
    args.extend_from_slice(TINY);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], CSV_HEADER);
    let variants: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["no-spatial", "equal-convs", "no-spatial-equal-convs", "base"]);
    // 120 samples are too few for the batch-1 timing column
    assert!(lines[1..].iter().all(|l| l.ends_with(',')));
}
