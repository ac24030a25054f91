use std::path::Path;
use std::process::{Command, Output};

fn curricula(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curricula")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = curricula(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stagewise_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, scorer, scores, plan, model) = (
        d.join("data"),
        d.join("scorer.ckpt"),
        d.join("ppl.scores"),
        d.join("p.plan"),
        d.join("m.ckpt"),
    );
    let tiny = ["--embed", "6", "--hidden", "6", "--batch-size", "8", "--learning-rate", "0.01"];

    ok(&["corpus", "toy", "--size", "60", "--vocab", "6", "--min-len", "3", "--max-len", "5", "--out", s(&data)]);
    let mut args = vec!["pretrain", "--data", s(&data), "--preset", "small", "--max-epochs", "1", "--out", s(&scorer)];
    args.extend(tiny);
    ok(&args);
    ok(&["score", "--data", s(&data), "--metric", "ppl", "--model", s(&scorer), "--out", s(&scores)]);
    ok(&[
        "order", "--data", s(&data), "--strategy", "ppl", "--direction", "asc", "--scores", s(&scores), "--epochs", "2",
        "--out", s(&plan),
    ]);
    let mut args = vec!["train", "--data", s(&data), "--plan", s(&plan), "--max-epochs", "2", "--out", s(&model)];
    args.extend(tiny);
    ok(&args);
    let line = ok(&["eval", "--data", s(&data), "--model", s(&model)]);
    assert!(line.starts_with("ppl=") && line.contains(" bleu=") && line.contains(" pairs=6"), "{line}");
}

#[test]
fn experiment_and_report_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = d.join("exp.spec");
    std::fs::write(
        &spec,
        "CURRICULA-SPEC v1\ncorpus=toy\ntoy.size=60\ntoy.vocab=6\ntoy.min_len=3\ntoy.max_len=5\n\
         strategies=shuffle-once,length-target-asc\nscorers=\ntrainer.preset=small\n\
         model.small.embed=6\nmodel.small.hidden=6\ntrain.max_epochs=1\ntrain.batch_size=8\noutput=run\n",
    )
    .unwrap();
    let md = ok(&["experiment", "--spec", s(&spec)]);
    assert!(md.starts_with("| Strategy |"), "{md}");
    let tsv = d.join("run/report.tsv");
    let again = ok(&["report", "--input", s(&tsv), "--format", "md"]);
    assert_eq!(again, md);
    let out = d.join("copy.tsv");
    ok(&["report", "--input", s(&tsv), "--format", "tsv", "--out", s(&out)]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&tsv).unwrap());
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(curricula(&["no-such-command"]).status.code(), Some(2));

    let bad = d.join("bad.spec");
    std::fs::write(&bad, "CURRICULA-SPEC v1\ncorpus=toy\nstrategies=shuffle-once\noutput=o\nflavour=mint\n").unwrap();
    let out = curricula(&["experiment", "--spec", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flavour"));

    let out = curricula(&["report", "--input", s(&d.join("missing.tsv"))]);
    assert_eq!(out.status.code(), Some(3));

    let out = curricula(&["corpus", "toy", "--size", "5", "--out", s(&d.join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}
