use std::path::Path;

use curricula::harness::{
    compare_under_noise, prepare_data, run_experiment, CorpusSource, ExperimentReport, ExperimentSpec, PreparedData,
    ReportFormat, ToyTask, Widths,
};
use curricula::ordering::{Direction, OrderingPlan, Strategy};
use curricula::seq2seq::Preset;
use curricula::trainer::load_checkpoint;
use curricula::{Error, Fingerprint};

fn tiny(strategies: Vec<Strategy>, out: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::toy(ToyTask::Reverse, strategies, out);
    if let CorpusSource::Toy { spec: toy, .. } = &mut spec.corpus {
        toy.size = 60;
        toy.vocab = 6;
        toy.min_len = 3;
        toy.max_len = 5;
    }
    let w = Widths {
        embed: Some(6),
        hidden: Some(6),
    };
    spec.small_widths = w;
    spec.base_widths = w;
    spec.train.max_epochs = 2;
    spec.train.batch_size = 8;
    spec.train.learning_rate = 1e-2;
    spec.scorer_max_epochs = 1;
    spec
}

#[test]
fn spec_text_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny(Strategy::all(), dir.path());
    spec.scorers = vec![Preset::Small, Preset::Base];
    let back = ExperimentSpec::from_text(&spec.to_text(), dir.path()).unwrap();
    assert_eq!(back, spec);
    assert_eq!(back.fingerprint(), spec.fingerprint());
}

#[test]
fn spec_rejects_unknown_and_duplicate_keys() {
    let base = "CURRICULA-SPEC v1\ncorpus=toy\nstrategies=shuffle-once\noutput=x\n";
    assert!(ExperimentSpec::from_text(base, Path::new(".")).is_ok());
    for extra in ["colour=blue\n", "output=y\n", "toy.size=abc\n", "strategies=nope\n"] {
        let text = format!("{base}{extra}");
        let err = ExperimentSpec::from_text(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{extra}: {err}");
    }
    let err = ExperimentSpec::from_text("corpus=toy\n", Path::new(".")).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn experiment_writes_every_artefact() {
    let dir = tempfile::tempdir().unwrap();
    let strategies = vec![
        Strategy::ShuffleEveryEpoch,
        Strategy::Length(curricula::corpus::Side::Target, Direction::Descending),
        Strategy::Perplexity(Direction::Ascending),
        Strategy::Bleu(Direction::Descending),
    ];
    let spec = tiny(strategies.clone(), dir.path());
    let report = run_experiment(&spec).unwrap();
    assert_eq!(report.rows.len(), 4);
    let root = dir.path();
    for row in &report.rows {
        let id = row.id();
        let plan = OrderingPlan::load(&root.join(format!("plans/{id}.plan"))).unwrap();
        assert_eq!(plan.num_epochs(), spec.train.max_epochs);
        let ck = load_checkpoint(&root.join(format!("models/{id}.ckpt"))).unwrap();
        assert_eq!(report.meta(&format!("row.{id}.checkpoint")), Some(ck.fingerprint().to_string().as_str()));
        assert!(row.perplexity >= 1.0 && (0.0..=1.0).contains(&row.bleu));
        assert!((1..=spec.train.max_epochs).contains(&row.epochs));
    }
    assert!(root.join("scorers/small.ckpt").exists());
    assert!(root.join("scores/perplexity-small.scores").exists());
    assert!(root.join("scores/bleu-small.scores").exists());
    let tsv = std::fs::read_to_string(root.join("report.tsv")).unwrap();
    assert_eq!(ExperimentReport::from_tsv(&tsv).unwrap(), report);
    assert_eq!(ExperimentReport::load(&root.join("report.tsv")).unwrap(), report);
    let md = std::fs::read_to_string(root.join("report.md")).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| ")).count(), 4 + 1);
    assert!(report.meta("spec").is_some());

    let data = PreparedData::load(&root.join("data")).unwrap();
    let fresh = prepare_data(&spec).unwrap();
    assert_eq!(data.train, fresh.train);
    assert_eq!(data.test, fresh.test);
    assert_eq!(data.vocabs(), fresh.vocabs());
    assert_eq!(data.train_ids, fresh.train_ids);
}

#[test]
fn stage_failures_name_the_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny(vec![Strategy::ShuffleOnce], dir.path());
    spec.train.max_epochs = 0;
    let err = run_experiment(&spec).unwrap_err();
    assert!(matches!(err, Error::Config(_) | Error::Stage { .. }), "{err}");
}

#[test]
fn file_corpus_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let spec_text = format!(
        "CURRICULA-SPEC v1\ncorpus=files\ntrain.src=a\ntrain.tgt=b\nvalidation.src=c\nvalidation.tgt=d\n\
         test.src=e\ntest.tgt=f\nstrategies=shuffle-once\noutput={}\n",
        dir.path().display()
    );
    let spec = ExperimentSpec::from_text(&spec_text, dir.path()).unwrap();
    let err = run_experiment(&spec).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn empty_reports_do_not_render() {
    let r = ExperimentReport {
        rows: vec![],
        metadata: vec![],
    };
    assert!(matches!(r.render(ReportFormat::Tsv).unwrap_err(), Error::Precondition(_)));
}

#[test]
fn noise_comparison_reports_per_seed_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny(vec![Strategy::ShuffleOnce], dir.path());
    spec.train.max_epochs = 1;
    if let CorpusSource::Toy { noise, noise_seed, .. } = &mut spec.corpus {
        *noise = 0.2;
        *noise_seed = 9;
    }
    let cmp = compare_under_noise(&spec, &[1, 2]).unwrap();
    assert_eq!(cmp.ascending_ppl.len(), 2);
    assert_eq!(cmp.shuffle_once.len(), 2);
    for (s, fp) in cmp.seeds.iter().zip(&cmp.reports) {
        let tsv = std::fs::read(dir.path().join(format!("seed-{s}/report.tsv"))).unwrap();
        assert_eq!(Fingerprint::of(&tsv), *fp);
    }
    let text = std::fs::read_to_string(dir.path().join("noise-delta.tsv")).unwrap();
    assert_eq!(text, cmp.to_text());
    assert!(text.contains("delta\t"));
}
