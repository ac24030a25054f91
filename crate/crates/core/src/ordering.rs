//! Data-ordering strategies and the batch schedules drawn from them.
//!
//! Metric strategies sort the corpus once, before training, and reuse the
//! same permutation every epoch. Minibatches are consecutive chunks of the
//! permutation.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::Side;
use crate::error::{Error, Result};
use crate::metrics::{MetricKind, ScoreTable};

const ORDER_HEADER: &str = "CURRICULA-ORDER v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Ascending,
    Descending,
}

impl Direction {
    fn short(self) -> &'static str {
        match self {
            Direction::Ascending => "asc",
            Direction::Descending => "desc",
        }
    }

    fn word(self) -> &'static str {
        match self {
            Direction::Ascending => "Ascending",
            Direction::Descending => "Descending",
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asc" | "ascending" => Ok(Direction::Ascending),
            "desc" | "descending" => Ok(Direction::Descending),
            other => Err(Error::Config(format!("unknown direction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Fresh random permutation every epoch (the usual default).
    ShuffleEveryEpoch,
    /// One random permutation, reused for every epoch.
    ShuffleOnce,
    Length(Side, Direction),
    Perplexity(Direction),
    Bleu(Direction),
}

impl Strategy {
    /// All ten patterns, in report order.
    pub fn all() -> Vec<Strategy> {
        use Direction::*;
        vec![
            Strategy::ShuffleEveryEpoch,
            Strategy::ShuffleOnce,
            Strategy::Length(Side::Source, Ascending),
            Strategy::Length(Side::Source, Descending),
            Strategy::Length(Side::Target, Ascending),
            Strategy::Length(Side::Target, Descending),
            Strategy::Perplexity(Ascending),
            Strategy::Perplexity(Descending),
            Strategy::Bleu(Ascending),
            Strategy::Bleu(Descending),
        ]
    }

    /// The four scorer-dependent patterns compared across scorer models.
    pub fn scored() -> Vec<Strategy> {
        use Direction::*;
        vec![
            Strategy::Perplexity(Ascending),
            Strategy::Perplexity(Descending),
            Strategy::Bleu(Ascending),
            Strategy::Bleu(Descending),
        ]
    }

    pub fn required_metric(self) -> Option<MetricKind> {
        match self {
            Strategy::ShuffleEveryEpoch | Strategy::ShuffleOnce => None,
            Strategy::Length(side, _) => Some(MetricKind::Length(side)),
            Strategy::Perplexity(_) => Some(MetricKind::Perplexity),
            Strategy::Bleu(_) => Some(MetricKind::Bleu),
        }
    }

    pub fn needs_scorer(self) -> bool {
        matches!(self, Strategy::Perplexity(_) | Strategy::Bleu(_))
    }

    /// Same permutation every epoch.
    pub fn is_fixed(self) -> bool {
        self != Strategy::ShuffleEveryEpoch
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Strategy::Length(_, d) | Strategy::Perplexity(d) | Strategy::Bleu(d) => Some(d),
            _ => None,
        }
    }

    /// Row name as printed in the results table.
    pub fn label(self) -> String {
        match self {
            Strategy::ShuffleEveryEpoch => "Random Shuffle every epoch".into(),
            Strategy::ShuffleOnce => "Random Shuffle once".into(),
            Strategy::Length(side, d) => {
                let lang = match side {
                    Side::Source => "source",
                    Side::Target => "target",
                };
                format!("{} Sequence Length Order for {lang} language", d.word())
            }
            Strategy::Perplexity(d) => format!("{} PPL Order", d.word()),
            Strategy::Bleu(d) => format!("{} BLEU Order", d.word()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::ShuffleEveryEpoch => f.write_str("shuffle-every-epoch"),
            Strategy::ShuffleOnce => f.write_str("shuffle-once"),
            Strategy::Length(side, d) => write!(f, "length-{}-{}", side.as_str(), d.short()),
            Strategy::Perplexity(d) => write!(f, "ppl-{}", d.short()),
            Strategy::Bleu(d) => write!(f, "bleu-{}", d.short()),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown strategy '{s}'"));
        Ok(match s {
            "shuffle-every-epoch" => Strategy::ShuffleEveryEpoch,
            "shuffle-once" => Strategy::ShuffleOnce,
            _ => {
                let (head, dir) = s.rsplit_once('-').ok_or_else(bad)?;
                let dir: Direction = dir.parse().map_err(|_| bad())?;
                match head {
                    "length-source" => Strategy::Length(Side::Source, dir),
                    "length-target" => Strategy::Length(Side::Target, dir),
                    "ppl" => Strategy::Perplexity(dir),
                    "bleu" => Strategy::Bleu(dir),
                    _ => return Err(bad()),
                }
            }
        })
    }
}

/// Per-epoch permutations of the corpus indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingPlan {
    pub strategy: Strategy,
    pub seed: u64,
    pub epochs: Vec<Vec<usize>>,
}

impl OrderingPlan {
    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    pub fn epoch(&self, e: usize) -> &[usize] {
        &self.epochs[e]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{ORDER_HEADER} {} {} {}\n", self.strategy, self.seed, self.epochs.len());
        for perm in &self.epochs {
            let mut first = true;
            for i in perm {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{i}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let fields: Vec<&str> = header
            .strip_prefix(ORDER_HEADER)
            .map(|r| r.split(' ').filter(|f| !f.is_empty()).collect())
            .unwrap_or_default();
        if fields.len() != 3 {
            return Err(Error::Format(format!("expected '{ORDER_HEADER} <strategy> <seed> <epochs>', found '{header}'")));
        }
        let strategy: Strategy = fields[0].parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let bad = |what: &str| Error::Format(format!("bad {what} in order header '{header}'"));
        let seed: u64 = fields[1].parse().map_err(|_| bad("seed"))?;
        let n: usize = fields[2].parse().map_err(|_| bad("epoch count"))?;
        let mut epochs = Vec::with_capacity(n);
        for line in lines {
            let perm = line
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| Error::Format(format!("bad index '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            epochs.push(perm);
        }
        if epochs.len() != n {
            return Err(Error::Format(format!("order header declares {n} epochs, file has {}", epochs.len())));
        }
        Ok(OrderingPlan { strategy, seed, epochs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Seeded Fisher–Yates over `indices`, using stream `stream` of the seed.
fn shuffled(indices: &[usize], seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut perm = indices.to_vec();
    for i in (1..perm.len()).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

fn sorted_by_score(indices: &[usize], scores: &ScoreTable, direction: Direction) -> Result<Vec<usize>> {
    let mut keyed = Vec::with_capacity(indices.len());
    for &i in indices {
        let v = scores.get(i).ok_or(Error::Coverage(i))?;
        let key = match direction {
            Direction::Ascending => v,
            Direction::Descending => -v,
        };
        keyed.push((key, i));
    }
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores are finite").then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}

/// Builds the per-epoch permutations for `strategy`.
///
/// Ascending sorts by `(value, index)`, descending by `(-value, index)`, so
/// ties keep index order in both directions. Shuffle-every-epoch draws epoch
/// `e` from ChaCha stream `e` of the seed; shuffle-once uses stream 0 for
/// every epoch, so both random baselines share their first epoch.
pub fn make_ordering(
    strategy: Strategy,
    scores: Option<&ScoreTable>,
    corpus_indices: &[usize],
    num_epochs: usize,
    seed: u64,
) -> Result<OrderingPlan> {
    let mut base = corpus_indices.to_vec();
    base.sort_unstable();
    if base.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Precondition("corpus indices must be unique".into()));
    }
    let epochs = match strategy {
        Strategy::ShuffleEveryEpoch => (0..num_epochs).map(|e| shuffled(&base, seed, e as u64)).collect(),
        Strategy::ShuffleOnce => vec![shuffled(&base, seed, 0); num_epochs],
        _ => {
            let wanted = strategy.required_metric().expect("metric strategy");
            let scores = scores.ok_or_else(|| Error::Metric(format!("strategy {strategy} needs a {wanted} score table")))?;
            if scores.kind() != wanted {
                return Err(Error::Metric(format!(
                    "strategy {strategy} needs {wanted} scores, got {}",
                    scores.kind()
                )));
            }
            let direction = strategy.direction().expect("metric strategy has a direction");
            vec![sorted_by_score(&base, scores, direction)?; num_epochs]
        }
    };
    Ok(OrderingPlan { strategy, seed, epochs })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSchedule {
    pub batch_size: usize,
    pub epochs: Vec<Vec<Vec<usize>>>,
}

impl BatchSchedule {
    pub fn epoch(&self, e: usize) -> &[Vec<usize>] {
        &self.epochs[e]
    }
}

/// Chunks each epoch's permutation into consecutive batches; the last batch
/// of an epoch may be short.
pub fn schedule_batches(plan: &OrderingPlan, batch_size: usize) -> Result<BatchSchedule> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let epochs = plan
        .epochs
        .iter()
        .map(|perm| perm.chunks(batch_size).map(<[usize]>::to_vec).collect())
        .collect();
    Ok(BatchSchedule { batch_size, epochs })
}

/// Outcome of [`verify_plan`]: `violation` is the first problem found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanReport {
    pub epochs_checked: usize,
    pub violation: Option<String>,
}

impl PlanReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks that every epoch is a bijection on `corpus_indices`, that fixed
/// strategies do not change between epochs and, when `scores` is given,
/// that metric orderings are monotone in the stated direction.
pub fn verify_plan(plan: &OrderingPlan, corpus_indices: &[usize], scores: Option<&ScoreTable>) -> PlanReport {
    let fail = |e: usize, msg: String| PlanReport {
        epochs_checked: e,
        violation: Some(msg),
    };
    let universe: HashSet<usize> = corpus_indices.iter().copied().collect();
    for (e, perm) in plan.epochs.iter().enumerate() {
        let mut seen = HashSet::with_capacity(perm.len());
        for &i in perm {
            if !universe.contains(&i) {
                return fail(e, format!("epoch {e}: index {i} is not in the corpus"));
            }
            if !seen.insert(i) {
                return fail(e, format!("epoch {e}: index {i} appears twice"));
            }
        }
        if seen.len() != universe.len() {
            let mut missing: Vec<usize> = universe.difference(&seen).copied().collect();
            missing.sort_unstable();
            return fail(e, format!("epoch {e}: index {} missing", missing[0]));
        }
        if plan.strategy.is_fixed() && e > 0 && perm != &plan.epochs[0] {
            return fail(e, format!("fixed strategy drift at epoch {e}"));
        }
        if let (Some(scores), Some(direction)) = (scores, plan.strategy.direction()) {
            for w in perm.windows(2) {
                let (Some(a), Some(b)) = (scores.get(w[0]), scores.get(w[1])) else {
                    return fail(e, format!("epoch {e}: no score for index {} or {}", w[0], w[1]));
                };
                let ordered = match direction {
                    Direction::Ascending => a <= b,
                    Direction::Descending => a >= b,
                };
                if !ordered {
                    return fail(e, format!("epoch {e}: order broken between indices {} and {}", w[0], w[1]));
                }
            }
        }
    }
    PlanReport {
        epochs_checked: plan.epochs.len(),
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use crate::metrics::PairScore;

    fn ppl_table(values: &[(usize, f64)]) -> ScoreTable {
        let scores = values.iter().map(|&(index, value)| PairScore { index, value }).collect();
        ScoreTable::new(MetricKind::Perplexity, Some(Fingerprint::of(b"m")), scores).unwrap()
    }

    #[test]
    fn ties_break_by_index_in_both_directions() {
        let t = ppl_table(&[(0, 3.2), (1, 1.1), (2, 3.2)]);
        let asc = make_ordering(Strategy::Perplexity(Direction::Ascending), Some(&t), &[0, 1, 2], 1, 0).unwrap();
        assert_eq!(asc.epoch(0), &[1, 0, 2]);
        let desc = make_ordering(Strategy::Perplexity(Direction::Descending), Some(&t), &[0, 1, 2], 1, 0).unwrap();
        assert_eq!(desc.epoch(0), &[0, 2, 1]);
    }

    #[test]
    fn shuffle_once_repeats_and_is_reproducible() {
        let idx: Vec<usize> = (0..20).collect();
        let a = make_ordering(Strategy::ShuffleOnce, None, &idx, 3, 42).unwrap();
        assert_eq!(a.epochs.len(), 3);
        assert!(a.epochs.iter().all(|p| p == &a.epochs[0]));
        assert_ne!(a.epochs[0], idx);
        let b = make_ordering(Strategy::ShuffleOnce, None, &idx, 3, 42).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn shuffle_every_epoch_shares_prefixes_across_lengths() {
        let idx: Vec<usize> = (0..50).collect();
        let short = make_ordering(Strategy::ShuffleEveryEpoch, None, &idx, 2, 9).unwrap();
        let long = make_ordering(Strategy::ShuffleEveryEpoch, None, &idx, 5, 9).unwrap();
        assert_eq!(short.epochs[..], long.epochs[..2]);
        assert_ne!(long.epochs[0], long.epochs[1]);
        let once = make_ordering(Strategy::ShuffleOnce, None, &idx, 1, 9).unwrap();
        assert_eq!(once.epochs[0], long.epochs[0]);
    }

    #[test]
    fn metric_errors() {
        let t = ppl_table(&[(0, 1.0), (1, 2.0)]);
        let bleu = Strategy::Bleu(Direction::Ascending);
        assert!(matches!(make_ordering(bleu, None, &[0, 1], 1, 0), Err(Error::Metric(_))));
        assert!(matches!(make_ordering(bleu, Some(&t), &[0, 1], 1, 0), Err(Error::Metric(_))));
        let ppl = Strategy::Perplexity(Direction::Ascending);
        assert!(matches!(make_ordering(ppl, Some(&t), &[0, 1, 2], 1, 0), Err(Error::Coverage(2))));
    }

    #[test]
    fn sequential_chunking() {
        let plan = OrderingPlan {
            strategy: Strategy::ShuffleOnce,
            seed: 0,
            epochs: vec![vec![4, 2, 0, 1, 3]],
        };
        let s = schedule_batches(&plan, 2).unwrap();
        assert_eq!(s.epoch(0), &[vec![4, 2], vec![0, 1], vec![3]]);
        let one = schedule_batches(&plan, 10).unwrap();
        assert_eq!(one.epoch(0), &[vec![4, 2, 0, 1, 3]]);
        assert!(schedule_batches(&plan, 0).is_err());
    }

    #[test]
    fn sixty_thousand_pairs_batch_count() {
        let idx: Vec<usize> = (0..60_000).collect();
        let plan = make_ordering(Strategy::ShuffleOnce, None, &idx, 1, 1).unwrap();
        let s = schedule_batches(&plan, 128).unwrap();
        assert_eq!(s.epoch(0).len(), 469);
        assert_eq!(s.epoch(0)[..468].iter().filter(|b| b.len() == 128).count(), 468);
        assert_eq!(s.epoch(0)[468].len(), 96);
    }

    #[test]
    fn verify_reports_violations() {
        let idx = [0, 1, 2, 3];
        let mut plan = make_ordering(Strategy::ShuffleEveryEpoch, None, &idx, 3, 5).unwrap();
        assert!(verify_plan(&plan, &idx, None).passed());
        plan.epochs[2].retain(|&i| i != 1);
        let r = verify_plan(&plan, &idx, None);
        assert_eq!(r.violation.as_deref(), Some("epoch 2: index 1 missing"));

        let mut fixed = make_ordering(Strategy::ShuffleOnce, None, &idx, 2, 5).unwrap();
        fixed.epochs[1].swap(0, 1);
        let r = verify_plan(&fixed, &idx, None);
        assert_eq!(r.violation.as_deref(), Some("fixed strategy drift at epoch 1"));
    }

    #[test]
    fn verify_checks_monotonicity() {
        let t = ppl_table(&[(0, 1.0), (1, 2.0), (2, 3.0)]);
        let plan = OrderingPlan {
            strategy: Strategy::Perplexity(Direction::Ascending),
            seed: 0,
            epochs: vec![vec![0, 2, 1]],
        };
        assert!(!verify_plan(&plan, &[0, 1, 2], Some(&t)).passed());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::all() {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(
            Strategy::Length(Side::Target, Direction::Descending).label(),
            "Descending Sequence Length Order for target language"
        );
    }

    #[test]
    fn plan_file_round_trip() {
        let idx: Vec<usize> = (0..7).collect();
        let plan = make_ordering(Strategy::ShuffleEveryEpoch, None, &idx, 3, 11).unwrap();
        let text = plan.to_text();
        assert!(text.starts_with("CURRICULA-ORDER v1 shuffle-every-epoch 11 3\n"));
        let back = OrderingPlan::from_text(&text).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.to_text(), text);
    }
}
