//! Parallel corpus loading, filtering, vocabularies and id encoding.
//!
//! Pair indices are assigned once at load time (line number in the raw
//! files) and survive filtering, truncation and reordering, so every
//! downstream artifact can refer to a pair by its index.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<s>", "</s>", "<unk>"];

const VOCAB_HEADER: &str = "CURRICULA-VOCAB v1";

/// Which half of a sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" | "src" => Ok(Side::Source),
            "target" | "tgt" => Ok(Side::Target),
            other => Err(Error::Config(format!("unknown side '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub index: usize,
    pub src_tokens: Vec<String>,
    pub tgt_tokens: Vec<String>,
}

impl SentencePair {
    pub fn new(index: usize, src: &str, tgt: &str) -> Self {
        SentencePair {
            index,
            src_tokens: tokenize(src),
            tgt_tokens: tokenize(tgt),
        }
    }

    pub fn tokens(&self, side: Side) -> &[String] {
        match side {
            Side::Source => &self.src_tokens,
            Side::Target => &self.tgt_tokens,
        }
    }
}

/// Pairs are kept sorted by strictly increasing index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub src_name: String,
    pub tgt_name: String,
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(
        src_name: impl Into<String>,
        tgt_name: impl Into<String>,
        pairs: Vec<SentencePair>,
    ) -> Result<Self> {
        if let Some(w) = pairs.windows(2).find(|w| w[0].index >= w[1].index) {
            return Err(Error::Precondition(format!(
                "pair indices must be strictly increasing ({} then {})",
                w[0].index, w[1].index
            )));
        }
        Ok(ParallelCorpus {
            src_name: src_name.into(),
            tgt_name: tgt_name.into(),
            pairs,
        })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.index).collect()
    }

    pub fn get(&self, index: usize) -> Option<&SentencePair> {
        self.pairs
            .binary_search_by_key(&index, |p| p.index)
            .ok()
            .map(|pos| &self.pairs[pos])
    }

    /// Keep the `k` lowest-indexed pairs.
    pub fn truncate(mut self, k: usize) -> Self {
        self.pairs.truncate(k);
        self
    }

    /// Order-independent hash of the pair multiset, used to show that two
    /// experiment rows trained on the same data.
    pub fn content_fingerprint(&self) -> Fingerprint {
        let mut lines: Vec<String> = self
            .pairs
            .iter()
            .map(|p| format!("{}\t{}\t{}\n", p.index, p.src_tokens.join(" "), p.tgt_tokens.join(" ")))
            .collect();
        lines.sort();
        Fingerprint::of(lines.concat().as_bytes())
    }

    /// Write as two line-aligned files, the same format `load_parallel_corpus` reads.
    pub fn save(&self, src_path: &Path, tgt_path: &Path) -> Result<()> {
        let mut src = String::new();
        let mut tgt = String::new();
        for p in &self.pairs {
            src.push_str(&p.src_tokens.join(" "));
            src.push('\n');
            tgt.push_str(&p.tgt_tokens.join(" "));
            tgt.push('\n');
        }
        fs::write(src_path, src).map_err(|e| Error::io(src_path, e))?;
        fs::write(tgt_path, tgt).map_err(|e| Error::io(tgt_path, e))?;
        Ok(())
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_owned).collect()
}

fn language_label(path: &Path) -> String {
    path.extension()
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn check_reserved(tokens: &[String], path: &Path, line: usize) -> Result<()> {
    match tokens.iter().find(|t| SPECIAL_TOKENS[..3].contains(&t.as_str())) {
        Some(t) => Err(Error::Format(format!(
            "{}:{}: reserved token '{t}'",
            path.display(),
            line + 1
        ))),
        None => Ok(()),
    }
}

/// Pair `i` holds line `i` of each file, whitespace-tokenized.
pub fn load_parallel_corpus(src_path: &Path, tgt_path: &Path) -> Result<ParallelCorpus> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(Error::Alignment {
            src: src.len(),
            tgt: tgt.len(),
        });
    }
    let mut pairs = Vec::with_capacity(src.len());
    for (i, (s, t)) in src.iter().zip(&tgt).enumerate() {
        let pair = SentencePair::new(i, s, t);
        check_reserved(&pair.src_tokens, src_path, i)?;
        check_reserved(&pair.tgt_tokens, tgt_path, i)?;
        pairs.push(pair);
    }
    ParallelCorpus::new(language_label(src_path), language_label(tgt_path), pairs)
}

/// Keep pairs whose both sides have `min_len..=max_len` tokens, dropping any
/// pair whose exact token content already appeared at a smaller index.
pub fn filter_corpus(corpus: &ParallelCorpus, min_len: usize, max_len: usize) -> Result<ParallelCorpus> {
    if min_len < 1 || max_len < min_len {
        return Err(Error::Config(format!(
            "invalid length bounds [{min_len}, {max_len}]"
        )));
    }
    let in_bounds = |n: usize| (min_len..=max_len).contains(&n);
    let mut seen: HashSet<(&[String], &[String])> = HashSet::new();
    let mut kept = Vec::new();
    for pair in &corpus.pairs {
        if !in_bounds(pair.src_tokens.len()) || !in_bounds(pair.tgt_tokens.len()) {
            continue;
        }
        if seen.insert((&pair.src_tokens, &pair.tgt_tokens)) {
            kept.push(pair.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyCorpus("filtering"));
    }
    ParallelCorpus::new(corpus.src_name.clone(), corpus.tgt_name.clone(), kept)
}

/// Token/id mapping with the four fixed specials at ids 0..4.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    ids: HashMap<String, usize>,
    min_count: u64,
    fingerprint: Fingerprint,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.freqs == other.freqs
    }
}

impl Vocabulary {
    fn from_entries(entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut freqs = vec![0; NUM_SPECIALS];
        for (t, f) in entries {
            tokens.push(t);
            freqs.push(f);
        }
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut listing = String::new();
        for (i, t) in tokens.iter().enumerate() {
            let _ = writeln!(listing, "{t}\t{i}");
        }
        Vocabulary {
            fingerprint: Fingerprint::of(listing.as_bytes()),
            tokens,
            freqs,
            ids,
            min_count,
        }
    }

    /// Build from a token stream. Tokens seen at least `min_count` times get
    /// ids in descending-frequency order, ties broken lexicographically.
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: u64) -> Self {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !SPECIAL_TOKENS.contains(&t))
            .map(|(t, c)| (t.to_owned(), c))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_entries(entries, min_count)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.get(token).is_some_and(|&id| id >= NUM_SPECIALS)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn frequency(&self, id: usize) -> Option<u64> {
        self.freqs.get(id).copied()
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Map ids back to tokens; specials are dropped.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id >= NUM_SPECIALS)
            .filter_map(|&id| self.tokens.get(id).cloned())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(VOCAB_HEADER);
        out.push('\n');
        for (i, (t, f)) in self.tokens.iter().zip(&self.freqs).enumerate() {
            let _ = writeln!(out, "{t}\t{i}\t{f}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(VOCAB_HEADER) => {}
            other => {
                return Err(Error::Format(format!(
                    "expected vocabulary header '{VOCAB_HEADER}', found {other:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Format(format!("vocabulary line {}: '{line}'", n + 2));
            if fields.len() != 3 {
                return Err(bad());
            }
            let id: usize = fields[1].parse().map_err(|_| bad())?;
            let freq: u64 = fields[2].parse().map_err(|_| bad())?;
            if id != n {
                return Err(bad());
            }
            if id < NUM_SPECIALS {
                if fields[0] != SPECIAL_TOKENS[id] {
                    return Err(bad());
                }
            } else {
                entries.push((fields[0].to_owned(), freq));
            }
        }
        let min_count = entries.iter().map(|e| e.1).min().unwrap_or(1);
        Ok(Self::from_entries(entries, min_count))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub fn build_vocab(corpus: &ParallelCorpus, side: Side, min_count: u64) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("vocabulary construction"));
    }
    let tokens = corpus
        .pairs
        .iter()
        .flat_map(|p| p.tokens(side).iter().map(String::as_str));
    Ok(Vocabulary::from_tokens(tokens, min_count))
}

/// Source and target vocabulary fingerprints an encoding was made with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabPair {
    pub src: Fingerprint,
    pub tgt: Fingerprint,
}

impl VocabPair {
    pub fn of(src: &Vocabulary, tgt: &Vocabulary) -> Self {
        VocabPair {
            src: src.fingerprint(),
            tgt: tgt.fingerprint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub index: usize,
    pub src_ids: Vec<usize>,
    /// `BOS` followed by the target ids.
    pub tgt_in_ids: Vec<usize>,
    /// The target ids followed by `EOS`.
    pub tgt_out_ids: Vec<usize>,
    pub vocabs: VocabPair,
}

impl EncodedPair {
    /// Target ids without framing.
    pub fn tgt_ids(&self) -> &[usize] {
        &self.tgt_out_ids[..self.tgt_out_ids.len() - 1]
    }
}

pub fn encode_pair(pair: &SentencePair, src_vocab: &Vocabulary, tgt_vocab: &Vocabulary) -> EncodedPair {
    let src_ids = src_vocab.encode(&pair.src_tokens);
    let tgt = tgt_vocab.encode(&pair.tgt_tokens);
    let mut tgt_in_ids = Vec::with_capacity(tgt.len() + 1);
    tgt_in_ids.push(BOS);
    tgt_in_ids.extend_from_slice(&tgt);
    let mut tgt_out_ids = tgt;
    tgt_out_ids.push(EOS);
    EncodedPair {
        index: pair.index,
        src_ids,
        tgt_in_ids,
        tgt_out_ids,
        vocabs: VocabPair::of(src_vocab, tgt_vocab),
    }
}

pub fn encode_corpus(corpus: &ParallelCorpus, src_vocab: &Vocabulary, tgt_vocab: &Vocabulary) -> Vec<EncodedPair> {
    corpus
        .pairs
        .iter()
        .map(|p| encode_pair(p, src_vocab, tgt_vocab))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_of(pairs: &[(&str, &str)]) -> ParallelCorpus {
        let pairs = pairs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| SentencePair::new(i, s, t))
            .collect();
        ParallelCorpus::new("src", "tgt", pairs).unwrap()
    }

    fn write_pair(dir: &Path, src: &str, tgt: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let s = dir.join("train.en");
        let t = dir.join("train.vi");
        fs::write(&s, src).unwrap();
        fs::write(&t, tgt).unwrap();
        (s, t)
    }

    #[test]
    fn load_rejects_misaligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = write_pair(dir.path(), "a b\nc d", "x y\nz");
        let ok = load_parallel_corpus(&s, &t).unwrap();
        assert_eq!(ok.len(), 2);

        let (s, t) = write_pair(dir.path(), "a b\nc d", "x y");
        match load_parallel_corpus(&s, &t) {
            Err(Error::Alignment { src: 2, tgt: 1 }) => {}
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn load_splits_on_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = write_pair(dir.path(), "hello world .\n", "xin chào .\n");
        let c = load_parallel_corpus(&s, &t).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.pairs()[0].src_tokens, ["hello", "world", "."]);
        assert_eq!(c.pairs()[0].tgt_tokens, ["xin", "chào", "."]);
        assert_eq!(c.src_name, "en");
        assert_eq!(c.tgt_name, "vi");
    }

    #[test]
    fn load_assigns_line_indices() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = write_pair(dir.path(), "a\nb\nc\n", "a\nb\nc\n");
        let c = load_parallel_corpus(&s, &t).unwrap();
        assert_eq!(c.indices(), vec![0, 1, 2]);
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(matches!(
            load_parallel_corpus(&missing, &missing),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_rejects_reserved_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = write_pair(dir.path(), "a </s> b\n", "x\n");
        assert!(matches!(load_parallel_corpus(&s, &t), Err(Error::Format(_))));
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn filter_drops_long_and_keeps_inclusive_bounds() {
        let c = corpus_of(&[
            (&words(61), &words(10)),
            (&words(5), &words(5)),
            (&words(60), &words(60)),
            (&words(4), &words(10)),
            (&words(10), &words(61)),
        ]);
        let f = filter_corpus(&c, 5, 60).unwrap();
        assert_eq!(f.indices(), vec![1, 2]);
    }

    #[test]
    fn filter_keeps_first_duplicate() {
        let mut pairs = Vec::new();
        for i in 0..8 {
            let s = if i == 3 || i == 7 { words(6) } else { format!("{} u{i}", words(5)) };
            pairs.push(SentencePair::new(i, &s, &words(6)));
        }
        let c = ParallelCorpus::new("s", "t", pairs).unwrap();
        let f = filter_corpus(&c, 5, 60).unwrap();
        assert!(f.get(3).is_some());
        assert!(f.get(7).is_none());
        assert_eq!(f.len(), 7);
    }

    #[test]
    fn filter_source_only_duplicates_survive() {
        let c = corpus_of(&[(&words(5), "a b c d e"), (&words(5), "a b c d f")]);
        assert_eq!(filter_corpus(&c, 5, 60).unwrap().len(), 2);
    }

    #[test]
    fn filter_errors() {
        let c = corpus_of(&[("a", "b")]);
        assert!(matches!(filter_corpus(&c, 5, 60), Err(Error::EmptyCorpus(_))));
        assert!(matches!(filter_corpus(&c, 0, 60), Err(Error::Config(_))));
        assert!(matches!(filter_corpus(&c, 6, 5), Err(Error::Config(_))));
    }

    #[test]
    fn truncate_keeps_lowest_indices() {
        let c = corpus_of(&[("a", "a"), ("b", "b"), ("c", "c")]).truncate(2);
        assert_eq!(c.indices(), vec![0, 1]);
    }

    #[test]
    fn vocab_frequency_order_cutoff_and_ties() {
        let v = Vocabulary::from_tokens(["a", "b", "a", "a"], 1);
        assert_eq!((v.id("a"), v.id("b")), (4, 5));

        let v = Vocabulary::from_tokens(["a", "b", "a", "a"], 2);
        assert!(!v.contains("b"));
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.len(), 5);

        let v = Vocabulary::from_tokens(["b", "a", "b", "a"], 1);
        assert_eq!((v.id("a"), v.id("b")), (4, 5));
    }

    #[test]
    fn vocab_all_rare_is_specials_only() {
        let c = corpus_of(&[("a b", "c")]);
        let v = build_vocab(&c, Side::Source, 5).unwrap();
        assert_eq!(v.len(), NUM_SPECIALS);
    }

    #[test]
    fn vocab_specials_are_fixed() {
        let v = Vocabulary::from_tokens(["x"], 1);
        for (id, tok) in SPECIAL_TOKENS.iter().enumerate() {
            assert_eq!(v.token(id), Some(*tok));
            assert_eq!(v.id(tok), id);
        }
    }

    #[test]
    fn vocab_file_round_trip() {
        let c = corpus_of(&[("the cat the dog", "x"), ("a cat", "y")]);
        let v = build_vocab(&c, Side::Source, 1).unwrap();
        let text = v.to_text();
        assert!(text.starts_with("CURRICULA-VOCAB v1\n<pad>\t0\t0\n<s>\t1\t0\n</s>\t2\t0\n<unk>\t3\t0\n"));
        assert!(text.contains("cat\t4\t2\nthe\t5\t2\n"));
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert!(Vocabulary::from_text("CURRICULA-VOCAB v2\n").is_err());
    }

    #[test]
    fn encode_frames_target() {
        let src_v = Vocabulary::from_tokens(["p"], 1);
        let tgt_v = Vocabulary::from_tokens(["x", "x", "y"], 1);
        let pair = SentencePair::new(0, "p q", "x y");
        let e = encode_pair(&pair, &src_v, &tgt_v);
        assert_eq!(e.tgt_in_ids, vec![BOS, 4, 5]);
        assert_eq!(e.tgt_out_ids, vec![4, 5, EOS]);
        assert_eq!(e.src_ids, vec![4, UNK]);
        assert_eq!(e.tgt_ids(), &[4, 5]);

        let empty = encode_pair(&SentencePair::new(1, "", ""), &src_v, &tgt_v);
        assert_eq!(empty.tgt_in_ids, vec![BOS]);
        assert_eq!(empty.tgt_out_ids, vec![EOS]);
        assert!(empty.src_ids.is_empty());
    }
}
