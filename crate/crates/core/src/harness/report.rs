//! Results tables: TSV for machines, markdown for people.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ordering::Strategy;
use crate::seq2seq::Preset;

pub const REPORT_HEADER: &str = "CURRICULA-REPORT v1";
const COLUMNS: &str = "strategy\tscorer\tepochs\ttest_ppl\ttest_bleu\ttest_bleu_x100";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub scorer: Option<Preset>,
    /// Epoch of the best validation perplexity.
    pub epochs: usize,
    pub perplexity: f64,
    /// Corpus BLEU as a fraction.
    pub bleu: f64,
}

impl ReportRow {
    /// File-name stem for this row's artifacts.
    pub fn id(&self) -> String {
        match self.scorer {
            Some(p) => format!("{}-{p}", self.strategy),
            None => self.strategy.to_string(),
        }
    }

    /// Strategy name, with the scorer in parentheses when there is one.
    pub fn title(&self) -> String {
        match self.scorer {
            Some(p) => format!("{} ({p} scorer)", self.strategy.label()),
            None => self.strategy.label(),
        }
    }

    /// `Ascending PPL Order (base scorer) | 32 | 14.69 | 19.8`
    pub fn table_row(&self) -> String {
        format!("{} | {} | {:.2} | {:.1}", self.title(), self.epochs, self.perplexity, self.bleu * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Seeds, fingerprints and artifact paths, in insertion order.
    pub metadata: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!("unknown report format '{s}' (tsv, markdown)"))),
        }
    }
}

impl ExperimentReport {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "#\t{k}\t{v}");
        }
        out.push_str(COLUMNS);
        out.push('\n');
        for r in &self.rows {
            let scorer = r.scorer.map_or_else(|| "-".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "{}\t{scorer}\t{}\t{:?}\t{:?}\t{:.1}",
                r.strategy.label(),
                r.epochs,
                r.perplexity,
                r.bleu,
                r.bleu * 100.0
            );
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("report: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(bad(format!("missing header '{REPORT_HEADER}'")));
        }
        let mut report = ExperimentReport::default();
        let mut saw_columns = false;
        for line in lines {
            if let Some(rest) = line.strip_prefix("#\t") {
                let (k, v) = rest.split_once('\t').ok_or_else(|| bad(format!("bad metadata line '{line}'")))?;
                report.metadata.push((k.to_string(), v.to_string()));
                continue;
            }
            if !saw_columns {
                if line != COLUMNS {
                    return Err(bad("missing column header".into()));
                }
                saw_columns = true;
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, got {}", f.len())));
            }
            let strategy = Strategy::all()
                .into_iter()
                .find(|s| s.label() == f[0])
                .ok_or_else(|| bad(format!("unknown strategy '{}'", f[0])))?;
            let scorer = match f[1] {
                "-" => None,
                p => Some(p.parse()?),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'")));
            report.rows.push(ReportRow {
                strategy,
                scorer,
                epochs: f[2].parse().map_err(|_| bad(format!("bad epoch count '{}'", f[2])))?,
                perplexity: num(f[3])?,
                bleu: num(f[4])?,
            });
        }
        if !saw_columns {
            return Err(bad("missing column header".into()));
        }
        Ok(report)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Strategy | Scorer | Epochs (early-stop) | Test PPL | Test BLEU |\n");
        out.push_str("|---|---|---:|---:|---:|\n");
        for r in &self.rows {
            let scorer = r.scorer.map_or_else(|| "-".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "| {} | {scorer} | {} | {:.2} | {:.1} |",
                r.strategy.label(),
                r.epochs,
                r.perplexity,
                r.bleu * 100.0
            );
        }
        if !self.metadata.is_empty() {
            out.push('\n');
            for (k, v) in &self.metadata {
                let _ = writeln!(out, "- `{k}`: {v}");
            }
        }
        out
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::Precondition("report has no rows".into()));
        }
        Ok(match format {
            ReportFormat::Tsv => self.to_tsv(),
            ReportFormat::Markdown => self.to_markdown(),
        })
    }

    pub fn emit(&self, format: ReportFormat, path: &Path) -> Result<()> {
        let text = self.render(format)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::Direction;

    fn report() -> ExperimentReport {
        ExperimentReport {
            rows: vec![
                ReportRow {
                    strategy: Strategy::ShuffleEveryEpoch,
                    scorer: None,
                    epochs: 20,
                    perplexity: 16.55,
                    bleu: 0.181,
                },
                ReportRow {
                    strategy: Strategy::Perplexity(Direction::Ascending),
                    scorer: Some(Preset::Base),
                    epochs: 32,
                    perplexity: 14.69,
                    bleu: 0.198,
                },
            ],
            metadata: vec![("init_seed".into(), "1".into())],
        }
    }

    #[test]
    fn table_row_rendering() {
        assert_eq!(report().rows[1].table_row(), "Ascending PPL Order (base scorer) | 32 | 14.69 | 19.8");
        assert_eq!(report().rows[0].table_row(), "Random Shuffle every epoch | 20 | 16.55 | 18.1");
    }

    #[test]
    fn tsv_round_trip() {
        let r = report();
        assert_eq!(ExperimentReport::from_tsv(&r.to_tsv()).unwrap(), r);
    }

    #[test]
    fn empty_report_is_precondition_error() {
        let r = ExperimentReport::default();
        assert!(matches!(r.render(ReportFormat::Markdown), Err(Error::Precondition(_))));
    }

    #[test]
    fn markdown_layout() {
        let md = report().to_markdown();
        assert!(md.starts_with("| Strategy | Scorer | Epochs (early-stop) | Test PPL | Test BLEU |\n"));
        assert!(md.contains("| Ascending PPL Order | base | 32 | 14.69 | 19.8 |"));
    }
}
