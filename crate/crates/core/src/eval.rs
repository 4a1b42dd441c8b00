//! Attachment scores, oracle selectors, significance tests and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::treebank::{Sentence, Upos};
use crate::ParserId;

pub const REPORT_HEADER: &str = "# ilps-report v1";
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceScore {
    pub sentence_id: String,
    pub correct: usize,
    pub total: usize,
}

impl SentenceScore {
    /// Share of scored tokens with the right head; 1 when nothing was
    /// scored.
    pub fn uas(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Unlabeled attachment score of `predicted` against `gold`.
pub fn uas(predicted: &[usize], gold: &[usize]) -> Result<SentenceScore> {
    if predicted.len() != gold.len() {
        return Err(Error::DataIntegrity(format!(
            "{} predicted heads for {} gold heads",
            predicted.len(),
            gold.len()
        )));
    }
    Ok(SentenceScore {
        sentence_id: String::new(),
        correct: predicted.iter().zip(gold).filter(|(p, g)| p == g).count(),
        total: gold.len(),
    })
}

/// Scores `predicted` against a gold sentence, optionally ignoring
/// punctuation tokens.
pub fn score_sentence(gold: &Sentence, predicted: &[usize], include_punct: bool) -> Result<SentenceScore> {
    if predicted.len() != gold.len() {
        return Err(Error::DataIntegrity(format!(
            "sentence {}: {} predicted heads for {} tokens",
            gold.id,
            predicted.len(),
            gold.len()
        )));
    }
    let mut s = SentenceScore {
        sentence_id: gold.id.clone(),
        correct: 0,
        total: 0,
    };
    for (tok, &p) in gold.tokens.iter().zip(predicted) {
        if !include_punct && tok.upos == Upos::Punct {
            continue;
        }
        s.total += 1;
        s.correct += usize::from(tok.head == p);
    }
    Ok(s)
}

/// Σ correct / Σ total.
pub fn micro_uas(scores: &[SentenceScore]) -> f64 {
    let total: usize = scores.iter().map(|s| s.total).sum();
    let correct: usize = scores.iter().map(|s| s.correct).sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

fn check_aligned(per_parser: &[Vec<SentenceScore>]) -> Result<()> {
    let first = per_parser
        .first()
        .ok_or_else(|| Error::Empty("oracle over no parsers".into()))?;
    for p in per_parser {
        if p.len() != first.len()
            || p.iter()
                .zip(first)
                .any(|(a, b)| a.total != b.total || a.sentence_id != b.sentence_id)
        {
            return Err(Error::DataIntegrity("parsers were scored on different sentences".into()));
        }
    }
    Ok(())
}

/// The parser with the best treebank UAS, lowest id on ties.
pub fn oracle_sbps(per_parser: &[Vec<SentenceScore>]) -> Result<(ParserId, f64)> {
    check_aligned(per_parser)?;
    let mut best = (ParserId::from_index(0), micro_uas(&per_parser[0]));
    for (i, p) in per_parser.iter().enumerate().skip(1) {
        let u = micro_uas(p);
        if u > best.1 {
            best = (ParserId::from_index(i), u);
        }
    }
    Ok(best)
}

/// UAS when every sentence is parsed by whichever parser does best on it.
pub fn oracle_ilps(per_parser: &[Vec<SentenceScore>]) -> Result<f64> {
    check_aligned(per_parser)?;
    let best: Vec<SentenceScore> = (0..per_parser[0].len())
        .map(|j| {
            per_parser
                .iter()
                .map(|p| &p[j])
                .max_by_key(|s| s.correct)
                .cloned()
                .unwrap()
        })
        .collect();
    Ok(micro_uas(&best))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Two-tailed paired t-test of `a` against `b`. With zero variance in the
/// differences, `t` is 0 and `p` 1 if the mean difference is 0, otherwise
/// `t` is infinite and `p` 0.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DataIntegrity(format!(
            "paired test over {} and {} scores",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::DataIntegrity("paired test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0, df }
        } else {
            TTest {
                t: f64::INFINITY.copysign(mean),
                p: 0.0,
                df,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let nu = df as f64;
    let p = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
    Ok(TTest { t, p, df })
}

/// Per-sentence scores of one system on one target language.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemRun {
    pub system: String,
    pub language: String,
    /// Human-readable description of the parsers used.
    pub selected: String,
    pub scores: Vec<SentenceScore>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub system: String,
    pub language: String,
    pub uas: f64,
    pub correct: usize,
    pub total: usize,
    pub selected: String,
    /// Paired test against the reference system on the same sentences.
    pub test: Option<TTest>,
}

impl ReportRow {
    /// `+` or `-` when significantly better or worse than the reference.
    pub fn significance(&self) -> &'static str {
        match self.test {
            Some(t) if t.p < SIGNIFICANCE_LEVEL && t.t > 0.0 => "+",
            Some(t) if t.p < SIGNIFICANCE_LEVEL && t.t < 0.0 => "-",
            _ => "",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub reference: Option<String>,
    pub languages: Vec<String>,
    pub systems: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn row(&self, system: &str, language: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.language == language)
    }

    /// Unweighted mean of the system's per-language UAS.
    pub fn macro_uas(&self, system: &str) -> f64 {
        let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.system == system).collect();
        rows.iter().map(|r| r.uas).sum::<f64>() / rows.len().max(1) as f64
    }

    /// Σ correct / Σ total over all of the system's languages.
    pub fn micro_uas(&self, system: &str) -> f64 {
        let (c, t) = self
            .rows
            .iter()
            .filter(|r| r.system == system)
            .fold((0, 0), |(c, t), r| (c + r.correct, t + r.total));
        if t == 0 {
            0.0
        } else {
            c as f64 / t as f64
        }
    }

    pub fn to_table(&self) -> String {
        let width = self.systems.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}", "system", width = width);
        for l in &self.languages {
            write!(out, " {:>9}", l).unwrap();
        }
        writeln!(out, " {:>9} {:>9}", "macro", "micro").unwrap();
        for s in &self.systems {
            write!(out, "{:<width$}", s, width = width).unwrap();
            for l in &self.languages {
                match self.row(s, l) {
                    Some(r) => write!(out, " {:>8.2}{}", 100.0 * r.uas, r.significance().chars().next().unwrap_or(' ')).unwrap(),
                    None => write!(out, " {:>9}", "-").unwrap(),
                }
            }
            writeln!(out, " {:>9.2} {:>9.2}", 100.0 * self.macro_uas(s), 100.0 * self.micro_uas(s)).unwrap();
        }
        if let Some(r) = &self.reference {
            writeln!(
                out,
                "+/- : significantly better/worse than {} (paired t-test, p < {})",
                r, SIGNIFICANCE_LEVEL
            )
            .unwrap();
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", REPORT_HEADER);
        out.push_str("system\tlanguage\tuas\tcorrect\ttotal\tselected\tt\tp\tsignificance\n");
        for r in &self.rows {
            let (t, p) = match r.test {
                Some(t) => (format!("{:.6}", t.t), format!("{:.3e}", t.p)),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.system,
                r.language,
                r.uas,
                r.correct,
                r.total,
                r.selected,
                t,
                p,
                r.significance()
            )
            .unwrap();
        }
        for s in &self.systems {
            writeln!(out, "{}\tmacro\t{:.6}\t\t\t\t\t\t", s, self.macro_uas(s)).unwrap();
            writeln!(out, "{}\tmicro\t{:.6}\t\t\t\t\t\t", s, self.micro_uas(s)).unwrap();
        }
        out
    }
}

/// One row per system and language; each is tested against `reference`
/// on the same language when that system is present.
pub fn build_report(runs: &[SystemRun], reference: Option<&str>) -> Result<EvaluationReport> {
    let mut systems: Vec<String> = Vec::new();
    let mut languages: Vec<String> = Vec::new();
    let mut by_key: BTreeMap<(String, String), &SystemRun> = BTreeMap::new();
    for r in runs {
        if !systems.contains(&r.system) {
            systems.push(r.system.clone());
        }
        if !languages.contains(&r.language) {
            languages.push(r.language.clone());
        }
        if by_key.insert((r.system.clone(), r.language.clone()), r).is_some() {
            return Err(Error::DataIntegrity(format!(
                "system {} evaluated twice on {}",
                r.system, r.language
            )));
        }
    }
    languages.sort();
    let mut rows = Vec::new();
    for s in &systems {
        for l in &languages {
            let Some(run) = by_key.get(&(s.clone(), l.clone())) else {
                continue;
            };
            let test = match reference.and_then(|r| by_key.get(&(r.to_owned(), l.clone()))) {
                Some(base) if base.system != run.system && run.scores.len() >= 2 => {
                    if base.scores.len() != run.scores.len()
                        || base
                            .scores
                            .iter()
                            .zip(&run.scores)
                            .any(|(a, b)| a.sentence_id != b.sentence_id)
                    {
                        return Err(Error::DataIntegrity(format!(
                            "{} and {} were scored on different {} sentences",
                            s, base.system, l
                        )));
                    }
                    let a: Vec<f64> = run.scores.iter().map(SentenceScore::uas).collect();
                    let b: Vec<f64> = base.scores.iter().map(SentenceScore::uas).collect();
                    Some(paired_ttest(&a, &b)?)
                }
                _ => None,
            };
            rows.push(ReportRow {
                system: s.clone(),
                language: l.clone(),
                uas: micro_uas(&run.scores),
                correct: run.scores.iter().map(|x| x.correct).sum(),
                total: run.scores.iter().map(|x| x.total).sum(),
                selected: run.selected.clone(),
                test,
            });
        }
    }
    Ok(EvaluationReport {
        reference: reference.map(str::to_owned),
        languages,
        systems,
        rows,
    })
}
