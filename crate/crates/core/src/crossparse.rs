//! Cross-parsing of source treebanks and the normalized regression labels
//! derived from it.
//!
//! Every source parser parses the sentences of every *other* source
//! language. The label of parser `i` on sentence `j` is its number of
//! correct heads divided by the mean number of correct heads over all
//! parsers that parsed `j`, so the labels of a sentence average to one.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel::parallel_map;
use crate::parser::SourceParserModel;
use crate::treebank::{
    format_upos_sequence, parse_upos_sequence, resample_groups, Sentence, Treebank, Upos,
};
use crate::ParserId;

pub const EXAMPLES_HEADER: &str = "# ilps-examples v1";
pub const RECORDS_HEADER: &str = "# ilps-crossparse v1";

#[derive(Clone, Debug, PartialEq)]
pub struct CrossParseRecord {
    pub parser_id: ParserId,
    pub sentence_id: String,
    pub correct_heads: usize,
    pub sentence_length: usize,
}

/// All records of one sentence, with the tags needed to build examples.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceGroup {
    pub sentence_id: String,
    pub language: String,
    pub upos: Vec<Upos>,
    pub records: Vec<CrossParseRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionExample {
    pub parser_id: ParserId,
    pub upos: Vec<Upos>,
    pub label: f64,
    /// Empty when the example was read back from disk.
    pub sentence_id: String,
}

/// Number of positions where `predicted` matches `gold`.
pub fn correct_heads(predicted: &[usize], gold: &[usize]) -> usize {
    assert_eq!(predicted.len(), gold.len(), "head arrays differ in length");
    predicted.iter().zip(gold).filter(|(p, g)| p == g).count()
}

/// Records for one parser from already predicted parses of `gold`.
pub fn records_from_predictions(
    parser_id: ParserId,
    gold: &Treebank,
    predicted: &Treebank,
) -> Result<Vec<CrossParseRecord>> {
    if gold.len() != predicted.len() {
        return Err(Error::DataIntegrity(format!(
            "{} predicted sentences for {} gold sentences of `{}`",
            predicted.len(),
            gold.len(),
            gold.language
        )));
    }
    gold.sentences
        .iter()
        .zip(&predicted.sentences)
        .map(|(g, p)| {
            if g.upos() != p.upos() {
                return Err(Error::DataIntegrity(format!(
                    "predicted sentence for {} has different tags",
                    g.id
                )));
            }
            Ok(record(parser_id, g, &p.heads()))
        })
        .collect()
}

fn record(parser_id: ParserId, gold: &Sentence, predicted: &[usize]) -> CrossParseRecord {
    CrossParseRecord {
        parser_id,
        sentence_id: gold.id.clone(),
        correct_heads: correct_heads(predicted, &gold.heads()),
        sentence_length: gold.len(),
    }
}

/// Parse every treebank with every parser of a different language. Parser
/// `k` of `parsers` gets id `k + 1`. Records come out grouped by parser,
/// then treebank, then sentence.
pub fn cross_parse(
    parsers: &[SourceParserModel],
    tbs: &[Treebank],
    jobs: usize,
) -> Vec<CrossParseRecord> {
    let pairs: Vec<(usize, usize)> = (0..parsers.len())
        .flat_map(|p| (0..tbs.len()).map(move |t| (p, t)))
        .filter(|&(p, t)| parsers[p].language != tbs[t].language)
        .collect();
    parallel_map(&pairs, jobs, |&(p, t)| {
        let id = ParserId::from_index(p);
        tbs[t]
            .sentences
            .iter()
            .map(|s| record(id, s, &parsers[p].parse(s)))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Group records by sentence, in treebank order.
pub fn group_records(records: &[CrossParseRecord], tbs: &[Treebank]) -> Result<Vec<SentenceGroup>> {
    let mut by_sentence: HashMap<&str, Vec<CrossParseRecord>> = HashMap::new();
    for r in records {
        by_sentence
            .entry(r.sentence_id.as_str())
            .or_default()
            .push(r.clone());
    }
    let mut groups = Vec::new();
    for tb in tbs {
        for s in &tb.sentences {
            if let Some(mut records) = by_sentence.remove(s.id.as_str()) {
                records.sort_by_key(|r| r.parser_id);
                groups.push(SentenceGroup {
                    sentence_id: s.id.clone(),
                    language: s.language.clone(),
                    upos: s.upos(),
                    records,
                });
            }
        }
    }
    if let Some(id) = by_sentence.keys().next() {
        return Err(Error::DataIntegrity(format!(
            "record for unknown sentence {}",
            id
        )));
    }
    Ok(groups)
}

/// Turn correct-head counts into normalized labels. Sentences on which no
/// parser gets any head right are dropped.
pub fn make_labels(groups: &[SentenceGroup]) -> Result<Vec<RegressionExample>> {
    let expected = groups.first().map_or(0, |g| g.records.len());
    let mut out = Vec::new();
    for g in groups {
        if g.records.len() != expected {
            return Err(Error::DataIntegrity(format!(
                "sentence {} has {} parser records, expected {}",
                g.sentence_id,
                g.records.len(),
                expected
            )));
        }
        let distinct: HashSet<ParserId> = g.records.iter().map(|r| r.parser_id).collect();
        if distinct.len() != g.records.len() {
            return Err(Error::DataIntegrity(format!(
                "sentence {} has duplicate parser records",
                g.sentence_id
            )));
        }
        let total: usize = g.records.iter().map(|r| r.correct_heads).sum();
        if total == 0 {
            continue;
        }
        let mean = total as f64 / g.records.len() as f64;
        for r in &g.records {
            out.push(RegressionExample {
                parser_id: r.parser_id,
                upos: g.upos.clone(),
                label: r.correct_heads as f64 / mean,
                sentence_id: g.sentence_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Resample so that every source language contributes the mean number of
/// sentences. All examples of a sentence move together.
pub fn balance_examples(examples: &[RegressionExample], groups: &[SentenceGroup], seed: u64) -> Result<Vec<RegressionExample>> {
    let language: HashMap<&str, &str> = groups
        .iter()
        .map(|g| (g.sentence_id.as_str(), g.language.as_str()))
        .collect();
    let mut order: Vec<&str> = Vec::new();
    let mut per_lang: HashMap<&str, Vec<Vec<RegressionExample>>> = HashMap::new();
    let mut last: Option<&str> = None;
    for e in examples {
        let lang = *language.get(e.sentence_id.as_str()).ok_or_else(|| {
            Error::DataIntegrity(format!("example for unknown sentence {}", e.sentence_id))
        })?;
        let bundles = per_lang.entry(lang).or_insert_with(|| {
            order.push(lang);
            Vec::new()
        });
        if last == Some(e.sentence_id.as_str()) {
            bundles.last_mut().unwrap().push(e.clone());
        } else {
            bundles.push(vec![e.clone()]);
        }
        last = Some(e.sentence_id.as_str());
    }
    let grouped: Vec<Vec<Vec<RegressionExample>>> =
        order.iter().map(|l| per_lang.remove(l).unwrap()).collect();
    let balanced = resample_groups(&grouped, seed)?;
    Ok(balanced.into_iter().flatten().flatten().collect())
}

/// Split by sentence id into (train, dev); `dev_fraction` of the distinct
/// sentences (rounded, at least one on each side) go to dev.
pub fn split_examples(
    examples: &[RegressionExample],
    dev_fraction: f64,
    seed: u64,
) -> Result<(Vec<RegressionExample>, Vec<RegressionExample>)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Config(format!(
            "dev fraction must lie in (0, 1), got {}",
            dev_fraction
        )));
    }
    let mut ids: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for e in examples {
        if seen.insert(e.sentence_id.as_str()) {
            ids.push(e.sentence_id.as_str());
        }
    }
    let n = ids.len();
    if n < 2 {
        return Err(Error::Empty(
            "need at least two sentences to split into train and dev".into(),
        ));
    }
    let dev_count = ((dev_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let dev_ids: HashSet<&str> = ids[..dev_count].iter().copied().collect();
    let (dev, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .partition(|e| dev_ids.contains(e.sentence_id.as_str()));
    Ok((train, dev))
}

pub fn write_examples(path: &Path, examples: &[RegressionExample]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", EXAMPLES_HEADER).unwrap();
    for e in examples {
        writeln!(
            out,
            "{}\t{}\t{:.6}",
            e.parser_id,
            format_upos_sequence(&e.upos),
            e.label
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|err| Error::io(path, err))
}

pub fn read_examples(path: &Path) -> Result<Vec<RegressionExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(EXAMPLES_HEADER) {
        return Err(Error::format(path, "missing or unsupported examples header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format(path, format!("line {}: malformed example", i + 2));
            let mut cols = line.split('\t');
            let (p, tags, label) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
                (Some(p), Some(t), Some(l), None) => (p, t, l),
                _ => return Err(bad()),
            };
            Ok(RegressionExample {
                parser_id: p.parse().map_err(|_| bad())?,
                upos: parse_upos_sequence(tags)?,
                label: label.parse().map_err(|_| bad())?,
                sentence_id: String::new(),
            })
        })
        .collect()
}

pub fn write_groups(path: &Path, groups: &[SentenceGroup]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{}", RECORDS_HEADER).unwrap();
    for g in groups {
        for r in &g.records {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.parser_id,
                r.sentence_id,
                g.language,
                r.correct_heads,
                r.sentence_length,
                format_upos_sequence(&g.upos)
            )
            .unwrap();
        }
    }
    fs::write(path, out).map_err(|err| Error::io(path, err))
}

pub fn read_groups(path: &Path) -> Result<Vec<SentenceGroup>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(RECORDS_HEADER) {
        return Err(Error::format(path, "missing or unsupported cross-parse header"));
    }
    let mut groups: Vec<SentenceGroup> = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = || Error::format(path, format!("line {}: malformed record", i + 2));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad());
        }
        let rec = CrossParseRecord {
            parser_id: cols[0].parse().map_err(|_| bad())?,
            sentence_id: cols[1].to_owned(),
            correct_heads: cols[3].parse().map_err(|_| bad())?,
            sentence_length: cols[4].parse().map_err(|_| bad())?,
        };
        match groups.last_mut() {
            Some(g) if g.sentence_id == rec.sentence_id => g.records.push(rec),
            _ => groups.push(SentenceGroup {
                sentence_id: rec.sentence_id.clone(),
                language: cols[2].to_owned(),
                upos: parse_upos_sequence(cols[5])?,
                records: vec![rec],
            }),
        }
    }
    Ok(groups)
}
