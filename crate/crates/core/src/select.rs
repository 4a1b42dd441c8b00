//! Parser selection from predicted scores, and ensemble reparsing.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mst::{edmonds_mst, edmonds_mst_single_root, WeightedArcGraph};
use crate::nn::Tensor2D;
use crate::ParserId;

pub const SCORES_HEADER: &str = "# ilps-scores v1";
pub const SELECTION_HEADER: &str = "# ilps-selection v1";

pub const DEFAULT_TAU: f64 = 0.9;

/// Predicted score of parser `i` (row) on sentence `j` (column). Parser ids
/// are `1..=rows` in row order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    parser_ids: Vec<ParserId>,
    sentence_ids: Vec<String>,
    scores: Tensor2D,
}

impl ScoreMatrix {
    pub fn new(parser_ids: Vec<ParserId>, sentence_ids: Vec<String>, scores: Tensor2D) -> Result<Self> {
        if parser_ids.is_empty() {
            return Err(Error::DataIntegrity("score matrix without parsers".into()));
        }
        if scores.shape() != (parser_ids.len(), sentence_ids.len()) {
            return Err(Error::DataIntegrity(format!(
                "scores are {:?}, expected {} parsers x {} sentences",
                scores.shape(),
                parser_ids.len(),
                sentence_ids.len()
            )));
        }
        if parser_ids.iter().enumerate().any(|(i, &p)| p != ParserId::from_index(i)) {
            return Err(Error::DataIntegrity("parser ids must run 1..=n in order".into()));
        }
        if !scores.is_finite() {
            return Err(Error::DataIntegrity("non-finite predicted score".into()));
        }
        Ok(ScoreMatrix {
            parser_ids,
            sentence_ids,
            scores,
        })
    }

    pub fn from_columns(parsers: usize, columns: &[(String, Vec<f64>)]) -> Result<Self> {
        if columns.iter().any(|(_, c)| c.len() != parsers) {
            return Err(Error::DataIntegrity(format!("every column needs {} scores", parsers)));
        }
        ScoreMatrix::new(
            (0..parsers).map(ParserId::from_index).collect(),
            columns.iter().map(|(id, _)| id.clone()).collect(),
            Tensor2D::from_fn(parsers, columns.len(), |i, j| columns[j].1[i]),
        )
    }

    pub fn parsers(&self) -> &[ParserId] {
        &self.parser_ids
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentence_ids
    }

    pub fn get(&self, parser: usize, sentence: usize) -> f64 {
        self.scores[(parser, sentence)]
    }

    pub fn column(&self, sentence: usize) -> Vec<f64> {
        (0..self.parser_ids.len()).map(|i| self.scores[(i, sentence)]).collect()
    }

    pub fn row(&self, parser: usize) -> &[f64] {
        self.scores.row(parser)
    }

    /// Columns for `sentence_ids`, in that order.
    pub fn select_columns(&self, sentence_ids: &[String]) -> Result<ScoreMatrix> {
        let index: std::collections::HashMap<&str, usize> =
            self.sentence_ids.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
        let cols = sentence_ids
            .iter()
            .map(|s| {
                index
                    .get(s.as_str())
                    .copied()
                    .ok_or_else(|| Error::DataIntegrity(format!("no scores for sentence {}", s)))
            })
            .collect::<Result<Vec<_>>>()?;
        ScoreMatrix::new(
            self.parser_ids.clone(),
            sentence_ids.to_vec(),
            Tensor2D::from_fn(self.parser_ids.len(), cols.len(), |i, j| self.scores[(i, cols[j])]),
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(SCORES_HEADER);
        out.push('\n');
        out.push_str("sentence");
        for p in &self.parser_ids {
            out.push_str(&format!("\t{}", p));
        }
        out.push('\n');
        for (j, s) in self.sentence_ids.iter().enumerate() {
            out.push_str(s);
            for i in 0..self.parser_ids.len() {
                out.push_str(&format!("\t{:?}", self.scores[(i, j)]));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<ScoreMatrix> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(SCORES_HEADER) {
            return Err(Error::format(path, format!("expected header `{}`", SCORES_HEADER)));
        }
        let head = lines.next().ok_or_else(|| Error::format(path, "missing column header"))?;
        let parsers = head.split('\t').count() - 1;
        let mut columns = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_owned();
            let values = fields
                .map(f64::from_str)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {}", n + 3, e)))?;
            columns.push((id, values));
        }
        ScoreMatrix::from_columns(parsers, &columns)
    }
}

/// Index of the largest value; the earliest one on ties.
pub fn argmax(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of nothing");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Best-scoring parser for sentence column `j`.
pub fn select_pure_ilps(s: &ScoreMatrix, j: usize) -> ParserId {
    ParserId::from_index(argmax(&s.column(j)))
}

/// Row means: each parser's average predicted score over all sentences.
pub fn aggregate_sbps(s: &ScoreMatrix) -> Vec<f64> {
    let m = s.sentences().len();
    assert!(m > 0, "aggregating an empty score matrix");
    (0..s.parsers().len())
        .map(|i| s.row(i).iter().sum::<f64>() / m as f64)
        .collect()
}

pub fn select_sbps(aggregate: &[f64]) -> ParserId {
    ParserId::from_index(argmax(aggregate))
}

/// Parsers scoring at least `tau` times the best score, after clamping
/// scores at 0.
pub fn threshold_set(values: &[f64], tau: f64) -> Result<Vec<ParserId>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("threshold {} outside [0, 1]", tau)));
    }
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DataIntegrity("threshold over empty or non-finite scores".into()));
    }
    let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let cutoff = clamped[argmax(&clamped)] * tau;
    Ok(clamped
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= cutoff)
        .map(|(i, _)| ParserId::from_index(i))
        .collect())
}

/// Chosen parsers for one sentence, with their arc weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub parsers: Vec<ParserId>,
    pub weights: Vec<f64>,
}

impl Selection {
    pub fn single(parser: ParserId) -> Self {
        Selection {
            parsers: vec![parser],
            weights: vec![1.0],
        }
    }

    /// Thresholded set weighted by clamped scores. When every score is at
    /// most 0 all parsers vote with weight 1.
    pub fn ensemble(values: &[f64], tau: f64) -> Result<Self> {
        let parsers = threshold_set(values, tau)?;
        let mut weights: Vec<f64> = parsers.iter().map(|p| values[p.index()].max(0.0)).collect();
        if weights.iter().all(|&w| w == 0.0) {
            weights.iter_mut().for_each(|w| *w = 1.0);
        }
        Ok(Selection { parsers, weights })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ilps,
    Sbps,
    EnsIlps,
    EnsSbps,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ilps, Method::Sbps, Method::EnsIlps, Method::EnsSbps];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ilps => "ilps",
            Method::Sbps => "sbps-ilps",
            Method::EnsIlps => "ens-ilps",
            Method::EnsSbps => "ens-sbps-ilps",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown selection method `{}`", s)))
    }
}

/// One selection per column of `s`. Treebank-level methods pick the same
/// parsers for every sentence.
pub fn select(s: &ScoreMatrix, method: Method, tau: f64) -> Result<Vec<Selection>> {
    let m = s.sentences().len();
    Ok(match method {
        Method::Ilps => (0..m).map(|j| Selection::single(select_pure_ilps(s, j))).collect(),
        Method::EnsIlps => (0..m)
            .map(|j| Selection::ensemble(&s.column(j), tau))
            .collect::<Result<_>>()?,
        Method::Sbps => vec![Selection::single(select_sbps(&aggregate_sbps(s))); m],
        Method::EnsSbps => vec![Selection::ensemble(&aggregate_sbps(s), tau)?; m],
    })
}

/// Merges head arrays into a graph where each arc weighs the sum of its
/// voters' weights, and returns the maximum spanning tree. Voters with
/// weight 0 add no arcs.
pub fn reparse(trees: &[&[usize]], weights: &[f64]) -> Vec<usize> {
    assert!(!trees.is_empty(), "reparse needs at least one tree");
    assert_eq!(trees.len(), weights.len(), "one weight per tree");
    assert!(
        weights.iter().all(|w| w.is_finite() && *w >= 0.0) && weights.iter().any(|&w| w > 0.0),
        "weights must be non-negative with at least one positive"
    );
    let len = trees[0].len();
    let mut g = WeightedArcGraph::new(len);
    for (tree, &w) in trees.iter().zip(weights) {
        assert_eq!(tree.len(), len, "trees over different sentence lengths");
        if w == 0.0 {
            continue;
        }
        for (d, &h) in tree.iter().enumerate() {
            g.add(h, d + 1, w);
        }
    }
    edmonds_mst_single_root(&g)
        .or_else(|| edmonds_mst(&g))
        .expect("voted arcs contain a spanning tree")
}

pub fn write_selection_report(path: &Path, rows: &[(String, Selection)]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    out.push_str(SELECTION_HEADER);
    out.push_str("\nsentence\tparsers\tweights\n");
    for (id, s) in rows {
        let parsers: Vec<String> = s.parsers.iter().map(|p| p.to_string()).collect();
        let weights: Vec<String> = s.weights.iter().map(|w| format!("{:?}", w)).collect();
        out.push_str(&format!("{}\t{}\t{}\n", id, parsers.join(","), weights.join(",")));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_selection_report(path: &Path) -> Result<Vec<(String, Selection)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SELECTION_HEADER) {
        return Err(Error::format(path, format!("expected header `{}`", SELECTION_HEADER)));
    }
    lines.next();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = |m: &str| Error::format(path, format!("line {}: {}", n + 3, m));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad("expected 3 columns"));
        }
        let parsers = fields[1]
            .split(',')
            .map(ParserId::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        let weights = fields[2]
            .split(',')
            .map(f64::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(&e.to_string()))?;
        if parsers.len() != weights.len() || parsers.is_empty() {
            return Err(bad("parser and weight counts differ"));
        }
        rows.push((fields[0].to_owned(), Selection { parsers, weights }));
    }
    Ok(rows)
}
