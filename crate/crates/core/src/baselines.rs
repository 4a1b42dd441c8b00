//! Treebank-level source selection: KL divergence between UPOS trigram
//! distributions, and cosine similarity between language feature vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::select::{argmax, Selection};
use crate::treebank::{Treebank, Upos};
use crate::ParserId;

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const KL_EPSILON: f64 = 1e-6;

const BEGIN: u8 = Upos::COUNT as u8;
const END: u8 = Upos::COUNT as u8 + 1;

/// Three consecutive tags; `BEGIN` and `END` pad the sentence edges.
pub type Trigram = [u8; 3];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrigramCounts {
    counts: BTreeMap<Trigram, u64>,
    total: u64,
}

impl TrigramCounts {
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a [Upos]>) -> Self {
        let mut c = TrigramCounts::default();
        for s in sentences {
            let mut padded = vec![BEGIN, BEGIN];
            padded.extend(s.iter().map(|t| t.index() as u8));
            padded.extend([END, END]);
            for w in padded.windows(3) {
                *c.counts.entry([w[0], w[1], w[2]]).or_insert(0) += 1;
                c.total += 1;
            }
        }
        c
    }

    pub fn from_treebank(tb: &Treebank) -> Self {
        let tags: Vec<Vec<Upos>> = tb.sentences.iter().map(|s| s.upos()).collect();
        TrigramCounts::from_sentences(tags.iter().map(Vec::as_slice))
    }

    pub fn get(&self, g: &Trigram) -> u64 {
        self.counts.get(g).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn support(&self) -> impl Iterator<Item = &Trigram> {
        self.counts.keys()
    }
}

/// Probabilities over an explicit, sorted trigram support.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigramDistribution {
    pub support: Vec<Trigram>,
    pub probs: Vec<f64>,
}

impl TrigramDistribution {
    /// Add-`alpha` estimate over `support`, which must cover every counted
    /// trigram.
    pub fn smoothed(counts: &TrigramCounts, support: &BTreeSet<Trigram>, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing {} must be non-negative", alpha)));
        }
        if counts.support().any(|g| !support.contains(g)) {
            return Err(Error::DataIntegrity("support misses a counted trigram".into()));
        }
        let denom = counts.total as f64 + alpha * support.len() as f64;
        if denom <= 0.0 {
            return Err(Error::Empty("no trigrams to estimate from".into()));
        }
        Ok(TrigramDistribution {
            support: support.iter().copied().collect(),
            probs: support
                .iter()
                .map(|g| (counts.get(g) as f64 + alpha) / denom)
                .collect(),
        })
    }

    pub fn get(&self, g: &Trigram) -> f64 {
        self.support
            .binary_search(g)
            .map(|i| self.probs[i])
            .unwrap_or(0.0)
    }
}

/// Target and source distributions smoothed over their shared support.
pub fn pair_distributions(
    target: &TrigramCounts,
    source: &TrigramCounts,
    alpha: f64,
) -> Result<(TrigramDistribution, TrigramDistribution)> {
    let support: BTreeSet<Trigram> = target.support().chain(source.support()).copied().collect();
    Ok((
        TrigramDistribution::smoothed(target, &support, alpha)?,
        TrigramDistribution::smoothed(source, &support, alpha)?,
    ))
}

/// `sum p ln(p / q)` over aligned probability vectors.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            assert!(qi > 0.0, "source has no mass where the target does");
            pi * (pi / qi).ln()
        })
        .sum()
}

/// KL(target || source) for each source, in source order.
pub fn kl_scores(target: &TrigramCounts, sources: &[TrigramCounts], alpha: f64) -> Result<Vec<f64>> {
    sources
        .iter()
        .map(|s| {
            let (p, q) = pair_distributions(target, s, alpha)?;
            Ok(kl_divergence(&p.probs, &q.probs))
        })
        .collect()
}

/// Lowest divergence wins; lowest parser id on ties.
pub fn kl_select(kl: &[f64]) -> ParserId {
    let neg: Vec<f64> = kl.iter().map(|v| -v).collect();
    ParserId::from_index(argmax(&neg))
}

/// `1 / (KL + eps)`: larger for closer sources.
pub fn kl_similarities(kl: &[f64]) -> Vec<f64> {
    kl.iter().map(|v| 1.0 / (v + KL_EPSILON)).collect()
}

/// Thresholded set over baseline similarities, weighted by them.
pub fn baseline_ensemble(similarities: &[f64], tau: f64) -> Result<Selection> {
    Selection::ensemble(similarities, tau)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageVector {
    pub language: String,
    pub values: Vec<f64>,
}

/// Cosine of the angle between `u` and `v`; 0 if either is all zeros.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "vectors of different dimension");
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Sources ranked by cosine to `target`, best first; `sources[k]` is
/// parser `k + 1`.
pub fn cosine_select(target: &LanguageVector, sources: &[LanguageVector]) -> Vec<(ParserId, f64)> {
    let mut ranked: Vec<(ParserId, f64)> = sources
        .iter()
        .enumerate()
        .map(|(k, s)| (ParserId::from_index(k), cosine(&target.values, &s.values)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Tab-separated vectors: a header row (first cell names the language
/// column, the rest features), then one row per language. Empty cells are
/// replaced by the column mean, or 0 when the whole column is empty.
pub fn read_language_vectors(path: &Path) -> Result<Vec<LanguageVector>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_language_vectors(&text, path)
}

pub fn parse_language_vectors(text: &str, origin: &Path) -> Result<Vec<LanguageVector>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::format(origin, "empty vector file"))?;
    let dims = header.split('\t').count() - 1;
    let mut langs = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != dims + 1 {
            return Err(Error::format(
                origin,
                format!("row {} has {} features, header has {}", n + 2, fields.len() - 1, dims),
            ));
        }
        let row = fields[1..]
            .iter()
            .map(|f| {
                let f = f.trim();
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::format(origin, format!("row {}: `{}`: {}", n + 2, f, e)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        langs.push(fields[0].trim().to_owned());
        cells.push(row);
    }
    let means: Vec<f64> = (0..dims)
        .map(|c| {
            let present: Vec<f64> = cells.iter().filter_map(|r| r[c]).collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        })
        .collect();
    Ok(langs
        .into_iter()
        .zip(cells)
        .map(|(language, row)| LanguageVector {
            language,
            values: row.iter().zip(&means).map(|(v, m)| v.unwrap_or(*m)).collect(),
        })
        .collect())
}
