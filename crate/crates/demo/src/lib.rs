//! Browser demo: four delexicalized parsers trained on synthetic
//! languages, per-sentence reparsing with user weights, and trigram-KL
//! source ranking. Everything is returned as JSON strings.

use ilps::baselines::{kl_scores, kl_select, TrigramCounts, DEFAULT_ALPHA};
use ilps::parser::{train_parser, SourceParserModel};
use ilps::select::reparse;
use ilps::synth::{default_languages, generate_treebank, LanguageSpec};
use ilps::treebank::{check_tree, parse_upos_sequence, Split, Upos};
use serde_json::json;
use wasm_bindgen::prelude::*;

const SOURCES: usize = 4;

#[wasm_bindgen]
pub struct Demo {
    languages: Vec<LanguageSpec>,
    parsers: Vec<SourceParserModel>,
    counts: Vec<TrigramCounts>,
}

fn tags(text: &str) -> Result<Vec<Upos>, String> {
    let t = parse_upos_sequence(&text.to_uppercase()).map_err(|e| e.to_string())?;
    if t.is_empty() {
        return Err("type at least one tag".into());
    }
    Ok(t)
}

impl Demo {
    /// Trains one parser per synthetic source language.
    pub fn train(sentences: usize, epochs: usize, seed: u64) -> Result<Demo, String> {
        let languages: Vec<LanguageSpec> = default_languages().into_iter().take(SOURCES).collect();
        let mut parsers = Vec::new();
        let mut counts = Vec::new();
        for (i, spec) in languages.iter().enumerate() {
            let tb = generate_treebank(spec, Split::Train, sentences, seed + i as u64);
            parsers.push(train_parser(&tb, epochs, seed).map_err(|e| e.to_string())?);
            counts.push(TrigramCounts::from_treebank(&tb));
        }
        Ok(Demo { languages, parsers, counts })
    }

    pub fn parse_json(&self, text: &str) -> Result<String, String> {
        let tags = tags(text)?;
        let parses: Vec<_> = self
            .languages
            .iter()
            .zip(&self.parsers)
            .map(|(l, p)| {
                json!({
                    "language": l.code,
                    "family": l.family.as_str(),
                    "heads": p.parse_tags(&tags),
                })
            })
            .collect();
        Ok(json!({ "tags": tags.iter().map(|t| t.as_str()).collect::<Vec<_>>(), "parses": parses }).to_string())
    }

    /// Merges the four parses of `text` with one weight per parser.
    pub fn reparse_json(&self, text: &str, weights: &[f64]) -> Result<String, String> {
        let tags = tags(text)?;
        if weights.len() != self.parsers.len() {
            return Err(format!("expected {} weights", self.parsers.len()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("weights must be non-negative".into());
        }
        let trees: Vec<Vec<usize>> = self.parsers.iter().map(|p| p.parse_tags(&tags)).collect();
        let refs: Vec<&[usize]> = trees.iter().map(Vec::as_slice).collect();
        let heads = reparse(&refs, weights);
        debug_assert!(check_tree(&heads).is_ok());
        // weighted support of each chosen arc
        let total: f64 = weights.iter().sum();
        let support: Vec<f64> = heads
            .iter()
            .enumerate()
            .map(|(d, h)| {
                let w: f64 = trees.iter().zip(weights).filter(|(t, _)| t[d] == *h).map(|(_, w)| w).sum();
                if total > 0.0 { w / total } else { 0.0 }
            })
            .collect();
        Ok(json!({ "heads": heads, "support": support }).to_string())
    }

    /// KL divergence from the typed sentences (one per line) to each source.
    pub fn rank_json(&self, text: &str) -> Result<String, String> {
        let sentences = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(tags)
            .collect::<Result<Vec<_>, _>>()?;
        if sentences.is_empty() {
            return Err("type at least one sentence".into());
        }
        let target = TrigramCounts::from_sentences(sentences.iter().map(Vec::as_slice));
        let kl = kl_scores(&target, &self.counts, DEFAULT_ALPHA).map_err(|e| e.to_string())?;
        let best = kl_select(&kl).index();
        Ok(json!({
            "languages": self.languages.iter().map(|l| l.code.as_str()).collect::<Vec<_>>(),
            "kl": kl,
            "best": self.languages[best].code,
            "family": self.languages[best].family.as_str(),
        })
        .to_string())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Demo::train(150, 3, u64::from(seed)).map_err(|e| JsError::new(&e))
    }

    pub fn parse(&self, text: &str) -> Result<String, JsError> {
        self.parse_json(text).map_err(|e| JsError::new(&e))
    }

    pub fn reparse(&self, text: &str, weights: Vec<f64>) -> Result<String, JsError> {
        self.reparse_json(text, &weights).map_err(|e| JsError::new(&e))
    }

    pub fn rank(&self, text: &str) -> Result<String, JsError> {
        self.rank_json(text).map_err(|e| JsError::new(&e))
    }
}
