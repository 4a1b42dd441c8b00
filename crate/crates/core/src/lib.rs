//! Instance-level parser selection for delexicalized cross-lingual
//! dependency parsing.
//!
//! Source parsers are trained per language on UPOS-only treebanks. A
//! Transformer regressor learns, from cross-parsing the source treebanks,
//! how well each source parser is expected to do on a given UPOS sequence.
//! Its predictions drive per-sentence parser selection, treebank-level
//! selection, and thresholded ensembles merged by MST reparsing.

use std::fmt;
use std::num::NonZeroU32;
use std::str::FromStr;

pub mod baselines;
pub mod config;
pub mod crossparse;
pub mod error;
pub mod eval;
pub mod model;
pub mod mst;
pub mod nn;
pub mod parallel;
pub mod parser;
pub mod pipeline;
pub mod select;
pub mod synth;
pub mod treebank;

pub use error::{Error, Result};

/// 1-based identifier of a source parser.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParserId(pub u32);

impl ParserId {
    pub fn from_index(index: usize) -> Self {
        ParserId(index as u32 + 1)
    }

    pub fn index(self) -> usize {
        assert!(self.0 >= 1, "parser ids start at 1");
        self.0 as usize - 1
    }
}

impl fmt::Display for ParserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ParserId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.parse::<NonZeroU32>().map(|v| ParserId(v.get()))
    }
}
