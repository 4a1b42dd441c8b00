//! CoNLL-U treebanks reduced to what delexicalized parsing needs.
//!
//! Only the UPOS, HEAD and DEPREL columns are interpreted. Multiword token
//! ranges (`3-4`) and empty nodes (`5.1`) are skipped on input.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The universal part-of-speech inventory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const COUNT: usize = 17;

    pub const ALL: [Upos; Upos::COUNT] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }

    /// Position in [`Upos::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Upos::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Vocabulary(s.to_owned()))
    }
}

/// Parse a whitespace-separated UPOS sequence such as `"DET NOUN VERB"`.
pub fn parse_upos_sequence(text: &str) -> Result<Vec<Upos>> {
    text.split_whitespace().map(str::parse).collect()
}

pub fn format_upos_sequence(tags: &[Upos]) -> String {
    let mut out = String::new();
    for (i, t) in tags.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    /// Guess the split from a UD-style file name (`xx_tb-ud-train.conllu`).
    pub fn from_file_name(name: &str) -> Split {
        if name.contains("test") {
            Split::Test
        } else if name.contains("dev") {
            Split::Dev
        } else {
            Split::Train
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: Upos,
    /// Head position, 0 for the artificial root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub language: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Build a delexicalized sentence from tags and heads. Heads are
    /// validated with [`check_tree`].
    pub fn from_parts(
        id: impl Into<String>,
        language: impl Into<String>,
        upos: &[Upos],
        heads: &[usize],
    ) -> Result<Sentence> {
        assert_eq!(upos.len(), heads.len(), "tags and heads differ in length");
        let id = id.into();
        check_tree(heads).map_err(|message| Error::Structure {
            sentence: id.clone(),
            message,
        })?;
        let tokens = upos
            .iter()
            .zip(heads)
            .enumerate()
            .map(|(i, (&upos, &head))| Token {
                index: i + 1,
                form: "_".into(),
                lemma: "_".into(),
                upos,
                head,
                deprel: if head == 0 { "root".into() } else { "dep".into() },
            })
            .collect();
        Ok(Sentence {
            id,
            language: language.into(),
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn upos(&self) -> Vec<Upos> {
        self.tokens.iter().map(|t| t.upos).collect()
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    /// Copy of this sentence with its heads replaced by a prediction.
    /// Labels of changed arcs are reset to `dep`.
    pub fn with_heads(&self, heads: &[usize]) -> Sentence {
        assert_eq!(heads.len(), self.len(), "head array length mismatch");
        let mut out = self.clone();
        for (tok, &h) in out.tokens.iter_mut().zip(heads) {
            if tok.head != h {
                tok.head = h;
                tok.deprel = if h == 0 { "root".into() } else { "dep".into() };
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Treebank {
    pub language: String,
    pub split: Split,
    pub sentences: Vec<Sentence>,
}

impl Treebank {
    pub fn new(language: impl Into<String>, split: Split, sentences: Vec<Sentence>) -> Self {
        Treebank {
            language: language.into(),
            split,
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// Check that `heads` (head of token `i + 1` at position `i`) encodes a tree
/// rooted at the artificial root with exactly one token attached to it.
pub fn check_tree(heads: &[usize]) -> std::result::Result<(), String> {
    let n = heads.len();
    if n == 0 {
        return Err("empty sentence".into());
    }
    let mut roots = 0;
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(format!("token {} has head {} beyond sentence end", i + 1, h));
        }
        if h == i + 1 {
            return Err(format!("token {} is its own head", i + 1));
        }
        if h == 0 {
            roots += 1;
        }
    }
    if roots != 1 {
        return Err(format!("expected exactly one root, found {}", roots));
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root.
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
        }
        if state[v] == 1 {
            return Err(format!("cycle through token {}", v));
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(())
}

/// Read a CoNLL-U file. The split is guessed from the file name and
/// sentence ids are `<file stem>:<offset>`.
pub fn read_conllu(path: impl AsRef<Path>, language: &str) -> Result<Treebank> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "treebank".into());
    let split = Split::from_file_name(&name);
    parse_conllu(&text, language, &name, split)
}

/// Parse CoNLL-U text. `name` prefixes sentence ids and error messages.
pub fn parse_conllu(text: &str, language: &str, name: &str, split: Split) -> Result<Treebank> {
    let mut sentences = Vec::new();
    let mut block: Vec<Token> = Vec::new();
    let mut block_start = 1;

    let finish = |block: &mut Vec<Token>, sentences: &mut Vec<Sentence>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        let id = format!("{}:{}", name, sentences.len());
        let heads: Vec<usize> = block.iter().map(|t| t.head).collect();
        check_tree(&heads).map_err(|message| Error::Structure {
            sentence: id.clone(),
            message,
        })?;
        sentences.push(Sentence {
            id,
            language: language.to_owned(),
            tokens: std::mem::take(block),
        });
        Ok(())
    };

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut block, &mut sentences)?;
            block_start = lineno + 1;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let perr = |message: String| Error::Parse {
            source_name: name.to_owned(),
            line: lineno,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(perr(format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| perr(format!("invalid token id `{}`", cols[0])))?;
        if index != block.len() + 1 {
            return Err(perr(format!(
                "token id {} out of sequence in sentence starting at line {}",
                index, block_start
            )));
        }
        let upos: Upos = cols[3]
            .parse()
            .map_err(|_| perr(format!("unknown UPOS tag `{}`", cols[3])))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| perr(format!("invalid head `{}`", cols[6])))?;
        block.push(Token {
            index,
            form: cols[1].to_owned(),
            lemma: cols[2].to_owned(),
            upos,
            head,
            deprel: cols[7].to_owned(),
        });
    }
    finish(&mut block, &mut sentences)?;

    Ok(Treebank::new(language, split, sentences))
}

/// Write sentences as CoNLL-U. `header` lines are emitted as leading
/// comments.
pub fn write_conllu<W: Write>(mut out: W, tb: &Treebank, header: &[String]) -> io::Result<()> {
    for h in header {
        writeln!(out, "# {}", h)?;
    }
    for s in &tb.sentences {
        writeln!(out, "# sent_id = {}", s.id)?;
        for t in &s.tokens {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.form, t.lemma, t.upos, t.head, t.deprel
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Drop word forms and lemmas, keeping tags and the tree.
pub fn delexicalize(tb: &Treebank) -> Treebank {
    let mut out = tb.clone();
    for s in &mut out.sentences {
        for t in &mut s.tokens {
            t.form = "_".into();
            t.lemma = "_".into();
        }
    }
    out
}

/// Mean of `sizes`, rounded half up.
pub(crate) fn mean_size(sizes: &[usize]) -> usize {
    let total: usize = sizes.iter().sum();
    let n = sizes.len();
    (2 * total + n) / (2 * n)
}

/// Resample `items` to exactly `target` elements. Downsampling draws without
/// replacement and keeps the original order; upsampling keeps every original
/// and appends uniform draws with replacement.
pub fn resample_to_size<T: Clone, R: Rng>(items: &[T], target: usize, rng: &mut R) -> Vec<T> {
    let n = items.len();
    assert!(n > 0, "cannot resample from zero items");
    if target <= n {
        let mut picked = index::sample(rng, n, target).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| items[i].clone()).collect()
    } else {
        let mut out = items.to_vec();
        for _ in n..target {
            out.push(items[rng.gen_range(0..n)].clone());
        }
        out
    }
}

/// Resample groups of items so that every group has the mean group size.
pub fn resample_groups<T: Clone>(groups: &[Vec<T>], seed: u64) -> Result<Vec<Vec<T>>> {
    if groups.is_empty() {
        return Err(Error::Empty("no groups to resample".into()));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(Error::Empty(format!("group {} has no items to resample", i)));
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let target = mean_size(&sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(groups
        .iter()
        .map(|g| resample_to_size(g, target, &mut rng))
        .collect())
}

/// Up- or down-sample every treebank to the mean sentence count.
pub fn resample_to_mean(tbs: &[Treebank], seed: u64) -> Result<Vec<Treebank>> {
    if let Some(tb) = tbs.iter().find(|tb| tb.is_empty()) {
        return Err(Error::Empty(format!(
            "treebank `{}` has no sentences to resample",
            tb.language
        )));
    }
    let groups: Vec<Vec<Sentence>> = tbs.iter().map(|tb| tb.sentences.clone()).collect();
    let resampled = resample_groups(&groups, seed)?;
    Ok(tbs
        .iter()
        .zip(resampled)
        .map(|(tb, sentences)| Treebank::new(tb.language.clone(), tb.split, sentences))
        .collect())
}
