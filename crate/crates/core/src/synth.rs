//! Synthetic delexicalized treebanks from two word-order families.
//!
//! Head-initial languages put objects, adpositional phrases and subordinate
//! clauses after their heads and use prepositions; head-final languages put
//! every verbal dependent before the verb and use postpositions. Languages
//! within a family differ in modifier order and in how often each optional
//! constituent appears.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::treebank::{write_conllu, Sentence, Split, Treebank, Upos};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    HeadInitial,
    HeadFinal,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::HeadInitial => "head-initial",
            Family::HeadFinal => "head-final",
        }
    }
}

/// Generation probabilities for one language.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageSpec {
    pub code: String,
    pub family: Family,
    pub det: f64,
    pub adj: f64,
    /// Chance that an adjective follows its noun.
    pub adj_after_noun: f64,
    pub num: f64,
    pub pronoun_subject: f64,
    /// Chance that the subject follows the verb (head-initial only).
    pub subject_after_verb: f64,
    pub proper_noun: f64,
    pub object: f64,
    /// Adpositional phrase attached to the verb.
    pub verb_pp: f64,
    /// Adpositional phrase attached to a noun.
    pub noun_pp: f64,
    pub adverb: f64,
    pub aux: f64,
    pub subordinate: f64,
    pub coordination: f64,
    pub punct: f64,
}

impl LanguageSpec {
    fn base(code: &str, family: Family) -> Self {
        LanguageSpec {
            code: code.to_owned(),
            family,
            det: 0.6,
            adj: 0.3,
            adj_after_noun: 0.0,
            num: 0.05,
            pronoun_subject: 0.25,
            subject_after_verb: 0.0,
            proper_noun: 0.1,
            object: 0.85,
            verb_pp: 0.55,
            noun_pp: 0.15,
            adverb: 0.35,
            aux: 0.2,
            subordinate: 0.15,
            coordination: 0.08,
            punct: 0.9,
        }
    }

    /// Dense summary used as a typological feature vector.
    pub fn features(&self) -> Vec<f64> {
        let hf = if self.family == Family::HeadFinal { 1.0 } else { 0.0 };
        vec![
            1.0 - hf,
            hf,
            self.det,
            self.adj * (1.0 - self.adj_after_noun),
            self.adj * self.adj_after_noun,
            self.object,
            self.aux,
            self.verb_pp + self.noun_pp,
            self.subject_after_verb,
        ]
    }
}

pub const FEATURE_NAMES: [&str; 9] = [
    "verb_before_object",
    "object_before_verb",
    "determiners",
    "adj_before_noun",
    "adj_after_noun",
    "transitive",
    "auxiliaries",
    "adpositions",
    "subject_after_verb",
];

/// Four source languages (two per family) followed by one held-out target
/// per family.
pub fn default_languages() -> Vec<LanguageSpec> {
    use Family::*;
    let hia = LanguageSpec {
        subject_after_verb: 0.3,
        ..LanguageSpec::base("hia", HeadInitial)
    };
    let hib = LanguageSpec {
        adj_after_noun: 1.0,
        adj: 0.45,
        det: 0.35,
        aux: 0.05,
        num: 0.15,
        subject_after_verb: 0.6,
        ..LanguageSpec::base("hib", HeadInitial)
    };
    let hfa = LanguageSpec {
        det: 0.5,
        aux: 0.45,
        adverb: 0.3,
        ..LanguageSpec::base("hfa", HeadFinal)
    };
    let hfb = LanguageSpec {
        det: 0.05,
        adj: 0.45,
        adj_after_noun: 0.6,
        num: 0.2,
        aux: 0.1,
        noun_pp: 0.3,
        ..LanguageSpec::base("hfb", HeadFinal)
    };
    let hit = LanguageSpec {
        adj_after_noun: 0.5,
        adj: 0.4,
        det: 0.5,
        subject_after_verb: 0.45,
        ..LanguageSpec::base("hit", HeadInitial)
    };
    let hft = LanguageSpec {
        det: 0.25,
        adj_after_noun: 0.3,
        aux: 0.3,
        ..LanguageSpec::base("hft", HeadFinal)
    };
    vec![hia, hib, hfa, hfb, hit, hft]
}

struct Node {
    tag: Upos,
    left: Vec<Node>,
    right: Vec<Node>,
}

impl Node {
    fn leaf(tag: Upos) -> Self {
        Node {
            tag,
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    /// Appends the subtree in surface order; returns the 1-based position
    /// of this node.
    fn linearize(&self, head: usize, out: &mut Vec<(Upos, usize)>) -> usize {
        let left: Vec<usize> = self.left.iter().map(|c| c.linearize(0, out)).collect();
        out.push((self.tag, head));
        let me = out.len();
        for p in left {
            out[p - 1].1 = me;
        }
        for c in &self.right {
            c.linearize(me, out);
        }
        me
    }
}

struct Generator<'a, R> {
    spec: &'a LanguageSpec,
    rng: &'a mut R,
}

impl<R: Rng> Generator<'_, R> {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen::<f64>() < p
    }

    fn head_initial(&self) -> bool {
        self.spec.family == Family::HeadInitial
    }

    fn noun_phrase(&mut self, depth: usize) -> Node {
        let tag = if self.chance(self.spec.proper_noun) {
            Upos::Propn
        } else {
            Upos::Noun
        };
        let mut n = Node::leaf(tag);
        if tag == Upos::Noun {
            if self.chance(self.spec.adj) {
                let mut adj = Node::leaf(Upos::Adj);
                if self.chance(0.15) {
                    adj.left.push(Node::leaf(Upos::Adv));
                }
                if self.chance(self.spec.adj_after_noun) {
                    n.right.push(adj);
                } else {
                    n.left.push(adj);
                }
            }
            if self.chance(self.spec.num) {
                n.left.insert(0, Node::leaf(Upos::Num));
            }
            if self.chance(self.spec.det) {
                n.left.insert(0, Node::leaf(Upos::Det));
            }
        }
        if depth < 2 && self.chance(self.spec.noun_pp) {
            let pp = self.adpositional(depth + 1);
            if self.head_initial() {
                n.right.push(pp);
            } else {
                n.left.insert(0, pp);
            }
        }
        if depth == 0 && self.chance(self.spec.coordination) {
            let mut conj = self.noun_phrase(depth + 1);
            conj.left.insert(0, Node::leaf(Upos::Cconj));
            n.right.push(conj);
        }
        n
    }

    fn adpositional(&mut self, depth: usize) -> Node {
        let mut n = self.noun_phrase(depth);
        if self.head_initial() {
            n.left.insert(0, Node::leaf(Upos::Adp));
        } else {
            n.right.push(Node::leaf(Upos::Adp));
        }
        n
    }

    fn subject(&mut self) -> Node {
        if self.chance(self.spec.pronoun_subject) {
            Node::leaf(Upos::Pron)
        } else {
            self.noun_phrase(0)
        }
    }

    fn clause(&mut self, depth: usize) -> Node {
        let mut v = Node::leaf(Upos::Verb);
        let subj = self.subject();
        let obj = self.chance(self.spec.object).then(|| self.noun_phrase(0));
        let pp = self.chance(self.spec.verb_pp).then(|| self.adpositional(1));
        let adv = self.chance(self.spec.adverb);
        let aux = self.chance(self.spec.aux);
        let sub = (depth == 0 && self.chance(self.spec.subordinate)).then(|| {
            let mut c = self.clause(depth + 1);
            if self.spec.family == Family::HeadInitial {
                c.left.insert(0, Node::leaf(Upos::Sconj));
            } else {
                c.right.push(Node::leaf(Upos::Sconj));
            }
            c
        });
        if self.head_initial() {
            if self.chance(self.spec.subject_after_verb) {
                v.right.push(subj);
            } else {
                v.left.push(subj);
            }
            if aux {
                v.left.push(Node::leaf(Upos::Aux));
            }
            v.right.extend(obj);
            v.right.extend(pp);
            if adv {
                v.right.push(Node::leaf(Upos::Adv));
            }
            v.right.extend(sub);
        } else {
            v.left.extend(sub);
            v.left.push(subj);
            v.left.extend(pp);
            v.left.extend(obj);
            if adv {
                v.left.push(Node::leaf(Upos::Adv));
            }
            if aux {
                v.right.push(Node::leaf(Upos::Aux));
            }
        }
        if depth == 0 && self.chance(self.spec.punct) {
            v.right.push(Node::leaf(Upos::Punct));
        }
        v
    }
}

/// One random sentence as (tag, head) pairs.
pub fn generate_sentence<R: Rng>(spec: &LanguageSpec, rng: &mut R) -> (Vec<Upos>, Vec<usize>) {
    let root = Generator { spec, rng }.clause(0);
    let mut out = Vec::new();
    root.linearize(0, &mut out);
    out.into_iter().unzip()
}

pub fn generate_treebank(spec: &LanguageSpec, split: Split, sentences: usize, seed: u64) -> Treebank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = format!("{}-synth-{}", spec.code, split_name(split));
    let sents = (0..sentences)
        .map(|i| {
            let (tags, heads) = generate_sentence(spec, &mut rng);
            Sentence::from_parts(format!("{}:{}", name, i), &spec.code, &tags, &heads)
                .expect("generated trees are well formed")
        })
        .collect();
    Treebank::new(spec.code.clone(), split, sents)
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    }
}

/// Regressor size used with the fixture; small enough for one CPU.
pub const FIXTURE_MODEL: &str = "\
model.d_model = 64
model.d_pos = 64
model.layers = 2
model.heads = 4
model.ff_dim = 128
model.mlp_hidden = 64
model.max_len = 64
train.eval_every = 500
";

/// Sizes of the generated fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSizes {
    pub train: usize,
    pub test: usize,
}

impl Default for FixtureSizes {
    fn default() -> Self {
        FixtureSizes { train: 400, test: 150 }
    }
}

/// Writes `<code>-synth-train.conllu` for the first four languages,
/// `<code>-synth-test.conllu` for the last two, `vectors.tsv`, and
/// `experiment.cfg` pointing at them. Returns the config path.
pub fn write_fixture(dir: &Path, sizes: &FixtureSizes, seed: u64) -> Result<std::path::PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let langs = default_languages();
    let mut cfg = String::from("# synthetic two-family experiment\n");
    for (i, spec) in langs.iter().enumerate() {
        let source = i < 4;
        let (split, n) = if source {
            (Split::Train, sizes.train)
        } else {
            (Split::Test, sizes.test)
        };
        let tb = generate_treebank(spec, split, n, seed.wrapping_add(i as u64));
        let file = format!("{}-synth-{}.conllu", spec.code, split_name(split));
        let path = dir.join(&file);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_conllu(&mut f, &tb, &[format!("family = {}", spec.family.as_str())])
            .map_err(|e| Error::io(&path, e))?;
        let role = if source { "source" } else { "target" };
        writeln!(cfg, "{}.{} = {}", role, spec.code, file).unwrap();
    }
    let mut vectors = format!("language\t{}\n", FEATURE_NAMES.join("\t"));
    for spec in &langs {
        let vals: Vec<String> = spec.features().iter().map(|v| format!("{}", v)).collect();
        writeln!(vectors, "{}\t{}", spec.code, vals.join("\t")).unwrap();
    }
    let vpath = dir.join("vectors.tsv");
    fs::write(&vpath, vectors).map_err(|e| Error::io(&vpath, e))?;
    cfg.push_str("vectors = vectors.tsv\n");
    cfg.push_str(FIXTURE_MODEL);
    let cpath = dir.join("experiment.cfg");
    fs::write(&cpath, cfg).map_err(|e| Error::io(&cpath, e))?;
    Ok(cpath)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::check_tree;

    #[test]
    fn sentences_are_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in default_languages() {
            for _ in 0..200 {
                let (tags, heads) = generate_sentence(&spec, &mut rng);
                assert_eq!(tags.len(), heads.len());
                check_tree(&heads).unwrap();
                assert!(tags.len() >= 2);
            }
        }
    }

    #[test]
    fn families_differ_in_verb_position() {
        let langs = default_languages();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in &langs {
            let mut verb_last = 0;
            for _ in 0..300 {
                let (tags, _) = generate_sentence(spec, &mut rng);
                let content: Vec<Upos> = tags.into_iter().filter(|t| *t != Upos::Punct).collect();
                verb_last += usize::from(matches!(content.last(), Some(Upos::Verb) | Some(Upos::Aux)));
            }
            match spec.family {
                Family::HeadFinal => assert!(verb_last > 250, "{}", spec.code),
                Family::HeadInitial => assert!(verb_last < 100, "{}", spec.code),
            }
        }
    }

    #[test]
    fn generation_is_seeded() {
        let spec = &default_languages()[0];
        assert_eq!(
            generate_treebank(spec, Split::Train, 20, 9),
            generate_treebank(spec, Split::Train, 20, 9)
        );
    }
}
