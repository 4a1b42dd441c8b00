//! Delexicalized first-order graph-based dependency parser trained with the
//! averaged structured perceptron.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mst::{edmonds_mst_single_root, WeightedArcGraph};
use crate::treebank::{Sentence, Treebank, Upos};

const FEATURE_HASH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;
const MODEL_MAGIC: &str = "ilps-parser";
const MODEL_VERSION: u32 = 1;

/// FNV-1a over the feature string, keyed by a fixed seed.
pub fn feature_id(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ FEATURE_HASH_SEED;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hashed arc features with multiplicities, sorted by id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ArcFeatureVector {
    entries: Vec<(u64, u32)>,
}

impl ArcFeatureVector {
    fn from_names(names: &[String]) -> Self {
        let mut ids: Vec<u64> = names.iter().map(|n| feature_id(n)).collect();
        ids.sort_unstable();
        let mut entries: Vec<(u64, u32)> = Vec::with_capacity(ids.len());
        for id in ids {
            match entries.last_mut() {
                Some((last, c)) if *last == id => *c += 1,
                _ => entries.push((id, 1)),
            }
        }
        ArcFeatureVector { entries }
    }

    pub fn entries(&self) -> &[(u64, u32)] {
        &self.entries
    }

    pub fn contains(&self, name: &str) -> bool {
        let id = feature_id(name);
        self.entries.binary_search_by_key(&id, |e| e.0).is_ok()
    }

    pub fn dot(&self, weights: &HashMap<u64, f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(id, c)| weights.get(&id).copied().unwrap_or(0.0) * f64::from(c))
            .sum()
    }
}

fn distance_bin(delta: isize) -> String {
    let a = delta.unsigned_abs();
    let sign = if delta < 0 { "-" } else { "" };
    match a {
        1..=5 => format!("{}{}", sign, a),
        6..=10 => format!("{}6-10", sign),
        _ => format!("{}>10", sign),
    }
}

/// Feature strings of the arc `head -> dep` (`head` 0 is the root).
pub fn arc_feature_names(tags: &[Upos], head: usize, dep: usize) -> Vec<String> {
    let t = tags.len();
    assert!(
        (1..=t).contains(&dep) && head <= t && head != dep,
        "arc {} -> {} invalid for a {}-token sentence",
        head,
        dep,
        t
    );
    let tag = |i: usize| -> &str {
        if i == 0 {
            "ROOT"
        } else {
            tags[i - 1].as_str()
        }
    };
    let around = |i: usize, offset: isize| -> &str {
        if i == 0 {
            return "NONE";
        }
        let j = i as isize + offset;
        if j < 1 {
            "BOS"
        } else if j as usize > t {
            "EOS"
        } else {
            tags[j as usize - 1].as_str()
        }
    };

    let h = tag(head);
    let d = tag(dep);
    let (hl, hr) = (around(head, -1), around(head, 1));
    let (dl, dr) = (around(dep, -1), around(dep, 1));
    let dist = distance_bin(dep as isize - head as isize);

    let mut f = vec![
        format!("hpos={}", h),
        format!("dpos={}", d),
        format!("hd={},{}", h, d),
        format!("dist={}", dist),
        format!("hd_dist={},{},{}", h, d, dist),
        format!("h_dist={},{}", h, dist),
        format!("d_dist={},{}", d, dist),
        format!("hl_h_d={},{},{}", hl, h, d),
        format!("h_hr_d={},{},{}", h, hr, d),
        format!("h_dl_d={},{},{}", h, dl, d),
        format!("h_d_dr={},{},{}", h, d, dr),
        format!("hl_h_dl_d={},{},{},{}", hl, h, dl, d),
        format!("h_hr_d_dr={},{},{},{}", h, hr, d, dr),
        format!("hl_h_d_dr={},{},{},{}", hl, h, d, dr),
        format!("h_hr_dl_d={},{},{},{}", h, hr, dl, d),
        format!("hl_h_d_dist={},{},{},{}", hl, h, d, dist),
        format!("h_d_dr_dist={},{},{},{}", h, d, dr, dist),
    ];
    if head != 0 {
        let (lo, hi) = if head < dep { (head, dep) } else { (dep, head) };
        for b in lo + 1..hi {
            f.push(format!("btw={},{},{}", h, tags[b - 1], d));
        }
    }
    f
}

pub fn extract_arc_features(tags: &[Upos], head: usize, dep: usize) -> ArcFeatureVector {
    ArcFeatureVector::from_names(&arc_feature_names(tags, head, dep))
}

/// Features of every arc of a sentence, indexed `[head][dep]`.
struct ArcTable {
    arcs: Vec<Vec<ArcFeatureVector>>,
}

impl ArcTable {
    fn new(tags: &[Upos]) -> Self {
        let t = tags.len();
        let arcs = (0..=t)
            .map(|h| {
                (0..=t)
                    .map(|d| {
                        if d == 0 || d == h {
                            ArcFeatureVector::default()
                        } else {
                            extract_arc_features(tags, h, d)
                        }
                    })
                    .collect()
            })
            .collect();
        ArcTable { arcs }
    }

    fn graph(&self, weights: &HashMap<u64, f64>) -> WeightedArcGraph {
        let t = self.arcs.len() - 1;
        WeightedArcGraph::complete(t, |h, d| self.arcs[h][d].dot(weights))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceParserModel {
    pub language: String,
    pub weights: HashMap<u64, f64>,
    pub averaged_weights: HashMap<u64, f64>,
    pub epochs_trained: usize,
}

fn decode(weights: &HashMap<u64, f64>, tags: &[Upos]) -> Vec<usize> {
    if tags.len() == 1 {
        return vec![0];
    }
    let g = ArcTable::new(tags).graph(weights);
    edmonds_mst_single_root(&g).expect("complete graph always has an arborescence")
}

impl SourceParserModel {
    /// Maximum spanning tree under the averaged weights.
    pub fn parse(&self, sentence: &Sentence) -> Vec<usize> {
        self.parse_tags(&sentence.upos())
    }

    pub fn parse_tags(&self, tags: &[Upos]) -> Vec<usize> {
        assert!(!tags.is_empty(), "cannot parse an empty sentence");
        decode(&self.averaged_weights, tags)
    }

    /// Arc score under the averaged weights.
    pub fn arc_score(&self, tags: &[Upos], head: usize, dep: usize) -> f64 {
        extract_arc_features(tags, head, dep).dot(&self.averaged_weights)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", MODEL_MAGIC).unwrap();
        writeln!(out, "version {}", MODEL_VERSION).unwrap();
        writeln!(out, "language {}", self.language).unwrap();
        writeln!(out, "epochs {}", self.epochs_trained).unwrap();
        for (section, map) in [
            ("weights", &self.weights),
            ("averaged", &self.averaged_weights),
        ] {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_unstable_by_key(|e| *e.0);
            writeln!(out, "{} {}", section, entries.len()).unwrap();
            for (id, w) in entries {
                writeln!(out, "{:016x}\t{:?}", id, w).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(origin, m);
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {}", what)));
        if next("magic")? != MODEL_MAGIC {
            return Err(bad("not a parser model file".into()));
        }
        let field = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected `{}` line, found `{}`", key, line)))
        };
        let version: u32 = field(next("version")?, "version")?
            .parse()
            .map_err(|_| bad("invalid version".into()))?;
        if version != MODEL_VERSION {
            return Err(bad(format!(
                "parser model version {} unsupported (expected {})",
                version, MODEL_VERSION
            )));
        }
        let language = field(next("language")?, "language")?;
        let epochs_trained = field(next("epochs")?, "epochs")?
            .parse()
            .map_err(|_| bad("invalid epoch count".into()))?;
        let mut maps = Vec::new();
        for section in ["weights", "averaged"] {
            let count: usize = field(next(section)?, section)?
                .parse()
                .map_err(|_| bad(format!("invalid {} count", section)))?;
            let mut map = HashMap::with_capacity(count);
            for _ in 0..count {
                let line = next("weight entry")?;
                let (id, w) = line
                    .split_once('\t')
                    .ok_or_else(|| bad(format!("malformed weight line `{}`", line)))?;
                let id = u64::from_str_radix(id, 16).map_err(|_| bad(format!("bad id `{}`", id)))?;
                let w: f64 = w.parse().map_err(|_| bad(format!("bad weight `{}`", w)))?;
                map.insert(id, w);
            }
            maps.push(map);
        }
        let averaged_weights = maps.pop().unwrap();
        let weights = maps.pop().unwrap();
        Ok(SourceParserModel {
            language,
            weights,
            averaged_weights,
            epochs_trained,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Train a parser; returns the model and the number of wrongly predicted
/// heads in each epoch.
pub fn train_parser_traced(
    tb: &Treebank,
    epochs: usize,
    seed: u64,
) -> Result<(SourceParserModel, Vec<usize>)> {
    if epochs < 1 {
        return Err(Error::Config("parser training needs at least one epoch".into()));
    }
    if tb.is_empty() {
        return Err(Error::Empty(format!(
            "treebank `{}` has no training sentences",
            tb.language
        )));
    }

    let data: Vec<(Vec<usize>, ArcTable)> = tb
        .sentences
        .iter()
        .map(|s| (s.heads(), ArcTable::new(&s.upos())))
        .collect();

    let mut weights: HashMap<u64, f64> = HashMap::new();
    // Sum over updates of step * delta, for the averaging trick.
    let mut stamped: HashMap<u64, f64> = HashMap::new();
    let mut step = 1.0f64;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut wrong = 0;
        for &i in &order {
            let (gold, table) = &data[i];
            let predicted = if gold.len() == 1 {
                vec![0]
            } else {
                edmonds_mst_single_root(&table.graph(&weights)).expect("complete graph")
            };
            for (k, (&g, &p)) in gold.iter().zip(&predicted).enumerate() {
                if g == p {
                    continue;
                }
                wrong += 1;
                let dep = k + 1;
                for (fv, sign) in [(&table.arcs[g][dep], 1.0), (&table.arcs[p][dep], -1.0)] {
                    for &(id, c) in fv.entries() {
                        let delta = sign * f64::from(c);
                        *weights.entry(id).or_insert(0.0) += delta;
                        *stamped.entry(id).or_insert(0.0) += step * delta;
                    }
                }
            }
            step += 1.0;
        }
        errors.push(wrong);
    }

    let averaged_weights = weights
        .iter()
        .map(|(&id, &w)| (id, w - stamped.get(&id).copied().unwrap_or(0.0) / step))
        .collect();

    Ok((
        SourceParserModel {
            language: tb.language.clone(),
            weights,
            averaged_weights,
            epochs_trained: epochs,
        },
        errors,
    ))
}

pub fn train_parser(tb: &Treebank, epochs: usize, seed: u64) -> Result<SourceParserModel> {
    train_parser_traced(tb, epochs, seed).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{check_tree, Split};
    use rand::Rng;

    fn left_neighbor_bank(n: usize, seed: u64) -> Treebank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sentences = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..9);
                let tags: Vec<Upos> = (0..len)
                    .map(|_| Upos::ALL[rng.gen_range(0..Upos::COUNT)])
                    .collect();
                let heads: Vec<usize> = (0..len).collect();
                Sentence::from_parts(format!("ln:{}", i), "ln", &tags, &heads).unwrap()
            })
            .collect();
        Treebank::new("ln", Split::Train, sentences)
    }

    #[test]
    fn basic_features_present() {
        let tags = [Upos::Noun, Upos::Verb];
        let f = extract_arc_features(&tags, 2, 1);
        assert!(f.contains("hpos=VERB"));
        assert!(f.contains("dpos=NOUN"));
        assert!(f.contains("dist=-1"));
        let root = extract_arc_features(&tags, 0, 2);
        assert!(root.contains("hpos=ROOT"));
        assert_eq!(f, extract_arc_features(&tags, 2, 1));
    }

    #[test]
    fn boundary_placeholders_and_bins() {
        let tags = [Upos::Det; 12];
        let names = arc_feature_names(&tags, 1, 12);
        assert!(names.contains(&"dist=>10".to_string()));
        assert!(names.contains(&"hl_h_d=BOS,DET,DET".to_string()));
        assert!(names.contains(&"h_d_dr=DET,DET,EOS".to_string()));
        let names = arc_feature_names(&tags, 9, 2);
        assert!(names.contains(&"dist=-6-10".to_string()));
    }

    #[test]
    #[should_panic]
    fn out_of_range_arc_panics() {
        extract_arc_features(&[Upos::Noun], 0, 2);
    }

    #[test]
    fn learns_left_neighbor_grammar() {
        let tb = left_neighbor_bank(60, 3);
        let (model, errors) = train_parser_traced(&tb, 10, 1).unwrap();
        assert_eq!(*errors.last().unwrap(), 0, "errors per epoch: {:?}", errors);
        for s in &tb.sentences {
            assert_eq!(model.parse(s), s.heads());
        }
        let longer: Vec<Upos> = (0..20).map(|i| Upos::ALL[(i * 7) % Upos::COUNT]).collect();
        assert_eq!(model.parse_tags(&longer), (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn single_sentence_converges() {
        let s = Sentence::from_parts(
            "one:0",
            "one",
            &[Upos::Det, Upos::Noun, Upos::Verb, Upos::Adv],
            &[2, 3, 0, 3],
        )
        .unwrap();
        let tb = Treebank::new("one", Split::Train, vec![s.clone()]);
        let model = train_parser(&tb, 5, 9).unwrap();
        assert_eq!(model.parse(&s), s.heads());
    }

    #[test]
    fn training_is_deterministic() {
        let tb = left_neighbor_bank(20, 5);
        let a = train_parser(&tb, 3, 11).unwrap();
        let b = train_parser(&tb, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_epochs_is_config_error() {
        let tb = left_neighbor_bank(2, 5);
        assert!(matches!(train_parser(&tb, 0, 1), Err(Error::Config(_))));
    }

    #[test]
    fn single_token_parse_is_root() {
        let model = train_parser(&left_neighbor_bank(5, 1), 1, 1).unwrap();
        assert_eq!(model.parse_tags(&[Upos::Verb]), vec![0]);
        let heads = model.parse_tags(&[Upos::Verb, Upos::Noun, Upos::Adp, Upos::Noun]);
        assert!(check_tree(&heads).is_ok());
    }

    #[test]
    fn serialization_round_trip_is_exact() {
        let model = train_parser(&left_neighbor_bank(15, 2), 2, 4).unwrap();
        let text = model.to_text();
        let back = SourceParserModel::from_text(&text, Path::new("m")).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_text(), text);
        let bumped = text.replacen("version 1", "version 2", 1);
        assert!(SourceParserModel::from_text(&bumped, Path::new("m")).is_err());
    }
}
