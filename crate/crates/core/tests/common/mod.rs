#![allow(dead_code)]

use ilps::crossparse::{CrossParseRecord, SentenceGroup};
use ilps::mst::WeightedArcGraph;
use ilps::treebank::Upos;
use ilps::ParserId;
use rand::seq::SliceRandom;
use rand::Rng;

/// True when every token reaches the root without revisiting a node.
pub fn is_arborescence(heads: &[usize]) -> bool {
    let n = heads.len();
    for start in 1..=n {
        let mut node = start;
        let mut steps = 0;
        while node != 0 {
            let h = heads[node - 1];
            if h > n || h == node {
                return false;
            }
            node = h;
            steps += 1;
            if steps > n {
                return false;
            }
        }
    }
    true
}

/// Best arborescence by enumerating every head array in lexicographic
/// order; the first one reaching the maximum wins.
pub fn brute_force_mst(g: &WeightedArcGraph, single_root: bool) -> Option<Vec<usize>> {
    let t = g.tokens();
    let mut heads = vec![0usize; t];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let roots = heads.iter().filter(|&&h| h == 0).count();
        if (!single_root || roots == 1) && is_arborescence(&heads) {
            if let Some(w) = g.tree_weight(&heads) {
                if best.as_ref().map_or(true, |(b, _)| w > *b) {
                    best = Some((w, heads.clone()));
                }
            }
        }
        // next head array, last position fastest
        let mut i = t;
        loop {
            if i == 0 {
                return best.map(|(_, h)| h);
            }
            i -= 1;
            heads[i] += 1;
            if heads[i] <= t {
                break;
            }
            heads[i] = 0;
        }
    }
}

/// Random graph over `tokens` tokens. Small integer weights make ties
/// common; `missing` is the probability that an arc is absent.
pub fn random_graph<R: Rng>(rng: &mut R, tokens: usize, integer: bool, missing: f64) -> WeightedArcGraph {
    let mut g = WeightedArcGraph::new(tokens);
    for d in 1..=tokens {
        for h in 0..=tokens {
            if h == d || rng.gen_bool(missing) {
                continue;
            }
            let w = if integer {
                rng.gen_range(0..4) as f64
            } else {
                rng.gen_range(-5.0..5.0)
            };
            g.set(h, d, w);
        }
    }
    g
}

/// Uniformly shaped random single-rooted tree: tokens are attached in a
/// random order, each to the root (first only) or an earlier token.
pub fn random_tree<R: Rng>(rng: &mut R, tokens: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=tokens).collect();
    order.shuffle(rng);
    let mut heads = vec![0; tokens];
    for (k, &node) in order.iter().enumerate() {
        heads[node - 1] = if k == 0 { 0 } else { order[rng.gen_range(0..k)] };
    }
    heads
}

pub fn random_tags<R: Rng>(rng: &mut R, len: usize) -> Vec<Upos> {
    (0..len).map(|_| Upos::ALL[rng.gen_range(0..Upos::ALL.len())]).collect()
}

/// Cross-parse groups with random correct-head counts.
pub fn random_groups<R: Rng>(rng: &mut R, sentences: usize, parsers: usize) -> Vec<SentenceGroup> {
    (0..sentences)
        .map(|s| {
            let len = rng.gen_range(1..30);
            let id = format!("s:{}", s);
            SentenceGroup {
                sentence_id: id.clone(),
                language: "xx".into(),
                upos: random_tags(rng, len),
                records: (0..parsers)
                    .map(|p| CrossParseRecord {
                        parser_id: ParserId::from_index(p),
                        sentence_id: id.clone(),
                        correct_heads: rng.gen_range(0..=len),
                        sentence_length: len,
                    })
                    .collect(),
            }
        })
        .collect()
}
