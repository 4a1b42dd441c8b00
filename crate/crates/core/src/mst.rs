//! Maximum spanning arborescences (Chu-Liu/Edmonds) over dependency arc
//! graphs.
//!
//! Ties are broken towards the lexicographically smallest head array: among
//! all maximum-weight arborescences, the one whose first token has the
//! lowest head, then the second token, and so on. This is implemented by
//! running the algorithm over `(score, tie)` pairs ordered
//! lexicographically, where the integer tie component of arc `h -> d` is
//! `-h * (T + 1)^(T - d)`. The sum of tie components over a tree is then the
//! negated head array read as a base-(T+1) number. For sentences too long
//! for that number to fit in an `i128` (T > 26) the tie component falls back
//! to `-h`, which still prefers lower heads but is no longer a total order
//! over trees.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

/// Arc weights over `T + 1` nodes, node 0 being the artificial root.
///
/// Arcs that are absent (no parser voted for them, or excluded by the
/// caller) are `None`; self loops and arcs into the root are always absent.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedArcGraph {
    tokens: usize,
    weights: Vec<Option<f64>>,
}

impl WeightedArcGraph {
    /// Graph over `tokens` tokens with no arcs.
    pub fn new(tokens: usize) -> Self {
        let n = tokens + 1;
        WeightedArcGraph {
            tokens,
            weights: vec![None; n * n],
        }
    }

    /// Complete graph with weights from `score(head, dep)`.
    pub fn complete(tokens: usize, mut score: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = WeightedArcGraph::new(tokens);
        for d in 1..=tokens {
            for h in 0..=tokens {
                if h != d {
                    g.set(h, d, score(h, d));
                }
            }
        }
        g
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    fn idx(&self, head: usize, dep: usize) -> usize {
        assert!(
            head <= self.tokens && (1..=self.tokens).contains(&dep) && head != dep,
            "arc {} -> {} outside a {}-token graph",
            head,
            dep,
            self.tokens
        );
        head * (self.tokens + 1) + dep
    }

    pub fn get(&self, head: usize, dep: usize) -> Option<f64> {
        self.weights[self.idx(head, dep)]
    }

    pub fn set(&mut self, head: usize, dep: usize, weight: f64) {
        assert!(weight.is_finite(), "arc weights must be finite");
        let i = self.idx(head, dep);
        self.weights[i] = Some(weight);
    }

    /// Add `weight` to an arc, creating it if absent.
    pub fn add(&mut self, head: usize, dep: usize, weight: f64) {
        assert!(weight.is_finite(), "arc weights must be finite");
        let i = self.idx(head, dep);
        self.weights[i] = Some(self.weights[i].unwrap_or(0.0) + weight);
    }

    pub fn remove(&mut self, head: usize, dep: usize) {
        let i = self.idx(head, dep);
        self.weights[i] = None;
    }

    /// Sum of arc weights of a head array, `None` if it uses an absent arc.
    pub fn tree_weight(&self, heads: &[usize]) -> Option<f64> {
        assert_eq!(heads.len(), self.tokens);
        heads
            .iter()
            .enumerate()
            .map(|(i, &h)| self.get(h, i + 1))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key {
    score: f64,
    tie: i128,
}

impl Add for Key {
    type Output = Key;
    fn add(self, o: Key) -> Key {
        Key {
            score: self.score + o.score,
            tie: self.tie + o.tie,
        }
    }
}

impl Sub for Key {
    type Output = Key;
    fn sub(self, o: Key) -> Key {
        Key {
            score: self.score - o.score,
            tie: self.tie - o.tie,
        }
    }
}

impl Key {
    fn cmp(&self, o: &Key) -> Ordering {
        self.score
            .partial_cmp(&o.score)
            .expect("finite arc weights")
            .then(self.tie.cmp(&o.tie))
    }
}

fn place_values(tokens: usize) -> Option<Vec<i128>> {
    let base = tokens as i128 + 1;
    let top = base.checked_pow(tokens as u32)?;
    top.checked_mul(4)?;
    Some((0..=tokens).map(|d| base.pow((tokens - d.min(tokens)) as u32)).collect())
}

fn keyed(g: &WeightedArcGraph) -> Vec<Vec<Option<Key>>> {
    let n = g.tokens + 1;
    let places = place_values(g.tokens);
    let mut m = vec![vec![None; n]; n];
    for (h, row) in m.iter_mut().enumerate() {
        for (d, cell) in row.iter_mut().enumerate().skip(1) {
            if h == d {
                continue;
            }
            if let Some(score) = g.get(h, d) {
                let tie = match &places {
                    Some(p) => -(h as i128) * p[d],
                    None => -(h as i128),
                };
                *cell = Some(Key { score, tie });
            }
        }
    }
    m
}

/// Maximum-weight arborescence rooted at node 0, as a head array (head of
/// token `i + 1` at index `i`). Several tokens may attach to the root.
/// Returns `None` when no spanning arborescence exists.
pub fn edmonds_mst(g: &WeightedArcGraph) -> Option<Vec<usize>> {
    if g.tokens == 0 {
        return Some(Vec::new());
    }
    let parents = chu_liu_edmonds(&keyed(g))?;
    Some(parents[1..].to_vec())
}

/// Maximum-weight arborescence with exactly one token attached to the root.
pub fn edmonds_mst_single_root(g: &WeightedArcGraph) -> Option<Vec<usize>> {
    let free = edmonds_mst(g)?;
    if free.iter().filter(|&&h| h == 0).count() == 1 {
        return Some(free);
    }
    let full = keyed(g);
    let mut best: Option<(Key, Vec<usize>)> = None;
    for r in 1..=g.tokens {
        if full[0][r].is_none() {
            continue;
        }
        let mut m = full.clone();
        for (d, cell) in m[0].iter_mut().enumerate() {
            if d != r {
                *cell = None;
            }
        }
        if let Some(parents) = chu_liu_edmonds(&m) {
            let total = (1..parents.len())
                .map(|d| m[parents[d]][d].unwrap())
                .fold(Key { score: 0.0, tie: 0 }, |a, b| a + b);
            if best
                .as_ref()
                .map_or(true, |(k, _)| total.cmp(k) == Ordering::Greater)
            {
                best = Some((total, parents[1..].to_vec()));
            }
        }
    }
    best.map(|(_, heads)| heads)
}

/// Best incoming arc for every non-root node; lowest head wins exact ties.
fn best_incoming(w: &[Vec<Option<Key>>]) -> Option<Vec<usize>> {
    let n = w.len();
    let mut best = vec![0; n];
    for (v, slot) in best.iter_mut().enumerate().skip(1) {
        let mut top: Option<(usize, Key)> = None;
        for (u, row) in w.iter().enumerate() {
            if u == v {
                continue;
            }
            if let Some(k) = row[v] {
                if top.map_or(true, |(_, t)| k.cmp(&t) == Ordering::Greater) {
                    top = Some((u, k));
                }
            }
        }
        *slot = top?.0;
    }
    Some(best)
}

fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let n = parent.len();
    let mut color = vec![0u8; n];
    color[0] = 2;
    for start in 1..n {
        let mut path = Vec::new();
        let mut v = start;
        while color[v] == 0 {
            color[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if color[v] == 1 {
            let pos = path.iter().position(|&p| p == v).unwrap();
            return Some(path[pos..].to_vec());
        }
        for p in path {
            color[p] = 2;
        }
    }
    None
}

fn chu_liu_edmonds(w: &[Vec<Option<Key>>]) -> Option<Vec<usize>> {
    let n = w.len();
    let best = best_incoming(w)?;
    let cycle = match find_cycle(&best) {
        Some(c) => c,
        None => return Some(best),
    };

    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    // Contracted graph: surviving nodes keep their relative order, the
    // cycle becomes the last node.
    let mut new_id = vec![usize::MAX; n];
    let mut old_id = Vec::new();
    for v in 0..n {
        if !in_cycle[v] {
            new_id[v] = old_id.len();
            old_id.push(v);
        }
    }
    let c = old_id.len();
    let m = c + 1;

    let mut cw = vec![vec![None; m]; m];
    // For arcs into the cycle node: which cycle member they enter.
    let mut enter = vec![usize::MAX; m];
    // For arcs out of the cycle node: which cycle member they leave from.
    let mut leave = vec![usize::MAX; m];

    for (nu, &u) in old_id.iter().enumerate() {
        for (nv, &v) in old_id.iter().enumerate() {
            if u != v {
                cw[nu][nv] = w[u][v];
            }
        }
        let mut top: Option<(usize, Key)> = None;
        for &v in &cycle {
            if let Some(k) = w[u][v] {
                let adj = k - w[best[v]][v].unwrap();
                if top.map_or(true, |(_, t)| adj.cmp(&t) == Ordering::Greater) {
                    top = Some((v, adj));
                }
            }
        }
        if let Some((v, k)) = top {
            cw[nu][c] = Some(k);
            enter[nu] = v;
        }
    }
    for (nv, &v) in old_id.iter().enumerate().skip(1) {
        let mut top: Option<(usize, Key)> = None;
        for &u in &cycle {
            if let Some(k) = w[u][v] {
                if top.map_or(true, |(_, t)| k.cmp(&t) == Ordering::Greater) {
                    top = Some((u, k));
                }
            }
        }
        if let Some((u, k)) = top {
            cw[c][nv] = Some(k);
            leave[nv] = u;
        }
    }

    let sub = chu_liu_edmonds(&cw)?;

    let mut parent = best.clone();
    for (nv, &v) in old_id.iter().enumerate().skip(1) {
        parent[v] = if sub[nv] == c {
            leave[nv]
        } else {
            old_id[sub[nv]]
        };
    }
    let from = sub[c];
    parent[enter[from]] = old_id[from];
    Some(parent)
}
