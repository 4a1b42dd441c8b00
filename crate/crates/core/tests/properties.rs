mod common;

use std::collections::BTreeSet;

use ilps::baselines::{cosine, kl_divergence, TrigramCounts, TrigramDistribution};
use ilps::crossparse::make_labels;
use ilps::eval::{build_report, micro_uas, oracle_ilps, oracle_sbps, paired_ttest, uas, SystemRun};
use ilps::model::{make_masking_plan, mask_count, MaskAction};
use ilps::mst::{edmonds_mst, edmonds_mst_single_root, WeightedArcGraph};
use ilps::select::{reparse, threshold_set, ScoreMatrix};
use ilps::treebank::{check_tree, parse_conllu, write_conllu, Sentence, Split, Treebank, Upos};
use ilps::nn::Tensor2D;
use ilps::ParserId;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<usize>> {
    (len, any::<u64>()).prop_map(|(n, seed)| common::random_tree(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-4..1.0f64, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn tags(len: usize) -> impl Strategy<Value = Vec<Upos>> {
    prop::collection::vec(0..Upos::COUNT, len).prop_map(|v| v.into_iter().map(|i| Upos::ALL[i]).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn check_tree_agrees_with_reachability(heads in (1usize..8).prop_flat_map(|n| prop::collection::vec(0..=n, n))) {
        let roots = heads.iter().filter(|&&h| h == 0).count();
        let expect = roots == 1 && common::is_arborescence(&heads);
        prop_assert_eq!(check_tree(&heads).is_ok(), expect);
    }

    #[test]
    fn conllu_round_trips(trees in prop::collection::vec(tree(1..15), 1..6), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sentences: Vec<Sentence> = trees
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let t: Vec<Upos> = (0..h.len()).map(|_| Upos::ALL[rng.gen_range(0..Upos::COUNT)]).collect();
                Sentence::from_parts(format!("tb:{}", i), "xx", &t, h).unwrap()
            })
            .collect();
        let tb = Treebank::new("xx", Split::Test, sentences);
        let mut buf = Vec::new();
        write_conllu(&mut buf, &tb, &["note".to_owned()]).unwrap();
        let back = parse_conllu(std::str::from_utf8(&buf).unwrap(), "xx", "tb", Split::Test).unwrap();
        prop_assert_eq!(back, tb);
    }

    #[test]
    fn mst_is_a_tree_and_beats_random_trees(tokens in 1usize..25, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = WeightedArcGraph::complete(tokens, |_, _| rng.gen_range(-3.0..3.0));
        let free = edmonds_mst(&g).unwrap();
        let single = edmonds_mst_single_root(&g).unwrap();
        prop_assert!(common::is_arborescence(&free));
        prop_assert!(check_tree(&single).is_ok());
        let (wf, ws) = (g.tree_weight(&free).unwrap(), g.tree_weight(&single).unwrap());
        prop_assert!(wf >= ws - 1e-9);
        for _ in 0..20 {
            let t = common::random_tree(&mut rng, tokens);
            prop_assert!(ws >= g.tree_weight(&t).unwrap() - 1e-9);
        }
    }

    #[test]
    fn reparse_returns_a_tree(voters in prop::collection::vec((any::<u64>(), 0.0..2.0f64), 1..5), len in 1usize..20) {
        let trees: Vec<Vec<usize>> = voters
            .iter()
            .map(|(s, _)| common::random_tree(&mut ChaCha8Rng::seed_from_u64(*s), len))
            .collect();
        let refs: Vec<&[usize]> = trees.iter().map(Vec::as_slice).collect();
        let weights: Vec<f64> = voters.iter().map(|(_, w)| *w).collect();
        let out = reparse(&refs, &weights);
        prop_assert!(check_tree(&out).is_ok());
        // every arc comes from some voter with positive weight
        let live: Vec<&Vec<usize>> = trees.iter().zip(&weights).filter(|(_, w)| **w > 0.0).map(|(t, _)| t).collect();
        if !live.is_empty() {
            for (d, h) in out.iter().enumerate() {
                prop_assert!(live.iter().any(|t| t[d] == *h));
            }
        }
    }

    #[test]
    fn agreeing_voters_reproduce_their_tree(t in tree(1..30), k in 1usize..5) {
        let refs: Vec<&[usize]> = (0..k).map(|_| t.as_slice()).collect();
        prop_assert_eq!(reparse(&refs, &vec![1.0; k]), t);
    }

    #[test]
    fn kl_is_a_divergence((p, q) in (1usize..12).prop_flat_map(|k| (distribution(k), distribution(k)))) {
        prop_assert!(kl_divergence(&p, &p).abs() < 1e-15);
        prop_assert!(kl_divergence(&p, &q) >= 0.0);
    }

    #[test]
    fn smoothed_trigrams_sum_to_one(a in prop::collection::vec(tags(6), 1..5), b in prop::collection::vec(tags(4), 1..5), alpha in 0.01..1.0f64) {
        let ca = TrigramCounts::from_sentences(a.iter().map(Vec::as_slice));
        let cb = TrigramCounts::from_sentences(b.iter().map(Vec::as_slice));
        let support: BTreeSet<_> = ca.support().chain(cb.support()).copied().collect();
        for c in [&ca, &cb] {
            let d = TrigramDistribution::smoothed(c, &support, alpha).unwrap();
            let total: f64 = d.probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(d.probs.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in prop::collection::vec(-5.0..5.0f64, 4), b in prop::collection::vec(-5.0..5.0f64, 4)) {
        let c = cosine(&a, &b);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn threshold_keeps_the_best(values in prop::collection::vec(-1.0..3.0f64, 1..8), tau in 0.0..=1.0f64) {
        let set = threshold_set(&values, tau).unwrap();
        let best = values.iter().cloned().fold(f64::MIN, f64::max);
        let top = values.iter().position(|&v| v == best).unwrap();
        prop_assert!(set.contains(&ParserId::from_index(top)));
        if best > 0.0 {
            for p in &set {
                prop_assert!(values[p.index()] >= tau * best);
            }
        }
    }

    #[test]
    fn labels_normalize_per_sentence(seed in any::<u64>(), n in 1usize..15, parsers in 1usize..6) {
        let groups = common::random_groups(&mut ChaCha8Rng::seed_from_u64(seed), n, parsers);
        let examples = make_labels(&groups).unwrap();
        for chunk in examples.chunks(parsers) {
            let mean: f64 = chunk.iter().map(|e| e.label).sum::<f64>() / parsers as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
            prop_assert!(chunk.iter().all(|e| e.sentence_id == chunk[0].sentence_id));
        }
    }

    #[test]
    fn oracles_are_ordered(seed in any::<u64>(), parsers in 1usize..5, sentences in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold: Vec<Vec<usize>> = (0..sentences).map(|i| common::random_tree(&mut rng, 1 + i % 7)).collect();
        let per_parser: Vec<Vec<_>> = (0..parsers)
            .map(|_| gold.iter().map(|g| uas(&common::random_tree(&mut rng, g.len()), g).unwrap()).collect())
            .collect();
        let ilps = oracle_ilps(&per_parser).unwrap();
        let (id, sbps) = oracle_sbps(&per_parser).unwrap();
        prop_assert!(ilps >= sbps);
        prop_assert_eq!(sbps, micro_uas(&per_parser[id.index()]));
        for p in &per_parser {
            prop_assert!(sbps >= micro_uas(p));
        }
    }

    #[test]
    fn ttest_is_antisymmetric(a in prop::collection::vec(0.0..1.0f64, 2..30), shift in prop::collection::vec(-0.5..0.5f64, 30)) {
        let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
        let ab = paired_ttest(&a, &b).unwrap();
        let ba = paired_ttest(&b, &a).unwrap();
        prop_assert!((ab.t + ba.t).abs() < 1e-9 * (1.0 + ab.t.abs()));
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p));
        let same = paired_ttest(&a, &a).unwrap();
        prop_assert_eq!(same.t, 0.0);
    }

    #[test]
    fn report_is_order_invariant(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut runs = Vec::new();
        for system in ["a", "b"] {
            for language in ["x", "y", "z"] {
                let scores = (0..4)
                    .map(|_| {
                        let g = common::random_tree(&mut rng, 5);
                        uas(&common::random_tree(&mut rng, 5), &g).unwrap()
                    })
                    .collect();
                runs.push(SystemRun { system: system.into(), language: language.into(), selected: String::new(), scores });
            }
        }
        let report = build_report(&runs, Some("a")).unwrap();
        runs.shuffle(&mut rng);
        let shuffled = build_report(&runs, Some("a")).unwrap();
        // rows follow first appearance; their contents must not move
        let lines = |r: &ilps::eval::EvaluationReport| {
            let mut l: Vec<String> = r.to_tsv().lines().map(str::to_owned).collect();
            l.sort();
            l
        };
        prop_assert_eq!(lines(&report), lines(&shuffled));
        let mean: f64 = ["x", "y", "z"].iter().map(|l| report.row("b", l).unwrap().uas).sum::<f64>() / 3.0;
        prop_assert!((report.macro_uas("b") - mean).abs() < 1e-12);
    }

    #[test]
    fn masking_plans_are_valid(len in 1usize..200, seed in any::<u64>()) {
        let plan = make_masking_plan(len, seed);
        prop_assert_eq!(plan.positions.len(), mask_count(len));
        prop_assert!(plan.positions.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(plan.positions.iter().all(|(p, _)| *p < len));
        prop_assert!(plan.positions.iter().all(|(_, a)| matches!(a, MaskAction::Mask | MaskAction::Keep | MaskAction::Random(_))));
    }

    #[test]
    fn score_matrix_round_trips(values in prop::collection::vec(-3.0..3.0f64, 12)) {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (0..4).map(|i| format!("s:{}", i)).collect();
        let m = ScoreMatrix::new(
            (0..3).map(ParserId::from_index).collect(),
            ids,
            Tensor2D::from_vec(3, 4, values),
        )
        .unwrap();
        let path = dir.path().join("scores.tsv");
        m.write(&path).unwrap();
        prop_assert_eq!(ScoreMatrix::read(&path).unwrap(), m);
    }
}

#[test]
fn masking_proportions() {
    let (mut mask, mut keep, mut random) = (0, 0, 0);
    for seed in 0..2000 {
        for (_, a) in make_masking_plan(40, seed).positions {
            match a {
                MaskAction::Mask => mask += 1,
                MaskAction::Keep => keep += 1,
                MaskAction::Random(_) => random += 1,
            }
        }
    }
    let n = (mask + keep + random) as f64;
    assert!((mask as f64 / n - 0.8).abs() < 0.01);
    assert!((keep as f64 / n - 0.1).abs() < 0.01);
    assert!((random as f64 / n - 0.1).abs() < 0.01);
}
