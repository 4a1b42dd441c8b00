use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{numeric_gradient, relative_error};
use super::layers::*;
use super::loss::*;
use super::params::ParameterStore;
use super::tensor::Tensor2D;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rand_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2D {
    Tensor2D::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Scalar objective `sum(y * w)` for a fixed random `w`, so every output
/// coordinate matters.
fn weighted_sum(y: &Tensor2D, w: &Tensor2D) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Compares the analytic input gradient and all parameter gradients of a
/// layer against finite differences of `weighted_sum(forward(x))`.
fn check_layer(
    ps: &mut ParameterStore,
    x: &Tensor2D,
    out_cols: usize,
    forward: &dyn Fn(&ParameterStore, &Tensor2D) -> Tensor2D,
    backward: &dyn Fn(&mut ParameterStore, &Tensor2D, &Tensor2D) -> Tensor2D,
    rng: &mut ChaCha8Rng,
) {
    let y = forward(ps, x);
    assert_eq!(y.cols(), out_cols);
    let w = rand_tensor(y.rows(), y.cols(), rng);
    ps.zero_grads();
    let dx = backward(ps, x, &w);

    let mut xv = x.data().to_vec();
    let numeric = numeric_gradient(&mut xv, H, |v| {
        weighted_sum(&forward(ps, &Tensor2D::from_vec(x.rows(), x.cols(), v.to_vec())), &w)
    });
    let err = relative_error(dx.data(), &numeric);
    assert!(err < TOL, "input gradient error {}", err);

    let ids: Vec<_> = ps.ids().collect();
    for id in ids {
        let analytic = ps.grad(id).data().to_vec();
        let shape = ps.value(id).shape();
        let mut values = ps.value(id).data().to_vec();
        let numeric = numeric_gradient(&mut values, H, |v| {
            let mut probe = ps.clone();
            *probe.value_mut(id) = Tensor2D::from_vec(shape.0, shape.1, v.to_vec());
            weighted_sum(&forward(&probe, x), &w)
        });
        let err = relative_error(&analytic, &numeric);
        let abs = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // the key bias has an identically zero gradient
        assert!(err < TOL || abs < 1e-9, "gradient of {} off by {}", ps.name(id), err);
    }
}

#[test]
fn linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ps = ParameterStore::new();
    let lin = Linear::new(&mut ps, "lin", 4, 3, &mut rng);
    let x = rand_tensor(5, 4, &mut rng);
    check_layer(
        &mut ps,
        &x,
        3,
        &|ps, x| lin.forward(ps, x),
        &|ps, x, dy| lin.backward(ps, x, dy),
        &mut rng,
    );
}

#[test]
fn layer_norm_gradients_and_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ps = ParameterStore::new();
    let ln = LayerNorm::new(&mut ps, "ln", 6);
    // non-trivial scale and shift so their gradients are exercised
    *ps.value_mut(ln.gamma) = rand_tensor(1, 6, &mut rng);
    *ps.value_mut(ln.beta) = rand_tensor(1, 6, &mut rng);
    let x = rand_tensor(3, 6, &mut rng).map(|v| v * 4.0 + 1.0);
    check_layer(
        &mut ps,
        &x,
        6,
        &|ps, x| ln.forward(ps, x).0,
        &|ps, x, dy| {
            let (_, cache) = ln.forward(ps, x);
            ln.backward(ps, &cache, dy)
        },
        &mut rng,
    );

    let (_, cache) = ln.forward(&ps, &x);
    for r in 0..3 {
        let row = cache.xhat.row(r);
        let mean = row.iter().sum::<f64>() / 6.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-3);
    }
}

#[test]
fn activations_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for act in [Activation::Relu, Activation::Tanh] {
        // keep clear of the relu kink
        let x = rand_tensor(4, 3, &mut rng).map(|v| if v.abs() < 0.05 { 0.5 } else { v });
        let w = rand_tensor(4, 3, &mut rng);
        let dx = act.backward(&x, &w);
        let mut xv = x.data().to_vec();
        let numeric = numeric_gradient(&mut xv, H, |v| {
            weighted_sum(&act.forward(&Tensor2D::from_vec(4, 3, v.to_vec())), &w)
        });
        assert!(relative_error(dx.data(), &numeric) < TOL, "{}", act.as_str());
    }
}

#[test]
fn attention_gradients_with_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ps = ParameterStore::new();
    let attn = MultiHeadAttention::new(&mut ps, "attn", 4, 2, &mut rng).unwrap();
    let layout = SeqLayout::new(3, vec![3, 2]);
    let x = rand_tensor(6, 4, &mut rng);
    check_layer(
        &mut ps,
        &x,
        4,
        &|ps, x| attn.forward(ps, x, &layout).0,
        &|ps, x, dy| {
            let (_, cache) = attn.forward(ps, x, &layout);
            attn.backward(ps, &cache, &layout, dy)
        },
        &mut rng,
    );
}

#[test]
fn attention_probabilities_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ps = ParameterStore::new();
    let attn = MultiHeadAttention::new(&mut ps, "attn", 8, 4, &mut rng).unwrap();
    let layout = SeqLayout::new(5, vec![5, 3]);
    let x = rand_tensor(10, 8, &mut rng);
    let (_, cache) = attn.forward(&ps, &x, &layout);
    for (i, p) in cache.probs.iter().enumerate() {
        let valid = layout.valid[i / 4];
        for r in 0..5 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.row(r)[valid..].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn single_token_attention_passes_value_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ps = ParameterStore::new();
    let attn = MultiHeadAttention::new(&mut ps, "attn", 4, 2, &mut rng).unwrap();
    let x = rand_tensor(1, 4, &mut rng);
    let (y, cache) = attn.forward(&ps, &x, &SeqLayout::single(1));
    assert!(cache.probs.iter().all(|p| p[(0, 0)] == 1.0));
    let expect = attn.output.forward(&ps, &attn.value.forward(&ps, &x));
    for (a, b) in y.data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_rejects_indivisible_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ps = ParameterStore::new();
    assert!(MultiHeadAttention::new(&mut ps, "attn", 6, 4, &mut rng).is_err());
}

#[test]
fn transformer_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ps = ParameterStore::new();
    let layer = TransformerLayer::new(&mut ps, "enc", 4, 2, 6, Activation::Tanh, &mut rng).unwrap();
    let layout = SeqLayout::new(3, vec![2, 3]);
    let x = rand_tensor(6, 4, &mut rng);
    check_layer(
        &mut ps,
        &x,
        4,
        &|ps, x| layer.forward(ps, x, &layout).0,
        &|ps, x, dy| {
            let (_, cache) = layer.forward(ps, x, &layout);
            layer.backward(ps, &cache, &layout, dy)
        },
        &mut rng,
    );
}

#[test]
fn transformer_layer_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ps = ParameterStore::new();
    let layer = TransformerLayer::new(&mut ps, "enc", 8, 2, 16, Activation::Relu, &mut rng).unwrap();
    let x = rand_tensor(4, 8, &mut rng);
    let perm = [2, 0, 3, 1];
    let layout = SeqLayout::single(4);
    let (y, _) = layer.forward(&ps, &x, &layout);
    let (yp, _) = layer.forward(&ps, &x.gather_rows(&perm), &layout);
    let expect = y.gather_rows(&perm);
    for (a, b) in yp.data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn mlp_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ps = ParameterStore::new();
    let mlp = Mlp::new(&mut ps, "mlp", 5, 4, 2, Activation::Tanh, &mut rng);
    let x = rand_tensor(3, 5, &mut rng);
    check_layer(
        &mut ps,
        &x,
        1,
        &|ps, x| {
            let (p, _) = mlp.forward(ps, x);
            Tensor2D::from_vec(p.len(), 1, p)
        },
        &|ps, x, dy| {
            let (_, cache) = mlp.forward(ps, x);
            mlp.backward(ps, &cache, dy.data())
        },
        &mut rng,
    );
}

#[test]
fn embedding_gradients_accumulate_repeated_ids() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ps = ParameterStore::new();
    let emb = Embedding::new(&mut ps, "emb", 4, 3, &mut rng);
    let ids = [1, 3, 1];
    let dy = rand_tensor(3, 3, &mut rng);
    emb.backward(&mut ps, &ids, &dy);
    let g = ps.grad(emb.table);
    for c in 0..3 {
        assert_eq!(g[(0, c)], 0.0);
        assert!((g[(1, c)] - dy[(0, c)] - dy[(2, c)]).abs() < 1e-15);
        assert_eq!(g[(3, c)], dy[(1, c)]);
    }
}

#[test]
fn rmse_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let targets: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..2.0)).collect();
    let mut preds: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..2.0)).collect();
    let (_, g) = rmse_loss(&preds, &targets).unwrap();
    let numeric = numeric_gradient(&mut preds, H, |p| rmse_loss(p, &targets).unwrap().0);
    assert!(relative_error(&g, &numeric) < TOL);
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let logits = rand_tensor(3, 5, &mut rng).map(|v| v * 3.0);
    let targets = [4, 0, 2];
    let (_, g) = softmax_cross_entropy(&logits, &targets);
    let mut lv = logits.data().to_vec();
    let numeric = numeric_gradient(&mut lv, H, |v| {
        softmax_cross_entropy(&Tensor2D::from_vec(3, 5, v.to_vec()), &targets).0
    });
    assert!(relative_error(g.data(), &numeric) < TOL);
}
