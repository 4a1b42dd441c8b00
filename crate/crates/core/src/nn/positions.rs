use super::tensor::Tensor2D;

/// Sinusoidal position encodings: `sin(p / 10000^(2k/d))` in even
/// dimension `2k`, the matching cosine in odd dimension `2k + 1`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Tensor2D {
    Tensor2D::from_fn(len, dim, |pos, i| {
        let k = (i / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * k / dim as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}
