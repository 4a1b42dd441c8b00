use std::ops::{Index, IndexMut};

/// Dense row-major matrix of doubles.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Tensor2D { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor2D { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Tensor2D) {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add(&self, other: &Tensor2D) -> Tensor2D {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor2D {
        Tensor2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Rows `rows` of `self`, in that order.
    pub fn gather_rows(&self, rows: &[usize]) -> Tensor2D {
        let mut out = Tensor2D::zeros(rows.len(), self.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        out
    }

    /// Horizontal concatenation.
    pub fn hcat(a: &Tensor2D, b: &Tensor2D) -> Tensor2D {
        assert_eq!(a.rows, b.rows, "row mismatch in hcat");
        let mut out = Tensor2D::zeros(a.rows, a.cols + b.cols);
        for r in 0..a.rows {
            let row = out.row_mut(r);
            row[..a.cols].copy_from_slice(a.row(r));
            row[a.cols..].copy_from_slice(b.row(r));
        }
        out
    }

    /// Inverse of [`Tensor2D::hcat`]: columns `..left` and `left..`.
    pub fn hsplit(&self, left: usize) -> (Tensor2D, Tensor2D) {
        let a = Tensor2D::from_fn(self.rows, left, |r, c| self[(r, c)]);
        let b = Tensor2D::from_fn(self.rows, self.cols - left, |r, c| self[(r, left + c)]);
        (a, b)
    }

    /// `self * other`
    pub fn matmul(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Tensor2D::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            (&self.data, self.cols, 1),
            (&other.data, other.cols, 1),
            &mut out.data,
            0.0,
        );
        out
    }

    /// `self^T * other`, accumulated into `acc`.
    pub fn matmul_tn_into(&self, other: &Tensor2D, acc: &mut Tensor2D) {
        assert_eq!(self.rows, other.rows, "inner dimensions differ");
        assert_eq!(acc.shape(), (self.cols, other.cols), "output shape mismatch");
        gemm(
            self.cols,
            self.rows,
            other.cols,
            (&self.data, 1, self.cols),
            (&other.data, other.cols, 1),
            &mut acc.data,
            1.0,
        );
    }

    /// `self * other^T`
    pub fn matmul_nt(&self, other: &Tensor2D) -> Tensor2D {
        assert_eq!(self.cols, other.cols, "inner dimensions differ");
        let mut out = Tensor2D::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            (&self.data, self.cols, 1),
            (&other.data, 1, other.cols),
            &mut out.data,
            0.0,
        );
        out
    }
}

impl Index<(usize, usize)> for Tensor2D {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Tensor2D {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// `c = a * b + beta * c` for an `m x k` by `k x n` product, with `a` and
/// `b` given as (data, row stride, column stride) and `c` row-major.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let max_index = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.0.len() >= max_index(m, k, a.1, a.2));
    assert!(b.0.len() >= max_index(k, n, b.1, b.2));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor2D, b: &Tensor2D) -> Tensor2D {
        Tensor2D::from_fn(a.rows(), b.cols(), |r, c| {
            (0..a.cols()).map(|k| a[(r, k)] * b[(k, c)]).sum()
        })
    }

    fn transpose(a: &Tensor2D) -> Tensor2D {
        Tensor2D::from_fn(a.cols(), a.rows(), |r, c| a[(c, r)])
    }

    #[test]
    fn products_match_naive() {
        let a = Tensor2D::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.5 - 2.0);
        let b = Tensor2D::from_fn(4, 2, |r, c| (r as f64 - c as f64) * 0.25);
        assert_eq!(a.matmul(&b), naive(&a, &b));
        assert_eq!(a.matmul_nt(&transpose(&b)), naive(&a, &b));
        let mut acc = Tensor2D::zeros(4, 2);
        let c = Tensor2D::from_fn(3, 2, |r, c| (r + c) as f64);
        a.matmul_tn_into(&c, &mut acc);
        a.matmul_tn_into(&c, &mut acc);
        let expect = naive(&transpose(&a), &c).map(|x| 2.0 * x);
        assert_eq!(acc, expect);
    }

    #[test]
    fn hcat_and_hsplit_are_inverse() {
        let a = Tensor2D::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let b = Tensor2D::from_fn(2, 1, |r, _| -(r as f64));
        let (x, y) = Tensor2D::hcat(&a, &b).hsplit(3);
        assert_eq!((x, y), (a, b));
    }
}
