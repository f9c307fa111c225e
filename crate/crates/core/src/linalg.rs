//! Small dense helpers and the matrix-free operator abstraction.

use ndarray::{Array1, Array2, ArrayView1};

pub fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// A real linear map given by its action and the action of its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64>;
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64>;
}

impl LinearOperator for Array2<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        self.dot(&z)
    }
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        self.t().dot(&w)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        (**self).apply(z)
    }
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        (**self).apply_adjoint(w)
    }
}

/// Operator assembled from closures. Use the same closure twice for a
/// symmetric map.
pub struct FnOperator<F, G> {
    rows: usize,
    cols: usize,
    forward: F,
    adjoint: G,
}

impl<F, G> FnOperator<F, G>
where
    F: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
    G: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
{
    pub fn new(rows: usize, cols: usize, forward: F, adjoint: G) -> Self {
        Self {
            rows,
            cols,
            forward,
            adjoint,
        }
    }
}

impl<F, G> LinearOperator for FnOperator<F, G>
where
    F: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
    G: Fn(ArrayView1<'_, f64>) -> Array1<f64>,
{
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        (self.forward)(z)
    }
    fn apply_adjoint(&self, w: ArrayView1<'_, f64>) -> Array1<f64> {
        (self.adjoint)(w)
    }
}

/// `Σ weights[i] · rows[i] rows[i]ᵀ` for the rows of `rows`, materialized as
/// one or two Gram products over the rows with nonzero weight.
pub fn weighted_gram(rows: &Array2<f64>, weights: ArrayView1<'_, f64>) -> Array2<f64> {
    let n = rows.ncols();
    let mut out = Array2::zeros((n, n));
    let pos: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    let neg: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] < 0.0).collect();
    if !pos.is_empty() {
        let b = scaled_rows(rows, weights, &pos);
        out += &b.t().dot(&b);
    }
    if !neg.is_empty() {
        let b = scaled_rows(rows, weights, &neg);
        out -= &b.t().dot(&b);
    }
    out
}

fn scaled_rows(rows: &Array2<f64>, weights: ArrayView1<'_, f64>, idx: &[usize]) -> Array2<f64> {
    let n = rows.ncols();
    let mut b = Array2::zeros((idx.len(), n));
    for (k, &i) in idx.iter().enumerate() {
        let s = weights[i].abs().sqrt();
        b.row_mut(k).assign(&(&rows.row(i) * s));
    }
    b
}

/// Makes `m` exactly symmetric by averaging with its transpose.
pub fn symmetrize(m: &mut Array2<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn weighted_gram_matches_rank_one_sum() {
        let rows = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let w = array![2.0, -1.0, 0.0];
        let g = weighted_gram(&rows, w.view());
        let mut expected = Array2::<f64>::zeros((2, 2));
        for i in 0..3 {
            for r in 0..2 {
                for c in 0..2 {
                    expected[[r, c]] += w[i] * rows[[i, r]] * rows[[i, c]];
                }
            }
        }
        for (a, b) in g.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
