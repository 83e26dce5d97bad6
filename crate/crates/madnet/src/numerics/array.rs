//! Dense row-major `f64` matrices.
//!
//! Everything the model computes is a 2-D array: vectors are `[1, n]`,
//! scalars are `[1, 1]`. Data is shared behind an `Arc` so that cloning an
//! array (e.g. when an autograd closure captures its inputs) is O(1); the
//! optimizer mutates in place through [`Array::make_mut`].

use std::sync::Arc;

use super::NumericsError;

#[derive(Clone, Debug)]
pub struct Array {
    rows: usize,
    cols: usize,
    data: Arc<Vec<f64>>,
}

impl PartialEq for Array {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && *self.data == *other.data
    }
}

impl Array {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: Arc::new(vec![0.0; rows * cols]),
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: Arc::new(vec![value; rows * cols]),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match shape [{rows}, {cols}]",
            data.len()
        );
        Self {
            rows,
            cols,
            data: Arc::new(data),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, vec![value])
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self::from_vec(1, cols, data)
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

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access; copies the buffer first if it is shared.
    pub fn make_mut(&mut self) -> &mut [f64] {
        let v: &mut Vec<f64> = Arc::make_mut(&mut self.data);
        v.as_mut_slice()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scalar_value(&self) -> f64 {
        assert!(self.is_scalar(), "expected scalar, got {:?}", self.shape());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<(), NumericsError> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(NumericsError::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array::from_vec(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn transpose(&self) -> Array {
        let mut out = vec![0.0; self.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Array::from_vec(self.cols, self.rows, out)
    }
}

/// `a [m,k] @ b [k,n] -> [m,n]`.
pub fn matmul(a: &Array, b: &Array) -> Array {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "matmul shape mismatch: [{m},{k}] @ [{k2},{n}]");
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Array::from_vec(m, n, out)
}

/// `a [m,k] @ b^T` where `b` is `[n,k]` -> `[m,n]`.
pub fn matmul_nt(a: &Array, b: &Array) -> Array {
    let (m, k) = a.shape();
    let (n, k2) = b.shape();
    assert_eq!(k, k2, "matmul_nt shape mismatch: [{m},{k}] @ [{n},{k2}]^T");
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &bd[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o = acc;
        }
    }
    Array::from_vec(m, n, out)
}

/// `a^T @ b` where `a` is `[k,m]`, `b` is `[k,n]` -> `[m,n]`.
pub fn matmul_tn(a: &Array, b: &Array) -> Array {
    let (k, m) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "matmul_tn shape mismatch: [{k},{m}]^T @ [{k2},{n}]");
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for p in 0..k {
        let arow = &ad[p * m..(p + 1) * m];
        let brow = &bd[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Array::from_vec(m, n, out)
}

pub fn add(a: &Array, b: &Array) -> Array {
    assert_eq!(a.shape(), b.shape(), "add shape mismatch");
    Array::from_vec(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
}

pub fn hadamard(a: &Array, b: &Array) -> Array {
    assert_eq!(a.shape(), b.shape(), "hadamard shape mismatch");
    Array::from_vec(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
    )
}

pub fn scale(a: &Array, c: f64) -> Array {
    a.map(|x| x * c)
}

/// `dst += src`, in place.
pub fn add_assign(dst: &mut Array, src: &Array) {
    assert_eq!(dst.shape(), src.shape(), "add_assign shape mismatch");
    for (d, s) in dst.make_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// `dst += c * src`, in place.
pub fn axpy(dst: &mut Array, c: f64, src: &Array) {
    assert_eq!(dst.shape(), src.shape(), "axpy shape mismatch");
    for (d, s) in dst.make_mut().iter_mut().zip(src.data()) {
        *d += c * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let eye = Array::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let x = Array::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matmul(&eye, &x), x);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Array::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 1.0, -1.0]);
        let b = Array::from_vec(3, 4, (0..12).map(|i| i as f64 * 0.25 - 1.0).collect());
        let c = matmul(&a, &b);
        assert_eq!(matmul_nt(&a, &b.transpose()), c);
        assert_eq!(matmul_tn(&a.transpose(), &b), c);
    }

    #[test]
    fn transpose_round_trip() {
        let a = Array::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.transpose().transpose(), a);
    }
}
