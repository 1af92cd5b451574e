//! Dense row-major arrays of rank 1 or 2.

use crate::scalar::Scalar;

/// A dense array with an explicit shape. Rank 1 (vectors) and rank 2
/// (matrices) cover everything this crate computes with.
#[derive(Debug, Clone, PartialEq)]
pub struct NumArray<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> NumArray<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![S::zero(); n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            n,
            data.len(),
            "shape {:?} implies {} elements, got {}",
            shape,
            n,
            data.len()
        );
        Self { shape: shape.to_vec(), data }
    }

    pub fn vector(data: Vec<S>) -> Self {
        let n = data.len();
        Self { shape: vec![n], data }
    }

    pub fn scalar(v: S) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        assert!(!rows.is_empty(), "from_rows needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows: {} vs {}", r.len(), cols);
            data.extend_from_slice(r);
        }
        Self { shape: vec![rows.len(), cols], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on rank-{} array", self.rank());
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on rank-{} array", self.rank());
        self.shape[1]
    }

    #[inline]
    pub fn at(&self, i: usize) -> S {
        self.data[i]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> S {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    /// Reinterprets the data under a new shape of equal element count.
    pub fn reshaped(&self, shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.len(), "reshape {:?} -> {:?}", self.shape, shape);
        Self { shape: shape.to_vec(), data: self.data.clone() }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape {:?} vs {:?}", self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    /// Elementwise `self += c * other`.
    pub fn add_scaled(&mut self, other: &Self, c: S) {
        assert_eq!(self.shape, other.shape, "add_scaled shape {:?} vs {:?}", self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * *b;
        }
    }

    pub fn scale_in_place(&mut self, c: S) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    pub fn sq_l2(&self) -> S {
        self.data.iter().fold(S::zero(), |acc, &v| acc + v * v)
    }
}

/// `a [n,k] x b [k,m] -> [n,m]`
pub fn matmul<S: Scalar>(a: &NumArray<S>, b: &NumArray<S>) -> NumArray<S> {
    let (n, k) = (a.rows(), a.cols());
    let (kb, m) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul shape mismatch: [{n},{k}] x [{kb},{m}]");
    let mut out = NumArray::zeros(&[n, m]);
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == S::zero() {
                continue;
            }
            let brow = b.row(kk);
            for j in 0..m {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

/// `a [n,k] x b [m,k]^T -> [n,m]`
pub fn matmul_nt<S: Scalar>(a: &NumArray<S>, b: &NumArray<S>) -> NumArray<S> {
    let (n, k) = (a.rows(), a.cols());
    let (m, kb) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul_nt shape mismatch: [{n},{k}] x [{m},{kb}]^T");
    let mut out = NumArray::zeros(&[n, m]);
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for j in 0..m {
            let brow = b.row(j);
            let mut acc = S::zero();
            for kk in 0..k {
                acc += arow[kk] * brow[kk];
            }
            orow[j] = acc;
        }
    }
    out
}

/// `a [k,n]^T x b [k,m] -> [n,m]`
pub fn matmul_tn<S: Scalar>(a: &NumArray<S>, b: &NumArray<S>) -> NumArray<S> {
    let (k, n) = (a.rows(), a.cols());
    let (kb, m) = (b.rows(), b.cols());
    assert_eq!(k, kb, "matmul_tn shape mismatch: [{k},{n}]^T x [{kb},{m}]");
    let mut out = NumArray::zeros(&[n, m]);
    for kk in 0..k {
        let arow = a.row(kk);
        let brow = b.row(kk);
        for (i, &aki) in arow.iter().enumerate() {
            if aki == S::zero() {
                continue;
            }
            let orow = out.row_mut(i);
            for j in 0..m {
                orow[j] += aki * brow[j];
            }
        }
    }
    out
}

/// `m [n,k] x v [k] -> [n]`
pub fn matvec<S: Scalar>(m: &NumArray<S>, v: &NumArray<S>) -> NumArray<S> {
    let (n, k) = (m.rows(), m.cols());
    assert_eq!(v.shape(), [k], "matvec shape mismatch: [{n},{k}] x {:?}", v.shape());
    let vs = v.as_slice();
    let mut out = vec![S::zero(); n];
    for i in 0..n {
        let row = m.row(i);
        let mut acc = S::zero();
        for kk in 0..k {
            acc += row[kk] * vs[kk];
        }
        out[i] = acc;
    }
    NumArray::vector(out)
}

/// `m [n,k]^T x v [n] -> [k]`
pub fn matvec_t<S: Scalar>(m: &NumArray<S>, v: &NumArray<S>) -> NumArray<S> {
    let (n, k) = (m.rows(), m.cols());
    assert_eq!(v.shape(), [n], "matvec_t shape mismatch: [{n},{k}]^T x {:?}", v.shape());
    let vs = v.as_slice();
    let mut out = vec![S::zero(); k];
    for i in 0..n {
        let vi = vs[i];
        if vi == S::zero() {
            continue;
        }
        let row = m.row(i);
        for kk in 0..k {
            out[kk] += vi * row[kk];
        }
    }
    NumArray::vector(out)
}

/// Outer product `a [n] x b [m] -> [n,m]`.
pub fn outer<S: Scalar>(a: &NumArray<S>, b: &NumArray<S>) -> NumArray<S> {
    assert_eq!(a.rank(), 1);
    assert_eq!(b.rank(), 1);
    let (n, m) = (a.len(), b.len());
    let mut out = NumArray::zeros(&[n, m]);
    for i in 0..n {
        let ai = a.at(i);
        let orow = out.row_mut(i);
        for j in 0..m {
            orow[j] = ai * b.at(j);
        }
    }
    out
}
