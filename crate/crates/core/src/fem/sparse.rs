use crate::scalar::Scalar;

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    symmetric: bool,
}

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder<T> {
    dim: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        Self { dim, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row, col, value));
    }

    /// Merges another builder; accumulation order does not affect the result
    /// beyond floating-point summation order.
    pub fn extend(&mut self, other: TripletBuilder<T>) {
        self.entries.extend(other.entries);
    }

    pub fn build(self, symmetric: bool) -> SparseOperator<T> {
        let mut entries = self.entries;
        // stable, so duplicates are summed in insertion order
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; self.dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator { dim: self.dim, row_ptr, cols, vals, symmetric }
    }
}

impl<T: Scalar> SparseOperator<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![T::one(); dim],
            symmetric: true,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new(), symmetric: true }
    }

    /// Dense row-major input, zeros dropped.
    pub fn from_dense(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut b = TripletBuilder::new(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    b.add(i, j, v);
                }
            }
        }
        let mut op = b.build(false);
        op.symmetric = op.is_numerically_symmetric(T::zero());
        op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).fold(T::zero(), |acc, (&j, &a)| acc + a * x[j])
            })
            .collect()
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        self.iter().fold(T::zero(), |acc, (i, j, a)| acc + x[i] * a * y[j])
    }

    pub fn transpose(&self) -> Self {
        let mut b = TripletBuilder::with_capacity(self.dim, self.nnz());
        for (i, j, v) in self.iter() {
            b.add(j, i, v);
        }
        b.build(self.symmetric)
    }

    /// `self + other` (same dimension).
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut b = TripletBuilder::with_capacity(self.dim, self.nnz() + other.nnz());
        for (i, j, v) in self.iter().chain(other.iter()) {
            b.add(i, j, v);
        }
        b.build(self.symmetric && other.symmetric)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { vals: self.vals.iter().map(|&v| v * s).collect(), ..self.clone() }
    }

    /// Largest entrywise difference (missing entries count as zero).
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim);
        let diff = self.add(&other.scaled(-T::one()));
        diff.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> T {
        self.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_numerically_symmetric(&self, tol: T) -> bool {
        self.max_abs_diff(&self.transpose()) <= tol
    }

    pub fn all_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }

    /// Restriction to the listed rows/columns, as a dense matrix.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<T>> {
        rows.iter().map(|&i| cols.iter().map(|&j| self.get(i, j)).collect()).collect()
    }

    pub(crate) fn parts(&self) -> (&[usize], &[usize], &[T]) {
        (&self.row_ptr, &self.cols, &self.vals)
    }

    pub(crate) fn from_csr(dim: usize, row_ptr: Vec<usize>, cols: Vec<usize>, vals: Vec<T>, symmetric: bool) -> Self {
        Self { dim, row_ptr, cols, vals, symmetric }
    }
}
