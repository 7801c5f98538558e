//! Compressed-row sparse matrices and the small set of operations the
//! schemes need: products, transposes, linear combinations and 2x2 block
//! assembly. Everything is deterministic: entries are accumulated in a fixed
//! order, so repeated assembly of the same problem is bit-identical.

use crate::error::{Error, Result};

/// Entries with |value| at or below this threshold are dropped when a
/// builder is finalized (assembled matrices carry no explicit zeros).
pub const ASSEMBLY_DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator. Duplicate entries are summed in insertion
/// order (stable sort), which pins the floating-point result.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        CooBuilder {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    /// Compress to CSR, summing duplicates and dropping near-zero results.
    pub fn finalize(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|e| (e.0, e.1));
        let mut row_offsets = vec![0usize; self.rows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut i = 0;
        while i < self.entries.len() {
            let (r, c, _) = self.entries[i];
            let mut sum = 0.0;
            while i < self.entries.len() && self.entries[i].0 == r && self.entries[i].1 == c {
                sum += self.entries[i].2;
                i += 1;
            }
            if sum.abs() > ASSEMBLY_DROP_TOL {
                col_indices.push(c);
                values.push(sum);
                row_offsets[r + 1] += 1;
            }
        }
        for r in 0..self.rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        }
    }
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CsrMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// (column index, value) pairs of one row, columns strictly increasing.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        match self.col_indices[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_offsets = counts.clone();
        let mut cursor = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = cursor[c];
                col_indices[slot] = r;
                values[slot] = v;
                cursor[c] += 1;
            }
        }
        CsrMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn scale(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// alpha * A + beta * B with merged sparsity.
    pub fn linear_combination(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "shape mismatch");
        let mut row_offsets = vec![0usize; a.rows + 1];
        let mut col_indices = Vec::with_capacity(a.nnz() + b.nnz());
        let mut values = Vec::with_capacity(a.nnz() + b.nnz());
        for r in 0..a.rows {
            let mut ia = a.row_offsets[r];
            let mut ib = b.row_offsets[r];
            let ea = a.row_offsets[r + 1];
            let eb = b.row_offsets[r + 1];
            while ia < ea || ib < eb {
                let ca = if ia < ea { a.col_indices[ia] } else { usize::MAX };
                let cb = if ib < eb { b.col_indices[ib] } else { usize::MAX };
                let (c, v) = if ca < cb {
                    let v = alpha * a.values[ia];
                    ia += 1;
                    (ca, v)
                } else if cb < ca {
                    let v = beta * b.values[ib];
                    ib += 1;
                    (cb, v)
                } else {
                    let v = alpha * a.values[ia] + beta * b.values[ib];
                    ia += 1;
                    ib += 1;
                    (ca, v)
                };
                col_indices.push(c);
                values.push(v);
            }
            row_offsets[r + 1] = col_indices.len();
        }
        CsrMatrix {
            rows: a.rows,
            cols: a.cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Sparse product A * B with a dense accumulator per row.
    pub fn matmul(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.cols, b.rows, "shape mismatch in matmul");
        let mut row_offsets = vec![0usize; self.rows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut acc = vec![0.0f64; b.cols];
        let mut seen = vec![false; b.cols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.rows {
            for (k, v) in self.row(r) {
                for (c, w) in b.row(k) {
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    acc[c] += v * w;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                col_indices.push(c);
                values.push(acc[c]);
                acc[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
            row_offsets[r + 1] = col_indices.len();
        }
        CsrMatrix {
            rows: self.rows,
            cols: b.cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Max |A - A^T| entry, or None for non-square matrices.
    pub fn asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            let mut ia = self.row_offsets[r];
            let mut ib = t.row_offsets[r];
            let ea = self.row_offsets[r + 1];
            let eb = t.row_offsets[r + 1];
            while ia < ea || ib < eb {
                let ca = if ia < ea { self.col_indices[ia] } else { usize::MAX };
                let cb = if ib < eb { t.col_indices[ib] } else { usize::MAX };
                if ca < cb {
                    worst = worst.max(self.values[ia].abs());
                    ia += 1;
                } else if cb < ca {
                    worst = worst.max(t.values[ib].abs());
                    ib += 1;
                } else {
                    worst = worst.max((self.values[ia] - t.values[ib]).abs());
                    ia += 1;
                    ib += 1;
                }
            }
        }
        Some(worst)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry().map(|a| a <= tol).unwrap_or(false)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// Semi-bandwidth: max |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for r in 0..self.rows {
            for (c, _) in self.row(r) {
                bw = bw.max(r.abs_diff(c));
            }
        }
        bw
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[r][c] = v;
            }
        }
        d
    }

    /// Coordinate-format text dump: one `row col value` line per entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("% rows {} cols {} nnz {}\n", self.rows, self.cols, self.nnz()));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.push_str(&format!("{} {} {:.17e}\n", r, c, v));
            }
        }
        out
    }

    /// 2x2 block matrix [[a00, a01], [a10, a11]] with optional scaled blocks.
    #[allow(clippy::too_many_arguments)]
    pub fn block_2x2(
        a00: Option<(f64, &CsrMatrix)>,
        a01: Option<(f64, &CsrMatrix)>,
        a10: Option<(f64, &CsrMatrix)>,
        a11: Option<(f64, &CsrMatrix)>,
        row_split: usize,
        col_split: usize,
        rows: usize,
        cols: usize,
    ) -> CsrMatrix {
        let mut builder = CooBuilder::new(rows, cols);
        let mut add = |block: Option<(f64, &CsrMatrix)>, roff: usize, coff: usize| {
            if let Some((alpha, m)) = block {
                for r in 0..m.rows {
                    for (c, v) in m.row(r) {
                        let scaled = alpha * v;
                        if scaled != 0.0 {
                            builder.push(roff + r, coff + c, scaled);
                        }
                    }
                }
            }
        };
        add(a00, 0, 0);
        add(a01, 0, col_split);
        add(a10, row_split, 0);
        add(a11, row_split, col_split);
        builder.finalize()
    }
}

/// Validate the structural invariants of an assembled matrix.
pub fn validate_csr(m: &CsrMatrix) -> Result<()> {
    if m.row_offsets.len() != m.rows + 1 {
        return Err(Error::invalid_argument("bad row offsets"));
    }
    for r in 0..m.rows {
        let lo = m.row_offsets[r];
        let hi = m.row_offsets[r + 1];
        if hi < lo || hi > m.col_indices.len() {
            return Err(Error::invalid_argument("row offsets not monotone"));
        }
        for k in lo..hi {
            if m.col_indices[k] >= m.cols {
                return Err(Error::invalid_argument("column index out of range"));
            }
            if k > lo && m.col_indices[k] <= m.col_indices[k - 1] {
                return Err(Error::invalid_argument(
                    "column indices not strictly increasing within a row",
                ));
            }
        }
    }
    Ok(())
}
