//! Small dense complex blocks stored row-major in flat slices.

use crate::error::{Error, Result};
use crate::C64;
use nalgebra::DMatrix;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl Block {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(m: usize) -> Self {
        let mut b = Self::zeros(m, m);
        for i in 0..m {
            b.data[i * m + i] = ONE;
        }
        b
    }

    pub fn scalar(z: C64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![z],
        }
    }

    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| *z == ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn mul(&self, other: &Block) -> Block {
        assert_eq!(self.cols, other.rows);
        let mut out = Block::zeros(self.rows, other.cols);
        gemm_acc(
            &mut out.data,
            &self.data,
            &other.data,
            self.rows,
            self.cols,
            other.cols,
            ONE,
        );
        out
    }

    pub fn scale(&self, s: C64) -> Block {
        Block {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Block) -> Block {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Block {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Block) -> Block {
        self.add(&other.scale(-ONE))
    }

    pub fn adjoint(&self) -> Block {
        let mut out = Block::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        out
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Block {
        let mut b = Block::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                b.data[i * m.ncols() + j] = m[(i, j)];
            }
        }
        b
    }

    /// Matrix exponential (scaling and squaring, via nalgebra).
    pub fn exp(&self) -> Block {
        assert_eq!(self.rows, self.cols);
        if self.rows == 1 {
            return Block::scalar(self.data[0].exp());
        }
        Block::from_nalgebra(&self.to_nalgebra().exp())
    }

    pub fn commutator_norm(&self, other: &Block) -> f64 {
        self.mul(other).sub(&other.mul(self)).max_abs()
    }
}

pub fn max_abs(v: &[C64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// `out += s * a * b` with `a` r x k and `b` k x c, all row-major.
#[inline]
pub fn gemm_acc(out: &mut [C64], a: &[C64], b: &[C64], r: usize, k: usize, c: usize, s: C64) {
    if r == 1 && k == 1 && c == 1 {
        out[0] += s * a[0] * b[0];
        return;
    }
    for i in 0..r {
        for l in 0..k {
            let ail = s * a[i * k + l];
            if ail == ZERO {
                continue;
            }
            let brow = &b[l * c..(l + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += ail * bv;
            }
        }
    }
}

/// `out += s * x`.
#[inline]
pub fn axpy(out: &mut [C64], x: &[C64], s: C64) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += s * v;
    }
}

/// Solve `a x = b` in place for square `a` (m x m) and `b` (m x c) by
/// Gaussian elimination with partial pivoting.  Returns the absolute value
/// of the determinant so callers can flag near-singular steps.
pub fn solve_in_place(a: &mut [C64], b: &mut [C64], m: usize, c: usize) -> f64 {
    if m == 1 {
        let d = a[0];
        for v in b.iter_mut() {
            *v /= d;
        }
        return d.norm();
    }
    let mut det = 1.0;
    for col in 0..m {
        let mut piv = col;
        let mut best = a[col * m + col].norm();
        for r in col + 1..m {
            let v = a[r * m + col].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        det *= best;
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..m {
                a.swap(col * m + j, piv * m + j);
            }
            for j in 0..c {
                b.swap(col * c + j, piv * c + j);
            }
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f == ZERO {
                continue;
            }
            for j in col..m {
                let v = a[col * m + j];
                a[r * m + j] -= f * v;
            }
            for j in 0..c {
                let v = b[col * c + j];
                b[r * c + j] -= f * v;
            }
        }
    }
    for col in (0..m).rev() {
        let d = a[col * m + col];
        for j in 0..c {
            let mut v = b[col * c + j];
            for l in col + 1..m {
                v -= a[col * m + l] * b[l * c + j];
            }
            b[col * c + j] = v / d;
        }
    }
    det
}

pub fn invert(a: &Block) -> Result<Block> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch("inverse of non-square block".into()));
    }
    let mut m = a.data.clone();
    let mut inv = Block::identity(a.rows);
    let det = solve_in_place(&mut m, &mut inv.data, a.rows, a.rows);
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularStep {
            time: f64::NAN,
            det,
        });
    }
    Ok(inv)
}
