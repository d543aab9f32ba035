//! Two-time functions `D δ(t'-t) + f(t', t)` and the `*`-product
//! `(f * g)(t', t) = ∫_t^{t'} f(t', τ) g(τ, t) dτ`.
//!
//! Smooth parts are stored on the lower triangle `t_j <= t_i` of the grid,
//! row-major in `t' = t_i`.  A function depending on `t'` only (a Hamiltonian
//! entry lifted to two times) keeps a compact one-time representation so that
//! products with it cost O(n^2) instead of O(n^3).

use std::sync::Arc;

use rayon::prelude::*;

use crate::block::{axpy, gemm_acc, max_abs, Block, ONE, ZERO};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::C64;

#[derive(Debug, Clone)]
pub(crate) enum Smooth {
    Zero,
    /// `f(t_i, t_j) = a(t_i)`, one block per node.
    Lifted(Arc<Vec<C64>>),
    /// Full lower triangle, one block per pair `(i, j <= i)`.
    Dense(Arc<Vec<C64>>),
}

#[derive(Debug, Clone)]
pub struct TwoTimeFunction {
    grid: TimeGrid,
    rows: usize,
    cols: usize,
    delta: Option<Block>,
    smooth: Smooth,
}

#[inline]
pub(crate) fn tri(i: usize) -> usize {
    i * (i + 1) / 2
}

fn check_finite(v: &[C64], what: &str) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl TwoTimeFunction {
    pub fn zero(grid: TimeGrid, rows: usize, cols: usize) -> Self {
        Self {
            grid,
            rows,
            cols,
            delta: None,
            smooth: Smooth::Zero,
        }
    }

    /// The star identity `1_*` of dimension `m`.
    pub fn identity(grid: TimeGrid, m: usize) -> Self {
        Self::delta(grid, Block::identity(m))
    }

    pub fn delta(grid: TimeGrid, d: Block) -> Self {
        let (rows, cols) = (d.rows, d.cols);
        Self {
            grid,
            rows,
            cols,
            delta: if d.is_zero() { None } else { Some(d) },
            smooth: Smooth::Zero,
        }
    }

    /// Build from a full triangle of blocks, `data[(tri(i) + j) * rows * cols ..]`.
    pub fn from_dense(
        grid: TimeGrid,
        rows: usize,
        cols: usize,
        delta: Option<Block>,
        data: Vec<C64>,
    ) -> Result<Self> {
        if data.len() != tri(grid.len()) * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "dense storage holds {} values, expected {}",
                data.len(),
                tri(grid.len()) * rows * cols
            )));
        }
        if let Some(d) = &delta {
            if d.rows != rows || d.cols != cols {
                return Err(Error::DimensionMismatch("delta block shape".into()));
            }
        }
        check_finite(&data, "dense smooth part")?;
        Ok(Self {
            grid,
            rows,
            cols,
            delta: delta.filter(|d| !d.is_zero()),
            smooth: Smooth::Dense(Arc::new(data)),
        })
    }

    /// Build from one block per node, lifted as `f(t', t) = a(t')`.
    pub fn from_one_time(grid: TimeGrid, rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "one-time storage holds {} values, expected {}",
                data.len(),
                grid.len() * rows * cols
            )));
        }
        check_finite(&data, "lifted samples")?;
        let smooth = if data.iter().all(|z| *z == ZERO) {
            Smooth::Zero
        } else {
            Smooth::Lifted(Arc::new(data))
        };
        Ok(Self {
            grid,
            rows,
            cols,
            delta: None,
            smooth,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_lifted(&self) -> bool {
        matches!(self.smooth, Smooth::Lifted(_))
    }

    pub fn has_smooth_part(&self) -> bool {
        !matches!(self.smooth, Smooth::Zero)
    }

    pub fn delta_part(&self) -> Block {
        self.delta
            .clone()
            .unwrap_or_else(|| Block::zeros(self.rows, self.cols))
    }

    pub fn has_delta(&self) -> bool {
        self.delta.is_some()
    }

    fn bs(&self) -> usize {
        self.rows * self.cols
    }

    /// Smooth block at `(t_i, t_j)`, `None` where it vanishes identically.
    pub(crate) fn smooth_slice(&self, i: usize, j: usize) -> Option<&[C64]> {
        debug_assert!(j <= i);
        let bs = self.bs();
        match &self.smooth {
            Smooth::Zero => None,
            Smooth::Lifted(a) => Some(&a[i * bs..(i + 1) * bs]),
            Smooth::Dense(d) => {
                let o = (tri(i) + j) * bs;
                Some(&d[o..o + bs])
            }
        }
    }

    pub(crate) fn smooth_storage(&self) -> &Smooth {
        &self.smooth
    }

    /// Smooth part at grid pair `(i, j)`, `j <= i`.
    pub fn at(&self, i: usize, j: usize) -> Block {
        assert!(j <= i && i < self.grid.len(), "pair ({i}, {j}) outside the triangle");
        match self.smooth_slice(i, j) {
            Some(s) => Block {
                rows: self.rows,
                cols: self.cols,
                data: s.to_vec(),
            },
            None => Block::zeros(self.rows, self.cols),
        }
    }

    /// Scalar smooth value at `(i, j)` for 1x1 functions.
    pub fn scalar_at(&self, i: usize, j: usize) -> C64 {
        assert_eq!(self.bs(), 1, "scalar_at on a matrix-valued function");
        self.smooth_slice(i, j).map_or(ZERO, |s| s[0])
    }

    /// Materialized triangle.
    pub fn dense_data(&self) -> Vec<C64> {
        let n = self.grid.len();
        let bs = self.bs();
        match &self.smooth {
            Smooth::Zero => vec![ZERO; tri(n) * bs],
            Smooth::Dense(d) => d.as_ref().clone(),
            Smooth::Lifted(a) => {
                let mut out = Vec::with_capacity(tri(n) * bs);
                for i in 0..n {
                    for _ in 0..=i {
                        out.extend_from_slice(&a[i * bs..(i + 1) * bs]);
                    }
                }
                out
            }
        }
    }

    /// Max-norm of the smooth part over the triangle.
    pub fn max_abs(&self) -> f64 {
        match &self.smooth {
            Smooth::Zero => 0.0,
            Smooth::Lifted(a) | Smooth::Dense(a) => max_abs(a),
        }
    }

    /// Max-norm distance between two functions (delta and smooth parts).
    pub fn max_diff(&self, other: &TwoTimeFunction) -> f64 {
        let d = self.sub(other).expect("max_diff requires compatible operands");
        d.max_abs().max(d.delta_part().max_abs())
    }

    fn check_compatible(&self, other: &TwoTimeFunction) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn scale(&self, s: C64) -> TwoTimeFunction {
        let smooth = match &self.smooth {
            Smooth::Zero => Smooth::Zero,
            Smooth::Lifted(a) => Smooth::Lifted(Arc::new(a.iter().map(|z| z * s).collect())),
            Smooth::Dense(a) => Smooth::Dense(Arc::new(a.par_iter().map(|z| z * s).collect())),
        };
        TwoTimeFunction {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            delta: self.delta.as_ref().map(|d| d.scale(s)).filter(|d| !d.is_zero()),
            smooth,
        }
    }

    pub fn add(&self, other: &TwoTimeFunction) -> Result<TwoTimeFunction> {
        self.check_compatible(other)?;
        let delta = match (&self.delta, &other.delta) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => Some(a.add(b)).filter(|d| !d.is_zero()),
        };
        let smooth = match (&self.smooth, &other.smooth) {
            (Smooth::Zero, s) | (s, Smooth::Zero) => s.clone(),
            (Smooth::Lifted(a), Smooth::Lifted(b)) => {
                Smooth::Lifted(Arc::new(a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()))
            }
            _ => {
                let a = self.dense_data();
                let b = other.dense_data();
                Smooth::Dense(Arc::new(a.par_iter().zip(b.par_iter()).map(|(x, y)| x + y).collect()))
            }
        };
        Ok(TwoTimeFunction {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            delta,
            smooth,
        })
    }

    pub fn sub(&self, other: &TwoTimeFunction) -> Result<TwoTimeFunction> {
        self.add(&other.scale(-ONE))
    }

    /// Same function with its delta part dropped.
    pub fn smooth_only(&self) -> TwoTimeFunction {
        TwoTimeFunction {
            delta: None,
            ..self.clone()
        }
    }

    /// Multiply every value (delta and smooth) on the left by a constant block.
    pub fn left_mul_const(&self, m: &Block) -> Result<TwoTimeFunction> {
        if m.cols != self.rows {
            return Err(Error::DimensionMismatch("constant left factor".into()));
        }
        Ok(self.map_blocks(m.rows, self.cols, |src, dst| {
            gemm_acc(dst, &m.data, src, m.rows, m.cols, self.cols, ONE)
        }, self.delta.as_ref().map(|d| m.mul(d))))
    }

    /// Multiply every value on the right by a constant block.
    pub fn right_mul_const(&self, m: &Block) -> Result<TwoTimeFunction> {
        if m.rows != self.cols {
            return Err(Error::DimensionMismatch("constant right factor".into()));
        }
        Ok(self.map_blocks(self.rows, m.cols, |src, dst| {
            gemm_acc(dst, src, &m.data, self.rows, self.cols, m.cols, ONE)
        }, self.delta.as_ref().map(|d| d.mul(m))))
    }

    fn map_blocks<F>(&self, rows: usize, cols: usize, f: F, delta: Option<Block>) -> TwoTimeFunction
    where
        F: Fn(&[C64], &mut [C64]) + Sync,
    {
        let bs_in = self.bs();
        let bs_out = rows * cols;
        let map = |a: &Vec<C64>| -> Vec<C64> {
            let mut out = vec![ZERO; a.len() / bs_in * bs_out];
            out.par_chunks_mut(bs_out)
                .zip(a.par_chunks(bs_in))
                .for_each(|(o, s)| f(s, o));
            out
        };
        let smooth = match &self.smooth {
            Smooth::Zero => Smooth::Zero,
            Smooth::Lifted(a) => Smooth::Lifted(Arc::new(map(a))),
            Smooth::Dense(a) => Smooth::Dense(Arc::new(map(a))),
        };
        TwoTimeFunction {
            grid: self.grid,
            rows,
            cols,
            delta: delta.filter(|d| !d.is_zero()),
            smooth,
        }
    }

    /// The function restricted to its first column `t = t_min`.
    pub fn column0(&self) -> Column {
        let n = self.grid.len();
        let bs = self.bs();
        let mut values = vec![ZERO; n * bs];
        for i in 0..n {
            if let Some(s) = self.smooth_slice(i, 0) {
                values[i * bs..(i + 1) * bs].copy_from_slice(s);
            }
        }
        Column {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            delta: self.delta.clone(),
            values,
        }
    }
}

/// Lift a sampled two-time callable onto the grid.  The callable writes the
/// `rows x cols` block for `(t', t)` into the provided slice.
pub fn lift<F>(grid: TimeGrid, rows: usize, cols: usize, f: F) -> Result<TwoTimeFunction>
where
    F: Fn(f64, f64, &mut [C64]) + Sync,
{
    let n = grid.len();
    let bs = rows * cols;
    let times = grid.times();
    let mut data = vec![ZERO; tri(n) * bs];
    data.par_chunks_mut(bs).enumerate().for_each(|(idx, out)| {
        let (i, j) = unrank(idx);
        f(times[i], times[j], out);
    });
    TwoTimeFunction::from_dense(grid, rows, cols, None, data)
}

/// Lift a one-time callable `a(t')` (valid for all `t <= t'`).
pub fn lift_one_time<F>(grid: TimeGrid, rows: usize, cols: usize, f: F) -> Result<TwoTimeFunction>
where
    F: Fn(f64, &mut [C64]),
{
    let bs = rows * cols;
    let mut data = vec![ZERO; grid.len() * bs];
    for (i, t) in grid.times().into_iter().enumerate() {
        f(t, &mut data[i * bs..(i + 1) * bs]);
    }
    TwoTimeFunction::from_one_time(grid, rows, cols, data)
}

/// Scalar convenience wrapper around [`lift`].
pub fn lift_scalar<F>(grid: TimeGrid, f: F) -> Result<TwoTimeFunction>
where
    F: Fn(f64, f64) -> C64 + Sync,
{
    lift(grid, 1, 1, |tp, t, out| out[0] = f(tp, t))
}

/// Scalar convenience wrapper around [`lift_one_time`].
pub fn lift_one_time_scalar<F>(grid: TimeGrid, f: F) -> Result<TwoTimeFunction>
where
    F: Fn(f64) -> C64,
{
    lift_one_time(grid, 1, 1, |t, out| out[0] = f(t))
}

/// Inverse of `(i, j) -> tri(i) + j`.
#[inline]
pub(crate) fn unrank(idx: usize) -> (usize, usize) {
    let mut i = (((8 * idx + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    while tri(i + 1) <= idx {
        i += 1;
    }
    while tri(i) > idx {
        i -= 1;
    }
    (i, idx - tri(i))
}

/// `f * g`.  Delta parts are carried exactly; the integral over `[t, t']`
/// uses the grid's quadrature rule.
pub fn star_product(f: &TwoTimeFunction, g: &TwoTimeFunction) -> Result<TwoTimeFunction> {
    f.grid.check_same(&g.grid)?;
    if f.cols != g.rows {
        return Err(Error::DimensionMismatch(format!(
            "star product of {}x{} and {}x{}",
            f.rows, f.cols, g.rows, g.cols
        )));
    }
    let grid = f.grid;
    let (r, k, c) = (f.rows, f.cols, g.cols);
    let delta = match (&f.delta, &g.delta) {
        (Some(a), Some(b)) => Some(a.mul(b)),
        _ => None,
    };
    let mut out = TwoTimeFunction {
        grid,
        rows: r,
        cols: c,
        delta: delta.filter(|d| !d.is_zero()),
        smooth: Smooth::Zero,
    };
    if let Some(df) = &f.delta {
        out = out.add(&g.smooth_only().left_mul_const(df)?)?;
    }
    if let Some(dg) = &g.delta {
        out = out.add(&f.smooth_only().right_mul_const(dg)?)?;
    }
    let integral = match (&f.smooth, &g.smooth) {
        (Smooth::Zero, _) | (_, Smooth::Zero) => None,
        (Smooth::Lifted(a), Smooth::Lifted(b)) => Some(lifted_lifted(&grid, a, b, r, k, c)),
        (Smooth::Lifted(a), Smooth::Dense(gd)) => Some(lifted_dense(&grid, a, gd, r, k, c)),
        (Smooth::Dense(fd), Smooth::Lifted(b)) => Some(dense_lifted(&grid, fd, b, r, k, c)),
        (Smooth::Dense(fd), Smooth::Dense(gd)) => Some(dense_dense(&grid, fd, gd, r, k, c)),
    };
    if let Some(data) = integral {
        let t = TwoTimeFunction {
            grid,
            rows: r,
            cols: c,
            delta: None,
            smooth: Smooth::Dense(Arc::new(data)),
        };
        out = out.add(&t)?;
    }
    Ok(out)
}

fn lifted_lifted(grid: &TimeGrid, a: &[C64], b: &[C64], r: usize, k: usize, c: usize) -> Vec<C64> {
    let n = grid.len();
    let h = grid.step();
    let q = grid.quadrature();
    let kc = k * c;
    let mut prefix = vec![ZERO; (n + 1) * kc];
    for i in 0..n {
        for l in 0..kc {
            prefix[(i + 1) * kc + l] = prefix[i * kc + l] + b[i * kc + l];
        }
    }
    let mut out = vec![ZERO; tri(n) * r * c];
    out.par_chunks_mut(r * c).enumerate().for_each(|(idx, o)| {
        let (i, j) = unrank(idx);
        if i == j {
            return;
        }
        let mut s: Vec<C64> = (0..kc)
            .map(|l| prefix[(i + 1) * kc + l] - prefix[j * kc + l])
            .collect();
        for (off, cw) in q.rule(i - j).corrections(i - j) {
            axpy(&mut s, &b[(j + off) * kc..(j + off + 1) * kc], C64::new(cw, 0.0));
        }
        gemm_acc(o, &a[i * r * k..(i + 1) * r * k], &s, r, k, c, C64::new(h, 0.0));
    });
    out
}

fn lifted_dense(grid: &TimeGrid, a: &[C64], g: &[C64], r: usize, k: usize, c: usize) -> Vec<C64> {
    // (a * g)(i, j) = a_i ∫_{t_j}^{t_i} g(τ, t_j) dτ, running column sums
    let n = grid.len();
    let h = grid.step();
    let q = grid.quadrature();
    let kc = k * c;
    let mut sums = vec![ZERO; n * kc];
    let mut out = vec![ZERO; tri(n) * r * c];
    let mut s = vec![ZERO; kc];
    for i in 0..n {
        let grow = &g[tri(i) * kc..tri(i + 1) * kc];
        axpy(&mut sums[..(i + 1) * kc], grow, ONE);
        let orow = &mut out[tri(i) * r * c..tri(i + 1) * r * c];
        let ai = &a[i * r * k..(i + 1) * r * k];
        for j in 0..i {
            s.copy_from_slice(&sums[j * kc..(j + 1) * kc]);
            for (off, cw) in q.rule(i - j).corrections(i - j) {
                let kk = j + off;
                let o = (tri(kk) + j) * kc;
                axpy(&mut s, &g[o..o + kc], C64::new(cw, 0.0));
            }
            gemm_acc(&mut orow[j * r * c..(j + 1) * r * c], ai, &s, r, k, c, C64::new(h, 0.0));
        }
    }
    out
}

fn dense_lifted(grid: &TimeGrid, f: &[C64], b: &[C64], r: usize, k: usize, c: usize) -> Vec<C64> {
    // (f * b)(i, j) = ∫_{t_j}^{t_i} f(t_i, τ) b(τ) dτ, suffix sums along the row
    let n = grid.len();
    let h = grid.step();
    let q = grid.quadrature();
    let rk = r * k;
    let rc = r * c;
    let mut out = vec![ZERO; tri(n) * rc];
    let rows: Vec<&mut [C64]> = split_rows(&mut out, n, rc);
    rows.into_par_iter().enumerate().for_each(|(i, orow)| {
        let frow = &f[tri(i) * rk..tri(i + 1) * rk];
        let mut v = vec![ZERO; (i + 1) * rc];
        for kk in 0..=i {
            gemm_acc(
                &mut v[kk * rc..(kk + 1) * rc],
                &frow[kk * rk..(kk + 1) * rk],
                &b[kk * k * c..(kk + 1) * k * c],
                r,
                k,
                c,
                ONE,
            );
        }
        let mut suffix = vec![ZERO; rc];
        for j in (0..=i).rev() {
            axpy(&mut suffix, &v[j * rc..(j + 1) * rc], ONE);
            if j == i {
                continue;
            }
            let o = &mut orow[j * rc..(j + 1) * rc];
            o.copy_from_slice(&suffix);
            for (off, cw) in q.rule(i - j).corrections(i - j) {
                let kk = j + off;
                axpy(o, &v[kk * rc..(kk + 1) * rc], C64::new(cw, 0.0));
            }
            for z in o.iter_mut() {
                *z *= h;
            }
        }
    });
    out
}

fn dense_dense(grid: &TimeGrid, f: &[C64], g: &[C64], r: usize, k: usize, c: usize) -> Vec<C64> {
    let n = grid.len();
    let h = grid.step();
    let q = grid.quadrature();
    let (rk, kc, rc) = (r * k, k * c, r * c);
    let mut out = vec![ZERO; tri(n) * rc];
    let rows: Vec<&mut [C64]> = split_rows(&mut out, n, rc);
    rows.into_par_iter().enumerate().for_each(|(i, orow)| {
        let frow = &f[tri(i) * rk..tri(i + 1) * rk];
        if rc == 1 && k == 1 {
            for kk in 0..=i {
                let fik = frow[kk];
                let grow = &g[tri(kk)..tri(kk + 1)];
                for (o, gv) in orow[..=kk].iter_mut().zip(grow) {
                    *o += fik * gv;
                }
            }
        } else {
            for kk in 0..=i {
                let fik = &frow[kk * rk..(kk + 1) * rk];
                let grow = &g[tri(kk) * kc..tri(kk + 1) * kc];
                for j in 0..=kk {
                    gemm_acc(
                        &mut orow[j * rc..(j + 1) * rc],
                        fik,
                        &grow[j * kc..(j + 1) * kc],
                        r,
                        k,
                        c,
                        ONE,
                    );
                }
            }
        }
        for j in 0..=i {
            let o = &mut orow[j * rc..(j + 1) * rc];
            if j == i {
                o.fill(ZERO);
                continue;
            }
            for (off, cw) in q.rule(i - j).corrections(i - j) {
                let kk = j + off;
                let gk = (tri(kk) + j) * kc;
                gemm_acc(
                    o,
                    &frow[kk * rk..(kk + 1) * rk],
                    &g[gk..gk + kc],
                    r,
                    k,
                    c,
                    C64::new(cw, 0.0),
                );
            }
            for z in o.iter_mut() {
                *z *= h;
            }
        }
    });
    out
}

/// Split triangle storage into per-row mutable slices.
pub(crate) fn split_rows(data: &mut [C64], n: usize, bs: usize) -> Vec<&mut [C64]> {
    let mut rows = Vec::with_capacity(n);
    let mut rest = data;
    for i in 0..n {
        let (head, tail) = rest.split_at_mut((i + 1) * bs);
        rows.push(head);
        rest = tail;
    }
    rows
}

/// `f^{*n}`, with `f^{*0} = 1_*`.
pub fn star_power(f: &TwoTimeFunction, n: usize) -> Result<TwoTimeFunction> {
    if !f.is_square() {
        return Err(Error::DimensionMismatch("star power of a non-square function".into()));
    }
    let mut acc = TwoTimeFunction::identity(f.grid, f.rows);
    for _ in 0..n {
        acc = star_product(f, &acc)?;
    }
    Ok(acc)
}

/// A two-time function at fixed `t = t_min`: `D δ(t' - t_min) + c(t')`.
/// With `delta == None` it doubles as a one-time history such as `U(t', t_min)`.
#[derive(Debug, Clone)]
pub struct Column {
    pub grid: TimeGrid,
    pub rows: usize,
    pub cols: usize,
    pub delta: Option<Block>,
    pub values: Vec<C64>,
}

impl Column {
    pub fn zeros(grid: TimeGrid, rows: usize, cols: usize) -> Self {
        Self {
            grid,
            rows,
            cols,
            delta: None,
            values: vec![ZERO; grid.len() * rows * cols],
        }
    }

    pub fn value(&self, i: usize) -> Block {
        let bs = self.rows * self.cols;
        Block {
            rows: self.rows,
            cols: self.cols,
            data: self.values[i * bs..(i + 1) * bs].to_vec(),
        }
    }

    pub fn entry(&self, i: usize, r: usize, c: usize) -> C64 {
        self.values[i * self.rows * self.cols + r * self.cols + c]
    }

    pub fn scalar(&self, i: usize) -> C64 {
        self.values[i * self.rows * self.cols]
    }

    pub fn scalars(&self) -> Vec<C64> {
        (0..self.grid.len()).map(|i| self.scalar(i)).collect()
    }

    /// `∫_{t_min}^{t'} (D δ + c)(τ) dτ`: the delta contributes `D` in full.
    pub fn integrate(&self) -> Column {
        let bs = self.rows * self.cols;
        let n = self.grid.len();
        let mut values = vec![ZERO; n * bs];
        for l in 0..bs {
            let comp: Vec<C64> = (0..n).map(|i| self.values[i * bs + l]).collect();
            let cum = self.grid.cumulative_c(&comp);
            let d = self.delta.as_ref().map_or(ZERO, |d| d.data[l]);
            for i in 0..n {
                values[i * bs + l] = cum[i] + d;
            }
        }
        Column {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            delta: None,
            values,
        }
    }

    pub fn add(&self, other: &Column) -> Result<Column> {
        self.grid.check_same(&other.grid)?;
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch("column shapes".into()));
        }
        let delta = match (&self.delta, &other.delta) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => Some(a.add(b)),
        };
        Ok(Column {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            delta,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

/// `(f * c)(t')` for a column `c` based at `t_min`.
pub fn star_column(f: &TwoTimeFunction, c: &Column) -> Result<Column> {
    f.grid.check_same(&c.grid)?;
    if f.cols != c.rows {
        return Err(Error::DimensionMismatch("star product with column".into()));
    }
    let grid = f.grid;
    let n = grid.len();
    let (r, k, cc) = (f.rows, f.cols, c.cols);
    let (rk, kc, rc) = (r * k, k * cc, r * cc);
    let mut values = vec![ZERO; n * rc];
    if let Some(df) = &f.delta {
        for i in 0..n {
            gemm_acc(&mut values[i * rc..(i + 1) * rc], &df.data, &c.values[i * kc..(i + 1) * kc], r, k, cc, ONE);
        }
    }
    if let Some(dc) = &c.delta {
        for i in 0..n {
            if let Some(fi) = f.smooth_slice(i, 0) {
                gemm_acc(&mut values[i * rc..(i + 1) * rc], fi, &dc.data, r, k, cc, ONE);
            }
        }
    }
    let h = C64::new(grid.step(), 0.0);
    let q = grid.quadrature();
    match &f.smooth {
        Smooth::Zero => {}
        Smooth::Lifted(a) => {
            let integ = Column {
                delta: None,
                ..c.clone()
            }
            .integrate();
            for i in 1..n {
                gemm_acc(
                    &mut values[i * rc..(i + 1) * rc],
                    &a[i * rk..(i + 1) * rk],
                    &integ.values[i * kc..(i + 1) * kc],
                    r,
                    k,
                    cc,
                    ONE,
                );
            }
        }
        Smooth::Dense(fd) => {
            values
                .par_chunks_mut(rc)
                .enumerate()
                .skip(1)
                .for_each(|(i, o)| {
                    let frow = &fd[tri(i) * rk..tri(i + 1) * rk];
                    let mut acc = vec![ZERO; rc];
                    for kk in 0..=i {
                        let w = q.weight(i, kk);
                        gemm_acc(
                            &mut acc,
                            &frow[kk * rk..(kk + 1) * rk],
                            &c.values[kk * kc..(kk + 1) * kc],
                            r,
                            k,
                            cc,
                            C64::new(w, 0.0),
                        );
                    }
                    axpy(o, &acc, h);
                });
        }
    }
    let delta = match (&f.delta, &c.delta) {
        (Some(a), Some(b)) => Some(a.mul(b)),
        _ => None,
    };
    Ok(Column {
        grid,
        rows: r,
        cols: cc,
        delta,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 2.0, n).unwrap()
    }

    #[test]
    fn unrank_inverts_tri() {
        for i in 0..200 {
            for j in 0..=i {
                assert_eq!(unrank(tri(i) + j), (i, j));
            }
        }
    }

    #[test]
    fn identity_is_exact() {
        let g = grid(33);
        let f = lift_scalar(g, |tp, t| C64::new((tp - 2.0 * t).sin(), tp * t)).unwrap();
        let id = TwoTimeFunction::identity(g, 1);
        let l = star_product(&id, &f).unwrap();
        let r = star_product(&f, &id).unwrap();
        assert_eq!(l.dense_data(), f.dense_data());
        assert_eq!(r.dense_data(), f.dense_data());
        assert!(!l.has_delta());
    }

    #[test]
    fn unit_functions_give_elapsed_time() {
        let g = grid(41);
        let one = lift_scalar(g, |_, _| ONE).unwrap();
        let p = star_product(&one, &one).unwrap();
        let t = g.times();
        for i in 0..g.len() {
            for j in 0..=i {
                assert!((p.scalar_at(i, j) - C64::new(t[i] - t[j], 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn lifted_paths_agree_with_dense_path() {
        let g = grid(29);
        let a = lift_one_time(g, 2, 2, |t, o| {
            o[0] = C64::new(t.cos(), 0.1);
            o[1] = C64::new(0.0, t);
            o[2] = C64::new(1.0, -t * t);
            o[3] = C64::new(t.sin(), 0.0);
        })
        .unwrap();
        let f = lift(g, 2, 2, |tp, t, o| {
            o[0] = C64::new(tp - t, 1.0);
            o[1] = C64::new((tp * t).cos(), 0.0);
            o[2] = C64::new(0.0, tp + 2.0 * t);
            o[3] = C64::new(1.0, t);
        })
        .unwrap();
        let ad = TwoTimeFunction::from_dense(g, 2, 2, None, a.dense_data()).unwrap();
        for (x, y) in [(&a, &f), (&f, &a), (&a, &a)] {
            let fast = star_product(x, y).unwrap();
            let xd = if x.is_lifted() { &ad } else { x };
            let yd = if y.is_lifted() { &ad } else { y };
            let slow = star_product(xd, yd).unwrap();
            assert!(fast.max_diff(&slow) < 1e-12);
        }
    }

    #[test]
    fn column_product_matches_full_product() {
        let g = grid(31);
        let f = lift_scalar(g, |tp, t| C64::new((tp + t).cos(), tp - t)).unwrap();
        let h = lift_scalar(g, |tp, t| C64::new(tp * t, 1.0)).unwrap();
        let hd = h.add(&TwoTimeFunction::identity(g, 1)).unwrap();
        let full = star_product(&f, &hd).unwrap().column0();
        let col = star_column(&f, &hd.column0()).unwrap();
        for i in 0..g.len() {
            assert!((full.scalar(i) - col.scalar(i)).norm() < 1e-12);
        }
    }

    #[test]
    fn lift_rejects_non_finite_samples() {
        let g = grid(5);
        assert!(lift_scalar(g, |tp, _| C64::new(1.0 / (tp - 1.0), 0.0)).is_err());
    }
}
