//! Resolvents `G = (1_* - K)^{*-1}`, i.e. solutions of `G = 1_* + K * G`.

use rayon::prelude::*;

use crate::block::{axpy, gemm_acc, solve_in_place, Block, ONE, ZERO};
use crate::error::{Error, Result};
use crate::star::{star_column, star_product, tri, Column, Smooth, TwoTimeFunction};
use crate::C64;

/// How a resolvent is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ResolventMethod {
    #[default]
    Direct,
    /// Truncated Neumann series through `K^{*n}`.
    Neumann(usize),
    /// Neumann series stopped once the newest term falls below `tol`.
    NeumannAuto { tol: f64, max_order: usize },
}

/// Relative size below which `det(Id - h w K(t,t))` is treated as singular.
const SINGULAR_DET: f64 = 1e-12;

fn check_kernel(k: &TwoTimeFunction) -> Result<()> {
    if k.has_delta() {
        return Err(Error::DeltaInKernel);
    }
    if !k.is_square() {
        return Err(Error::DimensionMismatch("resolvent of a non-square kernel".into()));
    }
    Ok(())
}

/// Solve the column of `g(., t_j)` by forward substitution in `t_i`.
fn solve_one_column(k: &TwoTimeFunction, j: usize) -> Result<Vec<C64>> {
    let grid = k.grid();
    let n = grid.len();
    let m = k.rows();
    let bs = m * m;
    let h = grid.step();
    let q = grid.quadrature();
    let len = n - j;
    let mut g = vec![ZERO; len * bs];
    let kij = |i: usize, kk: usize| k.smooth_slice(i, kk);
    if let Some(s) = kij(j, j) {
        g[..bs].copy_from_slice(s);
    }
    // running sum of g for the lifted fast path
    let lifted = matches!(k.smooth_storage(), Smooth::Lifted(_));
    let mut gsum = vec![ZERO; bs];
    if lifted {
        axpy(&mut gsum, &g[..bs], ONE);
    }
    let mut rhs = vec![ZERO; bs];
    let mut acc = vec![ZERO; bs];
    let mut lhs = vec![ZERO; bs];
    for i in j + 1..n {
        let p = i - j;
        let rule = q.rule(p);
        rhs.fill(ZERO);
        if let Some(s) = kij(i, j) {
            rhs.copy_from_slice(s);
        }
        let wlast = q.weight(p, p);
        if lifted {
            // Σ_k w_k K(t_i) g_k = K(t_i) (Σ_k g_k + corrections), excluding k = i
            acc.copy_from_slice(&gsum);
            for (off, cw) in rule.corrections(p) {
                if off < p {
                    axpy(&mut acc, &g[off * bs..(off + 1) * bs], C64::new(cw, 0.0));
                }
            }
            if let Some(ki) = kij(i, i) {
                gemm_acc(&mut rhs, ki, &acc, m, m, m, C64::new(h, 0.0));
            }
        } else {
            acc.fill(ZERO);
            for kk in j..i {
                if let Some(s) = kij(i, kk) {
                    let o = kk - j;
                    gemm_acc(&mut acc, s, &g[o * bs..(o + 1) * bs], m, m, m, ONE);
                }
            }
            for (off, cw) in rule.corrections(p) {
                if off < p {
                    if let Some(s) = kij(i, j + off) {
                        gemm_acc(&mut acc, s, &g[off * bs..(off + 1) * bs], m, m, m, C64::new(cw, 0.0));
                    }
                }
            }
            axpy(&mut rhs, &acc, C64::new(h, 0.0));
        }
        // (Id - h w K(t_i, t_i)) g_i = rhs
        lhs.fill(ZERO);
        for d in 0..m {
            lhs[d * m + d] = ONE;
        }
        if let Some(ki) = kij(i, i) {
            axpy(&mut lhs, ki, C64::new(-h * wlast, 0.0));
        }
        let det = solve_in_place(&mut lhs, &mut rhs, m, m);
        if !(det > SINGULAR_DET) {
            return Err(Error::SingularStep {
                time: grid.time(i),
                det,
            });
        }
        g[p * bs..(p + 1) * bs].copy_from_slice(&rhs);
        if lifted {
            axpy(&mut gsum, &rhs, ONE);
        }
    }
    Ok(g)
}

/// Direct solve of `G = 1_* + K * G` on the whole triangle.  Columns are
/// independent and solved in parallel.
pub fn solve_direct(k: &TwoTimeFunction) -> Result<TwoTimeFunction> {
    check_kernel(k)?;
    let grid = *k.grid();
    let n = grid.len();
    let m = k.rows();
    let bs = m * m;
    if !k.has_smooth_part() {
        return Ok(TwoTimeFunction::identity(grid, m));
    }
    let cols: Vec<Vec<C64>> = (0..n)
        .into_par_iter()
        .map(|j| solve_one_column(k, j))
        .collect::<Result<_>>()?;
    let mut data = vec![ZERO; tri(n) * bs];
    for (j, col) in cols.iter().enumerate() {
        for (p, blk) in col.chunks(bs).enumerate() {
            let i = j + p;
            let o = (tri(i) + j) * bs;
            data[o..o + bs].copy_from_slice(blk);
        }
    }
    TwoTimeFunction::from_dense(grid, m, m, Some(Block::identity(m)), data)
}

/// Only the first column `G(t', t_min)`, at O(n^2) cost.
pub fn solve_column(k: &TwoTimeFunction) -> Result<Column> {
    check_kernel(k)?;
    let grid = *k.grid();
    let m = k.rows();
    let values = if k.has_smooth_part() {
        solve_one_column(k, 0)?
    } else {
        vec![ZERO; grid.len() * m * m]
    };
    Ok(Column {
        grid,
        rows: m,
        cols: m,
        delta: Some(Block::identity(m)),
        values,
    })
}

/// Resolvent by the requested method.
pub fn resolvent(k: &TwoTimeFunction, method: ResolventMethod) -> Result<TwoTimeFunction> {
    match method {
        ResolventMethod::Direct => solve_direct(k),
        ResolventMethod::Neumann(n) => Ok(neumann(k, n)?.result()),
        ResolventMethod::NeumannAuto { tol, max_order } => Ok(neumann_auto(k, tol, max_order)?.result()),
    }
}

/// First column of the resolvent by the requested method.
pub fn resolvent_column(k: &TwoTimeFunction, method: ResolventMethod) -> Result<Column> {
    match method {
        ResolventMethod::Direct => solve_column(k),
        ResolventMethod::Neumann(n) => Ok(neumann_column(k, n)?.result()),
        ResolventMethod::NeumannAuto { tol, max_order } => {
            check_kernel(k)?;
            let mut trace = NeumannColumnTrace::start(k);
            while trace.residuals.last().copied().unwrap_or(f64::INFINITY) > tol
                && trace.order() < max_order
            {
                trace.step(k)?;
            }
            Ok(trace.result())
        }
    }
}

/// Partial sums `G^(n) = 1_* + Σ_{k<=n} K^{*k}` and the size of each new term.
#[derive(Debug, Clone)]
pub struct NeumannTrace {
    pub partial_sums: Vec<TwoTimeFunction>,
    pub residuals: Vec<f64>,
}

impl NeumannTrace {
    pub fn result(&self) -> TwoTimeFunction {
        self.partial_sums.last().expect("trace is never empty").clone()
    }

    pub fn order(&self) -> usize {
        self.partial_sums.len() - 1
    }
}

/// Truncated Neumann series; each order costs one new `*`-product.
pub fn neumann(k: &TwoTimeFunction, order: usize) -> Result<NeumannTrace> {
    check_kernel(k)?;
    let grid = *k.grid();
    let m = k.rows();
    let mut g = TwoTimeFunction::identity(grid, m);
    let mut partial_sums = vec![g.clone()];
    let mut residuals = vec![f64::INFINITY];
    let mut power = k.clone();
    for n in 1..=order {
        if n > 1 {
            power = star_product(k, &power)?;
        }
        residuals.push(power.max_abs());
        g = g.add(&power)?;
        partial_sums.push(g.clone());
    }
    Ok(NeumannTrace {
        partial_sums,
        residuals,
    })
}

/// Neumann series stopped when the newest term is below `tol`.
pub fn neumann_auto(k: &TwoTimeFunction, tol: f64, max_order: usize) -> Result<NeumannTrace> {
    check_kernel(k)?;
    let grid = *k.grid();
    let m = k.rows();
    let mut g = TwoTimeFunction::identity(grid, m);
    let mut partial_sums = vec![g.clone()];
    let mut residuals = vec![f64::INFINITY];
    let mut power = k.clone();
    for n in 1..=max_order {
        if n > 1 {
            power = star_product(k, &power)?;
        }
        let r = power.max_abs();
        residuals.push(r);
        g = g.add(&power)?;
        partial_sums.push(g.clone());
        if r < tol {
            break;
        }
    }
    Ok(NeumannTrace {
        partial_sums,
        residuals,
    })
}

/// Neumann partial sums restricted to the first column.
#[derive(Debug, Clone)]
pub struct NeumannColumnTrace {
    pub partial_sums: Vec<Column>,
    pub residuals: Vec<f64>,
    power: Column,
}

impl NeumannColumnTrace {
    fn start(k: &TwoTimeFunction) -> Self {
        let grid = *k.grid();
        let m = k.rows();
        let mut g0 = Column::zeros(grid, m, m);
        g0.delta = Some(Block::identity(m));
        let mut power = k.column0();
        power.delta = None;
        Self {
            partial_sums: vec![g0],
            residuals: vec![f64::INFINITY],
            power,
        }
    }

    fn step(&mut self, k: &TwoTimeFunction) -> Result<()> {
        if self.order() > 0 {
            self.power = star_column(k, &self.power)?;
        }
        self.residuals.push(self.power.max_abs());
        let next = self.partial_sums.last().unwrap().add(&self.power)?;
        self.partial_sums.push(next);
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.partial_sums.len() - 1
    }

    pub fn result(&self) -> Column {
        self.partial_sums.last().unwrap().clone()
    }
}

/// Column form of [`neumann`]: `G^(n)(., 0) = G^(n-1)(., 0) + (K * K^{*(n-1)})(., 0)`.
pub fn neumann_column(k: &TwoTimeFunction, order: usize) -> Result<NeumannColumnTrace> {
    check_kernel(k)?;
    let mut trace = NeumannColumnTrace::start(k);
    for _ in 0..order {
        trace.step(k)?;
    }
    Ok(trace)
}

/// Max-norm residual of `G - 1_* - K * G`.
pub fn residual(k: &TwoTimeFunction, g: &TwoTimeFunction) -> Result<f64> {
    let kg = star_product(k, g)?;
    let m = k.rows();
    let r = g
        .sub(&TwoTimeFunction::identity(*k.grid(), m))?
        .sub(&kg)?;
    Ok(r.max_abs().max(r.delta_part().max_abs()))
}

/// Closed-form resolvent `δ Id + K(t') exp(∫_t^{t'} K)` of a one-time kernel
/// whose values commute at different times.
pub fn closed_form_g(k: &TwoTimeFunction, tol: f64) -> Result<TwoTimeFunction> {
    let (grid, m, samples) = one_time_samples(k)?;
    check_commuting(&samples, m, grid.len(), tol)?;
    let n = grid.len();
    let bs = m * m;
    let cum = cumulative_blocks(&grid, &samples, bs);
    let mut data = vec![ZERO; tri(n) * bs];
    if m == 1 {
        data.par_chunks_mut(1).enumerate().for_each(|(idx, o)| {
            let (i, j) = crate::star::unrank(idx);
            o[0] = samples[i] * (cum[i] - cum[j]).exp();
        });
    } else {
        let e: Vec<Block> = (0..n).map(|i| block_of(&cum, i, m).exp()).collect();
        let einv: Vec<Block> = (0..n).map(|i| block_of(&cum, i, m).scale(-ONE).exp()).collect();
        let ke: Vec<Block> = (0..n).map(|i| block_of(&samples, i, m).mul(&e[i])).collect();
        data.par_chunks_mut(bs).enumerate().for_each(|(idx, o)| {
            let (i, j) = crate::star::unrank(idx);
            gemm_acc(o, &ke[i].data, &einv[j].data, m, m, m, ONE);
        });
    }
    TwoTimeFunction::from_dense(grid, m, m, Some(Block::identity(m)), data)
}

/// First column of [`closed_form_g`].
pub fn closed_form_column(k: &TwoTimeFunction, tol: f64) -> Result<Column> {
    let (grid, m, samples) = one_time_samples(k)?;
    check_commuting(&samples, m, grid.len(), tol)?;
    let bs = m * m;
    let cum = cumulative_blocks(&grid, &samples, bs);
    let mut values = vec![ZERO; grid.len() * bs];
    for i in 0..grid.len() {
        let v = block_of(&samples, i, m).mul(&block_of(&cum, i, m).exp());
        values[i * bs..(i + 1) * bs].copy_from_slice(&v.data);
    }
    Ok(Column {
        grid,
        rows: m,
        cols: m,
        delta: Some(Block::identity(m)),
        values,
    })
}

fn one_time_samples(k: &TwoTimeFunction) -> Result<(crate::TimeGrid, usize, Vec<C64>)> {
    check_kernel(k)?;
    let grid = *k.grid();
    let m = k.rows();
    let samples = match k.smooth_storage() {
        Smooth::Zero => vec![ZERO; grid.len() * m * m],
        Smooth::Lifted(a) => a.as_ref().clone(),
        Smooth::Dense(_) => {
            return Err(Error::InvalidParameter(
                "closed form needs a kernel depending on t' only".into(),
            ))
        }
    };
    Ok((grid, m, samples))
}

fn block_of(v: &[C64], i: usize, m: usize) -> Block {
    Block {
        rows: m,
        cols: m,
        data: v[i * m * m..(i + 1) * m * m].to_vec(),
    }
}

fn cumulative_blocks(grid: &crate::TimeGrid, samples: &[C64], bs: usize) -> Vec<C64> {
    let n = grid.len();
    let mut cum = vec![ZERO; n * bs];
    for l in 0..bs {
        let comp: Vec<C64> = (0..n).map(|i| samples[i * bs + l]).collect();
        for (i, v) in grid.cumulative_c(&comp).into_iter().enumerate() {
            cum[i * bs + l] = v;
        }
    }
    cum
}

/// Sample `‖[K(t_a), K(t_b)]‖` on a coarse lattice of at most 24 nodes.
fn check_commuting(samples: &[C64], m: usize, n: usize, tol: f64) -> Result<()> {
    if m == 1 {
        return Ok(());
    }
    let stride = (n / 24).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let scale = idx
        .iter()
        .map(|&i| block_of(samples, i, m).max_abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (p, &a) in idx.iter().enumerate() {
        for &b in &idx[p + 1..] {
            let c = block_of(samples, a, m).commutator_norm(&block_of(samples, b, m));
            worst = worst.max(c);
        }
    }
    if worst > tol * scale * scale {
        return Err(Error::NonCommuting(worst));
    }
    Ok(())
}

/// Accelerated Neumann expansion for `K = K1 + K2`:
/// `G = (Σ_{k<=order} T^{*k}) * G1 * G2`, `T = 1_* - G1*G2 + G1*G2*(K1+K2)`.
/// Pass precomputed resolvents `g1`, `g2` when a closed form is known.
pub fn accelerated(
    k1: &TwoTimeFunction,
    k2: &TwoTimeFunction,
    order: usize,
    g1: Option<&TwoTimeFunction>,
    g2: Option<&TwoTimeFunction>,
) -> Result<TwoTimeFunction> {
    check_kernel(k1)?;
    check_kernel(k2)?;
    let g1 = match g1 {
        Some(g) => g.clone(),
        None => solve_direct(k1)?,
    };
    let g2 = match g2 {
        Some(g) => g.clone(),
        None => solve_direct(k2)?,
    };
    let p = star_product(&g1, &g2)?;
    if order == 0 {
        return Ok(p);
    }
    let m = k1.rows();
    let id = TwoTimeFunction::identity(*k1.grid(), m);
    let t = id
        .sub(&p)?
        .add(&star_product(&p, &k1.add(k2)?)?)?;
    let mut term = p.clone();
    let mut sum = p;
    for _ in 0..order {
        term = star_product(&t, &term)?;
        sum = sum.add(&term)?;
    }
    Ok(sum)
}

/// Order-0 accelerated resolvent restricted to the first column:
/// `(G1 * G2)(., t_min)` with `G1` full and `G2` a column.
pub fn accelerated0_column(g1: &TwoTimeFunction, g2: &Column) -> Result<Column> {
    star_column(g1, g2)
}
