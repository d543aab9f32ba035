//! Brute-force references: fixed-step RK4 for `dU/dt' = -i H(t') U`, the
//! matrix exponential for constant `H`, explicit walk enumeration on
//! constant-weight graphs and the full `2^N` dipolar spin space.

use crate::block::{gemm_acc, Block, ONE, ZERO};
use crate::error::{Error, Result};
use crate::graph::DynamicalGraph;
use crate::grid::TimeGrid;
use crate::many_body::CouplingSchedule;
use crate::C64;

const MINUS_I: C64 = C64::new(0.0, -1.0);

/// Largest spin count accepted by [`full_space`].
pub const MAX_FULL_SPACE_SPINS: usize = 12;

/// History `U(t_i, t_min)` (or `U(t_i, t_min) X_0` for a block of columns).
#[derive(Debug, Clone)]
pub struct PropagationRun {
    pub grid: TimeGrid,
    pub dim: usize,
    pub cols: usize,
    /// One `dim x cols` block per grid node, row-major.
    pub history: Vec<C64>,
    /// RK4 substeps per grid interval in the accepted run.
    pub substeps: usize,
    /// Max change between the accepted run and the one before it.
    pub last_change: f64,
}

impl PropagationRun {
    pub fn at(&self, i: usize) -> Block {
        let bs = self.dim * self.cols;
        Block {
            rows: self.dim,
            cols: self.cols,
            data: self.history[i * bs..(i + 1) * bs].to_vec(),
        }
    }

    pub fn entry(&self, i: usize, r: usize, c: usize) -> C64 {
        self.history[i * self.dim * self.cols + r * self.cols + c]
    }

    /// `|U_{r c}(t_i)|^2` for every node.
    pub fn probabilities(&self, r: usize, c: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.entry(i, r, c).norm_sqr()).collect()
    }

    /// Worst `‖U^† U - Id‖_max` over the history (square runs only).
    pub fn unitarity_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| {
                let u = self.at(i);
                u.adjoint().mul(&u).sub(&Block::identity(self.cols)).max_abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Right-hand side `y = -i H(t) x` for a `dim x cols` state.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, t: f64, x: &[C64], cols: usize, y: &mut [C64]);
}

/// Dense Hamiltonian given by a callable writing `H(t)` row-major.
pub struct DenseHamiltonian<F> {
    pub dim: usize,
    pub h: F,
}

impl<F: Fn(f64, &mut [C64]) + Sync> Generator for DenseHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, t: f64, x: &[C64], cols: usize, y: &mut [C64]) {
        let mut hm = vec![ZERO; self.dim * self.dim];
        (self.h)(t, &mut hm);
        y.fill(ZERO);
        gemm_acc(y, &hm, x, self.dim, self.dim, cols, MINUS_I);
    }
}

fn rk4_run<G: Generator>(gen: &G, grid: &TimeGrid, x0: &[C64], cols: usize, sub: usize) -> Vec<C64> {
    let n = grid.len();
    let len = x0.len();
    let mut out = Vec::with_capacity(n * len);
    out.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let mut tmp = vec![ZERO; len];
    for i in 0..n - 1 {
        let t0 = grid.time(i);
        let dt = (grid.time(i + 1) - t0) / sub as f64;
        for s in 0..sub {
            let t = t0 + s as f64 * dt;
            gen.apply(t, &x, cols, &mut k1);
            for l in 0..len {
                tmp[l] = x[l] + k1[l] * (0.5 * dt);
            }
            gen.apply(t + 0.5 * dt, &tmp, cols, &mut k2);
            for l in 0..len {
                tmp[l] = x[l] + k2[l] * (0.5 * dt);
            }
            gen.apply(t + 0.5 * dt, &tmp, cols, &mut k3);
            for l in 0..len {
                tmp[l] = x[l] + k3[l] * dt;
            }
            gen.apply(t + dt, &tmp, cols, &mut k4);
            for l in 0..len {
                x[l] += (k1[l] + (k2[l] + k3[l]) * 2.0 + k4[l]) * (dt / 6.0);
            }
        }
        out.extend_from_slice(&x);
    }
    out
}

/// Integrate `dX/dt = -i H(t) X`, `X(t_min) = x0` (a `dim x cols` block),
/// doubling the substeps per grid interval until two successive runs agree
/// to `rtol` (relative to the largest entry).
pub fn propagate_from<G: Generator>(gen: &G, grid: &TimeGrid, x0: &Block, rtol: f64) -> Result<PropagationRun> {
    let dim = gen.dim();
    if x0.rows != dim {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} rows, generator dimension {dim}",
            x0.rows
        )));
    }
    const MAX_HALVINGS: usize = 16;
    let cols = x0.cols;
    let mut sub = 1;
    let mut prev = rk4_run(gen, grid, &x0.data, cols, sub);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        sub *= 2;
        let next = rk4_run(gen, grid, &x0.data, cols, sub);
        let scale = next.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(1.0);
        change = prev
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        if !change.is_finite() {
            break;
        }
        if change <= rtol * scale {
            return Ok(PropagationRun {
                grid: *grid,
                dim,
                cols,
                history: next,
                substeps: sub,
                last_change: change,
            });
        }
        prev = next;
    }
    Err(Error::NoConvergence(MAX_HALVINGS, change))
}

/// Full propagator `U(t_i, t_min)` of a dense Hamiltonian.
pub fn propagate<F>(h: F, dim: usize, grid: &TimeGrid, rtol: f64) -> Result<PropagationRun>
where
    F: Fn(f64, &mut [C64]) + Sync,
{
    propagate_from(&DenseHamiltonian { dim, h }, grid, &Block::identity(dim), rtol)
}

/// `exp(-i H t)` for constant `H`.
pub fn expm_const(h: &Block, t: f64) -> Block {
    h.scale(C64::new(0.0, -t)).exp()
}

/// Partial sums, for walk lengths `0..=max_length`, of
/// `Σ_walks w(walk) t^ℓ / ℓ!` from `source` to `target` on a graph whose edge
/// weights are constant in time.  With weights `-i H` this is the series of
/// `exp(-i H t)` block `(target, source)`.
pub fn walk_sum(
    g: &DynamicalGraph,
    source: usize,
    target: usize,
    t: f64,
    max_length: usize,
    max_walks: usize,
) -> Result<Vec<Block>> {
    let nv = g.len();
    if source >= nv {
        return Err(Error::UnknownVertex(source));
    }
    if target >= nv {
        return Err(Error::UnknownVertex(target));
    }
    // constant weights, sampled at the first node and checked on the grid
    let mut w: Vec<Vec<Option<Block>>> = vec![vec![None; nv]; nv];
    for (from, to) in g.edge_list() {
        let e = g.edge(from, to).unwrap();
        let first = e.at(e.grid().len() - 1, 0);
        let last = e.at(e.grid().len() - 1, e.grid().len() - 1);
        let c = e.at(0, 0);
        let scale = c.max_abs().max(1e-300);
        if first.sub(&c).max_abs() > 1e-12 * scale || last.sub(&c).max_abs() > 1e-12 * scale {
            return Err(Error::InvalidParameter(format!(
                "edge {from} -> {to} is not constant in time"
            )));
        }
        w[to][from] = Some(c);
    }
    let ds = g.dim(source);
    let dt = g.dim(target);
    let mut sums = vec![Block::zeros(dt, ds); max_length + 1];
    let mut count = 0usize;
    // depth-first over walks; `stack` holds (vertex, accumulated product)
    let mut stack: Vec<(usize, usize, Block)> = vec![(source, 0, Block::identity(ds))];
    while let Some((v, len, prod)) = stack.pop() {
        count += 1;
        if count > max_walks {
            return Err(Error::TooManyWalks(count));
        }
        if v == target {
            sums[len] = sums[len].add(&prod);
        }
        if len == max_length {
            continue;
        }
        for (to, row) in w.iter().enumerate() {
            if let Some(e) = &row[v] {
                stack.push((to, len + 1, e.mul(&prod)));
            }
        }
    }
    // weight t^ℓ/ℓ! and accumulate
    let mut out = Vec::with_capacity(max_length + 1);
    let mut acc = Block::zeros(dt, ds);
    let mut f = 1.0;
    for (l, s) in sums.iter().enumerate() {
        if l > 0 {
            f *= t / l as f64;
        }
        acc = acc.add(&s.scale(C64::new(f, 0.0)));
        out.push(acc.clone());
    }
    Ok(out)
}

/// `H^II(t) + Σ_i o_i I_{z,i}` on the full `2^N` space.  Basis states are
/// bit strings; bit `i` set means spin `i` up.  Pair terms are
/// `½ ω_ij (3 I_iz I_jz - I_i·I_j)` summed over ordered pairs `i ≠ j`.
pub struct FullSpace<'a> {
    pub n: usize,
    pub couplings: &'a CouplingSchedule,
    pub offsets: Vec<f64>,
}

/// Build the full-space Hamiltonian.  `N <= 12`.
pub fn full_space<'a>(couplings: &'a CouplingSchedule, offsets: &[f64]) -> Result<FullSpace<'a>> {
    let n = couplings.len();
    if n > MAX_FULL_SPACE_SPINS {
        return Err(Error::GraphTooLarge(format!(
            "full space of {n} spins exceeds the cap of {MAX_FULL_SPACE_SPINS}"
        )));
    }
    if offsets.len() != n && !offsets.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} offsets for {n} spins",
            offsets.len()
        )));
    }
    let offsets = if offsets.is_empty() { vec![0.0; n] } else { offsets.to_vec() };
    Ok(FullSpace { n, couplings, offsets })
}

impl FullSpace<'_> {
    /// `y = H(t) x` for a single vector.
    pub fn apply_h(&self, t: f64, x: &[C64], y: &mut [C64]) {
        let dim = 1usize << self.n;
        let w = self.couplings.values(t);
        y.fill(ZERO);
        for s in 0..dim {
            let xs = x[s];
            if xs == ZERO {
                continue;
            }
            let mut diag = 0.0;
            for i in 0..self.n {
                let zi = if s >> i & 1 == 1 { 0.5 } else { -0.5 };
                diag += self.offsets[i] * zi;
            }
            for (p, &(i, j)) in self.couplings.pairs().iter().enumerate() {
                let zi = if s >> i & 1 == 1 { 0.5 } else { -0.5 };
                let zj = if s >> j & 1 == 1 { 0.5 } else { -0.5 };
                // unordered pair: ω (3 IzIz - I·I) = ω (2 IzIz - ½(I+I- + I-I+))
                diag += w[p] * 2.0 * zi * zj;
                if (s >> i & 1) != (s >> j & 1) {
                    let flipped = s ^ (1 << i) ^ (1 << j);
                    y[flipped] += xs * (-0.5 * w[p]);
                }
            }
            y[s] += xs * diag;
        }
    }

    /// Dense `H(t)` (small `N` only).
    pub fn matrix(&self, t: f64) -> Block {
        let dim = 1usize << self.n;
        let mut m = Block::zeros(dim, dim);
        let mut e = vec![ZERO; dim];
        let mut y = vec![ZERO; dim];
        for c in 0..dim {
            e.fill(ZERO);
            e[c] = ONE;
            self.apply_h(t, &e, &mut y);
            for r in 0..dim {
                m.data[r * dim + c] = y[r];
            }
        }
        m
    }

    /// `Σ_i I_{z,i}` eigenvalue of basis state `s`.
    pub fn magnetization(&self, s: usize) -> f64 {
        (0..self.n).map(|i| if s >> i & 1 == 1 { 0.5 } else { -0.5 }).sum()
    }

    /// Basis index of the state with only spin `k` up.
    pub fn single_excitation(k: usize) -> usize {
        1 << k
    }
}

impl Generator for FullSpace<'_> {
    fn dim(&self) -> usize {
        1 << self.n
    }

    fn apply(&self, t: f64, x: &[C64], cols: usize, y: &mut [C64]) {
        let dim = 1usize << self.n;
        let mut xc = vec![ZERO; dim];
        let mut yc = vec![ZERO; dim];
        for c in 0..cols {
            for r in 0..dim {
                xc[r] = x[r * cols + c];
            }
            self.apply_h(t, &xc, &mut yc);
            for r in 0..dim {
                y[r * cols + c] = yc[r] * MINUS_I;
            }
        }
    }
}

/// Propagate the single-excitation columns `|↑_k⟩` of the full space and
/// return the `N x N` block of `U` restricted to that sector
/// (entry `(a, b) = ⟨↑_a| U |↑_b⟩`).
pub fn full_space_sector_propagator(fs: &FullSpace<'_>, grid: &TimeGrid, rtol: f64) -> Result<PropagationRun> {
    let n = fs.n;
    let dim = 1usize << n;
    let mut x0 = Block::zeros(dim, n);
    for k in 0..n {
        x0.set(FullSpace::single_excitation(k), k, ONE);
    }
    let run = propagate_from(fs, grid, &x0, rtol)?;
    let mut history = Vec::with_capacity(grid.len() * n * n);
    for i in 0..grid.len() {
        for a in 0..n {
            for b in 0..n {
                history.push(run.entry(i, FullSpace::single_excitation(a), b));
            }
        }
    }
    Ok(PropagationRun {
        grid: *grid,
        dim: n,
        cols: n,
        history,
        substeps: run.substeps,
        last_change: run.last_change,
    })
}
