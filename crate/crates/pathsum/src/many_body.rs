//! Homonuclear dipolar spins under magic-angle spinning, reduced to the
//! single-excitation sector and solved block-wise by path-sum.
//!
//! Units: lengths in angstrom, times in milliseconds, frequencies in rad/ms.

use std::f64::consts::PI;
use std::path::Path;

use crate::block::{Block, ZERO};
use crate::error::{Error, Result};
use crate::graph::{propagator_column, DynamicalGraph, GreenOptions, PathSumExpression};
use crate::grid::TimeGrid;
use crate::star::Column;
use crate::volterra::ResolventMethod;
use crate::C64;

/// `μ0 γ_H² ħ / 4π` for protons: 2π × 120.06 kHz Å³, in rad/ms Å³.
pub const PROTON_DIPOLAR_PREFACTOR: f64 = 2.0 * PI * 120.06;

/// 2π × 10 kHz in rad/ms.
pub const DEFAULT_ROTOR_FREQUENCY: f64 = 2.0 * PI * 10.0;

/// Proton positions and the dipolar prefactor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinGeometry {
    labels: Vec<String>,
    positions: Vec<[f64; 3]>,
    prefactor: f64,
}

impl SpinGeometry {
    pub fn new(labels: Vec<String>, positions: Vec<[f64; 3]>) -> Result<Self> {
        if labels.len() != positions.len() {
            return Err(Error::Geometry("one label per position".into()));
        }
        if positions.len() < 2 {
            return Err(Error::Geometry(format!("need at least 2 spins, got {}", positions.len())));
        }
        for p in &positions {
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Geometry("non-finite coordinate".into()));
            }
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if dist(&positions[i], &positions[j]) < 1e-9 {
                    return Err(Error::Geometry(format!(
                        "spins {} and {} coincide",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(Self {
            labels,
            positions,
            prefactor: PROTON_DIPOLAR_PREFACTOR,
        })
    }

    pub fn with_prefactor(mut self, prefactor: f64) -> Result<Self> {
        if !prefactor.is_finite() {
            return Err(Error::InvalidParameter(format!("prefactor {prefactor}")));
        }
        self.prefactor = prefactor;
        Ok(self)
    }

    /// Parse `label x y z` lines; `#` starts a comment, blank lines skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut labels = Vec::new();
        let mut positions = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::Geometry(format!(
                    "line {}: expected `label x y z`, got {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut p = [0.0; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                p[k] = f.parse().map_err(|_| {
                    Error::Geometry(format!("line {}: bad coordinate `{f}`", lineno + 1))
                })?;
            }
            labels.push(fields[0].to_string());
            positions.push(p);
        }
        Self::new(labels, positions)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Geometry(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Zigzag chain of `n` spins: consecutive spins `spacing` apart along a
    /// tilted axis, alternately displaced by `spacing / 3` sideways so that
    /// pair orientations differ.
    pub fn zigzag_chain(n: usize, spacing: f64) -> Result<Self> {
        let axis = unit([0.8, 0.35, 0.49]);
        let side = unit(cross(axis, [0.0, 0.0, 1.0]));
        let positions = (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 } * spacing / 6.0;
                let a = k as f64 * spacing;
                [
                    a * axis[0] + s * side[0],
                    a * axis[1] + s * side[1],
                    a * axis[2] + s * side[2],
                ]
            })
            .collect();
        Self::new((0..n).map(|k| format!("H{}", k + 1)).collect(), positions)
    }

    /// Two clusters of `per_side` spins (triangles for 3) joined by a long
    /// gap: a small model of two weakly connected halves.
    pub fn dumbbell(per_side: usize, bond: f64, gap: f64) -> Result<Self> {
        let mut positions = Vec::new();
        for side in 0..2 {
            let cx = side as f64 * gap;
            for k in 0..per_side {
                let a = 2.0 * PI * k as f64 / per_side as f64 + 0.3 * side as f64;
                let r = bond / (2.0 * (PI / per_side as f64).sin()).max(1.0);
                positions.push([cx + r * a.cos(), r * a.sin(), 0.4 * r * (a + 0.7).sin()]);
            }
        }
        let n = positions.len();
        Self::new((0..n).map(|k| format!("H{}", k + 1)).collect(), positions)
    }

    /// A tightly bound pair (`pair_bond` apart) placed next to `others`
    /// spins on a loose zigzag.  The pair is spins `0, 1`; the rest follow.
    pub fn strong_pair_with_bath(others: usize, pair_bond: f64, spacing: f64) -> Result<Self> {
        let mut positions = vec![[0.0, 0.0, 0.0], [pair_bond * 0.8, pair_bond * 0.36, pair_bond * 0.48]];
        let bath = Self::zigzag_chain(others, spacing)?;
        for p in bath.positions {
            positions.push([p[0] + 0.6 * spacing + 1.0, p[1] - spacing, p[2] + 0.5]);
        }
        let n = positions.len();
        Self::new((0..n).map(|k| format!("H{}", k + 1)).collect(), positions)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.positions[i], &self.positions[j])
    }

    /// `(ψ_ij, φ_ij)`: polar angle of `r_j - r_i` from z and its azimuth
    /// from x.  Swapping `i` and `j` leaves `ξ_ij` unchanged.
    pub fn angles(&self, i: usize, j: usize) -> (f64, f64) {
        let a = &self.positions[i];
        let b = &self.positions[j];
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let r = dist(a, b);
        ((d[2] / r).clamp(-1.0, 1.0).acos(), d[1].atan2(d[0]))
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Rotor angular velocity; zero means a static sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasSchedule {
    omega_r: f64,
}

impl MasSchedule {
    pub fn new(omega_r: f64) -> Result<Self> {
        if !(omega_r >= 0.0 && omega_r.is_finite()) {
            return Err(Error::InvalidParameter(format!("rotor frequency {omega_r}")));
        }
        Ok(Self { omega_r })
    }

    pub fn static_sample() -> Self {
        Self { omega_r: 0.0 }
    }

    pub fn omega_r(&self) -> f64 {
        self.omega_r
    }

    pub fn is_static(&self) -> bool {
        self.omega_r == 0.0
    }

    pub fn period(&self) -> Option<f64> {
        (self.omega_r > 0.0).then(|| 2.0 * PI / self.omega_r)
    }
}

/// `ξ(t) = 2√2 sinψ cosψ sin(φ + ω_r t) + sin²ψ cos(2φ + 2ω_r t)`.
pub fn xi(psi: f64, phi: f64, wt: f64) -> f64 {
    2.0 * 2f64.sqrt() * psi.sin() * psi.cos() * (phi + wt).sin() + psi.sin().powi(2) * (2.0 * phi + 2.0 * wt).cos()
}

/// `ω_ij(t) = (prefactor / r_ij³) ½ ξ_ij(t)` for every unordered pair.
#[derive(Debug, Clone)]
pub struct CouplingSchedule {
    n: usize,
    pairs: Vec<(usize, usize)>,
    amplitude: Vec<f64>,
    psi: Vec<f64>,
    phi: Vec<f64>,
    omega_r: f64,
}

pub fn coupling_schedule(geom: &SpinGeometry, mas: &MasSchedule) -> CouplingSchedule {
    let n = geom.len();
    let mut s = CouplingSchedule {
        n,
        pairs: Vec::new(),
        amplitude: Vec::new(),
        psi: Vec::new(),
        phi: Vec::new(),
        omega_r: mas.omega_r(),
    };
    for i in 0..n {
        for j in i + 1..n {
            let (psi, phi) = geom.angles(i, j);
            s.pairs.push((i, j));
            s.amplitude.push(geom.prefactor() / geom.distance(i, j).powi(3) * 0.5);
            s.psi.push(psi);
            s.phi.push(phi);
        }
    }
    s
}

impl CouplingSchedule {
    /// Keep only the pairs `(i, j)` accepted by `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(usize, usize) -> bool) {
        let mask: Vec<bool> = self.pairs.iter().map(|&(i, j)| keep(i, j)).collect();
        let mut it = mask.iter();
        self.pairs.retain(|_| *it.next().unwrap());
        for v in [&mut self.amplitude, &mut self.psi, &mut self.phi] {
            let mut it = mask.iter();
            v.retain(|_| *it.next().unwrap());
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn omega(&self, p: usize, t: f64) -> f64 {
        self.amplitude[p] * xi(self.psi[p], self.phi[p], self.omega_r * t)
    }

    /// `ω_p(t)` for every pair, in [`CouplingSchedule::pairs`] order.
    pub fn values(&self, t: f64) -> Vec<f64> {
        (0..self.pairs.len()).map(|p| self.omega(p, t)).collect()
    }

    /// `∫_0^t ω_p(τ) dτ` in closed form.
    pub fn integral(&self, p: usize, t: f64) -> f64 {
        let (psi, phi, wr) = (self.psi[p], self.phi[p], self.omega_r);
        if wr == 0.0 {
            return self.omega(p, 0.0) * t;
        }
        let a = 2.0 * 2f64.sqrt() * psi.sin() * psi.cos() * (phi.cos() - (phi + wr * t).cos()) / wr;
        let b = psi.sin().powi(2) * ((2.0 * phi + 2.0 * wr * t).sin() - (2.0 * phi).sin()) / (2.0 * wr);
        self.amplitude[p] * (a + b)
    }

    /// Largest `|ω_ij|` attainable over a rotor period (`2 × amplitude`
    /// bounds it; sampled here for a tight value).
    pub fn peak(&self, p: usize) -> f64 {
        (0..64)
            .map(|k| {
                let wt = 2.0 * PI * k as f64 / 64.0;
                (self.amplitude[p] * xi(self.psi[p], self.phi[p], wt)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Scale every coupling (testing hook and unit conversion).
    pub fn scaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        for a in &mut c.amplitude {
            *a *= s;
        }
        c
    }
}

/// The Hamiltonian restricted to states with exactly one spin up.
///
/// With `H = Σ_{i≠j} ½ ω_ij (3 I_iz I_jz - I_i·I_j) + Σ_i o_i I_iz`, basis
/// state `k` (spin `k` up) couples to `l` with `-ω_kl / 2` and has diagonal
/// `o_k - Σ_{j≠k} ω_kj` once the energy common to all sector states is
/// removed.
#[derive(Debug, Clone)]
pub struct SectorHamiltonian {
    pub couplings: CouplingSchedule,
    pub offsets: Vec<f64>,
}

pub fn sector_hamiltonian(geom: &SpinGeometry, mas: &MasSchedule, offsets: &[f64]) -> Result<SectorHamiltonian> {
    let n = geom.len();
    let offsets = match offsets.len() {
        0 => vec![0.0; n],
        k if k == n => offsets.to_vec(),
        k => return Err(Error::DimensionMismatch(format!("{k} offsets for {n} spins"))),
    };
    if offsets.iter().any(|o| !o.is_finite()) {
        return Err(Error::InvalidParameter("non-finite offset".into()));
    }
    Ok(SectorHamiltonian {
        couplings: coupling_schedule(geom, mas),
        offsets,
    })
}

impl SectorHamiltonian {
    pub fn dim(&self) -> usize {
        self.couplings.len()
    }

    /// `H_eff(t)`, row-major `N x N`.
    pub fn matrix(&self, t: f64, out: &mut [C64]) {
        let n = self.dim();
        out.fill(ZERO);
        for k in 0..n {
            out[k * n + k] = C64::new(self.offsets[k], 0.0);
        }
        for (p, &(i, j)) in self.couplings.pairs().iter().enumerate() {
            let w = self.couplings.omega(p, t);
            out[i * n + j] += C64::new(-0.5 * w, 0.0);
            out[j * n + i] += C64::new(-0.5 * w, 0.0);
            out[i * n + i] -= C64::new(w, 0.0);
            out[j * n + j] -= C64::new(w, 0.0);
        }
    }

    /// Energy shared by every sector state and left out of [`matrix`]:
    /// `Σ_p ω_p / 2 - Σ_i o_i / 2`.
    ///
    /// [`matrix`]: SectorHamiltonian::matrix
    pub fn common_energy(&self, t: f64) -> f64 {
        self.couplings.values(t).iter().sum::<f64>() / 2.0 - self.offsets.iter().sum::<f64>() / 2.0
    }

    /// `∫_0^t` of [`SectorHamiltonian::common_energy`]; the full-space
    /// propagator restricted to the sector is `e^{-i phase} U_sector`.
    pub fn common_phase(&self, t: f64) -> f64 {
        let c = &self.couplings;
        (0..c.pairs().len()).map(|p| c.integral(p, t)).sum::<f64>() / 2.0 - self.offsets.iter().sum::<f64>() * t / 2.0
    }

    pub fn matrix_block(&self, t: f64) -> Block {
        let n = self.dim();
        let mut b = Block::zeros(n, n);
        self.matrix(t, &mut b.data);
        b
    }

    /// Peak over a rotor period of the largest coupling between two site
    /// groups (0 when none).
    pub fn inter_group_peak(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut m: f64 = 0.0;
        for (p, &(i, j)) in self.couplings.pairs().iter().enumerate() {
            if (a.contains(&i) && b.contains(&j)) || (a.contains(&j) && b.contains(&i)) {
                m = m.max(self.couplings.peak(p));
            }
        }
        m
    }
}

/// Contiguous partition of `0..n` into groups of `size` (last one shorter).
pub fn contiguous_partition(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0..n).collect::<Vec<_>>().chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

/// Edge-drop record of a Λ-cut block graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTopology {
    pub lambda: f64,
    /// Largest inter-group peak coupling `I_max`.
    pub max_coupling: f64,
    /// Kept undirected inter-group edges `(a, b, peak)`, `a < b`.
    pub kept: Vec<(usize, usize, f64)>,
    /// Dropped inter-group edges.
    pub dropped: Vec<(usize, usize, f64)>,
    pub components: Vec<Vec<usize>>,
}

impl BlockTopology {
    pub fn report(&self) -> String {
        let mut s = format!(
            "lambda {} max inter-group coupling {:.6e} kept {} dropped {} components {}\n",
            self.lambda,
            self.max_coupling,
            self.kept.len(),
            self.dropped.len(),
            self.components.len()
        );
        for (a, b, w) in &self.kept {
            s.push_str(&format!("edge {a} {b} {w:.6e}\n"));
        }
        s
    }
}

/// Partitioned dynamical graph of the sector Hamiltonian with inter-group
/// couplings weaker than `I_max / lambda` removed (`lambda = ∞` keeps all).
/// The diagonal of `H_eff` is kept whole: dropping a coupling removes its
/// hopping term only.
pub fn block_graph(
    h: &SectorHamiltonian,
    partition: &[Vec<usize>],
    lambda: f64,
    grid: TimeGrid,
) -> Result<(DynamicalGraph, BlockTopology)> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("cutoff Λ = {lambda} must be positive")));
    }
    let n = h.dim();
    let nb = partition.len();
    let mut group = vec![usize::MAX; n];
    for (b, sites) in partition.iter().enumerate() {
        for &s in sites {
            if s < n {
                group[s] = b;
            }
        }
    }
    let mut peaks = vec![vec![0.0; nb]; nb];
    for a in 0..nb {
        for b in a + 1..nb {
            let p = h.inter_group_peak(&partition[a], &partition[b]);
            peaks[a][b] = p;
            peaks[b][a] = p;
        }
    }
    let imax = peaks.iter().flatten().fold(0.0f64, |m, &x| m.max(x));
    let threshold = if lambda.is_infinite() { 0.0 } else { imax / lambda };
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut cut = vec![vec![false; nb]; nb];
    for a in 0..nb {
        for b in a + 1..nb {
            if peaks[a][b] == 0.0 {
                continue;
            }
            if peaks[a][b] < threshold {
                dropped.push((a, b, peaks[a][b]));
                cut[a][b] = true;
                cut[b][a] = true;
            } else {
                kept.push((a, b, peaks[a][b]));
            }
        }
    }
    let g = DynamicalGraph::from_hamiltonian(
        |t, out| {
            h.matrix(t, out);
            for i in 0..n {
                for j in 0..n {
                    let (gi, gj) = (group[i], group[j]);
                    if gi != usize::MAX && gj != usize::MAX && cut[gi][gj] {
                        out[i * n + j] = ZERO;
                    }
                }
            }
        },
        n,
        partition,
        grid,
    )?;
    let labels = (0..nb).map(|b| format!("B{}", b + 1)).collect();
    let g = g.with_labels(labels)?;
    let topo = BlockTopology {
        lambda,
        max_coupling: imax,
        kept,
        dropped,
        components: g.components(),
    };
    Ok((g, topo))
}

/// Per-site probability histories `|U_{i, initial}(t)|²`.
#[derive(Debug, Clone)]
pub struct DiffusionHistory {
    pub grid: TimeGrid,
    /// `probabilities[site][node]`.
    pub probabilities: Vec<Vec<f64>>,
    /// `Σ_i |U_{i, initial}|²` per node.
    pub total: Vec<f64>,
    /// Amplitudes `U_{i, initial}` per site and node.
    pub amplitudes: Vec<Vec<C64>>,
    pub expression_depth: usize,
    pub resolvents: usize,
}

impl DiffusionHistory {
    pub fn summed(&self, sites: &[usize]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| sites.iter().map(|&s| self.probabilities[s][i]).sum())
            .collect()
    }
}

fn histories(
    blocks: &[Column],
    partition: &[Vec<usize>],
    local: usize,
    n: usize,
    grid: TimeGrid,
    expr: &PathSumExpression,
) -> DiffusionHistory {
    let len = grid.len();
    let mut amplitudes = vec![vec![ZERO; len]; n];
    for (b, sites) in partition.iter().enumerate() {
        for (r, &site) in sites.iter().enumerate() {
            for (i, a) in amplitudes[site].iter_mut().enumerate() {
                *a = blocks[b].entry(i, r, local);
            }
        }
    }
    let probabilities: Vec<Vec<f64>> = amplitudes
        .iter()
        .map(|row| row.iter().map(|z| z.norm_sqr()).collect())
        .collect();
    let total = (0..len).map(|i| probabilities.iter().map(|p| p[i]).sum()).collect();
    DiffusionHistory {
        grid,
        probabilities,
        total,
        amplitudes,
        expression_depth: expr.depth(),
        resolvents: expr.resolvent_count(),
    }
}

fn locate(partition: &[Vec<usize>], site: usize) -> Result<(usize, usize)> {
    for (b, sites) in partition.iter().enumerate() {
        if let Some(k) = sites.iter().position(|&s| s == site) {
            return Ok((b, k));
        }
    }
    Err(Error::InvalidParameter(format!("site {site} not in the partition")))
}

/// Spin-diffusion histories from `initial_site` on the Λ-cut block graph.
pub fn spin_diffusion(
    h: &SectorHamiltonian,
    partition: &[Vec<usize>],
    lambda: f64,
    initial_site: usize,
    grid: TimeGrid,
) -> Result<DiffusionHistory> {
    truncated_sigma_approximation(h, partition, lambda, initial_site, grid, &[])
}

/// As [`spin_diffusion`], with the groups in `drop_groups` cut out of the
/// graph: every sub-resolvent that could reach them reduces to the isolated
/// evolution of its own group, and the dropped groups carry no amplitude.
pub fn truncated_sigma_approximation(
    h: &SectorHamiltonian,
    partition: &[Vec<usize>],
    lambda: f64,
    initial_site: usize,
    grid: TimeGrid,
    drop_groups: &[usize],
) -> Result<DiffusionHistory> {
    let n = h.dim();
    if initial_site >= n {
        return Err(Error::InvalidParameter(format!("initial site {initial_site} outside 0..{n}")));
    }
    let (g, _) = block_graph(h, partition, lambda, grid)?;
    let (b0, local) = locate(partition, initial_site)?;
    for &d in drop_groups {
        if d >= partition.len() {
            return Err(Error::UnknownVertex(d));
        }
        if d == b0 {
            return Err(Error::InvalidParameter("cannot drop the initial group".into()));
        }
    }
    let g = g.without_vertices(drop_groups)?;
    let (blocks, expr) = propagator_column(&g, b0, ResolventMethod::Direct, &GreenOptions::default())?;
    Ok(histories(&blocks, partition, local, n, grid, &expr))
}

/// Direct single-block solve (the whole sector as one vertex); the
/// reference for partition invariance.
pub fn sector_propagator_column(h: &SectorHamiltonian, initial_site: usize, grid: TimeGrid) -> Result<DiffusionHistory> {
    let n = h.dim();
    let partition = vec![(0..n).collect::<Vec<_>>()];
    spin_diffusion(h, &partition, f64::INFINITY, initial_site, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_vanishes_along_z_and_averages_to_zero() {
        for k in 0..10 {
            assert_eq!(xi(0.0, 0.3, k as f64), 0.0);
        }
        let m = 400;
        let avg: f64 = (0..m).map(|k| xi(0.9, 1.3, 2.0 * PI * k as f64 / m as f64)).sum::<f64>() / m as f64;
        assert!(avg.abs() < 1e-14);
        assert!((xi(PI / 2.0, 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!(xi(PI / 2.0, 0.0, PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let g = SpinGeometry::parse("# header\nH1 0 0 0\n\nH2 1.5 0 0 # trailing\n").unwrap();
        assert_eq!(g.len(), 2);
        let e = SpinGeometry::parse("H1 0 0 0\nH2 1 x 0\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(SpinGeometry::parse("H1 0 0 0\nH2 0 0 0\n").is_err());
    }

    #[test]
    fn zero_couplings_leave_offsets_on_the_diagonal() {
        let g = SpinGeometry::zigzag_chain(3, 2.0).unwrap().with_prefactor(0.0).unwrap();
        let h = sector_hamiltonian(&g, &MasSchedule::static_sample(), &[1.0, 2.0, 3.0]).unwrap();
        let m = h.matrix_block(0.3);
        let expect = Block::from_rows(&[
            &[C64::new(1.0, 0.0), ZERO, ZERO],
            &[ZERO, C64::new(2.0, 0.0), ZERO],
            &[ZERO, ZERO, C64::new(3.0, 0.0)],
        ]);
        assert_eq!(m, expect);
    }

    #[test]
    fn swapping_a_pair_keeps_xi() {
        let g = SpinGeometry::zigzag_chain(3, 2.0).unwrap();
        let (p1, f1) = g.angles(0, 2);
        let (p2, f2) = g.angles(2, 0);
        for k in 0..8 {
            let wt = k as f64 * 0.7;
            assert!((xi(p1, f1, wt) - xi(p2, f2, wt)).abs() < 1e-14);
        }
    }
}
