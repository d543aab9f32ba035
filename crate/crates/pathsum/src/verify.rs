//! Self-check suite: cheap numerical invariants that every build should hold.
//!
//! Each check reports the measured quantity next to the tolerance it was held
//! to, so a failing run says how far off it was and not just that it failed.

use std::fmt;
use std::time::Instant;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::Block;
use crate::graph::{evaluate, green_function, green_function_eliminated, propagator_block, DynamicalGraph};
use crate::many_body::{sector_hamiltonian, sector_propagator_column, MasSchedule, SpinGeometry, DEFAULT_ROTOR_FREQUENCY};
use crate::oracle::{full_space, full_space_sector_propagator, walk_sum};
use crate::two_level::{bs_kernel, solve_2x2, BlochSiegertParams};
use crate::volterra::{residual, solve_direct, ResolventMethod};
use crate::{lift_scalar, star_product, Error, Quadrature, Result, TimeGrid, TwoTimeFunction, C64};

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    /// Points of the grids that are refined (associativity, unitarity).
    pub grid_points: usize,
    /// Seed of the random graphs.
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { grid_points: 201, seed: 7 }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    /// The tolerance is a lower bound on `measured` instead of an upper one.
    pub at_least: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.3e} {} {:.3e} ({}; {:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            if self.at_least { ">=" } else { "<=" },
            self.tolerance,
            self.detail,
            self.seconds
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed, {:.1} s", self.checks.len(), failed, self.seconds)
    }
}

/// Largest error that still counts as agreement between two quadrature
/// discretisations on the fixed grids used below.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.grid_points < 11 {
        return Err(Error::InvalidParameter(format!("verify needs at least 11 grid points, got {}", cfg.grid_points)));
    }
    let start = Instant::now();
    let checks: [fn(&VerifyConfig) -> Result<CheckResult>; 6] = [
        associativity,
        unitarity,
        elimination_order,
        walk_sums,
        sector_equivalence,
        volterra_residual,
    ];
    let mut report = VerifyReport::default();
    for check in checks {
        let t0 = Instant::now();
        let mut r = check(cfg)?;
        r.seconds = t0.elapsed().as_secs_f64();
        report.checks.push(r);
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn result(name: &'static str, measured: f64, tolerance: f64, detail: String) -> CheckResult {
    CheckResult { name, passed: measured <= tolerance, measured, tolerance, at_least: false, detail, seconds: 0.0 }
}

fn associativity_defect(n: usize) -> Result<f64> {
    let grid = TimeGrid::new(0.0, 2.0, n)?.with_quadrature(Quadrature::Gregory);
    let f = lift_scalar(grid, |tp, t| C64::new((tp - 2.0 * t).cos(), 0.3 * tp))?;
    let g = lift_scalar(grid, |tp, t| C64::new((tp + t).sin(), -0.2))?;
    let h = lift_scalar(grid, |tp, t| C64::new((-tp).exp(), t * t))?;
    let l = star_product(&star_product(&f, &g)?, &h)?;
    let r = star_product(&f, &star_product(&g, &h)?)?;
    Ok(l.max_diff(&r))
}

// The defect has to fall at the rate of the quadrature.  Entries one panel
// off the diagonal only see the trapezoid rule, which caps the observed
// order near three; below 2.5 something is wrong with the weights.
fn associativity(cfg: &VerifyConfig) -> Result<CheckResult> {
    let n = cfg.grid_points;
    let (a, b) = (associativity_defect(n)?, associativity_defect(2 * n - 1)?);
    let order = if b > 0.0 { (a / b).log2() } else { f64::INFINITY };
    let mut r = result(
        "associativity refinement",
        order,
        2.5,
        format!("observed order; defect {a:.3e} at {n} points, {b:.3e} at {} points", 2 * n - 1),
    );
    r.at_least = true;
    r.passed = order >= 2.5 || a < 1e-13;
    Ok(r)
}

// Direct solve of the lab-frame Bloch-Siegert system; the quadrature error is
// estimated from a run on the doubled grid.
fn unitarity(cfg: &VerifyConfig) -> Result<CheckResult> {
    let n = cfg.grid_points;
    let p = BlochSiegertParams::resonant(0.7, 1.0)?;
    let h = p.lab_frame();
    let coarse = solve_2x2(&h, TimeGrid::new(0.0, 10.0, n)?, ResolventMethod::Direct)?;
    let fine = solve_2x2(&h, TimeGrid::new(0.0, 10.0, 2 * n - 1)?, ResolventMethod::Direct)?;
    let mut defect: f64 = 0.0;
    let mut err: f64 = 0.0;
    for i in 0..n {
        let u = coarse.matrix(i);
        defect = defect.max(u.adjoint().mul(&u).sub(&Block::identity(2)).max_abs());
        err = err.max(u.sub(&fine.matrix(2 * i)).max_abs());
    }
    let tol = 10.0 * err.max(1e-13);
    Ok(result("unitarity", defect, tol, format!("quadrature error {err:.3e} at {n} points")))
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Block {
    let mut h = Block::zeros(n, n);
    for i in 0..n {
        h.set(i, i, C64::new(rng.gen_range(-scale..scale), 0.0));
        for j in i + 1..n {
            let z = C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            h.set(i, j, z);
            h.set(j, i, z.conj());
        }
    }
    h
}

fn singleton_graph<F>(h: F, n: usize, grid: TimeGrid) -> Result<DynamicalGraph>
where
    F: Fn(f64, &mut [C64]),
{
    let parts: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    DynamicalGraph::from_hamiltonian(h, n, &parts, grid)
}

// Ten random time-dependent graphs on four vertices, each evaluated under
// three shuffled elimination orders.  Each order is a different
// discretisation of the same walk sum, so two of them may differ by twice the
// quadrature error of one (estimated on the doubled grid).  Ladder depth is
// checked on the way.
fn elimination_order(cfg: &VerifyConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = 161;
    let (grid, fine) = (TimeGrid::new(0.0, 2.0, n)?, TimeGrid::new(0.0, 2.0, 2 * n - 1)?);
    let mut worst: f64 = 0.0;
    let mut quad: f64 = 0.0;
    let mut depth_ok = true;
    for _ in 0..10 {
        let a = random_hermitian(&mut rng, 4, 0.6);
        let b = random_hermitian(&mut rng, 4, 0.4);
        let h = move |t: f64, out: &mut [C64]| {
            let c = t.cos();
            for (k, o) in out.iter_mut().enumerate() {
                *o = a.data[k] + b.data[k] * c;
            }
        };
        let g = singleton_graph(h.clone(), 4, grid)?;
        let (s, t) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let e = green_function(&g, s, t)?;
        depth_ok &= e.depth() <= g.len();
        let reference = evaluate(&e, &g, ResolventMethod::Direct)?;
        let gf = singleton_graph(h, 4, fine)?;
        let refined = evaluate(&green_function(&gf, s, t)?, &gf, ResolventMethod::Direct)?;
        for i in 0..n {
            for j in 0..=i {
                quad = quad.max((reference.scalar_at(i, j) - refined.scalar_at(2 * i, 2 * j)).norm());
            }
        }
        let mut order: Vec<usize> = (0..4).collect();
        for _ in 0..3 {
            order.shuffle(&mut rng);
            let e = green_function_eliminated(&g, s, t, &order)?;
            depth_ok &= e.depth() <= g.len();
            worst = worst.max(evaluate(&e, &g, ResolventMethod::Direct)?.max_diff(&reference));
        }
    }
    let mut r = result(
        "elimination-order invariance",
        worst,
        2.0 * quad.max(1e-12),
        format!("10 graphs x 3 orders at {n} points, ladder depth {}", if depth_ok { "within |V|" } else { "EXCEEDED" }),
    );
    r.passed &= depth_ok;
    Ok(r)
}

fn walk_sums(cfg: &VerifyConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let grid = TimeGrid::new(0.0, 1.0, 801)?;
    let mut worst: f64 = 0.0;
    for _ in 0..2 {
        let h = random_hermitian(&mut rng, 3, 0.3);
        let data = h.data.clone();
        let g = singleton_graph(move |_, out| out.copy_from_slice(&data), 3, grid)?;
        let (s, t) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let u = propagator_block(&g, s, t, ResolventMethod::Direct)?;
        let sums = walk_sum(&g, s, t, grid.t_max(), 12, 10_000_000)?;
        let last = sums.last().map(|b| b.get(0, 0)).unwrap_or_default();
        worst = worst.max((last - u.scalar(grid.len() - 1)).norm());
    }
    Ok(result("walk-sum convergence", worst, QUADRATURE_TOLERANCE, "3-vertex constant graphs, walks up to length 12".into()))
}

fn sector_equivalence(_: &VerifyConfig) -> Result<CheckResult> {
    let n = 4;
    let mas = MasSchedule::new(DEFAULT_ROTOR_FREQUENCY)?;
    let geom = SpinGeometry::zigzag_chain(n, 2.2)?;
    let offsets: Vec<f64> = (0..n).map(|k| 2.0 * std::f64::consts::PI * 3.0 * k as f64).collect();
    let h = sector_hamiltonian(&geom, &mas, &offsets)?;
    let period = mas.period().unwrap_or(1.0);
    let grid = TimeGrid::new(0.0, period, 1201)?;
    let fs = full_space(&h.couplings, &offsets)?;
    let run = full_space_sector_propagator(&fs, &grid, 1e-11)?;
    let mut worst: f64 = 0.0;
    for s in 0..n {
        let d = sector_propagator_column(&h, s, grid)?;
        for i in 0..grid.len() {
            let phase = C64::from_polar(1.0, -h.common_phase(grid.time(i)));
            for a in 0..n {
                worst = worst.max((run.entry(i, a, s) - phase * d.amplitudes[a][i]).norm());
            }
        }
    }
    Ok(result("sector/full-space equivalence", worst, QUADRATURE_TOLERANCE, "4-spin chain over one rotor period".into()))
}

// The direct solve satisfies its own discrete equation to rounding.
fn volterra_residual(_: &VerifyConfig) -> Result<CheckResult> {
    let grid = TimeGrid::new(0.0, 3.0, 121)?;
    let k = lift_scalar(grid, |tp, t| C64::new(0.3 * (tp - t).cos(), -0.4 * t))?;
    let mut worst = residual(&k, &solve_direct(&k)?)?;
    let p = BlochSiegertParams::resonant(0.5, 1.0)?;
    let (up, _) = bs_kernel(&p, TimeGrid::new(0.0, 10.0, 401)?)?;
    let scale = 1.0 + up.max_abs();
    worst = worst.max(residual(&up, &solve_direct(&up)?)? / scale);
    let zero = TwoTimeFunction::zero(grid, 2, 2);
    worst = worst.max(residual(&zero, &solve_direct(&zero)?)?);
    Ok(result("Volterra residual", worst, 1e-10, "smooth scalar, Bloch-Siegert and zero kernels".into()))
}
