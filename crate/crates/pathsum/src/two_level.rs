//! General two-level systems and the Bloch-Siegert Hamiltonian.
//!
//! For `H = [[h↑, h↑↓], [h↓↑, h↓]]` the path-sum over the two-vertex graph
//! gives `U↑↑ = 1 * G↑` with `G↑ = (1_* - K↑)^{*-1}` and
//! `K↑ = -i h↑ + (-i h↑↓) * F↓ * (-i h↓↑)`, where
//! `F↓ = δ + (-i h↓)(t') exp(-i ∫_t^{t'} h↓)` is the isolated evolution of
//! `↓`.  The off-diagonal entry is `U↓↑ = 1 * F↓ * (-i h↓↑) * G↑`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::block::{Block, ZERO};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::star::{lift, lift_one_time_scalar, star_column, star_product, Column, TwoTimeFunction};
use crate::volterra::{closed_form_g, neumann_column, resolvent_column, ResolventMethod};
use crate::C64;

pub type ScalarFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

const I: C64 = C64::new(0.0, 1.0);

/// `H(t) = [[h_up, h_updown], [h_downup, h_down]]` in the basis `(↑, ↓)`.
#[derive(Clone)]
pub struct TwoLevelHamiltonian {
    pub h_up: ScalarFn,
    pub h_down: ScalarFn,
    pub h_updown: ScalarFn,
    pub h_downup: ScalarFn,
    hermitian: bool,
}

impl std::fmt::Debug for TwoLevelHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwoLevelHamiltonian")
            .field("hermitian", &self.hermitian)
            .finish_non_exhaustive()
    }
}

impl TwoLevelHamiltonian {
    /// Arbitrary (possibly non-Hermitian) entries.
    pub fn new(h_up: ScalarFn, h_down: ScalarFn, h_updown: ScalarFn, h_downup: ScalarFn) -> Self {
        Self {
            h_up,
            h_down,
            h_updown,
            h_downup,
            hermitian: false,
        }
    }

    /// Hermitian Hamiltonian from real diagonals and the `↑↓` entry.
    pub fn hermitian<A, B, C>(h_up: A, h_down: B, h_updown: C) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> C64 + Send + Sync + 'static,
    {
        let off = Arc::new(h_updown);
        let off2 = off.clone();
        Self {
            h_up: Arc::new(move |t| C64::new(h_up(t), 0.0)),
            h_down: Arc::new(move |t| C64::new(h_down(t), 0.0)),
            h_updown: Arc::new(move |t| off(t)),
            h_downup: Arc::new(move |t| off2(t).conj()),
            hermitian: true,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Row-major `H(t)`.
    pub fn matrix(&self, t: f64, out: &mut [C64]) {
        out[0] = (self.h_up)(t);
        out[1] = (self.h_updown)(t);
        out[2] = (self.h_downup)(t);
        out[3] = (self.h_down)(t);
    }

    /// Sample every entry on the grid: all finite, and Hermitian when flagged.
    pub fn check(&self, grid: &TimeGrid) -> Result<()> {
        let mut m = [ZERO; 4];
        for t in grid.times() {
            self.matrix(t, &mut m);
            if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite(format!("Hamiltonian at t = {t}")));
            }
            if self.hermitian {
                let scale = m.iter().fold(1.0f64, |a, z| a.max(z.norm()));
                let bad = (m[1] - m[2].conj()).norm() > 1e-12 * scale
                    || m[0].im.abs() > 1e-12 * scale
                    || m[3].im.abs() > 1e-12 * scale;
                if bad {
                    return Err(Error::InvalidParameter(format!("Hamiltonian not Hermitian at t = {t}")));
                }
            }
        }
        Ok(())
    }
}

fn lifted(grid: TimeGrid, f: &ScalarFn) -> Result<TwoTimeFunction> {
    lift_one_time_scalar(grid, |t| -I * f(t))
}

/// Isolated evolution `δ + a(t') exp(∫_t^{t'} a)` of a diagonal entry.
fn isolated(grid: TimeGrid, h: &ScalarFn) -> Result<TwoTimeFunction> {
    closed_form_g(&lifted(grid, h)?, 0.0)
}

/// Kernels `(K↑, K↓)` of the general solution, by quadrature on the grid.
pub fn general_kernel(h: &TwoLevelHamiltonian, grid: TimeGrid) -> Result<(TwoTimeFunction, TwoTimeFunction)> {
    h.check(&grid)?;
    let a_up = lifted(grid, &h.h_up)?;
    let a_down = lifted(grid, &h.h_down)?;
    let a_ud = lifted(grid, &h.h_updown)?;
    let a_du = lifted(grid, &h.h_downup)?;
    let f_up = isolated(grid, &h.h_up)?;
    let f_down = isolated(grid, &h.h_down)?;
    let k_up = a_up.add(&star_product(&a_ud, &star_product(&f_down, &a_du)?)?)?;
    let k_down = a_down.add(&star_product(&a_du, &star_product(&f_up, &a_ud)?)?)?;
    Ok((k_up, k_down))
}

/// `U(t_i, t_min)` of a two-level system.
#[derive(Debug, Clone)]
pub struct TwoLevelSolution {
    pub grid: TimeGrid,
    /// `[U↑↑, U↓↑, U↑↓, U↓↓]` histories.
    pub u: [Vec<C64>; 4],
}

impl TwoLevelSolution {
    pub fn up_up(&self) -> &[C64] {
        &self.u[0]
    }

    pub fn down_up(&self) -> &[C64] {
        &self.u[1]
    }

    pub fn up_down(&self) -> &[C64] {
        &self.u[2]
    }

    pub fn down_down(&self) -> &[C64] {
        &self.u[3]
    }

    pub fn matrix(&self, i: usize) -> Block {
        Block::from_rows(&[&[self.u[0][i], self.u[2][i]], &[self.u[1][i], self.u[3][i]]])
    }

    /// `P↑→↓(t) = |U↓↑|²`.
    pub fn transition_probability(&self) -> Vec<f64> {
        self.u[1].iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Solve a general two-level problem.  Diagonal entries come from the
/// resolvents `G↑`, `G↓`; off-diagonal ones from `1 * F * (-i h) * G`.
pub fn solve_2x2(h: &TwoLevelHamiltonian, grid: TimeGrid, method: ResolventMethod) -> Result<TwoLevelSolution> {
    h.check(&grid)?;
    let a_ud = lifted(grid, &h.h_updown)?;
    let a_du = lifted(grid, &h.h_downup)?;
    let f_up = isolated(grid, &h.h_up)?;
    let f_down = isolated(grid, &h.h_down)?;
    let a_up = lifted(grid, &h.h_up)?;
    let a_down = lifted(grid, &h.h_down)?;
    let k_up = a_up.add(&star_product(&a_ud, &star_product(&f_down, &a_du)?)?)?;
    let k_down = a_down.add(&star_product(&a_du, &star_product(&f_up, &a_ud)?)?)?;
    let g_up = resolvent_column(&k_up, method)?;
    let g_down = resolvent_column(&k_down, method)?;
    let uu = g_up.integrate();
    let du = star_column(&f_down, &star_column(&a_du, &g_up)?)?.integrate();
    let ud = star_column(&f_up, &star_column(&a_ud, &g_down)?)?.integrate();
    let dd = g_down.integrate();
    Ok(TwoLevelSolution {
        grid,
        u: [uu.scalars(), du.scalars(), ud.scalars(), dd.scalars()],
    })
}

/// Bloch-Siegert drive `β`, frequency `ω` and splitting `ω₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochSiegertParams {
    pub beta: f64,
    pub omega: f64,
    pub omega0: f64,
}

/// Relative distance `|ω - ω₀| / ω` below which the resonant formulas are used.
pub const RESONANCE_TOL: f64 = 1e-8;

impl BlochSiegertParams {
    pub fn new(beta: f64, omega: f64, omega0: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("ω = {omega} must be positive")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("β = {beta} must be non-negative")));
        }
        if !omega0.is_finite() {
            return Err(Error::InvalidParameter(format!("ω₀ = {omega0}")));
        }
        Ok(Self { beta, omega, omega0 })
    }

    pub fn resonant(beta: f64, omega: f64) -> Result<Self> {
        Self::new(beta, omega, omega)
    }

    pub fn is_resonant(&self) -> bool {
        (self.omega - self.omega0).abs() < RESONANCE_TOL * self.omega
    }

    /// Interaction-picture Hamiltonian: no diagonal,
    /// `h↑↓ = 2β cos(ωt) e^{-iω₀t}`, `h↓↑ = 2β cos(ωt) e^{iω₀t}`.
    pub fn rotating_frame(&self) -> TwoLevelHamiltonian {
        let p = *self;
        TwoLevelHamiltonian::hermitian(
            |_| 0.0,
            |_| 0.0,
            move |t| 2.0 * p.beta * (p.omega * t).cos() * C64::from_polar(1.0, -p.omega0 * t),
        )
    }

    /// Laboratory-frame Hamiltonian `[[ω₀/2, 2β cos ωt], [2β cos ωt, -ω₀/2]]`.
    pub fn lab_frame(&self) -> TwoLevelHamiltonian {
        let p = *self;
        TwoLevelHamiltonian::hermitian(
            move |_| p.omega0 / 2.0,
            move |_| -p.omega0 / 2.0,
            move |t| C64::new(2.0 * p.beta * (p.omega * t).cos(), 0.0),
        )
    }

    /// Drive period `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// `K↑(t', t)` in closed form.
pub fn bs_k_up(p: &BlochSiegertParams, tp: f64, t: f64) -> C64 {
    let (b, w, w0) = (p.beta, p.omega, p.omega0);
    if p.is_resonant() {
        let a = I * C64::from_polar(1.0, 2.0 * w * tp) - I * C64::from_polar(1.0, 2.0 * w * t)
            - C64::new(2.0 * w * (tp - t), 0.0);
        b * b / w * a * C64::from_polar(1.0, -w * tp) * (w * tp).cos()
    } else {
        let k = |s: f64| I * w0 * (w * s).cos() + w * (w * s).sin();
        4.0 * b * b / (w * w - w0 * w0)
            * (w * tp).cos()
            * (k(t) * C64::from_polar(1.0, -w0 * (tp - t)) - k(tp))
    }
}

/// `K↓(t', t)` in closed form.
pub fn bs_k_down(p: &BlochSiegertParams, tp: f64, t: f64) -> C64 {
    let (b, w, w0) = (p.beta, p.omega, p.omega0);
    if p.is_resonant() {
        let a = -I + I * C64::from_polar(1.0, 2.0 * (tp - t) * w)
            + 2.0 * w * (t - tp) * C64::from_polar(1.0, 2.0 * w * tp);
        b * b / w * a * C64::from_polar(1.0, -w * tp) * (w * tp).cos()
    } else {
        let k = |s: f64| C64::from_polar(w + w0, 2.0 * w * s) - (w - w0);
        I * b * b / (w * w - w0 * w0)
            * (1.0 + C64::from_polar(1.0, -2.0 * w * tp))
            * (k(tp) - k(t) * C64::from_polar(1.0, (w + w0) * (tp - t)))
    }
}

/// Closed-form Bloch-Siegert kernels `(K↑, K↓)` sampled on the grid.
pub fn bs_kernel(p: &BlochSiegertParams, grid: TimeGrid) -> Result<(TwoTimeFunction, TwoTimeFunction)> {
    let up = lift(grid, 1, 1, |tp, t, out| out[0] = bs_k_up(p, tp, t))?;
    let down = lift(grid, 1, 1, |tp, t, out| out[0] = bs_k_down(p, tp, t))?;
    Ok((up, down))
}

/// `P^(n)↑→↓` for each requested Neumann order, from one shared trace:
/// `U↓↑^(n) = 1 * (-i h↓↑) * G↑^(n)` in the rotating frame.
pub fn transition_probabilities(p: &BlochSiegertParams, grid: TimeGrid, orders: &[usize]) -> Result<Vec<Vec<f64>>> {
    let top = orders.iter().copied().max().unwrap_or(0);
    let up = lift(grid, 1, 1, |tp, t, out| out[0] = bs_k_up(p, tp, t))?;
    let trace = neumann_column(&up, top)?;
    let h = p.rotating_frame();
    let a_du = lifted(grid, &h.h_downup)?;
    orders
        .iter()
        .map(|&n| {
            let u = star_column(&a_du, &trace.partial_sums[n])?.integrate();
            Ok(u.values.iter().map(|z| z.norm_sqr()).collect())
        })
        .collect()
}

/// Single-order convenience wrapper around [`transition_probabilities`].
pub fn transition_probability(p: &BlochSiegertParams, grid: TimeGrid, order: usize) -> Result<Vec<f64>> {
    Ok(transition_probabilities(p, grid, &[order])?.remove(0))
}

/// `U↓↑` from an arbitrary `G↑` column.
pub fn down_up_from_column(p: &BlochSiegertParams, g_up: &Column) -> Result<Column> {
    let h = p.rotating_frame();
    let a_du = lifted(g_up.grid, &h.h_downup)?;
    Ok(star_column(&a_du, g_up)?.integrate())
}

/// Order-0 resonant transition probability in closed form.
pub fn p0_closed_form(p: &BlochSiegertParams, t: f64) -> f64 {
    let (b, w) = (p.beta, p.omega);
    b * b * t / w * (2.0 * w * t).sin() + b * b / (2.0 * w * w) + b * b * t * t
        - b * b / (2.0 * w * w) * (2.0 * w * t).cos()
}

/// Largest `β/ω` for which the radical spin-flip formula is real:
/// `2 √((11 - √30) / 91)`.
pub fn spin_flip_validity_bound() -> f64 {
    2.0 * ((11.0 - 30f64.sqrt()) / 91.0).sqrt()
}

/// Spin-flip time and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinFlip {
    pub time: f64,
    /// False when `β/ω` is beyond the radical's range and the time is the
    /// numeric argmax of `P^(13)`.
    pub radical: bool,
}

/// Radical spin-flip formula, `None` outside its range.
pub fn spin_flip_radical(p: &BlochSiegertParams) -> Option<f64> {
    let (b, w) = (p.beta, p.omega);
    let inner = 91.0 * b.powi(8) - 88.0 * b.powi(6) * w * w + 16.0 * b.powi(4) * w.powi(4);
    if inner < 0.0 || b / w >= spin_flip_validity_bound() {
        return None;
    }
    let arg = 12.0 / (b * b) - 15.0 / (w * w) + 3f64.sqrt() / (b.powi(4) * w * w) * inner.sqrt();
    (arg >= 0.0).then(|| arg.sqrt() / (2.0 * 2f64.sqrt()))
}

/// `(1/β) √((3 + √3)/2)`, the weak-coupling limit of the spin-flip time.
pub fn spin_flip_leading(beta: f64) -> f64 {
    ((3.0 + 3f64.sqrt()) / 2.0).sqrt() / beta
}

/// Time at which `P↑→↓` first peaks close to 1 on resonance.
pub fn spin_flip_time(p: &BlochSiegertParams) -> Result<SpinFlip> {
    if p.beta == 0.0 {
        return Err(Error::InvalidParameter("no spin flip without drive (β = 0)".into()));
    }
    if !p.is_resonant() {
        return Err(Error::InvalidParameter("spin-flip time is defined on resonance".into()));
    }
    if let Some(t) = spin_flip_radical(p) {
        return Ok(SpinFlip { time: t, radical: true });
    }
    // first peak lies before twice the weak-coupling estimate
    let horizon = 2.0 * spin_flip_leading(p.beta);
    let grid = TimeGrid::new(0.0, horizon, 1201)?;
    let prob = transition_probability(p, grid, 13)?;
    let (imax, _) = prob
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(SpinFlip {
        time: grid.time(imax),
        radical: false,
    })
}
