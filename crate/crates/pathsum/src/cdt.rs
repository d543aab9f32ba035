//! Coherent destruction of tunneling from the order-0 accelerated expansion.
//!
//! Lab frame `H = (ω₀/2) σz + 2β cos(ωt) σx`, split as `K1 = -2iβ cos(ωt) σx`
//! (dominant when `β ≫ ω₀`) and `K2 = -iω₀ σz / 2`.  With
//! `θ(t) = (2β/ω) sin ωt` every integral below depends on `t` only through
//! `sin θ(t)`, `cos θ(t)` and cumulative one-time integrals, so whole
//! histories cost `O(n)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::block::Block;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::quad::GaussLegendre;
use crate::special::{bessel_j, bessel_j0_zeros, bessel_j_all, bracket_roots, struve_h1};
use crate::star::{lift_one_time, Column};
use crate::two_level::BlochSiegertParams;
use crate::volterra::{accelerated0_column, closed_form_column, closed_form_g};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

/// Default number of drive periods for time averages.
pub const DEFAULT_PERIODS: usize = 10;

/// Bracketing step and bisection tolerance for special-function roots.
pub const ROOT_STEP: f64 = 0.05;
pub const ROOT_TOL: f64 = 1e-9;

const GL_POINTS: usize = 10;

/// Cumulative integrals `∫_0^{t_k} f` at increasing times, with the
/// integrand resolved to `rate` radians per unit time.
fn cumulative<const K: usize, F>(times: &[f64], rate: f64, f: F) -> Vec<[C64; K]>
where
    F: Fn(f64) -> [C64; K],
{
    let gl = GaussLegendre::new(GL_POINTS);
    let mut acc = [C64::new(0.0, 0.0); K];
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        assert!(t >= prev, "times must be increasing from 0");
        let panels = ((t - prev) * rate / 2.0).ceil().max(1.0) as usize;
        let w = (t - prev) / panels as f64;
        for k in 0..panels {
            let a = prev + k as f64 * w;
            for (x, wt) in gl.nodes_weights(a, a + w) {
                let v = f(x);
                for c in 0..K {
                    acc[c] += v[c] * wt;
                }
            }
        }
        prev = t;
        out.push(acc);
    }
    out
}

fn theta(p: &BlochSiegertParams, t: f64) -> f64 {
    2.0 * p.beta / p.omega * (p.omega * t).sin()
}

/// Highest angular rate in the integrands.
fn rate(p: &BlochSiegertParams) -> f64 {
    4.0 * p.beta + p.omega + p.omega0.abs()
}

/// `U^(acc,0)↑↑(t)` at each time.
pub fn return_amplitude_acc0(p: &BlochSiegertParams, times: &[f64]) -> Vec<C64> {
    let w0 = p.omega0;
    // sin²((β/ω)(sin ωτ - sin ωt)) = (1 - cos(θτ - θt)) / 2
    let ints = cumulative(times, rate(p), |tau| {
        let e = C64::from_polar(1.0, -w0 * tau / 2.0);
        let th = theta(p, tau);
        [e, e * th.cos(), e * th.sin()]
    });
    times
        .iter()
        .zip(ints)
        .map(|(&t, [e, c, s])| {
            let th = theta(p, t);
            let integral = I * w0 / 2.0 * (e - c * th.cos() - s * th.sin());
            th.cos() + C64::from_polar(1.0, -w0 * t / 2.0) - 1.0 + integral
        })
        .collect()
}

/// Return probability `P↑→↑` of the order-0 accelerated propagator.
pub fn return_probability_acc0(p: &BlochSiegertParams, t: f64) -> f64 {
    return_amplitude_acc0(p, &[t])[0].norm_sqr()
}

/// [`return_probability_acc0`] at increasing times.
pub fn return_probability_history(p: &BlochSiegertParams, times: &[f64]) -> Vec<f64> {
    return_amplitude_acc0(p, times).iter().map(|z| z.norm_sqr()).collect()
}

/// Infinite-time average `½(1 + J₀(4β/ω))`.
pub fn mean_return_probability(p: &BlochSiegertParams) -> f64 {
    0.5 * (1.0 + bessel_j(0, 4.0 * p.beta / p.omega))
}

/// `P_{ψ-→ψ+}` in the `ω₀ ≪ (β/ω)^{1/2}` regime, at increasing times.
pub fn psi_transition_history(p: &BlochSiegertParams, times: &[f64]) -> Vec<f64> {
    let a = 4.0 * p.beta / p.omega;
    let w = p.omega;
    let ints = cumulative(times, rate(p), |tau| {
        let x = a * (w * tau).sin();
        [C64::new(x.cos(), x.sin())]
    });
    times
        .iter()
        .zip(ints)
        .map(|(&t, [cs])| {
            let big = a * (w * t).sin();
            // sin(A - B) and cos(A - B) integrated over τ
            let si = big.sin() * cs.re - big.cos() * cs.im;
            let co = big.cos() * cs.re + big.sin() * cs.im;
            p.omega0 * p.omega0 / 4.0 * (si * si + co * co)
        })
        .collect()
}

pub fn psi_transition_acc0(p: &BlochSiegertParams, t: f64) -> f64 {
    psi_transition_history(p, &[t])[0]
}

/// `⟨σx⟩` starting from `|↑⟩`, at increasing times.  `simplified` selects
/// `ω₀ ∫ sin((4β/ω) sin ωτ) dτ`; otherwise the two-integral form with
/// `(2β/ω)` arguments and `ω₀` phases is used.
pub fn sigma_x_history(p: &BlochSiegertParams, times: &[f64], simplified: bool) -> Vec<f64> {
    let w0 = p.omega0;
    if simplified {
        let a = 4.0 * p.beta / p.omega;
        let ints = cumulative(times, rate(p), |tau| [C64::new((a * (p.omega * tau).sin()).sin(), 0.0)]);
        return ints.iter().map(|[s]| w0 * s.re).collect();
    }
    let ints = cumulative(times, rate(p), |tau| {
        let e = C64::from_polar(1.0, w0 * tau / 2.0);
        let th = theta(p, tau);
        [e * th.cos(), e * th.sin()]
    });
    times
        .iter()
        .zip(ints)
        .map(|(&t, [ec, es])| {
            let th = theta(p, t);
            let first = w0 * es.re;
            // sin(ω₀t/4 - ω₀τ/2) sin(θt - θτ), expanded into one-time integrals
            let (s4, c4) = (w0 * t / 4.0).sin_cos();
            let (st, ct) = th.sin_cos();
            let inner = s4 * (st * ec.re - ct * es.re) - c4 * (st * ec.im - ct * es.im);
            first + 2.0 * w0 * s4 * inner
        })
        .collect()
}

pub fn sigma_x_acc0(p: &BlochSiegertParams, t: f64, simplified: bool) -> f64 {
    sigma_x_history(p, &[t], simplified)[0]
}

/// Infinite-time average of the simplified `⟨σx⟩`:
/// `(2ω₀/ω) Σ J_{2n+1}(4β/ω) / (2n+1)`.
pub fn mean_sigma_x(p: &BlochSiegertParams, terms: usize) -> f64 {
    let z = 4.0 * p.beta / p.omega;
    let j = bessel_j_all(2 * terms + 1, z);
    let s: f64 = (0..terms).map(|n| j[2 * n + 1] / (2 * n + 1) as f64).sum();
    2.0 * p.omega0 / p.omega * s
}

/// `(1/T) ∫_0^T f` with `T` an integer number of drive periods, by
/// composite Gauss-Legendre on the history `f`.
pub fn time_average<F>(p: &BlochSiegertParams, periods: usize, history: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if periods == 0 {
        return Err(Error::InvalidParameter("time average needs at least one period".into()));
    }
    let total = periods as f64 * p.period();
    let panels = ((total * rate(p) / 2.0).ceil() as usize).max(periods);
    let gl = GaussLegendre::new(GL_POINTS);
    let w = total / panels as f64;
    let mut nodes = Vec::with_capacity(panels * GL_POINTS);
    let mut weights = Vec::with_capacity(panels * GL_POINTS);
    for k in 0..panels {
        let a = k as f64 * w;
        for (x, wt) in gl.nodes_weights(a, a + w) {
            nodes.push(x);
            weights.push(wt);
        }
    }
    let v = history(&nodes);
    Ok(v.iter().zip(&weights).map(|(f, w)| f * w).sum::<f64>() / total)
}

/// Lab-frame order-0 accelerated propagator `1 * G1 * G2` computed on a grid
/// from the exact individual resolvents.
pub fn acc0_propagator(p: &BlochSiegertParams, grid: TimeGrid) -> Result<Column> {
    let (b, w, w0) = (p.beta, p.omega, p.omega0);
    let k1 = lift_one_time(grid, 2, 2, |t, out| {
        let z = -I * 2.0 * b * (w * t).cos();
        out.copy_from_slice(&[C64::new(0.0, 0.0), z, z, C64::new(0.0, 0.0)]);
    })?;
    let k2 = lift_one_time(grid, 2, 2, |_, out| {
        out.copy_from_slice(&[-I * w0 / 2.0, C64::new(0.0, 0.0), C64::new(0.0, 0.0), I * w0 / 2.0]);
    })?;
    let g1 = closed_form_g(&k1, 1e-10)?;
    let g2 = closed_form_column(&k2, 1e-10)?;
    Ok(accelerated0_column(&g1, &g2)?.integrate())
}

/// `|ψ±⟩ = (|↑⟩ ± |↓⟩)/√2`.
pub fn psi_states() -> (Block, Block) {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    (Block::from_rows(&[&[s], &[s]]), Block::from_rows(&[&[s], &[-s]]))
}

/// Extremum condition of the averaged `⟨σx⟩`: `1 - (π/2) H₁(x)`.
pub fn struve_condition(x: f64) -> f64 {
    1.0 - PI / 2.0 * struve_h1(x)
}

/// Roots of the Struve condition in a range of `4β/ω`, with the `J₀`
/// zeros in the same range and the gaps between the `n`-th of each.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationExtrema {
    pub roots: Vec<f64>,
    pub j0_zeros: Vec<f64>,
    /// `Δ_n = |j_{0,n} - r_n|`, `n = 1, 2, ...`.
    pub gaps: Vec<f64>,
}

pub fn fluctuation_extrema(lo: f64, hi: f64) -> Result<FluctuationExtrema> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("range [{lo}, {hi}] must be positive")));
    }
    let roots = bracket_roots(struve_condition, lo, hi, ROOT_STEP, ROOT_TOL);
    if roots.is_empty() {
        return Err(Error::NoRoot(lo, hi));
    }
    let count = (hi / PI).ceil() as usize + 1;
    let j0_zeros: Vec<f64> = bessel_j0_zeros(count)
        .into_iter()
        .filter(|z| (lo..=hi).contains(z))
        .collect();
    let gaps = j0_zeros.iter().zip(&roots).map(|(z, r)| (z - r).abs()).collect();
    Ok(FluctuationExtrema { roots, j0_zeros, gaps })
}

/// Truncated expansion
/// `sin(α + z sin φ) = sin α (J₀ + 2 Σ J_{2n} cos 2nφ) + 2 cos α Σ J_{2n+1} sin (2n+1)φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselSeries {
    /// `sin α J₀(z)` followed by `2 sin α J_{2n}(z) cos(2nφ)`, `n = 1..=order`.
    pub even: Vec<f64>,
    /// `2 cos α J_{2n+1}(z) sin((2n+1)φ)`, `n = 0..=order`.
    pub odd: Vec<f64>,
}

impl BesselSeries {
    pub fn value(&self) -> f64 {
        // smallest terms first
        self.even.iter().rev().sum::<f64>() + self.odd.iter().rev().sum::<f64>()
    }
}

pub fn bessel_expand(alpha: f64, z: f64, phi: f64, order: usize) -> BesselSeries {
    let j = bessel_j_all(2 * order + 1, z);
    let (sa, ca) = alpha.sin_cos();
    let mut even = vec![sa * j[0]];
    even.extend((1..=order).map(|n| 2.0 * sa * j[2 * n] * (2.0 * n as f64 * phi).cos()));
    let odd = (0..=order)
        .map(|n| 2.0 * ca * j[2 * n + 1] * ((2 * n + 1) as f64 * phi).sin())
        .collect();
    BesselSeries { even, odd }
}

/// Histories and averages of the CDT observables.
#[derive(Debug, Clone)]
pub struct CdtObservables {
    pub params: BlochSiegertParams,
    pub times: Vec<f64>,
    pub return_prob: Vec<f64>,
    pub psi_transition: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub periods: usize,
    pub mean_return_prob: f64,
    pub mean_psi_transition: f64,
    pub mean_sigma_x: f64,
    /// `½(1 + J₀(4β/ω))`.
    pub predicted_mean_return_prob: f64,
    /// Series value of the averaged simplified `⟨σx⟩`.
    pub predicted_mean_sigma_x: f64,
    pub j0: f64,
    pub h1: f64,
}

pub fn cdt_observables(p: &BlochSiegertParams, grid: &TimeGrid, periods: usize) -> Result<CdtObservables> {
    if grid.t_min() != 0.0 {
        return Err(Error::InvalidGrid("CDT histories start at t = 0".into()));
    }
    let times = grid.times();
    let x = 4.0 * p.beta / p.omega;
    Ok(CdtObservables {
        params: *p,
        return_prob: return_probability_history(p, &times),
        psi_transition: psi_transition_history(p, &times),
        sigma_x: sigma_x_history(p, &times, true),
        times,
        periods,
        mean_return_prob: time_average(p, periods, |t| return_probability_history(p, t))?,
        mean_psi_transition: time_average(p, periods, |t| psi_transition_history(p, t))?,
        mean_sigma_x: time_average(p, periods, |t| sigma_x_history(p, t, true))?,
        predicted_mean_return_prob: mean_return_probability(p),
        predicted_mean_sigma_x: mean_sigma_x(p, 40),
        j0: bessel_j(0, x),
        h1: struve_h1(x),
    })
}
