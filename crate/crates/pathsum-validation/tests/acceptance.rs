//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.  Sub-measurements are printed indented above each line.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use pathsum::block::Block;
use pathsum::cdt::{fluctuation_extrema, psi_transition_history, return_probability_history, sigma_x_history, time_average};
use pathsum::graph::{
    evaluate, green_function, green_function_eliminated, green_functions, propagator_block, propagator_column,
    DynamicalGraph, GreenOptions,
};
use pathsum::many_body::{
    block_graph, contiguous_partition, sector_hamiltonian, sector_propagator_column, spin_diffusion, MasSchedule,
    SpinGeometry, DEFAULT_ROTOR_FREQUENCY,
};
use pathsum::oracle::{full_space, full_space_sector_propagator, propagate, walk_sum, PropagationRun};
use pathsum::special::{bessel_j, bessel_j0_zeros};
use pathsum::two_level::{
    p0_closed_form, solve_2x2, spin_flip_radical, transition_probabilities, transition_probability,
    BlochSiegertParams, TwoLevelHamiltonian,
};
use pathsum::verify::{run_verify, VerifyConfig};
use pathsum::volterra::ResolventMethod;
use pathsum::{Result, TimeGrid, C64};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, summary: String::new(), details: Vec::new() }
    }

    /// Record a sub-check and fold it into the verdict.
    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.details.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(format!("     {line}"));
    }

    fn done(mut self, summary: impl Into<String>) -> Result<Self> {
        self.summary = summary.into();
        Ok(self)
    }
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lab_run(p: &BlochSiegertParams, grid: &TimeGrid, rtol: f64) -> Result<PropagationRun> {
    let h = p.lab_frame();
    propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, grid, rtol)
}

// Times at which P crosses above 0.6 after being below 0.4, and back.
fn flip_times(times: &[f64], prob: &[f64]) -> Vec<f64> {
    let mut up = false;
    let mut out = Vec::new();
    for (t, &v) in times.iter().zip(prob) {
        if (!up && v > 0.6) || (up && v < 0.4) {
            up = !up;
            out.push(*t);
        }
    }
    out
}

fn max_err_until(times: &[f64], a: &[f64], b: &[f64], until: f64) -> f64 {
    (0..times.len()).filter(|&i| times[i] <= until).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Result<Outcome> {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = TimeGrid::new(0.0, 10.0, 2001)?;
    let mut overall: f64 = 0.0;
    for k in 0..5 {
        let c: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let w: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.2..2.0));
        let h = TwoLevelHamiltonian::hermitian(
            move |t| c[0] + c[1] * (w[0] * t).cos(),
            move |t| c[2] + c[3] * (w[1] * t).sin(),
            move |t| C64::new(c[4] + c[5] * (w[2] * t).cos(), c[6] + c[7] * (w[2] * t).sin()) * (0.5 + 0.5 * c[8].abs()),
        );
        let t0 = Instant::now();
        let sol = solve_2x2(&h, grid, ResolventMethod::Direct)?;
        let secs = t0.elapsed().as_secs_f64();
        let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, &grid, 1e-11)?;
        let err = (0..grid.len()).map(|i| sol.matrix(i).sub(&run.at(i)).max_abs()).fold(0.0, f64::max);
        overall = overall.max(err);
        o.check(err < 1e-4 && secs < 30.0, format!("hamiltonian {k}: max entry error {err:.2e}, solve {secs:.2} s"));
    }
    o.done(format!("max entry error {overall:.2e} (< 1e-4), each solve < 30 s"))
}

fn criterion_2() -> Result<Outcome> {
    let mut o = Outcome::new();
    for b in [0.5, 0.7, 0.9, 1.2, 1.6, 2.0, 3.5, 5.0, 15.0] {
        let p = BlochSiegertParams::resonant(b, 1.0)?;
        // room for four and a half full flips of the weak-coupling estimate
        let horizon = 9.0 * PI / (2.0 * b) + 1.0;
        let grid = TimeGrid::new(0.0, horizon, 6001)?;
        let times = grid.times();
        let oracle = lab_run(&p, &grid, 1e-11)?.probabilities(1, 0);
        let flips = flip_times(&times, &oracle);
        let probs = transition_probabilities(&p, grid, &[3, 13])?;
        match flips.first() {
            Some(&t1) => {
                let e3 = max_err_until(&times, &probs[0], &oracle, t1);
                o.check(e3 < 5e-2, format!("β/ω = {b}: order 3 error {e3:.2e} up to first flip t = {t1:.3}"));
            }
            None => o.check(false, format!("β/ω = {b}: oracle never flips before t = {horizon:.2}")),
        }
        if b >= 1.2 {
            match flips.get(3) {
                Some(&t4) => {
                    let e13 = max_err_until(&times, &probs[1], &oracle, t4);
                    o.check(e13 < 5e-2, format!("β/ω = {b}: order 13 error {e13:.2e} up to fourth flip t = {t4:.3}"));
                }
                None => o.check(false, format!("β/ω = {b}: only {} flips before t = {horizon:.2}", flips.len())),
            }
        }
    }
    o.done("P^(13) within 5e-2 through 4 flips for β/ω >= 1.2, P^(3) through the first flip")
}

fn criterion_3() -> Result<Outcome> {
    let mut o = Outcome::new();
    let mut overall: f64 = 0.0;
    for w0 in [2.0, 8.0] {
        for b in [0.7, 1.6, 3.5] {
            let p = BlochSiegertParams::new(b, 1.0, w0)?;
            let grid = TimeGrid::new(0.0, 2.0 * p.period(), 4001)?;
            let p4 = transition_probability(&p, grid, 4)?;
            let oracle = lab_run(&p, &grid, 1e-11)?.probabilities(1, 0);
            let e = worst(&p4, &oracle);
            overall = overall.max(e);
            o.check(e < 5e-2, format!("ω₀ = {w0}ω, β/ω = {b}: order 4 max error {e:.2e}"));
        }
    }
    o.done(format!("worst order-4 error {overall:.2e} over 2 drive periods (< 5e-2)"))
}

fn criterion_4() -> Result<Outcome> {
    let mut o = Outcome::new();
    let p = BlochSiegertParams::resonant(0.05, 1.0)?;
    let grid = TimeGrid::new(0.0, 5.0, 2001)?;
    let p0 = transition_probability(&p, grid, 0)?;
    let exact: Vec<f64> = grid.times().into_iter().map(|t| p0_closed_form(&p, t)).collect();
    let e = worst(&p0, &exact);
    o.check(e < 1e-8, format!("β/ω = 0.05, t in [0, 5/ω]: max |P^(0) - closed form| {e:.2e}"));
    o.done(format!("pointwise error {e:.2e} (< 1e-8)"))
}

fn criterion_5() -> Result<Outcome> {
    let mut o = Outcome::new();
    let mut overall: f64 = 0.0;
    for b in [0.1, 0.2, 0.3, 0.4] {
        let p = BlochSiegertParams::resonant(b, 1.0)?;
        let radical = spin_flip_radical(&p).unwrap_or(f64::NAN);
        // first maximum of the exact P, searched around the weak-coupling flip
        let hi = 1.4 * PI / (2.0 * b);
        let grid = TimeGrid::new(0.0, hi, (hi / 1e-3) as usize + 1)?;
        let prob = lab_run(&p, &grid, 1e-12)?.probabilities(1, 0);
        let lo = (0.6 * PI / (2.0 * b) / grid.step()) as usize;
        let imax = (lo..grid.len()).fold(lo, |m, i| if prob[i] > prob[m] { i } else { m });
        let argmax = grid.time(imax);
        let d = (radical - argmax).abs();
        overall = overall.max(d);
        o.check(d < 0.05, format!("β/ω = {b}: radical {radical:.4}, oracle argmax {argmax:.4}, |Δ| {d:.3e}"));
    }
    let lead = ((3.0 + 3f64.sqrt()) / 2.0).sqrt();
    let b = 1e-3;
    let scaled = spin_flip_radical(&BlochSiegertParams::resonant(b, 1.0)?).unwrap_or(f64::NAN) * b;
    let rel = (scaled / lead - 1.0).abs();
    o.check(rel < 1e-2, format!("leading coefficient: t_sf β = {scaled:.5} at β/ω = 1e-3 vs {lead:.5}, rel {rel:.1e}"));
    o.done(format!("worst |Δt_sf| {overall:.3e} (< 0.05/ω), leading coefficient within {rel:.1e}"))
}

fn criterion_6() -> Result<Outcome> {
    let mut o = Outcome::new();
    for (b, w) in [(30.0, 4.0), (30.0, 20.0), (30.0, 100.0)] {
        let p = BlochSiegertParams::new(b, w, 1.0)?;
        let avg = time_average(&p, 10, |t| return_probability_history(&p, t))?;
        let want = 0.5 * (1.0 + bessel_j(0, 4.0 * b / w));
        let d = (avg - want).abs();
        o.check(d < 1e-2, format!("β/ω₀ = {b}, ω/ω₀ = {w}: average {avg:.5} vs ½(1+J₀) {want:.5}, |Δ| {d:.2e}"));
    }
    for (k, z) in bessel_j0_zeros(3).into_iter().enumerate() {
        let p = BlochSiegertParams::new(z * 25.0, 100.0, 1.0)?;
        let avg = time_average(&p, 10, |t| return_probability_history(&p, t))?;
        let d = (avg - 0.5).abs();
        o.check(d < 1e-2, format!("J₀ zero {}: average {avg:.5}, |Δ| from 0.5 {d:.2e}", k + 1));
    }
    o.done("10-period averages within 1e-2 of ½(1+J₀(4β/ω))")
}

fn criterion_7() -> Result<Outcome> {
    let mut o = Outcome::new();
    let zeros = bessel_j0_zeros(4);
    let s = FRAC_1_SQRT_2;
    for k in [0, 3] {
        // ω₀ = ω/100 with 4β/ω on the zero
        let p = BlochSiegertParams::new(zeros[k] * 25.0, 100.0, 1.0)?;
        let grid = TimeGrid::new(0.0, 3.0 * p.period(), 1201)?;
        let run = lab_run(&p, &grid, 1e-12)?;
        let psi = psi_transition_history(&p, &grid.times());
        let sx = sigma_x_history(&p, &grid.times(), true);
        let (mut e_psi, mut e_sx): (f64, f64) = (0.0, 0.0);
        for i in 0..grid.len() {
            let u = run.at(i);
            let a0 = (u.get(0, 0) - u.get(0, 1)) * s;
            let a1 = (u.get(1, 0) - u.get(1, 1)) * s;
            e_psi = e_psi.max((((a0 + a1) * s).norm_sqr() - psi[i]).abs());
            let exact_sx = 2.0 * (u.get(0, 0).conj() * u.get(1, 0)).re;
            e_sx = e_sx.max((exact_sx - sx[i]).abs());
        }
        o.check(e_psi < 1e-7, format!("J₀ zero {}: ψ- to ψ+ transition error {e_psi:.2e}", k + 1));
        o.check(e_sx < 1e-3, format!("J₀ zero {}: simplified <σx> error {e_sx:.2e}", k + 1));
    }
    o.done("ψ transition < 1e-7 and <σx> < 1e-3 against the oracle")
}

fn criterion_8() -> Result<Outcome> {
    let mut o = Outcome::new();
    let f = fluctuation_extrema(0.1, 40.0)?;
    let g = &f.gaps;
    o.check((0.3..=0.5).contains(&g[0]), format!("Δ1 = {:.4}", g[0]));
    o.check((0.02..=0.04).contains(&g[1]), format!("Δ2 = {:.4}", g[1]));
    for n in 5..=10 {
        let v = g[n - 1] * 2.0 * PI * n as f64;
        o.check((0.8..=1.2).contains(&v), format!("Δ{n} 2πn = {v:.3} (Δ{n} = {:.5})", g[n - 1]));
    }
    o.done("Δ1 in [0.3, 0.5], Δ2 in [0.02, 0.04], Δn 2πn in [0.8, 1.2] for n = 5..10")
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

fn constant_graph(h: &Block, grid: TimeGrid) -> Result<DynamicalGraph> {
    let n = h.rows;
    let parts: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let data = h.data.clone();
    DynamicalGraph::from_hamiltonian(move |_, out| out.copy_from_slice(&data), n, &parts, grid)
}

fn criterion_9() -> Result<Outcome> {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let grid = TimeGrid::new(0.0, 2.0, 161)?;
    let (mut spread, mut depth_ok): (f64, bool) = (0.0, true);
    for _ in 0..10 {
        let g = constant_graph(&random_hermitian(&mut rng, 4, 0.6), grid)?;
        let (s, t) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let e = green_function(&g, s, t)?;
        depth_ok &= e.depth() <= g.len();
        let reference = evaluate(&e, &g, ResolventMethod::Direct)?;
        let mut order: Vec<usize> = (0..4).collect();
        for _ in 0..4 {
            order.shuffle(&mut rng);
            let e = green_function_eliminated(&g, s, t, &order)?;
            depth_ok &= e.depth() <= g.len();
            spread = spread.max(evaluate(&e, &g, ResolventMethod::Direct)?.max_diff(&reference));
        }
    }
    o.check(spread < 1e-6, format!("elimination order: max spread {spread:.2e} over 10 graphs x 4 orders"));
    let grid = TimeGrid::new(0.0, 1.0, 801)?;
    let mut walk: f64 = 0.0;
    for _ in 0..3 {
        let g = constant_graph(&random_hermitian(&mut rng, 3, 0.3), grid)?;
        let (s, t) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let u = propagator_block(&g, s, t, ResolventMethod::Direct)?;
        let sums = walk_sum(&g, s, t, 1.0, 14, 100_000_000)?;
        walk = walk.max((sums[14].get(0, 0) - u.scalar(grid.len() - 1)).norm());
    }
    o.check(walk < 1e-6, format!("walk sums up to length 14 vs evaluate: {walk:.2e}"));
    for n in 1..=8 {
        let g = constant_graph(&random_hermitian(&mut rng, n, 1.0), TimeGrid::new(0.0, 1.0, 5)?)?;
        let targets: Vec<usize> = (0..n).collect();
        let e = green_functions(&g, 0, &targets, &GreenOptions::default())?;
        depth_ok &= e.depth() <= n;
    }
    o.check(depth_ok, "ladder depth <= |V| on every expression built above and on complete graphs up to 8 vertices".into());
    o.done(format!("order spread {spread:.2e}, walk-sum gap {walk:.2e}, ladder depth bounded"))
}

fn criterion_10() -> Result<Outcome> {
    let mut o = Outcome::new();
    let mas = MasSchedule::new(DEFAULT_ROTOR_FREQUENCY)?;
    let period = mas.period().unwrap_or(1.0);
    for n in [2usize, 4, 6] {
        let geom = SpinGeometry::zigzag_chain(n, 2.2)?;
        let offsets: Vec<f64> = (0..n).map(|k| 2.0 * PI * 3.0 * k as f64).collect();
        let h = sector_hamiltonian(&geom, &mas, &offsets)?;
        let grid = TimeGrid::new(0.0, period, 1201)?;
        let fs = full_space(&h.couplings, &offsets)?;
        let run = full_space_sector_propagator(&fs, &grid, 1e-11)?;
        let mut e: f64 = 0.0;
        for s in 0..n {
            let d = sector_propagator_column(&h, s, grid)?;
            for i in 0..grid.len() {
                let phase = C64::from_polar(1.0, -h.common_phase(grid.time(i)));
                for a in 0..n {
                    e = e.max((run.entry(i, a, s) - phase * d.amplitudes[a][i]).norm());
                }
            }
        }
        o.check(e < 1e-6, format!("N = {n}: sector vs full-space propagator {e:.2e}"));
    }

    let geom = SpinGeometry::zigzag_chain(12, 2.2)?;
    let h = sector_hamiltonian(&geom, &mas, &[])?;
    let grid = TimeGrid::new(0.0, 3.0 * period, 601)?;
    let d = spin_diffusion(&h, &contiguous_partition(12, 6), f64::INFINITY, 0, grid)?;
    let e = d.total.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    o.check(e < 1e-4, format!("N = 12: |Σ|U_i1|² - 1| <= {e:.2e} over 3 rotor periods"));

    let geom = SpinGeometry::zigzag_chain(6, 2.2)?;
    let h = sector_hamiltonian(&geom, &mas, &[])?;
    let grid = TimeGrid::new(0.0, period, 801)?;
    let a = spin_diffusion(&h, &contiguous_partition(6, 3), f64::INFINITY, 0, grid)?;
    let b = spin_diffusion(&h, &[vec![0, 3], vec![1, 4, 5], vec![2]], f64::INFINITY, 0, grid)?;
    let mut e: f64 = 0.0;
    for site in 0..6 {
        for i in 0..grid.len() {
            e = e.max((a.amplitudes[site][i] - b.amplitudes[site][i]).norm());
        }
    }
    o.check(e < 1e-6, format!("N = 6: partition invariance at Λ = ∞ {e:.2e}"));

    // nearest-neighbour chains in groups of two; per-step cost is the
    // evaluation time of the full initial-site column divided by the steps.
    // Sizes are timed round-robin and the best of several rounds kept, so a
    // busy spell on the machine does not land on one size only.
    let steps = 120.0;
    let sizes = [8usize, 16, 32, 64];
    let mut graphs = Vec::new();
    for &n in &sizes {
        let geom = SpinGeometry::zigzag_chain(n, 2.2)?;
        let mut h = sector_hamiltonian(&geom, &mas, &[])?;
        h.couplings.retain(|i, j| j == i + 1);
        let grid = TimeGrid::new(0.0, 0.2 * period, steps as usize + 1)?;
        graphs.push(block_graph(&h, &contiguous_partition(n, 2), f64::INFINITY, grid)?.0);
    }
    let mut best = vec![f64::INFINITY; sizes.len()];
    for _ in 0..7 {
        for (g, b) in graphs.iter().zip(best.iter_mut()) {
            let t0 = Instant::now();
            propagator_column(g, 0, ResolventMethod::Direct, &GreenOptions::default())?;
            *b = b.min(t0.elapsed().as_secs_f64());
        }
    }
    let mut pts = Vec::new();
    for (&n, b) in sizes.iter().zip(&best) {
        o.note(format!("N = {n}: {:.3e} s per step", b / steps));
        pts.push(((n as f64).ln(), (b / steps).ln()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    o.check(slope < 1.3, format!("per-step cost exponent over N = 8..64: {slope:.3}"));
    o.done(format!("equivalence, conservation and partition invariance hold; cost exponent {slope:.3} (< 1.3)"))
}

fn criterion_11() -> Result<Outcome> {
    let mut o = Outcome::new();
    let mas = MasSchedule::new(DEFAULT_ROTOR_FREQUENCY)?;
    let geom = SpinGeometry::strong_pair_with_bath(6, 1.8, 2.2)?;
    let grid = TimeGrid::new(0.0, 3.0 * mas.period().unwrap_or(1.0), 1501)?;
    let pair_min = |offsets: &[f64]| -> Result<f64> {
        let h = sector_hamiltonian(&geom, &mas, offsets)?;
        let d = sector_propagator_column(&h, 0, grid)?;
        Ok(d.summed(&[0, 1]).into_iter().fold(1.0f64, f64::min))
    };
    let mut offsets = vec![2.0 * PI * 45.0; geom.len()];
    offsets[0] = 0.0;
    offsets[1] = 0.0;
    let quenched = pair_min(&offsets)?;
    let free = pair_min(&[])?;
    o.check(quenched >= 0.9, format!("offsets on the bath: pair probability stays >= {quenched:.4}"));
    o.check(free < 0.9, format!("no offsets: pair probability drops to {free:.4}"));
    o.note("the 42-proton comparison needs a user-supplied geometry and is not run here".into());
    o.done(format!("quenched minimum {quenched:.4} >= 0.9, free minimum {free:.4} < 0.9"))
}

fn criterion_12() -> Result<Outcome> {
    let mut o = Outcome::new();
    let report = run_verify(&VerifyConfig::default())?;
    for c in &report.checks {
        o.check(c.passed, c.to_string());
    }
    o.check(report.seconds < 600.0, format!("total {:.1} s", report.seconds));
    o.done(format!("{} checks in {:.1} s", report.checks.len(), report.seconds))
}

fn main() -> ExitCode {
    // `cargo test -- --list` enumerates tests without running them
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [fn() -> Result<Outcome>; 12] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
        criterion_11,
        criterion_12,
    ];
    let mut failed = Vec::new();
    for (k, c) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (passed, summary) = match c() {
            Ok(o) => {
                for d in &o.details {
                    println!("    {d}");
                }
                (o.passed, o.summary)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "{} criterion {}: {summary} [{:.1} s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            t0.elapsed().as_secs_f64()
        );
        if !passed {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 12 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 12 criteria fail: {failed:?}", failed.len());
        ExitCode::FAILURE
    }
}
