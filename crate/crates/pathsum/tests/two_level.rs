use std::sync::Arc;

use pathsum::oracle::propagate;
use pathsum::two_level::{
    bs_kernel, general_kernel, p0_closed_form, solve_2x2, spin_flip_leading, spin_flip_radical, spin_flip_time,
    transition_probabilities, BlochSiegertParams, TwoLevelHamiltonian,
};
use pathsum::volterra::ResolventMethod;
use pathsum::{TimeGrid, C64};

fn lab_oracle(p: &BlochSiegertParams, grid: &TimeGrid) -> Vec<f64> {
    let h = p.lab_frame();
    let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, grid, 1e-11).unwrap();
    run.probabilities(1, 0)
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn closed_form_kernels_match_quadrature() {
    for p in [
        BlochSiegertParams::new(0.4, 1.0, 1.7).unwrap(),
        BlochSiegertParams::resonant(0.3, 2.0).unwrap(),
    ] {
        let grid = TimeGrid::new(0.0, 3.0, 301).unwrap();
        let (up, down) = bs_kernel(&p, grid).unwrap();
        let (qup, qdown) = general_kernel(&p.rotating_frame(), grid).unwrap();
        assert!(up.max_diff(&qup) < 1e-6, "K↑ {:e}", up.max_diff(&qup));
        assert!(down.max_diff(&qdown) < 1e-6, "K↓ {:e}", down.max_diff(&qdown));
    }
}

#[test]
fn rotating_frame_solution_matches_lab_frame_probability() {
    let p = BlochSiegertParams::new(0.5, 1.0, 1.3).unwrap();
    let grid = TimeGrid::new(0.0, 10.0, 1001).unwrap();
    let sol = solve_2x2(&p.rotating_frame(), grid, ResolventMethod::Direct).unwrap();
    let d = worst(&sol.transition_probability(), &lab_oracle(&p, &grid));
    assert!(d < 1e-6, "{d:e}");
    let unit = (0..grid.len())
        .map(|i| {
            let m = sol.matrix(i);
            m.adjoint().mul(&m).sub(&pathsum::block::Block::identity(2)).max_abs()
        })
        .fold(0.0, f64::max);
    assert!(unit < 1e-6, "{unit:e}");
}

#[test]
fn lab_frame_general_solve_matches_oracle() {
    let p = BlochSiegertParams::new(0.3, 2.0, 1.0).unwrap();
    let h = p.lab_frame();
    let grid = TimeGrid::new(0.0, 6.0, 601).unwrap();
    let sol = solve_2x2(&h, grid, ResolventMethod::Direct).unwrap();
    let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, &grid, 1e-11).unwrap();
    for i in 0..grid.len() {
        let d = sol.matrix(i).sub(&run.at(i)).max_abs();
        assert!(d < 1e-6, "t = {}: {d:e}", grid.time(i));
    }
}

#[test]
fn non_hermitian_entries_are_accepted() {
    let h = TwoLevelHamiltonian::new(
        Arc::new(|_| C64::new(0.2, -0.1)),
        Arc::new(|t| C64::new(-0.3, 0.0) * t),
        Arc::new(|_| C64::new(0.5, 0.0)),
        Arc::new(|t: f64| C64::new(0.1 * t.cos(), 0.0)),
    );
    let grid = TimeGrid::new(0.0, 3.0, 301).unwrap();
    let sol = solve_2x2(&h, grid, ResolventMethod::Direct).unwrap();
    let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, &grid, 1e-11).unwrap();
    let d = sol.matrix(300).sub(&run.at(300)).max_abs();
    assert!(d < 1e-6, "{d:e}");
}

#[test]
fn hermitian_flag_is_checked() {
    let h = TwoLevelHamiltonian::hermitian(|_| 0.0, |_| 0.0, |_| C64::new(1.0, 0.0));
    assert!(h.is_hermitian());
    let bad = TwoLevelHamiltonian::hermitian(|_| f64::NAN, |_| 0.0, |_| C64::new(1.0, 0.0));
    assert!(solve_2x2(&bad, TimeGrid::new(0.0, 1.0, 11).unwrap(), ResolventMethod::Direct).is_err());
}

#[test]
fn neumann_orders_converge_to_the_exact_probability() {
    let p = BlochSiegertParams::resonant(0.2, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 8.0, 801).unwrap();
    let probs = transition_probabilities(&p, grid, &[0, 2, 6, 12]).unwrap();
    let exact = lab_oracle(&p, &grid);
    let errs: Vec<f64> = probs.iter().map(|q| worst(q, &exact)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] > errs[3], "{errs:?}");
    assert!(errs[3] < 1e-6, "{errs:?}");
}

#[test]
fn order_zero_matches_its_closed_form() {
    let p = BlochSiegertParams::resonant(0.05, 1.3).unwrap();
    let grid = TimeGrid::new(0.0, 20.0, 2001).unwrap();
    let p0 = &transition_probabilities(&p, grid, &[0]).unwrap()[0];
    for (i, t) in grid.times().into_iter().enumerate() {
        let d = (p0[i] - p0_closed_form(&p, t)).abs();
        assert!(d < 1e-8, "t = {t}: {d:e}");
    }
}

#[test]
fn spin_flip_radical_tends_to_the_leading_term() {
    for b in [1e-3, 1e-2] {
        let p = BlochSiegertParams::resonant(b, 1.0).unwrap();
        let t = spin_flip_radical(&p).unwrap();
        assert!((t / spin_flip_leading(b) - 1.0).abs() < 10.0 * b, "β = {b}");
    }
}

#[test]
fn strong_drive_falls_back_to_a_flagged_numeric_time() {
    let p = BlochSiegertParams::resonant(0.6, 1.0).unwrap();
    let f = spin_flip_time(&p).unwrap();
    assert!(!f.radical);
    assert!(f.time > 0.0);
    let weak = spin_flip_time(&BlochSiegertParams::resonant(0.05, 1.0).unwrap()).unwrap();
    assert!(weak.radical);
    assert!(spin_flip_time(&BlochSiegertParams::new(0.05, 1.0, 2.0).unwrap()).is_err());
}
