use pathsum::oracle::propagate;
use pathsum::two_level::{bs_kernel, BlochSiegertParams};
use pathsum::volterra::{
    accelerated, closed_form_column, closed_form_g, neumann, neumann_auto, neumann_column, residual, solve_column,
    solve_direct,
};
use pathsum::{lift_one_time, lift_scalar, star_product, TimeGrid, TwoTimeFunction, C64};

fn drive(grid: TimeGrid, beta: f64, omega: f64) -> TwoTimeFunction {
    lift_one_time(grid, 2, 2, |t, o| {
        let v = C64::new(0.0, -2.0 * beta * (omega * t).cos());
        o[1] = v;
        o[2] = v;
    })
    .unwrap()
}

fn detuning(grid: TimeGrid, omega0: f64) -> TwoTimeFunction {
    lift_one_time(grid, 2, 2, |_, o| {
        o[0] = C64::new(0.0, -omega0 / 2.0);
        o[3] = C64::new(0.0, omega0 / 2.0);
    })
    .unwrap()
}

#[test]
fn third_order_neumann_sum_matches_the_truncated_series() {
    let grid = TimeGrid::new(0.0, 2.0, 201).unwrap();
    let c = -0.6;
    let k = lift_scalar(grid, |_, _| C64::new(c, 0.0)).unwrap();
    let g = neumann(&k, 3).unwrap().result();
    assert_eq!(g.delta_part().get(0, 0), C64::new(1.0, 0.0));
    let t = grid.times();
    for i in 0..grid.len() {
        for j in 0..=i {
            let d = t[i] - t[j];
            let want = c + c * c * d + c.powi(3) * d * d / 2.0;
            assert!((g.scalar_at(i, j).re - want).abs() < 1e-9);
        }
    }
}

#[test]
fn direct_resolvent_reproduces_the_oracle_propagator() {
    let p = BlochSiegertParams::resonant(0.5, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 25.0, 2001).unwrap();
    let (up, _) = bs_kernel(&p, grid).unwrap();
    let u = solve_column(&up).unwrap().integrate();
    let h = p.rotating_frame();
    let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, &grid, 1e-11).unwrap();
    let worst = (0..grid.len()).map(|i| (u.scalar(i) - run.entry(i, 0, 0)).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst:e}");
}

#[test]
fn neumann_residual_ratios_keep_falling() {
    let p = BlochSiegertParams::resonant(0.5, 1.0).unwrap();
    let grid = TimeGrid::new(0.0, 10.0, 801).unwrap();
    let (up, _) = bs_kernel(&p, grid).unwrap();
    let tr = neumann_column(&up, 14).unwrap();
    let r = &tr.residuals;
    let ratios: Vec<f64> = (2..r.len()).map(|n| r[n] / r[n - 1]).collect();
    for n in 3..ratios.len() {
        assert!(ratios[n] < ratios[n - 1], "ratios {ratios:?}");
    }
}

#[test]
fn long_neumann_series_agrees_with_the_direct_solve() {
    let grid = TimeGrid::new(0.0, 3.0, 121).unwrap();
    let k = lift_scalar(grid, |tp, t| C64::new(0.3 * (tp - t).cos(), -0.4 * t)).unwrap();
    let direct = solve_direct(&k).unwrap();
    let tr = neumann_auto(&k, 1e-14, 60).unwrap();
    assert!(tr.order() < 60);
    assert!(tr.result().max_diff(&direct) < 1e-12, "{:e}", tr.result().max_diff(&direct));
    let res = residual(&k, &direct).unwrap();
    assert!(res < 1e-13, "{res:e}");
}

#[test]
fn accelerated_expansion_collapses_without_the_second_kernel() {
    // T = 1_* - G1 + G1 * K1 vanishes up to the difference between G1 * K1
    // and K1 * G1 on the grid, so the higher orders converge to G1
    let err = |n: usize, order: usize| {
        let grid = TimeGrid::new(0.0, 4.0, n).unwrap();
        let k1 = drive(grid, 1.0, 1.0);
        let g1 = solve_direct(&k1).unwrap();
        let g = accelerated(&k1, &TwoTimeFunction::zero(grid, 2, 2), order, None, None).unwrap();
        g.max_diff(&g1)
    };
    assert!(err(161, 0) < 1e-15);
    let (a, b) = (err(161, 2), err(321, 2));
    assert!(b < 1e-5 && a / b > 6.4, "{a:e} -> {b:e}");
}

#[test]
fn order_zero_without_detuning_gives_the_cosine_law() {
    let (beta, omega) = (30.0, 4.0);
    let grid = TimeGrid::new(0.0, 2.0 * std::f64::consts::TAU / omega, 3201).unwrap();
    let k1 = drive(grid, beta, omega);
    let g1 = closed_form_g(&k1, 1e-12).unwrap();
    let g = accelerated(&k1, &TwoTimeFunction::zero(grid, 2, 2), 0, Some(&g1), None).unwrap();
    let u = g.column0().integrate();
    for i in 0..grid.len() {
        let t = grid.time(i);
        let want = ((2.0 * beta / omega) * (omega * t).sin()).cos().powi(2);
        assert!((u.entry(i, 0, 0).norm_sqr() - want).abs() < 1e-5, "t = {t}");
    }
}

#[test]
fn closed_form_drive_resolvent_agrees_with_the_direct_solve() {
    let grid = TimeGrid::new(0.0, 10.0, 2001).unwrap();
    let k = drive(grid, 1.0, 1.0);
    let a = closed_form_column(&k, 1e-12).unwrap();
    let b = solve_column(&k).unwrap();
    for i in 0..grid.len() {
        assert!(a.value(i).sub(&b.value(i)).max_abs() < 1e-6, "node {i}");
    }
    let d = closed_form_g(&k, 1e-12).unwrap().max_diff(&solve_direct(&k).unwrap());
    assert!(d < 1e-6, "{d:e}");
}

#[test]
fn order_zero_error_is_first_order_in_the_detuning() {
    // the order-zero term pairs G1 with G2 instead of the interaction-picture
    // factor, so its error is linear in K2; order one removes that term
    let grid = TimeGrid::new(0.0, 6.0, 241).unwrap();
    let k1 = drive(grid, 1.0, 1.0);
    let g1 = closed_form_g(&k1, 1e-12).unwrap();
    let errs = |order: usize| -> Vec<f64> {
        [0.1, 0.05, 0.025]
            .iter()
            .map(|&w0| {
                let k2 = detuning(grid, w0);
                let exact = solve_direct(&k1.add(&k2).unwrap()).unwrap();
                let g2 = closed_form_g(&k2, 1e-12).unwrap();
                accelerated(&k1, &k2, order, Some(&g1), Some(&g2)).unwrap().max_diff(&exact)
            })
            .collect()
    };
    let e0 = errs(0);
    for w in e0.windows(2) {
        let r = w[0] / w[1];
        assert!((1.8..2.2).contains(&r), "{e0:?}");
    }
    let e1 = errs(1);
    for w in e1.windows(2) {
        assert!(w[0] / w[1] > 3.5, "{e1:?}");
    }
    assert!(e1[2] < e0[2]);
}

#[test]
fn resolvent_of_a_product_kernel_stays_on_the_triangle() {
    let grid = TimeGrid::new(0.0, 2.0, 41).unwrap();
    let k = lift_scalar(grid, |tp, t| C64::new(tp - t, 0.0)).unwrap();
    let kk = star_product(&k, &k).unwrap();
    let g = solve_direct(&kk).unwrap();
    for i in 0..grid.len() {
        assert!(g.scalar_at(i, i).norm() < 1e-15);
    }
}
