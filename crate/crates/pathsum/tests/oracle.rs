use std::f64::consts::FRAC_1_SQRT_2;

use pathsum::block::Block;
use pathsum::graph::DynamicalGraph;
use pathsum::many_body::{coupling_schedule, MasSchedule, SpinGeometry, DEFAULT_ROTOR_FREQUENCY};
use pathsum::oracle::{expm_const, full_space, propagate, walk_sum, FullSpace};
use pathsum::two_level::{spin_flip_time, BlochSiegertParams};
use pathsum::{TimeGrid, C64};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn constant_graph(h: &Block) -> DynamicalGraph {
    let n = h.rows;
    let parts: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let data = h.data.clone();
    let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
    DynamicalGraph::from_hamiltonian(move |_, out| out.copy_from_slice(&data), n, &parts, grid).unwrap()
}

#[test]
fn empty_walks_give_the_kronecker_delta() {
    let h = Block::from_rows(&[&[c(0.0), c(0.4)], &[c(0.4), c(0.1)]]);
    let g = constant_graph(&h);
    assert_eq!(walk_sum(&g, 0, 0, 1.3, 0, 10).unwrap()[0], Block::identity(1));
    assert!(walk_sum(&g, 0, 1, 1.3, 0, 10).unwrap()[0].is_zero());
}

#[test]
fn closed_walks_on_a_pair_sum_to_a_cosine() {
    let k = 0.8;
    let h = Block::from_rows(&[&[c(0.0), c(k)], &[c(k), c(0.0)]]);
    let g = constant_graph(&h);
    let t = 2.5;
    let sums = walk_sum(&g, 0, 0, t, 30, 1 << 20).unwrap();
    let want = expm_const(&h, t).get(0, 0);
    assert!((want - c((k * t).cos())).norm() < 1e-12);
    let errs: Vec<f64> = sums.iter().map(|s| (s.get(0, 0) - want).norm()).collect();
    assert!(errs[30] < 1e-12, "{:e}", errs[30]);
    assert!(errs[10] < errs[4] && errs[20] < errs[10]);
    let dense = Block::from_rows(&[&[c(1.0), c(1.0), c(1.0)], &[c(1.0), c(1.0), c(1.0)], &[c(1.0), c(1.0), c(1.0)]]);
    assert!(walk_sum(&constant_graph(&dense), 0, 0, t, 40, 1000).is_err());
}

#[test]
fn uncoupled_spins_are_offset_only() {
    let geom = SpinGeometry::new(vec!["a".into(), "b".into()], vec![[0.0; 3], [0.0, 0.0, 2.0]])
        .unwrap()
        .with_prefactor(0.0)
        .unwrap();
    let cs = coupling_schedule(&geom, &MasSchedule::new(DEFAULT_ROTOR_FREQUENCY).unwrap());
    let fs = full_space(&cs, &[3.0, -1.0]).unwrap();
    let h = fs.matrix(0.2);
    for (s, want) in [(0, -1.0), (1, 2.0), (2, -2.0), (3, 1.0)] {
        assert_eq!(h.get(s, s), c(want));
    }
    assert_eq!(h.sub(&Block::zeros(4, 4)).max_abs(), 2.0);
}

#[test]
fn spin_pair_has_the_dipolar_spectrum() {
    let geom = SpinGeometry::new(vec!["a".into(), "b".into()], vec![[0.0; 3], [1.0, 0.4, 1.5]]).unwrap();
    let cs = coupling_schedule(&geom, &MasSchedule::static_sample());
    let fs = full_space(&cs, &[]).unwrap();
    let w = cs.omega(0, 0.0);
    let h = fs.matrix(0.0);
    let s = FRAC_1_SQRT_2;
    // |dd>, |uu>, triplet and singlet of the flip-flop pair
    let cases = [
        ([1.0, 0.0, 0.0, 0.0], w / 2.0),
        ([0.0, 0.0, 0.0, 1.0], w / 2.0),
        ([0.0, s, s, 0.0], -w),
        ([0.0, s, -s, 0.0], 0.0),
    ];
    for (v, lambda) in cases {
        for r in 0..4 {
            let hv: C64 = (0..4).map(|k| h.get(r, k) * v[k]).sum();
            assert!((hv - c(lambda * v[r])).norm() < 1e-12 * w.abs().max(1.0));
        }
    }
}

#[test]
fn full_space_conserves_magnetisation() {
    let geom = SpinGeometry::zigzag_chain(4, 2.0).unwrap();
    let cs = coupling_schedule(&geom, &MasSchedule::new(DEFAULT_ROTOR_FREQUENCY).unwrap());
    let fs = full_space(&cs, &[1.0, -2.0, 0.5, 3.0]).unwrap();
    for t in [0.0, 0.013, 0.07] {
        let h = fs.matrix(t);
        for a in 0..16 {
            for b in 0..16 {
                if fs.magnetization(a) != fs.magnetization(b) {
                    assert_eq!(h.get(a, b), c(0.0));
                }
            }
        }
    }
    assert_eq!(FullSpace::single_excitation(3), 8);
}

#[test]
fn full_space_is_capped() {
    let geom = SpinGeometry::zigzag_chain(13, 2.0).unwrap();
    let cs = coupling_schedule(&geom, &MasSchedule::static_sample());
    assert!(full_space(&cs, &[]).is_err());
}

#[test]
fn bloch_siegert_reference_flips_the_spin() {
    // weak drive: a full flip at t_sf
    let p = BlochSiegertParams::resonant(0.1, 1.0).unwrap();
    let flip = spin_flip_time(&p).unwrap();
    assert!(flip.radical);
    let grid = TimeGrid::new(0.0, 1.2 * flip.time, 1201).unwrap();
    let h = p.lab_frame();
    let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, &grid, 1e-11).unwrap();
    let pr = run.probabilities(1, 0);
    let (i, peak) = pr.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    assert!(peak > 0.99, "{peak}");
    assert!((grid.time(i) - flip.time).abs() < 0.5, "{} vs {}", grid.time(i), flip.time);
    assert!(run.unitarity_defect() < 1e-9);
    // at β/ω = 0.5 the counter-rotating terms cap the first maximum near 0.89
    let p = BlochSiegertParams::resonant(0.5, 1.0).unwrap();
    let t_sf = spin_flip_time(&p).unwrap().time;
    let grid = TimeGrid::new(0.0, 1.5 * t_sf, 601).unwrap();
    let h = p.lab_frame();
    let run = propagate(|t, out: &mut [C64]| h.matrix(t, out), 2, &grid, 1e-11).unwrap();
    let peak = run.probabilities(1, 0).into_iter().fold(0.0, f64::max);
    assert!((0.85..0.95).contains(&peak), "{peak}");
}
