//! The scenario runners behind each subcommand.  Each reads its keys from
//! [`Params`], writes CSV to `out` and returns a short summary for stderr.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use pathsum::cdt::{cdt_observables, fluctuation_extrema};
use pathsum::many_body::{
    block_graph, contiguous_partition, sector_hamiltonian, spin_diffusion, MasSchedule, SpinGeometry,
    DEFAULT_ROTOR_FREQUENCY,
};
use pathsum::oracle::propagate;
use pathsum::two_level::{spin_flip_time, transition_probabilities, BlochSiegertParams};
use pathsum::verify::{run_verify, VerifyConfig};
use pathsum::{TimeGrid, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Params;
use crate::CliError;

type Csv = csv::Writer<Box<dyn Write>>;

fn num(v: f64) -> String {
    format!("{v:.14e}")
}

fn row(w: &mut Csv, values: &[f64]) -> Result<(), CliError> {
    w.write_record(values.iter().map(|v| num(*v)))?;
    Ok(())
}

/// Flush the table and append `text` as lines starting with `#`.
fn finish(w: Csv, text: &str) -> Result<(), CliError> {
    let mut out = w.into_inner().map_err(|e| e.into_error())?;
    for line in text.lines() {
        writeln!(out, "# {line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn bloch_siegert(p: &Params, out: Box<dyn Write>) -> Result<String, CliError> {
    let beta = p.positive_or("beta", 0.5)?;
    let omega = p.positive_or("omega", 1.0)?;
    let omega0 = p.f64_or("omega0", omega)?;
    let t_max = p.positive_or("t_max", 9.0 * PI / (2.0 * beta) + 1.0)?;
    let points = p.usize_or("points", 2001)?;
    let orders = p.usize_list("orders")?.unwrap_or_else(|| vec![3, 7, 13]);
    let rtol = p.positive_or("oracle_rtol", 1e-11)?;
    p.finish()?;

    let params = BlochSiegertParams::new(beta, omega, omega0)?;
    let grid = TimeGrid::new(0.0, t_max, points)?;
    let h = params.lab_frame();
    let oracle = propagate(|t, o: &mut [C64]| h.matrix(t, o), 2, &grid, rtol)?.probabilities(1, 0);
    let probs = transition_probabilities(&params, grid, &orders)?;

    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "p_oracle".to_string()];
    header.extend(orders.iter().map(|n| format!("p_order_{n}")));
    w.write_record(&header)?;
    for (i, t) in grid.times().into_iter().enumerate() {
        let mut r = vec![t, oracle[i]];
        r.extend(probs.iter().map(|q| q[i]));
        row(&mut w, &r)?;
    }
    let mut summary = format!("bloch-siegert: beta {beta} omega {omega} omega0 {omega0}, {points} points");
    let mut tail = String::new();
    if params.is_resonant() {
        let flip = spin_flip_time(&params)?;
        let how = if flip.radical { "radical" } else { "numeric argmax of order 13" };
        tail = format!("t_sf = {} ({how})", num(flip.time));
        summary.push_str(&format!(", t_sf {:.6} ({how})", flip.time));
    }
    finish(w, &tail)?;
    Ok(summary)
}

pub fn cdt(p: &Params, out: Box<dyn Write>) -> Result<String, CliError> {
    let beta = p.positive_or("beta", 30.0)?;
    let omega = p.positive_or("omega", 100.0)?;
    let omega0 = p.positive_or("omega0", 1.0)?;
    let periods = p.positive_or("periods", 3.0)?;
    let points = p.usize_or("points", 2001)?;
    let average_periods = p.usize_or("average_periods", 10)?;
    let with_oracle = p.bool_or("oracle", true)?;
    let rtol = p.positive_or("oracle_rtol", 1e-12)?;
    let delta_max = p.positive_or("delta_max", 40.0)?;
    p.finish()?;

    let params = BlochSiegertParams::new(beta, omega, omega0)?;
    let grid = TimeGrid::new(0.0, periods * params.period(), points)?;
    let obs = cdt_observables(&params, &grid, average_periods)?;
    let oracle = if with_oracle {
        let h = params.lab_frame();
        Some(propagate(|t, o: &mut [C64]| h.matrix(t, o), 2, &grid, rtol)?.probabilities(0, 0))
    } else {
        None
    };

    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t", "p_return"];
    if oracle.is_some() {
        header.push("p_return_oracle");
    }
    header.extend(["p_psi_transition", "sigma_x", "mean_return", "predicted_mean_return"]);
    w.write_record(&header)?;
    for (i, &t) in obs.times.iter().enumerate() {
        let mut r = vec![t, obs.return_prob[i]];
        if let Some(o) = &oracle {
            r.push(o[i]);
        }
        r.extend([obs.psi_transition[i], obs.sigma_x[i], obs.mean_return_prob, obs.predicted_mean_return_prob]);
        row(&mut w, &r)?;
    }
    let ext = fluctuation_extrema(0.1, delta_max)?;
    let mut table = String::from("n,struve_root,j0_zero,delta\n");
    for (k, gap) in ext.gaps.iter().enumerate() {
        table.push_str(&format!("{},{},{},{}\n", k + 1, num(ext.roots[k]), num(ext.j0_zeros[k]), num(*gap)));
    }
    finish(w, &table)?;
    Ok(format!(
        "cdt: beta {beta} omega {omega} omega0 {omega0}, mean return {:.6} (predicted {:.6}), mean sigma_x {:.6e}",
        obs.mean_return_prob, obs.predicted_mean_return_prob, obs.mean_sigma_x
    ))
}

fn geometry(p: &Params) -> Result<SpinGeometry, CliError> {
    let seed = p.u64_or("seed", 1)?;
    let jitter = p.f64_or("jitter", 0.0)?;
    let geom = match p.string("geometry") {
        Some(path) => {
            // synthetic keys make no sense next to a file
            for key in ["synthetic", "spins", "spacing", "bond", "gap"] {
                if p.contains(key) {
                    return Err(CliError::Usage(format!("`{key}` conflicts with `geometry`")));
                }
            }
            SpinGeometry::from_file(Path::new(&path))?
        }
        None => {
            let spins = p.usize_or("spins", 6)?;
            let spacing = p.positive_or("spacing", 2.2)?;
            let bond = p.positive_or("bond", 1.8)?;
            let gap = p.positive_or("gap", 6.0)?;
            match p.string("synthetic").as_deref().unwrap_or("zigzag") {
                "zigzag" => SpinGeometry::zigzag_chain(spins, spacing)?,
                "dumbbell" => SpinGeometry::dumbbell(spins / 2, bond, gap)?,
                "strong-pair" => SpinGeometry::strong_pair_with_bath(spins.saturating_sub(2), bond, spacing)?,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown synthetic geometry `{other}` (zigzag, dumbbell, strong-pair)"
                    )))
                }
            }
        }
    };
    if jitter == 0.0 {
        return Ok(geom);
    }
    // reproducible random displacements of up to `jitter` per axis
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = geom
        .positions()
        .iter()
        .map(|q| [0, 1, 2].map(|k| q[k] + rng.gen_range(-jitter..=jitter)))
        .collect();
    Ok(SpinGeometry::new(geom.labels().to_vec(), positions)?.with_prefactor(geom.prefactor())?)
}

pub fn spin_diffusion_run(p: &Params, out: Box<dyn Write>) -> Result<String, CliError> {
    let geom = geometry(p)?;
    let n = geom.len();
    let rotor = p.f64_or("rotor_frequency", DEFAULT_ROTOR_FREQUENCY)?;
    let static_sample = p.bool_or("static", false)?;
    let periods = p.positive_or("periods", 1.0)?;
    let points = p.usize_or("points", 601)?;
    let group_size = p.usize_or("group_size", 3)?;
    let lambda = p.extended_or("lambda", f64::INFINITY)?;
    let sweep = p.f64_list("lambda_sweep")?;
    let rotor_sweep = p.f64_list("rotor_sweep")?;
    let initial = p.usize_or("initial", 0)?;
    let offsets = p.f64_list("offsets")?.unwrap_or_default();
    p.finish()?;
    if group_size == 0 {
        return Err(CliError::Usage("group_size must be at least 1".into()));
    }
    let partition = contiguous_partition(n, group_size);
    let mas = if static_sample { MasSchedule::static_sample() } else { MasSchedule::new(rotor)? };
    // a static sample has no rotor period; the time unit is then 1 ms
    let t_max = periods * mas.period().unwrap_or(1.0);
    let grid = TimeGrid::new(0.0, t_max, points)?;
    let h = sector_hamiltonian(&geom, &mas, &offsets)?;

    let mut report = String::new();
    for l in sweep.unwrap_or_default() {
        report.push_str(&block_graph(&h, &partition, l, grid)?.1.report());
    }

    let mut w = csv::Writer::from_writer(out);
    if let Some(s) = rotor_sweep {
        let [lo, hi, step] = s[..] else {
            return Err(CliError::Usage("rotor_sweep takes `start, stop, step`".into()));
        };
        if !(step > 0.0 && hi >= lo && lo > 0.0) {
            return Err(CliError::Usage("rotor_sweep needs 0 < start <= stop and step > 0".into()));
        }
        w.write_record(["omega_r", "p_return_final", "p_return_mean", "p_return_min"])?;
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        for k in 0..count {
            let wr = lo + k as f64 * step;
            let mas = MasSchedule::new(wr)?;
            let grid = TimeGrid::new(0.0, periods * mas.period().unwrap_or(1.0), points)?;
            let h = sector_hamiltonian(&geom, &mas, &offsets)?;
            let d = spin_diffusion(&h, &partition, lambda, initial, grid)?;
            let pr = &d.probabilities[initial];
            let mean = pr.iter().sum::<f64>() / pr.len() as f64;
            row(&mut w, &[wr, pr[pr.len() - 1], mean, pr.iter().copied().fold(1.0, f64::min)])?;
        }
        finish(w, "")?;
        return Ok(format!("{report}spin-diffusion: {n} spins, rotor sweep of {count} points"));
    }

    let (_, topo) = block_graph(&h, &partition, lambda, grid)?;
    report.push_str(&topo.report());
    let d = spin_diffusion(&h, &partition, lambda, initial, grid)?;
    let mut header = vec!["t".to_string()];
    header.extend(geom.labels().iter().map(|l| format!("p_{l}")));
    header.push("total".into());
    w.write_record(&header)?;
    for (i, t) in grid.times().into_iter().enumerate() {
        let mut r = vec![t];
        r.extend(d.probabilities.iter().map(|q| q[i]));
        r.push(d.total[i]);
        row(&mut w, &r)?;
    }
    finish(w, "")?;
    let drift = d.total.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    Ok(format!(
        "{report}spin-diffusion: {n} spins in {} groups, depth {}, {} resolvents, max |total - 1| {drift:.3e}",
        partition.len(),
        d.expression_depth,
        d.resolvents
    ))
}

/// Returns the report and whether every check passed.
pub fn verify(p: &Params, mut out: Box<dyn Write>) -> Result<(String, bool), CliError> {
    let defaults = VerifyConfig::default();
    let cfg = VerifyConfig {
        grid_points: p.usize_or("points", defaults.grid_points)?,
        seed: p.u64_or("seed", defaults.seed)?,
    };
    p.finish()?;
    let report = run_verify(&cfg)?;
    writeln!(out, "{report}")?;
    out.flush()?;
    Ok((format!("verify: {} checks in {:.1} s", report.checks.len(), report.seconds), report.passed()))
}
