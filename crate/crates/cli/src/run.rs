//! Experiment dispatch: each experiment returns its tables and a JSON summary.

use nhqubit::eigen::{delta_lambda, eigensystem, sweep_eigs, EigGrid};
use nhqubit::estimation::{
    equator_time, locate_eigenstates, oscillation_scan, postselection_cost, qfi_coupling, threshold_from_scan,
    OscillationPoint, PfnSource, Plane,
};
use nhqubit::evolution::{evolve_pure_conditional, integrate_block, integrate_lindblad, steady_state_map, SteadyGrid};
use nhqubit::io::{ensemble_table, eigs_table, evolution_table, steady_table, Cell, Table};
use nhqubit::ode::StepControl;
use nhqubit::trajectories::{
    run_ensemble, sample_tomography_stream, Axis, EnsembleOptions, TomographyEstimate, TrajectoryEnsemble,
};
use nhqubit::{state_from_angles, Error, Result, SystemParams};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, Method, RunConfig, Source};

pub struct Output {
    pub tables: Vec<(&'static str, Table)>,
    pub summary: Value,
    pub ensemble: Option<TrajectoryEnsemble>,
}

impl Output {
    fn new(tables: Vec<(&'static str, Table)>, summary: Value) -> Self {
        Self { tables, summary, ensemble: None }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Output> {
    match cfg.experiment {
        Experiment::Eigs => eigs(cfg),
        Experiment::Evolve => evolve(cfg),
        Experiment::Transition => transition(cfg),
        Experiment::Eigenstates => eigenstates(cfg),
        Experiment::Steadystate => steadystate(cfg),
        Experiment::Tomo => tomo(cfg),
        Experiment::Qfi => qfi(cfg),
        Experiment::Traj => traj(cfg),
    }
}

fn eigs(cfg: &RunConfig) -> Result<Output> {
    let grid = EigGrid { delta: cfg.range_of("Delta", cfg.params.delta), j: cfg.range_of("J", cfg.params.j) };
    let rows = sweep_eigs(&cfg.params, &grid)?;
    let broken = rows.iter().filter(|r| r.re_dlam.abs() < r.im_dlam.abs()).count();
    Ok(Output::new(vec![("eigs", eigs_table(&rows))], json!({ "rows": rows.len(), "broken_phase_rows": broken })))
}

fn evolve(cfg: &RunConfig) -> Result<Output> {
    let times = cfg.time.times();
    let psi = state_from_angles(cfg.options.initial.theta, cfg.options.initial.phi);
    let ctl = StepControl::default();
    let r = match cfg.options.method {
        Method::Pure => evolve_pure_conditional(&psi, &cfg.params, &times)?,
        Method::Block => integrate_block(&psi.block(), &cfg.params, &times, &ctl)?,
        Method::Lindblad => integrate_lindblad(&psi.block().to_density(), &cfg.params, &times, &ctl)?.evolution,
    };
    let last = r.len() - 1;
    let summary = json!({ "samples": r.len(), "final_pfn": r.pfn[last], "final_weight": r.weight[last] });
    Ok(Output::new(vec![("evolution", evolution_table(&r))], summary))
}

fn oscillation_table(points: &[OscillationPoint]) -> Table {
    let mut t = Table::new(&["J", "delta", "omega", "omega_se", "gamma_r", "gamma_r_se", "converged", "re_dlam", "im_dlam"]);
    for p in points {
        t.push(vec![
            p.j.into(),
            p.delta.into(),
            p.omega.into(),
            p.omega_se.into(),
            p.gamma_r.into(),
            p.gamma_r_se.into(),
            p.converged.into(),
            Cell::Num(f64::NAN),
            Cell::Num(f64::NAN),
        ]);
    }
    t
}

fn with_theory(mut t: Table, params: &[SystemParams]) -> Table {
    for (row, p) in t.rows.iter_mut().zip(params) {
        let dl = delta_lambda(p);
        let n = row.len();
        row[n - 2] = dl.re.into();
        row[n - 1] = dl.im.into();
    }
    t
}

fn transition(cfg: &RunConfig) -> Result<Output> {
    let points = cfg.points();
    let times = cfg.time.times();
    let source = match cfg.options.source {
        Source::Exact => PfnSource::Exact,
        Source::Trajectories => PfnSource::Trajectories { n_traj: cfg.ensemble.n_traj, seed: cfg.master_seed },
    };
    let scan = oscillation_scan(&points, &times, source)?;
    let table = with_theory(oscillation_table(&scan), &points);

    let gamma = cfg.params.gamma_e - cfg.params.gamma_f;
    let predicted = gamma / 4.0;
    let mut thr = Table::new(&["j0", "j0_se", "predicted", "relative_error", "points_used", "converged"]);
    let summary = match threshold_from_scan(&scan) {
        Ok(fit) => {
            let j0 = fit.value("J0").unwrap_or(f64::NAN);
            let se = fit.std_error("J0").unwrap_or(f64::NAN);
            let used = scan.iter().filter(|p| p.converged && p.omega_se > 0.0).count();
            let rel = (j0 - predicted) / predicted;
            thr.push(vec![j0.into(), se.into(), predicted.into(), rel.into(), used.into(), fit.converged.into()]);
            let echo: Value = serde_json::from_str(&fit.to_json()).unwrap_or(Value::Null);
            json!({ "j0": j0, "j0_se": se, "predicted": predicted, "converged": fit.converged, "fit": echo })
        }
        Err(e) if e.is_input() => {
            thr.push(vec![f64::NAN.into(), f64::NAN.into(), predicted.into(), f64::NAN.into(), 0usize.into(), false.into()]);
            json!({ "j0": null, "predicted": predicted, "diagnostic": e.to_string() })
        }
        Err(e) => return Err(e),
    };
    Ok(Output::new(vec![("transition", table), ("threshold", thr)], summary))
}

fn eigenstates(cfg: &RunConfig) -> Result<Output> {
    let o = &cfg.options;
    let grid = o.angle_grid().values();
    let r = locate_eigenstates(&cfg.params, o.plane, &grid, o.t_probe)?;

    let es = eigensystem(&cfg.params);
    let mut theory: Vec<f64> = [es.v_plus, es.v_minus]
        .iter()
        .filter_map(|v| v.normalized().ok()?.bloch().ok())
        .map(|b| {
            let (theta, phi) = b.angles();
            match o.plane {
                Plane::YzPolar => theta,
                Plane::XyAzimuthal => phi.rem_euclid(2.0 * std::f64::consts::PI),
            }
        })
        .collect();
    theory.sort_by(f64::total_cmp);

    let mut states = Table::new(&["index", "angle", "error", "eigen_angle"]);
    for (k, s) in r.states.iter().enumerate() {
        let nearest = theory.iter().copied().min_by(|a, b| (a - s.angle).abs().total_cmp(&(b - s.angle).abs()));
        states.push(vec![k.into(), s.angle.into(), s.error.into(), nearest.unwrap_or(f64::NAN).into()]);
    }
    let mut signal = Table::new(&["angle", "delta_pfn"]);
    for (a, d) in grid.iter().zip(&r.signal) {
        signal.push(vec![(*a).into(), (*d).into()]);
    }
    let summary = json!({ "angles": r.states.iter().map(|s| s.angle).collect::<Vec<_>>(), "eigen_angles": theory });
    Ok(Output::new(vec![("eigenstates", states), ("eigenstates_signal", signal)], summary))
}

fn steadystate(cfg: &RunConfig) -> Result<Output> {
    let grid = SteadyGrid { delta: cfg.range_of("Delta", cfg.params.delta), j: cfg.range_of("J", cfg.params.j) };
    let rows = steady_state_map(&grid, &cfg.params, cfg.options.t_eval)?;
    let insufficient = rows.iter().filter(|r| r.insufficient).count();
    Ok(Output::new(vec![("steadystate", steady_table(&rows))], json!({ "rows": rows.len(), "insufficient": insufficient })))
}

fn tomo(cfg: &RunConfig) -> Result<Output> {
    let points = cfg.points();
    let times = cfg.time.times();
    let psi = state_from_angles(cfg.options.initial.theta, cfg.options.initial.phi);
    let ens = cfg.ensemble;
    let n_t = times.len();

    let blocks: Vec<_> = points
        .par_iter()
        .map(|p| integrate_block(&psi.block(), p, &times, &StepControl::default()).map(|r| r.blocks))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..points.len()).flat_map(|k| (0..n_t).map(move |i| (k, i))).collect();
    let estimates: Vec<Option<[TomographyEstimate; 3]>> = cells
        .par_iter()
        .map(|&(k, i)| {
            let cell = (k * n_t + i) as u64;
            let mut out = Vec::with_capacity(3);
            for (a, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
                let stream = 3 * cell + a as u64;
                match sample_tomography_stream(&blocks[k][i], axis, ens.shots, ens.assignment_error, cfg.master_seed, stream) {
                    Ok(e) => out.push(e),
                    Err(Error::AllShotsDiscarded) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some([out[0], out[1], out[2]]))
        })
        .collect::<Result<_>>()?;
    let empty = estimates.iter().filter(|e| e.is_none()).count();
    if empty == cells.len() {
        return Err(Error::AllShotsDiscarded);
    }

    let mut table = Table::new(&[
        "J", "delta", "t", "x", "y", "z", "se_x", "se_y", "se_z", "pfn", "se_pfn", "kept_x", "kept_y", "kept_z",
    ]);
    let mut series: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = vec![Default::default(); points.len()];
    let kept = |e: &TomographyEstimate| (e.record.counts[0] + e.record.counts[1]) as usize;
    for (&(k, i), est) in cells.iter().zip(&estimates) {
        let mut row: Vec<Cell> = vec![points[k].j.into(), points[k].delta.into(), times[i].into()];
        let Some([x, y, z]) = est else {
            row.extend((0..8).map(|_| Cell::Num(f64::NAN)));
            row.extend((0..3).map(|_| Cell::from(0usize)));
            table.push(row);
            continue;
        };
        let pfn = 0.5 * (1.0 - z.estimate);
        let se_pfn = 0.5 * z.se;
        row.extend([x.estimate, y.estimate, z.estimate, x.se, y.se, z.se, pfn, se_pfn].map(Cell::from));
        row.extend([kept(x), kept(y), kept(z)].map(Cell::from));
        table.push(row);
        if se_pfn > 0.0 {
            series[k].0.push(times[i]);
            series[k].1.push(pfn);
            series[k].2.push(1.0 / (se_pfn * se_pfn));
        }
    }

    let mut tables = vec![("tomo", table)];
    let mut fitted = 0;
    if n_t >= 8 {
        let fits: Vec<OscillationPoint> = series
            .par_iter()
            .zip(&points)
            .map(|((t, y, w), p)| {
                let fit = nhqubit::estimation::fit_damped_sinusoid(t, y, Some(w)).ok();
                let get = |n: &str| fit.as_ref().and_then(|f| f.value(n)).unwrap_or(f64::NAN);
                let se = |n: &str| fit.as_ref().and_then(|f| f.std_error(n)).unwrap_or(f64::NAN);
                OscillationPoint {
                    j: p.j,
                    delta: p.delta,
                    omega: get("Omega"),
                    omega_se: se("Omega"),
                    gamma_r: get("Gamma"),
                    gamma_r_se: se("Gamma"),
                    converged: fit.as_ref().is_some_and(|f| f.converged && f.diagnostic.is_none()),
                }
            })
            .collect();
        fitted = fits.iter().filter(|f| f.converged).count();
        tables.push(("tomo_fits", with_theory(oscillation_table(&fits), &points)));
    }
    let summary = json!({ "cells": cells.len(), "empty_cells": empty, "shots_per_axis": ens.shots, "converged_fits": fitted });
    Ok(Output::new(tables, summary))
}

fn qfi(cfg: &RunConfig) -> Result<Output> {
    let points = cfg.points();
    let o = &cfg.options;
    let rows: Vec<_> = points
        .par_iter()
        .map(|p| {
            let t = o.qfi_time.unwrap_or_else(|| equator_time(p, cfg.time.t_max));
            let q = qfi_coupling(p, t, o.dj, o.qfi_convention)?;
            let c = postselection_cost(p, t, o.dj, o.qfi_convention)?;
            Ok((t, q, c))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["J", "delta", "t", "pfn", "derivative", "qfi", "success", "effective_info", "in_window"]);
    for (p, (t, q, c)) in points.iter().zip(&rows) {
        table.push(vec![
            p.j.into(),
            p.delta.into(),
            (*t).into(),
            q.pfn.into(),
            q.derivative.into(),
            q.qfi.into(),
            c.success.into(),
            c.effective_info.into(),
            q.in_window.into(),
        ]);
    }
    let best = rows.iter().map(|r| r.1.qfi).fold(f64::NAN, f64::max);
    let flagged = rows.iter().filter(|r| !r.1.in_window).count();
    Ok(Output::new(vec![("qfi", table)], json!({ "points": rows.len(), "max_qfi": best, "outside_window": flagged })))
}

fn traj(cfg: &RunConfig) -> Result<Output> {
    let times = cfg.time.times();
    let psi = state_from_angles(cfg.options.initial.theta, cfg.options.initial.phi);
    let psi3 = [nhqubit::types::ZERO, psi.amp_e, psi.amp_f];
    let opts = EnsembleOptions { strict: cfg.options.strict, record_jumps: cfg.options.jump_log };
    let e = run_ensemble(&psi3, &cfg.params, &times, cfg.ensemble.n_traj, cfg.master_seed, opts)?;

    let mut unc = Table::new(&["t", "rho_gg", "rho_ee", "rho_ff", "re_rho_ef", "im_rho_ef", "se_gg", "se_ee", "se_ff", "se_re", "se_im"]);
    for (i, u) in e.unconditional.iter().enumerate() {
        let mut row = vec![Cell::from(e.times[i])];
        row.extend(u.mean.iter().chain(&u.se).map(|&v| Cell::from(v)));
        unc.push(row);
    }
    let summary = json!({
        "n_traj": e.n_requested,
        "final_survivors": e.n_surviving.last(),
        "decay_jumps": e.decay_jumps,
        "relax_jumps": e.relax_jumps,
        "dephase_jumps": e.dephase_jumps,
    });
    let cond = ensemble_table(&e);
    Ok(Output { tables: vec![("traj", cond), ("traj_unconditional", unc)], summary, ensemble: Some(e) })
}
