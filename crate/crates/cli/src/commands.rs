use std::path::Path;

use log::info;
use serde::Deserialize;
use serde_json::json;

use zenoline_core::evolution::{compute_gamma, evolve_with};
use zenoline_core::planner::{memory_loop, plan_link, replay_plan, scan_link, DeviceCount};
use zenoline_core::qnd::{homodyne_discriminate, qnd_branches, read_present_probability};
use zenoline_core::regime::{
    detect_departure, fit_decay, max_device_spacing, tq_experiment, SurvivalCurve, TqExperiment,
};
use zenoline_core::zeno::{analytic_survival, run_ensemble, run_monte_carlo};

use crate::config::RunConfig;
use crate::output::{num, Artifact, Table};
use crate::{CliError, RunKind};

pub fn run(kind: RunKind, cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    info!("running {kind:?}");
    match kind {
        RunKind::Simulate => simulate(cfg),
        RunKind::Zeno => zeno(cfg),
        RunKind::Tq => tq(cfg),
        RunKind::Qnd => qnd(cfg),
        RunKind::Plan => plan(cfg),
        RunKind::Memory => memory(cfg),
    }
}

fn simulate(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let model = cfg.build_model()?;
    let e = &cfg.evolution;
    let traj = evolve_with(&model.state, &model.hamiltonian, e.t_final, e.n_steps, cfg.integrator())?;
    let mut table = Table::new(&["t", "P_s", "phonon_weight"]);
    for (t, s) in traj.times().iter().zip(traj.states()) {
        table.push(vec![num(*t), num(s.survival_probability()), num(s.phonon_weight())]);
    }
    let gamma = compute_gamma(&model.hamiltonian, &model.state)?;
    let summary = json!({
        "gamma": gamma,
        "final_survival": traj.survival().last(),
        "recurrence_time": model.phonon.recurrence_time(),
        "hermiticity_error": model.hamiltonian.hermiticity_error(),
    });
    Ok(vec![
        Artifact::csv("trajectory.csv", table),
        Artifact::json("simulate.json", summary),
    ])
}

fn zeno(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let model = cfg.build_model()?;
    let zc = cfg.zeno()?;
    let record = match cfg.protocol.trials {
        0 => run_ensemble(&model.state, &model.hamiltonian, &zc)?,
        trials => run_monte_carlo(&model.state, &model.hamiltonian, &zc, trials, cfg.seed())?,
    };
    let mut table = Table::new(&["k", "t", "q_k", "cumulative"]);
    for (k, t, q, c) in record.rows() {
        table.push(vec![k.to_string(), num(t), num(q), num(c)]);
    }
    let gamma = compute_gamma(&model.hamiltonian, &model.state)?;
    let analytic = analytic_survival(gamma, zc.tau, zc.total_time()).ok();
    let input = model.state.polarization();
    let summary = json!({
        "gamma": gamma,
        "tau": zc.tau,
        "measurements": zc.measurements,
        "gamma_eff": record.gamma_eff,
        "gamma_eff_over_tau": record.gamma_eff.map(|g| g / zc.tau),
        "final_survival": record.final_survival(),
        "absorbed_at": record.absorbed_at,
        "polarization_fidelity": input.fidelity(&record.final_polarization),
        "analytic": analytic,
        "monte_carlo": record.trials.map(|t| json!({
            "successes": t.successes,
            "trials": t.trials,
            "seed": t.seed,
            "fraction": t.fraction(),
        })),
    });
    Ok(vec![Artifact::csv("zeno.csv", table), Artifact::json("zeno.json", summary)])
}

#[derive(Deserialize)]
struct MeasuredRow {
    length: f64,
    transmission: f64,
}

fn read_measurements(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("`analysis.input_csv`: {e}")))?;
    let mut lengths = Vec::new();
    let mut trans = Vec::new();
    for row in reader.deserialize::<MeasuredRow>() {
        let row = row.map_err(|e| CliError::Config(format!("`analysis.input_csv`: {e}")))?;
        lengths.push(row.length);
        trans.push(row.transmission);
    }
    Ok((lengths, trans))
}

fn tq_table(exp: &TqExperiment) -> Table {
    let mut table = Table::new(&["length", "P_s", "departure", "T_q_estimate"]);
    for row in &exp.rows {
        let estimate = if row.departure {
            exp.t_q_estimate.map(num).unwrap_or_default()
        } else {
            String::new()
        };
        table.push(vec![num(row.length), num(row.survival), row.departure.to_string(), estimate]);
    }
    table
}

fn experiment_summary(exp: &TqExperiment, v_f: f64) -> serde_json::Value {
    json!({
        "baseline_rate": exp.baseline_rate,
        "baseline_prefactor": exp.baseline_prefactor,
        "baseline_established": exp.baseline_established,
        "t_q_estimate": exp.t_q_estimate,
        "max_device_spacing": exp.t_q_estimate.and_then(|t| max_device_spacing(t, v_f).ok()),
    })
}

fn tq(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let a = &cfg.analysis;
    if let Some(path) = &a.input_csv {
        let (lengths, trans) = read_measurements(path)?;
        let exp = detect_departure(&lengths, &trans, a.v_f, a.tolerance)?;
        return Ok(vec![
            Artifact::csv("tq.csv", tq_table(&exp)),
            Artifact::json("tq.json", json!({ "experiment": experiment_summary(&exp, a.v_f) })),
        ]);
    }
    let model = cfg.build_model()?;
    let e = &cfg.evolution;
    let traj = evolve_with(&model.state, &model.hamiltonian, e.t_final, e.n_steps, cfg.integrator())?;
    let fit = fit_decay(
        &SurvivalCurve::from(&traj),
        &cfg.fit_options(model.phonon.recurrence_time()),
    )?;
    let gamma = compute_gamma(&model.hamiltonian, &model.state)?;
    let mut artifacts = Vec::new();
    let experiment = if a.lengths.is_empty() {
        None
    } else {
        let exp = tq_experiment(&model.hamiltonian, &model.state, &a.lengths, a.v_f, a.tolerance)?;
        artifacts.push(Artifact::csv("tq.csv", tq_table(&exp)));
        Some(experiment_summary(&exp, a.v_f))
    };
    artifacts.push(Artifact::json(
        "tq.json",
        json!({
            "gamma": gamma,
            "fit": fit,
            "max_device_spacing": fit.t_q.and_then(|t| max_device_spacing(t, a.v_f).ok()),
            "experiment": experiment,
        }),
    ));
    Ok(artifacts)
}

fn qnd(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let model = cfg.build_model()?;
    let device = cfg.device();
    let angle = cfg.analysis.quadrature.to_core();
    let report = homodyne_discriminate(device.alpha_p, device.theta, angle);
    let branches = qnd_branches(&model.state, &device)?;
    let summary = json!({
        "device": device,
        "quadrature_angle": angle.resolve(device.alpha_p, device.theta),
        "report": report,
        "branches": branches
            .iter()
            .map(|b| json!({"outcome": b.outcome, "probability": b.probability}))
            .collect::<Vec<_>>(),
        "read_present_probability": read_present_probability(&branches, &report),
    });
    Ok(vec![Artifact::json("qnd.json", summary)])
}

fn link_gamma(cfg: &RunConfig) -> Result<f64, CliError> {
    match cfg.plan.gamma {
        Some(g) => Ok(g),
        None => {
            let model = cfg.build_model()?;
            Ok(compute_gamma(&model.hamiltonian, &model.state)?)
        }
    }
}

fn plan(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let gamma = link_gamma(cfg)?;
    let params = cfg.link_params(gamma)?;
    let count = cfg.device_count();
    let best = plan_link(&params, count)?;
    let rows = match count {
        DeviceCount::Fixed(_) => vec![best],
        DeviceCount::Optimize { m_max } => scan_link(&params, m_max)?,
    };
    let mut table = Table::new(&["M", "spacing", "tau_seg", "survival", "fidelity", "baseline"]);
    for p in &rows {
        table.push(vec![
            p.m.to_string(),
            num(p.spacing),
            num(p.tau_seg),
            num(p.survival),
            num(p.fidelity),
            num(p.baseline),
        ]);
    }
    let replayed = if cfg.plan.replay {
        let model = cfg.build_model()?;
        Some(replay_plan(&best, &params, &model.hamiltonian, &model.state)?)
    } else {
        None
    };
    let summary = json!({
        "gamma": gamma,
        "plan": best,
        "max_spacing": params.max_spacing(),
        "replayed_survival": replayed,
    });
    Ok(vec![Artifact::csv("plan.csv", table), Artifact::json("plan.json", summary)])
}

fn memory(cfg: &RunConfig) -> Result<Vec<Artifact>, CliError> {
    let gamma = link_gamma(cfg)?;
    let p = &cfg.plan;
    let mem = memory_loop(p.loop_time, p.round_trips, gamma, &cfg.device(), cfg.polarization()?)?;
    let mut table = Table::new(&["k", "t", "survival", "fidelity"]);
    for r in &mem.table {
        table.push(vec![r.k.to_string(), num(r.time), num(r.survival), num(r.fidelity)]);
    }
    let summary = json!({
        "loop_time": mem.loop_time,
        "round_trips": mem.round_trips,
        "gamma": mem.gamma,
        "device": mem.device,
        "final_survival": mem.survival(mem.round_trips),
    });
    Ok(vec![Artifact::csv("memory.csv", table), Artifact::json("memory.json", summary)])
}
