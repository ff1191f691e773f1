//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, with its runtime.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use zenoline_core::evolution::{compute_gamma, SpectralPropagator};
use zenoline_core::model::{
    assemble_hamiltonian, build_coupling, initial_pulse, CouplingKind, ExcitationState, Hamiltonian,
    ModeGrid, ModeLabel, Polarization, PulseShape, C64,
};
use zenoline_core::planner::{plan_link, DeviceCount, LinkParams};
use zenoline_core::qnd::{homodyne_discriminate, QndDeviceModel, QuadratureAngle};
use zenoline_core::regime::{fit_decay, FitOptions, SurvivalCurve};
use zenoline_core::zeno::{analytic_survival, run_ensemble, run_monte_carlo, ZenoConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn grid(count: usize, lo: f64, hi: f64, label: ModeLabel) -> ModeGrid {
    ModeGrid::uniform(count, lo, hi, label).unwrap()
}

fn model(
    photon: ModeGrid,
    phonon: ModeGrid,
    kind: CouplingKind,
    g: f64,
    shape: PulseShape,
    pol: Polarization,
) -> (Hamiltonian, ExcitationState, ModeGrid) {
    let c = build_coupling(&kind, g, &photon, &phonon).unwrap();
    let h = assemble_hamiltonian(&photon, &phonon, &c).unwrap();
    let s = initial_pulse(&photon, &phonon, shape, pol).unwrap();
    (h, s, phonon)
}

fn two_level(pol: Polarization) -> (Hamiltonian, ExcitationState) {
    let (h, s, _) = model(
        grid(1, 1.0, 1.0, ModeLabel::Photon),
        grid(1, 1.0, 1.0, ModeLabel::Phonon),
        CouplingKind::Flat,
        1.0,
        PulseShape::SingleMode { mode: 0 },
        pol,
    );
    (h, s)
}

fn wideband() -> (Hamiltonian, ExcitationState, ModeGrid) {
    model(
        grid(1, 1.0, 1.0, ModeLabel::Photon),
        grid(201, 0.0, 2.0, ModeLabel::Phonon),
        CouplingKind::Flat,
        0.01,
        PulseShape::SingleMode { mode: 0 },
        Polarization::diagonal(),
    )
}

fn repeated_product(factor: f64, times: usize) -> f64 {
    (0..times).fold(1.0, |acc, _| acc * factor)
}

fn zeno_survival_law() -> Outcome {
    let (h, s) = two_level(Polarization::horizontal());
    let record = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 100).unwrap()).map_err(|e| e.to_string())?;
    let oracle = repeated_product(0.1f64.cos().powi(2), 100);
    let got = record.final_survival();
    check((got - oracle).abs() < 1e-10, || format!("ensemble {got} vs {oracle}"))?;
    let a = analytic_survival(1.0, 0.1, 10.0).map_err(|e| e.to_string())?;
    let product = repeated_product(1.0 - 0.01, 100);
    let exponential = (-1.0f64).exp();
    check((a.exact_product - product).abs() < 1e-12, || format!("product {}", a.exact_product))?;
    check((a.exponential_approx - exponential).abs() < 1e-12, || {
        format!("exponential {}", a.exponential_approx)
    })?;
    check((a.exact_product - 0.36603).abs() < 5e-6 && (a.exponential_approx - 0.36788).abs() < 5e-6, || {
        "rounded values".into()
    })?;
    Ok(format!(
        "cumulative {got:.6}, analytic {:.5}/{:.5}",
        a.exact_product, a.exponential_approx
    ))
}

fn zeno_scaling() -> Outcome {
    let (h, s) = two_level(Polarization::horizontal());
    let mut finals = Vec::new();
    let mut ratio = f64::NAN;
    for (tau, n) in [(0.1, 100), (0.05, 200), (0.025, 400)] {
        let r = run_ensemble(&s, &h, &ZenoConfig::new(tau, n).unwrap()).map_err(|e| e.to_string())?;
        finals.push(r.final_survival());
        ratio = r.gamma_eff.ok_or("no decay rate")? / tau;
    }
    check(finals[0] < finals[1] && finals[1] < finals[2], || format!("survival {finals:?}"))?;
    check((ratio - 1.0).abs() < 0.05, || format!("Gamma_eff/tau = {ratio}"))?;
    Ok(format!("survival {finals:.4?}, Gamma_eff/tau = {ratio:.4} at tau = 0.025"))
}

fn quadratic_regime() -> Outcome {
    let photon = || grid(1, 1.0, 1.0, ModeLabel::Photon);
    let diag = Polarization::diagonal();
    let single = PulseShape::SingleMode { mode: 0 };
    let baths = vec![
        ("two-level", two_level(diag).0, two_level(diag).1),
        {
            let (h, s, _) = wideband();
            ("wideband flat", h, s)
        },
        {
            let (h, s, _) = model(
                photon(),
                grid(120, 0.01, 6.0, ModeLabel::Phonon),
                CouplingKind::Ohmic { cutoff: 1.0 },
                0.05,
                single,
                diag,
            );
            ("ohmic", h, s)
        },
        {
            let (h, s, _) = model(
                photon(),
                grid(150, 0.0, 2.0, ModeLabel::Phonon),
                CouplingKind::Lorentzian { center: 1.0, width: 0.1 },
                0.03,
                single,
                diag,
            );
            ("lorentzian", h, s)
        },
        {
            let (h, s, _) = model(
                grid(8, 0.9, 1.1, ModeLabel::Photon),
                grid(80, 0.5, 1.5, ModeLabel::Phonon),
                CouplingKind::Flat,
                0.02,
                PulseShape::Gaussian { center: 1.0, width: 0.05 },
                diag,
            );
            ("multimode gaussian pulse", h, s)
        },
    ];
    let mut worst = 0.0f64;
    for (name, h, s) in &baths {
        let gamma = compute_gamma(h, s).map_err(|e| e.to_string())?;
        let prop = SpectralPropagator::new(h);
        let psi0 = s.to_vector();
        for k in 1..=50 {
            let t = 0.05 / gamma * k as f64 / 50.0 * 0.999;
            let p = prop.propagate(&psi0, t).rows(0, h.n_photon()).norm_squared();
            let dev = (p - (1.0 - gamma * gamma * t * t)).abs();
            worst = worst.max(dev);
            check(dev < 1e-3, || format!("{name}: deviation {dev} at t = {t}"))?;
        }
    }
    Ok(format!("{} baths, worst deviation {worst:.2e}", baths.len()))
}

fn golden_rule() -> Outcome {
    let (h, s, bath) = wideband();
    let t_rec = bath.recurrence_time().ok_or("no recurrence time")?;
    let t_final = 80.0;
    check(t_final < t_rec, || "window reaches recurrence".into())?;
    let traj = zenoline_core::evolution::evolve(&s, &h, t_final, 1600).map_err(|e| e.to_string())?;
    let opts = FitOptions {
        recurrence_time: Some(t_rec),
        ..FitOptions::default()
    };
    let fit = fit_decay(&SurvivalCurve::from(&traj), &opts).map_err(|e| e.to_string())?;
    let rho = 201.0 / 2.0;
    let golden = 2.0 * PI * 0.01f64.powi(2) * rho;
    let rel = (fit.gamma_exp - golden).abs() / golden;
    check(rel < 0.1 && !fit.past_recurrence, || format!("Gamma_exp {} vs {golden}", fit.gamma_exp))?;
    Ok(format!(
        "Gamma_exp {:.5} vs 2 pi g^2 rho {golden:.5} ({:.2}%), t_rec {t_rec:.0}",
        fit.gamma_exp,
        rel * 100.0
    ))
}

fn polarization_immunity() -> Outcome {
    let ideal = QndDeviceModel::ideal();
    let mut worst = 0.0f64;
    for pol in [Polarization::horizontal(), Polarization::vertical(), Polarization::diagonal()] {
        let (h, s) = two_level(pol);
        let cfg = ZenoConfig::new(0.1, 100).unwrap().with_device(ideal);
        let r = run_ensemble(&s, &h, &cfg).map_err(|e| e.to_string())?;
        let f = pol.fidelity(&r.final_polarization);
        worst = worst.max((f - 1.0).abs());
    }
    check(worst < 1e-12, || format!("ideal fidelity off by {worst}"))?;
    let (h, s) = two_level(Polarization::diagonal());
    let device = QndDeviceModel { delta: 0.2, ..ideal };
    let r = run_ensemble(&s, &h, &ZenoConfig::new(0.1, 1).unwrap().with_device(device)).map_err(|e| e.to_string())?;
    let f = Polarization::diagonal().fidelity(&r.final_polarization);
    let oracle = 0.1f64.cos().powi(2);
    check((f - oracle).abs() < 1e-10, || format!("fidelity {f} vs {oracle}"))?;
    Ok(format!("ideal worst |1 - F| {worst:.1e}, delta = 0.2 gives {f:.5}"))
}

/// Probability mass of `N(mean, 1/2)` on one side of `threshold`, by Simpson's rule.
fn gaussian_tail(mean: f64, threshold: f64, above: bool) -> f64 {
    let sigma = 0.5f64.sqrt();
    let (lo, hi) = if above {
        (threshold, mean.max(threshold) + 14.0 * sigma)
    } else {
        (mean.min(threshold) - 14.0 * sigma, threshold)
    };
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let density = |x: f64| (-(x - mean).powi(2) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt();
    let mut sum = density(lo) + density(hi);
    for i in 1..n {
        sum += density(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn homodyne() -> Outcome {
    for alpha in [0.5, 2.0, 5.0] {
        let r = homodyne_discriminate(C64::new(alpha, 0.0), 0.0, QuadratureAngle::OPTIMAL);
        check(r.false_negative == 0.5 && r.false_positive == 0.5, || format!("theta = 0 gives {r:?}"))?;
    }
    let r = homodyne_discriminate(C64::new(2.0, 0.0), FRAC_PI_2, QuadratureAngle::OPTIMAL);
    // |2> and |2i> measured along the momentum quadrature
    let absent_mean = 2f64.sqrt() * 0.0;
    let present_mean = 2f64.sqrt() * 2.0;
    let threshold = (absent_mean + present_mean) / 2.0;
    let fn_oracle = gaussian_tail(present_mean, threshold, false);
    let fp_oracle = gaussian_tail(absent_mean, threshold, true);
    check((r.false_negative - fn_oracle).abs() < 1e-4, || format!("false negative {}", r.false_negative))?;
    check((r.false_positive - fp_oracle).abs() < 1e-4, || format!("false positive {}", r.false_positive))?;
    let mut prev = (1.0, 1.0);
    for i in 1..=40 {
        let r = homodyne_discriminate(C64::new(0.1 * i as f64, 0.0), FRAC_PI_2, QuadratureAngle::OPTIMAL);
        check(r.false_negative <= prev.0 && r.false_positive <= prev.1, || format!("not monotone at |alpha| = {}", 0.1 * i as f64))?;
        prev = (r.false_negative, r.false_positive);
    }
    Ok(format!(
        "errors {:.6}/{:.6} vs oracle {fn_oracle:.6}/{fp_oracle:.6}",
        r.false_negative, r.false_positive
    ))
}

fn monte_carlo() -> Outcome {
    let (h, s) = two_level(Polarization::horizontal());
    let cfg = ZenoConfig::new(0.1, 100).unwrap();
    let n = 10_000u64;
    let mut worst_sigma = 0.0f64;
    for seed in [1u64, 2, 3, 42, 2024] {
        let r = run_monte_carlo(&s, &h, &cfg, n, seed).map_err(|e| e.to_string())?;
        let p = r.final_survival();
        let tally = r.trials.ok_or("no tally")?;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let z = (tally.fraction() - p).abs() / sd;
        worst_sigma = worst_sigma.max(z);
        check(z <= 3.0, || format!("seed {seed}: {} vs {p} ({z:.2} sd)", tally.fraction()))?;
        let again = run_monte_carlo(&s, &h, &cfg, n, seed).map_err(|e| e.to_string())?;
        let a = serde_json::to_vec(&r.trials).unwrap();
        let b = serde_json::to_vec(&again.trials).unwrap();
        check(a == b, || format!("seed {seed} not reproducible"))?;
    }
    Ok(format!("5 seeds within {worst_sigma:.2} sd, tallies reproducible"))
}

fn tq_detector() -> Outcome {
    let dt = 0.005;
    for rate in [0.5, 0.16 / 0.84] {
        let curve = SurvivalCurve::sample(10.0, 2000, |t| {
            if t < 2.0 {
                1.0 - 0.04 * t * t
            } else {
                0.84 * (-rate * (t - 2.0)).exp()
            }
        })
        .map_err(|e| e.to_string())?;
        let fit = fit_decay(&curve, &FitOptions::default()).map_err(|e| e.to_string())?;
        let t_q = fit.t_q.ok_or("no crossover found")?;
        check((t_q - 2.0).abs() <= dt, || format!("rate {rate}: T_q = {t_q}"))?;
    }
    let pure = SurvivalCurve::sample(10.0, 2000, |t| (-0.3 * t).exp()).map_err(|e| e.to_string())?;
    let fit = fit_decay(&pure, &FitOptions::default()).map_err(|e| e.to_string())?;
    check(fit.quadratic.is_none() && fit.t_q.is_none(), || "quadratic regime reported on an exponential".into())?;
    Ok("T_q = 2 within one sample for kinked and tangent joins; none on pure exponential".into())
}

fn planner_oracle() -> Outcome {
    let mut picks = Vec::new();
    for gamma in [0.5, 1.0, 2.0] {
        for eta in [0.9, 0.95, 0.99] {
            let device = QndDeviceModel { eta, ..QndDeviceModel::ideal() };
            let params = LinkParams::new(1.0, 1.0, gamma, device);
            let plan = plan_link(&params, DeviceCount::Optimize { m_max: 200 }).map_err(|e| e.to_string())?;
            let mut best = (u32::MAX, f64::NEG_INFINITY);
            for m in 0..=200u32 {
                let tau = 1.0 / (m as f64 + 1.0);
                if gamma * tau >= 1.0 {
                    continue;
                }
                let mut s = 1.0;
                for _ in 0..=m {
                    s *= 1.0 - (gamma * tau).powi(2);
                }
                for _ in 0..m {
                    s *= eta;
                }
                if s > best.1 {
                    best = (m, s);
                }
            }
            check(plan.m == best.0, || format!("gamma {gamma}, eta {eta}: M = {} vs {}", plan.m, best.0))?;
            picks.push(plan.m);
        }
    }
    Ok(format!("optimal M on the 3x3 grid: {picks:?}"))
}

fn run_zeno_binary(config: &Path, out: &Path, threads: &str) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_zenoline"))
        .args(["zeno", "--config"])
        .arg(config)
        .args(["--seed", "42", "--out"])
        .arg(out)
        .env("ZENOLINE_THREADS", threads)
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), || format!("zenoline exited with {status}"))?;
    std::fs::read(out.join("zeno.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/two_level.json");
    let dir = std::env::temp_dir().join(format!("zenoline-acceptance-{}", std::process::id()));
    let runs = [("a", "1"), ("b", "1"), ("c", "8"), ("d", "8")];
    let mut outputs = Vec::new();
    for (name, threads) in runs {
        outputs.push(run_zeno_binary(&config, &dir.join(name), threads)?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    check(outputs.windows(2).all(|w| w[0] == w[1]), || "zeno.csv differs between runs".into())?;
    Ok(format!("4 runs (pool sizes 1, 1, 8, 8), {} identical bytes each", outputs[0].len()))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "Zeno survival law", budget: Some(Duration::from_secs(1)), run: zeno_survival_law },
        Criterion { id: 2, name: "Zeno scaling", budget: Some(Duration::from_secs(5)), run: zeno_scaling },
        Criterion { id: 3, name: "quadratic regime", budget: Some(Duration::from_secs(10)), run: quadratic_regime },
        Criterion { id: 4, name: "golden-rule oracle", budget: Some(Duration::from_secs(60)), run: golden_rule },
        Criterion { id: 5, name: "polarization immunity", budget: None, run: polarization_immunity },
        Criterion { id: 6, name: "homodyne discrimination", budget: None, run: homodyne },
        Criterion { id: 7, name: "Monte-Carlo consistency", budget: None, run: monte_carlo },
        Criterion { id: 8, name: "T_q detector", budget: None, run: tq_detector },
        Criterion { id: 9, name: "planner oracle", budget: Some(Duration::from_secs(1)), run: planner_oracle },
        Criterion { id: 10, name: "CLI determinism", budget: None, run: determinism },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {} ({elapsed:.2?}): {detail}", c.id, c.name),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {} ({elapsed:.2?}): {detail}", c.id, c.name);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
