//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use netsync::cli::{analyze_json, simulate_csv, sweep, sweep_csv, RowKind};
use netsync::config::{set_param, Config};
use netsync::delay::{is_delay_stable, monodromy_by_stepping, state_monodromy, DelaySpec};
use netsync::linalg::{c, max_real_part, CVector};
use netsync::lti::{CouplingMatrix, LtiSystem, StabilityVerdict, SyncVerdict};
use netsync::netsim::{
    fit_rate, initial_state, simulate, stability_report, state_rate, sync_error_series, synchronization_report,
    verify_prediction, Agreement, AnalysisOptions, NetworkSpec, SimOptions, Subsystem,
};
use netsync::parabolic::{discretize, Boundary, ParabolicSpec};

use common::{random_delay_spec, random_lti_network, real, rng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const K4: &str = r#"{
    "system": {"kind": "lti", "a": [[0]], "b": [[1]], "c": [[1]]},
    "coupling": {"weights": [[0,1,1,1],[1,0,1,1],[1,1,0,1],[1,1,1,0]]},
    "simulation": {"horizon": 10, "dt": 0.001, "sample_every": 100, "seed": 42}
}"#;

fn integrator_consensus() -> Outcome {
    let cfg = Config::from_json(K4).unwrap();
    let (report, _) = analyze_json(&cfg).unwrap();
    let verdict = report["verdict"].as_str().unwrap_or("").to_string();
    let net = cfg.network().unwrap();
    let (opts, seed) = cfg.sim_options().unwrap();
    let trace = simulate(&net, &initial_state(&net, seed, false).unwrap(), &opts).unwrap();
    let last = *trace.sync_error.last().unwrap();
    let (_, _, fit) = sync_error_series(&trace);
    let pass = verdict == "synchronizes" && last < 1e-6 && ((fit.rate + 4.0) / 4.0).abs() <= 0.1;
    outcome(pass, format!("verdict {verdict}, final sync_error {last:.2e}, fitted rate {:.4}", fit.rate))
}

fn discretization_fidelity() -> Outcome {
    let exact = -std::f64::consts::PI.powi(2);
    let spec = ParabolicSpec::heat(0.0, 1.0, Boundary::Dirichlet);
    let err: Vec<f64> = [50, 100, 200]
        .iter()
        .map(|&n| (max_real_part(discretize(&spec, n).unwrap().sys.a()).unwrap() - exact).abs())
        .collect();
    let rel = err[2] / exact.abs();
    let orders = [(err[0] / err[1]).log2(), (err[1] / err[2]).log2()];
    let pass = rel < 5e-3 && orders.iter().all(|&p| p >= 1.9);
    outcome(pass, format!("relative error {rel:.2e} at n=200, orders {:.3} {:.3}", orders[0], orders[1]))
}

fn parabolic_threshold() -> Outcome {
    let sigma = 0.8;
    let base: serde_json::Value = serde_json::from_str(&format!(
        r#"{{
            "system": {{"kind": "parabolic", "a": 1, "r0": 1, "b": 1,
                        "boundary": {{"type": "neumann"}}, "n_cells": 100}},
            "coupling": {{"weights": [[0, {sigma}], [{sigma}, 0]]}},
            "simulation": {{"horizon": 20, "dt": 0.01, "sample_every": 10, "seed": 3}}
        }}"#
    ))
    .unwrap();
    let rows = sweep(&base, "system.r0", 1.0, 3.0, 5, true, None).unwrap();
    let find = |kind: RowKind| rows.iter().find(|(k, _)| *k == kind).map(|(_, p)| p.param);
    let (Some(crit), Some(sim)) = (find(RowKind::CriterionBoundary), find(RowKind::SimulationBoundary)) else {
        return outcome(false, format!("missing boundary rows in {} rows", rows.len()));
    };
    let expected = 2.0 * sigma;
    let crit_ok = ((crit - expected) / expected).abs() < 0.01;
    let sim_ok = ((sim - crit) / crit).abs() < 0.05;
    outcome(crit_ok && sim_ok, format!("criterion flip {crit:.4} (2 sigma = {expected}), simulated flip {sim:.4}"))
}

fn hayes_boundary() -> Outcome {
    let stable = |a: f64| {
        let spec = DelaySpec::scalar(0.0, -a, 1.0).unwrap();
        is_delay_stable(&spec, 200, 1e-6).unwrap() == StabilityVerdict::Stable
    };
    let (mut lo, mut hi) = (1.0, 2.0);
    if !stable(lo) || stable(hi) {
        return outcome(false, "bracket [1, 2] does not straddle the boundary".into());
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let at = 0.5 * (lo + hi);
    outcome((1.54..=1.60).contains(&at), format!("boundary at a = {at:.5}"))
}

fn kernel_vs_stepping() -> Outcome {
    let n = 100;
    let mut rng = rng(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let spec = random_delay_spec(&mut rng, n);
        let p = state_monodromy(&spec, n).unwrap();
        let ps = monodromy_by_stepping(&spec, n, 4).unwrap();
        worst = worst.max((&p - &ps).norm() / ps.norm());
    }
    outcome(worst <= 1e-3, format!("worst relative difference {worst:.2e} over 20 specs"))
}

/// Horizon and step sized so the slowest mode moves by about 25 e-folds and
/// RK4 stays well inside its stability region.
fn sim_options_for(net: &NetworkSpec, worst: f64) -> SimOptions {
    let Subsystem::Lti(sys) = net.subsystem() else { unreachable!() };
    let scale = sys.a().norm() + sys.b().norm() * sys.c().norm() * net.coupling().matrix().norm();
    let dt = (0.5 / scale).min(0.01);
    let horizon = (25.0 / worst.abs()).clamp(5.0, 200.0);
    let steps = (horizon / dt).ceil() as usize;
    SimOptions { horizon: steps as f64 * dt, dt, sample_every: (steps / 400).max(1) }
}

fn criterion_agreement() -> Outcome {
    let opts = AnalysisOptions::default();
    let mut rng = rng(7);
    let (mut tested, mut agree, mut excluded) = (0, 0, 0);
    let mut failures = Vec::new();
    for case in 0..50u64 {
        let net = random_lti_network(&mut rng);
        let report = synchronization_report(&net, &opts).unwrap();
        let worst = report.worst_rate();
        if worst.abs() < 0.05 {
            excluded += 1;
            continue;
        }
        let sim = sim_options_for(&net, worst);
        let trace = simulate(&net, &initial_state(&net, case, false).unwrap(), &sim).unwrap();
        match verify_prediction(&report, &trace, 1e-3) {
            Agreement::Excluded => excluded += 1,
            Agreement::Agree => {
                tested += 1;
                agree += 1;
            }
            Agreement::Disagree => {
                tested += 1;
                failures.push(case);
            }
        }
    }
    let pass = tested > 0 && agree == tested;
    outcome(pass, format!("{agree}/{tested} agree, {excluded} excluded, disagreeing cases {failures:?}"))
}

fn output_vs_state() -> Outcome {
    let sys = LtiSystem::strictly_proper(real(2, 2, &[1.0, 0.0, 0.0, -1.0]), real(2, 1, &[0.0, 1.0]), real(1, 2, &[0.0, 1.0]))
        .unwrap();
    let net = NetworkSpec::new(Subsystem::Lti(sys), CouplingMatrix::raw(real(1, 1, &[0.0])).unwrap()).unwrap();
    let output = stability_report(&net, &AnalysisOptions::default()).unwrap().verdict;
    let state_opts = AnalysisOptions { state: true, ..AnalysisOptions::default() };
    let state = stability_report(&net, &state_opts).unwrap().verdict;
    let x0 = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
    let trace = simulate(&net, &x0, &SimOptions { horizon: 10.0, dt: 1e-3, sample_every: 10 }).unwrap();
    let out_norm: Vec<f64> = trace.outputs.iter().map(|y| y.norm()).collect();
    let out_fit = fit_rate(&trace.times, &out_norm, &vec![0.0; trace.len()]);
    let state_fit = state_rate(&trace);
    let pass = output == StabilityVerdict::Stable
        && state == StabilityVerdict::Unstable
        && out_fit.rate < -0.5
        && state_fit.rate > 0.5;
    outcome(
        pass,
        format!(
            "output test {}, state test {}, output rate {:.3}, state rate {:.3}",
            output.as_str(),
            state.as_str(),
            out_fit.rate,
            state_fit.rate
        ),
    )
}

fn invariance_suite() -> Outcome {
    let opts = AnalysisOptions::default();
    let mut rng = rng(99);
    let mut notes = Vec::new();

    let mut permutation_ok = true;
    for _ in 0..20 {
        let net = random_lti_network(&mut rng);
        let n = net.nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(1);
        perm.swap(0, n - 1);
        let permuted = net.with_coupling(net.coupling().permuted(&perm).unwrap()).unwrap();
        let a = synchronization_report(&net, &opts).unwrap();
        let b = synchronization_report(&permuted, &opts).unwrap();
        if a.verdict != b.verdict && a.verdict != SyncVerdict::Marginal && b.verdict != SyncVerdict::Marginal {
            permutation_ok = false;
        }
    }
    notes.push(format!("permutation {}", if permutation_ok { "ok" } else { "FAILED" }));

    let mut diagonal = 0.0f64;
    for _ in 0..5 {
        let net = random_lti_network(&mut rng);
        let x0 = initial_state(&net, 5, true).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 2.0, dt: 1e-3, sample_every: 10 }).unwrap();
        let scale = trace.output_scale().iter().fold(1.0f64, |m, s| m.max(*s));
        diagonal = diagonal.max(trace.sync_error.iter().fold(0.0f64, |m, e| m.max(*e)) / scale);
    }
    notes.push(format!("diagonal sync_error {diagonal:.1e}"));

    let net = random_lti_network(&mut rng);
    let sim = SimOptions { horizon: 3.0, dt: 1e-3, sample_every: 50 };
    let (x, y) = (initial_state(&net, 1, false).unwrap(), initial_state(&net, 2, false).unwrap());
    let alpha = c(0.7, -1.3);
    let tx = simulate(&net, &x, &sim).unwrap();
    let ty = simulate(&net, &y, &sim).unwrap();
    let txy = simulate(&net, &(&x + &y * alpha), &sim).unwrap();
    let linearity = (0..txy.len())
        .map(|k| {
            let expect = &tx.outputs[k] + &ty.outputs[k] * alpha;
            (&txy.outputs[k] - &expect).norm() / expect.norm().max(1e-300)
        })
        .fold(0.0f64, f64::max);
    notes.push(format!("linearity {linearity:.1e}"));

    let examples = [
        K4,
        include_str!("../../../configs/heat_pair.json"), include_str!("../../../configs/hayes.json"), include_str!("../../../configs/output_vs_state.json")];
    let round_trip = examples.iter().all(|text| {
        let cfg = Config::from_json(text).unwrap();
        Config::from_json(&cfg.to_json()).unwrap() == cfg
    });
    notes.push(format!("round trip {}", if round_trip { "ok" } else { "FAILED" }));

    let cfg = Config::from_json(K4).unwrap();
    let base: serde_json::Value = serde_json::from_str(K4).unwrap();
    let shifted = set_param(&base, "system.a.0.0", 0.5).unwrap();
    let deterministic = simulate_csv(&cfg, None, false).unwrap() == simulate_csv(&cfg, None, false).unwrap()
        && sweep_csv(&shifted, "system.a.0.0", -1.0, 1.0, 5, true, None).unwrap()
            == sweep_csv(&shifted, "system.a.0.0", -1.0, 1.0, 5, true, None).unwrap();
    notes.push(format!("csv determinism {}", if deterministic { "ok" } else { "FAILED" }));

    let pass = permutation_ok && diagonal <= 1e-10 && linearity <= 1e-8 && round_trip && deterministic;
    outcome(pass, notes.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("integrator consensus on K4", Duration::from_secs(1), integrator_consensus),
        ("heat discretization fidelity", Duration::from_secs(5), discretization_fidelity),
        ("parabolic sync threshold", Duration::from_secs(60), parabolic_threshold),
        ("delay stability boundary", Duration::from_secs(30), hayes_boundary),
        ("kernel and stepping monodromy", Duration::from_secs(60), kernel_vs_stepping),
        ("criterion and simulation agree", Duration::from_secs(120), criterion_agreement),
        ("output versus state stability", Duration::from_secs(1), output_vs_state),
        ("invariance suite", Duration::from_secs(60), invariance_suite),
    ];
    let mut failed = 0;
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let pass = result.pass && took <= *budget;
        failed += usize::from(!pass);
        println!(
            "criterion {} ({name}): {} [{:.2}s of {}s] {}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
