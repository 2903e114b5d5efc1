//! Coupled networks `Close(P^n, L)`: criterion evaluation per subsystem
//! class and time-domain simulation.
//!
//! Node `j` receives `u_j = sum_i L[j][i] y_i`. State and output vectors
//! are stacked node by node.

use nalgebra::LU;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::delay::history::{zero_input, History};
use crate::delay::{closed_loop_delay, delay_growth, step_history, DelaySpec};
use crate::error::{Error, Result};
use crate::linalg::{c, complexify, kron, max_real_part, CMatrix, CVector, C64};
use crate::lti::{
    closed_loop, invert_well_conditioned, observable_growth, stability_report_with, sync_report_with, CouplingMatrix,
    LoopGrowth, LtiSystem, StabilityReport, SyncReport, SyncVerdict,
};
use crate::parabolic::{discretize, Boundary, ParabolicSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Subsystem {
    Lti(LtiSystem),
    Parabolic { spec: ParabolicSpec, n_cells: usize },
    Delay(DelaySpec),
}

impl Subsystem {
    pub fn kind(&self) -> &'static str {
        match self {
            Subsystem::Lti(_) => "lti",
            Subsystem::Parabolic { .. } => "parabolic",
            Subsystem::Delay(_) => "delay",
        }
    }

    /// `(states, inputs, outputs)` of one node.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        Ok(match self {
            Subsystem::Lti(s) => (s.states(), s.inputs(), s.outputs()),
            Subsystem::Parabolic { spec, n_cells } => {
                let d = discretize(spec, *n_cells)?.sys;
                (d.states(), d.inputs(), d.outputs())
            }
            Subsystem::Delay(s) => (s.dim(), s.inputs(), s.dim()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    subsystem: Subsystem,
    coupling: CouplingMatrix,
}

impl NetworkSpec {
    pub fn new(subsystem: Subsystem, coupling: CouplingMatrix) -> Result<Self> {
        let (_, p, q) = subsystem.dims()?;
        if p != q {
            return Err(Error::Dimension(format!(
                "coupling needs as many inputs as outputs, subsystem has {p} and {q}"
            )));
        }
        if coupling.nodes() == 0 {
            return Err(Error::Dimension("network has no nodes".into()));
        }
        Ok(Self { subsystem, coupling })
    }

    pub fn subsystem(&self) -> &Subsystem {
        &self.subsystem
    }
    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }
    pub fn nodes(&self) -> usize {
        self.coupling.nodes()
    }

    pub fn with_coupling(&self, coupling: CouplingMatrix) -> Result<Self> {
        Self::new(self.subsystem.clone(), coupling)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub margin: f64,
    /// Grid cells per period for delay subsystems.
    pub delay_cells: usize,
    /// Test the state (`C = I`) instead of the output.
    pub state: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            margin: 1e-6,
            delay_cells: 200,
            state: false,
        }
    }
}

/// Growth rate of the single-node loop closed with gain `lambda`.
pub fn loop_growth(sub: &Subsystem, lambda: C64, opts: &AnalysisOptions) -> Result<LoopGrowth> {
    match sub {
        Subsystem::Lti(sys) => {
            let sys = if opts.state { sys.state_variant()? } else { sys.clone() };
            observable_growth(&closed_loop(&sys, lambda)?).map(LoopGrowth::from)
        }
        Subsystem::Parabolic { spec, n_cells } => {
            let sys = discretize(spec, *n_cells)?.sys;
            max_real_part(closed_loop(&sys, lambda)?.a()).map(LoopGrowth::from)
        }
        Subsystem::Delay(spec) => delay_growth(&closed_loop_delay(spec, lambda)?, opts.delay_cells),
    }
}

pub fn synchronization_report(net: &NetworkSpec, opts: &AnalysisOptions) -> Result<SyncReport> {
    sync_report_with(&net.coupling, opts.margin, |l| loop_growth(&net.subsystem, l, opts))
}

pub fn stability_report(net: &NetworkSpec, opts: &AnalysisOptions) -> Result<StabilityReport> {
    stability_report_with(&net.coupling, opts.margin, |l| loop_growth(&net.subsystem, l, opts))
}

/// `(A_net, C_net)` with `y = C_net x` for the coupled state-space network.
pub fn assemble_lti(sys: &LtiSystem, l: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let n = l.nrows();
    let eye_n = CMatrix::identity(n, n);
    let a = kron(&eye_n, sys.a());
    let b = kron(&eye_n, sys.b());
    let cm = kron(&eye_n, sys.c());
    if !sys.has_feedthrough() {
        return Ok((a + b * kron(l, sys.c()), cm));
    }
    let q = sys.outputs();
    let loop_matrix = CMatrix::identity(n * q, n * q) - kron(l, sys.d());
    let inv = invert_well_conditioned(&loop_matrix, 1.0 + l.norm() * sys.d().norm())
        .ok_or(Error::AlgebraicLoop { re: f64::NAN, im: f64::NAN })?;
    let c_net = inv * cm;
    let a_net = a + b * kron(l, &CMatrix::identity(q, q)) * &c_net;
    Ok((a_net, c_net))
}

/// Network delay equation `A_j <- I ⊗ A_j + L ⊗ B_j`, input-free.
pub fn assemble_delay(spec: &DelaySpec, l: &CMatrix) -> Result<DelaySpec> {
    if spec.inputs() != spec.dim() {
        return Err(Error::Dimension(format!(
            "state coupling needs {} inputs, spec has {}",
            spec.dim(),
            spec.inputs()
        )));
    }
    let n = l.nrows();
    let eye_n = CMatrix::identity(n, n);
    let a = spec
        .a_mats()
        .iter()
        .zip(spec.b_mats())
        .map(|(a, b)| kron(&eye_n, a) + kron(l, b))
        .collect::<Vec<_>>();
    let b = vec![CMatrix::zeros(n * spec.dim(), 0); a.len()];
    DelaySpec::new(spec.delays().to_vec(), a, b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub dt: f64,
    pub sample_every: usize,
}

/// Sampled trajectory. `outputs[k]` is `n x q` with row `j` holding `y_j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub outputs: Vec<CMatrix>,
    /// `max_{k,c} |y_{k+1,c} - y_{1,c}|`.
    pub sync_error: Vec<f64>,
    /// `max_{i,j,c} |y_{i,c} - y_{j,c}|`.
    pub pairwise_error: Vec<f64>,
    /// Euclidean norm of the stacked network state.
    pub state_norms: Vec<f64>,
}

impl SimulationTrace {
    fn record(&mut self, t: f64, x: &CVector, y: &CVector, n: usize) {
        let q = y.len() / n;
        let out = CMatrix::from_fn(n, q, |j, k| y[j * q + k]);
        let mut sync = 0.0f64;
        let mut pairwise = 0.0f64;
        for k in 0..q {
            for i in 0..n {
                sync = sync.max((out[(i, k)] - out[(0, k)]).norm());
                for j in (i + 1)..n {
                    pairwise = pairwise.max((out[(i, k)] - out[(j, k)]).norm());
                }
            }
        }
        self.times.push(t);
        self.outputs.push(out);
        self.sync_error.push(sync);
        self.pairwise_error.push(pairwise);
        self.state_norms.push(x.norm());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max |y_{j,c}(t)|` per sample.
    pub fn output_scale(&self) -> Vec<f64> {
        self.outputs
            .iter()
            .map(|y| y.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .collect()
    }
}

fn check_sim(opts: &SimOptions) -> Result<usize> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::Grid(format!("dt must be positive, got {}", opts.dt)));
    }
    if !(opts.horizon >= 10.0 * opts.dt) || !opts.horizon.is_finite() {
        return Err(Error::Grid(format!(
            "horizon {} must be at least 10 steps of {}",
            opts.horizon, opts.dt
        )));
    }
    if opts.sample_every == 0 {
        return Err(Error::Grid("sample_every must be positive".into()));
    }
    Ok((opts.horizon / opts.dt).round() as usize)
}

/// Per-node state dimension used for initial conditions.
pub fn state_dim(net: &NetworkSpec) -> Result<usize> {
    Ok(net.subsystem.dims()?.0)
}

/// Seeded initial state, uniform in `[-1, 1]` per real and imaginary part.
/// Parabolic nodes get smooth profiles (a few cosine modes, or sine modes
/// under Dirichlet conditions). With `diagonal` every node gets the same state.
pub fn initial_state(net: &NetworkSpec, seed: u64, diagonal: bool) -> Result<CVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = state_dim(net)?;
    let n = net.nodes();
    let draw = |rng: &mut ChaCha8Rng| c(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
    let node = |rng: &mut ChaCha8Rng| -> CVector {
        match &net.subsystem {
            Subsystem::Parabolic { spec, n_cells } => {
                let grid = spec.grid(*n_cells);
                let dirichlet = matches!(spec.boundary, Boundary::Dirichlet);
                let coeffs: Vec<C64> = (0..4).map(|_| draw(rng)).collect();
                CVector::from_fn(d, |i, _| {
                    coeffs.iter().enumerate().fold(c(0.0, 0.0), |acc, (k, a)| {
                        let w = std::f64::consts::PI * grid[i];
                        let mode = if dirichlet {
                            ((k + 1) as f64 * w).sin()
                        } else {
                            (k as f64 * w).cos()
                        };
                        acc + a * (mode / (1 + k * k) as f64)
                    })
                })
            }
            _ => CVector::from_fn(d, |_, _| draw(rng)),
        }
    };
    let mut x = CVector::zeros(n * d);
    let shared = diagonal.then(|| node(&mut rng));
    for j in 0..n {
        let v = match &shared {
            Some(v) => v.clone(),
            None => node(&mut rng),
        };
        x.rows_mut(j * d, d).copy_from(&v);
    }
    Ok(x)
}

/// Integrates the network from `x0` (for delay subsystems, the constant
/// history on `[-t_m, 0]`) and samples every `sample_every` steps.
pub fn simulate(net: &NetworkSpec, x0: &CVector, opts: &SimOptions) -> Result<SimulationTrace> {
    let steps = check_sim(opts)?;
    let n = net.nodes();
    let l = net.coupling.matrix();
    let mut trace = SimulationTrace::default();
    let expect = n * state_dim(net)?;
    if x0.len() != expect {
        return Err(Error::Dimension(format!(
            "initial state has length {}, network needs {expect}",
            x0.len()
        )));
    }
    let h = opts.dt;
    match &net.subsystem {
        Subsystem::Lti(sys) => {
            let (a, cm) = assemble_lti(sys, l)?;
            let ha = a * c(h, 0.0);
            let eye = CMatrix::identity(ha.nrows(), ha.ncols());
            let ha2 = &ha * &ha;
            let ha3 = &ha2 * &ha;
            let ha4 = &ha3 * &ha;
            let step = eye + &ha + ha2 * c(0.5, 0.0) + ha3 * c(1.0 / 6.0, 0.0) + ha4 * c(1.0 / 24.0, 0.0);
            run_linear(&mut trace, x0, &cm, n, steps, opts, |x| &step * x)
        }
        Subsystem::Parabolic { spec, n_cells } => {
            let sys = discretize(spec, *n_cells)?.sys;
            let (a, cm) = assemble_lti(&sys, l)?;
            let half = &a * c(0.5 * h, 0.0);
            let eye = CMatrix::identity(a.nrows(), a.ncols());
            let lu = LU::new(&eye - &half);
            let explicit = &eye + &half;
            if !lu.is_invertible() {
                return Err(Error::Numeric("Crank-Nicolson matrix is singular".into()));
            }
            run_linear(&mut trace, x0, &cm, n, steps, opts, |x| {
                lu.solve(&(&explicit * x)).expect("checked invertible")
            })
        }
        Subsystem::Delay(spec) => {
            let net_spec = assemble_delay(spec, l)?;
            let mut history = History::constant(x0.clone(), 0.0, h)?;
            let u = zero_input(0);
            trace.record(0.0, x0, x0, n);
            for k in 1..=steps {
                let next = step_history(&net_spec, &history, &u, h)?;
                if k % opts.sample_every == 0 {
                    trace.record(k as f64 * h, &next, &next, n);
                }
                history.push(next);
            }
            Ok(trace)
        }
    }
}

fn run_linear<F>(
    trace: &mut SimulationTrace,
    x0: &CVector,
    cm: &CMatrix,
    n: usize,
    steps: usize,
    opts: &SimOptions,
    mut advance: F,
) -> Result<SimulationTrace>
where
    F: FnMut(&CVector) -> CVector,
{
    let mut x = x0.clone();
    trace.record(0.0, &x, &(cm * &x), n);
    for k in 1..=steps {
        x = advance(&x);
        if k % opts.sample_every == 0 {
            trace.record(k as f64 * opts.dt, &x, &(cm * &x), n);
        }
    }
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("simulation diverged to non-finite values".into()));
    }
    Ok(std::mem::take(trace))
}

/// Below this fraction of the output magnitude a sync error is round-off.
pub const ROUNDOFF_RTOL: f64 = 1e-10;
/// Traces whose errors never exceed this are treated as identically zero.
pub const ZERO_ERROR: f64 = 1e-12;

/// Exponential rate fitted to a positive series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Slope of `ln(value)` versus `t`; `-inf` when degenerate.
    pub rate: f64,
    pub r_squared: f64,
    /// No resolvable signal: the series stays at zero or round-off level.
    pub degenerate: bool,
    pub samples: usize,
}

impl RateFit {
    fn degenerate() -> Self {
        Self {
            rate: f64::NEG_INFINITY,
            r_squared: f64::NAN,
            degenerate: true,
            samples: 0,
        }
    }
}

/// Least-squares fit of `ln(values)` over the last half of the window that
/// ends at the last sample above `floors`.
pub fn fit_rate(times: &[f64], values: &[f64], floors: &[f64]) -> RateFit {
    let resolved = |k: usize| values[k] > floors[k] && values[k] > ZERO_ERROR && values[k].is_finite();
    let Some(last) = (0..values.len()).rev().find(|&k| resolved(k)) else {
        return RateFit::degenerate();
    };
    let start = times[0] + 0.5 * (times[last] - times[0]);
    let pts: Vec<(f64, f64)> = (0..=last)
        .filter(|&k| times[k] >= start && resolved(k))
        .map(|k| (times[k], values[k].ln()))
        .collect();
    if pts.len() < 2 {
        return RateFit::degenerate();
    }
    let m = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / m, b + y / m));
    let (stt, sty, syy) = pts.iter().fold((0.0, 0.0, 0.0), |(a, b, cc), (t, y)| {
        (a + (t - mt) * (t - mt), b + (t - mt) * (y - my), cc + (y - my) * (y - my))
    });
    if stt == 0.0 {
        return RateFit::degenerate();
    }
    let rate = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    RateFit {
        rate,
        r_squared,
        degenerate: false,
        samples: pts.len(),
    }
}

/// Sync-error samples and their fitted decay rate.
pub fn sync_error_series(trace: &SimulationTrace) -> (Vec<f64>, Vec<f64>, RateFit) {
    let floors: Vec<f64> = trace.output_scale().iter().map(|s| ROUNDOFF_RTOL * s).collect();
    let fit = fit_rate(&trace.times, &trace.sync_error, &floors);
    (trace.times.clone(), trace.sync_error.clone(), fit)
}

/// Fitted growth rate of the state norm.
pub fn state_rate(trace: &SimulationTrace) -> RateFit {
    let floors = vec![0.0; trace.len()];
    fit_rate(&trace.times, &trace.state_norms, &floors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agreement {
    Agree,
    Disagree,
    /// Marginal verdict or a trace without resolvable sync error.
    Excluded,
}

/// Compares the criterion with the fitted sync-error rate: synchronization
/// should come with `rate < -rate_margin`, its absence with `rate >= -rate_margin`.
pub fn verify_prediction(report: &SyncReport, trace: &SimulationTrace, rate_margin: f64) -> Agreement {
    let (_, _, fit) = sync_error_series(trace);
    if report.verdict == SyncVerdict::Marginal || fit.degenerate {
        return Agreement::Excluded;
    }
    let decays = fit.rate < -rate_margin;
    match (report.verdict, decays) {
        (SyncVerdict::Synchronizes, true) | (SyncVerdict::DoesNotSynchronize, false) => Agreement::Agree,
        _ => Agreement::Disagree,
    }
}

/// Real diffusive coupling from a weight matrix.
pub fn diffusive(weights: &[Vec<f64>]) -> Result<CouplingMatrix> {
    let n = weights.len();
    if weights.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("weight matrix must be square".into()));
    }
    CouplingMatrix::diffusive(nalgebra::DMatrix::from_fn(n, n, |i, j| weights[i][j]))
}

/// Complex coupling from a real matrix.
pub fn raw_real(l: &nalgebra::DMatrix<f64>) -> Result<CouplingMatrix> {
    CouplingMatrix::raw(complexify(l))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(rows, cols, &v.iter().map(|x| c(*x, 0.0)).collect::<Vec<_>>())
    }

    fn integrators(n: usize) -> NetworkSpec {
        let sys = LtiSystem::strictly_proper(m(1, 1, &[0.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        NetworkSpec::new(Subsystem::Lti(sys), CouplingMatrix::complete(n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn integrator_consensus_reaches_average() {
        let net = integrators(4);
        let x0 = initial_state(&net, 42, false).unwrap();
        let avg = x0.sum() / c(4.0, 0.0);
        let opts = SimOptions { horizon: 10.0, dt: 1e-3, sample_every: 10 };
        let trace = simulate(&net, &x0, &opts).unwrap();
        assert!(*trace.sync_error.last().unwrap() < 1e-6);
        for z in trace.outputs.last().unwrap().iter() {
            assert!((z - avg).norm() < 1e-6);
        }
        let (_, _, fit) = sync_error_series(&trace);
        assert!((fit.rate + 4.0).abs() < 0.4, "{fit:?}");
        let report = synchronization_report(&net, &AnalysisOptions::default()).unwrap();
        assert_eq!(verify_prediction(&report, &trace, 1e-3), Agreement::Agree);
    }

    #[test]
    fn consensus_conserves_sum() {
        let net = integrators(5);
        let x0 = initial_state(&net, 7, false).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 2.0, dt: 1e-2, sample_every: 1 }).unwrap();
        for y in &trace.outputs {
            assert!((y.sum() - x0.sum()).norm() < 1e-8);
        }
    }

    #[test]
    fn single_stable_node_decays_exponentially() {
        let sys = LtiSystem::strictly_proper(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let net = NetworkSpec::new(Subsystem::Lti(sys), CouplingMatrix::raw(m(1, 1, &[0.0])).unwrap()).unwrap();
        let trace = simulate(&net, &m(1, 1, &[1.0]).column(0).into(), &SimOptions { horizon: 1.0, dt: 1e-3, sample_every: 1000 }).unwrap();
        assert!((trace.outputs[1][(0, 0)].re - (-1f64).exp()).abs() < 1e-6);
        assert_eq!(trace.sync_error, vec![0.0, 0.0]);
    }

    #[test]
    fn diagonal_start_is_flagged() {
        let sys = LtiSystem::strictly_proper(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let net = NetworkSpec::new(Subsystem::Lti(sys), diffusive(&[vec![0.0, 0.1], vec![0.1, 0.0]]).unwrap()).unwrap();
        let x0 = initial_state(&net, 3, true).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 5.0, dt: 1e-2, sample_every: 1 }).unwrap();
        assert!(trace.sync_error.iter().all(|e| *e <= 1e-10));
        let (_, _, fit) = sync_error_series(&trace);
        assert!(fit.degenerate && fit.rate == f64::NEG_INFINITY);
        let report = synchronization_report(&net, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.verdict, SyncVerdict::DoesNotSynchronize);
        assert_eq!(verify_prediction(&report, &trace, 1e-3), Agreement::Excluded);
    }

    #[test]
    fn weak_coupling_of_unstable_nodes_grows() {
        let sys = LtiSystem::strictly_proper(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let net = NetworkSpec::new(Subsystem::Lti(sys), diffusive(&[vec![0.0, 0.1], vec![0.1, 0.0]]).unwrap()).unwrap();
        let x0 = initial_state(&net, 3, false).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 5.0, dt: 1e-2, sample_every: 1 }).unwrap();
        let (_, _, fit) = sync_error_series(&trace);
        assert!((fit.rate - 0.8).abs() < 1e-3, "{fit:?}");
        let report = synchronization_report(&net, &AnalysisOptions::default()).unwrap();
        assert_eq!(verify_prediction(&report, &trace, 1e-3), Agreement::Agree);
    }

    #[test]
    fn disconnected_pair_does_not_synchronize() {
        // lambda = 0 has multiplicity two; the copy left after removing
        // lambda_1 carries the unstable node dynamics
        let sys = LtiSystem::strictly_proper(m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let net = NetworkSpec::new(Subsystem::Lti(sys), diffusive(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap()).unwrap();
        let report = synchronization_report(&net, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.per_lambda.len(), 1);
        assert_eq!(report.verdict, SyncVerdict::DoesNotSynchronize);
        let x0 = initial_state(&net, 1, false).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 5.0, dt: 1e-2, sample_every: 10 }).unwrap();
        let (_, _, fit) = sync_error_series(&trace);
        assert!((fit.rate - 1.0).abs() < 1e-6, "{fit:?}");
        assert_eq!(verify_prediction(&report, &trace, 1e-3), Agreement::Agree);
    }

    #[test]
    fn heat_pair_synchronizes() {
        let spec = ParabolicSpec::heat(0.0, 1.0, Boundary::Neumann { kappa_left: c(0.0, 0.0), kappa_right: c(0.0, 0.0) });
        let net = NetworkSpec::new(
            Subsystem::Parabolic { spec, n_cells: 50 },
            CouplingMatrix::complete(2, 1.0).unwrap(),
        )
        .unwrap();
        let report = synchronization_report(&net, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.verdict, SyncVerdict::Synchronizes);
        let x0 = initial_state(&net, 5, false).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 10.0, dt: 1e-2, sample_every: 100 }).unwrap();
        let at = |t: f64| trace.sync_error[trace.times.iter().position(|s| (s - t).abs() < 1e-9).unwrap()];
        assert!(at(10.0) / at(1.0) < 1e-3);
        assert!(trace.sync_error.windows(2).skip(1).all(|w| w[1] < w[0]));
    }

    #[test]
    fn delay_pair_with_strong_gain_desynchronizes() {
        let spec = DelaySpec::scalar(0.0, 0.0, 1.0).unwrap();
        let net = NetworkSpec::new(Subsystem::Delay(spec), CouplingMatrix::complete(2, 1.0).unwrap()).unwrap();
        let opts = AnalysisOptions { delay_cells: 100, ..Default::default() };
        let report = synchronization_report(&net, &opts).unwrap();
        assert_eq!(report.verdict, SyncVerdict::DoesNotSynchronize);
        let x0 = initial_state(&net, 9, false).unwrap();
        let trace = simulate(&net, &x0, &SimOptions { horizon: 20.0, dt: 0.01, sample_every: 10 }).unwrap();
        assert!(trace.sync_error.last().unwrap() > &trace.sync_error[0]);
        assert_eq!(verify_prediction(&report, &trace, 1e-3), Agreement::Agree);
    }

    #[test]
    fn delay_grid_mismatch_is_reported() {
        let spec = DelaySpec::scalar(0.0, -1.0, 1.0).unwrap();
        let net = NetworkSpec::new(Subsystem::Delay(spec), CouplingMatrix::complete(2, 1.0).unwrap()).unwrap();
        let x0 = initial_state(&net, 9, false).unwrap();
        let err = simulate(&net, &x0, &SimOptions { horizon: 5.0, dt: 0.3, sample_every: 1 }).unwrap_err();
        assert!(matches!(err, Error::Grid(_)));
    }

    #[test]
    fn feedthrough_network_matches_closed_loop() {
        // scalar a = -1, b = c = 1, d = 0.5 on K_2: modes lambda in {0, -2}
        let sys = LtiSystem::new(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), m(1, 1, &[0.5])).unwrap();
        let l = CouplingMatrix::complete(2, 1.0).unwrap();
        let (a, _) = assemble_lti(&sys, l.matrix()).unwrap();
        let mut eig: Vec<f64> = crate::linalg::eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        let expect = |lambda: f64| closed_loop(&sys, c(lambda, 0.0)).unwrap().a()[(0, 0)].re;
        assert!((eig[0] - expect(-2.0)).abs() < 1e-12);
        assert!((eig[1] - expect(0.0)).abs() < 1e-12);
    }

    #[test]
    fn fit_handles_floors() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp().max(1e-17)).collect();
        let fit = fit_rate(&t, &v, &vec![1e-10; 100]);
        assert!((fit.rate + 2.0).abs() < 1e-9 && fit.r_squared > 0.999_999);
    }
}
