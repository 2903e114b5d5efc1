//! Delay differential equations
//!
//! ```text
//! x'(t) = sum_j A_j x(t - t_j) + sum_j B_j u(t - t_j),   0 = t_0 < t_1 < ... < t_m
//! ```
//!
//! Stability is decided on the one-period map `P` acting on history
//! segments over `[0, t_m]`. `P` is assembled twice: from the solution
//! kernels `p`, `f`, `g` ([`kernels`]) and, independently, by integrating
//! the equation from each basis history ([`history`]).

pub mod history;
pub mod kernels;
pub mod monodromy;

pub use history::{step_history, History};
pub use kernels::{build_kernels, build_state_kernels, KernelSet, Vertex};
pub use monodromy::{monodromy, monodromy_by_stepping, state_monodromy, MonodromyOperator};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, spectral_radius, CMatrix, C64};
use crate::lti::{LoopGrowth, StabilityVerdict};

/// Delays snap to the grid when within this fraction of `t_m`.
pub const SNAP_RTOL: f64 = 1e-9;

/// Minimum grid cells per delay sub-interval for the kernel construction.
pub const CELLS_PER_DELAY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    delays: Vec<f64>,
    a_mats: Vec<CMatrix>,
    b_mats: Vec<CMatrix>,
}

impl DelaySpec {
    pub fn new(delays: Vec<f64>, a_mats: Vec<CMatrix>, b_mats: Vec<CMatrix>) -> Result<Self> {
        if delays.len() < 2 {
            return Err(Error::Dimension("need t_0 = 0 and at least one positive delay".into()));
        }
        if delays[0] != 0.0 {
            return Err(Error::Grid(format!("t_0 must be 0, got {}", delays[0])));
        }
        if delays.iter().any(|t| !t.is_finite()) || delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("delays must be finite and strictly increasing".into()));
        }
        if a_mats.len() != delays.len() || b_mats.len() != delays.len() {
            return Err(Error::Dimension(format!(
                "{} delays but {} A and {} B matrices",
                delays.len(),
                a_mats.len(),
                b_mats.len()
            )));
        }
        let d = a_mats[0].nrows();
        let p = b_mats[0].ncols();
        for (a, b) in a_mats.iter().zip(&b_mats) {
            if a.shape() != (d, d) || b.shape() != (d, p) {
                return Err(Error::Dimension(format!(
                    "expected A_j {d}x{d} and B_j {d}x{p}, got {:?} and {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            ensure_finite(a, "A_j")?;
            ensure_finite(b, "B_j")?;
        }
        Ok(Self { delays, a_mats, b_mats })
    }

    /// Scalar equation `x' = a0 x(t) + a1 x(t - tau) + u(t - tau)`.
    pub fn scalar(a0: f64, a1: f64, tau: f64) -> Result<Self> {
        let s = |x: f64| CMatrix::from_element(1, 1, C64::new(x, 0.0));
        Self::new(vec![0.0, tau], vec![s(a0), s(a1)], vec![s(0.0), s(1.0)])
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }
    pub fn a_mats(&self) -> &[CMatrix] {
        &self.a_mats
    }
    pub fn b_mats(&self) -> &[CMatrix] {
        &self.b_mats
    }
    pub fn dim(&self) -> usize {
        self.a_mats[0].nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b_mats[0].ncols()
    }
    /// Number of positive delays `m`.
    pub fn delay_count(&self) -> usize {
        self.delays.len() - 1
    }
    pub fn max_delay(&self) -> f64 {
        *self.delays.last().expect("validated")
    }
}

/// Delays expressed in units of a uniform step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayGrid {
    pub step: f64,
    pub offsets: Vec<usize>,
}

impl DelayGrid {
    /// Grid of step `step`; every delay must be an integer multiple within
    /// `SNAP_RTOL * t_m`.
    pub fn with_step(spec: &DelaySpec, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Grid(format!("step must be positive, got {step}")));
        }
        let tm = spec.max_delay();
        let offsets = spec
            .delays()
            .iter()
            .map(|&t| {
                let k = (t / step).round();
                if (k * step - t).abs() > SNAP_RTOL * tm {
                    Err(Error::Grid(format!(
                        "delay {t} is not a multiple of the step {step}"
                    )))
                } else {
                    Ok(k as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("two delays snap to the same grid point".into()));
        }
        Ok(Self { step, offsets })
    }

    /// `n` cells on `[0, t_m]`.
    pub fn with_cells(spec: &DelaySpec, n: usize) -> Result<Self> {
        let needed = CELLS_PER_DELAY * spec.delay_count();
        if n < needed {
            return Err(Error::Grid(format!(
                "need at least {needed} cells for {} delays, got {n}",
                spec.delay_count()
            )));
        }
        Self::with_step(spec, spec.max_delay() / n as f64)
    }
}

/// Feedback `u = lambda x`: `A_j <- A_j + lambda B_j`.
pub fn closed_loop_delay(spec: &DelaySpec, lambda: C64) -> Result<DelaySpec> {
    if spec.inputs() != spec.dim() {
        return Err(Error::Dimension(format!(
            "state feedback needs {} inputs, spec has {}",
            spec.dim(),
            spec.inputs()
        )));
    }
    let a_mats = spec
        .a_mats
        .iter()
        .zip(&spec.b_mats)
        .map(|(a, b)| a + b * lambda)
        .collect();
    DelaySpec::new(spec.delays.clone(), a_mats, spec.b_mats.clone())
}

/// Spectral radius of the discretized one-period map.
pub fn monodromy_radius(spec: &DelaySpec, n: usize) -> Result<f64> {
    spectral_radius(&state_monodromy(spec, n)?)
}

/// Stable iff `rho(P) < 1 - margin`, unstable iff `rho(P) > 1 + margin`.
pub fn is_delay_stable(spec: &DelaySpec, n: usize, margin: f64) -> Result<StabilityVerdict> {
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    let rho = monodromy_radius(spec, n)?;
    Ok(if rho < 1.0 - margin {
        StabilityVerdict::Stable
    } else if rho > 1.0 + margin {
        StabilityVerdict::Unstable
    } else {
        StabilityVerdict::Marginal
    })
}

/// Growth exponent `ln(rho)/t_m` of the one-period map, with `rho` attached.
pub fn delay_growth(spec: &DelaySpec, n: usize) -> Result<LoopGrowth> {
    let rho = monodromy_radius(spec, n)?;
    Ok(LoopGrowth {
        rate: rho.ln() / spec.max_delay(),
        spectral_radius: Some(rho),
    })
}
