//! Method-of-steps integration on a uniform grid.

use crate::delay::{DelayGrid, DelaySpec};
use crate::error::{Error, Result};
use crate::linalg::{c, CVector};

type Segment<'a> = Box<dyn Fn(f64) -> CVector + Send + Sync + 'a>;

/// Past values of `x`: an optional closed-form segment up to `start`,
/// followed by samples every `dt`. Off-grid queries into the sampled part
/// use cubic Lagrange interpolation.
pub struct History<'a> {
    initial: Option<Segment<'a>>,
    start: f64,
    dt: f64,
    samples: Vec<CVector>,
}

impl<'a> History<'a> {
    /// Purely sampled history; `samples[k]` is `x(start + k dt)`.
    pub fn sampled(start: f64, dt: f64, samples: Vec<CVector>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dimension("history needs at least one sample".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Grid(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            initial: None,
            start,
            dt,
            samples,
        })
    }

    /// History given in closed form for `t <= start`.
    pub fn with_initial<F>(initial: F, start: f64, dt: f64) -> Result<Self>
    where
        F: Fn(f64) -> CVector + Send + Sync + 'a,
    {
        if !(dt > 0.0) {
            return Err(Error::Grid(format!("dt must be positive, got {dt}")));
        }
        let first = initial(start);
        Ok(Self {
            initial: Some(Box::new(initial)),
            start,
            dt,
            samples: vec![first],
        })
    }

    /// Constant history `x(t) = x0` for `t <= start`.
    pub fn constant(x0: CVector, start: f64, dt: f64) -> Result<Self> {
        Self::with_initial(move |_| x0.clone(), start, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of the most recent sample.
    pub fn now(&self) -> f64 {
        self.start + (self.samples.len() - 1) as f64 * self.dt
    }

    pub fn current(&self) -> &CVector {
        self.samples.last().expect("history is never empty")
    }

    pub fn samples(&self) -> &[CVector] {
        &self.samples
    }

    pub fn push(&mut self, x: CVector) {
        self.samples.push(x);
    }

    pub fn value_at(&self, t: f64) -> Result<CVector> {
        let eps = 1e-9 * self.dt;
        if t <= self.start + eps {
            if let Some(f) = &self.initial {
                return Ok(f(t));
            }
            if t < self.start - eps {
                return Err(Error::Coverage(t));
            }
            return Ok(self.samples[0].clone());
        }
        if t > self.now() + eps {
            return Err(Error::Coverage(t));
        }
        let pos = (t - self.start) / self.dt;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return Ok(self.samples[nearest as usize].clone());
        }
        let last = self.samples.len() - 1;
        let points = (last + 1).min(4);
        let base = (pos.floor() as usize).saturating_sub(1).min(last + 1 - points);
        let mut out = CVector::zeros(self.samples[0].len());
        for k in base..base + points {
            let mut w = 1.0;
            for q in base..base + points {
                if q != k {
                    w *= (pos - q as f64) / (k as f64 - q as f64);
                }
            }
            out.axpy(c(w, 0.0), &self.samples[k], c(1.0, 0.0));
        }
        Ok(out)
    }
}

/// Right-hand side `sum_j A_j x(t - t_j) + sum_j B_j u(t - t_j)` with the
/// undelayed state supplied directly.
fn rhs(
    spec: &DelaySpec,
    history: &History<'_>,
    u: &dyn Fn(f64) -> CVector,
    t: f64,
    x: &CVector,
) -> Result<CVector> {
    let mut dx = &spec.a_mats()[0] * x;
    for (j, &tj) in spec.delays().iter().enumerate() {
        if j > 0 {
            dx += &spec.a_mats()[j] * history.value_at(t - tj)?;
        }
        if spec.inputs() > 0 {
            dx += &spec.b_mats()[j] * u(t - tj);
        }
    }
    Ok(dx)
}

/// One classical Runge-Kutta step from `history.now()`. The step must match
/// the history spacing and divide every delay.
pub fn step_history(
    spec: &DelaySpec,
    history: &History<'_>,
    u: &dyn Fn(f64) -> CVector,
    dt: f64,
) -> Result<CVector> {
    if !(dt > 0.0) {
        return Err(Error::Grid(format!("dt must be positive, got {dt}")));
    }
    if (history.dt() - dt).abs() > 1e-12 * dt {
        return Err(Error::Grid(format!(
            "step {dt} differs from history spacing {}",
            history.dt()
        )));
    }
    DelayGrid::with_step(spec, dt)?;
    let t = history.now();
    let x = history.current();
    if x.len() != spec.dim() {
        return Err(Error::Dimension(format!(
            "history has dimension {}, spec {}",
            x.len(),
            spec.dim()
        )));
    }
    let h = c(dt, 0.0);
    let half = c(0.5 * dt, 0.0);
    let k1 = rhs(spec, history, u, t, x)?;
    let k2 = rhs(spec, history, u, t + 0.5 * dt, &(x + &k1 * half))?;
    let k3 = rhs(spec, history, u, t + 0.5 * dt, &(x + &k2 * half))?;
    let k4 = rhs(spec, history, u, t + dt, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0))
}

/// Advances `history` by `steps` steps of size `history.dt()`.
pub fn integrate(
    spec: &DelaySpec,
    history: &mut History<'_>,
    u: &dyn Fn(f64) -> CVector,
    steps: usize,
) -> Result<()> {
    let dt = history.dt();
    for _ in 0..steps {
        let next = step_history(spec, history, u, dt)?;
        history.push(next);
    }
    Ok(())
}

/// Input identically zero of dimension `p`.
pub fn zero_input(p: usize) -> impl Fn(f64) -> CVector {
    move |_| CVector::zeros(p)
}
