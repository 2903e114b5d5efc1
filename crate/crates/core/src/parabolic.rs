//! 1-D second-order parabolic subsystems on `[0, 1]`:
//!
//! ```text
//! x_t = (a x_xi)_xi + r0 x + r1 x_xi + b u
//! ```
//!
//! with Dirichlet data, a Robin condition `n . a x_xi = kappa x`, or a
//! boundary input `n . a x_xi = kappa x + m u`. Space is discretized by
//! second-order central differences in divergence form; the Robin closure
//! eliminates the ghost node through the boundary flux, which amounts to a
//! half-cell balance at each end.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{c, max_real_part, CMatrix, CVector, C64};
use crate::lti::LtiSystem;

pub const MIN_CELLS: usize = 4;

/// Boundary conditions at `xi = 0` and `xi = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Dirichlet,
    Neumann {
        kappa_left: C64,
        kappa_right: C64,
    },
    NeumannInput {
        kappa_left: C64,
        kappa_right: C64,
        m_left: C64,
        m_right: C64,
    },
}

/// Coefficients sampled uniformly on `[0, 1]`. A single sample denotes a
/// constant; longer arrays must share one length and are interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicSpec {
    pub a: Vec<f64>,
    pub r0: Vec<C64>,
    pub r1: Vec<C64>,
    pub b: Vec<C64>,
    pub boundary: Boundary,
}

/// Sampled coefficient evaluated by piecewise-linear interpolation.
fn sample<T>(values: &[T], xi: f64) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    if values.len() == 1 {
        return values[0];
    }
    let last = values.len() - 1;
    let pos = (xi.clamp(0.0, 1.0)) * last as f64;
    let k = (pos.floor() as usize).min(last - 1);
    let w = pos - k as f64;
    values[k] * (1.0 - w) + values[k + 1] * w
}

impl ParabolicSpec {
    /// Constant coefficients.
    pub fn constant(a: f64, r0: C64, r1: C64, b: C64, boundary: Boundary) -> Self {
        Self {
            a: vec![a],
            r0: vec![r0],
            r1: vec![r1],
            b: vec![b],
            boundary,
        }
    }

    /// Unit-diffusion heat equation with the given reaction and input gain.
    pub fn heat(r0: f64, b: f64, boundary: Boundary) -> Self {
        Self::constant(1.0, c(r0, 0.0), c(0.0, 0.0), c(b, 0.0), boundary)
    }

    pub fn validate(&self) -> Result<()> {
        let lens = [self.a.len(), self.r0.len(), self.r1.len(), self.b.len()];
        if lens.contains(&0) {
            return Err(Error::Coefficient("empty coefficient array".into()));
        }
        let grid = lens.iter().copied().filter(|&l| l > 1).max().unwrap_or(1);
        if lens.iter().any(|&l| l != 1 && l != grid) {
            return Err(Error::Coefficient(format!(
                "coefficient arrays must share one grid size, got {lens:?}"
            )));
        }
        let complex_ok = |v: &[C64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !self.a.iter().all(|x| x.is_finite())
            || !complex_ok(&self.r0)
            || !complex_ok(&self.r1)
            || !complex_ok(&self.b)
        {
            return Err(Error::NonFinite("parabolic coefficients"));
        }
        let a_min = self.a.iter().copied().fold(f64::INFINITY, f64::min);
        if a_min <= 0.0 {
            return Err(Error::Coefficient(format!(
                "diffusion must be uniformly positive, min a = {a_min}"
            )));
        }
        let boundary_ok = match self.boundary {
            Boundary::Dirichlet => true,
            Boundary::Neumann { kappa_left, kappa_right } => complex_ok(&[kappa_left, kappa_right]),
            Boundary::NeumannInput { kappa_left, kappa_right, m_left, m_right } => {
                complex_ok(&[kappa_left, kappa_right, m_left, m_right])
            }
        };
        if !boundary_ok {
            return Err(Error::NonFinite("boundary coefficients"));
        }
        Ok(())
    }

    fn robin(&self) -> Option<(C64, C64)> {
        match self.boundary {
            Boundary::Dirichlet => None,
            Boundary::Neumann { kappa_left, kappa_right }
            | Boundary::NeumannInput { kappa_left, kappa_right, .. } => Some((kappa_left, kappa_right)),
        }
    }

    /// Number of unknowns for a grid of `n_cells` cells.
    pub fn state_dim(&self, n_cells: usize) -> usize {
        match self.boundary {
            Boundary::Dirichlet => n_cells - 1,
            _ => n_cells + 1,
        }
    }

    /// Node coordinates carrying unknowns.
    pub fn grid(&self, n_cells: usize) -> Vec<f64> {
        let h = 1.0 / n_cells as f64;
        match self.boundary {
            Boundary::Dirichlet => (1..n_cells).map(|i| i as f64 * h).collect(),
            _ => (0..=n_cells).map(|i| i as f64 * h).collect(),
        }
    }
}

/// A spatial discretization together with its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedSystem {
    /// Full-state output (`C = I`, `D = 0`).
    pub sys: LtiSystem,
    pub grid: Vec<f64>,
    pub h: f64,
}

struct Nodes {
    h: f64,
    a: Vec<f64>,
    r0: Vec<C64>,
    r1: Vec<C64>,
    b: Vec<C64>,
}

impl Nodes {
    fn new(spec: &ParabolicSpec, n_cells: usize) -> Self {
        let h = 1.0 / n_cells as f64;
        let at = |i: usize| i as f64 * h;
        Self {
            h,
            a: (0..=n_cells).map(|i| sample(&spec.a, at(i))).collect(),
            r0: (0..=n_cells).map(|i| sample(&spec.r0, at(i))).collect(),
            r1: (0..=n_cells).map(|i| sample(&spec.r1, at(i))).collect(),
            b: (0..=n_cells).map(|i| sample(&spec.b, at(i))).collect(),
        }
    }

    fn face(&self, i: usize) -> f64 {
        0.5 * (self.a[i] + self.a[i + 1])
    }
}

fn check_cells(n_cells: usize) -> Result<()> {
    if n_cells < MIN_CELLS {
        Err(Error::Grid(format!("need at least {MIN_CELLS} cells, got {n_cells}")))
    } else {
        Ok(())
    }
}

/// Generator matrix for the homogeneous boundary conditions of `spec`.
fn generator(spec: &ParabolicSpec, nodes: &Nodes, n_cells: usize) -> CMatrix {
    let h = nodes.h;
    let h2 = h * h;
    let n = n_cells;
    let interior = |i: usize| -> [C64; 3] {
        let (wl, wr) = (nodes.face(i - 1), nodes.face(i));
        let adv = nodes.r1[i] / (2.0 * h);
        [
            c(wl / h2, 0.0) - adv,
            c(-(wl + wr) / h2, 0.0) + nodes.r0[i],
            c(wr / h2, 0.0) + adv,
        ]
    };
    match spec.robin() {
        None => {
            let dim = n - 1;
            let mut a = CMatrix::zeros(dim, dim);
            for i in 1..n {
                let row = i - 1;
                let [lo, mid, hi] = interior(i);
                if i > 1 {
                    a[(row, row - 1)] = lo;
                }
                a[(row, row)] = mid;
                if i < n - 1 {
                    a[(row, row + 1)] = hi;
                }
            }
            a
        }
        Some((kl, kr)) => {
            let dim = n + 1;
            let mut a = CMatrix::zeros(dim, dim);
            for i in 1..n {
                let [lo, mid, hi] = interior(i);
                a[(i, i - 1)] = lo;
                a[(i, i)] = mid;
                a[(i, i + 1)] = hi;
            }
            // x'(0) = -kl x0 / a0 and x'(1) = kr xN / aN from the boundary fluxes
            let w0 = nodes.face(0);
            a[(0, 0)] = c(-2.0 * w0 / h2, 0.0) + kl * (2.0 / h) + nodes.r0[0]
                - nodes.r1[0] * kl / nodes.a[0];
            a[(0, 1)] = c(2.0 * w0 / h2, 0.0);
            let wn = nodes.face(n - 1);
            a[(n, n)] = c(-2.0 * wn / h2, 0.0) + kr * (2.0 / h) + nodes.r0[n]
                + nodes.r1[n] * kr / nodes.a[n];
            a[(n, n - 1)] = c(2.0 * wn / h2, 0.0);
            a
        }
    }
}

/// Boundary-row weights mapping flux data at each end into the node equations.
fn boundary_weights(nodes: &Nodes, n_cells: usize) -> (C64, C64) {
    let h = nodes.h;
    let n = n_cells;
    (
        c(2.0 / h, 0.0) - nodes.r1[0] / nodes.a[0],
        c(2.0 / h, 0.0) + nodes.r1[n] / nodes.a[n],
    )
}

/// Finite-difference semi-discretization with `n_cells` uniform cells.
pub fn discretize(spec: &ParabolicSpec, n_cells: usize) -> Result<DiscretizedSystem> {
    check_cells(n_cells)?;
    spec.validate()?;
    let nodes = Nodes::new(spec, n_cells);
    let a = generator(spec, &nodes, n_cells);
    let dim = a.nrows();
    let offset = match spec.boundary {
        Boundary::Dirichlet => 1,
        _ => 0,
    };
    let mut b = CMatrix::from_diagonal(&CVector::from_fn(dim, |k, _| nodes.b[k + offset]));
    if let Boundary::NeumannInput { m_left, m_right, .. } = spec.boundary {
        let (wl, wr) = boundary_weights(&nodes, n_cells);
        b[(0, 0)] += wl * m_left;
        b[(n_cells, n_cells)] += wr * m_right;
    }
    let sys = LtiSystem::strictly_proper(a, b, CMatrix::identity(dim, dim))?;
    Ok(DiscretizedSystem {
        sys,
        grid: spec.grid(n_cells),
        h: nodes.h,
    })
}

fn combine(x: &[C64], y: &[C64], lambda: C64) -> Vec<C64> {
    let len = x.len().max(y.len());
    let at = |v: &[C64], k: usize| if v.len() == 1 { v[0] } else { v[k] };
    (0..len).map(|k| at(x, k) + lambda * at(y, k)).collect()
}

/// Static feedback `u = lambda x` absorbed into the coefficients:
/// `kappa <- kappa + lambda m` at each end and `r0 <- r0 + lambda b`.
pub fn closed_loop_boundary(spec: &ParabolicSpec, lambda: C64) -> Result<ParabolicSpec> {
    let Boundary::NeumannInput { kappa_left, kappa_right, m_left, m_right } = spec.boundary else {
        return Err(Error::Kind("closed_loop_boundary needs a boundary-input spec".into()));
    };
    Ok(ParabolicSpec {
        a: spec.a.clone(),
        r0: combine(&spec.r0, &spec.b, lambda),
        r1: spec.r1.clone(),
        b: spec.b.clone(),
        boundary: Boundary::Neumann {
            kappa_left: kappa_left + lambda * m_left,
            kappa_right: kappa_right + lambda * m_right,
        },
    })
}

/// Relative residual allowed for the lift's linear system.
pub const LIFT_RTOL: f64 = 1e-10;
const SHIFT_RCOND: f64 = 1e-12;

/// Discrete boundary lift `J_h` (state-dim x 2): column 0 answers boundary
/// data `h = (1, 0)`, column 1 `h = (0, 1)`. Each column solves
/// `(A_h - mu) J = 0` in the interior with the flux condition
/// `n . a grad(J h) = kappa J h - h` closing the boundary rows.
pub fn boundary_lift(spec: &ParabolicSpec, n_cells: usize, mu: f64) -> Result<CMatrix> {
    check_cells(n_cells)?;
    spec.validate()?;
    if spec.robin().is_none() {
        return Err(Error::Kind("boundary lift needs a Neumann-type spec".into()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Coefficient(format!("shift must be finite and >= 0, got {mu}")));
    }
    let nodes = Nodes::new(spec, n_cells);
    let a = generator(spec, &nodes, n_cells);
    let dim = a.nrows();
    let shifted = &a - CMatrix::identity(dim, dim) * c(mu, 0.0);
    let sv = shifted.clone().singular_values();
    if sv.min() <= SHIFT_RCOND * sv.max() {
        return Err(Error::SingularShift { mu });
    }
    let (wl, wr) = boundary_weights(&nodes, n_cells);
    let mut rhs = CMatrix::zeros(dim, 2);
    rhs[(0, 0)] = wl;
    rhs[(n_cells, 1)] = wr;
    let j = shifted
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularShift { mu })?;
    let residual = (&shifted * &j - &rhs).norm();
    if residual > LIFT_RTOL * rhs.norm() * (1.0 + shifted.norm() * j.norm() / rhs.norm()) {
        return Err(Error::Numeric(format!("lift residual {residual:e} too large")));
    }
    Ok(j)
}

/// Shift search for the lift: `mu = 1 + max(0, max Re Spec(A_h))`, doubled
/// up to three times while `A_h - mu` is numerically singular.
pub fn auto_boundary_lift(spec: &ParabolicSpec, n_cells: usize) -> Result<(CMatrix, f64)> {
    check_cells(n_cells)?;
    spec.validate()?;
    let nodes = Nodes::new(spec, n_cells);
    let growth = max_real_part(&generator(spec, &nodes, n_cells))?;
    let mut mu = 1.0 + growth.max(0.0);
    let mut last = Error::SingularShift { mu };
    for _ in 0..4 {
        match boundary_lift(spec, n_cells, mu) {
            Ok(j) => return Ok((j, mu)),
            Err(e @ Error::SingularShift { .. }) => last = e,
            Err(e) => return Err(e),
        }
        mu *= 2.0;
    }
    Err(last)
}

/// Boundary values `M u = (m_left u(0), m_right u(1))` of a grid input.
pub fn boundary_input(spec: &ParabolicSpec, u: &CVector) -> Result<CVector> {
    let Boundary::NeumannInput { m_left, m_right, .. } = spec.boundary else {
        return Err(Error::Kind("boundary input needs a boundary-input spec".into()));
    };
    let n = u.len();
    if n < 2 {
        return Err(Error::Dimension("input must be sampled on the grid".into()));
    }
    Ok(CVector::from_row_slice(&[m_left * u[0], m_right * u[n - 1]]))
}

/// In-domain input equivalent to the boundary input:
/// `F u = B u + J M u' - mu J M u`. With `z = x + J M u`, the boundary-input
/// system `x' = A x + B_h u` becomes `z' = A z + F u` under homogeneous
/// Robin conditions.
pub fn transformed_input(
    spec: &ParabolicSpec,
    lift: &CMatrix,
    mu: f64,
    u: &CVector,
    du: &CVector,
) -> Result<CVector> {
    let n = u.len();
    if lift.nrows() != n || du.len() != n {
        return Err(Error::Dimension("lift, u and du must share the grid".into()));
    }
    let n_cells = n - 1;
    let nodes = Nodes::new(spec, n_cells);
    let bu = CVector::from_fn(n, |k, _| nodes.b[k] * u[k]);
    let jmu = lift * boundary_input(spec, u)?;
    let jmdu = lift * boundary_input(spec, du)?;
    Ok(bu + jmdu - jmu * c(mu, 0.0))
}

/// Trapezoid quadrature weights on the unknowns of a Neumann-type grid.
pub fn trapezoid_weights(n_cells: usize) -> DMatrix<f64> {
    let h = 1.0 / n_cells as f64;
    DMatrix::from_fn(1, n_cells + 1, |_, i| if i == 0 || i == n_cells { 0.5 * h } else { h })
}
