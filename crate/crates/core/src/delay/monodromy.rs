//! Discrete one-period map `x_d[k+1] = P x_d[k] + Q u_d[k] + R u_d[k+1]`.
//!
//! Segments are represented by their values at the `n + 1` grid nodes of
//! `[0, t_m]`, interpolated linearly in between; blocks are ordered node
//! by node.

use rayon::prelude::*;

use crate::delay::history::{integrate, zero_input, History};
use crate::delay::kernels::{build_kernels, build_state_kernels, KernelSet, Vertex, VertexField};
use crate::delay::{DelayGrid, DelaySpec};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector};

#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyOperator {
    pub p_mat: CMatrix,
    pub q_mat: CMatrix,
    pub r_mat: CMatrix,
}

/// Kernel-built `P`, `Q` and `R`.
pub fn monodromy(spec: &DelaySpec, n: usize) -> Result<MonodromyOperator> {
    MonodromyOperator::from_kernels(&build_kernels(spec, n)?)
}

/// Kernel-built `P` alone.
pub fn state_monodromy(spec: &DelaySpec, n: usize) -> Result<CMatrix> {
    Ok(state_matrix(&build_state_kernels(spec, n)?))
}

impl MonodromyOperator {
    pub fn from_kernels(ks: &KernelSet) -> Result<Self> {
        let g = ks
            .g()
            .ok_or_else(|| Error::Dimension("kernel set has no input kernel g".into()))?;
        let n = ks.cells();
        let inputs = g.shape().1;
        let mut q_mat = CMatrix::zeros((n + 1) * ks.dim(), (n + 1) * inputs);
        let mut r_mat = q_mat.clone();
        for i in 0..=n {
            for l in 0..n {
                add_panel(&mut q_mat, ks.step(), g, i, l, l);
                if l < i {
                    add_panel(&mut r_mat, ks.step(), g, i, n + l, l);
                }
            }
        }
        Ok(Self {
            p_mat: state_matrix(ks),
            q_mat,
            r_mat,
        })
    }
}

/// Adds the trapezoid weights of the `s`-panel `cs` of row `i` to the
/// block columns `col` and `col + 1`. Rows inside the grid read the left
/// edge of their cell, the last row reads the right edge of the last cell.
fn add_panel(out: &mut CMatrix, step: f64, field: &VertexField, i: usize, cs: usize, col: usize) {
    let (rows, cols) = field.shape();
    let last = field.cells_t();
    let (ct, lo, hi) = if i < last {
        (i, Vertex::BBottomLeft, Vertex::BTopLeft)
    } else {
        (last - 1, Vertex::ABottomRight, Vertex::ATopRight)
    };
    let w = c(0.5 * step, 0.0);
    let mut lower = out.view_mut((i * rows, col * cols), (rows, cols));
    lower += field.get(ct, cs, lo) * w;
    let mut upper = out.view_mut((i * rows, (col + 1) * cols), (rows, cols));
    upper += field.get(ct, cs, hi) * w;
}

fn state_matrix(ks: &KernelSet) -> CMatrix {
    let n = ks.cells();
    let d = ks.dim();
    let mut p_mat = CMatrix::zeros((n + 1) * d, (n + 1) * d);
    for i in 0..=n {
        let mut block = p_mat.view_mut((i * d, n * d), (d, d));
        block += &ks.p()[i];
        for l in 0..n {
            add_panel(&mut p_mat, ks.step(), ks.f(), i, l, l);
        }
    }
    p_mat
}

fn stack(nodes: &[CVector]) -> CVector {
    let d = nodes.first().map_or(0, |x| x.len());
    CVector::from_fn(nodes.len() * d, |k, _| nodes[k / d][k % d])
}

fn unstack(v: &CVector, d: usize) -> Vec<CVector> {
    v.as_slice()
        .chunks(d)
        .map(CVector::from_column_slice)
        .collect()
}

/// Integrates one period from the piecewise-linear history through `nodes`
/// (input zero) with `substeps` RK4 steps per grid cell and returns the
/// node values of the next segment.
pub fn step_period(spec: &DelaySpec, n: usize, substeps: usize, nodes: &[CVector]) -> Result<Vec<CVector>> {
    if substeps == 0 {
        return Err(Error::Grid("substeps must be positive".into()));
    }
    if nodes.len() != n + 1 || nodes.iter().any(|x| x.len() != spec.dim()) {
        return Err(Error::Dimension(format!(
            "expected {} node values of dimension {}",
            n + 1,
            spec.dim()
        )));
    }
    let grid = DelayGrid::with_cells(spec, n)?;
    let h = grid.step;
    let initial = |s: f64| {
        let pos = (s / h).clamp(0.0, n as f64);
        let k = (pos.floor() as usize).min(n - 1);
        let w = pos - k as f64;
        &nodes[k] * c(1.0 - w, 0.0) + &nodes[k + 1] * c(w, 0.0)
    };
    let mut history = History::with_initial(initial, spec.max_delay(), h / substeps as f64)?;
    integrate(spec, &mut history, &zero_input(spec.inputs()), n * substeps)?;
    Ok(history.samples().iter().step_by(substeps).cloned().collect())
}

/// `P` assembled column by column from [`step_period`] on the hat basis.
pub fn monodromy_by_stepping(spec: &DelaySpec, n: usize, substeps: usize) -> Result<CMatrix> {
    let d = spec.dim();
    let size = (n + 1) * d;
    let columns = (0..size)
        .into_par_iter()
        .map(|col| {
            let nodes: Vec<CVector> = (0..=n)
                .map(|l| CVector::from_fn(d, |k, _| c(if l * d + k == col { 1.0 } else { 0.0 }, 0.0)))
                .collect();
            step_period(spec, n, substeps, &nodes).map(|out| stack(&out))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CMatrix::from_columns(&columns))
}

/// Applies a node-stacked operator to a segment given by node values.
pub fn apply(op: &CMatrix, nodes: &[CVector]) -> Vec<CVector> {
    let d = nodes.first().map_or(0, |x| x.len());
    unstack(&(op * stack(nodes)), d)
}
