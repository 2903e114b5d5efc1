//! Finite-dimensional subsystems and the per-eigenvalue network criteria.
//!
//! A network `Close(P^n, L)` of identical subsystems is stable iff every
//! single-node loop `u = lambda * y` with `lambda` in `Spec(L)` is stable,
//! and it synchronizes iff the same holds with one instance of the
//! eigenvalue belonging to `1_n` removed. For a finite-dimensional system
//! only the observable part of `(A + lambda B C, C)` matters.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::linalg::{
    c, complexify, ensure_finite, ensure_square, max_real_part, ones, spectrum, CMatrix, Spectrum,
    C64,
};

/// Relative singular-value cutoff for the observability rank.
pub const OBSERVABILITY_RTOL: f64 = 1e-10;

/// Relative residual allowed when checking that `1_n` is an eigenvector.
pub const CONSENSUS_RTOL: f64 = 1e-10;

/// State-space quadruple `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: CMatrix,
    b: CMatrix,
    c: CMatrix,
    d: CMatrix,
}

impl LtiSystem {
    pub fn new(a: CMatrix, b: CMatrix, c: CMatrix, d: CMatrix) -> Result<Self> {
        ensure_square(&a, "A")?;
        let m = a.nrows();
        if b.nrows() != m {
            return Err(Error::Dimension(format!("B has {} rows, expected {m}", b.nrows())));
        }
        if c.ncols() != m {
            return Err(Error::Dimension(format!("C has {} columns, expected {m}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        ensure_finite(&c, "C")?;
        ensure_finite(&d, "D")?;
        Ok(Self { a, b, c, d })
    }

    /// System with `D = 0`.
    pub fn strictly_proper(a: CMatrix, b: CMatrix, c: CMatrix) -> Result<Self> {
        let d = CMatrix::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }
    pub fn b(&self) -> &CMatrix {
        &self.b
    }
    pub fn c(&self) -> &CMatrix {
        &self.c
    }
    pub fn d(&self) -> &CMatrix {
        &self.d
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn has_feedthrough(&self) -> bool {
        self.d.iter().any(|z| *z != c(0.0, 0.0))
    }

    /// The system whose output is the full state: `C -> I`, `B -> B C`.
    /// Its criteria decide state (rather than output) synchronization.
    pub fn state_variant(&self) -> Result<Self> {
        if self.has_feedthrough() {
            return Err(Error::Dimension(
                "state variant requires D = 0".into(),
            ));
        }
        let m = self.states();
        Self::strictly_proper(self.a.clone(), &self.b * &self.c, CMatrix::identity(m, m))
    }
}

/// Where a coupling matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSource {
    Raw,
    /// Diffusive weights `sigma[j][i] >= 0`: `u_j = sum_i sigma_ji (y_i - y_j)`.
    Diffusive(DMatrix<f64>),
}

/// Coupling `u_j = sum_i L[j][i] y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    l: CMatrix,
    source: CouplingSource,
}

impl CouplingMatrix {
    pub fn raw(l: CMatrix) -> Result<Self> {
        ensure_square(&l, "coupling matrix")?;
        ensure_finite(&l, "coupling matrix")?;
        Ok(Self {
            l,
            source: CouplingSource::Raw,
        })
    }

    /// Negated weighted graph Laplacian; the diagonal of `weights` is ignored.
    pub fn diffusive(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("coupling weights"));
        }
        if weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Coefficient("diffusive weights must be non-negative".into()));
        }
        let n = weights.nrows();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut row = 0.0;
            for i in 0..n {
                if i != j {
                    l[(j, i)] = weights[(j, i)];
                    row += weights[(j, i)];
                }
            }
            l[(j, j)] = -row;
        }
        Ok(Self {
            l: complexify(&l),
            source: CouplingSource::Diffusive(weights),
        })
    }

    /// Complete graph on `n` nodes with uniform weight.
    pub fn complete(n: usize, weight: f64) -> Result<Self> {
        Self::diffusive(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { weight }))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.l
    }

    pub fn source(&self) -> &CouplingSource {
        &self.source
    }

    pub fn nodes(&self) -> usize {
        self.l.nrows()
    }

    /// Simultaneous row/column permutation `Π L Πᵀ` where node `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.nodes();
        if perm.len() != n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut l = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                l[(perm[i], perm[j])] = self.l[(i, j)];
            }
        }
        let source = match &self.source {
            CouplingSource::Raw => CouplingSource::Raw,
            CouplingSource::Diffusive(w) => {
                let mut pw = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        pw[(perm[i], perm[j])] = w[(i, j)];
                    }
                }
                CouplingSource::Diffusive(pw)
            }
        };
        Ok(Self { l, source })
    }

    /// Eigenvalue of `1_n`, if `1_n` is an eigenvector.
    pub fn consensus_eigenvalue(&self) -> Result<C64> {
        let n = self.nodes();
        if n == 0 {
            return Err(Error::Dimension("empty coupling matrix".into()));
        }
        let l1 = &self.l * ones(n);
        let lambda1 = l1[0];
        let residual = (l1 - ones(n) * lambda1).norm();
        if residual <= CONSENSUS_RTOL * self.l.norm() {
            Ok(lambda1)
        } else {
            Err(Error::NotConsensusEigenvector { residual })
        }
    }
}

/// Feedback `u = lambda y + v` closed around `sys`.
///
/// With `E = (I - lambda D)^{-1}` the loop is
/// `(A + lambda B E C, B (I + lambda E D), E C, E D)`; for `D = 0` this is
/// `(A + lambda B C, B, C, 0)`.
pub fn closed_loop(sys: &LtiSystem, lambda: C64) -> Result<LtiSystem> {
    let (p, q) = (sys.inputs(), sys.outputs());
    if p != q {
        return Err(Error::Dimension(format!(
            "output feedback needs as many inputs as outputs ({p} vs {q})"
        )));
    }
    if !sys.has_feedthrough() {
        let a = &sys.a + (&sys.b * &sys.c) * lambda;
        return LtiSystem::new(a, sys.b.clone(), sys.c.clone(), sys.d.clone());
    }
    let loop_matrix = CMatrix::identity(q, q) - &sys.d * lambda;
    let scale = 1.0 + lambda.norm() * sys.d.norm();
    let e = invert_well_conditioned(&loop_matrix, scale)
        .ok_or(Error::AlgebraicLoop { re: lambda.re, im: lambda.im })?;
    let ec = &e * &sys.c;
    let ed = &e * &sys.d;
    let a = &sys.a + (&sys.b * &ec) * lambda;
    let b = &sys.b * (CMatrix::identity(p, p) + &ed * lambda);
    LtiSystem::new(a, b, ec, ed)
}

/// Inverse of `m`, refused when its smallest singular value is negligible
/// against `scale`, the magnitude of the terms that formed it.
pub(crate) fn invert_well_conditioned(m: &CMatrix, scale: f64) -> Option<CMatrix> {
    let sv = m.clone().singular_values();
    let max = sv.max().max(scale);
    let min = sv.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return None;
    }
    m.clone().try_inverse()
}

/// Orthonormal bases `(observable complement, unobservable subspace)` of the
/// pair `(a, c)`, split by the singular values of the observability matrix.
pub fn observability_split(a: &CMatrix, cm: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    ensure_square(a, "A")?;
    let m = a.nrows();
    if cm.ncols() != m {
        return Err(Error::Dimension(format!(
            "C has {} columns, expected {m}",
            cm.ncols()
        )));
    }
    if m == 0 {
        return Ok((CMatrix::zeros(0, 0), CMatrix::zeros(0, 0)));
    }
    let q = cm.nrows();
    if q == 0 {
        return Ok((CMatrix::zeros(m, 0), CMatrix::identity(m, m)));
    }
    if q >= m {
        let sv = cm.clone().singular_values();
        if sv.min() > OBSERVABILITY_RTOL * sv.max() {
            return Ok((CMatrix::identity(m, m), CMatrix::zeros(m, 0)));
        }
    }
    // Powers of a/s share the kernel of the unscaled observability matrix
    // and keep the blocks from overflowing.
    let s = a.norm().max(1.0);
    let a_scaled = a / c(s, 0.0);
    let mut obs = CMatrix::zeros(q * m, m);
    let mut block = cm.clone();
    for k in 0..m {
        obs.view_mut((k * q, 0), (q, m)).copy_from(&block);
        block = &block * &a_scaled;
    }
    let svd = SVD::new(obs, false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not return right singular vectors".into()))?;
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let cutoff = OBSERVABILITY_RTOL * smax;
    let v = v_t.adjoint();
    let (observable, unobservable): (Vec<usize>, Vec<usize>) =
        (0..m).partition(|&i| smax > 0.0 && sigma[i] > cutoff);
    Ok((v.select_columns(&observable), v.select_columns(&unobservable)))
}

/// Orthonormal basis (columns) of the largest `a`-invariant subspace of `Ker c`.
pub fn unobservable_subspace(a: &CMatrix, cm: &CMatrix) -> Result<CMatrix> {
    Ok(observability_split(a, cm)?.1)
}

/// Matrix of `a` on the quotient by the unobservable subspace, in an
/// orthonormal complement basis `W`: `(W* a W, c W)`.
pub fn observable_part(a: &CMatrix, cm: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let (w, _) = observability_split(a, cm)?;
    let a_obs = w.adjoint() * a * &w;
    let c_obs = cm * &w;
    Ok((a_obs, c_obs))
}

/// Largest real part over the observable spectrum; `-inf` when nothing is observable.
pub fn observable_growth(sys: &LtiSystem) -> Result<f64> {
    let (a_obs, _) = observable_part(sys.a(), sys.c())?;
    max_real_part(&a_obs)
}

/// `pi Q^{-1}` for `Q = [1_n | e_2 | ... | e_n]`: row `k` maps `y` to `y_{k+1} - y_1`.
pub fn sync_projection(n: usize) -> Result<CMatrix> {
    if n < 2 {
        return Err(Error::Dimension(format!("sync projection needs n >= 2, got {n}")));
    }
    let mut p = CMatrix::zeros(n - 1, n);
    for k in 0..n - 1 {
        p[(k, 0)] = c(-1.0, 0.0);
        p[(k, k + 1)] = c(1.0, 0.0);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncVerdict {
    Synchronizes,
    DoesNotSynchronize,
    Marginal,
}

impl SyncVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Synchronizes => "synchronizes",
            Self::DoesNotSynchronize => "does_not_synchronize",
            Self::Marginal => "marginal",
        }
    }
    pub fn code(self) -> u8 {
        match self {
            Self::Synchronizes => 0,
            Self::DoesNotSynchronize => 1,
            Self::Marginal => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Marginal,
}

impl StabilityVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Unstable => "unstable",
            Self::Marginal => "marginal",
        }
    }
    pub fn code(self) -> u8 {
        match self {
            Self::Stable => 0,
            Self::Unstable => 1,
            Self::Marginal => 2,
        }
    }
}

/// Evidence for one tested coupling eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCheck {
    pub lambda: C64,
    pub multiplicity: usize,
    /// Exponential growth rate of `Close(P, lambda)`: the largest observable
    /// real part for state-space models, `ln(rho)/t_m` for delay models.
    pub max_real_part: f64,
    /// Spectral radius of the one-period map, for delay models only.
    pub spectral_radius: Option<f64>,
    pub stable: bool,
}

/// Growth measurement of a single closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopGrowth {
    pub rate: f64,
    pub spectral_radius: Option<f64>,
}

impl From<f64> for LoopGrowth {
    fn from(rate: f64) -> Self {
        Self {
            rate,
            spectral_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport {
    pub verdict: SyncVerdict,
    pub lambda1: C64,
    pub per_lambda: Vec<LambdaCheck>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub verdict: StabilityVerdict,
    pub per_lambda: Vec<LambdaCheck>,
    pub margin: f64,
}

impl SyncReport {
    /// Largest growth rate over the tested eigenvalues.
    pub fn worst_rate(&self) -> f64 {
        worst_rate(&self.per_lambda)
    }
}

impl StabilityReport {
    pub fn worst_rate(&self) -> f64 {
        worst_rate(&self.per_lambda)
    }
}

fn worst_rate(checks: &[LambdaCheck]) -> f64 {
    checks
        .iter()
        .map(|l| l.max_real_part)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_margin(margin: f64) -> Result<()> {
    if margin > 0.0 && margin.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("margin must be positive, got {margin}")))
    }
}

fn evaluate<F>(tested: &Spectrum, margin: f64, mut growth: F) -> Result<Vec<LambdaCheck>>
where
    F: FnMut(C64) -> Result<LoopGrowth>,
{
    tested
        .eigenvalues
        .iter()
        .map(|e| {
            let g = growth(e.value)?;
            Ok(LambdaCheck {
                lambda: e.value,
                multiplicity: e.multiplicity,
                max_real_part: g.rate,
                spectral_radius: g.spectral_radius,
                stable: g.rate < -margin,
            })
        })
        .collect()
}

/// (all stable, any marginal)
fn classify(checks: &[LambdaCheck], margin: f64) -> (bool, bool) {
    let marginal = checks.iter().any(|l| l.max_real_part.abs() <= margin);
    let stable = checks.iter().all(|l| l.max_real_part < -margin);
    (stable, marginal)
}

/// Stability criterion over all of `Spec(L)` for any subsystem class, given
/// the growth rate of its single-node loop.
pub fn stability_report_with<F>(l: &CouplingMatrix, margin: f64, growth: F) -> Result<StabilityReport>
where
    F: FnMut(C64) -> Result<LoopGrowth>,
{
    check_margin(margin)?;
    let tested = spectrum(l.matrix())?;
    let per_lambda = evaluate(&tested, margin, growth)?;
    let verdict = match classify(&per_lambda, margin) {
        (_, true) => StabilityVerdict::Marginal,
        (true, false) => StabilityVerdict::Stable,
        (false, false) => StabilityVerdict::Unstable,
    };
    Ok(StabilityReport {
        verdict,
        per_lambda,
        margin,
    })
}

/// Synchronization criterion: `Spec(L)` minus one instance of the eigenvalue of `1_n`.
pub fn sync_report_with<F>(l: &CouplingMatrix, margin: f64, growth: F) -> Result<SyncReport>
where
    F: FnMut(C64) -> Result<LoopGrowth>,
{
    check_margin(margin)?;
    let lambda1 = l.consensus_eigenvalue()?;
    let mut tested = spectrum(l.matrix())?;
    tested.remove_one_near(lambda1);
    let per_lambda = evaluate(&tested, margin, growth)?;
    let verdict = match classify(&per_lambda, margin) {
        (_, true) => SyncVerdict::Marginal,
        (true, false) => SyncVerdict::Synchronizes,
        (false, false) => SyncVerdict::DoesNotSynchronize,
    };
    Ok(SyncReport {
        verdict,
        lambda1,
        per_lambda,
        margin,
    })
}

pub fn check_network_stability(
    sys: &LtiSystem,
    l: &CouplingMatrix,
    margin: f64,
) -> Result<StabilityReport> {
    stability_report_with(l, margin, |lambda| {
        observable_growth(&closed_loop(sys, lambda)?).map(LoopGrowth::from)
    })
}

pub fn check_synchronization(sys: &LtiSystem, l: &CouplingMatrix, margin: f64) -> Result<SyncReport> {
    sync_report_with(l, margin, |lambda| {
        observable_growth(&closed_loop(sys, lambda)?).map(LoopGrowth::from)
    })
}
