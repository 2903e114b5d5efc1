//! Dense complex linear algebra shared by the analysis modules.
//!
//! Eigenvalues come from nalgebra's complex Schur decomposition; Jordan
//! structure is never computed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative tolerance used to merge numerically coincident eigenvalues.
pub const MULTIPLICITY_RTOL: f64 = 1e-8;

/// Above this dimension the spectral radius falls back to power iteration.
pub const DENSE_EIG_LIMIT: usize = 2000;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn ensure_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Lifts a real matrix to a complex one.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| c(x, 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn ones(n: usize) -> CVector {
    CVector::from_element(n, c(1.0, 0.0))
}

/// `e^{m}` by Padé scaling-and-squaring.
pub fn expm(m: &CMatrix) -> CMatrix {
    m.exp()
}

/// Raw eigenvalues (with repetition) in the order produced by the Schur form.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    ensure_square(m, "matrix")?;
    ensure_finite(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn max_real_part(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Spectral radius; dense eigensolve up to [`DENSE_EIG_LIMIT`], power iteration beyond.
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    ensure_square(m, "matrix")?;
    if m.nrows() <= DENSE_EIG_LIMIT {
        Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
    } else {
        power_radius(m, 1e-10, 20_000)
    }
}

/// Power iteration on two-step norm ratios, which also converges when the
/// dominant eigenvalues form a conjugate pair.
pub fn power_radius(m: &CMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    // deterministic, generic start vector
    let mut x = CVector::from_fn(n, |i, _| c(1.0 + (i as f64 * 0.618_033_988_7).fract(), 0.0));
    x /= c(x.norm(), 0.0);
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        let y = m * &x;
        let z = m * &y;
        let zn = z.norm();
        if zn == 0.0 {
            return Ok(0.0);
        }
        let est = zn.sqrt();
        if (est - prev).abs() <= tol * est {
            return Ok(est);
        }
        prev = est;
        x = z / c(zn, 0.0);
    }
    Err(Error::Numeric("power iteration did not converge".into()))
}

/// One eigenvalue cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub value: C64,
    pub multiplicity: usize,
}

/// Eigenvalues grouped by multiplicity, sorted by real part descending then
/// imaginary part ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
}

impl Spectrum {
    /// Total algebraic multiplicity.
    pub fn dim(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// All eigenvalues with repetition.
    pub fn expanded(&self) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity))
            .collect()
    }

    /// Removes a single instance of the cluster nearest to `target`,
    /// returning the value that was removed.
    pub fn remove_one_near(&mut self, target: C64) -> Option<C64> {
        let idx = self
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (a.value - target).norm().total_cmp(&(b.value - target).norm()))
            .map(|(i, _)| i)?;
        let removed = self.eigenvalues[idx].value;
        self.eigenvalues[idx].multiplicity -= 1;
        if self.eigenvalues[idx].multiplicity == 0 {
            self.eigenvalues.remove(idx);
        }
        Some(removed)
    }
}

/// Spectrum of a square matrix with multiplicities grouped at relative
/// tolerance [`MULTIPLICITY_RTOL`] of the Frobenius norm.
pub fn spectrum(m: &CMatrix) -> Result<Spectrum> {
    let raw = eigenvalues(m)?;
    let tol = MULTIPLICITY_RTOL * m.norm();
    Ok(group_eigenvalues(&raw, tol))
}

/// Single-linkage clustering of eigenvalues closer than `tol`.
pub fn group_eigenvalues(raw: &[C64], tol: f64) -> Spectrum {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (raw[i] - raw[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = ri.min(rj);
                }
            }
        }
    }
    let mut sums: Vec<(C64, usize)> = vec![(c(0.0, 0.0), 0); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        sums[r].0 += raw[i];
        sums[r].1 += 1;
    }
    let mut eigenvalues: Vec<Eigenvalue> = sums
        .into_iter()
        .filter(|(_, k)| *k > 0)
        .map(|(s, k)| Eigenvalue {
            value: s / k as f64,
            multiplicity: k,
        })
        .collect();
    eigenvalues.sort_by(|a, b| {
        b.value
            .re
            .total_cmp(&a.value.re)
            .then(a.value.im.total_cmp(&b.value.im))
    });
    Spectrum { eigenvalues }
}
