//! Solution kernels `p`, `f`, `g` of the one-period representation
//!
//! ```text
//! x(t) = p(t) x(t_m) + ∫_0^{t_m} f(t, s) x(s) ds + ∫_0^t g(t, s) u(s) ds,   t in [t_m, 2 t_m]
//! ```
//!
//! built from the base kernels
//!
//! ```text
//! p_0(t)    = e^{A_0 (t - t_m)}
//! f_0(t, s) = sum_{j>=1} e^{A_0 (t - t_j - s)} A_j 1{t_m - t_j <= s <= t - t_j}
//! g_0(t, s) = sum_{j>=0} e^{A_0 (t - t_j - s)} B_j 1{t_m - t_j <= s <= t - t_j}
//! ```
//!
//! by substituting the representation into the `r >= t_m` part of
//! `∫ f_0(t, r) x(r) dr`. Since `f_0(t, r)` vanishes for `r > t - t_1`, a
//! row `t` only depends on rows at least one delay `t_1` earlier, which is the
//! level-by-level recursion over `T_k = [t_m, t_m + (k+1) t_1]`.
//!
//! `f` and `g` jump on the lines `s = t_m - t_j` and `s = t - t_j`. With the
//! delays on the grid these are grid lines and cell diagonals, so each grid
//! cell is split along its diagonal into two triangles on which the kernels
//! are smooth, and values are stored at the three corners of each triangle
//! as limits from inside. The trapezoid rule on these panels never
//! straddles a jump.

use std::fmt::Write as _;

use nalgebra::{DMatrixView, DMatrixViewMut};

use crate::delay::{DelayGrid, DelaySpec};
use crate::error::{Error, Result};
use crate::linalg::{c, expm, CMatrix, C64};

/// Corner of a triangle in a grid cell. Cell-local coordinates are `u`
/// along `t` and `v` along `s`; triangle `A` is `u >= v`, triangle `B` is
/// `u <= v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vertex {
    ABottomLeft,
    ABottomRight,
    ATopRight,
    BBottomLeft,
    BTopLeft,
    BTopRight,
}

impl Vertex {
    pub const ALL: [Vertex; 6] = [
        Vertex::ABottomLeft,
        Vertex::ABottomRight,
        Vertex::ATopRight,
        Vertex::BBottomLeft,
        Vertex::BTopLeft,
        Vertex::BTopRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// `(u, v)` corner position in the cell.
    pub fn corner(self) -> (usize, usize) {
        match self {
            Vertex::ABottomLeft | Vertex::BBottomLeft => (0, 0),
            Vertex::ABottomRight => (1, 0),
            Vertex::ATopRight | Vertex::BTopRight => (1, 1),
            Vertex::BTopLeft => (0, 1),
        }
    }

    /// Direction from the corner towards the triangle centroid, times 3.
    fn direction(self) -> (i64, i64) {
        match self {
            Vertex::ABottomLeft => (2, 1),
            Vertex::ABottomRight => (-1, 1),
            Vertex::ATopRight => (-1, -2),
            Vertex::BBottomLeft => (1, 2),
            Vertex::BTopLeft => (1, -1),
            Vertex::BTopRight => (-2, -1),
        }
    }
}

/// Matrix-valued kernel sampled at triangle corners of a cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexField {
    cells_t: usize,
    cells_s: usize,
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl VertexField {
    fn zeros(cells_t: usize, cells_s: usize, rows: usize, cols: usize) -> Self {
        Self {
            cells_t,
            cells_s,
            rows,
            cols,
            data: vec![c(0.0, 0.0); cells_t * cells_s * 6 * rows * cols],
        }
    }

    fn offset(&self, ct: usize, cs: usize, v: Vertex) -> usize {
        assert!(ct < self.cells_t && cs < self.cells_s, "cell ({ct}, {cs}) out of range");
        ((ct * self.cells_s + cs) * 6 + v.index()) * self.rows * self.cols
    }

    pub fn cells_t(&self) -> usize {
        self.cells_t
    }
    pub fn cells_s(&self) -> usize {
        self.cells_s
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, ct: usize, cs: usize, v: Vertex) -> DMatrixView<'_, C64> {
        let o = self.offset(ct, cs, v);
        DMatrixView::from_slice(&self.data[o..o + self.rows * self.cols], self.rows, self.cols)
    }

    fn get_mut(&mut self, ct: usize, cs: usize, v: Vertex) -> DMatrixViewMut<'_, C64> {
        let o = self.offset(ct, cs, v);
        let len = self.rows * self.cols;
        DMatrixViewMut::from_slice(&mut self.data[o..o + len], self.rows, self.cols)
    }
}

/// Kernels on `t in [t_m, 2 t_m]` over a uniform grid of `n` cells per
/// period. `p[i]` is `p(t_m + i h)`; `f` has `n x n` cells over
/// `[t_m, 2t_m] x [0, t_m]`; `g` has `n x 2n` cells over `[t_m, 2t_m] x [0, 2t_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    n: usize,
    step: f64,
    p: Vec<CMatrix>,
    f: VertexField,
    g: Option<VertexField>,
}

impl KernelSet {
    pub fn cells(&self) -> usize {
        self.n
    }
    pub fn step(&self) -> f64 {
        self.step
    }
    pub fn max_delay(&self) -> f64 {
        self.step * self.n as f64
    }
    pub fn dim(&self) -> usize {
        self.p[0].nrows()
    }
    /// `t` at grid index `i`, for `i` in `0..=n`.
    pub fn time(&self, i: usize) -> f64 {
        (self.n + i) as f64 * self.step
    }
    pub fn p(&self) -> &[CMatrix] {
        &self.p
    }
    pub fn f(&self) -> &VertexField {
        &self.f
    }
    pub fn g(&self) -> Option<&VertexField> {
        self.g.as_ref()
    }
}

/// Kernels `p`, `f` and `g`.
pub fn build_kernels(spec: &DelaySpec, n: usize) -> Result<KernelSet> {
    Recursion::new(spec, n)?.run(true)
}

/// Kernels `p` and `f` only; enough for the input-free map.
pub fn build_state_kernels(spec: &DelaySpec, n: usize) -> Result<KernelSet> {
    Recursion::new(spec, n)?.run(false)
}

/// Storage of the values a row contributes to later rows' integrals:
/// `plus[i]` holds `K(r_i+, s_l±)`, `minus[i]` holds `K(r_i-, s_l±)`, both as
/// `rows x (2 (L+1) cols)` matrices with column block `2 l + σ`.
struct Lines {
    plus: Vec<CMatrix>,
    minus: Vec<CMatrix>,
}

struct KernelPart<'a> {
    field: VertexField,
    lines: Lines,
    /// `(offset k_j, e^{A_0 o h} M_j for o = 0..=2n)` over contributing terms.
    terms: Vec<(usize, &'a [CMatrix])>,
}

struct Recursion {
    n: usize,
    step: f64,
    offsets: Vec<usize>,
    dim: usize,
    exp: Vec<CMatrix>,
    exp_a: Vec<Vec<CMatrix>>,
    exp_b: Vec<Vec<CMatrix>>,
}

impl Recursion {
    fn new(spec: &DelaySpec, n: usize) -> Result<Self> {
        let grid = DelayGrid::with_cells(spec, n)?;
        let step = grid.step;
        let a0 = &spec.a_mats()[0];
        let exp: Vec<CMatrix> = (0..=2 * n)
            .map(|o| expm(&(a0 * c(o as f64 * step, 0.0))))
            .collect();
        let times = |m: &CMatrix| exp.iter().map(|e| e * m).collect::<Vec<_>>();
        let exp_a = spec.a_mats().iter().map(times).collect();
        let exp_b = spec.b_mats().iter().map(times).collect();
        Ok(Self {
            n,
            step,
            offsets: grid.offsets,
            dim: spec.dim(),
            exp,
            exp_a,
            exp_b,
        })
    }

    fn part(&self, cells_s: usize, cols: usize, input: bool) -> KernelPart<'_> {
        let (first, mats) = if input { (0, &self.exp_b) } else { (1, &self.exp_a) };
        KernelPart {
            field: VertexField::zeros(self.n, cells_s, self.dim, cols),
            lines: Lines {
                plus: Vec::with_capacity(self.n + 1),
                minus: Vec::with_capacity(self.n + 1),
            },
            terms: (first..self.offsets.len())
                .map(|j| (self.offsets[j], mats[j].as_slice()))
                .collect(),
        }
    }

    /// `f_0(t_i, r_rho ±)` for `r_rho >= t_m`; the lower indicator bound
    /// holds automatically there.
    fn f0_at(&self, i: usize, rho: usize, plus: bool) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for j in 1..self.offsets.len() {
            let k = self.offsets[j];
            if i < k + rho {
                continue;
            }
            let gap = i - k - rho;
            if gap > 0 || !plus {
                out += &self.exp_a[j][gap];
            }
        }
        out
    }

    fn run(self, with_input: bool) -> Result<KernelSet> {
        let n = self.n;
        let k1 = self.offsets[1];
        let half = c(0.5 * self.step, 0.0);
        let mut p: Vec<CMatrix> = Vec::with_capacity(n + 1);
        let mut f = self.part(n, self.dim, false);
        let inputs = self.exp_b[0][0].ncols();
        let mut g = with_input.then(|| self.part(2 * n, inputs, true));

        for i in n..=2 * n {
            // trapezoid panels [r_q, r_{q+1}] with q + 1 <= i - k_1
            let panels: Vec<(usize, CMatrix, CMatrix)> = (n..(i + 1).saturating_sub(k1).max(n))
                .map(|q| {
                    (
                        q,
                        self.f0_at(i, q, true) * half,
                        self.f0_at(i, q + 1, false) * half,
                    )
                })
                .collect();

            let mut pi = self.exp[i - n].clone();
            for (q, fp, fm) in &panels {
                pi += fp * &p[q - n] + fm * &p[q + 1 - n];
            }
            p.push(pi);

            self.advance(&mut f, i, &panels);
            if let Some(g) = g.as_mut() {
                self.advance(g, i, &panels);
            }
        }

        for (i, m) in p.iter().enumerate() {
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Numeric(format!("kernel p is not finite at row {i}")));
            }
        }
        Ok(KernelSet {
            n,
            step: self.step,
            p,
            f: f.field,
            g: g.map(|g| g.field),
        })
    }

    /// Base kernel at grid point `(t_i, s_l)` approached along `dir`.
    fn base_at(&self, terms: &[(usize, &[CMatrix])], shape: (usize, usize), i: usize, l: usize, dir: (i64, i64)) -> CMatrix {
        let mut out = CMatrix::zeros(shape.0, shape.1);
        let (dt, ds) = dir;
        for &(k, mats) in terms {
            let lo = l as i64 - self.n as i64 + k as i64;
            let hi = i as i64 - k as i64 - l as i64;
            let lower = lo > 0 || (lo == 0 && ds > 0);
            let upper = hi > 0 || (hi == 0 && dt - ds > 0);
            if lower && upper {
                out += &mats[hi as usize];
            }
        }
        out
    }

    fn advance(&self, part: &mut KernelPart<'_>, i: usize, panels: &[(usize, CMatrix, CMatrix)]) {
        let n = self.n;
        let cells_s = part.field.cells_s();
        let (rows, cols) = part.field.shape();
        let width = 2 * (cells_s + 1) * cols;
        let one = c(1.0, 0.0);

        let mut integral = CMatrix::zeros(rows, width);
        for (q, fp, fm) in panels {
            integral.gemm(one, fp, &part.lines.plus[q - n], one);
            integral.gemm(one, fm, &part.lines.minus[q + 1 - n], one);
        }

        let left = (i < 2 * n).then_some(i - n);
        let right = (i > n).then(|| i - n - 1);
        let mut plus = CMatrix::zeros(rows, width);
        let mut minus = CMatrix::zeros(rows, width);
        for l in 0..=cells_s {
            let block = |sigma: usize| integral.columns((2 * l + sigma) * cols, cols).into_owned();
            let value = |v: Vertex| {
                let sigma = if v.direction().1 > 0 { 0 } else { 1 };
                self.base_at(&part.terms, (rows, cols), i, l, v.direction()) + block(sigma)
            };
            let store = |field: &mut VertexField, ct: usize, cs: usize, v: Vertex, m: &CMatrix| {
                field.get_mut(ct, cs, v).copy_from(m);
            };
            if let Some(ct) = left {
                if l < cells_s {
                    let a = value(Vertex::ABottomLeft);
                    plus.columns_mut(2 * l * cols, cols).copy_from(&a);
                    store(&mut part.field, ct, l, Vertex::ABottomLeft, &a);
                    let b = value(Vertex::BBottomLeft);
                    store(&mut part.field, ct, l, Vertex::BBottomLeft, &b);
                }
                if l > 0 {
                    let b = value(Vertex::BTopLeft);
                    plus.columns_mut((2 * l + 1) * cols, cols).copy_from(&b);
                    store(&mut part.field, ct, l - 1, Vertex::BTopLeft, &b);
                }
            }
            if let Some(ct) = right {
                if l < cells_s {
                    let a = value(Vertex::ABottomRight);
                    minus.columns_mut(2 * l * cols, cols).copy_from(&a);
                    store(&mut part.field, ct, l, Vertex::ABottomRight, &a);
                }
                if l > 0 {
                    let a = value(Vertex::ATopRight);
                    store(&mut part.field, ct, l - 1, Vertex::ATopRight, &a);
                    let b = value(Vertex::BTopRight);
                    minus.columns_mut((2 * l + 1) * cols, cols).copy_from(&b);
                    store(&mut part.field, ct, l - 1, Vertex::BTopRight, &b);
                }
            }
        }
        part.lines.plus.push(plus);
        part.lines.minus.push(minus);
    }
}

// ---------------------------------------------------------------------------
// CSV

fn entry_header(out: &mut String, rows: usize, cols: usize) {
    for r in 0..rows {
        for k in 0..cols {
            let _ = write!(out, ",m_{r}_{k}_re,m_{r}_{k}_im");
        }
    }
    out.push('\n');
}

fn write_entries<'a>(out: &mut String, m: impl Into<DMatrixView<'a, C64>>) {
    let m = m.into();
    for r in 0..m.nrows() {
        for k in 0..m.ncols() {
            let z = m[(r, k)];
            let _ = write!(out, ",{:e},{:e}", z.re, z.im);
        }
    }
    out.push('\n');
}

fn field_csv(ks: &KernelSet, field: &VertexField) -> String {
    let (rows, cols) = field.shape();
    let mut out = String::from("t,s,cell_t,cell_s,vertex");
    entry_header(&mut out, rows, cols);
    for ct in 0..field.cells_t() {
        for cs in 0..field.cells_s() {
            for v in Vertex::ALL {
                let (u, w) = v.corner();
                let t = ks.time(ct + u);
                let s = (cs + w) as f64 * ks.step;
                let _ = write!(out, "{:e},{:e},{ct},{cs},{}", t, s, v.index());
                write_entries(&mut out, field.get(ct, cs, v));
            }
        }
    }
    out
}

impl KernelSet {
    /// `t,m_0_0_re,m_0_0_im,...` with one row per grid time.
    pub fn p_csv(&self) -> String {
        let d = self.dim();
        let mut out = String::from("t");
        entry_header(&mut out, d, d);
        for (i, m) in self.p.iter().enumerate() {
            let _ = write!(out, "{:e}", self.time(i));
            write_entries(&mut out, m);
        }
        out
    }

    /// `t,s,cell_t,cell_s,vertex,m_..` with one row per triangle corner;
    /// `vertex` is the [`Vertex`] index.
    pub fn f_csv(&self) -> String {
        field_csv(self, &self.f)
    }

    pub fn g_csv(&self) -> Option<String> {
        self.g.as_ref().map(|g| field_csv(self, g))
    }

    /// Rebuilds a kernel set from the three CSV dumps.
    pub fn from_csv(p: &str, f: &str, g: Option<&str>) -> Result<Self> {
        let p_rows = parse_table(p, 1)?;
        if p_rows.len() < 2 {
            return Err(Error::Parse("p needs at least two rows".into()));
        }
        let n = p_rows.len() - 1;
        let d = square_dim(p_rows[0].1.len())?;
        let t0 = p_rows[0].0[0];
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::Parse(format!("first time must be t_m > 0, got {t0}")));
        }
        let step = t0 / n as f64;
        let p = p_rows
            .into_iter()
            .map(|(_, e)| entries_matrix(&e, d, d))
            .collect::<Result<Vec<_>>>()?;
        let f = parse_field(f, n, n, d)?;
        let g = match g {
            Some(text) => Some(parse_field(text, n, 2 * n, d)?),
            None => None,
        };
        Ok(Self { n, step, p, f, g })
    }
}

type Row = (Vec<f64>, Vec<f64>);

/// Splits each data row into `lead` leading fields and the entry fields.
fn parse_table(text: &str, lead: usize) -> Result<Vec<Row>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
    let columns = header.split(',').count();
    if columns < lead + 2 || (columns - lead) % 2 != 0 {
        return Err(Error::Parse(format!("unexpected header with {columns} columns")));
    }
    lines
        .enumerate()
        .filter(|(_, line)| !line.is_empty())
        .map(|(k, line)| {
            let values = line
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}: {x:?}", k + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != columns {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, header has {columns}",
                    k + 1,
                    values.len()
                )));
            }
            let (a, b) = values.split_at(lead);
            Ok((a.to_vec(), b.to_vec()))
        })
        .collect()
}

fn square_dim(entries: usize) -> Result<usize> {
    let d = ((entries / 2) as f64).sqrt().round() as usize;
    if d == 0 || 2 * d * d != entries {
        return Err(Error::Parse(format!("{entries} entry columns do not form a square matrix")));
    }
    Ok(d)
}

fn entries_matrix(e: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    if e.len() != 2 * rows * cols {
        return Err(Error::Parse(format!("expected {} entry values, got {}", 2 * rows * cols, e.len())));
    }
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse("non-finite kernel entry".into()));
    }
    Ok(CMatrix::from_fn(rows, cols, |r, k| {
        let o = 2 * (r * cols + k);
        c(e[o], e[o + 1])
    }))
}

fn index(x: f64, bound: usize, what: &str) -> Result<usize> {
    if x.fract() != 0.0 || x < 0.0 || x >= bound as f64 {
        return Err(Error::Parse(format!("{what} {x} outside 0..{bound}")));
    }
    Ok(x as usize)
}

fn parse_field(text: &str, cells_t: usize, cells_s: usize, rows: usize) -> Result<VertexField> {
    let table = parse_table(text, 5)?;
    let entries = table.first().map_or(0, |r| r.1.len());
    if entries == 0 || entries % (2 * rows) != 0 {
        return Err(Error::Parse(format!("kernel rows must have {rows} matrix rows")));
    }
    let cols = entries / (2 * rows);
    let mut field = VertexField::zeros(cells_t, cells_s, rows, cols);
    let mut seen = vec![false; cells_t * cells_s * 6];
    for (lead, e) in table {
        let ct = index(lead[2], cells_t, "cell_t")?;
        let cs = index(lead[3], cells_s, "cell_s")?;
        let v = Vertex::from_index(index(lead[4], 6, "vertex")?).expect("bounded");
        let slot = (ct * cells_s + cs) * 6 + v.index();
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::Parse(format!("duplicate entry for cell ({ct}, {cs}) vertex {}", v.index())));
        }
        field.get_mut(ct, cs, v).copy_from(&entries_matrix(&e, rows, cols)?);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Parse("kernel file does not cover every cell".into()));
    }
    Ok(field)
}
