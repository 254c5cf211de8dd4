//! Discrete fields on the cap and the finite-difference calculus acting on them.
//!
//! The grid is cell-centered in `beta` (`beta_i = (i + 1/2) h`, `h = theta / Nbeta`)
//! with an extra ring of unknowns at exactly `beta = theta`. Rings below the
//! pole are read through the reflection `s(-beta, phi) = s(beta, phi + pi)`,
//! so no pole unknown is needed.
//!
//! Every derivative is stored as a sparse difference form and evaluated as
//! `sum_k w_k (s_k - s_c)`. Neighbouring values of a smooth positive field are
//! within a factor two of each other, so the differences are exact and the
//! large weights near the pole do not amplify rounding in `s` itself. Fields
//! may also carry a low-order part (`hi + lo`), which the solver uses to keep
//! residuals well below the spacing of representable `s` values.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::fd;
use crate::jet::{tau_from_jet, AnalyticField, Jet};
use crate::symfunc::SymEndo;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid {n_beta}x{n_phi} too coarse: both sizes must be at least 8")]
    TooCoarse { n_beta: usize, n_phi: usize },
    #[error("azimuthal size {0} must be even")]
    OddAzimuth(usize),
    #[error("contact angle {0} outside (0, pi/2)")]
    Angle(f64),
    #[error("grid mismatch: expected {expected}, found {found}")]
    Mismatch { expected: String, found: String },
    #[error("malformed field file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapGrid {
    pub n_beta: usize,
    pub n_phi: usize,
    pub theta: f64,
    pub h: f64,
    pub dphi: f64,
}

impl CapGrid {
    pub fn new(n_beta: usize, n_phi: usize, theta: f64) -> Result<Self, GridError> {
        if n_beta < 8 || n_phi < 8 {
            return Err(GridError::TooCoarse { n_beta, n_phi });
        }
        if n_phi % 2 != 0 {
            return Err(GridError::OddAzimuth(n_phi));
        }
        if !(theta > 0.0 && theta < 0.5 * PI) {
            return Err(GridError::Angle(theta));
        }
        Ok(CapGrid { n_beta, n_phi, theta, h: theta / n_beta as f64, dphi: 2.0 * PI / n_phi as f64 })
    }

    /// Number of nodes including the boundary ring.
    pub fn len(&self) -> usize {
        (self.n_beta + 1) * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn half(&self) -> usize {
        self.n_phi / 2
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    pub fn ring_of(&self, node: usize) -> usize {
        node / self.n_phi
    }

    pub fn beta(&self, i: usize) -> f64 {
        if i >= self.n_beta {
            self.theta
        } else {
            (i as f64 + 0.5) * self.h
        }
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.dphi
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.ring_of(node) == self.n_beta
    }

    /// Quadrature weight `sin(beta_i) h dphi`; zero on the boundary ring.
    pub fn weight(&self, i: usize) -> f64 {
        if i >= self.n_beta {
            0.0
        } else {
            self.beta(i).sin() * self.h * self.dphi
        }
    }

    /// Node index for a possibly negative ring (through the pole) and a
    /// possibly out-of-range azimuthal index.
    pub fn wrap(&self, ring: isize, j: isize) -> usize {
        let np = self.n_phi as isize;
        let (r, jj) = if ring < 0 { (-1 - ring, j + np / 2) } else { (ring, j) };
        self.idx(r as usize, jj.rem_euclid(np) as usize)
    }

    pub fn label(&self) -> String {
        format!("{}x{} theta={:.16e}", self.n_beta, self.n_phi, self.theta)
    }

    /// Same cap, azimuthal and radial sizes multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        CapGrid::new(self.n_beta * factor, self.n_phi * factor, self.theta).expect("refinement of a valid grid")
    }
}

/// A scalar field on a [`CapGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct CapField {
    pub grid: CapGrid,
    pub values: Vec<f64>,
    pub even: bool,
}

impl CapField {
    pub fn constant(grid: CapGrid, c: f64) -> Self {
        CapField { grid, values: vec![c; grid.len()], even: true }
    }

    pub fn from_fn(grid: CapGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..=grid.n_beta {
            let b = grid.beta(i);
            for j in 0..grid.n_phi {
                values.push(f(b, grid.phi(j)));
            }
        }
        CapField { grid, values, even: false }
    }

    pub fn sample(grid: CapGrid, field: &impl AnalyticField) -> Self {
        Self::from_fn(grid, |b, p| field.value(b, p))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        CapField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), even: self.even }
    }

    pub fn zip_with(&self, other: &CapField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        CapField { grid: self.grid, values, even: self.even && other.even }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &CapField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Largest violation of `s(beta, phi) = s(beta, phi + pi)`.
    pub fn evenness_defect(&self) -> f64 {
        let g = self.grid;
        let m = g.half();
        let mut worst: f64 = 0.0;
        for i in 0..=g.n_beta {
            for j in 0..m {
                worst = worst.max((self.get(i, j) - self.get(i, j + m)).abs());
            }
        }
        worst
    }
}

/// Quadrature `sum s_ij w_ij` over the interior rings.
pub fn integrate(s: &CapField) -> f64 {
    let g = s.grid;
    (0..g.n_beta).map(|i| g.weight(i) * s.values[i * g.n_phi..(i + 1) * g.n_phi].iter().sum::<f64>()).sum()
}

/// Even part `(s(beta, phi) + s(beta, phi + pi)) / 2`.
pub fn project_even(s: &CapField) -> CapField {
    let g = s.grid;
    let m = g.half();
    let mut out = s.clone();
    for i in 0..=g.n_beta {
        for j in 0..m {
            let a = g.idx(i, j);
            let b = g.idx(i, j + m);
            let v = 0.5 * (s.values[a] + s.values[b]);
            out.values[a] = v;
            out.values[b] = v;
        }
    }
    out.even = true;
    out
}

/// Sparse difference form `sum_k w_k (s_k - s_center)`.
#[derive(Clone, Debug, Default)]
pub struct DiffForm {
    pub terms: Vec<(u32, f64)>,
}

impl DiffForm {
    fn push(&mut self, node: usize, w: f64) {
        if w == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|t| t.0 as usize == node) {
            Some(t) => t.1 += w,
            None => self.terms.push((node as u32, w)),
        }
    }

    pub fn eval(&self, center: usize, hi: &[f64], lo: Option<&[f64]>) -> f64 {
        let c = hi[center];
        let mut acc: f64 = self.terms.iter().map(|&(k, w)| w * (hi[k as usize] - c)).sum();
        if let Some(lo) = lo {
            let cl = lo[center];
            acc += self.terms.iter().map(|&(k, w)| w * (lo[k as usize] - cl)).sum::<f64>();
        }
        acc
    }

    /// Adds `scale` times the derivative of this form with respect to each
    /// node value into `out`.
    pub fn accumulate(&self, center: usize, scale: f64, out: &mut Vec<(usize, f64)>) {
        let mut total = 0.0;
        for &(k, w) in &self.terms {
            out.push((k as usize, scale * w));
            total += w;
        }
        out.push((center, -scale * total));
    }
}

/// The five chart-derivative forms at one node.
#[derive(Clone, Debug, Default)]
pub struct NodeStencil {
    pub b: DiffForm,
    pub bb: DiffForm,
    pub p: DiffForm,
    pub pp: DiffForm,
    pub bp: DiffForm,
}

/// Difference stencils for every node of a grid.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub grid: CapGrid,
    pub nodes: Vec<NodeStencil>,
}

/// Discrete `beta` stencil: (ring, offset in units of h) pairs.
fn beta_nodes(grid: &CapGrid, i: usize, order: usize) -> Vec<(isize, f64)> {
    let nb = grid.n_beta as isize;
    let i = i as isize;
    if i == nb {
        let mut v = vec![(nb, 0.0), (nb - 1, -0.5), (nb - 2, -1.5)];
        if order == 2 {
            v.push((nb - 3, -2.5));
        }
        v
    } else if i == nb - 1 {
        if order == 1 {
            vec![(i - 1, -1.0), (i, 0.0), (nb, 0.5)]
        } else {
            vec![(i - 2, -2.0), (i - 1, -1.0), (i, 0.0), (nb, 0.5)]
        }
    } else {
        vec![(i - 1, -1.0), (i, 0.0), (i + 1, 1.0)]
    }
}

fn beta_weights(grid: &CapGrid, i: usize, order: usize) -> Vec<(isize, f64)> {
    let nodes = beta_nodes(grid, i, order);
    let offsets: Vec<f64> = nodes.iter().map(|n| n.1).collect();
    let w = fd::weights(&offsets, order, grid.h);
    nodes.iter().zip(w).map(|(n, w)| (n.0, w)).collect()
}

impl Stencil {
    pub fn new(grid: CapGrid) -> Self {
        let mut nodes = Vec::with_capacity(grid.len());
        let dp = grid.dphi;
        for i in 0..=grid.n_beta {
            let w1 = beta_weights(&grid, i, 1);
            let w2 = beta_weights(&grid, i, 2);
            for j in 0..grid.n_phi {
                let jj = j as isize;
                let mut st = NodeStencil::default();
                for &(r, w) in &w1 {
                    st.b.push(grid.wrap(r, jj), w);
                    st.bp.push(grid.wrap(r, jj + 1), w / (2.0 * dp));
                    st.bp.push(grid.wrap(r, jj - 1), -w / (2.0 * dp));
                }
                for &(r, w) in &w2 {
                    st.bb.push(grid.wrap(r, jj), w);
                }
                let r = i as isize;
                st.p.push(grid.wrap(r, jj + 1), 0.5 / dp);
                st.p.push(grid.wrap(r, jj - 1), -0.5 / dp);
                st.pp.push(grid.wrap(r, jj + 1), 1.0 / (dp * dp));
                st.pp.push(grid.wrap(r, jj - 1), 1.0 / (dp * dp));
                nodes.push(st);
            }
        }
        Stencil { grid, nodes }
    }

    /// Discrete jet (value and chart derivatives) at a node.
    pub fn jet(&self, node: usize, hi: &[f64], lo: Option<&[f64]>) -> Jet {
        let st = &self.nodes[node];
        Jet {
            v: hi[node] + lo.map_or(0.0, |l| l[node]),
            b: st.b.eval(node, hi, lo),
            p: st.p.eval(node, hi, lo),
            bb: st.bb.eval(node, hi, lo),
            bp: st.bp.eval(node, hi, lo),
            pp: st.pp.eval(node, hi, lo),
        }
    }

    pub fn tau(&self, node: usize, hi: &[f64], lo: Option<&[f64]>) -> SymEndo {
        let i = self.grid.ring_of(node);
        tau_from_jet(self.jet(node, hi, lo), self.grid.beta(i))
    }

    /// Sparse derivative of `c11 A11 + 2 c12 A12 + c22 A22` (entries of
    /// `tau_sharp` in the orthonormal frame) with respect to node values.
    pub fn tau_linearization(&self, node: usize, c11: f64, c12: f64, c22: f64, out: &mut Vec<(usize, f64)>) {
        let st = &self.nodes[node];
        let (sb, cb) = self.grid.beta(self.grid.ring_of(node)).sin_cos();
        let cot = cb / sb;
        st.bb.accumulate(node, c11, out);
        st.bp.accumulate(node, 2.0 * c12 / sb, out);
        st.p.accumulate(node, -2.0 * c12 * cot / sb, out);
        st.pp.accumulate(node, c22 / (sb * sb), out);
        st.b.accumulate(node, c22 * cot, out);
        out.push((node, c11 + c22));
    }

    /// `d_beta s - cot(theta) s` on boundary node `(Nbeta, j)`.
    pub fn robin(&self, j: usize, hi: &[f64], lo: Option<&[f64]>) -> f64 {
        let node = self.grid.idx(self.grid.n_beta, j);
        let v = hi[node] + lo.map_or(0.0, |l| l[node]);
        self.nodes[node].b.eval(node, hi, lo) - v / self.grid.theta.tan()
    }

    pub fn robin_linearization(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        let node = self.grid.idx(self.grid.n_beta, j);
        self.nodes[node].b.accumulate(node, 1.0, out);
        out.push((node, -1.0 / self.grid.theta.tan()));
    }
}

/// Covariant Hessian components `(H_bb, H_bp, H_pp)` in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovHessian {
    pub bb: f64,
    pub bp: f64,
    pub pp: f64,
}

pub fn covariant_hessian(s: &CapField) -> Vec<CovHessian> {
    let st = Stencil::new(s.grid);
    (0..s.grid.len())
        .map(|node| {
            let j = st.jet(node, &s.values, None);
            let (sb, cb) = s.grid.beta(s.grid.ring_of(node)).sin_cos();
            CovHessian { bb: j.bb, bp: j.bp - cb / sb * j.p, pp: j.pp + sb * cb * j.b }
        })
        .collect()
}

/// Per-node `tau_sharp[s]` in the orthonormal frame with its eigenvalues.
#[derive(Clone, Debug)]
pub struct TauField {
    pub grid: CapGrid,
    pub tau: Vec<SymEndo>,
    pub eigen: Vec<[f64; 2]>,
    pub lambda_min: f64,
}

impl TauField {
    pub fn from_stencil(st: &Stencil, hi: &[f64], lo: Option<&[f64]>) -> Self {
        let grid = st.grid;
        let tau: Vec<SymEndo> = (0..grid.len()).map(|node| st.tau(node, hi, lo)).collect();
        let eigen: Vec<[f64; 2]> = tau
            .iter()
            .map(|a| {
                let e = a.eigenvalues();
                [e[0], e[1]]
            })
            .collect();
        let lambda_min = eigen.iter().map(|e| e[0]).fold(f64::INFINITY, f64::min);
        TauField { grid, tau, eigen, lambda_min }
    }

    /// Largest entrywise deviation from `c * id`.
    pub fn max_deviation_from_scaled_identity(&self, c: f64) -> f64 {
        self.tau
            .iter()
            .map(|a| (a.get(0, 0) - c).abs().max(a.get(0, 1).abs()).max((a.get(1, 1) - c).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn tau_sharp(s: &CapField) -> TauField {
    TauField::from_stencil(&Stencil::new(s.grid), &s.values, None)
}

/// Robin residual `d_beta s - cot(theta) s` per boundary node.
pub fn robin_residual(s: &CapField) -> Vec<f64> {
    let st = Stencil::new(s.grid);
    (0..s.grid.n_phi).map(|j| st.robin(j, &s.values, None)).collect()
}

/// Largest boundary violation of `d_mu tau_pp = (tau_mm - tau_pp) cot(theta)`
/// (orthonormal frame, `e_phi / sin(beta)` is parallel along meridians).
pub fn boundary_tau_identity_residual(s: &CapField) -> f64 {
    let g = s.grid;
    let st = Stencil::new(g);
    let w = fd::weights(&[0.0, -0.5, -1.5], 1, g.h);
    let cot = 1.0 / g.theta.tan();
    let nb = g.n_beta;
    let mut worst: f64 = 0.0;
    for j in 0..g.n_phi {
        let a_b = st.tau(g.idx(nb, j), &s.values, None);
        let a22 = [a_b.get(1, 1), st.tau(g.idx(nb - 1, j), &s.values, None).get(1, 1), st.tau(g.idx(nb - 2, j), &s.values, None).get(1, 1)];
        let d = w[0] * a22[0] + w[1] * a22[1] + w[2] * a22[2];
        worst = worst.max((d - (a_b.get(0, 0) - a_b.get(1, 1)) * cot).abs());
    }
    worst
}

/// Writes `nbeta,nphi,theta` followed by one `i,j,value` row per node, with
/// seventeen significant digits.
pub fn write_csv(s: &CapField, path: &Path) -> io::Result<()> {
    std::fs::write(path, to_csv(s))
}

pub fn to_csv(s: &CapField) -> String {
    let g = s.grid;
    let mut out = String::with_capacity(g.len() * 40);
    out.push_str("nbeta,nphi,theta\n");
    let _ = writeln!(out, "{},{},{:.16e}", g.n_beta, g.n_phi, g.theta);
    out.push_str("i,j,value\n");
    for i in 0..=g.n_beta {
        for j in 0..g.n_phi {
            let _ = writeln!(out, "{},{},{:.16e}", i, j, s.get(i, j));
        }
    }
    out
}

pub fn read_csv(path: &Path) -> Result<CapField, GridError> {
    from_csv(&std::fs::read_to_string(path)?)
}

pub fn from_csv(text: &str) -> Result<CapField, GridError> {
    let bad = |m: &str| GridError::Parse(m.to_string());
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("nbeta,nphi,theta") {
        return Err(bad("missing header"));
    }
    let dims: Vec<&str> = lines.next().ok_or_else(|| bad("missing grid line"))?.split(',').collect();
    if dims.len() != 3 {
        return Err(bad("grid line needs three entries"));
    }
    let n_beta: usize = dims[0].trim().parse().map_err(|_| bad("nbeta"))?;
    let n_phi: usize = dims[1].trim().parse().map_err(|_| bad("nphi"))?;
    let theta: f64 = dims[2].trim().parse().map_err(|_| bad("theta"))?;
    let grid = CapGrid::new(n_beta, n_phi, theta)?;
    if lines.next().map(str::trim) != Some("i,j,value") {
        return Err(bad("missing column header"));
    }
    let mut values = vec![f64::NAN; grid.len()];
    let mut count = 0;
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(bad(&format!("row `{line}`")));
        }
        let i: usize = parts[0].trim().parse().map_err(|_| bad(&format!("row `{line}`")))?;
        let j: usize = parts[1].trim().parse().map_err(|_| bad(&format!("row `{line}`")))?;
        let v: f64 = parts[2].trim().parse().map_err(|_| bad(&format!("row `{line}`")))?;
        if i > n_beta || j >= n_phi {
            return Err(bad(&format!("node ({i}, {j}) outside grid")));
        }
        values[grid.idx(i, j)] = v;
        count += 1;
    }
    if count != grid.len() || values.iter().any(|v| v.is_nan()) {
        return Err(bad(&format!("expected {} node values, found {count}", grid.len())));
    }
    let mut field = CapField { grid, values, even: false };
    field.even = field.evenness_defect() == 0.0;
    Ok(field)
}
