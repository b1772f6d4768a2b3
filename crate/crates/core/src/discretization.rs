//! Finite-difference realization of `ℓ`, the weight `r`, and the per-side
//! subassemblies used by the interface (Schur complement) machinery.
//!
//! Assembly is cell by cell in flux form: a 1D cell adds `a/h²·[[1,-1],[-1,1]]`
//! on its two nodes, a 2D cell adds half of that stencil on each of its four
//! edges, so interior faces see the arithmetic mean of the two neighbouring
//! cells. Potential and weight are lumped equally onto the cell's nodes.
//! Nodes on the outer boundary are eliminated (homogeneous Dirichlet data).
//!
//! Every contribution is collected on the side (`Ω₊` or `Ω₋`) of the cell it
//! comes from, which gives the exact splitting `K = K⁺ + K⁻`.

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dense;
use crate::linalg::CsrMatrix;
use crate::problem::{partition_domain, InterfaceWeight, ProblemSpec};

pub use crate::problem::refine;

/// Relative threshold below which a node weight counts as zero.
pub const MASSLESS_TOL: f64 = 1e-12;

/// Uniform tensor grid; only interior nodes carry unknowns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub dimension: usize,
    pub cells: Vec<usize>,
    pub h: Vec<f64>,
    pub origin: Vec<f64>,
}

impl Grid {
    pub fn new(spec: &ProblemSpec) -> Self {
        Self {
            dimension: spec.dimension(),
            cells: spec.grid.clone(),
            h: spec.spacing(),
            origin: spec.domain.outer_box.iter().map(|b| b[0]).collect(),
        }
    }

    /// Interior nodes per axis.
    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells.iter().map(|n| n - 1).collect()
    }

    pub fn n_interior(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    /// Linear index of the interior node with all-node multi-index `k`
    /// (`0..=cells` per axis), or `None` on the outer boundary.
    pub fn interior_index(&self, k: &[usize]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for d in 0..self.dimension {
            if k[d] == 0 || k[d] >= self.cells[d] {
                return None;
            }
            idx += (k[d] - 1) * stride;
            stride *= self.cells[d] - 1;
        }
        Some(idx)
    }

    /// All-node multi-index of interior node `i`.
    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rest = i;
        (0..self.dimension)
            .map(|d| {
                let m = self.cells[d] - 1;
                let k = rest % m + 1;
                rest /= m;
                k
            })
            .collect()
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(d, &k)| self.origin[d] + k as f64 * self.h[d])
            .collect()
    }

    /// Cells sharing interior node `i` (2 in 1D, 4 in 2D).
    pub fn adjacent_cells(&self, i: usize) -> Vec<usize> {
        let k = self.multi_index(i);
        if self.dimension == 1 {
            vec![k[0] - 1, k[0]]
        } else {
            let nx = self.cells[0];
            let (kx, ky) = (k[0], k[1]);
            vec![
                (ky - 1) * nx + kx - 1,
                (ky - 1) * nx + kx,
                ky * nx + kx - 1,
                ky * nx + kx,
            ]
        }
    }

    /// The common spacing of a grid with square cells; interface pairings
    /// are weighted by powers of it.
    pub fn iso_spacing(&self) -> Result<f64> {
        let h = self.h[0];
        if self.h.iter().any(|&x| (x - h).abs() > 1e-12 * h) {
            return Err(Error::Config(format!(
                "interface operators need square cells, got spacings {:?}",
                self.h
            )));
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeClass {
    Plus,
    Minus,
    Interface,
}

/// Assembled pencil `(K, W)` with its interface structure.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub k: CsrMatrix,
    pub k_plus: CsrMatrix,
    pub k_minus: CsrMatrix,
    /// Diagonal of `W`.
    pub w: Vec<f64>,
    pub i_plus: Vec<usize>,
    pub i_minus: Vec<usize>,
    pub gamma: Vec<usize>,
    /// Split of `W` on `Γ`, parallel to `gamma`.
    pub w_plus_gamma: Vec<f64>,
    pub w_minus_gamma: Vec<f64>,
    pub node_class: Vec<NodeClass>,
    pub interface_weight: InterfaceWeight,
    /// `‖K‖_∞`.
    pub norm_k: f64,
    pub potential_essinf: f64,
    /// `max r` over `Ω₋` cells.
    pub minus_weight_max: f64,
    /// Whether `r` is constant on `Ω₋`.
    pub minus_weight_constant: bool,
}

pub fn assemble(spec: &ProblemSpec) -> Result<DiscreteOperator> {
    let part = partition_domain(spec)?;
    let grid = Grid::new(spec);
    let n = grid.n_interior();
    let r = &spec.weight.values;
    let a = &spec.coefficients.potential;
    let diff = &spec.coefficients.diffusion;

    let mut trip_plus = Vec::new();
    let mut trip_minus = Vec::new();
    // weight shares per side
    let mut wp = vec![0.0; n];
    let mut wm = vec![0.0; n];

    for c in 0..spec.n_cells() {
        let plus = r[c] > 0.0;
        let trips: &mut Vec<(usize, usize, f64)> = if plus { &mut trip_plus } else { &mut trip_minus };
        let ws = if plus { &mut wp } else { &mut wm };
        let mut edge = |p: Option<usize>, q: Option<usize>, coef: f64| {
            if let Some(p) = p {
                trips.push((p, p, coef));
            }
            if let Some(q) = q {
                trips.push((q, q, coef));
            }
            if let (Some(p), Some(q)) = (p, q) {
                trips.push((p, q, -coef));
                trips.push((q, p, -coef));
            }
        };
        let corners: Vec<Option<usize>> = if grid.dimension == 1 {
            let h2 = grid.h[0] * grid.h[0];
            let p = grid.interior_index(&[c]);
            let q = grid.interior_index(&[c + 1]);
            edge(p, q, diff[0][c] / h2);
            vec![p, q]
        } else {
            let nx = grid.cells[0];
            let (cx, cy) = (c % nx, c / nx);
            let n00 = grid.interior_index(&[cx, cy]);
            let n10 = grid.interior_index(&[cx + 1, cy]);
            let n01 = grid.interior_index(&[cx, cy + 1]);
            let n11 = grid.interior_index(&[cx + 1, cy + 1]);
            let cxx = 0.5 * diff[0][c] / (grid.h[0] * grid.h[0]);
            let cyy = 0.5 * diff[1][c] / (grid.h[1] * grid.h[1]);
            edge(n00, n10, cxx);
            edge(n01, n11, cxx);
            edge(n00, n01, cyy);
            edge(n10, n11, cyy);
            vec![n00, n10, n01, n11]
        };
        let share = 1.0 / corners.len() as f64;
        for p in corners.into_iter().flatten() {
            trips.push((p, p, share * a[c]));
            ws[p] += share * r[c];
        }
    }

    let k_plus = CsrMatrix::from_triplets(n, n, &trip_plus);
    let k_minus = CsrMatrix::from_triplets(n, n, &trip_minus);
    let k = k_plus.add(&k_minus);

    let mut node_class = vec![NodeClass::Plus; n];
    for i in 0..n {
        let cells = grid.adjacent_cells(i);
        let np = cells.iter().filter(|&&c| r[c] > 0.0).count();
        node_class[i] = if np == cells.len() {
            NodeClass::Plus
        } else if np == 0 {
            NodeClass::Minus
        } else {
            NodeClass::Interface
        };
    }
    let pick = |cls: NodeClass| -> Vec<usize> { (0..n).filter(|&i| node_class[i] == cls).collect() };
    let i_plus = pick(NodeClass::Plus);
    let i_minus = pick(NodeClass::Minus);
    let gamma = pick(NodeClass::Interface);
    debug_assert_eq!(gamma, part.gamma);

    let mut w_plus_gamma = Vec::with_capacity(gamma.len());
    let mut w_minus_gamma = Vec::with_capacity(gamma.len());
    for &g in &gamma {
        match spec.interface_weight {
            InterfaceWeight::Average => {
                w_plus_gamma.push(wp[g]);
                w_minus_gamma.push(wm[g]);
            }
            InterfaceWeight::BoundedSide => {
                let cells = grid.adjacent_cells(g);
                let plus: Vec<f64> = cells.iter().map(|&c| r[c]).filter(|&v| v > 0.0).collect();
                w_plus_gamma.push(plus.iter().sum::<f64>() / plus.len() as f64);
                w_minus_gamma.push(0.0);
            }
        }
    }
    let mut w: Vec<f64> = (0..n).map(|i| wp[i] + wm[i]).collect();
    for (t, &g) in gamma.iter().enumerate() {
        w[g] = w_plus_gamma[t] + w_minus_gamma[t];
    }

    let minus_r: Vec<f64> = part.minus_cells.iter().map(|&c| r[c]).collect();
    Ok(DiscreteOperator {
        norm_k: k.norm_inf(),
        grid,
        k,
        k_plus,
        k_minus,
        w,
        i_plus,
        i_minus,
        gamma,
        w_plus_gamma,
        w_minus_gamma,
        node_class,
        interface_weight: spec.interface_weight,
        potential_essinf: spec.potential_essinf(),
        minus_weight_max: spec.minus_weight_max(),
        minus_weight_constant: minus_r.iter().all(|v| v.to_bits() == minus_r[0].to_bits()),
    })
}

impl DiscreteOperator {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn interior(&self, side: Side) -> &[usize] {
        match side {
            Side::Plus => &self.i_plus,
            Side::Minus => &self.i_minus,
        }
    }

    pub fn k_side(&self, side: Side) -> &CsrMatrix {
        match side {
            Side::Plus => &self.k_plus,
            Side::Minus => &self.k_minus,
        }
    }

    pub fn w_gamma_side(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.w_plus_gamma,
            Side::Minus => &self.w_minus_gamma,
        }
    }

    /// Full-length diagonal of `W^side`: `w` on the side's interior, the
    /// split value on `Γ`, zero elsewhere.
    pub fn w_side(&self, side: Side) -> Vec<f64> {
        let mut d = vec![0.0; self.n()];
        for &i in self.interior(side) {
            d[i] = self.w[i];
        }
        for (t, &g) in self.gamma.iter().enumerate() {
            d[g] = self.w_gamma_side(side)[t];
        }
        d
    }

    /// Largest `|W_ii|`.
    pub fn w_max_abs(&self) -> f64 {
        self.w.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Interface nodes whose assembled weight is (numerically) zero.
    pub fn massless_nodes(&self) -> Vec<usize> {
        let tol = MASSLESS_TOL * self.w_max_abs();
        (0..self.n()).filter(|&i| self.w[i].abs() < tol).collect()
    }

    /// `‖K − (K⁺ + K⁻)‖_max` and `‖W_ΓΓ − (W⁺_Γ + W⁻_Γ)‖_max`.
    pub fn splitting_defect(&self) -> (f64, f64) {
        let dk = self.k.max_abs_diff(&self.k_plus.add(&self.k_minus));
        let dw = self
            .gamma
            .iter()
            .enumerate()
            .map(|(t, &g)| (self.w[g] - (self.w_plus_gamma[t] + self.w_minus_gamma[t])).abs())
            .fold(0.0, f64::max);
        (dk, dw)
    }

    /// Number of nonzero couplings between the opposite side's interior and
    /// anything in `K^side` (must be zero).
    pub fn cross_side_couplings(&self, side: Side) -> usize {
        let other = match side {
            Side::Plus => NodeClass::Minus,
            Side::Minus => NodeClass::Plus,
        };
        let ks = self.k_side(side);
        (0..self.n())
            .flat_map(|i| ks.row(i).map(move |(j, v)| (i, j, v)))
            .filter(|&(i, j, v)| {
                v != 0.0 && (self.node_class[i] == other || self.node_class[j] == other)
            })
            .count()
    }

    pub fn condensed(&self) -> Result<CondensedPencil> {
        CondensedPencil::new(self)
    }

    /// Mesh scaling for interface quantities: `M = h·S` and conormal `= h·residual`.
    pub fn interface_scale(&self) -> Result<f64> {
        self.grid.iso_spacing()
    }
}

/// Values of `v` on `Γ`.
pub fn trace<T: Copy>(op: &DiscreteOperator, v: &[T]) -> Vec<T> {
    assert_eq!(v.len(), op.n());
    op.gamma.iter().map(|&g| v[g]).collect()
}

/// `(K^side − λ W^side) v` on all rows (full-length `v`; entries off
/// `I_side ∪ Γ` are never read).
pub fn side_residual(op: &DiscreteOperator, side: Side, v: &[Complex64], lambda: Complex64) -> Vec<Complex64> {
    let wd = op.w_side(side);
    let mut r = op.k_side(side).matvec(v);
    for (i, ri) in r.iter_mut().enumerate() {
        *ri -= lambda * wd[i] * v[i];
    }
    r
}

/// Discrete conormal derivative of a one-sided `λ`-harmonic function:
/// `h · [(K^side − λW^side) v]_Γ`, the flux leaving `Ω_side`.
pub fn conormal(op: &DiscreteOperator, side: Side, v: &[Complex64], lambda: Complex64) -> Result<Vec<Complex64>> {
    let h = op.interface_scale()?;
    let r = side_residual(op, side, v, lambda);
    let interior_res = dense::vec_norm(&op.interior(side).iter().map(|&i| r[i]).collect::<Vec<_>>());
    let vn = dense::vec_norm(v);
    let bound = 1e-8 * vn;
    if interior_res > bound {
        return Err(Error::NotHarmonic {
            residual: interior_res,
            bound,
        });
    }
    Ok(op.gamma.iter().map(|&g| r[g] * h).collect())
}

/// [`conormal`] without the harmonicity check.
pub fn conormal_unchecked(op: &DiscreteOperator, side: Side, v: &[Complex64], lambda: Complex64) -> Result<Vec<Complex64>> {
    let h = op.interface_scale()?;
    let r = side_residual(op, side, v, lambda);
    Ok(op.gamma.iter().map(|&g| r[g] * h).collect())
}

/// Dirichlet restrictions of `K` to each side's interior and the weighted
/// operators `B± = W±⁻¹ A±`.
#[derive(Debug, Clone)]
pub struct SubdomainOperators {
    pub a_plus: CsrMatrix,
    pub a_minus: CsrMatrix,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
}

pub fn subdomain_operators(op: &DiscreteOperator) -> SubdomainOperators {
    let restrict = |idx: &[usize]| op.k.submatrix(idx, idx);
    SubdomainOperators {
        a_plus: restrict(&op.i_plus),
        a_minus: restrict(&op.i_minus),
        w_plus: op.i_plus.iter().map(|&i| op.w[i]).collect(),
        w_minus: op.i_minus.iter().map(|&i| op.w[i]).collect(),
    }
}

impl SubdomainOperators {
    pub fn a(&self, side: Side) -> &CsrMatrix {
        match side {
            Side::Plus => &self.a_plus,
            Side::Minus => &self.a_minus,
        }
    }

    pub fn w(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.w_plus,
            Side::Minus => &self.w_minus,
        }
    }

    pub fn b_apply(&self, side: Side, x: &[f64]) -> Vec<f64> {
        let w = self.w(side);
        self.a(side)
            .matvec(x)
            .into_iter()
            .zip(w)
            .map(|(v, wi)| v / wi)
            .collect()
    }

    /// `max |⟨B f, g⟩± − ⟨f, B g⟩±| / ‖A±‖` over random unit `f, g`, with
    /// `⟨x, y⟩± = ±Σ w_i x_i y_i`.
    pub fn b_selfadjoint_residual(&self, side: Side, trials: usize, seed: u64) -> f64 {
        let w = self.w(side);
        let n = w.len();
        if n == 0 {
            return 0.0;
        }
        let sgn = side.sign();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ip = |x: &[f64], y: &[f64]| -> f64 { sgn * x.iter().zip(y).zip(w).map(|((a, b), c)| a * b * c).sum::<f64>() };
        let norm_a = self.a(side).norm_inf().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let f = random_unit(&mut rng, n);
            let g = random_unit(&mut rng, n);
            let lhs = ip(&self.b_apply(side, &f), &g);
            let rhs = ip(&f, &self.b_apply(side, &g));
            worst = worst.max((lhs - rhs).abs() / norm_a);
        }
        worst
    }
}

pub(crate) fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = dense::vec_norm_real(&v);
    v.into_iter().map(|x| x / nv).collect()
}

pub(crate) fn random_unit_c(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let nv = dense::vec_norm(&v);
    v.into_iter().map(|x| x / nv).collect()
}

/// The pencil with massless nodes eliminated: `K̃ = K_rr − K_r0 K_00⁻¹ K_0r`
/// and the (invertible) weight `w_r` on the retained nodes.
///
/// For a massless node the eigen-equation reads `(K f)_0 = 0`, so the finite
/// eigenvalues of `(K, W)` are exactly those of `(K̃, W_r)`, and eigenvectors
/// lift back via `f_0 = −K_00⁻¹ K_0r f_r`.
#[derive(Debug, Clone)]
pub struct CondensedPencil {
    pub k: CsrMatrix,
    pub w: Vec<f64>,
    pub retained: Vec<usize>,
    pub massless: Vec<usize>,
    /// `K_00⁻¹ K_0r`, dense `n0 × n_r`.
    lift: Mat<f64>,
    pub n_full: usize,
    pub norm_k: f64,
}

impl CondensedPencil {
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        let n = op.n();
        let massless = op.massless_nodes();
        let is_massless = {
            let mut v = vec![false; n];
            for &i in &massless {
                v[i] = true;
            }
            v
        };
        let retained: Vec<usize> = (0..n).filter(|&i| !is_massless[i]).collect();
        let nr = retained.len();
        let w: Vec<f64> = retained.iter().map(|&i| op.w[i]).collect();
        if massless.is_empty() {
            return Ok(Self {
                norm_k: op.k.norm_inf(),
                k: op.k.clone(),
                w,
                retained,
                massless,
                lift: Mat::zeros(0, nr),
                n_full: n,
            });
        }
        let k_rr = op.k.submatrix(&retained, &retained);
        let k_0r = op.k.submatrix(&massless, &retained);
        let k_00 = op.k.submatrix(&massless, &massless).to_dense();
        let cond = dense::norm_one(&k_00) * dense::norm_one(&dense::inverse(&k_00));
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::Condensation(format!(
                "massless block is singular (condition {cond:e})"
            )));
        }
        let c = dense::inverse(&k_00);
        let n0 = massless.len();
        let mut trips: Vec<(usize, usize, f64)> = (0..nr)
            .flat_map(|i| k_rr.row(i).map(move |(j, v)| (i, j, v)).collect::<Vec<_>>())
            .collect();
        for p in 0..n0 {
            for q in 0..n0 {
                let cpq = c[(p, q)];
                if cpq == 0.0 {
                    continue;
                }
                for (i, a) in k_0r.row(p) {
                    for (j, b) in k_0r.row(q) {
                        trips.push((i, j, -a * cpq * b));
                    }
                }
            }
        }
        let mut k = CsrMatrix::from_triplets(nr, nr, &trips);
        // Symmetrize exactly: the triplet sums for (i,j) and (j,i) can round differently.
        let mut sym = Vec::with_capacity(k.nnz());
        for i in 0..nr {
            for (j, v) in k.row(i) {
                let vt = k.get(j, i);
                sym.push((i, j, if i <= j { v } else { vt }));
            }
        }
        k = CsrMatrix::from_triplets(nr, nr, &sym);
        let mut lift = Mat::zeros(n0, nr);
        for p in 0..n0 {
            for q in 0..n0 {
                let cpq = c[(p, q)];
                for (j, b) in k_0r.row(q) {
                    lift[(p, j)] += cpq * b;
                }
            }
        }
        Ok(Self {
            norm_k: k.norm_inf(),
            k,
            w,
            retained,
            massless,
            lift,
            n_full: n,
        })
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Full-length vector from retained-node values.
    pub fn lift(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut f = vec![Complex64::new(0.0, 0.0); self.n_full];
        for (t, &i) in self.retained.iter().enumerate() {
            f[i] = x[t];
        }
        for (p, &i) in self.massless.iter().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (j, xj) in x.iter().enumerate() {
                let l = self.lift[(p, j)];
                if l != 0.0 {
                    s += xj * l;
                }
            }
            f[i] = -s;
        }
        f
    }

    pub fn k_dense(&self) -> Mat<f64> {
        self.k.to_dense()
    }

    /// `T = W⁻¹ K̃` as a dense matrix.
    pub fn t_dense(&self) -> Mat<f64> {
        let mut t = self.k.to_dense();
        for i in 0..self.n() {
            let wi = self.w[i];
            for j in 0..self.n() {
                t[(i, j)] /= wi;
            }
        }
        t
    }
}
