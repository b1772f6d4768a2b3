//! Interface Dirichlet-to-Neumann function `M(λ) = M⁺(λ) + M⁻(λ)`, the
//! solution operators `γ(λ)`, and a contour-integral solver for
//! `ker M(λ) ≠ {0}`.
//!
//! Scaling: `M^side = h·S^side` with the Schur complement
//! `S^side(λ) = (K^side_ΓΓ − λW^side_Γ) − K_ΓI (K_II − λW_II)⁻¹ K_IΓ`,
//! which matches the continuum map as `h → 0`. Interface vectors are paired
//! by `⟨φ, ψ⟩_Γ = h^(d−1) Σ φ ψ̄` and grid functions by `⟨u, v⟩ = h^d Σ u v̄`;
//! under these pairings `γ(λ̄)* = h·γ(λ̄)ᴴ`.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{conormal, DiscreteOperator, NodeClass, Side};
use crate::error::{Error, Result};
use crate::linalg::{dense, BandLu, CMat};
use crate::spectral::DEFAULT_TOL_IM;

const SIDES: [Side; 2] = [Side::Plus, Side::Minus];
/// Shifts whose Dirichlet block has a larger condition estimate are refused.
pub const MAX_CONDITION: f64 = 1e12;

fn c0() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Factorized `P = K_II − λW_II` on one side, with the `K_IΓ` couplings.
#[derive(Debug, Clone)]
pub struct SideSolver {
    pub side: Side,
    pub lambda: Complex64,
    /// Global indices of the side's interior nodes.
    pub nodes: Vec<usize>,
    w_i: Vec<f64>,
    lu: BandLu<Complex64>,
    /// `K_IΓ` column for each interface node: `(local row, value)`.
    k_ig: Vec<Vec<(usize, f64)>>,
    pub condition: f64,
}

impl SideSolver {
    pub fn new(op: &DiscreteOperator, side: Side, lambda: Complex64) -> Result<Self> {
        let nodes = op.interior(side).to_vec();
        let w_i: Vec<f64> = nodes.iter().map(|&i| op.w[i]).collect();
        let mut local = vec![usize::MAX; op.n()];
        for (t, &i) in nodes.iter().enumerate() {
            local[i] = t;
        }
        let cls = match side {
            Side::Plus => NodeClass::Plus,
            Side::Minus => NodeClass::Minus,
        };
        let k_ig = op
            .gamma
            .iter()
            .map(|&g| {
                op.k.row(g)
                    .filter(|&(i, _)| op.node_class[i] == cls)
                    .map(|(i, v)| (local[i], v))
                    .collect()
            })
            .collect();
        let p = op.k.submatrix(&nodes, &nodes);
        let lu = p
            .to_band_shifted(lambda, &w_i)
            .lu()
            .ok_or(Error::NearSingularShift {
                lambda,
                condition: f64::INFINITY,
            })?;
        let condition = if nodes.is_empty() { 1.0 } else { lu.condition_estimate() };
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::NearSingularShift { lambda, condition });
        }
        Ok(Self {
            side,
            lambda,
            nodes,
            w_i,
            lu,
            k_ig,
            condition,
        })
    }

    /// `K_IΓ φ` in local interior numbering.
    fn k_ig_apply(&self, phi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![c0(); self.nodes.len()];
        for (t, col) in self.k_ig.iter().enumerate() {
            for &(i, v) in col {
                out[i] += phi[t] * v;
            }
        }
        out
    }

    /// `K_ΓI u` for local interior `u`.
    fn k_gi_apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.k_ig
            .iter()
            .map(|col| col.iter().map(|&(i, v)| u[i] * v).sum())
            .collect()
    }

    /// Interior values `u = −P⁻¹ K_IΓ φ` of the discrete `λ`-harmonic
    /// extension of `φ`.
    pub fn extend(&self, phi: &[Complex64]) -> Vec<Complex64> {
        if self.nodes.is_empty() {
            return Vec::new();
        }
        let rhs = self.k_ig_apply(phi);
        self.lu.solve(&rhs).into_iter().map(|v| -v).collect()
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        if self.nodes.is_empty() {
            return Vec::new();
        }
        self.lu.solve(rhs)
    }

    /// `Z = P⁻¹ K_IΓ`, one column per interface node.
    fn z_columns(&self) -> Vec<Vec<Complex64>> {
        (0..self.k_ig.len())
            .map(|t| {
                let mut e = vec![c0(); self.k_ig.len()];
                e[t] = Complex64::new(1.0, 0.0);
                self.extend(&e).into_iter().map(|v| -v).collect()
            })
            .collect()
    }
}

/// Both sides' solvers at one shift.
#[derive(Debug, Clone)]
pub struct InterfaceSolver {
    pub lambda: Complex64,
    pub plus: SideSolver,
    pub minus: SideSolver,
    pub h: f64,
    pub dim: usize,
}

impl InterfaceSolver {
    pub fn new(op: &DiscreteOperator, lambda: Complex64) -> Result<Self> {
        let h = op.interface_scale()?;
        let (plus, minus) = rayon::join(
            || SideSolver::new(op, Side::Plus, lambda),
            || SideSolver::new(op, Side::Minus, lambda),
        );
        Ok(Self {
            lambda,
            plus: plus?,
            minus: minus?,
            h,
            dim: op.grid.dimension,
        })
    }

    pub fn side(&self, side: Side) -> &SideSolver {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub side: Side,
    pub lambda: Complex64,
    pub phi: Vec<Complex64>,
    /// Values on the side's interior nodes (see [`SideSolver::nodes`]).
    pub interior: Vec<Complex64>,
    pub nodes: Vec<usize>,
    /// `‖(K_II − λW_II)u + K_IΓ φ‖ / (‖φ‖‖K‖)`.
    pub residual: f64,
}

impl DirichletSolution {
    /// Full-length vector: `φ` on `Γ`, `u` on the side's interior, zero elsewhere.
    pub fn to_full(&self, op: &DiscreteOperator) -> Vec<Complex64> {
        let mut v = vec![c0(); op.n()];
        for (t, &g) in op.gamma.iter().enumerate() {
            v[g] = self.phi[t];
        }
        for (t, &i) in self.nodes.iter().enumerate() {
            v[i] = self.interior[t];
        }
        v
    }
}

pub fn solve_dirichlet(op: &DiscreteOperator, side: Side, lambda: Complex64, phi: &[Complex64]) -> Result<DirichletSolution> {
    let s = SideSolver::new(op, side, lambda)?;
    Ok(dirichlet_with(op, &s, phi))
}

fn dirichlet_with(op: &DiscreteOperator, s: &SideSolver, phi: &[Complex64]) -> DirichletSolution {
    let u = s.extend(phi);
    // residual against the unfactored matrix
    let p = op.k.submatrix(&s.nodes, &s.nodes);
    let mut r = p.matvec(&u);
    let kphi = s.k_ig_apply(phi);
    for i in 0..r.len() {
        r[i] += kphi[i] - s.lambda * s.w_i[i] * u[i];
    }
    let pn = dense::vec_norm(phi);
    let residual = if pn == 0.0 { dense::vec_norm(&r) } else { dense::vec_norm(&r) / (pn * op.norm_k) };
    DirichletSolution {
        side: s.side,
        lambda: s.lambda,
        phi: phi.to_vec(),
        interior: u,
        nodes: s.nodes.clone(),
        residual,
    }
}

/// `M(λ)` on the interface with its per-side parts.
#[derive(Debug, Clone)]
pub struct DtNMatrix {
    pub lambda: Complex64,
    pub m: CMat,
    pub m_plus: CMat,
    pub m_minus: CMat,
    pub derivative: Option<CMat>,
    pub sigma_min: f64,
}

impl DtNMatrix {
    pub fn norm(&self) -> f64 {
        dense::spectral_norm_c(&self.m).unwrap_or(f64::NAN)
    }
}

fn side_dtn(op: &DiscreteOperator, s: &SideSolver, h: f64, with_derivative: bool) -> (CMat, Option<CMat>) {
    let ng = op.gamma.len();
    let ks = op.k_side(s.side);
    let wg = op.w_gamma_side(s.side);
    let z = s.z_columns();
    let mut m = Mat::from_fn(ng, ng, |a, b| {
        let mut v = Complex64::new(ks.get(op.gamma[a], op.gamma[b]), 0.0);
        if a == b {
            v -= s.lambda * wg[a];
        }
        v
    });
    for (b, zb) in z.iter().enumerate() {
        let col = s.k_gi_apply(zb);
        for a in 0..ng {
            m[(a, b)] -= col[a];
        }
    }
    let m = Mat::from_fn(ng, ng, |a, b| m[(a, b)] * h);
    let d = with_derivative.then(|| {
        Mat::from_fn(ng, ng, |a, b| {
            let quad: Complex64 = z[a]
                .iter()
                .zip(&z[b])
                .zip(&s.w_i)
                .map(|((x, y), w)| x * y * *w)
                .sum();
            let diag = if a == b { wg[a] } else { 0.0 };
            -(quad + diag) * h
        })
    });
    (m, d)
}

fn dtn_from(op: &DiscreteOperator, solver: &InterfaceSolver, with_derivative: bool) -> Result<DtNMatrix> {
    let (mp, dp) = side_dtn(op, &solver.plus, solver.h, with_derivative);
    let (mm, dm) = side_dtn(op, &solver.minus, solver.h, with_derivative);
    let ng = op.gamma.len();
    let m = Mat::from_fn(ng, ng, |a, b| mp[(a, b)] + mm[(a, b)]);
    let derivative = match (dp, dm) {
        (Some(a), Some(b)) => Some(Mat::from_fn(ng, ng, |i, j| a[(i, j)] + b[(i, j)])),
        _ => None,
    };
    let sv = dense::singular_values_c(&m)?;
    Ok(DtNMatrix {
        lambda: solver.lambda,
        sigma_min: sv.last().copied().unwrap_or(0.0),
        m,
        m_plus: mp,
        m_minus: mm,
        derivative,
    })
}

pub fn dtn(op: &DiscreteOperator, lambda: Complex64) -> Result<DtNMatrix> {
    dtn_from(op, &InterfaceSolver::new(op, lambda)?, false)
}

/// `M(λ)` together with `dM/dλ = h·Σ_side (−W^side_Γ − Zᵀ W_II Z)`, `Z = P⁻¹K_IΓ`.
pub fn dtn_with_derivative(op: &DiscreteOperator, lambda: Complex64) -> Result<DtNMatrix> {
    dtn_from(op, &InterfaceSolver::new(op, lambda)?, true)
}

pub fn dtn_derivative(op: &DiscreteOperator, lambda: Complex64) -> Result<CMat> {
    Ok(dtn_with_derivative(op, lambda)?.derivative.expect("derivative requested"))
}

/// Largest deviation between the columns of `M(λ)` and the summed conormals
/// of the Dirichlet solutions for unit data, relative to `max(1, ‖M‖_max)`.
pub fn schur_consistency(op: &DiscreteOperator, lambda: Complex64) -> Result<f64> {
    let solver = InterfaceSolver::new(op, lambda)?;
    let d = dtn_from(op, &solver, false)?;
    let ng = op.gamma.len();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for j in 0..ng {
        let mut e = vec![c0(); ng];
        e[j] = Complex64::new(1.0, 0.0);
        let mut col = vec![c0(); ng];
        for side in SIDES {
            let sol = dirichlet_with(op, solver.side(side), &e);
            let c = conormal(op, side, &sol.to_full(op), lambda)?;
            for a in 0..ng {
                col[a] += c[a];
            }
        }
        for a in 0..ng {
            worst = worst.max((col[a] - d.m[(a, j)]).norm());
            scale = scale.max(d.m[(a, j)].norm());
        }
    }
    Ok(worst / scale)
}

/// `M(λ̄) − conj(M(λ))`, max entry relative to `max(1, ‖M‖_max)`.
pub fn conjugate_symmetry_defect(op: &DiscreteOperator, lambda: Complex64) -> Result<f64> {
    let a = dtn(op, lambda)?;
    let b = dtn(op, lambda.conj())?;
    let ng = op.gamma.len();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..ng {
        for j in 0..ng {
            worst = worst.max((b.m[(i, j)] - a.m[(i, j)].conj()).norm());
            scale = scale.max(a.m[(i, j)].norm());
        }
    }
    Ok(worst / scale)
}

/// Discrete Green identity on one side for the `λ`-harmonic extensions of
/// `φ_u`, `φ_v`: `a(u,v) − conj(a(v,u))` against
/// `⟨∂u, φ_v⟩_Γ − ⟨φ_u, ∂v⟩_Γ` with `a(u,v) = h^d vᴴ(K^side − λW^side)u`.
/// Returns the absolute defect relative to the size of the terms.
pub fn green_identity_residual(
    op: &DiscreteOperator,
    side: Side,
    lambda: Complex64,
    phi_u: &[Complex64],
    phi_v: &[Complex64],
) -> Result<f64> {
    let s = SideSolver::new(op, side, lambda)?;
    let h = op.interface_scale()?;
    let hd = h.powi(op.grid.dimension as i32);
    let hg = h.powi(op.grid.dimension as i32 - 1);
    let u = dirichlet_with(op, &s, phi_u).to_full(op);
    let v = dirichlet_with(op, &s, phi_v).to_full(op);
    let form = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
        let r = crate::discretization::side_residual(op, side, x, lambda);
        hd * r.iter().zip(y).map(|(a, b)| a * b.conj()).sum::<Complex64>()
    };
    let lhs = form(&u, &v) - form(&v, &u).conj();
    let cu = conormal(op, side, &u, lambda)?;
    let cv = conormal(op, side, &v, lambda)?;
    let gpair = |a: &[Complex64], b: &[Complex64]| hg * dense::dot_c(a, b);
    let rhs = gpair(&cu, phi_v) - gpair(phi_u, &cv);
    let scale = form(&u, &v).norm().max(form(&v, &u).norm()).max(1.0);
    Ok((lhs - rhs).norm() / scale)
}

/// `γ(λ)φ`: the two `λ`-harmonic extensions glued along `Γ`.
pub fn gamma_apply(op: &DiscreteOperator, lambda: Complex64, phi: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(gamma_with(op, &InterfaceSolver::new(op, lambda)?, phi))
}

fn gamma_with(op: &DiscreteOperator, solver: &InterfaceSolver, phi: &[Complex64]) -> Vec<Complex64> {
    let mut f = vec![c0(); op.n()];
    for (t, &g) in op.gamma.iter().enumerate() {
        f[g] = phi[t];
    }
    for side in SIDES {
        let s = solver.side(side);
        for (t, v) in s.extend(phi).into_iter().enumerate() {
            f[s.nodes[t]] = v;
        }
    }
    f
}

/// `γ(λ̄)* g = h (g_Γ − Σ_side K_ΓI (K_II − λW_II)⁻¹ g_I)`, the adjoint of
/// `γ(λ̄)` in the mesh-weighted pairings.
pub fn gamma_adjoint_apply(op: &DiscreteOperator, lambda: Complex64, g: &[Complex64]) -> Result<Vec<Complex64>> {
    Ok(gamma_adjoint_with(op, &InterfaceSolver::new(op, lambda)?, g))
}

fn gamma_adjoint_with(op: &DiscreteOperator, solver: &InterfaceSolver, g: &[Complex64]) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = op.gamma.iter().map(|&i| g[i]).collect();
    for side in SIDES {
        let s = solver.side(side);
        let gi: Vec<Complex64> = s.nodes.iter().map(|&i| g[i]).collect();
        let y = s.solve(&gi);
        for (o, v) in out.iter_mut().zip(s.k_gi_apply(&y)) {
            *o -= v;
        }
    }
    out.into_iter().map(|v| v * solver.h).collect()
}

/// Grid-function pairing `h^d Σ u v̄`.
pub fn omega_pairing(op: &DiscreteOperator, u: &[Complex64], v: &[Complex64]) -> Result<Complex64> {
    Ok(op.interface_scale()?.powi(op.grid.dimension as i32) * dense::dot_c(u, v))
}

/// Interface pairing `h^(d−1) Σ φ ψ̄`.
pub fn gamma_pairing(op: &DiscreteOperator, a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
    Ok(op.interface_scale()?.powi(op.grid.dimension as i32 - 1) * dense::dot_c(a, b))
}

/// Full-pencil resolvent `(K − λW)⁻¹ W g` (equal to `(T − λ)⁻¹ g` when `W`
/// is invertible; with massless nodes it is the natural extension).
pub fn full_resolvent_apply(op: &DiscreteOperator, lambda: Complex64, g: &[Complex64]) -> Result<Vec<Complex64>> {
    let lu = full_pencil_lu(op, lambda)?;
    let wg: Vec<Complex64> = g.iter().zip(&op.w).map(|(x, w)| x * *w).collect();
    Ok(lu.solve(&wg))
}

fn full_pencil_lu(op: &DiscreteOperator, lambda: Complex64) -> Result<BandLu<Complex64>> {
    let lu = op
        .k
        .to_band_shifted(lambda, &op.w)
        .lu()
        .ok_or(Error::NearSingularShift {
            lambda,
            condition: f64::INFINITY,
        })?;
    let condition = lu.condition_estimate();
    if condition > MAX_CONDITION {
        return Err(Error::NearSingularShift { lambda, condition });
    }
    Ok(lu)
}

/// `(B₊ ⊕ B₋ − λ)⁻¹ g` on `I₊ ∪ I₋`, zero on `Γ`.
fn decoupled_resolvent_with(op: &DiscreteOperator, solver: &InterfaceSolver, g: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![c0(); op.n()];
    for side in SIDES {
        let s = solver.side(side);
        let rhs: Vec<Complex64> = s.nodes.iter().zip(&s.w_i).map(|(&i, w)| g[i] * *w).collect();
        for (t, v) in s.solve(&rhs).into_iter().enumerate() {
            out[s.nodes[t]] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct KreinResolventCheck {
    pub lambda: Complex64,
    /// `‖R_T g − R_B g − γ M⁻¹ γ(λ̄)* W g‖ / ‖R_T g‖`.
    pub residual: f64,
    pub sigma_min_m: f64,
}

/// Checks the Krein-type resolvent formula for one `(λ, g)`.
pub fn krein_resolvent_residual(op: &DiscreteOperator, lambda: Complex64, g: &[Complex64]) -> Result<KreinResolventCheck> {
    let solver = InterfaceSolver::new(op, lambda)?;
    let d = dtn_from(op, &solver, false)?;
    let mnorm = dense::spectral_norm_c(&d.m)?;
    if d.sigma_min < 1e-12 * mnorm {
        return Err(Error::SingularDtN {
            lambda,
            sigma_min: d.sigma_min,
        });
    }
    let full = full_resolvent_apply(op, lambda, g)?;
    let dec = decoupled_resolvent_with(op, &solver, g);
    let wg: Vec<Complex64> = g.iter().zip(&op.w).map(|(x, w)| x * *w).collect();
    let psi = gamma_adjoint_with(op, &solver, &wg);
    let x = dense::solve_c(&d.m, &dense::col_vec(&psi));
    let term = gamma_with(op, &solver, &dense::col_to_vec(&x, 0));
    let diff: Vec<Complex64> = (0..op.n()).map(|i| full[i] - dec[i] - term[i]).collect();
    Ok(KreinResolventCheck {
        lambda,
        residual: dense::vec_norm(&diff) / dense::vec_norm(&full),
        sigma_min_m: d.sigma_min,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub lambda: Complex64,
    pub gamma_size: usize,
    pub numerical_rank: usize,
    /// `σ_{|Γ|+1} / σ₁` (zero when the matrix is smaller).
    pub trailing_ratio: f64,
    pub singular_values: Vec<f64>,
}

/// Forms `(K − λW)⁻¹W − (B₊ ⊕ B₋ − λ)⁻¹ ⊕ 0` column by column and reports
/// its singular values.
pub fn resolvent_difference_rank(op: &DiscreteOperator, lambda: Complex64) -> Result<RankReport> {
    let n = op.n();
    let solver = InterfaceSolver::new(op, lambda)?;
    let lu = full_pencil_lu(op, lambda)?;
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![c0(); n];
            e[j] = Complex64::new(1.0, 0.0);
            let we: Vec<Complex64> = e.iter().zip(&op.w).map(|(x, w)| x * *w).collect();
            let a = lu.solve(&we);
            let b = decoupled_resolvent_with(op, &solver, &e);
            a.into_iter().zip(b).map(|(x, y)| x - y).collect()
        })
        .collect();
    let dmat = Mat::from_fn(n, n, |i, j| cols[j][i]);
    let sv = dense::singular_values_c(&dmat)?;
    let s1 = sv.first().copied().unwrap_or(0.0);
    let ng = op.gamma.len();
    Ok(RankReport {
        lambda,
        gamma_size: ng,
        numerical_rank: sv.iter().filter(|&&s| s > 1e-10 * s1).count(),
        trailing_ratio: if ng < n && s1 > 0.0 { sv[ng] / s1 } else { 0.0 },
        singular_values: sv,
    })
}

/// Eigenvector of the full pencil assembled from an interface kernel vector.
#[derive(Debug, Clone)]
pub struct KernelEigenfunction {
    pub f: Vec<Complex64>,
    /// `‖K f − λ W f‖ / (‖K‖ ‖f‖)`.
    pub residual: f64,
}

pub fn eigenfunction_from_kernel(op: &DiscreteOperator, lambda: Complex64, phi: &[Complex64]) -> Result<KernelEigenfunction> {
    let f = gamma_apply(op, lambda, phi)?;
    let residual = crate::spectral::pencil_residual(op, &f, lambda) / op.norm_k;
    if residual > 1e-8 {
        return Err(Error::KernelResidualTooLarge {
            residual,
            bound: 1e-8,
        });
    }
    Ok(KernelEigenfunction { f, residual })
}

// ---------------------------------------------------------------------------
// Contour-integral eigensolver

/// Ellipse `c + a cos θ + i b sin θ` with trapezoidal quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub center: Complex64,
    pub semi_axes: [f64; 2],
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Probe columns; `None` means `min(|Γ|, 8)`.
    #[serde(default)]
    pub probes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_nodes() -> usize {
    64
}

impl ContourSpec {
    pub fn ellipse(center: Complex64, a: f64, b: f64) -> Self {
        Self {
            center,
            semi_axes: [a, b],
            nodes: default_nodes(),
            probes: None,
            seed: 0,
        }
    }

    /// The default search region for nonreal eigenvalues in the upper half
    /// plane: `|Re λ| ≤ 48`, `4 ≤ Im λ ≤ 52`. The lower edge keeps the
    /// quadrature away from the real eigenvalues accumulating on the axis.
    pub fn upper_default() -> Self {
        Self::ellipse(Complex64::new(0.0, 28.0), 48.0, 24.0)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Reflection in the real axis.
    pub fn mirrored(&self) -> Self {
        Self {
            center: self.center.conj(),
            ..self.clone()
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let d = z - self.center;
        (d.re / self.semi_axes[0]).powi(2) + (d.im / self.semi_axes[1]).powi(2) < 1.0
    }

    /// Whether the ellipse stays off the real axis.
    pub fn avoids_real_axis(&self) -> bool {
        self.center.im.abs() - self.semi_axes[1] > DEFAULT_TOL_IM
    }

    fn point(&self, theta: f64) -> (Complex64, Complex64) {
        let [a, b] = self.semi_axes;
        let z = self.center + Complex64::new(a * theta.cos(), b * theta.sin());
        let dz = Complex64::new(-a * theta.sin(), b * theta.cos());
        (z, dz)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NepResult {
    pub eigenvalues: Vec<Complex64>,
    pub kernels: Vec<Vec<Complex64>>,
    /// `‖M(λ)φ‖ / M_scale(λ)` with `‖φ‖ = 1`.
    pub newton_residuals: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub sigma_min: Vec<f64>,
    /// Winding count `(1/2πi)∮ tr(M⁻¹M′)`, when the contour avoids the axis.
    pub argument_count: Option<f64>,
    pub quadrature_nodes: usize,
    pub moment_singular_values: Vec<f64>,
}

/// Magnitude of the terms summed into `M(λ)`: `h(‖K_Γ,:‖_∞ + |λ| max|w|)`.
/// `M` vanishes on kernel vectors, so this (not `‖M(λ)‖`) sets the scale.
pub fn m_scale(op: &DiscreteOperator, lambda: Complex64) -> f64 {
    let h = op.grid.h[0];
    let rows = op
        .gamma
        .iter()
        .map(|&g| op.k.row(g).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    h * (rows + lambda.norm() * op.w_max_abs())
}

struct NodeSample {
    weight: Complex64,
    z: Complex64,
    x: CMat,
    trace: Complex64,
}

/// All `λ` inside the contour with `ker M(λ) ≠ {0}`.
pub fn nonreal_eigs(op: &DiscreteOperator, contour: &ContourSpec) -> Result<NepResult> {
    let ng = op.gamma.len();
    if ng == 0 {
        return Err(Error::Config("empty interface".into()));
    }
    let p = contour.probes.unwrap_or(8).min(ng).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(contour.seed);
    let v = Mat::from_fn(ng, p, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let rho = contour.semi_axes[0].max(contour.semi_axes[1]);
    let mut q = contour.nodes.max(8);
    let mut last_err = String::new();
    for _attempt in 0..3 {
        match beyn_pass(op, contour, &v, q, rho) {
            Ok(res) => return Ok(res),
            Err(Error::ContourNoConvergence(msg)) => {
                log::info!("contour pass with q = {q} failed: {msg}; doubling q");
                last_err = msg;
                q *= 2;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::ContourNoConvergence(format!(
        "{last_err} (after q = {})",
        q / 2
    )))
}

fn beyn_pass(op: &DiscreteOperator, contour: &ContourSpec, v: &CMat, q: usize, rho: f64) -> Result<NepResult> {
    let ng = op.gamma.len();
    let p = v.ncols();
    let samples: Vec<NodeSample> = (0..q)
        .into_par_iter()
        .map(|k| -> Result<NodeSample> {
            let theta = 2.0 * PI * k as f64 / q as f64;
            let (lam, dlam) = contour.point(theta);
            let d = dtn_with_derivative(op, lam)?;
            let lu = d.m.partial_piv_lu();
            use faer::linalg::solvers::Solve;
            let x = lu.solve(v);
            let mi_dm = lu.solve(d.derivative.as_ref().expect("derivative"));
            let trace = (0..ng).map(|i| mi_dm[(i, i)]).sum();
            Ok(NodeSample {
                // (1/2πi) ∮ f dλ ≈ Σ f(λ_k) λ'(θ_k) / (i q)
                weight: dlam / Complex64::new(0.0, q as f64),
                z: (lam - contour.center) / rho,
                x,
                trace,
            })
        })
        .collect::<Result<_>>()?;

    let argument_count = contour
        .avoids_real_axis()
        .then(|| samples.iter().map(|s| s.weight * s.trace).sum::<Complex64>());
    if let Some(c) = argument_count {
        if (c.re - c.re.round()).abs() > 0.05 || c.im.abs() > 0.05 {
            return Err(Error::ContourNoConvergence(format!(
                "winding count {c} is not an integer"
            )));
        }
    }
    let expected = argument_count.map(|c| c.re.round().max(0.0) as usize);
    if expected == Some(0) {
        return Ok(NepResult {
            eigenvalues: Vec::new(),
            kernels: Vec::new(),
            newton_residuals: Vec::new(),
            multiplicities: Vec::new(),
            sigma_min: Vec::new(),
            argument_count: argument_count.map(|c| c.re),
            quadrature_nodes: q,
            moment_singular_values: Vec::new(),
        });
    }
    // block Hankel sizes: s·p columns must exceed the eigenvalue count
    let target = expected.unwrap_or(p);
    let s = (target / p + 1).max(1);
    let n_moments = 2 * s;
    let mut moments: Vec<CMat> = vec![Mat::zeros(ng, p); n_moments];
    for smp in &samples {
        let mut zk = smp.weight;
        for mom in moments.iter_mut() {
            for i in 0..ng {
                for j in 0..p {
                    mom[(i, j)] += zk * smp.x[(i, j)];
                }
            }
            zk *= smp.z;
        }
    }
    let h0 = Mat::from_fn(s * ng, s * p, |i, j| moments[i / ng + j / p][(i % ng, j % p)]);
    let h1 = Mat::from_fn(s * ng, s * p, |i, j| moments[i / ng + j / p + 1][(i % ng, j % p)]);
    let (u, sv, w) = dense::svd_c(&h0)?;
    let s1 = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&x| x > 1e-8 * s1).count();
    if let Some(e) = expected {
        if rank != e {
            return Err(Error::ContourNoConvergence(format!(
                "moment rank {rank} disagrees with winding count {e}"
            )));
        }
    }
    if rank == s * p && expected.is_none() {
        return Err(Error::ContourNoConvergence("moment matrix has full rank; add probes".into()));
    }
    if rank == 0 {
        return Ok(NepResult {
            eigenvalues: Vec::new(),
            kernels: Vec::new(),
            newton_residuals: Vec::new(),
            multiplicities: Vec::new(),
            sigma_min: Vec::new(),
            argument_count: argument_count.map(|c| c.re),
            quadrature_nodes: q,
            moment_singular_values: sv,
        });
    }
    // B = U_rᴴ H1 V_r Σ_r⁻¹
    let ur = Mat::from_fn(s * ng, rank, |i, j| u[(i, j)]);
    let vr = Mat::from_fn(s * p, rank, |i, j| w[(i, j)]);
    let tmp = ur.adjoint() * &h1 * &vr;
    let b = Mat::from_fn(rank, rank, |i, j| tmp[(i, j)] / sv[j]);
    let (zs, y) = dense::eig_complex(&b)?;

    // (λ, φ, residual, σ_min, multiplicity)
    let mut found: Vec<(Complex64, Vec<Complex64>, f64, f64, usize)> = Vec::new();
    for (idx, z) in zs.iter().enumerate() {
        let lam0 = contour.center + *z * rho;
        let phi0: Vec<Complex64> = (0..ng)
            .map(|i| (0..rank).map(|k| ur[(i, k)] * y[(k, idx)]).sum())
            .collect();
        let (lam, phi, res) = match newton_refine(op, lam0, &phi0) {
            Ok(r) => r,
            // a semisimple multiple eigenvalue makes the bordered Jacobian singular
            Err(Error::ContourNoConvergence(_)) => singular_vector_refine(op, lam0)?,
            Err(e) => return Err(e),
        };
        if !contour.contains(lam) {
            continue;
        }
        if let Some(f) = found.iter_mut().find(|f| (f.0 - lam).norm() <= 1e-7 * (1.0 + lam.norm())) {
            f.4 += 1;
            continue;
        }
        let sig = dtn(op, lam)?.sigma_min;
        found.push((lam, phi, res, sig, 1));
    }
    if let Some(e) = expected {
        let total: usize = found.iter().map(|f| f.4).sum();
        if total != e {
            return Err(Error::ContourNoConvergence(format!(
                "refined {total} eigenvalues (with multiplicity), winding count {e}"
            )));
        }
    }
    found.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    Ok(NepResult {
        multiplicities: found.iter().map(|f| f.4).collect(),
        eigenvalues: found.iter().map(|f| f.0).collect(),
        kernels: found.iter().map(|f| f.1.clone()).collect(),
        newton_residuals: found.iter().map(|f| f.2).collect(),
        sigma_min: found.iter().map(|f| f.3).collect(),
        argument_count: argument_count.map(|c| c.re),
        quadrature_nodes: q,
        moment_singular_values: sv,
    })
}

/// Newton on `λ` alone using the extreme singular vectors of `M(λ)`:
/// `λ ← λ − uᴴM(λ)v / uᴴM′(λ)v`. Unlike the bordered system this stays
/// well posed at semisimple multiple eigenvalues.
pub fn singular_vector_refine(op: &DiscreteOperator, lambda0: Complex64) -> Result<(Complex64, Vec<Complex64>, f64)> {
    let ng = op.gamma.len();
    let mut lam = lambda0;
    let mut best: Option<(Complex64, Vec<Complex64>, f64)> = None;
    for _ in 0..40 {
        let d = dtn_with_derivative(op, lam)?;
        let (u, sv, v) = dense::svd_c(&d.m)?;
        let k = ng - 1;
        let phi: Vec<Complex64> = (0..ng).map(|i| v[(i, k)]).collect();
        let res = sv[k] / m_scale(op, lam);
        if best.as_ref().is_none_or(|b| res < b.2) {
            best = Some((lam, phi.clone(), res));
        }
        let dm = d.derivative.as_ref().expect("derivative");
        let num: Complex64 = (0..ng).map(|i| u[(i, k)].conj() * (0..ng).map(|j| d.m[(i, j)] * phi[j]).sum::<Complex64>()).sum();
        let den: Complex64 = (0..ng).map(|i| u[(i, k)].conj() * (0..ng).map(|j| dm[(i, j)] * phi[j]).sum::<Complex64>()).sum();
        let dl = num / den;
        if !dl.re.is_finite() || !dl.im.is_finite() {
            break;
        }
        lam -= dl;
        if dl.norm() <= 1e-14 * (1.0 + lam.norm()) && res <= 1e-10 {
            break;
        }
    }
    match best {
        Some(b) if b.2 <= 1e-10 => Ok(b),
        Some(b) => Err(Error::ContourNoConvergence(format!(
            "singular-vector Newton stalled at λ = {} with residual {:e}",
            b.0, b.2
        ))),
        None => Err(Error::ContourNoConvergence("Newton failed".into())),
    }
}

/// Newton's method on the bordered system
/// `[M(λ) M′(λ)φ; vᴴ 0] [δφ; δλ] = −[M(λ)φ; vᴴφ − 1]`.
/// Returns `(λ, φ/‖φ‖, ‖M(λ)φ‖/M_scale)`.
pub fn newton_refine(op: &DiscreteOperator, lambda0: Complex64, phi0: &[Complex64]) -> Result<(Complex64, Vec<Complex64>, f64)> {
    let ng = op.gamma.len();
    let n0 = dense::vec_norm(phi0);
    if n0 == 0.0 {
        return Err(Error::ContourNoConvergence("zero kernel guess".into()));
    }
    let vnorm: Vec<Complex64> = phi0.iter().map(|x| x / n0).collect();
    let mut phi = vnorm.clone();
    let mut lam = lambda0;
    let mut best: Option<(Complex64, Vec<Complex64>, f64)> = None;
    for _ in 0..40 {
        let d = dtn_with_derivative(op, lam)?;
        let dm = d.derivative.as_ref().expect("derivative");
        let mphi: Vec<Complex64> = (0..ng).map(|i| (0..ng).map(|j| d.m[(i, j)] * phi[j]).sum()).collect();
        let pn = dense::vec_norm(&phi);
        let res = dense::vec_norm(&mphi) / pn / m_scale(op, lam);
        if best.as_ref().is_none_or(|b| res < b.2) {
            best = Some((lam, phi.iter().map(|x| x / pn).collect(), res));
        }
        let dphi: Vec<Complex64> = (0..ng).map(|i| (0..ng).map(|j| dm[(i, j)] * phi[j]).sum()).collect();
        let jac = Mat::from_fn(ng + 1, ng + 1, |i, j| match (i < ng, j < ng) {
            (true, true) => d.m[(i, j)],
            (true, false) => dphi[i],
            (false, true) => vnorm[j].conj(),
            (false, false) => c0(),
        });
        let vphi: Complex64 = vnorm.iter().zip(&phi).map(|(a, b)| a.conj() * b).sum();
        let rhs = Mat::from_fn(ng + 1, 1, |i, _| if i < ng { -mphi[i] } else { -(vphi - 1.0) });
        let step = dense::solve_c(&jac, &rhs);
        let dl = step[(ng, 0)];
        if !dl.re.is_finite() || !dl.im.is_finite() {
            break;
        }
        for i in 0..ng {
            phi[i] += step[(i, 0)];
        }
        lam += dl;
        if dl.norm() <= 1e-14 * (1.0 + lam.norm()) && res <= 1e-10 {
            break;
        }
    }
    match best {
        Some(b) if b.2 <= 1e-10 => Ok(b),
        Some(b) => Err(Error::ContourNoConvergence(format!(
            "Newton stalled at λ = {} with residual {:e}",
            b.0, b.2
        ))),
        None => Err(Error::ContourNoConvergence("Newton failed".into())),
    }
}

/// `σ_min(M(λ))` on a rectangular grid of sample points (`NaN` where the
/// shift is refused).
pub fn sigma_min_samples(op: &DiscreteOperator, re: [f64; 2], im: [f64; 2], nre: usize, nim: usize) -> Vec<[f64; 3]> {
    let pts: Vec<(f64, f64)> = (0..nim)
        .flat_map(|j| {
            (0..nre).map(move |i| {
                let x = re[0] + (re[1] - re[0]) * i as f64 / (nre.max(2) - 1) as f64;
                let y = im[0] + (im[1] - im[0]) * j as f64 / (nim.max(2) - 1) as f64;
                (x, y)
            })
        })
        .collect();
    pts.par_iter()
        .map(|&(x, y)| {
            let s = dtn(op, Complex64::new(x, y)).map(|d| d.sigma_min).unwrap_or(f64::NAN);
            [x, y, s]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::assemble;
    use crate::problem::builtin_problem;
    use std::collections::BTreeMap;

    fn p(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let op = assemble(&builtin_problem("P1", &p(&[("h", 0.05)])).unwrap()).unwrap();
        let sol = solve_dirichlet(&op, Side::Plus, c(0.0, 2.0), &[c0()]).unwrap();
        assert!(sol.interior.iter().all(|v| v.norm() == 0.0));
        assert!(gamma_apply(&op, c(0.0, 2.0), &[c0()]).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn dirichlet_eigenvalue_shift_is_refused() {
        let op = assemble(&builtin_problem("P1", &p(&[("h", 0.05)])).unwrap()).unwrap();
        let sub = crate::discretization::subdomain_operators(&op);
        let ev = dense::sym_eigenvalues(&sub.a_plus.to_dense()).unwrap();
        assert!(matches!(
            solve_dirichlet(&op, Side::Plus, c(ev[0], 0.0), &[c(1.0, 0.0)]),
            Err(Error::NearSingularShift { .. })
        ));
    }

    #[test]
    fn derivative_collapses_without_interior_weight() {
        let mut op = assemble(&builtin_problem("P2", &p(&[("h", 0.05)])).unwrap()).unwrap();
        for side in [&op.i_plus.clone(), &op.i_minus.clone()] {
            for &i in side.iter() {
                op.w[i] = 0.0;
            }
        }
        // W_II = 0 makes P constant in λ
        let d = dtn_derivative(&op, c(1.0, 1.0)).unwrap();
        let h = op.grid.h[0];
        let wg = op.w_plus_gamma[0] + op.w_minus_gamma[0];
        assert!((d[(0, 0)] + wg * h).norm() < 1e-14);
    }

    #[test]
    fn argument_count_of_trivial_region_is_zero() {
        let op = assemble(&builtin_problem("P1", &p(&[("h", 0.02)])).unwrap()).unwrap();
        let res = nonreal_eigs(&op, &ContourSpec::ellipse(c(5.0, 2.0), 1.0, 1.0)).unwrap();
        assert!(res.eigenvalues.is_empty());
        assert_eq!(res.argument_count.map(|x| x.round()), Some(0.0));
    }
}
