//! Krein-space diagnostics: spectral projections of the definitizing shift
//! `T_η = W⁻¹(K − ηI)`, the induced Hilbert norm `‖·‖_∼`, the perturbation
//! blocks of `V = ηW⁻¹`, the enclosure radius for nonreal eigenvalues and a
//! resolvent lower bound.
//!
//! Everything acts on the condensed pencil `(K̃, W_r)` where `W_r` is
//! invertible.
//!
//! Two unitarily equivalent frames are used. The *Gram frame* conjugates an
//! operator by `G^{1/2}`, with `G = W(E₊ − E₋)`. The *eigen frame* maps `x ↦
//! YᵀWx`, `Y = X|Λ|^{1/2}`, where `T_η = XΛX⁻¹`; there `T_η` is diagonal and
//! `E±` are coordinate projections. Diagnostics use the Gram frame, and the
//! eigen frame serves as an independent check.

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::{CondensedPencil, DiscreteOperator};
use crate::error::{Error, Result};
use crate::linalg::{dense, CMat};
use crate::spectral::extreme_eigenvalues;

/// Tolerance for the projector identities and the Gram skew part.
pub const PROJECTOR_TOL: f64 = 1e-10;

/// Spectral data of `T_η` on a pencil `(K, W)` with `W` diagonal.
#[derive(Debug, Clone)]
pub struct SpectralProjections {
    pub eta: f64,
    pub k: Mat<f64>,
    pub w: Vec<f64>,
    /// Eigenvalues of `T_η` (ascending), all nonzero.
    pub lambda: Vec<f64>,
    /// Eigenvectors of `T_η`, normalized so that `XᵀWX = Λ⁻¹`.
    pub x: Mat<f64>,
    pub e_plus: Mat<f64>,
    pub e_minus: Mat<f64>,
    pub rank_plus: usize,
    pub rank_minus: usize,
    /// Largest of `‖E±² − E±‖`, `‖E₊E₋‖`, `‖E₊ + E₋ − I‖` (max-entry, relative
    /// to `max(1, ‖E±‖_max)`).
    pub identity_defect: f64,
}

impl SpectralProjections {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// `T = W⁻¹K`.
    pub fn t(&self) -> Mat<f64> {
        let n = self.n();
        Mat::from_fn(n, n, |i, j| self.k[(i, j)] / self.w[i])
    }

    fn positive(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.lambda[i] > 0.0).collect()
    }

    fn negative(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.lambda[i] < 0.0).collect()
    }

    /// `V = ηW⁻¹` in the eigen frame: `η|Λ|^{1/2} XᵀX sign(Λ)|Λ|^{1/2}`.
    pub fn v_eigenframe(&self) -> Mat<f64> {
        let n = self.n();
        let xtx = self.x.transpose() * &self.x;
        let sq: Vec<f64> = self.lambda.iter().map(|l| l.abs().sqrt()).collect();
        Mat::from_fn(n, n, |i, j| self.eta * sq[i] * xtx[(i, j)] * self.lambda[j].signum() * sq[j])
    }
}

/// `η = λ_min(K̃) − 1`, so that `K̃ − ηI ≥ I`.
pub fn default_shift(cp: &CondensedPencil) -> f64 {
    extreme_eigenvalues(&cp.k).0 - 1.0
}

/// Spectral projections of `T_η` for the condensed pencil of `op`.
pub fn spectral_projections(op: &DiscreteOperator, eta: f64) -> Result<SpectralProjections> {
    let cp = op.condensed()?;
    spectral_projections_pencil(cp.k_dense(), cp.w.clone(), eta)
}

/// Spectral projections of `W⁻¹(K − ηI)` through the symmetric similarity
/// `Lᵀ W⁻¹ L = UΛUᵀ`, `K − ηI = LLᵀ`, which gives `X = L⁻ᵀU`, `X⁻¹ = UᵀLᵀ`.
pub fn spectral_projections_pencil(k: Mat<f64>, w: Vec<f64>, eta: f64) -> Result<SpectralProjections> {
    let n = w.len();
    if w.contains(&0.0) {
        return Err(Error::InvariantViolation("weight is not invertible".into()));
    }
    let shifted = Mat::from_fn(n, n, |i, j| k[(i, j)] - if i == j { eta } else { 0.0 });
    let l = dense::cholesky(&shifted).ok_or(Error::ShiftNotPositive(eta))?;
    let s = Mat::from_fn(n, n, |i, j| (0..n).map(|m| l[(m, i)] * l[(m, j)] / w[m]).sum::<f64>());
    let s = Mat::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
    let (lambda, u) = dense::sym_eig(&s)?;
    if lambda.contains(&0.0) {
        return Err(Error::ShiftNotPositive(eta));
    }
    let lt = l.transpose().to_owned();
    let x = dense::inverse(&lt) * &u;
    let x_inv = u.transpose() * &lt;
    let project = |keep: &dyn Fn(f64) -> bool| {
        let cols: Vec<usize> = (0..n).filter(|&j| keep(lambda[j])).collect();
        let xs = Mat::from_fn(n, cols.len(), |i, c| x[(i, cols[c])]);
        let xi = Mat::from_fn(cols.len(), n, |c, j| x_inv[(cols[c], j)]);
        (xs * xi, cols.len())
    };
    let (e_plus, rank_plus) = project(&|l| l > 0.0);
    let (e_minus, rank_minus) = project(&|l| l < 0.0);
    let identity_defect = projector_defect(&e_plus, &e_minus);
    if identity_defect > PROJECTOR_TOL {
        return Err(Error::InvariantViolation(format!(
            "spectral projector identities fail by {identity_defect:e}"
        )));
    }
    Ok(SpectralProjections {
        eta,
        k,
        w,
        lambda,
        x,
        e_plus,
        e_minus,
        rank_plus,
        rank_minus,
        identity_defect,
    })
}

fn max_entry(a: &Mat<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

fn projector_defect(ep: &Mat<f64>, em: &Mat<f64>) -> f64 {
    let n = ep.nrows();
    let scale = max_entry(ep).max(max_entry(em)).max(1.0);
    let id = dense::identity(n);
    let d1 = max_entry(&(ep * ep - ep));
    let d2 = max_entry(&(em * em - em));
    let d3 = max_entry(&(ep * em));
    let d4 = max_entry(&(ep + em - &id));
    d1.max(d2).max(d3).max(d4) / scale
}

/// The inner product `(x, y)_∼ = yᵀ G x`, `G = W(E₊ − E₋)`.
#[derive(Debug, Clone)]
pub struct SimNorm {
    pub eta: f64,
    pub g: Mat<f64>,
    pub g_half: Mat<f64>,
    pub g_half_inv: Mat<f64>,
    pub c_low: f64,
    pub c_high: f64,
    /// `1/λ_min(G)`: the constant making `‖x‖² ≤ ν‖x‖²_∼` hold.
    pub nu_sim: f64,
    /// `1/‖G‖`: the constant of the reverse comparison `ν‖x‖²_∼ ≤ ‖x‖²`.
    pub nu_reverse: f64,
    pub skew_defect: f64,
}

impl SimNorm {
    pub fn norm(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += x[i] * self.g[(i, j)] * x[j];
            }
        }
        s.max(0.0).sqrt()
    }

    /// `G^{1/2} A G^{−1/2}`: the Euclidean image of `A` under the ∼-isometry.
    pub fn conjugate(&self, a: &Mat<f64>) -> Mat<f64> {
        &self.g_half * a * &self.g_half_inv
    }

    pub fn conjugate_c(&self, a: &CMat) -> CMat {
        dense::to_complex(&self.g_half) * a * dense::to_complex(&self.g_half_inv)
    }

    /// Operator norm induced by `‖·‖_∼`.
    pub fn operator_norm(&self, a: &Mat<f64>) -> Result<f64> {
        dense::spectral_norm(&self.conjugate(a))
    }
}

pub fn sim_gram(proj: &SpectralProjections) -> Result<SimNorm> {
    let n = proj.n();
    let g0 = Mat::from_fn(n, n, |i, j| proj.w[i] * (proj.e_plus[(i, j)] - proj.e_minus[(i, j)]));
    let skew_defect = dense::asymmetry(&g0) / max_entry(&g0).max(1.0);
    if skew_defect > PROJECTOR_TOL {
        return Err(Error::InvariantViolation(format!("Gram skew part {skew_defect:e}")));
    }
    let g = Mat::from_fn(n, n, |i, j| 0.5 * (g0[(i, j)] + g0[(j, i)]));
    let (ev, u) = dense::sym_eig(&g)?;
    let lmin = ev[0];
    let lmax = ev[n - 1];
    if lmin <= 0.0 {
        return Err(Error::IndefiniteGram(lmin));
    }
    let scaled = |p: f64| {
        let d: Vec<f64> = ev.iter().map(|v| v.powf(p)).collect();
        let ud = Mat::from_fn(n, n, |i, j| u[(i, j)] * d[j]);
        ud * u.transpose()
    };
    Ok(SimNorm {
        eta: proj.eta,
        g_half: scaled(0.5),
        g_half_inv: scaled(-0.5),
        g,
        c_low: lmin.sqrt(),
        c_high: lmax.sqrt(),
        nu_sim: 1.0 / lmin,
        nu_reverse: 1.0 / lmax,
        skew_defect,
    })
}

/// ∼-norms of the blocks `V_ij = E_i V E_j` of `V = ηW⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockNorms {
    pub v11: f64,
    pub v12: f64,
    pub v21: f64,
    pub v22: f64,
}

pub fn perturbation_blocks(proj: &SpectralProjections, sim: &SimNorm) -> Result<BlockNorms> {
    let n = proj.n();
    let v = Mat::from_fn(n, n, |i, j| if i == j { proj.eta / proj.w[i] } else { 0.0 });
    let block = |a: &Mat<f64>, b: &Mat<f64>| sim.operator_norm(&(a * &v * b));
    Ok(BlockNorms {
        v11: block(&proj.e_plus, &proj.e_plus)?,
        v12: block(&proj.e_plus, &proj.e_minus)?,
        v21: block(&proj.e_minus, &proj.e_plus)?,
        v22: block(&proj.e_minus, &proj.e_minus)?,
    })
}

/// The same norms read off the eigen frame, where the blocks are plain
/// submatrices.
pub fn perturbation_blocks_eigenframe(proj: &SpectralProjections) -> Result<BlockNorms> {
    let v = proj.v_eigenframe();
    let (p, m) = (proj.positive(), proj.negative());
    let sub = |r: &[usize], c: &[usize]| -> Result<f64> {
        if r.is_empty() || c.is_empty() {
            return Ok(0.0);
        }
        dense::spectral_norm(&Mat::from_fn(r.len(), c.len(), |i, j| v[(r[i], c[j])]))
    };
    Ok(BlockNorms {
        v11: sub(&p, &p)?,
        v12: sub(&p, &m)?,
        v21: sub(&m, &p)?,
        v22: sub(&m, &m)?,
    })
}

/// `δ` and `τ` for one half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub delta: f64,
    pub tau: f64,
    /// The off-diagonal block vanished and the simplified rule was used.
    pub fallback: bool,
}

/// Margin added to the lower bound for `δ`, which is a strict inequality.
pub const DELTA_MARGIN: f64 = 1.0;

/// `δ + a > max((2 + a)/b, 2 + a/b)` with `a = ‖V_diag‖`, `b = ‖V_off‖`, and
/// `τ = (δ + a)b`. When `b = 0`: `δ > 2`, `τ = δ + a`.
pub fn threshold(a: f64, b: f64) -> Threshold {
    if b == 0.0 {
        let delta = 2.0 + DELTA_MARGIN;
        return Threshold {
            delta,
            tau: delta + a,
            fallback: true,
        };
    }
    let rhs = ((2.0 + a) / b).max(2.0 + a / b);
    let mut delta = rhs - a + DELTA_MARGIN;
    if delta <= 0.0 {
        delta = DELTA_MARGIN;
    }
    Threshold {
        delta,
        tau: (delta + a) * b,
        fallback: false,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnclosureReport {
    pub eta: f64,
    pub blocks: BlockNorms,
    pub plus: Threshold,
    pub minus: Threshold,
    pub rho_star: f64,
    pub nu_sim: f64,
    pub nu_reverse: f64,
    pub c_low: f64,
    pub c_high: f64,
    /// Nonreal eigenvalues checked against `ρ*`, with `|λ|`.
    pub nonreal: Vec<(Complex64, f64)>,
    pub contained: bool,
}

pub fn enclosure_radius(blocks: BlockNorms, sim: &SimNorm) -> EnclosureReport {
    let plus = threshold(blocks.v11, blocks.v12);
    let minus = threshold(blocks.v22, blocks.v21);
    EnclosureReport {
        eta: sim.eta,
        blocks,
        plus,
        minus,
        rho_star: plus.tau.max(minus.tau),
        nu_sim: sim.nu_sim,
        nu_reverse: sim.nu_reverse,
        c_low: sim.c_low,
        c_high: sim.c_high,
        nonreal: Vec::new(),
        contained: true,
    }
}

impl EnclosureReport {
    /// Records `|λ|` for each nonreal eigenvalue and whether all are inside.
    pub fn check(&mut self, eigenvalues: &[Complex64]) {
        self.nonreal = eigenvalues.iter().map(|&z| (z, z.norm())).collect();
        self.contained = self.nonreal.iter().all(|&(_, r)| r <= self.rho_star);
    }
}

/// Which pair of blocks an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfPlane {
    /// `Re μ ≤ 0`: `(T_η,₊ + V₁₁ − μ)⁻¹` and its product with `V₁₂`.
    Left,
    /// `Re μ ≥ 0`: `(T_η,₋ + V₂₂ − μ)⁻¹` and its product with `V₂₁`.
    Right,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockEstimate {
    pub mu: Complex64,
    pub half_plane: HalfPlane,
    pub inverse_norm: f64,
    pub coupled_norm: f64,
    pub holds: bool,
}

/// Forms the diagonal-block resolvents explicitly (eigen frame) and checks
/// both norms are below ½.
pub fn block_estimates(proj: &SpectralProjections, mus: &[Complex64]) -> Result<Vec<BlockEstimate>> {
    let v = proj.v_eigenframe();
    let (p, m) = (proj.positive(), proj.negative());
    mus.iter()
        .map(|&mu| {
            if mu.im == 0.0 {
                return Err(Error::Config(format!("sample point {mu} is real")));
            }
            let (half_plane, own, other) = if mu.re <= 0.0 {
                (HalfPlane::Left, &p, &m)
            } else {
                (HalfPlane::Right, &m, &p)
            };
            if own.is_empty() {
                return Ok(BlockEstimate {
                    mu,
                    half_plane,
                    inverse_norm: 0.0,
                    coupled_norm: 0.0,
                    holds: true,
                });
            }
            let a = Mat::from_fn(own.len(), own.len(), |i, j| {
                let d = if i == j { Complex64::new(proj.lambda[own[i]], 0.0) - mu } else { Complex64::new(0.0, 0.0) };
                d + v[(own[i], own[j])]
            });
            let inv = dense::inverse_c(&a);
            let inverse_norm = dense::spectral_norm_c(&inv)?;
            let coupled_norm = if other.is_empty() {
                0.0
            } else {
                let off = Mat::from_fn(own.len(), other.len(), |i, j| Complex64::new(v[(own[i], other[j])], 0.0));
                dense::spectral_norm_c(&(&inv * off))?
            };
            Ok(BlockEstimate {
                mu,
                half_plane,
                inverse_norm,
                coupled_norm,
                holds: inverse_norm < 0.5 && coupled_norm < 0.5,
            })
        })
        .collect()
}

/// Points `|μ| = radius` spread over the open half-plane, avoiding the axes.
pub fn half_plane_samples(radius: f64, half_plane: HalfPlane, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            // cell midpoints shifted by a tenth of a cell, so an odd count
            // never lands on the real axis
            let t = (k as f64 + 0.6) / count as f64;
            // angles in (π/2, 3π/2) for the left half-plane, (−π/2, π/2) for the right
            let theta = match half_plane {
                HalfPlane::Left => std::f64::consts::FRAC_PI_2 + t * std::f64::consts::PI,
                HalfPlane::Right => -std::f64::consts::FRAC_PI_2 + t * std::f64::consts::PI,
            };
            Complex64::from_polar(radius, theta)
        })
        .collect()
}

/// Nonreal points on the circle `|μ| = radius`, none on the real axis.
pub fn circle_samples(radius: f64, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64))
        .collect()
}

/// `√((1 + ν/|Im μ|)² + 1) − (1 + ν/|Im μ|)`.
pub fn resolvent_bound_rhs(mu: Complex64, nu: f64) -> f64 {
    let a = 1.0 + nu / mu.im.abs();
    // rationalized to avoid cancellation for large a
    1.0 / ((a * a + 1.0).sqrt() + a)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventMargin {
    pub mu: Complex64,
    /// Smallest ∼-singular value of `T − μ`.
    pub sigma_min: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

/// For each nonreal `μ`: `σ_min(G^{1/2}(T − μ)G^{−1/2})` against the bound.
/// A violation is a finding in the returned list, not an error.
pub fn resolvent_bound_check(proj: &SpectralProjections, sim: &SimNorm, mus: &[Complex64]) -> Result<Vec<ResolventMargin>> {
    let n = proj.n();
    let t = dense::to_complex(&sim.conjugate(&proj.t()));
    mus.iter()
        .map(|&mu| {
            if mu.im == 0.0 {
                return Err(Error::Config(format!("sample point {mu} is real")));
            }
            let a = Mat::from_fn(n, n, |i, j| if i == j { t[(i, j)] - mu } else { t[(i, j)] });
            let sigma_min = dense::singular_values_c(&a)?.last().copied().unwrap_or(0.0);
            let rhs = resolvent_bound_rhs(mu, sim.nu_sim);
            Ok(ResolventMargin {
                mu,
                sigma_min,
                rhs,
                margin: sigma_min - rhs,
                holds: sigma_min >= rhs,
            })
        })
        .collect()
}

/// Projections, Gram norm and enclosure for one operator at the default shift.
#[derive(Debug, Clone)]
pub struct KreinAnalysis {
    pub projections: SpectralProjections,
    pub sim: SimNorm,
    pub report: EnclosureReport,
}

pub fn analyze(op: &DiscreteOperator) -> Result<KreinAnalysis> {
    let cp = op.condensed()?;
    let eta = default_shift(&cp);
    let projections = spectral_projections_pencil(cp.k_dense(), cp.w.clone(), eta)?;
    let sim = sim_gram(&projections)?;
    let blocks = perturbation_blocks(&projections, &sim)?;
    let report = enclosure_radius(blocks, &sim);
    Ok(KreinAnalysis {
        projections,
        sim,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => -1.0,
            _ => 0.0,
        })
    }

    #[test]
    fn unit_weight_is_trivial() {
        let proj = spectral_projections_pencil(laplacian(6), vec![1.0; 6], 0.0).unwrap();
        assert_eq!((proj.rank_plus, proj.rank_minus), (6, 0));
        assert!(max_entry(&(&proj.e_plus - dense::identity(6))) < 1e-12);
        let sim = sim_gram(&proj).unwrap();
        assert!((sim.nu_sim - 1.0).abs() < 1e-12);
        assert!(max_entry(&(&sim.g - dense::identity(6))) < 1e-12);
    }

    #[test]
    fn zero_shift_has_no_perturbation() {
        let w = vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let proj = spectral_projections_pencil(laplacian(6), w, 0.0).unwrap();
        let sim = sim_gram(&proj).unwrap();
        let b = perturbation_blocks(&proj, &sim).unwrap();
        assert_eq!(b, BlockNorms { v11: 0.0, v12: 0.0, v21: 0.0, v22: 0.0 });
        let rep = enclosure_radius(b, &sim);
        assert!(rep.plus.fallback && rep.minus.fallback);
        assert!(rep.rho_star > 2.0 && rep.rho_star.is_finite());
    }

    #[test]
    fn unit_weight_blocks_decouple() {
        let proj = spectral_projections_pencil(laplacian(5), vec![1.0; 5], -0.5).unwrap();
        let sim = sim_gram(&proj).unwrap();
        let b = perturbation_blocks(&proj, &sim).unwrap();
        assert!(b.v12 < 1e-14 && b.v21 < 1e-14);
        assert!((b.v11 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_satisfies_strict_condition() {
        for (a, b) in [(0.3, 0.1), (5.0, 2.0), (0.0, 1e-3), (10.0, 50.0)] {
            let t = threshold(a, b);
            let rhs = ((2.0 + a) / b).max(2.0 + a / b);
            assert!(t.delta > 0.0 && t.delta + a > rhs);
            assert!(t.tau - a > 2.0);
            assert!(b / (t.tau - a) < 0.5);
        }
    }

    #[test]
    fn samplers_return_requested_nonreal_points() {
        for count in 1..8 {
            let left = half_plane_samples(3.0, HalfPlane::Left, count);
            let right = half_plane_samples(3.0, HalfPlane::Right, count);
            assert_eq!(left.len(), count);
            assert_eq!(right.len(), count);
            assert!(left.iter().all(|z| z.re < 0.0 && z.im != 0.0 && (z.norm() - 3.0).abs() < 1e-12));
            assert!(right.iter().all(|z| z.re > 0.0 && z.im != 0.0));
        }
        assert!(circle_samples(2.0, 10).iter().all(|z| z.im.abs() > 0.1));
    }

    #[test]
    fn rhs_asymptotics() {
        let mu = Complex64::new(0.0, 1e6);
        let r = resolvent_bound_rhs(mu, 3.0);
        assert!((r - 1.0 / (1.0 + 2f64.sqrt())).abs() < 1e-5);
        let direct = ((1.0 + 3.0 / 1e6f64).powi(2) + 1.0).sqrt() - (1.0 + 3.0 / 1e6);
        assert!((r - direct).abs() < 1e-14);
    }

    #[test]
    fn shifted_identity_resolvent_bound() {
        let n = 8;
        let k = Mat::from_fn(n, n, |i, j| laplacian(n)[(i, j)] + if i == j { 1.0 } else { 0.0 });
        let proj = spectral_projections_pencil(k, vec![1.0; n], 0.0).unwrap();
        let sim = sim_gram(&proj).unwrap();
        let r = resolvent_bound_check(&proj, &sim, &[Complex64::new(0.0, 1.0)]).unwrap();
        assert!(r[0].holds);
        assert!(resolvent_bound_check(&proj, &sim, &[Complex64::new(2.0, 0.0)]).is_err());
    }

    #[test]
    fn indefinite_shift_is_refused() {
        assert!(matches!(
            spectral_projections_pencil(laplacian(4), vec![1.0; 4], 10.0),
            Err(Error::ShiftNotPositive(_))
        ));
    }
}
