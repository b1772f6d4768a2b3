//! Generalized eigensolves of the pencil `(K, W)`, spectrum classification,
//! inertia counts, and the positivity and truncation diagnostics.

use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{assemble, random_unit_c, subdomain_operators, CondensedPencil, DiscreteOperator};
use crate::error::{Error, Result};
use crate::linalg::{dense, CMat, CsrMatrix};
use crate::problem::ProblemSpec;

/// Default reality threshold: `|Im λ| ≤ tol_im (1 + |λ|)` counts as real.
pub const DEFAULT_TOL_IM: f64 = 1e-8;
/// Conjugate partners must agree to this relative accuracy.
pub const PAIR_TOL: f64 = 1e-8;
/// Above this size eigenvectors are not formed densely; residuals then come
/// from inverse iteration on the banded pencil (narrow bands only).
pub const DENSE_EIGVEC_LIMIT: usize = 2500;
/// Largest condensed size handled by dense factorizations.
pub const DENSE_LIMIT: usize = 4500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EigClass {
    Real,
    Nonreal,
}

impl EigClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EigClass::Real => "real",
            EigClass::Nonreal => "nonreal",
        }
    }
}

/// Eigenvalues of `T_h = W⁻¹K`, sorted by real then imaginary part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    /// `‖K x − λ W x‖ / ‖x‖` on the full pencil.
    pub residuals: Vec<f64>,
    pub class: Vec<EigClass>,
    /// Shared id of the two members of a conjugate pair.
    pub pair_id: Vec<Option<usize>>,
    /// Full-length eigenvectors (columns), when formed.
    pub eigenvectors: Option<CMat>,
    pub norm_k: f64,
    pub tol_im: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn nonreal(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .zip(&self.class)
            .filter(|(_, c)| **c == EigClass::Nonreal)
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn nonreal_pairs(&self) -> usize {
        self.class.iter().filter(|c| **c == EigClass::Nonreal).count() / 2
    }

    /// Largest residual relative to `‖K‖`.
    pub fn max_relative_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r / self.norm_k))
    }

    /// `max |λ' − conj(λ)| / (1 + |λ|)` over the pairs.
    pub fn pairing_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, pi) in self.pair_id.iter().enumerate() {
            let Some(p) = pi else { continue };
            for (j, pj) in self.pair_id.iter().enumerate() {
                if i != j && *pj == Some(*p) {
                    let l = self.eigenvalues[i];
                    worst = worst.max((self.eigenvalues[j] - l.conj()).norm() / (1.0 + l.norm()));
                }
            }
        }
        worst
    }

    /// `min |λ|` over real eigenvalues.
    pub fn distance_of_zero(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min)
    }
}

/// All eigenpairs of the (condensed) pencil, classified with the default
/// threshold.
pub fn solve_generalized(op: &DiscreteOperator) -> Result<Spectrum> {
    let cp = op.condensed()?;
    solve_condensed(op, &cp)
}

pub fn solve_condensed(op: &DiscreteOperator, cp: &CondensedPencil) -> Result<Spectrum> {
    let n = cp.n();
    if n > DENSE_LIMIT {
        return Err(Error::Config(format!(
            "dense eigensolve limited to {DENSE_LIMIT} unknowns, problem has {n}"
        )));
    }
    let t = cp.t_dense();
    let narrow = op.k.bandwidth() <= 8;
    let (vals, residuals, vecs) = if n > DENSE_EIGVEC_LIMIT && narrow {
        let vals = dense::eigenvalues(&t)?;
        let res = inverse_iteration_residuals(op, &vals)?;
        (vals, res, None)
    } else {
        let (vals, v) = dense::eig(&t)?;
        let mut full = Mat::<Complex64>::zeros(op.n(), n);
        let mut res = Vec::with_capacity(n);
        for j in 0..n {
            let f = cp.lift(&dense::col_to_vec(&v, j));
            res.push(pencil_residual(op, &f, vals[j]));
            for (i, fi) in f.into_iter().enumerate() {
                full[(i, j)] = fi;
            }
        }
        repair_eigenvectors(op, &vals, &mut full, &mut res)?;
        (vals, res, Some(full))
    };
    if vals.iter().any(|l| !l.re.is_finite() || !l.im.is_finite()) {
        return Err(Error::EigSolveFailure("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        vals[a]
            .re
            .total_cmp(&vals[b].re)
            .then(vals[a].im.total_cmp(&vals[b].im))
    });
    let eigenvalues = order.iter().map(|&i| vals[i]).collect();
    let residuals = order.iter().map(|&i| residuals[i]).collect();
    let eigenvectors = vecs.map(|v| Mat::from_fn(v.nrows(), n, |i, j| v[(i, order[j])]));
    let spec = Spectrum {
        eigenvalues,
        residuals,
        class: vec![EigClass::Real; n],
        pair_id: vec![None; n],
        eigenvectors,
        norm_k: op.norm_k,
        tol_im: DEFAULT_TOL_IM,
    };
    classify(spec, DEFAULT_TOL_IM)
}

/// `‖K f − λ W f‖ / ‖f‖` on the full pencil.
pub fn pencil_residual(op: &DiscreteOperator, f: &[Complex64], lambda: Complex64) -> f64 {
    let kf = op.k.matvec(f);
    let r: Vec<Complex64> = kf
        .iter()
        .zip(f)
        .zip(&op.w)
        .map(|((k, x), w)| k - lambda * w * x)
        .collect();
    dense::vec_norm(&r) / dense::vec_norm(f)
}

/// Residual (relative to `‖K‖`) above which a dense eigenvector is recomputed.
const REPAIR_TOL: f64 = 1e-10;

/// Recomputes eigenvectors with large residuals by shifted inverse iteration
/// on the banded full pencil.
///
/// The dense solver can return a spoiled vector for one member of an exactly
/// repeated (semisimple) eigenvalue, as produced by symmetric domains. The
/// iterate is kept orthogonal to the vectors already accepted for the same
/// cluster, so repeated eigenvalues get independent eigenvectors.
fn repair_eigenvectors(op: &DiscreteOperator, vals: &[Complex64], full: &mut CMat, res: &mut [f64]) -> Result<()> {
    let tol = REPAIR_TOL * op.norm_k;
    let bad: Vec<usize> = (0..vals.len()).filter(|&j| !(res[j] <= tol)).collect();
    for j in bad {
        let lambda = vals[j];
        let scale = 1.0 + lambda.norm();
        let mut basis: Vec<Vec<Complex64>> = (0..vals.len())
            .filter(|&i| i != j && res[i] <= tol && (vals[i] - lambda).norm() <= 1e-6 * scale)
            .map(|i| (0..full.nrows()).map(|r| full[(r, i)]).collect())
            .collect();
        dense::orthonormalize(&mut basis);
        let sigma = lambda + Complex64::new(1e-11, 1e-11) * scale;
        let Some(lu) = op.k.to_band_shifted(sigma, &op.w).lu() else {
            continue;
        };
        let mut rng = ChaCha8Rng::seed_from_u64(j as u64);
        let mut x = random_unit_c(&mut rng, op.n());
        for _ in 0..3 {
            let rhs: Vec<Complex64> = x.iter().zip(&op.w).map(|(v, w)| v * *w).collect();
            let rhs = if dense::vec_norm(&rhs) > 0.0 { rhs } else { x.clone() };
            x = lu.solve(&rhs);
            for b in &basis {
                let c: Complex64 = b.iter().zip(&x).map(|(bi, xi)| bi.conj() * xi).sum();
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi -= c * bi);
            }
            let nx = dense::vec_norm(&x);
            if !(nx > 0.0) {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nx);
        }
        let r = pencil_residual(op, &x, lambda);
        if r < res[j] {
            res[j] = r;
            for (i, xi) in x.into_iter().enumerate() {
                full[(i, j)] = xi;
            }
        }
    }
    Ok(())
}

/// Residuals of computed eigenvalues via two steps of inverse iteration on
/// the banded full pencil with a slightly perturbed shift.
fn inverse_iteration_residuals(op: &DiscreteOperator, vals: &[Complex64]) -> Result<Vec<f64>> {
    let n = op.n();
    vals.par_iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let sigma = lambda + 1e-11 * lambda.norm().max(1.0);
            let lu = op
                .k
                .to_band_shifted(sigma, &op.w)
                .lu()
                .ok_or(Error::NearSingularShift {
                    lambda: sigma,
                    condition: f64::INFINITY,
                })?;
            let mut rng = ChaCha8Rng::seed_from_u64(idx as u64);
            let mut x = random_unit_c(&mut rng, n);
            for _ in 0..3 {
                let rhs: Vec<Complex64> = x.iter().zip(&op.w).map(|(v, w)| v * *w).collect();
                // W x vanishes on massless nodes; keep a nonzero right-hand side
                let rhs = if dense::vec_norm(&rhs) > 0.0 { rhs } else { x.clone() };
                x = lu.solve(&rhs);
                let nx = dense::vec_norm(&x);
                x.iter_mut().for_each(|v| *v /= nx);
            }
            Ok(pencil_residual(op, &x, lambda))
        })
        .collect()
}

/// Marks eigenvalues real or nonreal and pairs each nonreal eigenvalue with
/// its conjugate.
pub fn classify(mut spec: Spectrum, tol_im: f64) -> Result<Spectrum> {
    let n = spec.len();
    spec.tol_im = tol_im;
    for i in 0..n {
        let l = spec.eigenvalues[i];
        spec.class[i] = if l.im.abs() <= tol_im * (1.0 + l.norm()) {
            EigClass::Real
        } else {
            EigClass::Nonreal
        };
        spec.pair_id[i] = None;
    }
    let upper: Vec<usize> = (0..n)
        .filter(|&i| spec.class[i] == EigClass::Nonreal && spec.eigenvalues[i].im > 0.0)
        .collect();
    let mut lower_free: Vec<usize> = (0..n)
        .filter(|&i| spec.class[i] == EigClass::Nonreal && spec.eigenvalues[i].im < 0.0)
        .collect();
    for (pid, &u) in upper.iter().enumerate() {
        let target = spec.eigenvalues[u].conj();
        let best = lower_free
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, (spec.eigenvalues[j] - target).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((k, d)) if d <= PAIR_TOL * (1.0 + target.norm()) => {
                let j = lower_free.remove(k);
                spec.pair_id[u] = Some(pid);
                spec.pair_id[j] = Some(pid);
            }
            _ => return Err(Error::UnpairedNonreal(spec.eigenvalues[u])),
        }
    }
    if let Some(&j) = lower_free.first() {
        return Err(Error::UnpairedNonreal(spec.eigenvalues[j]));
    }
    Ok(spec)
}

/// Number of negative eigenvalues of a symmetric sparse matrix by `LDLᵀ`
/// inertia; exactly zero pivots are replaced by `1e-14‖A‖` with a warning.
pub fn inertia_negative(a: &CsrMatrix) -> usize {
    let band = a.to_sym_band(0.0, None, None);
    let (neg, zero, _) = band.ldlt_inertia(0.0, 1e-14 * a.norm_inf());
    if zero > 0 {
        log::warn!("{zero} zero pivot(s) in inertia count were perturbed by 1e-14·‖K‖");
    }
    neg
}

/// `n₋(K)`.
pub fn negative_inertia(op: &DiscreteOperator) -> usize {
    inertia_negative(&op.k)
}

/// Sign structure of the indefinite inner product and of `K`.
#[derive(Debug, Clone, Serialize)]
pub struct KreinStructure {
    pub kappa_plus: usize,
    pub kappa_minus: usize,
    /// Massless (condensed) nodes.
    pub kappa_zero: usize,
    pub negative_inertia_k: usize,
    pub negative_inertia_condensed: usize,
}

pub fn krein_structure(op: &DiscreteOperator, cp: &CondensedPencil) -> KreinStructure {
    KreinStructure {
        kappa_plus: cp.w.iter().filter(|&&w| w > 0.0).count(),
        kappa_minus: cp.w.iter().filter(|&&w| w < 0.0).count(),
        kappa_zero: cp.massless.len(),
        negative_inertia_k: negative_inertia(op),
        negative_inertia_condensed: inertia_negative(&cp.k),
    }
}

/// `max |[T x, y] − [x, T y]|` over random unit vectors, with
/// `[u, v] = Σ w_i u_i conj(v_i)`.
pub fn selfadjoint_residual(cp: &CondensedPencil, trials: usize, seed: u64) -> f64 {
    let n = cp.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let krein = |u: &[Complex64], v: &[Complex64]| -> Complex64 {
        u.iter().zip(v).zip(&cp.w).map(|((a, b), w)| a * b.conj() * *w).sum()
    };
    let apply_t = |x: &[Complex64]| -> Vec<Complex64> {
        cp.k.matvec(x).into_iter().zip(&cp.w).map(|(v, w)| v / *w).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = random_unit_c(&mut rng, n);
        let y = random_unit_c(&mut rng, n);
        let d = krein(&apply_t(&x), &y) - krein(&x, &apply_t(&y));
        worst = worst.max(d.norm());
    }
    worst
}

fn complex_shifted(a: &Mat<f64>, lambda: Complex64, d: &[f64]) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let mut v = Complex64::new(a[(i, j)], 0.0);
        if i == j {
            v -= lambda * d[i];
        }
        v
    })
}

/// Explicit inverse, refusing shifts with 1-norm condition above `1e12`.
pub(crate) fn guarded_inverse(a: &CMat, lambda: Complex64) -> Result<CMat> {
    let inv = dense::inverse_c(a);
    let condition = dense::norm_one_c(a) * dense::norm_one_c(&inv);
    if !condition.is_finite() || condition > 1e12 {
        return Err(Error::NearSingularShift { lambda, condition });
    }
    Ok(inv)
}

/// Relative residual of
/// `(T−λ)⁻¹ − (K−λ)⁻¹W + λ(K−λ)⁻¹(I−W)(T−λ)⁻¹ = 0`.
pub fn resolvent_identity_residual(cp: &CondensedPencil, lambda: Complex64) -> Result<f64> {
    let n = cp.n();
    let k = cp.k_dense();
    let ones = vec![1.0; n];
    let pencil_inv = guarded_inverse(&complex_shifted(&k, lambda, &cp.w), lambda)?;
    let rk = guarded_inverse(&complex_shifted(&k, lambda, &ones), lambda)?;
    let scale_cols = |m: &CMat, d: &[f64]| Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[j]);
    let scale_rows = |m: &CMat, d: &[f64]| Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i]);
    // (T−λ)⁻¹ = (K − λW)⁻¹ W
    let rt = scale_cols(&pencil_inv, &cp.w);
    let one_minus_w: Vec<f64> = cp.w.iter().map(|w| 1.0 - w).collect();
    let rk_w = scale_cols(&rk, &cp.w);
    let tail = &rk * &scale_rows(&rt, &one_minus_w);
    let e = Mat::from_fn(n, n, |i, j| rt[(i, j)] - rk_w[(i, j)] + lambda * tail[(i, j)]);
    Ok(dense::frobenius_c(&e) / dense::frobenius_c(&rt))
}

/// Smallest and largest eigenvalue of a sparse symmetric matrix.
pub fn extreme_eigenvalues(a: &CsrMatrix) -> (f64, f64) {
    let n = a.nrows();
    if n <= DENSE_LIMIT / 4 {
        let ev = dense::sym_eigenvalues(&a.to_dense()).expect("symmetric eigensolve");
        return (ev[0], ev[n - 1]);
    }
    let band = a.to_sym_band(0.0, None, None);
    let tol = 1e-15 * a.norm_inf();
    (band.eigenvalue_bisect(0, tol), band.eigenvalue_bisect(n - 1, tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub eta: f64,
    pub min_eig_k: f64,
    /// Spectrum of `T_η = W⁻¹(K − ηI)`.
    pub shifted_spectrum: Vec<Complex64>,
    pub max_relative_imag: f64,
    pub min_abs: f64,
    pub is_real: bool,
    pub excludes_zero: bool,
}

/// `η = λ_min(K) − 1` and the spectrum of `T_η`, which must be real and
/// avoid zero since `K − ηI` is positive definite.
pub fn positivity_shift(cp: &CondensedPencil) -> Result<PositivityReport> {
    let n = cp.n();
    let (min_eig_k, _) = extreme_eigenvalues(&cp.k);
    let eta = min_eig_k - 1.0;
    let mut t = cp.k_dense();
    for i in 0..n {
        t[(i, i)] -= eta;
    }
    for i in 0..n {
        for j in 0..n {
            t[(i, j)] /= cp.w[i];
        }
    }
    let mut ev = dense::eigenvalues(&t)?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let max_relative_imag = ev.iter().map(|l| l.im.abs() / (1.0 + l.norm())).fold(0.0, f64::max);
    let min_abs = ev.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    Ok(PositivityReport {
        eta,
        min_eig_k,
        shifted_spectrum: ev,
        is_real: max_relative_imag <= DEFAULT_TOL_IM,
        excludes_zero: min_abs > 0.0,
        max_relative_imag,
        min_abs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeEntry {
    pub size: f64,
    pub n_minus: usize,
    /// `ν₋ = λ_min(A₋h)`.
    pub nu_minus: f64,
    /// `γ = max r` over `Ω₋` (negative).
    pub gamma: f64,
    /// `ν₋ / γ`.
    pub bound: f64,
    pub max_sigma_b: f64,
    pub holds: bool,
    /// The inequality is guaranteed here (`ν₋ ≤ 0`, or `r` constant on `Ω₋`
    /// where it holds with equality); otherwise it is only reported.
    pub asserted: bool,
    /// Eigenvalues of `B₋h` in `(bound − 10, bound]`.
    pub window_count: usize,
    /// Eigenvalues of `T_h` with `|λ| ≤ 50`, for small grids.
    pub t_cloud: Option<Vec<Complex64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EssentialProbe {
    pub entries: Vec<ProbeEntry>,
    /// `|bound|` strictly decreasing along the family.
    pub bound_decreasing: bool,
    /// Window counts nondecreasing along the family.
    pub filling: bool,
    pub all_hold: bool,
}

/// Truncation study over a family of specs with growing outer box.
pub fn essential_probe(family: &[ProblemSpec]) -> Result<EssentialProbe> {
    let entries = family
        .par_iter()
        .map(probe_one)
        .collect::<Result<Vec<_>>>()?;
    let bound_decreasing = entries.windows(2).all(|w| w[1].bound.abs() < w[0].bound.abs());
    let filling = entries.windows(2).all(|w| w[1].window_count >= w[0].window_count);
    let all_hold = entries.iter().all(|e| e.holds || !e.asserted);
    Ok(EssentialProbe {
        entries,
        bound_decreasing,
        filling,
        all_hold,
    })
}

fn probe_one(spec: &ProblemSpec) -> Result<ProbeEntry> {
    let op = assemble(spec)?;
    let sub = subdomain_operators(&op);
    let a = &sub.a_minus;
    let n = a.nrows();
    let tol = 1e-15 * a.norm_inf();
    let nu_minus = a.to_sym_band(0.0, None, None).eigenvalue_bisect(0, tol);
    let d: Vec<f64> = sub.w_minus.iter().map(|w| 1.0 / w.abs().sqrt()).collect();
    let scaled = a.to_sym_band(0.0, None, Some(&d));
    let max_sigma_b = -scaled.eigenvalue_bisect(0, tol);
    let gamma = op.minus_weight_max;
    let bound = nu_minus / gamma;
    let holds = max_sigma_b <= bound + 1e-10 * bound.abs();
    let asserted = nu_minus <= 0.0 || op.minus_weight_constant;
    // #σ(B₋) > μ equals n₋(A₋ − μW₋)
    let above = |mu: f64| {
        a.to_sym_band(mu, Some(&sub.w_minus), None)
            .ldlt_inertia(0.0, 1e-14 * a.norm_inf())
            .0
    };
    let window_count = above(bound - 10.0) - above(bound);
    let size = spec
        .origin
        .as_ref()
        .and_then(|o| o.params.get("L").copied())
        .unwrap_or(0.5 * (spec.domain.outer_box[0][1] - spec.domain.outer_box[0][0]));
    let t_cloud = if op.n() <= DENSE_EIGVEC_LIMIT {
        let cp = op.condensed()?;
        let ev = dense::eigenvalues(&cp.t_dense())?;
        let mut cloud: Vec<Complex64> = ev.into_iter().filter(|l| l.norm() <= 50.0).collect();
        cloud.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Some(cloud)
    } else {
        None
    };
    Ok(ProbeEntry {
        size,
        n_minus: n,
        nu_minus,
        gamma,
        bound,
        max_sigma_b,
        holds,
        asserted,
        window_count,
        t_cloud,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use std::collections::BTreeMap;

    fn p(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn repeated_eigenvalue_gets_independent_eigenvectors() {
        // the square's symmetry makes one nonreal pair exactly double
        let op = assemble(&builtin_problem("P3", &p(&[("h", 0.25)])).unwrap()).unwrap();
        let s = solve_generalized(&op).unwrap();
        assert!(s.max_relative_residual() < 1e-10);
        let v = s.eigenvectors.as_ref().unwrap();
        let upper: Vec<usize> = (0..s.len())
            .filter(|&j| s.eigenvalues[j].im > 13.0 && s.eigenvalues[j].im < 14.0)
            .collect();
        assert_eq!(upper.len(), 2);
        let mut cols: Vec<Vec<Complex64>> = upper.iter().map(|&j| (0..v.nrows()).map(|i| v[(i, j)]).collect()).collect();
        dense::orthonormalize(&mut cols);
        assert_eq!(cols.len(), 2);
    }

    fn dummy(vals: Vec<Complex64>) -> Spectrum {
        let n = vals.len();
        Spectrum {
            eigenvalues: vals,
            residuals: vec![0.0; n],
            class: vec![EigClass::Real; n],
            pair_id: vec![None; n],
            eigenvectors: None,
            norm_k: 1.0,
            tol_im: DEFAULT_TOL_IM,
        }
    }

    #[test]
    fn classify_pairs_conjugates() {
        let c = |re, im| Complex64::new(re, im);
        let s = classify(dummy(vec![c(1.0, 0.0), c(2.0, -3.0), c(2.0, 3.0)]), DEFAULT_TOL_IM).unwrap();
        assert_eq!(s.nonreal_pairs(), 1);
        assert_eq!(s.class[0], EigClass::Real);
        assert_eq!(s.pair_id[1], s.pair_id[2]);
        let s = classify(dummy(vec![c(1.0, 1e-12)]), DEFAULT_TOL_IM).unwrap();
        assert_eq!(s.class[0], EigClass::Real);
        assert!(matches!(
            classify(dummy(vec![c(1.0, 1.0), c(1.0, -1.1)]), DEFAULT_TOL_IM),
            Err(Error::UnpairedNonreal(_))
        ));
    }

    #[test]
    fn unit_weight_reduces_to_symmetric_problem() {
        let mut spec = builtin_problem("P1", &p(&[("h", 0.05)])).unwrap();
        spec.weight.values.iter_mut().for_each(|v| *v = 1.0);
        spec.domain.plus_region = vec![vec![[-1.0, 1.0]]];
        let mut op = assemble(&builtin_problem("P1", &p(&[("h", 0.05)])).unwrap()).unwrap();
        op.w.iter_mut().for_each(|w| *w = 1.0);
        let s = solve_generalized(&op).unwrap();
        let ev = dense::sym_eigenvalues(&op.k.to_dense()).unwrap();
        assert_eq!(s.nonreal_pairs(), 0);
        for (a, b) in s.eigenvalues.iter().zip(&ev) {
            assert!((a.re - b).abs() < 1e-9 * op.norm_k);
        }
        assert_eq!(negative_inertia(&op), 0);
    }

    #[test]
    fn p1_spectrum_is_real_with_small_residuals() {
        let op = assemble(&builtin_problem("P1", &p(&[("h", 0.02)])).unwrap()).unwrap();
        let s = solve_generalized(&op).unwrap();
        assert_eq!(s.len(), op.n() - 1);
        assert_eq!(s.nonreal_pairs(), 0);
        assert!(s.max_relative_residual() < 1e-8);
        assert!(s.distance_of_zero() > 0.1);
    }

    #[test]
    fn p2_inertia_and_pairs() {
        let op = assemble(&builtin_problem("P2", &p(&[("c", 30.0), ("h", 0.01)])).unwrap()).unwrap();
        assert_eq!(negative_inertia(&op), 3);
        let s = solve_generalized(&op).unwrap();
        assert!(s.nonreal_pairs() >= 1 && s.nonreal_pairs() <= 3);
        assert!(s.pairing_defect() <= PAIR_TOL);
    }

    #[test]
    fn krein_identities_on_small_problems() {
        let op = assemble(&builtin_problem("P2", &p(&[("c", 30.0), ("h", 0.02)])).unwrap()).unwrap();
        let cp = op.condensed().unwrap();
        assert!(selfadjoint_residual(&cp, 100, 1) <= 1e-12 * cp.norm_k);
        let r = resolvent_identity_residual(&cp, Complex64::new(0.3, 1.0)).unwrap();
        assert!(r < 1e-10, "{r}");
        let ev = dense::sym_eigenvalues(&cp.k_dense()).unwrap();
        assert!(matches!(
            resolvent_identity_residual(&cp, Complex64::new(ev[2], 0.0)),
            Err(Error::NearSingularShift { .. })
        ));
        let ks = krein_structure(&op, &cp);
        assert_eq!((ks.kappa_plus, ks.kappa_minus, ks.kappa_zero), (49, 49, 1));
    }

    #[test]
    fn positivity_shift_of_p1_and_p2() {
        let op = assemble(&builtin_problem("P1", &p(&[("h", 0.02)])).unwrap()).unwrap();
        let rep = positivity_shift(&op.condensed().unwrap()).unwrap();
        let q = std::f64::consts::FRAC_PI_2.powi(2);
        // full K: second order; the condensed K̃ lacks the interface mass, O(h)
        assert!((extreme_eigenvalues(&op.k).0 - q).abs() < 1e-3 * q);
        assert!((rep.eta - (q - 1.0)).abs() < 1.5 * 0.02 * q, "{}", rep.eta);
        assert!(rep.is_real && rep.excludes_zero);
        let op = assemble(&builtin_problem("P2", &p(&[("h", 0.02)])).unwrap()).unwrap();
        let rep = positivity_shift(&op.condensed().unwrap()).unwrap();
        assert!(rep.is_real && rep.excludes_zero);
    }

    #[test]
    fn essential_probe_on_stretched_p2() {
        let fam: Vec<_> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&l| builtin_problem("P2", &p(&[("L", l), ("h", 0.02)])).unwrap())
            .collect();
        let pr = essential_probe(&fam).unwrap();
        assert!(pr.all_hold);
        for e in &pr.entries {
            assert!(e.asserted && e.holds);
        }
    }
}
