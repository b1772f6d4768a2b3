mod common;

use common::{c, nearest, params, step_dtn, step_dtn_derivative, step_roots};
use ispec::discretization::{assemble, Side};
use ispec::dtn::{self, ContourSpec};
use ispec::problem::builtin_problem;
use num_complex::Complex64;

#[test]
fn oracle_has_the_known_p2_root() {
    let roots = step_roots(30.0, 100.0);
    println!("{roots:?}");
    assert!(nearest(c(0.0, 12.738291659043892), &roots) < 1e-10);
}

#[test]
fn dirichlet_solution_matches_sin_quotient() {
    let op = assemble(&builtin_problem("P1", &params(&[("h", 1e-3)])).unwrap()).unwrap();
    let lam = c(0.0, 2.0);
    let s = lam.sqrt();
    let sol = dtn::solve_dirichlet(&op, Side::Plus, lam, &[c(1.0, 0.0)]).unwrap();
    assert!(sol.residual <= 1e-10);
    let mut worst: f64 = 0.0;
    for (t, &i) in sol.nodes.iter().enumerate() {
        let x = op.grid.node_coords(i)[0];
        let exact = (s * (1.0 - x)).sin() / s.sin();
        worst = worst.max((sol.interior[t] - exact).norm());
    }
    assert!(worst < 1e-6, "max error {worst:e}");
}

#[test]
fn minus_side_dtn_matches_coth() {
    let op = assemble(&builtin_problem("P1", &params(&[("h", 1e-3)])).unwrap()).unwrap();
    let lam = c(0.0, 2.0);
    let t = lam.sqrt();
    let d = dtn::dtn(&op, lam).unwrap();
    let exact = t * t.cosh() / t.sinh();
    assert!((d.m_minus[(0, 0)] - exact).norm() < 1e-4, "{} vs {exact}", d.m_minus[(0, 0)]);
}

#[test]
fn scalar_dtn_matches_closed_form() {
    let op = assemble(&builtin_problem("P1", &params(&[("h", 1e-3)])).unwrap()).unwrap();
    let lam = c(0.0, 2.0);
    let d = dtn::dtn(&op, lam).unwrap();
    let exact = step_dtn(lam, 0.0);
    assert!((d.m[(0, 0)] - exact).norm() < 1e-4, "{} vs {exact}", d.m[(0, 0)]);
}

#[test]
fn derivative_matches_central_differences() {
    // M cancels O(1/h) terms; a coarse grid keeps rounding below the step's reach
    let op = assemble(&builtin_problem("P1", &params(&[("h", 1e-2)])).unwrap()).unwrap();
    let lam = c(1.0, 1.0);
    let d = dtn::dtn_derivative(&op, lam).unwrap()[(0, 0)];
    let step = 1e-5;
    let fd = (dtn::dtn(&op, lam + step).unwrap().m[(0, 0)] - dtn::dtn(&op, lam - step).unwrap().m[(0, 0)]) / (2.0 * step);
    assert!((d - fd).norm() / d.norm() <= 1e-6, "{d} vs {fd}");
}

#[test]
fn derivative_matches_closed_form() {
    // the closed form carries an O(h²) discretization gap, hence the finer grid
    let op = assemble(&builtin_problem("P1", &params(&[("h", 2.5e-4)])).unwrap()).unwrap();
    let lam = c(1.0, 1.0);
    let d = dtn::dtn_derivative(&op, lam).unwrap()[(0, 0)];
    let exact = step_dtn_derivative(lam, 0.0);
    assert!((d - exact).norm() / exact.norm() <= 1e-6, "{d} vs {exact}");
}

#[test]
fn derivative_matches_differences_in_2d() {
    let op = assemble(&builtin_problem("P3", &params(&[("h", 0.25)])).unwrap()).unwrap();
    let lam = c(1.0, 1.0);
    let d = dtn::dtn_derivative(&op, lam).unwrap();
    let step = 1e-5;
    let mp = dtn::dtn(&op, lam + step).unwrap().m;
    let mm = dtn::dtn(&op, lam - step).unwrap().m;
    let n = d.nrows();
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let fd = (mp[(i, j)] - mm[(i, j)]) / (2.0 * step);
            num = num.max((d[(i, j)] - fd).norm());
            den = den.max(d[(i, j)].norm());
        }
    }
    assert!(num / den <= 1e-6, "{}", num / den);
}

#[test]
fn dtn_is_conjugate_symmetric_and_matches_conormals() {
    for (name, h) in [("P2", 0.01), ("P3", 0.25)] {
        let op = assemble(&builtin_problem(name, &params(&[("h", h)])).unwrap()).unwrap();
        let lam = c(3.0, 4.0);
        assert!(dtn::conjugate_symmetry_defect(&op, lam).unwrap() < 1e-12);
        assert!(dtn::schur_consistency(&op, lam).unwrap() < 1e-10);
    }
}

#[test]
fn definite_problem_has_no_nonreal_kernel() {
    // K > 0 forces a real spectrum, so M stays nonsingular off the real axis
    let op = assemble(&builtin_problem("P1", &params(&[("h", 0.01)])).unwrap()).unwrap();
    for lam in [c(0.0, 1.0), c(5.0, 0.5), c(-20.0, 3.0), c(40.0, 10.0)] {
        let d = dtn::dtn(&op, lam).unwrap();
        assert!(d.sigma_min > 1e-3, "{lam}: {}", d.sigma_min);
    }
}

#[test]
fn green_identity_and_adjoint_pairing() {
    let op = assemble(&builtin_problem("P3", &params(&[("h", 0.25)])).unwrap()).unwrap();
    let ng = op.gamma.len();
    let lam = c(-2.0, 3.0);
    let pu: Vec<Complex64> = (0..ng).map(|i| c((i as f64).sin(), 0.3 * i as f64)).collect();
    let pv: Vec<Complex64> = (0..ng).map(|i| c(1.0 / (1.0 + i as f64), (2.0 * i as f64).cos())).collect();
    for side in [Side::Plus, Side::Minus] {
        assert!(dtn::green_identity_residual(&op, side, lam, &pu, &pv).unwrap() < 1e-10);
    }
    let g: Vec<Complex64> = (0..op.n()).map(|i| c((0.7 * i as f64).cos(), (0.3 * i as f64).sin())).collect();
    let lhs = dtn::omega_pairing(&op, &dtn::gamma_apply(&op, lam, &pu).unwrap(), &g).unwrap();
    let rhs = dtn::gamma_pairing(&op, &pu, &dtn::gamma_adjoint_apply(&op, lam.conj(), &g).unwrap()).unwrap();
    assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn gamma_restricts_to_dirichlet_solution() {
    let op = assemble(&builtin_problem("P1", &params(&[("h", 0.01)])).unwrap()).unwrap();
    let lam = c(0.0, 2.0);
    let f = dtn::gamma_apply(&op, lam, &[c(1.0, 0.0)]).unwrap();
    let sol = dtn::solve_dirichlet(&op, Side::Plus, lam, &[c(1.0, 0.0)]).unwrap();
    for (t, &i) in sol.nodes.iter().enumerate() {
        assert_eq!(f[i], sol.interior[t]);
    }
}

#[test]
fn adjoint_of_decoupled_residual_is_conormal_sum() {
    // for f vanishing on Γ: γ(λ̄)* W (B − λ) f = −(∂₊f + ∂₋f)
    use ispec::discretization::conormal_unchecked;
    let op = assemble(&builtin_problem("P3", &params(&[("h", 0.25)])).unwrap()).unwrap();
    let lam = c(1.5, -2.0);
    let mut f: Vec<Complex64> = (0..op.n()).map(|i| c((0.4 * i as f64).sin(), 0.1 * i as f64)).collect();
    for &g in &op.gamma {
        f[g] = c(0.0, 0.0);
    }
    // W(B − λ)f on each side's interior is the interior residual of K^side − λW^side
    let mut wbf = vec![c(0.0, 0.0); op.n()];
    for side in [Side::Plus, Side::Minus] {
        let r = ispec::discretization::side_residual(&op, side, &f, lam);
        for &i in op.interior(side) {
            wbf[i] = r[i];
        }
    }
    let lhs = dtn::gamma_adjoint_apply(&op, lam, &wbf).unwrap();
    let cp = conormal_unchecked(&op, Side::Plus, &f, lam).unwrap();
    let cm = conormal_unchecked(&op, Side::Minus, &f, lam).unwrap();
    let scale = lhs.iter().map(|x| x.norm()).fold(1.0, f64::max);
    for t in 0..op.gamma.len() {
        assert!((lhs[t] + cp[t] + cm[t]).norm() <= 1e-10 * scale);
    }
}

#[test]
fn krein_formula_and_rank() {
    let op = assemble(&builtin_problem("P3", &params(&[("h", 0.25)])).unwrap()).unwrap();
    let g: Vec<Complex64> = (0..op.n()).map(|i| c((1.3 * i as f64).cos(), (0.9 * i as f64).sin())).collect();
    for lam in [c(0.5, 1.0), c(-7.0, 0.2), c(30.0, -5.0)] {
        let chk = dtn::krein_resolvent_residual(&op, lam, &g).unwrap();
        assert!(chk.residual <= 1e-10, "{lam}: {:e}", chk.residual);
        let rank = dtn::resolvent_difference_rank(&op, lam).unwrap();
        assert!(rank.numerical_rank <= rank.gamma_size);
        assert!(rank.trailing_ratio <= 1e-10);
    }
}

#[test]
fn p2_contour_eigenvalues_match_oracle() {
    let op = assemble(&builtin_problem("P2", &params(&[("c", 30.0), ("h", 1e-3)])).unwrap()).unwrap();
    let oracle = step_roots(30.0, 100.0);
    let contour = ContourSpec::upper_default().with_seed(3);
    let res = dtn::nonreal_eigs(&op, &contour).unwrap();
    println!("{:?} count {:?}", res.eigenvalues, res.argument_count);
    let inside: Vec<_> = oracle.iter().filter(|z| contour.contains(**z)).collect();
    assert_eq!(res.eigenvalues.len(), inside.len());
    for z in &res.eigenvalues {
        assert!(nearest(*z, &oracle) < 1e-4, "{z}");
    }
    for r in &res.newton_residuals {
        assert!(*r <= 1e-10);
    }
    let mirror = dtn::nonreal_eigs(&op, &contour.mirrored()).unwrap();
    for z in &res.eigenvalues {
        assert!(nearest(z.conj(), &mirror.eigenvalues) < 1e-8);
    }
    let ef = dtn::eigenfunction_from_kernel(&op, res.eigenvalues[0], &res.kernels[0]).unwrap();
    assert!(ef.residual <= 1e-8);
}

#[test]
fn off_kernel_data_is_rejected() {
    let op = assemble(&builtin_problem("P2", &params(&[("c", 30.0), ("h", 1e-2)])).unwrap()).unwrap();
    // the interface is one point in 1D, so perturb the shift instead of φ
    let lam = c(0.0, 12.7) + 0.1;
    assert!(matches!(
        dtn::eigenfunction_from_kernel(&op, lam, &[c(1.0, 0.0)]),
        Err(ispec::Error::KernelResidualTooLarge { .. })
    ));
}

#[test]
fn p3_contour_eigenvalues_match_dense_solve() {
    let op = assemble(&builtin_problem("P3", &params(&[("c", 20.0), ("L", 2.0), ("h", 0.125)])).unwrap()).unwrap();
    let cp = op.condensed().unwrap();
    let dense = ispec::spectral::solve_condensed(&op, &cp).unwrap().nonreal();
    let contour = ContourSpec::upper_default().with_seed(11);
    let res = dtn::nonreal_eigs(&op, &contour).unwrap();
    println!("{:?} {:?} {:?}", res.eigenvalues, res.multiplicities, res.argument_count);
    let inside: Vec<_> = dense.iter().filter(|z| contour.contains(**z)).collect();
    assert_eq!(res.multiplicities.iter().sum::<usize>(), inside.len());
    for z in &res.eigenvalues {
        assert!(nearest(*z, &dense) < 1e-6, "{z}");
    }
}
