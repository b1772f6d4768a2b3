mod common;

use std::time::Instant;

use common::params;
use ispec::discretization::assemble;
use ispec::krein::{self, HalfPlane};
use ispec::problem::builtin_problem;
use ispec::spectral;

fn check_problem(name: &str, kv: &[(&str, f64)]) {
    let start = Instant::now();
    let op = assemble(&builtin_problem(name, &params(kv)).unwrap()).unwrap();
    let cp = op.condensed().unwrap();
    let spec = spectral::solve_condensed(&op, &cp).unwrap();
    let mut an = krein::analyze(&op).unwrap();
    an.report.check(&spec.nonreal());
    let rep = &an.report;
    println!(
        "{name}: n = {}, eta = {:.4}, blocks = {:?}, tau± = {:.3}/{:.3}, rho* = {:.3}, nu_sim = {:.4e}, nu_reverse = {:.4e}, nonreal = {:?} ({:.1?})",
        cp.n(),
        rep.eta,
        rep.blocks,
        rep.plus.tau,
        rep.minus.tau,
        rep.rho_star,
        rep.nu_sim,
        rep.nu_reverse,
        rep.nonreal,
        start.elapsed()
    );
    assert!(!rep.nonreal.is_empty());
    assert!(rep.contained);

    let alt = krein::perturbation_blocks_eigenframe(&an.projections).unwrap();
    for (a, b) in [(alt.v11, rep.blocks.v11), (alt.v12, rep.blocks.v12), (alt.v21, rep.blocks.v21), (alt.v22, rep.blocks.v22)] {
        assert!((a - b).abs() <= 1e-8 * rep.blocks.v11.max(rep.blocks.v22), "{a} vs {b}");
    }

    let mut mus = krein::half_plane_samples(1.5 * rep.plus.tau, HalfPlane::Left, 5);
    mus.extend(krein::half_plane_samples(1.5 * rep.minus.tau, HalfPlane::Right, 5));
    for est in krein::block_estimates(&an.projections, &mus).unwrap() {
        assert!(est.holds, "{est:?}");
    }

    let mus = krein::circle_samples(2.0 * rep.rho_star, 10);
    for m in krein::resolvent_bound_check(&an.projections, &an.sim, &mus).unwrap() {
        println!("  mu = {:.3}: sigma_min = {:.4e}, rhs = {:.4e}", m.mu, m.sigma_min, m.rhs);
        assert!(m.holds, "{m:?}");
    }
    println!("  done in {:.1?}", start.elapsed());
}

#[test]
fn p2_enclosure_and_bounds() {
    check_problem("P2", &[("c", 30.0), ("h", 1e-2)]);
}

#[test]
fn p3_enclosure_and_bounds() {
    check_problem("P3", &[("c", 20.0), ("L", 2.0), ("h", 0.125)]);
}

#[test]
fn projection_ranks_match_weight_inertia() {
    let op = assemble(&builtin_problem("P1", &params(&[("h", 0.02)])).unwrap()).unwrap();
    let cp = op.condensed().unwrap();
    let ks = spectral::krein_structure(&op, &cp);
    let proj = krein::spectral_projections(&op, 1.0).unwrap();
    assert_eq!(proj.rank_plus, ks.kappa_plus);
    assert_eq!(proj.rank_minus, ks.kappa_minus);
    assert!(proj.identity_defect <= 1e-10);
}

#[test]
fn gram_norm_dominates_euclidean() {
    let op = assemble(&builtin_problem("P2", &params(&[("c", 30.0), ("h", 0.02)])).unwrap()).unwrap();
    let an = krein::analyze(&op).unwrap();
    assert!(an.sim.c_low <= an.sim.c_high);
    let n = an.projections.n();
    for k in 0..20 {
        let x: Vec<f64> = (0..n).map(|i| ((i * (k + 3)) as f64 * 0.37).sin()).collect();
        let e = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(e <= an.sim.nu_sim.sqrt() * an.sim.norm(&x) * (1.0 + 1e-12));
    }
}
