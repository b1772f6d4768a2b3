//! Closed-form reference values shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_complex::Complex64;

pub fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `s cot s`, even in `s`, with its Taylor series near zero.
fn scot(s: Complex64) -> Complex64 {
    if s.norm() < 1e-4 {
        1.0 - s * s / 3.0
    } else {
        s * s.cos() / s.sin()
    }
}

fn tcoth(t: Complex64) -> Complex64 {
    if t.norm() < 1e-4 {
        1.0 + t * t / 3.0
    } else {
        t * t.cosh() / t.sinh()
    }
}

/// The 1D step-problem interface function `s cot s + t coth t`,
/// `s = √(λ + c)`, `t = √(λ − c)`.
pub fn step_dtn(lambda: Complex64, cpot: f64) -> Complex64 {
    let s = (lambda + cpot).sqrt();
    let t = (lambda - cpot).sqrt();
    scot(s) + tcoth(t)
}

/// `d/dλ` of [`step_dtn`], by differentiating each term in `s` (resp. `t`)
/// and using `ds/dλ = 1/(2s)`.
pub fn step_dtn_derivative(lambda: Complex64, cpot: f64) -> Complex64 {
    let s = (lambda + cpot).sqrt();
    let t = (lambda - cpot).sqrt();
    // (s cot s)' / (2s) = (cot s − s csc² s) / (2s)
    let ds = {
        let sn = s.sin();
        (s.cos() / sn - s / (sn * sn)) / (2.0 * s)
    };
    let dt = {
        let sh = t.sinh();
        (t.cosh() / sh - t / (sh * sh)) / (2.0 * t)
    };
    ds + dt
}

/// Nonreal roots of [`step_dtn`] in `|λ| ≤ radius`, `|Im λ| ≥ 1e-3`, found by
/// complex Newton from a grid of seeds.
pub fn step_roots(cpot: f64, radius: f64) -> Vec<Complex64> {
    let mut roots: Vec<Complex64> = Vec::new();
    let step = 2.5;
    let n = (radius / step) as i64;
    for i in -n..=n {
        for j in -n..=n {
            let mut z = c(i as f64 * step, j as f64 * step + 0.37);
            if z.norm() > radius {
                continue;
            }
            let mut ok = false;
            for _ in 0..100 {
                let g = step_dtn(z, cpot);
                let dg = step_dtn_derivative(z, cpot);
                let dz = g / dg;
                if !dz.re.is_finite() || !dz.im.is_finite() {
                    break;
                }
                z -= dz;
                if dz.norm() < 1e-15 * (1.0 + z.norm()) {
                    ok = true;
                    break;
                }
            }
            if ok
                && z.im.abs() >= 1e-3
                && z.norm() <= radius
                && step_dtn(z, cpot).norm() < 1e-10
                && !roots.iter().any(|r| (r - z).norm() < 1e-8)
            {
                roots.push(z);
            }
        }
    }
    roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    roots
}

/// Distance from `z` to the nearest point of `set`.
pub fn nearest(z: Complex64, set: &[Complex64]) -> f64 {
    set.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min)
}
