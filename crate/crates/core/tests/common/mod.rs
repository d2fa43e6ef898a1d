//! Exact quantum reference for the 2p0 parallel transition at fixed scaled
//! energy.
//!
//! In scaled semiparabolic coordinates the m = 0 Schroedinger equation reads
//! `-1/2 Lap psi = w^2 W psi` with `W = 2 + E (u^2 + v^2) - 1/8 u^2 v^2 (u^2 + v^2)`,
//! a generalized symmetric eigenproblem in `w^2`. The basis is a product of
//! 2D-radial Laguerre functions `L_n(a u^2) exp(-a u^2 / 2)`, restricted to
//! the `u <-> v` symmetric sector (even z-parity).
#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

use faer::{Mat, Side};

#[derive(Debug, Clone, Copy)]
pub struct Level {
    pub w: f64,
    /// Residue of `<2p0|z G z|2p0>` at `w`.
    pub strength: f64,
}

fn laguerre(n: usize, t: f64) -> Vec<f64> {
    let mut l = vec![0.0; n];
    l[0] = 1.0;
    if n > 1 {
        l[1] = 1.0 - t;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        l[k + 1] = ((2.0 * kf + 1.0 - t) * l[k] - kf * l[k - 1]) / (kf + 1.0);
    }
    l
}

fn tridiag(n: usize, diag: impl Fn(usize) -> f64, off: impl Fn(usize) -> f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            diag(i)
        } else if i.abs_diff(j) == 1 {
            off(i.max(j))
        } else {
            0.0
        }
    })
}

/// Levels in `range` from a basis of `n` radial functions per coordinate with
/// scale `alpha`.
pub fn quantum_levels(scaled_energy: f64, n: usize, alpha: f64, range: (f64, f64)) -> Vec<Level> {
    // t = alpha u^2 acts tridiagonally; u^4 comes from t^2 on a larger basis
    let t = tridiag(n + 2, |i| (2 * i + 1) as f64, |i| -(i as f64));
    let t2 = &t * &t;
    let x2 = Mat::<f64>::from_fn(n, n, |i, j| t[(i, j)] / alpha);
    let x4 = Mat::<f64>::from_fn(n, n, |i, j| t2[(i, j)] / (alpha * alpha));
    let kin = tridiag(n, |i| alpha * (i as f64 + 0.5), |i| alpha * i as f64 / 2.0);

    let ev = kin.self_adjoint_eigen(Side::Lower).unwrap();
    let q = ev.U().to_owned();
    let lam: Vec<f64> = (0..n).map(|i| ev.S().column_vector()[i]).collect();
    let a2 = q.transpose() * &x2 * &q;
    let a4 = q.transpose() * &x4 * &q;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let delta = |i: usize, k: usize| if i == k { 1.0 } else { 0.0 };
    let weight = |i: usize, j: usize, k: usize, l: usize| {
        2.0 * delta(i, k) * delta(j, l)
            + scaled_energy * (a2[(i, k)] * delta(j, l) + delta(i, k) * a2[(j, l)])
            - 0.125 * (a4[(i, k)] * a2[(j, l)] + a2[(i, k)] * a4[(j, l)])
    };
    let norm = |i: usize, j: usize| if i == j { 0.5 } else { 1.0 / SQRT_2 };
    let ns = pairs.len();
    let m = Mat::<f64>::from_fn(ns, ns, |p, r| {
        let ((i, j), (k, l)) = (pairs[p], pairs[r]);
        let v = 2.0 * norm(i, j) * norm(k, l) * (weight(i, j, k, l) + weight(i, j, l, k));
        v / ((lam[i] + lam[j]) * (lam[k] + lam[l])).sqrt()
    });
    let eig = m.self_adjoint_eigen(Side::Lower).unwrap();
    let kappa = eig.S().column_vector();
    let y = eig.U();

    let mut out = Vec::new();
    for k in 0..ns {
        if kappa[k] <= 0.0 {
            continue;
        }
        let w = 1.0 / kappa[k].sqrt();
        if w < range.0 || w > range.1 {
            continue;
        }
        // I_p[i] = int u^(2p) exp(-w^2 u^2 / 4) phi_i(u) u du
        let beta = w * w / (4.0 * alpha) + 0.5;
        let steps = 4000;
        let h = 60.0 / beta / steps as f64;
        let mut ip = vec![vec![0.0; n]; 4];
        for s in 0..=steps {
            let tt = s as f64 * h;
            let simpson = if s == 0 || s == steps {
                1.0
            } else if s % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let g = (-beta * tt).exp() / (2.0 * alpha).sqrt() * simpson * h / 3.0;
            let l = laguerre(n, tt);
            for (p, row) in ip.iter_mut().enumerate() {
                let f = (tt / alpha).powi(p as i32) * g;
                for (r, li) in row.iter_mut().zip(&l) {
                    *r += f * li;
                }
            }
        }
        // 2r z^2 = w^6 (U + V)(U - V)^2 / 4 with U = u^2, V = v^2
        let c0 = w.powi(6) / 4.0 / (32.0 * PI).sqrt();
        let o = Mat::<f64>::from_fn(n, n, |i, j| {
            c0 * (ip[3][i] * ip[0][j] - ip[2][i] * ip[1][j] - ip[1][i] * ip[2][j] + ip[0][i] * ip[3][j])
        });
        let o = q.transpose() * &o * &q;
        let mut overlap = 0.0;
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let basis = if a == b { o[(a, a)] } else { SQRT_2 * o[(a, b)] };
            overlap += basis * y[(p, k)] * w / (lam[a] + lam[b]).sqrt();
        }
        overlap *= (2.0 * PI).sqrt();
        out.push(Level {
            w,
            strength: w.powi(5) * overlap * overlap / 2.0,
        });
    }
    out.sort_by(|a, b| a.w.total_cmp(&b.w));
    out
}
