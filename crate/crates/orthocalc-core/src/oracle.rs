//! Sampling oracles: brute-force estimates of every limit-defined object the
//! exact calculus computes, built only from evaluation, gradients at
//! differentiable points, distances, and regular normal cones at explicitly
//! probed feasible points. None of the enumeration logic of [`crate::cones`]
//! or the rules of [`crate::subdiff`] is reused, so agreement between the two
//! routes is meaningful evidence.
//!
//! Tangent membership for implicit feasible sets `X = F^{-1}(Γ)` is measured
//! by restoration distance: the ratio `dist(x̄ + t d, X)/t` along a shrinking
//! ladder, with the distance coming from [`crate::descent::feasibility_distance`]
//! and certified only at verified-feasible restorations. The raw constraint
//! residual is deliberately not used as a proxy for that distance; the two can
//! differ by unbounded factors precisely when metric subregularity fails,
//! which is the regime this crate probes.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::{OrthoSet, MEMBER_EPS};
use crate::cones::{regular_normal_cone, CellUnion};
use crate::descent::{feasibility_distance, FeasOpts, RESTORE_EPS};
use crate::expr::Expr;
use crate::problem::Problem;
use crate::vecops::{axpy, basis, norm2, norm_inf, normalize, sub};
use crate::verdict::Membership;

/// Tail ratio below which a direction counts as tangent.
pub const TANGENT_IN_TOL: f64 = 1e-4;
/// Stable normalized distance above which a direction counts as non-tangent.
pub const TANGENT_OUT_MARGIN: f64 = 0.05;
/// Agreement tolerance between oracle point clouds and exact sets.
pub const ORACLE_AGREE_TOL: f64 = 1e-3;

/// Deterministic unit directions: `{±1}` on the line, uniform angles in the
/// plane, a Fibonacci lattice on the 2-sphere, seeded Gaussian directions in
/// higher dimension.
pub fn sphere_grid(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * core::f64::consts::PI * (k as f64) / (count as f64);
                vec![libm::cos(a), libm::sin(a)]
            })
            .collect(),
        3 => {
            let golden = core::f64::consts::PI * (3.0 - libm::sqrt(5.0));
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * ((k as f64) + 0.5) / (count as f64);
                    let r = libm::sqrt(f64::max(0.0, 1.0 - z * z));
                    let a = golden * (k as f64);
                    vec![r * libm::cos(a), r * libm::sin(a), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let g: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                if let Some(u) = normalize(&g) {
                    out.push(u);
                }
            }
            out
        }
    }
}

fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform01(rng).max(1e-12);
    let u2 = uniform01(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Least-squares slope of `log y` against `log x` over the pairs with both
/// entries positive; `None` when fewer than three usable pairs remain.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (libm::log(*x), libm::log(*y)))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if libm::fabs(denom) < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Tangency of `w` to an explicit orthodisjunctive set at `y`, decided from
/// the exact distance along the ray. Polyhedral sets make this sharp: the
/// ratio collapses to zero for tangent directions at small radii.
pub fn sample_tangent_orthoset(set: &OrthoSet, y: &[f64], w: &[f64]) -> Membership {
    if norm2(w) == 0.0 {
        return Membership::In;
    }
    let ts: Vec<f64> = (0..6).map(|j| 1e-2 * libm::pow(2.0, -(j as f64))).collect();
    let ratios: Vec<f64> = ts.iter().map(|t| set.distance(&axpy(y, *t, w)) / t).collect();
    let tail = ratios[ratios.len() - 1];
    if tail <= 1e-9 || log_slope(&ts, &ratios).map_or(false, |s| s <= -0.5) {
        return Membership::In;
    }
    let half = &ratios[ratios.len() / 2..];
    let floor = half.iter().fold(f64::INFINITY, |m, r| f64::min(m, *r));
    if floor >= TANGENT_OUT_MARGIN * f64::max(1.0, norm2(w)) {
        return Membership::Out;
    }
    Membership::Borderline
}

/// Tangency of `d` to the implicit feasible set of `p` at `x̄`, decided from
/// restoration-distance ratios. "In" requires verified-feasible restorations
/// with vanishing ratio; "out" requires either a Lipschitz lower bound on the
/// distance staying above the margin, or stable verified restorations that do.
pub fn sample_tangent_feasible(p: &Problem, xbar: &[f64], d: &[f64], seed: u64) -> Membership {
    if norm2(d) == 0.0 {
        return Membership::In;
    }
    let ts: Vec<f64> = (0..6).map(|j| 1e-2 * libm::pow(2.0, -(j as f64))).collect();
    let opts = FeasOpts { seed, scan_radius: 1.0, starts: 1, penalty_iters: 120 };
    let mut ratios = Vec::new();
    let mut verified = Vec::new();
    let mut lower_ratios = Vec::new();
    let lip = local_lipschitz(p, xbar, d, &ts);
    for t in &ts {
        let x_t = axpy(xbar, *t, d);
        let residual = p.feasibility_residual(&x_t);
        if residual <= MEMBER_EPS {
            ratios.push(0.0);
            verified.push(true);
            lower_ratios.push(0.0);
            continue;
        }
        let r = feasibility_distance(p, &x_t, &opts);
        ratios.push(r.distance / t);
        verified.push(r.residual <= RESTORE_EPS);
        lower_ratios.push(residual / (lip * t));
    }
    let all_verified = verified.iter().all(|v| *v);
    let tail = ratios[ratios.len() - 1];
    if all_verified && (tail <= TANGENT_IN_TOL || log_slope(&ts, &ratios).map_or(false, |s| s <= -0.5))
    {
        return Membership::In;
    }
    let half = ratios.len() / 2;
    let lb_floor = lower_ratios[half..].iter().fold(f64::INFINITY, |m, r| f64::min(m, *r));
    if lb_floor >= TANGENT_OUT_MARGIN {
        return Membership::Out;
    }
    let ub_floor = ratios[half..].iter().fold(f64::INFINITY, |m, r| f64::min(m, *r));
    if all_verified && ub_floor >= TANGENT_OUT_MARGIN {
        return Membership::Out;
    }
    Membership::Borderline
}

/// Safety-factored bound on the local Lipschitz modulus of `dist(F(·), Γ)`
/// along the probe segment, from directional-derivative samples.
fn local_lipschitz(p: &Problem, xbar: &[f64], d: &[f64], ts: &[f64]) -> f64 {
    let n = p.n();
    let mut worst = 1.0f64;
    for t in ts {
        let x_t = axpy(xbar, *t, d);
        let mut frob = 0.0;
        for i in 0..n {
            let e = basis(n, i);
            for c in p.constraints() {
                let der = c.dir_derivative(&x_t, &e);
                frob += der * der;
            }
        }
        worst = f64::max(worst, libm::sqrt(frob));
    }
    2.0 * worst
}

/// Limiting normal cone estimate: the union of regular normal cones over an
/// exhaustive per-coordinate displacement pattern around `y`. Candidate
/// coordinates combine the point itself, small offsets, and every finite box
/// endpoint with its offsets, so each realizable nearby activity pattern is
/// hit at finite resolution.
pub fn sample_limiting_normals(set: &OrthoSet, y: &[f64], radii: &[f64]) -> CellUnion {
    let mut cells = Vec::new();
    for &r in radii {
        let cands: Vec<Vec<f64>> = (0..set.dim())
            .map(|i| {
                let mut c = vec![y[i], y[i] + r, y[i] - r];
                for b in set.boxes() {
                    let iv = &b.intervals[i];
                    if iv.lo.is_finite() {
                        c.push(iv.lo);
                        c.push(iv.lo + r);
                    }
                    if iv.hi.is_finite() {
                        c.push(iv.hi);
                        c.push(iv.hi - r);
                    }
                }
                c.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
                c.dedup();
                c
            })
            .collect();
        let mut point = vec![0.0; set.dim()];
        cross_product(&cands, 0, &mut point, &mut |pt| {
            if norm_inf(&sub(pt, y)) <= 10.0 * r && set.contains(pt, MEMBER_EPS) {
                if let Ok(reg) = regular_normal_cone(set, pt) {
                    cells.extend(reg.cells().iter().cloned());
                }
            }
        });
    }
    CellUnion::canonical(cells)
}

fn cross_product(
    cands: &[Vec<f64>],
    i: usize,
    point: &mut Vec<f64>,
    sink: &mut dyn FnMut(&[f64]),
) {
    if i == cands.len() {
        sink(point);
        return;
    }
    for &v in &cands[i] {
        point[i] = v;
        cross_product(cands, i + 1, point, sink);
    }
}

/// Directional limiting normal cone estimate: regular cones at ray points
/// `y + t(w + cap·pattern)` for sign patterns and shrinking caps. A zero `w`
/// degenerates to the plain limiting estimate.
pub fn sample_dir_limiting_normals(
    set: &OrthoSet,
    y: &[f64],
    w: &[f64],
    radii: &[f64],
) -> CellUnion {
    let nw = norm2(w);
    if nw == 0.0 {
        return sample_limiting_normals(set, y, radii);
    }
    let dim = set.dim();
    let mut cells = Vec::new();
    let mut pattern = vec![0i8; dim];
    for &t in radii {
        for cap_frac in [0.0, 0.03, 0.1, 0.3] {
            let cap = cap_frac * nw;
            sign_patterns(dim, &mut pattern, 0, &mut |pat| {
                let dir: Vec<f64> =
                    w.iter().zip(pat).map(|(wi, p)| wi + cap * (*p as f64)).collect();
                let pt = axpy(y, t, &dir);
                if set.contains(&pt, MEMBER_EPS) {
                    if let Ok(reg) = regular_normal_cone(set, &pt) {
                        cells.extend(reg.cells().iter().cloned());
                    }
                }
            });
        }
    }
    CellUnion::canonical(cells)
}

fn sign_patterns(dim: usize, pattern: &mut Vec<i8>, i: usize, sink: &mut dyn FnMut(&[i8])) {
    if i == dim {
        sink(pattern);
        return;
    }
    for s in [0i8, 1, -1] {
        pattern[i] = s;
        sign_patterns(dim, pattern, i + 1, sink);
    }
}

/// Subdifferential point cloud: gradients of `sign·e` at nearby points where
/// the expression is differentiable, optionally restricted to caps around a
/// direction. The cloud sees branch gradients, never interior convex
/// combinations, so exact sets are expected to contain it, not equal it.
pub fn sample_subdiff(
    e: &Expr,
    x: &[f64],
    sign: i8,
    d: Option<&[f64]>,
    r0: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = x.len();
    let dirs = sphere_grid(n, if n <= 2 { 24 } else { 60 }, seed);
    let mut cloud: Vec<Vec<f64>> = Vec::new();
    let mut push = |g: Vec<f64>| {
        if !cloud.iter().any(|c| norm_inf(&sub(c, &g)) <= 1e-6) {
            cloud.push(g);
        }
    };
    for j in 0..4 {
        let t = r0 * libm::pow(2.0, -(j as f64));
        match d {
            None => {
                for u in &dirs {
                    let pt = axpy(x, t, u);
                    if let Some(g) = e.grad(&pt) {
                        push(g.iter().map(|gi| f64::from(sign) * gi).collect());
                    }
                }
            }
            Some(d) => {
                for cap in [0.0, 0.1, 0.3] {
                    for u in &dirs {
                        let dir: Vec<f64> =
                            d.iter().zip(u).map(|(di, ui)| di + cap * ui).collect();
                        let pt = axpy(x, t, &dir);
                        if let Some(g) = e.grad(&pt) {
                            push(g.iter().map(|gi| f64::from(sign) * gi).collect());
                        }
                    }
                }
            }
        }
    }
    cloud
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::limiting_normal_cone;

    const NEG: f64 = f64::NEG_INFINITY;

    #[test]
    fn sphere_grid_shapes() {
        assert_eq!(sphere_grid(1, 10, 0).len(), 2);
        let g2 = sphere_grid(2, 16, 0);
        assert_eq!(g2.len(), 16);
        for u in &g2 {
            assert!(libm::fabs(norm2(u) - 1.0) < 1e-12);
        }
        let g4 = sphere_grid(4, 32, 3);
        assert_eq!(g4.len(), 32);
        assert_eq!(g4, sphere_grid(4, 32, 3));
        for u in &g4 {
            assert!(libm::fabs(norm2(u) - 1.0) < 1e-12);
        }
    }

    #[test]
    fn log_slope_recovers_power_laws() {
        let xs: Vec<f64> = (1..8).map(|k| 1.0 / k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let s = log_slope(&xs, &ys).unwrap();
        assert!(libm::fabs(s - 2.0) < 1e-9);
    }

    #[test]
    fn orthoset_tangent_ray_memberships() {
        let s = OrthoSet::single(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(sample_tangent_orthoset(&s, &[0.0, 0.0], &[1.0, 1.0]), Membership::In);
        assert_eq!(sample_tangent_orthoset(&s, &[0.0, 0.0], &[-1.0, 0.5]), Membership::Out);
        assert_eq!(sample_tangent_orthoset(&s, &[0.0, 0.0], &[0.0, 0.0]), Membership::In);
    }

    #[test]
    fn sampled_limiting_normals_match_exact_enumeration() {
        let s = OrthoSet::union(&[&[(NEG, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (NEG, 0.0)]]).unwrap();
        let sampled = sample_limiting_normals(&s, &[0.0, 0.0], &[1e-3, 1e-5]);
        let exact = limiting_normal_cone(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(sampled, exact);
    }

    #[test]
    fn sampled_dir_normals_on_mixed_box() {
        use crate::cones::{SignCell, Tag};
        let s = OrthoSet::single(&[(NEG, 0.0), (NEG, 0.0), (0.0, 0.0)]).unwrap();
        let c = sample_dir_limiting_normals(&s, &[0.0; 3], &[0.0, -1.0, 0.0], &[1e-2, 1e-3]);
        assert_eq!(
            c.cells(),
            &[SignCell::new(alloc::vec![Tag::NonNeg, Tag::Zero, Tag::Free])]
        );
        let out = sample_dir_limiting_normals(&s, &[0.0; 3], &[1.0, 0.0, 0.0], &[1e-2, 1e-3]);
        assert!(out.is_empty_set());
    }

    #[test]
    fn subdiff_cloud_sees_both_branches_of_abs() {
        let e = Expr::Abs(alloc::boxed::Box::new(Expr::Var(0)));
        let cloud = sample_subdiff(&e, &[0.0], 1, None, 1e-3, 0);
        assert_eq!(cloud.len(), 2);
        assert!(cloud.iter().any(|g| libm::fabs(g[0] - 1.0) < 1e-9));
        assert!(cloud.iter().any(|g| libm::fabs(g[0] + 1.0) < 1e-9));
    }
}
