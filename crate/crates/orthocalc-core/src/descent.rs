//! Local minimization and feasibility restoration.
//!
//! Two consumers drive the design. Penalty-based sequence generation needs a
//! plain Armijo descent on a smooth-enough merit function. Metric-subregularity
//! probing needs an upper bound on the distance from a point to the feasible
//! set `X = F^{-1}(Γ)`; that bound comes from the best verified-feasible point
//! among several restoration strategies: an anchored quadratic-penalty ladder,
//! single-coordinate restorations, and a decimal snap polish. Every candidate
//! is accepted only after its constraint residual is rechecked, so a snapped
//! point can never fake feasibility; it can only sharpen the bound.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::MEMBER_EPS;
use crate::problem::Problem;
use crate::vecops::{axpy, dist2, norm2, sub, zeros};

/// Residual below which a restored point counts as feasible for distance
/// bounds.
pub const RESTORE_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DescentOpts {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step0: f64,
}

impl Default for DescentOpts {
    fn default() -> Self {
        DescentOpts { max_iters: 4000, grad_tol: 1e-12, step0: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct DescentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
}

/// Gradient descent with Armijo backtracking. The step memory doubles after a
/// full step is accepted, so well-scaled problems run near the natural step.
pub fn armijo_descent(
    obj: &mut dyn FnMut(&[f64]) -> f64,
    grad: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    opts: &DescentOpts,
) -> DescentResult {
    let mut x = x0.to_vec();
    let mut fx = obj(&x);
    let mut step = opts.step0;
    let mut iters = 0;
    let mut gnorm = f64::INFINITY;
    while iters < opts.max_iters {
        let g = grad(&x);
        gnorm = norm2(&g);
        if gnorm <= opts.grad_tol {
            break;
        }
        let mut t = step;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = axpy(&x, -t, &g);
            let fc = obj(&cand);
            if fc <= fx - 1e-4 * t * gnorm * gnorm {
                x = cand;
                fx = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        step = if t >= step { step * 2.0 } else { t * 2.0 };
        iters += 1;
    }
    DescentResult { x, value: fx, grad_norm: gnorm, iters }
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(obj: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut g = zeros(n);
    let mut xp = x.to_vec();
    for i in 0..n {
        let hi = h * f64::max(1.0, libm::fabs(x[i]));
        xp[i] = x[i] + hi;
        let fp = obj(&xp);
        xp[i] = x[i] - hi;
        let fm = obj(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    g
}

#[derive(Clone, Debug)]
pub struct FeasOpts {
    pub seed: u64,
    /// Half-width of the single-coordinate restoration scan.
    pub scan_radius: f64,
    pub starts: usize,
    /// Iteration cap per rung of the penalty ladder; grid-scale callers lower
    /// it and rely on the restoration and snap phases for the exact digits.
    pub penalty_iters: usize,
}

impl Default for FeasOpts {
    fn default() -> Self {
        FeasOpts { seed: 0, scan_radius: 2.0, starts: 3, penalty_iters: 400 }
    }
}

#[derive(Clone, Debug)]
pub struct FeasResult {
    /// `‖point − x‖`; an upper bound on dist(x, X) when `residual` is at
    /// [`RESTORE_EPS`] level.
    pub distance: f64,
    pub point: Vec<f64>,
    pub residual: f64,
}

/// Upper bound on the distance from `x` to the feasible set, with the point
/// realizing it. Gathers candidates from the penalty ladder, per-coordinate
/// restoration, and snap polish, then keeps the closest verified-feasible one;
/// if none verifies, the least-infeasible candidate is reported instead.
pub fn feasibility_distance(p: &Problem, x: &[f64], opts: &FeasOpts) -> FeasResult {
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if p.feasibility_residual(x) <= RESTORE_EPS {
        return FeasResult { distance: 0.0, point: x.to_vec(), residual: p.feasibility_residual(x) };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = 1e-2 * (1.0 + crate::vecops::norm_inf(x));
    for s in 0..opts.starts.max(1) {
        let start: Vec<f64> = if s == 0 {
            x.to_vec()
        } else {
            x.iter().map(|xi| xi + scale * centered(&mut rng)).collect()
        };
        candidates.push(penalty_restore(p, x, &start, opts.penalty_iters));
    }
    for j in 0..p.n() {
        if let Some(c) = coordinate_restore(p, x, j, opts.scan_radius) {
            candidates.push(c);
        }
    }
    // Full snaps clean corner points; single-coordinate snaps preserve exact
    // distances when a neighboring coordinate would also tolerate a snap that
    // drags the point away from `x`.
    let mut snapped: Vec<Vec<f64>> = Vec::new();
    for c in &candidates {
        snapped.push(snap_polish(p, c));
        for j in 0..p.n() {
            let mut one = c.clone();
            snap_coordinate(p, &mut one, j);
            snapped.push(one);
        }
    }
    candidates.extend(snapped);
    let mut best_feasible: Option<(f64, Vec<f64>, f64)> = None;
    let mut best_any: Option<(f64, Vec<f64>, f64)> = None;
    for c in candidates {
        let r = p.feasibility_residual(&c);
        let d = dist2(&c, x);
        if r <= RESTORE_EPS {
            if best_feasible.as_ref().map_or(true, |(bd, _, _)| d < *bd) {
                best_feasible = Some((d, c.clone(), r));
            }
        }
        if best_any.as_ref().map_or(true, |(_, _, br)| r < *br) {
            best_any = Some((d, c, r));
        }
    }
    let (distance, point, residual) =
        best_feasible.or(best_any).expect("at least one candidate is always produced");
    FeasResult { distance, point, residual }
}

fn centered(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (2.0 / (1u64 << 53) as f64) - 1.0
}

/// Anchored penalty ladder: minimize `½‖z−x‖² + (ρ/2)·dist²(F(z),Γ)` for
/// increasing ρ, then polish the pure residual.
fn penalty_restore(p: &Problem, anchor: &[f64], start: &[f64], iters: usize) -> Vec<f64> {
    let mut z = start.to_vec();
    for rho in [1e2, 1e4, 1e6, 1e8] {
        if p.feasibility_residual(&z) <= RESTORE_EPS {
            break;
        }
        let mut obj = |v: &[f64]| {
            let d = p.gamma().distance(&p.eval_constraints(v));
            0.5 * dist2_sq(v, anchor) + 0.5 * rho * d * d
        };
        let mut grad = |v: &[f64]| penalty_grad(p, anchor, rho, v);
        let r = armijo_descent(
            &mut obj,
            &mut grad,
            &z,
            &DescentOpts { max_iters: iters, grad_tol: 1e-12, step0: 1.0 / rho },
        );
        z = r.x;
    }
    // Pure-residual polish pulls the iterate the last stretch onto the set.
    let mut obj = |v: &[f64]| {
        let d = p.gamma().distance(&p.eval_constraints(v));
        d * d
    };
    let mut grad = |v: &[f64]| residual_grad(p, v);
    let r = armijo_descent(
        &mut obj,
        &mut grad,
        &z,
        &DescentOpts { max_iters: 2 * iters, grad_tol: 1e-16, step0: 1.0 },
    );
    r.x
}

fn dist2_sq(a: &[f64], b: &[f64]) -> f64 {
    let d = dist2(a, b);
    d * d
}

fn penalty_grad(p: &Problem, anchor: &[f64], rho: f64, v: &[f64]) -> Vec<f64> {
    let mut g = sub(v, anchor);
    let rg = residual_grad(p, v);
    for i in 0..g.len() {
        g[i] += 0.5 * rho * rg[i];
    }
    g
}

/// Gradient of `dist²(F(·),Γ)`; analytic through the projection residual when
/// every component gradient exists, finite differences otherwise (kinks).
fn residual_grad(p: &Problem, v: &[f64]) -> Vec<f64> {
    let y = p.eval_constraints(v);
    let (proj, _) = p.gamma().project(&y);
    let res = sub(&y, &proj);
    let mut g = zeros(v.len());
    let mut analytic = true;
    for (i, e) in p.constraints().iter().enumerate() {
        if res[i] == 0.0 {
            continue;
        }
        match e.grad(v) {
            Some(ge) => {
                for k in 0..g.len() {
                    g[k] += 2.0 * res[i] * ge[k];
                }
            }
            None => {
                analytic = false;
                break;
            }
        }
    }
    if analytic {
        return g;
    }
    let mut obj = |z: &[f64]| {
        let d = p.gamma().distance(&p.eval_constraints(z));
        d * d
    };
    fd_gradient(&mut obj, v, 1e-7)
}

/// Restore feasibility by moving a single coordinate: coarse scan of the
/// squared residual over a symmetric window, then ternary refinement of the
/// best bracket.
fn coordinate_restore(p: &Problem, x: &[f64], j: usize, radius: f64) -> Option<Vec<f64>> {
    let mut z = x.to_vec();
    let psi = |t: f64, z: &mut Vec<f64>| {
        z[j] = t;
        let d = p.gamma().distance(&p.eval_constraints(z));
        d * d
    };
    let nscan = 256;
    let mut best_t = x[j];
    let mut best_v = f64::INFINITY;
    for s in 0..=nscan {
        let t = x[j] - radius + 2.0 * radius * (s as f64) / (nscan as f64);
        let v = psi(t, &mut z);
        if v < best_v {
            best_v = v;
            best_t = t;
        }
    }
    let h = 2.0 * radius / (nscan as f64);
    let (mut a, mut b) = (best_t - h, best_t + h);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if psi(m1, &mut z) <= psi(m2, &mut z) {
            b = m2;
        } else {
            a = m1;
        }
    }
    z[j] = 0.5 * (a + b);
    Some(z)
}

/// Round coordinate `j` to the coarsest decimal that does not worsen the
/// residual. The rounding only replaces numerical noise like 0.9999999999 by
/// the intended endpoint value; a wrong snap raises the residual and is
/// dropped, and the caller re-verifies feasibility before trusting the point.
fn snap_coordinate(p: &Problem, out: &mut [f64], j: usize) {
    let orig = out[j];
    let current = p.feasibility_residual(out);
    for k in 0..=12u32 {
        let pow = libm::pow(10.0, k as f64);
        let snapped = libm::round(orig * pow) / pow;
        if snapped == orig {
            break;
        }
        let saved = out[j];
        out[j] = snapped;
        if p.feasibility_residual(out) <= f64::max(MEMBER_EPS, current) {
            break;
        }
        out[j] = saved;
    }
}

fn snap_polish(p: &Problem, z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    for j in 0..out.len() {
        snap_coordinate(p, &mut out, j);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::OrthoSet;
    use crate::expr::Expr;

    fn quad_bowl() -> (impl FnMut(&[f64]) -> f64, impl FnMut(&[f64]) -> Vec<f64>) {
        (
            |x: &[f64]| (x[0] - 3.0) * (x[0] - 3.0) + 2.0 * (x[1] + 1.0) * (x[1] + 1.0),
            |x: &[f64]| alloc::vec![2.0 * (x[0] - 3.0), 4.0 * (x[1] + 1.0)],
        )
    }

    #[test]
    fn armijo_reaches_quadratic_minimum() {
        let (mut f, mut g) = quad_bowl();
        let r = armijo_descent(&mut f, &mut g, &[10.0, 10.0], &DescentOpts::default());
        assert!(libm::fabs(r.x[0] - 3.0) < 1e-6);
        assert!(libm::fabs(r.x[1] + 1.0) < 1e-6);
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let (mut f, mut g) = quad_bowl();
        let x = [0.7, -2.3];
        let fd = fd_gradient(&mut f, &x, 1e-6);
        let an = g(&x);
        assert!(libm::fabs(fd[0] - an[0]) < 1e-5);
        assert!(libm::fabs(fd[1] - an[1]) < 1e-5);
    }

    #[test]
    fn distance_to_nonnegative_axes_is_exact() {
        // X = {x >= 0, x1*x2 = 0}: the nearest point to (1/k², 1/k) zeroes the
        // first coordinate.
        let p = Problem::new(
            2,
            Expr::Var(0),
            alloc::vec![
                Expr::Product(alloc::boxed::Box::new(Expr::Const(-1.0)), alloc::boxed::Box::new(Expr::Var(0))),
                Expr::Product(alloc::boxed::Box::new(Expr::Const(-1.0)), alloc::boxed::Box::new(Expr::Var(1))),
                Expr::Product(alloc::boxed::Box::new(Expr::Var(0)), alloc::boxed::Box::new(Expr::Var(1))),
            ],
            OrthoSet::single(&[
                (f64::NEG_INFINITY, 0.0),
                (f64::NEG_INFINITY, 0.0),
                (0.0, 0.0),
            ])
            .unwrap(),
        )
        .unwrap();
        for k in [4.0f64, 8.0, 16.0] {
            let x = [1.0 / (k * k), 1.0 / k];
            let r = feasibility_distance(&p, &x, &FeasOpts::default());
            assert!(r.residual <= RESTORE_EPS);
            assert!(libm::fabs(r.distance - 1.0 / (k * k)) <= 1e-12);
        }
    }

    #[test]
    fn distance_to_origin_through_flat_penalty() {
        // F = x1² + x2² <= 0 forces X = {0}; the quartic residual is flat, so
        // the snap polish has to land the exact origin.
        let p = Problem::new(
            2,
            Expr::Const(0.0),
            alloc::vec![Expr::Sum(alloc::vec![
                Expr::IntPow(alloc::boxed::Box::new(Expr::Var(0)), 2),
                Expr::IntPow(alloc::boxed::Box::new(Expr::Var(1)), 2),
            ])],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let x = [-0.05, -0.05];
        let r = feasibility_distance(&p, &x, &FeasOpts::default());
        assert!(r.residual <= RESTORE_EPS);
        assert!(libm::fabs(r.distance - libm::sqrt(2.0) * 0.05) <= 1e-9);
    }

    #[test]
    fn feasible_input_returns_zero_distance() {
        let p = Problem::new(
            1,
            Expr::Var(0),
            alloc::vec![Expr::Var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let r = feasibility_distance(&p, &[-0.3], &FeasOpts::default());
        assert_eq!(r.distance, 0.0);
    }
}
