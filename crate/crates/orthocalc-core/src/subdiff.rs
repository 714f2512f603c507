//! Limiting and directional limiting subdifferentials of the expression
//! language, with exactness bookkeeping.
//!
//! For the validated expression class every nonsmooth node sits outermost
//! (under sums and constant scalings only), so the subdifferential of
//! `sign * e` at a point follows from a short list of rules:
//!
//! * smooth point: the singleton `{sign * ∇e}`;
//! * `|u|` at a kink: the segment `conv{∇u, -∇u}` for positive sign, the pair
//!   `{∇u} ∪ {-∇u}` for negative sign;
//! * tied `max` under positive sign (and tied `min` under negative sign): the
//!   convex hull of the active gradients, always exact because inessential
//!   tied gradients already lie in the hull of the essential ones;
//! * tied `min` under positive sign (and `max` under negative): the finite set
//!   of active gradients; a gradient is certified by a strict first-order
//!   domination LP, and the result is flagged inexact if certification fails
//!   for some piece (the set stays an outer bound);
//! * sums: Minkowski sums, exact when at most one summand is nonsmooth at the
//!   point or when the nonsmooth summands have pairwise disjoint variable
//!   support (separable structure), an outer bound otherwise.
//!
//! Directional versions keep only branches active along the direction first
//! and fall back to the limiting rule among directionally tied branches; over
//! box-constrained pieces this fallback is itself exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::expr::{Expr, KINK_EPS};
use crate::poly::{PolyUnion, Polytope};
use crate::simplex::{Cmp, ExactLp};
use crate::vecops;

/// Directional ties: two branch directional derivatives within this tolerance
/// count as tied and trigger the limiting fallback on the tied branches.
pub const DIR_TIE_EPS: f64 = 1e-12;

/// Subdifferential computation failures.
#[derive(Clone, Debug, PartialEq)]
pub enum SubdiffError {
    /// Nonsmooth material under a non-constant product, power, or primitive;
    /// no finite exact rule applies to this shape.
    UnsupportedAst,
    /// `sign` outside `{-1, +1}`.
    BadSign(i8),
}

impl core::fmt::Display for SubdiffError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SubdiffError::UnsupportedAst => write!(
                f,
                "nonsmooth subexpression under a non-constant product, power, or primitive"
            ),
            SubdiffError::BadSign(s) => write!(f, "sign must be +1 or -1, got {s}"),
        }
    }
}

impl core::error::Error for SubdiffError {}

fn check_sign(sign: i8) -> Result<f64, SubdiffError> {
    match sign {
        1 => Ok(1.0),
        -1 => Ok(-1.0),
        other => Err(SubdiffError::BadSign(other)),
    }
}

/// Limiting subdifferential of `sign * e` at `x` as a union of polytopes.
pub fn limiting_subdiff(e: &Expr, x: &[f64], sign: i8) -> Result<PolyUnion, SubdiffError> {
    let s = check_sign(sign)?;
    if let Some(g) = e.grad(x) {
        return Ok(PolyUnion::singleton(vecops::scale(&g, s)));
    }
    match e {
        Expr::Sum(args) => {
            let parts = args
                .iter()
                .map(|a| limiting_subdiff(a, x, sign))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(sum_parts(args, &parts, x))
        }
        Expr::Product(a, b) => match (&**a, &**b) {
            (Expr::Const(c), inner) | (inner, Expr::Const(c)) => scaled_rule(inner, x, sign, *c),
            _ => Err(SubdiffError::UnsupportedAst),
        },
        Expr::Abs(inner) => {
            let g = inner.grad(x).ok_or(SubdiffError::UnsupportedAst)?;
            Ok(abs_kink_rule(&g, sign))
        }
        Expr::Max(args) | Expr::Min(args) => {
            let act = e.active_args(x);
            let grads: Vec<Vec<f64>> = act
                .iter()
                .map(|i| args[*i].grad(x).ok_or(SubdiffError::UnsupportedAst))
                .collect::<Result<_, _>>()?;
            let max_like = matches!(e, Expr::Max(_)) == (sign == 1);
            Ok(tie_rule(&grads, s, max_like))
        }
        _ => Err(SubdiffError::UnsupportedAst),
    }
}

/// Directional limiting subdifferential of `sign * e` at `x` in direction `d`.
/// `d = 0` reduces to the limiting subdifferential.
pub fn dir_limiting_subdiff(
    e: &Expr,
    x: &[f64],
    d: &[f64],
    sign: i8,
) -> Result<PolyUnion, SubdiffError> {
    let s = check_sign(sign)?;
    if vecops::norm2(d) == 0.0 {
        return limiting_subdiff(e, x, sign);
    }
    if let Some(g) = e.grad(x) {
        return Ok(PolyUnion::singleton(vecops::scale(&g, s)));
    }
    match e {
        Expr::Sum(args) => {
            let parts = args
                .iter()
                .map(|a| dir_limiting_subdiff(a, x, d, sign))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(sum_parts(args, &parts, x))
        }
        Expr::Product(a, b) => match (&**a, &**b) {
            (Expr::Const(c), inner) | (inner, Expr::Const(c)) => {
                scaled_dir_rule(inner, x, d, sign, *c)
            }
            _ => Err(SubdiffError::UnsupportedAst),
        },
        Expr::Abs(inner) => {
            let g = inner.grad(x).ok_or(SubdiffError::UnsupportedAst)?;
            let du = vecops::dot(&g, d);
            if du > DIR_TIE_EPS {
                Ok(PolyUnion::singleton(vecops::scale(&g, s)))
            } else if du < -DIR_TIE_EPS {
                Ok(PolyUnion::singleton(vecops::scale(&g, -s)))
            } else {
                // The kink surface is tangent to d; every nearby branch
                // pattern stays reachable along d, so the limiting rule is
                // exact here.
                Ok(abs_kink_rule(&g, sign))
            }
        }
        Expr::Max(args) | Expr::Min(args) => {
            let act = e.active_args(x);
            let grads: Vec<Vec<f64>> = act
                .iter()
                .map(|i| args[*i].grad(x).ok_or(SubdiffError::UnsupportedAst))
                .collect::<Result<_, _>>()?;
            let dv: Vec<f64> = grads.iter().map(|g| vecops::dot(g, d)).collect();
            let best = if matches!(e, Expr::Max(_)) {
                dv.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else {
                dv.iter().copied().fold(f64::INFINITY, f64::min)
            };
            let tied: Vec<Vec<f64>> = grads
                .iter()
                .zip(&dv)
                .filter(|(_, v)| libm::fabs(**v - best) <= DIR_TIE_EPS)
                .map(|(g, _)| g.clone())
                .collect();
            if tied.len() == 1 {
                return Ok(PolyUnion::singleton(vecops::scale(&tied[0], s)));
            }
            let max_like = matches!(e, Expr::Max(_)) == (sign == 1);
            Ok(tie_rule(&tied, s, max_like))
        }
        _ => Err(SubdiffError::UnsupportedAst),
    }
}

/// `|u|` at a kink: segment for positive sign, branch pair for negative sign.
fn abs_kink_rule(g: &[f64], sign: i8) -> PolyUnion {
    let pos = g.to_vec();
    let neg = vecops::scale(g, -1.0);
    if sign == 1 {
        PolyUnion::exact_from(vec![Polytope::hull(vec![pos, neg])])
    } else {
        PolyUnion::exact_from(vec![Polytope::point(pos), Polytope::point(neg)])
    }
}

/// Tied `max`/`min` rule on active gradients `grads` of the *unsigned*
/// branches, producing the subdifferential of the signed expression:
/// `max_like` selects the hull rule (exact), otherwise the finite-set rule
/// with strict-domination certification.
fn tie_rule(grads: &[Vec<f64>], s: f64, max_like: bool) -> PolyUnion {
    let signed: Vec<Vec<f64>> = grads.iter().map(|g| vecops::scale(g, s)).collect();
    if max_like {
        PolyUnion::exact_from(vec![Polytope::hull(signed)])
    } else {
        let (points, exact) = finite_extreme_rule(&signed);
        PolyUnion { polys: points.into_iter().map(Polytope::point).collect(), exact }
    }
}

/// Finite-set rule for a pointwise minimum of smooth branches with gradients
/// `grads` (already sign-adjusted): the set of branch gradients, exact iff
/// every deduplicated gradient is certified essentially active by a strict
/// first-order domination LP (`exists d: (g - g') · d <= -1` for all others).
fn finite_extreme_rule(grads: &[Vec<f64>]) -> (Vec<Vec<f64>>, bool) {
    let mut unique: Vec<Vec<f64>> = Vec::new();
    for g in grads {
        if !unique
            .iter()
            .any(|u| u.iter().zip(g).all(|(a, b)| libm::fabs(a - b) <= KINK_EPS))
        {
            unique.push(g.clone());
        }
    }
    if unique.len() <= 1 {
        return (unique, true);
    }
    let n = unique[0].len();
    let mut all_certified = true;
    for (i, g) in unique.iter().enumerate() {
        let mut lp = ExactLp::new(n, 0);
        for (j, other) in unique.iter().enumerate() {
            if j != i {
                lp.push_row_f64(&vecops::sub(g, other), &[], Cmp::Le, -1.0);
            }
        }
        if lp.solve().is_none() {
            all_certified = false;
        }
    }
    (unique, all_certified)
}

/// Constant-factor rule: `∂(sign * c * e) = |c| ∂(sgn(c) * sign * e)`.
fn scaled_rule(inner: &Expr, x: &[f64], sign: i8, c: f64) -> Result<PolyUnion, SubdiffError> {
    if c == 0.0 {
        return Ok(PolyUnion::singleton(vecops::zeros(x.len())));
    }
    let flipped = if c > 0.0 { sign } else { -sign };
    Ok(limiting_subdiff(inner, x, flipped)?.scale(libm::fabs(c)))
}

fn scaled_dir_rule(
    inner: &Expr,
    x: &[f64],
    d: &[f64],
    sign: i8,
    c: f64,
) -> Result<PolyUnion, SubdiffError> {
    if c == 0.0 {
        return Ok(PolyUnion::singleton(vecops::zeros(x.len())));
    }
    let flipped = if c > 0.0 { sign } else { -sign };
    Ok(dir_limiting_subdiff(inner, x, d, flipped)?.scale(libm::fabs(c)))
}

/// Minkowski sum of summand subdifferentials with the sum-rule exactness
/// analysis: equality needs at most one nonsmooth summand or pairwise disjoint
/// variable support among the nonsmooth summands.
fn sum_parts(args: &[Expr], parts: &[PolyUnion], x: &[f64]) -> PolyUnion {
    let n = x.len();
    let mut acc = PolyUnion::singleton(vecops::zeros(n));
    for p in parts {
        acc = acc.minkowski(p);
    }
    let nonsmooth: Vec<&Expr> =
        args.iter().filter(|a| a.grad(x).is_none()).collect();
    if nonsmooth.len() > 1 {
        let supports: Vec<_> = nonsmooth.iter().map(|a| a.vars()).collect();
        let disjoint = supports.iter().enumerate().all(|(i, si)| {
            supports
                .iter()
                .skip(i + 1)
                .all(|sj| si.intersection(sj).next().is_none())
        });
        if !disjoint {
            acc.exact = false;
        }
    }
    acc
}

/// Scalarization subdifferential `Σ |λ_i| ∂(sgn(λ_i) F_i)(x)` (directional in
/// `d` when given), with the equality flag recording whether this sum equals
/// the subdifferential of `<λ, F>` rather than only bounding it.
pub fn scalarization_subdiff(
    components: &[Expr],
    lambda: &[f64],
    x: &[f64],
    d: Option<&[f64]>,
) -> Result<Scalarization, SubdiffError> {
    assert_eq!(components.len(), lambda.len());
    let n = x.len();
    let mut set = PolyUnion::singleton(vecops::zeros(n));
    let mut component_exact = true;
    let mut nonsmooth_supports = Vec::new();
    for (fi, li) in components.iter().zip(lambda) {
        if *li == 0.0 {
            continue;
        }
        let sign: i8 = if *li > 0.0 { 1 } else { -1 };
        let part = match d {
            Some(dir) => dir_limiting_subdiff(fi, x, dir, sign)?,
            None => limiting_subdiff(fi, x, sign)?,
        };
        component_exact &= part.exact;
        if fi.grad(x).is_none() {
            nonsmooth_supports.push(fi.vars());
        }
        set = set.minkowski(&part.scale(libm::fabs(*li)));
    }
    let disjoint = nonsmooth_supports.iter().enumerate().all(|(i, si)| {
        nonsmooth_supports
            .iter()
            .skip(i + 1)
            .all(|sj| si.intersection(sj).next().is_none())
    });
    let sum_rule_ok = nonsmooth_supports.len() <= 1 || disjoint;
    let equality = component_exact && sum_rule_ok;
    set.exact = equality;
    Ok(Scalarization { set, equality })
}

/// Result of [`scalarization_subdiff`].
#[derive(Clone, Debug)]
pub struct Scalarization {
    pub set: PolyUnion,
    /// True when the computed set provably equals `∂<λ, F>(x)` (or its
    /// directional counterpart); false marks an outer estimate.
    pub equality: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::union_match_gap;
    use alloc::boxed::Box;

    fn bx(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    fn union_of_points(pts: &[&[f64]]) -> PolyUnion {
        PolyUnion::exact_from(pts.iter().map(|p| Polytope::point(p.to_vec())).collect())
    }

    /// x1 + |x2| - x2 in two variables.
    fn abs_example() -> Expr {
        Expr::Sum(vec![
            Expr::Var(0),
            Expr::Abs(bx(Expr::Var(1))),
            Expr::Affine { coeffs: vec![0.0, -1.0], offset: 0.0 },
        ])
    }

    #[test]
    fn abs_sum_positive_sign_gives_a_segment() {
        let e = abs_example();
        let sd = limiting_subdiff(&e, &[5.0, 0.0], 1).unwrap();
        assert!(sd.exact);
        let expected = PolyUnion::exact_from(vec![Polytope::hull(vec![
            vec![1.0, 0.0],
            vec![1.0, -2.0],
        ])]);
        assert!(union_match_gap(&sd, &expected) <= 1e-12);
    }

    #[test]
    fn abs_sum_negative_sign_gives_two_points() {
        let e = abs_example();
        let sd = limiting_subdiff(&e, &[5.0, 0.0], -1).unwrap();
        assert!(sd.exact);
        let expected = union_of_points(&[&[-1.0, 0.0], &[-1.0, 2.0]]);
        assert!(union_match_gap(&sd, &expected) <= 1e-12);
    }

    #[test]
    fn tied_max_hull_rule() {
        // max(x1^2, x1) - x2 at x1 = 1.
        let e = Expr::Sum(vec![
            Expr::Max(vec![Expr::IntPow(bx(Expr::Var(0)), 2), Expr::Var(0)]),
            Expr::Affine { coeffs: vec![0.0, -1.0], offset: 0.0 },
        ]);
        let sd = limiting_subdiff(&e, &[1.0, 7.0], 1).unwrap();
        assert!(sd.exact);
        let expected = PolyUnion::exact_from(vec![Polytope::hull(vec![
            vec![2.0, -1.0],
            vec![1.0, -1.0],
        ])]);
        assert!(union_match_gap(&sd, &expected) <= 1e-12);
    }

    #[test]
    fn tied_min_finite_rule_certifies_distinct_gradients() {
        // min(x1^2, -x1) at the origin of R^2.
        let e = Expr::Min(vec![
            Expr::IntPow(bx(Expr::Var(0)), 2),
            Expr::Affine { coeffs: vec![-1.0, 0.0], offset: 0.0 },
        ]);
        let sd = limiting_subdiff(&e, &[0.0, 0.0], 1).unwrap();
        assert!(sd.exact);
        let expected = union_of_points(&[&[0.0, 0.0], &[-1.0, 0.0]]);
        assert!(union_match_gap(&sd, &expected) <= 1e-12);
    }

    #[test]
    fn inessential_middle_branch_is_flagged() {
        // min(x, 2x, -x) at 0: the branch x is never the strict minimum, so
        // the finite rule keeps its gradient but drops the exactness claim.
        let e = Expr::Min(vec![
            Expr::Var(0),
            Expr::Affine { coeffs: vec![2.0], offset: 0.0 },
            Expr::Affine { coeffs: vec![-1.0], offset: 0.0 },
        ]);
        let sd = limiting_subdiff(&e, &[0.0], 1).unwrap();
        assert!(!sd.exact);
        assert_eq!(sd.polys.len(), 3);
    }

    #[test]
    fn directional_abs_follows_the_active_branch() {
        let e = Expr::Abs(bx(Expr::Var(1)));
        let x = [0.0, 0.0];
        let up = dir_limiting_subdiff(&e, &x, &[0.0, 1.0], 1).unwrap();
        assert!(union_match_gap(&up, &union_of_points(&[&[0.0, 1.0]])) <= 1e-12);
        let down = dir_limiting_subdiff(&e, &x, &[0.0, -1.0], 1).unwrap();
        assert!(union_match_gap(&down, &union_of_points(&[&[0.0, -1.0]])) <= 1e-12);
        // Tangent to the kink: full limiting set.
        let along = dir_limiting_subdiff(&e, &x, &[1.0, 0.0], 1).unwrap();
        let expected =
            PolyUnion::exact_from(vec![Polytope::hull(vec![vec![0.0, 1.0], vec![0.0, -1.0]])]);
        assert!(union_match_gap(&along, &expected) <= 1e-12);
    }

    #[test]
    fn scalarization_example_with_mixed_signs() {
        // F = (g(x1) - x2 - x3 - 1, x1 + |x2| - x2 - 1, -x3) at (1, 0, 0)
        // with lambda = (1, -2, 0).
        let g = Expr::SmoothPrim(crate::expr::Prim::SqrtTangent { t0: 0.25 }, bx(Expr::Var(0)));
        let f1 = Expr::Sum(vec![
            g,
            Expr::Affine { coeffs: vec![0.0, -1.0, -1.0], offset: -1.0 },
        ]);
        let f2 = Expr::Sum(vec![
            Expr::Var(0),
            Expr::Abs(bx(Expr::Var(1))),
            Expr::Affine { coeffs: vec![0.0, -1.0, 0.0], offset: -1.0 },
        ]);
        let f3 = Expr::Affine { coeffs: vec![0.0, 0.0, -1.0], offset: 0.0 };
        let out = scalarization_subdiff(
            &[f1, f2, f3],
            &[1.0, -2.0, 0.0],
            &[1.0, 0.0, 0.0],
            None,
        )
        .unwrap();
        assert!(out.equality);
        let expected = union_of_points(&[&[-1.5, -1.0, -1.0], &[-1.5, 3.0, -1.0]]);
        assert!(union_match_gap(&out.set, &expected) <= 1e-12);
    }

    #[test]
    fn entangled_nonsmooth_sum_loses_equality() {
        // |x1| + |x1 + x2| share variable 1.
        let e = Expr::Sum(vec![
            Expr::Abs(bx(Expr::Var(0))),
            Expr::Abs(bx(Expr::Affine { coeffs: vec![1.0, 1.0], offset: 0.0 })),
        ]);
        let sd = limiting_subdiff(&e, &[0.0, 0.0], 1).unwrap();
        assert!(!sd.exact);
        // Separable pair keeps equality.
        let e = Expr::Sum(vec![
            Expr::Abs(bx(Expr::Var(0))),
            Expr::Abs(bx(Expr::Var(1))),
        ]);
        let sd = limiting_subdiff(&e, &[0.0, 0.0], 1).unwrap();
        assert!(sd.exact);
    }
}
