//! Piecewise-smooth scalar expressions.
//!
//! [`Expr`] is the expression language for objective and constraint components.
//! Smooth material (affine forms, products, integer powers, C1 primitives) may
//! be combined freely; nonsmooth nodes ([`Expr::Abs`], [`Expr::Max`],
//! [`Expr::Min`]) accept only smooth arguments, so every expression is a
//! piecewise composition of C1 pieces glued along kink loci. This shape is what
//! makes the subdifferential rules in [`crate::subdiff`] exact.
//!
//! The operations provided here are purely pointwise: evaluation, gradients
//! where the expression is differentiable, one-sided directional derivatives
//! everywhere, variable support, and the first-order branch structure of
//! `d ↦ e'(x; d)` used to enumerate linearization cones.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::vecops;

/// Absolute tolerance deciding whether an inner value sits on a kink.
///
/// `Abs(u)` counts as nonsmooth at `x` iff `|u(x)| <= KINK_EPS`; max/min ties
/// are values within `KINK_EPS` of the extreme value. Corpus data produces
/// exact zeros at kinks, while sampled points miss kinks by the sampling
/// radius, so any value well below both scales works.
pub const KINK_EPS: f64 = 1e-12;

/// Tolerance for the C1 glue check of polynomial splines: values and first
/// derivatives of adjacent pieces must agree to this at every knot.
pub const SPLINE_C1_EPS: f64 = 1e-9;

/// A C1 primitive applied to an inner smooth expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Prim {
    /// Square root on `[t0, ∞)` extended below `t0` by its tangent line, so
    /// the function is total and C1. Requires `t0 > 0`.
    SqrtTangent { t0: f64 },
    /// C1 piecewise polynomial.
    Spline(Spline),
}

impl Prim {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Prim::SqrtTangent { t0 } => {
                if t >= *t0 {
                    libm::sqrt(t)
                } else {
                    let r = libm::sqrt(*t0);
                    r + (t - t0) / (2.0 * r)
                }
            }
            Prim::Spline(s) => s.eval(t),
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            Prim::SqrtTangent { t0 } => {
                let u = if t >= *t0 { t } else { *t0 };
                1.0 / (2.0 * libm::sqrt(u))
            }
            Prim::Spline(s) => s.deriv(t),
        }
    }
}

/// C1 piecewise polynomial on knot cells `(-∞,k_0], [k_0,k_1], …, [k_m,∞)`.
///
/// `pieces.len() == knots.len() + 1`; piece `i` is the coefficient list
/// (constant term first) governing the i-th cell. Construction via
/// [`Spline::new`] verifies strictly increasing knots and C1 glue.
#[derive(Clone, Debug, PartialEq)]
pub struct Spline {
    knots: Vec<f64>,
    pieces: Vec<Vec<f64>>,
}

impl Spline {
    pub fn new(knots: Vec<f64>, pieces: Vec<Vec<f64>>) -> Result<Self, ExprError> {
        if pieces.len() != knots.len() + 1 {
            return Err(ExprError::MalformedSpline(String::from(
                "piece count must be knot count plus one",
            )));
        }
        if pieces.iter().any(|p| p.is_empty()) {
            return Err(ExprError::MalformedSpline(String::from("empty coefficient list")));
        }
        for w in knots.windows(2) {
            if !(w[0] < w[1]) {
                return Err(ExprError::MalformedSpline(String::from(
                    "knots must be strictly increasing",
                )));
            }
        }
        let s = Spline { knots, pieces };
        for (i, k) in s.knots.iter().enumerate() {
            let v0 = poly_eval(&s.pieces[i], *k);
            let v1 = poly_eval(&s.pieces[i + 1], *k);
            let d0 = poly_deriv(&s.pieces[i], *k);
            let d1 = poly_deriv(&s.pieces[i + 1], *k);
            if libm::fabs(v0 - v1) > SPLINE_C1_EPS || libm::fabs(d0 - d1) > SPLINE_C1_EPS {
                return Err(ExprError::MalformedSpline(String::from(
                    "pieces do not glue C1 at a knot",
                )));
            }
        }
        Ok(s)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    fn cell(&self, t: f64) -> usize {
        self.knots.iter().take_while(|k| t > **k).count()
    }

    pub fn eval(&self, t: f64) -> f64 {
        poly_eval(&self.pieces[self.cell(t)], t)
    }

    pub fn deriv(&self, t: f64) -> f64 {
        poly_deriv(&self.pieces[self.cell(t)], t)
    }
}

fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * t + ci)
}

fn poly_deriv(c: &[f64], t: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, ci)| acc * t + (i as f64) * ci)
}

/// Piecewise-smooth scalar expression in `n` variables.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    /// `coeffs · x + offset`; `coeffs.len()` must equal the declared dimension.
    Affine { coeffs: Vec<f64>, offset: f64 },
    Sum(Vec<Expr>),
    Product(alloc::boxed::Box<Expr>, alloc::boxed::Box<Expr>),
    /// `base^exp` with `exp >= 1`.
    IntPow(alloc::boxed::Box<Expr>, u32),
    SmoothPrim(Prim, alloc::boxed::Box<Expr>),
    Abs(alloc::boxed::Box<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
}

/// Structural validation failures.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprError {
    /// Variable index at or above the declared dimension.
    VarOutOfRange { index: usize, dim: usize },
    /// Affine coefficient list of the wrong length.
    AffineDimMismatch { got: usize, dim: usize },
    /// `IntPow` with exponent zero.
    ZeroExponent,
    /// `Max`/`Min` with no arguments.
    EmptyArgList,
    /// A nonsmooth node appears inside `Abs`, `Max`, `Min`, or a primitive.
    NestedNonsmooth,
    /// `SqrtTangent` with `t0 <= 0`.
    NonpositiveSqrtShift,
    /// Spline constraints violated (monotone knots, C1 glue, piece count).
    MalformedSpline(String),
}

impl core::fmt::Display for ExprError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ExprError::VarOutOfRange { index, dim } => {
                write!(f, "variable x{index} out of range for dimension {dim}")
            }
            ExprError::AffineDimMismatch { got, dim } => {
                write!(f, "affine coefficient list has length {got}, expected {dim}")
            }
            ExprError::ZeroExponent => write!(f, "integer power must have exponent >= 1"),
            ExprError::EmptyArgList => write!(f, "max/min needs at least one argument"),
            ExprError::NestedNonsmooth => {
                write!(f, "nonsmooth node nested inside abs/max/min or a primitive")
            }
            ExprError::NonpositiveSqrtShift => {
                write!(f, "sqrt tangent extension requires t0 > 0")
            }
            ExprError::MalformedSpline(msg) => write!(f, "malformed spline: {msg}"),
        }
    }
}

impl core::error::Error for ExprError {}

impl Expr {
    /// Structural validation against dimension `n`: variable ranges, affine
    /// lengths, exponent positivity, primitive constraints, and the class rule
    /// that arguments of `Abs`/`Max`/`Min` and primitive inners contain no
    /// nonsmooth node themselves.
    pub fn validate(&self, n: usize) -> Result<(), ExprError> {
        match self {
            Expr::Const(_) => Ok(()),
            Expr::Var(i) => {
                if *i < n {
                    Ok(())
                } else {
                    Err(ExprError::VarOutOfRange { index: *i, dim: n })
                }
            }
            Expr::Affine { coeffs, .. } => {
                if coeffs.len() == n {
                    Ok(())
                } else {
                    Err(ExprError::AffineDimMismatch { got: coeffs.len(), dim: n })
                }
            }
            Expr::Sum(args) => args.iter().try_for_each(|a| a.validate(n)),
            Expr::Product(a, b) => {
                a.validate(n)?;
                b.validate(n)
            }
            Expr::IntPow(base, p) => {
                if *p == 0 {
                    return Err(ExprError::ZeroExponent);
                }
                base.validate(n)
            }
            Expr::SmoothPrim(prim, inner) => {
                if let Prim::SqrtTangent { t0 } = prim {
                    if !(*t0 > 0.0) {
                        return Err(ExprError::NonpositiveSqrtShift);
                    }
                }
                if !inner.is_smooth_class() {
                    return Err(ExprError::NestedNonsmooth);
                }
                inner.validate(n)
            }
            Expr::Abs(inner) => {
                if !inner.is_smooth_class() {
                    return Err(ExprError::NestedNonsmooth);
                }
                inner.validate(n)
            }
            Expr::Max(args) | Expr::Min(args) => {
                if args.is_empty() {
                    return Err(ExprError::EmptyArgList);
                }
                if args.iter().any(|a| !a.is_smooth_class()) {
                    return Err(ExprError::NestedNonsmooth);
                }
                args.iter().try_for_each(|a| a.validate(n))
            }
        }
    }

    /// True when the subtree contains no `Abs`/`Max`/`Min` node, hence is C1
    /// wherever its primitives are.
    pub fn is_smooth_class(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Affine { .. } => true,
            Expr::Sum(args) => args.iter().all(Expr::is_smooth_class),
            Expr::Product(a, b) => a.is_smooth_class() && b.is_smooth_class(),
            Expr::IntPow(base, _) => base.is_smooth_class(),
            Expr::SmoothPrim(_, inner) => inner.is_smooth_class(),
            Expr::Abs(_) | Expr::Max(_) | Expr::Min(_) => false,
        }
    }

    /// Indices of variables occurring in the subtree.
    pub fn vars(&self) -> BTreeSet<usize> {
        let mut set = BTreeSet::new();
        self.collect_vars(&mut set);
        set
    }

    /// True when the expression is globally piecewise affine (affine pieces
    /// glued by abs/max/min). Such expressions define polyhedral constraint
    /// systems, which several checkers exploit for exact verdicts.
    pub fn is_piecewise_affine(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Affine { .. } => true,
            Expr::Sum(args) | Expr::Max(args) | Expr::Min(args) => {
                args.iter().all(Expr::is_piecewise_affine)
            }
            Expr::Abs(inner) => inner.is_piecewise_affine(),
            Expr::Product(a, b) => match (&**a, &**b) {
                (Expr::Const(_), e) | (e, Expr::Const(_)) => e.is_piecewise_affine(),
                _ => false,
            },
            Expr::IntPow(inner, p) => *p == 1 && inner.is_piecewise_affine(),
            Expr::SmoothPrim(..) => false,
        }
    }

    fn collect_vars(&self, set: &mut BTreeSet<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => {
                set.insert(*i);
            }
            Expr::Affine { coeffs, .. } => {
                for (i, c) in coeffs.iter().enumerate() {
                    if *c != 0.0 {
                        set.insert(i);
                    }
                }
            }
            Expr::Sum(args) | Expr::Max(args) | Expr::Min(args) => {
                args.iter().for_each(|a| a.collect_vars(set))
            }
            Expr::Product(a, b) => {
                a.collect_vars(set);
                b.collect_vars(set);
            }
            Expr::IntPow(base, _) => base.collect_vars(set),
            Expr::SmoothPrim(_, inner) => inner.collect_vars(set),
            Expr::Abs(inner) => inner.collect_vars(set),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Affine { coeffs, offset } => vecops::dot(coeffs, x) + offset,
            Expr::Sum(args) => args.iter().map(|a| a.eval(x)).sum(),
            Expr::Product(a, b) => a.eval(x) * b.eval(x),
            Expr::IntPow(base, p) => libm::pow(base.eval(x), *p as f64),
            Expr::SmoothPrim(prim, inner) => prim.eval(inner.eval(x)),
            Expr::Abs(inner) => libm::fabs(inner.eval(x)),
            Expr::Max(args) => args.iter().map(|a| a.eval(x)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(args) => args.iter().map(|a| a.eval(x)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Gradient at `x`, or `None` when the expression is not (verifiably)
    /// differentiable there. `Abs` at an inner zero and tied `Max`/`Min` with
    /// disagreeing branch gradients report `None`; ties whose branch gradients
    /// coincide within [`KINK_EPS`] are smooth. Nonsmooth material under a
    /// product or power is conservatively reported as `None`.
    pub fn grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = x.len();
        match self {
            Expr::Const(_) => Some(vecops::zeros(n)),
            Expr::Var(i) => Some(vecops::basis(n, *i)),
            Expr::Affine { coeffs, .. } => Some(coeffs.clone()),
            Expr::Sum(args) => {
                let mut g = vecops::zeros(n);
                for a in args {
                    let ga = a.grad(x)?;
                    g = vecops::add(&g, &ga);
                }
                Some(g)
            }
            Expr::Product(a, b) => {
                let ga = a.grad(x)?;
                let gb = b.grad(x)?;
                let (va, vb) = (a.eval(x), b.eval(x));
                Some(vecops::add(&vecops::scale(&ga, vb), &vecops::scale(&gb, va)))
            }
            Expr::IntPow(base, p) => {
                let gb = base.grad(x)?;
                let v = base.eval(x);
                let s = (*p as f64) * libm::pow(v, (*p - 1) as f64);
                Some(vecops::scale(&gb, s))
            }
            Expr::SmoothPrim(prim, inner) => {
                let gi = inner.grad(x)?;
                Some(vecops::scale(&gi, prim.deriv(inner.eval(x))))
            }
            Expr::Abs(inner) => {
                let v = inner.eval(x);
                if libm::fabs(v) <= KINK_EPS {
                    return None;
                }
                let gi = inner.grad(x)?;
                Some(vecops::scale(&gi, if v > 0.0 { 1.0 } else { -1.0 }))
            }
            Expr::Max(args) | Expr::Min(args) => {
                let act = self.active_args(x);
                let mut common: Option<Vec<f64>> = None;
                for idx in act {
                    let g = args[idx].grad(x)?;
                    match &common {
                        None => common = Some(g),
                        Some(c) => {
                            if vecops::sub(c, &g).iter().any(|t| libm::fabs(*t) > KINK_EPS) {
                                return None;
                            }
                        }
                    }
                }
                common
            }
        }
    }

    /// Indices of `Max`/`Min` arguments attaining the extreme value at `x`
    /// within [`KINK_EPS`]. Empty for other variants.
    pub fn active_args(&self, x: &[f64]) -> Vec<usize> {
        let (args, best) = match self {
            Expr::Max(args) => {
                (args, args.iter().map(|a| a.eval(x)).fold(f64::NEG_INFINITY, f64::max))
            }
            Expr::Min(args) => (args, args.iter().map(|a| a.eval(x)).fold(f64::INFINITY, f64::min)),
            _ => return Vec::new(),
        };
        args.iter()
            .enumerate()
            .filter(|(_, a)| libm::fabs(a.eval(x) - best) <= KINK_EPS)
            .map(|(i, _)| i)
            .collect()
    }

    /// One-sided directional derivative `e'(x; d)`. Exists everywhere for this
    /// expression class; kinks resolve through `|t|' = |d|` at zero and
    /// through extreme values of active-branch directional derivatives for
    /// `Max`/`Min`.
    pub fn dir_derivative(&self, x: &[f64], d: &[f64]) -> f64 {
        match self {
            Expr::Const(_) => 0.0,
            Expr::Var(i) => d[*i],
            Expr::Affine { coeffs, .. } => vecops::dot(coeffs, d),
            Expr::Sum(args) => args.iter().map(|a| a.dir_derivative(x, d)).sum(),
            Expr::Product(a, b) => {
                a.eval(x) * b.dir_derivative(x, d) + b.eval(x) * a.dir_derivative(x, d)
            }
            Expr::IntPow(base, p) => {
                let v = base.eval(x);
                (*p as f64) * libm::pow(v, (*p - 1) as f64) * base.dir_derivative(x, d)
            }
            Expr::SmoothPrim(prim, inner) => {
                prim.deriv(inner.eval(x)) * inner.dir_derivative(x, d)
            }
            Expr::Abs(inner) => {
                let v = inner.eval(x);
                let dv = inner.dir_derivative(x, d);
                if libm::fabs(v) <= KINK_EPS {
                    libm::fabs(dv)
                } else if v > 0.0 {
                    dv
                } else {
                    -dv
                }
            }
            Expr::Max(args) => self
                .active_args(x)
                .into_iter()
                .map(|i| args[i].dir_derivative(x, d))
                .fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(args) => self
                .active_args(x)
                .into_iter()
                .map(|i| args[i].dir_derivative(x, d))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// First-order branch structure of `d ↦ e'(x; d)`.
    ///
    /// Returns pieces `(g, R)` such that `e'(x; d) = g · d` for every `d` in
    /// the polyhedral cone `R = {d : r · d >= 0 for all r in R}`, and the
    /// pieces cover all of `R^n`. `None` when nonsmooth material sits under a
    /// non-constant product, power, or primitive, where no such finite piece
    /// structure is available.
    pub fn dir_branches(&self, x: &[f64]) -> Option<Vec<DirBranch>> {
        let n = x.len();
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Affine { .. } => {
                Some(vec![DirBranch { grad: self.grad(x)?, region: Vec::new() }])
            }
            Expr::Sum(args) => {
                let mut acc = vec![DirBranch { grad: vecops::zeros(n), region: Vec::new() }];
                for a in args {
                    let branches = a.dir_branches(x)?;
                    let mut next = Vec::new();
                    for base in &acc {
                        for b in &branches {
                            let mut region = base.region.clone();
                            region.extend(b.region.iter().cloned());
                            next.push(DirBranch {
                                grad: vecops::add(&base.grad, &b.grad),
                                region,
                            });
                        }
                    }
                    acc = next;
                }
                Some(acc)
            }
            Expr::Product(a, b) => {
                if let Expr::Const(c) = **a {
                    return Some(scale_branches(b.dir_branches(x)?, c));
                }
                if let Expr::Const(c) = **b {
                    return Some(scale_branches(a.dir_branches(x)?, c));
                }
                Some(vec![DirBranch { grad: self.grad(x)?, region: Vec::new() }])
            }
            Expr::IntPow(..) | Expr::SmoothPrim(..) => {
                Some(vec![DirBranch { grad: self.grad(x)?, region: Vec::new() }])
            }
            Expr::Abs(inner) => {
                let v = inner.eval(x);
                if libm::fabs(v) > KINK_EPS {
                    return Some(vec![DirBranch { grad: self.grad(x)?, region: Vec::new() }]);
                }
                let gi = inner.grad(x)?;
                let neg = vecops::scale(&gi, -1.0);
                Some(vec![
                    DirBranch { grad: gi.clone(), region: vec![gi] },
                    DirBranch { grad: neg.clone(), region: vec![neg] },
                ])
            }
            Expr::Max(args) | Expr::Min(args) => {
                let act = self.active_args(x);
                if act.len() == 1 {
                    return Some(vec![DirBranch {
                        grad: args[act[0]].grad(x)?,
                        region: Vec::new(),
                    }]);
                }
                let sign = if matches!(self, Expr::Max(_)) { 1.0 } else { -1.0 };
                let grads: Vec<Vec<f64>> =
                    act.iter().map(|i| args[*i].grad(x)).collect::<Option<_>>()?;
                let mut out = Vec::new();
                for (i, gi) in grads.iter().enumerate() {
                    // Piece i governs directions where branch i attains the
                    // extreme directional derivative among the tied branches.
                    let region = grads
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, gj)| vecops::scale(&vecops::sub(gi, gj), sign))
                        .collect();
                    out.push(DirBranch { grad: gi.clone(), region });
                }
                Some(out)
            }
        }
    }
}

/// One linear piece of a directional derivative: `e'(x; d) = grad · d` valid
/// on `{d : r · d >= 0 for every r in region}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirBranch {
    pub grad: Vec<f64>,
    pub region: Vec<Vec<f64>>,
}

fn scale_branches(branches: Vec<DirBranch>, c: f64) -> Vec<DirBranch> {
    branches
        .into_iter()
        .map(|b| DirBranch { grad: vecops::scale(&b.grad, c), region: b.region })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;

    fn bx(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn sqrt_tangent_is_c1_at_the_shift() {
        let p = Prim::SqrtTangent { t0: 0.25 };
        assert_eq!(p.eval(0.25), 0.5);
        assert_eq!(p.eval(1.0), 1.0);
        assert_eq!(p.eval(0.0), 0.25);
        assert_eq!(p.deriv(0.25), 1.0);
        assert_eq!(p.deriv(1.0), 0.5);
        assert_eq!(p.deriv(-3.0), 1.0);
    }

    #[test]
    fn spline_rejects_kinked_glue() {
        let err = Spline::new(vec![0.0], vec![vec![0.0], vec![0.0, 1.0]]);
        assert!(matches!(err, Err(ExprError::MalformedSpline(_))));
        let ok = Spline::new(vec![1.0], vec![vec![-2.0], vec![0.0, -3.0, 0.0, 1.0]]);
        assert!(ok.is_ok());
    }

    #[test]
    fn abs_kink_detection() {
        let e = Expr::Abs(bx(Expr::Var(0)));
        assert_eq!(e.grad(&[2.0]), Some(vec![1.0]));
        assert_eq!(e.grad(&[-2.0]), Some(vec![-1.0]));
        assert_eq!(e.grad(&[0.0]), None);
        assert_eq!(e.dir_derivative(&[0.0], &[-3.0]), 3.0);
    }

    #[test]
    fn tied_max_with_equal_gradients_is_smooth() {
        let e = Expr::Max(vec![
            Expr::IntPow(bx(Expr::Var(0)), 2),
            Expr::Product(bx(Expr::Const(2.0)), bx(Expr::IntPow(bx(Expr::Var(0)), 2))),
        ]);
        assert_eq!(e.grad(&[0.0]), Some(vec![0.0]));
    }

    #[test]
    fn nested_nonsmooth_is_rejected() {
        let e = Expr::Abs(bx(Expr::Abs(bx(Expr::Var(0)))));
        assert_eq!(e.validate(1), Err(ExprError::NestedNonsmooth));
        let e = Expr::Max(vec![Expr::Var(0), Expr::Abs(bx(Expr::Var(1)))]);
        assert_eq!(e.validate(2), Err(ExprError::NestedNonsmooth));
    }

    #[test]
    fn dir_branches_of_abs_cover_both_sides() {
        let e = Expr::Abs(bx(Expr::Affine { coeffs: vec![1.0, -1.0], offset: 0.0 }));
        let branches = e.dir_branches(&[1.0, 1.0]).unwrap();
        assert_eq!(branches.len(), 2);
        for b in &branches {
            let d = &b.region[0];
            let pred = vecops::dot(&b.grad, d);
            assert_eq!(pred, e.dir_derivative(&[1.0, 1.0], d));
        }
    }
}
