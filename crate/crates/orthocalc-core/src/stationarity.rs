//! M-stationarity and directional M-stationarity checkers.
//!
//! The multiplier condition asks for λ in the (directional) limiting normal
//! cone of Γ at F(x̄) with −∇f(x̄) ∈ Σᵢ |λᵢ|·∂(sgn λᵢ·Fᵢ)(x̄). Over sign
//! cells this is finitely decidable: fix a cell, fix a sign for every
//! coordinate the cell leaves free, fix one polytope per participating
//! component's subdifferential union, and the condition becomes a linear
//! feasibility problem in the convex weights θ, solved exactly over rationals.
//! The first feasible subproblem in lexicographic cell/sign/branch order
//! yields the certificate; exhausting all subproblems yields a failure whose
//! trustworthiness depends on the component subdifferentials being exact and
//! composing exactly (at most one component nonsmooth at x̄, or nonsmooth
//! components touching disjoint variables). When that flag is down the checker
//! reports inconclusive instead of failure.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cones::{
    dir_limiting_normal_cone, limiting_normal_cone, tangent_cone, CellUnion, ConeError, SignCell,
    Tag, DIR_MEMBER_EPS,
};
use crate::oracle::{sample_tangent_feasible, sphere_grid};
use crate::poly::PolyUnion;
use crate::problem::{InfeasiblePoint, Problem};
use crate::rational::rvec_to_f64;
use crate::simplex::{Cmp, ExactLp};
use crate::subdiff::{dir_limiting_subdiff, limiting_subdiff, SubdiffError};
use crate::vecops::{norm2, norm_inf, normalize, scale, zeros};
use crate::verdict::{Membership, Verdict};

/// Residual bound every returned certificate is replayed against.
pub const CERT_RESIDUAL_EPS: f64 = 1e-9;

/// Slack for directional-derivative sign tests in critical-cone membership.
pub const CRIT_TOL: f64 = 1e-9;

/// One component's part of a stationarity certificate: the vertices of the
/// chosen subdifferential polytope and the convex weights θ, which sum to
/// `|multiplier|`.
#[derive(Clone, Debug)]
pub struct ComponentWitness {
    pub component: usize,
    pub multiplier: f64,
    pub vertices: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub lambda: Vec<f64>,
    /// Sign cell of the normal cone the multiplier lives in.
    pub cell: SignCell,
    pub witnesses: Vec<ComponentWitness>,
    /// Max-norm defect of Σθv + ∇f(x̄), recomputed in floating point.
    pub residual: f64,
}

/// Payload of a failing verdict: how much was searched, plus a note when the
/// failure is structural (empty directional cone).
#[derive(Clone, Debug)]
pub struct NoMultiplier {
    pub cells_tried: usize,
    pub systems_tried: usize,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StatError {
    Infeasible(InfeasiblePoint),
    Cone(ConeError),
    Subdiff(SubdiffError),
    ObjectiveNotDifferentiable,
    ZeroDirection,
}

impl core::fmt::Display for StatError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StatError::Infeasible(e) => write!(f, "base point: {e}"),
            StatError::Cone(e) => write!(f, "normal cone: {e}"),
            StatError::Subdiff(e) => write!(f, "subdifferential: {e}"),
            StatError::ObjectiveNotDifferentiable => {
                write!(f, "objective is not differentiable at the base point")
            }
            StatError::ZeroDirection => write!(f, "direction must be nonzero"),
        }
    }
}

impl core::error::Error for StatError {}

/// M-stationarity of `x̄`: multiplier searched over the limiting normal cone
/// and plain limiting subdifferentials.
pub fn check_m_stationarity(
    p: &Problem,
    xbar: &[f64],
    tol: f64,
) -> Result<Verdict<Certificate, NoMultiplier>, StatError> {
    p.require_feasible(xbar).map_err(StatError::Infeasible)?;
    let b = neg_objective_grad(p, xbar)?;
    let y = p.eval_constraints(xbar);
    let cone = limiting_normal_cone(p.gamma(), &y).map_err(StatError::Cone)?;
    solve_over_cells(p, xbar, &b, &cone, None, tol)
}

/// M-stationarity of `x̄` in direction `d`: the normal cone is taken in
/// direction `F′(x̄;d)` and subdifferentials in direction `d`. An empty
/// directional cone (image direction leaves the tangent cone) fails
/// immediately.
pub fn check_dir_m_stationarity(
    p: &Problem,
    xbar: &[f64],
    d: &[f64],
    tol: f64,
) -> Result<Verdict<Certificate, NoMultiplier>, StatError> {
    p.require_feasible(xbar).map_err(StatError::Infeasible)?;
    if norm2(d) == 0.0 {
        return Err(StatError::ZeroDirection);
    }
    let b = neg_objective_grad(p, xbar)?;
    let y = p.eval_constraints(xbar);
    let w = p.constraint_dir_derivatives(xbar, d);
    let cone = dir_limiting_normal_cone(p.gamma(), &y, &w).map_err(StatError::Cone)?;
    if cone.is_empty_set() {
        return Ok(Verdict::Fails(NoMultiplier {
            cells_tried: 0,
            systems_tried: 0,
            note: Some(String::from("direction not in linearization cone")),
        }));
    }
    solve_over_cells(p, xbar, &b, &cone, Some(d), tol)
}

fn neg_objective_grad(p: &Problem, xbar: &[f64]) -> Result<Vec<f64>, StatError> {
    match p.objective_grad(xbar) {
        Some(g) => Ok(scale(&g, -1.0)),
        None => Err(StatError::ObjectiveNotDifferentiable),
    }
}

fn component_subdiff(
    p: &Problem,
    xbar: &[f64],
    d: Option<&[f64]>,
    i: usize,
    sign: i8,
) -> Result<PolyUnion, SubdiffError> {
    match d {
        None => limiting_subdiff(&p.constraints()[i], xbar, sign),
        Some(d) => dir_limiting_subdiff(&p.constraints()[i], xbar, d, sign),
    }
}

fn solve_over_cells(
    p: &Problem,
    xbar: &[f64],
    b: &[f64],
    cone: &CellUnion,
    d: Option<&[f64]>,
    tol: f64,
) -> Result<Verdict<Certificate, NoMultiplier>, StatError> {
    let m = p.m();
    let mut cache: BTreeMap<(usize, i8), PolyUnion> = BTreeMap::new();
    let mut all_exact = true;
    // Components whose used subdifferential had more than one point; only
    // these can break sum-rule equality.
    let mut nonsmooth_used = vec![false; m];
    let mut systems = 0usize;
    for cell in cone.cells() {
        let participating: Vec<usize> =
            (0..m).filter(|i| cell.tags[*i] != Tag::Zero).collect();
        let sign_options: Vec<&[i8]> = participating
            .iter()
            .map(|&i| match cell.tags[i] {
                Tag::NonNeg => &[1i8][..],
                Tag::NonPos => &[-1i8][..],
                Tag::Free => &[1i8, -1][..],
                Tag::Zero => unreachable!("participating components are non-Zero"),
            })
            .collect();
        let mut sign_idx = vec![0usize; participating.len()];
        loop {
            let signs: Vec<i8> =
                sign_idx.iter().zip(&sign_options).map(|(k, opts)| opts[*k]).collect();
            let mut sets: Vec<PolyUnion> = Vec::with_capacity(participating.len());
            for (slot, &i) in participating.iter().enumerate() {
                let key = (i, signs[slot]);
                if !cache.contains_key(&key) {
                    let set = component_subdiff(p, xbar, d, i, signs[slot])
                        .map_err(StatError::Subdiff)?;
                    cache.insert(key, set);
                }
                let set = cache.get(&key).expect("just inserted").clone();
                if !set.exact {
                    all_exact = false;
                }
                let vertex_count: usize = set.polys.iter().map(|p| p.vertices.len()).sum();
                if set.polys.len() > 1 || vertex_count > 1 {
                    nonsmooth_used[i] = true;
                }
                sets.push(set);
            }
            if let Some(cert) =
                search_branches(&participating, &signs, &sets, b, cell, tol, &mut systems)
            {
                return Ok(Verdict::Holds(cert));
            }
            if !advance(&mut sign_idx, &sign_options.iter().map(|o| o.len()).collect::<Vec<_>>())
            {
                break;
            }
        }
    }
    let disjoint = disjoint_nonsmooth_supports(p, &nonsmooth_used);
    if all_exact && disjoint {
        Ok(Verdict::Fails(NoMultiplier {
            cells_tried: cone.cells().len(),
            systems_tried: systems,
            note: None,
        }))
    } else {
        Ok(Verdict::Inconclusive(String::from(
            "no multiplier found, but the searched subdifferential sum is only an outer bound",
        )))
    }
}

/// Odometer increment over mixed radices; false when the last combination has
/// been visited.
pub(crate) fn advance(idx: &mut [usize], radix: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < radix[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// Sum-rule equality needs the components that are genuinely nonsmooth at the
/// point to either be unique or touch pairwise disjoint variables.
pub(crate) fn disjoint_nonsmooth_supports(p: &Problem, nonsmooth: &[bool]) -> bool {
    let idx: Vec<usize> =
        nonsmooth.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect();
    for (a_pos, &a) in idx.iter().enumerate() {
        for &b in &idx[a_pos + 1..] {
            let va = p.constraints()[a].vars();
            if p.constraints()[b].vars().iter().any(|v| va.contains(v)) {
                return false;
            }
        }
    }
    true
}

fn search_branches(
    participating: &[usize],
    signs: &[i8],
    sets: &[PolyUnion],
    b: &[f64],
    cell: &SignCell,
    tol: f64,
    systems: &mut usize,
) -> Option<Certificate> {
    let radix: Vec<usize> = sets.iter().map(|s| s.polys.len()).collect();
    if radix.iter().any(|r| *r == 0) {
        return None;
    }
    let mut idx = vec![0usize; sets.len()];
    loop {
        *systems += 1;
        if let Some(cert) = solve_system(participating, signs, sets, &idx, b, cell, tol) {
            return Some(cert);
        }
        if !advance(&mut idx, &radix) {
            return None;
        }
    }
}

fn solve_system(
    participating: &[usize],
    signs: &[i8],
    sets: &[PolyUnion],
    branch: &[usize],
    b: &[f64],
    cell: &SignCell,
    tol: f64,
) -> Option<Certificate> {
    let n = b.len();
    let polys: Vec<&crate::poly::Polytope> =
        sets.iter().zip(branch).map(|(s, k)| &s.polys[*k]).collect();
    let n_pos: usize = polys.iter().map(|p| p.vertices.len()).sum();
    let mut lp = ExactLp::new(0, n_pos);
    for k in 0..n {
        let coeffs: Vec<f64> =
            polys.iter().flat_map(|p| p.vertices.iter().map(move |v| v[k])).collect();
        lp.push_row_f64(&[], &coeffs, Cmp::Eq, b[k]);
    }
    let (_, theta) = lp.solve()?;
    let theta = rvec_to_f64(&theta);
    let mut lambda = zeros(cell.tags.len());
    let mut witnesses = Vec::new();
    let mut replay = zeros(n);
    let mut offset = 0usize;
    for (slot, &comp) in participating.iter().enumerate() {
        let verts = &polys[slot].vertices;
        let w = &theta[offset..offset + verts.len()];
        let mu: f64 = w.iter().sum();
        lambda[comp] = f64::from(signs[slot]) * mu;
        for (wk, v) in w.iter().zip(verts) {
            for k in 0..n {
                replay[k] += wk * v[k];
            }
        }
        witnesses.push(ComponentWitness {
            component: comp,
            multiplier: lambda[comp],
            vertices: verts.clone(),
            weights: w.to_vec(),
        });
        offset += verts.len();
    }
    let residual = norm_inf(&crate::vecops::sub(&replay, b));
    if residual > f64::max(tol, CERT_RESIDUAL_EPS) {
        return None;
    }
    Some(Certificate { lambda, cell: cell.clone(), witnesses, residual })
}

/// Membership of a direction in the three critical cones: the explicit cone
/// (descent for f and tangent for the linearized constraints), the bare
/// linearization cone, and the implicit cone (descent and sampled tangency to
/// the feasible set itself).
#[derive(Clone, Debug)]
pub struct CriticalMembership {
    pub in_explicit: bool,
    pub in_linearization: bool,
    pub in_implicit: Membership,
}

pub fn critical_cone_membership(
    p: &Problem,
    xbar: &[f64],
    d: &[f64],
) -> Result<CriticalMembership, StatError> {
    p.require_feasible(xbar).map_err(StatError::Infeasible)?;
    let in_linearization = p.in_linearization_cone(xbar, d).map_err(StatError::Cone)?;
    let fprime = p.objective().dir_derivative(xbar, d);
    let in_explicit = in_linearization && fprime <= CRIT_TOL;
    let in_implicit = if fprime > CRIT_TOL {
        Membership::Out
    } else {
        sample_tangent_feasible(p, xbar, d, 0)
    };
    Ok(CriticalMembership { in_explicit, in_linearization, in_implicit })
}

/// Evidence that the explicit critical cone is trivial.
#[derive(Clone, Debug)]
pub struct ConeTriviality {
    pub pieces_checked: usize,
    pub cells_checked: usize,
}

/// Strict-local-minimality test by triviality of the explicit critical cone.
/// With a full linearization of `F` at `x̄` the cone decomposes into finitely
/// many polyhedral pieces; each is certified trivial by 2n exact feasibility
/// probes (`d_j ≥ 1` and `d_j ≤ −1`). A feasible probe direction is returned
/// as the failure witness. Without a usable linearization the test falls back
/// to a sphere-grid witness search and otherwise stays inconclusive.
pub fn strict_local_min_by_trivial_cone(
    p: &Problem,
    xbar: &[f64],
) -> Result<Verdict<ConeTriviality, Vec<f64>>, StatError> {
    p.require_feasible(xbar).map_err(StatError::Infeasible)?;
    let grad_f = match p.objective_grad(xbar) {
        Some(g) => g,
        None => return Err(StatError::ObjectiveNotDifferentiable),
    };
    let y = p.eval_constraints(xbar);
    let tangent = tangent_cone(p.gamma(), &y).map_err(StatError::Cone)?;
    let n = p.n();
    match p.lin_pieces(xbar) {
        Ok(pieces) => {
            for piece in &pieces {
                for cell in tangent.cells() {
                    if let Some(dir) = nontrivial_direction(piece, cell, &grad_f, n) {
                        return Ok(Verdict::Fails(dir));
                    }
                }
            }
            Ok(Verdict::Holds(ConeTriviality {
                pieces_checked: pieces.len(),
                cells_checked: tangent.cells().len(),
            }))
        }
        Err(_) => {
            let count = match n {
                2 => 3600,
                3 => 10_000,
                _ => 512,
            };
            for dir in sphere_grid(n, count, 0) {
                let fd = p.objective().dir_derivative(xbar, &dir);
                let w = p.constraint_dir_derivatives(xbar, &dir);
                if fd <= CRIT_TOL && tangent.member(&w, DIR_MEMBER_EPS) {
                    return Ok(Verdict::Fails(dir));
                }
            }
            Ok(Verdict::Inconclusive(String::from(
                "linearization too large to certify; no critical direction found on the grid",
            )))
        }
    }
}

/// Search the piece/cell polyhedral cone for a direction with some coordinate
/// pushed away from zero; `None` certifies the cone is `{0}`.
fn nontrivial_direction(
    piece: &crate::problem::LinPiece,
    cell: &SignCell,
    grad_f: &[f64],
    n: usize,
) -> Option<Vec<f64>> {
    for j in 0..n {
        for sgn in [1.0f64, -1.0] {
            let mut lp = ExactLp::new(n, 0);
            for r in &piece.region {
                lp.push_row_f64(r, &[], Cmp::Ge, 0.0);
            }
            for (row, tag) in piece.rows.iter().zip(&cell.tags) {
                match tag {
                    Tag::Zero => lp.push_row_f64(row, &[], Cmp::Eq, 0.0),
                    Tag::NonNeg => lp.push_row_f64(row, &[], Cmp::Ge, 0.0),
                    Tag::NonPos => lp.push_row_f64(row, &[], Cmp::Le, 0.0),
                    Tag::Free => {}
                }
            }
            lp.push_row_f64(grad_f, &[], Cmp::Le, 0.0);
            let mut probe = zeros(n);
            probe[j] = sgn;
            lp.push_row_f64(&probe, &[], Cmp::Ge, 1.0);
            if let Some((free, _)) = lp.solve() {
                let dir = rvec_to_f64(&free);
                // All constraints are homogeneous, so the normalized direction
                // is still critical.
                let dir = normalize(&dir).unwrap_or(dir);
                return Some(dir);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::OrthoSet;
    use crate::expr::Expr;
    use alloc::boxed::Box;

    fn neg(e: Expr) -> Expr {
        Expr::Product(Box::new(Expr::Const(-1.0)), Box::new(e))
    }

    fn fixed_point_line() -> Problem {
        Problem::new(
            1,
            Expr::Var(0),
            vec![Expr::Var(0)],
            OrthoSet::single(&[(0.0, 0.0)]).unwrap(),
        )
        .unwrap()
    }

    fn akkt_problem() -> Problem {
        Problem::new(
            2,
            Expr::Sum(vec![Expr::Var(0), Expr::Var(1)]),
            vec![Expr::Sum(vec![
                Expr::IntPow(Box::new(Expr::Var(0)), 2),
                Expr::IntPow(Box::new(Expr::Var(1)), 2),
            ])],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap()
    }

    fn quadrant_surface() -> Problem {
        Problem::new(
            2,
            Expr::Var(0),
            vec![
                neg(Expr::Var(0)),
                neg(Expr::Var(1)),
                Expr::Product(Box::new(Expr::Var(0)), Box::new(Expr::Var(1))),
            ],
            OrthoSet::single(&[
                (f64::NEG_INFINITY, 0.0),
                (f64::NEG_INFINITY, 0.0),
                (0.0, 0.0),
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn pinned_line_holds_with_negative_multiplier() {
        let p = fixed_point_line();
        let v = check_m_stationarity(&p, &[0.0], 1e-9).unwrap();
        match v {
            Verdict::Holds(c) => {
                assert!(libm::fabs(c.lambda[0] + 1.0) < 1e-12);
                assert!(c.residual <= CERT_RESIDUAL_EPS);
            }
            other => panic!("expected holds, got {}", other.label()),
        }
    }

    #[test]
    fn zero_gradient_holds_with_zero_multiplier() {
        let p = Problem::new(
            1,
            Expr::IntPow(Box::new(Expr::Var(0)), 2),
            vec![Expr::Var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let v = check_m_stationarity(&p, &[0.0], 1e-9).unwrap();
        match v {
            Verdict::Holds(c) => assert_eq!(c.lambda, &[0.0]),
            other => panic!("expected holds, got {}", other.label()),
        }
    }

    #[test]
    fn vanishing_jacobian_fails_cleanly() {
        let p = akkt_problem();
        let v = check_m_stationarity(&p, &[0.0, 0.0], 1e-9).unwrap();
        assert!(v.is_fails());
    }

    #[test]
    fn directional_multiplier_on_the_quadrant_surface() {
        let p = quadrant_surface();
        let d = [0.0, 1.0];
        let v = check_dir_m_stationarity(&p, &[0.0, 0.0], &d, 1e-9).unwrap();
        match v {
            Verdict::Holds(c) => {
                assert!(libm::fabs(c.lambda[0] - 1.0) < 1e-12);
                assert!(libm::fabs(c.lambda[1]) < 1e-12);
                assert!(libm::fabs(c.lambda[2]) < 1e-12);
            }
            other => panic!("expected holds, got {}", other.label()),
        }
    }

    #[test]
    fn outward_direction_fails_with_note() {
        let p = Problem::new(
            1,
            Expr::Var(0),
            vec![Expr::Var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let v = check_dir_m_stationarity(&p, &[0.0], &[1.0], 1e-9).unwrap();
        match v {
            Verdict::Fails(w) => assert!(w.note.is_some()),
            other => panic!("expected fails, got {}", other.label()),
        }
    }

    #[test]
    fn trivial_cone_certifies_the_pinned_line() {
        let p = fixed_point_line();
        let v = strict_local_min_by_trivial_cone(&p, &[0.0]).unwrap();
        assert!(v.is_holds());
    }

    #[test]
    fn flat_constraint_leaves_a_critical_direction() {
        let p = akkt_problem();
        let v = strict_local_min_by_trivial_cone(&p, &[0.0, 0.0]).unwrap();
        match v {
            Verdict::Fails(d) => {
                let fd = p.objective().dir_derivative(&[0.0, 0.0], &d);
                assert!(fd <= CRIT_TOL);
            }
            other => panic!("expected fails, got {}", other.label()),
        }
    }

    #[test]
    fn critical_membership_splits_explicit_and_implicit() {
        let p = akkt_problem();
        let m = critical_cone_membership(&p, &[0.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert!(m.in_explicit);
        assert!(m.in_linearization);
        assert_eq!(m.in_implicit, Membership::Out);
    }
}
