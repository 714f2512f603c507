//! Constrained problem description and first-order constraint geometry.
//!
//! A [`Problem`] couples a smooth-at-the-candidate objective, a vector of
//! constraint component expressions, and an orthodisjunctive target set: the
//! feasible region is `X = {x : F(x) ∈ Γ}`. Alongside evaluation helpers this
//! module exposes the exact first-order objects every checker consumes: the
//! per-direction linearization-cone membership test (via one-sided directional
//! derivatives and tangent tags) and the finite piece decomposition of
//! `d ↦ F'(x; d)` into linear maps on polyhedral cones.

use alloc::string::String;
use alloc::vec::Vec;

use crate::boxes::{ActiveSets, OrthoSet, MEMBER_EPS};
use crate::cones::{self, CellUnion, ConeError, DIR_MEMBER_EPS};
use crate::expr::{DirBranch, Expr, ExprError};
use crate::vecops;

/// Hard cap on the number of branch-combination pieces enumerated for the
/// linearization cone; instances here are tiny, so hitting it indicates a
/// malformed input rather than a legitimate workload.
pub const MAX_LIN_PIECES: usize = 4096;

/// Construction-time validation failures.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemError {
    BadObjective(ExprError),
    BadConstraint(usize, ExprError),
    GammaDimMismatch { components: usize, gamma_dim: usize },
}

impl core::fmt::Display for ProblemError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ProblemError::BadObjective(e) => write!(f, "objective: {e}"),
            ProblemError::BadConstraint(i, e) => write!(f, "constraint component {i}: {e}"),
            ProblemError::GammaDimMismatch { components, gamma_dim } => write!(
                f,
                "constraint has {components} components but the target set has dimension {gamma_dim}"
            ),
        }
    }
}

impl core::error::Error for ProblemError {}

/// `min f(x)` subject to `F(x) ∈ Γ`.
#[derive(Clone, Debug)]
pub struct Problem {
    n: usize,
    objective: Expr,
    constraints: Vec<Expr>,
    gamma: OrthoSet,
}

/// One linear piece of `d ↦ F'(x; d)`: on the cone
/// `{d : r · d >= 0 for all r in region}` the directional derivative is the
/// matrix-vector product with `rows`.
#[derive(Clone, Debug)]
pub struct LinPiece {
    pub rows: Vec<Vec<f64>>,
    pub region: Vec<Vec<f64>>,
}

impl Problem {
    pub fn new(
        n: usize,
        objective: Expr,
        constraints: Vec<Expr>,
        gamma: OrthoSet,
    ) -> Result<Self, ProblemError> {
        objective.validate(n).map_err(ProblemError::BadObjective)?;
        for (i, c) in constraints.iter().enumerate() {
            c.validate(n).map_err(|e| ProblemError::BadConstraint(i, e))?;
        }
        if gamma.dim() != constraints.len() {
            return Err(ProblemError::GammaDimMismatch {
                components: constraints.len(),
                gamma_dim: gamma.dim(),
            });
        }
        Ok(Problem { n, objective, constraints, gamma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &Expr {
        &self.objective
    }

    pub fn constraints(&self) -> &[Expr] {
        &self.constraints
    }

    pub fn gamma(&self) -> &OrthoSet {
        &self.gamma
    }

    pub fn eval_constraints(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.eval(x)).collect()
    }

    pub fn objective_grad(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.objective.grad(x)
    }

    /// One-sided directional derivative of every component.
    pub fn constraint_dir_derivatives(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.dir_derivative(x, d)).collect()
    }

    /// Exact distance of the image to the target set.
    pub fn feasibility_residual(&self, x: &[f64]) -> f64 {
        self.gamma.distance(&self.eval_constraints(x))
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.gamma.contains(&self.eval_constraints(x), tol)
    }

    /// Activity bookkeeping at `y = F(x) - delta`.
    pub fn active_sets(&self, x: &[f64], delta: &[f64]) -> ActiveSets {
        self.gamma.active_sets(&self.eval_constraints(x), delta)
    }

    /// Tangent cone of the target set at `F(x̄)`; requires feasibility.
    pub fn image_tangent_cone(&self, xbar: &[f64]) -> Result<CellUnion, ConeError> {
        cones::tangent_cone(&self.gamma, &self.eval_constraints(xbar))
    }

    /// Exact membership of `d` in the linearization cone
    /// `{d : F'(x̄; d) ∈ T_Γ(F(x̄))}`.
    pub fn in_linearization_cone(&self, xbar: &[f64], d: &[f64]) -> Result<bool, ConeError> {
        let t = self.image_tangent_cone(xbar)?;
        let w = self.constraint_dir_derivatives(xbar, d);
        Ok(t.member(&w, DIR_MEMBER_EPS))
    }

    /// True when every constraint component is globally piecewise affine, so
    /// the feasible set is a finite union of polyhedra.
    pub fn is_piecewise_affine(&self) -> bool {
        self.constraints.iter().all(Expr::is_piecewise_affine)
    }

    /// Finite decomposition of `d ↦ F'(x; d)` into linear pieces on polyhedral
    /// cones: the cross product of per-component branch structures. `Err`
    /// carries a diagnostic when a component has no finite branch structure or
    /// the cross product exceeds [`MAX_LIN_PIECES`].
    pub fn lin_pieces(&self, x: &[f64]) -> Result<Vec<LinPiece>, String> {
        let mut pieces = alloc::vec![LinPiece { rows: Vec::new(), region: Vec::new() }];
        for (i, c) in self.constraints.iter().enumerate() {
            let branches: Vec<DirBranch> = c
                .dir_branches(x)
                .ok_or_else(|| alloc::format!("component {i} has no finite branch structure"))?;
            let mut next = Vec::with_capacity(pieces.len() * branches.len());
            for base in &pieces {
                for b in &branches {
                    let mut rows = base.rows.clone();
                    rows.push(b.grad.clone());
                    let mut region = base.region.clone();
                    region.extend(b.region.iter().cloned());
                    next.push(LinPiece { rows, region });
                }
            }
            pieces = next;
            if pieces.len() > MAX_LIN_PIECES {
                return Err(alloc::format!(
                    "branch cross product exceeds {MAX_LIN_PIECES} pieces"
                ));
            }
        }
        Ok(pieces)
    }

    /// Basic feasibility precondition shared by the checkers.
    pub fn require_feasible(&self, xbar: &[f64]) -> Result<(), InfeasiblePoint> {
        let r = self.feasibility_residual(xbar);
        if r <= 1e2 * MEMBER_EPS {
            Ok(())
        } else {
            Err(InfeasiblePoint { residual: r })
        }
    }
}

/// Raised when a checker is invoked at an infeasible candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasiblePoint {
    pub residual: f64,
}

impl core::fmt::Display for InfeasiblePoint {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "candidate point is infeasible (constraint distance {:.3e})", self.residual)
    }
}

impl core::error::Error for InfeasiblePoint {}

/// True when `d` lies in the polyhedral cone of a piece region.
pub fn region_contains(region: &[Vec<f64>], d: &[f64], tol: f64) -> bool {
    region.iter().all(|r| vecops::dot(r, d) >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;
    use alloc::vec;

    fn complementarity_problem() -> Problem {
        // F = (-x1, -x2, x1*x2), Γ = R₋ × R₋ × {0}.
        let f = Expr::Var(0);
        let c = vec![
            Expr::Affine { coeffs: vec![-1.0, 0.0], offset: 0.0 },
            Expr::Affine { coeffs: vec![0.0, -1.0], offset: 0.0 },
            Expr::Product(Box::new(Expr::Var(0)), Box::new(Expr::Var(1))),
        ];
        let gamma = OrthoSet::single(&[
            (f64::NEG_INFINITY, 0.0),
            (f64::NEG_INFINITY, 0.0),
            (0.0, 0.0),
        ])
        .unwrap();
        Problem::new(2, f, c, gamma).unwrap()
    }

    #[test]
    fn linearization_cone_of_the_complementarity_system() {
        let p = complementarity_problem();
        let xbar = [0.0, 0.0];
        // The product constraint has zero gradient at the origin, so the
        // linearization cone is the full nonnegative quadrant.
        assert!(p.in_linearization_cone(&xbar, &[1.0, 1.0]).unwrap());
        assert!(p.in_linearization_cone(&xbar, &[0.0, 1.0]).unwrap());
        assert!(!p.in_linearization_cone(&xbar, &[-1.0, 0.0]).unwrap());
        assert!(!p.is_piecewise_affine());
        let pieces = p.lin_pieces(&xbar).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].rows[2], vec![0.0, 0.0]);
    }

    #[test]
    fn branch_pieces_cross_nonsmooth_components() {
        // F = (max(x1^2, x1) - x2, min(x1^2, -x1) + x2) at the origin.
        let c = vec![
            Expr::Sum(vec![
                Expr::Max(vec![Expr::IntPow(Box::new(Expr::Var(0)), 2), Expr::Var(0)]),
                Expr::Affine { coeffs: vec![0.0, -1.0], offset: 0.0 },
            ]),
            Expr::Sum(vec![
                Expr::Min(vec![
                    Expr::IntPow(Box::new(Expr::Var(0)), 2),
                    Expr::Affine { coeffs: vec![-1.0, 0.0], offset: 0.0 },
                ]),
                Expr::Var(1),
            ]),
        ];
        let gamma =
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0), (f64::NEG_INFINITY, 0.0)]).unwrap();
        let p = Problem::new(2, Expr::Const(0.0), c, gamma).unwrap();
        let xbar = [0.0, 0.0];
        let pieces = p.lin_pieces(&xbar).unwrap();
        assert_eq!(pieces.len(), 4);
        // Directions: (1,1) rides the affine branches into the cone; (-1,0)
        // uses the quadratic branches (zero gradients); (1,0) leaves.
        assert!(p.in_linearization_cone(&xbar, &[1.0, 1.0]).unwrap());
        assert!(p.in_linearization_cone(&xbar, &[-1.0, 0.0]).unwrap());
        assert!(!p.in_linearization_cone(&xbar, &[1.0, 0.0]).unwrap());
    }

    #[test]
    fn feasibility_and_dimension_checks() {
        let p = complementarity_problem();
        assert!(p.is_feasible(&[0.0, 3.0], 1e-12));
        assert!(!p.is_feasible(&[1.0, 1.0], 1e-6));
        assert!(p.require_feasible(&[2.0, 0.0]).is_ok());
        assert!(p.require_feasible(&[1.0, 1.0]).is_err());
        let bad = Problem::new(
            2,
            Expr::Var(0),
            vec![Expr::Var(0)],
            OrthoSet::single(&[(0.0, 0.0), (0.0, 0.0)]).unwrap(),
        );
        assert!(matches!(bad, Err(ProblemError::GammaDimMismatch { .. })));
    }
}
