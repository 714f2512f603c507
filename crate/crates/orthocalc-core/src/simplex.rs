//! Exact LP feasibility over rationals.
//!
//! The stationarity and constraint-qualification checkers reduce to small
//! linear feasibility systems in subgradient combination weights. Those
//! systems are decided here by a dense two-phase simplex with Bland's rule on
//! `BigRational` data: no tolerances, no cycling, and a feasible point comes
//! back as an exact witness.

use alloc::vec::Vec;

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::rational::rat_from_f64;

/// Row comparison in an [`ExactLp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ge,
    Le,
}

/// A feasibility problem over `n_free` sign-unrestricted variables `u` and
/// `n_pos` nonnegative variables `s`, with rows `a · u + c · s {=, >=, <=} r`.
#[derive(Clone, Debug, Default)]
pub struct ExactLp {
    n_free: usize,
    n_pos: usize,
    rows: Vec<(Vec<BigRational>, Vec<BigRational>, Cmp, BigRational)>,
}

impl ExactLp {
    pub fn new(n_free: usize, n_pos: usize) -> Self {
        ExactLp { n_free, n_pos, rows: Vec::new() }
    }

    pub fn push_row(
        &mut self,
        free_coeffs: Vec<BigRational>,
        pos_coeffs: Vec<BigRational>,
        cmp: Cmp,
        rhs: BigRational,
    ) {
        assert_eq!(free_coeffs.len(), self.n_free);
        assert_eq!(pos_coeffs.len(), self.n_pos);
        self.rows.push((free_coeffs, pos_coeffs, cmp, rhs));
    }

    /// Convenience for rows given in f64 (converted exactly).
    pub fn push_row_f64(&mut self, free_coeffs: &[f64], pos_coeffs: &[f64], cmp: Cmp, rhs: f64) {
        self.push_row(
            free_coeffs.iter().map(|c| rat_from_f64(*c)).collect(),
            pos_coeffs.iter().map(|c| rat_from_f64(*c)).collect(),
            cmp,
            rat_from_f64(rhs),
        );
    }

    /// Decides feasibility; on success returns exact values `(u, s)`.
    pub fn solve(&self) -> Option<(Vec<BigRational>, Vec<BigRational>)> {
        // Columns: u+ (n_free), u- (n_free), s (n_pos), slacks (one per
        // inequality row). All columns nonnegative.
        let n_slack = self.rows.iter().filter(|r| r.2 != Cmp::Eq).count();
        let n_cols = 2 * self.n_free + self.n_pos + n_slack;
        let mut a: Vec<Vec<BigRational>> = Vec::with_capacity(self.rows.len());
        let mut b: Vec<BigRational> = Vec::with_capacity(self.rows.len());
        let mut slack_idx = 0;
        for (fc, pc, cmp, rhs) in &self.rows {
            let mut row = Vec::with_capacity(n_cols);
            for c in fc {
                row.push(c.clone());
            }
            for c in fc {
                row.push(-c.clone());
            }
            for c in pc {
                row.push(c.clone());
            }
            for _ in 0..n_slack {
                row.push(BigRational::zero());
            }
            match cmp {
                Cmp::Eq => {}
                Cmp::Ge => {
                    row[2 * self.n_free + self.n_pos + slack_idx] =
                        -BigRational::from_integer(1.into());
                    slack_idx += 1;
                }
                Cmp::Le => {
                    row[2 * self.n_free + self.n_pos + slack_idx] =
                        BigRational::from_integer(1.into());
                    slack_idx += 1;
                }
            }
            a.push(row);
            b.push(rhs.clone());
        }
        let x = phase_one(&mut a, &mut b, n_cols)?;
        let u = (0..self.n_free).map(|i| &x[i] - &x[self.n_free + i]).collect();
        let s = (0..self.n_pos).map(|i| x[2 * self.n_free + i].clone()).collect();
        Some((u, s))
    }
}

/// Phase-one simplex: find `x >= 0` with `A x = b`, or report infeasibility.
fn phase_one(
    a: &mut Vec<Vec<BigRational>>,
    b: &mut [BigRational],
    n_cols: usize,
) -> Option<Vec<BigRational>> {
    let m = a.len();
    for i in 0..m {
        if b[i].is_negative() {
            for c in a[i].iter_mut() {
                *c = -c.clone();
            }
            b[i] = -b[i].clone();
        }
    }
    // Tableau with one artificial column per row; minimize their sum.
    let total = n_cols + m;
    let mut t: Vec<Vec<BigRational>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = a[i].clone();
        row.resize(total, BigRational::zero());
        row[n_cols + i] = BigRational::from_integer(1.into());
        row.push(b[i].clone());
        t.push(row);
    }
    let mut basis: Vec<usize> = (n_cols..total).collect();
    let cost = |j: usize| -> i32 {
        if j >= n_cols {
            1
        } else {
            0
        }
    };
    loop {
        // Reduced costs under the canonical tableau.
        let mut entering = None;
        for j in 0..total {
            if basis.contains(&j) {
                continue;
            }
            let mut red = BigRational::from_integer(cost(j).into());
            for (i, bi) in basis.iter().enumerate() {
                if cost(*bi) != 0 {
                    red -= &t[i][j] * BigRational::from_integer(cost(*bi).into());
                }
            }
            if red.is_negative() {
                entering = Some(j);
                break; // Bland: first improving index.
            }
        }
        let Some(e) = entering else {
            break;
        };
        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..m {
            if t[i][e].is_positive() {
                let ratio = &t[i][total] / &t[i][e];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (li, _) = leave?; // Unbounded phase-one cannot happen; guard anyway.
        pivot(&mut t, li, e);
        basis[li] = e;
    }
    // Optimal value = sum of artificial basic values.
    let mut art_sum = BigRational::zero();
    for (i, bi) in basis.iter().enumerate() {
        if *bi >= n_cols {
            art_sum += &t[i][total];
        }
    }
    if !art_sum.is_zero() {
        return None;
    }
    let mut x = Vec::with_capacity(n_cols);
    x.resize(n_cols, BigRational::zero());
    for (i, bi) in basis.iter().enumerate() {
        if *bi < n_cols {
            x[*bi] = t[i][total].clone();
        }
    }
    Some(x)
}

fn pivot(t: &mut [Vec<BigRational>], row: usize, col: usize) {
    let p = t[row][col].clone();
    for entry in t[row].iter_mut() {
        *entry /= p.clone();
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row && !r[col].is_zero() {
            let f = r[col].clone();
            for (k, entry) in r.iter_mut().enumerate() {
                let delta = &f * &pivot_row[k];
                *entry -= delta;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat_to_f64;

    #[test]
    fn equality_system_with_nonnegative_solution() {
        // s1 + s2 = 1, s1 - s2 = 0 has s = (1/2, 1/2).
        let mut lp = ExactLp::new(0, 2);
        lp.push_row_f64(&[], &[1.0, 1.0], Cmp::Eq, 1.0);
        lp.push_row_f64(&[], &[1.0, -1.0], Cmp::Eq, 0.0);
        let (_, s) = lp.solve().unwrap();
        assert_eq!(rat_to_f64(&s[0]), 0.5);
        assert_eq!(rat_to_f64(&s[1]), 0.5);
    }

    #[test]
    fn infeasible_sign_clash_detected() {
        // s >= 0 with s = -1 is infeasible.
        let mut lp = ExactLp::new(0, 1);
        lp.push_row_f64(&[], &[1.0], Cmp::Eq, -1.0);
        assert!(lp.solve().is_none());
    }

    #[test]
    fn free_variables_take_negative_values() {
        let mut lp = ExactLp::new(1, 0);
        lp.push_row_f64(&[2.0], &[], Cmp::Eq, -3.0);
        let (u, _) = lp.solve().unwrap();
        assert_eq!(rat_to_f64(&u[0]), -1.5);
    }

    #[test]
    fn inequalities_get_slacks() {
        // u >= 1 and u <= 3 and u + s = 2 with s >= 0.
        let mut lp = ExactLp::new(1, 1);
        lp.push_row_f64(&[1.0], &[0.0], Cmp::Ge, 1.0);
        lp.push_row_f64(&[1.0], &[0.0], Cmp::Le, 3.0);
        lp.push_row_f64(&[1.0], &[1.0], Cmp::Eq, 2.0);
        let (u, s) = lp.solve().unwrap();
        let uv = rat_to_f64(&u[0]);
        let sv = rat_to_f64(&s[0]);
        assert!(uv >= 1.0 && uv <= 3.0);
        assert_eq!(uv + sv, 2.0);
    }

    #[test]
    fn degenerate_system_terminates() {
        // Highly degenerate rows exercising Bland's rule.
        let mut lp = ExactLp::new(0, 4);
        lp.push_row_f64(&[], &[1.0, -1.0, 1.0, -1.0], Cmp::Eq, 0.0);
        lp.push_row_f64(&[], &[1.0, 1.0, -1.0, -1.0], Cmp::Eq, 0.0);
        lp.push_row_f64(&[], &[1.0, 1.0, 1.0, 1.0], Cmp::Eq, 1.0);
        assert!(lp.solve().is_some());
    }
}
