//! Orthodisjunctive-programming subMFC: a sequence-indexed constraint
//! qualification that restores M-stationarity from approximate stationarity.
//! The condition is checked at a feasible `x̄` against a supplied
//! approximately stationary sequence and splits into two parts: (i) the
//! positively weighted multiplier system over the stabilized index set must
//! be infeasible, and (ii) the sequence must genuinely witness approximate
//! stationarity.
//!
//! The index set and the componentwise multiplier signs are inferred from
//! the stabilized tail of the sequence; a caller-supplied index set must
//! match the inferred one, since the sequence cannot witness any other. Part
//! (i) runs the exact rational enumerator with right-hand side zero and a
//! `Σθ = 1` normalization row over the sign-adjusted component
//! subdifferentials (directional ones in the directional variant), so a
//! feasible system yields a normalized weight vector `u` that refutes the
//! condition regardless of the sequence. A holds verdict needs both parts:
//! infeasibility of every branch system and a verified sequence. An empty
//! inferred index set makes part (i) vacuous.
//!
//! [`submfc_consequence`] follows the implication through: it clusters the
//! tail multipliers, confirms the clustered multiplier supports
//! stationarity at `x̄` within tolerance, and replays the M-stationarity
//! checker. Unbounded multiplier norms or an unsupported cluster abort with
//! a dedicated error instead of a verdict, since the implication's premise
//! is then void.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::amseq::{
    normalize_subsequence, trend, verify_am_sequence, verify_dir_am_sequence, AmError, AmSequence,
};
use crate::cones::{limiting_normal_cone, ConeError, DIR_MEMBER_EPS};
use crate::poly::{PolyUnion, Polytope};
use crate::problem::{InfeasiblePoint, Problem};
use crate::quals::UNIT_EPS;
use crate::rational::rvec_to_f64;
use crate::simplex::{Cmp, ExactLp};
use crate::stationarity::{
    advance, check_dir_m_stationarity, check_m_stationarity, critical_cone_membership,
    disjoint_nonsmooth_supports, Certificate, NoMultiplier, StatError, CERT_RESIDUAL_EPS,
};
use crate::subdiff::{dir_limiting_subdiff, limiting_subdiff, SubdiffError};
use crate::vecops::{norm2, norm_inf, scale, sub, zeros};
use crate::verdict::Verdict;

/// Failure modes of the subMFC checker and its consequence replay.
#[derive(Clone, Debug, PartialEq)]
pub enum SubmfcError {
    Infeasible(InfeasiblePoint),
    Cone(ConeError),
    Subdiff(SubdiffError),
    Sequence(AmError),
    /// Shape or content violation described in the message.
    Malformed(String),
    /// The directional variant requires a direction in the explicit critical
    /// cone at the base point.
    DirectionNotCritical,
    /// Multiplier norms grow along the tail, so no cluster point exists and
    /// the consequence has a void premise.
    UnboundedMultipliers { slope: Option<f64> },
    /// The clustered multiplier does not support stationarity at the base
    /// point within tolerance.
    ClusterUnsupported { residual: f64 },
}

impl core::fmt::Display for SubmfcError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SubmfcError::Infeasible(e) => write!(f, "base point rejected: {e}"),
            SubmfcError::Cone(e) => write!(f, "cone evaluation failed: {e}"),
            SubmfcError::Subdiff(e) => write!(f, "subdifferential evaluation failed: {e}"),
            SubmfcError::Sequence(e) => write!(f, "sequence handling failed: {e}"),
            SubmfcError::Malformed(msg) => write!(f, "malformed input: {msg}"),
            SubmfcError::DirectionNotCritical => {
                write!(f, "direction is not in the explicit critical cone at the base point")
            }
            SubmfcError::UnboundedMultipliers { slope } => match slope {
                Some(s) => write!(
                    f,
                    "multiplier norms grow along the tail (log slope {s:.3}); no cluster point exists"
                ),
                None => write!(f, "multiplier norms grow along the tail; no cluster point exists"),
            },
            SubmfcError::ClusterUnsupported { residual } => write!(
                f,
                "clustered multiplier fails the stationarity system at the base point (residual {residual:.3e}); the multiplier tail may be unsettled"
            ),
        }
    }
}

impl core::error::Error for SubmfcError {}

impl From<ConeError> for SubmfcError {
    fn from(e: ConeError) -> Self {
        SubmfcError::Cone(e)
    }
}

impl From<SubdiffError> for SubmfcError {
    fn from(e: SubdiffError) -> Self {
        SubmfcError::Subdiff(e)
    }
}

impl From<AmError> for SubmfcError {
    fn from(e: AmError) -> Self {
        SubmfcError::Sequence(e)
    }
}

fn from_stat(e: StatError) -> SubmfcError {
    match e {
        StatError::Infeasible(i) => SubmfcError::Infeasible(i),
        StatError::Cone(c) => SubmfcError::Cone(c),
        StatError::Subdiff(s) => SubmfcError::Subdiff(s),
        StatError::ObjectiveNotDifferentiable => SubmfcError::Malformed(String::from(
            "objective not differentiable at the base point",
        )),
        StatError::ZeroDirection => {
            SubmfcError::Malformed(String::from("direction must be nonzero"))
        }
    }
}

/// Positive evidence: the inferred index data, the stabilized tail the
/// verdict rests on, and the size of the exhausted search.
#[derive(Clone, Debug)]
pub struct SubmfcHolds {
    /// Components with a nonzero multiplier sign on the tail, ascending.
    pub index_set: Vec<usize>,
    /// Componentwise multiplier signs; zero off the index set.
    pub signs: Vec<i8>,
    /// Stabilized tail of the supplied sequence.
    pub tail: AmSequence,
    /// Direction of the directional variant; `None` for the plain one.
    pub d: Option<Vec<f64>>,
    /// Branch systems proven infeasible; zero for a vacuous verdict.
    pub combos_checked: usize,
    /// True when the inferred index set is empty and part (i) is trivial.
    pub vacuous: bool,
}

/// A normalized weight vector feasible for the part (i) system: `u ≥ 0`
/// supported on the index set, `Σu = 1`, and `0 ∈ Σ u_i ∂(sgn_i · F_i)`
/// within `residual`.
#[derive(Clone, Debug)]
pub struct SubmfcWitness {
    pub index_set: Vec<usize>,
    pub signs: Vec<i8>,
    pub u: Vec<f64>,
    /// Float replay residual of the exact rational solution.
    pub residual: f64,
    /// Whether every subdifferential in the feasible branch is exact and the
    /// sum rule composes exactly; a false flag marks a possibly spurious
    /// witness from an outer bound.
    pub exact: bool,
}

/// Check subMFC at `x̄` against a plain approximately stationary sequence.
/// `index_set`, when supplied, must equal the multiplier support inferred
/// from the stabilized tail.
pub fn check_odp_submfc(
    p: &Problem,
    xbar: &[f64],
    seq: &AmSequence,
    index_set: Option<&[usize]>,
    tol: f64,
) -> Result<Verdict<SubmfcHolds, SubmfcWitness>, SubmfcError> {
    submfc_core(p, xbar, None, seq, index_set, tol)
}

/// Directional variant along the unit direction `d`, which must lie in the
/// explicit critical cone at `x̄`. Part (i) uses directional limiting
/// subdifferentials and part (ii) additionally checks the directional
/// convergence conditions of the sequence.
pub fn check_odp_submfc_dir(
    p: &Problem,
    xbar: &[f64],
    d: &[f64],
    seq: &AmSequence,
    index_set: Option<&[usize]>,
    tol: f64,
) -> Result<Verdict<SubmfcHolds, SubmfcWitness>, SubmfcError> {
    if d.len() != p.n() || libm::fabs(norm2(d) - 1.0) > UNIT_EPS {
        return Err(SubmfcError::Malformed(String::from(
            "direction must be a unit vector of matching dimension",
        )));
    }
    let cm = critical_cone_membership(p, xbar, d).map_err(from_stat)?;
    if !cm.in_explicit {
        return Err(SubmfcError::DirectionNotCritical);
    }
    submfc_core(p, xbar, Some(d), seq, index_set, tol)
}

fn submfc_core(
    p: &Problem,
    xbar: &[f64],
    d: Option<&[f64]>,
    seq: &AmSequence,
    supplied: Option<&[usize]>,
    tol: f64,
) -> Result<Verdict<SubmfcHolds, SubmfcWitness>, SubmfcError> {
    p.require_feasible(xbar).map_err(SubmfcError::Infeasible)?;
    if seq.xbar.len() != xbar.len() || norm_inf(&sub(&seq.xbar, xbar)) > 1e-12 {
        return Err(SubmfcError::Malformed(String::from(
            "sequence base point differs from the query point",
        )));
    }
    let (verified, obstruction) = match d {
        None => match verify_am_sequence(p, seq, tol) {
            Ok(rep) => report_state(&rep.verdict),
            Err(e) => return Err(SubmfcError::Sequence(e)),
        },
        Some(dv) => match verify_dir_am_sequence(p, seq, dv, tol) {
            Ok(rep) => report_state(&rep.verdict),
            Err(AmError::BasePointCollision(k)) => (
                false,
                Some(format!(
                    "directional conditions not checkable: record k = {k} coincides with the base point"
                )),
            ),
            Err(e) => return Err(SubmfcError::Sequence(e)),
        },
    };
    let (tail, pattern) = normalize_subsequence(p, seq).map_err(SubmfcError::Sequence)?;
    let inferred: Vec<usize> = pattern
        .signs
        .iter()
        .enumerate()
        .filter(|(_, s)| **s != 0)
        .map(|(i, _)| i)
        .collect();
    let index_set = match supplied {
        None => inferred,
        Some(given) => {
            let mut sorted = given.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted != inferred {
                return Err(SubmfcError::Malformed(format!(
                    "supplied index set {sorted:?} differs from the inferred multiplier support {inferred:?}"
                )));
            }
            sorted
        }
    };
    let base_active = p.active_sets(xbar, &zeros(p.m()));
    for &i in &index_set {
        if !base_active.i.contains(&i) {
            return Err(SubmfcError::Malformed(format!(
                "component {i} carries a multiplier sign but is inactive at the base point"
            )));
        }
    }
    if index_set.is_empty() {
        let holds = SubmfcHolds {
            index_set,
            signs: pattern.signs.clone(),
            tail,
            d: d.map(<[f64]>::to_vec),
            combos_checked: 0,
            vacuous: true,
        };
        return Ok(finish(holds, verified, obstruction));
    }
    let mut sets: Vec<PolyUnion> = Vec::with_capacity(index_set.len());
    for &i in &index_set {
        let s = match d {
            None => limiting_subdiff(&p.constraints()[i], xbar, pattern.signs[i]),
            Some(dv) => dir_limiting_subdiff(&p.constraints()[i], xbar, dv, pattern.signs[i]),
        }
        .map_err(SubmfcError::Subdiff)?;
        sets.push(s);
    }
    // Components whose subdifferential union is empty cannot receive weight;
    // dropping their block forces u_i = 0 without losing solutions.
    let present: Vec<usize> = (0..index_set.len()).filter(|s| !sets[*s].polys.is_empty()).collect();
    let mut combos = 0usize;
    if !present.is_empty() {
        let mut flags = vec![false; p.m()];
        for &slot in &present {
            let vertex_count: usize = sets[slot].polys.iter().map(|q| q.vertices.len()).sum();
            if sets[slot].polys.len() > 1 || vertex_count > 1 {
                flags[index_set[slot]] = true;
            }
        }
        let exact = present.iter().all(|&s| sets[s].exact)
            && disjoint_nonsmooth_supports(p, &flags);
        let radix: Vec<usize> = present.iter().map(|&s| sets[s].polys.len()).collect();
        let mut idx = vec![0usize; present.len()];
        loop {
            combos += 1;
            let polys: Vec<&Polytope> = present
                .iter()
                .zip(&idx)
                .map(|(&s, &b)| &sets[s].polys[b])
                .collect();
            let comps: Vec<usize> = present.iter().map(|&s| index_set[s]).collect();
            if let Some((u, residual)) = submfc_system(p.n(), p.m(), &comps, &polys, tol) {
                return Ok(Verdict::Fails(SubmfcWitness {
                    index_set,
                    signs: pattern.signs.clone(),
                    u,
                    residual,
                    exact,
                }));
            }
            if !advance(&mut idx, &radix) {
                break;
            }
        }
    }
    let holds = SubmfcHolds {
        index_set,
        signs: pattern.signs.clone(),
        tail,
        d: d.map(<[f64]>::to_vec),
        combos_checked: combos,
        vacuous: false,
    };
    Ok(finish(holds, verified, obstruction))
}

fn report_state(v: &Verdict<String, String>) -> (bool, Option<String>) {
    match v {
        Verdict::Holds(_) => (true, None),
        Verdict::Fails(msg) | Verdict::Inconclusive(msg) => (false, Some(msg.clone())),
    }
}

fn finish(
    holds: SubmfcHolds,
    verified: bool,
    obstruction: Option<String>,
) -> Verdict<SubmfcHolds, SubmfcWitness> {
    if verified {
        Verdict::Holds(holds)
    } else {
        Verdict::Inconclusive(format!(
            "the multiplier system is infeasible over the index set, but the sequence does not establish the premise: {}",
            obstruction.unwrap_or_else(|| String::from("verification failed"))
        ))
    }
}

/// Solve `Σθ·v = 0`, `Σθ = 1`, `θ ≥ 0` over the chosen branch polytopes and
/// fold the block sums into a weight vector over the full component range.
fn submfc_system(
    n: usize,
    m: usize,
    comps: &[usize],
    polys: &[&Polytope],
    tol: f64,
) -> Option<(Vec<f64>, f64)> {
    let n_pos: usize = polys.iter().map(|q| q.vertices.len()).sum();
    let mut lp = ExactLp::new(0, n_pos);
    for k in 0..n {
        let coeffs: Vec<f64> =
            polys.iter().flat_map(|q| q.vertices.iter().map(move |v| v[k])).collect();
        lp.push_row_f64(&[], &coeffs, Cmp::Eq, 0.0);
    }
    let ones = vec![1.0; n_pos];
    lp.push_row_f64(&[], &ones, Cmp::Eq, 1.0);
    let (_, theta) = lp.solve()?;
    let theta = rvec_to_f64(&theta);
    let mut u = zeros(m);
    let mut replay = zeros(n);
    let mut offset = 0usize;
    for (slot, &comp) in comps.iter().enumerate() {
        let verts = &polys[slot].vertices;
        let w = &theta[offset..offset + verts.len()];
        u[comp] = w.iter().sum();
        for (wk, v) in w.iter().zip(verts) {
            for k in 0..n {
                replay[k] += wk * v[k];
            }
        }
        offset += verts.len();
    }
    let total: f64 = theta.iter().sum();
    let residual = f64::max(norm_inf(&replay), libm::fabs(total - 1.0));
    if residual > f64::max(tol, CERT_RESIDUAL_EPS) {
        return None;
    }
    Some((u, residual))
}

/// Outcome of replaying the subMFC implication: the clustered multiplier,
/// its stationarity residual at the base point, and the fresh
/// M-stationarity verdict.
#[derive(Clone, Debug)]
pub struct ConsequenceReport {
    pub cluster: Vec<f64>,
    pub residual: f64,
    pub verdict: Verdict<Certificate, NoMultiplier>,
}

/// Follow a holds verdict through to M-stationarity. Clusters the tail
/// multipliers (components trending to zero cluster at zero, the rest at
/// their final value), confirms the cluster lies in the limiting normal
/// cone and reproduces `-∇f(x̄)` from the fixed-weight sum of component
/// subdifferentials within `max(tol, 1e-8)`, then replays the plain or
/// directional M-stationarity checker according to the verdict's mode.
pub fn submfc_consequence(
    p: &Problem,
    xbar: &[f64],
    holds: &SubmfcHolds,
    tol: f64,
) -> Result<ConsequenceReport, SubmfcError> {
    p.require_feasible(xbar).map_err(SubmfcError::Infeasible)?;
    let recs = &holds.tail.records;
    if recs.len() < 3 {
        return Err(SubmfcError::Malformed(String::from(
            "cluster trends need at least 3 tail records",
        )));
    }
    let ks: Vec<f64> = recs.iter().map(|r| r.k as f64).collect();
    let norms: Vec<f64> = recs.iter().map(|r| norm2(&r.lambda)).collect();
    let t = trend(&ks, &norms, tol);
    if !t.bounded {
        return Err(SubmfcError::UnboundedMultipliers { slope: t.slope });
    }
    let mut cluster = zeros(p.m());
    for i in 0..p.m() {
        let vals: Vec<f64> = recs.iter().map(|r| libm::fabs(r.lambda[i])).collect();
        if !trend(&ks, &vals, tol).to_zero {
            cluster[i] = recs.last().expect("checked above").lambda[i];
        }
    }
    let y0 = p.eval_constraints(xbar);
    let cone = limiting_normal_cone(p.gamma(), &y0).map_err(SubmfcError::Cone)?;
    if !cone.member(&cluster, DIR_MEMBER_EPS * (1.0 + norm_inf(&cluster))) {
        return Err(SubmfcError::ClusterUnsupported { residual: f64::INFINITY });
    }
    let g = p
        .objective_grad(xbar)
        .ok_or_else(|| from_stat(StatError::ObjectiveNotDifferentiable))?;
    let b = scale(&g, -1.0);
    let d = holds.d.as_deref();
    let mut parts: Vec<(f64, PolyUnion)> = Vec::new();
    for (i, &li) in cluster.iter().enumerate() {
        if li == 0.0 {
            continue;
        }
        let sign: i8 = if li > 0.0 { 1 } else { -1 };
        let set = match d {
            None => limiting_subdiff(&p.constraints()[i], xbar, sign),
            Some(dv) => dir_limiting_subdiff(&p.constraints()[i], xbar, dv, sign),
        }
        .map_err(SubmfcError::Subdiff)?;
        if set.polys.is_empty() {
            return Err(SubmfcError::ClusterUnsupported { residual: f64::INFINITY });
        }
        parts.push((libm::fabs(li), set));
    }
    let residual = if parts.is_empty() {
        norm2(&b)
    } else {
        let radix: Vec<usize> = parts.iter().map(|(_, s)| s.polys.len()).collect();
        let mut idx = vec![0usize; parts.len()];
        let mut best = f64::INFINITY;
        loop {
            let chosen: Vec<(f64, &Polytope)> =
                parts.iter().zip(&idx).map(|((w, s), &b)| (*w, &s.polys[b])).collect();
            let dist = minkowski_distance(&chosen, &b);
            if dist < best {
                best = dist;
            }
            if !advance(&mut idx, &radix) {
                break;
            }
        }
        best
    };
    if residual > f64::max(tol, 1e-8) {
        return Err(SubmfcError::ClusterUnsupported { residual });
    }
    let verdict = match d {
        None => check_m_stationarity(p, xbar, tol),
        Some(dv) => check_dir_m_stationarity(p, xbar, dv, tol),
    }
    .map_err(from_stat)?;
    Ok(ConsequenceReport { cluster, residual, verdict })
}

/// Distance from `b` to the Minkowski sum of the scaled polytopes, via the
/// product vertex set: every sum of one scaled vertex per factor.
fn minkowski_distance(parts: &[(f64, &Polytope)], b: &[f64]) -> f64 {
    let radix: Vec<usize> = parts.iter().map(|(_, q)| q.vertices.len()).collect();
    if radix.iter().any(|r| *r == 0) {
        return f64::INFINITY;
    }
    let mut idx = vec![0usize; parts.len()];
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    loop {
        let mut v = zeros(b.len());
        for ((w, q), &vi) in parts.iter().zip(&idx) {
            for (vk, qk) in v.iter_mut().zip(&q.vertices[vi]) {
                *vk += w * qk;
            }
        }
        vertices.push(v);
        if !advance(&mut idx, &radix) {
            break;
        }
    }
    Polytope { vertices }.distance(b)
}
