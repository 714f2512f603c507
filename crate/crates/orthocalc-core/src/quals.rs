//! Constraint qualification analysis at a feasible candidate point: exact
//! abnormal-multiplier searches (NNAMCQ and its directional sharpening
//! FOSCMS), sampled comparisons of the linearization cone against the
//! feasible set (GACQ and GGCQ), metric-subregularity evidence ladders
//! (MSCQ), and falsification of asymptotic regularity from user-supplied
//! witness sequences.
//!
//! The abnormal searches mirror the stationarity enumerator with right-hand
//! side zero and one extra normalization row `Σθ = 1`, so every reported
//! multiplier satisfies `Σ|λ_i| = 1` and the zero multiplier can never leak
//! in as a witness. Because computed subdifferentials are outer bounds, a
//! feasible system is reported as failure unconditionally (with its
//! exactness recorded on the witness), while a holds verdict additionally
//! requires every searched subdifferential to be exact and the sum rule to
//! compose exactly; otherwise the search is inconclusive.
//!
//! GACQ and GGCQ are certified exactly for piecewise affine data, where the
//! tangent and linearization cones agree locally by polyhedrality. Otherwise
//! they are judged from restoration oracles over a sphere grid, with margins
//! tied to the grid step; those verdicts carry `certified: false`.
//!
//! [`estimate_mscq`] never returns a verdict. It reports raw evidence rows
//! (restoration distance against image distance at shrinking radii) plus a
//! divergence flag raised only when the ratio curve has at least a decade of
//! span, log-log slope at most [`MSCQ_DIVERGENCE_SLOPE`], and per-decade
//! maxima growing monotonically toward smaller steps.
//!
//! [`falsify_am_regularity`] can refute asymptotic regularity but never
//! certify it, which the uninhabited holds payload encodes in the type. A
//! refutation needs a verified witness sequence with unbounded multipliers
//! whose limit subgradient stays a positive distance away from the computed
//! limit target set; since that set is an outer bound, the refutation is
//! sound even when subdifferentials are inexact.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::amseq::{directional_conditions, trend, AmError};
use crate::boxes::MEMBER_EPS;
use crate::cones::{
    dir_limiting_normal_cone, limiting_normal_cone, CellUnion, ConeError, SignCell, Tag,
    DIR_MEMBER_EPS,
};
use crate::descent::{feasibility_distance, FeasOpts};
use crate::dirnbhd::gaussian;
use crate::oracle::{log_slope, sample_tangent_feasible, sphere_grid, TANGENT_OUT_MARGIN};
use crate::poly::{cone_nearest, PolyUnion};
use crate::problem::{InfeasiblePoint, Problem};
use crate::rational::rvec_to_f64;
use crate::simplex::{Cmp, ExactLp};
use crate::stationarity::{advance, disjoint_nonsmooth_supports, CERT_RESIDUAL_EPS};
use crate::subdiff::{dir_limiting_subdiff, limiting_subdiff, scalarization_subdiff, SubdiffError};
use crate::vecops::{axpy, dist2, dot, norm2, norm_inf, normalize, sub, zeros};
use crate::verdict::{Membership, Verdict};

/// Slack for unit-length checks on caller-supplied directions.
pub const UNIT_EPS: f64 = 1e-9;

/// Image residual below which a probe point counts as feasible and yields no
/// evidence row.
pub const MSCQ_FEASIBLE_EPS: f64 = 1e-13;

/// Log-log slope of ratio against step at or below which the evidence ladder
/// counts as divergent.
pub const MSCQ_DIVERGENCE_SLOPE: f64 = -0.95;

/// Per-decade ratio maxima may dip by at most this factor while still
/// counting as monotone growth toward smaller steps.
pub const MSCQ_MONOTONE_SLACK: f64 = 0.95;

/// Cap on restoration-oracle calls per sampled cone-comparison verdict.
pub const CQ_ORACLE_CAP: usize = 48;

/// Failure modes of the qualification checkers.
#[derive(Clone, Debug, PartialEq)]
pub enum QualError {
    Infeasible(InfeasiblePoint),
    Cone(ConeError),
    Subdiff(SubdiffError),
    Sequence(AmError),
    /// Shape or content violation described in the message.
    Malformed(String),
}

impl core::fmt::Display for QualError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QualError::Infeasible(e) => write!(f, "base point rejected: {e}"),
            QualError::Cone(e) => write!(f, "cone evaluation failed: {e}"),
            QualError::Subdiff(e) => write!(f, "subdifferential evaluation failed: {e}"),
            QualError::Sequence(e) => write!(f, "sequence handling failed: {e}"),
            QualError::Malformed(msg) => write!(f, "malformed input: {msg}"),
        }
    }
}

impl core::error::Error for QualError {}

impl From<ConeError> for QualError {
    fn from(e: ConeError) -> Self {
        QualError::Cone(e)
    }
}

impl From<SubdiffError> for QualError {
    fn from(e: SubdiffError) -> Self {
        QualError::Subdiff(e)
    }
}

impl From<AmError> for QualError {
    fn from(e: AmError) -> Self {
        QualError::Sequence(e)
    }
}

/// An ℓ¹-normalized abnormal multiplier: `Σ|λ_i| = 1`, `λ` in the searched
/// normal cone cell, and `0 ∈ Σ |λ_i| ∂(sgn λ_i · F_i)` within `residual`.
#[derive(Clone, Debug)]
pub struct AbnormalWitness {
    pub lambda: Vec<f64>,
    /// Normal-cone cell the multiplier was found in.
    pub cell: SignCell,
    /// Float replay residual of the exact rational solution, covering both
    /// the zero sum and the normalization row.
    pub residual: f64,
    /// Whether every subdifferential in the feasible system is exact and the
    /// sum rule composes exactly for it. A false flag means the witness was
    /// assembled from an outer bound and may be spurious.
    pub exact: bool,
}

/// Bookkeeping of an exhausted abnormal-multiplier search.
#[derive(Clone, Debug)]
pub struct AbnormalSearch {
    pub cells_tried: usize,
    pub systems_tried: usize,
    /// Present when the verdict holds for a structural reason rather than an
    /// exhausted enumeration, for example a vacuous direction.
    pub note: Option<String>,
}

/// NNAMCQ at `x̄`: no nonzero `λ` in the limiting normal cone of `Γ` at
/// `F(x̄)` with `0 ∈ Σ |λ_i| ∂(sgn λ_i · F_i)(x̄)`. Fails with a normalized
/// witness when such a multiplier system is feasible.
pub fn check_nnamcq(
    p: &Problem,
    xbar: &[f64],
    tol: f64,
) -> Result<Verdict<AbnormalSearch, AbnormalWitness>, QualError> {
    p.require_feasible(xbar).map_err(QualError::Infeasible)?;
    let y = p.eval_constraints(xbar);
    let cone = limiting_normal_cone(p.gamma(), &y)?;
    abnormal_search(p, xbar, &cone, None, tol)
}

/// FOSCMS at `x̄` along the unit direction `d`: the abnormal search runs over
/// the normal cone in direction `F′(x̄; d)` with directional
/// subdifferentials. A direction leaving the linearization cone makes the
/// condition hold vacuously.
pub fn check_foscms(
    p: &Problem,
    xbar: &[f64],
    d: &[f64],
    tol: f64,
) -> Result<Verdict<AbnormalSearch, AbnormalWitness>, QualError> {
    p.require_feasible(xbar).map_err(QualError::Infeasible)?;
    require_unit(d, p.n())?;
    let y = p.eval_constraints(xbar);
    let w = p.constraint_dir_derivatives(xbar, d);
    let cone = dir_limiting_normal_cone(p.gamma(), &y, &w)?;
    if cone.is_empty_set() {
        return Ok(Verdict::Holds(AbnormalSearch {
            cells_tried: 0,
            systems_tried: 0,
            note: Some(String::from(
                "direction leaves the linearization cone; the condition holds vacuously along it",
            )),
        }));
    }
    abnormal_search(p, xbar, &cone, Some(d), tol)
}

fn require_unit(d: &[f64], n: usize) -> Result<(), QualError> {
    if d.len() != n || libm::fabs(norm2(d) - 1.0) > UNIT_EPS {
        return Err(QualError::Malformed(String::from(
            "direction must be a unit vector of matching dimension",
        )));
    }
    Ok(())
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

/// Enumerate cell, sign, and branch combinations of the normalized abnormal
/// system `Σθ·v = 0`, `Σθ = 1`, `θ ≥ 0`. Cells fixing every multiplier to
/// zero are skipped: they cannot carry an abnormal multiplier.
fn abnormal_search(
    p: &Problem,
    xbar: &[f64],
    cone: &CellUnion,
    d: Option<&[f64]>,
    tol: f64,
) -> Result<Verdict<AbnormalSearch, AbnormalWitness>, QualError> {
    let m = p.m();
    let mut cache: BTreeMap<(usize, i8), PolyUnion> = BTreeMap::new();
    let mut all_exact = true;
    let mut nonsmooth_used = vec![false; m];
    let mut systems = 0usize;
    for cell in cone.cells() {
        let participating: Vec<usize> =
            (0..m).filter(|i| cell.tags[*i] != Tag::Zero).collect();
        if participating.is_empty() {
            continue;
        }
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
                        .map_err(QualError::Subdiff)?;
                    cache.insert(key, set);
                }
                let set = cache.get(&key).expect("just inserted").clone();
                if !set.exact {
                    all_exact = false;
                }
                let vertex_count: usize = set.polys.iter().map(|q| q.vertices.len()).sum();
                if set.polys.len() > 1 || vertex_count > 1 {
                    nonsmooth_used[i] = true;
                }
                sets.push(set);
            }
            if let Some(w) =
                abnormal_branches(p, &participating, &signs, &sets, cell, tol, &mut systems)
            {
                return Ok(Verdict::Fails(w));
            }
            if !advance(&mut sign_idx, &sign_options.iter().map(|o| o.len()).collect::<Vec<_>>())
            {
                break;
            }
        }
    }
    if all_exact && disjoint_nonsmooth_supports(p, &nonsmooth_used) {
        Ok(Verdict::Holds(AbnormalSearch {
            cells_tried: cone.cells().len(),
            systems_tried: systems,
            note: None,
        }))
    } else {
        Ok(Verdict::Inconclusive(String::from(
            "no abnormal multiplier found, but the searched subdifferential sum is only an outer bound",
        )))
    }
}

fn abnormal_branches(
    p: &Problem,
    participating: &[usize],
    signs: &[i8],
    sets: &[PolyUnion],
    cell: &SignCell,
    tol: f64,
    systems: &mut usize,
) -> Option<AbnormalWitness> {
    let radix: Vec<usize> = sets.iter().map(|s| s.polys.len()).collect();
    if radix.iter().any(|r| *r == 0) {
        return None;
    }
    let mut flags = vec![false; p.m()];
    for (slot, &i) in participating.iter().enumerate() {
        let vertex_count: usize = sets[slot].polys.iter().map(|q| q.vertices.len()).sum();
        if sets[slot].polys.len() > 1 || vertex_count > 1 {
            flags[i] = true;
        }
    }
    let combo_exact =
        sets.iter().all(|s| s.exact) && disjoint_nonsmooth_supports(p, &flags);
    let mut idx = vec![0usize; sets.len()];
    loop {
        *systems += 1;
        if let Some(w) =
            abnormal_system(p.n(), participating, signs, sets, &idx, cell, tol, combo_exact)
        {
            return Some(w);
        }
        if !advance(&mut idx, &radix) {
            return None;
        }
    }
}

fn abnormal_system(
    n: usize,
    participating: &[usize],
    signs: &[i8],
    sets: &[PolyUnion],
    branch: &[usize],
    cell: &SignCell,
    tol: f64,
    combo_exact: bool,
) -> Option<AbnormalWitness> {
    let polys: Vec<&crate::poly::Polytope> =
        sets.iter().zip(branch).map(|(s, k)| &s.polys[*k]).collect();
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
    let mut lambda = zeros(cell.tags.len());
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
        offset += verts.len();
    }
    let total: f64 = theta.iter().sum();
    let residual = f64::max(norm_inf(&replay), libm::fabs(total - 1.0));
    if residual > f64::max(tol, CERT_RESIDUAL_EPS) {
        return None;
    }
    Some(AbnormalWitness { lambda, cell: cell.clone(), residual, exact: combo_exact })
}

/// One metric-subregularity probe: where the probe landed, how far it is from
/// the base point, the restoration distance bound, the exact image distance,
/// and their ratio.
#[derive(Clone, Debug)]
pub struct MscqRow {
    pub point: Vec<f64>,
    /// `‖point − x̄‖`.
    pub step: f64,
    /// Upper bound on `dist(point, X)` from the restoration search.
    pub distance: f64,
    /// `dist(F(point), Γ)`, computed exactly.
    pub image_distance: f64,
    /// `distance / image_distance`; a candidate lower bound on the modulus.
    pub ratio: f64,
    /// The restored point realizing `distance`.
    pub restored: Vec<f64>,
}

/// Evidence ladder for metric subregularity. Never a verdict: `distance` is
/// only an upper bound, so the rows can refute a proposed modulus but cannot
/// certify one.
#[derive(Clone, Debug)]
pub struct MscqReport {
    pub rows: Vec<MscqRow>,
    /// Raised when the ratio curve spans at least a decade of steps, has
    /// log-log slope at most [`MSCQ_DIVERGENCE_SLOPE`], and grows
    /// monotonically toward smaller steps up to [`MSCQ_MONOTONE_SLACK`].
    pub divergence: bool,
    /// Log-log slope of ratio against step over all usable rows.
    pub slope: Option<f64>,
}

/// Single probe: exact image distance at `point` against a restoration upper
/// bound on the true distance to the feasible set. Returns `None` when the
/// point is already feasible beyond [`MSCQ_FEASIBLE_EPS`], where the ratio
/// carries no information.
pub fn mscq_probe(p: &Problem, xbar: &[f64], point: &[f64], seed: u64) -> Option<MscqRow> {
    let den = p.feasibility_residual(point);
    if den <= MSCQ_FEASIBLE_EPS {
        return None;
    }
    let opts = FeasOpts { seed, scan_radius: 2.0, starts: 2, penalty_iters: 200 };
    let feas = feasibility_distance(p, point, &opts);
    Some(MscqRow {
        point: point.to_vec(),
        step: dist2(point, xbar),
        distance: feas.distance,
        image_distance: den,
        ratio: feas.distance / den,
        restored: feas.point,
    })
}

/// Probe a geometric radius ladder `eps · 2^{-j}`, `j = 0..count`, around
/// `x̄`. With a unit direction `d` each rung probes the pure direction first
/// and two jitters `normalize(d + delta·g)` after it; without one, three
/// seeded random unit directions per rung. Feasible probes are skipped.
pub fn estimate_mscq(
    p: &Problem,
    xbar: &[f64],
    d: Option<&[f64]>,
    eps: f64,
    delta: f64,
    count: usize,
    seed: u64,
) -> Result<MscqReport, QualError> {
    p.require_feasible(xbar).map_err(QualError::Infeasible)?;
    if !(eps > 0.0) || !(delta >= 0.0) {
        return Err(QualError::Malformed(String::from(
            "ladder needs eps > 0 and delta ≥ 0",
        )));
    }
    if let Some(dv) = d {
        require_unit(dv, p.n())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for j in 0..count {
        let r = eps * libm::exp2(-(j as f64));
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        match d {
            Some(dv) => {
                dirs.push(dv.to_vec());
                for _ in 0..2 {
                    let g: Vec<f64> = (0..p.n()).map(|_| gaussian(&mut rng)).collect();
                    if let Some(u) = normalize(&axpy(dv, delta, &g)) {
                        dirs.push(u);
                    }
                }
            }
            None => {
                for _ in 0..3 {
                    let g: Vec<f64> = (0..p.n()).map(|_| gaussian(&mut rng)).collect();
                    if let Some(u) = normalize(&g) {
                        dirs.push(u);
                    }
                }
            }
        }
        for (t, u) in dirs.iter().enumerate() {
            let point = axpy(xbar, r, u);
            let probe_seed = seed.wrapping_add((j * 8 + t) as u64 + 1);
            if let Some(row) = mscq_probe(p, xbar, &point, probe_seed) {
                rows.push(row);
            }
        }
    }
    let (divergence, slope) = diverging_ratios(&rows);
    Ok(MscqReport { rows, divergence, slope })
}

fn diverging_ratios(rows: &[MscqRow]) -> (bool, Option<f64>) {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.step > 0.0 && r.ratio.is_finite() && r.ratio > 0.0)
        .map(|r| (r.step, r.ratio))
        .collect();
    if pairs.len() < 3 {
        return (false, None);
    }
    let steps: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ratios: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let slope = log_slope(&steps, &ratios);
    let step_min = steps.iter().fold(f64::INFINITY, |a, b| f64::min(a, *b));
    let step_max = steps.iter().fold(0.0f64, |a, b| f64::max(a, *b));
    if step_max < 10.0 * step_min {
        return (false, slope);
    }
    match slope {
        Some(s) if s <= MSCQ_DIVERGENCE_SLOPE => {}
        _ => return (false, slope),
    }
    let mut decade_max: BTreeMap<i64, f64> = BTreeMap::new();
    for (st, ra) in &pairs {
        let dec = libm::floor(libm::log10(*st)) as i64;
        let e = decade_max.entry(dec).or_insert(f64::NEG_INFINITY);
        if *ra > *e {
            *e = *ra;
        }
    }
    // Keys ascend with step size; walk from the largest steps down and demand
    // the maxima keep growing within the slack.
    let maxima: Vec<f64> = decade_max.values().rev().copied().collect();
    for w in maxima.windows(2) {
        if w[1] < MSCQ_MONOTONE_SLACK * w[0] {
            return (false, slope);
        }
    }
    (true, slope)
}

/// Positive evidence for a sampled cone-comparison verdict.
#[derive(Clone, Debug)]
pub struct CqEvidence {
    /// True only on the exact piecewise affine path.
    pub certified: bool,
    /// Number of grid directions the verdict rests on.
    pub checked: usize,
    pub detail: String,
}

/// Witness against a sampled cone-comparison verdict.
#[derive(Clone, Debug)]
pub struct CqWitness {
    /// Offending direction.
    pub dir: Vec<f64>,
    /// For the polar comparison: the normal candidate and the linearization
    /// direction whose inner product stays above the failure margin.
    pub pair: Option<(Vec<f64>, Vec<f64>)>,
    pub detail: String,
}

/// Paired verdicts for the tangent-cone equality (GACQ) and its polar
/// inclusion (GGCQ).
#[derive(Clone, Debug)]
pub struct CqReport {
    pub gacq: Verdict<CqEvidence, CqWitness>,
    pub ggcq: Verdict<CqEvidence, CqWitness>,
}

/// Angular resolution of the direction grid, used to derive acceptance and
/// rejection margins for the sampled polar comparison.
fn grid_step(n: usize, grid: usize) -> f64 {
    match n {
        0 | 1 => 0.01,
        2 => 2.0 * core::f64::consts::PI / grid as f64,
        _ => libm::sqrt(4.0 * core::f64::consts::PI / grid as f64),
    }
}

fn subsample(idx: &[usize]) -> Vec<usize> {
    if idx.len() <= CQ_ORACLE_CAP {
        return idx.to_vec();
    }
    let stride = idx.len().div_ceil(CQ_ORACLE_CAP);
    let mut out: Vec<usize> = idx.iter().copied().step_by(stride).collect();
    let last = *idx.last().expect("nonempty by the branch above");
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// GACQ (the tangent cone of the feasible set equals the linearization cone)
/// and GGCQ (their polars agree) at `x̄`.
///
/// Piecewise affine data is certified exactly: locally `F(x̄ + h) = F(x̄) +
/// F′(x̄; h)` and membership in `Γ` is decided by the tangent cell, so the
/// two cones coincide near the point and both verdicts hold with
/// `certified: true`. Otherwise, grid directions inside the linearization
/// cone (decided exactly) are compared against the restoration oracle, a
/// budget of [`CQ_ORACLE_CAP`] calls subsampled by stride with the last
/// direction always kept. A verified non-tangent direction fails GACQ; for
/// GGCQ the grid searches for a normal candidate (inner product at most
/// `2h` against every verified tangent sample) paired with a linearization
/// direction at inner product `E`: at most `5h` holds, at least
/// [`TANGENT_OUT_MARGIN`] fails, in between stays inconclusive.
pub fn check_gacq_ggcq(
    p: &Problem,
    xbar: &[f64],
    grid: usize,
    seed: u64,
) -> Result<CqReport, QualError> {
    p.require_feasible(xbar).map_err(QualError::Infeasible)?;
    if grid == 0 {
        return Err(QualError::Malformed(String::from("grid must be positive")));
    }
    if p.is_piecewise_affine() {
        return Ok(CqReport {
            gacq: Verdict::Holds(CqEvidence {
                certified: true,
                checked: 0,
                detail: String::from(
                    "piecewise affine data: tangent and linearization cones coincide locally",
                ),
            }),
            ggcq: Verdict::Holds(CqEvidence {
                certified: true,
                checked: 0,
                detail: String::from(
                    "piecewise affine data: the polar inclusion is inherited from cone equality",
                ),
            }),
        });
    }
    let n = p.n();
    let dirs = sphere_grid(n, grid, seed);
    let mut t_lin_in: Vec<usize> = Vec::new();
    for (i, u) in dirs.iter().enumerate() {
        if p.in_linearization_cone(xbar, u).map_err(QualError::Cone)? {
            t_lin_in.push(i);
        }
    }
    if t_lin_in.is_empty() {
        return Ok(CqReport {
            gacq: Verdict::Holds(CqEvidence {
                certified: false,
                checked: dirs.len(),
                detail: String::from(
                    "no grid direction lies in the linearization cone; equality holds vacuously on this sample",
                ),
            }),
            ggcq: Verdict::Holds(CqEvidence {
                certified: false,
                checked: dirs.len(),
                detail: String::from(
                    "no grid direction lies in the linearization cone; the polar inclusion holds vacuously on this sample",
                ),
            }),
        });
    }
    let picked = subsample(&t_lin_in);
    let memberships: Vec<Membership> = picked
        .iter()
        .enumerate()
        .map(|(slot, &i)| sample_tangent_feasible(p, xbar, &dirs[i], seed.wrapping_add(slot as u64 + 1)))
        .collect();
    let in_count = memberships.iter().filter(|m| matches!(m, Membership::In)).count();
    let gacq = if let Some(pos) = memberships.iter().position(|m| matches!(m, Membership::Out)) {
        Verdict::Fails(CqWitness {
            dir: dirs[picked[pos]].clone(),
            pair: None,
            detail: String::from(
                "direction lies in the linearization cone but feasible restoration stalls at a fixed fraction of the step",
            ),
        })
    } else if memberships.iter().any(|m| matches!(m, Membership::Borderline)) {
        Verdict::Inconclusive(format!(
            "{in_count} of {} sampled linearization directions verified tangent; the rest are borderline",
            picked.len()
        ))
    } else {
        Verdict::Holds(CqEvidence {
            certified: false,
            checked: picked.len(),
            detail: format!(
                "all {} sampled linearization-cone directions verified tangent by restoration",
                picked.len()
            ),
        })
    };
    let h = grid_step(n, grid);
    let s_in: Vec<&Vec<f64>> = picked
        .iter()
        .zip(&memberships)
        .filter(|(_, m)| matches!(m, Membership::In))
        .map(|(&i, _)| &dirs[i])
        .collect();
    let mut candidates = 0usize;
    let mut best: Option<(f64, usize, usize)> = None;
    for (wi, w) in dirs.iter().enumerate() {
        if !s_in.is_empty() {
            let polar_slack = s_in.iter().map(|s| dot(w, s)).fold(f64::NEG_INFINITY, f64::max);
            if polar_slack > 2.0 * h {
                continue;
            }
        }
        candidates += 1;
        for &gi in &t_lin_in {
            let e = dot(w, &dirs[gi]);
            if best.map_or(true, |(be, _, _)| e > be) {
                best = Some((e, wi, gi));
            }
        }
    }
    let ggcq = match best {
        None => Verdict::Holds(CqEvidence {
            certified: false,
            checked: 0,
            detail: String::from(
                "no grid direction is a normal candidate; the polar inclusion holds vacuously on this sample",
            ),
        }),
        Some((e, wi, gi)) => {
            if e >= TANGENT_OUT_MARGIN {
                Verdict::Fails(CqWitness {
                    dir: dirs[wi].clone(),
                    pair: Some((dirs[wi].clone(), dirs[gi].clone())),
                    detail: format!(
                        "normal candidate meets a linearization direction at inner product {e:.3}",
                    ),
                })
            } else if e <= 5.0 * h {
                Verdict::Holds(CqEvidence {
                    certified: false,
                    checked: candidates,
                    detail: format!(
                        "worst polar violation {e:.3e} is within the grid resolution {:.3e}",
                        5.0 * h
                    ),
                })
            } else {
                Verdict::Inconclusive(format!(
                    "worst polar violation {e:.3e} sits between the grid resolution {:.3e} and the failure margin {TANGENT_OUT_MARGIN}",
                    5.0 * h
                ))
            }
        }
    };
    Ok(CqReport { gacq, ggcq })
}

/// One member of an asymptotic-regularity witness sequence: a point, a
/// multiplier in the limiting cone at `F(x^k) − δ^k`, and a subgradient
/// `ξ^k ∈ Σ |λ^k_i| ∂(sgn λ^k_i · F_i)(x^k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegRecord {
    /// Sequence index `k ≥ 1`; doubles as the abscissa for trend regression.
    pub k: u32,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
    pub xi: Vec<f64>,
}

/// Witness sequence against asymptotic regularity, together with the claimed
/// limit of the subgradients.
#[derive(Clone, Debug, PartialEq)]
pub struct RegSequence {
    pub records: Vec<RegRecord>,
    pub xi_limit: Vec<f64>,
}

/// Which regularity notion to attack: the plain one, the directional one
/// (sequence converges along `d`, plain limit target), or the strong
/// directional one (directional limit target as well).
#[derive(Clone, Debug, PartialEq)]
pub enum RegMode {
    Plain,
    Directional(Vec<f64>),
    StrongDirectional(Vec<f64>),
}

/// A verified refutation: the limit subgradient, its distance to the
/// computed limit target set, and the nearest target point.
#[derive(Clone, Debug)]
pub struct RegFalsification {
    pub xi: Vec<f64>,
    pub distance: f64,
    pub nearest: Vec<f64>,
    pub detail: String,
}

/// Try to refute asymptotic regularity at `x̄` with the supplied sequence.
///
/// The checker can only ever fail or stay inconclusive; certification would
/// need a quantifier over all sequences, so the holds payload is
/// uninhabited. Fails requires: every record valid (image in `Γ`, multiplier
/// in the limiting cone, `ξ^k` in the scalarization subdifferential within
/// `tol` relative slack), `‖x^k − x̄‖`, `‖δ^k‖`, `‖ξ^k − ξ‖` all vanishing,
/// unbounded multiplier norms (bounded ones converge to an ordinary
/// multiplier whose limit lands in the target), the directional convergence
/// conditions in the directional modes, and finally `ξ` staying farther than
/// `max(tol, CERT_RESIDUAL_EPS)` from the computed target set. The target is
/// assembled per normal-cone cell, sign choice, and subdifferential branch
/// as the conic hull of the participating vertices, with its nearest point
/// computed exactly; since it is an outer bound of the true target, a
/// reported violation survives inexact subdifferentials.
pub fn falsify_am_regularity(
    p: &Problem,
    xbar: &[f64],
    seq: &RegSequence,
    mode: &RegMode,
    tol: f64,
) -> Result<Verdict<core::convert::Infallible, RegFalsification>, QualError> {
    p.require_feasible(xbar).map_err(QualError::Infeasible)?;
    validate_reg_sequence(p, seq)?;
    let dmode: Option<&[f64]> = match mode {
        RegMode::Plain => None,
        RegMode::Directional(dv) | RegMode::StrongDirectional(dv) => {
            require_unit(dv, p.n())?;
            Some(dv.as_slice())
        }
    };
    for r in &seq.records {
        let y = sub(&p.eval_constraints(&r.x), &r.delta);
        if !p.gamma().contains(&y, MEMBER_EPS) {
            return Ok(Verdict::Inconclusive(format!(
                "record k = {}: F(x^k) − δ^k leaves Γ, so the sequence does not witness the premise",
                r.k
            )));
        }
        let cone = limiting_normal_cone(p.gamma(), &y)?;
        let cone_tol = DIR_MEMBER_EPS * (1.0 + norm_inf(&r.lambda));
        if !cone.member(&r.lambda, cone_tol) {
            return Ok(Verdict::Inconclusive(format!(
                "record k = {}: λ^k lies outside the limiting normal cone",
                r.k
            )));
        }
        let scal = scalarization_subdiff(p.constraints(), &r.lambda, &r.x, None)?;
        let gap = scal.set.distance(&r.xi);
        if gap > tol * (1.0 + norm_inf(&r.xi)) {
            return Ok(Verdict::Inconclusive(format!(
                "record k = {}: ξ^k misses the scalarization subdifferential by {gap:.3e}",
                r.k
            )));
        }
    }
    let ks: Vec<f64> = seq.records.iter().map(|r| r.k as f64).collect();
    let x_gaps: Vec<f64> = seq.records.iter().map(|r| dist2(&r.x, xbar)).collect();
    let d_norms: Vec<f64> = seq.records.iter().map(|r| norm2(&r.delta)).collect();
    let xi_gaps: Vec<f64> =
        seq.records.iter().map(|r| norm2(&sub(&r.xi, &seq.xi_limit))).collect();
    for (name, t) in [
        ("‖x^k − x̄‖", trend(&ks, &x_gaps, tol)),
        ("‖δ^k‖", trend(&ks, &d_norms, tol)),
        ("‖ξ^k − ξ‖", trend(&ks, &xi_gaps, tol)),
    ] {
        if !t.to_zero {
            return Ok(Verdict::Inconclusive(format!(
                "{name} does not vanish (tail {:.3e}, slope {:?})",
                t.tail, t.slope
            )));
        }
    }
    let l_norms: Vec<f64> = seq.records.iter().map(|r| norm2(&r.lambda)).collect();
    if trend(&ks, &l_norms, tol).bounded {
        return Ok(Verdict::Inconclusive(String::from(
            "bounded multipliers converge to an ordinary multiplier, whose limit subgradient necessarily lies in the target set",
        )));
    }
    if let Some(dv) = dmode {
        let xs: Vec<Vec<f64>> = seq.records.iter().map(|r| r.x.clone()).collect();
        let lambdas: Vec<Vec<f64>> = seq.records.iter().map(|r| r.lambda.clone()).collect();
        let deltas: Vec<Vec<f64>> = seq.records.iter().map(|r| r.delta.clone()).collect();
        match directional_conditions(xbar, dv, &ks, &xs, &lambdas, &deltas, tol) {
            Err(e) => {
                return Ok(Verdict::Inconclusive(format!(
                    "directional conditions not checkable: {e}"
                )))
            }
            Ok(c) if !c.pass => {
                return Ok(Verdict::Inconclusive(
                    c.failure.unwrap_or_else(|| String::from("directional conditions violated")),
                ))
            }
            Ok(_) => {}
        }
    }
    let y0 = p.eval_constraints(xbar);
    let (cone, dsub): (CellUnion, Option<&[f64]>) = match mode {
        RegMode::Plain | RegMode::Directional(_) => {
            (limiting_normal_cone(p.gamma(), &y0)?, None)
        }
        RegMode::StrongDirectional(dv) => {
            let w = p.constraint_dir_derivatives(xbar, dv);
            let c = dir_limiting_normal_cone(p.gamma(), &y0, &w)?;
            if c.is_empty_set() {
                return Ok(Verdict::Fails(RegFalsification {
                    xi: seq.xi_limit.clone(),
                    distance: f64::INFINITY,
                    nearest: Vec::new(),
                    detail: String::from(
                        "the directional normal cone is empty, so the limit target set is empty and no limit can land in it",
                    ),
                }));
            }
            (c, Some(dv.as_slice()))
        }
    };
    let (distance, nearest, exact_all) = target_nearest(p, xbar, &cone, dsub, &seq.xi_limit)?;
    if distance <= f64::max(tol, CERT_RESIDUAL_EPS) {
        if exact_all {
            Ok(Verdict::Inconclusive(String::from(
                "the witness limit lies inside the computed target set; no violation detected",
            )))
        } else {
            Ok(Verdict::Inconclusive(String::from(
                "the witness limit lies inside the computed target set, which is only an outer bound; no violation detected",
            )))
        }
    } else {
        let detail = if exact_all {
            format!("limit subgradient stays {distance:.3e} away from the exact target set")
        } else {
            format!(
                "limit subgradient stays {distance:.3e} away from an outer bound of the target set, which only enlarges it"
            )
        };
        Ok(Verdict::Fails(RegFalsification {
            xi: seq.xi_limit.clone(),
            distance,
            nearest,
            detail,
        }))
    }
}

fn validate_reg_sequence(p: &Problem, seq: &RegSequence) -> Result<(), QualError> {
    if seq.records.len() < 3 {
        return Err(QualError::Malformed(String::from(
            "trend checks need at least 3 records",
        )));
    }
    if seq.xi_limit.len() != p.n() {
        return Err(QualError::Malformed(String::from(
            "limit subgradient dimension mismatch",
        )));
    }
    let mut prev = 0u32;
    for r in &seq.records {
        if r.k == 0 || r.k <= prev {
            return Err(QualError::Malformed(String::from(
                "record indices must be strictly increasing and start at k ≥ 1",
            )));
        }
        prev = r.k;
        if r.x.len() != p.n()
            || r.xi.len() != p.n()
            || r.lambda.len() != p.m()
            || r.delta.len() != p.m()
        {
            return Err(QualError::Malformed(format!(
                "record k = {} has inconsistent dimensions",
                r.k
            )));
        }
    }
    Ok(())
}

/// Exact nearest distance from `z` to the union over cells, signs, and
/// branches of the conic hulls of the participating subdifferential
/// vertices. Components an empty subdifferential union contribute no
/// generators, and the origin is a member of every piece, which covers the
/// zero multiplier.
fn target_nearest(
    p: &Problem,
    xbar: &[f64],
    cone: &CellUnion,
    d: Option<&[f64]>,
    z: &[f64],
) -> Result<(f64, Vec<f64>, bool), QualError> {
    let m = p.m();
    let mut cache: BTreeMap<(usize, i8), PolyUnion> = BTreeMap::new();
    let mut all_exact = true;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |dist: f64, pt: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if best.as_ref().map_or(true, |(b, _)| dist < *b) {
            *best = Some((dist, pt));
        }
    };
    for cell in cone.cells() {
        let participating: Vec<usize> =
            (0..m).filter(|i| cell.tags[*i] != Tag::Zero).collect();
        if participating.is_empty() {
            consider(norm2(z), zeros(z.len()), &mut best);
            continue;
        }
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
                        .map_err(QualError::Subdiff)?;
                    cache.insert(key, set);
                }
                let set = cache.get(&key).expect("just inserted").clone();
                if !set.exact {
                    all_exact = false;
                }
                sets.push(set);
            }
            let radix: Vec<usize> = sets.iter().map(|s| s.polys.len().max(1)).collect();
            let mut idx = vec![0usize; sets.len()];
            loop {
                let mut generators: Vec<Vec<f64>> = Vec::new();
                for (slot, s) in sets.iter().enumerate() {
                    if s.polys.is_empty() {
                        continue;
                    }
                    generators.extend(s.polys[idx[slot]].vertices.iter().cloned());
                }
                let (dist, pt) = cone_nearest(&generators, z);
                consider(dist, pt, &mut best);
                if !advance(&mut idx, &radix) {
                    break;
                }
            }
            if !advance(&mut sign_idx, &sign_options.iter().map(|o| o.len()).collect::<Vec<_>>())
            {
                break;
            }
        }
    }
    let (dist, pt) = best.expect("a normal cone always carries at least one cell");
    Ok((dist, pt, all_exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::OrthoSet;
    use crate::expr::{Expr, Prim, Spline};
    use alloc::boxed::Box;

    fn neg(e: Expr) -> Expr {
        Expr::Product(Box::new(Expr::Const(-1.0)), Box::new(e))
    }

    fn rminus(m: usize) -> OrthoSet {
        let b: Vec<(f64, f64)> = (0..m).map(|_| (f64::NEG_INFINITY, 0.0)).collect();
        OrthoSet::single(&b).unwrap()
    }

    /// f = x1; F = (x1, -x1, x1 + x2); Γ = R₋³. The first two rows pin
    /// x1 = 0 from both sides.
    fn coupled_rows() -> Problem {
        Problem::new(
            2,
            Expr::Var(0),
            vec![
                Expr::Var(0),
                neg(Expr::Var(0)),
                Expr::Sum(vec![Expr::Var(0), Expr::Var(1)]),
            ],
            rminus(3),
        )
        .unwrap()
    }

    fn halfline() -> Problem {
        Problem::new(1, Expr::Var(0), vec![Expr::Var(0)], rminus(1)).unwrap()
    }

    fn pinned_line() -> Problem {
        Problem::new(
            1,
            Expr::Var(0),
            vec![Expr::Var(0)],
            OrthoSet::single(&[(0.0, 0.0)]).unwrap(),
        )
        .unwrap()
    }

    /// F1 = max(x1², x1) − x2, F2 = min(x1², −x1) + x2, Γ = R₋². Both
    /// components kink at the origin and share variable x1.
    fn kink_pair() -> Problem {
        Problem::new(
            2,
            Expr::Var(0),
            vec![
                Expr::Sum(vec![
                    Expr::Max(vec![Expr::IntPow(Box::new(Expr::Var(0)), 2), Expr::Var(0)]),
                    neg(Expr::Var(1)),
                ]),
                Expr::Sum(vec![
                    Expr::Min(vec![Expr::IntPow(Box::new(Expr::Var(0)), 2), neg(Expr::Var(0))]),
                    Expr::Var(1),
                ]),
            ],
            rminus(2),
        )
        .unwrap()
    }

    /// F = (−x1, −x2, x1·x2), Γ = R₋ × R₋ × {0}: the nonnegative axes.
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

    /// min (x1+2)² + (x2−1)² s.t. x2³ − 3x2 − g(x1) ≤ 0 with
    /// g = min(x1³ − 3x1, s) and s the spline equal to −2 left of 1 and to
    /// x1³ − 3x1 right of it. Near x̄ = (−2, 1) the feasible boundary pinches
    /// to the isolated root x2 = 1.
    fn cubic_pinch() -> Problem {
        let cubic_neg = Expr::Sum(vec![
            neg(Expr::IntPow(Box::new(Expr::Var(0)), 3)),
            Expr::Product(Box::new(Expr::Const(3.0)), Box::new(Expr::Var(0))),
        ]);
        let spline_neg = Expr::SmoothPrim(
            Prim::Spline(Spline::new(vec![1.0], vec![vec![2.0], vec![0.0, 3.0, 0.0, -1.0]]).unwrap()),
            Box::new(Expr::Var(0)),
        );
        Problem::new(
            2,
            Expr::Sum(vec![
                Expr::IntPow(
                    Box::new(Expr::Sum(vec![Expr::Var(0), Expr::Const(2.0)])),
                    2,
                ),
                Expr::IntPow(
                    Box::new(Expr::Sum(vec![Expr::Var(1), Expr::Const(-1.0)])),
                    2,
                ),
            ]),
            vec![Expr::Sum(vec![
                Expr::IntPow(Box::new(Expr::Var(1)), 3),
                Expr::Product(Box::new(Expr::Const(-3.0)), Box::new(Expr::Var(1))),
                Expr::Max(vec![cubic_neg, spline_neg]),
            ])],
            rminus(1),
        )
        .unwrap()
    }

    #[test]
    fn nnamcq_fails_with_abnormal_multiplier_on_coupled_rows() {
        let p = coupled_rows();
        let v = check_nnamcq(&p, &[0.0, 0.0], 1e-9).unwrap();
        match v {
            Verdict::Fails(w) => {
                assert!(libm::fabs(w.lambda[0] - 0.5) < 1e-12);
                assert!(libm::fabs(w.lambda[1] - 0.5) < 1e-12);
                assert!(libm::fabs(w.lambda[2]) < 1e-12);
                assert!(w.residual <= CERT_RESIDUAL_EPS);
                assert!(w.exact);
            }
            other => panic!("expected fails, got {}", other.label()),
        }
    }

    #[test]
    fn nnamcq_holds_for_interior_and_identity_constraints() {
        let interior = check_nnamcq(&halfline(), &[-1.0], 1e-9).unwrap();
        match interior {
            Verdict::Holds(s) => {
                assert_eq!(s.cells_tried, 1);
                assert_eq!(s.systems_tried, 0);
            }
            other => panic!("expected holds, got {}", other.label()),
        }
        let pinned = check_nnamcq(&pinned_line(), &[0.0], 1e-9).unwrap();
        match pinned {
            Verdict::Holds(s) => {
                assert_eq!(s.cells_tried, 1);
                assert_eq!(s.systems_tried, 2);
            }
            other => panic!("expected holds, got {}", other.label()),
        }
    }

    #[test]
    fn foscms_direction_dependent_verdicts() {
        let p = halfline();
        match check_foscms(&p, &[0.0], &[-1.0], 1e-9).unwrap() {
            Verdict::Holds(s) => {
                assert_eq!(s.cells_tried, 1);
                assert_eq!(s.systems_tried, 0);
                assert!(s.note.is_none());
            }
            other => panic!("expected holds, got {}", other.label()),
        }
        match check_foscms(&p, &[0.0], &[1.0], 1e-9).unwrap() {
            Verdict::Holds(s) => assert!(s.note.is_some()),
            other => panic!("expected vacuous holds, got {}", other.label()),
        }
        assert!(matches!(
            check_foscms(&p, &[0.0], &[0.5], 1e-9),
            Err(QualError::Malformed(_))
        ));
        let p2 = coupled_rows();
        match check_foscms(&p2, &[0.0, 0.0], &[0.0, -1.0], 1e-9).unwrap() {
            Verdict::Fails(w) => {
                assert!(libm::fabs(w.lambda[0] - 0.5) < 1e-12);
                assert!(libm::fabs(w.lambda[1] - 0.5) < 1e-12);
                assert!(libm::fabs(w.lambda[2]) < 1e-12);
            }
            other => panic!("expected fails, got {}", other.label()),
        }
    }

    #[test]
    fn foscms_reports_the_shared_kink_multiplier() {
        let p = kink_pair();
        let s = 1.0 / libm::sqrt(2.0);
        match check_foscms(&p, &[0.0, 0.0], &[s, s], 1e-9).unwrap() {
            Verdict::Fails(w) => {
                assert!(libm::fabs(w.lambda[0] - 0.5) < 1e-12);
                assert!(libm::fabs(w.lambda[1] - 0.5) < 1e-12);
                assert!(w.exact);
            }
            other => panic!("expected fails, got {}", other.label()),
        }
    }

    #[test]
    fn mscq_ratios_diverge_on_cubic_pinch_and_stay_bounded_on_affine() {
        let p = cubic_pinch();
        let s = 1.0 / libm::sqrt(2.0);
        let d = [s, s];
        // Steps stay ≥ 0.02 (τ ≥ 0.014): the restoration locates the pinch
        // root only to the float-zero band of F, about ±1e-8 absolute, so
        // smaller rungs could not meet a 1e-6 relative match.
        let rep = estimate_mscq(&p, &[-2.0, 1.0], Some(&d), 0.64, 0.0, 6, 0).unwrap();
        assert!(rep.rows.len() >= 6);
        for row in &rep.rows {
            let tau = row.step / libm::sqrt(2.0);
            let expected = 1.0 / (tau * (3.0 + tau));
            assert!(
                libm::fabs(row.ratio / expected - 1.0) <= 1e-6,
                "step {:.3e}: ratio {} vs expected {}",
                row.step,
                row.ratio,
                expected
            );
        }
        assert!(rep.divergence);
        assert!(rep.slope.is_some_and(|s| s <= MSCQ_DIVERGENCE_SLOPE));

        let affine = coupled_rows();
        let rep2 = estimate_mscq(&affine, &[0.0, 0.0], Some(&d), 1e-2, 0.0, 8, 0).unwrap();
        assert!(!rep2.rows.is_empty());
        assert!(!rep2.divergence);
        assert!(mscq_probe(&affine, &[0.0, 0.0], &[0.0, -1.0], 0).is_none());
    }

    #[test]
    fn gacq_ggcq_exact_on_affine_and_sampled_on_bilinear() {
        let affine = coupled_rows();
        let rep = check_gacq_ggcq(&affine, &[0.0, 0.0], 720, 0).unwrap();
        match (&rep.gacq, &rep.ggcq) {
            (Verdict::Holds(a), Verdict::Holds(b)) => {
                assert!(a.certified);
                assert!(b.certified);
            }
            _ => panic!("expected certified holds on affine data"),
        }
        let p = quadrant_surface();
        let rep = check_gacq_ggcq(&p, &[0.0, 0.0], 720, 0).unwrap();
        match &rep.gacq {
            Verdict::Fails(w) => {
                assert!(w.dir[0] > 0.01 && w.dir[1] > 0.01, "witness {:?}", w.dir);
            }
            other => panic!("expected gacq fails, got {}", other.label()),
        }
        match &rep.ggcq {
            Verdict::Holds(e) => assert!(!e.certified),
            other => panic!("expected ggcq holds, got {}", other.label()),
        }
    }

    fn surface_witness(bounded: bool) -> RegSequence {
        let records = [1u32, 2, 4, 8, 16, 32, 64, 128]
            .iter()
            .map(|&k| {
                let kf = k as f64;
                if bounded {
                    RegRecord {
                        k,
                        x: vec![1.0 / (kf * kf), 1.0 / kf],
                        lambda: vec![0.0, 0.0, 1.0],
                        delta: vec![0.0, 0.0, 1.0 / (kf * kf * kf)],
                        xi: vec![1.0 / kf, 1.0 / (kf * kf)],
                    }
                } else {
                    RegRecord {
                        k,
                        x: vec![1.0 / (kf * kf), 1.0 / kf],
                        lambda: vec![0.0, 0.0, kf],
                        delta: vec![0.0, 0.0, 1.0 / (kf * kf * kf)],
                        xi: vec![1.0, 1.0 / kf],
                    }
                }
            })
            .collect();
        let xi_limit = if bounded { vec![0.0, 0.0] } else { vec![1.0, 0.0] };
        RegSequence { records, xi_limit }
    }

    #[test]
    fn falsify_flags_displaced_limits_and_respects_bounded_multipliers() {
        let p = quadrant_surface();
        let xbar = [0.0, 0.0];
        let seq = surface_witness(false);
        for mode in [
            RegMode::Plain,
            RegMode::Directional(vec![0.0, 1.0]),
            RegMode::StrongDirectional(vec![0.0, 1.0]),
        ] {
            match falsify_am_regularity(&p, &xbar, &seq, &mode, 1e-6).unwrap() {
                Verdict::Fails(f) => {
                    assert!(libm::fabs(f.distance - 1.0) <= 1e-9, "mode {mode:?}");
                    assert!(norm2(&f.nearest) <= 1e-9);
                }
                other => panic!("expected fails in mode {mode:?}, got {}", other.label()),
            }
        }
        let tame = surface_witness(true);
        match falsify_am_regularity(&p, &xbar, &tame, &RegMode::Plain, 1e-6).unwrap() {
            Verdict::Inconclusive(msg) => assert!(msg.contains("bounded multipliers"), "{msg}"),
            other => panic!("expected inconclusive, got {}", other.label()),
        }
        let short = RegSequence { records: seq.records[..2].to_vec(), xi_limit: vec![1.0, 0.0] };
        assert!(matches!(
            falsify_am_regularity(&p, &xbar, &short, &RegMode::Plain, 1e-6),
            Err(QualError::Malformed(_))
        ));
    }

    #[test]
    fn falsify_measures_the_cubic_escape_distance() {
        let p = cubic_pinch();
        let xbar = [-2.0, 1.0];
        let records = [1u32, 2, 4, 8, 16, 32, 64, 128]
            .iter()
            .map(|&k| {
                let t = 1.0 / (k as f64);
                RegRecord {
                    k,
                    x: vec![-2.0 + t, 1.0 + t],
                    lambda: vec![k as f64],
                    delta: vec![3.0 * t * t + t * t * t],
                    xi: vec![0.0, 6.0 + 3.0 * t],
                }
            })
            .collect();
        let seq = RegSequence { records, xi_limit: vec![0.0, 6.0] };
        match falsify_am_regularity(&p, &xbar, &seq, &RegMode::Plain, 1e-6).unwrap() {
            Verdict::Fails(f) => {
                assert!(libm::fabs(f.distance - 6.0) <= 1e-9, "distance {}", f.distance);
                assert!(norm2(&f.nearest) <= 1e-9, "nearest {:?}", f.nearest);
            }
            other => panic!("expected fails, got {}", other.label()),
        }
    }
}
