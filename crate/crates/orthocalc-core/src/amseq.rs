//! Approximately M-stationary (AM) sequences: verification, generation by
//! anchored penalty subproblems, and refinement to nonzero multipliers.
//!
//! A record `(k, x^k, λ^k, δ^k, ε^k)` witnesses approximate stationarity when
//! `F(x^k) − δ^k ∈ Γ`, `λ^k` lies in the limiting normal cone of `Γ` at that
//! image point, and `ε^k − ∇f(x^k)` lies in the scalarization subdifferential
//! `Σ |λ^k_i| ∂(sgn(λ^k_i) F_i)(x^k)` up to a tolerance. A sequence of records
//! is accepted when additionally `x^k → x̄` and `δ^k, ε^k → 0`.
//!
//! Limits over a finite sequence are decided by a declared protocol rather
//! than wishful reading: a quantity "tends to zero" when its tail value drops
//! below the tolerance or when the log-log regression slope of value against
//! `k` over the trailing half is at most `-0.1`, and it "stays bounded" when
//! that slope is at most `+0.1`. [`Trend`] carries the measured numbers so a
//! caller can apply stricter judgement.
//!
//! Refinement ([`refine_nonzero_multipliers`]) removes zero multiplier entries
//! on active coordinates with three moves, applied per record until none are
//! left: a re-anchoring step (move the image point to a nearby realization of
//! a limiting cell that contains `λ^k`), a sign injection step (set
//! `λ^k_i = ±1/k` following the tag of the regular cell and absorb the change
//! into `ε^k` through one subgradient of `±F_i`), and an endpoint release step
//! (shift one image coordinate off its interval endpoint by a geometrically
//! small `η`, shrinking the active-coordinate set). Directional sequences use
//! smaller steps scaled by `‖δ^k‖` and `‖x^k − x̄‖` so the directional
//! convergence conditions survive; the degenerate corners (`δ^k = 0` for
//! moves that must scale with it, `λ^k = 0` for scaled injection) are
//! reported as errors instead of silently breaking the bounds.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::boxes::MEMBER_EPS;
use crate::cones::{
    limiting_cells_with_realizations, limiting_normal_cone, regular_normal_cone, ConeError,
    SignCell, Tag, DIR_MEMBER_EPS,
};
use crate::descent::{armijo_descent, DescentOpts, DescentResult};
use crate::dirnbhd::gaussian;
use crate::oracle::log_slope;
use crate::problem::Problem;
use crate::subdiff::{limiting_subdiff, scalarization_subdiff, SubdiffError};
use crate::vecops::{add, axpy, dist2, norm2, norm_inf, scale, sub};
use crate::verdict::Verdict;

/// Default tolerance for tail values of vanishing quantities.
pub const SEQ_TOL: f64 = 1e-4;

/// Log-log slope threshold: ≤ `-SEQ_SLOPE_TOL` counts as vanishing,
/// ≤ `+SEQ_SLOPE_TOL` as bounded.
pub const SEQ_SLOPE_TOL: f64 = 0.1;

/// One member of an AM sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AmRecord {
    /// Penalty index `k ≥ 1`; doubles as the abscissa for trend regression.
    pub k: u32,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
    pub eps: Vec<f64>,
}

/// An AM sequence anchored at a base point, optionally directional.
#[derive(Clone, Debug, PartialEq)]
pub struct AmSequence {
    pub xbar: Vec<f64>,
    /// Unit direction for directional sequences; `None` for plain ones.
    pub d: Option<Vec<f64>>,
    pub records: Vec<AmRecord>,
}

impl AmSequence {
    /// Shape check against a problem: dimensions, at least three records,
    /// strictly increasing indices starting at `k ≥ 1`, unit direction.
    pub fn validate(&self, p: &Problem) -> Result<(), AmError> {
        if self.records.len() < 3 {
            return Err(AmError::Malformed(
                "trend checks need at least 3 records".to_string(),
            ));
        }
        if self.xbar.len() != p.n() {
            return Err(AmError::Malformed(format!(
                "base point has dimension {}, problem has {}",
                self.xbar.len(),
                p.n()
            )));
        }
        if let Some(d) = &self.d {
            if d.len() != p.n() {
                return Err(AmError::Malformed("direction dimension mismatch".to_string()));
            }
            if libm::fabs(norm2(d) - 1.0) > 1e-9 {
                return Err(AmError::Malformed("direction must be unit length".to_string()));
            }
        }
        let mut prev = 0u32;
        for r in &self.records {
            if r.k == 0 || r.k <= prev {
                return Err(AmError::Malformed(
                    "record indices must be strictly increasing and start at k ≥ 1".to_string(),
                ));
            }
            prev = r.k;
            if r.x.len() != p.n()
                || r.eps.len() != p.n()
                || r.lambda.len() != p.m()
                || r.delta.len() != p.m()
            {
                return Err(AmError::Malformed(format!(
                    "record k = {} has inconsistent dimensions",
                    r.k
                )));
            }
        }
        Ok(())
    }
}

/// Failure modes of sequence handling.
#[derive(Clone, Debug, PartialEq)]
pub enum AmError {
    /// Shape or content violation described in the message.
    Malformed(String),
    Cone(ConeError),
    Subdiff(SubdiffError),
    /// A directional check met `x^k = x̄`, where the unit secant is undefined.
    BasePointCollision(u32),
    /// The penalty subproblem for index `k` did not reach gradient norm 1e-7.
    SolverStall { k: u32, grad_norm: f64 },
    /// A directional refinement move needed a nonzero quantity that was zero.
    DegenerateDirectional(String),
    /// Refinement could not clear the zero multiplier on `coord` at index `k`.
    RefineStuck { k: u32, coord: usize },
    /// The refined sequence lost a verification verdict the input had.
    RefineRegression(String),
}

impl core::fmt::Display for AmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AmError::Malformed(msg) => write!(f, "malformed sequence: {msg}"),
            AmError::Cone(e) => write!(f, "cone evaluation failed: {e}"),
            AmError::Subdiff(e) => write!(f, "subdifferential evaluation failed: {e}"),
            AmError::BasePointCollision(k) => {
                write!(f, "record k = {k} coincides with the base point")
            }
            AmError::SolverStall { k, grad_norm } => write!(
                f,
                "penalty subproblem k = {k} stalled at gradient norm {grad_norm:.3e}"
            ),
            AmError::DegenerateDirectional(msg) => write!(f, "degenerate directional input: {msg}"),
            AmError::RefineStuck { k, coord } => write!(
                f,
                "refinement left a zero multiplier on active coordinate {coord} at k = {k}"
            ),
            AmError::RefineRegression(msg) => {
                write!(f, "refined sequence fails re-verification: {msg}")
            }
        }
    }
}

impl core::error::Error for AmError {}

impl From<ConeError> for AmError {
    fn from(e: ConeError) -> Self {
        AmError::Cone(e)
    }
}

impl From<SubdiffError> for AmError {
    fn from(e: SubdiffError) -> Self {
        AmError::Subdiff(e)
    }
}

/// Finite-sequence limit diagnosis for a nonnegative quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct Trend {
    /// Value at the largest index.
    pub tail: f64,
    /// Log-log regression slope over the trailing half (`None` with fewer
    /// than three positive samples there).
    pub slope: Option<f64>,
    pub to_zero: bool,
    pub bounded: bool,
}

/// Diagnose `vals` as a function of the indices `ks` (both parallel, `ks`
/// ascending). See the module doc for the acceptance protocol.
pub fn trend(ks: &[f64], vals: &[f64], tol: f64) -> Trend {
    let tail = vals.last().copied().unwrap_or(0.0);
    let half = vals.len() / 2;
    let slope = log_slope(&ks[half..], &vals[half..]);
    let to_zero = tail <= tol || slope.is_some_and(|s| s <= -SEQ_SLOPE_TOL);
    let bounded = to_zero || slope.is_none_or(|s| s <= SEQ_SLOPE_TOL);
    Trend { tail, slope, to_zero, bounded }
}

/// Per-record outcome of [`verify_am_sequence`].
#[derive(Clone, Debug, PartialEq)]
pub struct RecordCheck {
    pub k: u32,
    /// `F(x^k) − δ^k ∈ Γ` within [`MEMBER_EPS`].
    pub image_feasible: bool,
    /// `λ^k` in the limiting normal cone at the image point.
    pub multiplier_in_cone: bool,
    /// Distance of `ε^k − ∇f(x^k)` to the scalarization subdifferential.
    pub stationarity_gap: f64,
}

/// Output of [`verify_am_sequence`]: per-record checks, the three vanishing
/// trends, and the combined verdict.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<RecordCheck>,
    pub x_trend: Trend,
    pub delta_trend: Trend,
    pub eps_trend: Trend,
    pub verdict: Verdict<String, String>,
}

impl VerifyReport {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, Verdict::Holds(_))
    }
}

/// Check that `seq` witnesses approximate stationarity of `seq.xbar`.
///
/// Per record: exact image feasibility, limiting-cone membership of the
/// multiplier (tolerance scaled by `‖λ^k‖_∞`), and stationarity gap ≤ `tol`.
/// Across records: `‖x^k − x̄‖`, `‖δ^k‖`, `‖ε^k‖` must tend to zero per the
/// trend protocol. Fails (never Inconclusive) with the first violated check.
pub fn verify_am_sequence(
    p: &Problem,
    seq: &AmSequence,
    tol: f64,
) -> Result<VerifyReport, AmError> {
    seq.validate(p)?;
    let mut checks = Vec::with_capacity(seq.records.len());
    for r in &seq.records {
        let y = sub(&p.eval_constraints(&r.x), &r.delta);
        let image_feasible = p.gamma().contains(&y, MEMBER_EPS);
        let cone_tol = DIR_MEMBER_EPS * (1.0 + norm_inf(&r.lambda));
        let multiplier_in_cone = if image_feasible {
            limiting_normal_cone(p.gamma(), &y)?.member(&r.lambda, cone_tol)
        } else {
            false
        };
        let grad_f = p.objective_grad(&r.x).ok_or_else(|| {
            AmError::Malformed(format!("objective not differentiable at record k = {}", r.k))
        })?;
        let scal = scalarization_subdiff(p.constraints(), &r.lambda, &r.x, None)?;
        let stationarity_gap = scal.set.distance(&sub(&r.eps, &grad_f));
        checks.push(RecordCheck { k: r.k, image_feasible, multiplier_in_cone, stationarity_gap });
    }
    let ks: Vec<f64> = seq.records.iter().map(|r| r.k as f64).collect();
    let xs: Vec<f64> = seq.records.iter().map(|r| dist2(&r.x, &seq.xbar)).collect();
    let ds: Vec<f64> = seq.records.iter().map(|r| norm2(&r.delta)).collect();
    let es: Vec<f64> = seq.records.iter().map(|r| norm2(&r.eps)).collect();
    let x_trend = trend(&ks, &xs, tol);
    let delta_trend = trend(&ks, &ds, tol);
    let eps_trend = trend(&ks, &es, tol);

    let mut verdict = None;
    for c in &checks {
        if !c.image_feasible {
            verdict = Some(Verdict::Fails(format!("k = {}: F(x^k) − δ^k leaves Γ", c.k)));
            break;
        }
        if !c.multiplier_in_cone {
            verdict = Some(Verdict::Fails(format!(
                "k = {}: λ^k lies outside the limiting normal cone",
                c.k
            )));
            break;
        }
        if c.stationarity_gap > tol {
            verdict = Some(Verdict::Fails(format!(
                "k = {}: stationarity gap {:.3e} exceeds {:.1e}",
                c.k, c.stationarity_gap, tol
            )));
            break;
        }
    }
    if verdict.is_none() {
        for (name, t) in
            [("‖x^k − x̄‖", &x_trend), ("‖δ^k‖", &delta_trend), ("‖ε^k‖", &eps_trend)]
        {
            if !t.to_zero {
                verdict = Some(Verdict::Fails(format!(
                    "{name} does not vanish (tail {:.3e}, slope {:?})",
                    t.tail, t.slope
                )));
                break;
            }
        }
    }
    let verdict = verdict.unwrap_or_else(|| {
        let max_gap = checks.iter().map(|c| c.stationarity_gap).fold(0.0, f64::max);
        Verdict::Holds(format!(
            "{} records verified; max stationarity gap {:.3e}",
            checks.len(),
            max_gap
        ))
    });
    Ok(VerifyReport { checks, x_trend, delta_trend, eps_trend, verdict })
}

/// The four directional conditions on top of plain verification.
#[derive(Clone, Debug)]
pub struct DirConditions {
    /// `‖(x^k − x̄)/‖x^k − x̄‖ − d‖ → 0`.
    pub secant_trend: Trend,
    /// `‖δ^k‖/‖x^k − x̄‖ → 0`.
    pub ratio_trend: Trend,
    /// `‖‖δ^k‖λ^k − ‖λ^k‖δ^k‖/(‖δ^k‖‖λ^k‖) → 0`, with value 0 whenever
    /// `δ^k = 0` or `λ^k = 0`.
    pub alignment_trend: Trend,
    /// `‖δ^k‖‖λ^k‖/‖x^k − x̄‖` stays bounded.
    pub product_trend: Trend,
    pub pass: bool,
    /// First violated condition, when `pass` is false.
    pub failure: Option<String>,
}

/// Evaluate the directional conditions on parallel record slices.
///
/// Errors with [`AmError::BasePointCollision`] when some `x^k` equals `x̄`
/// exactly, since the unit secant is undefined there.
pub fn directional_conditions(
    xbar: &[f64],
    d: &[f64],
    ks: &[f64],
    xs: &[Vec<f64>],
    lambdas: &[Vec<f64>],
    deltas: &[Vec<f64>],
    tol: f64,
) -> Result<DirConditions, AmError> {
    let mut secants = Vec::with_capacity(xs.len());
    let mut ratios = Vec::with_capacity(xs.len());
    let mut aligns = Vec::with_capacity(xs.len());
    let mut products = Vec::with_capacity(xs.len());
    for (i, x) in xs.iter().enumerate() {
        let step = sub(x, xbar);
        let r = norm2(&step);
        if r == 0.0 {
            return Err(AmError::BasePointCollision(ks[i] as u32));
        }
        secants.push(dist2(&scale(&step, 1.0 / r), d));
        let nd = norm2(&deltas[i]);
        let nl = norm2(&lambdas[i]);
        ratios.push(nd / r);
        let align = if nd == 0.0 || nl == 0.0 {
            0.0
        } else {
            norm2(&sub(&scale(&lambdas[i], nd), &scale(&deltas[i], nl))) / (nd * nl)
        };
        aligns.push(align);
        products.push(nd * nl / r);
    }
    let secant_trend = trend(ks, &secants, tol);
    let ratio_trend = trend(ks, &ratios, tol);
    let alignment_trend = trend(ks, &aligns, tol);
    let product_trend = trend(ks, &products, tol);
    let mut failure = None;
    if !secant_trend.to_zero {
        failure = Some(format!(
            "unit secants do not converge to d (tail {:.3e})",
            secant_trend.tail
        ));
    } else if !ratio_trend.to_zero {
        failure = Some(format!(
            "‖δ^k‖/‖x^k − x̄‖ does not vanish (tail {:.3e})",
            ratio_trend.tail
        ));
    } else if !alignment_trend.to_zero {
        failure = Some(format!(
            "δ^k and λ^k do not align (residual tail {:.3e})",
            alignment_trend.tail
        ));
    } else if !product_trend.bounded {
        failure = Some(format!(
            "‖δ^k‖‖λ^k‖/‖x^k − x̄‖ grows (slope {:?})",
            product_trend.slope
        ));
    }
    let pass = failure.is_none();
    Ok(DirConditions { secant_trend, ratio_trend, alignment_trend, product_trend, pass, failure })
}

/// Output of [`verify_dir_am_sequence`].
#[derive(Clone, Debug)]
pub struct DirVerifyReport {
    pub base: VerifyReport,
    pub conditions: DirConditions,
    pub verdict: Verdict<String, String>,
}

impl DirVerifyReport {
    pub fn holds(&self) -> bool {
        matches!(self.verdict, Verdict::Holds(_))
    }
}

/// Plain verification plus the directional conditions along unit `d`.
pub fn verify_dir_am_sequence(
    p: &Problem,
    seq: &AmSequence,
    d: &[f64],
    tol: f64,
) -> Result<DirVerifyReport, AmError> {
    if d.len() != p.n() || libm::fabs(norm2(d) - 1.0) > 1e-9 {
        return Err(AmError::Malformed("direction must be a unit vector of matching dimension".to_string()));
    }
    let base = verify_am_sequence(p, seq, tol)?;
    let ks: Vec<f64> = seq.records.iter().map(|r| r.k as f64).collect();
    let xs: Vec<Vec<f64>> = seq.records.iter().map(|r| r.x.clone()).collect();
    let lambdas: Vec<Vec<f64>> = seq.records.iter().map(|r| r.lambda.clone()).collect();
    let deltas: Vec<Vec<f64>> = seq.records.iter().map(|r| r.delta.clone()).collect();
    let conditions = directional_conditions(&seq.xbar, d, &ks, &xs, &lambdas, &deltas, tol)?;
    let verdict = match (&base.verdict, conditions.failure.as_ref()) {
        (Verdict::Holds(_), None) => Verdict::Holds(format!(
            "directional AM sequence verified along the given direction ({} records)",
            seq.records.len()
        )),
        (Verdict::Fails(msg), _) => Verdict::Fails(msg.clone()),
        (_, Some(msg)) => Verdict::Fails(msg.clone()),
        (Verdict::Inconclusive(msg), None) => Verdict::Inconclusive(msg.clone()),
    };
    Ok(DirVerifyReport { base, conditions, verdict })
}

/// Gradient of `f + (k/2)·dist²(F(·),Γ) + ½‖· − anchor‖²` at `z`.
///
/// Component gradients fall back to central differences where an expression
/// reports a kink; the projection residual supplies the distance term.
fn penalty_grad(p: &Problem, z: &[f64], kk: f64, anchor: &[f64]) -> Vec<f64> {
    let mut g = p
        .objective_grad(z)
        .unwrap_or_else(|| crate::descent::fd_gradient(&mut |w| p.objective().eval(w), z, 1e-7));
    let y = p.eval_constraints(z);
    let (proj, _) = p.gamma().project(&y);
    for (i, ci) in p.constraints().iter().enumerate() {
        let r = y[i] - proj[i];
        if r == 0.0 {
            continue;
        }
        let gi = ci
            .grad(z)
            .unwrap_or_else(|| crate::descent::fd_gradient(&mut |w| ci.eval(w), z, 1e-7));
        g = axpy(&g, kk * r, &gi);
    }
    add(&g, &sub(z, anchor))
}

/// Generate an AM sequence at `xbar` by minimizing the anchored penalty
/// `f + (k/2)·dist²(F(·),Γ) + ½‖· − x̂^k‖²` for `k = 1..=count`, with anchors
/// `x̂^k = x̄` (plain) or `x̄ + d/k` (directional). Each subproblem runs a
/// five-start descent (previous iterate, the anchor, three jittered copies);
/// the best run must reach gradient norm ≤ 1e-7 or the generator reports a
/// stall. The bound leaves a decade of headroom over the Armijo floor near
/// `√eps·|ψ|` ≈ 1e-8, below which no decrease of an O(1) objective is
/// measurable in f64. Records are `δ^k = F(x^k) − Proj_Γ(F(x^k))`, `λ^k =
/// k·δ^k`, and
/// `ε^k` the penalty gradient minus the anchor term, which makes
/// `ε^k − ∇f(x^k) = Σ λ^k_i ∇F_i(x^k)` hold by construction wherever `F` is
/// differentiable.
pub fn generate_am_sequence(
    p: &Problem,
    xbar: &[f64],
    count: u32,
    step_budget: usize,
    seed: u64,
    d: Option<&[f64]>,
) -> Result<AmSequence, AmError> {
    if count < 3 {
        return Err(AmError::Malformed("need count ≥ 3 for a usable sequence".to_string()));
    }
    if xbar.len() != p.n() {
        return Err(AmError::Malformed("base point dimension mismatch".to_string()));
    }
    if let Some(dir) = d {
        if dir.len() != p.n() || libm::fabs(norm2(dir) - 1.0) > 1e-9 {
            return Err(AmError::Malformed("direction must be a unit vector".to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count as usize);
    let mut warm = xbar.to_vec();
    for k in 1..=count {
        let kk = k as f64;
        let anchor = match d {
            Some(dir) => axpy(xbar, 1.0 / kk, dir),
            None => xbar.to_vec(),
        };
        let mut obj = |z: &[f64]| {
            let y = p.eval_constraints(z);
            let (proj, _) = p.gamma().project(&y);
            let dist = dist2(&y, &proj);
            let prox = dist2(z, &anchor);
            p.objective().eval(z) + 0.5 * kk * dist * dist + 0.5 * prox * prox
        };
        let mut grad = |z: &[f64]| penalty_grad(p, z, kk, &anchor);
        let jitter = 0.05 * (1.0 + norm_inf(&anchor));
        let mut starts = vec![warm.clone(), anchor.clone()];
        for _ in 0..3 {
            starts.push(anchor.iter().map(|a| a + jitter * gaussian(&mut rng)).collect());
        }
        let opts = DescentOpts { max_iters: step_budget, grad_tol: 1e-10, step0: 1.0 };
        let mut best: Option<DescentResult> = None;
        for s in &starts {
            let run = armijo_descent(&mut obj, &mut grad, s, &opts);
            if best.as_ref().is_none_or(|b| run.value < b.value) {
                best = Some(run);
            }
        }
        let best = best.expect("at least one start");
        if best.grad_norm > 1e-7 {
            return Err(AmError::SolverStall { k, grad_norm: best.grad_norm });
        }
        let x = best.x;
        let y = p.eval_constraints(&x);
        let (proj, _) = p.gamma().project(&y);
        let delta = sub(&y, &proj);
        let lambda = scale(&delta, kk);
        let eps = sub(&penalty_grad(p, &x, kk, &anchor), &sub(&x, &anchor));
        warm = x.clone();
        records.push(AmRecord { k, x, lambda, delta, eps });
    }
    Ok(AmSequence { xbar: xbar.to_vec(), d: d.map(|v| v.to_vec()), records })
}

/// The stabilized tail pattern extracted by [`normalize_subsequence`].
#[derive(Clone, Debug, PartialEq)]
pub struct SubseqPattern {
    /// Index of the first retained record.
    pub start: usize,
    /// Active boxes `J(x^k, δ^k)`, constant over the tail.
    pub active_boxes: Vec<usize>,
    /// Active coordinates `I(x^k, δ^k)`, constant over the tail.
    pub active_coords: Vec<usize>,
    /// Componentwise multiplier signs, constant over the tail.
    pub signs: Vec<i8>,
}

/// Restrict a sequence to its longest tail with constant active boxes, active
/// coordinates, and multiplier sign pattern. The tail must cover at least
/// `max(3, len/4)` records; shorter stabilization is rejected with a
/// diagnostic, since index-set inference would then be guesswork.
pub fn normalize_subsequence(
    p: &Problem,
    seq: &AmSequence,
) -> Result<(AmSequence, SubseqPattern), AmError> {
    seq.validate(p)?;
    let pats: Vec<(Vec<usize>, Vec<usize>, Vec<i8>)> = seq
        .records
        .iter()
        .map(|r| {
            let a = p.active_sets(&r.x, &r.delta);
            let signs = r
                .lambda
                .iter()
                .map(|&l| {
                    if l > 0.0 {
                        1
                    } else if l < 0.0 {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            (a.j, a.i, signs)
        })
        .collect();
    let last = pats.last().expect("validated nonempty").clone();
    let mut start = pats.len() - 1;
    while start > 0 && pats[start - 1] == last {
        start -= 1;
    }
    let tail_len = pats.len() - start;
    let need = 3usize.max(seq.records.len() / 4);
    if tail_len < need {
        return Err(AmError::Malformed(format!(
            "active-set pattern does not stabilize: constant tail covers {tail_len} of {} records (need ≥ {need})",
            pats.len()
        )));
    }
    let tail = AmSequence {
        xbar: seq.xbar.clone(),
        d: seq.d.clone(),
        records: seq.records[start..].to_vec(),
    };
    let pattern = SubseqPattern {
        start,
        active_boxes: last.0,
        active_coords: last.1,
        signs: last.2,
    };
    Ok((tail, pattern))
}

/// `2^{-k}` floored at `2^{-36}` so refinement shifts stay detectable above
/// the membership tolerance at large `k`.
fn shift_scale(k: u32) -> f64 {
    libm::exp2(-(k.min(36) as f64))
}

/// Rewrite each record so every active coordinate carries a nonzero
/// multiplier, then re-verify.
///
/// Uses the sequence's own direction field to decide between plain and
/// directional step bounds. Errors if refinement regresses a Holds verdict
/// (plain or directional), cannot clear a coordinate, or hits a degenerate
/// directional corner. Records already satisfying the property are returned
/// unchanged.
pub fn refine_nonzero_multipliers(p: &Problem, seq: &AmSequence) -> Result<AmSequence, AmError> {
    let before = verify_am_sequence(p, seq, SEQ_TOL)?;
    let before_dir = match &seq.d {
        Some(dvec) => Some(verify_dir_am_sequence(p, seq, dvec, SEQ_TOL)?),
        None => None,
    };
    let mut records = Vec::with_capacity(seq.records.len());
    for r in &seq.records {
        records.push(refine_record(p, &seq.xbar, seq.d.as_deref(), r)?);
    }
    let out = AmSequence { xbar: seq.xbar.clone(), d: seq.d.clone(), records };
    let after = verify_am_sequence(p, &out, SEQ_TOL)?;
    if before.holds() && !after.holds() {
        return Err(AmError::RefineRegression(after.verdict.label().to_string()));
    }
    if let (Some(bd), Some(dvec)) = (&before_dir, &seq.d) {
        let ad = verify_dir_am_sequence(p, &out, dvec, SEQ_TOL)?;
        if bd.holds() && !ad.holds() {
            return Err(AmError::RefineRegression(
                "directional conditions lost in refinement".to_string(),
            ));
        }
    }
    Ok(out)
}

fn refine_record(
    p: &Problem,
    xbar: &[f64],
    d: Option<&[f64]>,
    r: &AmRecord,
) -> Result<AmRecord, AmError> {
    let x = r.x.clone();
    let mut lambda = r.lambda.clone();
    let mut delta = r.delta.clone();
    let mut eps = r.eps.clone();
    let k = r.k;
    // Each pass removes at least one zero entry or re-anchors once, and
    // re-anchoring is always followed by injection or release, so 2m + 2
    // passes suffice.
    for _ in 0..(2 * p.m() + 2) {
        let act = p.active_sets(&x, &delta);
        if act.j.is_empty() {
            return Err(AmError::Malformed(format!(
                "k = {k}: F(x^k) − δ^k lies outside Γ; refinement needs feasible image points"
            )));
        }
        let zero_active: Vec<usize> =
            act.i.iter().copied().filter(|&i| lambda[i] == 0.0).collect();
        if zero_active.is_empty() {
            break;
        }
        let reg = regular_normal_cone(p.gamma(), &act.y)?;
        let cell = reg.cells().first().cloned().unwrap_or_else(|| SignCell::new(vec![]));
        let mem_tol = DIR_MEMBER_EPS * (1.0 + norm_inf(&lambda));
        if !cell.member(&lambda, mem_tol) {
            re_anchor(p, xbar, d, k, &x, &lambda, &mut delta)?;
            continue;
        }
        let inject: Vec<usize> = zero_active
            .iter()
            .copied()
            .filter(|&i| cell.tags[i] != Tag::Zero)
            .collect();
        if !inject.is_empty() {
            sign_injection(p, d, k, &x, &cell, &inject, &mut lambda, &mut eps)?;
            continue;
        }
        endpoint_release(p, d, k, zero_active[0], &x, &mut delta)?;
    }
    let act = p.active_sets(&x, &delta);
    if let Some(&coord) = act.i.iter().find(|&&i| lambda[i] == 0.0) {
        return Err(AmError::RefineStuck { k, coord });
    }
    Ok(AmRecord { k, x, lambda, delta, eps })
}

/// Re-anchoring step: move the image point to the realization of a limiting
/// cell that contains `λ^k`, so the multiplier sits in the regular cone of
/// the new point.
fn re_anchor(
    p: &Problem,
    xbar: &[f64],
    d: Option<&[f64]>,
    k: u32,
    x: &[f64],
    lambda: &[f64],
    delta: &mut Vec<f64>,
) -> Result<(), AmError> {
    let image = p.eval_constraints(x);
    let y = sub(&image, delta);
    let max_step = match d {
        None => 1.0 / k as f64,
        Some(_) => {
            let nd = norm2(delta);
            if nd == 0.0 {
                return Err(AmError::DegenerateDirectional(
                    "re-anchoring in directional mode needs δ^k ≠ 0".to_string(),
                ));
            }
            dist2(x, xbar).min(shift_scale(k)) * nd
        }
    };
    // Shifts below the membership tolerance would not change active sets.
    let max_step = max_step.max(1e-10);
    let mem_tol = DIR_MEMBER_EPS * (1.0 + norm_inf(lambda));
    let cells = limiting_cells_with_realizations(p.gamma(), &y, max_step)?;
    let hit = cells
        .iter()
        .find(|rc| rc.cell.member(lambda, mem_tol))
        .ok_or_else(|| {
            AmError::Malformed(format!(
                "k = {k}: λ^k lies outside the limiting normal cone at F(x^k) − δ^k"
            ))
        })?;
    *delta = sub(&image, &hit.point);
    Ok(())
}

/// Sign injection step: give each zero multiplier on a non-`Zero` tag the
/// tag's sign at magnitude `1/k` (directionally scaled by `ℓ^{-1/2}` and
/// `min{1, ‖λ^k‖}`), and absorb the change into `ε^k` with one subgradient
/// of `sgn·F_i`.
#[allow(clippy::too_many_arguments)]
fn sign_injection(
    p: &Problem,
    d: Option<&[f64]>,
    k: u32,
    x: &[f64],
    cell: &SignCell,
    inject: &[usize],
    lambda: &mut [f64],
    eps: &mut Vec<f64>,
) -> Result<(), AmError> {
    let kk = k as f64;
    let mag = match d {
        None => 1.0 / kk,
        Some(_) => {
            let nl = norm2(lambda);
            if nl == 0.0 {
                return Err(AmError::DegenerateDirectional(
                    "sign injection in directional mode needs λ^k ≠ 0".to_string(),
                ));
            }
            nl.min(1.0) / (kk * libm::sqrt(inject.len() as f64))
        }
    };
    for &i in inject {
        let s: i8 = if cell.tags[i] == Tag::NonPos { -1 } else { 1 };
        lambda[i] = s as f64 * mag;
        let part = limiting_subdiff(&p.constraints()[i], x, s)?;
        let vertex = part.polys[0].vertices[0].clone();
        *eps = axpy(eps, mag, &vertex);
    }
    Ok(())
}

/// Endpoint release step: shift image coordinate `i0` off its endpoint by a
/// small `η` so it leaves the active-coordinate set, keeping exactly the
/// boxes that tolerate the shift active. Tries the upward shift first, then
/// the mirror image; `η` halves when the shift would activate a new box.
fn endpoint_release(
    p: &Problem,
    d: Option<&[f64]>,
    k: u32,
    i0: usize,
    x: &[f64],
    delta: &mut Vec<f64>,
) -> Result<(), AmError> {
    let image = p.eval_constraints(x);
    let y = sub(&image, delta);
    let act = p.gamma().active_sets(&image, delta);
    let mut lo_only = Vec::new();
    let mut hi_only = Vec::new();
    let mut inside = Vec::new();
    for &j in &act.j {
        let iv = &p.gamma().boxes()[j].intervals[i0];
        let lo_hit = iv.lo.is_finite() && libm::fabs(y[i0] - iv.lo) <= MEMBER_EPS;
        let hi_hit = iv.hi.is_finite() && libm::fabs(y[i0] - iv.hi) <= MEMBER_EPS;
        match (lo_hit, hi_hit) {
            (true, false) => lo_only.push(j),
            (false, true) => hi_only.push(j),
            (false, false) => inside.push(j),
            // Point interval: the box cannot survive any shift of i0.
            (true, true) => {}
        }
    }
    let dir_cap = match d {
        Some(_) => {
            let nd = norm2(delta);
            if nd == 0.0 {
                return Err(AmError::DegenerateDirectional(
                    "endpoint release in directional mode needs δ^k ≠ 0".to_string(),
                ));
            }
            Some(nd / 2.0)
        }
        None => None,
    };
    for (sig, keep_edge) in [(1.0, &lo_only), (-1.0, &hi_only)] {
        let mut targets: Vec<usize> = keep_edge.iter().chain(inside.iter()).copied().collect();
        targets.sort_unstable();
        if targets.is_empty() {
            continue;
        }
        let room = targets
            .iter()
            .map(|&j| {
                let iv = &p.gamma().boxes()[j].intervals[i0];
                let r = if sig > 0.0 { iv.hi - y[i0] } else { y[i0] - iv.lo };
                if r.is_finite() {
                    r
                } else {
                    1.0
                }
            })
            .fold(f64::INFINITY, f64::min);
        let base = match dir_cap {
            Some(cap) => room.min(cap),
            None => room,
        };
        let mut eta = (shift_scale(k) * base).max(1e-10).min(room / 2.0);
        while eta >= 10.0 * MEMBER_EPS {
            let mut y2 = y.clone();
            y2[i0] += sig * eta;
            if p.gamma().contains(&y2, MEMBER_EPS) {
                let zero_delta = alloc::vec![0.0; y2.len()];
                let a2 = p.gamma().active_sets(&y2, &zero_delta);
                if a2.j == targets && !a2.i.contains(&i0) {
                    *delta = sub(&image, &y2);
                    return Ok(());
                }
            }
            eta /= 2.0;
        }
    }
    Err(AmError::RefineStuck { k, coord: i0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::OrthoSet;
    use crate::expr::Expr;

    fn bx(e: Expr) -> alloc::boxed::Box<Expr> {
        alloc::boxed::Box::new(e)
    }

    fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    fn seq_of(
        xbar: &[f64],
        d: Option<&[f64]>,
        rows: Vec<(u32, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>,
    ) -> AmSequence {
        AmSequence {
            xbar: xbar.to_vec(),
            d: d.map(|v| v.to_vec()),
            records: rows
                .into_iter()
                .map(|(k, x, lambda, delta, eps)| AmRecord { k, x, lambda, delta, eps })
                .collect(),
        }
    }

    #[test]
    fn trend_diagnoses_power_laws_and_constants() {
        let ks: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let decaying: Vec<f64> = ks.iter().map(|k| 1.0 / k).collect();
        let t = trend(&ks, &decaying, 1e-4);
        assert!(t.to_zero && t.bounded);
        assert!((t.slope.unwrap() + 1.0).abs() < 1e-6);

        let constant: Vec<f64> = ks.iter().map(|_| 5.0).collect();
        let t = trend(&ks, &constant, 1e-4);
        assert!(!t.to_zero && t.bounded);

        let growing: Vec<f64> = ks.iter().map(|k| k * k).collect();
        let t = trend(&ks, &growing, 1e-4);
        assert!(!t.to_zero && !t.bounded);

        let zeros_v: Vec<f64> = ks.iter().map(|_| 0.0).collect();
        let t = trend(&ks, &zeros_v, 1e-4);
        assert!(t.to_zero && t.bounded && t.tail == 0.0);
    }

    /// min x₁ over x₁ ≤ 0, −x₁ ≤ 0, x₁ + x₂ ≤ 0, with the displayed
    /// multipliers (k, k+1, 0) at x^k = (0, −1/k).
    #[test]
    fn verify_accepts_displayed_affine_sequence() {
        let p = Problem::new(
            2,
            var(0),
            vec![
                var(0),
                Expr::Product(bx(Expr::Const(-1.0)), bx(var(0))),
                Expr::Sum(vec![var(0), var(1)]),
            ],
            OrthoSet::single(&[
                (f64::NEG_INFINITY, 0.0),
                (f64::NEG_INFINITY, 0.0),
                (f64::NEG_INFINITY, 0.0),
            ])
            .unwrap(),
        )
        .unwrap();
        let rows = (1..=12)
            .map(|k| {
                let kk = k as f64;
                (
                    k,
                    alloc::vec![0.0, -1.0 / kk],
                    alloc::vec![kk, kk + 1.0, 0.0],
                    alloc::vec![0.0, 0.0, 0.0],
                    alloc::vec![0.0, 0.0],
                )
            })
            .collect();
        let seq = seq_of(&[0.0, 0.0], None, rows);
        let report = verify_am_sequence(&p, &seq, SEQ_TOL).unwrap();
        assert!(report.holds(), "verdict: {}", report.verdict.label());
        assert!(report.checks.iter().all(|c| c.stationarity_gap < 1e-12));
    }

    #[test]
    fn verify_flags_multiplier_outside_cone() {
        // Γ = R₋ at the right endpoint has normal cone R₊; λ = −1 sits outside.
        let p = Problem::new(
            1,
            var(0),
            vec![var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let rows = (1..=6)
            .map(|k| (k, alloc::vec![0.0], alloc::vec![-1.0], alloc::vec![0.0], alloc::vec![0.0]))
            .collect();
        let seq = seq_of(&[0.0], None, rows);
        let report = verify_am_sequence(&p, &seq, SEQ_TOL).unwrap();
        match &report.verdict {
            Verdict::Fails(msg) => assert!(msg.contains("limiting normal cone"), "{msg}"),
            other => panic!("expected Fails, got {}", other.label()),
        }
    }

    fn akkt_problem() -> Problem {
        // min x₁ + x₂ s.t. x₁² + x₂² ≤ 0; only the origin is feasible.
        Problem::new(
            2,
            Expr::Sum(vec![var(0), var(1)]),
            vec![Expr::Sum(vec![
                Expr::IntPow(bx(var(0)), 2),
                Expr::IntPow(bx(var(1)), 2),
            ])],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap()
    }

    fn akkt_sequence(count: u32) -> AmSequence {
        let rows = (1..=count)
            .map(|k| {
                let kk = k as f64;
                (
                    k,
                    alloc::vec![-0.5 / kk, -0.5 / kk],
                    alloc::vec![kk],
                    alloc::vec![0.5 / (kk * kk)],
                    alloc::vec![0.0, 0.0],
                )
            })
            .collect();
        seq_of(&[0.0, 0.0], None, rows)
    }

    #[test]
    fn verify_dir_accepts_diverging_multiplier_sequence() {
        let p = akkt_problem();
        let seq = akkt_sequence(50);
        let plain = verify_am_sequence(&p, &seq, SEQ_TOL).unwrap();
        assert!(plain.holds(), "plain verdict: {}", plain.verdict.label());

        let inv_sqrt2 = 1.0 / libm::sqrt(2.0);
        let d = [-inv_sqrt2, -inv_sqrt2];
        let dir = verify_dir_am_sequence(&p, &seq, &d, SEQ_TOL).unwrap();
        assert!(dir.holds(), "directional verdict: {}", dir.verdict.label());
        // Scalar image: alignment residual is exactly zero.
        assert_eq!(dir.conditions.alignment_trend.tail, 0.0);
        assert!(dir.conditions.product_trend.bounded);

        // A record exactly at the base point breaks the unit secant.
        let mut bad = seq.clone();
        bad.records[0].x = alloc::vec![0.0, 0.0];
        let err = verify_dir_am_sequence(&p, &bad, &d, SEQ_TOL).unwrap_err();
        assert_eq!(err, AmError::BasePointCollision(1));
    }

    #[test]
    fn generate_matches_pinned_line_closed_form() {
        // min x over x ∈ {0}: the k-th penalty minimizer is −1/(k+1).
        let p = Problem::new(
            1,
            var(0),
            vec![var(0)],
            OrthoSet::single(&[(0.0, 0.0)]).unwrap(),
        )
        .unwrap();
        let seq = generate_am_sequence(&p, &[0.0], 12, 4000, 0, None).unwrap();
        for r in &seq.records {
            let expect = -1.0 / (r.k as f64 + 1.0);
            assert!(
                libm::fabs(r.x[0] - expect) < 1e-6,
                "k = {}: x = {} vs {}",
                r.k,
                r.x[0],
                expect
            );
        }
        let last = seq.records.last().unwrap();
        assert!(libm::fabs(last.lambda[0] + 1.0) < 0.1, "λ tail: {}", last.lambda[0]);
        let report = verify_am_sequence(&p, &seq, 1e-6).unwrap();
        assert!(report.holds(), "verdict: {}", report.verdict.label());
    }

    #[test]
    fn generate_on_feasible_minimizer_keeps_delta_zero() {
        let p = Problem::new(
            1,
            Expr::IntPow(bx(Expr::Sum(vec![var(0), Expr::Const(-1.0)])), 2),
            vec![var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, f64::INFINITY)]).unwrap(),
        )
        .unwrap();
        let seq = generate_am_sequence(&p, &[1.0], 6, 4000, 0, None).unwrap();
        for r in &seq.records {
            assert_eq!(r.delta, alloc::vec![0.0]);
            assert!(norm2(&r.eps) <= 1e-8);
        }
    }

    /// The ε trend on this problem decays like k^(-1/3) with a 1/k term
    /// masking it early, so the slope protocol needs a longer window than the
    /// other generator tests.
    #[test]
    fn generate_directional_keeps_delta_lambda_parallel() {
        let p = akkt_problem();
        let inv_sqrt2 = 1.0 / libm::sqrt(2.0);
        let d = [-inv_sqrt2, -inv_sqrt2];
        let seq = generate_am_sequence(&p, &[0.0, 0.0], 40, 6000, 0, Some(&d)).unwrap();
        let report = verify_dir_am_sequence(&p, &seq, &d, SEQ_TOL).unwrap();
        assert!(report.holds(), "verdict: {:?}", report.verdict);
        // λ^k = k·δ^k with a scalar image: alignment is exact.
        assert_eq!(report.conditions.alignment_trend.tail, 0.0);
    }

    #[test]
    fn refine_returns_input_when_no_zero_active_multiplier() {
        let p = Problem::new(
            1,
            Expr::Product(bx(Expr::Const(-1.0)), bx(var(0))),
            vec![var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let rows = (1..=6)
            .map(|k| (k, alloc::vec![0.0], alloc::vec![1.0], alloc::vec![0.0], alloc::vec![0.0]))
            .collect();
        let seq = seq_of(&[0.0], None, rows);
        let out = refine_nonzero_multipliers(&p, &seq).unwrap();
        assert_eq!(out.records, seq.records);
    }

    #[test]
    fn refine_injects_signs_on_nonzero_tags() {
        // Γ = R₋², x at the corner, λ^k = (1/k, 0): the second coordinate is
        // active with tag NonNeg, so injection yields λ̃^k = (1/k, 1/k).
        let p = Problem::new(
            2,
            Expr::IntPow(bx(var(0)), 2),
            vec![var(0), var(1)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0), (f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        let rows = (1..=8)
            .map(|k| {
                let kk = k as f64;
                (
                    k,
                    alloc::vec![0.0, 0.0],
                    alloc::vec![1.0 / kk, 0.0],
                    alloc::vec![0.0, 0.0],
                    alloc::vec![1.0 / kk, 0.0],
                )
            })
            .collect();
        let seq = seq_of(&[0.0, 0.0], None, rows);
        let out = refine_nonzero_multipliers(&p, &seq).unwrap();
        for r in &out.records {
            let kk = r.k as f64;
            assert_eq!(r.lambda, alloc::vec![1.0 / kk, 1.0 / kk]);
            assert_eq!(r.eps, alloc::vec![1.0 / kk, 1.0 / kk]);
        }
    }

    #[test]
    fn refine_releases_pinned_endpoint() {
        // Two boxes meet at y₁ = 0 with opposite endpoint types, pinning the
        // regular tag of coordinate 0 to Zero; the release step shifts the
        // image point into the upper box.
        let gamma = OrthoSet::union(&[
            &[(0.0, 2.0), (f64::NEG_INFINITY, 0.0)],
            &[(-2.0, 0.0), (f64::NEG_INFINITY, 0.0)],
        ])
        .unwrap();
        let p = Problem::new(
            2,
            Expr::Sum(vec![
                Expr::IntPow(bx(var(0)), 2),
                Expr::IntPow(bx(var(1)), 2),
            ]),
            vec![var(0), var(1)],
            gamma,
        )
        .unwrap();
        let rows = (1..=10)
            .map(|k| {
                let kk = k as f64;
                (
                    k,
                    alloc::vec![0.0, 0.0],
                    alloc::vec![0.0, 1.0 / kk],
                    alloc::vec![0.0, 0.0],
                    alloc::vec![0.0, 1.0 / kk],
                )
            })
            .collect();
        let seq = seq_of(&[0.0, 0.0], None, rows);
        let out = refine_nonzero_multipliers(&p, &seq).unwrap();
        for r in &out.records {
            let eta = (shift_scale(r.k) * 2.0).min(1.0);
            assert!(
                libm::fabs(r.delta[0] + eta) < 1e-12,
                "k = {}: δ₁ = {} vs −{}",
                r.k,
                r.delta[0],
                eta
            );
            assert_eq!(r.lambda, alloc::vec![0.0, 1.0 / r.k as f64]);
            let act = p.active_sets(&r.x, &r.delta);
            assert_eq!(act.j, alloc::vec![0]);
            assert!(!act.i.contains(&0));
        }
    }

    #[test]
    fn refine_re_anchors_into_containing_cell() {
        // Complementarity-style union: λ = (0, 5) sits in the limiting cell
        // (Zero, Free) but outside the regular cone at the corner, so the
        // image point is re-anchored to the realization of that cell.
        let gamma = OrthoSet::union(&[
            &[(0.0, f64::INFINITY), (0.0, 0.0)],
            &[(0.0, 0.0), (0.0, f64::INFINITY)],
        ])
        .unwrap();
        let p = Problem::new(
            2,
            Expr::Product(bx(Expr::Const(-5.0)), bx(var(1))),
            vec![var(0), var(1)],
            gamma,
        )
        .unwrap();
        let rows = (1..=8)
            .map(|k| {
                (
                    k,
                    alloc::vec![0.0, 0.0],
                    alloc::vec![0.0, 5.0],
                    alloc::vec![0.0, 0.0],
                    alloc::vec![0.0, 0.0],
                )
            })
            .collect();
        let seq = seq_of(&[0.0, 0.0], None, rows);
        let out = refine_nonzero_multipliers(&p, &seq).unwrap();
        for r in &out.records {
            let step = 1.0 / r.k as f64;
            assert!(
                libm::fabs(r.delta[0] + step) < 1e-12,
                "k = {}: δ₁ = {} vs −{}",
                r.k,
                r.delta[0],
                step
            );
            assert_eq!(r.lambda, alloc::vec![0.0, 5.0]);
            let act = p.active_sets(&r.x, &r.delta);
            assert!(!act.i.iter().any(|&i| r.lambda[i] == 0.0));
        }
    }

    #[test]
    fn normalize_subsequence_takes_stable_tail() {
        let p = Problem::new(
            1,
            Expr::IntPow(bx(var(0)), 2),
            vec![var(0)],
            OrthoSet::single(&[(f64::NEG_INFINITY, 0.0)]).unwrap(),
        )
        .unwrap();
        // First two records sit at the endpoint (active coordinate present),
        // the remaining six strictly inside.
        let mut rows: Vec<(u32, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = alloc::vec![];
        for k in 1..=2u32 {
            rows.push((k, alloc::vec![0.0], alloc::vec![1.0], alloc::vec![0.0], alloc::vec![0.0]));
        }
        for k in 3..=8u32 {
            rows.push((
                k,
                alloc::vec![-1.0 / k as f64],
                alloc::vec![0.0],
                alloc::vec![0.0],
                alloc::vec![0.0],
            ));
        }
        let seq = seq_of(&[0.0], None, rows);
        let (tail, pattern) = normalize_subsequence(&p, &seq).unwrap();
        assert_eq!(pattern.start, 2);
        assert_eq!(tail.records.len(), 6);
        assert_eq!(pattern.active_boxes, alloc::vec![0]);
        assert!(pattern.active_coords.is_empty());
        assert_eq!(pattern.signs, alloc::vec![0]);

        // An alternating sign pattern never stabilizes.
        let rows = (1..=8u32)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                (k, alloc::vec![-1.0], alloc::vec![s], alloc::vec![0.0], alloc::vec![0.0])
            })
            .collect();
        let seq = seq_of(&[0.0], None, rows);
        assert!(matches!(normalize_subsequence(&p, &seq), Err(AmError::Malformed(_))));
    }
}
