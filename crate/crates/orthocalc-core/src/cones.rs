//! Sign-cell cones: tangent, regular normal, limiting normal, and directional
//! limiting normal cones of orthodisjunctive sets.
//!
//! Every cone arising from a union of extended boxes is a finite union of
//! sign cells, products of the four elementary cones `{0}`, `[0,∞)`,
//! `(-∞,0]`, and `R` per coordinate. The limiting normal cone is computed
//! exactly by enumerating which nearby activity patterns are realizable:
//! pick the subset `S` of active boxes that stays active, move each
//! coordinate up, down, or not at all inside the intersection box of `S`, and
//! keep the pattern only if every active box outside `S` is escaped by some
//! moved coordinate sitting on one of its finite endpoints. Each realizable
//! pattern contributes the regular normal cell of its nearby points; the
//! union of those cells is the limiting cone. Directional limiting cones
//! reduce to the limiting cone of the tangent cone, which is again an
//! orthodisjunctive set (with endpoints in `{0, ±∞}`).

use alloc::vec;
use alloc::vec::Vec;

use crate::boxes::{ExtInterval, OrthoBox, OrthoSet, MEMBER_EPS};

/// Membership slack for direction vectors entering cone computations. These
/// come out of directional-derivative evaluations and may carry float noise a
/// few orders above [`MEMBER_EPS`].
pub const DIR_MEMBER_EPS: f64 = 1e-9;

/// One coordinate of a sign cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tag {
    Zero,
    NonNeg,
    NonPos,
    Free,
}

impl Tag {
    /// Set containment of elementary cones.
    pub fn contains_tag(self, other: Tag) -> bool {
        match (self, other) {
            (Tag::Free, _) => true,
            (_, Tag::Zero) => true,
            (a, b) => a == b,
        }
    }

    /// Tag-wise intersection; never empty since all four contain 0.
    pub fn intersect(self, other: Tag) -> Tag {
        match (self, other) {
            (Tag::Free, t) | (t, Tag::Free) => t,
            (Tag::Zero, _) | (_, Tag::Zero) => Tag::Zero,
            (a, b) if a == b => a,
            // NonNeg with NonPos in either order.
            _ => Tag::Zero,
        }
    }

    /// Polar cone of the elementary cone.
    pub fn polar(self) -> Tag {
        match self {
            Tag::Zero => Tag::Free,
            Tag::Free => Tag::Zero,
            Tag::NonNeg => Tag::NonPos,
            Tag::NonPos => Tag::NonNeg,
        }
    }

    pub fn member(self, v: f64, tol: f64) -> bool {
        match self {
            Tag::Zero => libm::fabs(v) <= tol,
            Tag::NonNeg => v >= -tol,
            Tag::NonPos => v <= tol,
            Tag::Free => true,
        }
    }

    /// The interval realizing the elementary cone.
    pub fn to_interval(self) -> ExtInterval {
        match self {
            Tag::Zero => ExtInterval::point(0.0),
            Tag::NonNeg => ExtInterval { lo: 0.0, hi: f64::INFINITY },
            Tag::NonPos => ExtInterval { lo: f64::NEG_INFINITY, hi: 0.0 },
            Tag::Free => ExtInterval { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
        }
    }
}

/// A product of elementary cones, one tag per coordinate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SignCell {
    pub tags: Vec<Tag>,
}

impl SignCell {
    pub fn new(tags: Vec<Tag>) -> Self {
        SignCell { tags }
    }

    pub fn dim(&self) -> usize {
        self.tags.len()
    }

    pub fn contains_cell(&self, other: &SignCell) -> bool {
        self.tags.len() == other.tags.len()
            && self.tags.iter().zip(&other.tags).all(|(a, b)| a.contains_tag(*b))
    }

    pub fn intersect(&self, other: &SignCell) -> SignCell {
        SignCell {
            tags: self.tags.iter().zip(&other.tags).map(|(a, b)| a.intersect(*b)).collect(),
        }
    }

    pub fn polar(&self) -> SignCell {
        SignCell { tags: self.tags.iter().map(|t| t.polar()).collect() }
    }

    pub fn member(&self, v: &[f64], tol: f64) -> bool {
        self.tags.len() == v.len()
            && self.tags.iter().zip(v).all(|(t, vi)| t.member(*vi, tol))
    }
}

/// A finite union of sign cells in canonical form: duplicates and cells
/// tag-wise contained in another cell are removed, remaining cells sorted.
///
/// An empty union is the empty set (it arises for directional limiting cones
/// of directions outside the tangent cone), not the zero cone; `{0}` is the
/// all-`Zero` cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellUnion {
    cells: Vec<SignCell>,
}

impl CellUnion {
    pub fn empty() -> Self {
        CellUnion { cells: Vec::new() }
    }

    pub fn canonical(mut cells: Vec<SignCell>) -> Self {
        let mut keep: Vec<SignCell> = Vec::new();
        cells.sort();
        cells.dedup();
        for c in cells.iter() {
            if !cells.iter().any(|other| other != c && other.contains_cell(c)) {
                keep.push(c.clone());
            }
        }
        // Two distinct maximal cells cannot contain each other, and equal
        // cells were removed, so `keep` is the canonical antichain.
        keep.sort();
        CellUnion { cells: keep }
    }

    pub fn cells(&self) -> &[SignCell] {
        &self.cells
    }

    pub fn is_empty_set(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn member(&self, v: &[f64], tol: f64) -> bool {
        self.cells.iter().any(|c| c.member(v, tol))
    }

    /// Pairwise intersection of two unions, re-canonicalized.
    pub fn intersect(&self, other: &CellUnion) -> CellUnion {
        let mut cells = Vec::new();
        for a in &self.cells {
            for b in &other.cells {
                cells.push(a.intersect(b));
            }
        }
        CellUnion::canonical(cells)
    }

    /// Tag-wise intersection with the hyperplane `{v : v · w = 0}`: each
    /// coordinate with `w_i != 0` is forced to `Zero`. For cells polar to a
    /// tangent cone containing `w` this equals the true intersection; in
    /// general it is an inner approximation.
    pub fn intersect_with_hyperplane(&self, w: &[f64], tol: f64) -> CellUnion {
        let cells = self
            .cells
            .iter()
            .map(|c| SignCell {
                tags: c
                    .tags
                    .iter()
                    .zip(w)
                    .map(|(t, wi)| if libm::fabs(*wi) > tol { Tag::Zero } else { *t })
                    .collect(),
            })
            .collect();
        CellUnion::canonical(cells)
    }

    /// The union interpreted as an orthodisjunctive set.
    pub fn to_orthoset(&self) -> Option<OrthoSet> {
        if self.cells.is_empty() {
            return None;
        }
        let boxes = self
            .cells
            .iter()
            .map(|c| OrthoBox { intervals: c.tags.iter().map(|t| t.to_interval()).collect() })
            .collect();
        OrthoSet::new(boxes).ok()
    }
}

/// Failures of cone computations.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeError {
    /// The base point is not in the set (within [`MEMBER_EPS`]).
    PointNotInSet,
    /// Dimension mismatch between point and set.
    DimMismatch { expected: usize, got: usize },
}

impl core::fmt::Display for ConeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ConeError::PointNotInSet => write!(f, "base point lies outside the set"),
            ConeError::DimMismatch { expected, got } => {
                write!(f, "point dimension {got} does not match set dimension {expected}")
            }
        }
    }
}

impl core::error::Error for ConeError {}

/// Tangent tag of an interval at a member point: `Zero` on point intervals,
/// `NonNeg` at finite lower endpoints, `NonPos` at finite upper endpoints,
/// `Free` in the interior.
fn position_tag(iv: &ExtInterval, y: f64) -> Tag {
    if iv.is_point() {
        return Tag::Zero;
    }
    let at_lo = iv.lo.is_finite() && libm::fabs(y - iv.lo) <= MEMBER_EPS;
    let at_hi = iv.hi.is_finite() && libm::fabs(y - iv.hi) <= MEMBER_EPS;
    match (at_lo, at_hi) {
        (true, false) => Tag::NonNeg,
        (false, true) => Tag::NonPos,
        // Both only when lo and hi are within 2 eps; treat as point-like.
        (true, true) => Tag::Zero,
        (false, false) => Tag::Free,
    }
}

fn check_point(set: &OrthoSet, y: &[f64]) -> Result<Vec<usize>, ConeError> {
    if y.len() != set.dim() {
        return Err(ConeError::DimMismatch { expected: set.dim(), got: y.len() });
    }
    let act = set.active_sets(y, &crate::vecops::zeros(y.len()));
    if act.j.is_empty() {
        return Err(ConeError::PointNotInSet);
    }
    Ok(act.j)
}

/// Tangent cone `T_Γ(y)`: the union over active boxes of their coordinate-wise
/// position tags.
pub fn tangent_cone(set: &OrthoSet, y: &[f64]) -> Result<CellUnion, ConeError> {
    let active = check_point(set, y)?;
    let cells = active
        .iter()
        .map(|&j| SignCell {
            tags: set.boxes()[j]
                .intervals
                .iter()
                .zip(y)
                .map(|(iv, yi)| position_tag(iv, *yi))
                .collect(),
        })
        .collect();
    Ok(CellUnion::canonical(cells))
}

/// Regular normal cone: the tag-wise intersection over active boxes of the
/// polar position tags. Always a single cell.
pub fn regular_normal_cone(set: &OrthoSet, y: &[f64]) -> Result<CellUnion, ConeError> {
    let active = check_point(set, y)?;
    let dim = set.dim();
    let mut tags = vec![Tag::Free; dim];
    for &j in &active {
        for (i, iv) in set.boxes()[j].intervals.iter().enumerate() {
            tags[i] = tags[i].intersect(position_tag(iv, y[i]).polar());
        }
    }
    Ok(CellUnion::canonical(vec![SignCell { tags }]))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Move {
    Stay,
    Up,
    Down,
}

/// Limiting normal cone via exact enumeration of realizable nearby activity
/// patterns (see the module documentation for the argument).
pub fn limiting_normal_cone(set: &OrthoSet, y: &[f64]) -> Result<CellUnion, ConeError> {
    let mut cells: Vec<SignCell> = Vec::new();
    enumerate_patterns(set, y, &mut |_, _, _, cell| cells.push(cell))?;
    Ok(CellUnion::canonical(cells))
}

/// A limiting-cone cell together with a nearby point of the set whose regular
/// normal cone is exactly that cell.
#[derive(Clone, Debug)]
pub struct RealizedCell {
    pub cell: SignCell,
    pub point: Vec<f64>,
}

/// Limiting-cone cells with realization points at most `max_step` away per
/// moved coordinate. Each emitted point lies in the set, keeps the staying
/// boxes active, and leaves every other box, so the regular normal cone at the
/// point is the paired cell. Cells are returned in canonical-antichain order
/// with the closest realization kept; the regular cone of `y` itself appears
/// with `point == y`. `max_step` must be comfortably above [`MEMBER_EPS`] or
/// endpoint detection at the realization point degenerates.
pub fn limiting_cells_with_realizations(
    set: &OrthoSet,
    y: &[f64],
    max_step: f64,
) -> Result<Vec<RealizedCell>, ConeError> {
    let active = check_point(set, y)?;
    let dim = set.dim();
    // Coordinate steps must keep the point out of every inactive box, so cap
    // them by the distance to the nearest one.
    let mut safe = f64::INFINITY;
    for (j, b) in set.boxes().iter().enumerate() {
        if active.contains(&j) {
            continue;
        }
        let mut d2 = 0.0;
        for (iv, yi) in b.intervals.iter().zip(y) {
            let excess = f64::max(iv.lo - yi, f64::max(yi - iv.hi, 0.0));
            d2 += excess * excess;
        }
        safe = f64::min(safe, libm::sqrt(d2) / (2.0 * libm::sqrt(dim as f64)));
    }
    let mut raw: Vec<(SignCell, Vec<f64>, f64)> = Vec::new();
    enumerate_patterns(set, y, &mut |moves, lo, hi, cell| {
        let mut point = y.to_vec();
        let mut dist2 = 0.0;
        for i in 0..dim {
            let room_half = match moves[i] {
                Move::Stay => continue,
                Move::Up => {
                    if hi[i].is_finite() {
                        (hi[i] - y[i]) / 2.0
                    } else {
                        1.0
                    }
                }
                Move::Down => {
                    if lo[i].is_finite() {
                        (y[i] - lo[i]) / 2.0
                    } else {
                        1.0
                    }
                }
            };
            let step = f64::min(max_step, f64::min(room_half, safe));
            point[i] += if moves[i] == Move::Up { step } else { -step };
            dist2 += step * step;
        }
        raw.push((cell, point, dist2));
    })?;
    let union = CellUnion::canonical(raw.iter().map(|(c, _, _)| c.clone()).collect());
    let mut out = Vec::new();
    for cell in union.cells() {
        let best = raw
            .iter()
            .filter(|(c, _, _)| c == cell)
            .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap_or(core::cmp::Ordering::Equal))
            .expect("canonical cells come from the raw list");
        out.push(RealizedCell { cell: cell.clone(), point: best.1.clone() });
    }
    Ok(out)
}

/// Drives the pattern enumeration shared by the limiting-cone entry points:
/// for every staying subset and realizable move assignment, hands the sink the
/// moves, the staying-intersection bounds, and the emitted cell.
fn enumerate_patterns(
    set: &OrthoSet,
    y: &[f64],
    sink: &mut dyn FnMut(&[Move], &[f64], &[f64], SignCell),
) -> Result<(), ConeError> {
    let active = check_point(set, y)?;
    let dim = set.dim();
    let t = active.len();
    for mask in 1u32..(1 << t) {
        let s: Vec<usize> =
            (0..t).filter(|b| mask & (1 << b) != 0).map(|b| active[b]).collect();
        let outside: Vec<usize> =
            (0..t).filter(|b| mask & (1 << b) == 0).map(|b| active[b]).collect();
        // Intersection box of the staying subset.
        let mut lo = vec![f64::NEG_INFINITY; dim];
        let mut hi = vec![f64::INFINITY; dim];
        for &j in &s {
            for (i, iv) in set.boxes()[j].intervals.iter().enumerate() {
                lo[i] = f64::max(lo[i], iv.lo);
                hi[i] = f64::min(hi[i], iv.hi);
            }
        }
        // y lies in every staying box, so the intersection box is nonempty.
        let mut moves = vec![Move::Stay; dim];
        enumerate_moves(set, y, &s, &outside, &lo, &hi, 0, &mut moves, sink);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn enumerate_moves(
    set: &OrthoSet,
    y: &[f64],
    s: &[usize],
    outside: &[usize],
    lo: &[f64],
    hi: &[f64],
    coord: usize,
    moves: &mut Vec<Move>,
    sink: &mut dyn FnMut(&[Move], &[f64], &[f64], SignCell),
) {
    let dim = y.len();
    if coord == dim {
        // Escape check: every active box outside S must be left by a moved
        // coordinate sitting on one of its finite endpoints.
        let escaped_all = outside.iter().all(|&j| {
            (0..dim).any(|i| {
                let iv = &set.boxes()[j].intervals[i];
                match moves[i] {
                    Move::Up => iv.hi.is_finite() && libm::fabs(y[i] - iv.hi) <= MEMBER_EPS,
                    Move::Down => iv.lo.is_finite() && libm::fabs(y[i] - iv.lo) <= MEMBER_EPS,
                    Move::Stay => false,
                }
            })
        });
        if !escaped_all {
            return;
        }
        let tags = (0..dim)
            .map(|i| match moves[i] {
                // Moved coordinates become interior in every staying box.
                Move::Up | Move::Down => Tag::Zero,
                Move::Stay => s
                    .iter()
                    .map(|&j| position_tag(&set.boxes()[j].intervals[i], y[i]).polar())
                    .fold(Tag::Free, Tag::intersect),
            })
            .collect();
        sink(moves, lo, hi, SignCell { tags });
        return;
    }
    let mut options = vec![Move::Stay];
    if y[coord] < hi[coord] - MEMBER_EPS {
        options.push(Move::Up);
    }
    if y[coord] > lo[coord] + MEMBER_EPS {
        options.push(Move::Down);
    }
    for m in options {
        moves[coord] = m;
        enumerate_moves(set, y, s, outside, lo, hi, coord + 1, moves, sink);
    }
    moves[coord] = Move::Stay;
}

/// Directional limiting normal cone `N_Γ(y; w)`: empty when `w` is outside
/// the tangent cone, otherwise the limiting normal cone of the tangent cone
/// (an orthodisjunctive set itself) at `w`. For orthodisjunctive sets this
/// identity is exact.
pub fn dir_limiting_normal_cone(
    set: &OrthoSet,
    y: &[f64],
    w: &[f64],
) -> Result<CellUnion, ConeError> {
    let tangent = tangent_cone(set, y)?;
    let Some(t_set) = tangent.to_orthoset() else {
        return Ok(CellUnion::empty());
    };
    if !t_set.contains(w, DIR_MEMBER_EPS) {
        return Ok(CellUnion::empty());
    }
    // Snap near-zero components so endpoint activity in the tangent set is
    // decided consistently with the membership slack above.
    let w_snapped: Vec<f64> =
        w.iter().map(|wi| if libm::fabs(*wi) <= DIR_MEMBER_EPS { 0.0 } else { *wi }).collect();
    limiting_normal_cone(&t_set, &w_snapped)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;

    fn cell(tags: &[Tag]) -> SignCell {
        SignCell::new(tags.to_vec())
    }

    #[test]
    fn interval_cones_at_endpoints_and_interior() {
        let s = OrthoSet::single(&[(-1.0, 1.0)]).unwrap();
        assert_eq!(tangent_cone(&s, &[0.0]).unwrap().cells(), &[cell(&[Tag::Free])]);
        assert_eq!(tangent_cone(&s, &[-1.0]).unwrap().cells(), &[cell(&[Tag::NonNeg])]);
        assert_eq!(limiting_normal_cone(&s, &[0.5]).unwrap().cells(), &[cell(&[Tag::Zero])]);
        assert_eq!(limiting_normal_cone(&s, &[1.0]).unwrap().cells(), &[cell(&[Tag::NonNeg])]);
        assert!(matches!(tangent_cone(&s, &[2.0]), Err(ConeError::PointNotInSet)));
    }

    #[test]
    fn touching_halflines_have_trivial_limiting_cone_at_the_joint() {
        // The union (-inf,0] ∪ [0,inf) is the whole line; the joint is an
        // interior point of the union and every nearby pattern moves off it.
        let s = OrthoSet::union(&[&[(NEG, 0.0)], &[(0.0, f64::INFINITY)]]).unwrap();
        assert_eq!(limiting_normal_cone(&s, &[0.0]).unwrap().cells(), &[cell(&[Tag::Zero])]);
        assert_eq!(
            regular_normal_cone(&s, &[0.0]).unwrap().cells(),
            &[cell(&[Tag::Zero])]
        );
    }

    #[test]
    fn complementarity_corner_cones() {
        let s = OrthoSet::union(&[&[(NEG, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (NEG, 0.0)]]).unwrap();
        let reg = regular_normal_cone(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(reg.cells(), &[cell(&[Tag::NonNeg, Tag::NonNeg])]);
        let lim = limiting_normal_cone(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(
            lim.cells(),
            &[
                cell(&[Tag::Zero, Tag::Free]),
                cell(&[Tag::NonNeg, Tag::NonNeg]),
                cell(&[Tag::Free, Tag::Zero]),
            ]
        );
        // Off the corner only the active branch matters.
        let lim = limiting_normal_cone(&s, &[-2.0, 0.0]).unwrap();
        assert_eq!(lim.cells(), &[cell(&[Tag::Zero, Tag::Free])]);
    }

    #[test]
    fn directional_cone_collapses_to_active_directions() {
        let s = OrthoSet::single(&[(NEG, 0.0)]).unwrap();
        // Interior direction of the tangent cone: only the zero normal.
        let c = dir_limiting_normal_cone(&s, &[0.0], &[-1.0]).unwrap();
        assert_eq!(c.cells(), &[cell(&[Tag::Zero])]);
        // Boundary direction keeps the halfline of normals.
        let c = dir_limiting_normal_cone(&s, &[0.0], &[0.0]).unwrap();
        assert_eq!(c.cells(), &[cell(&[Tag::NonNeg])]);
        // Outward direction: empty set.
        let c = dir_limiting_normal_cone(&s, &[0.0], &[1.0]).unwrap();
        assert!(c.is_empty_set());
    }

    #[test]
    fn realized_cells_carry_witness_points() {
        let s = OrthoSet::union(&[&[(NEG, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (NEG, 0.0)]]).unwrap();
        let realized = limiting_cells_with_realizations(&s, &[0.0, 0.0], 0.25).unwrap();
        assert_eq!(realized.len(), 3);
        for rc in &realized {
            let reg = regular_normal_cone(&s, &rc.point).unwrap();
            assert_eq!(reg.cells(), &[rc.cell.clone()]);
        }
        // The regular cell of the base point is realized in place.
        let reg = regular_normal_cone(&s, &[0.0, 0.0]).unwrap();
        let in_place = realized.iter().find(|rc| rc.cell == reg.cells()[0]).unwrap();
        assert_eq!(in_place.point, &[0.0, 0.0]);
    }

    #[test]
    fn hyperplane_restriction_zeroes_moving_coordinates() {
        let u = CellUnion::canonical(alloc::vec![cell(&[Tag::NonNeg, Tag::NonPos])]);
        let r = u.intersect_with_hyperplane(&[0.0, -2.0], DIR_MEMBER_EPS);
        assert_eq!(r.cells(), &[cell(&[Tag::NonNeg, Tag::Zero])]);
    }

    #[test]
    fn canonical_form_drops_dominated_cells() {
        let u = CellUnion::canonical(alloc::vec![
            cell(&[Tag::Free, Tag::NonNeg]),
            cell(&[Tag::NonNeg, Tag::NonNeg]),
            cell(&[Tag::Free, Tag::NonNeg]),
        ]);
        assert_eq!(u.cells(), &[cell(&[Tag::Free, Tag::NonNeg])]);
    }

    #[test]
    fn polar_round_trip_on_cells() {
        let c = cell(&[Tag::Zero, Tag::NonNeg, Tag::NonPos, Tag::Free]);
        assert_eq!(c.polar().polar(), c);
        assert_eq!(
            c.polar(),
            cell(&[Tag::Free, Tag::NonPos, Tag::NonNeg, Tag::Zero])
        );
    }
}
