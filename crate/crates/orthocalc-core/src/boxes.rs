//! Orthodisjunctive sets: finite unions of extended boxes.
//!
//! An extended box is a product of closed intervals whose endpoints may be
//! infinite or may coincide (point intervals model equality constraints such
//! as `{0}`). An [`OrthoSet`] is a finite union of such boxes of equal
//! dimension. Membership, projection, distances, and activity bookkeeping are
//! all exact coordinate-wise computations; the only tolerance involved is
//! [`MEMBER_EPS`], which absorbs the last-ulp noise of evaluating constraint
//! functions in floating point.

use alloc::vec::Vec;

/// Absolute slack used by membership and endpoint-activity tests. Interval
/// data and evaluation points in practice agree exactly or miss by float
/// rounding on the 1e-16 scale; anything below 1e-9 would work equally well.
pub const MEMBER_EPS: f64 = 1e-12;

/// A closed extended interval `[lo, hi]` with `lo <= hi`; `lo = -inf` and
/// `hi = +inf` are allowed, `lo = hi` (finite) is a point interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ExtInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, OrthoSetError> {
        let ok = !lo.is_nan()
            && !hi.is_nan()
            && lo <= hi
            && lo != f64::INFINITY
            && hi != f64::NEG_INFINITY;
        if ok {
            Ok(ExtInterval { lo, hi })
        } else {
            Err(OrthoSetError::InvalidInterval { lo, hi })
        }
    }

    pub fn point(v: f64) -> Self {
        ExtInterval { lo: v, hi: v }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, y: f64, tol: f64) -> bool {
        y >= self.lo - tol && y <= self.hi + tol
    }

    pub fn clamp(&self, y: f64) -> f64 {
        if y < self.lo {
            self.lo
        } else if y > self.hi {
            self.hi
        } else {
            y
        }
    }

    /// True when `y` sits on a finite endpoint (within `tol`).
    pub fn at_endpoint(&self, y: f64, tol: f64) -> bool {
        (self.lo.is_finite() && libm::fabs(y - self.lo) <= tol)
            || (self.hi.is_finite() && libm::fabs(y - self.hi) <= tol)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoBox {
    pub intervals: Vec<ExtInterval>,
}

impl OrthoBox {
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.intervals.len() == y.len()
            && self.intervals.iter().zip(y).all(|(iv, yi)| iv.contains(*yi, tol))
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        self.intervals.iter().zip(y).map(|(iv, yi)| iv.clamp(*yi)).collect()
    }

    pub fn dist2(&self, y: &[f64]) -> f64 {
        self.intervals
            .iter()
            .zip(y)
            .map(|(iv, yi)| {
                let c = iv.clamp(*yi);
                (yi - c) * (yi - c)
            })
            .sum()
    }
}

/// Construction failures for orthodisjunctive sets.
#[derive(Clone, Debug, PartialEq)]
pub enum OrthoSetError {
    /// A union needs at least one box.
    Empty,
    /// Boxes of different dimensions in one union.
    DimMismatch { expected: usize, got: usize },
    /// Interval with `lo > hi`, a NaN endpoint, or an empty infinite bound.
    InvalidInterval { lo: f64, hi: f64 },
}

impl core::fmt::Display for OrthoSetError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OrthoSetError::Empty => write!(f, "orthodisjunctive set needs at least one box"),
            OrthoSetError::DimMismatch { expected, got } => {
                write!(f, "box dimension {got} does not match {expected}")
            }
            OrthoSetError::InvalidInterval { lo, hi } => {
                write!(f, "invalid interval [{lo}, {hi}]")
            }
        }
    }
}

impl core::error::Error for OrthoSetError {}

/// A finite union of extended boxes of common dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoSet {
    boxes: Vec<OrthoBox>,
}

impl OrthoSet {
    pub fn new(boxes: Vec<OrthoBox>) -> Result<Self, OrthoSetError> {
        let Some(first) = boxes.first() else {
            return Err(OrthoSetError::Empty);
        };
        let dim = first.intervals.len();
        for b in &boxes {
            if b.intervals.len() != dim {
                return Err(OrthoSetError::DimMismatch {
                    expected: dim,
                    got: b.intervals.len(),
                });
            }
            for iv in &b.intervals {
                ExtInterval::new(iv.lo, iv.hi)?;
            }
        }
        Ok(OrthoSet { boxes })
    }

    /// Single box from raw `(lo, hi)` pairs.
    pub fn single(intervals: &[(f64, f64)]) -> Result<Self, OrthoSetError> {
        let ivs = intervals
            .iter()
            .map(|(lo, hi)| ExtInterval::new(*lo, *hi))
            .collect::<Result<Vec<_>, _>>()?;
        OrthoSet::new(alloc::vec![OrthoBox { intervals: ivs }])
    }

    /// Union of boxes from raw pairs.
    pub fn union(boxes: &[&[(f64, f64)]]) -> Result<Self, OrthoSetError> {
        let bs = boxes
            .iter()
            .map(|b| {
                Ok(OrthoBox {
                    intervals: b
                        .iter()
                        .map(|(lo, hi)| ExtInterval::new(*lo, *hi))
                        .collect::<Result<Vec<_>, OrthoSetError>>()?,
                })
            })
            .collect::<Result<Vec<_>, OrthoSetError>>()?;
        OrthoSet::new(bs)
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].intervals.len()
    }

    pub fn boxes(&self) -> &[OrthoBox] {
        &self.boxes
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.boxes.iter().any(|b| b.contains(y, tol))
    }

    /// Nearest point of the union with the index of the realizing box; on
    /// exact distance ties the lowest box index wins.
    pub fn project(&self, y: &[f64]) -> (Vec<f64>, usize) {
        let mut best = (f64::INFINITY, 0usize);
        for (j, b) in self.boxes.iter().enumerate() {
            let d2 = b.dist2(y);
            if d2 < best.0 {
                best = (d2, j);
            }
        }
        (self.boxes[best.1].project(y), best.1)
    }

    pub fn distance(&self, y: &[f64]) -> f64 {
        libm::sqrt(self.boxes.iter().map(|b| b.dist2(y)).fold(f64::INFINITY, f64::min))
    }

    /// Activity bookkeeping at the shifted point `y = image - delta`.
    pub fn active_sets(&self, image: &[f64], delta: &[f64]) -> ActiveSets {
        let y: Vec<f64> = image.iter().zip(delta).map(|(a, b)| a - b).collect();
        let j: Vec<usize> = self
            .boxes
            .iter()
            .enumerate()
            .filter(|(_, b)| b.contains(&y, MEMBER_EPS))
            .map(|(idx, _)| idx)
            .collect();
        let dim = self.dim();
        let i: Vec<usize> = (0..dim)
            .filter(|&coord| {
                j.iter().any(|&jj| {
                    self.boxes[jj].intervals[coord].at_endpoint(y[coord], MEMBER_EPS)
                })
            })
            .collect();
        ActiveSets { j, i, y }
    }
}

/// Active boxes `J` and active coordinates `I` at `y = image - delta`.
///
/// `J` indexes the boxes containing `y`; `I` lists coordinates where `y` hits
/// a finite endpoint of at least one active box. Both are sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSets {
    pub j: Vec<usize>,
    pub i: Vec<usize>,
    pub y: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;
    const POS: f64 = f64::INFINITY;

    #[test]
    fn projection_prefers_lowest_box_on_ties() {
        // Two point boxes equally far from the query.
        let s = OrthoSet::union(&[&[(-1.0, -1.0)], &[(1.0, 1.0)]]).unwrap();
        let (p, j) = s.project(&[0.0]);
        assert_eq!(j, 0);
        assert_eq!(p, alloc::vec![-1.0]);
    }

    #[test]
    fn distance_to_union_of_halflines() {
        let s = OrthoSet::union(&[&[(NEG, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (NEG, 0.0)]]).unwrap();
        assert_eq!(s.distance(&[-3.0, 0.0]), 0.0);
        assert_eq!(s.distance(&[1.0, 0.0]), 1.0);
        assert!((s.distance(&[1.0, 1.0]) - libm::sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn active_sets_on_the_complementarity_corner() {
        let s = OrthoSet::union(&[&[(NEG, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (NEG, 0.0)]]).unwrap();
        let act = s.active_sets(&[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(act.j, alloc::vec![0, 1]);
        assert_eq!(act.i, alloc::vec![0, 1]);
        let act = s.active_sets(&[-1.0, 0.0], &[0.0, 0.0]);
        assert_eq!(act.j, alloc::vec![0]);
        assert_eq!(act.i, alloc::vec![1]);
    }

    #[test]
    fn infinite_endpoints_are_never_active() {
        let s = OrthoSet::single(&[(NEG, POS)]).unwrap();
        let act = s.active_sets(&[0.0], &[0.0]);
        assert_eq!(act.j, alloc::vec![0]);
        assert!(act.i.is_empty());
    }

    #[test]
    fn invalid_intervals_are_rejected() {
        assert!(ExtInterval::new(1.0, 0.0).is_err());
        assert!(ExtInterval::new(f64::NAN, 0.0).is_err());
        assert!(ExtInterval::new(POS, POS).is_err());
        assert!(OrthoSet::new(alloc::vec![]).is_err());
    }
}
