//! Finite unions of vertex-described polytopes.
//!
//! Limiting subdifferentials of the expression language are exactly such
//! unions: convex hulls for regular pieces, finite point sets where branches
//! detach, Minkowski sums across separable structure. [`PolyUnion`] carries the
//! vertex data together with an exactness flag that records whether the
//! producing calculus rule was an equality or only an outer estimate.
//!
//! Distances from a query point to a hull, and to the conic hull of a
//! generator set, are computed exactly over rationals by enumerating candidate
//! support faces and verifying the convexity optimality condition, then
//! rounding only the final value. This is what keeps residual checks at the
//! 1e-9 scale trustworthy.

use alloc::vec;
use alloc::vec::Vec;

use num_rational::BigRational;
use num_traits::Zero;

use crate::rational::{rat_to_f64, rdot, rvec_from_f64, solve_linear};
use crate::vecops;

/// Vertices closer than this in the maximum norm are merged when polytopes are
/// assembled from rule outputs.
pub const VERTEX_DEDUPE_EPS: f64 = 1e-12;

/// A compact convex polytope given by (not necessarily minimal) vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    pub vertices: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn point(v: Vec<f64>) -> Self {
        Polytope { vertices: vec![v] }
    }

    pub fn hull(mut vertices: Vec<Vec<f64>>) -> Self {
        dedupe(&mut vertices);
        Polytope { vertices }
    }

    pub fn dim(&self) -> usize {
        self.vertices.first().map_or(0, Vec::len)
    }

    /// Minkowski sum, vertex-wise.
    pub fn minkowski(&self, other: &Polytope) -> Polytope {
        let mut vertices = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                vertices.push(vecops::add(a, b));
            }
        }
        Polytope::hull(vertices)
    }

    pub fn scale(&self, s: f64) -> Polytope {
        Polytope::hull(self.vertices.iter().map(|v| vecops::scale(v, s)).collect())
    }

    pub fn translate(&self, t: &[f64]) -> Polytope {
        Polytope { vertices: self.vertices.iter().map(|v| vecops::add(v, t)).collect() }
    }

    /// Exact squared distance from `z` to the hull, with the nearest point.
    pub fn nearest_point(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (d2, p) = hull_nearest_exact(&self.vertices, z);
        (libm::sqrt(rat_to_f64(&d2)), p)
    }

    pub fn distance(&self, z: &[f64]) -> f64 {
        self.nearest_point(z).0
    }
}

/// A finite union of polytopes plus the exactness of the rule that built it.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyUnion {
    pub polys: Vec<Polytope>,
    /// True when the producing calculus rule yields the set exactly; false for
    /// outer estimates (for example sums of several entangled nonsmooth
    /// terms). The set data is an outer bound either way.
    pub exact: bool,
}

impl PolyUnion {
    pub fn exact_from(polys: Vec<Polytope>) -> Self {
        PolyUnion { polys, exact: true }
    }

    pub fn singleton(v: Vec<f64>) -> Self {
        PolyUnion::exact_from(vec![Polytope::point(v)])
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.polys.first().map_or(0, Polytope::dim)
    }

    /// Union-of-pairwise-sums Minkowski sum; exactness is inherited only when
    /// both operands are exact (callers may clear the flag further when the
    /// sum rule itself is an outer estimate).
    pub fn minkowski(&self, other: &PolyUnion) -> PolyUnion {
        let mut polys = Vec::with_capacity(self.polys.len() * other.polys.len());
        for a in &self.polys {
            for b in &other.polys {
                polys.push(a.minkowski(b));
            }
        }
        PolyUnion { polys, exact: self.exact && other.exact }
    }

    pub fn scale(&self, s: f64) -> PolyUnion {
        PolyUnion { polys: self.polys.iter().map(|p| p.scale(s)).collect(), exact: self.exact }
    }

    pub fn translate(&self, t: &[f64]) -> PolyUnion {
        PolyUnion { polys: self.polys.iter().map(|p| p.translate(t)).collect(), exact: self.exact }
    }

    /// Distance from `z` to the union with the realizing nearest point;
    /// `(f64::INFINITY, [])` for the empty union.
    pub fn nearest_point(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut best: Option<(BigRational, Vec<f64>)> = None;
        for p in &self.polys {
            let (d2, pt) = hull_nearest_exact(&p.vertices, z);
            if best.as_ref().map_or(true, |(b, _)| d2 < *b) {
                best = Some((d2, pt));
            }
        }
        match best {
            Some((d2, pt)) => (libm::sqrt(rat_to_f64(&d2)), pt),
            None => (f64::INFINITY, Vec::new()),
        }
    }

    pub fn distance(&self, z: &[f64]) -> f64 {
        self.nearest_point(z).0
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.distance(z) <= tol
    }

    /// All vertices across the union (for generator-style consumers).
    pub fn all_vertices(&self) -> Vec<Vec<f64>> {
        self.polys.iter().flat_map(|p| p.vertices.iter().cloned()).collect()
    }
}

fn dedupe(vertices: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vertices.len());
    for v in vertices.drain(..) {
        let dup = out.iter().any(|w| {
            v.iter().zip(w).all(|(a, b)| libm::fabs(a - b) <= VERTEX_DEDUPE_EPS)
        });
        if !dup {
            out.push(v);
        }
    }
    *vertices = out;
}

/// Exact nearest point of `conv(vertices)` to `z`: squared distance as a
/// rational plus the nearest point rounded to f64.
///
/// Enumerates affinely independent vertex subsets as candidate supporting
/// faces, projects `z` onto each affine hull by exact normal equations, and
/// accepts the first candidate whose barycentric weights are nonnegative and
/// which satisfies the variational inequality `(z - p) · (v - p) <= 0` for all
/// vertices `v`. Convexity makes that candidate the global nearest point.
fn hull_nearest_exact(vertices: &[Vec<f64>], z: &[f64]) -> (BigRational, Vec<f64>) {
    assert!(!vertices.is_empty(), "nearest point of an empty vertex set");
    let n = z.len();
    let rz = rvec_from_f64(z);
    let rv: Vec<Vec<BigRational>> = vertices.iter().map(|v| rvec_from_f64(v)).collect();
    let k_max = core::cmp::min(vertices.len(), n + 1);
    let mut best: Option<(BigRational, Vec<BigRational>)> = None;
    let mut subset: Vec<usize> = Vec::new();
    enumerate_subsets(vertices.len(), k_max, &mut subset, &mut |s| {
        if let Some(p) = project_onto_face(&rv, &rz, s) {
            if optimal_over_all(&rv, &rz, &p) {
                let diff: Vec<BigRational> = rz.iter().zip(&p).map(|(a, b)| a - b).collect();
                let d2 = rdot(&diff, &diff);
                if best.as_ref().map_or(true, |(b, _)| d2 < *b) {
                    best = Some((d2, p));
                }
            }
        }
    });
    let (d2, p) = best.expect("some face always certifies the nearest point");
    (d2, p.iter().map(rat_to_f64).collect())
}

fn enumerate_subsets(
    n: usize,
    k_max: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    fn rec(
        start: usize,
        n: usize,
        k_max: usize,
        current: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        if !current.is_empty() {
            visit(current);
        }
        if current.len() == k_max {
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, k_max, current, visit);
            current.pop();
        }
    }
    rec(0, n, k_max, current, visit);
}

/// Projection of `z` onto the affine hull of the selected vertices, returned
/// only when the barycentric weights are all nonnegative. `None` also when the
/// selection is affinely dependent (a smaller subset spans the same face).
fn project_onto_face(
    rv: &[Vec<BigRational>],
    rz: &[BigRational],
    subset: &[usize],
) -> Option<Vec<BigRational>> {
    let v0 = &rv[subset[0]];
    let k = subset.len() - 1;
    if k == 0 {
        return Some(v0.clone());
    }
    let edges: Vec<Vec<BigRational>> = subset[1..]
        .iter()
        .map(|i| rv[*i].iter().zip(v0).map(|(a, b)| a - b).collect())
        .collect();
    let mut gram = Vec::with_capacity(k);
    let mut rhs = Vec::with_capacity(k);
    let zc: Vec<BigRational> = rz.iter().zip(v0).map(|(a, b)| a - b).collect();
    for ei in &edges {
        gram.push(edges.iter().map(|ej| rdot(ei, ej)).collect::<Vec<_>>());
        rhs.push(rdot(ei, &zc));
    }
    let beta = solve_linear(&gram, &rhs)?;
    let mut alpha0 = BigRational::from_integer(1.into());
    for b in &beta {
        if b < &BigRational::zero() {
            return None;
        }
        alpha0 -= b;
    }
    if alpha0 < BigRational::zero() {
        return None;
    }
    let mut p = v0.clone();
    for (b, e) in beta.iter().zip(&edges) {
        for (pi, ei) in p.iter_mut().zip(e) {
            *pi += b * ei;
        }
    }
    Some(p)
}

fn optimal_over_all(rv: &[Vec<BigRational>], rz: &[BigRational], p: &[BigRational]) -> bool {
    let res: Vec<BigRational> = rz.iter().zip(p).map(|(a, b)| a - b).collect();
    rv.iter().all(|v| {
        let vp: Vec<BigRational> = v.iter().zip(p).map(|(a, b)| a - b).collect();
        rdot(&res, &vp) <= BigRational::zero()
    })
}

/// Exact nearest point of the conic hull `cone{generators}` (always containing
/// the origin) to `z`: distance and nearest point.
///
/// Same face-enumeration strategy as the hull case, with linear instead of
/// affine solves, and optimality `(z - p) · g <= 0` over all generators plus
/// `(z - p) · p = 0` by construction.
pub fn cone_nearest(generators: &[Vec<f64>], z: &[f64]) -> (f64, Vec<f64>) {
    let n = z.len();
    let rz = rvec_from_f64(z);
    let rg: Vec<Vec<BigRational>> = generators.iter().map(|g| rvec_from_f64(g)).collect();
    // Empty face: the origin.
    let mut best: Option<(BigRational, Vec<BigRational>)> = None;
    let origin: Vec<BigRational> = (0..n).map(|_| BigRational::zero()).collect();
    if cone_optimal(&rg, &rz, &origin) {
        let d2 = rdot(&rz, &rz);
        best = Some((d2, origin.clone()));
    }
    let k_max = core::cmp::min(generators.len(), n);
    let mut subset = Vec::new();
    enumerate_subsets(generators.len(), k_max, &mut subset, &mut |s| {
        let sel: Vec<&Vec<BigRational>> = s.iter().map(|i| &rg[*i]).collect();
        let mut gram = Vec::with_capacity(sel.len());
        let mut rhs = Vec::with_capacity(sel.len());
        for gi in &sel {
            gram.push(sel.iter().map(|gj| rdot(gi, gj)).collect::<Vec<_>>());
            rhs.push(rdot(gi, &rz));
        }
        let Some(mu) = solve_linear(&gram, &rhs) else {
            return;
        };
        if mu.iter().any(|m| m < &BigRational::zero()) {
            return;
        }
        let mut p = origin.clone();
        for (m, g) in mu.iter().zip(&sel) {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                *pi += m * gi;
            }
        }
        if cone_optimal(&rg, &rz, &p) {
            let diff: Vec<BigRational> = rz.iter().zip(&p).map(|(a, b)| a - b).collect();
            let d2 = rdot(&diff, &diff);
            if best.as_ref().map_or(true, |(b, _)| d2 < *b) {
                best = Some((d2, p));
            }
        }
    });
    let (d2, p) = best.expect("a cone face always certifies the nearest point");
    (libm::sqrt(rat_to_f64(&d2)), p.iter().map(rat_to_f64).collect())
}

fn cone_optimal(rg: &[Vec<BigRational>], rz: &[BigRational], p: &[BigRational]) -> bool {
    let res: Vec<BigRational> = rz.iter().zip(p).map(|(a, b)| a - b).collect();
    rg.iter().all(|g| rdot(&res, g) <= BigRational::zero())
}

/// Symmetric Hausdorff distance between two convex polytopes (attained at
/// vertices because point-to-hull distance is convex).
pub fn hull_hausdorff(a: &Polytope, b: &Polytope) -> f64 {
    let d_ab = a.vertices.iter().map(|v| b.distance(v)).fold(0.0, f64::max);
    let d_ba = b.vertices.iter().map(|v| a.distance(v)).fold(0.0, f64::max);
    f64::max(d_ab, d_ba)
}

/// Structure-matching Hausdorff gap between unions: every polytope must have a
/// close counterpart on the other side. Used by tests comparing computed
/// subdifferentials against expected ones of identical shape.
pub fn union_match_gap(a: &PolyUnion, b: &PolyUnion) -> f64 {
    let one_way = |x: &PolyUnion, y: &PolyUnion| -> f64 {
        x.polys
            .iter()
            .map(|p| {
                y.polys.iter().map(|q| hull_hausdorff(p, q)).fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if a.polys.is_empty() && b.polys.is_empty() {
        return 0.0;
    }
    if a.polys.is_empty() || b.polys.is_empty() {
        return f64::INFINITY;
    }
    f64::max(one_way(a, b), one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_point_on_segment_face() {
        let p = Polytope::hull(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]]);
        let (d, pt) = p.nearest_point(&[2.0, 2.0]);
        assert!((d - libm::sqrt(2.0)).abs() < 1e-15);
        assert!((pt[0] - 1.0).abs() < 1e-15 && (pt[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interior_point_has_zero_distance() {
        let p = Polytope::hull(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![0.0, 1.0]]);
        assert_eq!(p.distance(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn union_takes_the_closer_component() {
        let u = PolyUnion::exact_from(vec![
            Polytope::point(vec![-1.0]),
            Polytope::point(vec![1.0]),
        ]);
        let (d, pt) = u.nearest_point(&[0.9]);
        assert!((d - 0.1).abs() < 1e-15);
        assert_eq!(pt, vec![1.0]);
    }

    #[test]
    fn minkowski_sum_of_segments_is_a_square() {
        let a = PolyUnion::exact_from(vec![Polytope::hull(vec![vec![0.0, 0.0], vec![1.0, 0.0]])]);
        let b = PolyUnion::exact_from(vec![Polytope::hull(vec![vec![0.0, 0.0], vec![0.0, 1.0]])]);
        let s = a.minkowski(&b);
        assert_eq!(s.polys.len(), 1);
        assert_eq!(s.polys[0].vertices.len(), 4);
        assert_eq!(s.distance(&[0.5, 0.5]), 0.0);
        assert!((s.distance(&[2.0, 0.5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cone_distance_to_nonnegative_ray() {
        let (d, p) = cone_nearest(&[vec![-9.0, 0.0], vec![0.0, 0.0]], &[0.0, 6.0]);
        assert_eq!(d, 6.0);
        assert_eq!(p, vec![0.0, 0.0]);
        let (d, _) = cone_nearest(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[3.0, 4.0]);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn hausdorff_between_shifted_segments() {
        let a = Polytope::hull(vec![vec![0.0], vec![1.0]]);
        let b = Polytope::hull(vec![vec![0.5], vec![1.5]]);
        assert!((hull_hausdorff(&a, &b) - 0.5).abs() < 1e-15);
    }
}
