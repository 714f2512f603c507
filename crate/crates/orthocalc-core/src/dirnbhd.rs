//! Directional neighborhoods: cone-shaped balls around a base point that
//! narrow to a direction.
//!
//! A point x belongs to the neighborhood when y = x − center satisfies
//! `‖y‖ ≤ eps` and `‖‖d‖y − ‖y‖d‖ ≤ delta·‖y‖·‖d‖`, so the admissible
//! directions y/‖y‖ stay within a relative angle `delta` of d. The sampler
//! produces a deterministic spread: radii fall geometrically through (0, eps],
//! the first point of every radius rung sits exactly on the axis, and the rest
//! jitter the direction by at most `delta/2` in norm, which keeps every sample
//! strictly inside the membership region.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vecops::{axpy, norm2, normalize, scale, sub};

/// Cone-shaped neighborhood of `center` in direction `d`.
#[derive(Clone, Debug)]
pub struct DirNbhd {
    pub center: Vec<f64>,
    pub d: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
}

impl DirNbhd {
    pub fn new(center: &[f64], d: &[f64], eps: f64, delta: f64) -> Self {
        DirNbhd { center: center.to_vec(), d: d.to_vec(), eps, delta }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let y = sub(x, &self.center);
        let ny = norm2(&y);
        if ny > self.eps {
            return false;
        }
        if ny == 0.0 {
            return true;
        }
        let nd = norm2(&self.d);
        let defect = norm2(&sub(&scale(&y, nd), &scale(&self.d, ny)));
        defect <= self.delta * ny * nd
    }

    /// Deterministic quasi-random members. Radii run through geometric rungs
    /// `eps·2^{-j}`, backed off by one part in 10^9 so the outermost rung
    /// survives the cancellation noise of `contains` recomputing x − center;
    /// per rung the first sample lies on the axis and later ones perturb the
    /// direction by a Gaussian jitter scaled to `delta/4`, whose normalized
    /// result is within `delta/2` of `d`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.center.len();
        let mut out = Vec::with_capacity(count);
        let per_rung = 4usize;
        let mut rung = 0usize;
        while out.len() < count {
            let r = self.eps * libm::pow(2.0, -(rung as f64)) * (1.0 - 1e-9);
            for s in 0..per_rung {
                if out.len() == count {
                    break;
                }
                let dir = if s == 0 {
                    self.d.clone()
                } else {
                    let g: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                    let gn = norm2(&g);
                    let jitter =
                        if gn == 0.0 { g } else { scale(&g, self.delta / (4.0 * gn)) };
                    match normalize(&axpy(&self.d, 1.0, &jitter)) {
                        Some(u) => u,
                        None => self.d.clone(),
                    }
                };
                out.push(axpy(&self.center, r, &dir));
            }
            rung += 1;
        }
        out
    }
}

pub(crate) fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box-Muller; the log argument is kept away from zero.
pub(crate) fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = uniform01(rng).max(1e-12);
    let u2 = uniform01(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_bounds_radius_and_angle() {
        let nb = DirNbhd::new(&[0.0, 0.0], &[0.0, 1.0], 0.5, 0.3);
        assert!(nb.contains(&[0.0, 0.0]));
        assert!(nb.contains(&[0.0, 0.4]));
        assert!(!nb.contains(&[0.0, 0.6]));
        assert!(!nb.contains(&[0.0, -0.1]));
        assert!(!nb.contains(&[0.3, 0.3]));
        assert!(nb.contains(&[0.02, 0.2]));
    }

    #[test]
    fn parabolic_approach_enters_the_neighborhood() {
        let nb = DirNbhd::new(&[0.0, 0.0], &[0.0, 1.0], 0.25, 0.25);
        for k in 10..30 {
            let k = k as f64;
            assert!(nb.contains(&[1.0 / (k * k), 1.0 / k]));
        }
    }

    #[test]
    fn samples_satisfy_membership_and_spread_radii() {
        let nb = DirNbhd::new(&[1.0, -2.0, 0.5], &[1.0, 0.0, 0.0], 0.1, 0.2);
        let pts = nb.sample(40, 7);
        assert_eq!(pts.len(), 40);
        let mut min_r = f64::INFINITY;
        let mut max_r = 0.0f64;
        for p in &pts {
            assert!(nb.contains(p));
            let r = norm2(&sub(p, &nb.center));
            min_r = min_r.min(r);
            max_r = max_r.max(r);
        }
        assert!(max_r > 0.09);
        assert!(min_r < 1e-3);
        assert_eq!(pts, nb.sample(40, 7));
        assert_ne!(pts, nb.sample(40, 8));
    }

    #[test]
    fn narrow_cone_keeps_samples_forward() {
        let nb = DirNbhd::new(&[0.0, 0.0], &[0.0, 1.0], 1.0, 0.2);
        for p in nb.sample(32, 0) {
            assert!(p[1] > 0.0);
        }
    }
}
