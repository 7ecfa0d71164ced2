//! Cluster structure of fiber samples: atoms and their symmetry under `ρ_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{circle_delta, circle_distance, wrap};

pub const MIN_ATOM_SAMPLES: usize = 1_000;
/// Smallest mass a cluster must carry to count as an atom.
pub const ATOM_MASS_FLOOR: f64 = 0.05;
/// Smallest total atom mass for a passing report.
pub const CLUSTERED_MASS_FLOOR: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: f64,
    pub weight: f64,
    /// Half the arc spanned by the cluster.
    pub radius: f64,
}

/// Circular single-linkage clustering at scale `delta`: sorted samples are
/// split wherever consecutive samples are more than `delta` apart.
pub fn single_linkage(samples: &[f64], delta: f64) -> Vec<Cluster> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut xs: Vec<f64> = samples.iter().map(|&x| wrap(x)).collect();
    xs.sort_by(f64::total_cmp);
    let cut_after: Vec<usize> = (0..n)
        .filter(|&i| {
            let gap = if i + 1 < n { xs[i + 1] - xs[i] } else { xs[0] + 1.0 - xs[n - 1] };
            gap > delta
        })
        .collect();
    if cut_after.is_empty() {
        let center = circular_mean(&xs);
        return vec![Cluster {
            center,
            weight: 1.0,
            radius: 0.5,
        }];
    }
    let mut out = Vec::with_capacity(cut_after.len());
    for (c, &end) in cut_after.iter().enumerate() {
        // each run starts right after the previous cut, wrapping around
        let prev = cut_after[(c + cut_after.len() - 1) % cut_after.len()];
        let start = (prev + 1) % n;
        let count = (end + n - start) % n + 1;
        let first = xs[start];
        let last = xs[end];
        let span = wrap(last - first);
        out.push(Cluster {
            center: wrap(first + 0.5 * span),
            weight: count as f64 / n as f64,
            radius: 0.5 * span,
        });
    }
    out.sort_by(|a, b| a.center.total_cmp(&b.center));
    out
}

fn circular_mean(xs: &[f64]) -> f64 {
    let (s, c) = xs.iter().fold((0.0, 0.0), |(s, c), &x| {
        let t = std::f64::consts::TAU * x;
        (s + t.sin(), c + t.cos())
    });
    wrap(s.atan2(c) / std::f64::consts::TAU)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    pub k_detected: usize,
    pub centers: Vec<f64>,
    pub weight_vector: Vec<f64>,
    /// `max_i |w_i - 1/k_detected|`.
    pub max_weight_deviation: f64,
    pub clustered_mass: f64,
    pub symmetry_floor: usize,
    pub delta: f64,
    pub pass: bool,
}

/// Clusters of radius at most `delta` holding at least 5% of the samples are atoms.
pub fn detect_atoms(samples: &[f64], delta: f64, symmetry_floor: usize) -> Result<AtomReport> {
    if samples.len() < MIN_ATOM_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_ATOM_SAMPLES,
            got: samples.len(),
        });
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::invalid("delta", "must lie in (0, 0.5)"));
    }
    let clusters = single_linkage(samples, delta);
    let atoms: Vec<&Cluster> = clusters
        .iter()
        .filter(|c| c.radius <= delta && c.weight >= ATOM_MASS_FLOOR)
        .collect();
    if atoms.is_empty() {
        let largest = clusters
            .iter()
            .filter(|c| c.radius <= delta)
            .map(|c| c.weight)
            .fold(0.0, f64::max);
        return Err(Error::NoConcentration { largest });
    }
    let k = atoms.len();
    let target = 1.0 / k as f64;
    let weight_vector: Vec<f64> = atoms.iter().map(|c| c.weight).collect();
    let max_weight_deviation = weight_vector
        .iter()
        .map(|w| (w - target).abs())
        .fold(0.0, f64::max);
    let clustered_mass: f64 = weight_vector.iter().sum();
    let pass = max_weight_deviation <= 0.1 * target
        && clustered_mass >= CLUSTERED_MASS_FLOOR
        && k >= symmetry_floor;
    Ok(AtomReport {
        k_detected: k,
        centers: atoms.iter().map(|c| c.center).collect(),
        weight_vector,
        max_weight_deviation,
        clustered_mass,
        symmetry_floor,
        delta,
        pass,
    })
}

/// Whether the atom set is invariant under the leaf shift by `1/k`.
///
/// Every atom center shifted by `1/k` must land within `delta + slack` of
/// another atom, and the sample mass within `delta` of the shifted center
/// must match the atom's weight to within `0.1/k`.
pub fn symmetry_floor_check(k: u32, report: &AtomReport, samples: &[f64], slack: f64) -> bool {
    if k <= 1 {
        return true;
    }
    if samples.is_empty() {
        return false;
    }
    let shift = 1.0 / f64::from(k);
    let n = samples.len() as f64;
    report.centers.iter().zip(&report.weight_vector).all(|(&c, &w)| {
        let moved = wrap(c + shift);
        let matched = report
            .centers
            .iter()
            .any(|&o| circle_distance(o, moved) <= report.delta + slack);
        let near = samples
            .iter()
            .filter(|&&x| circle_delta(moved, x).abs() <= report.delta)
            .count() as f64
            / n;
        matched && (near - w).abs() <= 0.1 * shift
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spikes(centers: &[f64], per: usize, width: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for &c in centers {
            for i in 0..per {
                out.push(wrap(c + width * (i as f64 / per as f64 - 0.5)));
            }
        }
        out
    }

    #[test]
    fn cluster_across_zero() {
        let xs = spikes(&[0.0], 500, 0.01);
        let cl = single_linkage(&xs, 0.05);
        assert_eq!(cl.len(), 1);
        assert!(circle_distance(cl[0].center, 0.0) < 0.01);
        assert!(cl[0].radius < 0.006);
    }

    #[test]
    fn three_equal_atoms() {
        let xs = spikes(&[0.1, 0.1 + 1.0 / 3.0, 0.1 + 2.0 / 3.0], 400, 0.002);
        let rep = detect_atoms(&xs, 0.05, 3).unwrap();
        assert_eq!(rep.k_detected, 3);
        assert!(rep.pass);
        assert!(symmetry_floor_check(3, &rep, &xs, 1e-3));
    }

    #[test]
    fn deleting_an_atom_breaks_symmetry() {
        let xs = spikes(&[0.1, 0.1 + 1.0 / 3.0, 0.1 + 2.0 / 3.0], 400, 0.002);
        let mut rep = detect_atoms(&xs, 0.05, 3).unwrap();
        rep.centers.remove(1);
        rep.weight_vector.remove(1);
        assert!(!symmetry_floor_check(3, &rep, &xs, 1e-3));
    }

    #[test]
    fn uniform_samples_have_no_atoms() {
        let xs: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0).collect();
        assert!(matches!(detect_atoms(&xs, 0.05, 1), Err(Error::NoConcentration { .. })));
    }

    #[test]
    fn unequal_weights_fail() {
        let mut xs = spikes(&[0.2], 800, 0.001);
        xs.extend(spikes(&[0.7], 400, 0.001));
        let rep = detect_atoms(&xs, 0.05, 2).unwrap();
        assert_eq!(rep.k_detected, 2);
        assert!(!rep.pass);
    }
}
