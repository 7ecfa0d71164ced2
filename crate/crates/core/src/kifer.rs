//! A non-invertible random circle system whose fiber exponent is negative
//! while its stationary measure has no atoms.
//!
//! Each step applies `f(x) = x - (κ/2π) sin 2πx` with probability `p`, and
//! otherwise a rotation by an angle drawn uniformly from `[-ε, ε]`. The map `f`
//! has a sink at 0 with `f'(0) = 1 - κ` and a source at 1/2 with `f'(1/2) = 1 + κ`.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibration::root::illinois;
use crate::rng::stream;
use crate::torus::wrap;

pub const MIN_STEPS: usize = 1_000_000;
pub const MIN_ULAM_BINS: usize = 64;
/// Subdivision points per source bin for the `f` part of the transfer operator.
pub const ULAM_SUBPOINTS: usize = 64;
pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomCircleSystem {
    p: f64,
    eps: f64,
    kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Branch {
    F,
    Rotation(f64),
}

impl RandomCircleSystem {
    /// `p` in `[0, 1)`, `ε` in `[0, 0.5]`, `κ` in `(0, 1)`.
    ///
    /// `p = 0` (pure rotation) and `ε = 0` (deterministic `f`) are admitted as
    /// degenerate limits.
    pub fn new(p: f64, eps: f64, kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid("p", "must lie in [0, 1)"));
        }
        if !(0.0..=0.5).contains(&eps) {
            return Err(Error::invalid("eps", "must lie in [0, 0.5]"));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::invalid("kappa", "must lie in (0, 1)"));
        }
        Ok(Self { p, eps, kappa })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn f(&self, x: f64) -> f64 {
        wrap(x - self.kappa / TAU * (TAU * x).sin())
    }

    pub fn f_derivative(&self, x: f64) -> f64 {
        1.0 - self.kappa * (TAU * x).cos()
    }

    /// `f⁻¹`, by bracketing on the lift, which is increasing with `F(x+1) = F(x)+1`.
    pub fn f_inverse(&self, y: f64) -> f64 {
        let y = wrap(y);
        let lift = |x: f64| x - self.kappa / TAU * (TAU * x).sin() - y;
        let r = self.kappa / TAU + 1e-12;
        wrap(illinois(lift, y - r, y + r, 1e-16))
    }

    pub fn step<R: Rng>(&self, x: f64, rng: &mut R) -> (f64, Branch) {
        if rng.gen::<f64>() < self.p {
            (self.f(x), Branch::F)
        } else {
            let theta = if self.eps > 0.0 {
                rng.gen_range(-self.eps..=self.eps)
            } else {
                0.0
            };
            (wrap(x + theta), Branch::Rotation(theta))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryEstimate {
    /// Bin masses, summing to 1.
    pub density_histogram: Vec<f64>,
    pub counts: Vec<u64>,
    /// Time average of `log` of the derivative of the applied map.
    pub exponent: f64,
    pub n_steps: usize,
    pub f_steps: usize,
}

impl StationaryEstimate {
    pub fn max_bin_mass(&self) -> f64 {
        self.density_histogram.iter().copied().fold(0.0, f64::max)
    }

    /// Fraction of visits to bins whose centers lie within `r` of `center`,
    /// counted exactly.
    pub fn mass_near(&self, center: f64, r: f64) -> f64 {
        let n = self.counts.len() as f64;
        let hits: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| crate::torus::circle_distance((*i as f64 + 0.5) / n, center) <= r)
            .map(|(_, &c)| c)
            .sum();
        hits as f64 / self.n_steps as f64
    }
}

/// Time-averaged histogram and exponent along one random orbit started at the sink.
pub fn estimate_stationary(
    sys: &RandomCircleSystem,
    n_steps: usize,
    burn_in: usize,
    bins: usize,
    seed: u64,
) -> Result<StationaryEstimate> {
    if n_steps < MIN_STEPS {
        return Err(Error::InsufficientSamples {
            needed: MIN_STEPS,
            got: n_steps,
        });
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    let mut rng = stream(seed, "kifer-orbit");
    let mut x = 0.0;
    for _ in 0..burn_in {
        x = sys.step(x, &mut rng).0;
    }
    let mut counts = vec![0u64; bins];
    let mut log_sum = 0.0;
    let mut f_steps = 0;
    for _ in 0..n_steps {
        let (next, branch) = sys.step(x, &mut rng);
        if branch == Branch::F {
            log_sum += sys.f_derivative(x).ln();
            f_steps += 1;
        }
        x = next;
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(StationaryEstimate {
        density_histogram: counts.iter().map(|&c| c as f64 / n_steps as f64).collect(),
        counts,
        exponent: log_sum / n_steps as f64,
        n_steps,
        f_steps,
    })
}

/// `P(U₁ + U₂ ≤ t)` for `U₁` uniform on `[0, w]` and `U₂` uniform on `[0, h]`.
fn sum_of_uniforms_cdf(t: f64, w: f64, h: f64) -> f64 {
    let q = |u: f64| if u > 0.0 { 0.5 * u * u } else { 0.0 };
    ((q(t) - q(t - w) - q(t - h) + q(t - w - h)) / (w * h)).clamp(0.0, 1.0)
}

/// Sparse rows of the annealed transfer operator on `n` equal bins.
fn ulam_rows(sys: &RandomCircleSystem, n: usize) -> Vec<Vec<(usize, f64)>> {
    let w = 1.0 / n as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            let lo = i as f64 * w;
            for s in 0..ULAM_SUBPOINTS {
                let y = sys.f(lo + (s as f64 + 0.5) * w / ULAM_SUBPOINTS as f64);
                row[((y * n as f64) as usize).min(n - 1)] += sys.p / ULAM_SUBPOINTS as f64;
            }
            let q = 1.0 - sys.p;
            if sys.eps == 0.0 {
                row[i] += q;
            } else {
                // bin i smeared by a uniform rotation covers [lo - ε, lo + w + ε]
                let h = 2.0 * sys.eps;
                let start = lo - sys.eps;
                let first = (start * n as f64).floor() as i64;
                let last = ((start + w + h) * n as f64).ceil() as i64;
                for j in first..last {
                    let a = j as f64 * w - start;
                    let mass = sum_of_uniforms_cdf(a + w, w, h) - sum_of_uniforms_cdf(a, w, h);
                    row[j.rem_euclid(n as i64) as usize] += q * mass;
                }
            }
            row.into_iter()
                .enumerate()
                .filter(|&(_, v)| v > 0.0)
                .collect()
        })
        .collect()
}

/// Stationary bin masses of the annealed Ulam discretization, by power iteration.
pub fn ulam_stationary(sys: &RandomCircleSystem, n_bins: usize) -> Result<Vec<f64>> {
    if n_bins < MIN_ULAM_BINS {
        return Err(Error::invalid("n_bins", "must be at least 64"));
    }
    let rows = ulam_rows(sys, n_bins);
    let mut pi = vec![1.0 / n_bins as f64; n_bins];
    let mut next = vec![0.0; n_bins];
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERATIONS {
        next.fill(0.0);
        for (i, row) in rows.iter().enumerate() {
            let m = pi[i];
            for &(j, v) in row {
                next[j] += m * v;
            }
        }
        let total: f64 = next.iter().sum();
        residual = 0.0;
        for (a, b) in next.iter_mut().zip(&pi) {
            *a /= total;
            residual += (*a - b).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        if residual < POWER_TOLERANCE {
            return Ok(pi);
        }
    }
    Err(Error::PowerIterationStalled {
        residual,
        iterations: POWER_MAX_ITERATIONS,
    })
}

/// Exponent predicted by a bin density: `p` times the mean of `log f'` under it.
pub fn density_exponent(sys: &RandomCircleSystem, density: &[f64]) -> f64 {
    let n = density.len() as f64;
    density
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mean: f64 = (0..ULAM_SUBPOINTS)
                .map(|s| sys.f_derivative((i as f64 + (s as f64 + 0.5) / ULAM_SUBPOINTS as f64) / n).ln())
                .sum::<f64>()
                / ULAM_SUBPOINTS as f64;
            m * mean
        })
        .sum::<f64>()
        * sys.p
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Mass of the arc of half-width `r` around `center`.
pub fn mass_near(density: &[f64], center: f64, r: f64) -> f64 {
    let n = density.len() as f64;
    density
        .iter()
        .enumerate()
        .filter(|(i, _)| crate::torus::circle_distance((*i as f64 + 0.5) / n, center) <= r)
        .map(|(_, &m)| m)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomVerdict {
    pub x: f64,
    pub weight: f64,
    pub fixed_point: bool,
    /// Pullbacks until the single implied weight `w / pⁿ` reaches 1.
    pub pullbacks_single: u64,
    /// Pullbacks until the implied weights summed along the backward orbit exceed 1.
    pub pullbacks_accumulated: u64,
    /// The distinct backward orbit points carrying the implied weights.
    pub backward_orbit: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpossibilityReport {
    pub atoms: Vec<AtomVerdict>,
    /// Every candidate leads to a contradiction. True for an empty list.
    pub contradiction: bool,
}

/// Follows `μ({x}) = p · μ({f⁻¹ x})` backward from each candidate atom.
///
/// At a fixed point of `f` the relation reads `w = p w`, so any positive weight
/// is contradictory at once. Elsewhere the backward orbit consists of distinct
/// points whose implied weights grow like `w / pⁿ`.
pub fn atomic_impossibility_check(sys: &RandomCircleSystem, candidates: &[(f64, f64)]) -> Result<ImpossibilityReport> {
    if sys.p == 0.0 {
        return Err(Error::invalid("p", "the relation is vacuous when p = 0"));
    }
    let mut atoms = Vec::with_capacity(candidates.len());
    for &(x, w) in candidates {
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::invalid("weight", "candidate weights must lie in (0, 1]"));
        }
        let x = wrap(x);
        let fixed = crate::torus::circle_distance(sys.f(x), x) < 1e-14;
        if fixed {
            atoms.push(AtomVerdict {
                x,
                weight: w,
                fixed_point: true,
                pullbacks_single: 0,
                pullbacks_accumulated: 0,
                backward_orbit: vec![x],
            });
            continue;
        }
        let single = ((1.0 / w).ln() / (1.0 / sys.p).ln()).ceil().max(0.0) as u64;
        let mut orbit = vec![x];
        let mut implied = w;
        let mut total = w;
        let mut y = x;
        let mut n = 0u64;
        while total <= 1.0 {
            y = sys.f_inverse(y);
            implied /= sys.p;
            total += implied;
            n += 1;
            orbit.push(y);
        }
        atoms.push(AtomVerdict {
            x,
            weight: w,
            fixed_point: false,
            pullbacks_single: single,
            pullbacks_accumulated: n,
            backward_orbit: orbit,
        });
    }
    Ok(ImpossibilityReport {
        atoms,
        contradiction: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> RandomCircleSystem {
        RandomCircleSystem::new(0.9, 0.1, 0.5).unwrap()
    }

    #[test]
    fn fixed_points_and_multipliers() {
        let s = sys();
        assert_eq!(s.f(0.0), 0.0);
        assert!((s.f(0.5) - 0.5).abs() < 1e-15);
        assert!((s.f_derivative(0.0) - 0.5).abs() < 1e-15);
        assert!((s.f_derivative(0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let s = sys();
        for i in 0..100 {
            let x = i as f64 / 100.0 + 0.003;
            assert!(crate::torus::circle_distance(s.f(s.f_inverse(x)), x) < 1e-14);
        }
    }

    #[test]
    fn zero_width_rotation_is_identity() {
        let s = RandomCircleSystem::new(0.0, 0.0, 0.5).unwrap();
        let mut rng = stream(1, "t");
        assert_eq!(s.step(0.3, &mut rng), (0.3, Branch::Rotation(0.0)));
    }

    #[test]
    fn invalid_kappa() {
        assert!(RandomCircleSystem::new(0.9, 0.1, 1.5).is_err());
    }

    #[test]
    fn smear_rows_are_stochastic() {
        let s = RandomCircleSystem::new(0.3, 0.37, 0.5).unwrap();
        for row in ulam_rows(&s, 64) {
            let t: f64 = row.iter().map(|r| r.1).sum();
            assert!((t - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_rotation_is_uniform() {
        let s = RandomCircleSystem::new(0.0, 0.05, 0.5).unwrap();
        let d = ulam_stationary(&s, 64).unwrap();
        assert!(d.iter().all(|m| (m - 1.0 / 64.0).abs() < 1e-12));
    }

    #[test]
    fn sink_atom_is_contradictory() {
        let r = atomic_impossibility_check(&sys(), &[(0.0, 0.3)]).unwrap();
        assert!(r.atoms[0].fixed_point);
        assert!(r.contradiction);
    }
}
