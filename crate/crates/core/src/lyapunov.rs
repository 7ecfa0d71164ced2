//! Lyapunov exponents of `g`: the full spectrum by QR re-orthonormalization,
//! the center exponent along the leaf tangent, and a leafwise contraction table.

use nalgebra::{Matrix2, Matrix3, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibration::{FibrationModel, LeafChart};
use crate::rng::stream;
use crate::torus::{SkewSystem, SplitPoint, TorusPoint2, TorusPoint3, UNSTABLE_DIRECTION};

pub const BURN_IN: usize = 1_000;
pub const HISTORY_STRIDE: usize = 1_000;
const OVERFLOW_LIMIT: f64 = 1e300;

/// Which map generates the orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Running exponents, ascending.
    pub exponents: [f64; 3],
    pub center: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Ascending: stable, middle, unstable.
    pub exponents: [f64; 3],
    pub center_exponent: Option<f64>,
    pub n_iterations: usize,
    pub history: Vec<HistoryRow>,
    pub seed: u64,
}

impl LyapunovEstimate {
    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    pub fn middle(&self) -> f64 {
        self.exponents[1]
    }

    /// Largest change of any exponent between the last two history rows.
    pub fn last_history_change(&self) -> Option<f64> {
        let n = self.history.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (&self.history[n - 2], &self.history[n - 1]);
        Some(
            (0..3)
                .map(|i| (a.exponents[i] - b.exponents[i]).abs())
                .fold(0.0, f64::max),
        )
    }

    /// CSV with columns `iteration,lambda1,lambda2,lambda3,lambda_c_running`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,lambda1,lambda2,lambda3,lambda_c_running\n");
        for row in &self.history {
            let c = row.center.map(|c| format!("{c:.12e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{}\n",
                row.iteration, row.exponents[0], row.exponents[1], row.exponents[2], c
            ));
        }
        out
    }
}

fn sorted(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(f64::total_cmp);
    v
}

fn random_frame(seed: u64) -> Matrix3<f64> {
    let mut rng = stream(seed, "lyapunov-frame");
    let m = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    m.qr().q()
}

/// Benettin iteration with a QR step after every Jacobian product.
pub fn full_spectrum(s: &SkewSystem, p0: TorusPoint3, n: usize, seed: u64) -> Result<LyapunovEstimate> {
    if n < 10_000 {
        return Err(Error::invalid("n", "full spectrum needs at least 10^4 iterations"));
    }
    let mut q = random_frame(seed);
    let mut p = p0;
    let mut sums = [0.0; 3];
    let mut history = Vec::with_capacity(n / HISTORY_STRIDE + 1);
    for it in 0..BURN_IN + n {
        let a = s.jacobian(p).0 * q;
        if a.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return Err(Error::NumericalOverflow { iteration: it });
        }
        let qr = a.qr();
        let r = qr.r();
        let mut qn = qr.q();
        for c in 0..3 {
            if r[(c, c)] < 0.0 {
                qn.column_mut(c).neg_mut();
            }
            if it >= BURN_IN {
                sums[c] += r[(c, c)].abs().ln();
            }
        }
        q = qn;
        p = s.apply(p);
        let done = it + 1 - BURN_IN.min(it + 1);
        if it >= BURN_IN && done % HISTORY_STRIDE == 0 {
            let k = done as f64;
            history.push(HistoryRow {
                iteration: done,
                exponents: sorted([sums[0] / k, sums[1] / k, sums[2] / k]),
                center: None,
            });
        }
    }
    let k = n as f64;
    Ok(LyapunovEstimate {
        exponents: sorted([sums[0] / k, sums[1] / k, sums[2] / k]),
        center_exponent: None,
        n_iterations: n,
        history,
        seed,
    })
}

/// Derivative of `g` restricted to the invariant plane spanned by
/// `(e_u, 0)` and `(0, 0, 1)`, in that basis.
///
/// `j` translates along `e_u` only and the planar part of `h` is `A_2`, so
/// this plane contains every center leaf tangent and is mapped to itself.
fn plane_block(s: &SkewSystem, p: TorusPoint3) -> Matrix2<f64> {
    let j = s.jacobian(p).0;
    let e1 = nalgebra::Vector3::new(UNSTABLE_DIRECTION[0], UNSTABLE_DIRECTION[1], 0.0);
    let e2 = nalgebra::Vector3::new(0.0, 0.0, 1.0);
    let norm_sq = UNSTABLE_DIRECTION[0].powi(2) + UNSTABLE_DIRECTION[1].powi(2);
    let coords = |v: nalgebra::Vector3<f64>| {
        let along = (v[0] * UNSTABLE_DIRECTION[0] + v[1] * UNSTABLE_DIRECTION[1]) / norm_sq;
        (along, v[2])
    };
    let (a11, a21) = coords(j * e1);
    let (a12, a22) = coords(j * e2);
    Matrix2::new(a11, a12, a21, a22)
}

/// Euclidean length in `T³` of `x (e_u, 0) + y (0, 0, 1)`.
fn plane_norm(v: &Vector2<f64>) -> f64 {
    let eu2 = UNSTABLE_DIRECTION[0].powi(2) + UNSTABLE_DIRECTION[1].powi(2);
    (v[0] * v[0] * eu2 + v[1] * v[1]).sqrt()
}

/// Leaf tangent at `p` in plane coordinates, from the model when one is given.
fn initial_tangent(m: Option<&FibrationModel>, p: TorusPoint3) -> Vector2<f64> {
    match m {
        Some(m) => {
            let base = m.approximate_base(p);
            let (du, _) = m.interpolated_derivatives(base, p.z());
            Vector2::new(du, 1.0)
        }
        None => Vector2::new(0.0, 1.0),
    }
}

/// Per-step log growth of the center tangent along an orbit of length `n`.
///
/// For `g` the center is the slower of the two directions in the invariant
/// plane, so the tangent is transported backwards from the end of the stored
/// orbit and any initial error along the unstable direction dies out. For
/// `g⁻¹` the center is the faster one and the tangent is pushed forward from
/// `p0`. In both cases only the first or last few dozen steps depend on the
/// initial tangent.
pub fn center_log_growth(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    p0: TorusPoint3,
    n: usize,
    direction: Direction,
) -> Result<Vec<f64>> {
    if let Some(m) = m {
        m.ensure_converged()?;
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    match direction {
        Direction::Forward => {
            let mut blocks = Vec::with_capacity(n);
            let mut p = p0;
            for _ in 0..n {
                blocks.push(plane_block(s, p));
                p = s.apply(p);
            }
            let mut v = initial_tangent(m, p);
            v /= plane_norm(&v);
            let mut growth = vec![0.0; n];
            for (j, b) in blocks.iter().enumerate().rev() {
                let inv = b.try_inverse().expect("plane block has determinant λ");
                let mut w = inv * v;
                w /= plane_norm(&w);
                growth[j] = plane_norm(&(b * w)).ln();
                v = w;
            }
            Ok(growth)
        }
        Direction::Backward => {
            let mut v = initial_tangent(m, p0);
            v /= plane_norm(&v);
            let mut q = p0;
            let mut growth = Vec::with_capacity(n);
            for _ in 0..n {
                let prev = s.apply_inverse(q);
                let inv = plane_block(s, prev)
                    .try_inverse()
                    .expect("plane block has determinant λ");
                let w = inv * v;
                let len = plane_norm(&w);
                growth.push(len.ln());
                v = w / len;
                q = prev;
            }
            Ok(growth)
        }
    }
}

/// Exponential growth rate of leaf tangents along the orbit of `p0` under `g`
/// (forward) or `g⁻¹` (backward).
pub fn center_exponent(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    p0: TorusPoint3,
    n: usize,
    direction: Direction,
) -> Result<f64> {
    let g = center_log_growth(s, m, p0, n, direction)?;
    Ok(g.iter().sum::<f64>() / g.len() as f64)
}

/// Full spectrum plus the center exponent on the same orbit, with the running
/// center average folded into the history.
pub fn spectrum_with_center(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    p0: TorusPoint3,
    n: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    let mut est = full_spectrum(s, p0, n, seed)?;
    // same orbit as the accumulated QR average, which starts after burn-in
    let mut start = p0;
    for _ in 0..BURN_IN {
        start = s.apply(start);
    }
    let growth = center_log_growth(s, m, start, n, Direction::Forward)?;
    let mut acc = 0.0;
    let mut row = 0;
    for (i, g) in growth.iter().enumerate() {
        acc += g;
        if row < est.history.len() && est.history[row].iteration == i + 1 {
            est.history[row].center = Some(acc / (i + 1) as f64);
            row += 1;
        }
    }
    est.center_exponent = Some(acc / n as f64);
    Ok(est)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub m: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub mean_log_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub table: Vec<ContractionRow>,
    /// Fitted per-step factor `c` of the bound `C c^m`.
    pub rate: f64,
    /// Fitted prefactor `C`.
    pub prefactor: f64,
    pub violation_fraction: f64,
}

/// Ratios `d(g⁻ᵐp, g⁻ᵐq) / d(p, q)` for pairs on common leaves, `m = 0..=m_steps`.
///
/// `c` is the exponential of the least-squares slope of the mean log ratio;
/// `C` is then the mean offset of the per-step maximum log ratio above `c^m`.
/// The violation fraction counts `(pair, m)` entries above `C c^m`.
pub fn contraction_diagnostic(
    s: &SkewSystem,
    pairs: &[(TorusPoint3, TorusPoint3)],
    m_steps: usize,
) -> ContractionReport {
    let mut logs: Vec<Vec<f64>> = vec![Vec::with_capacity(pairs.len()); m_steps + 1];
    for &(p0, q0) in pairs {
        let d0 = p0.euclidean_distance(&q0);
        if d0 == 0.0 {
            continue;
        }
        let (mut p, mut q) = (p0, q0);
        for (m, slot) in logs.iter_mut().enumerate() {
            if m > 0 {
                p = s.apply_inverse(p);
                q = s.apply_inverse(q);
            }
            let d = p.euclidean_distance(&q).max(f64::MIN_POSITIVE);
            slot.push((d / d0).ln());
        }
    }
    let table: Vec<ContractionRow> = logs
        .iter()
        .enumerate()
        .map(|(m, v)| {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let median = if sorted.is_empty() {
                f64::NAN
            } else if sorted.len() % 2 == 1 {
                sorted[sorted.len() / 2]
            } else {
                0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
            };
            ContractionRow {
                m,
                max_ratio: sorted.last().copied().unwrap_or(f64::NAN).exp(),
                median_ratio: median.exp(),
                mean_log_ratio: v.iter().sum::<f64>() / v.len().max(1) as f64,
            }
        })
        .collect();

    let ms: Vec<f64> = table.iter().map(|r| r.m as f64).collect();
    let ys: Vec<f64> = table.iter().map(|r| r.mean_log_ratio).collect();
    let mean_m = ms.iter().sum::<f64>() / ms.len() as f64;
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxx: f64 = ms.iter().map(|m| (m - mean_m).powi(2)).sum();
    let sxy: f64 = ms.iter().zip(&ys).map(|(m, y)| (m - mean_m) * (y - mean_y)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let log_c_big = table
        .iter()
        .map(|r| r.max_ratio.ln() - slope * r.m as f64)
        .sum::<f64>()
        / table.len() as f64;
    let mut violations = 0usize;
    let mut total = 0usize;
    for (m, v) in logs.iter().enumerate() {
        let bound = log_c_big + slope * m as f64;
        total += v.len();
        violations += v.iter().filter(|&&x| x > bound + 1e-12).count();
    }
    ContractionReport {
        table,
        rate: slope.exp(),
        prefactor: log_c_big.exp(),
        violation_fraction: if total == 0 { 0.0 } else { violations as f64 / total as f64 },
    }
}

/// Pairs on a stored leaf: heights `z` and `z + dz` with `dz` chosen so the
/// points are at most `radius` apart.
pub fn leaf_pairs_from_chart<R: Rng>(
    chart: &LeafChart,
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Vec<(TorusPoint3, TorusPoint3)> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z: f64 = rng.gen();
        let dz = rng.gen_range(0.0..radius) / chart.total_length();
        let (p, q) = (chart.point_at(z), chart.point_at(z + dz));
        if p.euclidean_distance(&q) <= radius && dz > 0.0 {
            out.push((p, q));
        }
    }
    out
}

/// Pairs on a common leaf without a stored model: two points of one vertical
/// circle are pulled back `settle` steps, after which both lie on the leaf
/// over the same base point up to `λ^{-settle}`.
pub fn leaf_pairs_by_pullback<R: Rng>(
    s: &SkewSystem,
    count: usize,
    radius: f64,
    settle: usize,
    rng: &mut R,
) -> Vec<(TorusPoint3, TorusPoint3)> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < 1000 * count.max(1) {
        attempts += 1;
        let base = TorusPoint2::new(rng.gen(), rng.gen());
        let z: f64 = rng.gen();
        let dz = rng.gen_range(0.0..radius);
        let mut a = SplitPoint::new(base, 0.0, z);
        let mut b = SplitPoint::new(base, 0.0, z + dz);
        for _ in 0..settle {
            a = a.backward(s);
            b = b.backward(s);
        }
        let (p, q) = (a.point(), b.point());
        let d = p.euclidean_distance(&q);
        if d > 0.0 && d <= radius {
            out.push((p, q));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::UNSTABLE_EIGENVALUE;

    #[test]
    fn linear_spectrum_is_exact() {
        let s = SkewSystem::new(0.0, 0.0, 1).unwrap();
        let est = full_spectrum(&s, TorusPoint3::new(0.1, 0.2, 0.3), 20_000, 3).unwrap();
        let l = UNSTABLE_EIGENVALUE.ln();
        assert!((est.exponents[0] + l).abs() < 2e-3);
        assert!(est.exponents[1].abs() < 2e-3);
        assert!((est.exponents[2] - l).abs() < 2e-3);
        assert!(est.sum().abs() < 1e-10);
        assert_eq!(est.history.len(), 20);
    }

    #[test]
    fn plane_is_invariant() {
        let s = SkewSystem::new(0.07, 0.04, 2).unwrap();
        let p = TorusPoint3::new(0.3, 0.8, 0.45);
        let j = s.jacobian(p).0;
        let v = j * nalgebra::Vector3::new(UNSTABLE_DIRECTION[0], UNSTABLE_DIRECTION[1], 0.0);
        let cross = v[0] * UNSTABLE_DIRECTION[1] - v[1] * UNSTABLE_DIRECTION[0];
        assert!(cross.abs() < 1e-12);
        let b = plane_block(&s, p);
        assert!((b.determinant() - UNSTABLE_EIGENVALUE).abs() < 1e-12);
    }

    #[test]
    fn center_exponent_vanishes_without_perturbation() {
        let s = SkewSystem::new(0.0, 0.1, 1).unwrap();
        let p = TorusPoint3::new(0.2, 0.3, 0.4);
        for d in [Direction::Forward, Direction::Backward] {
            assert!(center_exponent(&s, None, p, 10_000, d).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn too_short_runs_are_rejected() {
        let s = SkewSystem::default();
        assert!(full_spectrum(&s, TorusPoint3::new(0.0, 0.0, 0.0), 10, 1).is_err());
    }

    #[test]
    fn contraction_is_identity_on_vertical_leaves() {
        let s = SkewSystem::new(0.0, 0.0, 1).unwrap();
        let mut rng = stream(4, "pairs");
        let pairs = leaf_pairs_by_pullback(&s, 50, 0.05, 5, &mut rng);
        let rep = contraction_diagnostic(&s, &pairs, 10);
        for row in &rep.table {
            assert!((row.max_ratio - 1.0).abs() < 1e-9);
            assert!(row.mean_log_ratio.abs() < 1e-9);
        }
    }
}
