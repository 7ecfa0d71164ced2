//! Empirical conditional measures of volume along center leaves.
//!
//! Conditionals are sampled by transporting an equidistributed ensemble along
//! one leaf. Since `g_* μ_x = μ_{A_2 x}`, the ensemble pulled back `n` times by
//! `g⁻¹` samples the conditional on the leaf it lands on, up to an error that
//! decays at the rate of the fiber exponent of `g⁻¹`.

pub mod atoms;
pub mod covering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibration::root::illinois;
use crate::fibration::semiconj::{leaf_offset, unstable_correction, FULL_DEPTH};
use crate::fibration::{FibrationModel, LeafChart};
use crate::lyapunov::Direction;
use crate::rng::{indexed_stream, stream};
use crate::torus::{SkewSystem, SplitPoint, TorusPoint2};

pub use atoms::{detect_atoms, single_linkage, symmetry_floor_check, AtomReport, Cluster};
pub use covering::{covering_functional, min_cover_length};

/// Fibers with fewer samples are excluded from verdicts.
pub const SPARSE_THRESHOLD: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub fibers: usize,
    pub points_per_fiber: usize,
    /// Total number of map evaluations, split evenly over all points.
    pub orbit_budget: u64,
    /// Forward runs re-project onto the leaf after this many steps.
    pub snap_interval: usize,
    pub histogram_bins: usize,
    pub delta: f64,
    /// Resolution of the grid used to label fibers that are not on model cells.
    pub label_cells: usize,
    /// Chooses the starting leaves.
    pub seed: u64,
    /// Chooses the jitter of points along each starting leaf.
    pub sampling_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            fibers: 32,
            points_per_fiber: 1008,
            orbit_budget: 10_000_000,
            snap_interval: 16,
            histogram_bins: 128,
            delta: 10.0 / 64.0,
            label_cells: 64,
            seed: 0,
            sampling_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fibers == 0 {
            return Err(Error::invalid("fibers", "must be at least 1"));
        }
        if self.points_per_fiber == 0 {
            return Err(Error::invalid("points_per_fiber", "must be at least 1"));
        }
        if self.orbit_budget == 0 {
            return Err(Error::invalid("orbit_budget", "must be at least 1"));
        }
        if self.snap_interval == 0 {
            return Err(Error::invalid("snap_interval", "must be at least 1"));
        }
        if self.histogram_bins == 0 {
            return Err(Error::invalid("histogram_bins", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::invalid("delta", "must lie in (0, 0.5)"));
        }
        if self.label_cells == 0 {
            return Err(Error::invalid("label_cells", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of map applications per point.
    pub fn steps(&self) -> usize {
        let per = self.orbit_budget / (self.fibers as u64 * self.points_per_fiber as u64);
        per.max(1) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberHistogram {
    pub base_cell: (usize, usize),
    pub base_point: [f64; 2],
    /// Leaf coordinates in `[0, 1)`, sorted.
    pub samples: Vec<f64>,
    pub histogram: Vec<u64>,
    /// Single-linkage clusters at scale `delta` whose radius is at most `delta`.
    pub clusters: Vec<Cluster>,
    pub sparse: bool,
}

impl FiberHistogram {
    fn new(base_cell: (usize, usize), base: TorusPoint2, mut samples: Vec<f64>, bins: usize, delta: f64) -> Self {
        samples.sort_by(f64::total_cmp);
        let mut histogram = vec![0u64; bins];
        for &x in &samples {
            let b = ((x * bins as f64) as usize).min(bins - 1);
            histogram[b] += 1;
        }
        let clusters = single_linkage(&samples, delta)
            .into_iter()
            .filter(|c| c.radius <= delta)
            .collect();
        Self {
            base_cell,
            base_point: base.coords(),
            sparse: samples.len() < SPARSE_THRESHOLD,
            samples,
            histogram,
            clusters,
        }
    }

    /// Largest single-bin mass.
    pub fn max_bin_mass(&self) -> f64 {
        let n = self.samples.len().max(1) as f64;
        self.histogram.iter().copied().max().unwrap_or(0) as f64 / n
    }

    /// Largest cluster weight.
    pub fn max_cluster_weight(&self) -> f64 {
        self.clusters.iter().map(|c| c.weight).fold(0.0, f64::max)
    }
}

fn label(base: TorusPoint2, cells: usize) -> (usize, usize) {
    let n = cells as f64;
    (
        ((base.x() * n) as usize).min(cells - 1),
        ((base.y() * n) as usize).min(cells - 1),
    )
}

/// Starting leaf of fiber `f`: a random model cell, or a random base point.
fn starting_base(m: Option<&FibrationModel>, cfg: &EnsembleConfig) -> Vec<(TorusPoint2, Option<(usize, usize)>)> {
    let mut rng = stream(cfg.seed, "ensemble-bases");
    (0..cfg.fibers)
        .map(|_| match m {
            Some(m) => {
                let n = m.base_resolution();
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                (m.base_point(i, j), Some((i, j)))
            }
            None => (TorusPoint2::new(rng.gen(), rng.gen()), None),
        })
        .collect()
}

/// Pulls the vertical circle over a base point back along `g⁻¹`, or pushes
/// the leaf over it forward along `g`, and records leaf coordinates of the result.
///
/// With a model the fibers start on grid cells and coordinates are normalized
/// arclength on the model leaf. Without one they are heights `z`, which `ρ_k`
/// shifts by exactly `1/k` whether or not the leaf is a graph over `z`.
pub fn accumulate_fibers(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    cfg: &EnsembleConfig,
    direction: Direction,
) -> Result<Vec<FiberHistogram>> {
    cfg.validate()?;
    if let Some(m) = m {
        m.ensure_converged()?;
    }
    let steps = cfg.steps();
    let starts = starting_base(m, cfg);
    starts
        .into_par_iter()
        .enumerate()
        .map(|(f, (base, cell))| {
            let mut rng = indexed_stream(cfg.sampling_seed, "ensemble-jitter", f as u64);
            let shift: f64 = rng.gen();
            let count = cfg.points_per_fiber;
            let heights: Vec<f64> = (0..count).map(|i| (i as f64 + shift) / count as f64).collect();
            let (points, final_cell) = match direction {
                Direction::Backward => pull_back(s, m, base, cell, &heights, steps),
                Direction::Forward => push_forward(s, m, base, cell, &heights, steps, cfg.snap_interval),
            };
            let final_base = points[0].base;
            let coords: Vec<f64> = match (m, final_cell) {
                (Some(m), Some((i, j))) if s.a() != 0.0 => {
                    let chart = LeafChart::from_model(m, i, j);
                    points.iter().map(|p| chart.coordinate(p.z)).collect()
                }
                _ => points.iter().map(|p| p.z).collect(),
            };
            let cell = final_cell.unwrap_or_else(|| label(final_base, cfg.label_cells));
            let h = FiberHistogram::new(cell, final_base, coords, cfg.histogram_bins, cfg.delta);
            if h.samples.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericalOverflow { iteration: steps });
            }
            Ok(h)
        })
        .collect()
}

fn pull_back(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    base: TorusPoint2,
    cell: Option<(usize, usize)>,
    heights: &[f64],
    steps: usize,
) -> (Vec<SplitPoint>, Option<(usize, usize)>) {
    let mut pts: Vec<SplitPoint> = heights
        .iter()
        .map(|&z| {
            let offset = match (m, cell) {
                (Some(m), Some((i, j))) => m.offsets(i, j, z).0,
                _ => 0.0,
            };
            SplitPoint::new(base, offset, z)
        })
        .collect();
    for p in pts.iter_mut() {
        for _ in 0..steps {
            *p = p.backward(s);
        }
    }
    let final_cell = match (m, cell) {
        (Some(m), Some(mut c)) => {
            for _ in 0..steps {
                c = m.preimage_cell(c.0, c.1);
            }
            Some(c)
        }
        _ => None,
    };
    (pts, final_cell)
}

fn push_forward(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    base: TorusPoint2,
    cell: Option<(usize, usize)>,
    heights: &[f64],
    steps: usize,
    snap_interval: usize,
) -> (Vec<SplitPoint>, Option<(usize, usize)>) {
    let mut pts: Vec<SplitPoint> = heights
        .iter()
        .map(|&z| SplitPoint::new(base, leaf_offset(s, base, z), z))
        .collect();
    for p in pts.iter_mut() {
        let mut done = 0;
        while done < steps {
            let burst = snap_interval.min(steps - done);
            for _ in 0..burst {
                *p = p.forward(s);
            }
            done += burst;
            *p = snap_to_leaf(s, *p);
        }
    }
    let final_cell = match (m, cell) {
        (Some(m), Some(mut c)) => {
            for _ in 0..steps {
                c = m.image_cell(c.0, c.1);
            }
            Some(c)
        }
        _ => None,
    };
    (pts, final_cell)
}

/// Moves a point that drifted off the leaf over its base back onto it.
///
/// The defect `t + c(base + t e_u, z)` is the signed distance along `e_u`
/// between the point's own leaf and the target leaf. It is only Hölder in `t`,
/// so the nearest crossing is bracketed and refined instead of found by Newton.
fn snap_to_leaf(s: &SkewSystem, p: SplitPoint) -> SplitPoint {
    if s.a() == 0.0 {
        return SplitPoint { offset: 0.0, ..p };
    }
    let defect = |t: f64| {
        let q = SplitPoint::new(p.base, t, p.z).point();
        t + unstable_correction(s, q, FULL_DEPTH).0
    };
    let g0 = defect(p.offset);
    if g0 == 0.0 {
        return p;
    }
    let mut r = (4.0 * g0.abs()).max(1e-13);
    for _ in 0..60 {
        let (lo, hi) = (p.offset - r, p.offset + r);
        let (glo, ghi) = (defect(lo), defect(hi));
        if glo.signum() != g0.signum() {
            return SplitPoint { offset: illinois(defect, lo, p.offset, 1e-15), ..p };
        }
        if ghi.signum() != g0.signum() {
            return SplitPoint { offset: illinois(defect, p.offset, hi, 1e-15), ..p };
        }
        r *= 2.0;
    }
    p
}

/// The covering statistic of one tracked fiber across an orbit-length schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringStat {
    pub fiber: usize,
    pub scale_schedule: Vec<u64>,
    pub m_hat: Vec<f64>,
    #[serde(rename = "N")]
    pub n_arcs: usize,
}

impl CoveringStat {
    /// Final value below a tenth of the initial one.
    pub fn decays(&self) -> bool {
        match (self.m_hat.first(), self.m_hat.last()) {
            (Some(&a), Some(&b)) => b < 0.1 * a,
            _ => false,
        }
    }

    /// Ratio between the largest and smallest value over the schedule.
    pub fn variation(&self) -> f64 {
        let hi = self.m_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = self.m_hat.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// Covering statistic of every fiber at each orbit budget of the schedule.
///
/// The same starting leaves and jitter are used at each budget, so fiber `f`
/// is the same tracked ensemble run for longer.
pub fn covering_decay(
    s: &SkewSystem,
    m: Option<&FibrationModel>,
    cfg: &EnsembleConfig,
    n_arcs: usize,
    schedule: &[u64],
) -> Result<Vec<CoveringStat>> {
    if schedule.is_empty() {
        return Err(Error::invalid("schedule", "must not be empty"));
    }
    let mut stats: Vec<CoveringStat> = (0..cfg.fibers)
        .map(|f| CoveringStat {
            fiber: f,
            scale_schedule: schedule.to_vec(),
            m_hat: Vec::with_capacity(schedule.len()),
            n_arcs,
        })
        .collect();
    for &budget in schedule {
        let run = EnsembleConfig {
            orbit_budget: budget,
            ..cfg.clone()
        };
        let fibers = accumulate_fibers(s, m, &run, Direction::Backward)?;
        let values: Vec<f64> = fibers
            .par_iter()
            .map(|h| covering_functional(&h.samples, n_arcs))
            .collect::<Result<_>>()?;
        for (stat, v) in stats.iter_mut().zip(values) {
            stat.m_hat.push(v);
        }
    }
    Ok(stats)
}
