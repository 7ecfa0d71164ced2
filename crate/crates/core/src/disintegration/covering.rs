//! Minimal total length of at most `N` circular arcs holding half the samples.

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;

/// Exact minimum over all choices of at most `max_arcs` arcs covering at least
/// `ceil(n / 2)` of the `n` samples on the unit circle.
///
/// Optimal arcs start and end at samples and never overlap, so an arc is a
/// run of consecutive sorted samples whose cost is the sum of the gaps inside
/// it. A dynamic program over the sorted samples tracks (covered count, runs
/// used, whether the previous sample is covered); a second pass handles the
/// run that crosses the point 0 ≡ 1.
pub fn min_cover_length(samples: &[f64], max_arcs: usize) -> f64 {
    let n = samples.len();
    if n == 0 || max_arcs == 0 {
        return if n == 0 { 0.0 } else { f64::INFINITY };
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let need = n.div_ceil(2);
    let gaps: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let wrap_gap = xs[0] + 1.0 - xs[n - 1];

    let linear = run_dp(&gaps, n, need, max_arcs, false);
    let wrapped = run_dp(&gaps, n, need, max_arcs + 1, true) + wrap_gap;
    linear.min(wrapped)
}

/// `cost[c][r][covered]` after each sample. With `wrap`, sample 0 is forced
/// to open run 1 and sample `n-1` must be covered, so the first and last runs
/// merge across the boundary and at least two runs are required.
fn run_dp(gaps: &[f64], n: usize, need: usize, max_runs: usize, wrap: bool) -> f64 {
    let runs = max_runs + 1;
    let idx = |c: usize, r: usize, f: usize| (c * runs + r) * 2 + f;
    let size = (need + 1) * runs * 2;
    let mut cur = vec![f64::INFINITY; size];
    let mut next = vec![f64::INFINITY; size];

    if !wrap {
        cur[idx(0, 0, 0)] = 0.0;
    }
    if need >= 1 && max_runs >= 1 {
        cur[idx(1, 1, 1)] = 0.0;
    }
    for &gap in gaps.iter().take(n - 1) {
        next.fill(f64::INFINITY);
        for c in 0..=need {
            for r in 0..runs {
                for f in 0..2 {
                    let v = cur[idx(c, r, f)];
                    if !v.is_finite() {
                        continue;
                    }
                    // leave the next sample uncovered
                    let slot = &mut next[idx(c, r, 0)];
                    *slot = slot.min(v);
                    if c < need {
                        if f == 1 {
                            let slot = &mut next[idx(c + 1, r, 1)];
                            *slot = slot.min(v + gap);
                        }
                        if r + 1 < runs {
                            let slot = &mut next[idx(c + 1, r + 1, 1)];
                            *slot = slot.min(v);
                        }
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut best = f64::INFINITY;
    for r in 0..runs {
        if wrap {
            if r >= 2 {
                best = best.min(cur[idx(need, r, 1)]);
            }
        } else {
            best = best.min(cur[idx(need, r, 0)]).min(cur[idx(need, r, 1)]);
        }
    }
    best
}

/// The covering statistic of one fiber.
pub fn covering_functional(samples: &[f64], max_arcs: usize) -> Result<f64> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if max_arcs == 0 {
        return Err(Error::invalid("N", "must be at least 1"));
    }
    Ok(min_cover_length(samples, max_arcs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_mass_costs_nothing() {
        let xs = vec![0.25; 150];
        for n in 1..4 {
            assert_eq!(covering_functional(&xs, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            covering_functional(&[0.1; 99], 2),
            Err(Error::InsufficientSamples { needed: 100, got: 99 })
        ));
    }

    #[test]
    fn wrap_around_arc_is_found() {
        // half the mass sits tightly around 0 ≡ 1
        let mut xs: Vec<f64> = (0..50).map(|i| i as f64 / 1024.0).collect();
        xs.extend((1..=50).map(|i| 1.0 - i as f64 / 1024.0));
        xs.extend((0..100).map(|i| 0.3 + i as f64 / 256.0));
        let v = min_cover_length(&xs, 1);
        assert_eq!(v, 99.0 / 1024.0);
    }

    #[test]
    fn uniform_samples_need_half_the_circle() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let v = min_cover_length(&xs, 1);
        assert!((v - 0.499).abs() < 1e-12);
    }
}
