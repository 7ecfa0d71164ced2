use proptest::prelude::*;
use skewlab::disintegration::{min_cover_length, single_linkage};
use skewlab::fibration::semiconj::series_projection;
use skewlab::torus::{apply_a2, apply_rho, SkewSystem, SplitPoint, TorusPoint2, TorusPoint3};

fn system() -> impl Strategy<Value = SkewSystem> {
    (0.0..0.1f64, 0.0..0.1f64, 1u32..=4).prop_map(|(a, b, k)| SkewSystem::new(a, b, k).unwrap())
}

fn point() -> impl Strategy<Value = TorusPoint3> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y, z)| TorusPoint3::new(x, y, z))
}

/// Minimal cost of covering exactly the subset `chosen` with at most `arcs` arcs:
/// the circle minus the `arcs` largest gaps between consecutive chosen samples.
fn subset_cover_cost(chosen: &[f64], arcs: usize) -> f64 {
    if chosen.len() <= arcs {
        return 0.0;
    }
    let n = chosen.len();
    let mut gaps: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { chosen[i + 1] - chosen[i] } else { chosen[0] + 1.0 - chosen[n - 1] })
        .collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    1.0 - gaps[..arcs].iter().sum::<f64>()
}

fn brute_force_subsets(samples: &[f64], arcs: usize) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let need = n.div_ceil(2);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if (mask.count_ones() as usize) < need {
            continue;
        }
        let chosen: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| xs[i]).collect();
        best = best.min(subset_cover_cost(&chosen, arcs));
    }
    best
}

/// Every single arc from one sample to another, in either wrap position.
fn brute_force_single_arc(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let need = n.div_ceil(2);
    let mut best = f64::INFINITY;
    for start in 0..n {
        for len in 0..n {
            if len + 1 < need {
                continue;
            }
            let end = (start + len) % n;
            let mut cost = xs[end] - xs[start];
            if end < start {
                cost += 1.0;
            }
            best = best.min(cost);
        }
    }
    best
}

fn dyadic(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..1024).prop_map(|v| f64::from(v) / 1024.0), 1..=max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_round_trips(s in system(), p in point()) {
        prop_assert!(s.apply_inverse(s.apply(p)).distance(&p) < 1e-12);
        prop_assert!(s.apply(s.apply_inverse(p)).distance(&p) < 1e-12);
    }

    #[test]
    fn shift_commutes_with_the_map(s in system(), p in point()) {
        let lhs = s.apply(apply_rho(s.k(), p));
        let rhs = apply_rho(s.k(), s.apply(p));
        prop_assert!(lhs.distance(&rhs) < 1e-12);
    }

    #[test]
    fn volume_is_preserved(s in system(), p in point()) {
        prop_assert!((s.jacobian(p).determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_form_tracks_the_map(s in system(), x in 0.0..1.0f64, y in 0.0..1.0f64, t in -0.1..0.1f64, z in 0.0..1.0f64) {
        let sp = SplitPoint::new(TorusPoint2::new(x, y), t, z);
        prop_assert!(sp.forward(&s).point().distance(&s.apply(sp.point())) < 1e-12);
        prop_assert!(sp.backward(&s).point().distance(&s.apply_inverse(sp.point())) < 1e-12);
    }

    #[test]
    fn projection_semiconjugates(s in system(), p in point()) {
        let lhs = series_projection(&s, s.apply(p));
        let rhs = apply_a2(series_projection(&s, p));
        prop_assert!(lhs.distance(&rhs) < 1e-11);
    }

    #[test]
    fn covering_matches_subset_enumeration(xs in dyadic(14), arcs in 1usize..=4) {
        prop_assert_eq!(min_cover_length(&xs, arcs), brute_force_subsets(&xs, arcs));
    }

    #[test]
    fn covering_matches_single_arc_enumeration(xs in dyadic(200)) {
        prop_assert_eq!(min_cover_length(&xs, 1), brute_force_single_arc(&xs));
    }

    #[test]
    fn covering_is_monotone_in_arc_count(xs in dyadic(120), arcs in 1usize..6) {
        prop_assert!(min_cover_length(&xs, arcs + 1) <= min_cover_length(&xs, arcs));
    }

    #[test]
    fn clusters_partition_the_samples(xs in prop::collection::vec(0.0..1.0f64, 1..300), delta in 0.001..0.2f64) {
        let cl = single_linkage(&xs, delta);
        let total: f64 = cl.iter().map(|c| c.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for c in &cl {
            prop_assert!(c.radius >= 0.0 && c.radius <= 0.5);
        }
    }
}

#[test]
fn equal_spikes_are_covered_by_half_as_many_arcs() {
    let delta = 0.01;
    for k in 1..=6usize {
        let mut xs = Vec::new();
        for a in 0..k {
            let c = 0.05 + a as f64 / k as f64;
            xs.extend((0..100).map(|i| c + delta * i as f64 / 99.0));
        }
        let arcs = k.div_ceil(2);
        let v = min_cover_length(&xs, arcs);
        assert!(v <= arcs as f64 * delta + 1e-12, "k={k}: {v}");
    }
}
