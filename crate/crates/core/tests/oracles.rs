use rand::Rng;
use skewlab::disintegration::{accumulate_fibers, detect_atoms, single_linkage, symmetry_floor_check, EnsembleConfig};
use skewlab::kifer::{atomic_impossibility_check, estimate_stationary, ulam_stationary, Branch, RandomCircleSystem};
use skewlab::lyapunov::{contraction_diagnostic, leaf_pairs_by_pullback, Direction};
use skewlab::rng::stream;
use skewlab::torus::{circle_distance, wrap, SkewSystem};

fn ensemble(budget_per_point: u64) -> EnsembleConfig {
    EnsembleConfig {
        fibers: 6,
        points_per_fiber: 1008,
        orbit_budget: 6 * 1008 * budget_per_point,
        ..EnsembleConfig::default()
    }
}

#[test]
fn shifted_samples_recluster_onto_the_same_atoms() {
    let s = SkewSystem::new(0.03, 0.03, 3).unwrap();
    let cfg = ensemble(200);
    for h in accumulate_fibers(&s, None, &cfg, Direction::Backward).unwrap() {
        let rep = detect_atoms(&h.samples, cfg.delta, 3).unwrap();
        assert_eq!(rep.k_detected, 3);
        assert!(rep.max_weight_deviation <= 0.03);
        assert!(symmetry_floor_check(3, &rep, &h.samples, 1e-3));
        let shifted: Vec<f64> = h.samples.iter().map(|x| wrap(x + 1.0 / 3.0)).collect();
        let moved = single_linkage(&shifted, cfg.delta);
        for c in &rep.centers {
            assert!(moved.iter().any(|m| circle_distance(m.center, *c) < 1e-9));
        }
    }
}

#[test]
fn independent_jitter_gives_the_same_atoms() {
    let s = SkewSystem::new(0.03, 0.03, 2).unwrap();
    let a = accumulate_fibers(&s, None, &ensemble(200), Direction::Backward).unwrap();
    let other = EnsembleConfig { sampling_seed: 99, ..ensemble(200) };
    let b = accumulate_fibers(&s, None, &other, Direction::Backward).unwrap();
    let delta = other.delta;
    let mut agree = 0;
    for (x, y) in a.iter().zip(&b) {
        let (rx, ry) = (detect_atoms(&x.samples, delta, 2).unwrap(), detect_atoms(&y.samples, delta, 2).unwrap());
        if rx.centers.iter().all(|c| ry.centers.iter().any(|d| circle_distance(*c, *d) < delta)) {
            agree += 1;
        }
    }
    assert!(agree * 10 >= a.len() * 9);
}

#[test]
fn concentration_agrees_with_two_point_contraction() {
    let s = SkewSystem::new(0.05, 0.05, 1).unwrap();
    let mut rng = stream(5, "pairs");
    let pairs = leaf_pairs_by_pullback(&s, 200, 0.01, 30, &mut rng);
    let rep = contraction_diagnostic(&s, &pairs, 20);
    assert!(rep.rate < 1.0, "{:?}", rep);
    let hs = accumulate_fibers(&s, None, &ensemble(300), Direction::Backward).unwrap();
    let concentrated = hs.iter().filter(|h| h.max_bin_mass() > 0.5).count();
    assert!(concentrated * 2 > hs.len());
}

#[test]
fn branch_frequencies_match_p() {
    let sys = RandomCircleSystem::new(0.9, 0.1, 0.5).unwrap();
    let mut rng = stream(3, "branches");
    let n = 1_000_000;
    let mut x: f64 = rng.gen();
    let mut hits = 0usize;
    for _ in 0..n {
        let (next, b) = sys.step(x, &mut rng);
        if b == Branch::F {
            hits += 1;
        }
        x = next;
    }
    let sigma = (n as f64 * 0.9 * 0.1).sqrt();
    assert!((hits as f64 - 0.9 * n as f64).abs() < 3.0 * sigma);
}

#[test]
fn single_atom_pullback_count() {
    let sys = RandomCircleSystem::new(0.9, 0.1, 0.5).unwrap();
    for w in [0.5, 0.1, 0.01, 0.3] {
        let r = atomic_impossibility_check(&sys, &[(0.2, w)]).unwrap();
        let expected = ((1.0 / w).ln() / (1.0 / 0.9f64).ln()).ceil() as u64;
        assert_eq!(r.atoms[0].pullbacks_single, expected);
        let orbit = &r.atoms[0].backward_orbit;
        for (i, a) in orbit.iter().enumerate() {
            for b in &orbit[i + 1..] {
                assert!(circle_distance(*a, *b) > 1e-9);
            }
        }
    }
    assert!(atomic_impossibility_check(&sys, &[]).unwrap().contradiction);
}

#[test]
fn monte_carlo_and_ulam_agree() {
    let sys = RandomCircleSystem::new(0.9, 0.1, 0.5).unwrap();
    let mc = estimate_stationary(&sys, 2_000_000, 1_000, 256, 11).unwrap();
    let ulam = ulam_stationary(&sys, 256).unwrap();
    let tv = 0.5 * mc.density_histogram.iter().zip(&ulam).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.05, "{tv}");
}
