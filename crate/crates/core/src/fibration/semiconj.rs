//! The semiconjugacy to the base automorphism as an explicit series.
//!
//! The base coordinates of `g(p)` equal `A_2` applied to those of `p` plus
//! `F(p) · e_u`, where `e_u` is the unstable eigenvector and `F` is the scalar
//! [`SkewSystem::base_forcing`]. Telescoping gives
//!
//! ```text
//! π(p) = drop_z(p) + c(p) · e_u,   c(p) = Σ_{n ≥ 0} λ^{-(n+1)} F(gⁿ p)
//! ```
//!
//! which satisfies `π ∘ g = A_2 ∘ π` term by term. The series converges
//! geometrically with ratio `1/λ ≈ 0.382`, and `|c| ≤ 2a / (λ - 1)`.

use super::root::illinois;
use crate::torus::{SkewSystem, SplitPoint, TorusPoint2, TorusPoint3, UNSTABLE_DIRECTION, UNSTABLE_EIGENVALUE};

/// Depth at which the truncation error `λ^{-depth} · 2a/(λ-1)` is below round-off.
pub const FULL_DEPTH: usize = 40;

/// Partial sum of `c(p)` over the first `depth` forward iterates, together
/// with the iterate `g^depth(p)` needed to append a tail.
pub fn unstable_correction(s: &SkewSystem, p: TorusPoint3, depth: usize) -> (f64, TorusPoint3) {
    let mut q = p;
    let mut weight = 1.0;
    let mut sum = 0.0;
    for _ in 0..depth {
        q = s.apply(q);
        weight /= UNSTABLE_EIGENVALUE;
        sum += weight * s.base_forcing(q.z());
    }
    (sum, q)
}

/// `π(p)` from the series alone, truncated at [`FULL_DEPTH`].
pub fn series_projection(s: &SkewSystem, p: TorusPoint3) -> TorusPoint2 {
    let (c, _) = unstable_correction(s, p, FULL_DEPTH);
    p.drop_z().translate([c * UNSTABLE_DIRECTION[0], c * UNSTABLE_DIRECTION[1]])
}

/// Bound on `|c|`, used to bracket leaf offsets.
pub fn correction_bound(s: &SkewSystem) -> f64 {
    2.0 * s.a() / (UNSTABLE_EIGENVALUE - 1.0)
}

/// Offset `t` along `e_u` such that `(base + t · e_u, z)` lies on the leaf over `base`.
///
/// Solves `t + c(base + t e_u, z) = 0`. Inside the regime where leaves are
/// graphs over `z` the left side is increasing in `t`, because each leaf
/// crosses every horizontal slice once. Outside it the root returned is one of
/// several crossings.
pub fn leaf_offset(s: &SkewSystem, base: TorusPoint2, z: f64) -> f64 {
    if s.a() == 0.0 {
        return 0.0;
    }
    let g = |t: f64| {
        let p = SplitPoint::new(base, t, z).point();
        t + unstable_correction(s, p, FULL_DEPTH).0
    };
    let r = correction_bound(s) * 1.01 + 1e-12;
    illinois(g, -r, r, 1e-15)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::torus::apply_a2;
    use rand::Rng;

    #[test]
    fn linear_case_is_drop_z() {
        let s = SkewSystem::new(0.0, 0.3, 2).unwrap();
        let p = TorusPoint3::new(0.3, 0.7, 0.1);
        assert_eq!(series_projection(&s, p), p.drop_z());
        assert_eq!(leaf_offset(&s, p.drop_z(), 0.4), 0.0);
    }

    #[test]
    fn series_is_equivariant() {
        let s = SkewSystem::new(0.05, 0.05, 1).unwrap();
        let mut rng = stream(1, "equiv");
        for _ in 0..200 {
            let p = TorusPoint3::new(rng.gen(), rng.gen(), rng.gen());
            let lhs = series_projection(&s, s.apply(p));
            let rhs = apply_a2(series_projection(&s, p));
            assert!(lhs.distance(&rhs) < 1e-12);
        }
    }

    #[test]
    fn leaf_offset_points_project_to_their_base() {
        let s = SkewSystem::new(0.005, 0.005, 2).unwrap();
        let mut rng = stream(2, "leaf");
        for _ in 0..50 {
            let base = TorusPoint2::new(rng.gen(), rng.gen());
            let z: f64 = rng.gen();
            let t = leaf_offset(&s, base, z);
            assert!(t.abs() <= correction_bound(&s));
            let p = SplitPoint::new(base, t, z).point();
            assert!(series_projection(&s, p).distance(&base) < 1e-12);
        }
    }
}
