//! Points on the 2- and 3-torus and the volume-preserving maps built from the
//! cat map `A_2 = [[2, 1], [1, 1]]`.
//!
//! The composed system is `g = j_{a,k} ∘ h_b` with
//!
//! ```text
//! h_b(x, y, z)   = (2x + y, x + y, x + y + z + b sin 2πy)
//! j_{a,k}(x,y,z) = (x, y, z) + a cos(2πkz) · (1 + √5, 2, 0)
//! ```
//!
//! and `ρ_k` is the vertical translation by `1/k`. Every map commutes with
//! `ρ_k`. Coordinates are stored reduced into `[0, 1)`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

pub const SQRT5: f64 = 2.236_067_977_499_79;
/// `(1 + √5) / 2`.
pub const GOLDEN: f64 = 1.618_033_988_749_895;
/// Expanding eigenvalue of `A_2`, `(3 + √5) / 2`.
pub const UNSTABLE_EIGENVALUE: f64 = 2.618_033_988_749_895;
/// Translation direction of `j_{a,k}` in the `(x, y)` plane.
pub const SHEAR_DIRECTION: [f64; 2] = [1.0 + SQRT5, 2.0];
/// Unstable eigenvector of `A_2`. `SHEAR_DIRECTION = 2 · UNSTABLE_DIRECTION`.
pub const UNSTABLE_DIRECTION: [f64; 2] = [GOLDEN, 1.0];
/// Stable eigenvector of `A_2`, orthogonal to [`UNSTABLE_DIRECTION`].
pub const STABLE_DIRECTION: [f64; 2] = [1.0, -GOLDEN];
/// Squared length shared by both eigenvectors above.
const EIGEN_NORM_SQ: f64 = GOLDEN * GOLDEN + 1.0;

/// Reduce a real number into `[0, 1)`.
#[inline]
pub fn wrap(v: f64) -> f64 {
    let r = v - v.floor();
    // v - floor(v) rounds to 1.0 for tiny negative v
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed shortest displacement from `from` to `to` on the unit circle, in `[-0.5, 0.5)`.
#[inline]
pub fn circle_delta(from: f64, to: f64) -> f64 {
    let d = to - from;
    d - (d + 0.5).floor()
}

#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    circle_delta(a, b).abs()
}

/// Coordinates of a planar vector in the `(unstable, stable)` eigenbasis of `A_2`.
#[inline]
pub fn eigen_coordinates(v: [f64; 2]) -> (f64, f64) {
    let u = (v[0] * UNSTABLE_DIRECTION[0] + v[1] * UNSTABLE_DIRECTION[1]) / EIGEN_NORM_SQ;
    let s = (v[0] * STABLE_DIRECTION[0] + v[1] * STABLE_DIRECTION[1]) / EIGEN_NORM_SQ;
    (u, s)
}

#[inline]
pub fn from_eigen_coordinates(u: f64, s: f64) -> [f64; 2] {
    [
        u * UNSTABLE_DIRECTION[0] + s * STABLE_DIRECTION[0],
        u * UNSTABLE_DIRECTION[1] + s * STABLE_DIRECTION[1],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint2 {
    x: f64,
    y: f64,
}

impl TorusPoint2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap(x),
            y: wrap(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Sup-norm toroidal distance.
    pub fn distance(&self, other: &Self) -> f64 {
        circle_distance(self.x, other.x).max(circle_distance(self.y, other.y))
    }

    /// Shortest lift of `other - self`.
    pub fn delta_to(&self, other: &Self) -> [f64; 2] {
        [circle_delta(self.x, other.x), circle_delta(self.y, other.y)]
    }

    pub fn translate(&self, v: [f64; 2]) -> Self {
        Self::new(self.x + v[0], self.y + v[1])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint3 {
    x: f64,
    y: f64,
    z: f64,
}

impl TorusPoint3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self {
            x: wrap(x),
            y: wrap(y),
            z: wrap(z),
        }
    }

    pub fn from_base(base: TorusPoint2, z: f64) -> Self {
        Self::new(base.x, base.y, z)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn drop_z(&self) -> TorusPoint2 {
        TorusPoint2 {
            x: self.x,
            y: self.y,
        }
    }

    /// Sup-norm toroidal distance.
    pub fn distance(&self, other: &Self) -> f64 {
        circle_distance(self.x, other.x)
            .max(circle_distance(self.y, other.y))
            .max(circle_distance(self.z, other.z))
    }

    /// Euclidean length of the shortest lift of `other - self`.
    pub fn euclidean_distance(&self, other: &Self) -> f64 {
        let dx = circle_delta(self.x, other.x);
        let dy = circle_delta(self.y, other.y);
        let dz = circle_delta(self.z, other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

pub fn apply_a2(p: TorusPoint2) -> TorusPoint2 {
    TorusPoint2::new(2.0 * p.x + p.y, p.x + p.y)
}

pub fn apply_a2_inverse(p: TorusPoint2) -> TorusPoint2 {
    TorusPoint2::new(p.x - p.y, -p.x + 2.0 * p.y)
}

/// `A_3 = A_2 ⊕ 1`.
pub fn apply_a3(p: TorusPoint3) -> TorusPoint3 {
    TorusPoint3::new(2.0 * p.x + p.y, p.x + p.y, p.z)
}

pub fn apply_h(b: f64, p: TorusPoint3) -> TorusPoint3 {
    TorusPoint3::new(
        2.0 * p.x + p.y,
        p.x + p.y,
        p.x + p.y + p.z + b * (TAU * p.y).sin(),
    )
}

pub fn inverse_h(b: f64, p: TorusPoint3) -> TorusPoint3 {
    let y = -p.x + 2.0 * p.y;
    TorusPoint3::new(p.x - p.y, y, p.z - p.y - b * (TAU * y).sin())
}

/// Amplitude `a cos(2πkz)` of the `j_{a,k}` translation at height `z`.
#[inline]
fn j_amplitude(a: f64, k: u32, z: f64) -> f64 {
    a * (TAU * f64::from(k) * z).cos()
}

pub fn apply_j(a: f64, k: u32, p: TorusPoint3) -> TorusPoint3 {
    let c = j_amplitude(a, k, p.z);
    TorusPoint3::new(
        p.x + c * SHEAR_DIRECTION[0],
        p.y + c * SHEAR_DIRECTION[1],
        p.z,
    )
}

pub fn inverse_j(a: f64, k: u32, p: TorusPoint3) -> TorusPoint3 {
    let c = j_amplitude(a, k, p.z);
    TorusPoint3::new(
        p.x - c * SHEAR_DIRECTION[0],
        p.y - c * SHEAR_DIRECTION[1],
        p.z,
    )
}

pub fn apply_rho(k: u32, p: TorusPoint3) -> TorusPoint3 {
    TorusPoint3::new(p.x, p.y, p.z + 1.0 / f64::from(k))
}

/// Derivative of one of the maps at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian3(pub Matrix3<f64>);

impl Jacobian3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn compose(&self, inner: &Jacobian3) -> Jacobian3 {
        Jacobian3(self.0 * inner.0)
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[(0, 0)] * v[0] + m[(0, 1)] * v[1] + m[(0, 2)] * v[2],
            m[(1, 0)] * v[0] + m[(1, 1)] * v[1] + m[(1, 2)] * v[2],
            m[(2, 0)] * v[0] + m[(2, 1)] * v[1] + m[(2, 2)] * v[2],
        ]
    }

    /// Solves `J w = v`. Jacobians here are unimodular, so this never degenerates.
    pub fn solve(&self, v: [f64; 3]) -> [f64; 3] {
        let inv = self
            .0
            .try_inverse()
            .expect("unimodular Jacobian is invertible");
        Jacobian3(inv).apply(v)
    }
}

pub fn jacobian_h(b: f64, p: TorusPoint3) -> Jacobian3 {
    let c = 1.0 + TAU * b * (TAU * p.y).cos();
    Jacobian3(Matrix3::new(
        2.0, 1.0, 0.0, //
        1.0, 1.0, 0.0, //
        1.0, c, 1.0,
    ))
}

pub fn jacobian_j(a: f64, k: u32, p: TorusPoint3) -> Jacobian3 {
    let kf = f64::from(k);
    let s = -TAU * a * kf * (TAU * kf * p.z).sin();
    Jacobian3(Matrix3::new(
        1.0,
        0.0,
        s * SHEAR_DIRECTION[0],
        0.0,
        1.0,
        s * SHEAR_DIRECTION[1],
        0.0,
        0.0,
        1.0,
    ))
}

/// Parameters `(a, b, k)` of `g = j_{a,k} ∘ h_b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewSystem {
    a: f64,
    b: f64,
    k: u32,
}

impl Default for SkewSystem {
    fn default() -> Self {
        Self {
            a: 0.05,
            b: 0.05,
            k: 1,
        }
    }
}

impl SkewSystem {
    pub fn new(a: f64, b: f64, k: u32) -> Result<Self> {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::invalid("a", format!("must be finite and >= 0, got {a}")));
        }
        if !b.is_finite() || b < 0.0 {
            return Err(Error::invalid("b", format!("must be finite and >= 0, got {b}")));
        }
        if k == 0 {
            return Err(Error::invalid("k", "must be >= 1"));
        }
        Ok(Self { a, b, k })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn apply(&self, p: TorusPoint3) -> TorusPoint3 {
        apply_j(self.a, self.k, apply_h(self.b, p))
    }

    pub fn apply_inverse(&self, p: TorusPoint3) -> TorusPoint3 {
        inverse_h(self.b, inverse_j(self.a, self.k, p))
    }

    pub fn rho(&self, p: TorusPoint3) -> TorusPoint3 {
        apply_rho(self.k, p)
    }

    pub fn jacobian(&self, p: TorusPoint3) -> Jacobian3 {
        let hp = apply_h(self.b, p);
        jacobian_j(self.a, self.k, hp).compose(&jacobian_h(self.b, p))
    }

    /// Derivative of `g⁻¹` at `q`, i.e. the inverse of `Dg` at `g⁻¹(q)`.
    pub fn jacobian_inverse(&self, q: TorusPoint3) -> Jacobian3 {
        let p = self.apply_inverse(q);
        let inv = self
            .jacobian(p)
            .0
            .try_inverse()
            .expect("unimodular Jacobian is invertible");
        Jacobian3(inv)
    }

    /// Coefficient along [`UNSTABLE_DIRECTION`] by which the base coordinates of
    /// `g(p)` differ from `A_2` applied to those of `p`, given the height `z`
    /// of `g(p)`. The `(x, y)` part of `h_b` is exactly `A_2`, so this is the
    /// whole deviation of `g` from the base automorphism.
    #[inline]
    pub fn base_forcing(&self, z_image: f64) -> f64 {
        2.0 * j_amplitude(self.a, self.k, z_image)
    }

    /// Jacobian of `g^n` at `p` as the ordered product of one-step Jacobians.
    pub fn jacobian_iterate(&self, p: TorusPoint3, n: usize) -> Jacobian3 {
        let mut acc = Jacobian3::identity();
        let mut q = p;
        for _ in 0..n {
            acc = self.jacobian(q).compose(&acc);
            q = self.apply(q);
        }
        acc
    }
}

/// A point of `T³` written as `base + offset · UNSTABLE_DIRECTION` at height `z`.
///
/// `g` maps this form to itself with the base moving by `A_2` exactly, which
/// keeps ensembles of points that share a base on one common center leaf
/// without round-off drift along the stable direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPoint {
    pub base: TorusPoint2,
    pub offset: f64,
    pub z: f64,
}

impl SplitPoint {
    pub fn new(base: TorusPoint2, offset: f64, z: f64) -> Self {
        Self {
            base,
            offset,
            z: wrap(z),
        }
    }

    pub fn point(&self) -> TorusPoint3 {
        TorusPoint3::new(
            self.base.x + self.offset * UNSTABLE_DIRECTION[0],
            self.base.y + self.offset * UNSTABLE_DIRECTION[1],
            self.z,
        )
    }

    /// Image under `g`. The offset is multiplied by the unstable eigenvalue.
    pub fn forward(&self, s: &SkewSystem) -> Self {
        let p = self.point();
        let z = p.x + p.y + p.z + s.b * (TAU * p.y).sin();
        Self {
            base: apply_a2(self.base),
            offset: UNSTABLE_EIGENVALUE * self.offset + s.base_forcing(z),
            z: wrap(z),
        }
    }

    /// Image under `g⁻¹`. The offset is divided by the unstable eigenvalue.
    pub fn backward(&self, s: &SkewSystem) -> Self {
        let shifted = self.offset - s.base_forcing(self.z);
        let xp = self.base.x + shifted * UNSTABLE_DIRECTION[0];
        let yp = self.base.y + shifted * UNSTABLE_DIRECTION[1];
        let y_new = -xp + 2.0 * yp;
        Self {
            base: apply_a2_inverse(self.base),
            offset: shifted / UNSTABLE_EIGENVALUE,
            z: wrap(self.z - yp - s.b * (TAU * y_new).sin()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_point3(rng: &mut impl Rng) -> TorusPoint3 {
        TorusPoint3::new(rng.gen(), rng.gen(), rng.gen())
    }

    #[test]
    fn constants_are_consistent() {
        assert!((SQRT5 * SQRT5 - 5.0).abs() < 1e-15);
        assert!((GOLDEN - (1.0 + SQRT5) / 2.0).abs() < 1e-16);
        assert!((UNSTABLE_EIGENVALUE - GOLDEN * GOLDEN).abs() < 1e-15);
        // λ² − 3λ + 1 = 0
        let l = UNSTABLE_EIGENVALUE;
        assert!((l * l - 3.0 * l + 1.0).abs() < 1e-14);
        assert!((SHEAR_DIRECTION[0] - 2.0 * UNSTABLE_DIRECTION[0]).abs() < 1e-15);
    }

    #[test]
    fn wrap_handles_negative_and_boundary() {
        assert_eq!(wrap(1.0), 0.0);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(wrap(-1e-300), 0.0);
        assert!(wrap(-1e-17) < 1.0);
        assert!((circle_delta(0.9, 0.1) - 0.2).abs() < 1e-15);
        assert!((circle_delta(0.1, 0.9) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn a2_examples() {
        assert_eq!(apply_a2(TorusPoint2::new(0.0, 0.0)), TorusPoint2::new(0.0, 0.0));
        let q = apply_a2(TorusPoint2::new(0.25, 0.5));
        assert!(q.distance(&TorusPoint2::new(0.0, 0.75)) < 1e-15);
        let mut rng = stream(1, "a2");
        for _ in 0..1000 {
            let p = TorusPoint2::new(rng.gen(), rng.gen());
            assert!(apply_a2_inverse(apply_a2(p)).distance(&p) < 1e-14);
        }
    }

    #[test]
    fn h_examples() {
        let o = TorusPoint3::new(0.0, 0.0, 0.0);
        assert_eq!(apply_h(0.37, o), o);
        let q = apply_h(0.1, TorusPoint3::new(0.25, 0.0, 0.0));
        assert!(q.distance(&TorusPoint3::new(0.5, 0.25, 0.25)) < 1e-15);
    }

    #[test]
    fn j_examples() {
        for k in 1..=4u32 {
            let p = TorusPoint3::new(0.3, 0.6, 1.0 / (4.0 * f64::from(k)));
            assert!(apply_j(0.2, k, p).distance(&p) < 1e-15);
        }
        let q = apply_j(0.1, 1, TorusPoint3::new(0.0, 0.0, 0.0));
        assert!((q.x() - 0.323_606_797_749_979).abs() < 1e-14);
        assert!((q.y() - 0.2).abs() < 1e-15);
        assert_eq!(q.z(), 0.0);
    }

    #[test]
    fn rho_examples() {
        let p = TorusPoint3::new(0.1, 0.2, 0.9);
        assert!(apply_rho(1, p).distance(&p) < 1e-15);
        assert!(apply_rho(4, p).distance(&TorusPoint3::new(0.1, 0.2, 0.15)) < 1e-15);
        let mut q = p;
        for _ in 0..3 {
            q = apply_rho(3, q);
        }
        assert!(q.distance(&p) < 1e-15);
    }

    #[test]
    fn linear_case_matches_a3_with_shear() {
        let s = SkewSystem::new(0.0, 0.0, 1).unwrap();
        let mut rng = stream(2, "linear");
        for _ in 0..100 {
            let p = random_point3(&mut rng);
            let expected = TorusPoint3::new(2.0 * p.x() + p.y(), p.x() + p.y(), p.x() + p.y() + p.z());
            assert!(s.apply(p).distance(&expected) < 1e-15);
            let j = s.jacobian(p);
            let m = Matrix3::new(2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0);
            assert_eq!(j.0, m);
        }
    }

    #[test]
    fn base_factor_of_h_is_a2() {
        let mut rng = stream(3, "base");
        for _ in 0..1000 {
            let p = random_point3(&mut rng);
            let b: f64 = rng.gen_range(0.0..0.2);
            assert!(apply_h(b, p).drop_z().distance(&apply_a2(p.drop_z())) < 1e-15);
        }
    }

    #[test]
    fn round_trips_over_parameter_grid() {
        let mut rng = stream(4, "roundtrip");
        for &a in &[0.0, 0.02, 0.05, 0.1] {
            for &b in &[0.0, 0.02, 0.05, 0.1] {
                for k in 1..=3 {
                    let s = SkewSystem::new(a, b, k).unwrap();
                    for _ in 0..1000 {
                        let p = random_point3(&mut rng);
                        assert!(s.apply_inverse(s.apply(p)).distance(&p) < 1e-12);
                        assert!(s.apply(s.apply_inverse(p)).distance(&p) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_h_closed_form_round_trip() {
        let mut rng = stream(5, "h");
        for _ in 0..1000 {
            let b: f64 = rng.gen_range(0.0..0.5);
            let p = random_point3(&mut rng);
            assert!(inverse_h(b, apply_h(b, p)).distance(&p) < 1e-13);
            let a: f64 = rng.gen_range(0.0..0.5);
            let k = rng.gen_range(1..5);
            assert!(inverse_j(a, k, apply_j(a, k, p)).distance(&p) < 1e-13);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let s = SkewSystem::new(0.05, 0.07, 2).unwrap();
        let mut rng = stream(6, "fd");
        let step = 1e-6;
        for _ in 0..100 {
            let p = random_point3(&mut rng);
            let j = s.jacobian(p);
            let base = s.apply(p);
            for col in 0..3 {
                let mut plus = p.coords();
                let mut minus = p.coords();
                plus[col] += step;
                minus[col] -= step;
                let fp = s.apply(TorusPoint3::new(plus[0], plus[1], plus[2]));
                let fm = s.apply(TorusPoint3::new(minus[0], minus[1], minus[2]));
                let (fp, fm, f0) = (fp.coords(), fm.coords(), base.coords());
                for row in 0..3 {
                    // difference the two lifts around the base image
                    let d = circle_delta(f0[row], fp[row]) - circle_delta(f0[row], fm[row]);
                    let fd = d / (2.0 * step);
                    assert!(
                        (fd - j.entry(row, col)).abs() < 1e-5,
                        "entry ({row},{col}): fd {fd} vs {}",
                        j.entry(row, col)
                    );
                }
            }
        }
    }

    #[test]
    fn jacobian_inverse_inverts() {
        let s = SkewSystem::new(0.05, 0.05, 3).unwrap();
        let mut rng = stream(7, "jinv");
        for _ in 0..100 {
            let p = random_point3(&mut rng);
            let prod = s.jacobian_inverse(s.apply(p)).compose(&s.jacobian(p));
            assert!((prod.0 - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn cocycle_identity() {
        let s = SkewSystem::default();
        let mut rng = stream(8, "cocycle");
        for _ in 0..20 {
            let p = random_point3(&mut rng);
            let n = 7;
            let whole = s.jacobian_iterate(p, n);
            let first = s.jacobian_iterate(p, 3);
            let mut q = p;
            for _ in 0..3 {
                q = s.apply(q);
            }
            let rest = s.jacobian_iterate(q, 4);
            let split = rest.compose(&first);
            let scale = whole.0.abs().max();
            assert!((whole.0 - split.0).abs().max() < 1e-12 * scale);
        }
    }

    #[test]
    fn base_forcing_is_the_whole_base_deviation() {
        let s = SkewSystem::new(0.08, 0.03, 2).unwrap();
        let mut rng = stream(9, "forcing");
        for _ in 0..1000 {
            let p = random_point3(&mut rng);
            let q = s.apply(p);
            let dev = apply_a2(p.drop_z()).delta_to(&q.drop_z());
            let f = s.base_forcing(q.z());
            assert!((dev[0] - f * UNSTABLE_DIRECTION[0]).abs() < 1e-14);
            assert!((dev[1] - f * UNSTABLE_DIRECTION[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn split_point_tracks_the_map() {
        let s = SkewSystem::new(0.05, 0.05, 2).unwrap();
        let mut rng = stream(10, "split");
        for _ in 0..500 {
            let sp = SplitPoint::new(
                TorusPoint2::new(rng.gen(), rng.gen()),
                rng.gen_range(-0.1..0.1),
                rng.gen(),
            );
            assert!(sp.forward(&s).point().distance(&s.apply(sp.point())) < 1e-14);
            assert!(sp.backward(&s).point().distance(&s.apply_inverse(sp.point())) < 1e-14);
        }
    }

    #[test]
    fn maps_commute_with_rho() {
        let mut rng = stream(12, "rho");
        for k in 1..=3u32 {
            let s = SkewSystem::new(0.05, 0.1, k).unwrap();
            for _ in 0..1000 {
                let p = random_point3(&mut rng);
                let r = |q| apply_rho(k, q);
                assert!(s.apply(r(p)).distance(&r(s.apply(p))) < 1e-12);
                assert!(apply_h(0.1, r(p)).distance(&r(apply_h(0.1, p))) < 1e-12);
                assert!(apply_j(0.05, k, r(p)).distance(&r(apply_j(0.05, k, p))) < 1e-12);
                assert!((s.jacobian(p).determinant() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SkewSystem::new(-0.1, 0.0, 1).is_err());
        assert!(SkewSystem::new(0.0, f64::NAN, 1).is_err());
        assert!(SkewSystem::new(0.0, 0.0, 0).is_err());
    }

    #[test]
    fn lebesgue_box_counting_is_uniform() {
        // chi-square over a 16³ grid of 10⁶ pushed-forward uniform points
        let s = SkewSystem::new(0.1, 0.1, 2).unwrap();
        let mut rng = stream(11, "boxes");
        let bins = 16usize;
        let n = 1_000_000usize;
        let mut counts = vec![0u32; bins * bins * bins];
        for _ in 0..n {
            let q = s.apply(random_point3(&mut rng));
            let idx = |v: f64| ((v * bins as f64) as usize).min(bins - 1);
            counts[(idx(q.x()) * bins + idx(q.y())) * bins + idx(q.z())] += 1;
        }
        let expected = n as f64 / counts.len() as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (f64::from(c) - expected).powi(2) / expected)
            .sum();
        let dof = (counts.len() - 1) as f64;
        assert!((chi2 - dof).abs() < 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2}");
    }
}
