//! Arclength charts on individual center leaves.

use super::semiconj::leaf_offset;
use super::spline::PeriodicSpline;
use super::{project_to_base, FibrationModel};
use crate::error::Result;
use crate::torus::{from_eigen_coordinates, SkewSystem, TorusPoint2, TorusPoint3};

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// One leaf sampled on a uniform height grid, with cumulative arclength.
#[derive(Clone, Debug)]
pub struct LeafChart {
    base_point: TorusPoint2,
    samples: Vec<(f64, [f64; 2])>,
    arclength: Vec<f64>,
    unstable: PeriodicSpline,
    stable: PeriodicSpline,
}

impl LeafChart {
    fn build(base_point: TorusPoint2, unstable: Vec<f64>, stable: Vec<f64>) -> Self {
        let n = unstable.len();
        let samples = (0..n)
            .map(|l| (l as f64 / n as f64, from_eigen_coordinates(unstable[l], stable[l])))
            .collect();
        let mut chart = Self {
            base_point,
            samples,
            arclength: Vec::with_capacity(n + 1),
            unstable: PeriodicSpline::new(unstable),
            stable: PeriodicSpline::new(stable),
        };
        let mut acc = 0.0;
        chart.arclength.push(0.0);
        for l in 0..n {
            acc += chart.length_between(l as f64 / n as f64, (l + 1) as f64 / n as f64);
            chart.arclength.push(acc);
        }
        chart
    }

    /// Chart of the stored leaf over grid cell `(i, j)`.
    pub fn from_model(m: &FibrationModel, i: usize, j: usize) -> Self {
        let n = m.fiber_resolution();
        let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for l in 0..n {
            let (a, b) = m.offsets(i, j, l as f64 / n as f64);
            u.push(a);
            v.push(b);
        }
        Self::build(m.base_point(i, j), u, v)
    }

    /// Chart of the leaf over an arbitrary base point, sampled directly from the series.
    pub fn exact(s: &SkewSystem, base: TorusPoint2, samples: usize) -> Self {
        let u = (0..samples)
            .map(|l| leaf_offset(s, base, l as f64 / samples as f64))
            .collect();
        Self::build(base, u, vec![0.0; samples])
    }

    pub fn base_point(&self) -> TorusPoint2 {
        self.base_point
    }

    pub fn samples(&self) -> &[(f64, [f64; 2])] {
        &self.samples
    }

    /// Cumulative arclength at each sample height, ending with the total length.
    pub fn arclength_param(&self) -> &[f64] {
        &self.arclength
    }

    pub fn total_length(&self) -> f64 {
        *self.arclength.last().expect("chart has samples")
    }

    pub fn offset_at(&self, z: f64) -> [f64; 2] {
        from_eigen_coordinates(self.unstable.eval(z), self.stable.eval(z))
    }

    pub fn point_at(&self, z: f64) -> TorusPoint3 {
        let w = self.offset_at(z);
        TorusPoint3::new(self.base_point.x() + w[0], self.base_point.y() + w[1], z)
    }

    /// Tangent `(dw/dz, 1)` of the leaf at height `z`.
    pub fn tangent_at(&self, z: f64) -> [f64; 3] {
        let d = from_eigen_coordinates(self.unstable.derivative(z), self.stable.derivative(z));
        [d[0], d[1], 1.0]
    }

    fn speed(&self, z: f64) -> f64 {
        let t = self.tangent_at(z);
        (t[0] * t[0] + t[1] * t[1] + 1.0).sqrt()
    }

    fn length_between(&self, z0: f64, z1: f64) -> f64 {
        let half = 0.5 * (z1 - z0);
        let mid = 0.5 * (z0 + z1);
        GAUSS_NODES
            .iter()
            .zip(GAUSS_WEIGHTS)
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Normalized arclength from the point at height 0 to the point at height `z`,
    /// measured in the direction of increasing `z`.
    pub fn coordinate(&self, z: f64) -> f64 {
        let n = self.samples.len();
        let z = crate::torus::wrap(z);
        let l = ((z * n as f64).floor() as usize).min(n - 1);
        let partial = self.arclength[l] + self.length_between(l as f64 / n as f64, z);
        crate::torus::wrap(partial / self.total_length())
    }
}

/// Normalized arclength position of `p` on the leaf through it.
pub fn leaf_coordinate(m: &FibrationModel, p: TorusPoint3) -> Result<f64> {
    let base = project_to_base(m, p)?;
    if m.system().a() == 0.0 {
        return Ok(p.z());
    }
    let chart = LeafChart::exact(m.system(), base, m.fiber_resolution());
    Ok(chart.coordinate(p.z()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_leaf_has_unit_length_and_identity_coordinate() {
        let s = SkewSystem::new(0.0, 0.1, 1).unwrap();
        let m = FibrationModel::trivial(s, 4, 16).unwrap();
        let c = LeafChart::from_model(&m, 1, 2);
        assert!((c.total_length() - 1.0).abs() < 1e-14);
        for z in [0.0, 0.123, 0.5, 0.999] {
            assert!((c.coordinate(z) - z).abs() < 1e-14);
        }
    }

    #[test]
    fn arclength_is_strictly_increasing() {
        let s = SkewSystem::new(0.006, 0.006, 2).unwrap();
        let c = LeafChart::exact(&s, TorusPoint2::new(0.3, 0.4), 32);
        assert!(c.arclength_param().windows(2).all(|w| w[1] > w[0]));
        assert!(c.total_length() >= 1.0 && c.total_length() <= 1.2);
    }
}
