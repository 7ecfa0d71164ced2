//! Periodic cubic splines on the uniform grid `z_l = l / n` of the unit circle.

/// Second derivatives of the periodic interpolating cubic through `values`.
///
/// Solves the cyclic system `M_{l-1} + 4 M_l + M_{l+1} = 6 n² (y_{l+1} - 2 y_l + y_{l-1})`
/// with the Sherman-Morrison correction for the two corner entries.
pub fn second_derivatives(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let h2 = (n as f64).powi(-2);
    let rhs: Vec<f64> = (0..n)
        .map(|l| {
            let prev = values[(l + n - 1) % n];
            let next = values[(l + 1) % n];
            6.0 * (next - 2.0 * values[l] + prev) / h2
        })
        .collect();

    // A = T + u vᵀ with u = (γ, 0, …, 0, 1), v = (1, 0, …, 0, 1/γ)
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    let x = solve_tridiagonal(&diag, &rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = 1.0;
    let zc = solve_tridiagonal(&diag, &u);
    let factor = (x[0] + x[n - 1] / gamma) / (1.0 + zc[0] + zc[n - 1] / gamma);
    x.iter().zip(&zc).map(|(xi, zi)| xi - factor * zi).collect()
}

/// Thomas algorithm with unit off-diagonals.
fn solve_tridiagonal(diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = 1.0 / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - c[i - 1];
        c[i] = 1.0 / m;
        d[i] = (rhs[i] - d[i - 1]) / m;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    out
}

/// Locates `z` on the grid: returns the left node and the fraction within the cell.
#[inline]
fn locate(n: usize, z: f64) -> (usize, f64) {
    let t = crate::torus::wrap(z) * n as f64;
    let cell = (t.floor() as usize).min(n - 1);
    (cell, t - cell as f64)
}

#[inline]
pub fn evaluate(values: &[f64], second: &[f64], z: f64) -> f64 {
    let n = values.len();
    let (i, s) = locate(n, z);
    let j = (i + 1) % n;
    let r = 1.0 - s;
    let h2 = (n as f64).powi(-2);
    r * values[i]
        + s * values[j]
        + h2 / 6.0 * ((r * r * r - r) * second[i] + (s * s * s - s) * second[j])
}

#[inline]
pub fn derivative(values: &[f64], second: &[f64], z: f64) -> f64 {
    let n = values.len();
    let (i, s) = locate(n, z);
    let j = (i + 1) % n;
    let r = 1.0 - s;
    let h = 1.0 / n as f64;
    (values[j] - values[i]) / h
        + h / 6.0 * (-(3.0 * r * r - 1.0) * second[i] + (3.0 * s * s - 1.0) * second[j])
}

/// Owned periodic spline.
#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(values: Vec<f64>) -> Self {
        let second = second_derivatives(&values);
        Self { values, second }
    }

    pub fn eval(&self, z: f64) -> f64 {
        evaluate(&self.values, &self.second, z)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        derivative(&self.values, &self.second, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn interpolates_nodes() {
        let vals: Vec<f64> = (0..16).map(|l| ((l * 7) % 5) as f64).collect();
        let sp = PeriodicSpline::new(vals.clone());
        for (l, v) in vals.iter().enumerate() {
            assert!((sp.eval(l as f64 / 16.0) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn second_derivatives_satisfy_cyclic_system() {
        let vals: Vec<f64> = (0..12).map(|l| (l as f64 * 0.7).sin() + 0.1 * l as f64 % 3.0).collect();
        let m = second_derivatives(&vals);
        let n = vals.len();
        let h2 = (n as f64).powi(-2);
        for l in 0..n {
            let lhs = m[(l + n - 1) % n] + 4.0 * m[l] + m[(l + 1) % n];
            let rhs = 6.0 * (vals[(l + 1) % n] - 2.0 * vals[l] + vals[(l + n - 1) % n]) / h2;
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn fourth_order_accuracy_on_trig_data() {
        let err = |n: usize| {
            let vals: Vec<f64> = (0..n).map(|l| (TAU * l as f64 / n as f64).sin()).collect();
            let sp = PeriodicSpline::new(vals);
            (0..1000)
                .map(|i| {
                    let z = (i as f64 + 0.37) / 1000.0;
                    (sp.eval(z) - (TAU * z).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < 1e-6);
        assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn derivative_matches_trig() {
        let n = 64;
        let vals: Vec<f64> = (0..n).map(|l| (TAU * l as f64 / n as f64).cos()).collect();
        let sp = PeriodicSpline::new(vals);
        for i in 0..100 {
            let z = i as f64 / 100.0 + 0.003;
            assert!((sp.derivative(z) + TAU * (TAU * z).sin()).abs() < 1e-3);
        }
    }
}
