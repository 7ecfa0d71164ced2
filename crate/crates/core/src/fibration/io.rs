//! Binary and CSV serialization of fibration models.
//!
//! Binary layout, all little-endian: `n_b: u64, n_f: u64, a: f64, b: f64,
//! k: u64, residual: f64`, then the displacement `w` as `f64` in row-major
//! order over `(i, j, l, component)`.

use std::io::{Read, Write};

use super::FibrationModel;
use crate::error::{Error, Result};
use crate::torus::{eigen_coordinates, SkewSystem};

pub fn write_binary<W: Write>(m: &FibrationModel, mut out: W) -> std::io::Result<()> {
    let s = m.system();
    out.write_all(&(m.base_resolution() as u64).to_le_bytes())?;
    out.write_all(&(m.fiber_resolution() as u64).to_le_bytes())?;
    out.write_all(&s.a().to_le_bytes())?;
    out.write_all(&s.b().to_le_bytes())?;
    out.write_all(&u64::from(s.k()).to_le_bytes())?;
    out.write_all(&m.residual().to_le_bytes())?;
    let (n_b, n_f) = (m.base_resolution(), m.fiber_resolution());
    for i in 0..n_b {
        for j in 0..n_b {
            for l in 0..n_f {
                let w = m.displacement(i, j, l);
                out.write_all(&w[0].to_le_bytes())?;
                out.write_all(&w[1].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Reads a model written by [`write_binary`]. The stored residual is taken as
/// both convergence witnesses, with the tolerance set just above it.
pub fn read_binary<R: Read>(mut input: R) -> Result<FibrationModel> {
    let io = |e: std::io::Error| Error::invalid("fibration file", e.to_string());
    let n_b = read_u64(&mut input).map_err(io)? as usize;
    let n_f = read_u64(&mut input).map_err(io)? as usize;
    let a = read_f64(&mut input).map_err(io)?;
    let b = read_f64(&mut input).map_err(io)?;
    let k = u32::try_from(read_u64(&mut input).map_err(io)?)
        .map_err(|_| Error::invalid("k", "does not fit in 32 bits"))?;
    let residual = read_f64(&mut input).map_err(io)?;
    if n_b == 0 || n_f == 0 || n_b.saturating_mul(n_b).saturating_mul(n_f) > 1 << 28 {
        return Err(Error::invalid("fibration file", "implausible resolution"));
    }
    let s = SkewSystem::new(a, b, k)?;
    let n = n_b * n_b * n_f;
    let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let w = [read_f64(&mut input).map_err(io)?, read_f64(&mut input).map_err(io)?];
        let (eu, es) = eigen_coordinates(w);
        u.push(eu);
        v.push(es);
    }
    let mut m = FibrationModel::from_components(s, n_b, n_f, u, v)?;
    let tol = residual * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    m.set_status(residual, residual, tol, Vec::new());
    Ok(m)
}

/// CSV with columns `i,j,l,z,w_x,w_y`.
pub fn write_csv<W: Write>(m: &FibrationModel, mut out: W) -> std::io::Result<()> {
    writeln!(out, "i,j,l,z,w_x,w_y")?;
    let (n_b, n_f) = (m.base_resolution(), m.fiber_resolution());
    for i in 0..n_b {
        for j in 0..n_b {
            for l in 0..n_f {
                let w = m.displacement(i, j, l);
                writeln!(out, "{i},{j},{l},{:.17e},{:.17e},{:.17e}", l as f64 / n_f as f64, w[0], w[1])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibration::solve_fibration;

    #[test]
    fn binary_round_trip() {
        let s = SkewSystem::new(0.005, 0.005, 2).unwrap();
        let m = solve_fibration(&s, 4, 16, 1e-9, 60).unwrap();
        let mut buf = Vec::new();
        write_binary(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 16 * 4 * 4 * 16);
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.system(), m.system());
        assert_eq!(back.residual(), m.residual());
        for (i, j, l) in [(0, 0, 0), (3, 1, 7), (2, 2, 15)] {
            let (p, q) = (m.displacement(i, j, l), back.displacement(i, j, l));
            assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
        }
        assert!(back.ensure_converged().is_ok());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let s = SkewSystem::default();
        let m = FibrationModel::trivial(s, 2, 4).unwrap();
        let mut buf = Vec::new();
        write_binary(&m, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_binary(buf.as_slice()).is_err());
    }
}
