//! Binary cache and CSV export of a [`CovarianceDecomposition`].
//!
//! Cache layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! magic "PHI4FRD1"
//! d, L, N, backend (0 window, 1 polynomial)
//! η, a^{(∅)}, ā_Δ, count, count × (q: u32, c: f64)
//! t_N (NaN when excluded), Neumann order, Neumann contraction
//! N × volume multipliers: Γ_1 … Γ_{N−1}, then Γ_N^Λ
//! ```

use std::io::{Read, Write};

use super::decomposition::{Backend, CovSlice, CovarianceDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{OperatorSymbol, TorusSpec};

pub const CACHE_MAGIC: &[u8; 8] = b"PHI4FRD1";

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn small(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{what} = {v} does not fit the cache header")))
}

/// Writes the cache format described in the module docs.
pub fn write_cache(decomp: &CovarianceDecomposition, w: &mut impl Write) -> Result<()> {
    let t = &decomp.torus;
    w.write_all(CACHE_MAGIC)?;
    put_u32(w, small(t.d, "d")?)?;
    put_u32(w, small(t.l, "L")?)?;
    put_u32(w, small(t.n, "N")?)?;
    put_u32(w, matches!(decomp.backend, Backend::PolyFiniteRange) as u32)?;
    let op = &decomp.op;
    put_f64(w, op.eta)?;
    put_f64(w, op.a_mass)?;
    put_f64(w, op.a_delta)?;
    put_u32(w, small(op.higher_terms.len(), "number of higher terms")?)?;
    for &(q, c) in &op.higher_terms {
        put_u32(w, q)?;
        put_f64(w, c)?;
    }
    put_f64(w, decomp.t_n.unwrap_or(f64::NAN))?;
    put_u32(w, small(decomp.neumann_order, "Neumann order")?)?;
    put_f64(w, decomp.neumann_contraction)?;
    for s in decomp.slices.iter().chain(std::iter::once(&decomp.tail)) {
        let mut buf = Vec::with_capacity(8 * s.multiplier.len());
        for v in &s.multiplier {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a cache written by [`write_cache`].
pub fn read_cache(r: &mut impl Read) -> Result<CovarianceDecomposition> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let d = get_u32(r)? as usize;
    let l = get_u32(r)? as usize;
    let n = get_u32(r)? as usize;
    let torus = TorusSpec::new(d, l, n)?;
    let backend = match get_u32(r)? {
        0 => Backend::FourierWindow,
        1 => Backend::PolyFiniteRange,
        other => return Err(Error::Cache(format!("unknown backend tag {other}"))),
    };
    let eta = get_f64(r)?;
    let a_mass = get_f64(r)?;
    let a_delta = get_f64(r)?;
    let count = get_u32(r)? as usize;
    let mut terms = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let q = get_u32(r)?;
        terms.push((q, get_f64(r)?));
    }
    let op = OperatorSymbol::new(eta, a_mass, a_delta)?.with_higher_terms(terms)?;
    let t = get_f64(r)?;
    let neumann_order = get_u32(r)? as usize;
    let neumann_contraction = get_f64(r)?;
    let volume = torus.volume();
    let mut read_slice = || -> Result<Vec<f64>> {
        let mut buf = vec![0u8; 8 * volume];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
    };
    let mut slices = Vec::with_capacity(n.saturating_sub(1));
    for j in 1..n {
        slices.push(CovSlice::new(j, read_slice()?, false));
    }
    let tail = CovSlice::new(n, read_slice()?, true);
    Ok(CovarianceDecomposition {
        torus,
        op,
        backend,
        slices,
        tail,
        t_n: (!t.is_nan()).then_some(t),
        q_n: 1.0 / volume as f64,
        neumann_order,
        neumann_contraction,
    })
}

/// Writes `x1, …, xd, j, gamma` rows for every site and every slice
/// `j = 1..=N` (the last being the torus tail), with centred coordinates.
pub fn write_slices_csv(decomp: &CovarianceDecomposition, w: &mut impl Write) -> Result<()> {
    let t = &decomp.torus;
    let header: Vec<String> = (1..=t.d).map(|i| format!("x{i}")).chain(["j".into(), "gamma".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for j in 1..=t.n {
        let kernel = decomp.slice(j).expect("slice in range").kernel(t)?;
        for (x, v) in kernel.iter().enumerate() {
            let coords: Vec<String> = t.coords(x).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{j},{v:e}", coords.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frd::decompose;

    #[test]
    fn cache_round_trip_is_bitwise() {
        let op = OperatorSymbol::new(0.5, 0.1, -0.02).unwrap();
        let torus = TorusSpec::new(2, 2, 3).unwrap();
        let dec = decompose(&op, &torus, Backend::PolyFiniteRange).unwrap();
        let mut buf = Vec::new();
        write_cache(&dec, &mut buf).unwrap();
        assert_eq!(&buf[..8], CACHE_MAGIC);
        let back = read_cache(&mut buf.as_slice()).unwrap();
        assert_eq!(back.op, dec.op);
        assert_eq!(back.t_n.map(f64::to_bits), dec.t_n.map(f64::to_bits));
        for j in 1..=3 {
            let a = &dec.slice(j).unwrap().multiplier;
            let b = &back.slice(j).unwrap().multiplier;
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_cache(&mut bad.as_slice()).is_err());
        assert!(read_cache(&mut &buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_site_and_scale() {
        let op = OperatorSymbol::new(0.0, 0.2, 0.0).unwrap();
        let torus = TorusSpec::new(2, 2, 2).unwrap();
        let dec = decompose(&op, &torus, Backend::FourierWindow).unwrap();
        let mut buf = Vec::new();
        write_slices_csv(&dec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x1,x2,j,gamma"));
        assert_eq!(lines.count(), 2 * 16);
    }
}
