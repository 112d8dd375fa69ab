//! ASDF1 field dumps: magic `ASDF1`, four little-endian `u32` site counts, a
//! `u8` rank code, then little-endian `f64` values in site-major,
//! component-minor order (each component contributing its three su(2)
//! coefficients).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::algebra::LieValue;
use crate::bundle::Bundle;
use crate::error::{Error, Result};
use crate::field::{FormKind, LatticeField};
use crate::scalar::{c, f64_of, Real};

pub const MAGIC: &[u8; 5] = b"ASDF1";

/// Header of a dump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DumpHeader {
    pub dims: [u32; 4],
    pub rank_code: u8,
}

impl DumpHeader {
    pub fn components(&self) -> Result<usize> {
        match self.rank_code {
            1 => Ok(4),
            2 => Ok(6),
            3 => Ok(3),
            r => Err(Error::Format(format!("unknown rank code {r}"))),
        }
    }

    pub fn sites(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

/// Writes a field to any sink.
pub fn write_field<T: Real, K: FormKind, W: Write>(field: &LatticeField<T, K>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for d in field.chart().dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format("site count exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&[K::RANK_CODE])?;
    for v in field.as_flat() {
        w.write_all(&f64_of(*v).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<DumpHeader> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut dims = [0u32; 4];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("truncated header".into()))?;
        *d = u32::from_le_bytes(b);
    }
    let mut code = [0u8; 1];
    r.read_exact(&mut code)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(DumpHeader {
        dims,
        rank_code: code[0],
    })
}

/// Reads a field onto `bundle`; the dump must match its site counts and
/// the requested form kind. Nothing is returned on a short read.
pub fn read_field<T: Real, K: FormKind, R: Read>(bundle: &Arc<Bundle<T>>, mut r: R) -> Result<LatticeField<T, K>> {
    let header = read_header(&mut r)?;
    if header.rank_code != K::RANK_CODE {
        return Err(Error::Format(format!(
            "rank code {} does not match a {} (code {})",
            header.rank_code,
            K::NAME,
            K::RANK_CODE
        )));
    }
    let dims = bundle.chart().dims();
    if header.dims.iter().zip(dims).any(|(&a, b)| a as usize != b) {
        return Err(Error::Format(format!(
            "dump dims {:?} do not match chart dims {:?}",
            header.dims, dims
        )));
    }
    let n = header.sites() * K::COMPONENTS;
    let mut bytes = vec![0u8; n * 24];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated data".into()))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after data".into()));
    }
    let data = bytes
        .chunks_exact(24)
        .map(|b| {
            let f = |k: usize| c::<T>(f64::from_le_bytes(b[k * 8..k * 8 + 8].try_into().unwrap()));
            LieValue([f(0), f(1), f(2)])
        })
        .collect();
    LatticeField::from_data(bundle, data)
}

pub fn save_field<T: Real, K: FormKind>(field: &LatticeField<T, K>, path: &Path) -> Result<()> {
    write_field(field, BufWriter::new(File::create(path)?))
}

pub fn load_field<T: Real, K: FormKind>(bundle: &Arc<Bundle<T>>, path: &Path) -> Result<LatticeField<T, K>> {
    read_field(bundle, BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConnectionField, SelfDualField, TwoFormField};
    use crate::geometry::{build_lattice, ChartSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> Arc<Bundle<f64>> {
        Bundle::trivial(Arc::new(build_lattice(&ChartSpec::torus(4, 1.0)).unwrap()))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = TwoFormField::random(&b, &mut rng);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 5 + 16 + 1 + 256 * 6 * 3 * 8);
        let g: TwoFormField<f64> = read_field(&b, buf.as_slice()).unwrap();
        for (x, y) in f.as_flat().iter().zip(g.as_flat()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn rank_mismatch_and_truncation_are_errors() {
        let b = bundle();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = TwoFormField::random(&b, &mut rng);
        let mut buf = Vec::new();
        write_field(&f, &mut buf).unwrap();
        assert!(matches!(
            read_field::<f64, _, _>(&b, buf.as_slice()).map(|x: ConnectionField<f64>| x),
            Err(Error::Format(_))
        ));
        let cut = &buf[..buf.len() - 7];
        assert!(read_field::<f64, crate::field::TwoForm, _>(&b, cut).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_field::<f64, crate::field::TwoForm, _>(&b, bad.as_slice()).is_err());
        let v = SelfDualField::<f64>::zeros(&b);
        let mut buf = Vec::new();
        write_field(&v, &mut buf).unwrap();
        assert_eq!(buf[21], 3);
    }
}
