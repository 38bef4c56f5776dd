//! On-disk cache of Floquet matrices.
//!
//! File layout: seven little-endian `f64` header values
//! `(gamma, epsilon, heff, beta, n_points, dt, t_f)`, then the matrix in
//! row-major order as `(re, im)` pairs of little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::LatticeParams;
use crate::propagator::{build_floquet_matrix, reduce_beta, FloquetMatrix};

pub const HEADER_LEN: usize = 7;

pub fn cache_key(params: &LatticeParams, beta: f64, n_points: usize) -> [f64; HEADER_LEN] {
    [
        params.gamma,
        params.epsilon,
        params.heff,
        reduce_beta(beta),
        n_points as f64,
        params.dt,
        params.floquet_time(),
    ]
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn write_floquet<W: Write>(mut w: W, m: &FloquetMatrix) -> Result<()> {
    let key = cache_key(&m.params, m.beta, m.dim());
    let mut bytes = Vec::with_capacity(8 * (HEADER_LEN + 2 * m.dim() * m.dim()));
    for v in key {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..m.dim() {
        for j in 0..m.dim() {
            let z = m.entries[(i, j)];
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a cached matrix, returning its header and entries.
pub fn read_floquet<R: Read>(mut r: R) -> Result<([f64; HEADER_LEN], DMatrix<Complex64>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if bytes.len() % 8 != 0 || values.len() < HEADER_LEN {
        return Err(Error::Parse("truncated Floquet cache file".into()));
    }
    let mut header = [0.0; HEADER_LEN];
    header.copy_from_slice(&values[..HEADER_LEN]);
    let n = header[4] as usize;
    let body = &values[HEADER_LEN..];
    if body.len() != 2 * n * n {
        return Err(Error::GridMismatch {
            expected: 2 * n * n,
            found: body.len(),
        });
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        let k = 2 * (i * n + j);
        Complex64::new(body[k], body[k + 1])
    });
    Ok((header, m))
}

/// Directory-backed cache keyed on the exact header values.
#[derive(Debug)]
pub struct FloquetCache {
    dir: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FloquetCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &[f64; HEADER_LEN]) -> PathBuf {
        let h = fnv1a(key.iter().flat_map(|v| v.to_le_bytes()));
        self.dir.join(format!("floquet-{h:016x}.bin"))
    }

    pub fn load(
        &self,
        params: &LatticeParams,
        beta: f64,
        n_points: usize,
    ) -> Result<Option<FloquetMatrix>> {
        let key = cache_key(params, beta, n_points);
        let path = self.path_for(&key);
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let (header, entries) = read_floquet(std::io::BufReader::new(file))?;
        // hash collisions fall back to a rebuild
        if header
            .iter()
            .zip(&key)
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Ok(None);
        }
        Ok(Some(FloquetMatrix {
            entries,
            beta: key[3],
            params: *params,
        }))
    }

    pub fn store(&self, m: &FloquetMatrix) -> Result<()> {
        let path = self.path_for(&cache_key(&m.params, m.beta, m.dim()));
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let f = fs::File::create(&tmp)?;
            let mut w = std::io::BufWriter::new(f);
            write_floquet(&mut w, m)?;
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn get_or_build(
        &self,
        params: &LatticeParams,
        beta: f64,
        n_points: usize,
    ) -> Result<FloquetMatrix> {
        if let Some(m) = self.load(params, beta, n_points)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(m);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let m = build_floquet_matrix(params, beta, n_points)?;
        self.store(&m)?;
        Ok(m)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_counters() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FloquetCache::new(dir.path()).unwrap();
        let p = LatticeParams::reference();
        let a = cache.get_or_build(&p, 0.25, 8).unwrap();
        let b = cache.get_or_build(&p, 0.25, 8).unwrap();
        assert_eq!((cache.hits(), cache.misses()), (1, 1));
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.beta, b.beta);

        let _ = cache.get_or_build(&p.unmodulated(), 0.25, 8).unwrap();
        assert_eq!(cache.misses(), 2);
    }

    #[test]
    fn layout_is_header_then_row_major() {
        let p = LatticeParams::reference();
        let m = build_floquet_matrix(&p, 0.1, 4).unwrap();
        let mut bytes = Vec::new();
        write_floquet(&mut bytes, &m).unwrap();
        assert_eq!(bytes.len(), 8 * (HEADER_LEN + 2 * 16));
        let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        assert_eq!(f(0), 0.2);
        assert_eq!(f(3), 0.1);
        assert_eq!(f(4), 4.0);
        // entry (0, 1) sits right after entry (0, 0)
        assert_eq!(f(HEADER_LEN + 2), m.entries[(0, 1)].re);
        assert_eq!(f(HEADER_LEN + 3), m.entries[(0, 1)].im);
    }

    #[test]
    fn truncated_file_is_rejected() {
        assert!(read_floquet(&[0u8; 20][..]).is_err());
    }
}
