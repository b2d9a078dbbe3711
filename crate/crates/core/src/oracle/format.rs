//! Little-endian binary container for [`OracleData`].
//!
//! ```text
//! magic "SLCAORC1", u32 version
//! u64 n, [32] graph digest, [32] config hash, [16] seed
//! f64 delta, f64 xi, u64 t, u32 r_init, u32 r_query, u64 s, u64 m, u64 k
//! u64 len, f64 x len                     eigen report
//! u32 x s                                sample
//! m blocks: u64 nnz, u64 x (s+1) column pointers, u32 x nnz rows, u32 x nnz counts
//! f64 x s*s                              Ψ, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{OracleData, OracleParams};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::walks::VertexRows;

const MAGIC: &[u8; 8] = b"SLCAORC1";
const VERSION: u32 = 1;

impl OracleData {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let p = &self.params;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.graph_digest)?;
        w.write_all(&self.config_hash)?;
        w.write_all(&self.seed.root().to_le_bytes())?;
        w.write_all(&p.delta.to_le_bytes())?;
        w.write_all(&p.xi.to_le_bytes())?;
        w.write_all(&(p.t as u64).to_le_bytes())?;
        w.write_all(&p.r_init.to_le_bytes())?;
        w.write_all(&p.r_query.to_le_bytes())?;
        w.write_all(&(p.s as u64).to_le_bytes())?;
        w.write_all(&(p.m as u64).to_le_bytes())?;
        w.write_all(&(p.k as u64).to_le_bytes())?;
        w.write_all(&(self.eigen_report.len() as u64).to_le_bytes())?;
        for v in &self.eigen_report {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.sample {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::new();
        for q in &self.qhats {
            let cols = q.to_columns();
            let nnz: usize = cols.iter().map(Vec::len).sum();
            buf.clear();
            buf.extend_from_slice(&(nnz as u64).to_le_bytes());
            let mut ptr = 0u64;
            buf.extend_from_slice(&ptr.to_le_bytes());
            for c in &cols {
                ptr += c.len() as u64;
                buf.extend_from_slice(&ptr.to_le_bytes());
            }
            for c in &cols {
                for &(v, _) in c {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            for c in &cols {
                for &(_, cnt) in c {
                    buf.extend_from_slice(&cnt.to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
        buf.clear();
        for a in 0..p.s {
            for b in 0..p.s {
                buf.extend_from_slice(&self.psi[(a, b)].to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut rd = Reader { r };
        let mut magic = [0u8; 8];
        rd.bytes(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("not an oracle file (bad magic)"));
        }
        let version = rd.u32()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported oracle file version {version}")));
        }
        let n = rd.len()?;
        let mut graph_digest = [0u8; 32];
        rd.bytes(&mut graph_digest)?;
        let mut config_hash = [0u8; 32];
        rd.bytes(&mut config_hash)?;
        let mut seed = [0u8; 16];
        rd.bytes(&mut seed)?;
        let params = OracleParams {
            delta: rd.f64()?,
            xi: rd.f64()?,
            t: rd.len()?,
            r_init: rd.u32()?,
            r_query: rd.u32()?,
            s: rd.len()?,
            m: rd.len()?,
            k: rd.len()?,
        };
        params.validate()?;
        let s = params.s;
        let report_len = rd.len()?;
        if report_len > s {
            return Err(Error::format("eigen report longer than the sample"));
        }
        let eigen_report = (0..report_len).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        let sample = (0..s).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
        if sample.iter().any(|&v| v as usize >= n) {
            return Err(Error::format("sample vertex out of range"));
        }
        let mut qhats = Vec::with_capacity(params.m);
        for _ in 0..params.m {
            let nnz = rd.len()?;
            let ptr = (0..=s).map(|_| rd.len()).collect::<Result<Vec<_>>>()?;
            if ptr[0] != 0 || ptr[s] != nnz || ptr.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::format("corrupt column pointers"));
            }
            let rows = (0..nnz).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
            let counts = (0..nnz).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
            let mut columns: Vec<Vec<(u32, u32)>> = Vec::with_capacity(s);
            for j in 0..s {
                let col: Vec<(u32, u32)> =
                    (ptr[j]..ptr[j + 1]).map(|i| (rows[i], counts[i])).collect();
                let total: u64 = col.iter().map(|e| e.1 as u64).sum();
                if total != params.r_init as u64
                    || col.iter().any(|e| e.0 as usize >= n)
                    || col.windows(2).any(|w| w[0].0 >= w[1].0)
                {
                    return Err(Error::format(format!("corrupt walk column {j}")));
                }
                columns.push(col);
            }
            let refs: Vec<&[(u32, u32)]> = columns.iter().map(Vec::as_slice).collect();
            qhats.push(VertexRows::from_columns(&refs, n, params.r_init));
        }
        let mut psi = DMatrix::zeros(s, s);
        for a in 0..s {
            for b in 0..s {
                psi[(a, b)] = rd.f64()?;
            }
        }
        let mut tail = [0u8; 1];
        if rd.r.read(&mut tail)? != 0 {
            return Err(Error::format("trailing bytes after oracle data"));
        }
        Ok(OracleData {
            params,
            seed: Seed::new(u128::from_le_bytes(seed)),
            n,
            sample,
            qhats,
            psi,
            eigen_report,
            graph_digest,
            config_hash,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }
}

struct Reader<'a, R: Read> {
    r: &'a mut R,
}

impl<R: Read> Reader<'_, R> {
    fn bytes(&mut self, buf: &mut [u8]) -> Result<()> {
        self.r.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format("oracle file truncated"),
            _ => Error::Io(e),
        })
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn len(&mut self) -> Result<usize> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::format("length overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}

pub fn write_oracle_file(path: &Path, data: &OracleData) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    data.write_to(&mut f)?;
    f.flush()?;
    Ok(())
}

pub fn read_oracle_file(path: &Path) -> Result<OracleData> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    OracleData::read_from(&mut f)
}

#[cfg(test)]
mod tests {
    use crate::graph::tests::padded_cliques;
    use crate::oracle::{initialize_oracle, OracleData, OracleParams};
    use crate::rng::Seed;

    #[test]
    fn round_trip_is_exact() {
        let g = padded_cliques(&[10, 10], 10);
        let p = OracleParams { delta: 0.5, xi: 0.5, t: 5, r_init: 30, r_query: 30, s: 6, m: 3, k: 2 };
        let d = initialize_oracle(&g, &p, Seed::new(12), 1e-12).unwrap();
        let bytes = d.to_bytes();
        let back = OracleData::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes(), bytes);
        assert!(OracleData::read_from(&mut &bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(OracleData::read_from(&mut bad.as_slice()).is_err());
    }
}
