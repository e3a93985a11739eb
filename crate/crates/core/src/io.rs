//! Binary snapshots, the interaction-tensor cache and the diagnostics CSV.
//! All binary numbers are little-endian.

use std::io::{Read, Write};

use crate::eigenbasis::{EigenBasis, SpectralField};
use crate::error::{Result, SqgError};
use crate::sqg::GammaTensor;
use crate::timestepping::DiagnosticsRow;

const SNAPSHOT_MAGIC: &[u8; 8] = b"SQGSNAP\0";
const GAMMA_MAGIC: &[u8; 8] = b"SQGGAMMA";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub lx: f64,
    pub ly: f64,
    pub modes_per_axis: u64,
    pub alpha: f64,
    pub kappa: f64,
    pub t: f64,
    pub field: SpectralField,
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(SqgError::Format(format!("{} is truncated", self.what)));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(SqgError::Format(format!("{}: bad magic", self.what)));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(SqgError::Format(format!(
                "{}: unsupported format version {version}",
                self.what
            )));
        }
        Ok(())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| SqgError::Format(format!("{}: length overflow", self.what)))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(&self) -> Result<()> {
        if !self.bytes.is_empty() {
            return Err(SqgError::Format(format!("{}: {} trailing bytes", self.what, self.bytes.len())));
        }
        Ok(())
    }
}

impl Snapshot {
    pub fn new(basis: &EigenBasis, alpha: f64, kappa: f64, t: f64, field: SpectralField) -> Result<Self> {
        basis.check_field(&field)?;
        let d = basis.domain();
        Ok(Self {
            lx: d.lx,
            ly: d.ly,
            modes_per_axis: basis.modes_per_axis() as u64,
            alpha,
            kappa,
            t,
            field,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(68 + 8 * self.field.len());
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_f64(&mut out, self.lx);
        put_f64(&mut out, self.ly);
        put_u64(&mut out, self.modes_per_axis);
        put_f64(&mut out, self.alpha);
        put_f64(&mut out, self.kappa);
        put_f64(&mut out, self.t);
        for &c in &self.field.coeffs {
            put_f64(&mut out, c);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, what: "snapshot" };
        cur.header(SNAPSHOT_MAGIC)?;
        let lx = cur.f64()?;
        let ly = cur.f64()?;
        let modes_per_axis = cur.u64()?;
        let alpha = cur.f64()?;
        let kappa = cur.f64()?;
        let t = cur.f64()?;
        let n = (modes_per_axis as usize)
            .checked_mul(modes_per_axis as usize)
            .ok_or_else(|| SqgError::Format("snapshot: mode count overflow".into()))?;
        let coeffs = cur.f64s(n)?;
        cur.finish()?;
        Ok(Self {
            lx,
            ly,
            modes_per_axis,
            alpha,
            kappa,
            t,
            field: SpectralField::new(coeffs),
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Serializes `gamma` with a header identifying the basis it was built on.
pub fn gamma_to_bytes(basis: &EigenBasis, gamma: &GammaTensor) -> Result<Vec<u8>> {
    if gamma.size() != basis.size() {
        return Err(SqgError::Shape {
            expected: basis.size(),
            found: gamma.size(),
        });
    }
    let d = basis.domain();
    let mut out = Vec::with_capacity(52 + 8 * gamma.entries().len());
    out.extend_from_slice(GAMMA_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_f64(&mut out, d.lx);
    put_f64(&mut out, d.ly);
    put_u64(&mut out, basis.modes_per_axis() as u64);
    put_u64(&mut out, basis.nquad() as u64);
    for &v in gamma.entries() {
        put_f64(&mut out, v);
    }
    Ok(out)
}

/// Loads a cached tensor, rejecting caches built for a different basis.
pub fn gamma_from_bytes(basis: &EigenBasis, bytes: &[u8]) -> Result<GammaTensor> {
    let mut cur = Cursor { bytes, what: "gamma cache" };
    cur.header(GAMMA_MAGIC)?;
    let (lx, ly) = (cur.f64()?, cur.f64()?);
    let (nj, nq) = (cur.u64()?, cur.u64()?);
    let d = basis.domain();
    if lx != d.lx || ly != d.ly || nj != basis.modes_per_axis() as u64 || nq != basis.nquad() as u64 {
        return Err(SqgError::Format(format!(
            "gamma cache was built for Lx={lx}, Ly={ly}, J={nj}, Nquad={nq}; basis has Lx={}, Ly={}, J={}, Nquad={}",
            d.lx,
            d.ly,
            basis.modes_per_axis(),
            basis.nquad()
        )));
    }
    let m = basis.size();
    let entries = cur.f64s(m * m * m)?;
    cur.finish()?;
    GammaTensor::from_entries(m, entries)
}

/// Column names of the diagnostics CSV.
pub fn csv_header(lr_exponents: &[f64]) -> String {
    let mut cols = vec!["t".to_string(), "L2".into(), "Halpha".into(), "H2".into(), "H2alpha".into()];
    cols.extend(lr_exponents.iter().map(|r| format!("L{r}")));
    cols.push("energy_residual".into());
    cols.join(",")
}

/// Writes rows with 17 significant digits.
pub fn write_diagnostics_csv(mut w: impl Write, lr_exponents: &[f64], rows: &[DiagnosticsRow]) -> Result<()> {
    writeln!(w, "{}", csv_header(lr_exponents))?;
    for row in rows {
        if row.lr.len() != lr_exponents.len() {
            return Err(SqgError::Shape {
                expected: lr_exponents.len(),
                found: row.lr.len(),
            });
        }
        let mut line = format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            row.t, row.l2, row.h_alpha, row.h2, row.h2_alpha
        );
        for v in &row.lr {
            line.push_str(&format!(",{v:.16e}"));
        }
        line.push_str(&format!(",{:.16e}", row.energy_residual));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parses a CSV written by [`write_diagnostics_csv`].
pub fn read_diagnostics_csv(text: &str) -> Result<(Vec<String>, Vec<DiagnosticsRow>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| SqgError::Format("diagnostics CSV is empty".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    if header.len() < 6 || header[0] != "t" || header.last().map(String::as_str) != Some("energy_residual") {
        return Err(SqgError::Format(format!("unexpected diagnostics header {header:?}")));
    }
    let n_lr = header.len() - 6;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| SqgError::Format(format!("diagnostics row {}: {e}", i + 1)))?;
        if vals.len() != header.len() {
            return Err(SqgError::Format(format!(
                "diagnostics row {} has {} columns, expected {}",
                i + 1,
                vals.len(),
                header.len()
            )));
        }
        rows.push(DiagnosticsRow {
            t: vals[0],
            l2: vals[1],
            h_alpha: vals[2],
            h2: vals[3],
            h2_alpha: vals[4],
            lr: vals[5..5 + n_lr].to_vec(),
            energy_residual: vals[5 + n_lr],
        });
    }
    Ok((header, rows))
}
