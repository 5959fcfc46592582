//! Binary container for configurations. Layout: the magic bytes "HHLAB1",
//! a fixed header (nx, ny, rank as little-endian u32; alpha, epsilon as
//! little-endian f64; one convention byte, 1 = inward-pointing boundary
//! normals), then the four fields in the order A_x, A_y, phi, psi, each as
//! node-major row-major blocks of little-endian f64 pairs (re, im). The
//! round trip is bit-exact: bytes come straight from `to_le_bytes` of the
//! stored values.

use crate::hhcore::Configuration;
use crate::surface::{CylinderGrid, FieldGrid, GridError};
use crate::C64;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 6] = b"HHLAB1";
const INWARD_NORMALS: u8 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt container: {0}")]
    Corrupt(String),
}

impl From<GridError> for PersistError {
    fn from(e: GridError) -> Self {
        PersistError::Format(format!("stored dimensions are unusable: {e}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContainerHeader {
    pub nx: u32,
    pub ny: u32,
    pub rank: u32,
    pub alpha: f64,
    pub epsilon: f64,
    pub inward_normals: bool,
}

pub fn configuration_bytes(c: &Configuration) -> Vec<u8> {
    let g = c.grid();
    let payload = 4 * g.nx() * g.ny() * g.rank() * g.rank() * 16;
    let mut out = Vec::with_capacity(35 + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
    out.extend_from_slice(&(g.ny() as u32).to_le_bytes());
    out.extend_from_slice(&(g.rank() as u32).to_le_bytes());
    out.extend_from_slice(&c.alpha.to_le_bytes());
    out.extend_from_slice(&c.eps.to_le_bytes());
    out.push(INWARD_NORMALS);
    for field in [&c.ax, &c.ay, &c.phi, &c.psi] {
        for v in field.data() {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

pub fn persist_configuration(c: &Configuration, path: &Path) -> Result<(), PersistError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&configuration_bytes(c))?;
    w.flush()?;
    Ok(())
}

/// Reads only the magic and header; field data stays untouched, so this
/// works even when the payload is missing or damaged.
pub fn inspect_header(path: &Path) -> Result<ContainerHeader, PersistError> {
    let mut r = BufReader::new(File::open(path)?);
    read_header(&mut r)
}

pub fn load_configuration(path: &Path) -> Result<Configuration, PersistError> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r)?;
    let grid = CylinderGrid::new(header.nx as usize, header.ny as usize, header.rank as usize)?;
    let mut fields = Vec::with_capacity(4);
    for name in ["A_x", "A_y", "phi", "psi"] {
        fields.push(read_field(&mut r, grid, name)?);
    }
    let psi = fields.pop().unwrap();
    let phi = fields.pop().unwrap();
    let ay = fields.pop().unwrap();
    let ax = fields.pop().unwrap();
    Configuration::new(grid, header.epsilon, header.alpha, ax, ay, phi, psi)
        .map_err(|e| PersistError::Format(format!("stored fields are inconsistent: {e}")))
}

/// Loader for pipelines pinned to a fixed rank; mismatches fail before any
/// field data is read.
pub fn load_expecting_rank(path: &Path, rank: usize) -> Result<Configuration, PersistError> {
    let header = inspect_header(path)?;
    if header.rank as usize != rank {
        return Err(PersistError::Format(format!(
            "container holds rank {} fields, but this pipeline needs rank {}",
            header.rank, rank
        )));
    }
    load_configuration(path)
}

fn read_header(r: &mut impl Read) -> Result<ContainerHeader, PersistError> {
    let mut magic = [0u8; 6];
    read_bytes(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(PersistError::Format(format!(
            "bad magic {:?}; not an HHLAB1 container",
            String::from_utf8_lossy(&magic)
        )));
    }
    let nx = read_u32(r, "nx")?;
    let ny = read_u32(r, "ny")?;
    let rank = read_u32(r, "rank")?;
    let alpha = read_f64(r, "alpha")?;
    let epsilon = read_f64(r, "epsilon")?;
    let mut flag = [0u8; 1];
    read_bytes(r, &mut flag, "convention flag")?;
    if flag[0] != INWARD_NORMALS {
        return Err(PersistError::Format(format!(
            "unknown boundary-normal convention flag {}; this build writes 1 (inward)",
            flag[0]
        )));
    }
    Ok(ContainerHeader { nx, ny, rank, alpha, epsilon, inward_normals: true })
}

fn read_field(r: &mut impl Read, grid: CylinderGrid, name: &str) -> Result<FieldGrid, PersistError> {
    let mut f = FieldGrid::zeros(grid);
    let mut buf = [0u8; 16];
    for (i, v) in f.data_mut().iter_mut().enumerate() {
        r.read_exact(&mut buf).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                PersistError::Corrupt(format!(
                    "field {name} is truncated at entry {i}; the header promises {} entries \
                     per field",
                    grid.node_count() * grid.block()
                ))
            } else {
                PersistError::Io(e)
            }
        })?;
        *v = C64::new(
            f64::from_le_bytes(buf[..8].try_into().unwrap()),
            f64::from_le_bytes(buf[8..].try_into().unwrap()),
        );
    }
    Ok(f)
}

fn read_bytes(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), PersistError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            PersistError::Corrupt(format!("container ends inside the {what}"))
        } else {
            PersistError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32, PersistError> {
    let mut b = [0u8; 4];
    read_bytes(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64, PersistError> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}
