//! Raw field dumps: a JSON sidecar describing the lattice plus a flat binary
//! payload of little-endian f64 values in row-major node order.
//!
//! `foo` dumps as `foo.json` + `foo.f64`.  Scalar payloads hold one value per
//! node; complex payloads interleave `re, im`.  Vector fields write two scalar
//! dumps with `_x` / `_y` suffixes.  Exterior nodes are stored as written
//! (zero for fields built by this crate), so array shape is always `nx * ny`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use crate::field::{ComplexField, ScalarField, VectorField};
use crate::gl::LinkField;
use crate::grid::Grid;
use crate::{Error, Point2, Result};

/// Sidecar metadata for a dumped field.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DumpHeader {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: Point2,
    /// "real" or "complex".
    pub kind: String,
}

fn write_payload(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_payload(path: &Path, count: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::InvalidParameter(format!(
            "payload {} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            count * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn header_for(grid: &Grid, kind: &str) -> DumpHeader {
    DumpHeader {
        nx: grid.nx,
        ny: grid.ny,
        h: grid.h,
        origin: grid.origin,
        kind: kind.to_string(),
    }
}

fn write_header(base: &Path, header: &DumpHeader) -> Result<()> {
    let json = serde_json::to_string_pretty(header)?;
    std::fs::write(base.with_extension("json"), json + "\n")?;
    Ok(())
}

fn read_header(base: &Path) -> Result<DumpHeader> {
    let text = std::fs::read_to_string(base.with_extension("json"))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_grid(header: &DumpHeader, grid: &Grid, kind: &str) -> Result<()> {
    if header.nx != grid.nx || header.ny != grid.ny {
        return Err(Error::InvalidParameter(format!(
            "dump shape {}x{} does not match grid {}x{}",
            header.nx, header.ny, grid.nx, grid.ny
        )));
    }
    if header.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "dump kind {:?} is not {:?}",
            header.kind, kind
        )));
    }
    Ok(())
}

/// Writes `base.json` / `base.f64` for a scalar field.
pub fn dump_scalar(base: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    let base = base.as_ref();
    write_header(base, &header_for(&f.grid, "real"))?;
    write_payload(&base.with_extension("f64"), f.data.iter().copied())
}

pub fn load_scalar(base: impl AsRef<Path>, grid: &Arc<Grid>) -> Result<ScalarField> {
    let base = base.as_ref();
    let header = read_header(base)?;
    check_grid(&header, grid, "real")?;
    let data = read_payload(&base.with_extension("f64"), grid.nx * grid.ny)?;
    Ok(ScalarField { grid: grid.clone(), data })
}

/// Writes `base.json` / `base.f64` for a complex field (`re, im` interleaved).
pub fn dump_complex(base: impl AsRef<Path>, f: &ComplexField) -> Result<()> {
    let base = base.as_ref();
    write_header(base, &header_for(&f.grid, "complex"))?;
    write_payload(
        &base.with_extension("f64"),
        f.data.iter().flat_map(|z| [z.re, z.im]),
    )
}

pub fn load_complex(base: impl AsRef<Path>, grid: &Arc<Grid>) -> Result<ComplexField> {
    let base = base.as_ref();
    let header = read_header(base)?;
    check_grid(&header, grid, "complex")?;
    let flat = read_payload(&base.with_extension("f64"), 2 * grid.nx * grid.ny)?;
    let data = flat
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    Ok(ComplexField { grid: grid.clone(), data })
}

/// Writes `base_x` and `base_y` scalar dumps for a vector field.
pub fn dump_vector(base: impl AsRef<Path>, f: &VectorField) -> Result<()> {
    let base = base.as_ref();
    let stem = base.to_string_lossy().to_string();
    let fx = ScalarField { grid: f.grid.clone(), data: f.x.clone() };
    let fy = ScalarField { grid: f.grid.clone(), data: f.y.clone() };
    dump_scalar(format!("{stem}_x"), &fx)?;
    dump_scalar(format!("{stem}_y"), &fy)
}

pub fn load_vector(base: impl AsRef<Path>, grid: &Arc<Grid>) -> Result<VectorField> {
    let stem = base.as_ref().to_string_lossy().to_string();
    let fx = load_scalar(format!("{stem}_x"), grid)?;
    let fy = load_scalar(format!("{stem}_y"), grid)?;
    Ok(VectorField { grid: grid.clone(), x: fx.data, y: fy.data })
}

/// Writes `base.json` / `base.f64` for edge circulations: the payload is the
/// `(nx-1)·ny` x-edge values followed by the `nx·(ny-1)` y-edge values.
pub fn dump_links(base: impl AsRef<Path>, f: &LinkField) -> Result<()> {
    let base = base.as_ref();
    write_header(base, &header_for(&f.grid, "links"))?;
    write_payload(
        &base.with_extension("f64"),
        f.tx.iter().chain(f.ty.iter()).copied(),
    )
}

pub fn load_links(base: impl AsRef<Path>, grid: &Arc<Grid>) -> Result<LinkField> {
    let base = base.as_ref();
    let header = read_header(base)?;
    check_grid(&header, grid, "links")?;
    let nx_count = (grid.nx - 1) * grid.ny;
    let ny_count = grid.nx * (grid.ny - 1);
    let flat = read_payload(&base.with_extension("f64"), nx_count + ny_count)?;
    let mut f = LinkField::zeros(grid);
    f.tx.copy_from_slice(&flat[..nx_count]);
    f.ty.copy_from_slice(&flat[nx_count..]);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::grid::build_grid;

    #[test]
    fn scalar_round_trip_is_exact() {
        let g = build_grid(&DomainSpec::disk(1.0), 24).unwrap();
        let f = ScalarField::from_fn(&g, |p| (13.0 * p.x).sin() * p.y + 1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("field");
        dump_scalar(&base, &f).unwrap();
        let f2 = load_scalar(&base, &g).unwrap();
        assert_eq!(f.data, f2.data, "bitwise round trip");
    }

    #[test]
    fn complex_round_trip_is_exact() {
        let g = build_grid(&DomainSpec::disk(1.0), 24).unwrap();
        let f = ComplexField::from_fn(&g, |p| Complex64::new(p.x, -p.y).exp());
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("psi");
        dump_complex(&base, &f).unwrap();
        let f2 = load_complex(&base, &g).unwrap();
        assert_eq!(f.data, f2.data);
    }

    #[test]
    fn links_round_trip_is_exact() {
        let g = build_grid(&DomainSpec::disk(1.0), 24).unwrap();
        let mut f = LinkField::zeros(&g);
        for (k, t) in f.tx.iter_mut().enumerate() {
            *t = (k as f64 * 0.37).sin();
        }
        for (k, t) in f.ty.iter_mut().enumerate() {
            *t = 1.0 / (k as f64 + 3.0);
        }
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("theta");
        dump_links(&base, &f).unwrap();
        let f2 = load_links(&base, &g).unwrap();
        assert_eq!(f.tx, f2.tx);
        assert_eq!(f.ty, f2.ty);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let g24 = build_grid(&DomainSpec::disk(1.0), 24).unwrap();
        let g32 = build_grid(&DomainSpec::disk(1.0), 32).unwrap();
        let f = ScalarField::zeros(&g24);
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("field");
        dump_scalar(&base, &f).unwrap();
        let err = load_scalar(&base, &g32).unwrap_err();
        assert!(err.is_validation());
    }
}
