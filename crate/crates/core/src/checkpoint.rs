//! Checkpoints: a flat little-endian velocity file plus a JSON sidecar.
//!
//! Binary layout: `n` as three `i64`, `h` and `corner` as three `f64` each,
//! then the three face-velocity arrays (x-fastest), all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::{CoupledState, RigidState};
use crate::error::{Error, Result};
use crate::fluid::{FluidState, MacGrid, VelocityField};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    /// Name of the velocity file, relative to the sidecar.
    pub data_file: String,
    pub step: u64,
    pub time: f64,
    pub a: [f64; 3],
    pub l: [f64; 3],
    /// Row-major.
    pub q: [[f64; 3]; 3],
    pub omega_prev: Option<[f64; 3]>,
    /// Running trapezoid sum of the dissipation rate.
    pub diss_cum: f64,
    pub a0: [f64; 3],
    pub l0: [f64; 3],
    pub e0: f64,
    pub u0_l2: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub grid: MacGrid,
    pub velocity: VelocityField,
}

impl Checkpoint {
    pub fn rigid(&self) -> RigidState {
        let q = self.meta.q;
        RigidState {
            a: Vec3::from(self.meta.a),
            l: Vec3::from(self.meta.l),
            q: Mat3::from_fn(|r, c| q[r][c]),
        }
    }
}

pub fn write_velocity(path: &Path, grid: &MacGrid, u: &VelocityField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &n in &grid.n {
        w.write_all(&(n as i64).to_le_bytes())?;
    }
    for &h in &grid.h {
        w.write_all(&h.to_le_bytes())?;
    }
    for c in grid.corner.iter() {
        w.write_all(&c.to_le_bytes())?;
    }
    for comp in &u.comps {
        for v in &comp.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_velocity(path: &Path) -> Result<(MacGrid, VelocityField)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> Result<[u8; 8]> {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("{}: truncated ({e})", path.display())))?;
        Ok(buf)
    };
    let mut n = [0usize; 3];
    for slot in &mut n {
        let v = i64::from_le_bytes(next(&mut r)?);
        *slot =
            usize::try_from(v).map_err(|_| Error::Checkpoint(format!("invalid cell count {v}")))?;
    }
    let mut h = [0.0; 3];
    for slot in &mut h {
        *slot = f64::from_le_bytes(next(&mut r)?);
    }
    let mut corner = Vec3::zeros();
    for d in 0..3 {
        corner[d] = f64::from_le_bytes(next(&mut r)?);
    }
    let grid = MacGrid::new(n, h, corner)
        .map_err(|e| Error::Checkpoint(format!("invalid grid header: {e}")))?;
    let mut u = VelocityField::zeros(&grid);
    for comp in &mut u.comps {
        for v in &mut comp.data {
            *v = f64::from_le_bytes(next(&mut r)?);
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{}: {} trailing bytes",
            path.display(),
            rest.len()
        )));
    }
    Ok((grid, u))
}

/// Writes `<dir>/<stem>.bin` and `<dir>/<stem>.json`; returns the sidecar path.
pub fn write_checkpoint(
    dir: &Path,
    stem: &str,
    state: &CoupledState,
    mut meta: CheckpointMeta,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let bin = format!("{stem}.bin");
    write_velocity(&dir.join(&bin), &state.fluid.grid, &state.fluid.velocity)?;
    meta.data_file = bin;
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
    Ok(json)
}

/// Reads a checkpoint from its sidecar (or from the `.bin` next to it).
pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let sidecar = if path.extension().is_some_and(|e| e == "bin") {
        path.with_extension("json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&sidecar)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", sidecar.display())))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", sidecar.display())))?;
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let (grid, velocity) = read_velocity(&dir.join(&meta.data_file))?;
    Ok(Checkpoint {
        meta,
        grid,
        velocity,
    })
}

pub fn rigid_to_meta(rigid: &RigidState) -> ([f64; 3], [f64; 3], [[f64; 3]; 3]) {
    let q = rigid.q;
    (
        rigid.a.into(),
        rigid.l.into(),
        [0, 1, 2].map(|r| [0, 1, 2].map(|c| q[(r, c)])),
    )
}

/// Fluid state stored in a checkpoint (the pressure is not persisted).
pub fn fluid_from_checkpoint(ckpt: &Checkpoint) -> FluidState {
    FluidState::new(ckpt.grid.clone(), ckpt.velocity.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_roundtrip_is_bitwise() {
        let grid = MacGrid::new([4, 5, 6], [0.1, 0.2, 0.3], Vec3::new(-0.2, -0.5, -0.9)).unwrap();
        let u = VelocityField::from_fn(&grid, |y| {
            Vec3::new((3.0 * y[0]).sin(), y[1] * y[2] / 3.0, 1.0 / 7.0 + y[0])
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.bin");
        write_velocity(&path, &grid, &u).unwrap();
        let expected = 8 * 9 + 8 * (5 * 5 * 6 + 4 * 6 * 6 + 4 * 5 * 7);
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, expected);
        let (g2, u2) = read_velocity(&path).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(u2, u);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let grid = MacGrid::new([4, 4, 4], [0.25; 3], Vec3::zeros()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.bin");
        write_velocity(&path, &grid, &VelocityField::zeros(&grid)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_velocity(&path), Err(Error::Checkpoint(_))));
    }
}
