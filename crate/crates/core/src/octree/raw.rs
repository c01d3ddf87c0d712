//! Headerless raw volumes with a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_octree, BuildStats, OctreeVolume, SourceDtype, ValueKind, VolumeMeta};
use crate::error::{Error, Result};

/// Only x-fastest row-major layout is accepted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisOrder {
    #[default]
    #[serde(rename = "xyz")]
    Xyz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [u64; 3],
    pub dtype: SourceDtype,
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    #[serde(default)]
    pub axis_order: AxisOrder,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<RawSidecar> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::InvalidVolume(format!("sidecar {}: {e}", path.display()))
    })
}

/// Converts a raw volume into an octree. With `dest` the tree is written to
/// that HROV1 file, otherwise it is kept in memory.
pub fn ingest_raw(
    raw: impl AsRef<Path>,
    sidecar: &RawSidecar,
    brick_side: usize,
    dest: Option<&Path>,
) -> Result<(OctreeVolume, BuildStats)> {
    ingest_raw_with_progress(raw, sidecar, brick_side, dest, |_, _| {})
}

/// [`ingest_raw`], calling `progress(planes_read, planes_total)` after every plane.
pub fn ingest_raw_with_progress(
    raw: impl AsRef<Path>,
    sidecar: &RawSidecar,
    brick_side: usize,
    dest: Option<&Path>,
    mut progress: impl FnMut(u64, u64),
) -> Result<(OctreeVolume, BuildStats)> {
    let raw = raw.as_ref();
    let meta = VolumeMeta {
        dims: sidecar.dims,
        spacing: sidecar.spacing,
        value_kind: ValueKind::Intensity,
        source_dtype: sidecar.dtype,
    };
    meta.validate()?;
    let file = File::open(raw).map_err(io_err(raw))?;
    let expected = sidecar.dims.iter().product::<u64>() * sidecar.dtype.byte_size() as u64;
    let actual = file.metadata().map_err(io_err(raw))?.len();
    if actual != expected {
        return Err(Error::InvalidVolume(format!(
            "{} has {actual} bytes, sidecar implies {expected}",
            raw.display()
        )));
    }
    let tree = match dest {
        Some(p) => OctreeVolume::create_file(p, meta, brick_side)?,
        None => OctreeVolume::in_memory(meta, brick_side)?,
    };
    let plane_bytes = (sidecar.dims[0] * sidecar.dims[1]) as usize * sidecar.dtype.byte_size();
    let mut reader = BufReader::new(file);
    let mut buf = vec![0u8; plane_bytes];
    let dtype = sidecar.dtype;
    let mut clamped = 0usize;
    let planes = (0..sidecar.dims[2]).map(|z| {
        reader
            .read_exact(&mut buf)
            .map_err(|e| Error::storage(format!("plane {z} of {}", raw.display()), e))?;
        let mut out = Vec::new();
        clamped += dtype.normalize_into(&buf, &mut out);
        progress(z + 1, sidecar.dims[2]);
        Ok(out)
    });
    let result = build_octree(tree, planes);
    if clamped > 0 {
        log::warn!("{clamped} samples outside [0, 1] were clamped");
    }
    result
}

/// Writes planes as a raw file plus sidecar (`<path>.json`).
pub fn write_raw<I>(path: impl AsRef<Path>, sidecar: &RawSidecar, planes: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<u8>>,
{
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for plane in planes {
        w.write_all(&plane).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(sidecar)?).map_err(io_err(&side))?;
    Ok(())
}

pub fn sidecar_path(raw: &Path) -> std::path::PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octree::NodeAddress;

    #[test]
    fn u8_raw_64_cubed_gives_two_levels() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("v.raw");
        let sc = RawSidecar {
            dims: [64, 64, 64],
            dtype: SourceDtype::U8,
            spacing: [1.0; 3],
            axis_order: AxisOrder::Xyz,
        };
        write_raw(&raw, &sc, (0..64).map(|_| vec![255u8; 64 * 64])).unwrap();
        let sc2 = read_sidecar(sidecar_path(&raw)).unwrap();
        assert_eq!(sc2, sc);
        let (t, _) = ingest_raw(&raw, &sc2, 32, Some(&dir.path().join("v.hrov"))).unwrap();
        assert_eq!(t.levels(), 2);
        assert_eq!(t.stats(NodeAddress::ROOT).unwrap(), Some((1.0, 1.0)));
    }

    #[test]
    fn normalization_rules() {
        let mut out = Vec::new();
        SourceDtype::U16.normalize_into(&65535u16.to_le_bytes(), &mut out);
        assert_eq!(out, vec![1.0]);
        let mut bytes = 0.25f32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        assert_eq!(SourceDtype::F32.normalize_into(&bytes, &mut out), 1);
        assert_eq!(out, vec![0.25, 1.0]);
    }

    #[test]
    fn other_axis_orders_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(&p, r#"{"dims":[4,4,4],"dtype":"u8","axis_order":"zyx"}"#).unwrap();
        assert!(matches!(read_sidecar(&p), Err(Error::InvalidVolume(_))));
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("v.raw");
        std::fs::write(&raw, vec![0u8; 10]).unwrap();
        let sc = RawSidecar {
            dims: [4, 4, 4],
            dtype: SourceDtype::U8,
            spacing: [1.0; 3],
            axis_order: AxisOrder::Xyz,
        };
        assert!(ingest_raw(&raw, &sc, 2, None).is_err());
    }
}
