//! HROV1 on-disk layout (all integers and floats little-endian):
//!
//! ```text
//! header   magic "HROV1" | version u32 | dims 3×u64 | spacing 3×f64
//!          | brick side u32 | levels u32 | value kind u8 | source dtype u8
//! index    per level, per node (x fastest over the brick grid):
//!          child mask u8 | min f32 | max f32 | payload offset u64 | payload length u64
//!          (offset 0 = node absent)
//! payloads f32 voxels, row-major, x fastest
//! ```

use std::fs::File;

use super::{NodeEntry, SourceDtype, TreeGeometry, ValueKind, VolumeMeta};
use crate::error::{Error, Result};
use crate::geometry;

pub const MAGIC: &[u8; 5] = b"HROV1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 5 + 4 + 24 + 24 + 4 + 4 + 1 + 1;
pub const INDEX_ENTRY_LEN: u64 = 1 + 4 + 4 + 8 + 8;

pub(crate) fn payload_start(geometry: &TreeGeometry) -> u64 {
    HEADER_LEN + INDEX_ENTRY_LEN * geometry.total_nodes() as u64
}

#[cfg(unix)]
pub(crate) fn write_at(file: &File, buf: &[u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.write_all_at(buf, offset)
}

#[cfg(unix)]
pub(crate) fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
pub(crate) fn write_at(file: &File, mut buf: &[u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_write(buf, offset)?;
        buf = &buf[n..];
        offset += n as u64;
    }
    Ok(())
}

#[cfg(windows)]
pub(crate) fn read_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        let n = file.seek_read(buf, offset)?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf = &mut buf[n..];
        offset += n as u64;
    }
    Ok(())
}

pub(crate) fn encode_payload(voxels: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(voxels.len() * 4);
    for v in voxels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_payload(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn value_kind_code(k: ValueKind) -> u8 {
    match k {
        ValueKind::Intensity => 0,
        ValueKind::Probability => 1,
    }
}

fn dtype_code(d: SourceDtype) -> u8 {
    match d {
        SourceDtype::U8 => 0,
        SourceDtype::U16 => 1,
        SourceDtype::F32 => 2,
    }
}

pub(crate) fn encode_header(meta: &VolumeMeta, geometry: &TreeGeometry) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN as usize);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    for d in meta.dims {
        h.extend_from_slice(&d.to_le_bytes());
    }
    for s in meta.spacing {
        h.extend_from_slice(&s.to_le_bytes());
    }
    h.extend_from_slice(&(geometry.brick_side() as u32).to_le_bytes());
    h.extend_from_slice(&geometry.levels().to_le_bytes());
    h.push(value_kind_code(meta.value_kind));
    h.push(dtype_code(meta.source_dtype));
    h
}

pub(crate) fn write_header_and_index(
    file: &File,
    meta: &VolumeMeta,
    geometry: &TreeGeometry,
    index: &[Vec<NodeEntry>],
) -> std::io::Result<()> {
    let mut buf = encode_header(meta, geometry);
    for level in index {
        for e in level {
            buf.push(e.mask);
            buf.extend_from_slice(&e.min.to_le_bytes());
            buf.extend_from_slice(&e.max.to_le_bytes());
            buf.extend_from_slice(&e.offset.to_le_bytes());
            buf.extend_from_slice(&e.length.to_le_bytes());
        }
    }
    write_at(file, &buf, 0)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

pub(crate) fn decode_header(buf: &[u8]) -> Result<(VolumeMeta, TreeGeometry)> {
    if buf.len() < HEADER_LEN as usize {
        return Err(Error::format(
            "header",
            format!("file has {} bytes, header needs {HEADER_LEN}", buf.len()),
        ));
    }
    if &buf[..5] != MAGIC {
        return Err(Error::format("header", "magic is not HROV1"));
    }
    let mut c = Cursor { buf, pos: 5 };
    let version = c.u32();
    if version != VERSION {
        return Err(Error::format("header", format!("unsupported version {version}")));
    }
    let dims = [c.u64(), c.u64(), c.u64()];
    let spacing = [c.f64(), c.f64(), c.f64()];
    let s = c.u32() as usize;
    let levels = c.u32();
    let value_kind = match c.u8() {
        0 => ValueKind::Intensity,
        1 => ValueKind::Probability,
        k => return Err(Error::format("header", format!("unknown value kind {k}"))),
    };
    let source_dtype = match c.u8() {
        0 => SourceDtype::U8,
        1 => SourceDtype::U16,
        2 => SourceDtype::F32,
        k => return Err(Error::format("header", format!("unknown source dtype {k}"))),
    };
    let meta = VolumeMeta {
        dims,
        spacing,
        value_kind,
        source_dtype,
    };
    let geometry = TreeGeometry::new(meta.dims_usize(), s)
        .map_err(|e| Error::format("header", e.to_string()))?;
    if geometry.levels() != levels {
        return Err(Error::format(
            "header",
            format!("levels {levels} inconsistent with dims/brick side (expected {})", geometry.levels()),
        ));
    }
    Ok((meta, geometry))
}

pub(crate) fn read_all(file: &File) -> Result<(VolumeMeta, TreeGeometry, Vec<Vec<NodeEntry>>)> {
    let len = file
        .metadata()
        .map_err(|e| Error::storage("file metadata", e))?
        .len();
    let mut head = vec![0u8; HEADER_LEN.min(len) as usize];
    read_at(file, &mut head, 0).map_err(|e| Error::storage("header", e))?;
    let (meta, geometry) = decode_header(&head)?;

    let start = payload_start(&geometry);
    if len < start {
        return Err(Error::format(
            "node index",
            format!("file has {len} bytes, index ends at {start}"),
        ));
    }
    let mut raw = vec![0u8; (start - HEADER_LEN) as usize];
    read_at(file, &mut raw, HEADER_LEN).map_err(|e| Error::storage("node index", e))?;
    let mut c = Cursor { buf: &raw, pos: 0 };
    let mut index = Vec::with_capacity(geometry.levels() as usize);
    for level in 0..geometry.levels() {
        let mut entries = Vec::with_capacity(geometry.node_count(level));
        for i in 0..geometry.node_count(level) {
            let e = NodeEntry {
                mask: c.u8(),
                min: c.f32(),
                max: c.f32(),
                offset: c.u64(),
                length: c.u64(),
            };
            if e.offset != 0 {
                let addr = geometry.address(level, i);
                let expected = 4 * geometry::volume(geometry.brick_region(addr).extent) as u64;
                if e.length != expected {
                    return Err(Error::format(
                        format!("node index entry {addr}"),
                        format!("payload length {} != {expected}", e.length),
                    ));
                }
                if e.offset < start || e.offset + e.length > len {
                    return Err(Error::format(
                        format!("payload of {addr}"),
                        format!(
                            "range {}..{} outside payload section {start}..{len}",
                            e.offset,
                            e.offset + e.length
                        ),
                    ));
                }
            }
            entries.push(e);
        }
        index.push(entries);
    }
    Ok((meta, geometry, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let meta = VolumeMeta {
            dims: [64, 32, 16],
            spacing: [1.0, 0.5, 2.0],
            value_kind: ValueKind::Probability,
            source_dtype: SourceDtype::U16,
        };
        let g = TreeGeometry::new([64, 32, 16], 32).unwrap();
        let h = encode_header(&meta, &g);
        assert_eq!(h.len() as u64, HEADER_LEN);
        assert_eq!(&h[..5], b"HROV1");
        assert_eq!(&h[5..9], &1u32.to_le_bytes());
        assert_eq!(&h[9..17], &64u64.to_le_bytes());
        assert_eq!(&h[33..41], &1.0f64.to_le_bytes());
        assert_eq!(&h[57..61], &32u32.to_le_bytes());
        assert_eq!(&h[61..65], &2u32.to_le_bytes());
        assert_eq!(h[65], 1);
        assert_eq!(h[66], 1);
        let (m2, g2) = decode_header(&h).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(g2, g);
    }

    #[test]
    fn bad_magic_and_short_header() {
        let err = decode_header(b"HROV0aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa").unwrap_err();
        assert!(err.to_string().contains("magic"));
        let err = decode_header(b"HROV1").unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn payload_codec_is_bit_exact() {
        let v = vec![0.0f32, 1.0, 0.1, f32::MIN_POSITIVE, 0.999_999_9];
        assert_eq!(decode_payload(&encode_payload(&v)), v);
    }
}
