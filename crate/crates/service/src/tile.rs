//! Slice tiles on the wire.
//!
//! HRT1 layout, little endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `HRT1`                   |
//! | 4      | 4    | width (u32)                    |
//! | 8      | 4    | height (u32)                   |
//! | 12     | 1    | dtype: 1 = f32, 2 = u32        |
//! | 13     | 3    | zero                           |
//! | 16     | 8    | revision (u64)                 |
//! | 24     | 4·w·h| row-major payload, x fastest   |

use crate::error::ApiError;

pub const TILE_MAGIC: [u8; 4] = *b"HRT1";
pub const TILE_HEADER_LEN: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub enum TileData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TileData {
    fn dtype(&self) -> u8 {
        match self {
            TileData::F32(_) => 1,
            TileData::U32(_) => 2,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TileData::F32(v) => v.len(),
            TileData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tile {
    pub width: u32,
    pub height: u32,
    pub revision: u64,
    pub data: TileData,
}

impl Tile {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TILE_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&TILE_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&[self.data.dtype(), 0, 0, 0]);
        out.extend_from_slice(&self.revision.to_le_bytes());
        match &self.data {
            TileData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TileData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Tile, String> {
        if bytes.len() < TILE_HEADER_LEN || bytes[..4] != TILE_MAGIC {
            return Err("not an HRT1 tile".into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let (width, height) = (u32_at(4), u32_at(8));
        let revision = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
        let payload = &bytes[TILE_HEADER_LEN..];
        let n = width as usize * height as usize;
        if payload.len() != 4 * n {
            return Err(format!("payload has {} bytes, {width}x{height} needs {}", payload.len(), 4 * n));
        }
        let words = payload.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
        let data = match bytes[12] {
            1 => TileData::F32(words.map(f32::from_le_bytes).collect()),
            2 => TileData::U32(words.map(u32::from_le_bytes).collect()),
            d => return Err(format!("unknown dtype {d}")),
        };
        Ok(Tile {
            width,
            height,
            revision,
            data,
        })
    }

    /// Grayscale PNG. Scalars in [0, 1] map to 8 bits; labels are written
    /// verbatim at 8 or 16 bits depending on the largest id.
    pub fn to_png(&self) -> Result<Vec<u8>, ApiError> {
        let (depth, pixels) = match &self.data {
            TileData::F32(v) => (
                png::BitDepth::Eight,
                v.iter().map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
            ),
            TileData::U32(v) if v.iter().all(|&c| c <= u32::from(u8::MAX)) => {
                (png::BitDepth::Eight, v.iter().map(|&c| c as u8).collect())
            }
            TileData::U32(v) if v.iter().all(|&c| c <= u32::from(u16::MAX)) => (
                png::BitDepth::Sixteen,
                v.iter().flat_map(|&c| (c as u16).to_be_bytes()).collect::<Vec<u8>>(),
            ),
            TileData::U32(_) => return Err(ApiError::BadRequest("class ids above 65535 have no PNG rendition".into())),
        };
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width, self.height);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(|e| ApiError::Internal(e.to_string()))?;
        writer.write_image_data(&pixels).map_err(|e| ApiError::Internal(e.to_string()))?;
        writer.finish().map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_round_trip() {
        for data in [TileData::F32(vec![0.0, 0.25, 1.0, -2.5, 7.0, 0.5]), TileData::U32(vec![0, 1, 2, 3, 70000, 9])] {
            let t = Tile {
                width: 3,
                height: 2,
                revision: 42,
                data,
            };
            let bytes = t.encode();
            assert_eq!(bytes.len(), TILE_HEADER_LEN + 24);
            assert_eq!(Tile::decode(&bytes).unwrap(), t);
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let t = Tile {
            width: 2,
            height: 2,
            revision: 1,
            data: TileData::U32(vec![1; 4]),
        };
        let bytes = t.encode();
        assert!(Tile::decode(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn png_decodes_to_the_same_labels() {
        let t = Tile {
            width: 4,
            height: 1,
            revision: 0,
            data: TileData::U32(vec![0, 1, 2, 300]),
        };
        let png = t.to_png().unwrap();
        let mut dec = png::Decoder::new(std::io::Cursor::new(png)).read_info().unwrap();
        let mut buf = vec![0; dec.output_buffer_size().unwrap()];
        let info = dec.next_frame(&mut buf).unwrap();
        assert_eq!(info.bit_depth, png::BitDepth::Sixteen);
        let vals: Vec<u16> = buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        assert_eq!(vals, vec![0, 1, 2, 300]);
    }
}
