//! Persistent bricked octree level-of-detail pyramid.
//!
//! Level 0 is the root; level `levels - 1` holds the volume at full
//! resolution. Every level is cut into bricks of at most `s³` voxels, and a
//! parent brick is the 2³ mean downsample of its children. Border bricks may be
//! smaller than `s` along axes where the volume ends, and parents at the border
//! may have fewer than eight children.

mod build;
mod format;
mod raw;
mod residency;
mod sample;

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Extent, Region};

pub use build::{build_octree, BuildStats, OctreeBuilder};
pub use format::{HEADER_LEN, INDEX_ENTRY_LEN, MAGIC, VERSION};
pub use raw::{ingest_raw, ingest_raw_with_progress, read_sidecar, sidecar_path, write_raw, AxisOrder, RawSidecar};
pub use residency::{Residency, ResidencyToken, Tracked};
pub use sample::{
    contract, expanded_side, neighborhood_region, sample_neighborhood, sample_neighborhood_tracked,
    upsample_region, Neighborhood,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Intensity,
    Probability,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceDtype {
    U8,
    U16,
    F32,
}

impl SourceDtype {
    pub fn byte_size(self) -> usize {
        match self {
            SourceDtype::U8 => 1,
            SourceDtype::U16 => 2,
            SourceDtype::F32 => 4,
        }
    }

    /// Decodes little-endian samples and maps them onto `[0, 1]`.
    ///
    /// Returns the number of f32 samples that had to be clamped.
    pub fn normalize_into(self, bytes: &[u8], out: &mut Vec<f32>) -> usize {
        out.clear();
        let mut clamped = 0;
        match self {
            SourceDtype::U8 => out.extend(bytes.iter().map(|&v| v as f32 / 255.0)),
            SourceDtype::U16 => out.extend(
                bytes
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0),
            ),
            SourceDtype::F32 => out.extend(bytes.chunks_exact(4).map(|c| {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if (0.0..=1.0).contains(&v) {
                    v
                } else {
                    clamped += 1;
                    if v.is_nan() {
                        0.0
                    } else {
                        v.clamp(0.0, 1.0)
                    }
                }
            })),
        }
        clamped
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [u64; 3],
    pub spacing: [f64; 3],
    pub value_kind: ValueKind,
    pub source_dtype: SourceDtype,
}

impl VolumeMeta {
    pub fn new(dims: [u64; 3], value_kind: ValueKind, source_dtype: SourceDtype) -> Self {
        VolumeMeta {
            dims,
            spacing: [1.0; 3],
            value_kind,
            source_dtype,
        }
    }

    pub fn dims_usize(&self) -> Extent {
        [
            self.dims[0] as usize,
            self.dims[1] as usize,
            self.dims[2] as usize,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidVolume(format!(
                "dimensions must be at least 1, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeAddress {
    pub level: u32,
    pub grid: [usize; 3],
}

impl NodeAddress {
    pub const ROOT: NodeAddress = NodeAddress {
        level: 0,
        grid: [0, 0, 0],
    };

    pub fn new(level: u32, grid: [usize; 3]) -> Self {
        NodeAddress { level, grid }
    }

    pub fn parent(&self) -> Option<NodeAddress> {
        (self.level > 0).then(|| NodeAddress {
            level: self.level - 1,
            grid: [self.grid[0] / 2, self.grid[1] / 2, self.grid[2] / 2],
        })
    }

    /// Child `i` (bit 0 = +x, bit 1 = +y, bit 2 = +z), without bounds checks.
    pub fn child(&self, i: u8) -> NodeAddress {
        NodeAddress {
            level: self.level + 1,
            grid: [
                2 * self.grid[0] + (i & 1) as usize,
                2 * self.grid[1] + ((i >> 1) & 1) as usize,
                2 * self.grid[2] + ((i >> 2) & 1) as usize,
            ],
        }
    }

    /// Index of this node among its parent's children.
    pub fn child_index(&self) -> u8 {
        ((self.grid[0] & 1) | ((self.grid[1] & 1) << 1) | ((self.grid[2] & 1) << 2)) as u8
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L{}({}, {}, {})",
            self.level, self.grid[0], self.grid[1], self.grid[2]
        )
    }
}

/// Shape of the pyramid: per-level voxel and brick grid dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeGeometry {
    dims: Extent,
    brick_side: usize,
    levels: u32,
}

impl TreeGeometry {
    pub fn new(dims: Extent, brick_side: usize) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!(
                "dimensions must be at least 1, got {dims:?}"
            )));
        }
        if brick_side < 2 {
            return Err(Error::InvalidArgument(format!(
                "brick side must be at least 2, got {brick_side}"
            )));
        }
        let bricks = dims.iter().map(|&d| d.div_ceil(brick_side)).max().unwrap_or(1);
        let levels = bricks.next_power_of_two().trailing_zeros() + 1;
        Ok(TreeGeometry {
            dims,
            brick_side,
            levels,
        })
    }

    pub fn dims(&self) -> Extent {
        self.dims
    }

    pub fn brick_side(&self) -> usize {
        self.brick_side
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn leaf_level(&self) -> u32 {
        self.levels - 1
    }

    pub fn level_dims(&self, level: u32) -> Extent {
        let shift = self.levels - 1 - level;
        self.dims.map(|d| d.div_ceil(1 << shift))
    }

    pub fn grid_dims(&self, level: u32) -> Extent {
        self.level_dims(level).map(|d| d.div_ceil(self.brick_side))
    }

    pub fn node_count(&self, level: u32) -> usize {
        geometry::volume(self.grid_dims(level))
    }

    pub fn total_nodes(&self) -> usize {
        (0..self.levels).map(|l| self.node_count(l)).sum()
    }

    pub fn node_index(&self, addr: NodeAddress) -> usize {
        geometry::linear(self.grid_dims(addr.level), addr.grid)
    }

    pub fn address(&self, level: u32, index: usize) -> NodeAddress {
        NodeAddress::new(level, geometry::delinear(self.grid_dims(level), index))
    }

    pub fn contains(&self, addr: NodeAddress) -> bool {
        addr.level < self.levels && {
            let g = self.grid_dims(addr.level);
            (0..3).all(|a| addr.grid[a] < g[a])
        }
    }

    pub fn check(&self, addr: NodeAddress) -> Result<()> {
        if self.contains(addr) {
            Ok(())
        } else {
            Err(Error::InvalidAddress {
                addr,
                reason: if addr.level >= self.levels {
                    format!("tree has {} levels", self.levels)
                } else {
                    format!("grid is {:?}", self.grid_dims(addr.level))
                },
            })
        }
    }

    /// Voxel region of a node in level-local coordinates.
    pub fn brick_region(&self, addr: NodeAddress) -> Region {
        let dims = self.level_dims(addr.level);
        let s = self.brick_side;
        let origin = addr.grid.map(|g| g * s);
        let extent = [
            s.min(dims[0] - origin[0]),
            s.min(dims[1] - origin[1]),
            s.min(dims[2] - origin[2]),
        ];
        Region::new(origin, extent)
    }

    pub fn level_region(&self, level: u32) -> Region {
        Region::new([0; 3], self.level_dims(level))
    }

    /// Children that exist inside the next level's grid.
    pub fn children(&self, addr: NodeAddress) -> impl Iterator<Item = NodeAddress> + '_ {
        let leaf = addr.level + 1 >= self.levels;
        (0..8u8)
            .map(move |i| addr.child(i))
            .filter(move |c| !leaf && self.contains(*c))
    }

    /// Bricks of `level` that overlap `region` (level-local voxel coordinates).
    pub fn bricks_overlapping(&self, level: u32, region: &Region) -> Vec<NodeAddress> {
        if region.is_empty() {
            return Vec::new();
        }
        let s = self.brick_side;
        let g = self.grid_dims(level);
        let hi = region.hi();
        let lo_b = region.origin.map(|o| o / s);
        let hi_b = [
            (hi[0].div_ceil(s)).min(g[0]),
            (hi[1].div_ceil(s)).min(g[1]),
            (hi[2].div_ceil(s)).min(g[2]),
        ];
        let mut out = Vec::new();
        for z in lo_b[2]..hi_b[2] {
            for y in lo_b[1]..hi_b[1] {
                for x in lo_b[0]..hi_b[0] {
                    out.push(NodeAddress::new(level, [x, y, z]));
                }
            }
        }
        out
    }
}

/// A block of at most `s³` normalized voxels with cached min / max.
#[derive(Clone, Debug, PartialEq)]
pub struct Brick {
    extent: Extent,
    voxels: Vec<f32>,
    min: f32,
    max: f32,
}

impl Brick {
    pub fn new(extent: Extent, voxels: Vec<f32>) -> Result<Self> {
        if voxels.len() != geometry::volume(extent) {
            return Err(Error::InvalidArgument(format!(
                "brick extent {extent:?} needs {} voxels, got {}",
                geometry::volume(extent),
                voxels.len()
            )));
        }
        let (min, max) = min_max(&voxels);
        Ok(Brick {
            extent,
            voxels,
            min,
            max,
        })
    }

    pub fn constant(extent: Extent, value: f32) -> Self {
        Brick {
            extent,
            voxels: vec![value; geometry::volume(extent)],
            min: value,
            max: value,
        }
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    pub fn min(&self) -> f32 {
        self.min
    }

    pub fn max(&self) -> f32 {
        self.max
    }

    pub fn stats(&self) -> (f32, f32) {
        (self.min, self.max)
    }

    pub fn get(&self, p: [usize; 3]) -> f32 {
        self.voxels[geometry::linear(self.extent, p)]
    }
}

pub(crate) fn min_max(v: &[f32]) -> (f32, f32) {
    v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct NodeEntry {
    pub mask: u8,
    pub min: f32,
    pub max: f32,
    pub offset: u64,
    pub length: u64,
}

impl NodeEntry {
    fn present(&self) -> bool {
        self.offset != 0
    }
}

/// In-memory bricks keyed by (level, node index).
type BrickMap = HashMap<(u32, usize), Arc<Vec<f32>>>;

enum Store {
    Memory(RwLock<BrickMap>),
    File(FileStore),
}

struct FileStore {
    path: PathBuf,
    file: File,
    end: Mutex<u64>,
    dirty: AtomicBool,
}

/// Bricked LOD pyramid backed by memory or by an HROV1 file.
///
/// Reads are shareable across threads. Concurrent writes of distinct nodes are
/// allowed; each node's index entry is updated atomically.
pub struct OctreeVolume {
    meta: VolumeMeta,
    geometry: TreeGeometry,
    index: RwLock<Vec<Vec<NodeEntry>>>,
    store: Store,
}

impl fmt::Debug for OctreeVolume {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OctreeVolume")
            .field("meta", &self.meta)
            .field("geometry", &self.geometry)
            .field("path", &self.path())
            .finish()
    }
}

impl OctreeVolume {
    fn empty_index(geometry: &TreeGeometry) -> Vec<Vec<NodeEntry>> {
        (0..geometry.levels())
            .map(|l| vec![NodeEntry::default(); geometry.node_count(l)])
            .collect()
    }

    pub fn in_memory(meta: VolumeMeta, brick_side: usize) -> Result<Self> {
        meta.validate()?;
        let geometry = TreeGeometry::new(meta.dims_usize(), brick_side)?;
        Ok(OctreeVolume {
            index: RwLock::new(Self::empty_index(&geometry)),
            meta,
            geometry,
            store: Store::Memory(RwLock::new(HashMap::new())),
        })
    }

    /// Creates an empty HROV1 file. Payloads are appended as bricks are
    /// written; the node index is written by [`OctreeVolume::flush`].
    pub fn create_file(path: impl AsRef<Path>, meta: VolumeMeta, brick_side: usize) -> Result<Self> {
        meta.validate()?;
        let path = path.as_ref().to_path_buf();
        let geometry = TreeGeometry::new(meta.dims_usize(), brick_side)?;
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)
            .map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
        let index = Self::empty_index(&geometry);
        let end = format::payload_start(&geometry);
        let tree = OctreeVolume {
            meta,
            geometry,
            index: RwLock::new(index),
            store: Store::File(FileStore {
                path,
                file,
                end: Mutex::new(end),
                dirty: AtomicBool::new(true),
            }),
        };
        tree.flush()?;
        Ok(tree)
    }

    /// Opens an existing HROV1 file, validating header and node index.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .open(&path)
            .or_else(|_| File::open(&path))
            .map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
        let (meta, geometry, index) = format::read_all(&file)?;
        let end = file
            .metadata()
            .map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?
            .len();
        Ok(OctreeVolume {
            meta,
            geometry,
            index: RwLock::new(index),
            store: Store::File(FileStore {
                path,
                file,
                end: Mutex::new(end),
                dirty: AtomicBool::new(false),
            }),
        })
    }

    pub fn meta(&self) -> &VolumeMeta {
        &self.meta
    }

    pub fn geometry(&self) -> &TreeGeometry {
        &self.geometry
    }

    pub fn levels(&self) -> u32 {
        self.geometry.levels()
    }

    pub fn brick_side(&self) -> usize {
        self.geometry.brick_side()
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.store {
            Store::Memory(_) => None,
            Store::File(f) => Some(&f.path),
        }
    }

    pub fn is_file_backed(&self) -> bool {
        matches!(self.store, Store::File(_))
    }

    fn entry(&self, addr: NodeAddress) -> Result<NodeEntry> {
        self.geometry.check(addr)?;
        let i = self.geometry.node_index(addr);
        Ok(self.index.read()[addr.level as usize][i])
    }

    pub fn contains(&self, addr: NodeAddress) -> Result<bool> {
        Ok(self.entry(addr)?.present())
    }

    /// Cached (min, max) of a stored brick.
    pub fn stats(&self, addr: NodeAddress) -> Result<Option<(f32, f32)>> {
        let e = self.entry(addr)?;
        Ok(e.present().then_some((e.min, e.max)))
    }

    /// Bit `i` is set when child `i` is stored.
    pub fn child_mask(&self, addr: NodeAddress) -> Result<u8> {
        Ok(self.entry(addr)?.mask)
    }

    pub fn present_count(&self, level: u32) -> usize {
        self.index.read()[level as usize]
            .iter()
            .filter(|e| e.present())
            .count()
    }

    pub fn write_brick(&self, addr: NodeAddress, brick: &Brick) -> Result<()> {
        self.geometry.check(addr)?;
        let region = self.geometry.brick_region(addr);
        if brick.extent() != region.extent {
            return Err(Error::InvalidArgument(format!(
                "brick for {addr} must have extent {:?}, got {:?}",
                region.extent,
                brick.extent()
            )));
        }
        let i = self.geometry.node_index(addr);
        let length = (brick.voxels().len() * 4) as u64;
        let offset = match &self.store {
            Store::Memory(map) => {
                map.write()
                    .insert((addr.level, i), Arc::new(brick.voxels().to_vec()));
                1
            }
            Store::File(fs) => {
                let bytes = format::encode_payload(brick.voxels());
                let offset = {
                    let mut end = fs.end.lock();
                    let o = *end;
                    *end += length;
                    o
                };
                format::write_at(&fs.file, &bytes, offset)
                    .map_err(|e| Error::storage(format!("payload of {addr}"), e))?;
                fs.dirty.store(true, Ordering::Release);
                offset
            }
        };
        let mut index = self.index.write();
        let entry = &mut index[addr.level as usize][i];
        entry.offset = offset;
        entry.length = length;
        entry.min = brick.min();
        entry.max = brick.max();
        if let Some(parent) = addr.parent() {
            let pi = self.geometry.node_index(parent);
            index[parent.level as usize][pi].mask |= 1 << addr.child_index();
        }
        Ok(())
    }

    /// Returns the stored brick, or `None` when the node was never written.
    pub fn read_brick(&self, addr: NodeAddress) -> Result<Option<Brick>> {
        let entry = self.entry(addr)?;
        if !entry.present() {
            return Ok(None);
        }
        let extent = self.geometry.brick_region(addr).extent;
        let voxels = match &self.store {
            Store::Memory(map) => {
                let i = self.geometry.node_index(addr);
                match map.read().get(&(addr.level, i)) {
                    Some(v) => v.as_ref().clone(),
                    None => return Ok(None),
                }
            }
            Store::File(fs) => {
                let mut bytes = vec![0u8; entry.length as usize];
                format::read_at(&fs.file, &mut bytes, entry.offset)
                    .map_err(|e| Error::storage(format!("payload of {addr}"), e))?;
                format::decode_payload(&bytes)
            }
        };
        if voxels.len() != geometry::volume(extent) {
            return Err(Error::format(
                format!("payload of {addr}"),
                format!("expected {} voxels, found {}", geometry::volume(extent), voxels.len()),
            ));
        }
        Ok(Some(Brick {
            extent,
            voxels,
            min: entry.min,
            max: entry.max,
        }))
    }

    /// Like [`OctreeVolume::read_brick`], counting the brick as resident in
    /// `residency` until the returned handle is dropped.
    pub fn read_brick_tracked(
        &self,
        addr: NodeAddress,
        residency: &Arc<Residency>,
    ) -> Result<Option<Tracked<Brick>>> {
        Ok(self.read_brick(addr)?.map(|b| {
            let token = residency.acquire_brick(b.voxels().len());
            Tracked::new(b, token)
        }))
    }

    /// Writes header and node index of a file-backed tree. No-op in memory.
    pub fn flush(&self) -> Result<()> {
        if let Store::File(fs) = &self.store {
            if fs.dirty.swap(false, Ordering::AcqRel) {
                let index = self.index.read();
                format::write_header_and_index(&fs.file, &self.meta, &self.geometry, &index)
                    .map_err(|e| Error::storage(format!("index of {}", fs.path.display()), e))?;
            }
        }
        Ok(())
    }

    /// Writes every stored brick into a new HROV1 file.
    pub fn save_as(&self, path: impl AsRef<Path>) -> Result<OctreeVolume> {
        let out = OctreeVolume::create_file(path, self.meta.clone(), self.brick_side())?;
        for level in 0..self.levels() {
            for i in 0..self.geometry.node_count(level) {
                let addr = self.geometry.address(level, i);
                if let Some(b) = self.read_brick(addr)? {
                    out.write_brick(addr, &b)?;
                }
            }
        }
        out.flush()?;
        Ok(out)
    }

    /// Copies a stored node from another tree with the same geometry.
    pub fn copy_node_from(&self, other: &OctreeVolume, addr: NodeAddress) -> Result<bool> {
        match other.read_brick(addr)? {
            Some(b) => {
                self.write_brick(addr, &b)?;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

impl Drop for OctreeVolume {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::warn!("failed to flush octree index: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(d: u64) -> VolumeMeta {
        VolumeMeta::new([d, d, d], ValueKind::Intensity, SourceDtype::F32)
    }

    #[test]
    fn level_counts() {
        assert_eq!(TreeGeometry::new([32; 3], 32).unwrap().levels(), 1);
        assert_eq!(TreeGeometry::new([64; 3], 32).unwrap().levels(), 2);
        assert_eq!(TreeGeometry::new([65; 3], 32).unwrap().levels(), 3);
        assert_eq!(TreeGeometry::new([512; 3], 32).unwrap().levels(), 5);
        assert_eq!(TreeGeometry::new([1, 1, 1], 32).unwrap().levels(), 1);
        let g = TreeGeometry::new([300, 40, 7], 32).unwrap();
        assert_eq!(g.levels(), 5);
        assert_eq!(g.grid_dims(0), [1, 1, 1]);
        assert_eq!(g.grid_dims(4), [10, 2, 1]);
        assert_eq!(g.level_dims(3), [150, 20, 4]);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(
            TreeGeometry::new([0, 4, 4], 32),
            Err(Error::InvalidVolume(_))
        ));
        assert!(TreeGeometry::new([4, 4, 4], 1).is_err());
    }

    #[test]
    fn address_algebra() {
        let a = NodeAddress::new(2, [3, 1, 2]);
        for i in 0..8 {
            let c = a.child(i);
            assert_eq!(c.parent(), Some(a));
            assert_eq!(c.child_index(), i);
        }
        assert_eq!(NodeAddress::ROOT.parent(), None);
    }

    #[test]
    fn border_bricks_are_clipped() {
        let g = TreeGeometry::new([40, 32, 10], 32).unwrap();
        assert_eq!(g.levels(), 2);
        assert_eq!(
            g.brick_region(NodeAddress::new(1, [1, 0, 0])).extent,
            [8, 32, 10]
        );
        assert_eq!(g.brick_region(NodeAddress::ROOT).extent, [20, 16, 5]);
        assert_eq!(g.children(NodeAddress::ROOT).count(), 2);
    }

    #[test]
    fn memory_write_read_roundtrip_is_exact() {
        let tree = OctreeVolume::in_memory(meta(64), 32).unwrap();
        let addr = NodeAddress::new(1, [1, 0, 1]);
        let v: Vec<f32> = (0..32 * 32 * 32).map(|i| (i as f32 * 0.37).sin().abs()).collect();
        let brick = Brick::new([32; 3], v).unwrap();
        assert_eq!(tree.read_brick(addr).unwrap(), None);
        tree.write_brick(addr, &brick).unwrap();
        assert_eq!(tree.read_brick(addr).unwrap().unwrap(), brick);
        assert_eq!(tree.child_mask(NodeAddress::ROOT).unwrap(), 1 << 5);
        assert_eq!(tree.stats(addr).unwrap(), Some(brick.stats()));
    }

    #[test]
    fn out_of_bounds_address_is_invalid() {
        let tree = OctreeVolume::in_memory(meta(64), 32).unwrap();
        let err = tree.read_brick(NodeAddress::new(1, [2, 0, 0])).unwrap_err();
        assert!(matches!(err, Error::InvalidAddress { .. }));
        assert!(tree.read_brick(NodeAddress::new(2, [0, 0, 0])).is_err());
    }

    #[test]
    fn wrong_extent_rejected() {
        let tree = OctreeVolume::in_memory(meta(64), 32).unwrap();
        let b = Brick::constant([16, 32, 32], 0.5);
        assert!(tree.write_brick(NodeAddress::ROOT, &b).is_err());
    }

    #[test]
    fn file_roundtrip_through_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hrov");
        let addr = NodeAddress::new(1, [0, 1, 0]);
        let brick = Brick::new([32; 3], (0..32768).map(|i| (i % 97) as f32 / 97.0).collect()).unwrap();
        {
            let tree = OctreeVolume::create_file(&path, meta(64), 32).unwrap();
            tree.write_brick(addr, &brick).unwrap();
            tree.write_brick(NodeAddress::ROOT, &Brick::constant([32; 3], 0.25)).unwrap();
            tree.flush().unwrap();
        }
        let tree = OctreeVolume::open(&path).unwrap();
        assert_eq!(tree.meta(), &meta(64));
        assert_eq!(tree.read_brick(addr).unwrap().unwrap(), brick);
        assert_eq!(tree.read_brick(NodeAddress::new(1, [1, 1, 1])).unwrap(), None);
        assert_eq!(tree.child_mask(NodeAddress::ROOT).unwrap(), 1 << 2);
        assert_eq!(tree.stats(NodeAddress::ROOT).unwrap(), Some((0.25, 0.25)));
    }

    #[test]
    fn tracked_reads_count_residency() {
        let tree = OctreeVolume::in_memory(meta(32), 32).unwrap();
        tree.write_brick(NodeAddress::ROOT, &Brick::constant([32; 3], 0.1)).unwrap();
        let res = Arc::new(Residency::default());
        {
            let a = tree.read_brick_tracked(NodeAddress::ROOT, &res).unwrap().unwrap();
            let _b = tree.read_brick_tracked(NodeAddress::ROOT, &res).unwrap().unwrap();
            assert_eq!(a.max(), 0.1);
            assert_eq!(res.resident_bricks(), 2);
        }
        assert_eq!(res.resident_bricks(), 0);
        assert_eq!(res.peak_bricks(), 2);
    }
}
