use std::ops::Deref;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Counts buffers a computation currently holds in memory: raw bricks,
/// assembled neighborhoods and per-node working buffers. Every buffer also
/// adds its voxel count to a shared total whose peak is the memory measure.
#[derive(Debug, Default)]
pub struct Residency {
    bricks: AtomicUsize,
    peak_bricks: AtomicUsize,
    neighborhoods: AtomicUsize,
    peak_neighborhoods: AtomicUsize,
    voxels: AtomicUsize,
    peak_voxels: AtomicUsize,
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Brick,
    Neighborhood,
    Buffer,
}

impl Residency {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn bump(live: &AtomicUsize, peak: &AtomicUsize, by: usize) {
        let now = live.fetch_add(by, Ordering::AcqRel) + by;
        peak.fetch_max(now, Ordering::AcqRel);
    }

    fn acquire(self: &Arc<Self>, kind: Kind, voxels: usize) -> ResidencyToken {
        match kind {
            Kind::Brick => Self::bump(&self.bricks, &self.peak_bricks, 1),
            Kind::Neighborhood => Self::bump(&self.neighborhoods, &self.peak_neighborhoods, 1),
            Kind::Buffer => {}
        }
        Self::bump(&self.voxels, &self.peak_voxels, voxels);
        ResidencyToken {
            owner: Arc::clone(self),
            kind,
            voxels,
        }
    }

    pub fn acquire_brick(self: &Arc<Self>, voxels: usize) -> ResidencyToken {
        self.acquire(Kind::Brick, voxels)
    }

    pub fn acquire_neighborhood(self: &Arc<Self>, voxels: usize) -> ResidencyToken {
        self.acquire(Kind::Neighborhood, voxels)
    }

    /// Any other voxel buffer, such as solver state for one node.
    pub fn acquire_buffer(self: &Arc<Self>, voxels: usize) -> ResidencyToken {
        self.acquire(Kind::Buffer, voxels)
    }

    pub fn resident_bricks(&self) -> usize {
        self.bricks.load(Ordering::Acquire)
    }

    pub fn peak_bricks(&self) -> usize {
        self.peak_bricks.load(Ordering::Acquire)
    }

    pub fn resident_neighborhoods(&self) -> usize {
        self.neighborhoods.load(Ordering::Acquire)
    }

    pub fn peak_neighborhoods(&self) -> usize {
        self.peak_neighborhoods.load(Ordering::Acquire)
    }

    pub fn resident_voxels(&self) -> usize {
        self.voxels.load(Ordering::Acquire)
    }

    pub fn peak_voxels(&self) -> usize {
        self.peak_voxels.load(Ordering::Acquire)
    }

    /// Peak resident voxels in units of full `side³` bricks, rounded up.
    pub fn peak_brick_equivalents(&self, side: usize) -> usize {
        self.peak_voxels().div_ceil(side.pow(3))
    }
}

/// Releases its counts when dropped.
#[derive(Debug)]
pub struct ResidencyToken {
    owner: Arc<Residency>,
    kind: Kind,
    voxels: usize,
}

impl Drop for ResidencyToken {
    fn drop(&mut self) {
        match self.kind {
            Kind::Brick => self.owner.bricks.fetch_sub(1, Ordering::AcqRel),
            Kind::Neighborhood => self.owner.neighborhoods.fetch_sub(1, Ordering::AcqRel),
            Kind::Buffer => 0,
        };
        self.owner.voxels.fetch_sub(self.voxels, Ordering::AcqRel);
    }
}

/// A value that counts as resident while alive.
#[derive(Debug)]
pub struct Tracked<T> {
    value: T,
    _token: ResidencyToken,
}

impl<T> Tracked<T> {
    pub fn new(value: T, token: ResidencyToken) -> Self {
        Tracked {
            value,
            _token: token,
        }
    }
}

impl<T> Deref for Tracked<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.value
    }
}
