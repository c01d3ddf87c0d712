use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::octree::TreeGeometry;
use crate::rw::{LocalGeometry, LocalLabel};

/// Label geometry in full-resolution voxel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Point { position: [f64; 3] },
    Polyline { vertices: Vec<[f64; 3]> },
}

impl Geometry {
    fn vertices(&self) -> &[[f64; 3]] {
        match self {
            Geometry::Point { position } => std::slice::from_ref(position),
            Geometry::Polyline { vertices } => vertices,
        }
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in self.vertices() {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }
}

/// A user label. `seed_value` is 1 (foreground) or 0 (background) for its class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Label {
    /// Zero means unassigned; [`LabelSet`] assigns ids on insertion.
    #[serde(default)]
    pub id: u64,
    #[serde(default)]
    pub class_id: u32,
    pub geometry: Geometry,
    pub seed_value: f64,
}

impl Label {
    pub fn point(class_id: u32, position: [f64; 3], seed_value: f64) -> Self {
        Label {
            id: 0,
            class_id,
            geometry: Geometry::Point { position },
            seed_value,
        }
    }

    pub fn polyline(class_id: u32, vertices: Vec<[f64; 3]>, seed_value: f64) -> Self {
        Label {
            id: 0,
            class_id,
            geometry: Geometry::Polyline { vertices },
            seed_value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vs = self.geometry.vertices();
        if let Geometry::Polyline { vertices } = &self.geometry {
            if vertices.len() < 2 {
                return Err(Error::Seeds(format!("label {} has a polyline with fewer than 2 vertices", self.id)));
            }
        }
        if vs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Seeds(format!("label {} has non-finite coordinates", self.id)));
        }
        if !(0.0..=1.0).contains(&self.seed_value) {
            return Err(Error::Seeds(format!("label {} seed value {} outside [0, 1]", self.id, self.seed_value)));
        }
        Ok(())
    }

    /// Seed value this label imposes when solving for `class`: labels of other
    /// classes are background.
    pub fn value_for(&self, class: u32) -> f64 {
        if self.class_id == class {
            self.seed_value
        } else {
            0.0
        }
    }
}

/// The user label set. Serializes as a plain JSON array of labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet {
    labels: Vec<Label>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates labels and assigns ids to those without one.
    pub fn from_labels(labels: impl IntoIterator<Item = Label>) -> Result<Self> {
        let mut set = LabelSet::new();
        for l in labels {
            set.add(l)?;
        }
        Ok(set)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let labels: Vec<Label> = serde_json::from_str(text)?;
        Self::from_labels(labels)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.labels).expect("labels serialize")
    }

    /// Adds a label, returning its id.
    pub fn add(&mut self, mut label: Label) -> Result<u64> {
        label.validate()?;
        if label.id == 0 {
            label.id = self.labels.iter().map(|l| l.id).max().unwrap_or(0) + 1;
        } else if self.get(label.id).is_some() {
            return Err(Error::Seeds(format!("duplicate label id {}", label.id)));
        }
        let id = label.id;
        self.labels.push(label);
        Ok(id)
    }

    pub fn remove(&mut self, id: u64) -> Result<Label> {
        let pos = self
            .labels
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::Seeds(format!("no label with id {id}")))?;
        Ok(self.labels.remove(pos))
    }

    pub fn get(&self, id: u64) -> Option<&Label> {
        self.labels.iter().find(|l| l.id == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Label> {
        self.labels.iter()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.labels.iter().map(|l| l.class_id).collect()
    }

    /// Checks that solving for `class` has at least one foreground and one
    /// background seed.
    pub fn check_class(&self, class: u32) -> Result<()> {
        let (mut fg, mut bg) = (false, false);
        for l in &self.labels {
            let v = l.value_for(class);
            fg |= v > 0.5;
            bg |= v < 0.5;
        }
        match (fg, bg) {
            (true, true) => Ok(()),
            (false, _) => Err(Error::Seeds(format!("class {class} has no foreground seeds"))),
            (_, false) => Err(Error::Seeds(format!("class {class} has no background seeds"))),
        }
    }

    /// Labels present here but not (identically) in `previous`.
    pub fn added_since(&self, previous: &LabelSet) -> BTreeSet<u64> {
        let old: BTreeMap<u64, &Label> = previous.labels.iter().map(|l| (l.id, l)).collect();
        self.labels
            .iter()
            .filter(|l| old.get(&l.id) != Some(l))
            .map(|l| l.id)
            .collect()
    }

    /// Whether every label of `previous` is still present unchanged.
    pub fn extends(&self, previous: &LabelSet) -> bool {
        previous.labels.iter().all(|l| self.get(l.id) == Some(l))
    }
}

/// Maps labels into the frame of `frame` (level-local voxel coordinates at
/// `level`): coordinates are scaled by `2^(level − leaf)` and translated to the
/// frame origin. Labels whose bounds miss the frame are dropped.
pub fn transform_labels(
    labels: &LabelSet,
    class: u32,
    geometry: &TreeGeometry,
    level: u32,
    frame: &Region,
    fresh: &BTreeSet<u64>,
) -> Vec<LocalLabel> {
    let scale = 0.5f64.powi((geometry.leaf_level() - level) as i32);
    let origin = frame.origin.map(|o| o as f64);
    let ext = frame.extent.map(|e| e as f64);
    let map = |v: &[f64; 3]| [0, 1, 2].map(|a| v[a] * scale - origin[a]);
    labels
        .iter()
        .filter_map(|l| {
            let (lo, hi) = l.geometry.bounds();
            let (lo, hi) = (map(&lo), map(&hi));
            if (0..3).any(|a| hi[a] < 0.0 || lo[a] >= ext[a]) {
                return None;
            }
            let geometry = match &l.geometry {
                Geometry::Point { position } => LocalGeometry::Point(map(position)),
                Geometry::Polyline { vertices } => LocalGeometry::Polyline(vertices.iter().map(map).collect()),
            };
            Some(LocalLabel {
                geometry,
                value: l.value_for(class),
                fresh: fresh.contains(&l.id),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local_point(l: &LocalLabel) -> [f64; 3] {
        match l.geometry {
            LocalGeometry::Point(p) => p,
            _ => panic!("not a point"),
        }
    }

    #[test]
    fn leaf_origin_is_identity() {
        let g = TreeGeometry::new([64; 3], 32).unwrap();
        let set = LabelSet::from_labels([Label::point(0, [3.5, 4.5, 5.5], 1.0)]).unwrap();
        let out = transform_labels(&set, 0, &g, 1, &g.brick_region(crate::octree::NodeAddress::new(1, [0; 3])), &BTreeSet::new());
        assert_eq!(local_point(&out[0]), [3.5, 4.5, 5.5]);
        assert_eq!(out[0].value, 1.0);
    }

    #[test]
    fn root_halves_coordinates() {
        let g = TreeGeometry::new([64, 32, 32], 32).unwrap();
        let set = LabelSet::from_labels([Label::point(0, [62.0, 2.0, 0.0], 0.0)]).unwrap();
        let out = transform_labels(&set, 0, &g, 0, &g.level_region(0), &BTreeSet::new());
        assert_eq!(local_point(&out[0]), [31.0, 1.0, 0.0]);
    }

    #[test]
    fn labels_outside_frame_dropped_and_classes_complemented() {
        let g = TreeGeometry::new([64; 3], 32).unwrap();
        let set = LabelSet::from_labels([
            Label::point(0, [40.0, 1.0, 1.0], 1.0),
            Label::point(2, [1.0, 1.0, 1.0], 1.0),
        ])
        .unwrap();
        let frame = Region::new([0; 3], [32; 3]);
        let fresh = BTreeSet::from([2]);
        let out = transform_labels(&set, 0, &g, 1, &frame, &fresh);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value, 0.0);
        assert!(out[0].fresh);
    }

    #[test]
    fn label_set_ids_and_json() {
        let mut set = LabelSet::new();
        let a = set.add(Label::point(0, [1.0; 3], 1.0)).unwrap();
        let b = set.add(Label::polyline(1, vec![[0.0; 3], [2.0; 3]], 1.0)).unwrap();
        assert_eq!((a, b), (1, 2));
        assert!(set.add(Label::polyline(1, vec![[0.0; 3]], 1.0)).is_err());
        assert!(set.add(Label::point(0, [f64::NAN, 0.0, 0.0], 1.0)).is_err());
        let back = LabelSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
        let doc = r#"[{"class_id": 0, "geometry": {"type": "point", "position": [1, 2, 3]}, "seed_value": 1}]"#;
        let parsed = LabelSet::from_json(doc).unwrap();
        assert_eq!(parsed.get(1).unwrap().class_id, 0);
        assert!(set.remove(7).is_err());
        set.remove(a).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn class_checks_and_additions() {
        let set = LabelSet::from_labels([
            Label::point(0, [1.0; 3], 1.0),
            Label::point(1, [2.0; 3], 1.0),
            Label::point(2, [3.0; 3], 1.0),
        ])
        .unwrap();
        for c in 0..3 {
            set.check_class(c).unwrap();
        }
        let err = set.check_class(5).unwrap_err().to_string();
        assert!(err.contains("class 5"), "{err}");
        let only_fg = LabelSet::from_labels([Label::point(0, [1.0; 3], 1.0)]).unwrap();
        assert!(only_fg.check_class(0).unwrap_err().to_string().contains("background"));

        let mut more = set.clone();
        let id = more.add(Label::point(0, [4.0; 3], 1.0)).unwrap();
        assert_eq!(more.added_since(&set), BTreeSet::from([id]));
        assert!(more.extends(&set));
        assert!(!set.extends(&more));
    }
}
