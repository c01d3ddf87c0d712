use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rw::{SolverConfig, WeightSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pruning {
    pub hom_enabled: bool,
    /// Only meaningful for binary results; multi-class runs force it off.
    pub dt_enabled: bool,
}

impl Default for Pruning {
    fn default() -> Self {
        Pruning {
            hom_enabled: true,
            dt_enabled: true,
        }
    }
}

impl Pruning {
    pub const NONE: Pruning = Pruning {
        hom_enabled: false,
        dt_enabled: false,
    };
}

/// Engine parameters. Serialized field names are the JSON configuration keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Brick side used when building input trees; runs use the input tree's own side.
    pub brick_side: usize,
    pub expansion: f64,
    pub t_hom: f64,
    pub t_bin: f64,
    pub t_inc: f64,
    pub weight: WeightSpec,
    pub solver: SolverConfig,
    pub pruning: Pruning,
    pub worker_count: usize,
    /// Also pin the parts of the neighborhood shell that lie on the volume border.
    pub seed_volume_faces: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            brick_side: 32,
            expansion: 1.25,
            t_hom: 0.3,
            t_bin: 0.01,
            t_inc: 0.01,
            weight: WeightSpec::default(),
            solver: SolverConfig::default(),
            pruning: Pruning::default(),
            worker_count: crate::par::default_workers(),
            seed_volume_faces: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("t_hom", self.t_hom)?;
        unit("t_bin", self.t_bin)?;
        unit("t_inc", self.t_inc)?;
        if self.brick_side < 2 {
            return Err(Error::InvalidArgument("brick_side must be at least 2".into()));
        }
        if self.worker_count == 0 {
            return Err(Error::InvalidArgument("worker_count must be at least 1".into()));
        }
        crate::octree::expanded_side(self.brick_side, self.expansion)?;
        self.weight.validate()?;
        self.solver.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EngineConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
