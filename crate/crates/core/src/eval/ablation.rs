use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::report::{segment_and_score, RunReport};
use crate::engine::{EngineConfig, Pruning, RunControl};
use crate::error::Result;
use crate::synth::GeneratedInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSetting {
    pub pruning: Pruning,
    pub brick_side: usize,
}

impl AblationSetting {
    /// {none, hom, dt, both} at one brick side.
    pub fn pruning_grid(brick_side: usize) -> Vec<Self> {
        [(false, false), (true, false), (false, true), (true, true)]
            .into_iter()
            .map(|(hom, dt)| AblationSetting {
                pruning: Pruning {
                    hom_enabled: hom,
                    dt_enabled: dt,
                },
                brick_side,
            })
            .collect()
    }

    pub fn name(&self) -> String {
        let p = match (self.pruning.hom_enabled, self.pruning.dt_enabled) {
            (false, false) => "none",
            (true, false) => "hom",
            (false, true) => "dt",
            (true, true) => "hom+dt",
        };
        format!("{p}/s{}", self.brick_side)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: AblationSetting,
    pub report: RunReport,
}

/// Runs `instance` once per setting, all other parameters taken from `base`.
pub fn ablate(instance: &GeneratedInstance, base: &EngineConfig, grid: &[AblationSetting]) -> Result<Vec<AblationRow>> {
    grid.iter()
        .map(|&setting| {
            let cfg = EngineConfig {
                pruning: setting.pruning,
                brick_side: setting.brick_side,
                ..base.clone()
            };
            let (_, report) = segment_and_score(instance, &cfg, &RunControl::default())?;
            Ok(AblationRow { setting, report })
        })
        .collect()
}

const HEADER: [&str; 8] = [
    "setting",
    "dice",
    "solved_bricks",
    "solved_leaf_bricks",
    "pruned_hom",
    "pruned_dt",
    "iterations",
    "runtime_s",
];

fn cells(row: &AblationRow) -> [String; 8] {
    let r = &row.report;
    let totals = r.levels.iter().fold((0, 0), |acc, l| (acc.0 + l.counts.pruned_hom, acc.1 + l.counts.pruned_dt));
    [
        row.setting.name(),
        r.dice.map_or(String::new(), |d| d.to_string()),
        r.solver.solves.to_string(),
        r.solver.leaf_solves.to_string(),
        totals.0.to_string(),
        totals.1.to_string(),
        r.solver.iterations.to_string(),
        r.phases.segment_seconds.to_string(),
    ]
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = HEADER.join(",") + "\n";
    for row in rows {
        out += &cells(row).join(",");
        out.push('\n');
    }
    out
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = format!("| {} |\n|{}\n", HEADER.join(" | "), "---|".repeat(HEADER.len()));
    for row in rows {
        let mut c = cells(row);
        if let Ok(d) = c[1].parse::<f64>() {
            c[1] = format!("{d:.5}");
        }
        if let Ok(t) = c[7].parse::<f64>() {
            c[7] = format!("{t:.2}");
        }
        writeln!(out, "| {} |", c.join(" | ")).expect("write to string");
    }
    out
}
