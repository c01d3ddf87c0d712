mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use hrw_core::engine::{
    run_full, run_incremental, run_multiclass, ComputeMode, EngineConfig, Label, LabelOp, LabelSet, NodeStatus,
    Pruning, RunControl, RunMode, SessionState,
};
use hrw_core::eval::{dice, mask_planes};
use hrw_core::geometry::Region;
use hrw_core::octree::NodeAddress;
use hrw_core::rw::{compute_weights, rasterize_labels, solve, LocalLabel, WeightSpec};
use hrw_core::synth::{generate, Scenario, SynthConfig};
use hrw_core::Error;

fn sphere_instance(d: usize, sigma: f64) -> hrw_core::synth::GeneratedInstance {
    generate(&SynthConfig::new(Scenario::Sphere, [d; 3], sigma, 3)).unwrap()
}

fn sharp() -> EngineConfig {
    EngineConfig {
        brick_side: 16,
        weight: WeightSpec::GaussianGlobal { min_weight: 1e-6 },
        ..Default::default()
    }
}

#[test]
fn single_brick_matches_plain_solve() {
    let d = 24;
    let c = d as f64 / 2.0;
    let input = common::volume_from_fn([d; 3], 32, |p| if p[0] < d / 2 { 0.3 } else { 0.7 });
    let labels = LabelSet::from_labels([Label::point(0, [c + 4.0; 3], 1.0), Label::point(0, [1.5; 3], 0.0)]).unwrap();
    let cfg = EngineConfig::default();
    let (tree, stats) = run_full(&input, &labels, 0, &cfg, &RunControl::default()).unwrap();
    assert_eq!(stats.solves(), 1);
    let vox = input.read_brick(NodeAddress::ROOT).unwrap().unwrap();
    let w = compute_weights(vox.voxels(), [d; 3], &cfg.weight);
    let seeds = rasterize_labels(&[LocalLabel::point([c + 4.0; 3], 1.0), LocalLabel::point([1.5; 3], 0.0)], [d; 3]);
    let sol = solve(&w, &seeds, &cfg.solver, None).unwrap();
    let out = tree.volume().read_brick(NodeAddress::ROOT).unwrap().unwrap();
    assert_eq!(out.voxels(), &sol.probabilities[..]);
}

#[test]
fn sharp_weights_segment_the_sphere_and_pruning_keeps_the_mask() {
    // at 64³ the sphere touches every level-1 octant, so pruning needs 128³
    let inst = sphere_instance(128, 0.0);
    let (input, _) = inst.build_tree(16, None).unwrap();
    let (pruned, ps) = run_full(&input, &inst.labels, 0, &sharp(), &RunControl::default()).unwrap();
    let cfg = EngineConfig {
        pruning: Pruning::NONE,
        ..sharp()
    };
    let (full, fs) = run_full(&input, &inst.labels, 0, &cfg, &RunControl::default()).unwrap();
    let truth = || inst.ground_truth().map(Ok);
    assert!(dice(mask_planes(&full, 0.5), truth()).unwrap() > 0.98);
    assert!(dice(mask_planes(&pruned, 0.5), truth()).unwrap() > 0.98);
    assert!(dice(mask_planes(&pruned, 0.5), mask_planes(&full, 0.5)).unwrap() > 0.999);
    assert!(ps.leaf_solves() < fs.leaf_solves(), "{} vs {}", ps.leaf_solves(), fs.leaf_solves());
    for l in &ps.levels {
        assert_eq!(l.counts.total(), l.nodes);
    }
}

#[test]
fn empty_increment_reuses_everything_exactly() {
    let inst = sphere_instance(64, 0.03);
    let (input, _) = inst.build_tree(16, None).unwrap();
    let cfg = EngineConfig {
        brick_side: 16,
        ..Default::default()
    };
    let (tree, _) = run_full(&input, &inst.labels, 0, &cfg, &RunControl::default()).unwrap();
    let (again, stats) =
        run_incremental(&input, &inst.labels, 0, &cfg, &tree, &BTreeSet::new(), &RunControl::default()).unwrap();
    assert_eq!(stats.mode, RunMode::Incremental);
    let g = *tree.geometry();
    for level in 0..g.levels() {
        for i in 0..g.node_count(level) {
            let addr = g.address(level, i);
            assert_eq!(again.volume().read_brick(addr).unwrap(), tree.volume().read_brick(addr).unwrap());
            if level > 0 && tree.status(addr) != NodeStatus::Absent {
                assert_eq!(again.status(addr), NodeStatus::Reused, "{addr}");
            }
        }
    }
}

#[test]
fn worker_count_and_storage_do_not_change_results() {
    let inst = sphere_instance(64, 0.1);
    let (input, _) = inst.build_tree(16, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: usize, on_disk: bool| {
        let cfg = EngineConfig {
            brick_side: 16,
            worker_count: workers,
            ..Default::default()
        };
        let ctl = RunControl {
            output_dir: on_disk.then(|| dir.path().to_path_buf()),
            ..Default::default()
        };
        run_full(&input, &inst.labels, 0, &cfg, &ctl).unwrap()
    };
    let (a, sa) = run(1, false);
    let (b, sb) = run(4, true);
    assert!(b.volume().is_file_backed());
    assert!(sb.peak_resident_bricks <= sb.residency_bound());
    assert!(sb.peak_resident_neighborhoods <= 4);
    assert_eq!(sa.solves(), sb.solves());
    let g = *a.geometry();
    for level in 0..g.levels() {
        let r = g.level_region(level);
        let diff = common::max_abs_diff(&a.fill_region(level, &r).unwrap(), &b.fill_region(level, &r).unwrap());
        assert!(diff <= 1e-5, "level {level}: {diff}");
    }
}

#[test]
fn cancelled_run_stops() {
    let inst = sphere_instance(32, 0.0);
    let (input, _) = inst.build_tree(16, None).unwrap();
    let ctl = RunControl::default();
    ctl.cancel.cancel();
    assert!(matches!(run_full(&input, &inst.labels, 0, &sharp(), &ctl), Err(Error::Cancelled)));
    assert_eq!(ctl.progress.done(), 0);
}

#[test]
fn missing_background_is_a_seed_error() {
    let input = common::volume_from_fn([16; 3], 16, |_| 0.5);
    let labels = LabelSet::from_labels([Label::point(0, [8.0; 3], 1.0)]).unwrap();
    assert!(matches!(
        run_full(&input, &labels, 0, &EngineConfig::default(), &RunControl::default()),
        Err(Error::Seeds(_))
    ));
}

fn blobs() -> (hrw_core::octree::OctreeVolume, LabelSet, impl Fn([usize; 3]) -> u32) {
    let centers = [[16.0, 16.0, 20.0], [44.0, 20.0, 40.0], [30.0, 46.0, 30.0]];
    let means = [0.2f32, 0.5, 0.8, 1.0];
    let class_of = move |p: [usize; 3]| {
        let c = p.map(|v| v as f64 + 0.5);
        centers
            .iter()
            .position(|m| (0..3).map(|a| (c[a] - m[a]).powi(2)).sum::<f64>() < 100.0)
            .map_or(0, |i| i as u32 + 1)
    };
    let input = common::volume_from_fn([64; 3], 16, |p| means[class_of(p) as usize]);
    let mut labels = vec![
        Label::point(0, [2.5, 2.5, 2.5], 1.0),
        Label::point(0, [61.5, 61.5, 61.5], 1.0),
        Label::point(0, [61.5, 2.5, 61.5], 1.0),
    ];
    for (i, c) in centers.iter().enumerate() {
        labels.push(Label::point(i as u32 + 1, *c, 1.0));
    }
    (input, LabelSet::from_labels(labels).unwrap(), class_of)
}

#[test]
fn multiclass_map_is_argmax_of_class_trees() {
    let (input, labels, _) = blobs();
    let cfg = EngineConfig {
        brick_side: 16,
        pruning: Pruning {
            hom_enabled: true,
            dt_enabled: true,
        },
        ..sharp()
    };
    let res = run_multiclass(&input, &labels, &labels.classes(), &cfg, None, &RunControl::default()).unwrap();
    assert_eq!(res.trees.len(), 4);
    assert!(res.stats.iter().all(|s| s.levels.iter().all(|l| l.counts.pruned_dt == 0)));
    let r = Region::new([0; 3], [64; 3]);
    let map = res.class_map(2, &r).unwrap();
    let fields: Vec<Vec<f32>> = res.trees.values().map(|t| t.fill_region(2, &r).unwrap()).collect();
    for (i, &c) in map.iter().enumerate() {
        let best = (0..4).fold(0, |b, k| if fields[k][i] > fields[b][i] { k } else { b });
        assert_eq!(c as usize, best);
    }
}

#[test]
fn session_switches_to_incremental_and_back() {
    let inst = sphere_instance(32, 0.03);
    let (input, _) = inst.build_tree(16, None).unwrap();
    let mut s = SessionState::new(
        Arc::new(input),
        EngineConfig {
            brick_side: 16,
            ..Default::default()
        },
    );
    assert!(s.compute(ComputeMode::Auto, &RunControl::default()).is_err());
    let ops = inst.labels.iter().cloned().map(|label| LabelOp::Add { label });
    assert_eq!(s.update_labels(ops).unwrap(), 1);
    assert_eq!(s.compute(ComputeMode::Auto, &RunControl::default()).unwrap().mode, RunMode::Full);
    s.update_labels([LabelOp::Add {
        label: Label::point(0, [16.5, 16.5, 18.5], 1.0),
    }])
    .unwrap();
    assert_eq!(s.compute(ComputeMode::Auto, &RunControl::default()).unwrap().mode, RunMode::Incremental);
    assert!(s.update_labels([LabelOp::Remove { id: 999 }]).is_err());
    assert_eq!(s.revision(), 2);
    let first = s.labels().iter().next().unwrap().id;
    s.update_labels([LabelOp::Remove { id: first }]).unwrap();
    assert_eq!(s.compute(ComputeMode::Auto, &RunControl::default()).unwrap().mode, RunMode::Full);
    assert_eq!(s.segmentation().unwrap().revision, 3);
}
