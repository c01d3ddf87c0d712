use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hrw_core::engine::{compute_segmentation, ComputeMode, EngineConfig, LabelSet, RunControl};
use hrw_core::eval::{ablate, ablation_csv, ablation_markdown, segment_and_score, surface_bricks_analytic, AblationSetting};
use hrw_core::geometry::Extent;
use hrw_core::octree::{ingest_raw, read_sidecar, sidecar_path, write_raw, AxisOrder, RawSidecar, SourceDtype};
use hrw_core::rw::WeightSpec;
use hrw_core::synth::{generate, Scenario, SynthConfig, SPHERE_RADIUS};
use hrw_service::{open_volume, ServiceConfig};

#[derive(Parser)]
#[command(name = "hrw", version, about = "Hierarchical random walker segmentation of bricked volumes")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw volume with a `<raw>.json` sidecar into an HROV1 octree.
    Build(BuildArgs),
    /// Generate a synthetic phantom: volume, labels, ground truth and manifest.
    Synth(SynthCmd),
    /// Segment a volume with a label file.
    Segment(SegmentArgs),
    /// Generate a phantom, segment it and report Dice and run statistics.
    Eval(EvalArgs),
    /// Pruning ablation over scenarios and seeds, written as CSV and Markdown.
    Bench(BenchArgs),
    /// Surface-brick counts of the centered sphere for several subdivisions.
    SurfaceBricks(SurfaceArgs),
    /// Serve the session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BuildArgs {
    raw: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    brick_side: usize,
}

/// Engine configuration: a JSON file, then individual flags on top.
#[derive(Args, Clone, Default)]
struct EngineArgs {
    /// JSON engine configuration; flags below override its fields.
    #[arg(long = "config")]
    config: Option<PathBuf>,
    #[arg(long)]
    brick_side: Option<usize>,
    #[arg(long)]
    expansion: Option<f64>,
    #[arg(long)]
    t_hom: Option<f64>,
    #[arg(long)]
    t_bin: Option<f64>,
    #[arg(long)]
    t_inc: Option<f64>,
    /// `ttest[:radius]`, `grady:<beta>`, `gaussian_global` or `poisson_sqrt`.
    #[arg(long, value_parser = parse_weight)]
    weight: Option<WeightSpec>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    residual_tolerance: Option<f64>,
    #[arg(long)]
    no_hom: bool,
    #[arg(long)]
    no_dt: bool,
    #[arg(long)]
    seed_volume_faces: bool,
}

impl EngineArgs {
    fn resolve(&self) -> Result<EngineConfig> {
        let mut c: EngineConfig = match &self.config {
            Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None => EngineConfig::default(),
        };
        set(&mut c.brick_side, self.brick_side);
        set(&mut c.expansion, self.expansion);
        set(&mut c.t_hom, self.t_hom);
        set(&mut c.t_bin, self.t_bin);
        set(&mut c.t_inc, self.t_inc);
        set(&mut c.weight, self.weight);
        set(&mut c.worker_count, self.workers);
        set(&mut c.solver.max_iterations, self.max_iterations);
        set(&mut c.solver.residual_tolerance, self.residual_tolerance);
        c.pruning.hom_enabled &= !self.no_hom;
        c.pruning.dt_enabled &= !self.no_dt;
        c.seed_volume_faces |= self.seed_volume_faces;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Cells,
    Vessels,
    Sphere,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Cells => Scenario::Cells,
            ScenarioArg::Vessels => Scenario::Vessels,
            ScenarioArg::Sphere => Scenario::Sphere,
        }
    }
}

/// Phantom parameters: a JSON file, then individual flags on top.
#[derive(Args, Clone, Default)]
struct SynthArgs {
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// One side length or `x,y,z`.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<Extent>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    structure_size: Option<f64>,
    #[arg(long)]
    fg_fraction: Option<f64>,
    #[arg(long)]
    seeds_per_segment: bool,
}

impl SynthArgs {
    fn resolve(&self) -> Result<SynthConfig> {
        let mut c: SynthConfig = match &self.synth_config {
            Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
            None => SynthConfig::default(),
        };
        set(&mut c.scenario, self.scenario.map(Scenario::from));
        set(&mut c.dims, self.dims);
        set(&mut c.noise_sigma, self.sigma);
        set(&mut c.rng_seed, self.seed);
        set(&mut c.structure_size, self.structure_size);
        set(&mut c.fg_fraction, self.fg_fraction);
        c.seeds_per_segment |= self.seeds_per_segment;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SynthCmd {
    #[command(flatten)]
    synth: SynthArgs,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    brick_side: usize,
}

#[derive(Args)]
struct SegmentArgs {
    /// HROV1 file, or raw volume with a `<raw>.json` sidecar.
    #[arg(long)]
    volume: PathBuf,
    /// JSON label array, as written by `hrw synth`.
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Output directory for probability trees and run statistics.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Also write the report here.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ScenarioArg::Cells, ScenarioArg::Vessels])]
    scenarios: Vec<ScenarioArg>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [32])]
    brick_sides: Vec<usize>,
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Directory for `ablation.csv` and `ablation.md`.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SurfaceArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16, 32, 64])]
    n: Vec<usize>,
    /// Sphere radius as a fraction of the unit cube side.
    #[arg(long, default_value_t = SPHERE_RADIUS)]
    radius: f64,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory for converted volumes and probability trees; in memory when absent.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

fn parse_weight(s: &str) -> Result<WeightSpec, String> {
    let defaults = WeightSpec::default();
    let WeightSpec::Ttest { min_weight, .. } = defaults else {
        unreachable!("default weight is the t-test")
    };
    let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let num = |a: Option<&str>| a.map(|v| v.parse::<f64>().map_err(|e| format!("{v}: {e}"))).transpose();
    let w = match name {
        "ttest" => WeightSpec::Ttest {
            radius: num(arg)?.map_or(1, |r| r as usize),
            min_weight,
        },
        "grady" => WeightSpec::Grady {
            beta: num(arg)?.ok_or("grady needs a beta, as in grady:90")?,
        },
        "gaussian_global" => WeightSpec::GaussianGlobal { min_weight },
        "poisson_sqrt" => WeightSpec::PoissonSqrt,
        _ => return Err(format!("unknown weight {name:?}")),
    };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

fn parse_dims(s: &str) -> Result<Extent, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [d] => Ok([d; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err("expected one side or x,y,z".into()),
    }
}

fn build(a: &BuildArgs) -> Result<()> {
    let sidecar = read_sidecar(sidecar_path(&a.raw))?;
    let (tree, stats) = ingest_raw(&a.raw, &sidecar, a.brick_side, Some(&a.out))?;
    println!(
        "{}: {} levels, {} bricks, peak {} resident bricks (bound {})",
        a.out.display(),
        tree.levels(),
        stats.bricks_written,
        stats.peak_resident_bricks,
        stats.resident_bound
    );
    Ok(())
}

fn synth(a: &SynthCmd) -> Result<()> {
    let cfg = a.synth.resolve()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let inst = generate(&cfg)?;
    inst.build_tree(a.brick_side, Some(&a.out.join("volume.hrov")))?;
    write(&a.out.join("labels.json"), &inst.labels.to_json())?;
    write(&a.out.join("manifest.json"), &inst.manifest_json())?;
    let sidecar = RawSidecar {
        dims: cfg.dims.map(|d| d as u64),
        dtype: SourceDtype::U8,
        spacing: [1.0; 3],
        axis_order: AxisOrder::Xyz,
    };
    let truth = inst.ground_truth().map(|p| p.into_iter().map(u8::from).collect());
    write_raw(a.out.join("ground_truth.raw"), &sidecar, truth)?;
    println!(
        "{}: {:?} {:?}, {} labels, foreground fraction {:.5}",
        a.out.display(),
        cfg.scenario,
        cfg.dims,
        inst.labels.len(),
        inst.achieved_fg_fraction
    );
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let cfg = a.engine.resolve()?;
    let labels = LabelSet::from_json(&read(&a.labels)?)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let input = open_volume(&a.volume, cfg.brick_side, Some(&a.out.join("input.hrov")))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let ctl = RunControl {
        output_dir: Some(a.out.clone()),
        ..RunControl::default()
    };
    let t = Instant::now();
    let seg = compute_segmentation(&input, &cfg, &labels, 0, None, ComputeMode::Full, &ctl)?;
    for (class, tree) in &seg.trees {
        tree.save(a.out.join(format!("probability-c{class}.hrov")))?;
    }
    write(&a.out.join("run.json"), &serde_json::to_string_pretty(&seg.stats)?)?;
    let solves: usize = seg.stats.iter().map(|s| s.solves()).sum();
    println!(
        "{} class tree(s), {solves} brick solves, {:.2}s",
        seg.trees.len(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let synth = a.synth.resolve()?;
    let engine = a.engine.resolve()?;
    let inst = generate(&synth)?;
    let (_, report) = segment_and_score(&inst, &engine, &RunControl::default())?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &a.out {
        write(p, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let base_synth = a.synth.resolve()?;
    let engine = a.engine.resolve()?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let grid: Vec<AblationSetting> = a.brick_sides.iter().flat_map(|&s| AblationSetting::pruning_grid(s)).collect();
    let mut csv = String::new();
    let mut md = String::new();
    for &scenario in &a.scenarios {
        for &seed in &a.seeds {
            let cfg = SynthConfig {
                scenario: scenario.into(),
                rng_seed: seed,
                ..base_synth.clone()
            };
            let inst = generate(&cfg)?;
            let rows = ablate(&inst, &engine, &grid)?;
            let name = serde_json::to_value(cfg.scenario)?.as_str().unwrap_or_default().to_string();
            let table = ablation_csv(&rows);
            let mut lines = table.lines();
            let header = lines.next().unwrap_or_default();
            if csv.is_empty() {
                csv = format!("scenario,seed,{header}\n");
            }
            for l in lines {
                csv += &format!("{name},{seed},{l}\n");
            }
            md += &format!("### {name}, seed {seed}\n\n{}\n", ablation_markdown(&rows));
            log::info!("{name} seed {seed}: {} settings done", rows.len());
        }
    }
    write(&a.out.join("ablation.csv"), &csv)?;
    write(&a.out.join("ablation.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn surface_bricks(a: &SurfaceArgs) -> Result<()> {
    if !(a.radius > 0.0 && a.radius < 0.5) {
        bail!("radius must lie in (0, 0.5), got {}", a.radius);
    }
    let sdf = |p: [f64; 3]| ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)).sqrt() - a.radius;
    let mut csv = String::from("n,bricks,surface_bricks,bricks_per_n2\n");
    for &n in &a.n {
        if n == 0 {
            bail!("n must be at least 1");
        }
        let b = surface_bricks_analytic(sdf, [1.0; 3], n);
        csv += &format!("{n},{},{b},{:.6}\n", n.pow(3), b as f64 / (n * n) as f64);
    }
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        engine: a.engine.resolve()?,
        work_dir: a.work_dir.clone(),
    };
    if let Some(d) = &a.work_dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(hrw_service::serve(a.addr, config))?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match &cli.command {
        Command::Build(a) => build(a),
        Command::Synth(a) => synth(a),
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::SurfaceBricks(a) => surface_bricks(a),
        Command::Serve(a) => serve(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_shorthands_parse() {
        assert_eq!(parse_weight("grady:90").unwrap(), WeightSpec::Grady { beta: 90.0 });
        assert!(matches!(parse_weight("ttest:2").unwrap(), WeightSpec::Ttest { radius: 2, .. }));
        assert_eq!(parse_weight("poisson_sqrt").unwrap(), WeightSpec::PoissonSqrt);
        assert!(parse_weight("grady").is_err());
        assert!(parse_weight("median").is_err());
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("engine.json");
        fs::write(&p, r#"{"brick_side": 16, "t_hom": 0.2}"#).unwrap();
        let args = EngineArgs {
            config: Some(p),
            brick_side: Some(64),
            no_dt: true,
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!((c.brick_side, c.t_hom), (64, 0.2));
        assert!(c.pruning.hom_enabled && !c.pruning.dt_enabled);
    }

    #[test]
    fn dims_accept_one_or_three_values() {
        assert_eq!(parse_dims("64").unwrap(), [64; 3]);
        assert_eq!(parse_dims("64,32,16").unwrap(), [64, 32, 16]);
        assert!(parse_dims("1,2").is_err());
    }
}
