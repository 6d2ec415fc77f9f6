//! `stafem` — benchmark CLI for exact streaming maintenance of
//! topology-dependent sparse operators over dynamic tetrahedral meshes.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stafem::bench::report::{write_csv, write_json_summary};
use stafem::bench::verify::run_full_verify;
use stafem::bench::{
    run_benchmark, run_locality_sweep, run_policy_comparison, BenchReport, MeshSource,
    OperatorKind, RunConfig,
};
use stafem::edits::Scenario;
use stafem::elasticity::MaterialParams;
use stafem::error::{Error, Result};
use stafem::mesh::{generate_block_mesh, write_mesh};
use stafem::proxy::UpdatePolicy;
use stafem::solver::CgConfig;

#[derive(Parser)]
#[command(
    name = "stafem",
    about = "Streaming-assembly benchmarks over dynamic tetrahedral meshes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run matched schedules and emit per-frame metrics (CSV + JSON summary).
    Bench(BenchArgs),
    /// Fracture locality sweep over slab half-widths.
    Sweep(SweepArgs),
    /// Run the full parity + oracle verification suite.
    Verify(VerifyArgs),
    /// Mesh utilities.
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
    /// Schedule utilities.
    Schedule {
        #[command(subcommand)]
        command: ScheduleCommand,
    },
    /// Run a schedule and dump the final operator in MatrixMarket form.
    DumpMatrix(DumpMatrixArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OperatorArg {
    Proxy,
    Elasticity,
    Dynamics,
}

impl From<OperatorArg> for OperatorKind {
    fn from(value: OperatorArg) -> Self {
        match value {
            OperatorArg::Proxy => OperatorKind::Proxy,
            OperatorArg::Elasticity => OperatorKind::Elasticity,
            OperatorArg::Dynamics => OperatorKind::Dynamics,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Fracture,
    Refinement,
    Merge,
    Repeat,
}

impl From<ScenarioArg> for Scenario {
    fn from(value: ScenarioArg) -> Self {
        match value {
            ScenarioArg::Fracture => Scenario::Fracture,
            ScenarioArg::Refinement => Scenario::Refinement,
            ScenarioArg::Merge => Scenario::Merge,
            ScenarioArg::Repeat => Scenario::RepeatedLocality,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    R,
    L,
    S,
    All,
}

#[derive(Args)]
struct CommonArgs {
    /// Mesh file prefix; reads PREFIX.node and PREFIX.ele.
    #[arg(long, conflicts_with = "block")]
    mesh: Option<PathBuf>,
    /// Block mesh dimensions as "NX,NY,NZ" (or one N for a cube).
    #[arg(long, value_parser = parse_dims)]
    block: Option<(usize, usize, usize)>,
    #[arg(long, value_enum, default_value_t = OperatorArg::Proxy)]
    operator: OperatorArg,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Fracture)]
    scenario: ScenarioArg,
    /// Frames per run (the repeat scenario uses 2 * cycles instead).
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Seed range "a..b" (inclusive) or a single seed.
    #[arg(long, default_value = "0..9", value_parser = parse_seeds)]
    seeds: std::vec::Vec<u64>,
    /// Stabilization added to the operator diagonal.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// CG relative-residual tolerance.
    #[arg(long = "cg-tol", default_value_t = 1e-8)]
    cg_tol: f64,
    /// CG iteration cap (default: 10x the system size).
    #[arg(long = "cg-max-iter")]
    cg_max_iter: Option<usize>,
    /// Slab tet fraction for fracture / merge / repeat.
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    /// Slab half-width relative to the axis extent (overrides --fraction
    /// for fracture).
    #[arg(long = "half-width")]
    half_width: Option<f64>,
    #[arg(long = "parents-per-frame", default_value_t = 4)]
    parents_per_frame: usize,
    /// Delete/re-add cycles for the repeat scenario.
    #[arg(long, default_value_t = 4)]
    cycles: usize,
    /// Connectivity rebuild period in frames.
    #[arg(long = "rebuild-period", default_value_t = 1)]
    rebuild_period: usize,
    #[arg(long, default_value_t = 1e5)]
    youngs: f64,
    #[arg(long, default_value_t = 0.3)]
    poisson: f64,
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Implicit Euler timestep (dynamics operator).
    #[arg(long, default_value_t = 1e-2)]
    timestep: f64,
    /// Connectivity spot-check pairs per frame.
    #[arg(long = "spot-samples", default_value_t = 32)]
    spot_samples: usize,
    /// Streaming guard: recompute touched blocks exactly every N frames.
    #[arg(long = "reaccumulate-every", default_value_t = 0)]
    reaccumulate_every: usize,
    /// Seed-level parallelism cap (default: STAFEM_THREADS or auto).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn mesh_source(&self) -> Result<MeshSource> {
        match (&self.mesh, self.block) {
            (Some(prefix), None) => Ok(MeshSource::File {
                node: prefix.with_extension("node"),
                ele: prefix.with_extension("ele"),
            }),
            (None, Some((nx, ny, nz))) => Ok(MeshSource::Block { nx, ny, nz }),
            (None, None) => Err(Error::Config("pass --mesh PREFIX or --block NX,NY,NZ".into())),
            _ => unreachable!("clap enforces the conflict"),
        }
    }

    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(
            self.mesh_source()?,
            self.operator.into(),
            self.scenario.into(),
        );
        cfg.frames = self.frames;
        cfg.seeds = self.seeds.clone();
        cfg.epsilon = self.epsilon;
        cfg.cg = CgConfig {
            tolerance: self.cg_tol,
            max_iterations: self.cg_max_iter,
        };
        cfg.material = MaterialParams {
            youngs: self.youngs,
            poisson: self.poisson,
            density: self.density,
        };
        cfg.rebuild_period = self.rebuild_period;
        cfg.target_fraction = self.fraction;
        cfg.half_width = self.half_width;
        cfg.parents_per_frame = self.parents_per_frame;
        cfg.cycles = self.cycles;
        cfg.timestep = self.timestep;
        cfg.spot_check_samples = self.spot_samples;
        cfg.reaccumulate_every = self.reaccumulate_every;
        cfg.threads = self.threads;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Update policy, or `all` for a three-way comparison.
    #[arg(long, value_enum, default_value_t = PolicyArg::All)]
    policy: PolicyArg,
    /// Enable the per-frame parity shadow rebuild.
    #[arg(long)]
    parity: bool,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated relative slab half-widths.
    #[arg(long = "half-widths", default_value = "0.05,0.1,0.15,0.2", value_parser = parse_f64_list)]
    half_widths: std::vec::Vec<f64>,
    /// Output path for the sweep report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Skip the wall-clock-sensitive checks (criteria 3-5).
    #[arg(long)]
    skip_timing: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Generate a block mesh and write PREFIX.node / PREFIX.ele.
    Gen {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(long)]
        nz: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ScheduleCommand {
    /// Generate a schedule and write it as JSON.
    Gen {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a schedule JSON file (with a per-frame summary on stderr).
    Dump {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct DumpMatrixArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = PolicyArg::S)]
    policy: PolicyArg,
    /// Run this many frames before dumping (default: all).
    #[arg(long = "at-frame")]
    at_frame: Option<usize>,
    /// Output path for the MatrixMarket file.
    #[arg(long)]
    out: PathBuf,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    match parts.as_slice() {
        [n] => {
            let n = parse(n)?;
            Ok((n, n, n))
        }
        [a, b, c] => Ok((parse(a)?, parse(b)?, parse(c)?)),
        _ => Err("expected NX,NY,NZ or a single N".into()),
    }
}

fn parse_seeds(s: &str) -> std::result::Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if b < a {
            return Err("seed range must be ascending".into());
        }
        Ok((a..=b).collect())
    } else {
        Ok(vec![s.trim().parse().map_err(|e| format!("{e}"))?])
    }
}

fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}

fn write_reports(report: &BenchReport, prefix: &Path) -> Result<()> {
    let csv_path = prefix.with_extension("csv");
    let json_path = prefix.with_extension("json");
    write_csv(report, &csv_path)?;
    write_json_summary(report, &json_path)?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn policy_of(arg: PolicyArg) -> UpdatePolicy {
    match arg {
        PolicyArg::R => UpdatePolicy::FullRebuild,
        PolicyArg::L => UpdatePolicy::LocalRecompute,
        PolicyArg::S | PolicyArg::All => UpdatePolicy::StreamingUpdate,
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let mut cfg = args.common.run_config()?;
    cfg.parity_check = args.parity;

    let report = match args.policy {
        PolicyArg::All => {
            let comparison = run_policy_comparison(&cfg)?;
            println!(
                "{:<18} {:>14} {:>14} {:>14} {:>10}",
                "policy", "frame mean (s)", "update mean", "solve mean", "cg iters"
            );
            for p in &comparison.per_policy {
                println!(
                    "{:<18} {:>14.6e} {:>14.6e} {:>14.6e} {:>10.1}",
                    p.policy.to_string(),
                    p.frame_time.mean,
                    p.update_time.mean,
                    p.solve_time.mean,
                    p.cg_iterations.mean
                );
            }
            println!(
                "update speedup rebuild/streaming: {:.1}x; frame speedup: {:.2}x; cg iterations identical: {}",
                comparison.update_speedup_rebuild_over_streaming,
                comparison.frame_speedup_rebuild_over_streaming,
                comparison.cg_iterations_identical
            );
            comparison.report
        }
        single => {
            cfg.policy = policy_of(single);
            let report = run_benchmark(&cfg)?;
            let rows = report.rows.len();
            let parity_bad: u64 = report
                .rows
                .iter()
                .filter_map(|r| r.parity_mismatch_count)
                .sum();
            println!(
                "{rows} frame rows; parity mismatches: {parity_bad}{}",
                if cfg.parity_check { "" } else { " (parity off)" }
            );
            report
        }
    };

    if !report.failures.is_empty() {
        eprintln!("{} run(s) aborted:", report.failures.len());
        for f in &report.failures {
            eprintln!("  seed {} policy {}: {}", f.seed, f.policy, f.message);
        }
    }
    if let Some(prefix) = args.out {
        write_reports(&report, &prefix)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.common.run_config()?;
    let sweep = run_locality_sweep(&cfg, &args.half_widths)?;
    println!(
        "{:>10} {:>16} {:>16} {:>16} {:>12}",
        "width", "R update (s)", "L update (s)", "S update (s)", "mean |delta|"
    );
    for point in &sweep.points {
        let get = |p: UpdatePolicy| {
            point
                .update_time_by_policy
                .iter()
                .find(|(pol, _)| *pol == p)
                .map(|(_, t)| *t)
                .unwrap_or(f64::NAN)
        };
        println!(
            "{:>10.4} {:>16.6e} {:>16.6e} {:>16.6e} {:>12.1}",
            point.half_width,
            get(UpdatePolicy::FullRebuild),
            get(UpdatePolicy::LocalRecompute),
            get(UpdatePolicy::StreamingUpdate),
            point.mean_delta_size
        );
    }
    if let Some(path) = args.out {
        std::fs::write(&path, serde_json::to_string_pretty(&sweep)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let checks = run_full_verify(args.threads, !args.skip_timing)?;
    let mut all_passed = true;
    for check in &checks {
        println!("{check}");
        all_passed &= check.passed;
    }
    println!(
        "verify: {}",
        if all_passed { "ALL CHECKS PASSED" } else { "FAILURES PRESENT" }
    );
    Ok(all_passed)
}

fn cmd_mesh(command: MeshCommand) -> Result<()> {
    match command {
        MeshCommand::Gen { nx, ny, nz, out } => {
            let mesh = generate_block_mesh(nx, ny, nz)?;
            write_mesh(&mesh, &out)?;
            eprintln!(
                "wrote {}.node / {}.ele ({} vertices, {} tets)",
                out.display(),
                out.display(),
                mesh.vertex_count(),
                mesh.tet_count()
            );
            Ok(())
        }
    }
}

fn cmd_schedule(command: ScheduleCommand) -> Result<()> {
    match command {
        ScheduleCommand::Gen { common, seed, out } => {
            let cfg = common.run_config()?;
            let ctx = stafem::bench::BenchContext::prepare(&cfg)?;
            let schedule = ctx.make_schedule(&cfg, seed)?;
            schedule.replay(&ctx.mesh)?;
            std::fs::write(&out, schedule.to_json()?)?;
            eprintln!(
                "wrote {} ({} frames, scenario {})",
                out.display(),
                schedule.frame_count(),
                schedule.scenario
            );
            Ok(())
        }
        ScheduleCommand::Dump { input } => {
            let text = std::fs::read_to_string(&input)?;
            let schedule = stafem::edits::Schedule::from_json(&text)?;
            eprintln!(
                "scenario {} seed {} frames {} initially-inactive {}",
                schedule.scenario,
                schedule.seed,
                schedule.frame_count(),
                schedule.initial_inactive.len()
            );
            for (f, batch) in schedule.frames.iter().enumerate() {
                eprintln!(
                    "  frame {f}: -{} +{}",
                    batch.deleted.len(),
                    batch.added.len()
                );
            }
            println!("{}", schedule.to_json()?);
            Ok(())
        }
    }
}

fn cmd_dump_matrix(args: DumpMatrixArgs) -> Result<()> {
    let cfg = args.common.run_config()?;
    let ctx = stafem::bench::BenchContext::prepare(&cfg)?;
    let schedule = ctx.make_schedule(&cfg, args.seed)?;
    let frames = args.at_frame.unwrap_or(schedule.frame_count());
    let policy = policy_of(args.policy);

    let mask = schedule.initial_mask(&ctx.mesh)?;
    let eps = cfg.epsilon;
    let matrix = match cfg.operator {
        OperatorKind::Proxy => {
            let mut asm = stafem::proxy::ProxyAssembly::new(ctx.mesh.clone(), mask, policy)?;
            for batch in schedule.frames.iter().take(frames) {
                asm.apply_edits(batch)?;
            }
            asm.finalize(eps)
        }
        _ => {
            let cache = ctx.stiffness.clone().expect("stiffness cache");
            let mut asm =
                stafem::elasticity::ElasticAssembly::new(ctx.mesh.clone(), cache, mask, policy)?;
            for batch in schedule.frames.iter().take(frames) {
                asm.apply_edits(batch)?;
            }
            let material_path = args.out.with_extension("material.json");
            std::fs::write(&material_path, serde_json::to_string_pretty(&cfg.material)?)?;
            eprintln!("wrote {}", material_path.display());
            asm.finalize(eps)
        }
    };
    stafem::sparse::write_matrix_market(&matrix, &args.out)?;
    eprintln!(
        "wrote {} ({} x {}, {} entries) after {frames} frame(s) under {}",
        args.out.display(),
        matrix.n,
        matrix.n,
        matrix.nnz(),
        policy
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bench(args) => cmd_bench(args).map(|()| true),
        Command::Sweep(args) => cmd_sweep(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
        Command::Mesh { command } => cmd_mesh(command).map(|()| true),
        Command::Schedule { command } => cmd_schedule(command).map(|()| true),
        Command::DumpMatrix(args) => cmd_dump_matrix(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
