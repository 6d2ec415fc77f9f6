//! Benchmark driver: matched schedules across policies, operators, and
//! seeds, with per-frame metrics, parity shadow checks, and reports.

pub mod metrics;
pub mod report;
pub mod verify;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::connectivity::{precompute_face_adjacency, ConnectivityState, FaceAdjacency};
use crate::edits::{
    make_fracture_schedule, make_fracture_schedule_by_width, make_merge_schedule,
    make_refinement_schedule, make_repeated_locality_schedule, EditBatch, Scenario, Schedule,
};
use crate::elasticity::{
    precompute_element_stiffness, ElasticAssembly, ElementStiffnessCache, MaterialParams,
};
use crate::error::{Error, Result};
use crate::mesh::{build_refinement, generate_block_mesh, load_mesh, SupersetMesh};
use crate::proxy::{rebuild_proxy, ProxyAssembly, UpdatePolicy};
use crate::solver::{
    gravity_load, implicit_euler_step, static_frame_solve, CgConfig, DynamicsState,
};
use crate::sparse::{compare_csr, CsrMatrix};

pub use metrics::{
    aggregate, linear_r_squared, median, spearman, Aggregate, FailureRow, FrameMetrics,
    OperatorKind,
};

/// Where the superset mesh comes from.
#[derive(Debug, Clone)]
pub enum MeshSource {
    Block { nx: usize, ny: usize, nz: usize },
    File { node: PathBuf, ele: PathBuf },
}

/// Everything a run needs. `policy` is ignored by the comparison entry
/// points, which run all three.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub operator: OperatorKind,
    pub scenario: Scenario,
    pub policy: UpdatePolicy,
    pub frames: usize,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub cg: CgConfig,
    pub material: MaterialParams,
    pub parity_check: bool,
    pub rebuild_period: usize,
    pub target_fraction: f64,
    pub parents_per_frame: usize,
    pub cycles: usize,
    /// Relative slab half-width; overrides `target_fraction` for fracture.
    pub half_width: Option<f64>,
    pub timestep: f64,
    pub spot_check_samples: usize,
    /// Streaming reaccumulation guard period (0 = off).
    pub reaccumulate_every: usize,
    /// Seed-level parallelism cap; `None` consults STAFEM_THREADS.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(mesh: MeshSource, operator: OperatorKind, scenario: Scenario) -> Self {
        RunConfig {
            mesh,
            operator,
            scenario,
            policy: UpdatePolicy::StreamingUpdate,
            frames: 8,
            seeds: (0..10).collect(),
            epsilon: 1e-6,
            cg: CgConfig::default(),
            material: MaterialParams::default(),
            parity_check: false,
            rebuild_period: 1,
            target_fraction: 0.1,
            parents_per_frame: 4,
            cycles: 4,
            half_width: None,
            timestep: 1e-2,
            spot_check_samples: 32,
            reaccumulate_every: 0,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.cg.tolerance <= 0.0 {
            return Err(Error::Config("CG tolerance must be > 0".into()));
        }
        Ok(())
    }

    /// Frames actually executed (repeated locality derives them from cycles).
    pub fn effective_frames(&self) -> usize {
        match self.scenario {
            Scenario::RepeatedLocality => 2 * self.cycles,
            _ => self.frames,
        }
    }

    fn thread_cap(&self) -> usize {
        self.threads
            .or_else(|| {
                std::env::var("STAFEM_THREADS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or_else(|| rayon::current_num_threads().min(8))
            .max(1)
    }
}

/// Immutable per-run context shared across seeds and policies.
pub struct BenchContext {
    pub mesh: Arc<SupersetMesh>,
    pub adjacency: Arc<FaceAdjacency>,
    pub stiffness: Option<Arc<ElementStiffnessCache>>,
}

impl BenchContext {
    /// Loads or generates the mesh (preallocating the full refinement
    /// hierarchy for the refinement scenario) and precomputes shared tables.
    pub fn prepare(cfg: &RunConfig) -> Result<BenchContext> {
        cfg.validate()?;
        let mut mesh = match &cfg.mesh {
            MeshSource::Block { nx, ny, nz } => generate_block_mesh(*nx, *ny, *nz)?,
            MeshSource::File { node, ele } => load_mesh(node, ele)?,
        };
        if cfg.scenario == Scenario::Refinement {
            let parents: Vec<usize> = (0..mesh.tet_count()).collect();
            mesh = build_refinement(&mesh, &parents)?;
        }
        let mesh = Arc::new(mesh);
        let adjacency = Arc::new(precompute_face_adjacency(&mesh)?);
        let stiffness = match cfg.operator {
            OperatorKind::Proxy => None,
            OperatorKind::Elasticity | OperatorKind::Dynamics => Some(Arc::new(
                precompute_element_stiffness(&mesh, cfg.material)?,
            )),
        };
        Ok(BenchContext {
            mesh,
            adjacency,
            stiffness,
        })
    }

    pub fn make_schedule(&self, cfg: &RunConfig, seed: u64) -> Result<Schedule> {
        match cfg.scenario {
            Scenario::Fracture => match cfg.half_width {
                Some(w) => make_fracture_schedule_by_width(&self.mesh, seed, cfg.frames, w),
                None => make_fracture_schedule(&self.mesh, seed, cfg.frames, cfg.target_fraction),
            },
            Scenario::Merge => {
                make_merge_schedule(&self.mesh, seed, cfg.frames, cfg.target_fraction)
            }
            Scenario::Refinement => {
                make_refinement_schedule(&self.mesh, seed, cfg.frames, cfg.parents_per_frame)
            }
            Scenario::RepeatedLocality => {
                make_repeated_locality_schedule(&self.mesh, seed, cfg.cycles, cfg.target_fraction)
            }
        }
    }
}

/// A maintained operator of either kind behind one driver interface.
enum Assembly {
    Proxy(ProxyAssembly),
    Elastic(ElasticAssembly),
}

impl Assembly {
    fn build(
        ctx: &BenchContext,
        cfg: &RunConfig,
        mask: crate::mesh::ActiveMask,
        policy: UpdatePolicy,
    ) -> Result<Assembly> {
        match cfg.operator {
            OperatorKind::Proxy => Ok(Assembly::Proxy(ProxyAssembly::new(
                ctx.mesh.clone(),
                mask,
                policy,
            )?)),
            OperatorKind::Elasticity | OperatorKind::Dynamics => {
                let cache = ctx.stiffness.clone().expect("stiffness cache prepared");
                let mut asm = ElasticAssembly::new(ctx.mesh.clone(), cache, mask, policy)?;
                if cfg.reaccumulate_every > 0 && policy == UpdatePolicy::StreamingUpdate {
                    asm.set_reaccumulate_every(cfg.reaccumulate_every);
                }
                Ok(Assembly::Elastic(asm))
            }
        }
    }

    fn apply_edits(&mut self, batch: &EditBatch) -> Result<()> {
        match self {
            Assembly::Proxy(a) => a.apply_edits(batch),
            Assembly::Elastic(a) => a.apply_edits(batch),
        }
    }

    fn finalize(&self, eps: f64) -> CsrMatrix {
        match self {
            Assembly::Proxy(a) => a.finalize(eps),
            Assembly::Elastic(a) => a.finalize(eps),
        }
    }

    fn mask(&self) -> &crate::mesh::ActiveMask {
        match self {
            Assembly::Proxy(a) => a.mask(),
            Assembly::Elastic(a) => a.mask(),
        }
    }

    fn counters(&self) -> crate::proxy::WorkCounters {
        match self {
            Assembly::Proxy(a) => a.counters(),
            Assembly::Elastic(a) => a.counters(),
        }
    }

    fn maintenance_state_bytes(&self) -> usize {
        match self {
            Assembly::Proxy(a) => a.maintenance_state_bytes(),
            Assembly::Elastic(a) => a.maintenance_state_bytes(),
        }
    }

    fn dof_mass(&self) -> Option<Vec<f64>> {
        match self {
            Assembly::Proxy(_) => None,
            Assembly::Elastic(a) => Some(a.dof_mass()),
        }
    }
}

/// Maintenance-state footprint of a policy's assembly state, from the fixed
/// per-entry cost constants.
pub fn estimate_state_memory(ctx: &BenchContext, cfg: &RunConfig, policy: UpdatePolicy) -> Result<usize> {
    let mask = crate::mesh::ActiveMask::all_active(ctx.mesh.tet_count());
    let asm = Assembly::build(ctx, cfg, mask, policy)?;
    Ok(asm.maintenance_state_bytes())
}

/// The epsilon the operator's per-frame solve materializes with. Dynamics
/// solves `M + h^2 K` and relies on the mass for definiteness.
fn finalize_eps(cfg: &RunConfig) -> f64 {
    match cfg.operator {
        OperatorKind::Dynamics => 0.0,
        _ => cfg.epsilon,
    }
}

/// Runs one (seed, policy) pair over a prepared schedule.
fn run_schedule(
    ctx: &BenchContext,
    cfg: &RunConfig,
    seed: u64,
    policy: UpdatePolicy,
    schedule: &Schedule,
) -> Result<Vec<FrameMetrics>> {
    let initial_mask = schedule.initial_mask(&ctx.mesh)?;
    let mut assembly = Assembly::build(ctx, cfg, initial_mask.clone(), policy)?;
    let mut connectivity = ConnectivityState::new(
        ctx.adjacency.clone(),
        &initial_mask,
        cfg.rebuild_period,
    );
    let mut dynamics = match cfg.operator {
        OperatorKind::Dynamics => Some(DynamicsState::at_rest(
            3 * ctx.mesh.vertex_count(),
            cfg.timestep,
        )),
        _ => None,
    };
    let eps = finalize_eps(cfg);

    let mut rows = Vec::with_capacity(schedule.frames.len());
    for (frame, batch) in schedule.frames.iter().enumerate() {
        let t0 = Instant::now();
        assembly.apply_edits(batch)?;
        let t1 = Instant::now();
        connectivity.on_frame(assembly.mask(), batch);
        let t2 = Instant::now();
        let matrix = assembly.finalize(eps);
        let t3 = Instant::now();
        let stats = match (&mut dynamics, cfg.operator) {
            (Some(state), OperatorKind::Dynamics) => {
                let mass = assembly.dof_mass().expect("dynamics uses elasticity");
                state.f = gravity_load(&mass);
                implicit_euler_step(state, &mass, &matrix, &cfg.cg)?
            }
            _ => static_frame_solve(&matrix, seed, frame, &cfg.cg)?.1,
        };
        let t4 = Instant::now();

        // Parity shadow rebuild: measurement apparatus, outside frame time.
        let (parity_mismatch_count, parity_max_abs_diff) = if cfg.parity_check {
            let (mismatches, max_diff) = shadow_parity(ctx, &assembly, eps);
            (Some(mismatches), Some(max_diff))
        } else {
            (None, None)
        };

        let spot_seed = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(frame as u64);
        let connectivity_mismatch_rate =
            connectivity.spot_check(assembly.mask(), cfg.spot_check_samples, spot_seed);

        let counters = assembly.counters();
        rows.push(FrameMetrics {
            seed,
            frame,
            scenario: cfg.scenario,
            operator: cfg.operator,
            policy,
            frame_time_s: (t4 - t0).as_secs_f64(),
            update_time_s: (t1 - t0).as_secs_f64(),
            connectivity_time_s: (t2 - t1).as_secs_f64(),
            finalize_time_s: (t3 - t2).as_secs_f64(),
            solve_time_s: (t4 - t3).as_secs_f64(),
            cg_iterations: stats.iterations,
            cg_relative_residual: stats.relative_residual,
            cg_converged: stats.converged,
            active_tets: assembly.mask().active_count(),
            delta_size: batch.delta_size(),
            edges_visited: counters.edges_visited,
            entries_mutated: counters.entries_mutated,
            tets_scanned: counters.tets_scanned,
            parity_mismatch_count,
            parity_max_abs_diff,
            connectivity_mismatch_rate,
            state_bytes: assembly.maintenance_state_bytes(),
        });
    }
    Ok(rows)
}

/// Rebuild-from-scratch comparison on the assembly's current mask. The
/// mismatch tolerance is zero for the integer-structured proxy and the
/// machine-precision-scale elasticity bound otherwise.
fn shadow_parity(ctx: &BenchContext, assembly: &Assembly, eps: f64) -> (u64, f64) {
    match assembly {
        Assembly::Proxy(asm) => {
            let (shadow, _) = rebuild_proxy(&ctx.mesh, asm.mask());
            compare_csr(&shadow.to_csr(eps), &asm.finalize(eps), crate::tolerances::PROXY_PARITY_ABS)
        }
        Assembly::Elastic(asm) => {
            let cache = ctx.stiffness.clone().expect("stiffness cache prepared");
            let shadow = ElasticAssembly::new(
                ctx.mesh.clone(),
                cache,
                asm.mask().clone(),
                UpdatePolicy::FullRebuild,
            )
            .expect("shadow rebuild");
            compare_csr(
                &shadow.finalize(eps),
                &asm.finalize(eps),
                crate::tolerances::ELASTICITY_PARITY_ABS,
            )
        }
    }
}

/// Full benchmark output: per-frame rows plus explicitly recorded failures.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<FrameMetrics>,
    pub failures: Vec<FailureRow>,
}

impl BenchReport {
    pub fn merge(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    /// Rows for one policy, warm-up frame 0 excluded.
    pub fn steady_rows(&self, policy: UpdatePolicy) -> impl Iterator<Item = &FrameMetrics> {
        self.rows
            .iter()
            .filter(move |r| r.policy == policy && r.frame > 0)
    }

    /// Median across seeds of the per-seed mean of `pick`, frame 0 excluded.
    pub fn median_of_seed_means(
        &self,
        policy: UpdatePolicy,
        pick: impl Fn(&FrameMetrics) -> f64,
    ) -> f64 {
        let mut seeds: Vec<u64> = self
            .rows
            .iter()
            .filter(|r| r.policy == policy)
            .map(|r| r.seed)
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        let means: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                let vals: Vec<f64> = self
                    .steady_rows(policy)
                    .filter(|r| r.seed == s)
                    .map(&pick)
                    .collect();
                vals.iter().sum::<f64>() / vals.len().max(1) as f64
            })
            .collect();
        median(&means)
    }
}

/// Runs the configured policy over every seed (seeds in parallel, capped by
/// `threads` / STAFEM_THREADS). A failing seed aborts that seed only.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchReport> {
    let ctx = BenchContext::prepare(cfg)?;
    run_benchmark_with(&ctx, cfg, cfg.policy)
}

/// As [`run_benchmark`] against an already prepared context.
pub fn run_benchmark_with(
    ctx: &BenchContext,
    cfg: &RunConfig,
    policy: UpdatePolicy,
) -> Result<BenchReport> {
    let runs: Vec<(u64, Result<Vec<FrameMetrics>>)> = in_pool(cfg.thread_cap(), || {
        use rayon::prelude::*;
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let result = ctx
                    .make_schedule(cfg, seed)
                    .and_then(|schedule| run_schedule(ctx, cfg, seed, policy, &schedule));
                (seed, result)
            })
            .collect()
    });

    let mut report = BenchReport::default();
    for (seed, result) in runs {
        match result {
            Ok(rows) => report.rows.extend(rows),
            Err(err) => report.failures.push(FailureRow {
                seed,
                policy,
                message: err.to_string(),
            }),
        }
    }
    Ok(report)
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(job)
}

/// Per-policy summary of a comparison run.
#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub policy: UpdatePolicy,
    pub frame_time: Aggregate,
    pub update_time: Aggregate,
    pub solve_time: Aggregate,
    pub cg_iterations: Aggregate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub per_policy: Vec<PolicySummary>,
    /// rebuild / streaming mean update-time ratio (steady frames).
    pub update_speedup_rebuild_over_streaming: f64,
    /// rebuild / streaming mean frame-time ratio (steady frames).
    pub frame_speedup_rebuild_over_streaming: f64,
    /// Per-frame CG iteration counts identical across the three policies.
    pub cg_iterations_identical: bool,
    #[serde(skip)]
    pub report: BenchReport,
}

/// Runs all three policies on byte-identical serialized schedules and
/// summarizes them side by side.
pub fn run_policy_comparison(cfg: &RunConfig) -> Result<ComparisonReport> {
    let ctx = BenchContext::prepare(cfg)?;
    run_policy_comparison_with(&ctx, cfg)
}

pub fn run_policy_comparison_with(ctx: &BenchContext, cfg: &RunConfig) -> Result<ComparisonReport> {
    // One schedule per seed, serialized once; every policy replays the same
    // bytes.
    let mut schedule_json: Vec<(u64, String)> = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        schedule_json.push((seed, ctx.make_schedule(cfg, seed)?.to_json()?));
    }

    let mut report = BenchReport::default();
    for policy in UpdatePolicy::ALL {
        let runs: Vec<(u64, Result<Vec<FrameMetrics>>)> = in_pool(cfg.thread_cap(), || {
            use rayon::prelude::*;
            schedule_json
                .par_iter()
                .map(|(seed, json)| {
                    let result = Schedule::from_json(json)
                        .and_then(|schedule| run_schedule(ctx, cfg, *seed, policy, &schedule));
                    (*seed, result)
                })
                .collect()
        });
        for (seed, result) in runs {
            match result {
                Ok(rows) => report.rows.extend(rows),
                Err(err) => report.failures.push(FailureRow {
                    seed,
                    policy,
                    message: err.to_string(),
                }),
            }
        }
    }

    let per_policy = UpdatePolicy::ALL
        .iter()
        .map(|&policy| PolicySummary {
            policy,
            frame_time: aggregate(report.steady_rows(policy).map(|r| r.frame_time_s)),
            update_time: aggregate(report.steady_rows(policy).map(|r| r.update_time_s)),
            solve_time: aggregate(report.steady_rows(policy).map(|r| r.solve_time_s)),
            cg_iterations: aggregate(report.steady_rows(policy).map(|r| r.cg_iterations as f64)),
        })
        .collect::<Vec<_>>();

    let mean_of = |policy: UpdatePolicy, pick: fn(&FrameMetrics) -> f64| {
        aggregate(report.steady_rows(policy).map(pick)).mean
    };
    let update_speedup = mean_of(UpdatePolicy::FullRebuild, |r| r.update_time_s)
        / mean_of(UpdatePolicy::StreamingUpdate, |r| r.update_time_s).max(f64::MIN_POSITIVE);
    let frame_speedup = mean_of(UpdatePolicy::FullRebuild, |r| r.frame_time_s)
        / mean_of(UpdatePolicy::StreamingUpdate, |r| r.frame_time_s).max(f64::MIN_POSITIVE);

    let cg_iterations_identical = cg_iterations_match(&report);

    Ok(ComparisonReport {
        per_policy,
        update_speedup_rebuild_over_streaming: update_speedup,
        frame_speedup_rebuild_over_streaming: frame_speedup,
        cg_iterations_identical,
        report,
    })
}

/// True when every (seed, frame) reports the same CG iteration count under
/// all three policies.
pub fn cg_iterations_match(report: &BenchReport) -> bool {
    use std::collections::HashMap;
    let mut by_key: HashMap<(u64, usize), Vec<usize>> = HashMap::new();
    for r in &report.rows {
        by_key.entry((r.seed, r.frame)).or_default().push(r.cg_iterations);
    }
    by_key.values().all(|counts| counts.windows(2).all(|w| w[0] == w[1]))
}

/// One width's outcome in the locality sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub half_width: f64,
    /// Median (across seeds) of per-seed mean steady-frame update time.
    pub update_time_by_policy: Vec<(UpdatePolicy, f64)>,
    pub mean_delta_size: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
}

/// Fracture sweep over slab half-widths (relative to the axis extent).
pub fn run_locality_sweep(cfg: &RunConfig, half_widths: &[f64]) -> Result<SweepReport> {
    if half_widths.len() < 2 {
        return Err(Error::Config("sweep needs at least two half-widths".into()));
    }
    let mut base = cfg.clone();
    base.scenario = Scenario::Fracture;
    let mut points = Vec::with_capacity(half_widths.len());
    for &w in half_widths {
        let mut wcfg = base.clone();
        wcfg.half_width = Some(w);
        let comparison = run_policy_comparison(&wcfg)?;
        let update_time_by_policy = UpdatePolicy::ALL
            .iter()
            .map(|&p| {
                (
                    p,
                    comparison
                        .report
                        .median_of_seed_means(p, |r| r.update_time_s),
                )
            })
            .collect();
        let mean_delta = aggregate(
            comparison
                .report
                .steady_rows(UpdatePolicy::StreamingUpdate)
                .map(|r| r.delta_size as f64),
        )
        .mean;
        points.push(SweepPoint {
            half_width: w,
            update_time_by_policy,
            mean_delta_size: mean_delta,
        });
    }
    Ok(SweepReport { points })
}

#[derive(Debug, Clone, Serialize)]
pub struct TemporalLocalityReport {
    /// Median across seeds of per-seed mean update time, local / streaming.
    pub update_ratio_local_over_streaming: f64,
    pub parity_clean: bool,
    #[serde(skip)]
    pub report: BenchReport,
}

/// The repeated-locality diagnostic on the elasticity operator.
pub fn run_temporal_locality(cfg: &RunConfig) -> Result<TemporalLocalityReport> {
    let mut tcfg = cfg.clone();
    tcfg.scenario = Scenario::RepeatedLocality;
    tcfg.operator = OperatorKind::Elasticity;
    tcfg.parity_check = true;
    let comparison = run_policy_comparison(&tcfg)?;
    let local = comparison
        .report
        .median_of_seed_means(UpdatePolicy::LocalRecompute, |r| r.update_time_s);
    let streaming = comparison
        .report
        .median_of_seed_means(UpdatePolicy::StreamingUpdate, |r| r.update_time_s);
    let parity_clean = comparison
        .report
        .rows
        .iter()
        .all(|r| r.parity_mismatch_count.unwrap_or(0) == 0);
    Ok(TemporalLocalityReport {
        update_ratio_local_over_streaming: local / streaming.max(f64::MIN_POSITIVE),
        parity_clean,
        report: comparison.report,
    })
}
