//! The parity + oracle verification suite behind `stafem verify` and the
//! acceptance tests: every check pins its thresholds from
//! [`crate::tolerances`] and reports one pass/fail line.
//!
//! The dense constructions in [`oracles`] are independent reference
//! implementations (different derivations from the maintained paths) used
//! only for verification.

use std::time::Instant;

use rand::Rng;

use crate::bench::{
    estimate_state_memory, linear_r_squared, run_locality_sweep, run_policy_comparison,
    run_policy_comparison_with, spearman, BenchContext, FrameMetrics, MeshSource, OperatorKind,
    RunConfig,
};
use crate::connectivity::{bfs_components, precompute_face_adjacency, ConnectivityState};
use crate::edits::{apply_batch, Scenario};
use crate::elasticity::{precompute_element_stiffness, ElasticAssembly, MaterialParams};
use crate::error::Result;
use crate::mesh::{generate_block_mesh, ActiveMask, SupersetMesh};
use crate::proxy::UpdatePolicy;
use crate::rng::{stream, stream_rng};
use crate::solver::{implicit_euler_step, CgConfig, DynamicsState};
use crate::tolerances as tol;

/// One verification outcome.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} ({})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Unit-scale material for parity runs: the 1e-12 absolute parity bound is
/// machine-precision scale for O(1) stiffness entries.
pub fn parity_material() -> MaterialParams {
    MaterialParams {
        youngs: 1.0,
        poisson: 0.3,
        density: 1.0,
    }
}

fn suite_config(
    dims: (usize, usize, usize),
    operator: OperatorKind,
    scenario: Scenario,
    threads: Option<usize>,
) -> RunConfig {
    let mut cfg = RunConfig::new(
        MeshSource::Block {
            nx: dims.0,
            ny: dims.1,
            nz: dims.2,
        },
        operator,
        scenario,
    );
    cfg.seeds = (0..10).collect();
    cfg.frames = 8;
    cfg.cycles = 4; // repeated locality: 8 frames
    cfg.parity_check = true;
    cfg.material = parity_material();
    cfg.cg = CgConfig {
        tolerance: 1e-4,
        max_iterations: Some(800),
    };
    cfg.threads = threads;
    cfg
}

/// Outcome of the desk-scale parity matrix: criteria 1, 2, and 7 all read
/// off the same runs.
pub struct ParitySuiteOutcome {
    pub parity: CheckResult,
    pub counters: CheckResult,
    pub solver_witness: CheckResult,
    pub elapsed_s: f64,
    pub rows: Vec<FrameMetrics>,
}

/// Runs block meshes (6,6,6) and (8,8,8), all three scenarios, both
/// operators, all policies, 10 seeds, 8 frames, parity shadow on.
pub fn run_parity_suite(threads: Option<usize>) -> Result<ParitySuiteOutcome> {
    let start = Instant::now();
    let mut all_rows = Vec::new();

    let mut parity_bad = 0u64;
    let mut proxy_max = 0.0f64;
    let mut elastic_max = 0.0f64;
    let mut counter_violations = 0u64;
    let mut witness_violations = 0u64;
    let mut frames_checked = 0u64;

    for dims in [(6, 6, 6), (8, 8, 8)] {
        for operator in [OperatorKind::Proxy, OperatorKind::Elasticity] {
            for scenario in [Scenario::Fracture, Scenario::Refinement, Scenario::Merge] {
                let cfg = suite_config(dims, operator, scenario, threads);
                let ctx = BenchContext::prepare(&cfg)?;
                let kappa = ctx.mesh.kappa_max() as u64;
                let comparison = run_policy_comparison_with(&ctx, &cfg)?;
                let report = comparison.report;
                if !report.failures.is_empty() {
                    parity_bad += report.failures.len() as u64;
                }

                for r in &report.rows {
                    frames_checked += 1;
                    // Criterion 1: exact parity for the two local policies.
                    if r.policy != UpdatePolicy::FullRebuild {
                        let mismatches = r.parity_mismatch_count.unwrap_or(u64::MAX);
                        let diff = r.parity_max_abs_diff.unwrap_or(f64::INFINITY);
                        if mismatches != 0 {
                            parity_bad += 1;
                        }
                        match operator {
                            OperatorKind::Proxy => {
                                proxy_max = proxy_max.max(diff);
                                if diff != 0.0 {
                                    parity_bad += 1;
                                }
                            }
                            _ => {
                                elastic_max = elastic_max.max(diff);
                                if diff > tol::ELASTICITY_PARITY_ABS {
                                    parity_bad += 1;
                                }
                            }
                        }
                    }
                    // Criterion 2: hardware-independent counter laws.
                    let delta = r.delta_size as u64;
                    if delta > 0 {
                        let ok = match r.policy {
                            UpdatePolicy::StreamingUpdate => {
                                r.edges_visited == 6 * delta && r.tets_scanned == delta
                            }
                            UpdatePolicy::FullRebuild => {
                                r.tets_scanned == r.active_tets as u64
                            }
                            UpdatePolicy::LocalRecompute => {
                                delta <= r.tets_scanned && r.tets_scanned <= delta * kappa
                            }
                        };
                        if !ok {
                            counter_violations += 1;
                        }
                    }
                }

                // Criterion 7: identical CG iteration counts across R/L/S.
                if !crate::bench::cg_iterations_match(&report) {
                    witness_violations += 1;
                }
                all_rows.extend(report.rows);
            }
        }
    }
    let elapsed_s = start.elapsed().as_secs_f64();

    let parity = CheckResult::new(
        "criterion 1: exactness parity",
        parity_bad == 0 && elapsed_s < tol::PARITY_SUITE_BUDGET_S,
        format!(
            "{frames_checked} frames; proxy max diff {proxy_max:.1e} (required 0), \
             elasticity max diff {elastic_max:.2e} (bound {:.0e}); {:.1}s of {:.0}s budget",
            tol::ELASTICITY_PARITY_ABS,
            elapsed_s,
            tol::PARITY_SUITE_BUDGET_S
        ),
    );
    let counters = CheckResult::new(
        "criterion 2: complexity counters",
        counter_violations == 0,
        format!("{counter_violations} violations over {frames_checked} frames (zero tolerance)"),
    );
    let solver_witness = CheckResult::new(
        "criterion 7: solver parity witness",
        witness_violations == 0,
        format!("{witness_violations} (mesh, scenario, operator) groups with unequal CG iteration counts"),
    );
    Ok(ParitySuiteOutcome {
        parity,
        counters,
        solver_witness,
        elapsed_s,
        rows: all_rows,
    })
}

/// Criterion 3: update-time ordering and rebuild/streaming speedup on a
/// (10,10,10) fracture run.
pub fn check_update_time_ordering(threads: Option<usize>) -> Result<CheckResult> {
    let mut cfg = RunConfig::new(
        MeshSource::Block {
            nx: 10,
            ny: 10,
            nz: 10,
        },
        OperatorKind::Proxy,
        Scenario::Fracture,
    );
    cfg.seeds = (0..7).collect();
    cfg.frames = 8;
    cfg.cg = CgConfig {
        tolerance: 1e-4,
        max_iterations: Some(800),
    };
    cfg.threads = threads;
    let comparison = run_policy_comparison(&cfg)?;
    let med = |p: UpdatePolicy| comparison.report.median_of_seed_means(p, |r| r.update_time_s);
    let (r, l, s) = (
        med(UpdatePolicy::FullRebuild),
        med(UpdatePolicy::LocalRecompute),
        med(UpdatePolicy::StreamingUpdate),
    );
    let ratio = r / s.max(f64::MIN_POSITIVE);
    let passed = s < l && l < r && ratio > tol::SPEEDUP_REBUILD_OVER_STREAMING_MIN;
    Ok(CheckResult::new(
        "criterion 3: update-time ordering",
        passed,
        format!(
            "medians S={:.1}us < L={:.1}us < R={:.1}us, R/S={ratio:.1} (floor {})",
            s * 1e6,
            l * 1e6,
            r * 1e6,
            tol::SPEEDUP_REBUILD_OVER_STREAMING_MIN
        ),
    ))
}

/// Criterion 4: repeated-locality elasticity gap between the two exact
/// local policies on (8,8,8).
pub fn check_temporal_locality(threads: Option<usize>) -> Result<CheckResult> {
    let mut cfg = RunConfig::new(
        MeshSource::Block { nx: 8, ny: 8, nz: 8 },
        OperatorKind::Elasticity,
        Scenario::RepeatedLocality,
    );
    cfg.seeds = (0..7).collect();
    cfg.cycles = 4;
    cfg.material = parity_material();
    cfg.cg = CgConfig {
        tolerance: 1e-4,
        max_iterations: Some(800),
    };
    cfg.threads = threads;
    let outcome = crate::bench::run_temporal_locality(&cfg)?;
    let ratio = outcome.update_ratio_local_over_streaming;
    let passed = ratio >= tol::TEMPORAL_LOCAL_OVER_STREAMING_MIN && outcome.parity_clean;
    Ok(CheckResult::new(
        "criterion 4: temporal-locality gap",
        passed,
        format!(
            "update time local/streaming = {ratio:.2} (floor {}), parity clean: {}",
            tol::TEMPORAL_LOCAL_OVER_STREAMING_MIN,
            outcome.parity_clean
        ),
    ))
}

/// Criterion 5: streaming update time scales with slab extent and stays at
/// or below local recompute at every width.
pub fn check_locality_sweep(threads: Option<usize>) -> Result<CheckResult> {
    let mut cfg = RunConfig::new(
        MeshSource::Block { nx: 8, ny: 8, nz: 8 },
        OperatorKind::Proxy,
        Scenario::Fracture,
    );
    cfg.seeds = (0..5).collect();
    cfg.frames = 8;
    cfg.cg = CgConfig {
        tolerance: 1e-4,
        max_iterations: Some(800),
    };
    cfg.threads = threads;
    let widths = [0.05, 0.1, 0.15, 0.2];
    let sweep = run_locality_sweep(&cfg, &widths)?;

    let pick = |p: UpdatePolicy, point: &crate::bench::SweepPoint| {
        point
            .update_time_by_policy
            .iter()
            .find(|(pol, _)| *pol == p)
            .map(|(_, t)| *t)
            .unwrap()
    };
    let streaming: Vec<f64> = sweep
        .points
        .iter()
        .map(|p| pick(UpdatePolicy::StreamingUpdate, p))
        .collect();
    let local: Vec<f64> = sweep
        .points
        .iter()
        .map(|p| pick(UpdatePolicy::LocalRecompute, p))
        .collect();
    let deltas: Vec<f64> = sweep.points.iter().map(|p| p.mean_delta_size).collect();

    let rho = spearman(&widths.to_vec(), &streaming);
    let below = streaming.iter().zip(&local).all(|(s, l)| s <= l);
    let deltas_monotone = deltas.windows(2).all(|w| w[0] < w[1]);
    let passed = rho > 0.0 && below && deltas_monotone;
    Ok(CheckResult::new(
        "criterion 5: locality sweep",
        passed,
        format!(
            "spearman(width, streaming update) = {rho:.2} (> 0), streaming <= local at all {} widths: {below}, |delta| strictly increasing: {deltas_monotone}",
            widths.len()
        ),
    ))
}

/// Criterion 6: element stiffness invariants and the independent dense
/// oracle on 100 random non-degenerate tets.
pub fn check_element_stiffness(seed: u64) -> CheckResult {
    let mut rng = stream_rng(seed, stream::TEST);
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst_oracle = 0.0f64;
    while checked < 100 {
        let verts: Vec<[f64; 3]> = (0..4)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let mesh = match SupersetMesh::from_parts(verts.clone(), vec![[0, 1, 2, 3]]) {
            Ok(m) => m,
            Err(_) => continue,
        };
        if mesh.tet_volume(0) < 1e-3 {
            continue; // reject slivers so "non-degenerate" is unambiguous
        }
        let material = MaterialParams {
            youngs: 1.0,
            poisson: rng.gen_range(0.0..0.45),
            density: 1.0,
        };
        let cache = match precompute_element_stiffness(&mesh, material) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("tet {checked}: precompute failed: {e}"));
                break;
            }
        };
        let k = cache.stiffness(0);
        let norm = k.iter().fold(0.0f64, |m, &x| m.max(x.abs()));

        // Symmetry.
        for r in 0..12 {
            for c in 0..r {
                if (k[12 * r + c] - k[12 * c + r]).abs() > tol::STIFFNESS_SYMMETRY_ABS {
                    failures.push(format!("tet {checked}: asymmetric at ({r},{c})"));
                }
            }
        }
        // Rigid modes: 3 translations + 3 infinitesimal rotations.
        for mode in oracles::rigid_modes(&verts) {
            let mut worst = 0.0f64;
            for r in 0..12 {
                let dot: f64 = (0..12).map(|c| k[12 * r + c] * mode[c]).sum();
                worst = worst.max(dot.abs());
            }
            if worst > tol::RIGID_MODE_REL * norm {
                failures.push(format!("tet {checked}: rigid-mode residual {worst:.2e}"));
            }
        }
        // Eigenvalues: PSD and rank 6.
        let dense = nalgebra::DMatrix::from_fn(12, 12, |r, c| k[12 * r + c]);
        let eig = dense.symmetric_eigen();
        let max_eig = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let min_eig = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        if min_eig < -tol::PSD_EIG_REL * max_eig {
            failures.push(format!("tet {checked}: min eigenvalue {min_eig:.2e}"));
        }
        let rank = eig
            .eigenvalues
            .iter()
            .filter(|&&x| x.abs() > 1e-9 * max_eig)
            .count();
        if rank != 6 {
            failures.push(format!("tet {checked}: rank {rank} != 6"));
        }
        // Independent dense oracle.
        let oracle = oracles::element_stiffness(&verts, &material);
        for r in 0..12 {
            for c in 0..12 {
                let diff = (k[12 * r + c] - oracle[(r, c)]).abs();
                worst_oracle = worst_oracle.max(diff);
                if diff > tol::STIFFNESS_ORACLE_ABS {
                    failures.push(format!("tet {checked}: oracle diff {diff:.2e} at ({r},{c})"));
                }
            }
        }
        checked += 1;
        if failures.len() > 8 {
            break;
        }
    }
    CheckResult::new(
        "criterion 6: element stiffness",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{checked} random tets; worst oracle diff {worst_oracle:.2e} (bound {:.0e})", tol::STIFFNESS_ORACLE_ABS)
        } else {
            failures.join("; ")
        },
    )
}

/// Criterion 8: union-find answers equal BFS everywhere at rebuild period 1,
/// and the merge scenario reconnects monotonically.
pub fn check_connectivity_oracle(threads: Option<usize>) -> Result<CheckResult> {
    let mut issues = Vec::new();

    // Spot-check rates recorded by benchmark runs must be identically zero.
    for scenario in [
        Scenario::Fracture,
        Scenario::Refinement,
        Scenario::Merge,
        Scenario::RepeatedLocality,
    ] {
        let mut cfg = suite_config((6, 6, 6), OperatorKind::Proxy, scenario, threads);
        cfg.seeds = (0..4).collect();
        cfg.parity_check = false;
        cfg.spot_check_samples = 64;
        let ctx = BenchContext::prepare(&cfg)?;
        let report = crate::bench::run_benchmark_with(&ctx, &cfg, UpdatePolicy::StreamingUpdate)?;
        if let Some(r) = report.rows.iter().find(|r| r.connectivity_mismatch_rate != 0.0) {
            issues.push(format!(
                "{scenario}: nonzero spot-check rate {} at seed {} frame {}",
                r.connectivity_mismatch_rate, r.seed, r.frame
            ));
        }
        if !report.failures.is_empty() {
            issues.push(format!("{scenario}: {} failed seeds", report.failures.len()));
        }

        // Component counts against BFS, every frame.
        let schedule = ctx.make_schedule(&cfg, 0)?;
        let adjacency = std::sync::Arc::new(precompute_face_adjacency(&ctx.mesh)?);
        let mut mask = schedule.initial_mask(&ctx.mesh)?;
        let mut state = ConnectivityState::new(adjacency.clone(), &mask, 1);
        let mut last_count = state.component_count(&mask);
        for (f, batch) in schedule.frames.iter().enumerate() {
            apply_batch(&mut mask, batch)?;
            state.on_frame(&mask, batch);
            let uf = state.component_count(&mask);
            let (bfs, _) = bfs_components(&adjacency, &mask);
            if uf != bfs {
                issues.push(format!("{scenario}: frame {f} union-find {uf} vs BFS {bfs}"));
            }
            if scenario == Scenario::Merge {
                if uf > last_count {
                    issues.push(format!("{scenario}: components rose {last_count} -> {uf}"));
                }
                last_count = uf;
            }
        }
        if scenario == Scenario::Merge && last_count != 1 {
            issues.push(format!("merge ended at {last_count} components"));
        }
    }

    Ok(CheckResult::new(
        "criterion 8: connectivity oracle",
        issues.is_empty(),
        if issues.is_empty() {
            "spot-check rate 0 on every frame of every scenario; union-find == BFS; merge non-increasing to 1".into()
        } else {
            issues.join("; ")
        },
    ))
}

/// Criterion 9: implicit Euler fixed points, a dense single-step oracle, and
/// parity with edits applied mid-dynamics.
pub fn check_dynamics(threads: Option<usize>) -> Result<CheckResult> {
    let mut issues = Vec::new();

    // Fixed points and the dense oracle on a (1,1,1) block (24 DOFs).
    let mesh = std::sync::Arc::new(generate_block_mesh(1, 1, 1)?);
    let cache = std::sync::Arc::new(precompute_element_stiffness(&mesh, parity_material())?);
    let asm = ElasticAssembly::new(
        mesh.clone(),
        cache,
        ActiveMask::all_active(mesh.tet_count()),
        UpdatePolicy::FullRebuild,
    )?;
    let k = asm.finalize(0.0);
    let mass = asm.dof_mass();
    let tight = CgConfig {
        tolerance: 1e-12,
        max_iterations: None,
    };

    // Zero state stays zero.
    let mut state = DynamicsState::at_rest(k.n, 1e-2);
    implicit_euler_step(&mut state, &mass, &k, &tight)?;
    let drift = state
        .u
        .iter()
        .chain(&state.v)
        .fold(0.0f64, |m, &x| m.max(x.abs()));
    if drift > tol::DYNAMICS_FIXED_POINT_ABS {
        issues.push(format!("zero fixed point drifted {drift:.2e}"));
    }

    // Rigid translation is a fixed point with eps = 0 and a free boundary.
    let mut state = DynamicsState::at_rest(k.n, 1e-2);
    for d in (0..k.n).step_by(3) {
        state.u[d] = 0.3;
    }
    let before = state.u.clone();
    implicit_euler_step(&mut state, &mass, &k, &tight)?;
    let drift = state
        .u
        .iter()
        .zip(&before)
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
    if drift > tol::DYNAMICS_FIXED_POINT_ABS {
        issues.push(format!("rigid translation drifted {drift:.2e}"));
    }

    // Dense oracle for one step from a non-trivial state.
    let mut state = DynamicsState::at_rest(k.n, 1e-2);
    let mut rng = stream_rng(17, stream::TEST);
    for i in 0..k.n {
        state.u[i] = 0.01 * rng.gen_range(-1.0..1.0);
        state.v[i] = 0.1 * rng.gen_range(-1.0..1.0);
        state.f[i] = rng.gen_range(-1.0..1.0);
    }
    let oracle_next = oracles::implicit_euler_dense(&state, &mass, &k);
    implicit_euler_step(&mut state, &mass, &k, &tight)?;
    let scale = oracle_next.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let worst = state
        .u
        .iter()
        .zip(&oracle_next)
        .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
    if worst > tol::DYNAMICS_ORACLE_REL * scale {
        issues.push(format!("dense oracle diff {worst:.2e} (scale {scale:.2e})"));
    }

    // Parity holds with edits applied mid-dynamics (fracture and merge).
    for scenario in [Scenario::Fracture, Scenario::Merge] {
        let mut cfg = suite_config((4, 4, 4), OperatorKind::Dynamics, scenario, threads);
        cfg.seeds = (0..5).collect();
        cfg.frames = 6;
        let comparison = run_policy_comparison(&cfg)?;
        for r in &comparison.report.rows {
            if r.policy == UpdatePolicy::FullRebuild {
                continue;
            }
            if r.parity_mismatch_count.unwrap_or(1) != 0
                || r.parity_max_abs_diff.unwrap_or(1.0) > tol::ELASTICITY_PARITY_ABS
            {
                issues.push(format!(
                    "{scenario} dynamics parity broke at seed {} frame {}",
                    r.seed, r.frame
                ));
                break;
            }
        }
        if !comparison.report.failures.is_empty() {
            issues.push(format!("{scenario}: failed dynamics seeds"));
        }
    }

    Ok(CheckResult::new(
        "criterion 9: dynamics sanity",
        issues.is_empty(),
        if issues.is_empty() {
            format!(
                "fixed points <= {:.0e}; dense oracle <= {:.0e} relative; mid-dynamics parity clean",
                tol::DYNAMICS_FIXED_POINT_ABS,
                tol::DYNAMICS_ORACLE_REL
            )
        } else {
            issues.join("; ")
        },
    ))
}

/// Criterion 10: streaming maintenance footprint is linear in active tets
/// and below local recompute at every size.
pub fn check_memory_accounting() -> Result<CheckResult> {
    let mut active = Vec::new();
    let mut streaming = Vec::new();
    let mut below = true;
    let mut detail = String::new();
    for k in [4usize, 8, 12] {
        let cfg = RunConfig::new(
            MeshSource::Block { nx: k, ny: k, nz: k },
            OperatorKind::Proxy,
            Scenario::Fracture,
        );
        let ctx = BenchContext::prepare(&cfg)?;
        let s = estimate_state_memory(&ctx, &cfg, UpdatePolicy::StreamingUpdate)?;
        let l = estimate_state_memory(&ctx, &cfg, UpdatePolicy::LocalRecompute)?;
        let r = estimate_state_memory(&ctx, &cfg, UpdatePolicy::FullRebuild)?;
        below &= s < l && r < s;
        active.push(ctx.mesh.tet_count() as f64);
        streaming.push(s as f64);
        detail.push_str(&format!("{k}^3: R={r} S={s} L={l}; "));
    }
    let r2 = linear_r_squared(&active, &streaming);
    let passed = below && r2 > tol::MEMORY_LINEAR_R2_MIN;
    detail.push_str(&format!("R^2={r2:.5} (floor {})", tol::MEMORY_LINEAR_R2_MIN));
    Ok(CheckResult::new(
        "criterion 10: memory accounting",
        passed,
        detail,
    ))
}

/// All verification checks; timing-sensitive ones are skipped unless
/// `include_timing`.
pub fn run_full_verify(threads: Option<usize>, include_timing: bool) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let suite = run_parity_suite(threads)?;
    checks.push(suite.parity);
    checks.push(suite.counters);
    if include_timing {
        checks.push(check_update_time_ordering(threads)?);
        checks.push(check_temporal_locality(threads)?);
        checks.push(check_locality_sweep(threads)?);
    }
    checks.push(check_element_stiffness(42));
    checks.push(suite.solver_witness);
    checks.push(check_connectivity_oracle(threads)?);
    checks.push(check_dynamics(threads)?);
    checks.push(check_memory_accounting()?);
    Ok(checks)
}

/// Independent dense reference constructions. These intentionally derive
/// everything from scratch (shape-function coefficients via the nodal
/// coordinate inverse, dense factorizations) rather than calling the
/// maintained paths they validate.
pub mod oracles {
    use super::*;
    use nalgebra::{DMatrix, DVector, Matrix4};

    /// 12x12 element stiffness from the coefficient form of the linear
    /// shape functions: `N_i = a_i + b_i x + c_i y + d_i z`, coefficients
    /// from the inverse of the nodal coordinate matrix.
    pub fn element_stiffness(p: &[[f64; 3]], material: &MaterialParams) -> DMatrix<f64> {
        let coord = Matrix4::new(
            1.0, p[0][0], p[0][1], p[0][2], //
            1.0, p[1][0], p[1][1], p[1][2], //
            1.0, p[2][0], p[2][1], p[2][2], //
            1.0, p[3][0], p[3][1], p[3][2],
        );
        let vol = coord.determinant().abs() / 6.0;
        let inv = coord.try_inverse().expect("non-degenerate tet");
        let mut b = DMatrix::zeros(6, 12);
        for i in 0..4 {
            let (bx, by, bz) = (inv[(1, i)], inv[(2, i)], inv[(3, i)]);
            b[(0, 3 * i)] = bx;
            b[(1, 3 * i + 1)] = by;
            b[(2, 3 * i + 2)] = bz;
            b[(3, 3 * i)] = by;
            b[(3, 3 * i + 1)] = bx;
            b[(4, 3 * i + 1)] = bz;
            b[(4, 3 * i + 2)] = by;
            b[(5, 3 * i)] = bz;
            b[(5, 3 * i + 2)] = bx;
        }
        let e = material.youngs;
        let nu = material.poisson;
        let factor = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
        let mut d = DMatrix::zeros(6, 6);
        for r in 0..3 {
            for c in 0..3 {
                d[(r, c)] = if r == c { factor * (1.0 - nu) } else { factor * nu };
            }
            d[(r + 3, r + 3)] = factor * (1.0 - 2.0 * nu) / 2.0;
        }
        b.transpose() * d * b * vol
    }

    /// The six rigid-body modes of a tet restricted to its four vertices:
    /// three translations and three infinitesimal rotations about the
    /// centroid.
    pub fn rigid_modes(p: &[[f64; 3]]) -> Vec<[f64; 12]> {
        let mut modes = Vec::with_capacity(6);
        for axis in 0..3 {
            let mut m = [0.0; 12];
            for node in 0..4 {
                m[3 * node + axis] = 1.0;
            }
            modes.push(m);
        }
        let centroid = [
            (p[0][0] + p[1][0] + p[2][0] + p[3][0]) / 4.0,
            (p[0][1] + p[1][1] + p[2][1] + p[3][1]) / 4.0,
            (p[0][2] + p[1][2] + p[2][2] + p[3][2]) / 4.0,
        ];
        // Rotation about axis a: u = e_a x (x - centroid).
        for axis in 0..3 {
            let mut m = [0.0; 12];
            for node in 0..4 {
                let rel = [
                    p[node][0] - centroid[0],
                    p[node][1] - centroid[1],
                    p[node][2] - centroid[2],
                ];
                let (u, v, w) = match axis {
                    0 => (0.0, -rel[2], rel[1]),
                    1 => (rel[2], 0.0, -rel[0]),
                    _ => (-rel[1], rel[0], 0.0),
                };
                m[3 * node] = u;
                m[3 * node + 1] = v;
                m[3 * node + 2] = w;
            }
            modes.push(m);
        }
        modes
    }

    /// One dense implicit Euler update `(M + h^2 K) u' = M (u + h v) + h^2 f`
    /// with zero-mass DOFs pinned, via LU.
    pub fn implicit_euler_dense(
        state: &DynamicsState,
        dof_mass: &[f64],
        stiffness: &crate::sparse::CsrMatrix,
    ) -> Vec<f64> {
        let n = stiffness.n;
        let kd = stiffness.to_dense();
        let h = state.h;
        let mut a = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for r in 0..n {
            if dof_mass[r] == 0.0 {
                a[(r, r)] = 1.0;
                rhs[r] = state.u[r];
                continue;
            }
            for c in 0..n {
                a[(r, c)] = h * h * kd[r][c];
            }
            a[(r, r)] += dof_mass[r];
            rhs[r] = dof_mass[r] * (state.u[r] + h * state.v[r]) + h * h * state.f[r];
        }
        a.lu().solve(&rhs).expect("SPD system").iter().copied().collect()
    }

    /// Dense Jacobi-preconditioned reference solve used by solver checks.
    pub fn dense_solve(a: &crate::sparse::CsrMatrix, b: &[f64]) -> Vec<f64> {
        let dense = a.to_dense();
        let m = DMatrix::from_fn(a.n, a.n, |r, c| dense[r][c]);
        let rhs = DVector::from_vec(b.to_vec());
        m.lu().solve(&rhs).expect("solvable").iter().copied().collect()
    }

    /// Relative error helper against a reference vector.
    pub fn relative_inf_error(x: &[f64], reference: &[f64]) -> f64 {
        let scale = reference.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-300);
        x.iter()
            .zip(reference)
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
            / scale
    }
}
