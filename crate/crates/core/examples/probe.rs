// Scratch probe for acceptance-margin questions; not part of the deliverable.
use stafem::bench::*;
use stafem::edits::Scenario;
use stafem::elasticity::MaterialParams;
use stafem::proxy::UpdatePolicy;
use stafem::solver::CgConfig;

fn main() {
    // kappa_max and local-recompute scan bounds on block meshes.
    for k in [6usize, 8, 10] {
        let mesh = stafem::mesh::generate_block_mesh(k, k, k).unwrap();
        let kappa = mesh.kappa_max();
        let edge_inc = mesh.build_edge_incidence();
        let vert_inc = mesh.build_vertex_incidence();
        let ke = edge_inc.iter().map(Vec::len).max().unwrap();
        let kv = vert_inc.iter().map(Vec::len).max().unwrap();
        println!("block {k}: tets={} edges={} kappa_edge={ke} kappa_vertex={kv} kappa_max={kappa}",
            mesh.tet_count(), mesh.edge_count());
    }

    // Counter bound check on a (6,6,6) fracture run, local policy.
    let mut cfg = RunConfig::new(
        MeshSource::Block { nx: 6, ny: 6, nz: 6 },
        OperatorKind::Proxy,
        Scenario::Fracture,
    );
    cfg.seeds = vec![0, 1, 2];
    cfg.threads = Some(1);
    cfg.policy = UpdatePolicy::LocalRecompute;
    let ctx = BenchContext::prepare(&cfg).unwrap();
    let kappa = ctx.mesh.kappa_max() as u64;
    let rep = run_benchmark_with(&ctx, &cfg, UpdatePolicy::LocalRecompute).unwrap();
    let mut worst = 0.0f64;
    for r in &rep.rows {
        if r.delta_size == 0 { continue; }
        let bound = r.delta_size as u64 * kappa;
        let ratio = r.tets_scanned as f64 / bound as f64;
        worst = worst.max(ratio);
        assert!(r.tets_scanned >= r.delta_size as u64, "lower bound violated");
    }
    println!("local scan bound usage (scanned / (delta*kappa)): worst {worst:.3}");

    // Same for elasticity repeated locality (pairs incl. diagonals).
    let mut ecfg = RunConfig::new(
        MeshSource::Block { nx: 8, ny: 8, nz: 8 },
        OperatorKind::Elasticity,
        Scenario::RepeatedLocality,
    );
    ecfg.seeds = vec![0, 1, 2, 3, 4, 5, 6];
    ecfg.threads = Some(1);
    ecfg.material = MaterialParams { youngs: 1.0, poisson: 0.3, density: 1.0 };
    ecfg.cg = CgConfig { tolerance: 1e-6, max_iterations: Some(4000) };
    ecfg.parity_check = true;
    let t0 = std::time::Instant::now();
    let temporal = run_temporal_locality(&ecfg).unwrap();
    println!(
        "temporal locality L/S ratio: {:.2} parity_clean={} ({:.1}s)",
        temporal.update_ratio_local_over_streaming,
        temporal.parity_clean,
        t0.elapsed().as_secs_f64()
    );
    let max_par = temporal.report.rows.iter().filter_map(|r| r.parity_max_abs_diff).fold(0.0, f64::max);
    println!("temporal parity max abs diff (E=1): {max_par:.3e}");
    let kappa = {
        let m = stafem::mesh::generate_block_mesh(8, 8, 8).unwrap();
        m.kappa_max() as u64
    };
    let mut worst = 0.0f64;
    for r in temporal.report.rows.iter().filter(|r| r.policy == UpdatePolicy::LocalRecompute) {
        if r.delta_size == 0 { continue; }
        let bound = r.delta_size as u64 * kappa;
        worst = worst.max(r.tets_scanned as f64 / bound as f64);
    }
    println!("elastic local scan bound usage: worst {worst:.3}");

    // Criterion 3 rehearsal: (10,10,10) proxy fracture update-time ordering.
    let mut cfg3 = RunConfig::new(
        MeshSource::Block { nx: 10, ny: 10, nz: 10 },
        OperatorKind::Proxy,
        Scenario::Fracture,
    );
    cfg3.seeds = (0..7).collect();
    cfg3.threads = Some(1);
    cfg3.cg = CgConfig { tolerance: 1e-6, max_iterations: Some(4000) };
    let t0 = std::time::Instant::now();
    let cmp = run_policy_comparison(&cfg3).unwrap();
    let med = |p| cmp.report.median_of_seed_means(p, |r: &FrameMetrics| r.update_time_s);
    let (r, l, s) = (
        med(UpdatePolicy::FullRebuild),
        med(UpdatePolicy::LocalRecompute),
        med(UpdatePolicy::StreamingUpdate),
    );
    println!(
        "update medians (10^3 block, fracture): R={:.1}us L={:.1}us S={:.1}us R/S={:.1} ({:.1}s total)",
        r * 1e6, l * 1e6, s * 1e6, r / s, t0.elapsed().as_secs_f64()
    );
    println!("cg identical: {}", cmp.cg_iterations_identical);

    // Elasticity parity scale with default material (E=1e5).
    let mut pcfg = RunConfig::new(
        MeshSource::Block { nx: 4, ny: 4, nz: 4 },
        OperatorKind::Elasticity,
        Scenario::RepeatedLocality,
    );
    pcfg.seeds = vec![0];
    pcfg.threads = Some(1);
    pcfg.parity_check = true;
    pcfg.cg = CgConfig { tolerance: 1e-6, max_iterations: Some(4000) };
    let rep = run_benchmark_with(&BenchContext::prepare(&pcfg).unwrap(), &pcfg, UpdatePolicy::StreamingUpdate).unwrap();
    let max_par = rep.rows.iter().filter_map(|r| r.parity_max_abs_diff).fold(0.0, f64::max);
    println!("streaming parity max abs diff with E=1e5: {max_par:.3e}");
}
