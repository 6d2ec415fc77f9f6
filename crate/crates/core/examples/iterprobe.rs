// Scratch probe: CG iteration-count stability across policies vs (eps, tol).
use stafem::bench::*;
use stafem::edits::Scenario;
use stafem::solver::CgConfig;
use stafem::proxy::UpdatePolicy;

fn main() {
    for (eps, tol) in [(1e-6, 1e-8), (1e-4, 1e-6), (1e-2, 1e-4), (1e-2, 1e-6)] {
        let mut total_diffs = 0;
        let t0 = std::time::Instant::now();
        for (dims, scen) in [
            ((6usize,6usize,6usize), Scenario::Refinement),
            ((8,8,8), Scenario::Refinement),
            ((8,8,8), Scenario::Merge),
            ((8,8,8), Scenario::Fracture),
        ] {
            let mut cfg = RunConfig::new(MeshSource::Block{nx:dims.0,ny:dims.1,nz:dims.2}, OperatorKind::Elasticity, scen);
            cfg.seeds = (0..10).collect();
            cfg.frames = 8;
            cfg.parity_check = false;
            cfg.epsilon = eps;
            cfg.material = stafem::bench::verify::parity_material();
            cfg.cg = CgConfig { tolerance: tol, max_iterations: Some(2000) };
            let cmp = run_policy_comparison(&cfg).unwrap();
            let mut by_key: std::collections::HashMap<(u64,usize), Vec<usize>> = Default::default();
            let mut max_iter = 0usize;
            for r in &cmp.report.rows {
                by_key.entry((r.seed, r.frame)).or_default().push(r.cg_iterations);
                max_iter = max_iter.max(r.cg_iterations);
            }
            let diffs = by_key.values().filter(|v| v.iter().min() != v.iter().max()).count();
            total_diffs += diffs;
            eprint!("[{:?} {:?}: {} diffs, iters<={}] ", dims.0, scen, diffs, max_iter);
        }
        eprintln!("\n eps={eps:.0e} tol={tol:.0e}: total flips {total_diffs} ({:.1}s)", t0.elapsed().as_secs_f64());
    }
}
