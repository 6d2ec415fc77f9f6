//! Diagonally preconditioned conjugate gradients and the implicit Euler
//! dynamics step.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{frame_rng, stream};
use crate::sparse::CsrMatrix;

/// CG settings. `max_iterations = None` means ten times the system size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    /// Relative residual target, `||Ax - b|| <= tolerance * ||b||`.
    pub tolerance: f64,
    pub max_iterations: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tolerance: 1e-8,
            max_iterations: None,
        }
    }
}

impl CgConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        CgConfig {
            tolerance,
            ..Default::default()
        }
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// True relative residual at exit, `||b - Ax|| / ||b||`.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned CG on a symmetric positive definite matrix.
///
/// Non-convergence within the iteration cap is reported in the stats, not an
/// error. `trace` (when given) receives the recurrence relative residual per
/// iteration.
pub fn pcg_solve(
    a: &CsrMatrix,
    b: &[f64],
    cfg: &CgConfig,
    mut trace: Option<&mut Vec<(usize, f64)>>,
) -> Result<(Vec<f64>, CgStats)> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rhs has {} entries for a {n}-dim matrix",
            b.len()
        )));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("rhs contains non-finite entries".into()));
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| d <= 0.0 || !d.is_finite()) {
        return Err(Error::Preconditioner(format!(
            "diagonal entry {i} is {} (must be positive)",
            diag[i]
        )));
    }

    let norm_b = norm(b);
    if norm_b == 0.0 {
        return Ok((
            vec![0.0; n],
            CgStats {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    let cap = cfg.iteration_cap(n);
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=cap {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::Numerical("non-finite curvature in CG".into()));
        }
        if pap <= 0.0 {
            return Err(Error::Numerical(format!(
                "non-positive curvature {pap} in CG (matrix not SPD?)"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / norm_b;
        if !rel.is_finite() {
            return Err(Error::Numerical("non-finite residual in CG".into()));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push((iter, rel));
        }
        iterations = iter;
        if rel <= cfg.tolerance {
            converged = true;
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    // Report the true residual, not the recurrence.
    let mut ax = vec![0.0; n];
    a.matvec(&x, &mut ax);
    let true_res: f64 = ax
        .iter()
        .zip(b)
        .map(|(axi, bi)| (bi - axi) * (bi - axi))
        .sum::<f64>()
        .sqrt()
        / norm_b;
    Ok((
        x,
        CgStats {
            iterations,
            relative_residual: true_res,
            converged,
        },
    ))
}

/// The seeded standard-normal right-hand side used for static solves; fixed
/// per `(seed, frame)` so every policy solves the identical system.
pub fn seeded_normal_rhs(n: usize, seed: u64, frame: usize) -> Vec<f64> {
    let mut rng = frame_rng(seed, stream::RHS, frame);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Finalized-matrix solve against the seeded per-frame rhs.
pub fn static_frame_solve(
    matrix: &CsrMatrix,
    seed: u64,
    frame: usize,
    cfg: &CgConfig,
) -> Result<(Vec<f64>, CgStats)> {
    let b = seeded_normal_rhs(matrix.n, seed, frame);
    pcg_solve(matrix, &b, cfg, None)
}

/// Implicit Euler state: per-DOF displacement, velocity and external load.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub f: Vec<f64>,
    pub h: f64,
}

impl DynamicsState {
    pub fn at_rest(dofs: usize, h: f64) -> Self {
        DynamicsState {
            u: vec![0.0; dofs],
            v: vec![0.0; dofs],
            f: vec![0.0; dofs],
            h,
        }
    }
}

/// Gravity-like load `(0, -9.8 m_i, 0)` per vertex from the per-DOF mass.
pub fn gravity_load(dof_mass: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; dof_mass.len()];
    for (d, m) in dof_mass.iter().enumerate() {
        if d % 3 == 1 {
            f[d] = -9.8 * m;
        }
    }
    f
}

/// Assembles `M + h^2 K` with zero-mass DOFs pinned (identity row) and the
/// matching right-hand side `M (u + h v) + h^2 f` (pinned rows keep their
/// current displacement).
fn build_implicit_system(
    stiffness: &CsrMatrix,
    dof_mass: &[f64],
    state: &DynamicsState,
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = stiffness.n;
    if dof_mass.len() != n || state.u.len() != n || state.v.len() != n || state.f.len() != n {
        return Err(Error::InvalidArgument(
            "dynamics state lengths disagree with the stiffness dimension".into(),
        ));
    }
    let h = state.h;
    let h2 = h * h;
    let mut values = Vec::with_capacity(stiffness.nnz());
    let mut rhs = vec![0.0; n];
    for row in 0..n {
        let pinned = dof_mass[row] == 0.0;
        for i in stiffness.row_ptr[row]..stiffness.row_ptr[row + 1] {
            let col = stiffness.col_idx[i];
            let k = stiffness.values[i];
            let val = if pinned {
                // An inactive vertex has no stiffness coupling; its row is
                // the stored scalar diagonal only.
                debug_assert!(col == row && k == 0.0);
                1.0
            } else if col == row {
                dof_mass[row] + h2 * k
            } else {
                h2 * k
            };
            values.push(val);
        }
        rhs[row] = if pinned {
            state.u[row]
        } else {
            dof_mass[row] * (state.u[row] + h * state.v[row]) + h2 * state.f[row]
        };
    }
    Ok((
        CsrMatrix {
            n,
            row_ptr: stiffness.row_ptr.clone(),
            col_idx: stiffness.col_idx.clone(),
            values,
        },
        rhs,
    ))
}

/// One implicit Euler step `(M + h^2 K) u' = M (u + h v) + h^2 f` against the
/// maintained stiffness (materialized with eps = 0); velocity by finite
/// difference.
pub fn implicit_euler_step(
    state: &mut DynamicsState,
    dof_mass: &[f64],
    stiffness: &CsrMatrix,
    cfg: &CgConfig,
) -> Result<CgStats> {
    let (system, rhs) = build_implicit_system(stiffness, dof_mass, state)?;
    let (u_next, stats) = pcg_solve(&system, &rhs, cfg, None)?;
    if u_next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite displacement".into()));
    }
    for i in 0..state.u.len() {
        state.v[i] = (u_next[i] - state.u[i]) / state.h;
        state.u[i] = u_next[i];
    }
    Ok(stats)
}

/// Total linear momentum per axis, `sum_i m_i v_i`.
pub fn total_momentum(dof_mass: &[f64], v: &[f64]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for (d, (&m, &vel)) in dof_mass.iter().zip(v).enumerate() {
        p[d % 3] += m * vel;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::{precompute_element_stiffness, ElasticAssembly, MaterialParams};
    use crate::mesh::{ActiveMask, SupersetMesh};
    use crate::proxy::{ProxyAssembly, UpdatePolicy};
    use std::sync::Arc;

    fn identity_csr(n: usize, scale: f64) -> CsrMatrix {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![scale; n],
        }
    }

    fn two_tet_mesh() -> Arc<SupersetMesh> {
        Arc::new(
            SupersetMesh::from_parts(
                vec![
                    [0.0, 0.0, 0.0],
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                    [1.0, 1.0, 1.0],
                ],
                vec![[0, 1, 2, 3], [1, 2, 3, 4]],
            )
            .unwrap(),
        )
    }

    #[test]
    fn identity_system_solves_in_one_iteration() {
        let a = identity_csr(5, 1.0);
        let b = vec![3.0, -1.0, 2.0, 0.5, 9.0];
        let (x, stats) = pcg_solve(&a, &b, &CgConfig::default(), None).unwrap();
        assert!(stats.converged);
        assert!(stats.iterations <= 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_system_scales() {
        let a = identity_csr(4, 2.0);
        let b = vec![4.0; 4];
        let (x, stats) = pcg_solve(&a, &b, &CgConfig::default(), None).unwrap();
        assert!(stats.converged);
        for xi in x {
            assert!((xi - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = identity_csr(3, 1.0);
        let (x, stats) = pcg_solve(&a, &[0.0; 3], &CgConfig::default(), None).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert_eq!(stats.iterations, 0);
        assert!(stats.converged);
    }

    #[test]
    fn zero_diagonal_is_a_preconditioner_error() {
        let a = identity_csr(3, 0.0);
        assert!(matches!(
            pcg_solve(&a, &[1.0; 3], &CgConfig::default(), None),
            Err(Error::Preconditioner(_))
        ));
    }

    #[test]
    fn proxy_solve_matches_dense_oracle() {
        let mesh = two_tet_mesh();
        let asm = ProxyAssembly::new(
            mesh,
            ActiveMask::all_active(2),
            UpdatePolicy::FullRebuild,
        )
        .unwrap();
        let a = asm.finalize(1e-6);
        let b = seeded_normal_rhs(a.n, 11, 0);
        let (x, stats) = pcg_solve(&a, &b, &CgConfig::with_tolerance(1e-12), None).unwrap();
        assert!(stats.converged);

        let dense = nalgebra::DMatrix::from_fn(a.n, a.n, |r, c| a.to_dense()[r][c]);
        let rhs = nalgebra::DVector::from_vec(b.clone());
        let oracle = dense.lu().solve(&rhs).unwrap();
        let scale = oracle.norm();
        for i in 0..a.n {
            assert!(
                (x[i] - oracle[i]).abs() <= 1e-8 * scale,
                "dof {i}: {} vs {}",
                x[i],
                oracle[i]
            );
        }
    }

    #[test]
    fn rhs_is_reproducible_per_seed_and_frame() {
        assert_eq!(seeded_normal_rhs(8, 3, 2), seeded_normal_rhs(8, 3, 2));
        assert_ne!(seeded_normal_rhs(8, 3, 2), seeded_normal_rhs(8, 3, 3));
        assert_ne!(seeded_normal_rhs(8, 4, 2), seeded_normal_rhs(8, 3, 2));
    }

    #[test]
    fn empty_mask_proxy_solves_to_b_over_eps() {
        let mesh = two_tet_mesh();
        let asm = ProxyAssembly::new(
            mesh,
            ActiveMask::all_inactive(2),
            UpdatePolicy::FullRebuild,
        )
        .unwrap();
        let eps = 1e-6;
        let a = asm.finalize(eps);
        let b = vec![2e-6; 5];
        let (x, _) = pcg_solve(&a, &b, &CgConfig::default(), None).unwrap();
        for xi in x {
            assert!((xi - 2.0).abs() < 1e-9);
        }
    }

    fn elastic_fixture(
        material: MaterialParams,
    ) -> (Arc<SupersetMesh>, ElasticAssembly) {
        let mesh = two_tet_mesh();
        let cache = Arc::new(precompute_element_stiffness(&mesh, material).unwrap());
        let asm = ElasticAssembly::new(
            mesh.clone(),
            cache,
            ActiveMask::all_active(2),
            UpdatePolicy::FullRebuild,
        )
        .unwrap();
        (mesh, asm)
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let (_, asm) = elastic_fixture(MaterialParams::default());
        let k = asm.finalize(0.0);
        let mass = asm.dof_mass();
        let mut state = DynamicsState::at_rest(k.n, 1e-2);
        let stats = implicit_euler_step(&mut state, &mass, &k, &CgConfig::default()).unwrap();
        assert!(stats.converged);
        assert!(state.u.iter().all(|&x| x.abs() <= 1e-10));
        assert!(state.v.iter().all(|&x| x.abs() <= 1e-10));
    }

    #[test]
    fn rigid_translation_is_a_fixed_point() {
        let material = MaterialParams {
            youngs: 1.0,
            ..MaterialParams::default()
        };
        let (_, asm) = elastic_fixture(material);
        let k = asm.finalize(0.0);
        let mass = asm.dof_mass();
        let mut state = DynamicsState::at_rest(k.n, 1e-2);
        for d in (0..k.n).step_by(3) {
            state.u[d] = 0.25;
        }
        let before = state.u.clone();
        let stats = implicit_euler_step(
            &mut state,
            &mass,
            &k,
            &CgConfig::with_tolerance(1e-12),
        )
        .unwrap();
        assert!(stats.converged);
        for i in 0..k.n {
            assert!(
                (state.u[i] - before[i]).abs() <= 1e-10,
                "dof {i} moved by {}",
                state.u[i] - before[i]
            );
        }
    }

    #[test]
    fn single_step_matches_dense_oracle() {
        let material = MaterialParams {
            youngs: 1.0,
            ..MaterialParams::default()
        };
        let (_, asm) = elastic_fixture(material);
        let k = asm.finalize(0.0);
        let mass = asm.dof_mass();
        let h = 1e-2;

        let mut state = DynamicsState::at_rest(k.n, h);
        // A deterministic non-trivial state.
        for i in 0..k.n {
            state.u[i] = 0.01 * (i as f64).sin();
            state.v[i] = 0.02 * (i as f64 * 0.7).cos();
        }
        state.f = gravity_load(&mass);
        let u0 = state.u.clone();
        let v0 = state.v.clone();
        implicit_euler_step(&mut state, &mass, &k, &CgConfig::with_tolerance(1e-13)).unwrap();

        // Dense oracle of the same update.
        let n = k.n;
        let kd = k.to_dense();
        let mut a = nalgebra::DMatrix::zeros(n, n);
        let mut rhs = nalgebra::DVector::zeros(n);
        for r in 0..n {
            if mass[r] == 0.0 {
                a[(r, r)] = 1.0;
                rhs[r] = u0[r];
                continue;
            }
            for c in 0..n {
                a[(r, c)] = h * h * kd[r][c];
            }
            a[(r, r)] += mass[r];
            rhs[r] = mass[r] * (u0[r] + h * v0[r]) + h * h * state.f[r];
        }
        let oracle = a.lu().solve(&rhs).unwrap();
        let scale = oracle.norm().max(1e-30);
        for i in 0..n {
            assert!(
                (state.u[i] - oracle[i]).abs() <= 1e-8 * scale,
                "dof {i}: {} vs {}",
                state.u[i],
                oracle[i]
            );
        }
    }

    #[test]
    fn free_floating_step_conserves_momentum() {
        let material = MaterialParams {
            youngs: 1.0,
            ..MaterialParams::default()
        };
        let (_, asm) = elastic_fixture(material);
        let k = asm.finalize(0.0);
        let mass = asm.dof_mass();
        let mut state = DynamicsState::at_rest(k.n, 1e-2);
        for i in 0..k.n {
            state.u[i] = 0.005 * ((3 * i + 1) as f64).sin();
            state.v[i] = 0.4 * ((2 * i) as f64).cos();
        }
        let before = total_momentum(&mass, &state.v);
        implicit_euler_step(&mut state, &mass, &k, &CgConfig::default()).unwrap();
        let after = total_momentum(&mass, &state.v);
        for axis in 0..3 {
            let scale = before[axis].abs().max(1e-12);
            assert!(
                (after[axis] - before[axis]).abs() <= 1e-6 * scale,
                "axis {axis}: {} -> {}",
                before[axis],
                after[axis]
            );
        }
    }
}
