//! The element-assembled vector-valued linear-tetrahedron elasticity
//! operator, maintained under the same three policies as the proxy.
//!
//! Per-tet 12x12 stiffness blocks are precomputed once on the candidate
//! pool. The maintained state is a map of accumulated 3x3 blocks keyed by
//! vertex pair, with a contributing-tet count per pair: the count's
//! 0-transitions drive structural insertion/removal exactly like the
//! proxy's edge multiplicity, while the block values accumulate element
//! contributions additively. A lumped mass vector is maintained alongside.

use std::collections::BTreeSet;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::edits::{apply_batch, EditBatch};
use crate::error::{Error, Result};
use crate::footprint;
use crate::mesh::{ActiveMask, SupersetMesh};
use crate::proxy::{UpdatePolicy, WorkCounters};
use crate::sparse::CsrMatrix;

/// Isotropic material constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs: f64,
    pub poisson: f64,
    pub density: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            youngs: 1e5,
            poisson: 0.3,
            density: 1.0,
        }
    }
}

/// Precomputed per-candidate-tet element data: 12x12 stiffness (row-major),
/// volume, and the shared material constants.
#[derive(Clone)]
pub struct ElementStiffnessCache {
    pub material: MaterialParams,
    stiffness: Vec<[f64; 144]>,
    volumes: Vec<f64>,
}

impl ElementStiffnessCache {
    pub fn stiffness(&self, tet: usize) -> &[f64; 144] {
        &self.stiffness[tet]
    }

    pub fn volume(&self, tet: usize) -> f64 {
        self.volumes[tet]
    }

    /// The 3x3 sub-block of `K^(tet)` coupling local corners `(i, j)`.
    pub fn block(&self, tet: usize, i: usize, j: usize) -> [f64; 9] {
        let k = &self.stiffness[tet];
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = k[12 * (3 * i + r) + (3 * j + c)];
            }
        }
        out
    }
}

/// The 6x6 isotropic elasticity matrix in Voigt order
/// (xx, yy, zz, xy, yz, zx) with engineering shear strain.
fn elasticity_matrix(material: &MaterialParams) -> SMatrix<f64, 6, 6> {
    let e = material.youngs;
    let nu = material.poisson;
    let factor = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mut d = SMatrix::<f64, 6, 6>::zeros();
    for r in 0..3 {
        for c in 0..3 {
            d[(r, c)] = if r == c { factor * (1.0 - nu) } else { factor * nu };
        }
        d[(r + 3, r + 3)] = factor * (1.0 - 2.0 * nu) / 2.0;
    }
    d
}

/// Builds `K^(tau) = volume * B^T D B` for every candidate tet, where `B` is
/// the constant 6x12 strain-displacement matrix from the linear shape
/// function gradients. The result is explicitly symmetrized.
pub fn precompute_element_stiffness(
    mesh: &SupersetMesh,
    material: MaterialParams,
) -> Result<ElementStiffnessCache> {
    if !(-1.0 < material.poisson && material.poisson < 0.5) {
        return Err(Error::Config(format!(
            "Poisson ratio must lie in (-1, 0.5), got {}",
            material.poisson
        )));
    }
    let (lo, hi) = mesh.bbox();
    let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1.0);
    let vol_floor = 1e-14 * extent * extent * extent;

    let d = elasticity_matrix(&material);
    let mut stiffness = Vec::with_capacity(mesh.tet_count());
    let mut volumes = Vec::with_capacity(mesh.tet_count());
    let mut degenerate = Vec::new();

    for (tid, tet) in mesh.tets.iter().enumerate() {
        let p: Vec<[f64; 3]> = tet.iter().map(|&v| mesh.vertices[v]).collect();
        let jac = Matrix3::from_columns(&[
            nalgebra::Vector3::new(p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]),
            nalgebra::Vector3::new(p[2][0] - p[0][0], p[2][1] - p[0][1], p[2][2] - p[0][2]),
            nalgebra::Vector3::new(p[3][0] - p[0][0], p[3][1] - p[0][1], p[3][2] - p[0][2]),
        ]);
        let vol = jac.determinant().abs() / 6.0;
        if vol <= vol_floor {
            degenerate.push(tid);
            stiffness.push([0.0; 144]);
            volumes.push(0.0);
            continue;
        }
        let jac_inv_t = jac
            .try_inverse()
            .expect("non-degenerate jacobian inverts")
            .transpose();

        // Reference gradients of N0..N3; world gradients via J^-T.
        let ref_grads = [
            nalgebra::Vector3::new(-1.0, -1.0, -1.0),
            nalgebra::Vector3::new(1.0, 0.0, 0.0),
            nalgebra::Vector3::new(0.0, 1.0, 0.0),
            nalgebra::Vector3::new(0.0, 0.0, 1.0),
        ];
        let mut b = SMatrix::<f64, 6, 12>::zeros();
        for (i, g_ref) in ref_grads.iter().enumerate() {
            let g = jac_inv_t * g_ref;
            let col = 3 * i;
            b[(0, col)] = g.x;
            b[(1, col + 1)] = g.y;
            b[(2, col + 2)] = g.z;
            b[(3, col)] = g.y;
            b[(3, col + 1)] = g.x;
            b[(4, col + 1)] = g.z;
            b[(4, col + 2)] = g.y;
            b[(5, col)] = g.z;
            b[(5, col + 2)] = g.x;
        }
        let k = b.transpose() * d * b * vol;

        let mut out = [0.0; 144];
        for r in 0..12 {
            for c in 0..12 {
                out[12 * r + c] = 0.5 * (k[(r, c)] + k[(c, r)]);
            }
        }
        stiffness.push(out);
        volumes.push(vol);
    }

    if !degenerate.is_empty() {
        return Err(Error::DegenerateTets(degenerate));
    }
    Ok(ElementStiffnessCache {
        material,
        stiffness,
        volumes,
    })
}

/// One accumulated 3x3 block and the number of active tets contributing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub values: [f64; 9],
    pub count: u32,
}

/// The local corner pairs contributing blocks: 4 diagonal + 6 off-diagonal.
const TET_BLOCK_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (1, 1),
    (2, 2),
    (3, 3),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 2),
    (1, 3),
    (2, 3),
];

/// A maintained elasticity operator plus its lumped mass vector.
pub struct ElasticAssembly {
    mesh: Arc<SupersetMesh>,
    cache: Arc<ElementStiffnessCache>,
    policy: UpdatePolicy,
    mask: ActiveMask,
    /// Accumulated blocks keyed by canonical vertex pair (u <= v).
    blocks: FxHashMap<(usize, usize), BlockEntry>,
    /// Sorted off-diagonal neighbor lists (both directions), the
    /// materialization order.
    adj: Vec<Vec<usize>>,
    /// Per-vertex lumped mass.
    mass: Vec<f64>,
    /// Local-recompute caches (also used by optional reaccumulation).
    edge_incidence: Option<Vec<Vec<usize>>>,
    vertex_incidence: Option<Vec<Vec<usize>>>,
    scan_stamp: Vec<u64>,
    scan_generation: u64,
    counters: WorkCounters,
    /// Streaming guard: recompute touched blocks exactly every N frames.
    reaccumulate_every: Option<usize>,
    frames_since_reaccumulate: usize,
}

impl ElasticAssembly {
    pub fn new(
        mesh: Arc<SupersetMesh>,
        cache: Arc<ElementStiffnessCache>,
        mask: ActiveMask,
        policy: UpdatePolicy,
    ) -> Result<Self> {
        mask.validate_against(&mesh)?;
        let needs_incidence = matches!(policy, UpdatePolicy::LocalRecompute);
        let scan_len = mesh.tet_count();
        let mut asm = ElasticAssembly {
            edge_incidence: needs_incidence.then(|| mesh.build_edge_incidence()),
            vertex_incidence: needs_incidence.then(|| mesh.build_vertex_incidence()),
            blocks: FxHashMap::default(),
            adj: vec![Vec::new(); mesh.vertex_count()],
            mass: vec![0.0; mesh.vertex_count()],
            scan_stamp: vec![0; scan_len],
            scan_generation: 0,
            counters: WorkCounters::default(),
            reaccumulate_every: None,
            frames_since_reaccumulate: 0,
            mesh,
            cache,
            policy,
            mask,
        };
        asm.rebuild_in_place();
        Ok(asm)
    }

    /// Enables the periodic exact-reaccumulation guard (streaming only).
    pub fn set_reaccumulate_every(&mut self, frames: usize) {
        self.reaccumulate_every = (frames > 0).then_some(frames);
        if self.reaccumulate_every.is_some() {
            if self.edge_incidence.is_none() {
                self.edge_incidence = Some(self.mesh.build_edge_incidence());
            }
            if self.vertex_incidence.is_none() {
                self.vertex_incidence = Some(self.mesh.build_vertex_incidence());
            }
        }
    }

    pub fn policy(&self) -> UpdatePolicy {
        self.policy
    }

    pub fn mask(&self) -> &ActiveMask {
        &self.mask
    }

    pub fn counters(&self) -> WorkCounters {
        self.counters
    }

    pub fn block(&self, u: usize, v: usize) -> Option<&BlockEntry> {
        self.blocks.get(&canonical(u, v))
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Per-vertex lumped mass.
    pub fn vertex_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Per-DOF lumped mass (each vertex mass repeated for x, y, z).
    pub fn dof_mass(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(3 * self.mass.len());
        for &v in &self.mass {
            m.extend_from_slice(&[v, v, v]);
        }
        m
    }

    pub fn apply_edits(&mut self, batch: &EditBatch) -> Result<()> {
        self.counters.reset();
        match self.policy {
            UpdatePolicy::FullRebuild => {
                apply_batch(&mut self.mask, batch)?;
                self.rebuild_in_place();
                Ok(())
            }
            UpdatePolicy::LocalRecompute => self.apply_local(batch),
            UpdatePolicy::StreamingUpdate => self.apply_streaming(batch),
        }
    }

    /// Materializes the scalar-expanded operator `A~_t = sum P^T K P + eps*I`
    /// as 3n x 3n compressed rows with sorted columns.
    pub fn finalize(&self, eps: f64) -> CsrMatrix {
        let n = self.mesh.vertex_count();
        let dim = 3 * n;
        let mut nnz = dim;
        for list in &self.adj {
            nnz += 9 * list.len();
        }
        nnz += 6 * self
            .blocks
            .iter()
            .filter(|((u, v), _)| u == v)
            .count();

        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);

        for u in 0..n {
            let diag = self.blocks.get(&(u, u)).map(|entry| &entry.values);
            for r in 0..3 {
                let mut diag_emitted = false;
                for &v in &self.adj[u] {
                    if !diag_emitted && v > u {
                        emit_diag(&mut col_idx, &mut values, u, r, diag, eps);
                        diag_emitted = true;
                    }
                    let entry = &self.blocks[&canonical(u, v)];
                    emit_block(&mut col_idx, &mut values, v, &entry.values, v < u, r);
                }
                if !diag_emitted {
                    emit_diag(&mut col_idx, &mut values, u, r, diag, eps);
                }
                row_ptr.push(col_idx.len());
            }
        }
        CsrMatrix {
            n: dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    fn rebuild_in_place(&mut self) {
        self.blocks = FxHashMap::default();
        self.adj = vec![Vec::new(); self.mesh.vertex_count()];
        self.mass = vec![0.0; self.mesh.vertex_count()];
        let active: Vec<usize> = self.mask.iter_active().collect();
        for &t in &active {
            self.scatter_tet(t, 1.0);
            self.add_mass(t, 1.0);
        }
        self.counters.tets_scanned = active.len() as u64;
        self.counters.edges_visited = 6 * active.len() as u64;
        self.counters.entries_mutated = 10 * active.len() as u64;
    }

    /// Adds (`sign = 1`) or subtracts (`sign = -1`) tet `t`'s ten blocks,
    /// maintaining counts and structure.
    fn scatter_tet(&mut self, t: usize, sign: f64) {
        let tet = self.mesh.tets[t];
        for &(i, j) in &TET_BLOCK_PAIRS {
            let (gi, gj) = (tet[i], tet[j]);
            let (key, block) = if gi <= gj {
                ((gi, gj), self.cache.block(t, i, j))
            } else {
                ((gj, gi), self.cache.block(t, j, i))
            };
            match self.blocks.entry(key) {
                std::collections::hash_map::Entry::Occupied(mut slot) => {
                    let entry = slot.get_mut();
                    for (dst, src) in entry.values.iter_mut().zip(block) {
                        *dst += sign * src;
                    }
                    if sign > 0.0 {
                        entry.count += 1;
                    } else {
                        assert!(entry.count > 0, "block count underflow on {key:?}");
                        entry.count -= 1;
                        if entry.count == 0 {
                            slot.remove();
                            if key.0 != key.1 {
                                remove_sorted(&mut self.adj[key.0], key.1);
                                remove_sorted(&mut self.adj[key.1], key.0);
                            }
                        }
                    }
                }
                std::collections::hash_map::Entry::Vacant(slot) => {
                    assert!(
                        sign > 0.0,
                        "subtracting from a structurally absent block {key:?}"
                    );
                    let mut values = [0.0; 9];
                    for (dst, src) in values.iter_mut().zip(block) {
                        *dst = sign * src;
                    }
                    slot.insert(BlockEntry { values, count: 1 });
                    if key.0 != key.1 {
                        insert_sorted(&mut self.adj[key.0], key.1);
                        insert_sorted(&mut self.adj[key.1], key.0);
                    }
                }
            }
        }
    }

    fn add_mass(&mut self, t: usize, sign: f64) {
        let share = sign * self.cache.material.density * self.cache.volume(t) / 4.0;
        for &v in &self.mesh.tets[t] {
            self.mass[v] += share;
        }
    }

    fn apply_streaming(&mut self, batch: &EditBatch) -> Result<()> {
        apply_batch(&mut self.mask, batch)?;
        for &t in &batch.deleted {
            self.scatter_tet(t, -1.0);
            self.add_mass(t, -1.0);
        }
        for &t in &batch.added {
            self.scatter_tet(t, 1.0);
            self.add_mass(t, 1.0);
        }
        let delta = batch.delta_size() as u64;
        self.counters.tets_scanned = delta;
        self.counters.edges_visited = 6 * delta;
        self.counters.entries_mutated = 10 * delta;

        if let Some(period) = self.reaccumulate_every {
            self.frames_since_reaccumulate += 1;
            if self.frames_since_reaccumulate >= period {
                self.frames_since_reaccumulate = 0;
                self.reaccumulate_touched(batch);
            }
        }
        Ok(())
    }

    /// Recomputes every pair touched by `batch` from scratch, clearing
    /// accumulated rounding drift. Counts are preserved by construction.
    fn reaccumulate_touched(&mut self, batch: &EditBatch) {
        self.scan_generation += 1;
        let pairs = touched_pairs(&self.mesh, batch);
        for key in pairs {
            let (sum, count) = self.recompute_pair(key);
            if let Some(entry) = self.blocks.get_mut(&key) {
                debug_assert_eq!(entry.count, count);
                entry.values = sum;
            }
        }
    }

    /// Exact sum over all active candidate tets containing the pair, in
    /// ascending tet order (the rebuild order).
    fn recompute_pair(&mut self, key: (usize, usize)) -> ([f64; 9], u32) {
        let ElasticAssembly {
            ref mesh,
            ref cache,
            ref mask,
            ref edge_incidence,
            ref vertex_incidence,
            ref mut scan_stamp,
            ref mut counters,
            scan_generation: gen,
            ..
        } = *self;
        let (u, v) = key;
        let mut sum = [0.0; 9];
        let mut count = 0u32;
        // Candidates: vertex star for diagonal pairs, edge incidence else.
        let list: &[usize] = if u == v {
            &vertex_incidence.as_ref().expect("cached")[u]
        } else {
            match mesh.edge_index.get(&key) {
                Some(&e) => &edge_incidence.as_ref().expect("cached")[e],
                None => &[],
            }
        };
        for &t in list {
            if scan_stamp[t] != gen {
                scan_stamp[t] = gen;
                counters.tets_scanned += 1;
            }
            if !mask.is_active(t) {
                continue;
            }
            count += 1;
            let tet = mesh.tets[t];
            let li = tet.iter().position(|&g| g == u).expect("incident");
            let lj = tet.iter().position(|&g| g == v).expect("incident");
            let block = cache.block(t, li, lj);
            for (dst, src) in sum.iter_mut().zip(block) {
                *dst += src;
            }
        }
        (sum, count)
    }

    fn apply_local(&mut self, batch: &EditBatch) -> Result<()> {
        apply_batch(&mut self.mask, batch)?;
        let pairs = touched_pairs(&self.mesh, batch);

        self.scan_generation += 1;
        for key in pairs {
            if key.0 != key.1 {
                self.counters.edges_visited += 1;
            }
            let (sum, count) = self.recompute_pair(key);
            let was_present = self.blocks.contains_key(&key);
            let now_present = count > 0;
            if now_present {
                self.blocks.insert(key, BlockEntry { values: sum, count });
                self.counters.entries_mutated += 1;
                if !was_present && key.0 != key.1 {
                    insert_sorted(&mut self.adj[key.0], key.1);
                    insert_sorted(&mut self.adj[key.1], key.0);
                }
            } else if was_present {
                self.blocks.remove(&key);
                self.counters.entries_mutated += 1;
                if key.0 != key.1 {
                    remove_sorted(&mut self.adj[key.0], key.1);
                    remove_sorted(&mut self.adj[key.1], key.0);
                }
            }
        }

        // Stateless mass maintenance: recompute touched vertices from their
        // candidate stars (ascending order, matching rebuild).
        let mut touched_vertices: BTreeSet<usize> = BTreeSet::new();
        for &t in batch.deleted.iter().chain(&batch.added) {
            touched_vertices.extend(self.mesh.tets[t]);
        }
        let stars = self.vertex_incidence.as_ref().expect("cached");
        for &v in &touched_vertices {
            let mut m = 0.0;
            for &t in &stars[v] {
                if self.mask.is_active(t) {
                    m += self.cache.material.density * self.cache.volume(t) / 4.0;
                }
            }
            self.mass[v] = m;
        }
        Ok(())
    }

    /// Policy-specific persistent maintenance footprint.
    pub fn maintenance_state_bytes(&self) -> usize {
        let mask_bytes = footprint::MASK_PER_TET * self.mesh.tet_count();
        let mass_bytes = footprint::MASS_PER_VERTEX * self.mass.len();
        match self.policy {
            UpdatePolicy::FullRebuild => footprint::REBUILD_SCRATCH + mask_bytes,
            UpdatePolicy::StreamingUpdate => {
                mask_bytes + mass_bytes + self.blocks.len() * footprint::BLOCK_ENTRY
            }
            UpdatePolicy::LocalRecompute => {
                let edge_ids: usize = self
                    .edge_incidence
                    .as_ref()
                    .map_or(0, |inc| inc.iter().map(Vec::len).sum());
                let vert_ids: usize = self
                    .vertex_incidence
                    .as_ref()
                    .map_or(0, |inc| inc.iter().map(Vec::len).sum());
                let lists = self.mesh.edge_count() + self.mesh.vertex_count();
                mask_bytes
                    + mass_bytes
                    + (edge_ids + vert_ids) * footprint::INCIDENCE_ID
                    + lists * footprint::INCIDENCE_LIST
            }
        }
    }
}

/// Emits row `r` of vertex `u`'s diagonal block; when no block is present
/// only the scalar diagonal (the eps stabilizer) is stored.
fn emit_diag(
    col_idx: &mut Vec<usize>,
    values: &mut Vec<f64>,
    u: usize,
    r: usize,
    diag: Option<&[f64; 9]>,
    eps: f64,
) {
    match diag {
        Some(block) => {
            for c in 0..3 {
                let mut val = block[3 * r + c];
                if r == c {
                    val += eps;
                }
                col_idx.push(3 * u + c);
                values.push(val);
            }
        }
        None => {
            col_idx.push(3 * u + r);
            values.push(eps);
        }
    }
}

fn emit_block(
    col_idx: &mut Vec<usize>,
    values: &mut Vec<f64>,
    v: usize,
    block: &[f64; 9],
    transpose: bool,
    r: usize,
) {
    for c in 0..3 {
        let val = if transpose { block[3 * c + r] } else { block[3 * r + c] };
        col_idx.push(3 * v + c);
        values.push(val);
    }
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// All canonical vertex pairs touched by the batch, deterministic order.
fn touched_pairs(mesh: &SupersetMesh, batch: &EditBatch) -> Vec<(usize, usize)> {
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for &t in batch.deleted.iter().chain(&batch.added) {
        let tet = mesh.tets[t];
        for &(i, j) in &TET_BLOCK_PAIRS {
            pairs.insert(canonical(tet[i], tet[j]));
        }
    }
    pairs.into_iter().collect()
}

fn insert_sorted(list: &mut Vec<usize>, v: usize) {
    if let Err(pos) = list.binary_search(&v) {
        list.insert(pos, v);
    } else {
        panic!("neighbor {v} already present");
    }
}

fn remove_sorted(list: &mut Vec<usize>, v: usize) {
    match list.binary_search(&v) {
        Ok(pos) => {
            list.remove(pos);
        }
        Err(_) => panic!("neighbor {v} absent"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_block_mesh;
    use crate::sparse::compare_csr;
    use nalgebra::DMatrix;

    fn unit_material() -> MaterialParams {
        MaterialParams {
            youngs: 1.0,
            poisson: 0.3,
            density: 1.0,
        }
    }

    fn reference_tet_mesh() -> Arc<SupersetMesh> {
        Arc::new(
            SupersetMesh::from_parts(
                vec![
                    [0.0, 0.0, 0.0],
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                ],
                vec![[0, 1, 2, 3]],
            )
            .unwrap(),
        )
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

    /// Independent dense oracle for K: shape-function coefficients from the
    /// inverse of the nodal coordinate matrix (a different derivation from
    /// the implementation's reference-gradient route).
    fn oracle_stiffness(p: &[[f64; 3]; 4], material: &MaterialParams) -> DMatrix<f64> {
        let coord = nalgebra::Matrix4::new(
            1.0, p[0][0], p[0][1], p[0][2], //
            1.0, p[1][0], p[1][1], p[1][2], //
            1.0, p[2][0], p[2][1], p[2][2], //
            1.0, p[3][0], p[3][1], p[3][2],
        );
        let vol = coord.determinant().abs() / 6.0;
        let inv = coord.try_inverse().expect("non-degenerate");
        // N_i = a_i + b_i x + c_i y + d_i z with [a b c d]_i = inv column i.
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
        let d6 = elasticity_matrix(material);
        let mut d = DMatrix::zeros(6, 6);
        for r in 0..6 {
            for c in 0..6 {
                d[(r, c)] = d6[(r, c)];
            }
        }
        b.transpose() * d * b * vol
    }

    fn norm_inf(k: &[f64; 144]) -> f64 {
        k.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    #[test]
    fn rigid_translation_in_nullspace() {
        let mesh = reference_tet_mesh();
        let cache = precompute_element_stiffness(&mesh, MaterialParams::default()).unwrap();
        let k = cache.stiffness(0);
        let norm = norm_inf(k);
        for axis in 0..3 {
            let mut r = [0.0; 12];
            for node in 0..4 {
                r[3 * node + axis] = 1.0;
            }
            for row in 0..12 {
                let dot: f64 = (0..12).map(|c| k[12 * row + c] * r[c]).sum();
                assert!(dot.abs() <= 1e-9 * norm, "axis {axis} row {row}: {dot}");
            }
        }
    }

    #[test]
    fn stiffness_matches_dense_oracle() {
        let mesh = reference_tet_mesh();
        let material = MaterialParams {
            youngs: 1.0,
            poisson: 0.0,
            density: 1.0,
        };
        let cache = precompute_element_stiffness(&mesh, material).unwrap();
        let k = cache.stiffness(0);
        let oracle = oracle_stiffness(
            &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            &material,
        );
        for r in 0..12 {
            for c in 0..12 {
                assert!(
                    (k[12 * r + c] - oracle[(r, c)]).abs() <= 1e-12,
                    "({r},{c}): {} vs {}",
                    k[12 * r + c],
                    oracle[(r, c)]
                );
            }
        }
    }

    #[test]
    fn stiffness_rank_is_six() {
        let mesh = reference_tet_mesh();
        let cache = precompute_element_stiffness(&mesh, unit_material()).unwrap();
        let k = cache.stiffness(0);
        let dense = DMatrix::from_fn(12, 12, |r, c| k[12 * r + c]);
        let eig = dense.symmetric_eigen();
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let nonzero = eig
            .eigenvalues
            .iter()
            .filter(|&&x| x.abs() > 1e-9 * max)
            .count();
        assert_eq!(nonzero, 6);
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        assert!(min >= -1e-9 * max, "min eigenvalue {min}");
    }

    #[test]
    fn poisson_out_of_range_rejected() {
        let mesh = reference_tet_mesh();
        let bad = MaterialParams {
            poisson: 0.5,
            ..MaterialParams::default()
        };
        assert!(matches!(
            precompute_element_stiffness(&mesh, bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn degenerate_tet_listed_in_error() {
        let mesh = SupersetMesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [1.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 4], [0, 1, 2, 3]],
        )
        .unwrap();
        match precompute_element_stiffness(&mesh, unit_material()) {
            Err(Error::DegenerateTets(ids)) => assert_eq!(ids, vec![1]),
            Err(other) => panic!("expected degenerate error, got {other}"),
            Ok(_) => panic!("expected degenerate error, got Ok"),
        }
    }

    #[test]
    fn empty_mask_materializes_epsilon_identity() {
        let mesh = two_tet_mesh();
        let cache = Arc::new(precompute_element_stiffness(&mesh, unit_material()).unwrap());
        let asm = ElasticAssembly::new(
            mesh.clone(),
            cache,
            ActiveMask::all_inactive(2),
            UpdatePolicy::FullRebuild,
        )
        .unwrap();
        let eps = 1e-6;
        let csr = asm.finalize(eps);
        assert_eq!(csr.nnz(), 15);
        assert_eq!(csr.diagonal(), vec![eps; 15]);
    }

    #[test]
    fn single_tet_embeds_element_matrix() {
        let mesh = reference_tet_mesh();
        let cache = Arc::new(precompute_element_stiffness(&mesh, unit_material()).unwrap());
        let asm = ElasticAssembly::new(
            mesh.clone(),
            cache.clone(),
            ActiveMask::all_active(1),
            UpdatePolicy::StreamingUpdate,
        )
        .unwrap();
        let eps = 1e-3;
        let dense = asm.finalize(eps).to_dense();
        let k = cache.stiffness(0);
        for r in 0..12 {
            for c in 0..12 {
                let expect = k[12 * r + c] + if r == c { eps } else { 0.0 };
                assert!((dense[r][c] - expect).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn two_tet_dense_scatter_oracle() {
        let mesh = two_tet_mesh();
        let material = unit_material();
        let cache = Arc::new(precompute_element_stiffness(&mesh, material).unwrap());
        let asm = ElasticAssembly::new(
            mesh.clone(),
            cache,
            ActiveMask::all_active(2),
            UpdatePolicy::FullRebuild,
        )
        .unwrap();
        let eps = 1e-6;
        let dense = asm.finalize(eps).to_dense();

        // Independent oracle: dense scatter-add of oracle element matrices.
        let mut oracle = vec![vec![0.0f64; 15]; 15];
        for tet in &mesh.tets {
            let p = [
                mesh.vertices[tet[0]],
                mesh.vertices[tet[1]],
                mesh.vertices[tet[2]],
                mesh.vertices[tet[3]],
            ];
            let k = oracle_stiffness(&p, &material);
            for (li, &gi) in tet.iter().enumerate() {
                for (lj, &gj) in tet.iter().enumerate() {
                    for r in 0..3 {
                        for c in 0..3 {
                            oracle[3 * gi + r][3 * gj + c] += k[(3 * li + r, 3 * lj + c)];
                        }
                    }
                }
            }
        }
        for (d, row) in oracle.iter_mut().enumerate() {
            row[d] += eps;
        }
        for r in 0..15 {
            for c in 0..15 {
                assert!(
                    (dense[r][c] - oracle[r][c]).abs() <= 1e-12,
                    "({r},{c}): {} vs {}",
                    dense[r][c],
                    oracle[r][c]
                );
            }
        }
    }

    #[test]
    fn delete_readd_cancels_within_tolerance() {
        let mesh = two_tet_mesh();
        let cache = Arc::new(precompute_element_stiffness(&mesh, unit_material()).unwrap());
        let mut asm = ElasticAssembly::new(
            mesh,
            cache,
            ActiveMask::all_active(2),
            UpdatePolicy::StreamingUpdate,
        )
        .unwrap();
        let before = asm.finalize(0.0);
        asm.apply_edits(&EditBatch {
            deleted: vec![1],
            added: vec![],
        })
        .unwrap();
        asm.apply_edits(&EditBatch {
            deleted: vec![],
            added: vec![1],
        })
        .unwrap();
        let after = asm.finalize(0.0);
        let (mis, diff) = compare_csr(&before, &after, 1e-12);
        assert_eq!(mis, 0);
        assert!(diff <= 1e-12);
    }

    #[test]
    fn single_tet_delete_removes_all_blocks() {
        let mesh = reference_tet_mesh();
        let cache = Arc::new(precompute_element_stiffness(&mesh, unit_material()).unwrap());
        let mut asm = ElasticAssembly::new(
            mesh,
            cache,
            ActiveMask::all_active(1),
            UpdatePolicy::StreamingUpdate,
        )
        .unwrap();
        assert_eq!(asm.block_count(), 10);
        asm.apply_edits(&EditBatch {
            deleted: vec![0],
            added: vec![],
        })
        .unwrap();
        assert_eq!(asm.block_count(), 0);
        let csr = asm.finalize(1e-6);
        assert_eq!(csr.nnz(), 12);
    }

    #[test]
    fn policies_match_rebuild_across_fracture_frames() {
        let mesh = Arc::new(generate_block_mesh(4, 4, 4).unwrap());
        let cache = Arc::new(precompute_element_stiffness(&mesh, unit_material()).unwrap());
        let schedule = crate::edits::make_fracture_schedule(&mesh, 7, 5, 0.2).unwrap();
        let mask = schedule.initial_mask(&mesh).unwrap();

        let mut local = ElasticAssembly::new(
            mesh.clone(),
            cache.clone(),
            mask.clone(),
            UpdatePolicy::LocalRecompute,
        )
        .unwrap();
        let mut streaming = ElasticAssembly::new(
            mesh.clone(),
            cache.clone(),
            mask.clone(),
            UpdatePolicy::StreamingUpdate,
        )
        .unwrap();

        let mut shadow_mask = mask;
        for batch in &schedule.frames {
            local.apply_edits(batch).unwrap();
            streaming.apply_edits(batch).unwrap();
            crate::edits::apply_batch(&mut shadow_mask, batch).unwrap();
            let shadow = ElasticAssembly::new(
                mesh.clone(),
                cache.clone(),
                shadow_mask.clone(),
                UpdatePolicy::FullRebuild,
            )
            .unwrap();
            let reference = shadow.finalize(1e-6);

            let (mis_l, diff_l) = compare_csr(&reference, &local.finalize(1e-6), 1e-12);
            assert_eq!(mis_l, 0);
            assert_eq!(diff_l, 0.0, "local recompute is bit-equal to rebuild");

            let (mis_s, diff_s) = compare_csr(&reference, &streaming.finalize(1e-6), 1e-12);
            assert_eq!(mis_s, 0);
            assert!(diff_s <= 1e-12, "streaming diff {diff_s}");
        }
    }

    #[test]
    fn mass_tracks_active_volume() {
        let mesh = Arc::new(generate_block_mesh(3, 3, 3).unwrap());
        let material = MaterialParams {
            density: 2.5,
            ..unit_material()
        };
        let cache = Arc::new(precompute_element_stiffness(&mesh, material).unwrap());
        let schedule = crate::edits::make_repeated_locality_schedule(&mesh, 11, 2, 0.2).unwrap();
        let mask = schedule.initial_mask(&mesh).unwrap();
        let mut asm = ElasticAssembly::new(
            mesh.clone(),
            cache,
            mask,
            UpdatePolicy::StreamingUpdate,
        )
        .unwrap();
        for batch in &schedule.frames {
            asm.apply_edits(batch).unwrap();
            let active_volume: f64 = asm.mask().iter_active().map(|t| mesh.tet_volume(t)).sum();
            let total_mass: f64 = asm.vertex_mass().iter().sum();
            let expect = material.density * active_volume;
            assert!(
                (total_mass - expect).abs() <= 1e-9 * expect.max(1.0),
                "mass {total_mass} vs {expect}"
            );
        }
    }

    #[test]
    fn reaccumulation_preserves_parity() {
        let mesh = Arc::new(generate_block_mesh(3, 3, 3).unwrap());
        let cache = Arc::new(precompute_element_stiffness(&mesh, unit_material()).unwrap());
        let schedule = crate::edits::make_repeated_locality_schedule(&mesh, 1, 3, 0.25).unwrap();
        let mask = schedule.initial_mask(&mesh).unwrap();
        let mut asm = ElasticAssembly::new(
            mesh.clone(),
            cache.clone(),
            mask.clone(),
            UpdatePolicy::StreamingUpdate,
        )
        .unwrap();
        asm.set_reaccumulate_every(2);
        let mut shadow_mask = mask;
        for batch in &schedule.frames {
            asm.apply_edits(batch).unwrap();
            crate::edits::apply_batch(&mut shadow_mask, batch).unwrap();
            let shadow = ElasticAssembly::new(
                mesh.clone(),
                cache.clone(),
                shadow_mask.clone(),
                UpdatePolicy::FullRebuild,
            )
            .unwrap();
            let (mis, diff) = compare_csr(&shadow.finalize(1e-6), &asm.finalize(1e-6), 1e-12);
            assert_eq!(mis, 0);
            assert!(diff <= 1e-12);
        }
    }
}
