//! The stabilized graph-Laplacian proxy `A_t = L_t + eps*I`, maintained
//! exactly under edit streams by three interchangeable policies.
//!
//! The hidden state of streaming maintenance is the edge multiplicity
//! `c_t(e)`: how many active tets contain edge `e`. Off-diagonal entries
//! exist exactly where `c_t(e) > 0`; tracking the count (not just the
//! binary activity) is what makes deletions exact without rescanning.

use std::collections::BTreeSet;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use serde::{Deserialize, Serialize};

use crate::edits::{apply_batch, EditBatch};
use crate::error::Result;
use crate::footprint;
use crate::mesh::{ActiveMask, SupersetMesh};
use crate::sparse::{CsrMatrix, DynamicSparseMatrix};

/// The three exact update policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    FullRebuild,
    LocalRecompute,
    StreamingUpdate,
}

impl UpdatePolicy {
    pub const ALL: [UpdatePolicy; 3] = [
        UpdatePolicy::FullRebuild,
        UpdatePolicy::LocalRecompute,
        UpdatePolicy::StreamingUpdate,
    ];

    /// Single-letter tag used in reports (R / L / S).
    pub fn tag(self) -> &'static str {
        match self {
            UpdatePolicy::FullRebuild => "R",
            UpdatePolicy::LocalRecompute => "L",
            UpdatePolicy::StreamingUpdate => "S",
        }
    }
}

impl std::fmt::Display for UpdatePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            UpdatePolicy::FullRebuild => "full_rebuild",
            UpdatePolicy::LocalRecompute => "local_recompute",
            UpdatePolicy::StreamingUpdate => "streaming_update",
        };
        f.write_str(s)
    }
}

/// Instrumented per-frame work counters; the empirical side of the
/// per-frame cost proposition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounters {
    /// Tet-edge visits (streaming: exactly six per edited tet).
    pub edges_visited: u64,
    /// Matrix entries written (structural or value changes).
    pub entries_mutated: u64,
    /// Distinct candidate tets examined.
    pub tets_scanned: u64,
}

impl WorkCounters {
    pub fn reset(&mut self) {
        *self = WorkCounters::default();
    }
}

/// Persistent edge multiplicity `c_t(e)`; zero-count entries are erased so
/// memory stays proportional to active incidence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeMultiplicityMap {
    counts: FxHashMap<usize, u32>,
}

impl EdgeMultiplicityMap {
    pub fn get(&self, edge: usize) -> u32 {
        self.counts.get(&edge).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Increments the count, returning the new value.
    fn increment(&mut self, edge: usize) -> u32 {
        let c = self.counts.entry(edge).or_insert(0);
        *c += 1;
        *c
    }

    /// Decrements the count, erasing it at zero. Panics on underflow: that
    /// means maintained state diverged from the mask.
    fn decrement(&mut self, edge: usize) -> u32 {
        match self.counts.get_mut(&edge) {
            Some(c) if *c > 1 => {
                *c -= 1;
                *c
            }
            Some(_) => {
                self.counts.remove(&edge);
                0
            }
            None => panic!("edge multiplicity underflow on edge {edge}"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&e, &c)| (e, c))
    }
}

/// Full scan of the active tets: multiplicity map plus the Laplacian
/// structure (off-diagonals -1, diagonal = degree, no epsilon yet).
pub fn rebuild_proxy(
    mesh: &SupersetMesh,
    mask: &ActiveMask,
) -> (DynamicSparseMatrix, EdgeMultiplicityMap) {
    let mut counts = EdgeMultiplicityMap::default();
    for t in mask.iter_active() {
        for &e in &mesh.tet_edges[t] {
            counts.increment(e);
        }
    }
    let mut matrix = DynamicSparseMatrix::new(mesh.vertex_count());
    let mut active_edges: Vec<usize> = counts.counts.keys().copied().collect();
    active_edges.sort_unstable();
    for e in active_edges {
        let (u, v) = mesh.edges[e];
        matrix.insert_pair(u, v, -1.0);
        matrix.add_diag(u, 1.0);
        matrix.add_diag(v, 1.0);
    }
    (matrix, counts)
}

/// One maintained proxy operator under a chosen policy.
pub struct ProxyAssembly {
    mesh: Arc<SupersetMesh>,
    policy: UpdatePolicy,
    mask: ActiveMask,
    matrix: DynamicSparseMatrix,
    /// Streaming hidden state; `None` for the stateless policies.
    counts: Option<EdgeMultiplicityMap>,
    /// Candidate tets per edge; cached only by local recompute.
    edge_incidence: Option<Vec<Vec<usize>>>,
    /// Distinct-tet stamp used by local recompute scans.
    scan_stamp: Vec<u64>,
    scan_generation: u64,
    counters: WorkCounters,
}

impl ProxyAssembly {
    /// Builds the initial operator for `mask` (a full scan under every
    /// policy) and the policy's persistent caches.
    pub fn new(mesh: Arc<SupersetMesh>, mask: ActiveMask, policy: UpdatePolicy) -> Result<Self> {
        mask.validate_against(&mesh)?;
        let (matrix, counts) = rebuild_proxy(&mesh, &mask);
        let edge_incidence = matches!(policy, UpdatePolicy::LocalRecompute)
            .then(|| mesh.build_edge_incidence());
        let scan_len = mesh.tet_count();
        Ok(ProxyAssembly {
            mesh,
            policy,
            mask,
            matrix,
            counts: (!matches!(policy, UpdatePolicy::LocalRecompute)).then_some(counts),
            edge_incidence,
            scan_stamp: vec![0; scan_len],
            scan_generation: 0,
            counters: WorkCounters::default(),
        })
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

    /// The multiplicity map, where the policy maintains one.
    pub fn multiplicity(&self) -> Option<&EdgeMultiplicityMap> {
        self.counts.as_ref()
    }

    /// Applies one frame of edits under the configured policy. Work counters
    /// are reset at entry, so they always describe the latest frame.
    pub fn apply_edits(&mut self, batch: &EditBatch) -> Result<()> {
        self.counters.reset();
        match self.policy {
            UpdatePolicy::FullRebuild => self.apply_rebuild(batch),
            UpdatePolicy::LocalRecompute => self.apply_local(batch),
            UpdatePolicy::StreamingUpdate => self.apply_streaming(batch),
        }
    }

    /// Materializes `L_t + eps*I` as compressed rows, deterministically.
    pub fn finalize(&self, eps: f64) -> CsrMatrix {
        self.matrix.to_csr(eps)
    }

    /// The maintained (epsilon-free) structure; parity checks compare this.
    pub fn matrix(&self) -> &DynamicSparseMatrix {
        &self.matrix
    }

    fn apply_rebuild(&mut self, batch: &EditBatch) -> Result<()> {
        apply_batch(&mut self.mask, batch)?;
        let (matrix, counts) = rebuild_proxy(&self.mesh, &self.mask);
        self.counters.tets_scanned = self.mask.active_count() as u64;
        self.counters.edges_visited = 6 * self.counters.tets_scanned;
        self.counters.entries_mutated =
            (matrix.off_diagonal_len() + matrix.dim()) as u64;
        self.matrix = matrix;
        self.counts = Some(counts);
        Ok(())
    }

    fn apply_streaming(&mut self, batch: &EditBatch) -> Result<()> {
        apply_batch(&mut self.mask, batch)?;
        let counts = self.counts.as_mut().expect("streaming keeps counts");
        for &t in &batch.deleted {
            for &e in &self.mesh.tet_edges[t] {
                self.counters.edges_visited += 1;
                if counts.decrement(e) == 0 {
                    let (u, v) = self.mesh.edges[e];
                    self.matrix.remove_pair(u, v);
                    self.matrix.add_diag(u, -1.0);
                    self.matrix.add_diag(v, -1.0);
                    self.counters.entries_mutated += 4;
                }
            }
        }
        for &t in &batch.added {
            for &e in &self.mesh.tet_edges[t] {
                self.counters.edges_visited += 1;
                if counts.increment(e) == 1 {
                    let (u, v) = self.mesh.edges[e];
                    self.matrix.insert_pair(u, v, -1.0);
                    self.matrix.add_diag(u, 1.0);
                    self.matrix.add_diag(v, 1.0);
                    self.counters.entries_mutated += 4;
                }
            }
        }
        self.counters.tets_scanned = batch.delta_size() as u64;
        Ok(())
    }

    fn apply_local(&mut self, batch: &EditBatch) -> Result<()> {
        apply_batch(&mut self.mask, batch)?;
        let incidence = self
            .edge_incidence
            .as_ref()
            .expect("local recompute caches incidence");

        // Candidate edges touched by the event, deterministic order.
        let mut touched: BTreeSet<usize> = BTreeSet::new();
        for &t in batch.deleted.iter().chain(&batch.added) {
            touched.extend(self.mesh.tet_edges[t]);
        }

        self.scan_generation += 1;
        let gen = self.scan_generation;
        for &e in &touched {
            self.counters.edges_visited += 1;
            // Recompute activity from scratch: rescan every candidate tet
            // incident to this edge against the updated mask.
            let mut active_count = 0u32;
            for &t in &incidence[e] {
                if self.scan_stamp[t] != gen {
                    self.scan_stamp[t] = gen;
                    self.counters.tets_scanned += 1;
                }
                if self.mask.is_active(t) {
                    active_count += 1;
                }
            }
            let (u, v) = self.mesh.edges[e];
            let was_active = self.matrix.contains(u, v);
            let now_active = active_count > 0;
            if now_active && !was_active {
                self.matrix.insert_pair(u, v, -1.0);
                self.matrix.add_diag(u, 1.0);
                self.matrix.add_diag(v, 1.0);
                self.counters.entries_mutated += 4;
            } else if !now_active && was_active {
                self.matrix.remove_pair(u, v);
                self.matrix.add_diag(u, -1.0);
                self.matrix.add_diag(v, -1.0);
                self.counters.entries_mutated += 4;
            }
        }
        Ok(())
    }

    /// Policy-specific persistent maintenance footprint, from the fixed cost
    /// constants in [`footprint`].
    pub fn maintenance_state_bytes(&self) -> usize {
        let mask_bytes = footprint::MASK_PER_TET * self.mesh.tet_count();
        match self.policy {
            UpdatePolicy::FullRebuild => footprint::REBUILD_SCRATCH + mask_bytes,
            UpdatePolicy::StreamingUpdate => {
                let counts = self.counts.as_ref().map_or(0, EdgeMultiplicityMap::len);
                mask_bytes + counts * footprint::MULTIPLICITY_ENTRY
            }
            UpdatePolicy::LocalRecompute => {
                let incidence = self.edge_incidence.as_ref().expect("cached");
                let ids: usize = incidence.iter().map(Vec::len).sum();
                mask_bytes
                    + ids * footprint::INCIDENCE_ID
                    + incidence.len() * footprint::INCIDENCE_LIST
            }
        }
    }
}
