//! Tetrahedron connectivity under the edit stream: union-find rebuilt
//! periodically from the active mask, spot-checked against BFS.
//!
//! Adjacency means face sharing. Between rebuilds, additions are unioned
//! eagerly but deletions are only reflected at the next rebuild, so stale
//! answers can merge components, never split them.

use std::sync::Arc;

use rustc_hash::FxHashMap;

use rand::Rng;

use crate::edits::EditBatch;
use crate::error::{Error, Result};
use crate::mesh::{ActiveMask, SupersetMesh, TET_FACE_CORNERS};
use crate::rng::{stream, stream_rng};

/// Precomputed face-sharing pairs over the candidate pool.
#[derive(Debug, Clone)]
pub struct FaceAdjacency {
    /// Sorted list of adjacent candidate pairs `(a, b)` with `a < b`.
    pub pairs: Vec<(usize, usize)>,
    /// Per-tet neighbor lists, ascending.
    pub neighbors: Vec<Vec<usize>>,
}

/// Records, for every unordered face shared by exactly two candidate tets,
/// the tet pair. A face shared by more than two mutually unrelated tets
/// (no parent/child relation through the refinement table) is a mesh
/// validity error.
pub fn precompute_face_adjacency(mesh: &SupersetMesh) -> Result<FaceAdjacency> {
    let mut by_face: FxHashMap<[usize; 3], Vec<usize>> = FxHashMap::default();
    for (tid, tet) in mesh.tets.iter().enumerate() {
        for &(a, b, c) in &TET_FACE_CORNERS {
            let mut face = [tet[a], tet[b], tet[c]];
            face.sort_unstable();
            by_face.entry(face).or_default().push(tid);
        }
    }

    let mut pairs = Vec::new();
    for (face, group) in by_face {
        match group.len() {
            0 | 1 => {}
            2 => pairs.push((group[0].min(group[1]), group[0].max(group[1]))),
            _ => {
                // Keep only members unrelated to every other member; a
                // parent/child overlap is exempt because the two can never
                // be active together.
                let related = |a: usize, b: usize| {
                    mesh.refinement
                        .as_ref()
                        .is_some_and(|table| table.related(a, b))
                };
                let unrelated: Vec<usize> = group
                    .iter()
                    .copied()
                    .filter(|&t| group.iter().all(|&o| o == t || !related(t, o)))
                    .collect();
                match unrelated.len() {
                    0 | 1 => {}
                    2 => pairs.push((unrelated[0].min(unrelated[1]), unrelated[0].max(unrelated[1]))),
                    n => {
                        return Err(Error::MeshValidity(format!(
                            "face {face:?} is shared by {n} unrelated tets (non-manifold pool)"
                        )));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();

    let mut neighbors = vec![Vec::new(); mesh.tet_count()];
    for &(a, b) in &pairs {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    Ok(FaceAdjacency { pairs, neighbors })
}

/// BFS component labels over active tets. Returns `(component_count,
/// labels)`; inactive tets get no label. The independent oracle for
/// union-find answers.
pub fn bfs_components(
    adjacency: &FaceAdjacency,
    mask: &ActiveMask,
) -> (usize, Vec<Option<usize>>) {
    let n = mask.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut count = 0;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if !mask.is_active(start) || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(count);
        queue.push_back(start);
        while let Some(t) = queue.pop_front() {
            for &nb in &adjacency.neighbors[t] {
                if mask.is_active(nb) && labels[nb].is_none() {
                    labels[nb] = Some(count);
                    queue.push_back(nb);
                }
            }
        }
        count += 1;
    }
    (count, labels)
}

/// Union-find over the candidate pool, rebuilt every `rebuild_period`
/// frames from the current mask.
pub struct ConnectivityState {
    adjacency: Arc<FaceAdjacency>,
    parent: Vec<usize>,
    rank: Vec<u8>,
    rebuild_period: usize,
    frames_since_rebuild: usize,
}

impl ConnectivityState {
    pub fn new(adjacency: Arc<FaceAdjacency>, mask: &ActiveMask, rebuild_period: usize) -> Self {
        let n = mask.len();
        let mut state = ConnectivityState {
            adjacency,
            parent: (0..n).collect(),
            rank: vec![0; n],
            rebuild_period: rebuild_period.max(1),
            frames_since_rebuild: 0,
        };
        state.rebuild(mask);
        state
    }

    /// Fresh union-find from the current mask; resets the staleness window.
    pub fn rebuild(&mut self, mask: &ActiveMask) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i;
        }
        self.rank.fill(0);
        let pairs = self.adjacency.clone();
        for &(a, b) in &pairs.pairs {
            if mask.is_active(a) && mask.is_active(b) {
                self.union(a, b);
            }
        }
        self.frames_since_rebuild = 0;
    }

    /// Per-frame hook: unions additions eagerly against active neighbors,
    /// then rebuilds if the period has elapsed. `mask` is the post-edit mask.
    pub fn on_frame(&mut self, mask: &ActiveMask, batch: &EditBatch) {
        let adjacency = self.adjacency.clone();
        for &t in &batch.added {
            for &nb in &adjacency.neighbors[t] {
                if mask.is_active(nb) {
                    self.union(t, nb);
                }
            }
        }
        self.frames_since_rebuild += 1;
        if self.frames_since_rebuild >= self.rebuild_period {
            self.rebuild(mask);
        }
    }

    /// True when a rebuild ran at the end of the last `on_frame`.
    pub fn is_fresh(&self) -> bool {
        self.frames_since_rebuild == 0
    }

    fn find(&mut self, mut t: usize) -> usize {
        // Path halving.
        while self.parent[t] != t {
            self.parent[t] = self.parent[self.parent[t]];
            t = self.parent[t];
        }
        t
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }

    /// Root equality of two active tets.
    pub fn query_same_component(
        &mut self,
        a: usize,
        b: usize,
        mask: &ActiveMask,
    ) -> Result<bool> {
        for t in [a, b] {
            if t >= mask.len() {
                return Err(Error::Query(format!("tet {t} out of range")));
            }
            if !mask.is_active(t) {
                return Err(Error::Query(format!("tet {t} is not active")));
            }
        }
        Ok(self.find(a) == self.find(b))
    }

    /// Number of distinct components among active tets (0 for an empty mask).
    pub fn component_count(&mut self, mask: &ActiveMask) -> usize {
        let mut roots: Vec<usize> = (0..mask.len())
            .filter(|&t| mask.is_active(t))
            .map(|t| self.find(t))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Samples `sample_size` random active pairs and returns the fraction
    /// whose union-find answer disagrees with BFS on the current mask.
    /// Nonzero rates are only possible inside staleness windows.
    pub fn spot_check(&mut self, mask: &ActiveMask, sample_size: usize, seed: u64) -> f64 {
        if sample_size == 0 {
            return 0.0;
        }
        let active: Vec<usize> = mask.iter_active().collect();
        if active.len() < 2 {
            return 0.0;
        }
        let (_, labels) = bfs_components(&self.adjacency.clone(), mask);
        let mut rng = stream_rng(seed, stream::SPOT_CHECK);
        let mut mismatches = 0usize;
        for _ in 0..sample_size {
            let a = active[rng.gen_range(0..active.len())];
            let b = active[rng.gen_range(0..active.len())];
            let uf_same = self.find(a) == self.find(b);
            let bfs_same = labels[a] == labels[b];
            if uf_same != bfs_same {
                mismatches += 1;
            }
        }
        mismatches as f64 / sample_size as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edits::{apply_batch, make_fracture_schedule, make_merge_schedule};
    use crate::mesh::generate_block_mesh;

    fn two_tet_mesh() -> SupersetMesh {
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
        .unwrap()
    }

    #[test]
    fn two_tets_share_one_face() {
        let adj = precompute_face_adjacency(&two_tet_mesh()).unwrap();
        assert_eq!(adj.pairs, vec![(0, 1)]);
    }

    #[test]
    fn single_tet_has_no_adjacency() {
        let mesh = SupersetMesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let adj = precompute_face_adjacency(&mesh).unwrap();
        assert!(adj.pairs.is_empty());
    }

    #[test]
    fn block_adjacency_matches_quadratic_oracle() {
        let mesh = generate_block_mesh(2, 2, 2).unwrap();
        let adj = precompute_face_adjacency(&mesh).unwrap();
        // O(T^2) oracle: two tets are face-adjacent iff they share exactly
        // three vertices.
        let mut oracle = Vec::new();
        for a in 0..mesh.tet_count() {
            for b in (a + 1)..mesh.tet_count() {
                let shared = mesh.tets[a]
                    .iter()
                    .filter(|v| mesh.tets[b].contains(v))
                    .count();
                if shared == 3 {
                    oracle.push((a, b));
                }
            }
        }
        assert_eq!(adj.pairs, oracle);
    }

    #[test]
    fn non_manifold_pool_rejected() {
        // Three tets sharing face {0,1,2}.
        let mesh = SupersetMesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [0.0, 0.0, -1.0],
                [1.0, 1.0, 1.0],
            ],
            vec![[0, 1, 2, 3], [0, 1, 2, 4], [0, 1, 2, 5]],
        )
        .unwrap();
        assert!(matches!(
            precompute_face_adjacency(&mesh),
            Err(Error::MeshValidity(_))
        ));
    }

    #[test]
    fn all_active_block_is_one_component() {
        let mesh = generate_block_mesh(3, 3, 3).unwrap();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        let mask = ActiveMask::all_active(mesh.tet_count());
        let mut state = ConnectivityState::new(adj.clone(), &mask, 1);
        assert_eq!(state.component_count(&mask), 1);
        let (bfs_count, _) = bfs_components(&adj, &mask);
        assert_eq!(bfs_count, 1);
    }

    #[test]
    fn empty_mask_has_zero_components() {
        let mesh = generate_block_mesh(2, 2, 2).unwrap();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        let mask = ActiveMask::all_inactive(mesh.tet_count());
        let mut state = ConnectivityState::new(adj, &mask, 1);
        assert_eq!(state.component_count(&mask), 0);
    }

    #[test]
    fn middle_slab_deletion_splits_in_two() {
        let mesh = generate_block_mesh(4, 4, 4).unwrap();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        // Fraction 0.5 selects the two middle layers exactly.
        let schedule = make_fracture_schedule(&mesh, 0, 1, 0.5).unwrap();
        let mut mask = schedule.initial_mask(&mesh).unwrap();
        apply_batch(&mut mask, &schedule.frames[0]).unwrap();

        let mut state = ConnectivityState::new(adj.clone(), &mask, 1);
        assert_eq!(state.component_count(&mask), 2);
        let (bfs_count, labels) = bfs_components(&adj, &mask);
        assert_eq!(bfs_count, 2);

        // Two tets on opposite sides answer "different", matching BFS.
        let left = mask.iter_active().next().unwrap();
        let right = mask
            .iter_active()
            .find(|&t| labels[t] != labels[left])
            .unwrap();
        assert!(!state.query_same_component(left, right, &mask).unwrap());
        assert!(state.query_same_component(left, left, &mask).unwrap());
    }

    #[test]
    fn query_rejects_inactive_tets() {
        let mesh = two_tet_mesh();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        let mut mask = ActiveMask::all_active(2);
        mask.deactivate(1).unwrap();
        let mut state = ConnectivityState::new(adj, &mask, 1);
        assert!(state.query_same_component(0, 1, &mask).is_err());
    }

    #[test]
    fn spot_check_is_clean_on_rebuild_frames() {
        let mesh = generate_block_mesh(4, 4, 4).unwrap();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        let schedule = make_fracture_schedule(&mesh, 2, 5, 0.3).unwrap();
        let mut mask = schedule.initial_mask(&mesh).unwrap();
        let mut state = ConnectivityState::new(adj, &mask, 1);
        for batch in &schedule.frames {
            apply_batch(&mut mask, batch).unwrap();
            state.on_frame(&mask, batch);
            assert!(state.is_fresh());
            assert_eq!(state.spot_check(&mask, 64, 9), 0.0);
            let (bfs_count, _) = bfs_components(&state.adjacency.clone(), &mask);
            assert_eq!(state.component_count(&mask), bfs_count);
        }
        assert_eq!(state.spot_check(&mask, 0, 9), 0.0);
    }

    #[test]
    fn staleness_merges_but_never_splits() {
        let mesh = generate_block_mesh(4, 4, 4).unwrap();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        let schedule = make_fracture_schedule(&mesh, 1, 4, 0.5).unwrap();
        let mut mask = schedule.initial_mask(&mesh).unwrap();
        // Rebuild period longer than the schedule: stays stale throughout.
        let mut state = ConnectivityState::new(adj.clone(), &mask, 100);
        for batch in &schedule.frames {
            apply_batch(&mut mask, batch).unwrap();
            state.on_frame(&mask, batch);
            let (_, labels) = bfs_components(&adj, &mask);
            let active: Vec<usize> = mask.iter_active().collect();
            for pair in active.windows(97) {
                let (a, b) = (pair[0], pair[pair.len() - 1]);
                if labels[a] == labels[b] {
                    assert!(state.query_same_component(a, b, &mask).unwrap());
                }
            }
        }
    }

    #[test]
    fn merge_component_count_is_non_increasing_to_one() {
        let mesh = generate_block_mesh(4, 4, 4).unwrap();
        let adj = Arc::new(precompute_face_adjacency(&mesh).unwrap());
        let schedule = make_merge_schedule(&mesh, 3, 5, 0.5).unwrap();
        let mut mask = schedule.initial_mask(&mesh).unwrap();
        let mut state = ConnectivityState::new(adj, &mask, 1);
        let mut last = state.component_count(&mask);
        for batch in &schedule.frames {
            apply_batch(&mut mask, batch).unwrap();
            state.on_frame(&mask, batch);
            let count = state.component_count(&mask);
            assert!(count <= last, "components went {last} -> {count}");
            last = count;
        }
        assert_eq!(last, 1);
    }
}
