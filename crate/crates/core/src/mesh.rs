//! Superset tetrahedral meshes: loading, block-mesh generation, refinement
//! preallocation, and the precomputed tet-to-edge incidence.
//!
//! A superset mesh is immutable after construction. Simulations never change
//! its vertices or tets; they only toggle an [`ActiveMask`] over the candidate
//! tet pool.

use std::collections::HashMap;
use std::fmt::Write as _;

use rustc_hash::FxHashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Local corner pairs of the six undirected edges of a tetrahedron.
pub const TET_EDGE_CORNERS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local corner triples of the four faces of a tetrahedron.
pub const TET_FACE_CORNERS: [(usize, usize, usize); 4] = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)];

/// Preallocated refinement hierarchy: parent tet id -> its eight children.
#[derive(Debug, Clone, Default)]
pub struct RefinementTable {
    pub children: HashMap<usize, [usize; 8]>,
    pub parent_of: HashMap<usize, usize>,
}

impl RefinementTable {
    /// True if one tet is an ancestor of the other through the hierarchy.
    pub fn related(&self, a: usize, b: usize) -> bool {
        self.is_ancestor(a, b) || self.is_ancestor(b, a)
    }

    fn is_ancestor(&self, anc: usize, mut t: usize) -> bool {
        while let Some(&p) = self.parent_of.get(&t) {
            if p == anc {
                return true;
            }
            t = p;
        }
        false
    }
}

/// Immutable vertex positions plus the full candidate tetrahedron pool and
/// its canonical tet-to-edge incidence.
#[derive(Debug, Clone)]
pub struct SupersetMesh {
    /// Vertex positions, model units.
    pub vertices: Vec<[f64; 3]>,
    /// Candidate tetrahedra (4 distinct vertex ids each).
    pub tets: Vec<[usize; 4]>,
    /// Per-tet dense edge ids, in `TET_EDGE_CORNERS` order.
    pub tet_edges: Vec<[usize; 6]>,
    /// Canonical undirected edges `(u, v)` with `u < v`, indexed by edge id.
    pub edges: Vec<(usize, usize)>,
    /// Canonical edge -> dense edge id.
    pub edge_index: FxHashMap<(usize, usize), usize>,
    /// Preallocated refinement children, if built.
    pub refinement: Option<RefinementTable>,
}

impl SupersetMesh {
    /// Builds a mesh from raw vertices and tets, canonicalizing edges.
    pub fn from_parts(vertices: Vec<[f64; 3]>, tets: Vec<[usize; 4]>) -> Result<Self> {
        let mut mesh = SupersetMesh {
            vertices,
            tets,
            tet_edges: Vec::new(),
            edges: Vec::new(),
            edge_index: FxHashMap::default(),
            refinement: None,
        };
        mesh.rebuild_edges()?;
        Ok(mesh)
    }

    fn rebuild_edges(&mut self) -> Result<()> {
        let n = self.vertices.len();
        self.tet_edges.clear();
        self.edges.clear();
        self.edge_index.clear();
        self.tet_edges.reserve(self.tets.len());
        for (tid, tet) in self.tets.iter().enumerate() {
            for k in 0..4 {
                if tet[k] >= n {
                    return Err(Error::MeshValidity(format!(
                        "tet {tid} references vertex {} but mesh has {n} vertices",
                        tet[k]
                    )));
                }
                for j in (k + 1)..4 {
                    if tet[k] == tet[j] {
                        return Err(Error::MeshValidity(format!(
                            "tet {tid} has repeated vertex {}",
                            tet[k]
                        )));
                    }
                }
            }
            let mut ids = [0usize; 6];
            for (slot, &(a, b)) in TET_EDGE_CORNERS.iter().enumerate() {
                let key = canonical_edge(tet[a], tet[b]);
                let next = self.edges.len();
                let id = *self.edge_index.entry(key).or_insert(next);
                if id == next {
                    self.edges.push(key);
                }
                ids[slot] = id;
            }
            self.tet_edges.push(ids);
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Unsigned volume of a candidate tet: `|det([v1-v0, v2-v0, v3-v0])| / 6`.
    pub fn tet_volume(&self, tet_id: usize) -> f64 {
        let [a, b, c, d] = self.tets[tet_id];
        let p = &self.vertices;
        let e1 = sub(p[b], p[a]);
        let e2 = sub(p[c], p[a]);
        let e3 = sub(p[d], p[a]);
        det3(e1, e2, e3).abs() / 6.0
    }

    /// Centroid of a candidate tet.
    pub fn tet_centroid(&self, tet_id: usize) -> [f64; 3] {
        let [a, b, c, d] = self.tets[tet_id];
        let p = &self.vertices;
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = (p[a][k] + p[b][k] + p[c][k] + p[d][k]) / 4.0;
        }
        out
    }

    /// Axis-aligned bounding box of the vertex set as `(min, max)`.
    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Index of the longest bounding-box axis (ties break toward x).
    pub fn longest_axis(&self) -> usize {
        let (lo, hi) = self.bbox();
        let mut best = 0;
        let mut best_len = hi[0] - lo[0];
        for k in 1..3 {
            let len = hi[k] - lo[k];
            if len > best_len {
                best = k;
                best_len = len;
            }
        }
        best
    }

    /// Candidate tets incident to each edge, ascending tet id per edge.
    pub fn build_edge_incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.edges.len()];
        for (tid, ids) in self.tet_edges.iter().enumerate() {
            for &e in ids {
                inc[e].push(tid);
            }
        }
        inc
    }

    /// Candidate tets incident to each vertex, ascending tet id per vertex.
    pub fn build_vertex_incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (tid, tet) in self.tets.iter().enumerate() {
            for &v in tet {
                inc[v].push(tid);
            }
        }
        inc
    }

    /// Maximum number of candidate tets incident to any matrix entry: edge
    /// incidence bounds off-diagonals, vertex incidence bounds diagonals.
    pub fn kappa_max(&self) -> usize {
        let edge_max = self
            .build_edge_incidence()
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        let vert_max = self
            .build_vertex_incidence()
            .iter()
            .map(Vec::len)
            .max()
            .unwrap_or(0);
        edge_max.max(vert_max)
    }
}

/// Boolean activity flag per candidate tet; the set of active tets is the
/// current simulation topology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveMask {
    active: Vec<bool>,
    active_count: usize,
}

impl ActiveMask {
    pub fn all_active(len: usize) -> Self {
        ActiveMask {
            active: vec![true; len],
            active_count: len,
        }
    }

    pub fn all_inactive(len: usize) -> Self {
        ActiveMask {
            active: vec![false; len],
            active_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_active(&self, tet: usize) -> bool {
        self.active[tet]
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    /// Marks a tet active. Returns an error in strict mode if it already is.
    pub fn activate(&mut self, tet: usize) -> Result<()> {
        if self.active[tet] {
            return Err(Error::EditViolation(format!("tet {tet} is already active")));
        }
        self.active[tet] = true;
        self.active_count += 1;
        Ok(())
    }

    /// Marks a tet inactive. Returns an error in strict mode if it already is.
    pub fn deactivate(&mut self, tet: usize) -> Result<()> {
        if !self.active[tet] {
            return Err(Error::EditViolation(format!("tet {tet} is already inactive")));
        }
        self.active[tet] = false;
        self.active_count -= 1;
        Ok(())
    }

    pub fn iter_active(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
    }

    /// Checks mask shape and the parent/child exclusivity invariant.
    pub fn validate_against(&self, mesh: &SupersetMesh) -> Result<()> {
        if self.active.len() != mesh.tet_count() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries for a {}-tet mesh",
                self.active.len(),
                mesh.tet_count()
            )));
        }
        if let Some(table) = &mesh.refinement {
            for (&parent, children) in &table.children {
                if self.active[parent] {
                    for &c in children {
                        if self.active[c] {
                            return Err(Error::EditViolation(format!(
                                "parent {parent} and child {c} are both active"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn canonical_edge(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn det3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn signed_volume(p: &[[f64; 3]], t: [usize; 4]) -> f64 {
    let e1 = sub(p[t[1]], p[t[0]]);
    let e2 = sub(p[t[2]], p[t[0]]);
    let e3 = sub(p[t[3]], p[t[0]]);
    det3(e1, e2, e3) / 6.0
}

/// Generates an axis-aligned unit-spacing block mesh. Each cube is split into
/// six tets around its main diagonal (Kuhn subdivision), which keeps face
/// diagonals consistent between neighboring cubes; tets are reordered to
/// positive orientation.
pub fn generate_block_mesh(nx: usize, ny: usize, nz: usize) -> Result<SupersetMesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidArgument(format!(
            "block dimensions must be >= 1, got ({nx},{ny},{nz})"
        )));
    }
    let (vx, vy) = (nx + 1, ny + 1);
    let vid = |x: usize, y: usize, z: usize| x + vx * (y + vy * z);

    let mut vertices = Vec::with_capacity(vx * vy * (nz + 1));
    for z in 0..=nz {
        for y in 0..=ny {
            for x in 0..=nx {
                vertices.push([x as f64, y as f64, z as f64]);
            }
        }
    }

    // The six permutations of (x, y, z) steps from corner 000 to corner 111.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for cz in 0..nz {
        for cy in 0..ny {
            for cx in 0..nx {
                for perm in PERMS {
                    let mut corner = [cx, cy, cz];
                    let mut tet = [vid(corner[0], corner[1], corner[2]), 0, 0, 0];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        tet[step + 1] = vid(corner[0], corner[1], corner[2]);
                    }
                    if signed_volume(&vertices, tet) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }

    SupersetMesh::from_parts(vertices, tets)
}

/// Extends a mesh with the regular 1->8 midpoint subdivision of each tet in
/// `refinable`: six edge-midpoint vertices per parent (deduplicated across
/// parents sharing edges) and eight child tets, recorded in the refinement
/// table. The parents stay in the candidate pool.
pub fn build_refinement(mesh: &SupersetMesh, refinable: &[usize]) -> Result<SupersetMesh> {
    let mut vertices = mesh.vertices.clone();
    let mut tets = mesh.tets.clone();
    let mut table = mesh.refinement.clone().unwrap_or_default();

    let mut sorted: Vec<usize> = refinable.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
    for &parent in &sorted {
        if parent >= mesh.tet_count() {
            return Err(Error::InvalidArgument(format!(
                "refinable tet {parent} out of range ({} tets)",
                mesh.tet_count()
            )));
        }
        if table.children.contains_key(&parent) {
            return Err(Error::InvalidArgument(format!(
                "tet {parent} already has refinement children"
            )));
        }

        let t = mesh.tets[parent];
        // Midpoints in TET_EDGE_CORNERS order: m01 m02 m03 m12 m13 m23.
        let mut m = [0usize; 6];
        for (slot, &(a, b)) in TET_EDGE_CORNERS.iter().enumerate() {
            let key = canonical_edge(t[a], t[b]);
            m[slot] = *midpoint_of.entry(key).or_insert_with(|| {
                let id = vertices.len();
                let (u, v) = key;
                vertices.push([
                    0.5 * (vertices[u][0] + vertices[v][0]),
                    0.5 * (vertices[u][1] + vertices[v][1]),
                    0.5 * (vertices[u][2] + vertices[v][2]),
                ]);
                id
            });
        }
        let [m01, m02, m03, m12, m13, m23] = m;

        // Four corner tets plus the central octahedron fanned around the
        // m01-m23 diagonal (equator cycle m02, m12, m13, m03).
        let children_tets = [
            [t[0], m01, m02, m03],
            [t[1], m01, m12, m13],
            [t[2], m02, m12, m23],
            [t[3], m03, m13, m23],
            [m01, m23, m02, m12],
            [m01, m23, m12, m13],
            [m01, m23, m13, m03],
            [m01, m23, m03, m02],
        ];
        let mut ids = [0usize; 8];
        for (k, child) in children_tets.into_iter().enumerate() {
            let id = tets.len();
            tets.push(child);
            ids[k] = id;
            table.parent_of.insert(id, parent);
        }
        table.children.insert(parent, ids);
    }

    let mut out = SupersetMesh::from_parts(vertices, tets)?;
    out.refinement = Some(table);
    Ok(out)
}

/// Parses a TetGen-style `.node`/`.ele` pair. The index base (0 or 1) is
/// auto-detected from the first listed index.
pub fn load_mesh<P: AsRef<Path>>(node_path: P, ele_path: P) -> Result<SupersetMesh> {
    let vertices = parse_node_file(node_path.as_ref())?;
    let tets = parse_ele_file(ele_path.as_ref(), vertices.len())?;
    SupersetMesh::from_parts(vertices, tets)
}

struct NumberedLines<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> NumberedLines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        NumberedLines {
            path,
            lines: text.lines().enumerate(),
        }
    }

    /// Next line that is neither blank nor a `#` comment, with 1-based number.
    fn next_data(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.lines.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('#') {
                return Some((i + 1, trimmed));
            }
        }
        None
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }
}

fn parse_node_file(path: &Path) -> Result<Vec<[f64; 3]>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = NumberedLines::new(path, &text);

    let (hline, header) = lines
        .next_data()
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "empty node file".into(),
        })?;
    let count: usize = header
        .split_whitespace()
        .next()
        .and_then(|tok| tok.parse().ok())
        .ok_or_else(|| lines.err(hline, "node header must start with a vertex count"))?;

    let mut rows: Vec<(usize, [f64; 3])> = Vec::with_capacity(count);
    for _ in 0..count {
        let (lno, line) = lines
            .next_data()
            .ok_or_else(|| lines.err(hline, format!("expected {count} vertex lines")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(lines.err(lno, "vertex line needs: index x y z"));
        }
        let idx: usize = toks[0]
            .parse()
            .map_err(|_| lines.err(lno, format!("bad vertex index {:?}", toks[0])))?;
        let mut pos = [0.0f64; 3];
        for k in 0..3 {
            let val: f64 = toks[k + 1]
                .parse()
                .map_err(|_| lines.err(lno, format!("bad coordinate {:?}", toks[k + 1])))?;
            if !val.is_finite() {
                return Err(lines.err(lno, format!("non-finite coordinate {val}")));
            }
            pos[k] = val;
        }
        rows.push((idx, pos));
    }

    let base = rows.first().map_or(0, |(idx, _)| (*idx).min(1));
    let mut vertices = vec![[0.0; 3]; count];
    for (idx, pos) in rows {
        let slot = idx
            .checked_sub(base)
            .filter(|&s| s < count)
            .ok_or_else(|| lines.err(hline, format!("vertex index {idx} outside 0-based range")))?;
        vertices[slot] = pos;
    }
    Ok(vertices)
}

fn parse_ele_file(path: &Path, vertex_count: usize) -> Result<Vec<[usize; 4]>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = NumberedLines::new(path, &text);

    let (hline, header) = lines
        .next_data()
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "empty ele file".into(),
        })?;
    let count: usize = header
        .split_whitespace()
        .next()
        .and_then(|tok| tok.parse().ok())
        .ok_or_else(|| lines.err(hline, "ele header must start with a tet count"))?;

    let mut rows: Vec<(usize, [usize; 4], usize)> = Vec::with_capacity(count);
    for _ in 0..count {
        let (lno, line) = lines
            .next_data()
            .ok_or_else(|| lines.err(hline, format!("expected {count} tet lines")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 5 {
            return Err(lines.err(lno, "tet line needs: index v0 v1 v2 v3"));
        }
        let idx: usize = toks[0]
            .parse()
            .map_err(|_| lines.err(lno, format!("bad tet index {:?}", toks[0])))?;
        let mut tet = [0usize; 4];
        for k in 0..4 {
            tet[k] = toks[k + 1]
                .parse()
                .map_err(|_| lines.err(lno, format!("bad vertex index {:?}", toks[k + 1])))?;
        }
        rows.push((idx, tet, lno));
    }

    // Index base (0 or 1) from the first listed tet index; vertex references
    // share the same base in TetGen files.
    let base = rows.first().map_or(0, |(idx, _, _)| (*idx).min(1));
    let mut tets = vec![[0usize; 4]; count];
    for (idx, tet, lno) in rows {
        let slot = idx
            .checked_sub(base)
            .filter(|&s| s < count)
            .ok_or_else(|| lines.err(lno, format!("tet index {idx} out of range")))?;
        let mut shifted = [0usize; 4];
        for k in 0..4 {
            let v = tet[k]
                .checked_sub(base)
                .filter(|&v| v < vertex_count)
                .ok_or_else(|| {
                    lines.err(
                        lno,
                        format!("vertex index {} out of range (mesh has {vertex_count} vertices)", tet[k]),
                    )
                })?;
            shifted[k] = v;
        }
        tets[slot] = shifted;
    }
    Ok(tets)
}

/// Writes the mesh as a 0-based `.node`/`.ele` pair at `prefix.node` /
/// `prefix.ele`.
pub fn write_mesh(mesh: &SupersetMesh, prefix: &Path) -> Result<()> {
    let mut node = String::new();
    writeln!(node, "{} 3 0 0", mesh.vertex_count()).unwrap();
    for (i, v) in mesh.vertices.iter().enumerate() {
        writeln!(node, "{i} {} {} {}", v[0], v[1], v[2]).unwrap();
    }
    let mut ele = String::new();
    writeln!(ele, "{} 4 0", mesh.tet_count()).unwrap();
    for (i, t) in mesh.tets.iter().enumerate() {
        writeln!(ele, "{i} {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    std::fs::write(prefix.with_extension("node"), node)?;
    std::fs::write(prefix.with_extension("ele"), ele)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_tet() -> SupersetMesh {
        SupersetMesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    fn two_tet() -> SupersetMesh {
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
    fn single_tet_has_six_edges() {
        let m = single_tet();
        assert_eq!(m.tet_count(), 1);
        assert_eq!(m.edge_count(), 6);
    }

    #[test]
    fn two_tets_share_three_edges() {
        // 6 + 6 edges with (1,2),(1,3),(2,3) shared => 9 distinct.
        let m = two_tet();
        assert_eq!(m.edge_count(), 9);
    }

    #[test]
    fn edges_are_canonical_and_indexed() {
        let m = two_tet();
        for ids in &m.tet_edges {
            for &e in ids {
                let (u, v) = m.edges[e];
                assert!(u < v);
                assert_eq!(m.edge_index[&(u, v)], e);
            }
        }
    }

    #[test]
    fn incidence_matches_brute_force() {
        let m = generate_block_mesh(2, 2, 2).unwrap();
        let inc = m.build_edge_incidence();
        for (eid, &(u, v)) in m.edges.iter().enumerate() {
            let brute: Vec<usize> = m
                .tets
                .iter()
                .enumerate()
                .filter(|(_, t)| t.contains(&u) && t.contains(&v))
                .map(|(i, _)| i)
                .collect();
            assert_eq!(inc[eid], brute);
        }
    }

    #[test]
    fn reference_tet_volume() {
        let m = single_tet();
        assert!((m.tet_volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_tet_volume_is_zero() {
        let m = SupersetMesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [1.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        assert_eq!(m.tet_volume(0), 0.0);
    }

    #[test]
    fn scaled_tet_volume_is_cubic() {
        let m = SupersetMesh::from_parts(
            vec![
                [0.0, 0.0, 0.0],
                [2.0, 0.0, 0.0],
                [0.0, 2.0, 0.0],
                [0.0, 0.0, 2.0],
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        assert!((m.tet_volume(0) - 8.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn block_mesh_counts() {
        let m = generate_block_mesh(1, 1, 1).unwrap();
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.tet_count(), 6);

        let m = generate_block_mesh(2, 2, 2).unwrap();
        assert_eq!(m.vertex_count(), 27);
        assert_eq!(m.tet_count(), 48);
    }

    #[test]
    fn block_mesh_zero_dimension_rejected() {
        assert!(matches!(
            generate_block_mesh(0, 1, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn block_mesh_volume_fills_box() {
        let m = generate_block_mesh(3, 3, 3).unwrap();
        let total: f64 = (0..m.tet_count()).map(|t| m.tet_volume(t)).sum();
        assert!((total - 27.0).abs() < 1e-9, "total volume {total}");
    }

    #[test]
    fn block_mesh_orientation_positive() {
        let m = generate_block_mesh(2, 1, 1).unwrap();
        for &t in &m.tets {
            assert!(signed_volume(&m.vertices, t) > 0.0);
        }
    }

    #[test]
    fn block_mesh_deterministic() {
        let a = generate_block_mesh(3, 2, 1).unwrap();
        let b = generate_block_mesh(3, 2, 1).unwrap();
        assert_eq!(a.vertices, b.vertices);
        assert_eq!(a.tets, b.tets);
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn refine_single_tet() {
        let m = single_tet();
        let r = build_refinement(&m, &[0]).unwrap();
        assert_eq!(r.vertex_count(), 4 + 6);
        assert_eq!(r.tet_count(), 1 + 8);
        let table = r.refinement.as_ref().unwrap();
        let children = table.children[&0];
        for &c in &children {
            assert_eq!(table.parent_of[&c], 0);
        }
        let child_vol: f64 = children.iter().map(|&c| r.tet_volume(c)).sum();
        let parent_vol = r.tet_volume(0);
        assert!(
            (child_vol - parent_vol).abs() <= 1e-9 * parent_vol,
            "children {child_vol} vs parent {parent_vol}"
        );
    }

    #[test]
    fn refine_two_adjacent_tets_dedups_shared_midpoints() {
        let m = two_tet();
        // Distinct edges of the two tets: 9, so 9 midpoints, 3 of them shared.
        let r = build_refinement(&m, &[0, 1]).unwrap();
        assert_eq!(r.vertex_count(), 5 + 9);
        assert_eq!(r.tet_count(), 2 + 16);
    }

    #[test]
    fn refine_out_of_range_rejected() {
        let m = single_tet();
        assert!(matches!(
            build_refinement(&m, &[3]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn refinement_children_conserve_volume_on_block_mesh() {
        let m = generate_block_mesh(2, 2, 2).unwrap();
        let r = build_refinement(&m, &[0, 7, 13]).unwrap();
        let table = r.refinement.as_ref().unwrap();
        for (&parent, children) in &table.children {
            let child_vol: f64 = children.iter().map(|&c| r.tet_volume(c)).sum();
            let parent_vol = r.tet_volume(parent);
            assert!((child_vol - parent_vol).abs() <= 1e-9 * parent_vol);
        }
    }

    #[test]
    fn node_ele_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("mesh");
        let m = generate_block_mesh(2, 1, 1).unwrap();
        write_mesh(&m, &prefix).unwrap();
        let loaded = load_mesh(prefix.with_extension("node"), prefix.with_extension("ele")).unwrap();
        assert_eq!(loaded.vertices, m.vertices);
        assert_eq!(loaded.tets, m.tets);
    }

    #[test]
    fn load_one_based_files() {
        let dir = tempfile::tempdir().unwrap();
        let node = dir.path().join("t.node");
        let ele = dir.path().join("t.ele");
        std::fs::write(
            &node,
            "4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n",
        )
        .unwrap();
        std::fs::write(&ele, "1 4 0\n1 1 2 3 4\n").unwrap();
        let m = load_mesh(&node, &ele).unwrap();
        assert_eq!(m.tets, vec![[0, 1, 2, 3]]);
        assert_eq!(m.edge_count(), 6);
    }

    #[test]
    fn load_rejects_out_of_range_vertex() {
        let dir = tempfile::tempdir().unwrap();
        let node = dir.path().join("t.node");
        let ele = dir.path().join("t.ele");
        std::fs::write(
            &node,
            "5 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n4 1 1 1\n",
        )
        .unwrap();
        std::fs::write(&ele, "1 4 0\n0 0 1 2 99\n").unwrap();
        let err = load_mesh(&node, &ele).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_rejects_non_finite_coordinate() {
        let dir = tempfile::tempdir().unwrap();
        let node = dir.path().join("t.node");
        std::fs::write(&node, "1 3 0 0\n0 0 nan 0\n").unwrap();
        let err = parse_node_file(&node).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_rejects_malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let node = dir.path().join("t.node");
        std::fs::write(&node, "banana\n").unwrap();
        assert!(parse_node_file(&node).is_err());
    }
}
