//! Seeded per-frame edit streams for the scripted topology scenarios, plus
//! schedule serialization and strict replay validation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ActiveMask, SupersetMesh};
use crate::rng::{stream, stream_rng};

/// One frame of topology edits: tets leaving and entering the active set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditBatch {
    pub deleted: Vec<usize>,
    pub added: Vec<usize>,
}

impl EditBatch {
    pub fn delta_size(&self) -> usize {
        self.deleted.len() + self.added.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deleted.is_empty() && self.added.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Fracture,
    Refinement,
    Merge,
    RepeatedLocality,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::Fracture => "fracture",
            Scenario::Refinement => "refinement",
            Scenario::Merge => "merge",
            Scenario::RepeatedLocality => "repeated_locality",
        };
        f.write_str(s)
    }
}

/// Scenario parameters, recorded in the schedule for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScheduleParams {
    /// Slab axis (fracture / merge / repeated locality).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_fraction: Option<f64>,
    /// Realized absolute slab half-width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parents_per_frame: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
}

/// A fully expanded, replayable edit stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub scenario: Scenario,
    pub seed: u64,
    pub params: ScheduleParams,
    /// Tets inactive in the initial mask (all others start active).
    pub initial_inactive: Vec<usize>,
    pub frames: Vec<EditBatch>,
}

impl Schedule {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// The initial active mask over `mesh`'s candidate pool.
    pub fn initial_mask(&self, mesh: &SupersetMesh) -> Result<ActiveMask> {
        let mut mask = ActiveMask::all_active(mesh.tet_count());
        for &t in &self.initial_inactive {
            if t >= mesh.tet_count() {
                return Err(Error::InvalidArgument(format!(
                    "initial_inactive tet {t} out of range"
                )));
            }
            mask.deactivate(t)?;
        }
        Ok(mask)
    }

    /// Replays all frames from the initial mask under strict validation,
    /// returning the mask after each frame. Also enforces the parent/child
    /// exclusivity invariant per frame.
    pub fn replay(&self, mesh: &SupersetMesh) -> Result<Vec<ActiveMask>> {
        let mut mask = self.initial_mask(mesh)?;
        let mut out = Vec::with_capacity(self.frames.len());
        for (f, batch) in self.frames.iter().enumerate() {
            apply_batch(&mut mask, batch)
                .map_err(|e| Error::EditViolation(format!("frame {f}: {e}")))?;
            mask.validate_against(mesh)
                .map_err(|e| Error::EditViolation(format!("frame {f}: {e}")))?;
            out.push(mask.clone());
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Schedule> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Applies one batch to a mask under strict validation (deleting an inactive
/// tet or adding an active tet is an error).
pub fn apply_batch(mask: &mut ActiveMask, batch: &EditBatch) -> Result<()> {
    if !batch.deleted.is_empty() && !batch.added.is_empty() {
        let deleted: std::collections::HashSet<usize> = batch.deleted.iter().copied().collect();
        if let Some(t) = batch.added.iter().find(|t| deleted.contains(t)) {
            return Err(Error::EditViolation(format!(
                "tet {t} appears in both deleted and added"
            )));
        }
    }
    for &t in &batch.deleted {
        mask.deactivate(t)?;
    }
    for &t in &batch.added {
        mask.activate(t)?;
    }
    Ok(())
}

/// A slab of tets around the plane `x[axis] = center`, sorted by distance to
/// the plane (ties by tet id).
#[derive(Debug, Clone)]
pub struct Slab {
    pub axis: usize,
    pub center: f64,
    pub half_width: f64,
    /// Member tets ordered by ascending `(distance, id)`.
    pub tets: Vec<usize>,
}

fn centroid_distances(mesh: &SupersetMesh, axis: usize) -> (f64, Vec<(f64, usize)>) {
    let coords: Vec<f64> = (0..mesh.tet_count())
        .map(|t| mesh.tet_centroid(t)[axis])
        .collect();
    let center = coords.iter().sum::<f64>() / coords.len() as f64;
    let mut dists: Vec<(f64, usize)> = coords
        .iter()
        .enumerate()
        .map(|(t, &x)| ((x - center).abs(), t))
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (center, dists)
}

/// Selects the slab holding `target` tets (+-1) by binary search over the
/// half-width; when centroid-distance ties make that count unreachable, the
/// tie is broken deterministically by tet id to hit `target` exactly.
pub fn slab_by_count(mesh: &SupersetMesh, axis: usize, target: usize) -> Result<Slab> {
    if target == 0 || target > mesh.tet_count() {
        return Err(Error::Config(format!(
            "slab target {target} out of range for {} tets",
            mesh.tet_count()
        )));
    }
    let (center, dists) = centroid_distances(mesh, axis);

    // Binary search over the sorted distance array: counts achievable with a
    // pure half-width cut are the plateau boundaries.
    let (mut lo, mut hi) = (0usize, dists.len());
    let mut best: Option<(usize, f64)> = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let w = dists[mid].0;
        let count = dists.partition_point(|&(d, _)| d <= w);
        if count.abs_diff(target) <= 1 {
            best = Some((count, w));
            break;
        }
        if count < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }

    let (count, half_width) = match best {
        Some(found) => found,
        // Ties: take exactly `target` in (distance, id) order.
        None => (target, dists[target - 1].0),
    };
    let tets = dists[..count].iter().map(|&(_, t)| t).collect();
    Ok(Slab {
        axis,
        center,
        half_width,
        tets,
    })
}

/// Selects the slab of all tets whose centroid lies within `half_width`
/// (absolute units) of the center plane.
pub fn slab_by_half_width(mesh: &SupersetMesh, axis: usize, half_width: f64) -> Result<Slab> {
    if half_width <= 0.0 {
        return Err(Error::Config(format!("half width must be > 0, got {half_width}")));
    }
    let (center, dists) = centroid_distances(mesh, axis);
    let count = dists.partition_point(|&(d, _)| d <= half_width);
    if count == 0 {
        return Err(Error::Config(format!(
            "half width {half_width} selects an empty slab"
        )));
    }
    let tets = dists[..count].iter().map(|&(_, t)| t).collect();
    Ok(Slab {
        axis,
        center,
        half_width,
        tets,
    })
}

fn slab_for_fraction(mesh: &SupersetMesh, target_fraction: f64) -> Result<Slab> {
    if !(0.0..1.0).contains(&target_fraction) || target_fraction == 0.0 {
        return Err(Error::Config(format!(
            "target fraction must be in (0,1), got {target_fraction}"
        )));
    }
    let target = ((target_fraction * mesh.tet_count() as f64).ceil() as usize).max(1);
    slab_by_count(mesh, mesh.longest_axis(), target)
}

/// Splits `items` into `frames` contiguous chunks with sizes differing by at
/// most one (earlier chunks take the remainder).
fn partition_into_frames(items: &[usize], frames: usize) -> Vec<Vec<usize>> {
    let base = items.len() / frames;
    let extra = items.len() % frames;
    let mut out = Vec::with_capacity(frames);
    let mut at = 0;
    for f in 0..frames {
        let len = base + usize::from(f < extra);
        let mut chunk = items[at..at + len].to_vec();
        chunk.sort_unstable();
        out.push(chunk);
        at += len;
    }
    out
}

/// Fracture: delete slab tets over `frames` frames, innermost first.
pub fn make_fracture_schedule(
    mesh: &SupersetMesh,
    seed: u64,
    frames: usize,
    target_fraction: f64,
) -> Result<Schedule> {
    let slab = slab_for_fraction(mesh, target_fraction)?;
    fracture_from_slab(mesh, seed, frames, slab, Some(target_fraction))
}

/// Fracture with an explicit slab half-width relative to the axis extent
/// (the locality-sweep knob).
pub fn make_fracture_schedule_by_width(
    mesh: &SupersetMesh,
    seed: u64,
    frames: usize,
    relative_half_width: f64,
) -> Result<Schedule> {
    let axis = mesh.longest_axis();
    let (lo, hi) = mesh.bbox();
    let slab = slab_by_half_width(mesh, axis, relative_half_width * (hi[axis] - lo[axis]))?;
    fracture_from_slab(mesh, seed, frames, slab, None)
}

fn fracture_from_slab(
    _mesh: &SupersetMesh,
    seed: u64,
    frames: usize,
    slab: Slab,
    target_fraction: Option<f64>,
) -> Result<Schedule> {
    if frames == 0 {
        return Err(Error::Config("frame count must be >= 1".into()));
    }
    let batches = partition_into_frames(&slab.tets, frames);
    Ok(Schedule {
        scenario: Scenario::Fracture,
        seed,
        params: ScheduleParams {
            axis: Some(slab.axis),
            target_fraction,
            half_width: Some(slab.half_width),
            ..Default::default()
        },
        initial_inactive: Vec::new(),
        frames: batches
            .into_iter()
            .map(|deleted| EditBatch {
                deleted,
                added: Vec::new(),
            })
            .collect(),
    })
}

/// Merge: start with the slab deleted and reinsert it over `frames` frames,
/// farthest from the plane first; the final mask is all-active.
pub fn make_merge_schedule(
    mesh: &SupersetMesh,
    seed: u64,
    frames: usize,
    target_fraction: f64,
) -> Result<Schedule> {
    if frames == 0 {
        return Err(Error::Config("frame count must be >= 1".into()));
    }
    let slab = slab_for_fraction(mesh, target_fraction)?;
    let mut order = slab.tets.clone();
    order.reverse();
    let batches = partition_into_frames(&order, frames);
    let mut initial_inactive = slab.tets.clone();
    initial_inactive.sort_unstable();
    Ok(Schedule {
        scenario: Scenario::Merge,
        seed,
        params: ScheduleParams {
            axis: Some(slab.axis),
            target_fraction: Some(target_fraction),
            half_width: Some(slab.half_width),
            ..Default::default()
        },
        initial_inactive,
        frames: batches
            .into_iter()
            .map(|added| EditBatch {
                deleted: Vec::new(),
                added,
            })
            .collect(),
    })
}

/// Refinement: each frame swaps `parents_per_frame` randomly chosen parents
/// for their eight preallocated children; selections are disjoint across
/// frames. The initial mask has every child inactive.
pub fn make_refinement_schedule(
    mesh: &SupersetMesh,
    seed: u64,
    frames: usize,
    parents_per_frame: usize,
) -> Result<Schedule> {
    if frames == 0 || parents_per_frame == 0 {
        return Err(Error::Config(
            "frames and parents_per_frame must be >= 1".into(),
        ));
    }
    let table = mesh.refinement.as_ref().ok_or_else(|| {
        Error::Config("refinement scenario requires a mesh with a refinement table".into())
    })?;

    // Refinable parents that are not themselves children (start active).
    let mut parents: Vec<usize> = table
        .children
        .keys()
        .copied()
        .filter(|p| !table.parent_of.contains_key(p))
        .collect();
    parents.sort_unstable();

    let need = frames * parents_per_frame;
    if parents.len() < need {
        return Err(Error::Config(format!(
            "need {need} refinable parents, mesh has {}",
            parents.len()
        )));
    }

    let mut rng = stream_rng(seed, stream::SCHEDULE);
    parents.shuffle(&mut rng);

    let mut initial_inactive: Vec<usize> = table
        .children
        .values()
        .flat_map(|c| c.iter().copied())
        .collect();
    initial_inactive.sort_unstable();

    let mut batches = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut deleted: Vec<usize> =
            parents[f * parents_per_frame..(f + 1) * parents_per_frame].to_vec();
        deleted.sort_unstable();
        let mut added: Vec<usize> = deleted
            .iter()
            .flat_map(|p| table.children[p].iter().copied())
            .collect();
        added.sort_unstable();
        batches.push(EditBatch { deleted, added });
    }

    Ok(Schedule {
        scenario: Scenario::Refinement,
        seed,
        params: ScheduleParams {
            parents_per_frame: Some(parents_per_frame),
            ..Default::default()
        },
        initial_inactive,
        frames: batches,
    })
}

/// Repeated locality: alternately delete and reinsert the same slab,
/// `2 * cycles` frames total.
pub fn make_repeated_locality_schedule(
    mesh: &SupersetMesh,
    seed: u64,
    cycles: usize,
    target_fraction: f64,
) -> Result<Schedule> {
    if cycles == 0 {
        return Err(Error::Config("cycles must be >= 1".into()));
    }
    let slab = slab_for_fraction(mesh, target_fraction)?;
    let mut members = slab.tets.clone();
    members.sort_unstable();

    let mut frames = Vec::with_capacity(2 * cycles);
    for _ in 0..cycles {
        frames.push(EditBatch {
            deleted: members.clone(),
            added: Vec::new(),
        });
        frames.push(EditBatch {
            deleted: Vec::new(),
            added: members.clone(),
        });
    }

    Ok(Schedule {
        scenario: Scenario::RepeatedLocality,
        seed,
        params: ScheduleParams {
            axis: Some(slab.axis),
            target_fraction: Some(target_fraction),
            half_width: Some(slab.half_width),
            cycles: Some(cycles),
            ..Default::default()
        },
        initial_inactive: Vec::new(),
        frames,
    })
}
