//! Adaptive anchor adjustment: gradient-driven growing and opacity-driven
//! pruning.
//!
//! Growing runs a fine-to-coarse pass over the existing anchors. Each
//! Gaussian row is classified against the per-level thresholds; significant
//! rows place a candidate voxel at the anchor's own level, very-significant
//! rows one level deeper. Candidates whose parent voxel is unoccupied queue
//! a parent candidate, cascading toward the roots. Instantiation then runs
//! parent-before-child with conflict checks, so the strict octree property
//! holds throughout.
//!
//! Pruning removes childless anchors whose accumulated opacity is at or
//! below the threshold, iterating to a fixed point so cascades of trivial
//! branches collapse.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::octree::OctreeStore;
use crate::scene::{
    expand_gaussians, parent_coord, voxelize, GaussianStats, VoxelCoord,
};

/// Thresholds and cadence for anchor adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustParams {
    pub tau_g: f64,
    pub beta: f64,
    pub tau_o: f64,
    /// Gradient-averaging window of the stats producer, in iterations.
    pub period: u32,
}

impl Default for AdjustParams {
    fn default() -> Self {
        AdjustParams { tau_g: 5e-5, beta: 0.01, tau_o: 0.5, period: 100 }
    }
}

/// Growth candidate: the target voxel (its level rides along in the coord).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub coord: VoxelCoord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Significance {
    NonSignificant,
    Significant,
    VerySignificant,
}

/// Level growth threshold `tau_g * 2^(beta * l)`.
pub fn level_threshold(p: &AdjustParams, level: u32) -> f64 {
    p.tau_g * (p.beta * level as f64).exp2()
}

/// Classify a Gaussian row's gradient magnitude at level `l`.
///
/// Very significant requires strictly exceeding the next level's threshold;
/// a magnitude exactly at it is only significant.
pub fn classify(grad_mag: f64, p: &AdjustParams, level: u32) -> Significance {
    if grad_mag > level_threshold(p, level + 1) {
        Significance::VerySignificant
    } else if grad_mag > level_threshold(p, level) {
        Significance::Significant
    } else {
        Significance::NonSignificant
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GrowReport {
    /// Distinct candidate voxels collected per level (index 0 = level 1).
    pub candidates_per_level: Vec<usize>,
    /// Anchors actually created per level.
    pub spawned_per_level: Vec<usize>,
    pub spawned: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PruneReport {
    pub pruned_per_level: Vec<usize>,
    pub pruned: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjustReport {
    pub grow: GrowReport,
    pub prune: PruneReport,
    pub anchor_counts_after: Vec<usize>,
}

fn check_stats(store: &OctreeStore, stats: &GaussianStats) -> Result<()> {
    if stats.anchors.len() != store.len() {
        return Err(Error::StatsMismatch { expected: store.len(), got: stats.anchors.len() });
    }
    let dim_o = store.cfg().dim_o;
    for a in &stats.anchors {
        if a.grad_mags.len() != dim_o {
            return Err(Error::StatsRowMismatch { expected: dim_o, got: a.grad_mags.len() });
        }
    }
    Ok(())
}

/// Grow anchors from gradient statistics. `stats` must align with the
/// store's canonical anchor order.
pub fn grow(store: &mut OctreeStore, stats: &GaussianStats, p: &AdjustParams) -> Result<GrowReport> {
    check_stats(store, stats)?;
    let cfg = store.cfg().clone();
    let num_lods = cfg.num_lods;

    let stats_by_coord: HashMap<VoxelCoord, &crate::scene::AnchorStats> = store
        .lod_slice(num_lods)
        .iter()
        .map(|a| a.coord)
        .zip(stats.anchors.iter())
        .collect();

    // candidates[l - 1]: target voxels for level l. BTreeSet keeps the
    // later instantiation order independent of collection order.
    let mut candidates: Vec<BTreeSet<VoxelCoord>> =
        (0..num_lods).map(|_| BTreeSet::new()).collect();

    for level in (1..=num_lods).rev() {
        let tau_same = level_threshold(p, level);
        let tau_next = level_threshold(p, level + 1);
        let anchors: Vec<_> = store.level_anchors(level).cloned().collect();
        for anchor in &anchors {
            let Some(astats) = stats_by_coord.get(&anchor.coord) else { continue };
            let centers = expand_gaussians(&cfg, anchor);
            for (center, &mag) in centers.iter().zip(astats.grad_mags.iter()) {
                let mag = mag as f64;
                let target_level = if mag > tau_next && level < num_lods {
                    level + 1
                } else if mag > tau_same {
                    level
                } else {
                    continue;
                };
                // Offsets can push a Gaussian outside the bounding cube;
                // such rows cannot host an on-grid anchor and are skipped.
                if let Ok(coord) = voxelize(&cfg, *center, target_level) {
                    candidates[target_level as usize - 1].insert(coord);
                }
            }
        }
        // Parent completion for the finer level's full candidate set. The
        // occupancy check runs against the anchors present before this
        // grow pass spawned anything, which still holds here because
        // instantiation is deferred.
        if level < num_lods {
            let finer: Vec<VoxelCoord> =
                candidates[level as usize].iter().copied().collect();
            for c in finer {
                let parent = parent_coord(c).expect("candidate level >= 2");
                if !store.contains(parent) {
                    candidates[level as usize - 1].insert(parent);
                }
            }
        }
    }

    let mut report = GrowReport {
        candidates_per_level: candidates.iter().map(|s| s.len()).collect(),
        spawned_per_level: vec![0; num_lods as usize],
        spawned: 0,
    };

    // Instantiate parent-before-child; occupied targets are dropped.
    for level in 1..=num_lods {
        for &coord in &candidates[level as usize - 1] {
            if store.insert(coord)? {
                report.spawned_per_level[level as usize - 1] += 1;
                report.spawned += 1;
            }
        }
    }
    Ok(report)
}

/// Prune childless anchors with opacity <= `tau_o`, iterating to a fixed
/// point. Anchors without stats (freshly spawned this cycle) are kept.
pub fn prune(store: &mut OctreeStore, stats: &GaussianStats, p: &AdjustParams) -> Result<PruneReport> {
    let opacity_by_coord: HashMap<VoxelCoord, f32> = store
        .lod_slice(store.cfg().num_lods)
        .iter()
        .map(|a| a.coord)
        .zip(stats.anchors.iter().map(|s| s.opacity))
        .collect();

    let num_lods = store.cfg().num_lods;
    let mut report = PruneReport { pruned_per_level: vec![0; num_lods as usize], pruned: 0 };
    loop {
        let mut removable = Vec::new();
        for level in 1..=num_lods {
            for anchor in store.level_anchors(level) {
                let Some(&opacity) = opacity_by_coord.get(&anchor.coord) else { continue };
                if opacity as f64 <= p.tau_o && store.children_of(anchor.coord).is_empty() {
                    removable.push(anchor.coord);
                }
            }
        }
        if removable.is_empty() {
            break;
        }
        for coord in removable {
            if store.remove_leaf(coord)? {
                report.pruned_per_level[coord.level as usize - 1] += 1;
                report.pruned += 1;
            }
        }
    }
    Ok(report)
}

/// One adjustment cycle: grow, then prune. Stats are consumed as aligned to
/// the store's canonical order *before* the call.
pub fn adjust_step(
    store: &mut OctreeStore,
    stats: &GaussianStats,
    p: &AdjustParams,
) -> Result<AdjustReport> {
    check_stats(store, stats)?;
    // Pruning looks stats up by coordinate, so the maps stay valid across
    // the grow mutation.
    let grow_report = grow(store, stats, p)?;
    let prune_report = prune(store, stats, p)?;
    debug_assert!(store.validate().is_ok());
    Ok(AdjustReport {
        grow: grow_report,
        prune: prune_report,
        anchor_counts_after: (1..=store.cfg().num_lods)
            .map(|l| store.level_count(l))
            .collect(),
    })
}
