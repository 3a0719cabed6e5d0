//! Shared fixtures for the integration suites: randomized scene generators
//! and independent brute-force references.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use pgs_core::adjust::{level_threshold, AdjustParams};
use pgs_core::octree::OctreeStore;
use pgs_core::scene::{
    canonical_position, parent_coord, voxelize, AnchorStats, GaussianStats, OctreeConfig,
    PointCloud, VoxelCoord,
};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Small random configuration; quantization steps stay coarse enough that
/// fuzzed attributes quantize well inside the 16-bit symbol alphabet.
pub fn random_config(rng: &mut ChaCha12Rng) -> OctreeConfig {
    OctreeConfig {
        base_depth: rng.random_range(1..=3),
        num_lods: rng.random_range(2..=4),
        bbox_min: [
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ],
        bbox_side: rng.random_range(0.5..10.0),
        dim_f: rng.random_range(1..=4),
        dim_s: rng.random_range(1..=3),
        dim_o: rng.random_range(1..=3),
        q0_f: rng.random_range(0.5..1.5),
        q0_s: rng.random_range(0.05..0.2),
        q0_o: rng.random_range(0.1..0.3),
    }
}

pub fn random_cloud(rng: &mut ChaCha12Rng, cfg: &OctreeConfig, points: usize) -> PointCloud {
    let margin = 0.01 * cfg.bbox_side;
    PointCloud {
        points: (0..points)
            .map(|_| {
                [
                    cfg.bbox_min[0] + rng.random_range(margin..cfg.bbox_side - margin),
                    cfg.bbox_min[1] + rng.random_range(margin..cfg.bbox_side - margin),
                    cfg.bbox_min[2] + rng.random_range(margin..cfg.bbox_side - margin),
                ]
            })
            .collect(),
    }
}

/// Build a store and fill it with bounded random attributes.
pub fn random_store(rng: &mut ChaCha12Rng, cfg: OctreeConfig, points: usize) -> OctreeStore {
    let cloud = random_cloud(rng, &cfg, points);
    let mut store = OctreeStore::build_from_points(cfg, &cloud).expect("non-empty cloud");
    let coords: Vec<VoxelCoord> = store
        .lod_slice(store.cfg().num_lods)
        .iter()
        .map(|a| a.coord)
        .collect();
    let offset_span = 0.2 * store.cfg().bbox_side;
    for c in coords {
        let a = store.get_mut(c).unwrap();
        for v in a.attrs.f.iter_mut() {
            *v = rng.random_range(-2.0..2.0);
        }
        for v in a.attrs.s.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        for row in a.attrs.o.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(-offset_span..offset_span) as f32;
            }
        }
    }
    store
}

/// Stats aligned to the store's canonical order, with gradient magnitudes
/// spread log-uniformly around the growth thresholds so every significance
/// class occurs.
pub fn random_stats(rng: &mut ChaCha12Rng, store: &OctreeStore, p: &AdjustParams) -> GaussianStats {
    let dim_o = store.cfg().dim_o;
    GaussianStats {
        anchors: store
            .lod_slice(store.cfg().num_lods)
            .iter()
            .map(|_| AnchorStats {
                grad_mags: (0..dim_o)
                    .map(|_| {
                        let scale = rng.random_range(-2.0f64..2.0);
                        (p.tau_g * 10f64.powf(scale)) as f32
                    })
                    .collect(),
                opacity: rng.random_range(0.0..1.0),
            })
            .collect(),
    }
}

pub fn random_adjust_params(rng: &mut ChaCha12Rng) -> AdjustParams {
    AdjustParams {
        tau_g: rng.random_range(1e-5..1e-3),
        beta: rng.random_range(0.0..1.0),
        tau_o: rng.random_range(0.2..0.8),
        period: 100,
    }
}

/// Independent set-theoretic reference for the growing operation.
///
/// Enumerates every (anchor, offset-row) pair of the original store,
/// applies the significance rules to collect candidate voxels per level,
/// closes the sets under parent completion against the original occupancy,
/// and unions with the original anchor set. Conflict checking falls out of
/// the set semantics.
pub fn grow_oracle(
    store: &OctreeStore,
    stats: &GaussianStats,
    p: &AdjustParams,
) -> BTreeSet<VoxelCoord> {
    let cfg = store.cfg();
    let num_lods = cfg.num_lods;
    let anchors = store.lod_slice(num_lods);
    assert_eq!(anchors.len(), stats.anchors.len());

    let occupied: Vec<HashSet<VoxelCoord>> = (1..=num_lods)
        .map(|l| store.level_anchors(l).map(|a| a.coord).collect())
        .collect();

    let mut candidates: Vec<BTreeSet<VoxelCoord>> =
        (0..num_lods).map(|_| BTreeSet::new()).collect();

    for (anchor, astats) in anchors.iter().zip(&stats.anchors) {
        let level = anchor.coord.level;
        let position = canonical_position(cfg, anchor.coord);
        for (row, &mag) in anchor.attrs.o.iter().zip(&astats.grad_mags) {
            let mag = mag as f64;
            let target = if mag > level_threshold(p, level + 1) && level < num_lods {
                level + 1
            } else if mag > level_threshold(p, level) {
                level
            } else {
                continue;
            };
            let center = [
                position[0] + row[0] as f64,
                position[1] + row[1] as f64,
                position[2] + row[2] as f64,
            ];
            if let Ok(coord) = voxelize(cfg, center, target) {
                candidates[target as usize - 1].insert(coord);
            }
        }
    }

    // Parent completion closure, finest level first, checked against the
    // anchors that existed before growth.
    for target in (2..=num_lods).rev() {
        let level_set: Vec<VoxelCoord> =
            candidates[target as usize - 1].iter().copied().collect();
        for c in level_set {
            let parent = parent_coord(c).unwrap();
            if !occupied[parent.level as usize - 1].contains(&parent) {
                candidates[parent.level as usize - 1].insert(parent);
            }
        }
    }

    let mut result: BTreeSet<VoxelCoord> = occupied.iter().flatten().copied().collect();
    for set in candidates {
        result.extend(set);
    }
    result
}

/// Coordinates of every anchor in a store.
pub fn anchor_set(store: &OctreeStore) -> BTreeSet<VoxelCoord> {
    store
        .lod_slice(store.cfg().num_lods)
        .iter()
        .map(|a| a.coord)
        .collect()
}
