//! Level-indexed anchor container enforcing strict octree properties.
//!
//! Each level maps Morton keys to anchors, so within-level iteration is
//! already in the canonical serialization order (level-major outside,
//! Morton-within-level inside). Every anchor at level >= 2 must have an
//! anchor at its parent voxel.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scene::{
    child_coord, morton_key, parent_coord, voxelize, Anchor, OctreeConfig, PointCloud, VoxelCoord,
};

#[derive(Debug, Clone)]
pub struct OctreeStore {
    cfg: OctreeConfig,
    levels: Vec<BTreeMap<u64, Anchor>>,
}

/// First invariant violation found by [`OctreeStore::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CoordOutOfBounds { coord: VoxelCoord },
    MissingParent { coord: VoxelCoord, parent: VoxelCoord },
    KeyMismatch { coord: VoxelCoord },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::CoordOutOfBounds { coord } => {
                write!(f, "anchor {coord} lies outside its level grid")
            }
            Violation::MissingParent { coord, parent } => {
                write!(f, "anchor {coord} lacks a parent anchor at {parent}")
            }
            Violation::KeyMismatch { coord } => {
                write!(f, "anchor {coord} is stored under a foreign Morton key")
            }
        }
    }
}

impl OctreeStore {
    pub fn new(cfg: OctreeConfig) -> Result<Self> {
        cfg.validate()?;
        let levels = (0..cfg.num_lods).map(|_| BTreeMap::new()).collect();
        Ok(OctreeStore { cfg, levels })
    }

    pub fn cfg(&self) -> &OctreeConfig {
        &self.cfg
    }

    /// Build the initial octree from a point cloud: every point becomes an
    /// anchor candidate at the deepest level (first occupant of a voxel
    /// wins), then ancestor chains are materialized up to level 1. All
    /// attributes start zeroed.
    pub fn build_from_points(cfg: OctreeConfig, pc: &PointCloud) -> Result<Self> {
        if pc.points.is_empty() {
            return Err(Error::EmptyPointCloud);
        }
        let mut store = OctreeStore::new(cfg)?;
        let deepest = store.cfg.num_lods;
        for &p in &pc.points {
            let coord = voxelize(&store.cfg, p, deepest)?;
            let key = morton_key(coord);
            if store.levels[deepest as usize - 1].contains_key(&key) {
                continue;
            }
            store.levels[deepest as usize - 1].insert(key, Anchor::zeroed(&store.cfg, coord));
            store.materialize_ancestors(coord);
        }
        Ok(store)
    }

    fn materialize_ancestors(&mut self, mut coord: VoxelCoord) {
        while coord.level >= 2 {
            let parent = parent_coord(coord).expect("level >= 2");
            let key = morton_key(parent);
            let map = &mut self.levels[parent.level as usize - 1];
            if map.contains_key(&key) {
                break;
            }
            map.insert(key, Anchor::zeroed(&self.cfg, parent));
            coord = parent;
        }
    }

    pub fn contains(&self, coord: VoxelCoord) -> bool {
        self.level_map(coord.level)
            .is_some_and(|m| m.contains_key(&morton_key(coord)))
    }

    pub fn get(&self, coord: VoxelCoord) -> Option<&Anchor> {
        self.level_map(coord.level)?.get(&morton_key(coord))
    }

    pub fn get_mut(&mut self, coord: VoxelCoord) -> Option<&mut Anchor> {
        if coord.level < 1 || coord.level > self.cfg.num_lods {
            return None;
        }
        self.levels[coord.level as usize - 1].get_mut(&morton_key(coord))
    }

    fn level_map(&self, level: u32) -> Option<&BTreeMap<u64, Anchor>> {
        if level < 1 || level > self.cfg.num_lods {
            None
        } else {
            Some(&self.levels[level as usize - 1])
        }
    }

    pub fn level_count(&self, level: u32) -> usize {
        self.level_map(level).map_or(0, |m| m.len())
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(|m| m.is_empty())
    }

    /// Anchors of one level in Morton order.
    pub fn level_anchors(&self, level: u32) -> impl Iterator<Item = &Anchor> {
        self.level_map(level).into_iter().flat_map(|m| m.values())
    }

    /// Insert a zero-attribute anchor if the voxel is unoccupied; returns
    /// whether an anchor was created. Anchors at level >= 2 require an
    /// existing parent.
    pub fn insert(&mut self, coord: VoxelCoord) -> Result<bool> {
        if !coord.in_bounds(&self.cfg) {
            return Err(Error::CoordOutOfBounds(coord));
        }
        if coord.level >= 2 {
            let parent = parent_coord(coord)?;
            if !self.contains(parent) {
                return Err(Error::MissingParent { child: coord, parent });
            }
        }
        let key = morton_key(coord);
        let map = &mut self.levels[coord.level as usize - 1];
        if map.contains_key(&key) {
            return Ok(false);
        }
        map.insert(key, Anchor::zeroed(&self.cfg, coord));
        Ok(true)
    }

    /// Insert an anchor carrying attributes; same occupancy and parent rules
    /// as [`insert`](Self::insert).
    pub fn insert_anchor(&mut self, anchor: Anchor) -> Result<bool> {
        let coord = anchor.coord;
        if !coord.in_bounds(&self.cfg) {
            return Err(Error::CoordOutOfBounds(coord));
        }
        if coord.level >= 2 {
            let parent = parent_coord(coord)?;
            if !self.contains(parent) {
                return Err(Error::MissingParent { child: coord, parent });
            }
        }
        let key = morton_key(coord);
        let map = &mut self.levels[coord.level as usize - 1];
        if map.contains_key(&key) {
            return Ok(false);
        }
        map.insert(key, anchor);
        Ok(true)
    }

    /// Remove an anchor if it has no children; returns whether an anchor was
    /// removed. Removing an anchor that still has children is an error.
    pub fn remove_leaf(&mut self, coord: VoxelCoord) -> Result<bool> {
        if !self.contains(coord) {
            return Ok(false);
        }
        if !self.children_of(coord).is_empty() {
            return Err(Error::HasChildren(coord));
        }
        self.levels[coord.level as usize - 1].remove(&morton_key(coord));
        Ok(true)
    }

    /// Occupied child voxels at `level + 1` (at most 8).
    pub fn children_of(&self, coord: VoxelCoord) -> Vec<VoxelCoord> {
        if coord.level >= self.cfg.num_lods {
            return Vec::new();
        }
        (0..8u8)
            .map(|oct| child_coord(coord, oct))
            .filter(|&c| self.contains(c))
            .collect()
    }

    /// All anchors with level <= `l`, level-major then Morton-within-level:
    /// the canonical serialization order.
    pub fn lod_slice(&self, l: u32) -> Vec<&Anchor> {
        assert!(l >= 1 && l <= self.cfg.num_lods, "LoD {l} out of range");
        let mut out = Vec::new();
        for level in 1..=l {
            out.extend(self.level_anchors(level));
        }
        out
    }

    /// Check all store invariants; reports the first violating anchor.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        for level in 1..=self.cfg.num_lods {
            for (&key, anchor) in &self.levels[level as usize - 1] {
                let coord = anchor.coord;
                if coord.level != level || !coord.in_bounds(&self.cfg) {
                    return Err(Violation::CoordOutOfBounds { coord });
                }
                if morton_key(coord) != key {
                    return Err(Violation::KeyMismatch { coord });
                }
                if level >= 2 {
                    let parent = parent_coord(coord).expect("level >= 2");
                    if !self.contains(parent) {
                        return Err(Violation::MissingParent { coord, parent });
                    }
                }
            }
        }
        Ok(())
    }

    /// Line-oriented dump "level ix iy iz" in canonical order, for oracle
    /// diffing.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for anchor in self.lod_slice(self.cfg.num_lods) {
            let c = anchor.coord;
            writeln!(out, "{} {} {} {}", c.level, c.x, c.y, c.z).unwrap();
        }
        out
    }
}
