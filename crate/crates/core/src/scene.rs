//! Core domain types and deterministic voxel arithmetic.
//!
//! The scene lives inside a single bounding cube `[bbox_min, bbox_min + v_B]^3`.
//! Level `l` (1-based) divides the cube into `2^(l_b + l)` voxels per axis,
//! so voxel sizes halve exactly per level. Anchors sit on voxel corners:
//! the canonical position of a coordinate is `bbox_min + coord * v_l`, which
//! makes `voxelize(position, l)` an exact fixed point of anchor coordinates.

use std::fmt;
use std::io::Read;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Octree and attribute-layout configuration shared by every module.
#[derive(Debug, Clone, PartialEq)]
pub struct OctreeConfig {
    /// Base depth `l_b`; level `l` has `2^(l_b + l)` voxels per axis.
    pub base_depth: u32,
    /// Number of LoD levels `L` (levels are 1-based, `1..=L`).
    pub num_lods: u32,
    /// Minimum corner of the bounding cube, in scene units.
    pub bbox_min: [f64; 3],
    /// Side length `v_B` of the bounding cube, in scene units.
    pub bbox_side: f64,
    /// Feature channels per anchor.
    pub dim_f: usize,
    /// Scaling channels per anchor.
    pub dim_s: usize,
    /// Offset rows per anchor (each row is a 3-vector).
    pub dim_o: usize,
    /// Base quantization steps for the f / s / o channel groups.
    pub q0_f: f32,
    pub q0_s: f32,
    pub q0_o: f32,
}

impl Default for OctreeConfig {
    fn default() -> Self {
        OctreeConfig {
            base_depth: 11,
            num_lods: 5,
            bbox_min: [0.0; 3],
            bbox_side: 1.0,
            dim_f: 32,
            dim_s: 6,
            dim_o: 10,
            q0_f: 1.0,
            q0_s: 0.001,
            q0_o: 0.2,
        }
    }
}

impl OctreeConfig {
    /// Total scalar channel count `C = D_f + D_s + 3*D_o` (68 at defaults).
    pub fn channels(&self) -> usize {
        self.dim_f + self.dim_s + 3 * self.dim_o
    }

    /// Base quantization step for a flattened channel index.
    ///
    /// Channel layout: `[0, D_f)` features, `[D_f, D_f+D_s)` scalings, then
    /// offset rows flattened row-major.
    pub fn q0_for_channel(&self, channel: usize) -> f32 {
        if channel < self.dim_f {
            self.q0_f
        } else if channel < self.dim_f + self.dim_s {
            self.q0_s
        } else {
            self.q0_o
        }
    }

    /// Voxels per axis at level `l`.
    pub fn grid_extent(&self, level: u32) -> u64 {
        1u64 << (self.base_depth + level)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_lods < 1 {
            return Err(Error::InvalidConfig("num_lods must be >= 1".into()));
        }
        if !(self.bbox_side > 0.0) {
            return Err(Error::InvalidConfig("bbox_side must be positive".into()));
        }
        // Morton keys interleave 3 axes into a u64.
        if self.base_depth + self.num_lods > 21 {
            return Err(Error::InvalidConfig(
                "base_depth + num_lods must be <= 21 so voxel indices fit a 64-bit Morton key"
                    .into(),
            ));
        }
        if self.dim_f == 0 || self.dim_s == 0 || self.dim_o == 0 {
            return Err(Error::InvalidConfig("attribute dims must be >= 1".into()));
        }
        for (name, q) in [("q0_f", self.q0_f), ("q0_s", self.q0_s), ("q0_o", self.q0_o)] {
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Fixed binary layout shared by the stream header and the scene file:
    /// l_b u8, L u8, bbox_min 3xf64, v_B f64, dims 3xu16, Q0 3xf32, all
    /// little-endian.
    pub fn write_binary(&self, out: &mut Vec<u8>) {
        out.write_u8(self.base_depth as u8).unwrap();
        out.write_u8(self.num_lods as u8).unwrap();
        for a in 0..3 {
            out.write_f64::<LittleEndian>(self.bbox_min[a]).unwrap();
        }
        out.write_f64::<LittleEndian>(self.bbox_side).unwrap();
        out.write_u16::<LittleEndian>(self.dim_f as u16).unwrap();
        out.write_u16::<LittleEndian>(self.dim_s as u16).unwrap();
        out.write_u16::<LittleEndian>(self.dim_o as u16).unwrap();
        out.write_f32::<LittleEndian>(self.q0_f).unwrap();
        out.write_f32::<LittleEndian>(self.q0_s).unwrap();
        out.write_f32::<LittleEndian>(self.q0_o).unwrap();
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let e = |_| Error::Truncated("octree config");
        let base_depth = r.read_u8().map_err(e)? as u32;
        let num_lods = r.read_u8().map_err(e)? as u32;
        let mut bbox_min = [0f64; 3];
        for a in &mut bbox_min {
            *a = r.read_f64::<LittleEndian>().map_err(e)?;
        }
        let bbox_side = r.read_f64::<LittleEndian>().map_err(e)?;
        let dim_f = r.read_u16::<LittleEndian>().map_err(e)? as usize;
        let dim_s = r.read_u16::<LittleEndian>().map_err(e)? as usize;
        let dim_o = r.read_u16::<LittleEndian>().map_err(e)? as usize;
        let q0_f = r.read_f32::<LittleEndian>().map_err(e)?;
        let q0_s = r.read_f32::<LittleEndian>().map_err(e)?;
        let q0_o = r.read_f32::<LittleEndian>().map_err(e)?;
        let cfg = OctreeConfig {
            base_depth,
            num_lods,
            bbox_min,
            bbox_side,
            dim_f,
            dim_s,
            dim_o,
            q0_f,
            q0_s,
            q0_o,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Integer voxel coordinate at a given level. Each axis lies in
/// `[0, 2^(l_b + level))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelCoord {
    pub x: u32,
    pub y: u32,
    pub z: u32,
    pub level: u32,
}

impl fmt::Display for VoxelCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(level {}: {}, {}, {})", self.level, self.x, self.y, self.z)
    }
}

impl VoxelCoord {
    pub fn new(x: u32, y: u32, z: u32, level: u32) -> Self {
        VoxelCoord { x, y, z, level }
    }

    pub fn in_bounds(&self, cfg: &OctreeConfig) -> bool {
        if self.level < 1 || self.level > cfg.num_lods {
            return false;
        }
        let extent = cfg.grid_extent(self.level);
        (self.x as u64) < extent && (self.y as u64) < extent && (self.z as u64) < extent
    }
}

/// Per-anchor attribute block: feature vector `f`, scaling vector `s`, and
/// `D_o` offset rows `o` in scene units.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSet {
    pub f: Vec<f32>,
    pub s: Vec<f32>,
    pub o: Vec<[f32; 3]>,
}

impl AttributeSet {
    pub fn zeros(cfg: &OctreeConfig) -> Self {
        AttributeSet {
            f: vec![0.0; cfg.dim_f],
            s: vec![0.0; cfg.dim_s],
            o: vec![[0.0; 3]; cfg.dim_o],
        }
    }

    /// Flattened scalar channels in canonical order: f, s, then offset rows
    /// row-major. Length equals `cfg.channels()`.
    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.f.len() + self.s.len() + 3 * self.o.len());
        out.extend_from_slice(&self.f);
        out.extend_from_slice(&self.s);
        for row in &self.o {
            out.extend_from_slice(row);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(cfg: &OctreeConfig, flat: &[f32]) -> Result<Self> {
        if flat.len() != cfg.channels() {
            return Err(Error::format(
                "attribute block",
                format!("expected {} channels, got {}", cfg.channels(), flat.len()),
            ));
        }
        let f = flat[..cfg.dim_f].to_vec();
        let s = flat[cfg.dim_f..cfg.dim_f + cfg.dim_s].to_vec();
        let mut o = Vec::with_capacity(cfg.dim_o);
        for row in flat[cfg.dim_f + cfg.dim_s..].chunks_exact(3) {
            o.push([row[0], row[1], row[2]]);
        }
        Ok(AttributeSet { f, s, o })
    }
}

/// An octree node: voxel coordinate plus attribute block.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub coord: VoxelCoord,
    pub attrs: AttributeSet,
}

impl Anchor {
    pub fn zeroed(cfg: &OctreeConfig, coord: VoxelCoord) -> Self {
        Anchor { coord, attrs: AttributeSet::zeros(cfg) }
    }
}

/// Raw input points in scene units.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

/// Per-anchor optimizer statistics, aligned to the store's canonical
/// (level-major, Morton-within-level) anchor order. Gradient magnitudes are
/// one per offset row, pre-averaged over the stats producer's window.
#[derive(Debug, Clone, Default)]
pub struct GaussianStats {
    pub anchors: Vec<AnchorStats>,
}

#[derive(Debug, Clone)]
pub struct AnchorStats {
    pub grad_mags: Vec<f32>,
    pub opacity: f32,
}

/// Voxel edge length at level `l`: `v_B / 2^(l_b + l)`.
pub fn voxel_size(cfg: &OctreeConfig, level: u32) -> Result<f64> {
    if level < 1 || level > cfg.num_lods {
        return Err(Error::LevelOutOfRange { level, max: cfg.num_lods });
    }
    Ok(cfg.bbox_side / (1u64 << (cfg.base_depth + level)) as f64)
}

/// Estimate a bounding cube for a point cloud.
///
/// The cube side is the largest per-axis extent inflated by `2 * margin`,
/// and the minimum corner backs off by `margin * extent` per axis, so every
/// point falls strictly inside the cube whenever `margin > 0`. Degenerate
/// clouds (all points identical) fall back to a unit extent.
pub fn estimate_bbox(pc: &PointCloud, margin: f64) -> Result<([f64; 3], f64)> {
    if pc.points.is_empty() {
        return Err(Error::EmptyPointCloud);
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for p in &pc.points {
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let mut extent: f64 = 0.0;
    for a in 0..3 {
        extent = extent.max(max[a] - min[a]);
    }
    if extent == 0.0 {
        extent = 1.0;
    }
    let bbox_min = [
        min[0] - margin * extent,
        min[1] - margin * extent,
        min[2] - margin * extent,
    ];
    Ok((bbox_min, extent * (1.0 + 2.0 * margin)))
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Snap a position to the voxel grid of level `l`.
///
/// Per-axis index is `round((p - bbox_min) / v_l)` with ties toward +inf,
/// clamped to the level's grid. Positions outside the bounding cube are
/// rejected.
pub fn voxelize(cfg: &OctreeConfig, position: [f64; 3], level: u32) -> Result<VoxelCoord> {
    let v = voxel_size(cfg, level)?;
    let extent = cfg.grid_extent(level);
    let mut idx = [0u32; 3];
    for a in 0..3 {
        let rel = position[a] - cfg.bbox_min[a];
        if rel < 0.0 || rel > cfg.bbox_side {
            return Err(Error::OutsideBounds(position[0], position[1], position[2]));
        }
        let i = round_half_up(rel / v);
        idx[a] = (i as u64).min(extent - 1) as u32;
    }
    Ok(VoxelCoord::new(idx[0], idx[1], idx[2], level))
}

/// Canonical continuous position of a coordinate: the voxel corner
/// `bbox_min + coord * v_l`.
pub fn canonical_position(cfg: &OctreeConfig, coord: VoxelCoord) -> [f64; 3] {
    let v = cfg.bbox_side / cfg.grid_extent(coord.level) as f64;
    [
        cfg.bbox_min[0] + coord.x as f64 * v,
        cfg.bbox_min[1] + coord.y as f64 * v,
        cfg.bbox_min[2] + coord.z as f64 * v,
    ]
}

/// Canonical position normalized to the unit cube, `(pos - bbox_min) / v_B`.
///
/// Computed as `coord / 2^(l_b + l)` per axis, which is exact in f64; the
/// encoder and decoder share this function verbatim.
pub fn normalized_position(cfg: &OctreeConfig, coord: VoxelCoord) -> [f64; 3] {
    let extent = cfg.grid_extent(coord.level) as f64;
    [coord.x as f64 / extent, coord.y as f64 / extent, coord.z as f64 / extent]
}

/// Parent voxel one level up: per-axis `floor(index / 2)`.
pub fn parent_coord(c: VoxelCoord) -> Result<VoxelCoord> {
    if c.level < 2 {
        return Err(Error::NoParentAtRoot);
    }
    Ok(VoxelCoord::new(c.x / 2, c.y / 2, c.z / 2, c.level - 1))
}

/// 3-bit octant of a coordinate within its parent:
/// bit0 = x parity, bit1 = y parity, bit2 = z parity.
pub fn octant_code(c: VoxelCoord) -> Result<u8> {
    if c.level < 2 {
        return Err(Error::NoParentAtRoot);
    }
    Ok(((c.x & 1) | ((c.y & 1) << 1) | ((c.z & 1) << 2)) as u8)
}

/// Reconstruct a child coordinate from its parent and octant code.
pub fn child_coord(parent: VoxelCoord, octant: u8) -> VoxelCoord {
    VoxelCoord::new(
        parent.x * 2 + (octant & 1) as u32,
        parent.y * 2 + ((octant >> 1) & 1) as u32,
        parent.z * 2 + ((octant >> 2) & 1) as u32,
        parent.level + 1,
    )
}

fn spread_bits(mut w: u64) -> u64 {
    w &= 0x001f_ffff;
    w = (w | w << 32) & 0x001f_0000_0000_ffff;
    w = (w | w << 16) & 0x001f_0000_ff00_00ff;
    w = (w | w << 8) & 0x100f_00f0_0f00_f00f;
    w = (w | w << 4) & 0x10c3_0c30_c30c_30c3;
    w = (w | w << 2) & 0x1249_2492_4924_9249;
    w
}

/// Morton (z-order) key of a coordinate; the canonical within-level ordering.
/// x occupies the least significant interleave slot, then y, then z.
pub fn morton_key(c: VoxelCoord) -> u64 {
    spread_bits(c.x as u64) | spread_bits(c.y as u64) << 1 | spread_bits(c.z as u64) << 2
}

/// Gaussian cluster centers of an anchor: canonical position shifted by each
/// raw offset row.
pub fn expand_gaussians(cfg: &OctreeConfig, anchor: &Anchor) -> Vec<[f64; 3]> {
    let p = canonical_position(cfg, anchor.coord);
    anchor
        .attrs
        .o
        .iter()
        .map(|o| [p[0] + o[0] as f64, p[1] + o[1] as f64, p[2] + o[2] as f64])
        .collect()
}
