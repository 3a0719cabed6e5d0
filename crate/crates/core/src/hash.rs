//! Binarized multi-resolution hash grid providing per-anchor context
//! features.
//!
//! The grid carries a 3D branch (trilinear interpolation over spatially
//! hashed corners) and a 2D branch (bilinear interpolation averaged over the
//! three axis-aligned projections). Every table entry is a sign in {-1, +1},
//! so the whole grid serializes into one bit per entry.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"PGH1";

const PRIME_Y: u64 = 2_654_435_761;
const PRIME_Z: u64 = 805_459_861;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashGridConfig {
    pub levels_3d: Vec<u32>,
    pub levels_2d: Vec<u32>,
    pub feature_dim: usize,
    /// Entries per level table; must be a power of two.
    pub table_size: usize,
}

fn geometric_levels(count: usize, lo: f64, hi: f64) -> Vec<u32> {
    (0..count)
        .map(|i| {
            let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            (lo * (hi / lo).powf(t)).round() as u32
        })
        .collect()
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig {
            levels_3d: geometric_levels(12, 16.0, 512.0),
            levels_2d: geometric_levels(4, 128.0, 1024.0),
            feature_dim: 4,
            table_size: 1 << 13,
        }
    }
}

impl HashGridConfig {
    /// Output dimension of a query: one feature block per level of either
    /// branch (64 at defaults).
    pub fn context_dim(&self) -> usize {
        (self.levels_3d.len() + self.levels_2d.len()) * self.feature_dim
    }

    pub fn num_levels(&self) -> usize {
        self.levels_3d.len() + self.levels_2d.len()
    }

    /// Total sign entries across all level tables.
    pub fn total_entries(&self) -> usize {
        self.num_levels() * self.table_size * self.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels_3d.is_empty() && self.levels_2d.is_empty() {
            return Err(Error::InvalidConfig("hash grid needs at least one level".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("hash feature_dim must be >= 1".into()));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::InvalidConfig("hash table_size must be a power of two".into()));
        }
        if self.levels_3d.iter().chain(&self.levels_2d).any(|&r| r == 0) {
            return Err(Error::InvalidConfig("hash resolutions must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid {
    cfg: HashGridConfig,
    /// One table per level (3D levels first), `table_size * feature_dim`
    /// signs each, stored as +1 / -1.
    tables: Vec<Vec<i8>>,
}

impl HashGrid {
    pub fn new(cfg: HashGridConfig, tables: Vec<Vec<i8>>) -> Result<Self> {
        cfg.validate()?;
        if tables.len() != cfg.num_levels() {
            return Err(Error::format("hash grid", "table count does not match levels"));
        }
        for t in &tables {
            if t.len() != cfg.table_size * cfg.feature_dim {
                return Err(Error::format("hash grid", "table length mismatch"));
            }
            if t.iter().any(|&e| e != 1 && e != -1) {
                return Err(Error::format("hash grid", "entries must be +1 or -1"));
            }
        }
        Ok(HashGrid { cfg, tables })
    }

    /// Deterministically seeded random signs; the codec works with any valid
    /// grid contents.
    pub fn seeded(cfg: HashGridConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let tables = (0..cfg.num_levels())
            .map(|_| {
                (0..cfg.table_size * cfg.feature_dim)
                    .map(|_| if rng.random::<bool>() { 1i8 } else { -1i8 })
                    .collect()
            })
            .collect();
        HashGrid::new(cfg, tables)
    }

    pub fn cfg(&self) -> &HashGridConfig {
        &self.cfg
    }

    fn entry(&self, level: usize, slot: usize, feature: usize) -> f32 {
        self.tables[level][slot * self.cfg.feature_dim + feature] as f32
    }

    fn hash3(&self, x: u64, y: u64, z: u64) -> usize {
        let h = x ^ y.wrapping_mul(PRIME_Y) ^ z.wrapping_mul(PRIME_Z);
        (h as usize) & (self.cfg.table_size - 1)
    }

    fn hash2(&self, u: u64, v: u64) -> usize {
        let h = u ^ v.wrapping_mul(PRIME_Y);
        (h as usize) & (self.cfg.table_size - 1)
    }

    /// Context features at a position inside the unit cube.
    pub fn query(&self, position: [f64; 3]) -> Result<Vec<f32>> {
        for &p in &position {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::OutsideUnitCube(position[0], position[1], position[2]));
            }
        }
        let mut out = Vec::with_capacity(self.cfg.context_dim());
        for (li, &res) in self.cfg.levels_3d.iter().enumerate() {
            let (cell, frac) = cell_and_frac(position, res);
            for f in 0..self.cfg.feature_dim {
                let mut acc = 0.0f32;
                for corner in 0..8u32 {
                    let dx = (corner & 1) as u64;
                    let dy = ((corner >> 1) & 1) as u64;
                    let dz = ((corner >> 2) & 1) as u64;
                    let w = axis_weight(frac[0], dx)
                        * axis_weight(frac[1], dy)
                        * axis_weight(frac[2], dz);
                    let slot = self.hash3(cell[0] + dx, cell[1] + dy, cell[2] + dz);
                    acc += w * self.entry(li, slot, f);
                }
                out.push(acc);
            }
        }
        for (i, &res) in self.cfg.levels_2d.iter().enumerate() {
            let li = self.cfg.levels_3d.len() + i;
            let (cell, frac) = cell_and_frac(position, res);
            // Average of the xy, xz and yz projections.
            for f in 0..self.cfg.feature_dim {
                let mut acc = 0.0f32;
                for &(a, b) in &[(0usize, 1usize), (0, 2), (1, 2)] {
                    for corner in 0..4u32 {
                        let du = (corner & 1) as u64;
                        let dv = ((corner >> 1) & 1) as u64;
                        let w = axis_weight(frac[a], du) * axis_weight(frac[b], dv);
                        let slot = self.hash2(cell[a] + du, cell[b] + dv);
                        acc += w * self.entry(li, slot, f);
                    }
                }
                out.push(acc / 3.0);
            }
        }
        Ok(out)
    }

    /// Bit cost of the grid under the empirical Bernoulli model:
    /// `M+ * -log2(f+) + M- * -log2(1 - f+)`, with the `+1` frequency
    /// clamped away from 0 and 1.
    pub fn hash_bit_cost(&self) -> f64 {
        let m_pos: u64 = self
            .tables
            .iter()
            .map(|t| t.iter().filter(|&&e| e == 1).count() as u64)
            .sum();
        let m_total = self.cfg.total_entries() as u64;
        let m_neg = m_total - m_pos;
        let eps = (2f64).powi(-16);
        let f_pos = (m_pos as f64 / m_total as f64).clamp(eps, 1.0 - eps);
        m_pos as f64 * -f_pos.log2() + m_neg as f64 * -(1.0 - f_pos).log2()
    }

    /// Serialize as magic, config block, then one bit per entry (+1 -> 1)
    /// packed MSB-first in level/slot/feature order.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GRID_MAGIC);
        out.write_u32::<LittleEndian>(self.cfg.table_size as u32).unwrap();
        out.write_u8(self.cfg.feature_dim as u8).unwrap();
        out.write_u8(self.cfg.levels_3d.len() as u8).unwrap();
        for &r in &self.cfg.levels_3d {
            out.write_u32::<LittleEndian>(r).unwrap();
        }
        out.write_u8(self.cfg.levels_2d.len() as u8).unwrap();
        for &r in &self.cfg.levels_2d {
            out.write_u32::<LittleEndian>(r).unwrap();
        }
        let mut byte = 0u8;
        let mut used = 0u8;
        for table in &self.tables {
            for &e in table {
                byte = (byte << 1) | u8::from(e == 1);
                used += 1;
                if used == 8 {
                    out.push(byte);
                    byte = 0;
                    used = 0;
                }
            }
        }
        if used > 0 {
            out.push(byte << (8 - used));
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Truncated("hash grid magic"))?;
        if &magic != GRID_MAGIC {
            return Err(Error::format("hash grid", "bad magic"));
        }
        let table_size = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("hash grid config"))? as usize;
        let feature_dim = r.read_u8().map_err(|_| Error::Truncated("hash grid config"))? as usize;
        let n3 = r.read_u8().map_err(|_| Error::Truncated("hash grid config"))? as usize;
        let mut levels_3d = Vec::with_capacity(n3);
        for _ in 0..n3 {
            levels_3d.push(r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("hash grid config"))?);
        }
        let n2 = r.read_u8().map_err(|_| Error::Truncated("hash grid config"))? as usize;
        let mut levels_2d = Vec::with_capacity(n2);
        for _ in 0..n2 {
            levels_2d.push(r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("hash grid config"))?);
        }
        let cfg = HashGridConfig { levels_3d, levels_2d, feature_dim, table_size };
        cfg.validate()?;

        let total = cfg.total_entries();
        let mut packed = vec![0u8; total.div_ceil(8)];
        r.read_exact(&mut packed).map_err(|_| Error::Truncated("hash grid bits"))?;
        let mut tables = Vec::with_capacity(cfg.num_levels());
        let per_table = cfg.table_size * cfg.feature_dim;
        let mut idx = 0usize;
        for _ in 0..cfg.num_levels() {
            let mut t = Vec::with_capacity(per_table);
            for _ in 0..per_table {
                let bit = (packed[idx / 8] >> (7 - idx % 8)) & 1;
                t.push(if bit == 1 { 1i8 } else { -1i8 });
                idx += 1;
            }
            tables.push(t);
        }
        HashGrid::new(cfg, tables)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.serialize())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        HashGrid::deserialize(&bytes)
    }
}

/// Parent context of a root anchor: all zeros.
pub fn root_parent_context(cfg: &HashGridConfig) -> Vec<f32> {
    vec![0.0; cfg.context_dim()]
}

fn cell_and_frac(position: [f64; 3], resolution: u32) -> ([u64; 3], [f32; 3]) {
    let mut cell = [0u64; 3];
    let mut frac = [0f32; 3];
    for a in 0..3 {
        let scaled = position[a] * resolution as f64;
        let base = scaled.floor();
        cell[a] = base as u64;
        frac[a] = (scaled - base) as f32;
    }
    (cell, frac)
}

fn axis_weight(frac: f32, side: u64) -> f32 {
    if side == 1 {
        frac
    } else {
        1.0 - frac
    }
}
