//! Progressive stream container: one header followed by per-LoD chunks.
//!
//! The header carries the octree configuration and everything the decoder
//! needs to rebuild probability models: either the hash grid plus MLP
//! weights (mlp mode) or a per-level static prior table (fitted mode).
//! Chunks then follow in level order. Level-1 coordinates are stored
//! verbatim; every deeper anchor costs 23 structural bits (20-bit index of
//! its parent in the previous level's canonical ordering plus the 3-bit
//! octant), so positions rebuild deterministically from the voxel grid.
//! Attribute symbols are range-coded with tables derived from the same
//! context on both sides, so a stream prefix of k chunks decodes to exactly
//! the LoD-k scene.

use std::io::Read;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::Serialize;

use crate::coder::{cdf_quantize, CdfTable, RangeDecoder, RangeEncoder, PROB_TOTAL};
use crate::entropy::{
    dequantize, fit_static_prior, predict_params, quantize, symbol_probability, EntropyParams,
    MlpWeights, P_MIN, SYMBOL_MAX, SYMBOL_MIN,
};
use crate::error::{Error, Result};
use crate::hash::{root_parent_context, HashGrid};
use crate::octree::OctreeStore;
use crate::scene::{
    child_coord, morton_key, normalized_position, octant_code, parent_coord, Anchor, AttributeSet,
    OctreeConfig, VoxelCoord,
};

pub const STREAM_MAGIC: &[u8; 4] = b"PGS1";
pub const STREAM_VERSION: u8 = 1;

/// Parent index width for structural records.
pub const PARENT_INDEX_BITS: u32 = 20;
pub const MAX_PARENT_INDEX: usize = (1 << PARENT_INDEX_BITS) - 1;

/// Symbol window: the coded alphabet covers this many model sigmas around
/// the predicted mean (plus one guard bin); everything outside escapes to a
/// raw 16-bit encoding. Matched data virtually never escapes.
const WINDOW_SIGMAS: f64 = 12.0;
const MAX_WINDOW_HALF: i64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    Fitted,
    Mlp,
}

/// Prior configuration handed to the encoder.
pub enum EncoderPrior<'a> {
    /// Per-level static Gaussians fitted to the scene and shipped in the
    /// header.
    Fitted,
    /// Hash-grid conditioned MLP prior; grid and weights ship in the header.
    Mlp { grid: &'a HashGrid, weights: &'a MlpWeights },
}

// ---------------------------------------------------------------------------
// Channel symbol coding
// ---------------------------------------------------------------------------

/// Frequency table for one scalar channel: a contiguous symbol window plus
/// a final escape slot.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    k_lo: i32,
    k_hi: i32,
    table: CdfTable,
}

/// Build the coding table for one channel from its Gaussian parameters.
/// Encoder and decoder call this with identical inputs.
pub fn channel_model(mu: f64, sigma: f64, q: f64) -> Result<ChannelModel> {
    let center = (mu / q).round().clamp(SYMBOL_MIN as f64, SYMBOL_MAX as f64) as i64;
    let half = ((WINDOW_SIGMAS * sigma / q).ceil() as i64 + 1).min(MAX_WINDOW_HALF).max(1);
    let k_lo = (center - half).max(SYMBOL_MIN as i64) as i32;
    let k_hi = (center + half).min(SYMBOL_MAX as i64) as i32;
    let mut probs = Vec::with_capacity((k_hi - k_lo + 2) as usize);
    for k in k_lo..=k_hi {
        probs.push(symbol_probability(k, mu, sigma, q));
    }
    probs.push(P_MIN); // escape
    Ok(ChannelModel { k_lo, k_hi, table: cdf_quantize(&probs)? })
}

/// Uniform byte table backing the escape path.
pub fn raw_byte_table() -> CdfTable {
    let cum: Vec<u32> = (0..=256u32).map(|i| i * (PROB_TOTAL / 256)).collect();
    CdfTable::from_cumulative(cum).expect("uniform byte table is valid")
}

/// Encode one quantized symbol under a channel model.
pub fn encode_symbol(enc: &mut RangeEncoder, raw: &CdfTable, model: &ChannelModel, k: i32) {
    if k >= model.k_lo && k <= model.k_hi {
        enc.encode((k - model.k_lo) as usize, &model.table);
    } else {
        let escape = (model.k_hi - model.k_lo + 1) as usize;
        enc.encode(escape, &model.table);
        let u = (k - SYMBOL_MIN) as u32;
        enc.encode((u >> 8) as usize, raw);
        enc.encode((u & 0xff) as usize, raw);
    }
}

/// Decode one quantized symbol; exact inverse of [`encode_symbol`].
pub fn decode_symbol(dec: &mut RangeDecoder, raw: &CdfTable, model: &ChannelModel) -> Result<i32> {
    let escape = (model.k_hi - model.k_lo + 1) as usize;
    let idx = dec.decode(&model.table)?;
    if idx < escape {
        Ok(model.k_lo + idx as i32)
    } else {
        let hi = dec.decode(raw)? as u32;
        let lo = dec.decode(raw)? as u32;
        Ok(((hi << 8) | lo) as i32 + SYMBOL_MIN)
    }
}

// ---------------------------------------------------------------------------
// Structural coding
// ---------------------------------------------------------------------------

struct BitWriter {
    buf: Vec<u8>,
    cur: u8,
    used: u8,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter { buf: Vec::new(), cur: 0, used: 0 }
    }

    /// MSB-first write of the low `count` bits of `value`.
    fn write_bits(&mut self, value: u32, count: u32) {
        for i in (0..count).rev() {
            self.cur = (self.cur << 1) | ((value >> i) & 1) as u8;
            self.used += 1;
            if self.used == 8 {
                self.buf.push(self.cur);
                self.cur = 0;
                self.used = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.buf.push(self.cur << (8 - self.used));
        }
        self.buf
    }
}

struct BitReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        BitReader { buf, pos: 0 }
    }

    fn read_bits(&mut self, count: u32) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..count {
            let byte = self.buf.get(self.pos / 8).ok_or(Error::Truncated("structural bits"))?;
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u32;
            self.pos += 1;
        }
        Ok(v)
    }
}

/// Structural block for a level >= 2: per anchor, 23 bits holding the
/// parent's index in the previous level's canonical ordering (20 bits) and
/// the octant code (3 bits), packed MSB-first.
pub fn encode_structural(coords: &[VoxelCoord], prev_level: &[VoxelCoord]) -> Result<Vec<u8>> {
    let index: std::collections::HashMap<VoxelCoord, usize> =
        prev_level.iter().copied().enumerate().map(|(i, c)| (c, i)).collect();
    let mut w = BitWriter::new();
    for &c in coords {
        let parent = parent_coord(c)?;
        let idx = *index.get(&parent).ok_or(Error::MissingParent { child: c, parent })?;
        if idx > MAX_PARENT_INDEX {
            return Err(Error::ParentIndexOverflow { level: c.level });
        }
        w.write_bits(idx as u32, PARENT_INDEX_BITS);
        w.write_bits(octant_code(c)? as u32, 3);
    }
    Ok(w.finish())
}

/// Inverse of [`encode_structural`] given the previous level's ordering.
pub fn decode_structural(
    bytes: &[u8],
    count: usize,
    prev_level: &[VoxelCoord],
) -> Result<Vec<VoxelCoord>> {
    let mut r = BitReader::new(bytes);
    let mut coords = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = r.read_bits(PARENT_INDEX_BITS)? as usize;
        let oct = r.read_bits(3)? as u8;
        let parent = *prev_level.get(idx).ok_or_else(|| {
            Error::format("structural block", format!("parent index {idx} out of range"))
        })?;
        coords.push(child_coord(parent, oct));
    }
    Ok(coords)
}

fn structural_len(level: u32, count: usize) -> usize {
    if level == 1 {
        count * 12
    } else {
        (count * 23).div_ceil(8)
    }
}

/// Verbatim level-1 coordinates: three u32 per root anchor.
pub fn encode_level1_coords(coords: &[VoxelCoord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(coords.len() * 12);
    for c in coords {
        out.write_u32::<LittleEndian>(c.x).unwrap();
        out.write_u32::<LittleEndian>(c.y).unwrap();
        out.write_u32::<LittleEndian>(c.z).unwrap();
    }
    out
}

pub fn decode_level1_coords(bytes: &[u8], count: usize) -> Result<Vec<VoxelCoord>> {
    let mut r = bytes;
    let mut coords = Vec::with_capacity(count);
    for _ in 0..count {
        let x = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("level-1 coords"))?;
        let y = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("level-1 coords"))?;
        let z = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("level-1 coords"))?;
        coords.push(VoxelCoord::new(x, y, z, 1));
    }
    Ok(coords)
}

// ---------------------------------------------------------------------------
// Header
// ---------------------------------------------------------------------------

/// Parsed stream header.
pub struct Header {
    pub cfg: OctreeConfig,
    pub mode: PriorMode,
    pub grid: Option<HashGrid>,
    pub weights: Option<MlpWeights>,
    /// Per-level params (index 0 = level 1) in fitted mode.
    pub fitted: Option<Vec<EntropyParams>>,
}

fn write_fitted_table(out: &mut Vec<u8>, priors: &[EntropyParams]) {
    for p in priors {
        for c in 0..p.channels() {
            out.write_f32::<LittleEndian>(p.mu[c]).unwrap();
            out.write_f32::<LittleEndian>(p.sigma[c]).unwrap();
            out.write_f32::<LittleEndian>(p.q[c]).unwrap();
        }
    }
}

fn read_fitted_table(r: &mut impl Read, cfg: &OctreeConfig) -> Result<Vec<EntropyParams>> {
    let e = |_| Error::Truncated("fitted prior table");
    let channels = cfg.channels();
    let mut priors = Vec::with_capacity(cfg.num_lods as usize);
    for _ in 0..cfg.num_lods {
        let mut p = EntropyParams {
            mu: Vec::with_capacity(channels),
            sigma: Vec::with_capacity(channels),
            q: Vec::with_capacity(channels),
        };
        for _ in 0..channels {
            p.mu.push(r.read_f32::<LittleEndian>().map_err(e)?);
            p.sigma.push(r.read_f32::<LittleEndian>().map_err(e)?);
            p.q.push(r.read_f32::<LittleEndian>().map_err(e)?);
        }
        priors.push(p);
    }
    Ok(priors)
}

struct HeaderLayout {
    /// Fixed fields: magic, version, config, mode byte, length prefixes.
    fixed_bytes: usize,
    grid_bytes: usize,
    weights_bytes: usize,
    fitted_table_bytes: usize,
    /// Total header span in the stream.
    total_bytes: usize,
}

fn parse_header(bytes: &[u8]) -> Result<(Header, HeaderLayout)> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated("stream magic"))?;
    if &magic != STREAM_MAGIC {
        return Err(Error::format("stream", "bad magic"));
    }
    let version = r.read_u8().map_err(|_| Error::Truncated("stream version"))?;
    if version != STREAM_VERSION {
        return Err(Error::format("stream", format!("unsupported version {version}")));
    }
    let cfg = OctreeConfig::read_binary(&mut r)?;
    let mode_byte = r.read_u8().map_err(|_| Error::Truncated("prior mode"))?;
    let mode = match mode_byte {
        0 => PriorMode::Fitted,
        1 => PriorMode::Mlp,
        other => return Err(Error::format("stream", format!("unknown prior mode {other}"))),
    };
    let fixed_end = bytes.len() - r.len();

    let mut header = Header { cfg, mode, grid: None, weights: None, fitted: None };
    let mut layout = HeaderLayout {
        fixed_bytes: fixed_end,
        grid_bytes: 0,
        weights_bytes: 0,
        fitted_table_bytes: 0,
        total_bytes: 0,
    };

    match mode {
        PriorMode::Mlp => {
            let grid_len =
                r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("grid block"))? as usize;
            if r.len() < grid_len {
                return Err(Error::Truncated("grid block"));
            }
            header.grid = Some(HashGrid::deserialize(&r[..grid_len])?);
            r = &r[grid_len..];
            let weights_len = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Truncated("weights block"))? as usize;
            if r.len() < weights_len {
                return Err(Error::Truncated("weights block"));
            }
            header.weights = Some(MlpWeights::deserialize(&r[..weights_len])?);
            r = &r[weights_len..];
            layout.grid_bytes = grid_len;
            layout.weights_bytes = weights_len;
            layout.fixed_bytes += 8; // two length prefixes
            let grid = header.grid.as_ref().unwrap();
            header
                .weights
                .as_ref()
                .unwrap()
                .validate(grid.cfg().context_dim(), header.cfg.channels())?;
        }
        PriorMode::Fitted => {
            let table_len = header.cfg.num_lods as usize * header.cfg.channels() * 12;
            header.fitted = Some(read_fitted_table(&mut r, &header.cfg)?);
            layout.fitted_table_bytes = table_len;
        }
    }
    layout.total_bytes = bytes.len() - r.len();
    Ok((header, layout))
}

// ---------------------------------------------------------------------------
// Scene encode
// ---------------------------------------------------------------------------

/// Entropy parameters an mlp-mode coder derives for one anchor; shared
/// verbatim by [`encode_scene`] and [`decode_prefix`].
pub fn mlp_params_for(
    coord: VoxelCoord,
    grid: &HashGrid,
    weights: &MlpWeights,
    cfg: &OctreeConfig,
) -> Result<EntropyParams> {
    let h = grid.query(normalized_position(cfg, coord))?;
    let h_parent = if coord.level == 1 {
        root_parent_context(grid.cfg())
    } else {
        grid.query(normalized_position(cfg, parent_coord(coord)?))?
    };
    predict_params(weights, &h, &h_parent, cfg)
}

/// Per-anchor entropy parameters for one level.
fn level_params(coords: &[VoxelCoord], header: &Header, level: u32) -> Result<Vec<EntropyParams>> {
    match header.mode {
        PriorMode::Fitted => {
            let priors = header.fitted.as_ref().expect("fitted mode carries priors");
            let p = priors[level as usize - 1].clone();
            Ok(vec![p; coords.len()])
        }
        PriorMode::Mlp => {
            let grid = header.grid.as_ref().expect("mlp mode carries a grid");
            let weights = header.weights.as_ref().expect("mlp mode carries weights");
            coords
                .par_iter()
                .map(|&c| mlp_params_for(c, grid, weights, &header.cfg))
                .collect()
        }
    }
}

/// Encode a scene into the progressive stream. Output is a deterministic
/// function of the store contents and the prior.
pub fn encode_scene(store: &OctreeStore, prior: EncoderPrior) -> Result<Vec<u8>> {
    let cfg = store.cfg().clone();
    cfg.validate()?;

    let header = match prior {
        EncoderPrior::Fitted => {
            let fitted: Vec<EntropyParams> = (1..=cfg.num_lods)
                .map(|l| fit_static_prior(store.level_anchors(l).map(|a| &a.attrs), &cfg))
                .collect();
            Header {
                cfg: cfg.clone(),
                mode: PriorMode::Fitted,
                grid: None,
                weights: None,
                fitted: Some(fitted),
            }
        }
        EncoderPrior::Mlp { grid, weights } => {
            weights.validate(grid.cfg().context_dim(), cfg.channels())?;
            Header {
                cfg: cfg.clone(),
                mode: PriorMode::Mlp,
                grid: Some(grid.clone()),
                weights: Some(weights.clone()),
                fitted: None,
            }
        }
    };

    let mut out = Vec::new();
    out.extend_from_slice(STREAM_MAGIC);
    out.write_u8(STREAM_VERSION).unwrap();
    cfg.write_binary(&mut out);
    match header.mode {
        PriorMode::Fitted => {
            out.write_u8(0).unwrap();
            write_fitted_table(&mut out, header.fitted.as_ref().unwrap());
        }
        PriorMode::Mlp => {
            out.write_u8(1).unwrap();
            let grid_block = header.grid.as_ref().unwrap().serialize();
            out.write_u32::<LittleEndian>(grid_block.len() as u32).unwrap();
            out.extend_from_slice(&grid_block);
            let weights_block = header.weights.as_ref().unwrap().serialize();
            out.write_u32::<LittleEndian>(weights_block.len() as u32).unwrap();
            out.extend_from_slice(&weights_block);
        }
    }

    let raw = raw_byte_table();
    let mut prev_coords: Vec<VoxelCoord> = Vec::new();
    for level in 1..=cfg.num_lods {
        let anchors: Vec<&Anchor> = store.level_anchors(level).collect();
        let coords: Vec<VoxelCoord> = anchors.iter().map(|a| a.coord).collect();

        out.write_u8(level as u8).unwrap();
        out.write_u32::<LittleEndian>(coords.len() as u32).unwrap();
        let structural = if level == 1 {
            encode_level1_coords(&coords)
        } else {
            encode_structural(&coords, &prev_coords)?
        };
        out.extend_from_slice(&structural);

        let payload = if coords.is_empty() {
            Vec::new()
        } else {
            let params = level_params(&coords, &header, level)?;
            let mut enc = RangeEncoder::new();
            for (anchor, p) in anchors.iter().zip(&params) {
                let qa = quantize(&anchor.attrs, p)?;
                for (c, &k) in qa.symbols.iter().enumerate() {
                    let model = channel_model(p.mu[c] as f64, p.sigma[c] as f64, p.q[c] as f64)?;
                    encode_symbol(&mut enc, &raw, &model, k);
                }
            }
            enc.finish()
        };
        out.write_u32::<LittleEndian>(payload.len() as u32).unwrap();
        out.extend_from_slice(&payload);
        prev_coords = coords;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Prefix decode
// ---------------------------------------------------------------------------

/// Decode the first `lod` chunks into a store with dequantized attributes.
pub fn decode_prefix(bytes: &[u8], lod: u32) -> Result<OctreeStore> {
    let (header, layout) = parse_header(bytes)?;
    if lod < 1 || lod > header.cfg.num_lods {
        return Err(Error::LevelOutOfRange { level: lod, max: header.cfg.num_lods });
    }
    let cfg = header.cfg.clone();
    let mut store = OctreeStore::new(cfg.clone())?;
    let raw = raw_byte_table();

    let mut offset = layout.total_bytes;
    let mut prev_coords: Vec<VoxelCoord> = Vec::new();
    for level in 1..=lod {
        let (coords, payload, next_offset) = read_chunk(bytes, offset, level, &prev_coords)?;

        if !coords.is_empty() {
            // Canonical Morton order within the level doubles as a
            // duplicate check.
            for w in coords.windows(2) {
                if morton_key(w[0]) >= morton_key(w[1]) {
                    return Err(Error::format(
                        "chunk",
                        format!("anchors out of canonical order at level {level}"),
                    ));
                }
            }
            let params = level_params(&coords, &header, level)?;
            let mut dec = RangeDecoder::new(payload)?;
            for (&coord, p) in coords.iter().zip(&params) {
                let mut flat = Vec::with_capacity(cfg.channels());
                for c in 0..cfg.channels() {
                    let model = channel_model(p.mu[c] as f64, p.sigma[c] as f64, p.q[c] as f64)?;
                    let k = decode_symbol(&mut dec, &raw, &model)?;
                    flat.push(dequantize(k, p.q[c]));
                }
                let attrs = AttributeSet::from_flat(&cfg, &flat)?;
                if !store.insert_anchor(Anchor { coord, attrs })? {
                    return Err(Error::DuplicateAnchor(coord));
                }
            }
        }
        offset = next_offset;
        prev_coords = coords;
    }

    store.validate().map_err(|v| Error::format("decoded scene", v.to_string()))?;
    Ok(store)
}

/// Read one chunk starting at `offset`; returns coords, the payload slice
/// and the offset one past the chunk.
fn read_chunk<'a>(
    bytes: &'a [u8],
    offset: usize,
    expected_level: u32,
    prev_coords: &[VoxelCoord],
) -> Result<(Vec<VoxelCoord>, &'a [u8], usize)> {
    let mut r = bytes.get(offset..).ok_or(Error::Truncated("chunk header"))?;
    let level = r.read_u8().map_err(|_| Error::Truncated("chunk header"))? as u32;
    if level != expected_level {
        return Err(Error::format(
            "chunk",
            format!("expected level {expected_level}, found {level}"),
        ));
    }
    let count =
        r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("chunk header"))? as usize;
    let s_len = structural_len(level, count);
    if r.len() < s_len {
        return Err(Error::Truncated("structural block"));
    }
    let structural = &r[..s_len];
    r = &r[s_len..];
    let coords = if level == 1 {
        decode_level1_coords(structural, count)?
    } else {
        decode_structural(structural, count, prev_coords)?
    };
    let mut rr = r;
    let payload_len = rr
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::Truncated("chunk payload length"))? as usize;
    if rr.len() < payload_len {
        return Err(Error::Truncated("chunk payload"));
    }
    let payload = &rr[..payload_len];
    let consumed = 1 + 4 + s_len + 4 + payload_len;
    Ok((coords, payload, offset + consumed))
}

// ---------------------------------------------------------------------------
// Inspection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ChunkReport {
    pub level: u32,
    pub anchors: usize,
    /// Level/count/length bookkeeping bytes.
    pub meta_bytes: usize,
    pub structural_bytes: usize,
    pub attribute_bytes: usize,
}

impl ChunkReport {
    pub fn total_bytes(&self) -> usize {
        self.meta_bytes + self.structural_bytes + self.attribute_bytes
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InspectReport {
    pub total_bytes: usize,
    pub prior_mode: PriorMode,
    /// Fixed header fields: magic, version, config and block length
    /// prefixes.
    pub header_bytes: usize,
    /// Exact size of the embedded hash-grid block (0 in fitted mode).
    pub grid_bytes: usize,
    /// Exact size of the embedded MLP weights block (0 in fitted mode).
    pub weights_bytes: usize,
    /// Fitted prior table size (0 in mlp mode).
    pub fitted_table_bytes: usize,
    pub chunks: Vec<ChunkReport>,
}

impl InspectReport {
    pub fn header_total(&self) -> usize {
        self.header_bytes + self.grid_bytes + self.weights_bytes + self.fitted_table_bytes
    }
}

/// Byte accounting of a stream: per-component header costs and per-chunk
/// structural/attribute splits. The components always sum to the stream
/// length exactly.
pub fn inspect(bytes: &[u8]) -> Result<InspectReport> {
    let (header, layout) = parse_header(bytes)?;
    let mut report = InspectReport {
        total_bytes: bytes.len(),
        prior_mode: header.mode,
        header_bytes: layout.fixed_bytes,
        grid_bytes: layout.grid_bytes,
        weights_bytes: layout.weights_bytes,
        fitted_table_bytes: layout.fitted_table_bytes,
        chunks: Vec::new(),
    };
    let mut offset = layout.total_bytes;
    for level in 1..=header.cfg.num_lods {
        let mut r = bytes.get(offset..).ok_or(Error::Truncated("chunk header"))?;
        let lv = r.read_u8().map_err(|_| Error::Truncated("chunk header"))? as u32;
        if lv != level {
            return Err(Error::format("chunk", format!("expected level {level}, found {lv}")));
        }
        let count =
            r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("chunk header"))? as usize;
        let s_len = structural_len(level, count);
        if r.len() < s_len + 4 {
            return Err(Error::Truncated("chunk"));
        }
        r = &r[s_len..];
        let mut rr = r;
        let payload_len = rr
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Truncated("chunk payload length"))? as usize;
        if rr.len() < payload_len {
            return Err(Error::Truncated("chunk payload"));
        }
        report.chunks.push(ChunkReport {
            level,
            anchors: count,
            meta_bytes: 1 + 4 + 4,
            structural_bytes: s_len,
            attribute_bytes: payload_len,
        });
        offset += 1 + 4 + s_len + 4 + payload_len;
    }
    if offset != bytes.len() {
        return Err(Error::format(
            "stream",
            format!("{} trailing bytes after the last chunk", bytes.len() - offset),
        ));
    }
    Ok(report)
}
