//! File formats: point-cloud input (PLY and raw), gradient/opacity stats,
//! and the scene intermediate that lets build, adjust, encode and analyze
//! compose as a pipeline.
//!
//! Scene file layout (magic `PGA1`, version 1, little-endian): the shared
//! config block, an anchor count u64, then per anchor in canonical order a
//! level u8, three u32 voxel indices and the flattened f32 attribute block.

use std::fs;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::octree::OctreeStore;
use crate::scene::{
    Anchor, AnchorStats, AttributeSet, GaussianStats, OctreeConfig, PointCloud, VoxelCoord,
};

pub const SCENE_MAGIC: &[u8; 4] = b"PGA1";
pub const SCENE_VERSION: u8 = 1;

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(token: &str) -> Result<Self> {
        Ok(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            other => return Err(Error::format("ply", format!("unknown type {other}"))),
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_f64(self, r: &mut &[u8]) -> Result<f64> {
        let e = |_| Error::Truncated("ply payload");
        Ok(match self {
            ScalarType::I8 => r.read_i8().map_err(e)? as f64,
            ScalarType::U8 => r.read_u8().map_err(e)? as f64,
            ScalarType::I16 => r.read_i16::<LittleEndian>().map_err(e)? as f64,
            ScalarType::U16 => r.read_u16::<LittleEndian>().map_err(e)? as f64,
            ScalarType::I32 => r.read_i32::<LittleEndian>().map_err(e)? as f64,
            ScalarType::U32 => r.read_u32::<LittleEndian>().map_err(e)? as f64,
            ScalarType::F32 => r.read_f32::<LittleEndian>().map_err(e)? as f64,
            ScalarType::F64 => r.read_f64::<LittleEndian>().map_err(e)?,
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { count_ty: ScalarType, item_ty: ScalarType },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Parse a PLY point cloud, ASCII or binary-little-endian, extracting the
/// x/y/z vertex properties and skipping everything else.
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    // Header is ASCII lines up to and including "end_header".
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::Truncated("ply header"));
        }
        let line = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::format("ply", "non-UTF8 header"))?
            .trim_end_matches('\r')
            .trim()
            .to_string();
        pos += 1;
        let done = line == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(Error::format("ply", "missing ply magic"));
    }

    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in &lines[1..] {
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                format = Some(match tokens.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => {
                        return Err(Error::format("ply", format!("unsupported format {other}")))
                    }
                    None => return Err(Error::format("ply", "format line lacks a type")),
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| Error::format("ply", "element lacks a name"))?
                    .to_string();
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::format("ply", "element lacks a count"))?;
                elements.push(PlyElement { name, count, properties: Vec::new() });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::format("ply", "property before any element"))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| Error::format("ply", "property lacks a type"))?;
                if first == "list" {
                    let count_ty = ScalarType::parse(
                        tokens.next().ok_or_else(|| Error::format("ply", "list lacks count type"))?,
                    )?;
                    let item_ty = ScalarType::parse(
                        tokens.next().ok_or_else(|| Error::format("ply", "list lacks item type"))?,
                    )?;
                    element.properties.push(Property::List { count_ty, item_ty });
                } else {
                    let ty = ScalarType::parse(first)?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| Error::format("ply", "property lacks a name"))?
                        .to_string();
                    element.properties.push(Property::Scalar { name, ty });
                }
            }
            Some("comment") | Some("obj_info") | Some("end_header") | None => {}
            Some(other) => {
                return Err(Error::format("ply", format!("unexpected header token {other}")))
            }
        }
    }
    let format = format.ok_or_else(|| Error::format("ply", "missing format line"))?;

    let vertex = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| Error::format("ply", "no vertex element"))?;
    let mut xyz_idx = [usize::MAX; 3];
    for (i, p) in vertex.properties.iter().enumerate() {
        if let Property::Scalar { name, ty } = p {
            let axis = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            if !matches!(ty, ScalarType::F32 | ScalarType::F64) {
                return Err(Error::format("ply", "x/y/z must be float properties"));
            }
            xyz_idx[axis] = i;
        }
    }
    if xyz_idx.contains(&usize::MAX) {
        return Err(Error::format("ply", "vertex element lacks x/y/z"));
    }

    let mut points = Vec::new();
    match format {
        PlyFormat::Ascii => {
            let body = std::str::from_utf8(&bytes[pos..])
                .map_err(|_| Error::format("ply", "non-UTF8 ascii body"))?;
            let mut records = body.lines().filter(|l| !l.trim().is_empty());
            for element in &elements {
                for _ in 0..element.count {
                    let line = records.next().ok_or(Error::Truncated("ply records"))?;
                    if element.name != "vertex" {
                        continue;
                    }
                    let mut tokens = line.split_whitespace();
                    let mut p = [0f64; 3];
                    let mut found = 0;
                    for (i, prop) in element.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar { .. } => {
                                let tok = tokens
                                    .next()
                                    .ok_or_else(|| Error::format("ply", "short vertex record"))?;
                                if let Some(axis) = xyz_idx.iter().position(|&j| j == i) {
                                    p[axis] = tok.parse().map_err(|_| {
                                        Error::format("ply", format!("bad float {tok}"))
                                    })?;
                                    found += 1;
                                }
                            }
                            Property::List { .. } => {
                                let n: usize = tokens
                                    .next()
                                    .and_then(|t| t.parse().ok())
                                    .ok_or_else(|| Error::format("ply", "bad list count"))?;
                                for _ in 0..n {
                                    tokens.next().ok_or_else(|| {
                                        Error::format("ply", "short list record")
                                    })?;
                                }
                            }
                        }
                    }
                    if found == 3 {
                        points.push(p);
                    }
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut r = &bytes[pos..];
            for element in &elements {
                for _ in 0..element.count {
                    let mut p = [0f64; 3];
                    for (i, prop) in element.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                if element.name == "vertex" {
                                    if let Some(axis) = xyz_idx.iter().position(|&j| j == i) {
                                        p[axis] = ty.read_f64(&mut r)?;
                                        continue;
                                    }
                                }
                                let skip = ty.size();
                                if r.len() < skip {
                                    return Err(Error::Truncated("ply payload"));
                                }
                                r = &r[skip..];
                            }
                            Property::List { count_ty, item_ty } => {
                                let n = count_ty.read_f64(&mut r)? as usize;
                                let skip = n * item_ty.size();
                                if r.len() < skip {
                                    return Err(Error::Truncated("ply payload"));
                                }
                                r = &r[skip..];
                            }
                        }
                    }
                    if element.name == "vertex" {
                        points.push(p);
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyPointCloud);
    }
    Ok(PointCloud { points })
}

/// Raw binary points: u64 count then count * 3 little-endian f32.
pub fn read_raw_points(bytes: &[u8]) -> Result<PointCloud> {
    let mut r = bytes;
    let count = r.read_u64::<LittleEndian>().map_err(|_| Error::Truncated("point count"))? as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut p = [0f64; 3];
        for a in &mut p {
            *a = r.read_f32::<LittleEndian>().map_err(|_| Error::Truncated("points"))? as f64;
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::EmptyPointCloud);
    }
    Ok(PointCloud { points })
}

pub fn write_raw_points(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + pc.points.len() * 12);
    out.write_u64::<LittleEndian>(pc.points.len() as u64).unwrap();
    for p in &pc.points {
        for a in 0..3 {
            out.write_f32::<LittleEndian>(p[a] as f32).unwrap();
        }
    }
    out
}

/// Dispatch on the PLY magic, falling back to the raw format.
pub fn read_point_cloud_bytes(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.starts_with(b"ply") {
        read_ply(bytes)
    } else {
        read_raw_points(bytes)
    }
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    read_point_cloud_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Gaussian stats
// ---------------------------------------------------------------------------

/// Stats file: u64 anchor count, then per anchor `dim_o` f32 gradient
/// magnitudes followed by one f32 opacity, in the octree's canonical order.
pub fn read_stats_bytes(bytes: &[u8], dim_o: usize) -> Result<GaussianStats> {
    let mut r = bytes;
    let count = r.read_u64::<LittleEndian>().map_err(|_| Error::Truncated("stats count"))? as usize;
    let mut anchors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut grad_mags = Vec::with_capacity(dim_o);
        for _ in 0..dim_o {
            grad_mags
                .push(r.read_f32::<LittleEndian>().map_err(|_| Error::Truncated("stats"))?);
        }
        let opacity = r.read_f32::<LittleEndian>().map_err(|_| Error::Truncated("stats"))?;
        anchors.push(AnchorStats { grad_mags, opacity });
    }
    Ok(GaussianStats { anchors })
}

pub fn write_stats(stats: &GaussianStats) -> Vec<u8> {
    let mut out = Vec::new();
    out.write_u64::<LittleEndian>(stats.anchors.len() as u64).unwrap();
    for a in &stats.anchors {
        for &g in &a.grad_mags {
            out.write_f32::<LittleEndian>(g).unwrap();
        }
        out.write_f32::<LittleEndian>(a.opacity).unwrap();
    }
    out
}

pub fn read_stats(path: &Path, dim_o: usize) -> Result<GaussianStats> {
    read_stats_bytes(&fs::read(path)?, dim_o)
}

// ---------------------------------------------------------------------------
// Scene files
// ---------------------------------------------------------------------------

pub fn write_scene(store: &OctreeStore) -> Vec<u8> {
    let cfg = store.cfg();
    let mut out = Vec::new();
    out.extend_from_slice(SCENE_MAGIC);
    out.write_u8(SCENE_VERSION).unwrap();
    cfg.write_binary(&mut out);
    let anchors = store.lod_slice(cfg.num_lods);
    out.write_u64::<LittleEndian>(anchors.len() as u64).unwrap();
    for a in anchors {
        out.write_u8(a.coord.level as u8).unwrap();
        out.write_u32::<LittleEndian>(a.coord.x).unwrap();
        out.write_u32::<LittleEndian>(a.coord.y).unwrap();
        out.write_u32::<LittleEndian>(a.coord.z).unwrap();
        for v in a.attrs.flatten() {
            out.write_f32::<LittleEndian>(v).unwrap();
        }
    }
    out
}

pub fn read_scene_bytes(bytes: &[u8]) -> Result<OctreeStore> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated("scene magic"))?;
    if &magic != SCENE_MAGIC {
        return Err(Error::format("scene file", "bad magic"));
    }
    let version = r.read_u8().map_err(|_| Error::Truncated("scene version"))?;
    if version != SCENE_VERSION {
        return Err(Error::format("scene file", format!("unsupported version {version}")));
    }
    let cfg = OctreeConfig::read_binary(&mut r)?;
    let channels = cfg.channels();
    let count = r.read_u64::<LittleEndian>().map_err(|_| Error::Truncated("anchor count"))? as usize;
    let mut store = OctreeStore::new(cfg.clone())?;
    let mut flat = vec![0f32; channels];
    for _ in 0..count {
        let level = r.read_u8().map_err(|_| Error::Truncated("anchor"))? as u32;
        let x = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("anchor"))?;
        let y = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("anchor"))?;
        let z = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated("anchor"))?;
        for v in flat.iter_mut() {
            *v = r.read_f32::<LittleEndian>().map_err(|_| Error::Truncated("anchor"))?;
        }
        let coord = VoxelCoord::new(x, y, z, level);
        let attrs = AttributeSet::from_flat(&cfg, &flat)?;
        if !store.insert_anchor(Anchor { coord, attrs })? {
            return Err(Error::DuplicateAnchor(coord));
        }
    }
    store.validate().map_err(|v| Error::format("scene file", v.to_string()))?;
    Ok(store)
}

pub fn read_scene(path: &Path) -> Result<OctreeStore> {
    read_scene_bytes(&fs::read(path)?)
}

pub fn write_scene_file(store: &OctreeStore, path: &Path) -> Result<()> {
    fs::write(path, write_scene(store))?;
    Ok(())
}
