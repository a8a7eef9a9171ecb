//! On-disk octree layout: `metadata.json`, `hierarchy.bin`, `points.bin`
//! and `decimated.bin`.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NodeEntry, NodeName, NodePayloads, OctreeHierarchy};
use crate::cloud_io::{decode_records, encode_records, PointRecord, Quantization, RECORD_SIZE};
use crate::decimate::DecimatedCloud;
use crate::error::{Error, Result};
use crate::geometry::{cube_bounds_with_step, Aabb};

pub const HIERARCHY_RECORD_SIZE: usize = 22;
pub const METADATA_FILE: &str = "metadata.json";
pub const HIERARCHY_FILE: &str = "hierarchy.bin";
pub const POINTS_FILE: &str = "points.bin";
pub const DECIMATED_FILE: &str = "decimated.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metadata {
    pub version: u32,
    pub points: u64,
    pub bounds: Aabb,
    pub scale: [f64; 3],
    pub offset: [f64; 3],
    pub root_side: f64,
    pub max_node_points: u64,
    pub grid_size: u32,
    pub files: Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Files {
    pub hierarchy: String,
    pub points: String,
    pub decimated: String,
}

impl Metadata {
    pub fn from_hierarchy(h: &OctreeHierarchy) -> Self {
        Self {
            version: 1,
            points: h.total_points,
            bounds: h.source_bounds,
            scale: h.quantization.scale,
            offset: h.quantization.offset,
            root_side: h.root_bounds.extent().max_element(),
            max_node_points: h.max_node_points,
            grid_size: h.grid_size,
            files: Files {
                hierarchy: HIERARCHY_FILE.into(),
                points: POINTS_FILE.into(),
                decimated: DECIMATED_FILE.into(),
            },
        }
    }

    pub fn quantization(&self) -> Quantization {
        Quantization::new(self.scale, self.offset)
    }

    /// The root cube, derived from the source bounds as at build time.
    pub fn root_bounds(&self) -> Aabb {
        cube_bounds_with_step(&self.bounds, self.quantization().max_step())
    }
}

/// One 22-byte record per node in breadth-first order.
pub fn encode_hierarchy(h: &OctreeHierarchy) -> Vec<u8> {
    let mut out = Vec::with_capacity(h.len() * HIERARCHY_RECORD_SIZE);
    for n in h.iter() {
        out.push(n.child_mask);
        out.push(0);
        out.extend_from_slice(&(n.num_points as u32).to_le_bytes());
        out.extend_from_slice(&n.byte_offset.to_le_bytes());
        out.extend_from_slice(&n.byte_size.to_le_bytes());
    }
    out
}

/// Parses `hierarchy.bin`, rebuilding names from the breadth-first layout.
pub fn decode_hierarchy(bytes: &[u8], root_bounds: &Aabb) -> Result<BTreeMap<NodeName, NodeEntry>> {
    let bad = |m: &str| Error::MalformedOctree(m.to_string());
    if bytes.len() % HIERARCHY_RECORD_SIZE != 0 || bytes.is_empty() {
        return Err(bad("hierarchy length is not a positive multiple of 22"));
    }
    let mut nodes = BTreeMap::new();
    let mut queue = VecDeque::from([NodeName::root()]);
    for rec in bytes.chunks_exact(HIERARCHY_RECORD_SIZE) {
        let name = queue.pop_front().ok_or_else(|| bad("more records than linked nodes"))?;
        let child_mask = rec[0];
        if name.level() >= super::MAX_LEVEL && child_mask != 0 {
            return Err(bad("node deeper than the maximum level"));
        }
        for k in 0..8 {
            if child_mask & (1 << k) != 0 {
                queue.push_back(name.child(k));
            }
        }
        let entry = NodeEntry {
            level: name.level() as u32,
            child_mask,
            num_points: u32::from_le_bytes(rec[2..6].try_into().unwrap()) as u64,
            byte_offset: u64::from_le_bytes(rec[6..14].try_into().unwrap()),
            byte_size: u64::from_le_bytes(rec[14..22].try_into().unwrap()),
            bounds: name.bounds_in(root_bounds),
            name: name.clone(),
        };
        nodes.insert(name, entry);
    }
    if !queue.is_empty() {
        return Err(bad("child mask references missing records"));
    }
    Ok(nodes)
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

/// Writes the full layout into `dir` (which must exist) and fsyncs every
/// file. Payloads are concatenated in breadth-first order; `h` must already
/// carry matching offsets.
pub fn write_octree(
    h: &OctreeHierarchy,
    payloads: &NodePayloads,
    decimated: Option<&DecimatedCloud>,
    dir: &Path,
) -> Result<()> {
    let mut w = BufWriter::with_capacity(4 << 20, File::create(dir.join(POINTS_FILE))?);
    let mut buf = Vec::new();
    let mut offset = 0u64;
    for n in h.iter() {
        if n.byte_offset != offset {
            return Err(Error::MalformedOctree(format!("offset of {} out of order", n.name)));
        }
        let pts = match payloads.get(&n.name) {
            Some(p) => p.load()?,
            None => Vec::new(),
        };
        if pts.len() as u64 != n.num_points {
            return Err(Error::MalformedOctree(format!("payload size of {}", n.name)));
        }
        buf.clear();
        encode_records(&pts, &mut buf);
        w.write_all(&buf)?;
        offset += n.byte_size;
    }
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;

    write_synced(&dir.join(HIERARCHY_FILE), &encode_hierarchy(h))?;
    let decimated_bytes = decimated.map(|d| d.to_bytes()).unwrap_or_default();
    write_synced(&dir.join(DECIMATED_FILE), &decimated_bytes)?;
    let meta = serde_json::to_vec_pretty(&Metadata::from_hierarchy(h))?;
    write_synced(&dir.join(METADATA_FILE), &meta)?;
    Ok(())
}

/// A built octree opened for reading.
#[derive(Debug)]
pub struct OctreeDir {
    pub dir: PathBuf,
    pub metadata: Metadata,
    pub hierarchy: OctreeHierarchy,
    points: File,
}

impl OctreeDir {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let metadata: Metadata = serde_json::from_slice(&std::fs::read(dir.join(METADATA_FILE))?)?;
        if metadata.version != 1 {
            return Err(Error::MalformedOctree(format!("unsupported version {}", metadata.version)));
        }
        let root_bounds = metadata.root_bounds();
        let nodes = decode_hierarchy(&std::fs::read(dir.join(&metadata.files.hierarchy))?, &root_bounds)?;
        let hierarchy = OctreeHierarchy {
            nodes,
            root_bounds,
            source_bounds: metadata.bounds,
            total_points: metadata.points,
            quantization: metadata.quantization(),
            max_node_points: metadata.max_node_points,
            grid_size: metadata.grid_size,
        };
        hierarchy.validate()?;
        let points = File::open(dir.join(&metadata.files.points))?;
        if points.metadata()?.len() != hierarchy.total_bytes() {
            return Err(Error::MalformedOctree("points.bin size does not match hierarchy".into()));
        }
        Ok(Self {
            dir,
            metadata,
            hierarchy,
            points,
        })
    }

    /// Raw payload bytes of one node.
    pub fn read_node_bytes(&self, name: &NodeName) -> Result<Vec<u8>> {
        let n = self
            .hierarchy
            .get(name)
            .ok_or_else(|| Error::MalformedOctree(format!("no node {name}")))?;
        let mut buf = vec![0u8; n.byte_size as usize];
        self.points.read_exact_at(&mut buf, n.byte_offset)?;
        Ok(buf)
    }

    pub fn read_node(&self, name: &NodeName) -> Result<Vec<PointRecord>> {
        Ok(decode_records(&self.read_node_bytes(name)?))
    }

    pub fn decimated_bytes(&self) -> Result<Vec<u8>> {
        Ok(std::fs::read(self.dir.join(&self.metadata.files.decimated))?)
    }

    pub fn read_decimated(&self) -> Result<Vec<PointRecord>> {
        let bytes = self.decimated_bytes()?;
        if bytes.len() % RECORD_SIZE != 0 {
            return Err(Error::MalformedOctree("decimated.bin is not a record multiple".into()));
        }
        Ok(decode_records(&bytes))
    }
}
