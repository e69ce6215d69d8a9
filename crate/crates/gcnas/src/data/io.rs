//! Dataset file format.
//!
//! Little-endian binary: magic `GCNASDS1` (the trailing digit is the format
//! version), a u32 manifest length followed by the UTF-8 TOML manifest,
//! a u32 graph count, then per-graph records: node/edge counts (u32),
//! the edge list as u32 pairs, node and edge features as f64, labels as i32.
//! Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{Dataset, GraphInstance, Manifest};
use crate::error::{Error, Result};

const MAGIC_PREFIX: &[u8; 7] = b"GCNASDS";
pub(crate) const FORMAT_VERSION: u32 = 1;

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC_PREFIX)?;
    w.write_all(&[b'0' + FORMAT_VERSION as u8])?;

    let manifest = toml::to_string(&dataset.manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    w.write_all(&(manifest.len() as u32).to_le_bytes())?;
    w.write_all(manifest.as_bytes())?;

    w.write_all(&(dataset.graphs.len() as u32).to_le_bytes())?;
    for g in &dataset.graphs {
        w.write_all(&(g.num_nodes as u32).to_le_bytes())?;
        w.write_all(&(g.edges.len() as u32).to_le_bytes())?;
        for &(u, v) in &g.edges {
            w.write_all(&u.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        for &f in &g.node_features {
            w.write_all(&f.to_le_bytes())?;
        }
        for &f in &g.edge_features {
            w.write_all(&f.to_le_bytes())?;
        }
        for &l in &g.node_labels {
            w.write_all(&(l as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for magic header".into()))?;
    if &magic[..7] != MAGIC_PREFIX {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected a GCNASDS file",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = (magic[7] as char).to_digit(10).unwrap_or(0);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: format!("GCNASDS{}", magic[7] as char),
            expected: format!("GCNASDS{FORMAT_VERSION}"),
        });
    }

    let manifest_len = read_u32(&mut r, usize::MAX, "manifest length")? as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)
        .map_err(|_| Error::Format("file truncated inside manifest".into()))?;
    let manifest: Manifest = toml::from_str(
        std::str::from_utf8(&manifest_bytes)
            .map_err(|e| Error::Format(format!("manifest is not UTF-8: {e}")))?,
    )
    .map_err(|e| Error::Format(format!("manifest parse: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: format!("manifest version {}", manifest.format_version),
            expected: format!("manifest version {FORMAT_VERSION}"),
        });
    }

    let num_graphs = read_u32(&mut r, usize::MAX, "graph count")? as usize;
    let d_in = manifest.params.d_in;
    let mut graphs = Vec::with_capacity(num_graphs);
    for index in 0..num_graphs {
        graphs.push(read_graph(&mut r, index, d_in)?);
    }
    Ok(Dataset { graphs, manifest })
}

fn read_graph(r: &mut impl Read, index: usize, d_in: usize) -> Result<GraphInstance> {
    let num_nodes = read_u32(r, index, "node count")? as usize;
    let num_edges = read_u32(r, index, "edge count")? as usize;
    let mut edges = Vec::with_capacity(num_edges);
    for _ in 0..num_edges {
        let u = read_u32(r, index, "edge endpoint")?;
        let v = read_u32(r, index, "edge endpoint")?;
        if u as usize >= num_nodes || v as usize >= num_nodes {
            return Err(Error::CorruptRecord {
                index,
                detail: format!("edge ({u}, {v}) out of range for {num_nodes} nodes"),
            });
        }
        edges.push((u, v));
    }
    let node_features = read_f64s(r, num_nodes * d_in, index, "node features")?;
    let edge_features = read_f64s(r, num_edges * d_in, index, "edge features")?;
    let mut node_labels = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|_| truncated(index, "labels"))?;
        node_labels.push(i32::from_le_bytes(buf) as u32);
    }
    Ok(GraphInstance { num_nodes, edges, node_features, edge_features, node_labels })
}

fn read_u32(r: &mut impl Read, index: usize, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| truncated(index, what))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, count: usize, index: usize, what: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(|_| truncated(index, what))?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

fn truncated(index: usize, what: &str) -> Error {
    if index == usize::MAX {
        Error::Format(format!("file truncated inside {what}"))
    } else {
        Error::CorruptRecord { index, detail: format!("file truncated inside {what}") }
    }
}
