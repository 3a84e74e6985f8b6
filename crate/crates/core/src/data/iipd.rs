//! IIPD: `"IIPD"`, a version byte, one JSON header line, then little-endian
//! f32 row-major blocks in the order the header lists them.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PairedDataset;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_all, read_f32s, split_header_line, write_f32s};

pub const IIPD_MAGIC: &[u8; 4] = b"IIPD";
pub const IIPD_VERSION: u8 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Block {
    name: String,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u8,
    n: usize,
    x_dim: usize,
    y_dim: usize,
    blocks: Vec<Block>,
    #[serde(default)]
    split: Option<String>,
    #[serde(default)]
    provenance: serde_json::Value,
}

fn blocks(ds: &PairedDataset) -> Vec<(&'static str, usize, Vec<f32>)> {
    let mut out = vec![
        ("x", ds.x.cols(), ds.x.as_slice().to_vec()),
        ("y", ds.y.cols(), ds.y.as_slice().to_vec()),
    ];
    if let Some(c) = &ds.shared_class {
        out.push(("shared_class", 1, c.iter().map(|&v| v as f32).collect()));
    }
    if let Some(m) = &ds.excl_x {
        out.push(("excl_x", m.cols(), m.as_slice().to_vec()));
    }
    if let Some(m) = &ds.excl_y {
        out.push(("excl_y", m.cols(), m.as_slice().to_vec()));
    }
    out
}

fn write_dataset(ds: &PairedDataset, w: &mut dyn Write, path: &Path) -> Result<()> {
    ds.validate()?;
    let blocks = blocks(ds);
    let header = Header {
        format: "IIPD".into(),
        version: IIPD_VERSION,
        n: ds.len(),
        x_dim: ds.x.cols(),
        y_dim: ds.y.cols(),
        blocks: blocks.iter().map(|(n, c, _)| Block { name: n.to_string(), cols: *c }).collect(),
        split: ds.split.clone(),
        provenance: ds.provenance.clone(),
    };
    let io = |e| Error::io(path, e);
    w.write_all(IIPD_MAGIC).map_err(io)?;
    w.write_all(&[IIPD_VERSION]).map_err(io)?;
    w.write_all(serde_json::to_string(&header)?.as_bytes()).map_err(io)?;
    w.write_all(b"\n").map_err(io)?;
    for (_, _, values) in blocks {
        write_f32s(w, values.into_iter(), path)?;
    }
    Ok(())
}

/// Serializes to bytes.
pub fn encode_dataset(ds: &PairedDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf, Path::new("<memory>"))?;
    Ok(buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<PairedDataset> {
    if bytes.len() < 5 || &bytes[..4] != IIPD_MAGIC {
        return Err(Error::Format("not an IIPD file (bad magic)".into()));
    }
    if bytes[4] != IIPD_VERSION {
        return Err(Error::Format(format!("unsupported IIPD version {}", bytes[4])));
    }
    let (line, payload) = split_header_line(&bytes[5..])?;
    let h: Header = serde_json::from_str(line)?;
    let need: usize = h.blocks.iter().map(|b| h.n * b.cols * 4).sum();
    if need != payload.len() {
        return Err(Error::Format(format!(
            "header declares {need} payload bytes but {} are present",
            payload.len()
        )));
    }
    let mut ds = PairedDataset {
        x: Matrix::zeros(0, 0),
        y: Matrix::zeros(0, 0),
        shared_class: None,
        excl_x: None,
        excl_y: None,
        split: h.split,
        provenance: h.provenance,
    };
    let (mut seen_x, mut seen_y) = (false, false);
    let mut at = 0;
    for b in &h.blocks {
        let len = h.n * b.cols * 4;
        let values = read_f32s(&payload[at..at + len]);
        at += len;
        let m = Matrix::new(h.n, b.cols, values)?;
        match b.name.as_str() {
            "x" => {
                if b.cols != h.x_dim {
                    return Err(Error::Format(format!("x block has {} cols, header says {}", b.cols, h.x_dim)));
                }
                ds.x = m;
                seen_x = true;
            }
            "y" => {
                if b.cols != h.y_dim {
                    return Err(Error::Format(format!("y block has {} cols, header says {}", b.cols, h.y_dim)));
                }
                ds.y = m;
                seen_y = true;
            }
            "shared_class" => {
                if b.cols != 1 {
                    return Err(Error::Format("shared_class block must have 1 column".into()));
                }
                let labels = m
                    .as_slice()
                    .iter()
                    .map(|&v| {
                        if v >= 0.0 && v.fract() == 0.0 && v < 16_777_216.0 {
                            Ok(v as u32)
                        } else {
                            Err(Error::Format(format!("label {v} is not a non-negative integer")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                ds.shared_class = Some(labels);
            }
            "excl_x" => ds.excl_x = Some(m),
            "excl_y" => ds.excl_y = Some(m),
            other => return Err(Error::Format(format!("unknown IIPD block `{other}`"))),
        }
    }
    if !seen_x || !seen_y {
        return Err(Error::Format("IIPD file lacks an x or y block".into()));
    }
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(ds: &PairedDataset, path: &Path) -> Result<()> {
    atomic_write(path, |w| write_dataset(ds, w, path))
}

pub fn load_dataset(path: &Path) -> Result<PairedDataset> {
    decode_dataset(&read_all(path)?)
}
