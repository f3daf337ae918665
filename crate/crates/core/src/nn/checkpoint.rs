//! Flat parameter blobs: an 8-byte magic, a little-endian `u32` header
//! length, a JSON header listing named sections with their shapes, then every
//! section's values as contiguous little-endian `f64`s in header order.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients, InitRule, Layer};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SNRPARAM";

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    sections: Vec<SectionHeader>,
}

#[derive(Serialize, Deserialize)]
struct SectionHeader {
    name: String,
    shape: Vec<usize>,
}

pub fn write_sections<W: Write>(mut out: W, sections: &[Section]) -> Result<()> {
    for s in sections {
        if s.shape.iter().product::<usize>() != s.values.len() {
            return Err(Error::Shape(format!(
                "section {} does not match its shape",
                s.name
            )));
        }
    }
    let header = serde_json::to_vec(&Header {
        format: "snr-params-v1".into(),
        sections: sections
            .iter()
            .map(|s| SectionHeader {
                name: s.name.clone(),
                shape: s.shape.clone(),
            })
            .collect(),
    })?;
    let io = |e| Error::io("<parameter blob>", e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&(header.len() as u32).to_le_bytes())
        .map_err(io)?;
    out.write_all(&header).map_err(io)?;
    let mut buf = Vec::with_capacity(sections.iter().map(|s| s.values.len() * 8).sum());
    for s in sections {
        for v in &s.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io)
}

pub fn read_sections<R: Read>(mut input: R) -> Result<Vec<Section>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<parameter blob>", e))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "missing parameter blob magic".into(),
        });
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = 12 + hlen;
    if bytes.len() < body {
        return Err(Error::Format {
            offset: 12,
            msg: format!("header claims {hlen} bytes, file too short"),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[12..body])?;
    let mut offset = body;
    let mut out = Vec::with_capacity(header.sections.len());
    for h in header.sections {
        let n: usize = h.shape.iter().product();
        let end = offset + 8 * n;
        if end > bytes.len() {
            return Err(Error::Format {
                offset: offset as u64,
                msg: format!("section {} truncated", h.name),
            });
        }
        let values = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        offset = end;
        out.push(Section {
            name: h.name,
            shape: h.shape,
            values,
        });
    }
    if offset != bytes.len() {
        return Err(Error::Format {
            offset: offset as u64,
            msg: "trailing bytes after last section".into(),
        });
    }
    Ok(out)
}

fn matrix_section(name: String, m: &Array2<f64>) -> Section {
    Section {
        name,
        shape: vec![m.nrows(), m.ncols()],
        values: m.iter().copied().collect(),
    }
}

fn vector_section(name: String, v: &Array1<f64>) -> Section {
    Section {
        name,
        shape: vec![v.len()],
        values: v.to_vec(),
    }
}

/// Sections for a parameter set, named `{prefix}{k}.weight` / `{prefix}{k}.bias`.
pub fn gradients_to_sections(prefix: &str, g: &Gradients) -> Vec<Section> {
    g.weights
        .iter()
        .zip(&g.biases)
        .enumerate()
        .flat_map(|(k, (w, b))| {
            [
                matrix_section(format!("{prefix}{k}.weight"), w),
                vector_section(format!("{prefix}{k}.bias"), b),
            ]
        })
        .collect()
}

pub fn gradients_from_sections(
    prefix: &str,
    layers: usize,
    sections: &[Section],
) -> Result<Gradients> {
    let find = |name: String| {
        sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Input(format!("parameter blob lacks section {name}")))
    };
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for k in 0..layers {
        let w = find(format!("{prefix}{k}.weight"))?;
        let b = find(format!("{prefix}{k}.bias"))?;
        if w.shape.len() != 2 || b.shape.len() != 1 {
            return Err(Error::Shape(format!(
                "section {prefix}{k} has the wrong rank"
            )));
        }
        weights.push(
            Array2::from_shape_vec((w.shape[0], w.shape[1]), w.values.clone())
                .map_err(|e| Error::Shape(e.to_string()))?,
        );
        biases.push(Array1::from_vec(b.values.clone()));
    }
    Ok(Gradients { weights, biases })
}

fn as_gradients(layers: &[Layer]) -> Gradients {
    Gradients {
        weights: layers.iter().map(|l| l.weight.clone()).collect(),
        biases: layers.iter().map(|l| l.bias.clone()).collect(),
    }
}

fn as_layers(g: Gradients) -> Vec<Layer> {
    g.weights
        .into_iter()
        .zip(g.biases)
        .map(|(weight, bias)| Layer { weight, bias })
        .collect()
}

/// Live parameters (`layer*`) followed by the init snapshot (`init*`).
pub fn net_to_sections(net: &DenseNet) -> Vec<Section> {
    let mut out = gradients_to_sections("layer", &as_gradients(net.layers()));
    out.extend(gradients_to_sections(
        "init",
        &as_gradients(net.init_snapshot()),
    ));
    out
}

pub fn net_from_sections(
    sections: &[Section],
    init_rule: InitRule,
    layer_norm: bool,
) -> Result<DenseNet> {
    let layers = sections
        .iter()
        .filter(|s| s.name.starts_with("layer") && s.name.ends_with(".weight"))
        .count();
    let live = as_layers(gradients_from_sections("layer", layers, sections)?);
    let init = as_layers(gradients_from_sections("init", layers, sections)?);
    Ok(DenseNet::from_parts(live, init, init_rule)?.with_layer_norm(layer_norm))
}
