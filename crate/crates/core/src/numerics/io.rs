//! Binary file formats: an ASCII header line followed by little-endian `f64`s.
//!
//! * `RDNET v1 <sizes,comma,separated> <activation>`: per layer, weights
//!   (row-major, `out × in`) then bias.
//! * `RDPCA v1 <d> <k>`: mean, components (row-major `k × d`), explained variance.
//! * `RDOBS v1 <n> <d>`: observation rows.

use std::fs;
use std::path::Path;

use super::matrix::Matrix;
use super::mlp::{Activation, LayerParams, MlpParams, MlpSpec};
use super::pca::PcaModel;
use crate::{Error, Result};

fn split_header<'a>(path: &Path, bytes: &'a [u8], magic: &str) -> Result<(Vec<&'a str>, &'a [u8])> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::format(path, "header is not ASCII"))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() < 2 || fields[0] != magic || fields[1] != "v1" {
        return Err(Error::format(path, format!("expected '{magic} v1' header, found '{header}'")));
    }
    Ok((fields, &bytes[nl + 1..]))
}

fn decode_f64s(path: &Path, body: &[u8], expected: usize) -> Result<Vec<f64>> {
    if body.len() != expected * 8 {
        return Err(Error::format(
            path,
            format!("expected {} payload bytes, found {}", expected * 8, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn encode(header: String, values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    let mut out = header.into_bytes();
    out.push(b'\n');
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_count(path: &Path, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::format(path, format!("invalid count '{s}'")))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_mlp(params: &MlpParams) -> Vec<u8> {
    let spec = params.spec();
    let sizes: Vec<String> = spec.layer_sizes.iter().map(|s| s.to_string()).collect();
    let act = match spec.output_activation {
        Activation::Linear => spec.hidden_activation.name().to_string(),
        out => format!("{}+{}", spec.hidden_activation.name(), out.name()),
    };
    encode(format!("RDNET v1 {} {}", sizes.join(","), act), params.flat())
}

pub fn decode_mlp(path: &Path, bytes: &[u8]) -> Result<MlpParams> {
    let (fields, body) = split_header(path, bytes, "RDNET")?;
    if fields.len() != 4 {
        return Err(Error::format(path, "RDNET header needs sizes and activation"));
    }
    let sizes = fields[2]
        .split(',')
        .map(|s| parse_count(path, s))
        .collect::<Result<Vec<_>>>()?;
    let (hidden, output) = match fields[3].split_once('+') {
        Some((h, o)) => (h, o),
        None => (fields[3], "linear"),
    };
    let parse_act = |s: &str| {
        Activation::parse(s).ok_or_else(|| Error::format(path, format!("unknown activation '{s}'")))
    };
    let spec = MlpSpec::new(sizes, parse_act(hidden)?, parse_act(output)?)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let total: usize = spec.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let values = decode_f64s(path, body, total)?;
    let mut offset = 0;
    let mut layers = Vec::new();
    for w in spec.layer_sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights =
            Matrix::from_vec(outputs, inputs, values[offset..offset + inputs * outputs].to_vec())?;
        offset += inputs * outputs;
        let bias = values[offset..offset + outputs].to_vec();
        offset += outputs;
        layers.push(LayerParams { weights, bias });
    }
    MlpParams::from_layers(spec, layers)
}

pub fn write_mlp(path: &Path, params: &MlpParams) -> Result<()> {
    write_bytes(path, &encode_mlp(params))
}

pub fn read_mlp(path: &Path) -> Result<MlpParams> {
    decode_mlp(path, &read_bytes(path)?)
}

pub fn encode_pca(model: &PcaModel) -> Vec<u8> {
    let values = model
        .mean
        .iter()
        .chain(model.components.data())
        .chain(&model.explained_variance)
        .copied();
    encode(format!("RDPCA v1 {} {}", model.dim(), model.k()), values)
}

/// Decodes a PCA model. The file does not store discarded variance, so the
/// loaded `total_variance` is the retained variance.
pub fn decode_pca(path: &Path, bytes: &[u8]) -> Result<PcaModel> {
    let (fields, body) = split_header(path, bytes, "RDPCA")?;
    if fields.len() != 4 {
        return Err(Error::format(path, "RDPCA header needs d and k"));
    }
    let d = parse_count(path, fields[2])?;
    let k = parse_count(path, fields[3])?;
    let values = decode_f64s(path, body, d + k * d + k)?;
    let mean = values[..d].to_vec();
    let components = Matrix::from_vec(k, d, values[d..d + k * d].to_vec())?;
    let explained_variance = values[d + k * d..].to_vec();
    Ok(PcaModel {
        mean,
        components,
        total_variance: explained_variance.iter().sum(),
        explained_variance,
        degenerate: false,
    })
}

pub fn write_pca(path: &Path, model: &PcaModel) -> Result<()> {
    write_bytes(path, &encode_pca(model))
}

pub fn read_pca(path: &Path) -> Result<PcaModel> {
    decode_pca(path, &read_bytes(path)?)
}

pub fn write_observations(path: &Path, data: &Matrix) -> Result<()> {
    let header = format!("RDOBS v1 {} {}", data.rows(), data.cols());
    write_bytes(path, &encode(header, data.data().iter().copied()))
}

pub fn read_observations(path: &Path) -> Result<Matrix> {
    let bytes = read_bytes(path)?;
    let (fields, body) = split_header(path, &bytes, "RDOBS")?;
    if fields.len() != 4 {
        return Err(Error::format(path, "RDOBS header needs n and d"));
    }
    let n = parse_count(path, fields[2])?;
    let d = parse_count(path, fields[3])?;
    Matrix::from_vec(n, d, decode_f64s(path, body, n * d)?)
}
