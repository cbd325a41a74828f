//! Scorer weight checkpoints.
//!
//! Layout: an ASCII header line `SCORER v1 <C> <L_o> <L_d> <patch_size>`,
//! then for every tensor an ASCII line `<name> <rows> <cols>` followed by
//! `rows * cols` little-endian `f32` values in row-major order.

use std::io::{self, BufRead, Write};

use ndarray::Array2;

use super::network::{Linear, ScorerConfig, ScorerModel};
use super::ScorerError;

fn bad(msg: impl Into<String>) -> ScorerError {
    ScorerError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(model: &ScorerModel, mut out: W) -> io::Result<()> {
    let c = &model.config;
    writeln!(
        out,
        "SCORER v1 {} {} {} {}",
        c.channels, c.pe_origin, c.pe_dir, c.patch_size
    )?;
    for (name, tensor) in model.params() {
        writeln!(out, "{name} {} {}", tensor.nrows(), tensor.ncols())?;
        for v in tensor.iter() {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_line<R: BufRead>(input: &mut R) -> Result<Option<String>, ScorerError> {
    let mut buf = Vec::new();
    let n = input
        .read_until(b'\n', &mut buf)
        .map_err(|e| bad(e.to_string()))?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        return Err(bad("truncated tensor header"));
    }
    buf.pop();
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| bad("non-ASCII header"))
}

pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<ScorerModel, ScorerError> {
    let header = read_line(&mut input)?.ok_or_else(|| bad("empty checkpoint"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "SCORER" || fields[1] != "v1" {
        return Err(bad(format!("unrecognized header {header:?}")));
    }
    let num = |i: usize| -> Result<usize, ScorerError> {
        fields[i]
            .parse()
            .map_err(|_| bad(format!("bad header field {:?}", fields[i])))
    };
    let (channels, pe_origin, pe_dir, patch_size) = (num(2)?, num(3)?, num(4)?, num(5)?);

    let mut tensors: Vec<(String, Array2<f64>)> = Vec::new();
    while let Some(line) = read_line(&mut input)? {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(bad(format!("bad tensor header {line:?}")));
        };
        let rows: usize = rows
            .parse()
            .map_err(|_| bad(format!("bad rows in {line:?}")))?;
        let cols: usize = cols
            .parse()
            .map_err(|_| bad(format!("bad cols in {line:?}")))?;
        let mut bytes = vec![0u8; rows * cols * 4];
        input
            .read_exact(&mut bytes)
            .map_err(|_| bad(format!("tensor {name} is truncated")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let tensor = Array2::from_shape_vec((rows, cols), data).expect("size checked");
        tensors.push((name.to_owned(), tensor));
    }

    let mut take = |name: &str| -> Result<Array2<f64>, ScorerError> {
        let pos = tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        Ok(tensors.remove(pos).1)
    };
    let mut ray_layers = Vec::new();
    let mut i = 0;
    loop {
        let name = format!("ray.{i}.weight");
        let Ok(weight) = take(&name) else { break };
        let bias = take(&format!("ray.{i}.bias"))?;
        ray_layers.push(Linear { weight, bias });
        i += 1;
    }
    let patch_proj = Linear {
        weight: take("patch.weight")?,
        bias: take("patch.bias")?,
    };
    if let Some((name, _)) = tensors.first() {
        return Err(bad(format!("unexpected tensor {name}")));
    }
    if ray_layers.len() < 2 {
        return Err(bad("ray MLP needs at least two layers"));
    }

    let config = ScorerConfig {
        channels,
        hidden: ray_layers[0].out_dim(),
        hidden_layers: ray_layers.len() - 1,
        pe_origin,
        pe_dir,
        patch_size,
    };
    let model = ScorerModel {
        config,
        ray_layers,
        patch_proj,
    };
    validate_shapes(&model)?;
    Ok(model)
}

fn validate_shapes(model: &ScorerModel) -> Result<(), ScorerError> {
    let c = &model.config;
    let mut expected_in = c.ray_input_dim();
    let last = model.ray_layers.len() - 1;
    for (i, l) in model.ray_layers.iter().enumerate() {
        let expected_out = if i == last { c.channels } else { c.hidden };
        if l.in_dim() != expected_in
            || l.out_dim() != expected_out
            || l.bias.dim() != (1, expected_out)
        {
            return Err(bad(format!("ray layer {i} has inconsistent shape")));
        }
        expected_in = expected_out;
    }
    let p = &model.patch_proj;
    if p.in_dim() != c.patch_dim() || p.out_dim() != c.channels || p.bias.dim() != (1, c.channels) {
        return Err(bad("patch projection has inconsistent shape"));
    }
    Ok(())
}
