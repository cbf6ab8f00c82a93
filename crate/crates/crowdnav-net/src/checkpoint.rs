//! Versioned text checkpoints.
//!
//! Format (line-oriented):
//!
//! ```text
//! crowdnav-params v1
//! dims <horizon> <d_hh> <heads> <d_rh> <d_r> <d_h>
//! tensor <name> <rows> <cols>
//! <cols space-separated values, one line per row>
//! ...
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so a save/load
//! cycle reproduces every parameter bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::NetError;
use crate::policy::{NetDims, PolicyParams};

const MAGIC: &str = "crowdnav-params v1";

pub fn save_params<W: Write>(params: &PolicyParams, mut writer: W) -> Result<(), NetError> {
    let d = &params.dims;
    writeln!(writer, "{MAGIC}")?;
    writeln!(
        writer,
        "dims {} {} {} {} {} {}",
        d.horizon, d.d_hh, d.heads, d.d_rh, d.d_r, d.d_h
    )?;
    for (name, tensor) in params.tensors() {
        writeln!(writer, "tensor {name} {} {}", tensor.rows(), tensor.cols())?;
        for r in 0..tensor.rows() {
            let row: Vec<String> = tensor.row(r).iter().map(f64::to_string).collect();
            writeln!(writer, "{}", row.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_params_to_path<P: AsRef<Path>>(
    params: &PolicyParams,
    path: P,
) -> Result<(), NetError> {
    let mut writer = BufWriter::new(File::create(path)?);
    save_params(params, &mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn load_params<R: Read>(reader: R) -> Result<PolicyParams, NetError> {
    let mut lines = BufReader::new(reader).lines();
    let mut next_line = || -> Result<String, NetError> {
        lines
            .next()
            .ok_or_else(|| NetError::Checkpoint("unexpected end of file".into()))?
            .map_err(NetError::from)
    };

    let magic = next_line()?;
    if magic.trim() != MAGIC {
        return Err(NetError::Checkpoint(format!(
            "unsupported header {magic:?}, expected {MAGIC:?}"
        )));
    }
    let dims_line = next_line()?;
    let dims_fields: Vec<&str> = dims_line.split_whitespace().collect();
    if dims_fields.len() != 7 || dims_fields[0] != "dims" {
        return Err(NetError::Checkpoint(format!("bad dims line {dims_line:?}")));
    }
    let parse_dim = |s: &str| -> Result<usize, NetError> {
        s.parse()
            .map_err(|_| NetError::Checkpoint(format!("bad dimension {s:?}")))
    };
    let dims = NetDims {
        horizon: parse_dim(dims_fields[1])?,
        d_hh: parse_dim(dims_fields[2])?,
        heads: parse_dim(dims_fields[3])?,
        d_rh: parse_dim(dims_fields[4])?,
        d_r: parse_dim(dims_fields[5])?,
        d_h: parse_dim(dims_fields[6])?,
    };
    let mut params = PolicyParams::zeros(dims)?;

    for (expected_name, tensor) in params.tensors_mut() {
        let header = next_line()?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "tensor" {
            return Err(NetError::Checkpoint(format!("bad tensor line {header:?}")));
        }
        if fields[1] != expected_name {
            return Err(NetError::Checkpoint(format!(
                "expected tensor {expected_name:?}, found {:?}",
                fields[1]
            )));
        }
        let rows = parse_dim(fields[2])?;
        let cols = parse_dim(fields[3])?;
        if (rows, cols) != tensor.shape() {
            return Err(NetError::Checkpoint(format!(
                "tensor {expected_name} has shape {rows}x{cols}, expected {:?}",
                tensor.shape()
            )));
        }
        for r in 0..rows {
            let line = next_line()?;
            let values: Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let values = values
                .map_err(|e| NetError::Checkpoint(format!("tensor {expected_name} row {r}: {e}")))?;
            if values.len() != cols {
                return Err(NetError::Checkpoint(format!(
                    "tensor {expected_name} row {r} has {} values, expected {cols}",
                    values.len()
                )));
            }
            for (c, v) in values.into_iter().enumerate() {
                tensor.set(r, c, v);
            }
        }
    }
    Ok(params)
}

pub fn load_params_from_path<P: AsRef<Path>>(path: P) -> Result<PolicyParams, NetError> {
    load_params(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dims() -> NetDims {
        NetDims {
            horizon: 2,
            d_hh: 4,
            heads: 2,
            d_rh: 4,
            d_r: 3,
            d_h: 5,
        }
    }

    #[test]
    fn save_load_round_trips_bit_for_bit() {
        let params = PolicyParams::init(small_dims(), 99).unwrap();
        let mut buf = Vec::new();
        save_params(&params, &mut buf).unwrap();
        let loaded = load_params(buf.as_slice()).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn version_and_name_mismatches_are_rejected() {
        let params = PolicyParams::init(small_dims(), 99).unwrap();
        let mut buf = Vec::new();
        save_params(&params, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let wrong_version = text.replace("crowdnav-params v1", "crowdnav-params v9");
        assert!(load_params(wrong_version.as_bytes()).is_err());

        let wrong_name = text.replace("tensor w_hh_q", "tensor w_mystery");
        assert!(load_params(wrong_name.as_bytes()).is_err());

        let truncated = &text[..text.len() / 2];
        assert!(load_params(truncated.as_bytes()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        let params = PolicyParams::init(small_dims(), 7).unwrap();
        save_params_to_path(&params, &path).unwrap();
        let loaded = load_params_from_path(&path).unwrap();
        assert_eq!(loaded, params);
    }
}
