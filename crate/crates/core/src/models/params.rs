use std::io::{BufRead, Write};

use super::ModelError;

/// Flat parameter vector with a kind tag and shape header.
///
/// ```text
/// abl-psp-params v1 <kind>
/// dims <n1> <n2> ...
/// <one parameter per line>
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFile {
    pub kind: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

const MAGIC: &str = "abl-psp-params";
const VERSION: &str = "v1";

pub fn write_params<W: Write>(mut out: W, file: &ParamFile) -> Result<(), ModelError> {
    writeln!(out, "{MAGIC} {VERSION} {}", file.kind)?;
    let dims: Vec<String> = file.dims.iter().map(ToString::to_string).collect();
    writeln!(out, "dims {}", dims.join(" "))?;
    for v in &file.values {
        // shortest representation that parses back to the same bits
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn read_params<R: BufRead>(input: R) -> Result<ParamFile, ModelError> {
    let err = |line: usize, msg: String| ModelError::Parse { line, msg };
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty file".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != MAGIC || parts[1] != VERSION {
        return Err(err(1, format!("bad header {header:?}")));
    }
    let kind = parts[2].to_string();
    let dims_line = lines.next().ok_or_else(|| err(2, "missing dims".into()))??;
    let mut dp = dims_line.split_whitespace();
    if dp.next() != Some("dims") {
        return Err(err(2, format!("bad dims line {dims_line:?}")));
    }
    let dims = dp
        .map(|t| t.parse::<usize>().map_err(|e| err(2, e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse::<f64>().map_err(|e| err(i + 3, e.to_string()))?);
    }
    Ok(ParamFile { kind, dims, values })
}
