//! Task dumps (a `key=value` header line followed by CSV rows) and binary PGM.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::task::TaskSet;

/// A parsed task dump.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskDump {
    pub header: BTreeMap<String, String>,
    /// 1 for `x,y` rows, 2 for `x,x2,y` rows.
    pub input_dim: usize,
    pub task: TaskSet,
}

impl TaskDump {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

/// Writes `task` (single-output, targets labelled) as one header line with
/// `kind`, the counts and `extra` entries, then the context rows followed by
/// the target rows.
pub fn write_task(
    path: impl AsRef<Path>,
    kind: &str,
    task: &TaskSet,
    input_dim: usize,
    extra: &[(&str, String)],
) -> Result<()> {
    if task.y_dim != 1 {
        return Err(Error::Contract("task dumps hold single-output tasks".into()));
    }
    if !(input_dim == 1 || input_dim == 2) {
        return Err(Error::Contract(format!("input dimension {input_dim} is not 1 or 2")));
    }
    let ty = task
        .target_y
        .as_ref()
        .ok_or_else(|| Error::Contract("task dump needs target outputs".into()))?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(
        w,
        "# kind={kind} input_dim={input_dim} n_context={} n_target={}",
        task.num_context(),
        task.num_targets()
    )?;
    for (k, v) in extra {
        if k.contains(['=', ' ']) || v.contains([' ', '\n']) {
            return Err(Error::Contract(format!("header entry '{k}={v}' has separators")));
        }
        write!(w, " {k}={v}")?;
    }
    writeln!(w)?;
    let rows = task
        .context_x
        .iter()
        .zip(&task.context_y)
        .chain(task.target_x.iter().zip(ty));
    for (x, y) in rows {
        if input_dim == 1 {
            writeln!(w, "{},{}", x[0], y)?;
        } else {
            writeln!(w, "{},{},{}", x[0], x[1], y)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}:{line}: {msg}", path.display()))
}

pub fn read_task(path: impl AsRef<Path>) -> Result<TaskDump> {
    let path = path.as_ref();
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))??;
    let body = first
        .strip_prefix('#')
        .ok_or_else(|| format_err(path, 1, "header must start with '#'"))?;
    let mut header = BTreeMap::new();
    for item in body.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format_err(path, 1, format!("'{item}' is not key=value")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let count = |k: &str| -> Result<usize> {
        header
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(path, 1, format!("missing or invalid '{k}'")))
    };
    let (nc, nt, input_dim) = (count("n_context")?, count("n_target")?, count("input_dim")?);
    if !(input_dim == 1 || input_dim == 2) {
        return Err(format_err(path, 1, format!("input_dim {input_dim} is not 1 or 2")));
    }
    let mut xs = Vec::with_capacity(nc + nt);
    let mut ys = Vec::with_capacity(nc + nt);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, i + 2, e))?;
        if vals.len() != input_dim + 1 {
            return Err(format_err(
                path,
                i + 2,
                format!("expected {} columns, found {}", input_dim + 1, vals.len()),
            ));
        }
        xs.push([vals[0], if input_dim == 2 { vals[1] } else { 0.0 }]);
        ys.push(vals[input_dim]);
    }
    if xs.len() != nc + nt {
        return Err(format_err(
            path,
            1,
            format!("header promises {} rows, file has {}", nc + nt, xs.len()),
        ));
    }
    let task = TaskSet::new(
        1,
        xs[..nc].to_vec(),
        ys[..nc].to_vec(),
        xs[nc..].to_vec(),
        Some(ys[nc..].to_vec()),
    )?;
    Ok(TaskDump {
        header,
        input_dim,
        task,
    })
}

/// Writes a row-major grey image with values clamped to `[0, 1]` as binary
/// PGM with maxval 255.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height || values.is_empty() {
        return Err(Error::Contract(format!(
            "{} values for a {width} x {height} image",
            values.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * 255.0).round() as u8
    }));
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a binary PGM (maxval <= 255), returning `(width, height, values)`
/// scaled to `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("invalid header number"));
    let (w, h, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("maxval must be in 1..=255"));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    if data.len() != w * h {
        return Err(bad("raster size does not match header"));
    }
    Ok((w, h, data.iter().map(|&b| b as f64 / maxval as f64).collect()))
}
