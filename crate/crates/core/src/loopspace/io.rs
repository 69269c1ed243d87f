//! Plain-text loop files.
//!
//! ```text
//! N 256
//! T 1.0000000000000000e0
//! winding 1 0
//! endpoint_mode closed
//! <N+1 rows of d coordinates>
//! ```
//!
//! Coordinates are written with 17 significant digits, which round-trips
//! every `f64` exactly.

use super::{EndpointMode, FreeTimeLoop};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

pub fn format_loop(lp: &FreeTimeLoop) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "N {}", lp.n());
    let _ = writeln!(s, "T {:.16e}", lp.period());
    let w: Vec<String> = lp.winding().iter().map(|x| x.to_string()).collect();
    let _ = writeln!(s, "winding {}", w.join(" "));
    let mode = match lp.mode() {
        EndpointMode::Closed => "closed",
        EndpointMode::Fixed => "fixed",
    };
    let _ = writeln!(s, "endpoint_mode {mode}");
    for i in 0..=lp.n() {
        let row: Vec<String> = lp.node(i).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

pub fn write_loop<W: Write>(mut out: W, lp: &FreeTimeLoop) -> Result<()> {
    out.write_all(format_loop(lp).as_bytes())?;
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn header<'a>(lines: &'a [(usize, String)], idx: usize, key: &str) -> Result<(usize, &'a str)> {
    let (no, text) = lines
        .get(idx)
        .ok_or_else(|| parse_err(idx + 1, format!("missing `{key}` header")))?;
    let rest = text
        .strip_prefix(key)
        .filter(|r| r.starts_with(' '))
        .ok_or_else(|| parse_err(*no, format!("expected `{key}` header")))?;
    Ok((*no, rest.trim()))
}

pub fn read_loop<R: BufRead>(input: R) -> Result<FreeTimeLoop> {
    let mut lines = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        lines.push((i + 1, t.to_string()));
    }
    let (no, n) = header(&lines, 0, "N")?;
    let n: usize = n.parse().map_err(|_| parse_err(no, "N is not a non-negative integer"))?;
    let (no, t) = header(&lines, 1, "T")?;
    let t: f64 = t.parse().map_err(|_| parse_err(no, "T is not a number"))?;
    let (no, w) = header(&lines, 2, "winding")?;
    let winding = w
        .split_whitespace()
        .map(|x| x.parse::<i64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| parse_err(no, "winding entries must be integers"))?;
    let (no, mode) = header(&lines, 3, "endpoint_mode")?;
    let mode = match mode {
        "closed" => EndpointMode::Closed,
        "fixed" => EndpointMode::Fixed,
        other => return Err(parse_err(no, format!("unknown endpoint mode `{other}`"))),
    };
    let d = winding.len();
    if d == 0 {
        return Err(parse_err(no, "winding must list one integer per dimension"));
    }
    let rows = &lines[4..];
    if rows.len() != n + 1 {
        return Err(parse_err(
            rows.last().map_or(no, |r| r.0),
            format!("expected {} coordinate rows, found {}", n + 1, rows.len()),
        ));
    }
    let mut nodes = Vec::with_capacity((n + 1) * d);
    for (no, row) in rows {
        let vals = row
            .split_whitespace()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| parse_err(*no, "coordinate is not a number"))?;
        if vals.len() != d {
            return Err(parse_err(*no, format!("expected {d} coordinates, found {}", vals.len())));
        }
        nodes.extend(vals);
    }
    match mode {
        EndpointMode::Closed => {
            let last = &nodes[n * d..];
            for c in 0..d {
                if last[c] != nodes[c] + winding[c] as f64 {
                    return Err(parse_err(rows[n].0, "last node is not the first node shifted by the winding"));
                }
            }
            nodes.truncate(n * d);
            FreeTimeLoop::closed(d, nodes, winding, t)
        }
        EndpointMode::Fixed => {
            let lp = FreeTimeLoop::fixed(d, nodes, t)?;
            if lp.winding() != winding.as_slice() {
                return Err(parse_err(lines[2].0, "winding does not match the endpoint lifts"));
            }
            Ok(lp)
        }
    }
}
