//! Text format for networks, bit-exact under round-trip.
//!
//! ```text
//! dims: [2, 5, 1]
//! layer: 1
//! entries: [[0, 0, 2.0000000000000000e0], [0, 1, -1.0000000000000000e0]]
//! bias: [[0, 1.0000000000000000e0]]
//! layer: 2
//! entries: [[0, 0, 1.0000000000000000e0]]
//! bias: []
//! stats: {W: 4, L: 2, Nw: 5}
//! ```
//!
//! Weights carry 17 significant digits, which determines the f64 uniquely.

use super::{Layer, ReluNetwork};
use crate::error::{Error, Result};
use crate::faber::fmt_f64;
use std::io::{BufRead, Write};

pub fn write_network(net: &ReluNetwork, mut w: impl Write) -> Result<()> {
    let stats = net.stats();
    let dims: Vec<String> = stats.dims.iter().map(|d| d.to_string()).collect();
    writeln!(w, "dims: [{}]", dims.join(", "))?;
    for (i, layer) in net.layers().iter().enumerate() {
        writeln!(w, "layer: {}", i + 1)?;
        let entries: Vec<String> = layer
            .weights()
            .iter()
            .map(|&(r, c, v)| format!("[{r}, {c}, {}]", fmt_f64(v)))
            .collect();
        writeln!(w, "entries: [{}]", entries.join(", "))?;
        let bias: Vec<String> = layer
            .bias()
            .iter()
            .map(|&(r, v)| format!("[{r}, {}]", fmt_f64(v)))
            .collect();
        writeln!(w, "bias: [{}]", bias.join(", "))?;
    }
    writeln!(
        w,
        "stats: {{W: {}, L: {}, Nw: {}}}",
        stats.size, stats.depth, stats.width
    )?;
    Ok(())
}

struct LineReader<R> {
    inner: R,
    lineno: usize,
}

impl<R: BufRead> LineReader<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = self.inner.read_line(&mut buf)?;
            if n == 0 {
                return Ok(None);
            }
            self.lineno += 1;
            let t = buf.trim();
            if !t.is_empty() {
                return Ok(Some(t.to_string()));
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.lineno,
            msg: msg.into(),
        }
    }

    fn expect_field<'a>(&self, line: &'a str, field: &str) -> Result<&'a str> {
        line.strip_prefix(field)
            .and_then(|rest| rest.trim_start().strip_prefix(':'))
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected '{field}:'")))
    }
}

/// Splits a `[...]`-wrapped list of `[...]` groups into the group bodies.
fn split_groups(s: &str) -> Option<Vec<&str>> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?.trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = None;
    for (i, ch) in inner.char_indices() {
        match ch {
            '[' => {
                if depth == 0 {
                    start = Some(i + 1);
                }
                depth += 1;
            }
            ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    out.push(inner[start?..i].trim());
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    Some(out)
}

pub fn read_network(r: impl BufRead) -> Result<ReluNetwork> {
    let mut lr = LineReader {
        inner: r,
        lineno: 0,
    };

    let line = lr
        .next_line()?
        .ok_or_else(|| Error::invalid("empty network file"))?;
    let dims_str = lr.expect_field(&line, "dims")?;
    let dims: Vec<usize> = dims_str
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| lr.err("malformed dims"))?
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| lr.err("bad dimension")))
        .collect::<Result<_>>()?;
    if dims.len() < 3 {
        return Err(lr.err("need at least an input, one hidden, and an output layer"));
    }

    let mut layers = Vec::with_capacity(dims.len() - 1);
    for l in 1..dims.len() {
        let line = lr
            .next_line()?
            .ok_or_else(|| lr.err(format!("missing layer {l}")))?;
        let idx: usize = lr
            .expect_field(&line, "layer")?
            .parse()
            .map_err(|_| lr.err("bad layer index"))?;
        if idx != l {
            return Err(lr.err(format!("expected layer {l}, found {idx}")));
        }

        let line = lr
            .next_line()?
            .ok_or_else(|| lr.err("missing entries"))?;
        let entries_str = lr.expect_field(&line, "entries")?;
        let groups = split_groups(entries_str).ok_or_else(|| lr.err("malformed entries"))?;
        let mut weights = Vec::with_capacity(groups.len());
        for g in groups {
            let parts: Vec<&str> = g.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(lr.err("weight entry needs [row, col, value]"));
            }
            let row: u32 = parts[0].parse().map_err(|_| lr.err("bad row"))?;
            let col: u32 = parts[1].parse().map_err(|_| lr.err("bad col"))?;
            let val: f64 = parts[2].parse().map_err(|_| lr.err("bad weight"))?;
            weights.push((row, col, val));
        }

        let line = lr.next_line()?.ok_or_else(|| lr.err("missing bias"))?;
        let bias_str = lr.expect_field(&line, "bias")?;
        let groups = split_groups(bias_str).ok_or_else(|| lr.err("malformed bias"))?;
        let mut bias = Vec::with_capacity(groups.len());
        for g in groups {
            let parts: Vec<&str> = g.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(lr.err("bias entry needs [row, value]"));
            }
            let row: u32 = parts[0].parse().map_err(|_| lr.err("bad row"))?;
            let val: f64 = parts[1].parse().map_err(|_| lr.err("bad bias"))?;
            bias.push((row, val));
        }

        layers.push(Layer::new(dims[l - 1], dims[l], weights, bias)?);
    }

    let line = lr.next_line()?.ok_or_else(|| lr.err("missing stats"))?;
    let stats_str = lr.expect_field(&line, "stats")?;
    let net = ReluNetwork::new(layers)?;
    let stats = net.stats();
    let expect = format!("{{W: {}, L: {}, Nw: {}}}", stats.size, stats.depth, stats.width);
    if stats_str != expect {
        return Err(lr.err(format!(
            "stats block '{stats_str}' disagrees with recount '{expect}'"
        )));
    }
    Ok(net)
}
