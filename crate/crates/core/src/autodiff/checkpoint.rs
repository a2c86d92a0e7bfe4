//! Plain-text network checkpoints.
//!
//! ```text
//! dbq-net 1
//! sizes 2 3 1
//! activations tanh identity
//! params 13
//! <one shortest round-trip f64 per line>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::net::{Activation, FeedForwardNet, ParamVector};
use crate::error::{Error, Result};

const MAGIC: &str = "dbq-net";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &FeedForwardNet, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "sizes {}", sizes.join(" "))?;
    let acts: Vec<&str> = net.activations().iter().map(|a| a.name()).collect();
    writeln!(w, "activations {}", acts.join(" "))?;
    let p = net.params();
    writeln!(w, "params {}", p.len())?;
    for v in &p.values {
        writeln!(w, "{v:?}")?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<FeedForwardNet> {
    let mut lines = BufReader::new(r).lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::invalid(format!("checkpoint truncated before {what}")))
    };
    let header = next("header")?;
    if header != format!("{MAGIC} {VERSION}") {
        return Err(Error::invalid(format!("unsupported checkpoint header `{header}`")));
    }
    let sizes = field(&next("sizes")?, "sizes")?
        .iter()
        .map(|s| s.parse::<usize>().map_err(|e| Error::invalid(format!("bad layer size `{s}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let acts = field(&next("activations")?, "activations")?
        .iter()
        .map(|s| Activation::from_name(s))
        .collect::<Result<Vec<_>>>()?;
    let count_line = field(&next("params")?, "params")?;
    let count: usize = count_line
        .first()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::invalid("bad parameter count"))?;
    let mut values = Vec::with_capacity(count);
    for i in 0..count {
        let line = next("parameter values")?;
        values.push(
            line.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("parameter {i}: {e}")))?,
        );
    }
    FeedForwardNet::from_params(&sizes, &acts, &ParamVector::new(values))
}

fn field(line: &str, key: &str) -> Result<Vec<String>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::invalid(format!("expected `{key}` line, found `{line}`")));
    }
    Ok(parts.map(str::to_owned).collect())
}

pub fn save_checkpoint(net: &FeedForwardNet, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FeedForwardNet> {
    read_checkpoint(std::fs::File::open(path)?)
}
