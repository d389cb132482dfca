//! Plain-text parameter listing.
//!
//! ```text
//! marl-comm-checkpoint 1
//! <name> <dim>x<dim>... <value> <value> ...
//! ```
//!
//! One parameter per line, values row-major in Rust's shortest round-trip
//! decimal form, so a save/load cycle is bit-exact.

use std::io::{BufRead, BufReader, Read, Write};

use super::Module;
use crate::autodiff::Tensor;
use crate::{Error, Result};

const MAGIC: &str = "marl-comm-checkpoint 1";

pub fn write_checkpoint<W: Write>(mut out: W, params: &[(String, &Tensor)]) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    for (name, t) in params {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("invalid parameter name {name:?}")));
        }
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        write!(out, "{} {}", name, dims.join("x"))?;
        for v in t.values() {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Vec<(String, Tensor)>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(Ok(first)) if first.trim() == MAGIC => {}
        _ => return Err(Error::Checkpoint("missing header".into())),
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Checkpoint(format!("line {}: {}", lineno + 2, what));
        let mut fields = line.split_ascii_whitespace();
        let name = fields.next().ok_or_else(|| bad("missing name"))?;
        let dims = fields.next().ok_or_else(|| bad("missing shape"))?;
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad("bad shape")))
            .collect::<Result<Vec<_>>>()?;
        let values = fields
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(values, &shape, false).map_err(|e| bad(&e.to_string()))?;
        out.push((name.to_string(), t));
    }
    Ok(out)
}

pub fn save_checkpoint<M: Module + ?Sized, W: Write>(module: &M, out: W) -> Result<()> {
    write_checkpoint(out, &module.named_params())
}

/// Loads values into `module`, matching names and shapes exactly.
pub fn load_checkpoint<M: Module + ?Sized, R: Read>(module: &mut M, input: R) -> Result<()> {
    let loaded = read_checkpoint(input)?;
    let names: Vec<String> = module.named_params().into_iter().map(|(n, _)| n).collect();
    if names.len() != loaded.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, found {}",
            names.len(),
            loaded.len()
        )));
    }
    for ((name, dst), (lname, src)) in names.iter().zip(module.params_mut()).zip(&loaded) {
        if name != lname {
            return Err(Error::Checkpoint(format!("expected {name}, found {lname}")));
        }
        dst.copy_values_from(src)
            .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::QNetwork;
    use crate::rng::seeded;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = QNetwork::new(7, 8, 6, &mut seeded(11)).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&net, &mut buf).unwrap();
        let mut other = QNetwork::new(7, 8, 6, &mut seeded(12)).unwrap();
        load_checkpoint(&mut other, buf.as_slice()).unwrap();
        for (a, b) in net.params().iter().zip(other.params()) {
            let ab: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = QNetwork::new(7, 8, 6, &mut seeded(11)).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&net, &mut buf).unwrap();
        let mut wider = QNetwork::new(7, 16, 6, &mut seeded(11)).unwrap();
        assert!(load_checkpoint(&mut wider, buf.as_slice()).is_err());
        assert!(read_checkpoint("nonsense\n".as_bytes()).is_err());
    }
}
