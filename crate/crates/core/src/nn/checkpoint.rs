//! Plain-text network checkpoints.
//!
//! Layout (one record per line, `#` comments allowed):
//!
//! ```text
//! certrl-mlp 1
//! layers <L>
//! layer <rows> <cols> <activation>     # repeated L times, each followed by:
//! weights <rows*cols values, row-major>
//! bias <rows values>
//! ```
//!
//! Floats carry 17 significant digits so a save/load cycle is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::textio::{self, fmt_vec, parse_vec, Lines};

use super::{Activation, Layer, Mlp};

const MAGIC: &str = "certrl-mlp";
const VERSION: &str = "1";

pub fn to_text(net: &Mlp) -> String {
    let mut out = format!("{MAGIC} {VERSION}\nlayers {}\n", net.layers().len());
    for l in net.layers() {
        out.push_str(&format!(
            "layer {} {} {}\nweights {}\nbias {}\n",
            l.weights.rows(),
            l.weights.cols(),
            l.activation,
            fmt_vec(l.weights.data()),
            fmt_vec(&l.bias)
        ));
    }
    out
}

pub fn from_text(text: &str, path: &Path) -> Result<Mlp> {
    parse(text).map_err(|reason| Error::parse("network checkpoint", path, reason))
}

fn parse(text: &str) -> std::result::Result<Mlp, String> {
    let mut lines = Lines::new(text);
    let (_, magic) = lines.expect(MAGIC)?;
    if magic != [VERSION] {
        return Err(format!("unsupported version {magic:?}"));
    }
    let (_, n) = lines.expect("layers")?;
    let n: usize = single(&n)?.parse().map_err(|e| format!("bad layer count: {e}"))?;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let (no, head) = lines.expect("layer")?;
        if head.len() != 3 {
            return Err(format!("line {no}: expected `layer <rows> <cols> <activation>`"));
        }
        let rows: usize = head[0].parse().map_err(|e| format!("line {no}: {e}"))?;
        let cols: usize = head[1].parse().map_err(|e| format!("line {no}: {e}"))?;
        let act: Activation = head[2].parse().map_err(|e: Error| e.to_string())?;
        let (_, w) = lines.expect("weights")?;
        let (_, b) = lines.expect("bias")?;
        let w = parse_vec(w.into_iter())?;
        let b = parse_vec(b.into_iter())?;
        let weights = Matrix::from_vec(rows, cols, w).map_err(|e| e.to_string())?;
        layers.push(Layer::new(weights, b, act).map_err(|e| e.to_string())?);
    }
    if let Some((no, key, _)) = lines.next_record() {
        return Err(format!("line {no}: trailing record `{key}`"));
    }
    Mlp::new(layers).map_err(|e| e.to_string())
}

fn single<'a>(toks: &[&'a str]) -> std::result::Result<&'a str, String> {
    match toks {
        [t] => Ok(t),
        _ => Err(format!("expected one value, got {}", toks.len())),
    }
}

pub fn save(net: &Mlp, path: &Path) -> Result<()> {
    textio::write_string(path, &to_text(net))
}

pub fn load(path: &Path) -> Result<Mlp> {
    from_text(&textio::read_to_string(path)?, path)
}
