//! Line-oriented numeric text helpers shared by the on-disk formats.
//!
//! Every float is written with 17 significant digits (`{:.16e}`), which
//! round-trips an `f64` bit-exactly. Reading accepts only that form.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_vec(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.16e}");
    }
    s
}

/// Parses a float and rejects any spelling other than the one [`fmt_f64`]
/// writes, so every value has exactly one accepted text form.
pub fn parse_f64(token: &str) -> std::result::Result<f64, String> {
    let x = token
        .parse::<f64>()
        .map_err(|e| format!("bad number {token:?}: {e}"))?;
    if fmt_f64(x) != token {
        return Err(format!("non-canonical number {token:?}, expected {:?}", fmt_f64(x)));
    }
    Ok(x)
}

pub fn parse_vec<'a>(tokens: impl Iterator<Item = &'a str>) -> std::result::Result<Vec<f64>, String> {
    tokens.map(parse_f64).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Splits `key rest...` lines, skipping blanks and `#` comments.
pub struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    /// Next significant line as `(line_number, key, remaining tokens)`.
    pub fn next_record(&mut self) -> Option<(usize, &'a str, Vec<&'a str>)> {
        for (no, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let key = toks.next()?;
            return Some((no + 1, key, toks.collect()));
        }
        None
    }

    /// Next record, which must carry `key`.
    pub fn expect(&mut self, key: &str) -> std::result::Result<(usize, Vec<&'a str>), String> {
        match self.next_record() {
            Some((no, k, rest)) if k == key => Ok((no, rest)),
            Some((no, k, _)) => Err(format!("line {no}: expected `{key}`, found `{k}`")),
            None => Err(format!("unexpected end of file, expected `{key}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn float_text_round_trips_bit_exactly(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_f64(&fmt_f64(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_vec(&[1.0, -2.5]), "1.0000000000000000e0 -2.5000000000000000e0");
    }

    #[test]
    fn alternate_spellings_rejected() {
        assert!(parse_f64("1.0000000000000000e0").is_ok());
        for bad in ["1.0000000000000000E0", "1", "1.00000000000000001e0", "+1.0000000000000000e0"] {
            assert!(parse_f64(bad).is_err(), "{bad}");
        }
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
    }
}
