//! Text COO format.
//!
//! ```text
//! dims: 30 30 200 base: 0
//! 0 0 0 1.25
//! 0 0 1 0.5
//! ```
//!
//! One entry per line, whitespace separated. Readers accept 0- or 1-based
//! indices per the header flag; the writer always emits base 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{CooTensor, Shape};
use crate::error::{Error, Result};

fn parse_header(line: &str) -> std::result::Result<(Vec<usize>, usize), String> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("dims:") {
        return Err("header must start with `dims:`".into());
    }
    let mut dims = Vec::new();
    let mut base = None;
    while let Some(tok) = tokens.next() {
        if tok == "base:" {
            let b = tokens.next().ok_or("missing base value")?;
            base = Some(match b {
                "0" => 0,
                "1" => 1,
                other => return Err(format!("base must be 0 or 1, got `{other}`")),
            });
            break;
        }
        dims.push(tok.parse::<usize>().map_err(|e| format!("bad dim `{tok}`: {e}"))?);
    }
    if tokens.next().is_some() {
        return Err("trailing tokens after base".into());
    }
    Ok((dims, base.ok_or("missing `base:`")?))
}

pub fn read_coo<R: Read>(reader: R) -> Result<CooTensor> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        })??;
    let (dims, base) = parse_header(&header).map_err(|msg| Error::Parse { line: 1, msg })?;
    let shape = Shape::new(dims).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let order = shape.order();
    let mut t = CooTensor::empty(shape);
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != order + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", order + 1, tokens.len()),
            });
        }
        let mut index = Vec::with_capacity(order);
        for tok in &tokens[..order] {
            let i: usize = tok.parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad index `{tok}`: {e}"),
            })?;
            if i < base {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index {i} below base {base}"),
                });
            }
            index.push(i - base);
        }
        let value: f64 = tokens[order].parse().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad value `{}`: {e}", tokens[order]),
        })?;
        t.insert(index, value).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
    }
    Ok(t)
}

pub fn write_coo<W: Write>(writer: W, t: &CooTensor) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let dims: Vec<String> = t.shape().dims().iter().map(|d| d.to_string()).collect();
    writeln!(w, "dims: {} base: 0", dims.join(" "))?;
    for (idx, v) in t.iter() {
        for i in idx {
            write!(w, "{i} ")?;
        }
        // `Display` for f64 prints the shortest string that round-trips.
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coo_file(path: impl AsRef<Path>) -> Result<CooTensor> {
    read_coo(File::open(path)?)
}

pub fn write_coo_file(path: impl AsRef<Path>, t: &CooTensor) -> Result<()> {
    write_coo(File::create(path)?, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_one_based_and_writes_zero_based() {
        let text = "dims: 2 3 base: 1\n1 1 0.5\n2 3 -1e-3\n";
        let t = read_coo(text.as_bytes()).unwrap();
        assert_eq!(t.get(&[0, 0]), Some(0.5));
        assert_eq!(t.get(&[1, 2]), Some(-1e-3));
        let mut out = Vec::new();
        write_coo(&mut out, &t).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("dims: 2 3 base: 0\n"));
        assert_eq!(read_coo(s.as_bytes()).unwrap(), t);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = read_coo("dims: 2 2 base: 0\n0 0 1\n0 x 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = read_coo("dims: 2 2 base: 0\n0 0 1\n0 0 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = read_coo("dims: 2 2 base: 0\n5 0 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(read_coo("dims: 2 2\n".as_bytes()).is_err());
        assert!(read_coo("dims: 2 2 base: 1\n0 1 1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn values_round_trip_exactly() {
        let shape = Shape::new(vec![3]).unwrap();
        let vals = [0.1 + 0.2, 1.0 / 3.0, -2.5e-300];
        let t = CooTensor::from_entries(shape, vals.iter().enumerate().map(|(i, &v)| (vec![i], v))).unwrap();
        let mut out = Vec::new();
        write_coo(&mut out, &t).unwrap();
        let back = read_coo(out.as_slice()).unwrap();
        for (i, v) in vals.iter().enumerate() {
            assert_eq!(back.get(&[i]).unwrap().to_bits(), v.to_bits());
        }
    }
}
