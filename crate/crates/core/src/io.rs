//! Field files: a little-endian binary dump tagged with the domain identity,
//! and a `node,value` CSV.

use std::io::{Read, Write};

use crate::domain::{Domain, Field};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LFLD";
const VERSION: u32 = 1;

/// Writes magic, version, domain id, node count, then the values.
pub fn write_field<W: Write>(mut w: W, u: &Field) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u.domain_id().to_le_bytes())?;
    w.write_all(&(u.len() as u64).to_le_bytes())?;
    for x in u.values() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const K: usize, R: Read>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated field file: {e}")))?;
    Ok(buf)
}

/// Reads a dump written by [`write_field`] and checks it belongs to `domain`.
pub fn read_field<R: Read>(mut r: R, domain: &Domain) -> Result<Field> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("not a field file".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported field file version {version}"
        )));
    }
    let id = u64::from_le_bytes(read_array(&mut r)?);
    if id != domain.id() {
        return Err(Error::DomainMismatch(format!(
            "field was written on domain {id:016x}, not {:016x}",
            domain.id()
        )));
    }
    let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
    if count != domain.len() {
        return Err(Error::Format(format!(
            "field has {count} values, domain has {} nodes",
            domain.len()
        )));
    }
    let values = (0..count)
        .map(|_| read_array::<8, _>(&mut r).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after field values".into()));
    }
    Field::new(domain, values)
}

pub fn write_field_csv<W: Write>(mut w: W, u: &Field) -> Result<()> {
    writeln!(w, "node,value")?;
    for (i, x) in u.values().iter().enumerate() {
        writeln!(w, "{i},{x:.17e}")?;
    }
    Ok(())
}

pub fn read_field_csv<R: Read>(mut r: R, domain: &Domain) -> Result<Field> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut values = vec![f64::NAN; domain.len()];
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || {
            Error::Format(format!(
                "line {}: expected `node,value`, got `{line}`",
                line_no + 1
            ))
        };
        let (node, value) = line.split_once(',').ok_or_else(bad)?;
        let node: usize = node.trim().parse().map_err(|_| bad())?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        *values.get_mut(node).ok_or_else(bad)? = value;
    }
    if let Some(i) = values.iter().position(|x| x.is_nan()) {
        return Err(Error::Format(format!("no value for node {i}")));
    }
    Field::new(domain, values)
}
