//! Field snapshot files.
//!
//! ```text
//! pcurl-field v1 <kind> <nx> <ny> <nz> <ex> <ey> <ez>
//! <value>
//! <value>
//! ...
//! ```
//!
//! `kind` is one of `face`, `edge`, `cell`, `surface`; values follow the
//! index order documented on [`GridSpec`]. Reals are written in shortest
//! round-trip scientific notation, so a write/read cycle is lossless.

use std::io::{BufRead, Write};

use super::field::{FieldKind, GridField};
use super::grid::{build_grid, GridSpec};
use crate::error::{Error, Result};

const MAGIC: &str = "pcurl-field";
const VERSION: &str = "v1";

/// A field read back from disk, tagged by its kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: FieldKind,
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl Snapshot {
    /// Converts into a concrete field type, checking the kind tag.
    pub fn into_field<F: GridField>(self) -> Result<F> {
        if self.kind != F::KIND {
            return Err(Error::Format(format!(
                "expected a {} snapshot, found {}",
                F::KIND.tag(),
                self.kind.tag()
            )));
        }
        F::from_vec(&self.grid, self.data)
    }
}

pub fn write_snapshot<F: GridField, W: Write>(field: &F, mut out: W) -> Result<()> {
    let g = field.grid();
    writeln!(
        out,
        "{MAGIC} {VERSION} {} {} {} {} {:e} {:e} {:e}",
        F::KIND.tag(),
        g.cells[0],
        g.cells[1],
        g.cells[2],
        g.extents[0],
        g.extents[1],
        g.extents[2]
    )?;
    for v in field.data() {
        writeln!(out, "{v:e}")?;
    }
    Ok(())
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Snapshot> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty snapshot".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 9 || parts[0] != MAGIC || parts[1] != VERSION {
        return Err(Error::Format(format!("bad snapshot header: {header:?}")));
    }
    let kind = FieldKind::from_tag(parts[2])
        .ok_or_else(|| Error::Format(format!("unknown field kind {:?}", parts[2])))?;
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad cell count {s:?}")))
    };
    let parse_f64 = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("bad real {s:?}")))
    };
    let cells = [parse_usize(parts[3])?, parse_usize(parts[4])?, parse_usize(parts[5])?];
    let extents = [parse_f64(parts[6])?, parse_f64(parts[7])?, parse_f64(parts[8])?];
    let grid = build_grid(extents, cells)?;
    let n = kind.len(&grid);
    let mut data = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        data.push(
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: bad real {t:?}", lineno + 2)))?,
        );
    }
    if data.len() != n {
        return Err(Error::Format(format!(
            "snapshot has {} values, grid needs {n}",
            data.len()
        )));
    }
    Ok(Snapshot { kind, grid, data })
}
