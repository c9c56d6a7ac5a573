//! CSV export: a `# {json}` header line holding the grid, solver statistics
//! and kind, then a `tau,x_1..x_n,U` row per node and slice.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridSpec, PdeSolution, SolutionKind, SolveStats};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    kind: SolutionKind,
    grid: GridSpec,
    stats: SolveStats,
}

pub fn write_csv(sol: &PdeSolution, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        kind: sol.kind,
        grid: sol.grid.clone(),
        stats: sol.stats.clone(),
    };
    writeln!(w, "# {}", serde_json::to_string(&header)?)?;
    write!(w, "tau")?;
    for d in 1..=sol.grid.n {
        write!(w, ",x_{d}")?;
    }
    writeln!(w, ",U")?;
    for (k, tau) in sol.taus.iter().enumerate() {
        for (i, v) in sol.slice(k).iter().enumerate() {
            write!(w, "{tau:e}")?;
            for c in sol.node(i) {
                write!(w, ",{c:e}")?;
            }
            writeln!(w, ",{v:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<PdeSolution> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Parse("empty solution file".into()))??;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse("missing `# {json}` header line".into()))?;
    let header: Header = serde_json::from_str(json)?;
    header.grid.validate()?;
    lines
        .next()
        .ok_or_else(|| Error::Parse("missing column line".into()))??;
    let expected = header.grid.n_nodes() * (header.grid.slices + 1);
    let mut values = Vec::with_capacity(expected);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let last = line
            .rsplit(',')
            .next()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("bad value on data row {}", row + 1)))?;
        values.push(last);
    }
    if values.len() != expected {
        return Err(Error::Parse(format!(
            "expected {expected} rows, found {}",
            values.len()
        )));
    }
    Ok(PdeSolution::new(
        header.grid,
        header.kind,
        values,
        header.stats,
    ))
}
