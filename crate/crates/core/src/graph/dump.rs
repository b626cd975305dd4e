use std::io::{self, Write};

use super::{prior_residual, residual, FactorGraph, GraphValues};
use crate::io::format_float;
use crate::lie::LieGroup;

/// Line-oriented text dump of a graph for inspection:
///
/// ```text
/// variable <id> <16 row-major matrix entries>
/// between <i> <j> <residual norm | nan>
/// prior <i> <residual norm | nan>
/// ```
pub fn write_dump<G: LieGroup, W: Write>(
    out: &mut W,
    graph: &FactorGraph<G>,
    values: &GraphValues<G>,
) -> io::Result<()> {
    writeln!(out, "# variables {} factors {}", values.len(), graph.len())?;
    for (id, x) in values {
        write!(out, "variable {}", id.0)?;
        let m = x.to_matrix();
        for r in 0..4 {
            for c in 0..4 {
                write!(out, " {}", format_float(m[(r, c)]))?;
            }
        }
        writeln!(out)?;
    }
    for f in graph.between_factors() {
        let norm = residual(f, values).map(|e| e.norm()).unwrap_or(f64::NAN);
        writeln!(out, "between {} {} {}", f.i.0, f.j.0, format_float(norm))?;
    }
    for p in graph.prior_factors() {
        let norm = prior_residual(p, values)
            .map(|e| e.norm())
            .unwrap_or(f64::NAN);
        writeln!(out, "prior {} {}", p.i.0, format_float(norm))?;
    }
    Ok(())
}
