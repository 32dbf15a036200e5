//! Writes a problem in the textual LP interchange format for debugging.

use super::{LpProblem, VarBound};
use crate::symbolic::Relation;
use std::io::Write;

pub fn write_lp_format<W: Write>(w: &mut W, problem: &LpProblem) -> std::io::Result<()> {
    writeln!(w, "\\ dumped by polyrepair {}", crate::VERSION)?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    for (id, coeff) in problem.objective.terms() {
        write!(w, " {} x{}", signed(coeff), id.0)?;
    }
    if problem.objective.constant_part() != 0.0 {
        write!(w, " {}", signed(problem.objective.constant_part()))?;
    }
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for (i, c) in problem.constraints.iter().enumerate() {
        write!(w, " c{i}:")?;
        for (id, coeff) in c.expr.terms() {
            write!(w, " {} x{}", signed(coeff), id.0)?;
        }
        let rel = match c.rel {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        writeln!(w, " {} {}", rel, c.rhs - c.expr.constant_part())?;
    }
    writeln!(w, "Bounds")?;
    for (j, bound) in problem.bounds.iter().enumerate() {
        if *bound == VarBound::Free {
            writeln!(w, " x{j} free")?;
        }
    }
    writeln!(w, "End")
}

fn signed(v: f64) -> String {
    if v >= 0.0 {
        format!("+ {v}")
    } else {
        format!("- {}", -v)
    }
}
