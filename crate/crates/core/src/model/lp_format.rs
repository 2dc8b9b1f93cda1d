use std::fmt::Write as _;
use std::io::{self, Write};

use super::{LinearExpr, MilpProblem, Objective, Relation};

const TERMS_PER_LINE: usize = 6;

fn number(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // Shortest round-trip representation, so output is reproducible.
        format!("{x:?}")
    }
}

fn write_terms(out: &mut String, problem: &MilpProblem, expr: &LinearExpr) {
    if expr.terms.is_empty() {
        out.push_str(" 0 Z");
        return;
    }
    for (i, &(v, c)) in expr.terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(
            out,
            " {sign} {} {}",
            number(c.abs()),
            problem.variables[v.0].key
        );
    }
}

/// Writes the problem in CPLEX LP format, minimising `objective`.
pub fn write_lp<W: Write>(
    problem: &MilpProblem,
    objective: Objective,
    mut out: W,
) -> io::Result<()> {
    let mut s = String::new();
    let meta = problem.meta();
    let _ = writeln!(
        s,
        "\\ privshape: {} slots, {} shiftable appliances, objective {objective}",
        meta.num_slots,
        meta.appliance_ids.len()
    );
    s.push_str("Minimize\n obj:");
    write_terms(&mut s, problem, problem.objective(objective));
    s.push_str("\nSubject To\n");
    for (i, c) in problem.constraints().iter().enumerate() {
        let _ = write!(s, " c{}_{}:", i + 1, c.provenance);
        write_terms(&mut s, problem, &c.expr);
        let rel = match c.relation {
            Relation::LessEq => "<=",
            Relation::Eq => "=",
            Relation::GreaterEq => ">=",
        };
        let _ = writeln!(s, " {rel} {}", number(c.rhs));
    }
    s.push_str("Bounds\n");
    for v in problem.variables() {
        if v.binary {
            continue;
        }
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(s, " {} free", v.key);
        } else if v.lower != 0.0 || v.upper != f64::INFINITY {
            let _ = writeln!(
                s,
                " {} <= {} <= {}",
                number(v.lower),
                v.key,
                number(v.upper)
            );
        }
    }
    let binaries: Vec<String> = problem
        .variables()
        .iter()
        .filter(|v| v.binary)
        .map(|v| v.key.name())
        .collect();
    if !binaries.is_empty() {
        s.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE * 2) {
            let _ = writeln!(s, " {}", chunk.join(" "));
        }
    }
    s.push_str("End\n");
    out.write_all(s.as_bytes())
}
