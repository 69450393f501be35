//! CPLEX-LP style text export for cross-checking with external solvers.
//!
//! Numbers are written as plain decimals that round-trip through `f64`, so a
//! reader parsing the file recovers the exact coefficients.

use std::fmt::Write as _;

use crate::scalar::Scalar;

use super::{MilpProblem, RowSense, VarKind};

fn num<T: Scalar>(v: &T) -> String {
    let f = v.as_f64();
    if f == 0.0 {
        "0".to_string()
    } else {
        format!("{f}")
    }
}

fn term<T: Scalar>(out: &mut String, coef: &T, name: &str, first: bool) {
    let f = coef.as_f64();
    let sign = if f < 0.0 { "-" } else if first { "" } else { "+" };
    let mag = num(&coef.abs());
    if sign.is_empty() {
        let _ = write!(out, " {mag} {name}");
    } else {
        let _ = write!(out, " {sign} {mag} {name}");
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect()
}

pub fn write_lp<T: Scalar>(p: &MilpProblem<T>) -> String {
    let names: Vec<String> = p.vars.iter().map(|v| sanitize(&v.name)).collect();
    let mut out = String::from("Minimize\n obj:");
    let mut first = true;
    for (v, name) in p.vars.iter().zip(&names) {
        if !v.cost.is_zero() {
            term(&mut out, &v.cost, name, first);
            first = false;
        }
    }
    if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, row) in p.rows.iter().enumerate() {
        let _ = write!(out, " c{i}_{}:", sanitize(&row.name));
        if row.coefs.is_empty() {
            out.push_str(" 0");
        }
        for (k, (j, a)) in row.coefs.iter().enumerate() {
            term(&mut out, a, &names[*j], k == 0);
        }
        let op = match row.sense {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", num(&row.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in p.vars.iter().zip(&names) {
        match (&v.lower, &v.upper) {
            (None, None) => {
                let _ = writeln!(out, " {name} free");
            }
            (Some(l), None) => {
                let _ = writeln!(out, " {name} >= {}", num(l));
            }
            (None, Some(u)) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", num(u));
            }
            (Some(l), Some(u)) => {
                let _ = writeln!(out, " {} <= {name} <= {}", num(l), num(u));
            }
        }
    }
    for (label, kind) in [("General", VarKind::Integer), ("Binary", VarKind::Binary)] {
        let list: Vec<&str> = p
            .vars
            .iter()
            .zip(&names)
            .filter(|(v, _)| v.kind == kind)
            .map(|(_, n)| n.as_str())
            .collect();
        if !list.is_empty() {
            let _ = writeln!(out, "{label}\n {}", list.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
