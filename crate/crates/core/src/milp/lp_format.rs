use std::fmt::Write as _;
use std::io::{self, Write};

use super::{MilpModel, Sense, VarId, VarKind};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.".contains(c) { c } else { '_' })
        .collect()
}

fn term_list(out: &mut String, model: &MilpModel, terms: impl Iterator<Item = (VarId, f64)>) {
    let mut first = true;
    for (v, c) in terms {
        if c == 0.0 {
            continue;
        }
        let name = sanitize(&model.var(v).name);
        if first {
            let _ = write!(out, "{c} {name}");
            first = false;
        } else if c < 0.0 {
            let _ = write!(out, " - {} {name}", -c);
        } else {
            let _ = write!(out, " + {c} {name}");
        }
    }
    if first {
        out.push('0');
    }
}

/// Writes `model` in CPLEX LP text format.
pub fn write_lp<W: Write>(model: &MilpModel, mut w: W) -> io::Result<()> {
    let mut out = String::from("\\ evgrid model\nMinimize\n obj: ");
    term_list(
        &mut out,
        model,
        model.vars().iter().enumerate().map(|(i, v)| (VarId(i), v.objective)),
    );
    out.push_str("\nSubject To\n");
    for (i, row) in model.constraints().iter().enumerate() {
        let _ = write!(out, " r{i}_{}: ", sanitize(&row.name));
        term_list(&mut out, model, row.terms.iter().copied());
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for v in model.vars() {
        let name = sanitize(&v.name);
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {name} = {}", v.lower);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", v.upper);
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    for (header, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
        let names: Vec<_> =
            model.vars().iter().filter(|v| v.kind == kind).map(|v| sanitize(&v.name)).collect();
        if !names.is_empty() {
            let _ = writeln!(out, "{header}");
            for chunk in names.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
    }
    out.push_str("End\n");
    w.write_all(out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::LinearConstraint;

    #[test]
    fn sections_and_markers() {
        let mut m = MilpModel::new();
        let x = m.add_var("x[0,1]", 0.0, 1.0, VarKind::Binary, 2.5).unwrap();
        let y = m.add_var("y", f64::NEG_INFINITY, f64::INFINITY, VarKind::Continuous, 0.0).unwrap();
        m.add_constraint(LinearConstraint::new("g", "c", vec![(x, 1.0), (y, -2.0)], Sense::Ge, 1.0))
            .unwrap();
        let mut buf = Vec::new();
        write_lp(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("obj: 2.5 x_0_1_"));
        assert!(text.contains("r0_c: 1 x_0_1_ - 2 y >= 1"));
        assert!(text.contains(" y free"));
        assert!(text.contains("Binaries\n x_0_1_"));
        assert!(text.ends_with("End\n"));
    }
}
