//! Write-only LP-style text rendering for debugging.
//!
//! ```text
//! \ <title>
//! Minimize
//!  obj: 2 x0 - 1 x3 + 5
//! Subject To
//!  r0: 1 x0 + 1 x1 <= 4
//! Bounds
//!  0 <= x0 <= 1
//!  x2 free
//! Binaries
//!  x3
//! Quadratic
//!  [ 2 x0^2 ] / 2
//! End
//! ```

use std::fmt::{self, Write};

use super::{LinearProgram, MixedBinaryProgram, RowKind, Sense};

fn term(out: &mut String, first: &mut bool, coef: f64, var: usize) {
    if *first {
        let _ = write!(out, " {coef} x{var}");
    } else if coef < 0.0 {
        let _ = write!(out, " - {} x{var}", -coef);
    } else {
        let _ = write!(out, " + {coef} x{var}");
    }
    *first = false;
}

fn render(lp: &LinearProgram, binaries: &[usize], quad: &[f64]) -> String {
    let mut out = String::new();
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n obj:",
        Sense::Maximize => "Maximize\n obj:",
    });
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, &mut first, c, j);
        }
    }
    if lp.offset != 0.0 || first {
        let _ = write!(out, " + {}", lp.offset);
    }
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, " r{i}:");
        let mut first = true;
        for &(j, a) in &row.coefs {
            term(&mut out, &mut first, a, j);
        }
        if first {
            out.push_str(" 0");
        }
        let op = match row.kind {
            RowKind::Le => "<=",
            RowKind::Ge => ">=",
            RowKind::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " x{j} free");
            }
            (true, false) => {
                let _ = writeln!(out, " x{j} >= {lo}");
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= x{j} <= {hi}");
            }
            (true, true) => {
                let _ = writeln!(out, " {lo} <= x{j} <= {hi}");
            }
        }
    }
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for &b in binaries {
            let _ = writeln!(out, " x{b}");
        }
    }
    if quad.iter().any(|&q| q != 0.0) {
        out.push_str("Quadratic\n [");
        for (j, &q) in quad.iter().enumerate() {
            if q != 0.0 {
                let _ = write!(out, " + {q} x{j}^2");
            }
        }
        out.push_str(" ] / 2\n");
    }
    out.push_str("End\n");
    out
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self, &[], &[]))
    }
}

impl fmt::Display for MixedBinaryProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.lp, &self.binaries, &self.quad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_sections() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(0.0, 1.0, 2.0);
        let y = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, -1.0);
        lp.add_row(vec![(x, 1.0), (y, -3.0)], RowKind::Le, 4.0);
        let mut mbp = MixedBinaryProgram::new(lp, vec![x]);
        mbp.quad = vec![0.0, 2.0];
        let text = mbp.to_string();
        assert!(text.contains("obj: 2 x0 - 1 x1"));
        assert!(text.contains("r0: 1 x0 - 3 x1 <= 4"));
        assert!(text.contains("x1 free"));
        assert!(text.contains("Binaries\n x0"));
        assert!(text.contains("2 x1^2"));
    }
}
