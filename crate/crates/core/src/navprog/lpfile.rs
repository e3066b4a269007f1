//! `navlp v1` text interchange format.
//!
//! ```text
//! navlp v1 <vars> <eq rows> <ineq rows>
//! OBJ
//! 0 <col> <value>
//! EQ
//! <row> <col> <value>
//! <row> rhs <value>
//! INEQ
//! <row> <col> <value>        (rows read as  a x <= rhs)
//! <row> rhs <value>
//! BOUNDS
//! lo <col> <value>
//! up <col> <value>
//! ```
//!
//! Absent entries are zero, absent bounds are infinite, and empty sections
//! are omitted. Values use the shortest decimal form that parses back to
//! the same `f64`, so a round trip is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::sparse::SparseMatrix;
use super::LinearProgram;
use crate::error::{Error, Result};

pub fn to_text(lp: &LinearProgram) -> String {
    let n = lp.c.len();
    let mut s = format!("navlp v1 {} {} {}\n", n, lp.a_eq.nrows(), lp.a_ineq.nrows());
    if lp.c.iter().any(|v| *v != 0.0) {
        s.push_str("OBJ\n");
        for (j, v) in lp.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(s, "0 {j} {v}").unwrap();
        }
    }
    let block = |s: &mut String, name: &str, m: &SparseMatrix, rhs: &[f64]| {
        if m.nrows() == 0 {
            return;
        }
        writeln!(s, "{name}").unwrap();
        for (i, c, v) in m.triplets() {
            writeln!(s, "{i} {c} {v}").unwrap();
        }
        for (i, v) in rhs.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(s, "{i} rhs {v}").unwrap();
        }
    };
    block(&mut s, "EQ", &lp.a_eq, &lp.b_eq);
    block(&mut s, "INEQ", &lp.a_ineq, &lp.b_ineq);
    let finite = lp.lower.iter().chain(&lp.upper).any(|v| v.is_finite());
    if finite {
        s.push_str("BOUNDS\n");
        for j in 0..n {
            if lp.lower[j].is_finite() {
                writeln!(s, "lo {j} {}", lp.lower[j]).unwrap();
            }
            if lp.upper[j].is_finite() {
                writeln!(s, "up {j} {}", lp.upper[j]).unwrap();
            }
        }
    }
    s
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Obj,
    Eq,
    Ineq,
    Bounds,
}

pub fn parse(text: &str) -> Result<LinearProgram> {
    let err = |line: usize, message: String| Error::Parse {
        what: "navlp",
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (ln, head) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let f: Vec<&str> = head.split_whitespace().collect();
    if f.len() != 5 || f[0] != "navlp" || f[1] != "v1" {
        return Err(err(ln, format!("bad header '{head}'")));
    }
    let dims: Vec<usize> = f[2..]
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(ln, e.to_string()))?;
    let (n, meq, min) = (dims[0], dims[1], dims[2]);

    let mut c = vec![0.0; n];
    let mut eq = Vec::new();
    let mut ineq = Vec::new();
    let mut b_eq = vec![0.0; meq];
    let mut b_in = vec![0.0; min];
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    let mut section = Section::None;
    let mut seen = Vec::new();

    for (ln, line) in lines {
        let next = match line {
            "OBJ" => Some(Section::Obj),
            "EQ" => Some(Section::Eq),
            "INEQ" => Some(Section::Ineq),
            "BOUNDS" => Some(Section::Bounds),
            _ => None,
        };
        if let Some(sec) = next {
            if seen.contains(&line) {
                return Err(err(ln, format!("duplicate section {line}")));
            }
            seen.push(line);
            section = sec;
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(err(ln, format!("expected three fields, got '{line}'")));
        }
        let value: f64 = t[2].parse().map_err(|e| err(ln, format!("value: {e}")))?;
        let index = |tok: &str, limit: usize, what: &str| -> Result<usize> {
            let i: usize = tok.parse().map_err(|e| err(ln, format!("{what}: {e}")))?;
            if i >= limit {
                return Err(err(ln, format!("{what} {i} out of range {limit}")));
            }
            Ok(i)
        };
        match section {
            Section::None => return Err(err(ln, "entry before any section".into())),
            Section::Obj => {
                if t[0] != "0" {
                    return Err(err(ln, "objective row must be 0".into()));
                }
                c[index(t[1], n, "column")?] = value;
            }
            Section::Eq | Section::Ineq => {
                let rows = if section == Section::Eq { meq } else { min };
                let r = index(t[0], rows, "row")?;
                if t[1] == "rhs" {
                    if section == Section::Eq {
                        b_eq[r] = value;
                    } else {
                        b_in[r] = value;
                    }
                } else {
                    let col = index(t[1], n, "column")?;
                    if section == Section::Eq {
                        eq.push((r, col, value));
                    } else {
                        ineq.push((r, col, value));
                    }
                }
            }
            Section::Bounds => {
                let col = index(t[1], n, "column")?;
                match t[0] {
                    "lo" => lower[col] = value,
                    "up" => upper[col] = value,
                    other => return Err(err(ln, format!("unknown bound kind '{other}'"))),
                }
            }
        }
    }
    Ok(LinearProgram {
        c,
        a_eq: SparseMatrix::from_triplets(meq, n, &eq),
        b_eq,
        a_ineq: SparseMatrix::from_triplets(min, n, &ineq),
        b_ineq: b_in,
        lower,
        upper,
        layout: None,
    })
}

pub fn write(lp: &LinearProgram, path: &Path) -> Result<()> {
    crate::io::write_bytes(path, to_text(lp).as_bytes())
}

pub fn read(path: &Path) -> Result<LinearProgram> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse(&text)
}
