//! Sparse SDPA (`.dat-s`) reader and writer.
//!
//! The file describes `max <F_0, Y> s.t. <F_j, Y> = c_j, Y >= 0`. A standard
//! form problem `min <C, X> s.t. <A_j, X> = b_j` is written with `F_0 = -C`,
//! `F_j = A_j`, `c_j = b_j`, so an external solver reports the negated optimum.
//! Block sizes are negative for diagonal blocks; entries are 1-based
//! `<matrix> <block> <i> <j> <value>` with `i <= j`.

use std::fmt::Write as _;

use super::{BlockKind, BlockSpec, Constraint, SdpProblem, Sense, SparseBlockMatrix};
use crate::error::{Error, Result};

const OFFSET_TAG: &str = "objective offset";

/// Serializes a standard-form problem.
pub fn write(prob: &SdpProblem) -> Result<String> {
    if let Some(j) = prob.constraints.iter().position(|c| c.sense != Sense::Eq) {
        return Err(Error::NotStandardForm(j));
    }
    let mut out = String::new();
    let variant = if prob.meta.variant.is_empty() { "sdp" } else { &prob.meta.variant };
    let _ = writeln!(out, "\"{variant}: minimize <C,X>; matrix 0 holds -C");
    if prob.offset != 0.0 {
        let _ = writeln!(out, "* {OFFSET_TAG} {}", prob.offset);
    }
    let _ = writeln!(out, "{}", prob.constraints.len());
    let _ = writeln!(out, "{}", prob.blocks.len());
    let sizes: Vec<String> = prob
        .blocks
        .iter()
        .map(|b| match b.kind {
            BlockKind::Psd => b.dim.to_string(),
            BlockKind::Diagonal => format!("-{}", b.dim),
        })
        .collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = prob.constraints.iter().map(|c| fmt_value(c.rhs)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));
    for (b, r, c, v) in prob.objective.iter() {
        let _ = writeln!(out, "0 {} {} {} {}", b + 1, r + 1, c + 1, fmt_value(-v));
    }
    for (j, con) in prob.constraints.iter().enumerate() {
        for (b, r, c, v) in con.coeffs.iter() {
            let _ = writeln!(out, "{} {} {} {} {}", j + 1, b + 1, r + 1, c + 1, fmt_value(v));
        }
    }
    Ok(out)
}

fn fmt_value(v: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{v:?}")
}

/// Parses a sparse SDPA file into a standard-form problem.
pub fn read(text: &str) -> Result<SdpProblem> {
    let mut offset = 0.0;
    let mut tokens: Vec<&str> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with('"') || trimmed.starts_with('*') {
            if let Some(rest) = trimmed.trim_start_matches('*').trim().strip_prefix(OFFSET_TAG) {
                offset = parse_f64(rest.trim())?;
            }
            continue;
        }
        tokens.extend(
            trimmed
                .split(|ch: char| ch.is_whitespace() || matches!(ch, ',' | '{' | '}' | '(' | ')'))
                .filter(|t| t.starts_with(|ch: char| ch.is_ascii_digit() || matches!(ch, '-' | '+' | '.'))),
        );
    }
    let mut it = tokens.into_iter();

    let m = parse_usize(next(&mut it, "constraint count")?)?;
    let nblocks = parse_usize(next(&mut it, "block count")?)?;
    let mut blocks = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let size: i64 = next(&mut it, "block size")?
            .parse()
            .map_err(|_| Error::Parse("block size is not an integer".into()))?;
        blocks.push(match size {
            s if s > 0 => BlockSpec::psd(s as usize),
            s if s < 0 => BlockSpec::diagonal((-s) as usize),
            _ => return Err(Error::Parse("zero block size".into())),
        });
    }
    let mut rhs = Vec::with_capacity(m);
    for _ in 0..m {
        rhs.push(parse_f64(next(&mut it, "right-hand side")?)?);
    }
    let mut prob = SdpProblem::new(blocks);
    let mut coeffs = vec![SparseBlockMatrix::new(); m];
    loop {
        let Some(first) = it.next() else { break };
        let mat = parse_usize(first)?;
        let block = parse_usize(next(&mut it, "block index")?)?;
        let i = parse_usize(next(&mut it, "row index")?)?;
        let j = parse_usize(next(&mut it, "column index")?)?;
        let v = parse_f64(next(&mut it, "value")?)?;
        if block == 0 || block > prob.blocks.len() || i == 0 || j == 0 || mat > m {
            return Err(Error::Parse(format!("entry {mat} {block} {i} {j} out of range")));
        }
        let (b, r, c) = (block - 1, i - 1, j - 1);
        if mat == 0 {
            prob.objective.add(b, r, c, -v);
        } else {
            coeffs[mat - 1].add(b, r, c, v);
        }
    }
    prob.constraints = coeffs.into_iter().zip(rhs).map(|(a, b)| Constraint::new(a, Sense::Eq, b)).collect();
    prob.offset = offset;
    prob.meta.standard_form = true;
    prob.meta.slack_of = vec![None; m];
    prob.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(prob)
}

fn next<'a>(it: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<&'a str> {
    it.next().ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))
}

fn parse_usize(t: &str) -> Result<usize> {
    t.parse().map_err(|_| Error::Parse(format!("expected a non-negative integer, got {t:?}")))
}

fn parse_f64(t: &str) -> Result<f64> {
    t.parse().map_err(|_| Error::Parse(format!("expected a number, got {t:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_problem_layout() {
        let mut p = SdpProblem::new(vec![BlockSpec::psd(2), BlockSpec::diagonal(1)]);
        p.objective.add(0, 0, 1, 0.5);
        let mut a = SparseBlockMatrix::new();
        a.add(0, 0, 0, 1.0);
        a.add(1, 0, 0, -1.0);
        p.push(Constraint::new(a, Sense::Eq, 1.0));
        let text = write(&p).unwrap();
        let body: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(body, vec!["1", "2", "2 -1", "1.0", "0 1 1 2 -0.5", "1 1 1 1 1.0", "1 2 1 1 -1.0"]);
    }

    #[test]
    fn rejects_inequalities_and_garbage() {
        let mut p = SdpProblem::new(vec![BlockSpec::psd(1)]);
        p.push(Constraint::new(SparseBlockMatrix::new(), Sense::Le, 1.0));
        assert!(write(&p).is_err());
        assert!(read("1\n1\n2\n").is_err());
        assert!(read("1\n1\n2\n1.0\n1 3 1 1 1.0\n").is_err());
        assert!(read("1\n1\n-2\n1.0\n1 1 1 2 1.0\n").is_err());
    }

    #[test]
    fn accepts_sdpa_punctuation() {
        let text = "\"example\n2 =mdim\n2 =nblocks\n{2, -2}\n{10.0, 20.0}\n0 1 1 1 1.0\n1 1 1 2 3.5\n2 2 2 2 4.0\n";
        let p = read(text).unwrap();
        assert_eq!(p.blocks, vec![BlockSpec::psd(2), BlockSpec::diagonal(2)]);
        assert_eq!(p.objective.get(0, 0, 0), -1.0);
        assert_eq!(p.constraints[0].coeffs.get(0, 0, 1), 3.5);
        assert_eq!(p.constraints[1].rhs, 20.0);
    }

    fn arb_problem() -> impl Strategy<Value = SdpProblem> {
        let entry = (0usize..2, 0usize..4, 0usize..4, -1e3f64..1e3);
        (proptest::collection::vec(entry.clone(), 0..12), proptest::collection::vec((proptest::collection::vec(entry, 0..8), -50.0f64..50.0), 0..6), -5.0f64..5.0)
            .prop_map(|(obj, cons, offset)| {
                let mut p = SdpProblem::new(vec![BlockSpec::psd(4), BlockSpec::diagonal(4)]);
                let fix = |b: usize, r: usize, c: usize| if b == 1 { (r, r) } else { (r, c) };
                for (b, r, c, v) in obj {
                    let (r, c) = fix(b, r, c);
                    p.objective.add(b, r, c, v);
                }
                for (entries, rhs) in cons {
                    let mut a = SparseBlockMatrix::new();
                    for (b, r, c, v) in entries {
                        let (r, c) = fix(b, r, c);
                        a.add(b, r, c, v);
                    }
                    p.push(Constraint::new(a, Sense::Eq, rhs));
                }
                p.offset = offset;
                p
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(p in arb_problem()) {
            let back = read(&write(&p).unwrap()).unwrap();
            prop_assert_eq!(&back.blocks, &p.blocks);
            prop_assert_eq!(&back.objective, &p.objective);
            prop_assert_eq!(back.offset, p.offset);
            prop_assert_eq!(back.constraints.len(), p.constraints.len());
            for (a, b) in back.constraints.iter().zip(&p.constraints) {
                prop_assert_eq!(&a.coeffs, &b.coeffs);
                prop_assert_eq!(a.rhs, b.rhs);
            }
        }
    }
}
