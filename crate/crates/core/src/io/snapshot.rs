//! `FIELD2D <nx> <ny> <lx> <ly> <t> <name>` followed by `ny` rows of `nx`
//! values, bottom row first.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::field::{Grid2D, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub name: String,
    pub t: f64,
}

pub fn format_field_snapshot(f: &ScalarField, name: &str, t: f64) -> Result<String> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::Input(format!("snapshot name `{name}` must be a single nonempty word")));
    }
    let g = f.grid();
    let mut out = String::new();
    let _ = writeln!(out, "FIELD2D {} {} {:?} {:?} {:?} {}", g.nx(), g.ny(), g.lx(), g.ly(), t, name);
    for row in f.values().chunks(g.nx()) {
        let mut first = true;
        for x in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{x:?}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_field_snapshot(f: &ScalarField, name: &str, t: f64, path: &Path) -> Result<()> {
    write_atomic(path, &format_field_snapshot(f, name, t)?)
}

pub fn parse_field_snapshot(text: &str) -> Result<(ScalarField, SnapshotMeta)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Format { line: 1, msg: "empty snapshot".into() })?;
    let bad = |msg: String| Error::Format { line: 1, msg };
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 7 || parts[0] != "FIELD2D" {
        return Err(bad(format!("expected `FIELD2D nx ny lx ly t name`, got `{header}`")));
    }
    let nx: usize = parts[1].parse().map_err(|_| bad(format!("bad nx `{}`", parts[1])))?;
    let ny: usize = parts[2].parse().map_err(|_| bad(format!("bad ny `{}`", parts[2])))?;
    let lx: f64 = parts[3].parse().map_err(|_| bad(format!("bad lx `{}`", parts[3])))?;
    let ly: f64 = parts[4].parse().map_err(|_| bad(format!("bad ly `{}`", parts[4])))?;
    let t: f64 = parts[5].parse().map_err(|_| bad(format!("bad t `{}`", parts[5])))?;
    let grid = Grid2D::new(nx, ny, lx, ly).map_err(|e| bad(e.to_string()))?;

    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let line_no = j + 2;
        let line = lines.next().ok_or(Error::Format {
            line: line_no,
            msg: format!("expected {ny} value rows, found {j}"),
        })?;
        let before = values.len();
        for tok in line.split_whitespace() {
            let x: f64 = tok.parse().map_err(|_| Error::Format {
                line: line_no,
                msg: format!("bad value `{tok}`"),
            })?;
            values.push(x);
        }
        let got = values.len() - before;
        if got != nx {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected {nx} values, found {got}"),
            });
        }
    }
    if let Some((k, extra)) = lines.enumerate().find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Format {
            line: ny + 2 + k,
            msg: format!("unexpected trailing data `{extra}`"),
        });
    }
    let field = ScalarField::from_values(grid, values).map_err(|e| bad(e.to_string()))?;
    Ok((
        field,
        SnapshotMeta {
            name: parts[6].to_string(),
            t,
        },
    ))
}

pub fn read_field_snapshot(path: impl AsRef<Path>) -> Result<(ScalarField, SnapshotMeta)> {
    parse_field_snapshot(&read_text(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_have_known_bytes() {
        let g = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let f = ScalarField::zeros(g);
        let s = format_field_snapshot(&f, "u", 0.5).unwrap();
        assert!(s.starts_with("FIELD2D 4 4 1.0 1.0 0.5 u\n0.0 0.0 0.0 0.0\n"));
        assert_eq!(s.lines().count(), 5);
    }

    #[test]
    fn count_mismatch_names_line() {
        let text = "FIELD2D 4 4 1.0 1.0 0.0 v\n1 2 3 4\n1 2 3\n1 2 3 4\n1 2 3 4\n";
        match parse_field_snapshot(text) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_field_snapshot("FIELD3D 4 4 1 1 0 v\n") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_names() {
        let f = ScalarField::zeros(Grid2D::unit_square(4).unwrap());
        assert!(format_field_snapshot(&f, "two words", 0.0).is_err());
        assert!(format_field_snapshot(&f, "", 0.0).is_err());
    }
}
