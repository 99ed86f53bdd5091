//! Time-series CSV with a fixed header and shortest round-trip floats.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic};
use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

pub const HEADER: &str = "t,mass_u,l2_u,linf_u,min_u,mass_ode_residual,linf_U,l2_U,linf_v,min_v,l2_grad_w,l4_grad_w,linf_grad_w,linf_grad_v_over_v,energy_F,energy_identity_residual,gn1_ratio,gn2_ratio,upvq,dt_last";

const COLUMNS: usize = 20;
const UPVQ_COLUMN: usize = 18;

fn row_values(r: &DiagnosticsRecord) -> [Option<f64>; COLUMNS] {
    [
        Some(r.t),
        Some(r.mass_u),
        Some(r.l2_u),
        Some(r.linf_u),
        Some(r.min_u),
        Some(r.mass_ode_residual),
        Some(r.linf_U),
        Some(r.l2_U),
        Some(r.linf_v),
        Some(r.min_v),
        Some(r.l2_grad_w),
        Some(r.l4_grad_w),
        Some(r.linf_grad_w),
        Some(r.linf_grad_v_over_v),
        Some(r.energy_F),
        Some(r.energy_identity_residual),
        Some(r.gn1_ratio),
        Some(r.gn2_ratio),
        r.upvq,
        Some(r.dt_last),
    ]
}

pub fn format_timeseries_csv(records: &[DiagnosticsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Input("no records to write".into()));
    }
    let mut out = String::with_capacity(64 + records.len() * 400);
    out.push_str(HEADER);
    out.push('\n');
    for r in records {
        for (k, v) in row_values(r).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            if let Some(x) = v {
                let _ = write!(out, "{x:?}");
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_timeseries_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    write_atomic(path, &format_timeseries_csv(records)?)
}

pub fn parse_timeseries_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        Some(h) => {
            return Err(Error::Format {
                line: 1,
                msg: format!("header mismatch: `{h}`"),
            })
        }
        None => return Err(Error::Format { line: 1, msg: "empty file".into() }),
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected {COLUMNS} fields, found {}", fields.len()),
            });
        }
        let mut v = [0.0; COLUMNS];
        let mut upvq = None;
        for (c, f) in fields.iter().enumerate() {
            if c == UPVQ_COLUMN && f.is_empty() {
                continue;
            }
            let x: f64 = f.parse().map_err(|_| Error::Format {
                line: line_no,
                msg: format!("bad value `{f}` in column {}", c + 1),
            })?;
            if c == UPVQ_COLUMN {
                upvq = Some(x);
            }
            v[c] = x;
        }
        out.push(DiagnosticsRecord {
            t: v[0],
            mass_u: v[1],
            l2_u: v[2],
            linf_u: v[3],
            min_u: v[4],
            mass_ode_residual: v[5],
            linf_U: v[6],
            l2_U: v[7],
            linf_v: v[8],
            min_v: v[9],
            l2_grad_w: v[10],
            l4_grad_w: v[11],
            linf_grad_w: v[12],
            linf_grad_v_over_v: v[13],
            energy_F: v[14],
            energy_identity_residual: v[15],
            gn1_ratio: v[16],
            gn2_ratio: v[17],
            upvq,
            dt_last: v[19],
        });
    }
    Ok(out)
}

pub fn read_timeseries_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    parse_timeseries_csv(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_twenty_columns() {
        assert_eq!(HEADER.split(',').count(), COLUMNS);
        assert_eq!(HEADER.split(',').nth(UPVQ_COLUMN), Some("upvq"));
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(
            parse_timeseries_csv("t,mass\n1,2\n"),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn short_row_names_line() {
        let text = format!("{HEADER}\n1,2,3\n");
        assert!(matches!(parse_timeseries_csv(&text), Err(Error::Format { line: 2, .. })));
    }
}
