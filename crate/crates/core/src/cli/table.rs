//! CSV formats.
//!
//! Panel: `t,i,y,x_1,...,x_J`, one row per (time, case), `#` lines ignored.
//! Betas: `t,beta_1,...,beta_J,max_foc_residual,converged`.
//! Floats are written with 17 significant digits so they round-trip exactly.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};

use crate::domain::{validate_panel, CoefPath, Panel, PanelRow};
use crate::solver::FitReport;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_panel(input: impl Read) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = rdr.headers().context("reading header")?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 4 || names[..3] != ["t", "i", "y"] {
        bail!("header must be t,i,y,x_1,...,x_J (got {})", names.join(","));
    }
    for (c, name) in names[3..].iter().enumerate() {
        if *name != format!("x_{}", c + 1) {
            bail!("header column {} should be x_{} (got {name})", c + 4, c + 1);
        }
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.with_context(|| format!("row {line}"))?;
        let field = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .with_context(|| format!("row {line}, column {}: cannot parse {raw:?}", names.get(c).unwrap_or(&"?")))
        };
        if rec.len() != names.len() {
            bail!("row {line}: expected {} fields, found {}", names.len(), rec.len());
        }
        let case_raw = rec.get(1).unwrap_or("");
        let case = case_raw
            .parse::<usize>()
            .with_context(|| format!("row {line}, column i: cannot parse {case_raw:?}"))?;
        rows.push(PanelRow {
            t: field(0)?,
            case,
            y: field(2)?,
            x: (3..names.len()).map(field).collect::<Result<_>>()?,
        });
    }
    Ok(validate_panel(&rows)?)
}

pub fn write_panel(out: &mut impl Write, panel: &Panel, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "i".into(), "y".into()];
    header.extend((1..=panel.n_covariates()).map(|c| format!("x_{c}")));
    w.write_record(&header)?;
    for row in panel.rows() {
        let mut rec = vec![fmt(row.t), row.case.to_string(), fmt(row.y)];
        rec.extend(row.x.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn beta_header(j: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((1..=j).map(|c| format!("beta_{c}"))).collect()
}

pub fn write_truth(out: &mut impl Write, path: &CoefPath, comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(beta_header(path.n_covariates()))?;
    for (t, b) in path.grid().points().iter().zip(path.betas()) {
        let rec: Vec<String> = std::iter::once(fmt(*t)).chain(b.iter().map(|v| fmt(*v))).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_betas(out: &mut impl Write, path: &CoefPath, report: &FitReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = beta_header(path.n_covariates());
    header.extend(["max_foc_residual".to_string(), "converged".into()]);
    w.write_record(&header)?;
    for ((t, b), d) in path.grid().points().iter().zip(path.betas()).zip(&report.points) {
        let mut rec: Vec<String> = std::iter::once(fmt(*t)).chain(b.iter().map(|v| fmt(*v))).collect();
        rec.push(fmt(d.foc_residual_norm));
        rec.push(d.converged().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a betas or truth file back as `(t, beta)` rows, ignoring any
/// trailing diagnostic columns.
pub fn read_betas(input: impl Read) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rdr.headers()?.clone();
    let j = header.iter().filter(|h| h.starts_with("beta_")).count();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec.iter().take(j + 1).map(str::parse).collect::<std::result::Result<_, _>>()?;
        out.push((vals[0], vals[1..].to_vec()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeGrid;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn panel_round_trip_is_exact() {
        let grid = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        let ys = (0..3).map(|t| DVector::from_vec(vec![0.1 * t as f64, 1.0 / 3.0])).collect();
        let xs = (0..3).map(|t| DMatrix::from_fn(2, 2, |i, j| (t + i) as f64 / 7.0 - j as f64)).collect();
        let panel = Panel::new(grid, ys, xs).unwrap();
        let mut buf = Vec::new();
        write_panel(&mut buf, &panel, &["n_cases=2".into()]).unwrap();
        assert_eq!(read_panel(&buf[..]).unwrap(), panel);
    }

    #[test]
    fn bad_inputs() {
        assert!(read_panel(&b"t,i,y\n0,1,2\n"[..]).is_err());
        assert!(read_panel(&b"t,i,y,x_2\n0,1,2,3\n"[..]).is_err());
        let err = read_panel(&b"t,i,y,x_1\n0,1,abc,3\n"[..]).unwrap_err();
        assert!(format!("{err:#}").contains("column y"));
        let err = read_panel(&b"t,i,y,x_1\n0,1,1,3\n0,2,1,3\n1,1,1,1\n"[..]).unwrap_err();
        assert!(format!("{err:#}").contains("missing"));
    }
}
