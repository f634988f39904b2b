//! Energy ledger CSV and SVG plots of its columns.

use crate::error::{PhcmError, Result};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const LEDGER_COLUMNS: [&str; 10] = ["t", "H_kin", "Psi_or_U", "E_total", "P_boundary", "D_dissipation", "mass_total", "res_dirac_alg", "res_dirac_mesh", "res_energy"];

/// One recorded step.
///
/// `P_boundary` and `D_dissipation` are step averages (the integrator's quadrature of the
/// stage values divided by Δt). `res_energy` is E_total − E_total(0) − ∫(P_boundary − D)dt.
/// The two audit columns hold the largest algebraic and mesh-class residual seen in any
/// stage evaluation of the step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    #[serde(rename = "H_kin")]
    pub h_kin: f64,
    #[serde(rename = "Psi_or_U")]
    pub psi_or_u: f64,
    #[serde(rename = "E_total")]
    pub e_total: f64,
    #[serde(rename = "P_boundary")]
    pub p_boundary: f64,
    #[serde(rename = "D_dissipation")]
    pub d_dissipation: f64,
    pub mass_total: f64,
    pub res_dirac_alg: f64,
    pub res_dirac_mesh: f64,
    pub res_energy: f64,
}

impl LedgerRow {
    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "t" => self.t,
            "H_kin" => self.h_kin,
            "Psi_or_U" => self.psi_or_u,
            "E_total" => self.e_total,
            "P_boundary" => self.p_boundary,
            "D_dissipation" => self.d_dissipation,
            "mass_total" => self.mass_total,
            "res_dirac_alg" => self.res_dirac_alg,
            "res_dirac_mesh" => self.res_dirac_mesh,
            "res_energy" => self.res_energy,
            _ => return None,
        })
    }
}

fn unwritable(path: &Path, e: impl std::fmt::Display) -> PhcmError {
    PhcmError::Io(std::io::Error::other(format!("cannot write {}: {e}", path.display())))
}

pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| unwritable(path, e))?;
    if rows.is_empty() {
        w.write_record(LEDGER_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != LEDGER_COLUMNS {
        return Err(PhcmError::Config { field: path.display().to_string(), msg: format!("unexpected ledger header {header:?}") });
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<LedgerRow>, _>>()?)
}

/// One SVG per requested column against t, named `<ledger stem>_<column>.svg` in `out_dir`.
pub fn plot_ledger(ledger: &Path, columns: &[String], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_ledger(ledger)?;
    if rows.is_empty() {
        return Err(PhcmError::Config { field: ledger.display().to_string(), msg: "ledger has no rows".into() });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| unwritable(out_dir, e))?;
    let stem = ledger.file_stem().and_then(|s| s.to_str()).unwrap_or("ledger");
    let mut out = Vec::new();
    for col in columns {
        if rows[0].column(col).is_none() {
            return Err(PhcmError::Config { field: "columns".into(), msg: format!("unknown ledger column `{col}`") });
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.column(col).unwrap())).collect();
        let path = out_dir.join(format!("{stem}_{col}.svg"));
        draw(&path, col, &pts).map_err(|e| unwritable(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

fn draw(path: &Path, title: &str, pts: &[(f64, f64)]) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let (mut lo, mut hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !(hi > lo) {
        let pad = lo.abs().max(1e-300) * 1e-3;
        lo -= pad;
        hi += pad;
    }
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(90)
        .build_cartesian_2d(t0..t1.max(t0 + f64::EPSILON), lo..hi)?;
    chart.configure_mesh().x_desc("t").y_desc(title).y_label_formatter(&|v| format!("{v:.3e}")).draw()?;
    chart.draw_series(LineSeries::new(pts.iter().copied(), &BLUE))?;
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> LedgerRow {
        LedgerRow { t, h_kin: 1.0 - t, psi_or_u: t, e_total: 1.0, p_boundary: 0.0, d_dissipation: 0.0, mass_total: 2.0, res_dirac_alg: 0.0, res_dirac_mesh: 1e-9, res_energy: 1e-15 }
    }

    #[test]
    fn ledger_round_trips_with_exact_header() {
        let dir = std::env::temp_dir().join(format!("phcm-ledger-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("ledger.csv");
        let rows: Vec<_> = (0..5).map(|k| row(k as f64 * 0.1)).collect();
        write_ledger(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), LEDGER_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 6);
        assert_eq!(read_ledger(&p).unwrap(), rows);
        let plots = plot_ledger(&p, &["E_total".into(), "H_kin".into()], &dir).unwrap();
        assert_eq!(plots.len(), 2);
        assert!(plots.iter().all(|p| p.exists()));
        assert!(plot_ledger(&p, &["nope".into()], &dir).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
