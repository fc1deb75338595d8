//! File formats: site lists and explicit correlation matrices in, replicate
//! tables, reports, and metadata sidecars out.
//!
//! Sites file: CSV with header `id,x1,...,xp`, one row per site. Explicit
//! correlation matrix file: headerless CSV of d rows by d columns. Output
//! floats are written in shortest round-trip form, so reruns with the same
//! seed are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mda::MdaReport;
use crate::model::SiteSet;
use crate::spectral::FieldReplicate;

/// Read a site set from `id,x1,...,xp` CSV.
pub fn read_sites_csv(path: &Path) -> Result<SiteSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let headers = reader.headers()?;
        if headers.is_empty() || !headers[0].trim().eq_ignore_ascii_case("id") {
            return Err(Error::Domain(format!(
                "sites file {} must start with an `id` header column",
                path.display()
            )));
        }
        if headers.len() < 2 {
            return Err(Error::Domain(format!(
                "sites file {} needs at least one coordinate column",
                path.display()
            )));
        }
    }
    let mut sites = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut coords = Vec::with_capacity(record.len().saturating_sub(1));
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Domain(format!(
                    "sites file {}: row {} has non-numeric coordinate {:?}",
                    path.display(),
                    line + 2,
                    field
                ))
            })?;
            coords.push(v);
        }
        sites.push(coords);
    }
    SiteSet::new(sites)
}

/// Read a headerless d x d correlation matrix CSV.
pub fn read_correlation_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Domain(format!(
                    "matrix file {}: row {} has non-numeric entry {:?}",
                    path.display(),
                    line + 1,
                    field
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    let d = rows.len();
    if d == 0 {
        return Err(Error::Domain(format!(
            "matrix file {} is empty",
            path.display()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix file {}: row {} has {} entries, expected {d}",
                path.display(),
                i + 1,
                row.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// Write simulated replicates as `replicate,points_used,truncated,z_1..z_d`.
pub fn write_replicates_csv(path: &Path, replicates: &[FieldReplicate]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let d = replicates.first().map_or(0, |r| r.values.len());
    write!(w, "replicate,points_used,truncated")?;
    for j in 1..=d {
        write!(w, ",z_{j}")?;
    }
    writeln!(w)?;
    for (k, rep) in replicates.iter().enumerate() {
        write!(
            w,
            "{k},{},{}",
            rep.points_used,
            if rep.truncation_triggered { 1 } else { 0 }
        )?;
        for v in &rep.values {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the grid table of an MDA report:
/// `z_1..z_d,empirical,theoretical,gap,band,pass`.
pub fn write_mda_report_csv(path: &Path, report: &MdaReport) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let d = report.grid.first().map_or(0, |z| z.len());
    for j in 1..=d {
        write!(w, "z_{j},")?;
    }
    writeln!(w, "empirical,theoretical,gap,band,pass")?;
    for (i, z) in report.grid.iter().enumerate() {
        for v in z {
            write!(w, "{v},")?;
        }
        let band =
            report.binomial_3se[i] + report.theoretical_error[i] + report.bias_allowance;
        writeln!(
            w,
            "{},{},{},{},{}",
            report.empirical_cdf[i],
            report.theoretical_cdf[i],
            report.gap[i],
            band,
            if report.point_pass[i] { 1 } else { 0 }
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize any JSON-ready value with a trailing newline.
pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
