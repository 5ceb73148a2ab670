//! Plot-ready file formats: record streams, bin tables, Wigner grids and
//! contour polylines as CSV.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::channel::MeasurementRecord;
use crate::error::{Error, Result};
use crate::postselect::BinStatistics;
use crate::wigner::{Contour, WignerGrid};

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    #[serde(rename = "T")]
    t: f64,
    theta_rad: f64,
    ac_diff: f64,
    ac_sum: f64,
    dc_sum: f64,
}

/// Header `T,theta_rad,ac_diff,ac_sum,dc_sum`, shortest round-trip decimals.
pub fn write_records<W: Write>(out: W, records: &[MeasurementRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RecordRow {
            t: r.t,
            theta_rad: r.theta,
            ac_diff: r.ac_diff,
            ac_sum: r.ac_sum,
            dc_sum: r.dc_sum,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<MeasurementRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let expected = ["T", "theta_rad", "ac_diff", "ac_sum", "dc_sum"];
    if r.headers()?.iter().ne(expected) {
        return Err(Error::InvalidInput(format!(
            "record header must be {}",
            expected.join(",")
        )));
    }
    r.deserialize()
        .map(|row| {
            let row: RecordRow = row?;
            Ok(MeasurementRecord {
                t: row.t,
                theta: row.theta_rad,
                ac_diff: row.ac_diff,
                ac_sum: row.ac_sum,
                dc_sum: row.dc_sum,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct BinRow {
    t_center: f64,
    n_samples: usize,
    mean_var_diff: f64,
    stddev_diff: f64,
    mean_var_sum: f64,
    stddev_sum: f64,
    #[serde(rename = "squeezing_dB")]
    squeezing_db: f64,
}

pub fn write_bin_statistics<W: Write>(out: W, stats: &[BinStatistics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in stats {
        w.serialize(BinRow {
            t_center: s.t_center,
            n_samples: s.n_samples,
            mean_var_diff: s.mean_var_diff,
            stddev_diff: s.stddev_diff,
            mean_var_sum: s.mean_var_sum,
            stddev_sum: s.stddev_sum,
            squeezing_db: s.squeezing_db,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Normalized transmission histogram, `t_center,density`.
pub fn write_histogram<W: Write>(out: W, histogram: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_center", "density"])?;
    for (t, d) in histogram {
        w.write_record([t.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// First row: empty corner then the p axis. Each following row: x then W(x, p).
pub fn write_wigner<W: Write>(out: W, grid: &WignerGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::from("x\\p")];
    header.extend(grid.p_axis.iter().map(f64::to_string));
    w.write_record(&header)?;
    for (x, row) in grid.x_axis.iter().zip(&grid.values) {
        let mut line = vec![x.to_string()];
        line.extend(row.iter().map(f64::to_string));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// `label,index,x,p`; closed polylines repeat their first vertex at the end.
pub fn write_contours<W: Write>(out: W, contours: &[(&str, &Contour)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "index", "x", "p"])?;
    for (label, c) in contours {
        let closing = c.closed.then(|| c.points[0]);
        for (i, (x, p)) in c.points.iter().copied().chain(closing).enumerate() {
            w.write_record([
                label.to_string(),
                i.to_string(),
                x.to_string(),
                p.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
