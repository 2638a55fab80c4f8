//! Road profile CSV reader.
//!
//! Header row required. Columns: `distance_m`, then `elevation_m` or
//! `grade_rad`, optionally `vmin_kmh` and `vmax_kmh`. Column order is free.
//! Distances must start at 0 and increase strictly.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{RoadProfile, RoadSample};

use super::config::SpeedBand;

enum Vertical {
    Elevation(usize),
    Grade(usize),
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn field(record: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = record.get(idx).ok_or_else(|| Error::Parse { line, message: format!("missing {name}") })?;
    let v: f64 =
        raw.trim().parse().map_err(|_| Error::Parse { line, message: format!("{name} {raw:?} is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("{name} is not finite") });
    }
    Ok(v)
}

/// Parses a road CSV. Rows without speed columns use `band`.
pub fn parse_road<R: Read>(input: R, band: SpeedBand) -> Result<RoadProfile> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let missing = |what: &str| Error::Parse { line: 1, message: format!("missing column {what}") };
    let dist = column(&headers, "distance_m").ok_or_else(|| missing("distance_m"))?;
    let vertical = match (column(&headers, "elevation_m"), column(&headers, "grade_rad")) {
        (Some(_), Some(_)) => {
            return Err(Error::Parse { line: 1, message: "give elevation_m or grade_rad, not both".into() })
        }
        (Some(i), None) => Vertical::Elevation(i),
        (None, Some(i)) => Vertical::Grade(i),
        (None, None) => return Err(missing("elevation_m or grade_rad")),
    };
    let (vmin_col, vmax_col) = (column(&headers, "vmin_kmh"), column(&headers, "vmax_kmh"));

    let (mut s, mut z, mut lo, mut hi) = (vec![], vec![], vec![], vec![]);
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let pos = field(&record, dist, "distance_m", line)?;
        match s.last() {
            None if pos != 0.0 => {
                return Err(Error::Parse { line, message: format!("route must start at 0 m, got {pos}") })
            }
            Some(&prev) if pos <= prev => {
                return Err(Error::Parse {
                    line,
                    message: format!("distance {pos} m does not increase (previous {prev} m)"),
                })
            }
            _ => {}
        }
        s.push(pos);
        z.push(match vertical {
            Vertical::Elevation(i) => field(&record, i, "elevation_m", line)?,
            Vertical::Grade(i) => field(&record, i, "grade_rad", line)?,
        });
        let vmin = vmin_col.map_or(Ok(band.vmin_kmh), |i| field(&record, i, "vmin_kmh", line))?;
        let vmax = vmax_col.map_or(Ok(band.vmax_kmh), |i| field(&record, i, "vmax_kmh", line))?;
        if !(vmin >= 0.0 && vmin < vmax) {
            return Err(Error::Parse { line, message: format!("speed band [{vmin}, {vmax}] km/h is empty") });
        }
        lo.push(vmin / 3.6);
        hi.push(vmax / 3.6);
    }
    if s.len() < 2 {
        return Err(Error::Parse { line: 1, message: "a road needs at least two rows".into() });
    }
    match vertical {
        Vertical::Elevation(_) => RoadProfile::from_elevation(&s, &z, &lo, &hi),
        Vertical::Grade(_) => {
            RoadProfile::new((0..s.len()).map(|i| RoadSample::new(s[i], z[i], lo[i], hi[i])).collect())
        }
    }
}

/// Reads a road CSV file.
pub fn ingest_road(path: &Path, band: SpeedBand) -> Result<RoadProfile> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Config(format!("cannot open route {}: {e}", path.display())))?;
    parse_road(file, band)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RoadProfile> {
        parse_road(text.as_bytes(), SpeedBand::default())
    }

    #[test]
    fn two_row_flat_file() {
        let r = parse("distance_m,elevation_m\n0,0\n1000,0\n").unwrap();
        assert_eq!(r.length(), 1000.0);
        assert_eq!(r.grade_at(500.0).unwrap(), 0.0);
        assert!((r.speed_band_at(0.0).unwrap().1 - 25.0).abs() < 1e-12);
    }

    #[test]
    fn elevation_ramp_converts_to_grade() {
        let mut text = String::from("distance_m,elevation_m\n");
        for i in 0..=10 {
            text += &format!("{},{}\n", i * 1000, i * 10);
        }
        let r = parse(&text).unwrap();
        for s in [0.0, 4500.0, 9999.0] {
            assert!((r.grade_at(s).unwrap() - 0.01f64.atan()).abs() < 1e-15);
        }
    }

    #[test]
    fn grade_and_speed_columns_in_any_order() {
        let r = parse("vmax_kmh,grade_rad,distance_m,vmin_kmh\n80,0.02,0,40\n80,0.02,500,40\n").unwrap();
        assert_eq!(r.grade_at(100.0).unwrap(), 0.02);
        let (lo, hi) = r.speed_band_at(100.0).unwrap();
        assert!((lo - 40.0 / 3.6).abs() < 1e-12 && (hi - 80.0 / 3.6).abs() < 1e-12);
    }

    #[test]
    fn errors_name_the_line() {
        let unsorted = parse("distance_m,elevation_m\n0,0\n500,1\n400,2\n");
        assert!(matches!(unsorted, Err(Error::Parse { line: 4, .. })), "{unsorted:?}");
        let nan = parse("distance_m,elevation_m\n0,0\n500,NaN\n");
        assert!(matches!(nan, Err(Error::Parse { line: 3, .. })), "{nan:?}");
        let text = parse("distance_m,elevation_m\n0,0\n500,abc\n");
        assert!(matches!(text, Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse("distance_m,height\n0,0\n1,0\n"), Err(Error::Parse { line: 1, .. })));
    }
}
