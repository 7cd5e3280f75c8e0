//! Interferogram file interchange.
//!
//! Datasets are a CSV table with the fixed header
//! `lambda_s_m,lambda_i_m,coincidences,singles_s,singles_i` plus a sidecar
//! JSON metadata object `{pump_m, dwell_s, seed, truth: {…}}` stored next
//! to it as `<stem>.meta.json`. Numbers are written in Rust's shortest
//! round-trip form, so a write/read cycle is lossless.

use crate::acquisition::{Interferogram, ScanPoint, SkippedPoint, TruthMeta};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "lambda_s_m,lambda_i_m,coincidences,singles_s,singles_i";

/// Sidecar metadata object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferogramMeta {
    pub pump_m: f64,
    pub dwell_s: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedPoint>,
}

/// `data.csv` → `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the CSV table and its sidecar metadata.
pub fn write_dataset(gram: &Interferogram, csv_path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 * (gram.points.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &gram.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.lambda_s_m, p.lambda_i_m, p.coincidences, p.singles_s, p.singles_i
        ));
    }
    let mut file = fs::File::create(csv_path)?;
    file.write_all(out.as_bytes())?;

    let meta = InterferogramMeta {
        pump_m: gram.pump_m,
        dwell_s: gram.dwell_s,
        seed: gram.seed,
        truth: gram.truth,
        skipped: gram.skipped.clone(),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(sidecar_path(csv_path), json)?;
    Ok(())
}

fn parse_field(raw: &str, row: usize, name: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::CsvParse {
        row,
        msg: format!("cannot parse {name} from {raw:?}"),
    })
}

/// Reads the CSV table; `row` in errors is the 1-based file line.
pub fn read_points(csv_path: &Path) -> Result<Vec<ScanPoint>> {
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::CsvParse {
                row: 1,
                msg: format!("expected header {CSV_HEADER:?}, got {header:?}"),
            })
        }
        None => {
            return Err(Error::CsvParse {
                row: 1,
                msg: "empty file".into(),
            })
        }
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::CsvParse {
                row,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let point = ScanPoint {
            lambda_s_m: parse_field(fields[0], row, "lambda_s_m")?,
            lambda_i_m: parse_field(fields[1], row, "lambda_i_m")?,
            coincidences: parse_field(fields[2], row, "coincidences")?,
            singles_s: parse_field(fields[3], row, "singles_s")?,
            singles_i: parse_field(fields[4], row, "singles_i")?,
        };
        for (value, name) in [
            (point.coincidences, "coincidences"),
            (point.singles_s, "singles_s"),
            (point.singles_i, "singles_i"),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::CsvParse {
                    row,
                    msg: format!("{name} must be finite and ≥ 0, got {value}"),
                });
            }
        }
        points.push(point);
    }
    Ok(points)
}

pub fn read_metadata(csv_path: &Path) -> Result<InterferogramMeta> {
    let path = sidecar_path(csv_path);
    let text = fs::read_to_string(&path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read sidecar {}: {e}", path.display()),
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads CSV plus sidecar back into an [`Interferogram`].
pub fn read_dataset(csv_path: &Path) -> Result<Interferogram> {
    let points = read_points(csv_path)?;
    let meta = read_metadata(csv_path)?;
    Ok(Interferogram {
        points,
        skipped: meta.skipped,
        pump_m: meta.pump_m,
        dwell_s: meta.dwell_s,
        seed: meta.seed,
        truth: meta.truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{run_scan, ScanPlan, SignalModel};
    use crate::optics::{PhaseOffset, SpectralPoint, TaylorDispersion};

    fn sample() -> Interferogram {
        let pump = SpectralPoint::from_wavelength(1560.6e-9).unwrap();
        let truth = TaylorDispersion::from_beta2(pump, 1.0557475890700804e-25, 0.9).unwrap();
        let plan = ScanPlan::uniform(pump, 16, 24e-9, 1.0, 5000.0, 50_000.0, 21).unwrap();
        run_scan(&truth, PhaseOffset::ZERO, &SignalModel::default(), &plan).unwrap()
    }

    #[test]
    fn dataset_round_trip_is_lossless() {
        let dir = std::env::temp_dir().join("qwli-io-roundtrip");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("scan.csv");
        let gram = sample();
        write_dataset(&gram, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(gram, back);
        assert!(sidecar_path(&path).ends_with("scan.meta.json"));
    }

    #[test]
    fn truncated_row_reports_line_number() {
        let dir = std::env::temp_dir().join("qwli-io-truncated");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        fs::write(
            &path,
            format!("{CSV_HEADER}\n1.56e-6,1.56e-6,10,100,100\n1.57e-6,1.55e-6,10\n"),
        )
        .unwrap();
        match read_points(&path) {
            Err(Error::CsvParse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected CsvParse, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = std::env::temp_dir().join("qwli-io-header");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        fs::write(&path, "a,b,c\n").unwrap();
        match read_points(&path) {
            Err(Error::CsvParse { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected CsvParse, got {other:?}"),
        }
    }

    #[test]
    fn negative_counts_rejected() {
        let dir = std::env::temp_dir().join("qwli-io-negative");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        fs::write(&path, format!("{CSV_HEADER}\n1.56e-6,1.56e-6,-3,100,100\n")).unwrap();
        assert!(read_points(&path).is_err());
    }
}
