//! CSV input and output.

use std::io::Read;
use std::path::Path;

use gscatter::Dataset;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Location adjustment applied column-wise after loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    None,
    Mean,
    /// Lower median for an even number of rows, so the result is deterministic.
    #[default]
    MarginalMedian,
}

impl std::str::FromStr for Centering {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "none" => Ok(Centering::None),
            "mean" => Ok(Centering::Mean),
            "marginal_median" | "median" => Ok(Centering::MarginalMedian),
            _ => Err(CliError::usage(format!(
                "unknown centering '{s}' (expected none, mean or marginal_median)"
            ))),
        }
    }
}

/// Numeric table read from CSV. The first row is a header when any of its
/// cells fails to parse as a number.
pub fn read_matrix<R: Read>(reader: R, label: &str) -> CliResult<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx as u64 + 1;
        let rec = rec.map_err(|e| CliError::Parse {
            path: label.to_string(),
            line: e.position().map_or(line, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(line, |p| p.line());
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(|c| c.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(_) => {
                let bad = rec.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or("");
                return Err(CliError::Parse {
                    path: label.to_string(),
                    line,
                    message: format!("non-numeric cell '{bad}'"),
                });
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Parse {
                path: label.to_string(),
                line,
                message: format!("non-finite value {bad}"),
            });
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(CliError::Parse {
                    path: label.to_string(),
                    line,
                    message: format!("expected {w} columns, found {}", values.len()),
                })
            }
            _ => {}
        }
        rows.push(values);
    }
    let Some(p) = width else {
        return Err(CliError::Parse {
            path: label.to_string(),
            line: 1,
            message: "no data rows".into(),
        });
    };
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        p,
        rows.into_iter().flatten(),
    ))
}

pub fn read_matrix_file(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_matrix(file, &path.display().to_string())
}

/// Subtracts the chosen column-wise location.
pub fn center(mut rows: DMatrix<f64>, centering: Centering) -> DMatrix<f64> {
    if centering == Centering::None || rows.nrows() == 0 {
        return rows;
    }
    for mut col in rows.column_iter_mut() {
        let loc = match centering {
            Centering::Mean => col.mean(),
            _ => {
                let mut v: Vec<f64> = col.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v[(v.len() - 1) / 2]
            }
        };
        col.add_scalar_mut(-loc);
    }
    rows
}

/// Reads a data file, one observation per row, and centers it.
pub fn load_csv(path: &Path, centering: Centering) -> CliResult<Dataset> {
    let rows = read_matrix_file(path)?;
    Ok(Dataset::new(center(rows, centering))?)
}

pub fn write_matrix<W: std::io::Write>(out: W, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io("<output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<DMatrix<f64>> {
        read_matrix(text.as_bytes(), "inline")
    }

    #[test]
    fn plain_table() {
        let m = parse("1,2\n3,4\n5,6").unwrap();
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        );
    }

    #[test]
    fn header_is_skipped() {
        let m = parse("a,b\n1,2\n3,4\n5,6").unwrap();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m[(0, 0)], 1.0);
    }

    #[test]
    fn marginal_median_centering() {
        let m = center(parse("1,2\n3,4\n5,6").unwrap(), Centering::MarginalMedian);
        assert_eq!(
            m,
            DMatrix::from_row_slice(3, 2, &[-2.0, -2.0, 0.0, 0.0, 2.0, 2.0])
        );
    }

    #[test]
    fn even_rows_use_lower_median() {
        let m = center(parse("1\n2\n3\n10").unwrap(), Centering::MarginalMedian);
        assert_eq!(
            m.column(0).iter().copied().collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0, 8.0]
        );
    }

    #[test]
    fn mean_centering() {
        let m = center(parse("1,2\n3,4\n5,9").unwrap(), Centering::Mean);
        assert!(m.row_sum().norm() < 1e-12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("1,2\n3,4\n5").unwrap_err() {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        match parse("1,2\n3,x\n").unwrap_err() {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("'x'"));
            }
            e => panic!("{e}"),
        }
        assert!(matches!(parse("").unwrap_err(), CliError::Parse { .. }));
        assert!(matches!(
            parse("a,b\n").unwrap_err(),
            CliError::Parse { .. }
        ));
    }

    #[test]
    fn centering_names() {
        assert_eq!("mean".parse::<Centering>().unwrap(), Centering::Mean);
        assert!("spatial".parse::<Centering>().is_err());
    }
}
