//! Text formats shared by the library and the command-line tool.
//!
//! * Density operators: JSON `{"dim": d, "re": [[…]], "im": [[…]]}`,
//!   row-major, see [`DensityOperator`].
//! * Counts: CSV with header
//!   `setting,duration_s,sa1..sa4,sb1..sb4,c_a1b1,c_a1b2,…,c_a4b4`, one row
//!   per setting. Columns may appear in any order; lines starting with `#`
//!   are ignored.
//! * Angles: one number per line (degrees), `#` comments allowed.
//! * Tables: any flat serializable row type as CSV or JSON.

use serde::Serialize;
use thiserror::Error;

use crate::qcore::DensityOperator;
use crate::tomo::CountRecord;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("{0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub fn write_density(rho: &DensityOperator) -> String {
    serde_json::to_string_pretty(rho).expect("density serializes")
}

pub fn read_density(text: &str) -> Result<DensityOperator> {
    serde_json::from_str(text).map_err(|e| IoError::Parse { line: e.line(), message: e.to_string() })
}

/// Column names of the count format in canonical order.
pub fn count_columns() -> Vec<String> {
    let mut cols = vec!["setting".to_string(), "duration_s".to_string()];
    cols.extend((1..=4).map(|i| format!("sa{i}")));
    cols.extend((1..=4).map(|i| format!("sb{i}")));
    for a in 1..=4 {
        cols.extend((1..=4).map(|b| format!("c_a{a}b{b}")));
    }
    cols
}

pub fn write_counts(records: &[CountRecord]) -> String {
    let mut out = count_columns().join(",");
    out.push('\n');
    for r in records {
        let mut f: Vec<String> = vec![r.setting.to_string(), r.duration_s.to_string()];
        f.extend(r.singles_a.iter().map(u64::to_string));
        f.extend(r.singles_b.iter().map(u64::to_string));
        f.extend(r.coincidences.iter().flatten().map(u64::to_string));
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}

/// Parses and validates a count file. Errors carry 1-based line numbers.
pub fn read_counts(text: &str) -> Result<Vec<CountRecord>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| IoError::Parse { line: 1, message: e.to_string() })?.clone();
    let pos: Vec<usize> = count_columns()
        .into_iter()
        .map(|c| header.iter().position(|h| h == c).ok_or(IoError::MissingColumn(c)))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |m: String| IoError::Parse { line, message: m };
        let field = |k: usize| rec.get(pos[k]).unwrap_or("");
        let int = |k: usize| -> Result<u64> {
            field(k)
                .parse::<u64>()
                .map_err(|_| bad(format!("column {}: expected a count, found {:?}", count_columns()[k], field(k))))
        };
        let duration_s = field(1)
            .parse::<f64>()
            .map_err(|_| bad(format!("column duration_s: expected a number, found {:?}", field(1))))?;
        let r = CountRecord {
            setting: int(0)? as usize,
            duration_s,
            singles_a: [int(2)?, int(3)?, int(4)?, int(5)?],
            singles_b: [int(6)?, int(7)?, int(8)?, int(9)?],
            coincidences: [
                [int(10)?, int(11)?, int(12)?, int(13)?],
                [int(14)?, int(15)?, int(16)?, int(17)?],
                [int(18)?, int(19)?, int(20)?, int(21)?],
                [int(22)?, int(23)?, int(24)?, int(25)?],
            ],
        };
        r.validate().map_err(|e| bad(e.to_string()))?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(IoError::Parse { line: 1, message: "no data rows".into() });
    }
    Ok(out)
}

/// Reads one angle per line.
pub fn read_angles(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (n, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let v: f64 = l
            .parse()
            .map_err(|_| IoError::Parse { line: n + 1, message: format!("expected an angle, found {l:?}") })?;
        if !v.is_finite() {
            return Err(IoError::Parse { line: n + 1, message: "angle must be finite".into() });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(IoError::Parse { line: 1, message: "no angles".into() });
    }
    Ok(out)
}

pub fn write_angles(angles: &[f64]) -> String {
    angles.iter().map(|a| format!("{a}\n")).collect()
}

/// Serializes flat rows as CSV (with header) or a JSON array.
pub fn write_table<T: Serialize>(rows: &[T], format: Format) -> Result<String> {
    match format {
        Format::Json => serde_json::to_string_pretty(rows).map_err(|e| IoError::Format(e.to_string())),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| IoError::Format(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| IoError::Format(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| IoError::Format(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{equimodular_ququart, EquimodularPhases};
    use proptest::prelude::*;

    fn record(setting: usize, seed: u64) -> CountRecord {
        let mut c = [[0u64; 4]; 4];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (seed.wrapping_mul(31) + 7 * i as u64 + j as u64) % 97;
            }
        }
        let sa = std::array::from_fn(|i| c[i].iter().sum());
        let sb = std::array::from_fn(|j| c.iter().map(|r| r[j]).sum());
        CountRecord { setting, duration_s: 1.5, singles_a: sa, singles_b: sb, coincidences: c }
    }

    #[test]
    fn density_round_trip() {
        let rho = equimodular_ququart(&EquimodularPhases::from_degrees(10.0, 20.0, 30.0)).density();
        let text = write_density(&rho);
        assert!(text.contains("\"dim\": 4"));
        assert_eq!(read_density(&text).unwrap(), rho);
        assert!(read_density(r#"{"dim": 2, "re": [[1, 0], [0, 1]], "im": [[0, 0], [0, 0]]}"#).is_err());
    }

    #[test]
    fn header_error_names_the_column() {
        let text = write_counts(&[record(1, 0)]).replacen("c_a2b3", "c_a2b9", 1);
        match read_counts(&text) {
            Err(IoError::MissingColumn(c)) => assert_eq!(c, "c_a2b3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_field_reports_line() {
        let mut text = write_counts(&[record(1, 0), record(2, 1)]);
        text = text.replacen("\n2,1.5,", "\n2,abc,", 1);
        match read_counts(&text) {
            Err(IoError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duration_s"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn angles() {
        assert_eq!(read_angles("# deg\n1.5\n\n-2\n").unwrap(), vec![1.5, -2.0]);
        assert!(read_angles("x\n").is_err());
        assert_eq!(read_angles(&write_angles(&[0.1, 7.0])).unwrap(), vec![0.1, 7.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn counts_round_trip(seeds in prop::collection::vec(0u64..1000, 1..40)) {
            let recs: Vec<CountRecord> = seeds.iter().enumerate().map(|(i, &s)| record(i + 1, s)).collect();
            prop_assert_eq!(read_counts(&write_counts(&recs)).unwrap(), recs);
        }
    }
}
