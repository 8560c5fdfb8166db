use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::CycleRecord;
use crate::error::{Error, Result};

/// unit, cycle, 3 operating settings, 21 sensors.
pub const CMAPSS_FIELDS: usize = 26;
const CMAPSS_SETTINGS: usize = 3;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_index(path: &Path, line: usize, field: &str, what: &str) -> Result<u32> {
    // The public files write integers, but tolerate "12.0".
    if let Ok(v) = field.parse::<u32>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u32),
        _ => Err(parse_err(path, line, format!("{what} `{field}` is not a non-negative integer"))),
    }
}

fn parse_value(path: &Path, line: usize, col: usize, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(path, line, format!("column {col}: `{field}` is not a finite number"))),
    }
}

/// Reads a whitespace-separated C-MAPSS train or test file.
pub fn load_cmapss(path: impl AsRef<Path>) -> Result<Vec<CycleRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != CMAPSS_FIELDS {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {CMAPSS_FIELDS} fields, found {}", fields.len()),
            ));
        }
        let unit_id = parse_index(path, lineno, fields[0], "unit")?;
        let cycle = parse_index(path, lineno, fields[1], "cycle")?;
        let values = fields[2..]
            .iter()
            .enumerate()
            .map(|(i, f)| parse_value(path, lineno, i + 3, f))
            .collect::<Result<Vec<f64>>>()?;
        records.push(CycleRecord {
            unit_id,
            cycle,
            op_settings: values[..CMAPSS_SETTINGS].to_vec(),
            sensors: values[CMAPSS_SETTINGS..].to_vec(),
        });
    }
    if records.is_empty() {
        return Err(Error::Usage(format!("{} contains no records", path.display())));
    }
    Ok(records)
}

/// One integer RUL per line, one line per unit of `test_records`.
pub fn load_rul_file(path: impl AsRef<Path>, test_records: &[CycleRecord]) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_index(path, i + 1, l.trim(), "RUL"))
        .collect::<Result<Vec<u32>>>()?;
    let units: BTreeSet<u32> = test_records.iter().map(|r| r.unit_id).collect();
    if values.len() != units.len() {
        return Err(Error::Usage(format!(
            "{} has {} RUL values but the test set has {} units",
            path.display(),
            values.len(),
            units.len()
        )));
    }
    Ok(values)
}

/// Records read from a `unit,cycle,<features...>` CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDataset {
    pub feature_names: Vec<String>,
    pub records: Vec<CycleRecord>,
}

pub fn load_generic_csv(path: impl AsRef<Path>) -> Result<CsvDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, 1, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, 1, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3
        || !names[0].eq_ignore_ascii_case("unit")
        || !names[1].eq_ignore_ascii_case("cycle")
    {
        return Err(parse_err(
            path,
            1,
            "header must be `unit,cycle,<feature names...>`",
        ));
    }
    let feature_names: Vec<String> = names[2..].iter().map(|s| s.to_string()).collect();

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let lineno = idx + 2;
        let row = row.map_err(|e| csv_err(path, lineno, e))?;
        if row.len() != names.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", names.len(), row.len()),
            ));
        }
        let unit_id = parse_index(path, lineno, &row[0], "unit")?;
        let cycle = parse_index(path, lineno, &row[1], "cycle")?;
        let sensors = row
            .iter()
            .skip(2)
            .enumerate()
            .map(|(i, f)| parse_value(path, lineno, i + 3, f))
            .collect::<Result<Vec<f64>>>()?;
        records.push(CycleRecord {
            unit_id,
            cycle,
            op_settings: Vec::new(),
            sensors,
        });
    }
    if records.is_empty() {
        return Err(Error::Usage(format!("{} contains no records", path.display())));
    }
    Ok(CsvDataset {
        feature_names,
        records,
    })
}

fn csv_err(path: &Path, line: usize, e: csv::Error) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(line);
    parse_err(path, line, e.to_string())
}

/// Writes records as `unit,cycle,<features...>`; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_generic_csv(
    path: impl AsRef<Path>,
    feature_names: &[String],
    records: &[CycleRecord],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("unit,cycle");
    for name in feature_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in records {
        let features = r.features();
        if features.len() != feature_names.len() {
            return Err(Error::Shape(format!(
                "unit {} cycle {} has {} features, header names {}",
                r.unit_id,
                r.cycle,
                features.len(),
                feature_names.len()
            )));
        }
        out.push_str(&format!("{},{}", r.unit_id, r.cycle));
        for v in features {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn cmapss_line(unit: u32, cycle: u32, n_fields: usize) -> String {
        let mut fields = vec![unit.to_string(), cycle.to_string()];
        fields.extend((2..n_fields).map(|i| format!("{}.5", i)));
        fields.join(" ")
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_two_cmapss_lines() {
        let f = write_tmp(&format!("{} \n{} \n", cmapss_line(1, 1, 26), cmapss_line(1, 2, 26)));
        let recs = load_cmapss(f.path()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].cycle, 1);
        assert_eq!(recs[1].cycle, 2);
        assert_eq!(recs[0].op_settings.len(), 3);
        assert_eq!(recs[0].sensors.len(), 21);
        assert_eq!(recs[0].features().len(), 24);
        assert_eq!(recs[0].op_settings[0], 2.5);
    }

    #[test]
    fn short_line_names_line_number() {
        let f = write_tmp(&format!("{}\n{}\n", cmapss_line(1, 1, 26), cmapss_line(1, 2, 25)));
        match load_cmapss(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_is_parse_error() {
        let mut line = cmapss_line(1, 1, 26);
        line.push_str(" x");
        let line = line.replacen("5.5", "abc", 1);
        let f = write_tmp(&line);
        assert!(matches!(load_cmapss(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_file_is_usage_error() {
        let f = write_tmp("\n\n");
        assert!(matches!(load_cmapss(f.path()), Err(Error::Usage(_))));
    }

    #[test]
    fn rul_file_count_must_match() {
        let recs: Vec<CycleRecord> = (1..=3)
            .map(|u| CycleRecord {
                unit_id: u,
                cycle: 1,
                op_settings: vec![],
                sensors: vec![0.0],
            })
            .collect();
        let f = write_tmp("10\n20\n30\n");
        assert_eq!(load_rul_file(f.path(), &recs).unwrap(), vec![10, 20, 30]);
        let short = write_tmp("10\n20\n");
        assert!(matches!(load_rul_file(short.path(), &recs), Err(Error::Usage(_))));
    }

    #[test]
    fn generic_csv_round_trip() {
        let names = vec!["voltage".to_string(), "temp".to_string()];
        let recs = vec![
            CycleRecord {
                unit_id: 4,
                cycle: 1,
                op_settings: vec![],
                sensors: vec![0.1 + 0.2, -1e-17],
            },
            CycleRecord {
                unit_id: 4,
                cycle: 2,
                op_settings: vec![],
                sensors: vec![3.0, 1.0 / 3.0],
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_generic_csv(f.path(), &names, &recs).unwrap();
        let back = load_generic_csv(f.path()).unwrap();
        assert_eq!(back.feature_names, names);
        assert_eq!(back.records, recs);
    }

    #[test]
    fn generic_csv_rejects_bad_header_and_rows() {
        let f = write_tmp("id,time,a\n1,1,2\n");
        assert!(matches!(load_generic_csv(f.path()), Err(Error::Parse { line: 1, .. })));
        let f = write_tmp("unit,cycle,a\n1,1,2\n1,2,oops\n");
        assert!(matches!(load_generic_csv(f.path()), Err(Error::Parse { line: 3, .. })));
    }
}
