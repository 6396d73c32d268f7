//! CSV ingestion and emission, file digests.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::CliError;
use crate::penalty::GroupStructure;
use crate::survival::SurvivalDataset;

/// A survival dataset together with its covariate column names.
#[derive(Debug, Clone)]
pub struct DataTable {
    pub names: Vec<String>,
    pub dataset: SurvivalDataset,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&read_bytes(path)?))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub(crate) fn parse_number(field: &str, row: usize, column: &str) -> Result<f64, CliError> {
    let value: f64 = field.trim().parse().map_err(|_| CliError::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse {field:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(CliError::Parse {
            row,
            column: column.to_string(),
            message: format!("non-finite value {field:?}"),
        });
    }
    Ok(value)
}

pub(crate) fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes)
}

pub(crate) fn csv_error(e: csv::Error) -> CliError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    CliError::Parse {
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Parses `time,status,<vars...>`. Rows are numbered from 1 for the header.
pub fn parse_data_csv(bytes: &[u8]) -> Result<DataTable, CliError> {
    let mut reader = csv_reader(bytes);
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header.len() < 3 || header[0] != "time" || header[1] != "status" {
        return Err(CliError::Schema(
            "header must be `time,status,<variable>,...` with at least one variable".into(),
        ));
    }
    let names = header[2..].to_vec();
    let mut seen = HashMap::new();
    for name in &names {
        if name.is_empty() {
            return Err(CliError::Schema("empty variable name in header".into()));
        }
        if seen.insert(name.as_str(), ()).is_some() {
            return Err(CliError::Schema(format!("duplicate variable `{name}`")));
        }
    }
    let p = names.len();
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let time = parse_number(&record[0], row, "time")?;
        if time <= 0.0 {
            return Err(CliError::Schema(format!("row {row}: time must be positive, got {time}")));
        }
        let event = match record[1].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(CliError::Schema(format!("row {row}: status must be 0 or 1, got {other:?}")))
            }
        };
        times.push(time);
        events.push(event);
        for (j, field) in record.iter().skip(2).enumerate() {
            values.push(parse_number(field, row, &names[j])?);
        }
    }
    if times.is_empty() {
        return Err(CliError::Schema("no data rows".into()));
    }
    let x = Array2::from_shape_vec((times.len(), p), values).expect("rows have header width");
    let dataset = SurvivalDataset::new(times, events, x)?;
    Ok(DataTable { names, dataset })
}

pub fn read_data_csv(path: &Path) -> Result<DataTable, CliError> {
    parse_data_csv(&read_bytes(path)?)
}

/// Parses `variable,group` against the data's variable names. Groups are
/// numbered in order of their first variable in the data.
pub fn parse_groups_csv(bytes: &[u8], names: &[String]) -> Result<GroupStructure, CliError> {
    let mut reader = csv_reader(bytes);
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header != ["variable", "group"] {
        return Err(CliError::Schema("groups header must be `variable,group`".into()));
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(j, n)| (n.as_str(), j)).collect();
    let mut label: Vec<Option<String>> = vec![None; names.len()];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let variable = &record[0];
        let j = *index
            .get(variable)
            .ok_or_else(|| CliError::Schema(format!("groups file names unknown variable `{variable}`")))?;
        if label[j].is_some() {
            return Err(CliError::Schema(format!("variable `{variable}` assigned twice")));
        }
        if record[1].is_empty() {
            return Err(CliError::Schema(format!("variable `{variable}` has an empty group")));
        }
        label[j] = Some(record[1].to_string());
    }
    let mut group_names: Vec<String> = Vec::new();
    let mut group_of = Vec::with_capacity(names.len());
    for (j, l) in label.into_iter().enumerate() {
        let l = l.ok_or_else(|| CliError::Schema(format!("variable `{}` missing from groups file", names[j])))?;
        let g = match group_names.iter().position(|n| *n == l) {
            Some(g) => g,
            None => {
                group_names.push(l);
                group_names.len() - 1
            }
        };
        group_of.push(g);
    }
    Ok(GroupStructure::with_names(group_of, group_names)?)
}

/// Groups from a file, or one singleton group per variable.
pub fn read_groups(path: Option<&Path>, names: &[String]) -> Result<GroupStructure, CliError> {
    match path {
        Some(p) => parse_groups_csv(&read_bytes(p)?, names),
        None => Ok(GroupStructure::with_names((0..names.len()).collect(), names.to_vec())?),
    }
}

/// Writes `time,status,<names>` rows in the dataset's original order.
pub fn data_csv_bytes(names: &[String], data: &SurvivalDataset) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (i, row) in data.covariates().rows().into_iter().enumerate() {
        let mut fields = vec![
            data.times()[i].to_string(),
            if data.events()[i] { "1" } else { "0" }.to_string(),
        ];
        fields.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn groups_csv_bytes(names: &[String], groups: &GroupStructure) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variable", "group"]).map_err(csv_error)?;
    for (j, name) in names.iter().enumerate() {
        w.write_record([name.as_str(), groups.names()[groups.group_of(j)].as_str()])
            .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Serializes rows with a header through the csv crate.
pub fn rows_csv_bytes<S: serde::Serialize>(rows: &[S]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_file() {
        let t = parse_data_csv(b"time,status,a,b\n1.5,1,0.1,2\n2,0,0.3,-1\n3,1,0,0\n").unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.dataset.n(), 3);
        assert_eq!(t.dataset.events(), &[true, false, true]);
        assert_eq!(t.dataset.covariates()[[1, 1]], -1.0);
    }

    #[test]
    fn status_two_is_schema_error() {
        let e = parse_data_csv(b"time,status,a\n1,2,0.1\n").unwrap_err();
        assert!(matches!(e, CliError::Schema(_)));
    }

    #[test]
    fn bad_number_reports_row_and_column() {
        match parse_data_csv(b"time,status,a\n1,1,0.1\n2,1,abc\n").unwrap_err() {
            CliError::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_row_is_parse_error() {
        assert!(matches!(
            parse_data_csv(b"time,status,a\n1,1,0.1,5\n").unwrap_err(),
            CliError::Parse { .. }
        ));
    }

    #[test]
    fn wrong_header_is_schema_error() {
        assert!(matches!(
            parse_data_csv(b"status,time,a\n1,1,0.1\n").unwrap_err(),
            CliError::Schema(_)
        ));
    }

    #[test]
    fn groups_cover_variables() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let g = parse_groups_csv(b"variable,group\nc,x\na,y\nb,x\n", &names).unwrap();
        assert_eq!(g.n_groups(), 2);
        assert_eq!(g.names(), &["y".to_string(), "x".to_string()]);
        assert_eq!(g.group_of(1), g.group_of(2));
        match parse_groups_csv(b"variable,group\na,x\nb,x\n", &names).unwrap_err() {
            CliError::Schema(msg) => assert!(msg.contains("`c`")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn data_round_trip() {
        let src = b"time,status,a,b\n1.5,1,0.1,2\n2,0,0.3,-1\n";
        let t = parse_data_csv(src).unwrap();
        let again = parse_data_csv(&data_csv_bytes(&t.names, &t.dataset).unwrap()).unwrap();
        assert_eq!(again.dataset.covariates(), t.dataset.covariates());
        assert_eq!(again.dataset.times(), t.dataset.times());
    }
}
