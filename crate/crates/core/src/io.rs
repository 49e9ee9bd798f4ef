//! File formats: value lists, gold CSV and partition CSV.
//!
//! Gold and partition files have an optional header row; a first record whose
//! first field is `value` is treated as one.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::model::{GoldPartition, Partition, ValueTable};

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        kind => Error::Parse {
            line,
            msg: format!("{kind:?}"),
        },
    }
}

/// One value per line. Blank lines are skipped; duplicates collapse.
pub fn read_value_lines<R: BufRead>(reader: R) -> Result<ValueTable> {
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let v = line.trim_end_matches('\r');
        if !v.trim().is_empty() {
            values.push(v.to_string());
        }
    }
    Ok(ValueTable::new(values))
}

/// One column of a CSV file with a header row, selected by name.
pub fn read_value_column<R: Read>(reader: R, column: &str) -> Result<ValueTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let idx = headers.iter().position(|h| h.trim() == column).ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("no column named {column:?}"),
    })?;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let v = rec.get(idx).ok_or_else(|| Error::Parse {
            line,
            msg: format!("missing column {column:?}"),
        })?;
        if !v.trim().is_empty() {
            values.push(v.to_string());
        }
    }
    Ok(ValueTable::new(values))
}

/// `(line, value, label)` rows of a two-or-more column CSV.
fn read_labeled_rows<R: Read>(reader: R) -> Result<Vec<(usize, String, String)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && rec.get(0).map(str::trim) == Some("value") {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected value,cluster_id, got {} field(s)", rec.len()),
            });
        }
        rows.push((line, rec[0].to_string(), rec[1].trim().to_string()));
    }
    Ok(rows)
}

/// Labels aligned with `table`; every value must appear exactly once.
fn align(table: &ValueTable, rows: Vec<(usize, String, String)>) -> Result<Vec<String>> {
    let mut labels: Vec<Option<String>> = vec![None; table.len()];
    let mut unknown = Vec::new();
    for (line, value, label) in rows {
        let Some(id) = table.id(&value) else {
            unknown.push(value);
            continue;
        };
        match &labels[id] {
            Some(prev) if *prev != label => {
                return Err(Error::Parse {
                    line,
                    msg: format!("{value:?} labelled both {prev:?} and {label:?}"),
                })
            }
            _ => labels[id] = Some(label),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::ValueTableMismatch(format!(
            "{} value(s) not in the value list: {}",
            unknown.len(),
            preview(&unknown)
        )));
    }
    let missing: Vec<String> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| table.get(i).to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::GoldCoverage(missing));
    }
    Ok(labels.into_iter().map(|l| l.expect("checked above")).collect())
}

fn preview(values: &[String]) -> String {
    let shown: Vec<String> = values.iter().take(10).map(|v| format!("{v:?}")).collect();
    if values.len() > 10 {
        format!("{}, ...", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

/// Gold CSV `value,cluster_id` for the values of `table`.
pub fn read_gold<R: Read>(reader: R, table: &ValueTable) -> Result<GoldPartition> {
    let labels = align(table, read_labeled_rows(reader)?)?;
    Ok(GoldPartition::from_labels(&labels))
}

/// Values and gold from one gold CSV, in file order.
pub fn read_labeled<R: Read>(reader: R) -> Result<(ValueTable, GoldPartition)> {
    let rows = read_labeled_rows(reader)?;
    let table = ValueTable::new(rows.iter().map(|r| r.1.clone()));
    let gold = GoldPartition::from_labels(&align(&table, rows)?);
    Ok((table, gold))
}

/// Partition CSV `value,cluster_id[,canonical]` for the values of `table`.
pub fn read_partition<R: Read>(reader: R, table: &ValueTable) -> Result<Partition> {
    let labels = align(table, read_labeled_rows(reader)?)?;
    Ok(Partition::from_labels(&labels))
}

/// Writes `value,cluster_id,canonical`, clusters in order, members by id.
pub fn write_partition<W: Write>(writer: W, table: &ValueTable, partition: &Partition) -> Result<()> {
    if partition.value_count() != table.len() {
        return Err(Error::ValueTableMismatch(format!(
            "partition covers {} values, table has {}",
            partition.value_count(),
            table.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "cluster_id", "canonical"]).map_err(csv_error)?;
    let canonical = partition.canonical(table);
    for (cluster, canon) in partition.clusters().iter().zip(canonical) {
        let id = cluster.id.to_string();
        for &v in &cluster.members {
            w.write_record([table.get(v), id.as_str(), table.get(canon)]).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Partition CSV as a string.
pub fn partition_csv(table: &ValueTable, partition: &Partition) -> Result<String> {
    let mut buf = Vec::new();
    write_partition(&mut buf, table, partition)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Writes `value,cluster_id` with entity labels.
pub fn write_gold<W: Write>(writer: W, values: &[String], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["value", "cluster_id"]).map_err(csv_error)?;
    for (v, l) in values.iter().zip(labels) {
        w.write_record([v.as_str(), l.to_string().as_str()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// One value per line. Values containing line breaks are rejected.
pub fn write_value_lines<W: Write>(mut writer: W, values: &[String]) -> Result<()> {
    for v in values {
        if v.contains(['\n', '\r']) {
            return Err(Error::InvalidParameter(format!("{v:?} contains a line break")));
        }
        writeln!(writer, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lines_skip_blanks_and_duplicates() {
        let t = read_value_lines("Sony\r\n\nLG\nSony\n".as_bytes()).unwrap();
        assert_eq!(t.values(), ["Sony", "LG"]);
    }

    #[test]
    fn value_column_by_name() {
        let t = read_value_column("id,name\n1,\"Sony, Inc\"\n2,LG\n".as_bytes(), "name").unwrap();
        assert_eq!(t.values(), ["Sony, Inc", "LG"]);
        assert!(matches!(
            read_value_column("id\n1\n".as_bytes(), "name"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn gold_with_and_without_header() {
        let t = ValueTable::new(["a", "b", "c"]);
        let g = read_gold("value,cluster_id\na,1\nb,1\nc,2\n".as_bytes(), &t).unwrap();
        assert_eq!(g.entity_count(), 2);
        let g2 = read_gold("c,x\nb,y\na,y\n".as_bytes(), &t).unwrap();
        assert_eq!(g.partition(), g2.partition());
    }

    #[test]
    fn gold_errors() {
        let t = ValueTable::new(["a", "b", "c"]);
        match read_gold("a,1\nb,1\n".as_bytes(), &t) {
            Err(Error::GoldCoverage(v)) => assert_eq!(v, ["c"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_gold("a,1\nb,1\nc,1\nd,1\n".as_bytes(), &t),
            Err(Error::ValueTableMismatch(_))
        ));
        assert!(matches!(
            read_gold("a,1\nb\nc,1\n".as_bytes(), &t),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_gold("a,1\nb,1\nc,1\na,2\n".as_bytes(), &t),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn partition_round_trip_is_byte_stable() {
        let t = ValueTable::new(["Sony", "Sony Corp", "LG"]);
        let p = Partition::from_groups(3, vec![vec![0, 1], vec![2]]).unwrap();
        let csv = partition_csv(&t, &p).unwrap();
        assert_eq!(
            csv,
            "value,cluster_id,canonical\nSony,0,Sony Corp\nSony Corp,0,Sony Corp\nLG,1,LG\n"
        );
        let back = read_partition(csv.as_bytes(), &t).unwrap();
        assert_eq!(back, p);
        assert_eq!(partition_csv(&t, &back).unwrap(), csv);
    }

    #[test]
    fn labeled_file_builds_table() {
        let (t, g) = read_labeled("value,cluster_id\nx,1\ny,2\nz,1\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(g.entity_of(0), g.entity_of(2));
    }
}
