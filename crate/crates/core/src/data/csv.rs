//! CSV datasets with header `label,f0,f1,...` and features in `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};

use super::Dataset;

pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let malformed = |msg: String| Error::Malformed(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| malformed(e.to_string()))?;
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(malformed("header must be `label,f0,f1,...`".into()));
    }
    let dim = header.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let row = line + 2;
        let label: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("row {row}: bad label {:?}", &record[0])))?;
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(format!("row {row}: bad feature {field:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(malformed(format!("row {row}: feature {v} outside [0, 1]")));
            }
            features.push(v);
        }
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(2, |m| m + 1));
    Dataset::new(dim, classes.max(2), features, labels)
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let err = |e: csv::Error| Error::Malformed(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|i| format!("f{i}")));
    writer.write_record(&header).map_err(err)?;
    for (i, &label) in data.labels().iter().enumerate() {
        let mut row = vec![label.to_string()];
        row.extend(data.example(i).iter().map(|v| v.to_string()));
        writer.write_record(&row).map_err(err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = Dataset::new(2, 3, vec![0.1, 0.2, 1.0, 0.0, 0.123456789, 0.5], vec![2, 0, 1]).unwrap();
        write_csv(&path, &ds).unwrap();
        assert_eq!(load_csv(&path, Some(3)).unwrap(), ds);
    }

    #[test]
    fn rejects_out_of_range_feature() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "label,f0\n0,0.5\n1,1.5\n").unwrap();
        assert!(matches!(load_csv(&path, None), Err(Error::Malformed(_))));
    }

    #[test]
    fn rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "y,f0\n0,0.5\n").unwrap();
        assert!(load_csv(&path, None).is_err());
    }
}
