//! Dataset and table loading.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use dimred::{io, validate, DataMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Mxv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "mxv" => Ok(Format::Mxv),
            _ => Err(format!("unknown format '{s}' (expected csv or mxv)")),
        }
    }
}

impl Format {
    /// `.csv` files are CSV, everything else is MXV.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Mxv,
        }
    }
}

/// Which CSV column, if any, holds integer class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelCol {
    Last,
    Index(usize),
}

impl FromStr for LabelCol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelCol::Last);
        }
        s.parse()
            .map(LabelCol::Index)
            .map_err(|_| format!("label column must be 'last' or a 0-based index, got '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: DataMatrix,
    pub labels: Option<Vec<u32>>,
}

pub fn parse_csv(text: &str, label_col: Option<LabelCol>) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                bail!("line {lineno}: expected {w} fields, found {}", fields.len())
            }
            _ => {}
        }
        let label_at = match label_col {
            None => None,
            Some(LabelCol::Last) => Some(fields.len() - 1),
            Some(LabelCol::Index(j)) if j < fields.len() => Some(j),
            Some(LabelCol::Index(j)) => {
                bail!("line {lineno}: label column {j} out of range for {} fields", fields.len())
            }
        };
        for (j, f) in fields.iter().enumerate() {
            if Some(j) == label_at {
                let l: u32 = f
                    .parse()
                    .with_context(|| format!("line {lineno}: invalid label '{f}'"))?;
                labels.push(l);
                continue;
            }
            let v: f32 = f
                .parse()
                .with_context(|| format!("line {lineno}, column {}: invalid number '{f}'", j + 1))?;
            if !v.is_finite() {
                bail!("line {lineno}, column {}: non-finite value '{f}'", j + 1);
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0) - usize::from(label_col.is_some());
    if rows == 0 || cols == 0 {
        bail!("no data rows");
    }
    let matrix = DataMatrix::new(rows, cols, values)?;
    Ok(Dataset {
        matrix,
        labels: label_col.map(|_| labels),
    })
}

/// One non-negative integer per line.
pub fn parse_labels(text: &str) -> Result<Vec<u32>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .with_context(|| format!("line {}: invalid label '{}'", i + 1, l.trim()))
        })
        .collect()
}

pub fn ingest(
    path: &Path,
    format: Option<Format>,
    label_col: Option<LabelCol>,
    labels_path: Option<&Path>,
) -> Result<Dataset> {
    let format = format.unwrap_or_else(|| Format::infer(path));
    let mut ds = match format {
        Format::Csv => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            parse_csv(&text, label_col).with_context(|| format!("{}", path.display()))?
        }
        Format::Mxv => {
            if label_col.is_some() {
                bail!("--label-col applies to CSV input only; use --labels with MXV");
            }
            let matrix = io::load_matrix(path)
                .with_context(|| format!("cannot load {}", path.display()))?;
            Dataset {
                matrix,
                labels: None,
            }
        }
    };
    if let Some(lp) = labels_path {
        if ds.labels.is_some() {
            bail!("labels given both as a column and as a file");
        }
        let text = fs::read_to_string(lp).with_context(|| format!("cannot read {}", lp.display()))?;
        ds.labels = Some(parse_labels(&text).with_context(|| format!("{}", lp.display()))?);
    }
    if let Some(l) = &ds.labels {
        if l.len() != ds.matrix.rows() {
            bail!("{} labels for {} rows", l.len(), ds.matrix.rows());
        }
    }
    validate(&ds.matrix)?;
    Ok(ds)
}

/// A headed CSV table of text cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, head)) = lines.next() else {
        bail!("empty table");
    };
    let split = |l: &str| l.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>();
    let header = split(head);
    let mut rows = Vec::new();
    for (i, l) in lines {
        let row = split(l);
        if row.len() != header.len() {
            bail!("line {}: expected {} fields, found {}", i + 1, header.len(), row.len());
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_table(&text).with_context(|| format!("{}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_matrix() {
        let ds = parse_csv("1,2\n3,4\n", None).unwrap();
        assert_eq!((ds.matrix.rows(), ds.matrix.cols()), (2, 2));
        assert_eq!(ds.matrix.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn trailing_labels() {
        let ds = parse_csv("1,2,0\n3,4,1\n", Some(LabelCol::Last)).unwrap();
        assert_eq!(ds.matrix.values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ds.labels, Some(vec![0, 1]));
        let ds = parse_csv("7,1,2\n8,3,4\n", Some(LabelCol::Index(0))).unwrap();
        assert_eq!(ds.labels, Some(vec![7, 8]));
        assert_eq!(ds.matrix.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = format!("{:#}", parse_csv("1,x\n", None).unwrap_err());
        assert!(e.contains("line 1"), "{e}");
        let e = format!("{:#}", parse_csv("1,2\n3,NaN\n", None).unwrap_err());
        assert!(e.contains("line 2") && e.contains("non-finite"), "{e}");
        let e = format!("{:#}", parse_csv("1,2\n\n3\n", None).unwrap_err());
        assert!(e.contains("line 3"), "{e}");
        let e = format!("{:#}", parse_csv("1,2,-1\n", Some(LabelCol::Last)).unwrap_err());
        assert!(e.contains("label"), "{e}");
        assert!(parse_csv("\n\n", None).is_err());
    }

    #[test]
    fn label_col_parsing() {
        assert_eq!("last".parse::<LabelCol>().unwrap(), LabelCol::Last);
        assert_eq!("3".parse::<LabelCol>().unwrap(), LabelCol::Index(3));
        assert!("x".parse::<LabelCol>().is_err());
    }

    #[test]
    fn tables() {
        let t = parse_table("a,b\nx,1\ny,2\n").unwrap();
        assert_eq!(t.column("b").unwrap(), ["1", "2"]);
        assert!(parse_table("a,b\nx\n").is_err());
    }
}
