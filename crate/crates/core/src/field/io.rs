//! CSV and JSON serialization of fields.
//!
//! Nodal fields are written as `x1,...,xN,value` rows in node order; any field is
//! written to JSON through serde.

use std::io::{Read, Write};
use std::path::Path;

use super::{GridSpec, NodalField, PointSet, ScalarField};
use crate::error::{shape, Result};

/// Writes a numeric table with the given header. Floats use the shortest
/// representation that round-trips.
pub fn write_table<W: Write>(out: W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table; returns the header and row-major values.
pub fn read_table<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| shape(format!("row {}: '{s}' is not a number", line + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(shape(format!("row {} has {} columns, header has {}", line + 1, row.len(), header.len())));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn coordinate_header(dim: usize, prefix: &str) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

impl NodalField {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.grid.dim();
        let mut header = coordinate_header(dim, "x");
        header.push("value".into());
        let pts = self.grid.points();
        write_table(
            out,
            &header,
            pts.iter().zip(&self.values).map(|(p, v)| {
                let mut row = p.to_vec();
                row.push(*v);
                row
            }),
        )
    }

    /// Reads a `x1,...,xN,value` table whose points form a full lattice in node order.
    pub fn read_csv<R: Read>(input: R) -> Result<NodalField> {
        let (header, rows) = read_table(input)?;
        if header.len() < 2 || header.last().map(String::as_str) != Some("value") {
            return Err(shape("nodal CSV needs columns x1..xN,value"));
        }
        let dim = header.len() - 1;
        let coords = rows.iter().flat_map(|r| r[..dim].iter().copied()).collect();
        let pts = PointSet::new(dim, coords)?;
        let grid = GridSpec::infer(&pts).ok_or_else(|| shape("nodal CSV points do not form a lattice"))?;
        NodalField::new(grid, rows.iter().map(|r| r[dim]).collect())
    }
}

impl ScalarField {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<ScalarField> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Basis, BasisField, DomainBox};

    #[test]
    fn nodal_csv_round_trip() {
        let g = GridSpec::new(vec![-1.0, 0.5], vec![0.1, 0.25], vec![4, 3]).unwrap();
        let f = NodalField::from_fn(g, |x| x[0].sin() + x[1]).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,value\n"));
        let back = NodalField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.grid().counts(), f.grid().counts());
    }

    #[test]
    fn json_round_trip_both_representations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let g = GridSpec::new(vec![0.0], vec![0.5], vec![3]).unwrap();
        let d = DomainBox::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let fields = [
            ScalarField::Nodal(NodalField::new(g, vec![1.0, 2.0, 4.0]).unwrap()),
            ScalarField::Basis(BasisField::from_fn(Basis::legendre(d, 2), |x| x[0] * x[1]).unwrap()),
        ];
        for f in fields {
            f.write_json(&path).unwrap();
            assert_eq!(ScalarField::read_json(&path).unwrap(), f);
        }
    }

    #[test]
    fn json_rejects_bad_lengths() {
        let s = r#"{"representation":"nodal","grid":{"mins":[0.0],"spacing":[1.0],"counts":[3]},"values":[1.0]}"#;
        assert!(serde_json::from_str::<ScalarField>(s).is_err());
    }
}
