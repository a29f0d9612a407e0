use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Feature matrix (row-major, `n x p`) plus response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    responses: Vec<f64>,
    n: usize,
    p: usize,
    /// Leading columns that carry signal; the rest are noise.
    pub informative: usize,
    pub noise_count: usize,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer. All columns are
    /// treated as informative.
    pub fn new(features: Vec<f64>, responses: Vec<f64>, p: usize) -> Result<Self> {
        Self::with_layout(features, responses, p, p, 0)
    }

    pub fn with_layout(
        features: Vec<f64>,
        responses: Vec<f64>,
        p: usize,
        informative: usize,
        noise_count: usize,
    ) -> Result<Self> {
        let n = responses.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one feature column"));
        }
        if informative + noise_count != p {
            return Err(Error::invalid(format!(
                "informative ({informative}) + noise ({noise_count}) != p ({p})"
            )));
        }
        if features.len() != n * p {
            return Err(Error::Dimension {
                expected: n * p,
                got: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "features",
                row: i / p,
            });
        }
        if let Some(i) = responses.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "responses",
                row: i,
            });
        }
        Ok(Dataset {
            features,
            responses,
            n,
            p,
            informative,
            noise_count,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::Dimension {
                expected: p,
                got: bad.len(),
            });
        }
        if rows.len() != responses.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: responses.len(),
            });
        }
        Self::new(rows.concat(), responses, p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.p)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Column-major copy of the features, `p` slices of length `n`.
    pub(crate) fn columns(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.p];
        for (i, row) in self.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[j * self.n + i] = v;
            }
        }
        out
    }

    /// Writes `x1,...,xp,y` with shortest round-trip float formatting and LF
    /// line endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::new();
        for j in 1..=self.p {
            line.push_str(&format!("x{j},"));
        }
        line.push_str("y\n");
        w.write_all(line.as_bytes())?;
        for (row, y) in self.rows().zip(&self.responses) {
            line.clear();
            for v in row {
                line.push_str(&format!("{v},"));
            }
            line.push_str(&format!("{y}\n"));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Reads a headed CSV. `target` names the response column; every other
    /// column is a feature, in file order.
    pub fn read_csv<R: Read>(r: R, target: &str) -> Result<Self> {
        let (names, table) = read_table(r)?;
        let ti = names
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| Error::Csv(format!("no `{target}` column in header")))?;
        let p = names.len() - 1;
        let mut features = Vec::with_capacity(table.len() * p);
        let mut responses = Vec::with_capacity(table.len());
        for row in table {
            for (j, v) in row.into_iter().enumerate() {
                if j == ti {
                    responses.push(v);
                } else {
                    features.push(v);
                }
            }
        }
        Self::new(features, responses, p)
    }
}

/// Reads a feature-only CSV (queries). A column named `target`, if present,
/// is dropped so training files can be reused as query files.
pub fn read_queries<R: Read>(r: R, target: &str) -> Result<Vec<Vec<f64>>> {
    let (names, table) = read_table(r)?;
    let skip = names.iter().position(|h| h == target);
    Ok(table
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .filter(|(j, _)| Some(*j) != skip)
                .map(|(_, v)| v)
                .collect()
        })
        .collect())
}

fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut table = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| Error::Csv(format!("row {}: cannot parse `{f}`", i + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { what: "csv", row: i })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        table.push(row);
    }
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((names, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::from_rows(
            &[vec![0.1, 1e-300], vec![-2.5, 1.0 / 3.0]],
            vec![std::f64::consts::PI, -0.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y\n"));
        assert!(!text.contains('\r'));
        let back = Dataset::read_csv(&buf[..], "y").unwrap();
        assert_eq!(back.features(), d.features());
        assert_eq!(back.responses(), d.responses());
    }

    #[test]
    fn target_column_can_be_anywhere() {
        let text = "price,a,b\n1,2,3\n4,5,6\n";
        let d = Dataset::read_csv(text.as_bytes(), "price").unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.responses(), &[1.0, 4.0]);
        assert_eq!(d.row(1), &[5.0, 6.0]);
        assert!(Dataset::read_csv(text.as_bytes(), "y").is_err());
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(matches!(
            Dataset::new(vec![], vec![], 1),
            Err(Error::EmptyDataset)
        ));
        assert!(Dataset::new(vec![1.0], vec![1.0, 2.0], 1).is_err());
        assert!(matches!(
            Dataset::new(vec![f64::NAN], vec![1.0], 1),
            Err(Error::NonFinite { .. })
        ));
        assert!(Dataset::read_csv("x,y\n1,inf\n".as_bytes(), "y").is_err());
    }
}
