//! Run-off triangles of incremental claim counts.
//!
//! Accident years are numbered from 1 and development years from 0, so cell
//! `(ay, dy)` is observed exactly when `ay + dy <= I`. Every other module
//! uses the same convention; only the CSV layer deals with 0-based columns.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed cell in long format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub ay: usize,
    pub dy: usize,
    pub count: u64,
}

/// Square triangle of incremental counts; only the upper-left half is stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOffTriangle {
    rows: Vec<Vec<u64>>,
    origin_label: Option<i64>,
}

/// Cumulative counterpart of [`RunOffTriangle`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulativeTriangle {
    rows: Vec<Vec<u64>>,
    origin_label: Option<i64>,
}

/// Options for [`parse_triangle_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Round non-integer amounts to the nearest integer instead of rejecting them.
    /// Used for paid-amount triangles, which the count likelihood only
    /// approximates.
    pub round_amounts: bool,
}

fn check_shape(rows: &[Vec<u64>]) -> Result<()> {
    let dim = rows.len();
    if dim == 0 {
        return Err(Error::Empty);
    }
    if dim < 2 {
        return Err(Error::TooSmall(dim));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != dim - r {
            return Err(Error::RaggedRow {
                row: r + 1,
                found: row.len(),
                expected: dim - r,
            });
        }
    }
    Ok(())
}

impl RunOffTriangle {
    /// Builds a triangle from its observed rows; row `r` (0-based) must hold
    /// `I - r` counts.
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        check_shape(&rows)?;
        Ok(Self {
            rows,
            origin_label: None,
        })
    }

    pub fn with_origin_label(mut self, label: Option<i64>) -> Self {
        self.origin_label = label;
        self
    }

    /// Number of accident years `I` (equal to the number of development years).
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn origin_label(&self) -> Option<i64> {
        self.origin_label
    }

    /// Display label of an accident year: the calendar year when an origin
    /// label is known, otherwise the index itself.
    pub fn ay_label(&self, ay: usize) -> String {
        match self.origin_label {
            Some(first) => (first + ay as i64 - 1).to_string(),
            None => ay.to_string(),
        }
    }

    pub fn get(&self, ay: usize, dy: usize) -> Option<u64> {
        if ay == 0 {
            return None;
        }
        self.rows.get(ay - 1).and_then(|row| row.get(dy)).copied()
    }

    /// Observed counts of accident year `ay`.
    pub fn row(&self, ay: usize) -> &[u64] {
        &self.rows[ay - 1]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    /// Number of observed cells, `I(I+1)/2`.
    pub fn n_observed(&self) -> usize {
        let i = self.dim();
        i * (i + 1) / 2
    }

    /// Observed cells in row-major order.
    pub fn to_long(&self) -> Vec<CellRecord> {
        let mut out = Vec::with_capacity(self.n_observed());
        for (r, row) in self.rows.iter().enumerate() {
            for (dy, &count) in row.iter().enumerate() {
                out.push(CellRecord {
                    ay: r + 1,
                    dy,
                    count,
                });
            }
        }
        out
    }

    /// Inverse of [`to_long`](Self::to_long). Records may come in any order but
    /// must cover every observed cell exactly once.
    pub fn from_long(dim: usize, records: &[CellRecord]) -> Result<Self> {
        if dim < 2 {
            return Err(Error::TooSmall(dim));
        }
        let mut rows: Vec<Vec<Option<u64>>> = (0..dim).map(|r| vec![None; dim - r]).collect();
        for rec in records {
            if rec.ay == 0 || rec.ay > dim || rec.ay + rec.dy > dim {
                return Err(Error::InvalidRecords(format!(
                    "cell ({}, {}) is outside the observed triangle of dimension {dim}",
                    rec.ay, rec.dy
                )));
            }
            let slot = &mut rows[rec.ay - 1][rec.dy];
            if slot.is_some() {
                return Err(Error::InvalidRecords(format!(
                    "cell ({}, {}) appears twice",
                    rec.ay, rec.dy
                )));
            }
            *slot = Some(rec.count);
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(r, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(dy, v)| v.ok_or(Error::MissingObservedCell { ay: r + 1, dy }))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn cumulate(&self) -> CumulativeTriangle {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0u64, |acc, &n| {
                        *acc += n;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        CumulativeTriangle {
            rows,
            origin_label: self.origin_label,
        }
    }

    /// Writes the triangle in the CSV layout accepted by [`parse_triangle`],
    /// with an `ay,dy0,...` header and empty future cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.dim();
        let mut wtr = csv::WriterBuilder::new().flexible(false).from_writer(out);
        let mut header = vec!["ay".to_string()];
        header.extend((0..dim).map(|j| format!("dy{j}")));
        wtr.write_record(&header)?;
        for (r, row) in self.rows.iter().enumerate() {
            let mut rec = vec![self.ay_label(r + 1)];
            rec.extend(row.iter().map(|n| n.to_string()));
            rec.extend(std::iter::repeat_n(String::new(), dim - row.len()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to an in-memory buffer cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

impl CumulativeTriangle {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, ay: usize, dy: usize) -> Option<u64> {
        if ay == 0 {
            return None;
        }
        self.rows.get(ay - 1).and_then(|row| row.get(dy)).copied()
    }

    pub fn row(&self, ay: usize) -> &[u64] {
        &self.rows[ay - 1]
    }

    /// Latest observed cumulative value `C_{i, I-i}` of accident year `ay`.
    pub fn latest(&self, ay: usize) -> u64 {
        *self.rows[ay - 1].last().expect("rows are non-empty")
    }

    pub fn decumulate(&self) -> RunOffTriangle {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut prev = 0;
                row.iter()
                    .map(|&c| {
                        let inc = c - prev;
                        prev = c;
                        inc
                    })
                    .collect()
            })
            .collect();
        RunOffTriangle {
            rows,
            origin_label: self.origin_label,
        }
    }
}

/// Cells `(ay, dy)` with `ay + dy > I`, row-major.
pub fn future_cells(dim: usize) -> Vec<(usize, usize)> {
    (2..=dim)
        .flat_map(|ay| (dim - ay + 1..dim).map(move |dy| (ay, dy)))
        .collect()
}

/// Parses a triangle from CSV text with default options.
pub fn parse_triangle(text: &str) -> Result<RunOffTriangle> {
    parse_triangle_with(text.as_bytes(), ParseOptions::default())
}

/// Parses a triangle CSV.
///
/// The first line may be a header. When its first field is `ay`, every data
/// line starts with an accident-year label; otherwise lines hold counts only.
/// Future cells must be empty fields.
pub fn parse_triangle_with<R: Read>(input: R, opts: ParseOptions) -> Result<RunOffTriangle> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Empty);
    }

    let first = records[0].get(0).unwrap_or("");
    let is_header = !first.is_empty() && first.parse::<f64>().is_err();
    let labelled = is_header && first.eq_ignore_ascii_case("ay");
    if is_header {
        records.remove(0);
    }
    if records.is_empty() {
        return Err(Error::Empty);
    }

    let offset = usize::from(labelled);
    let dim = records.len();
    let cols = records[0].len().saturating_sub(offset);
    if cols != dim {
        return Err(Error::NotSquare { rows: dim, cols });
    }
    if dim < 2 {
        return Err(Error::TooSmall(dim));
    }

    let origin_label = if labelled {
        records[0].get(0).and_then(|s| s.parse::<i64>().ok())
    } else {
        None
    };

    let mut rows = Vec::with_capacity(dim);
    for (r, rec) in records.iter().enumerate() {
        if rec.len() != dim + offset {
            return Err(Error::RaggedRow {
                row: r + 1,
                found: rec.len() - offset,
                expected: dim,
            });
        }
        let ay = r + 1;
        let mut row = Vec::with_capacity(dim - r);
        for dy in 0..dim {
            let field = &rec[dy + offset];
            let observed = ay + dy <= dim;
            match (observed, field.is_empty()) {
                (true, true) => return Err(Error::MissingObservedCell { ay, dy }),
                (false, false) => return Err(Error::FuturePopulated { ay, dy }),
                (false, true) => {}
                (true, false) => row.push(parse_count(field, ay, dy, opts)?),
            }
        }
        rows.push(row);
    }
    Ok(RunOffTriangle::new(rows)?.with_origin_label(origin_label))
}

fn parse_count(field: &str, ay: usize, dy: usize, opts: ParseOptions) -> Result<u64> {
    if let Ok(v) = field.parse::<i64>() {
        return u64::try_from(v).map_err(|_| Error::NegativeCount {
            ay,
            dy,
            value: field.to_string(),
        });
    }
    let non_integer = || Error::NonIntegerCount {
        ay,
        dy,
        value: field.to_string(),
    };
    let v: f64 = field.parse().map_err(|_| non_integer())?;
    if !v.is_finite() {
        return Err(non_integer());
    }
    if v < 0.0 {
        return Err(Error::NegativeCount {
            ay,
            dy,
            value: field.to_string(),
        });
    }
    if v.fract() == 0.0 || opts.round_amounts {
        Ok(v.round() as u64)
    } else {
        Err(non_integer())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;

    #[test]
    fn parses_aus_motor() {
        let t = datasets::aus_motor_bi();
        assert_eq!(t.dim(), 7);
        assert_eq!(t.get(1, 0), Some(220));
        assert_eq!(t.get(7, 0), Some(2));
        assert_eq!(t.get(7, 1), None);
        assert_eq!(t.origin_label(), Some(1993));
        assert_eq!(t.ay_label(7), "1999");
    }

    #[test]
    fn smallest_triangle_without_header() {
        let t = parse_triangle("10,5\n20,\n").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get(1, 0), Some(10));
        assert_eq!(t.get(1, 1), Some(5));
        assert_eq!(t.get(2, 0), Some(20));
        assert_eq!(t.to_long().len(), 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_triangle("10,-3\n20,\n"),
            Err(Error::NegativeCount { ay: 1, dy: 1, .. })
        ));
        assert!(matches!(
            parse_triangle("10,2.5\n20,\n"),
            Err(Error::NonIntegerCount { .. })
        ));
        assert!(matches!(
            parse_triangle("10,\n20,\n"),
            Err(Error::MissingObservedCell { ay: 1, dy: 1 })
        ));
        assert!(matches!(
            parse_triangle("10,5\n20,4\n"),
            Err(Error::FuturePopulated { ay: 2, dy: 1 })
        ));
        assert!(matches!(
            parse_triangle("10,5,1\n20,4,\n3,,\n1,,\n"),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            parse_triangle("10,5,1\n20,4\n3,,\n"),
            Err(Error::RaggedRow { row: 2, .. })
        ));
        assert!(matches!(parse_triangle(""), Err(Error::Empty)));
        assert!(matches!(parse_triangle("ay,dy0\n"), Err(Error::Empty)));
        assert!(matches!(parse_triangle("7\n"), Err(Error::TooSmall(1))));
    }

    #[test]
    fn rounding_switch_accepts_amounts() {
        let opts = ParseOptions {
            round_amounts: true,
        };
        let t = parse_triangle_with("10.4,5.6\n20.5,\n".as_bytes(), opts).unwrap();
        assert_eq!(t.row(1), &[10, 6]);
        assert_eq!(t.row(2), &[21]);
    }

    #[test]
    fn long_format_order_and_round_trip() {
        let t = datasets::aus_motor_bi();
        let long = t.to_long();
        assert_eq!(long.len(), 28);
        assert_eq!(long[0], CellRecord { ay: 1, dy: 0, count: 220 });
        assert_eq!(long[27], CellRecord { ay: 7, dy: 0, count: 2 });
        let back = RunOffTriangle::from_long(7, &long).unwrap();
        assert_eq!(back.rows(), t.rows());
    }

    #[test]
    fn from_long_rejects_gaps_and_duplicates() {
        let mut long = datasets::aus_motor_bi().to_long();
        long.pop();
        assert!(matches!(
            RunOffTriangle::from_long(7, &long),
            Err(Error::MissingObservedCell { ay: 7, dy: 0 })
        ));
        long.push(long[0]);
        assert!(RunOffTriangle::from_long(7, &long).is_err());
    }

    #[test]
    fn cumulative_row_one() {
        let c = datasets::aus_motor_bi().cumulate();
        assert_eq!(c.row(1), &[220, 1075, 1819, 2233, 2620, 2924, 2968]);
        assert_eq!(c.latest(7), 2);
    }

    #[test]
    fn single_column_cumulative_is_incremental() {
        let t = RunOffTriangle::new(vec![vec![4, 0], vec![9]]).unwrap();
        assert_eq!(t.cumulate().get(2, 0), t.get(2, 0));
        assert_eq!(t.cumulate().decumulate(), t);
    }

    #[test]
    fn future_cell_layout() {
        assert_eq!(future_cells(2), vec![(2, 1)]);
        assert_eq!(future_cells(7).len(), 21);
        assert!(future_cells(10).iter().all(|&(i, j)| i + j > 10));
    }

    #[test]
    fn csv_round_trip_keeps_labels() {
        let t = datasets::aus_motor_bi();
        let again = parse_triangle(&t.to_csv_string()).unwrap();
        assert_eq!(again, t);
    }
}
