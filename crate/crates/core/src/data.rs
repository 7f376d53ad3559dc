//! Count trajectories on a common yearly grid: parsing, validation, filtering
//! and elementwise transforms.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Yearly grid `t_j = j`, `j = 1..=T`, unit spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    len: usize,
}

impl TimeGrid {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidInput(format!(
                "time grid needs at least 2 points, got {len}"
            )));
        }
        Ok(Self { len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight between grid points (years).
    pub fn spacing(&self) -> f64 {
        1.0
    }

    pub fn point(&self, j: usize) -> f64 {
        (j + 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (1..=self.len).map(|j| j as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTrajectory {
    pub id: String,
    pub counts: Vec<u64>,
}

impl CountTrajectory {
    pub fn new(id: impl Into<String>, counts: Vec<u64>) -> Self {
        Self { id: id.into(), counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn cumulative(&self) -> Vec<u64> {
        cumulative(&self.counts)
    }

    pub fn log_transform(&self) -> Vec<f64> {
        log_transform(&self.counts)
    }
}

/// A set of trajectories sharing one grid, ids unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    grid: TimeGrid,
    items: Vec<CountTrajectory>,
    pub provenance: String,
}

impl Corpus {
    pub fn new(grid: TimeGrid, items: Vec<CountTrajectory>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.counts.len() != grid.len() {
                return Err(Error::InconsistentLength {
                    line: i + 1,
                    expected: grid.len(),
                    found: item.counts.len(),
                });
            }
            if !seen.insert(item.id.as_str()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
        }
        Ok(Self {
            grid,
            items,
            provenance: String::new(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn items(&self) -> &[CountTrajectory] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|it| it.id.as_str()).collect()
    }

    /// Subset by item index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            grid: self.grid,
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// `ln(y + 1)` for every item, row-major `n x T`.
    pub fn log_matrix(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|it| it.log_transform()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess from a file extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

#[derive(Deserialize, Serialize)]
struct JsonRecord {
    id: String,
    counts: Vec<i64>,
}

fn check_counts(line: usize, raw: Vec<i64>) -> Result<Vec<u64>> {
    raw.into_iter()
        .map(|v| {
            if v < 0 {
                Err(Error::NegativeCount { line, value: v })
            } else {
                Ok(v as u64)
            }
        })
        .collect()
}

pub fn parse_corpus<R: Read>(source: R, format: Format) -> Result<Corpus> {
    match format {
        Format::Csv => parse_csv(source),
        Format::Jsonl => parse_jsonl(source),
    }
}

fn parse_csv<R: Read>(source: R) -> Result<Corpus> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("id") {
        return Err(Error::Malformed {
            line: 1,
            message: "header must start with `id`".into(),
        });
    }
    let grid = TimeGrid::new(headers.len() - 1).map_err(|_| Error::Malformed {
        line: 1,
        message: "header must name at least two count columns".into(),
    })?;

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != grid.len() + 1 {
            return Err(Error::InconsistentLength {
                line,
                expected: grid.len(),
                found: record.len().saturating_sub(1),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Malformed {
                line,
                message: "empty id".into(),
            });
        }
        let raw = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<i64>().map_err(|_| Error::Malformed {
                    line,
                    message: format!("count `{f}` is not an integer"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let counts = check_counts(line, raw)?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        items.push(CountTrajectory { id, counts });
    }
    Corpus::new(grid, items)
}

fn parse_jsonl<R: Read>(source: R) -> Result<Corpus> {
    let reader = BufReader::new(source);
    let mut grid: Option<TimeGrid> = None;
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        let g = match grid {
            Some(g) => g,
            None => {
                let g = TimeGrid::new(rec.counts.len()).map_err(|e| Error::Malformed {
                    line: lineno,
                    message: e.to_string(),
                })?;
                grid = Some(g);
                g
            }
        };
        if rec.counts.len() != g.len() {
            return Err(Error::InconsistentLength {
                line: lineno,
                expected: g.len(),
                found: rec.counts.len(),
            });
        }
        let counts = check_counts(lineno, rec.counts)?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        items.push(CountTrajectory { id: rec.id, counts });
    }
    let grid = grid.ok_or_else(|| Error::Malformed {
        line: 1,
        message: "no records".into(),
    })?;
    Corpus::new(grid, items)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, format: Format, mut out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut header = String::from("id");
            for j in 1..=corpus.grid().len() {
                header.push_str(&format!(",y{j}"));
            }
            writeln!(out, "{header}")?;
            for item in corpus.items() {
                let mut row = csv_field(&item.id);
                for c in &item.counts {
                    row.push(',');
                    row.push_str(&c.to_string());
                }
                writeln!(out, "{row}")?;
            }
        }
        Format::Jsonl => {
            for item in corpus.items() {
                serde_json::to_writer(&mut out, item)?;
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Outcome of [`filter_by_total`].
#[derive(Debug, Clone)]
pub struct Filtered {
    pub corpus: Corpus,
    pub kept: usize,
    pub dropped: usize,
}

/// Keep items whose total count is at least `min_total`.
pub fn filter_by_total(corpus: &Corpus, min_total: u64) -> Filtered {
    let items: Vec<CountTrajectory> = corpus
        .items()
        .iter()
        .filter(|it| it.total() >= min_total)
        .cloned()
        .collect();
    let kept = items.len();
    Filtered {
        corpus: Corpus {
            grid: corpus.grid,
            items,
            provenance: corpus.provenance.clone(),
        },
        kept,
        dropped: corpus.len() - kept,
    }
}

/// Prefix sums.
pub fn cumulative(counts: &[u64]) -> Vec<u64> {
    counts
        .iter()
        .scan(0u64, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect()
}

/// `ln(y + 1)` elementwise.
pub fn log_transform(counts: &[u64]) -> Vec<f64> {
    counts.iter().map(|&c| (c as f64).ln_1p()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv(s: &str) -> Result<Corpus> {
        parse_corpus(s.as_bytes(), Format::Csv)
    }

    #[test]
    fn parses_minimal_csv() {
        let c = csv("id,y1,y2,y3\np1,0,1,2").unwrap();
        assert_eq!(c.grid().len(), 3);
        assert_eq!(c.items()[0].counts, vec![0, 1, 2]);
    }

    #[test]
    fn short_row_is_rejected() {
        let err = csv("id,y1,y2,y3\np1,0,1,2\np2,1,2").unwrap_err();
        match err {
            Error::InconsistentLength { line, expected, found } => {
                assert_eq!((line, expected, found), (3, 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_and_non_integer_counts() {
        assert!(matches!(
            csv("id,y1,y2\np1,0,-1").unwrap_err(),
            Error::NegativeCount { line: 2, value: -1 }
        ));
        assert!(matches!(
            csv("id,y1,y2\np1,0,1.5").unwrap_err(),
            Error::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn duplicate_ids() {
        assert!(matches!(
            csv("id,y1,y2\na,0,1\na,1,1").unwrap_err(),
            Error::DuplicateId(id) if id == "a"
        ));
        let jsonl = "{\"id\":\"a\",\"counts\":[1,2]}\n{\"id\":\"a\",\"counts\":[1,2]}\n";
        assert!(matches!(
            parse_corpus(jsonl.as_bytes(), Format::Jsonl).unwrap_err(),
            Error::DuplicateId(_)
        ));
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let jsonl = "{\"id\":\"a\",\"counts\":[1,2]}\n{\"id\":\"b\",\"counts\":[1,2,3]}\n";
        assert!(matches!(
            parse_corpus(jsonl.as_bytes(), Format::Jsonl).unwrap_err(),
            Error::InconsistentLength { line: 2, .. }
        ));
        let bad = "{\"id\":\"a\",\"counts\":[1,2]}\nnot json\n";
        assert!(matches!(
            parse_corpus(bad.as_bytes(), Format::Jsonl).unwrap_err(),
            Error::Malformed { line: 2, .. }
        ));
    }

    #[test]
    fn filter_examples() {
        let grid = TimeGrid::new(2).unwrap();
        let c = Corpus::new(
            grid,
            vec![
                CountTrajectory::new("a", vec![2, 3]),
                CountTrajectory::new("b", vec![10, 20]),
                CountTrajectory::new("c", vec![50, 50]),
            ],
        )
        .unwrap();
        let f = filter_by_total(&c, 30);
        assert_eq!(f.corpus.ids(), vec!["b", "c"]);
        assert_eq!((f.kept, f.dropped), (2, 1));
        assert_eq!(filter_by_total(&c, 0).corpus, c);
    }

    #[test]
    fn cumulative_and_log() {
        assert_eq!(cumulative(&[0, 1, 2]), vec![0, 1, 3]);
        assert_eq!(cumulative(&[0, 0, 0]), vec![0, 0, 0]);
        assert_eq!(log_transform(&[0, 0]), vec![0.0, 0.0]);
        assert!((log_transform(&[2])[0] - 3f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn cumulative_matches_fold(counts in prop::collection::vec(0u64..1000, 30)) {
            let c = cumulative(&counts);
            let mut acc = 0;
            for (j, &y) in counts.iter().enumerate() {
                acc += y;
                prop_assert_eq!(c[j], acc);
            }
            prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*c.last().unwrap(), counts.iter().sum::<u64>());
        }

        #[test]
        fn log_transform_inverts(counts in prop::collection::vec(0u64..100_000, 1..40)) {
            let z = log_transform(&counts);
            for (y, z) in counts.iter().zip(z) {
                prop_assert_eq!(z.exp_m1().round() as u64, *y);
            }
        }

        #[test]
        fn filter_is_idempotent(totals in prop::collection::vec(0u64..100, 1..30), min in 0u64..100) {
            let grid = TimeGrid::new(2).unwrap();
            let items = totals.iter().enumerate()
                .map(|(i, &t)| CountTrajectory::new(format!("p{i}"), vec![t / 2, t - t / 2]))
                .collect();
            let c = Corpus::new(grid, items).unwrap();
            let once = filter_by_total(&c, min).corpus;
            let twice = filter_by_total(&once, min).corpus;
            prop_assert_eq!(once, twice);
        }
    }
}
