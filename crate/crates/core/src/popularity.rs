//! Request popularity: the Zipf law and normalized view-count traces.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A strictly positive probability vector over the file library, indexed by
/// file (file `f` is at index `f - 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Popularity {
    q: Vec<f64>,
}

/// Sum of the vector must match 1 to this absolute tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

impl Popularity {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some((f, &v)) = q
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::invalid(
                "popularity",
                format!("q[{}] = {v} is not a positive probability", f + 1),
            ));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::invalid(
                "popularity",
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(Self { q })
    }

    /// Normalizes non-negative weights, dropping nothing. All weights must be
    /// positive.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.q
    }

    pub fn get(&self, index: usize) -> f64 {
        self.q[index]
    }

    /// File indices ordered by descending popularity; ties keep index order.
    pub fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.q.len()).collect();
        order.sort_by(|&a, &b| self.q[b].total_cmp(&self.q[a]));
        order
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZipfParams {
    pub files: usize,
    pub skew: f64,
}

impl ZipfParams {
    pub fn new(files: usize, skew: f64) -> Result<Self> {
        if files == 0 {
            return Err(Error::invalid(
                "files",
                "library must hold at least one file",
            ));
        }
        if !(skew >= 0.0 && skew.is_finite()) {
            return Err(Error::invalid(
                "zipf_skew",
                format!("{skew} is not a finite value >= 0"),
            ));
        }
        Ok(Self { files, skew })
    }
}

/// `q_f = f^-skew / sum_h h^-skew` for `f = 1..=files`.
pub fn zipf_popularity(params: ZipfParams) -> Result<Popularity> {
    let ZipfParams { files, skew } = ZipfParams::new(params.files, params.skew)?;
    let weights: Vec<f64> = (1..=files)
        .map(|f| (-(skew) * (f as f64).ln()).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Popularity::new(weights.into_iter().map(|w| w / total).collect())
}

/// A view-count trace: one `(id, views)` row per file with positive views,
/// sorted by descending views (ties keep their original row order).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    rows: Vec<(String, u64)>,
}

impl Trace {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::parse(BufReader::new(file))
    }

    /// Parses `id,views` rows. A first row whose views field is not an
    /// integer is treated as a header. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut rows = Vec::new();
        let mut first_data_line = true;
        for (index, line) in reader.lines().enumerate() {
            let line_no = index + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split(',');
            let (id, views) = match (fields.next(), fields.next(), fields.next()) {
                (Some(id), Some(views), None) => (id.trim(), views.trim()),
                _ => {
                    return Err(Error::TraceParse {
                        line: line_no,
                        reason: format!("expected two comma-separated fields, got `{trimmed}`"),
                    })
                }
            };
            let is_header = first_data_line && views.parse::<f64>().is_err();
            first_data_line = false;
            if is_header {
                continue;
            }
            let views: u64 = views.parse().map_err(|_| Error::TraceParse {
                line: line_no,
                reason: format!("view count `{views}` is not a non-negative integer"),
            })?;
            if views > 0 {
                rows.push((id.to_string(), views));
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        // stable: equal counts keep row order
        rows.sort_by_key(|r| std::cmp::Reverse(r.1));
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(String, u64)] {
        &self.rows
    }

    pub fn popularity(&self) -> Result<Popularity> {
        let total: f64 = self.rows.iter().map(|(_, v)| *v as f64).sum();
        Popularity::new(self.rows.iter().map(|(_, v)| *v as f64 / total).collect())
    }

    pub fn write(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "id,views")?;
        for (id, views) in &self.rows {
            writeln!(out, "{id},{views}")?;
        }
        Ok(())
    }
}

/// Loads a `id,views` trace and normalizes it into a popularity vector.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Popularity> {
    Trace::read(path)?.popularity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zipf(files: usize, skew: f64) -> Popularity {
        zipf_popularity(ZipfParams { files, skew }).unwrap()
    }

    #[test]
    fn zipf_examples() {
        let q = zipf(3, 0.0);
        for v in q.probs() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let q = zipf(2, 1.0);
        assert!((q.get(0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((q.get(1) - 1.0 / 3.0).abs() < 1e-15);
        let q = zipf(1000, 1.0);
        assert!((q.get(0) / q.get(9) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zipf_rejects_bad_params() {
        assert!(zipf_popularity(ZipfParams {
            files: 0,
            skew: 1.0
        })
        .is_err());
        assert!(zipf_popularity(ZipfParams {
            files: 5,
            skew: -0.1
        })
        .is_err());
        assert!(zipf_popularity(ZipfParams {
            files: 5,
            skew: f64::NAN
        })
        .is_err());
    }

    #[test]
    fn zipf_million_files() {
        let q = zipf(1_000_000, 4.0);
        assert_eq!(q.len(), 1_000_000);
        assert!(q.probs().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn trace_examples() {
        let t = Trace::parse("a,90\nb,10\n".as_bytes()).unwrap();
        assert_eq!(t.popularity().unwrap().probs(), &[0.9, 0.1]);

        let t = Trace::parse("id,views\nx,5\ny,0\nz,5\n".as_bytes()).unwrap();
        let q = t.popularity().unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.probs(), &[0.5, 0.5]);
        // tie keeps row order
        assert_eq!(t.rows()[0].0, "x");
        assert_eq!(t.rows()[1].0, "z");
    }

    #[test]
    fn trace_sorted_descending() {
        let t = Trace::parse("a,1\nb,7\nc,3\n".as_bytes()).unwrap();
        let ids: Vec<&str> = t.rows().iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
    }

    #[test]
    fn trace_errors() {
        assert!(matches!(
            Trace::parse("a,0\nb,0\n".as_bytes()),
            Err(Error::EmptyDistribution)
        ));
        match Trace::parse("a,3\nb,x\n".as_bytes()) {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match Trace::parse("a,3\nb,-2\n".as_bytes()) {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match Trace::parse("a,3,4\n".as_bytes()) {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_trace("/nonexistent/trace.csv"),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn thousand_row_trace() {
        let mut text = String::from("video,views\n");
        let mut state = 12345u64;
        for i in 0..1000 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            text.push_str(&format!("v{i},{}\n", (state >> 40) % 9_000_000));
        }
        let q = Trace::parse(text.as_bytes()).unwrap().popularity().unwrap();
        let total: f64 = q.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(q.probs().windows(2).all(|w| w[0] >= w[1]));
    }

    proptest! {
        #[test]
        fn zipf_is_a_valid_popularity(files in 1usize..5000, skew in 0.0f64..4.0) {
            let q = zipf(files, skew);
            prop_assert_eq!(q.len(), files);
            let total: f64 = q.probs().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            if skew > 0.0 {
                prop_assert!(q.probs().windows(2).all(|w| w[0] > w[1]));
            } else {
                prop_assert!(q.probs().windows(2).all(|w| w[0] == w[1]));
            }
        }

        #[test]
        fn trace_reserialization_is_stable(counts in proptest::collection::vec(0u64..1_000_000, 1..200)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let text: String = counts.iter().enumerate().map(|(i, c)| format!("f{i},{c}\n")).collect();
            let trace = Trace::parse(text.as_bytes()).unwrap();
            let mut buf = Vec::new();
            trace.write(&mut buf).unwrap();
            let again = Trace::parse(buf.as_slice()).unwrap();
            let (a, b) = (trace.popularity().unwrap(), again.popularity().unwrap());
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
