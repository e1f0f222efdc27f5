//! CSV output: training curves and result tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use vpsynth_core::evaluation::Variant;
use vpsynth_core::policies::EpochStats;

use crate::io::IoError;
use crate::pipeline::Outcome;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub loss: f64,
    /// Training accuracy (code model) or mean reward (puzzle model).
    pub metric: f64,
    /// Held-out score after the epoch, when one was computed.
    pub validation: Option<f64>,
}

impl CurveRow {
    pub fn new(s: &EpochStats, validation: Option<f64>) -> CurveRow {
        CurveRow {
            epoch: s.epoch,
            loss: s.loss,
            metric: s.metric,
            validation,
        }
    }
}

/// One line of a result table: success rate of a variant on one bucket
/// (or on all specs), mean and standard error over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: String,
    pub bucket: String,
    pub specs: usize,
    pub seeds: usize,
    pub mean: f64,
    pub stderr: f64,
}

pub fn bucket_label(b: (u32, u32)) -> String {
    format!("{}-{}", b.0, b.1)
}

/// Mean and standard error of the mean (sample deviation; zero for one value).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates runs `(variant, seed, outcomes)` into per-bucket rows plus an
/// `all` row per variant. Variants keep their canonical order.
pub fn summarize(runs: &[(Variant, u64, Vec<Outcome>)]) -> Vec<ResultRow> {
    // variant -> bucket -> per-seed rates
    type Rates = BTreeMap<Option<(u32, u32)>, (Vec<f64>, usize)>;
    let mut acc: BTreeMap<Variant, Rates> = BTreeMap::new();
    for (v, _, outs) in runs {
        let mut by: BTreeMap<Option<(u32, u32)>, (usize, usize)> = BTreeMap::new();
        for o in outs {
            for key in [Some(o.bucket), None] {
                let e = by.entry(key).or_default();
                e.0 += o.success as usize;
                e.1 += 1;
            }
        }
        for (key, (ok, n)) in by {
            let e = acc.entry(*v).or_default().entry(key).or_default();
            e.0.push(ok as f64 / n as f64);
            e.1 = n;
        }
    }
    let mut rows = Vec::new();
    for (v, buckets) in acc {
        // per-bucket rows first, the overall row last
        let mut keys: Vec<_> = buckets.keys().copied().collect();
        keys.sort_by_key(|k| (k.is_none(), *k));
        for k in keys {
            let (rates, n) = &buckets[&k];
            let (mean, stderr) = mean_stderr(rates);
            rows.push(ResultRow {
                variant: v.name().to_string(),
                bucket: k.map_or_else(|| "all".to_string(), bucket_label),
                specs: *n,
                seeds: rates.len(),
                mean,
                stderr,
            });
        }
    }
    rows
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let io = |e: csv::Error| IoError::format(path, e);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(bucket: (u32, u32), success: bool) -> Outcome {
        Outcome {
            spec: 0,
            bucket,
            success,
            total: 0.0,
            oracle: 1.0,
        }
    }

    #[test]
    fn stderr_of_known_values() {
        let (m, s) = mean_stderr(&[0.5, 0.7, 0.9]);
        assert!((m - 0.7).abs() < 1e-12);
        // sample sd 0.2, over sqrt(3)
        assert!((s - 0.2 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[0.4]), (0.4, 0.0));
    }

    #[test]
    fn summary_rows_per_bucket_and_overall() {
        let runs = vec![
            (
                Variant::NeurTaskSyn,
                0,
                vec![out((1, 0), true), out((2, 1), false)],
            ),
            (
                Variant::NeurTaskSyn,
                1,
                vec![out((1, 0), true), out((2, 1), true)],
            ),
        ];
        let rows = summarize(&runs);
        let labels: Vec<_> = rows.iter().map(|r| r.bucket.as_str()).collect();
        assert_eq!(labels, ["1-0", "2-1", "all"]);
        assert_eq!(rows[1].mean, 0.5);
        assert_eq!(rows[2].mean, 0.75);
        assert_eq!(rows[2].seeds, 2);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let rows = [CurveRow {
            epoch: 0,
            loss: 1.5,
            metric: 0.25,
            validation: None,
        }];
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "epoch,loss,metric,validation\n0,1.5,0.25,\n");
    }
}
