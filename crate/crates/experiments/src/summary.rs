//! Aggregation of run records into mean / SD / SE tables.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::record::{write_atomic, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub group: String,
    pub k: usize,
    pub setting: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub sd: f64,
    /// Standard error of the mean.
    pub se: f64,
}

/// Mean, sample SD and standard error.
pub fn mean_sd_se(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (mean, sd, sd / n.sqrt())
}

/// Groups runs by experiment, algorithm variant, K and setting.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, usize, String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (metric, &value) in &r.metrics {
            groups
                .entry((
                    r.experiment.name().to_string(),
                    r.unit.group(),
                    r.unit.k,
                    r.unit.setting.clone().unwrap_or_default(),
                    metric.clone(),
                ))
                .or_default()
                .push(value);
        }
    }
    groups
        .into_iter()
        .map(|((experiment, group, k, setting, metric), values)| {
            let (mean, sd, se) = mean_sd_se(&values);
            SummaryRow {
                experiment,
                group,
                k,
                setting,
                metric,
                n: values.len(),
                mean,
                sd,
                se,
            }
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    write_atomic(path, &w.into_inner()?)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let ln_half = -(n as f64) * std::f64::consts::LN_2;
    let mut ln_choose = 0.0;
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= wins {
            terms.push(ln_choose + ln_half);
        }
    }
    dpvi_core::math::log_sum_exp(&terms).exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_se_values() {
        let (m, sd, se) = mean_sd_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((se - sd / 2.0).abs() < 1e-12);
        assert_eq!(mean_sd_se(&[7.0]), (7.0, 0.0, 0.0));
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test(5, 0) - 1.0 / 32.0).abs() < 1e-12);
        assert!((sign_test(4, 1) - 6.0 / 32.0).abs() < 1e-12);
        assert!((sign_test(0, 3) - 1.0).abs() < 1e-12);
        assert_eq!(sign_test(0, 0), 1.0);
        assert!(sign_test(15, 5) < 0.05);
    }
}
