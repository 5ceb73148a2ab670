//! Transmission-binned postselection with per-bin shot-noise calibration.
//!
//! Records are sorted by their dc transmission estimate into bins of fixed
//! width. Inside a bin, samples are split in arrival order into blocks; each
//! block yields one variance for the dark-plane channel and one for the
//! total-intensity (shot-noise) channel. Bins with too few samples are
//! discarded.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::MeasurementRecord;
use crate::error::{Error, Result};
use crate::par::Parallelism;

const DB: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Bin width in normalized transmission.
    pub bin_width: f64,
    pub block_size: usize,
    /// Bins with fewer full-block samples are dropped.
    pub min_samples: usize,
    /// Fit an intercept; only meaningful with a nonzero electronic floor.
    pub free_intercept: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            bin_width: 0.0019,
            block_size: 10_000,
            min_samples: 50_000,
            free_intercept: false,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bin_width must be positive, got {}",
                self.bin_width
            )));
        }
        if self.block_size < 2 {
            return Err(Error::InvalidInput("block_size must be at least 2".into()));
        }
        Ok(())
    }

    /// Index of the bin holding transmission `t`.
    pub fn bin_index(&self, t: f64) -> i64 {
        (t / self.bin_width).floor() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionBin {
    pub t_low: f64,
    pub t_high: f64,
    pub block_variances_diff: Vec<f64>,
    pub block_variances_sum: Vec<f64>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStatistics {
    pub t_center: f64,
    pub n_samples: usize,
    pub n_blocks: usize,
    pub mean_var_diff: f64,
    pub mean_var_sum: f64,
    /// One sample standard deviation of the block variances.
    pub stddev_diff: f64,
    pub stddev_sum: f64,
    #[serde(rename = "squeezing_dB")]
    pub squeezing_db: f64,
}

/// Unbiased sample variance.
fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = if xs.len() > 1 {
        sample_variance(xs).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl TransmissionBin {
    pub fn t_center(&self) -> f64 {
        0.5 * (self.t_low + self.t_high)
    }

    pub fn statistics(&self) -> BinStatistics {
        let (mean_var_diff, stddev_diff) = mean_and_sd(&self.block_variances_diff);
        let (mean_var_sum, stddev_sum) = mean_and_sd(&self.block_variances_sum);
        BinStatistics {
            t_center: self.t_center(),
            n_samples: self.sample_count,
            n_blocks: self.block_variances_diff.len(),
            mean_var_diff,
            mean_var_sum,
            stddev_diff,
            stddev_sum,
            squeezing_db: DB * (mean_var_diff / mean_var_sum).log10(),
        }
    }
}

impl BinStatistics {
    /// Error bar of `squeezing_db` propagated from one standard deviation of
    /// the block variances.
    pub fn error_bar_db(&self) -> f64 {
        db_error(
            self.mean_var_diff,
            self.stddev_diff,
            self.mean_var_sum,
            self.stddev_sum,
        )
    }

    /// Standard error of `squeezing_db` (block spread over √blocks).
    pub fn stderr_db(&self) -> f64 {
        let k = (self.n_blocks as f64).sqrt();
        db_error(
            self.mean_var_diff,
            self.stddev_diff / k,
            self.mean_var_sum,
            self.stddev_sum / k,
        )
    }
}

fn db_error(vd: f64, sd: f64, vs: f64, ss: f64) -> f64 {
    DB / std::f64::consts::LN_10 * ((sd / vd).powi(2) + (ss / vs).powi(2)).sqrt()
}

/// Sorts records by `dc_sum` into bins and forms block variances.
pub fn bin_records(
    records: &[MeasurementRecord],
    protocol: &ProtocolConfig,
    par: Parallelism,
) -> Result<Vec<TransmissionBin>> {
    protocol.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to bin".into()));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry(protocol.bin_index(r.dc_sum))
            .or_default()
            .push(i);
    }
    let block = protocol.block_size;
    let candidates: Vec<(i64, Vec<usize>)> = groups
        .into_iter()
        .filter(|(_, idx)| (idx.len() / block) * block >= protocol.min_samples.max(block))
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyAfterDiscard {
            min_samples: protocol.min_samples,
        });
    }
    let w = protocol.bin_width;
    Ok(par.map_indexed(candidates.len(), |b| {
        let (k, idx) = &candidates[b];
        let n_blocks = idx.len() / block;
        let mut diff = Vec::with_capacity(n_blocks);
        let mut sum = Vec::with_capacity(n_blocks);
        let mut buf_d = vec![0.0; block];
        let mut buf_s = vec![0.0; block];
        for chunk in idx.chunks_exact(block) {
            for (j, &i) in chunk.iter().enumerate() {
                buf_d[j] = records[i].ac_diff;
                buf_s[j] = records[i].ac_sum;
            }
            diff.push(sample_variance(&buf_d));
            sum.push(sample_variance(&buf_s));
        }
        TransmissionBin {
            t_low: *k as f64 * w,
            t_high: (*k + 1) as f64 * w,
            block_variances_diff: diff,
            block_variances_sum: sum,
            sample_count: n_blocks * block,
        }
    }))
}

pub fn bin_statistics(
    records: &[MeasurementRecord],
    protocol: &ProtocolConfig,
    par: Parallelism,
) -> Result<Vec<BinStatistics>> {
    Ok(bin_records(records, protocol, par)?
        .iter()
        .map(TransmissionBin::statistics)
        .collect())
}

/// `10·log₁₀(var / shot_var)`.
pub fn squeezing_db(var: f64, shot_var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::NonPositiveVariance(var));
    }
    if !(shot_var > 0.0) {
        return Err(Error::NonPositiveVariance(shot_var));
    }
    Ok(DB * (var / shot_var).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Shot-noise channel: `Var_sum ≈ a_sum·T (+ c_sum)`.
    pub a_sum: f64,
    pub a_sum_stderr: f64,
    pub c_sum: Option<f64>,
    pub r2_sum: f64,
    /// Dark-plane channel: `Var_diff ≈ a_diff·T + b_diff·T² (+ c_diff)`.
    pub a_diff: f64,
    pub b_diff: f64,
    pub a_diff_stderr: f64,
    pub b_diff_stderr: f64,
    pub c_diff: Option<f64>,
    pub r2_diff: f64,
    pub t_centers: Vec<f64>,
    pub residuals_sum: Vec<f64>,
    pub residuals_diff: Vec<f64>,
}

impl FitReport {
    /// Negative quadratic term: the measured direction is squeezed.
    pub fn is_squeezed_direction(&self) -> bool {
        self.b_diff < 0.0
    }
}

struct LinearFit {
    coef: Vec<f64>,
    stderr: Vec<f64>,
    r2: f64,
    residuals: Vec<f64>,
}

fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let n = y.len();
    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateDesign("normal equations are singular".into()))?;
    let coef = chol.solve(&(x.transpose() * &yv));
    let residuals: Vec<f64> = (&yv - &x * &coef).iter().copied().collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    let dof = n.saturating_sub(p).max(1) as f64;
    let inv = chol.inverse();
    let stderr = (0..p)
        .map(|j| (ss_res / dof * inv[(j, j)]).sqrt())
        .collect();
    Ok(LinearFit {
        coef: coef.iter().copied().collect(),
        stderr,
        r2,
        residuals,
    })
}

/// Linear fit of the shot-noise variance and quadratic fit of the dark-plane
/// variance against transmission, both through the origin unless
/// `free_intercept` is set.
pub fn fit_scaling(stats: &[BinStatistics], free_intercept: bool) -> Result<FitReport> {
    if stats.len() < 3 {
        return Err(Error::DegenerateDesign(format!(
            "need at least 3 bins, got {}",
            stats.len()
        )));
    }
    let t: Vec<f64> = stats.iter().map(|s| s.t_center).collect();
    let (lo, hi) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi > lo) {
        return Err(Error::DegenerateDesign(
            "all bins share one transmission".into(),
        ));
    }
    let t2: Vec<f64> = t.iter().map(|v| v * v).collect();
    let ones = vec![1.0; t.len()];
    let y_sum: Vec<f64> = stats.iter().map(|s| s.mean_var_sum).collect();
    let y_diff: Vec<f64> = stats.iter().map(|s| s.mean_var_diff).collect();

    let (lin_cols, quad_cols) = if free_intercept {
        (
            vec![t.clone(), ones.clone()],
            vec![t.clone(), t2.clone(), ones],
        )
    } else {
        (vec![t.clone()], vec![t.clone(), t2])
    };
    let lin = least_squares(&lin_cols, &y_sum)?;
    let quad = least_squares(&quad_cols, &y_diff)?;
    Ok(FitReport {
        a_sum: lin.coef[0],
        a_sum_stderr: lin.stderr[0],
        c_sum: free_intercept.then(|| lin.coef[1]),
        r2_sum: lin.r2,
        a_diff: quad.coef[0],
        b_diff: quad.coef[1],
        a_diff_stderr: quad.stderr[0],
        b_diff_stderr: quad.stderr[1],
        c_diff: free_intercept.then(|| quad.coef[2]),
        r2_diff: quad.r2,
        t_centers: t,
        residuals_sum: lin.residuals,
        residuals_diff: quad.residuals,
    })
}

/// The retained bin with the highest transmission; ties go to the bin with
/// more samples.
pub fn select_best_bin(stats: &[BinStatistics]) -> Result<BinStatistics> {
    stats
        .iter()
        .copied()
        .max_by(|a, b| {
            a.t_center
                .total_cmp(&b.t_center)
                .then(a.n_samples.cmp(&b.n_samples))
        })
        .ok_or_else(|| Error::InvalidInput("no bins to select from".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledSqueezing {
    #[serde(rename = "squeezing_dB")]
    pub squeezing_db: f64,
    #[serde(rename = "stderr_dB")]
    pub stderr_db: f64,
    pub mean_var_diff: f64,
    pub mean_var_sum: f64,
    pub n_samples: usize,
}

/// Sample-count-weighted pooling of bin variances, then conversion to dB.
pub fn pool_bins(stats: &[BinStatistics]) -> Result<PooledSqueezing> {
    let n: usize = stats.iter().map(|s| s.n_samples).sum();
    if n == 0 {
        return Err(Error::InvalidInput("no samples to pool".into()));
    }
    let nf = n as f64;
    let weight = |s: &BinStatistics| s.n_samples as f64 / nf;
    let vd: f64 = stats.iter().map(|s| weight(s) * s.mean_var_diff).sum();
    let vs: f64 = stats.iter().map(|s| weight(s) * s.mean_var_sum).sum();
    let se = |f: fn(&BinStatistics) -> f64| {
        stats
            .iter()
            .map(|s| (weight(s) * f(s)).powi(2) / s.n_blocks.max(1) as f64)
            .sum::<f64>()
            .sqrt()
    };
    Ok(PooledSqueezing {
        squeezing_db: squeezing_db(vd, vs)?,
        stderr_db: db_error(vd, se(|s| s.stddev_diff), vs, se(|s| s.stddev_sum)),
        mean_var_diff: vd,
        mean_var_sum: vs,
        n_samples: n,
    })
}

/// Pooled squeezing over every retained bin of the record stream.
pub fn aggregate_squeezing(
    records: &[MeasurementRecord],
    protocol: &ProtocolConfig,
    par: Parallelism,
) -> Result<PooledSqueezing> {
    pool_bins(&bin_statistics(records, protocol, par)?)
}

/// True when each bin's squeezing is no higher than that of the next-lower
/// transmission bin, allowing for the sum of the two error bars.
pub fn is_monotone_within_error_bars(stats: &[BinStatistics]) -> bool {
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| a.t_center.total_cmp(&b.t_center));
    sorted
        .windows(2)
        .all(|w| w[1].squeezing_db - w[0].squeezing_db <= w[0].error_bar_db() + w[1].error_bar_db())
}

/// Normalized histogram of the transmission side information: `(t_center,
/// density)` with `Σ density·width = 1`.
pub fn transmission_histogram(records: &[MeasurementRecord], bin_width: f64) -> Vec<(f64, f64)> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for r in records {
        *counts
            .entry((r.dc_sum / bin_width).floor() as i64)
            .or_default() += 1;
    }
    let norm = records.len() as f64 * bin_width;
    counts
        .into_iter()
        .map(|(k, c)| ((k as f64 + 0.5) * bin_width, c as f64 / norm))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_records, DetectorNoise};
    use crate::gaussian::GaussianDarkPlaneState;

    fn records_at(t: f64, n: usize, seed: u64) -> Vec<MeasurementRecord> {
        let s = GaussianDarkPlaneState::from_decibels(-2.4, 14.2).unwrap();
        synthesize_records(
            &s,
            0.0,
            &[t],
            n,
            seed,
            DetectorNoise::default(),
            Parallelism::Parallel,
        )
        .unwrap()
    }

    fn exact_bin(t: f64, var_sum: f64, var_diff: f64) -> BinStatistics {
        BinStatistics {
            t_center: t,
            n_samples: 50_000,
            n_blocks: 5,
            mean_var_diff: var_diff,
            mean_var_sum: var_sum,
            stddev_diff: 0.0,
            stddev_sum: 0.0,
            squeezing_db: 10.0 * (var_diff / var_sum).log10(),
        }
    }

    #[test]
    fn one_bin_six_blocks() {
        let bins = bin_records(
            &records_at(0.5, 60_000, 1),
            &ProtocolConfig::default(),
            Parallelism::Sequential,
        )
        .unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].block_variances_diff.len(), 6);
        assert_eq!(bins[0].sample_count, 60_000);
        assert!((bins[0].t_high - bins[0].t_low - 0.0019).abs() < 1e-12);
        assert!(bins[0].t_low <= 0.5 && 0.5 < bins[0].t_high);
    }

    #[test]
    fn discard_boundary() {
        let p = ProtocolConfig::default();
        assert!(bin_records(&records_at(0.5, 50_000, 2), &p, Parallelism::Sequential).is_ok());
        assert_eq!(
            bin_records(&records_at(0.5, 49_999, 2), &p, Parallelism::Sequential).unwrap_err(),
            Error::EmptyAfterDiscard {
                min_samples: 50_000
            }
        );
    }

    #[test]
    fn partial_blocks_dropped() {
        let bins = bin_records(
            &records_at(0.3, 59_999, 3),
            &ProtocolConfig::default(),
            Parallelism::Sequential,
        )
        .unwrap();
        assert_eq!(bins[0].sample_count, 50_000);
    }

    #[test]
    fn disjoint_bins_do_not_mix() {
        let mut recs = records_at(0.10, 50_000, 4);
        recs.extend(records_at(0.30, 50_000, 5));
        let bins = bin_records(&recs, &ProtocolConfig::default(), Parallelism::Sequential).unwrap();
        assert_eq!(bins.len(), 2);
        assert!(bins[0].t_high <= 0.10 + 0.0019 && bins[0].t_low <= 0.10);
        assert!(bins[1].t_low <= 0.30 && 0.30 < bins[1].t_high);
        let s0 = bins[0].statistics();
        let s1 = bins[1].statistics();
        assert!((s0.mean_var_sum / 0.10 - 1.0).abs() < 0.03);
        assert!((s1.mean_var_sum / 0.30 - 1.0).abs() < 0.03);
    }

    #[test]
    fn decibels() {
        assert_eq!(squeezing_db(1.0, 1.0).unwrap(), 0.0);
        assert!((squeezing_db(0.5754, 1.0).unwrap() + 2.40).abs() < 5e-3);
        assert!((squeezing_db(2.0, 1.0).unwrap() - 3.0103).abs() < 1e-4);
        assert_eq!(
            squeezing_db(0.0, 1.0).unwrap_err(),
            Error::NonPositiveVariance(0.0)
        );
        assert!(squeezing_db(1.0, -1.0).is_err());
    }

    #[test]
    fn exact_linear_and_quadratic_fits() {
        let stats: Vec<_> = [0.1, 0.3, 0.5, 0.8, 1.0]
            .iter()
            .map(|&t| exact_bin(t, t, t - 0.425 * t * t))
            .collect();
        let fit = fit_scaling(&stats, false).unwrap();
        assert!((fit.a_sum - 1.0).abs() < 1e-12);
        assert!((fit.r2_sum - 1.0).abs() < 1e-12);
        assert!((fit.a_diff - 1.0).abs() < 1e-12);
        assert!((fit.b_diff + 0.425).abs() < 1e-12);
        assert!(fit.is_squeezed_direction());
        let free = fit_scaling(&stats, true).unwrap();
        assert!(free.c_diff.unwrap().abs() < 1e-10);
    }

    #[test]
    fn degenerate_designs() {
        let same: Vec<_> = (0..4).map(|_| exact_bin(0.4, 0.4, 0.3)).collect();
        assert!(matches!(
            fit_scaling(&same, false),
            Err(Error::DegenerateDesign(_))
        ));
        assert!(matches!(
            fit_scaling(&same[..2], false),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn best_bin_selection() {
        let stats: Vec<_> = [0.3, 0.55, 0.5]
            .iter()
            .map(|&t| exact_bin(t, t, t))
            .collect();
        assert_eq!(select_best_bin(&stats).unwrap().t_center, 0.55);
        assert_eq!(select_best_bin(&stats[..1]).unwrap().t_center, 0.3);
        let mut tie = stats.clone();
        let mut bigger = exact_bin(0.55, 0.55, 0.55);
        bigger.n_samples = 90_000;
        tie.push(bigger);
        assert_eq!(select_best_bin(&tie).unwrap().n_samples, 90_000);
        assert!(select_best_bin(&[]).is_err());
    }

    #[test]
    fn pooling() {
        // Equal counts, shot variance 1, dark variances 10^-0.1 and 10^-0.05.
        let a = exact_bin(0.2, 1.0, 10f64.powf(-0.1));
        let b = exact_bin(0.4, 1.0, 10f64.powf(-0.05));
        let pooled = pool_bins(&[a, b]).unwrap();
        assert!(pooled.squeezing_db > -1.0 && pooled.squeezing_db < -0.5);
        let expected = 10.0 * ((10f64.powf(-0.1) + 10f64.powf(-0.05)) / 2.0).log10();
        assert!((pooled.squeezing_db - expected).abs() < 1e-12);
    }

    #[test]
    fn single_bin_aggregate_equals_bin() {
        let recs = records_at(0.45, 70_000, 8);
        let p = ProtocolConfig::default();
        let agg = aggregate_squeezing(&recs, &p, Parallelism::Parallel).unwrap();
        let bin = bin_statistics(&recs, &p, Parallelism::Parallel).unwrap()[0];
        assert!((agg.squeezing_db - bin.squeezing_db).abs() < 1e-12);
    }

    #[test]
    fn vacuum_direction_aggregate_is_zero() {
        let s = GaussianDarkPlaneState::vacuum();
        let recs = synthesize_records(
            &s,
            0.0,
            &[0.3, 0.5],
            200_000,
            6,
            DetectorNoise::default(),
            Parallelism::Parallel,
        )
        .unwrap();
        let agg =
            aggregate_squeezing(&recs, &ProtocolConfig::default(), Parallelism::Parallel).unwrap();
        assert!(agg.squeezing_db.abs() < 3.0 * agg.stderr_db, "{agg:?}");
    }

    #[test]
    fn shot_noise_self_consistency() {
        let s = GaussianDarkPlaneState::from_decibels(-2.4, 14.2).unwrap();
        let ts = [0.2, 0.35, 0.5, 0.65];
        let recs = synthesize_records(
            &s,
            0.0,
            &ts,
            100_000,
            12,
            DetectorNoise::default(),
            Parallelism::Parallel,
        )
        .unwrap();
        for st in bin_statistics(&recs, &ProtocolConfig::default(), Parallelism::Parallel).unwrap()
        {
            let t = ts
                .iter()
                .copied()
                .find(|t| (t - st.t_center).abs() < 0.0019)
                .unwrap();
            let se = st.stddev_sum / (st.n_blocks as f64).sqrt();
            assert!((st.mean_var_sum - t).abs() < 3.0 * se, "{st:?}");
        }
    }

    #[test]
    fn histogram_normalized() {
        let mut recs = records_at(0.2, 10, 1);
        recs.extend(records_at(0.4, 30, 1));
        let h = transmission_histogram(&recs, 0.0019);
        let total: f64 = h.iter().map(|(_, d)| d * 0.0019).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(h.len(), 2);
    }
}
