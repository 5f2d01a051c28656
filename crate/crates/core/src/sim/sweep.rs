//! Parameter sweeps over independent seeded runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{SimConfig, SummaryMetrics};
use crate::channel::ChannelModel;
use crate::config::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Nominal SNR in dB.
    SnrDb,
    /// Penalty weight V.
    VWeight,
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "snr" | "snr_db" => Ok(Axis::SnrDb),
            "v" | "v_weight" => Ok(Axis::VWeight),
            other => Err(format!("unknown axis `{other}` (expected snr or v)")),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::SnrDb => "snr",
            Axis::VWeight => "v",
        })
    }
}

impl Axis {
    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &SimConfig, value: f64) -> Result<SimConfig, ConfigError> {
        let mut cfg = base.clone();
        match self {
            Axis::SnrDb => {
                if !value.is_finite() {
                    return Err(ConfigError::Invalid(format!("snr value {value} is not finite")));
                }
                let ch = &base.channel;
                cfg.channel = ChannelModel::with_nominal_snr(
                    ch.bandwidth_hz,
                    ch.slot_seconds,
                    ch.pathloss,
                    ch.power_budget_w,
                    value,
                );
            }
            Axis::VWeight => {
                cfg.controller.v_weight = value;
                cfg.controller.validate().map_err(ConfigError::Invalid)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub seed: u64,
    pub summary: SummaryMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMean {
    pub axis_value: f64,
    pub runs: usize,
    pub mean: SummaryMetrics,
    /// Sample standard deviation; 0 for a single run.
    pub std: SummaryMetrics,
}

/// One run per `(value, seed)`, value-major. Runs execute on `jobs` threads;
/// the output order does not depend on it.
pub fn sweep(
    base: &SimConfig,
    axis: Axis,
    values: &[f64],
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<SweepRow>, ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one value".into()));
    }
    if seeds.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one seed".into()));
    }
    let mut jobs_list = Vec::with_capacity(values.len() * seeds.len());
    for &value in values {
        let cfg = axis.apply(base, value)?;
        let scenario = cfg.build()?;
        for &seed in seeds {
            let mut s = scenario.clone();
            s.config.seed = seed;
            jobs_list.push((value, seed, s));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        jobs_list
            .par_iter()
            .map(|(value, seed, scenario)| SweepRow {
                axis_value: *value,
                seed: *seed,
                summary: scenario.run().summary,
            })
            .collect()
    }))
}

fn map2(a: &SummaryMetrics, b: &SummaryMetrics, f: impl Fn(f64, f64) -> f64) -> SummaryMetrics {
    SummaryMetrics {
        avg_q_chunks: f(a.avg_q_chunks, b.avg_q_chunks),
        avg_z_seconds: f(a.avg_z_seconds, b.avg_z_seconds),
        avg_psnr_db: f(a.avg_psnr_db, b.avg_psnr_db),
        avg_power_w: f(a.avg_power_w, b.avg_power_w),
        avg_cores: f(a.avg_cores, b.avg_cores),
        delay_occurrence_rate: f(a.delay_occurrence_rate, b.delay_occurrence_rate),
        throughput_chunks_per_slot: f(a.throughput_chunks_per_slot, b.throughput_chunks_per_slot),
    }
}

/// Groups rows by axis value, keeping first-appearance order.
pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepMean> {
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !values.iter().any(|v| v.to_bits() == r.axis_value.to_bits()) {
            values.push(r.axis_value);
        }
    }
    values
        .into_iter()
        .map(|value| {
            let group: Vec<&SummaryMetrics> = rows
                .iter()
                .filter(|r| r.axis_value.to_bits() == value.to_bits())
                .map(|r| &r.summary)
                .collect();
            let n = group.len() as f64;
            let sum = group
                .iter()
                .fold(SummaryMetrics::default(), |acc, s| map2(&acc, s, |x, y| x + y));
            let mean = map2(&sum, &sum, |x, _| x / n);
            let std = if group.len() < 2 {
                SummaryMetrics::default()
            } else {
                let ss = group.iter().fold(SummaryMetrics::default(), |acc, s| {
                    let dev = map2(s, &mean, |x, m| (x - m) * (x - m));
                    map2(&acc, &dev, |x, y| x + y)
                });
                map2(&ss, &ss, |x, _| (x / (n - 1.0)).sqrt())
            };
            SweepMean {
                axis_value: value,
                runs: group.len(),
                mean,
                std,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::run;

    fn base() -> SimConfig {
        SimConfig {
            horizon_slots: 300,
            warmup_slots: 0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn single_point_matches_run() {
        let rows = sweep(&base(), Axis::VWeight, &[0.01], &[3], 1).unwrap();
        let direct = run(&SimConfig { seed: 3, ..base() }).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].summary, direct.summary);
        let means = aggregate(&rows);
        assert_eq!(means[0].mean, direct.summary);
        assert_eq!(means[0].std, SummaryMetrics::default());
    }

    #[test]
    fn order_independent_of_jobs() {
        let values = [8.0, 12.0, 16.0];
        let seeds = [1, 2];
        let a = sweep(&base(), Axis::SnrDb, &values, &seeds, 1).unwrap();
        let b = sweep(&base(), Axis::SnrDb, &values, &seeds, 4).unwrap();
        assert_eq!(a, b);
        let keys: Vec<_> = a.iter().map(|r| (r.axis_value, r.seed)).collect();
        assert_eq!(
            keys,
            vec![(8.0, 1), (8.0, 2), (12.0, 1), (12.0, 2), (16.0, 1), (16.0, 2)]
        );
    }

    #[test]
    fn snr_axis_keeps_pathloss() {
        let cfg = Axis::SnrDb.apply(&base(), 10.0).unwrap();
        assert_eq!(cfg.channel.pathloss, base().channel.pathloss);
        assert!((cfg.channel.pathloss / cfg.channel.noise_power - 10.0).abs() < 1e-9);
    }

    #[test]
    fn mean_and_std() {
        let row = |v: f64, q: f64| SweepRow {
            axis_value: v,
            seed: 0,
            summary: SummaryMetrics {
                avg_q_chunks: q,
                ..SummaryMetrics::default()
            },
        };
        let means = aggregate(&[row(1.0, 2.0), row(2.0, 5.0), row(1.0, 4.0)]);
        assert_eq!(means.len(), 2);
        assert_eq!(means[0].mean.avg_q_chunks, 3.0);
        assert!((means[0].std.avg_q_chunks - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(means[1].runs, 1);
    }

    #[test]
    fn rejects_empty_and_negative_v() {
        assert!(sweep(&base(), Axis::VWeight, &[], &[1], 1).is_err());
        assert!(sweep(&base(), Axis::VWeight, &[-1.0], &[1], 1).is_err());
    }
}
