//! CSV output and trace replay.
//!
//! Floats are written with `Display`, which prints the shortest string that
//! parses back to the same value, so a trace read back is bit-exact.

use std::io;
use std::path::Path;

use thiserror::Error;

use super::{SlotRecord, SummaryMetrics, SweepMean, SweepRow};
use crate::quality::{Depth, Rate};
use crate::queueing::{QueueParams, SystemState};

pub const TRACE_HEADER: [&str; 14] = [
    "t", "gain_sq", "lambda", "N", "r", "P_w", "d", "u", "a_s", "Q", "Z", "W", "Theta", "psnr_db",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "axis_value",
    "seed",
    "avg_q",
    "avg_z",
    "avg_psnr",
    "avg_p",
    "avg_u",
    "delay_rate",
    "throughput",
];

const METRIC_NAMES: [&str; 7] = [
    "avg_q",
    "avg_z",
    "avg_psnr",
    "avg_p",
    "avg_u",
    "delay_rate",
    "throughput",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: unexpected header {found:?}")]
    Header { path: String, found: Vec<String> },
    #[error("{path}: line {line}: bad value `{value}` in column {column}")]
    Field {
        path: String,
        line: u64,
        column: &'static str,
        value: String,
    },
}

impl TraceError {
    fn csv(path: &Path, source: csv::Error) -> Self {
        if source.is_io_error() {
            match source.into_kind() {
                csv::ErrorKind::Io(source) => TraceError::Io {
                    path: path.display().to_string(),
                    source,
                },
                _ => unreachable!(),
            }
        } else {
            TraceError::Csv {
                path: path.display().to_string(),
                source,
            }
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, TraceError> {
    csv::Writer::from_path(path).map_err(|e| TraceError::csv(path, e))
}

fn metrics(s: &SummaryMetrics) -> [f64; 7] {
    [
        s.avg_q_chunks,
        s.avg_z_seconds,
        s.avg_psnr_db,
        s.avg_power_w,
        s.avg_cores,
        s.delay_occurrence_rate,
        s.throughput_chunks_per_slot,
    ]
}

pub fn write_trace(path: &Path, trace: &[SlotRecord]) -> Result<(), TraceError> {
    let mut w = writer(path)?;
    let err = |e| TraceError::csv(path, e);
    w.write_record(TRACE_HEADER).map_err(err)?;
    for r in trace {
        w.write_record([
            r.t.to_string(),
            r.gain_sq.to_string(),
            r.lambda.to_string(),
            r.n_chunks.to_string(),
            r.rate.to_string(),
            r.power_w.to_string(),
            r.depth.to_string(),
            r.cores.to_string(),
            r.sr_seconds.to_string(),
            r.q_chunks.to_string(),
            r.z_seconds.to_string(),
            r.w_virtual.to_string(),
            r.theta_virtual.to_string(),
            r.psnr_db.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn summary_record(axis_value: Option<f64>, seed: u64, s: &SummaryMetrics) -> Vec<String> {
    let mut rec = vec![
        axis_value.map(|v| v.to_string()).unwrap_or_default(),
        seed.to_string(),
    ];
    rec.extend(metrics(s).iter().map(f64::to_string));
    rec
}

/// Single-run summary; the axis column is left empty.
pub fn write_summary(path: &Path, seed: u64, summary: &SummaryMetrics) -> Result<(), TraceError> {
    let mut w = writer(path)?;
    let err = |e| TraceError::csv(path, e);
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    w.write_record(summary_record(None, seed, summary)).map_err(err)?;
    w.flush().map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One row per `(value, seed)` run.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), TraceError> {
    let mut w = writer(path)?;
    let err = |e| TraceError::csv(path, e);
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for row in rows {
        w.write_record(summary_record(Some(row.axis_value), row.seed, &row.summary))
            .map_err(err)?;
    }
    w.flush().map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-value mean and standard deviation of every metric.
pub fn write_sweep_means(path: &Path, means: &[SweepMean]) -> Result<(), TraceError> {
    let mut w = writer(path)?;
    let err = |e| TraceError::csv(path, e);
    let mut header = vec!["axis_value".to_string(), "runs".to_string()];
    for m in METRIC_NAMES {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header).map_err(err)?;
    for m in means {
        let mut rec = vec![m.axis_value.to_string(), m.runs.to_string()];
        for (mean, std) in metrics(&m.mean).into_iter().zip(metrics(&m.std)) {
            rec.push(mean.to_string());
            rec.push(std.to_string());
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_trace(path: &Path) -> Result<Vec<SlotRecord>, TraceError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| TraceError::csv(path, e))?;
    let headers = rdr.headers().map_err(|e| TraceError::csv(path, e))?.clone();
    if headers.iter().ne(TRACE_HEADER) {
        return Err(TraceError::Header {
            path: path.display().to_string(),
            found: headers.iter().map(str::to_string).collect(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| TraceError::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str, TraceError> {
            rec.get(i).ok_or_else(|| TraceError::Field {
                path: path.display().to_string(),
                line,
                column: TRACE_HEADER[i],
                value: String::new(),
            })
        };
        fn parse<T: std::str::FromStr>(
            path: &Path,
            line: u64,
            i: usize,
            raw: &str,
        ) -> Result<T, TraceError> {
            raw.parse().map_err(|_| TraceError::Field {
                path: path.display().to_string(),
                line,
                column: TRACE_HEADER[i],
                value: raw.to_string(),
            })
        }
        macro_rules! col {
            ($i:expr) => {
                parse(path, line, $i, field($i)?)?
            };
        }
        out.push(SlotRecord {
            t: col!(0),
            gain_sq: col!(1),
            lambda: col!(2),
            n_chunks: col!(3),
            rate: Rate(col!(4)),
            power_w: col!(5),
            depth: Depth(col!(6)),
            cores: col!(7),
            sr_seconds: col!(8),
            q_chunks: col!(9),
            z_seconds: col!(10),
            w_virtual: col!(11),
            theta_virtual: col!(12),
            psnr_db: col!(13),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub t: u64,
    pub expected: SystemState,
    pub recorded: SystemState,
}

/// Feeds each record's decision, arrivals and receiver work back through the
/// queue update from an empty state and checks the stored backlogs bit for
/// bit.
pub fn replay(trace: &[SlotRecord], params: &QueueParams) -> Result<(), ReplayMismatch> {
    let mut state = SystemState::zero();
    for r in trace {
        let recorded = r.state();
        let expected = state
            .step(&r.decision(), r.lambda, r.sr_seconds, params)
            .map_err(|_| ReplayMismatch {
                t: r.t,
                expected: state,
                recorded,
            })?;
        let same = expected.q_chunks == recorded.q_chunks
            && expected.z_seconds.to_bits() == recorded.z_seconds.to_bits()
            && expected.w_virtual.to_bits() == recorded.w_virtual.to_bits()
            && expected.theta_virtual.to_bits() == recorded.theta_virtual.to_bits();
        if !same {
            return Err(ReplayMismatch {
                t: r.t,
                expected,
                recorded,
            });
        }
        state = expected;
    }
    Ok(())
}
