//! Slot-by-slot run loop and summary metrics.

mod sweep;
mod trace;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelModel;
use crate::controller::{Controller, ControllerConfig, Decision};
use crate::quality::{ChunkSizeModel, ComputeModel, Depth, QualityModel, Rate};
use crate::queueing::{ArrivalProcess, QueueParams, SystemState};

pub use sweep::{aggregate, sweep, Axis, SweepMean, SweepRow};
pub use trace::{
    read_trace, replay, write_summary, write_sweep, write_sweep_means, write_trace, ReplayMismatch,
    TraceError,
    SUMMARY_HEADER, TRACE_HEADER,
};

const CHANNEL_STREAM: u64 = 0;
const ARRIVAL_STREAM: u64 = 1;

/// Validated parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon_slots: u64,
    pub seed: u64,
    pub warmup_slots: u64,
    pub table_path: Option<PathBuf>,
    pub sizes: ChunkSizeModel,
    pub compute: ComputeModel,
    pub channel: ChannelModel,
    pub arrivals: ArrivalProcess,
    pub queue: QueueParams,
    pub controller: ControllerConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        crate::config::Config::default()
            .to_sim_config()
            .expect("defaults are valid")
    }
}

/// A configuration with its quality table loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub quality: QualityModel,
}

/// One row of the per-slot trace. Backlogs are the values after the slot's
/// update, i.e. `Q(t+1)` etc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub gain_sq: f64,
    pub lambda: u32,
    pub n_chunks: u32,
    pub rate: Rate,
    pub power_w: f64,
    pub depth: Depth,
    pub cores: u32,
    pub sr_seconds: f64,
    pub q_chunks: u64,
    pub z_seconds: f64,
    pub w_virtual: f64,
    pub theta_virtual: f64,
    /// PSNR of the chunks sent this slot; 0 when none are sent.
    pub psnr_db: f64,
}

impl SlotRecord {
    pub fn decision(&self) -> Decision {
        Decision {
            n_chunks: self.n_chunks,
            rate: self.rate,
            power_w: self.power_w,
            depth: self.depth,
            cores: self.cores,
        }
    }

    pub fn state(&self) -> SystemState {
        SystemState {
            q_chunks: self.q_chunks,
            z_seconds: self.z_seconds,
            w_virtual: self.w_virtual,
            theta_virtual: self.theta_virtual,
        }
    }
}

/// Time averages over the measured slots.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SummaryMetrics {
    pub avg_q_chunks: f64,
    pub avg_z_seconds: f64,
    /// Chunk-weighted; 0 when nothing was sent.
    pub avg_psnr_db: f64,
    pub avg_power_w: f64,
    pub avg_cores: f64,
    pub delay_occurrence_rate: f64,
    pub throughput_chunks_per_slot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Vec<SlotRecord>,
    pub summary: SummaryMetrics,
}

/// Builds the scenario and runs it.
pub fn run(cfg: &SimConfig) -> Result<SimOutput, crate::ConfigError> {
    Ok(cfg.build()?.run())
}

impl Scenario {
    pub fn controller(&self) -> Controller<'_> {
        Controller::new(&self.quality, &self.config.channel, &self.config.controller)
    }

    /// Runs the configured horizon. Channel and arrivals draw from separate
    /// streams of one seeded generator.
    pub fn run(&self) -> SimOutput {
        let cfg = &self.config;
        let controller = self.controller();
        let mut channel_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        channel_rng.set_stream(CHANNEL_STREAM);
        let mut arrival_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        arrival_rng.set_stream(ARRIVAL_STREAM);

        let mut state = SystemState::zero();
        let mut trace = Vec::with_capacity(cfg.horizon_slots.min(1 << 24) as usize);
        for t in 0..cfg.horizon_slots {
            let gain_sq = cfg.channel.sample_gain(&mut channel_rng).gain_sq;
            let decision = controller.decide_for_mode(&state, gain_sq);
            let sr_seconds = self.sr_seconds(&decision);
            let lambda = cfg.arrivals.draw(&mut arrival_rng);
            state = state
                .step(&decision, lambda, sr_seconds, &cfg.queue)
                .expect("controller decisions are non-negative");
            let psnr_db = if decision.n_chunks > 0 {
                self.quality
                    .table
                    .psnr(decision.rate, decision.depth)
                    .expect("controller stays inside the table")
            } else {
                0.0
            };
            trace.push(SlotRecord {
                t,
                gain_sq,
                lambda,
                n_chunks: decision.n_chunks,
                rate: decision.rate,
                power_w: decision.power_w,
                depth: decision.depth,
                cores: decision.cores,
                sr_seconds,
                q_chunks: state.q_chunks,
                z_seconds: state.z_seconds,
                w_virtual: state.w_virtual,
                theta_virtual: state.theta_virtual,
                psnr_db,
            });
        }
        let summary = summarize(&trace, cfg.warmup_slots, cfg.controller.buffering_b);
        SimOutput { trace, summary }
    }

    /// Receiver work `a(t) = N·τ(r, d, u)` in seconds.
    pub fn sr_seconds(&self, decision: &Decision) -> f64 {
        if decision.n_chunks == 0 || decision.depth.is_none() {
            return 0.0;
        }
        let per_chunk = self
            .quality
            .processing_time(decision.rate, decision.depth, decision.cores)
            .expect("controller assigns cores to every enhanced chunk");
        f64::from(decision.n_chunks) * per_chunk
    }
}

/// Averages over slots `t ≥ warmup`; the whole trace when the warm-up would
/// leave nothing. A slot counts as delayed when its backlog exceeds
/// `buffering_b`.
pub fn summarize(trace: &[SlotRecord], warmup: u64, buffering_b: f64) -> SummaryMetrics {
    let skip = if (warmup as usize) < trace.len() {
        warmup as usize
    } else {
        0
    };
    let rows = &trace[skip..];
    if rows.is_empty() {
        return SummaryMetrics::default();
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&SlotRecord) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let sent: f64 = rows.iter().map(|r| f64::from(r.n_chunks)).sum();
    let weighted: f64 = rows
        .iter()
        .map(|r| f64::from(r.n_chunks) * r.psnr_db)
        .sum();
    SummaryMetrics {
        avg_q_chunks: mean(&|r| r.q_chunks as f64),
        avg_z_seconds: mean(&|r| r.z_seconds),
        avg_psnr_db: if sent > 0.0 { weighted / sent } else { 0.0 },
        avg_power_w: mean(&|r| r.power_w),
        avg_cores: mean(&|r| f64::from(r.cores)),
        delay_occurrence_rate: mean(&|r| f64::from(u8::from(r.z_seconds > buffering_b))),
        throughput_chunks_per_slot: sent / n,
    }
}
