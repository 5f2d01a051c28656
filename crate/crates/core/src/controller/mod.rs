//! Per-slot decision engines.
//!
//! Every engine minimizes (or, for the separated baseline, approximately
//! minimizes) the drift-plus-penalty objective
//!
//! ```text
//! D(N,r,P,d,u) = −Q·N + k_z·Z·N·T₁(r,d)/u + k_w·W·P + k_θ·Θ·u + V·N·(P̄ − PSNR(r,d))
//! ```
//!
//! over chunk count `N`, compression rate `r`, transmit power `P`, network
//! depth `d` and core count `u`, where `P` is always the smallest power that
//! carries `N` chunks of rate `r` in one slot.

mod baselines;
mod inner;
mod oracle;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use crate::channel::ChannelModel;
use crate::quality::{Depth, QualityModel, Rate};
use crate::queueing::SystemState;

pub use inner::{buffering_nmax, InnerProblem, InnerSolution};

/// Control tuple applied for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub n_chunks: u32,
    pub rate: Rate,
    pub power_w: f64,
    pub depth: Depth,
    pub cores: u32,
}

impl Decision {
    /// Transmit nothing.
    pub fn idle(rate: Rate) -> Self {
        Decision {
            n_chunks: 0,
            rate,
            power_w: 0.0,
            depth: Depth::NONE,
            cores: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Joint optimization with adaptive depth.
    Proposed,
    /// `Proposed` with the hard playback constraint `Z(t) ≤ b`.
    #[serde(alias = "proposed_buffered", alias = "proposedbuffered")]
    Buffered,
    /// Transmitter and receiver optimized separately.
    Comp1,
    /// Joint optimization with the depth pinned at its maximum.
    Comp2,
    /// Exhaustive search.
    Oracle,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Proposed,
        Mode::Buffered,
        Mode::Comp1,
        Mode::Comp2,
        Mode::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::Buffered => "buffered",
            Mode::Comp1 => "comp1",
            Mode::Comp2 => "comp2",
            Mode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(Mode::Proposed),
            "buffered" | "proposed_buffered" | "proposedbuffered" => Ok(Mode::Buffered),
            "comp1" => Ok(Mode::Comp1),
            "comp2" => Ok(Mode::Comp2),
            "oracle" => Ok(Mode::Oracle),
            other => Err(format!(
                "unknown mode `{other}` (expected proposed, buffered, comp1, comp2 or oracle)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub v_weight: f64,
    pub k_z: f64,
    pub k_w: f64,
    pub k_theta: f64,
    pub u_max: u32,
    /// Overrides the table maximum as the quality ceiling P̄.
    pub p_bar: Option<f64>,
    /// Playback slack `b` in seconds.
    pub buffering_b: f64,
    pub mode: Mode,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            v_weight: 0.01,
            k_z: 1.0,
            k_w: 1.0,
            k_theta: 1.0,
            u_max: 10,
            p_bar: None,
            buffering_b: 4.0,
            mode: Mode::Proposed,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_weight >= 0.0 && self.v_weight.is_finite()) {
            return Err(format!("v_weight must be >= 0, got {}", self.v_weight));
        }
        for (name, k) in [("k_z", self.k_z), ("k_w", self.k_w), ("k_theta", self.k_theta)] {
            if !(k > 0.0 && k.is_finite()) {
                return Err(format!("{name} must be positive, got {k}"));
            }
        }
        if self.u_max == 0 {
            return Err("u_max must be positive".into());
        }
        if !(self.buffering_b >= 0.0 && self.buffering_b.is_finite()) {
            return Err(format!("buffering_b must be >= 0, got {}", self.buffering_b));
        }
        if let Some(p) = self.p_bar {
            if !p.is_finite() {
                return Err("p_bar must be finite".into());
            }
        }
        Ok(())
    }
}

/// A decision with its objective value and tie-break keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub decision: Decision,
    pub objective: f64,
    /// PSNR of what is sent; 0 when nothing is sent.
    pub psnr_db: f64,
}

impl Scored {
    /// Total order used by every engine: lower objective, then higher
    /// quality, lower power, fewer cores, and finally the raw tuple.
    pub fn rank(&self, other: &Scored) -> Ordering {
        let (a, b) = (&self.decision, &other.decision);
        self.objective
            .total_cmp(&other.objective)
            .then(other.psnr_db.total_cmp(&self.psnr_db))
            .then(a.power_w.total_cmp(&b.power_w))
            .then(a.cores.cmp(&b.cores))
            .then(a.n_chunks.cmp(&b.n_chunks))
            .then(a.rate.cmp(&b.rate))
            .then(a.depth.cmp(&b.depth))
    }
}

fn keep_best(best: &mut Option<Scored>, candidate: Scored) {
    match best {
        Some(b) if candidate.rank(b) != Ordering::Less => {}
        _ => *best = Some(candidate),
    }
}

/// Per-rate quantities that only depend on the slot's channel draw.
#[derive(Debug, Clone, Copy)]
struct RateSlot {
    chunk_bits: f64,
    /// `min(Q, max_chunks(r))`.
    n_cap: u32,
}

/// Everything a decision engine sees in one slot.
#[derive(Debug, Clone, Copy)]
pub struct Controller<'a> {
    quality: &'a QualityModel,
    channel: &'a ChannelModel,
    cfg: &'a ControllerConfig,
    p_bar: f64,
    // per-core exact refinement of each cell; only switched off in tests
    refine_per_core: bool,
}

impl<'a> Controller<'a> {
    pub fn new(
        quality: &'a QualityModel,
        channel: &'a ChannelModel,
        cfg: &'a ControllerConfig,
    ) -> Self {
        Controller {
            quality,
            channel,
            cfg,
            p_bar: quality.max_quality(cfg.p_bar),
            refine_per_core: true,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        self.cfg
    }

    pub fn quality(&self) -> &QualityModel {
        self.quality
    }

    pub fn channel(&self) -> &ChannelModel {
        self.channel
    }

    /// Quality ceiling P̄ in dB.
    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }

    fn idle(&self) -> Decision {
        Decision::idle(self.quality.table.rates()[0])
    }

    fn idle_scored(&self) -> Scored {
        Scored {
            decision: self.idle(),
            objective: 0.0,
            psnr_db: 0.0,
        }
    }

    fn rate_slots(&self, state: &SystemState, gain_sq: f64) -> Vec<RateSlot> {
        let q = u32::try_from(state.q_chunks).unwrap_or(u32::MAX);
        self.quality
            .table
            .rates()
            .iter()
            .map(|&r| {
                let chunk_bits = self.quality.sizes.bits(r);
                RateSlot {
                    chunk_bits,
                    n_cap: q.min(self.channel.max_chunks(chunk_bits, gain_sq)),
                }
            })
            .collect()
    }

    /// Drift-plus-penalty value of a decision. The receiver term vanishes
    /// when no cores are used.
    pub fn dpp_objective(&self, decision: &Decision, state: &SystemState, _gain_sq: f64) -> f64 {
        let n = f64::from(decision.n_chunks);
        let ri = self.quality.table.rate_index(decision.rate);
        let di = self.quality.table.depth_index(decision.depth);
        let (psnr, t1) = match (ri, di) {
            (Some(ri), Some(di)) => (
                self.quality.table.cell_at(ri, di).psnr_db,
                self.quality.single_core_time_at(ri, di),
            ),
            _ => panic!(
                "decision uses (r={}, d={}) outside the quality table",
                decision.rate, decision.depth
            ),
        };
        self.objective_parts(n, psnr, t1, decision.power_w, decision.cores, state)
    }

    fn objective_parts(
        &self,
        n: f64,
        psnr: f64,
        t1: f64,
        power: f64,
        cores: u32,
        state: &SystemState,
    ) -> f64 {
        let cfg = self.cfg;
        let u = f64::from(cores);
        let sr = if cores > 0 {
            cfg.k_z * state.z_seconds * n * t1 / u
        } else {
            0.0
        };
        -(state.q_chunks as f64) * n
            + sr
            + cfg.k_w * state.w_virtual * power
            + cfg.k_theta * state.theta_virtual * u
            + cfg.v_weight * n * (self.p_bar - psnr)
    }

    /// Scores `(n, u)` at table cell `(ri, di)`; `None` when the power budget
    /// or, in buffered mode, the playback constraint is violated.
    #[allow(clippy::too_many_arguments)]
    fn score(
        &self,
        ri: usize,
        di: usize,
        n: u32,
        cores: u32,
        slot: &RateSlot,
        state: &SystemState,
        gain_sq: f64,
        buffered: bool,
    ) -> Option<Scored> {
        if n == 0 {
            return Some(self.idle_scored());
        }
        let table = &self.quality.table;
        let depth = table.depths()[di];
        if !depth.is_none() && cores == 0 {
            return None;
        }
        let power = self.channel.power_for(n, slot.chunk_bits, gain_sq).ok()?;
        let t1 = self.quality.single_core_time_at(ri, di);
        if buffered && !self.fits_playback(n, t1, cores, state) {
            return None;
        }
        let psnr = table.cell_at(ri, di).psnr_db;
        let decision = Decision {
            n_chunks: n,
            rate: table.rates()[ri],
            power_w: power,
            depth,
            cores,
        };
        Some(Scored {
            decision,
            objective: self.objective_parts(f64::from(n), psnr, t1, power, cores, state),
            psnr_db: psnr,
        })
    }

    /// Receiver work `a = N·T₁/u` computed exactly as the simulator does.
    fn sr_seconds(n: u32, t1: f64, cores: u32) -> f64 {
        if cores == 0 || t1 == 0.0 {
            0.0
        } else {
            f64::from(n) * (t1 / f64::from(cores))
        }
    }

    /// `Z + a − t₀ ≤ b`, evaluated with the same arithmetic as the queue
    /// update so that the resulting backlog never exceeds `b`.
    fn fits_playback(&self, n: u32, t1: f64, cores: u32, state: &SystemState) -> bool {
        let a = Self::sr_seconds(n, t1, cores);
        (state.z_seconds + a) - self.channel.slot_seconds <= self.cfg.buffering_b
    }

    /// Dispatches on the configured mode.
    pub fn decide_for_mode(&self, state: &SystemState, gain_sq: f64) -> Decision {
        match self.cfg.mode {
            Mode::Proposed => self.decide(state, gain_sq),
            Mode::Buffered => self.decide_buffered(state, gain_sq),
            Mode::Comp1 => self.decide_comp1(state, gain_sq),
            Mode::Comp2 => self.decide_comp2(state, gain_sq),
            Mode::Oracle => self.oracle_decide(state, gain_sq),
        }
    }

    /// Greedy sweep over every `(r, d)` cell, solving the continuous inner
    /// problem and comparing its integer neighbours.
    pub fn decide(&self, state: &SystemState, gain_sq: f64) -> Decision {
        self.sweep(state, gain_sq, false, None).decision
    }

    /// `decide` under the hard constraint `Z(t+1) ≤ b`.
    pub fn decide_buffered(&self, state: &SystemState, gain_sq: f64) -> Decision {
        self.sweep(state, gain_sq, true, None).decision
    }

    /// `decide` with the depth pinned to the table maximum.
    pub fn decide_comp2(&self, state: &SystemState, gain_sq: f64) -> Decision {
        let d_max = self.quality.table.depths().len() - 1;
        self.sweep(state, gain_sq, false, Some(d_max)).decision
    }

    /// Best scored decision of the sweep for the configured mode.
    pub fn decide_scored(&self, state: &SystemState, gain_sq: f64) -> Scored {
        match self.cfg.mode {
            Mode::Buffered => self.sweep(state, gain_sq, true, None),
            Mode::Comp2 => {
                let d_max = self.quality.table.depths().len() - 1;
                self.sweep(state, gain_sq, false, Some(d_max))
            }
            _ => self.sweep(state, gain_sq, false, None),
        }
    }

    fn sweep(
        &self,
        state: &SystemState,
        gain_sq: f64,
        buffered: bool,
        only_depth: Option<usize>,
    ) -> Scored {
        let slots = self.rate_slots(state, gain_sq);
        let mut best = Some(self.idle_scored());
        let nd = self.quality.table.depths().len();
        for (ri, slot) in slots.iter().enumerate() {
            if slot.n_cap == 0 {
                continue;
            }
            for di in 0..nd {
                if only_depth.is_some_and(|d| d != di) {
                    continue;
                }
                for (n, u) in self.cell_candidates(ri, di, slot, state, gain_sq, buffered) {
                    if let Some(s) = self.score(ri, di, n, u, slot, state, gain_sq, buffered) {
                        keep_best(&mut best, s);
                    }
                }
            }
        }
        best.expect("idle decision is always present")
    }
}

#[cfg(test)]
mod tests;
