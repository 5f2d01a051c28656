//! Separated transmitter/receiver baseline.

use super::{keep_best, Controller, Decision, Scored};
use crate::queueing::SystemState;

impl Controller<'_> {
    /// Transmitter first, receiver second, each minimizing its own share of
    /// the objective.
    ///
    /// The transmitter picks `(N, r, P)` for
    /// `−Q·N + k_w·W·P + V·(P̄ − PSNR(r, 0))·N`, i.e. it assumes no
    /// enhancement. The receiver then picks `(d, u)` for
    /// `k_z·Z·N·T₁(r,d)/u + k_θ·Θ·u + V·(P̄ − PSNR(r, d))·N` with `N`, `r` fixed.
    pub fn decide_comp1(&self, state: &SystemState, gain_sq: f64) -> Decision {
        let sent = self.comp1_transmitter(state, gain_sq);
        if sent.n_chunks == 0 {
            return self.idle();
        }
        let table = &self.quality.table;
        let ri = table.rate_index(sent.rate).expect("rate comes from the table");
        let (di, cores) = self.comp1_receiver(sent.n_chunks, ri, state);
        Decision {
            depth: table.depths()[di],
            cores,
            ..sent
        }
    }

    fn comp1_transmitter(&self, state: &SystemState, gain_sq: f64) -> Decision {
        let cfg = self.cfg;
        let table = &self.quality.table;
        let base_depth = table.depths().iter().position(|d| d.is_none()).unwrap_or(0);
        let q = state.q_chunks as f64;
        let mut best: Option<Scored> = Some(self.idle_scored());
        for (ri, slot) in self.rate_slots(state, gain_sq).iter().enumerate() {
            let psnr = table.cell_at(ri, base_depth).psnr_db;
            for n in 1..=slot.n_cap {
                let Ok(power) = self.channel.power_for(n, slot.chunk_bits, gain_sq) else {
                    break;
                };
                let nf = f64::from(n);
                let objective = -q * nf
                    + cfg.k_w * state.w_virtual * power
                    + cfg.v_weight * (self.p_bar - psnr) * nf;
                let scored = Scored {
                    decision: Decision {
                        n_chunks: n,
                        rate: table.rates()[ri],
                        power_w: power,
                        depth: table.depths()[base_depth],
                        cores: 0,
                    },
                    objective,
                    psnr_db: psnr,
                };
                keep_best(&mut best, scored);
            }
        }
        best.expect("idle decision is always present").decision
    }

    fn comp1_receiver(&self, n: u32, ri: usize, state: &SystemState) -> (usize, u32) {
        let cfg = self.cfg;
        let table = &self.quality.table;
        let nf = f64::from(n);
        let mut best: Option<(f64, f64, u32, usize)> = None;
        for (di, depth) in table.depths().iter().enumerate() {
            let psnr = table.cell_at(ri, di).psnr_db;
            let t1 = self.quality.single_core_time_at(ri, di);
            let core_range = if depth.is_none() { 0..=0 } else { 1..=cfg.u_max };
            for cores in core_range {
                let u = f64::from(cores);
                let sr = if cores > 0 {
                    cfg.k_z * state.z_seconds * nf * t1 / u
                } else {
                    0.0
                };
                let cost = sr + cfg.k_theta * state.theta_virtual * u + cfg.v_weight * (self.p_bar - psnr) * nf;
                // lower cost, then higher quality, then fewer cores
                let better = match best {
                    None => true,
                    Some((c, p, k, _)) => cost
                        .total_cmp(&c)
                        .then(p.total_cmp(&psnr))
                        .then(cores.cmp(&k))
                        .is_lt(),
                };
                if better {
                    best = Some((cost, psnr, cores, di));
                }
            }
        }
        let (_, _, cores, di) = best.expect("depth set is non-empty");
        (di, cores)
    }
}
