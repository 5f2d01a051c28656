//! Exhaustive reference minimizer.

use super::{keep_best, Controller, Decision, Mode, Scored};
use crate::queueing::SystemState;

impl Controller<'_> {
    /// Exhaustive minimum of the objective over every feasible
    /// `(N, r, d, u)` with `P` from the tight rate constraint. Respects the
    /// playback constraint in buffered mode and the pinned depth in `Comp2`
    /// mode, so it is the reference for whichever sweep the mode runs.
    pub fn oracle_decide(&self, state: &SystemState, gain_sq: f64) -> Decision {
        self.oracle_scored(state, gain_sq).decision
    }

    pub fn oracle_scored(&self, state: &SystemState, gain_sq: f64) -> Scored {
        let buffered = self.cfg.mode == Mode::Buffered;
        let nd = self.quality.table.depths().len();
        let depths = if self.cfg.mode == Mode::Comp2 {
            nd - 1..nd
        } else {
            0..nd
        };
        let mut best = Some(self.idle_scored());
        for (ri, slot) in self.rate_slots(state, gain_sq).iter().enumerate() {
            for n in 1..=slot.n_cap {
                for di in depths.clone() {
                    let core_range = if self.quality.table.depths()[di].is_none() {
                        0..=0
                    } else {
                        1..=self.cfg.u_max
                    };
                    for u in core_range {
                        if let Some(s) = self.score(ri, di, n, u, slot, state, gain_sq, buffered) {
                            keep_best(&mut best, s);
                        }
                    }
                }
            }
        }
        best.expect("idle decision is always present")
    }
}
