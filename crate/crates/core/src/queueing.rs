//! Physical and virtual backlogs and their per-slot updates.

use rand::Rng;
use thiserror::Error;

use crate::controller::Decision;

#[derive(Debug, Error, PartialEq)]
pub enum QueueError {
    #[error("negative {what} ({value}) passed to the queue update")]
    Negative { what: &'static str, value: f64 },
}

/// Backlog vector observed by the controller each slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SystemState {
    /// Requested but unsent chunks at the transmitter.
    pub q_chunks: u64,
    /// Pending super-resolution work at the receiver, in seconds.
    pub z_seconds: f64,
    /// Power virtual queue (watt-slots above the average target).
    pub w_virtual: f64,
    /// CPU virtual queue (core-slots above the average target).
    pub theta_virtual: f64,
}

/// Long-run targets and slot length used by the update rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueParams {
    /// Average transmit power target η.
    pub eta: f64,
    /// Average core usage target ξ.
    pub xi: f64,
    pub slot_seconds: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams {
            eta: 2.5,
            xi: 2.5,
            slot_seconds: 1.0,
        }
    }
}

fn non_negative(what: &'static str, value: f64) -> Result<(), QueueError> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(QueueError::Negative { what, value })
    }
}

impl SystemState {
    pub fn zero() -> Self {
        SystemState::default()
    }

    /// Advances every backlog by one slot:
    ///
    /// ```text
    /// Q' = max{Q − N + λ, 0}     Z' = max{Z + a − t₀, 0}
    /// W' = max{W − η + P, 0}     Θ' = max{Θ − ξ + u, 0}
    /// ```
    ///
    /// `N > Q` is tolerated; the clamp absorbs it.
    pub fn step(
        &self,
        decision: &Decision,
        arrivals: u32,
        sr_seconds: f64,
        params: &QueueParams,
    ) -> Result<SystemState, QueueError> {
        non_negative("processing time", sr_seconds)?;
        non_negative("power", decision.power_w)?;
        non_negative("eta", params.eta)?;
        non_negative("xi", params.xi)?;
        non_negative("slot length", params.slot_seconds)?;
        non_negative("receiver backlog", self.z_seconds)?;
        non_negative("power backlog", self.w_virtual)?;
        non_negative("cpu backlog", self.theta_virtual)?;

        let q = (self.q_chunks + u64::from(arrivals)).saturating_sub(u64::from(decision.n_chunks));
        Ok(SystemState {
            q_chunks: q,
            z_seconds: (self.z_seconds + sr_seconds - params.slot_seconds).max(0.0),
            w_virtual: (self.w_virtual - params.eta + decision.power_w).max(0.0),
            theta_virtual: (self.theta_virtual - params.xi + f64::from(decision.cores)).max(0.0),
        })
    }
}

/// Uniform integer chunk requests on `{0, …, lambda_max}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrivalProcess {
    pub lambda_max: u32,
}

impl Default for ArrivalProcess {
    fn default() -> Self {
        ArrivalProcess { lambda_max: 6 }
    }
}

impl ArrivalProcess {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        rng.random_range(0..=self.lambda_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{Depth, Rate};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn decision(n: u32, p: f64, u: u32) -> Decision {
        Decision {
            n_chunks: n,
            rate: Rate(2),
            power_w: p,
            depth: if u > 0 { Depth(5) } else { Depth(0) },
            cores: u,
        }
    }

    #[test]
    fn transmitter_queue_clamps_at_zero() {
        let s = SystemState {
            q_chunks: 5,
            ..SystemState::zero()
        };
        let next = s.step(&decision(7, 0.0, 0), 1, 0.0, &QueueParams::default()).unwrap();
        assert_eq!(next.q_chunks, 0);
    }

    #[test]
    fn receiver_buffer_arithmetic() {
        let s = SystemState {
            z_seconds: 0.5,
            ..SystemState::zero()
        };
        let next = s.step(&decision(0, 0.0, 0), 0, 1.2, &QueueParams::default()).unwrap();
        assert_relative_eq!(next.z_seconds, 0.7, max_relative = 1e-12);
    }

    #[test]
    fn virtual_queues() {
        let s = SystemState {
            w_virtual: 1.0,
            theta_virtual: 0.0,
            ..SystemState::zero()
        };
        let next = s.step(&decision(1, 2.0, 4), 0, 0.0, &QueueParams::default()).unwrap();
        assert_relative_eq!(next.w_virtual, 0.5);
        assert_relative_eq!(next.theta_virtual, 1.5);
    }

    #[test]
    fn negative_inputs_rejected() {
        let s = SystemState::zero();
        let p = QueueParams::default();
        assert!(s.step(&decision(0, 0.0, 0), 0, -1.0, &p).is_err());
        assert!(s.step(&decision(0, -0.1, 0), 0, 0.0, &p).is_err());
        let bad = SystemState {
            z_seconds: -1.0,
            ..s
        };
        assert!(bad.step(&decision(0, 0.0, 0), 0, 0.0, &p).is_err());
    }

    #[test]
    fn arrivals_degenerate_and_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let none = ArrivalProcess { lambda_max: 0 };
        assert!((0..1000).all(|_| none.draw(&mut rng) == 0));
        let six = ArrivalProcess { lambda_max: 6 };
        let mut seen = [false; 7];
        for _ in 0..10_000 {
            let x = six.draw(&mut rng);
            assert!(x <= 6);
            seen[x as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn arrival_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let six = ArrivalProcess { lambda_max: 6 };
        let n = 1_000_000;
        let mean = (0..n).map(|_| f64::from(six.draw(&mut rng))).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 0.01, "mean {mean}");
    }

    proptest! {
        #[test]
        fn step_preserves_nonnegativity(
            q in 0u64..100, z in 0.0f64..20.0, w in 0.0f64..20.0, th in 0.0f64..20.0,
            n in 0u32..150, p in 0.0f64..10.0, u in 0u32..10, lam in 0u32..10, a in 0.0f64..30.0,
        ) {
            let s = SystemState { q_chunks: q, z_seconds: z, w_virtual: w, theta_virtual: th };
            let next = s.step(&decision(n, p, u), lam, a, &QueueParams::default()).unwrap();
            prop_assert!(next.z_seconds >= 0.0 && next.w_virtual >= 0.0 && next.theta_virtual >= 0.0);
        }

        #[test]
        fn on_target_usage_keeps_virtual_queues_empty(steps in 1usize..200) {
            let params = QueueParams { xi: 2.0, ..QueueParams::default() };
            let mut s = SystemState::zero();
            for _ in 0..steps {
                s = s.step(&decision(0, params.eta, 2), 0, 0.0, &params).unwrap();
                prop_assert_eq!(s.w_virtual, 0.0);
                prop_assert_eq!(s.theta_virtual, 0.0);
            }
        }
    }
}
