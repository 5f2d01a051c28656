//! Inner problem for a fixed `(r, d)` cell.
//!
//! With the rate constraint tight, the slot objective restricted to one cell
//! reduces to
//!
//! ```text
//! f(N, u) = A·(2^{αN} − 1) + K·N/u + c_θ·u + β·N
//! A = k_w·W·σ²/|h|²   α = S(r)/(t₀ℬ)   K = k_z·Z·T₁(r,d)   c_θ = k_θ·Θ
//! β = V·(P̄ − PSNR(r,d)) − Q
//! ```
//!
//! Minimizing over continuous `u` gives `u = √(K·N/c_θ)` and the envelope
//! `g(N) = A·(2^{αN} − 1) + 2√(K·c_θ·N) + β·N`, whose derivative
//! `F(N) = A·α·ln2·2^{αN} + √(K·c_θ/N) + β` is convex: it falls from `+∞`,
//! bottoms out, then grows. The local minimum of `g` is therefore the root of
//! `F` on its increasing branch.

use std::f64::consts::LN_2;

use super::{Controller, Decision, RateSlot};
use crate::quality::{Depth, QualityError, Rate};
use crate::queueing::SystemState;

const BISECTION_STEPS: usize = 200;

/// Continuous optimum `(N′, u′)` of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolution {
    pub n: f64,
    pub u: f64,
}

impl InnerSolution {
    pub const NOTHING: InnerSolution = InnerSolution { n: 0.0, u: 0.0 };
}

/// Coefficients of the reduced objective of one `(r, d)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProblem {
    /// `A`
    pub power_coeff: f64,
    /// `α`
    pub spectral: f64,
    /// `K`
    pub sr_coeff: f64,
    /// `c_θ`
    pub core_price: f64,
    /// `β`
    pub linear: f64,
    pub n_cap: f64,
    pub u_max: f64,
}

impl InnerProblem {
    /// Continuous objective `f(N, u)`; the receiver term is dropped at `u = 0`.
    pub fn objective(&self, n: f64, u: f64) -> f64 {
        let sr = if u > 0.0 { self.sr_coeff * n / u } else { 0.0 };
        self.power_coeff * (self.spectral * n * LN_2).exp_m1() + sr + self.core_price * u + self.linear * n
    }

    /// Envelope `g(N) = min_u f(N, u)` over continuous `u > 0`.
    pub fn envelope(&self, n: f64) -> f64 {
        self.power_coeff * (self.spectral * n * LN_2).exp_m1()
            + 2.0 * (self.sr_coeff * self.core_price * n).sqrt()
            + self.linear * n
    }

    /// `F(N) = g′(N)`.
    pub fn stationarity(&self, n: f64) -> f64 {
        self.power_coeff * self.spectral * LN_2 * (self.spectral * n * LN_2).exp()
            + (self.sr_coeff * self.core_price / n).sqrt()
            + self.linear
    }

    /// `F′(N)`; strictly increasing, so `F` is convex.
    fn stationarity_slope(&self, n: f64) -> f64 {
        let al = self.spectral * LN_2;
        self.power_coeff * al * al * (al * n).exp()
            - 0.5 * (self.sr_coeff * self.core_price).sqrt() * n.powf(-1.5)
    }

    /// Cores minimizing `K·N/u + c_θ·u` for a given `N`.
    pub fn cores_for(&self, n: f64) -> f64 {
        if self.sr_coeff == 0.0 || n == 0.0 {
            0.0
        } else if self.core_price == 0.0 {
            f64::INFINITY
        } else {
            (self.sr_coeff * n / self.core_price).sqrt()
        }
    }

    /// Minimizer over `[0, n_cap]` of `A·(2^{αN} − 1) + slope·N`.
    pub fn chunks_for_slope(&self, slope: f64, n_cap: f64) -> f64 {
        if slope >= 0.0 || n_cap <= 0.0 {
            return 0.0;
        }
        if self.power_coeff == 0.0 {
            return n_cap;
        }
        let n = (-slope / (self.power_coeff * self.spectral * LN_2)).log2() / self.spectral;
        n.clamp(0.0, n_cap)
    }

    /// Continuous joint optimum: `(0, 0)` when sending is unprofitable even
    /// with every core, otherwise the stationary point of `g` with
    /// `u′ = √(K·N′/c_θ)`, re-solved with `u = u_max` when `u′` exceeds it.
    pub fn solve(&self) -> InnerSolution {
        if self.n_cap <= 0.0 {
            return InnerSolution::NOTHING;
        }
        if self.sr_coeff / self.u_max + self.linear >= 0.0 {
            return InnerSolution::NOTHING;
        }
        // Z = 0: the receiver term vanishes and any core count is as good
        if self.sr_coeff == 0.0 {
            let n = self.chunks_for_slope(self.linear, self.n_cap);
            return InnerSolution { n, u: 0.0 };
        }
        // Θ = 0: cores are free, use all of them
        if self.core_price == 0.0 {
            return self.at_core_cap();
        }

        let n = self.stationary_chunks();
        let u = self.cores_for(n);
        let sol = if u > self.u_max {
            self.at_core_cap()
        } else {
            InnerSolution { n, u }
        };
        // the local minimum may still lose to sending nothing
        if self.objective(sol.n, sol.u) < 0.0 {
            sol
        } else {
            InnerSolution::NOTHING
        }
    }

    fn at_core_cap(&self) -> InnerSolution {
        let n = self.chunks_for_slope(self.sr_coeff / self.u_max + self.linear, self.n_cap);
        InnerSolution {
            n,
            u: if n > 0.0 { self.u_max } else { 0.0 },
        }
    }

    /// Local minimum of `g` on `(0, n_cap]`, or `n_cap`/`0` when `g` has none
    /// there. Requires `K, c_θ > 0`.
    fn stationary_chunks(&self) -> f64 {
        let cap = self.n_cap;
        let turn = if self.power_coeff == 0.0 || self.stationarity_slope(cap) <= 0.0 {
            cap
        } else {
            let (mut lo, mut hi) = (cap * 1e-12, cap);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if self.stationarity_slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        if self.stationarity(turn) >= 0.0 {
            // g is non-decreasing past its local maximum: nothing beats N = 0
            // unless g still dips below 0 at the cap (concave case)
            return if turn >= cap && self.envelope(cap) < 0.0 { cap } else { 0.0 };
        }
        if self.stationarity(cap) <= 0.0 {
            return if self.envelope(cap) < 0.0 { cap } else { 0.0 };
        }
        let tol = 1e-9 * (1.0 + self.linear.abs());
        let (mut lo, mut hi) = (turn, cap);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..BISECTION_STEPS {
            mid = 0.5 * (lo + hi);
            let f = self.stationarity(mid);
            if f.abs() <= tol {
                break;
            }
            if f > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        mid
    }
}

/// Integer neighbours `{⌊N′⌋,⌈N′⌉} × {⌊u′⌋,⌈u′⌉}` clipped to the caps, plus
/// `(0, 0)`. Any `N > 0` needs at least one core when `needs_cores`.
pub(crate) fn boundary_pairs(
    sol: &InnerSolution,
    n_cap: u32,
    u_max: u32,
    needs_cores: bool,
) -> Vec<(u32, u32)> {
    let clip_n = |x: f64| x.clamp(0.0, f64::from(n_cap)) as u32;
    let clip_u = |x: f64| x.clamp(0.0, f64::from(u_max)) as u32;
    let mut out = vec![(0, 0)];
    for n in [clip_n(sol.n.floor()), clip_n(sol.n.ceil())] {
        for u in [clip_u(sol.u.floor()), clip_u(sol.u.ceil())] {
            let pair = match (n, u) {
                (0, _) => (0, 0),
                (n, 0) if needs_cores => (n, 1),
                (n, _) if !needs_cores => (n, 0),
                p => p,
            };
            if !out.contains(&pair) {
                out.push(pair);
            }
        }
    }
    out
}

/// Upper bound on `N` that keeps `Z + a − t₀ ≤ b` at the closed-form core
/// count: `(b + t₀ − Z)²·k_z·Z / (T₁·k_θ·Θ)`. Infinite when the bound
/// degenerates (`d = 0`, `Θ = 0` or `Z = 0`) and zero without slack.
pub fn buffering_nmax(
    state: &SystemState,
    buffering_b: f64,
    slot_seconds: f64,
    single_core_time: f64,
    k_z: f64,
    k_theta: f64,
) -> f64 {
    let slack = buffering_b + slot_seconds - state.z_seconds;
    if slack <= 0.0 {
        return 0.0;
    }
    if single_core_time == 0.0 || state.theta_virtual == 0.0 || state.z_seconds == 0.0 {
        return f64::INFINITY;
    }
    slack * slack * k_z * state.z_seconds / (single_core_time * k_theta * state.theta_virtual)
}

impl Controller<'_> {
    fn inner_problem(
        &self,
        ri: usize,
        di: usize,
        slot: &RateSlot,
        state: &SystemState,
        gain_sq: f64,
        n_cap: f64,
    ) -> InnerProblem {
        let cfg = self.cfg;
        let psnr = self.quality.table.cell_at(ri, di).psnr_db;
        InnerProblem {
            power_coeff: if state.w_virtual == 0.0 {
                0.0
            } else {
                cfg.k_w * state.w_virtual * self.channel.noise_power / gain_sq
            },
            spectral: slot.chunk_bits / self.channel.slot_bandwidth_bits(),
            sr_coeff: cfg.k_z * state.z_seconds * self.quality.single_core_time_at(ri, di),
            core_price: cfg.k_theta * state.theta_virtual,
            linear: cfg.v_weight * (self.p_bar - psnr) - state.q_chunks as f64,
            n_cap,
            u_max: f64::from(cfg.u_max),
        }
    }

    fn cell_indices(&self, r: Rate, d: Depth) -> Result<(usize, usize), QualityError> {
        let table = &self.quality.table;
        let ri = table.rate_index(r).ok_or(QualityError::UnknownRate(r))?;
        let di = table.depth_index(d).ok_or(QualityError::UnknownDepth(d))?;
        Ok((ri, di))
    }

    /// Playback-safe chunk cap for cell `(ri, di)`; infinite outside
    /// buffered mode.
    fn playback_cap(&self, ri: usize, di: usize, state: &SystemState, buffered: bool) -> f64 {
        if !buffered {
            return f64::INFINITY;
        }
        buffering_nmax(
            state,
            self.cfg.buffering_b,
            self.channel.slot_seconds,
            self.quality.single_core_time_at(ri, di),
            self.cfg.k_z,
            self.cfg.k_theta,
        )
    }

    /// Continuous optimum of cell `(r, d)` for the given slot.
    pub fn solve_inner(
        &self,
        r: Rate,
        d: Depth,
        state: &SystemState,
        gain_sq: f64,
    ) -> Result<InnerSolution, QualityError> {
        let (ri, di) = self.cell_indices(r, d)?;
        let slot = self.rate_slots(state, gain_sq)[ri];
        let problem = self.inner_problem(ri, di, &slot, state, gain_sq, f64::from(slot.n_cap));
        Ok(if d.is_none() {
            InnerSolution {
                n: problem.chunks_for_slope(problem.linear, problem.n_cap),
                u: 0.0,
            }
        } else {
            problem.solve()
        })
    }

    /// Feasible integer decisions around a continuous cell optimum.
    pub fn enumerate_candidates(
        &self,
        sol: &InnerSolution,
        r: Rate,
        d: Depth,
        state: &SystemState,
        gain_sq: f64,
        buffered: bool,
    ) -> Result<Vec<Decision>, QualityError> {
        let (ri, di) = self.cell_indices(r, d)?;
        let slot = self.rate_slots(state, gain_sq)[ri];
        let cap = self.playback_cap(ri, di, state, buffered);
        let n_cap = f64::from(slot.n_cap).min(cap.floor()) as u32;
        Ok(boundary_pairs(sol, n_cap, self.cfg.u_max, !d.is_none())
            .into_iter()
            .filter_map(|(n, u)| self.score(ri, di, n, u, &slot, state, gain_sq, buffered))
            .map(|s| s.decision)
            .collect())
    }

    /// Integer `(N, u)` pairs worth scoring in one cell.
    ///
    /// Besides the neighbours of the continuous optimum, each fixed core
    /// count `u` contributes the floor/ceil of its exact one-dimensional
    /// optimum: for fixed `u` the cell objective is convex in `N`, so those two
    /// points bracket its integer minimizer and the union covers the cell's
    /// integer optimum.
    pub(super) fn cell_candidates(
        &self,
        ri: usize,
        di: usize,
        slot: &RateSlot,
        state: &SystemState,
        gain_sq: f64,
        buffered: bool,
    ) -> Vec<(u32, u32)> {
        let full_cap = f64::from(slot.n_cap);
        let cap = full_cap.min(self.playback_cap(ri, di, state, buffered).floor());
        let problem = self.inner_problem(ri, di, slot, state, gain_sq, cap);
        let t1 = self.quality.single_core_time_at(ri, di);

        if t1 == 0.0 {
            let n = problem.chunks_for_slope(problem.linear, full_cap);
            let sol = InnerSolution { n, u: 0.0 };
            return boundary_pairs(&sol, slot.n_cap, 0, false);
        }

        let mut pairs = boundary_pairs(&problem.solve(), cap as u32, self.cfg.u_max, true);
        if !self.refine_per_core {
            return pairs;
        }
        for u in 1..=self.cfg.u_max {
            let u_cap = if buffered {
                self.playback_cap_at_cores(slot.n_cap, t1, u, state)
            } else {
                slot.n_cap
            };
            let slope = problem.sr_coeff / f64::from(u) + problem.linear;
            let n = problem.chunks_for_slope(slope, f64::from(u_cap));
            for n in [n.floor() as u32, n.ceil() as u32] {
                if n > 0 && n <= u_cap && !pairs.contains(&(n, u)) {
                    pairs.push((n, u));
                }
            }
        }
        pairs
    }

    /// Largest `N ≤ n_cap` with `Z + N·T₁/u − t₀ ≤ b`.
    fn playback_cap_at_cores(&self, n_cap: u32, t1: f64, cores: u32, state: &SystemState) -> u32 {
        let slack = self.cfg.buffering_b + self.channel.slot_seconds - state.z_seconds;
        if slack < 0.0 {
            return 0;
        }
        let estimate = (slack * f64::from(cores) / t1).floor().min(f64::from(n_cap));
        let mut n = estimate.max(0.0) as u32;
        while n > 0 && !self.fits_playback(n, t1, cores, state) {
            n -= 1;
        }
        while n < n_cap && self.fits_playback(n + 1, t1, cores, state) {
            n += 1;
        }
        n
    }
}
