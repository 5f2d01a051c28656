//! Rayleigh block-fading link: per-slot gain sampling, Shannon capacity, and
//! the power that makes a given payload exactly fit one slot.

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("transmit power {power} W outside [0, {budget}] W")]
    PowerOutOfRange { power: f64, budget: f64 },
    #[error("sending {chunks} chunks needs {required} W, budget is {budget} W")]
    BudgetExceeded {
        chunks: u32,
        required: f64,
        budget: f64,
    },
}

/// Static link parameters for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub bandwidth_hz: f64,
    pub slot_seconds: f64,
    /// Receiver noise power σ².
    pub noise_power: f64,
    /// Large-scale attenuation `1/l^γ`.
    pub pathloss: f64,
    pub power_budget_w: f64,
    /// Mean received SNR at 1 W, i.e. `pathloss / σ²`, in dB.
    pub nominal_snr_db: f64,
}

/// Realized `|h(t)|²` for one slot.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ChannelSample {
    pub gain_sq: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ChannelModel {
    /// Derives σ² so that `pathloss · 1 W / σ²` equals the nominal SNR.
    pub fn with_nominal_snr(
        bandwidth_hz: f64,
        slot_seconds: f64,
        pathloss: f64,
        power_budget_w: f64,
        nominal_snr_db: f64,
    ) -> Self {
        ChannelModel {
            bandwidth_hz,
            slot_seconds,
            noise_power: pathloss / db_to_linear(nominal_snr_db),
            pathloss,
            power_budget_w,
            nominal_snr_db,
        }
    }

    /// Bits one slot can carry per unit of `log₂(1+SNR)`.
    pub fn slot_bandwidth_bits(&self) -> f64 {
        self.slot_seconds * self.bandwidth_hz
    }

    /// Scales a unit-mean exponential draw (`|g|²`, `g ~ CN(0,1)`) by the
    /// path loss.
    pub fn gain_from_draw(&self, unit_exponential: f64) -> ChannelSample {
        ChannelSample {
            gain_sq: self.pathloss * unit_exponential,
        }
    }

    pub fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelSample {
        let e: f64 = rng.sample(Exp1);
        self.gain_from_draw(e)
    }

    /// Bits deliverable in one slot at power `power` (Shannon bound).
    pub fn capacity(&self, power: f64, gain_sq: f64) -> Result<f64, ChannelError> {
        if !(0.0..=self.power_budget_w).contains(&power) {
            return Err(ChannelError::PowerOutOfRange {
                power,
                budget: self.power_budget_w,
            });
        }
        Ok(self.capacity_unchecked(power, gain_sq))
    }

    pub fn capacity_unchecked(&self, power: f64, gain_sq: f64) -> f64 {
        self.slot_bandwidth_bits() * (power * gain_sq / self.noise_power).ln_1p()
            / std::f64::consts::LN_2
    }

    /// Power for which `capacity` equals exactly `chunks · chunk_bits`,
    /// ignoring the budget. Infinite when the gain is zero and `chunks > 0`.
    pub fn required_power(&self, chunks: u32, chunk_bits: f64, gain_sq: f64) -> f64 {
        if chunks == 0 {
            return 0.0;
        }
        let spectral = f64::from(chunks) * chunk_bits / self.slot_bandwidth_bits();
        self.noise_power / gain_sq * (spectral * std::f64::consts::LN_2).exp_m1()
    }

    /// Closed-form power that makes the rate constraint tight, or
    /// `BudgetExceeded` when it does not fit under `P₀`.
    pub fn power_for(&self, chunks: u32, chunk_bits: f64, gain_sq: f64) -> Result<f64, ChannelError> {
        let required = self.required_power(chunks, chunk_bits, gain_sq);
        if required <= self.power_budget_w {
            Ok(required)
        } else {
            Err(ChannelError::BudgetExceeded {
                chunks,
                required,
                budget: self.power_budget_w,
            })
        }
    }

    /// Largest chunk count whose tight power stays within budget.
    pub fn max_chunks(&self, chunk_bits: f64, gain_sq: f64) -> u32 {
        if gain_sq <= 0.0 {
            return 0;
        }
        let fits = |n: u32| self.required_power(n, chunk_bits, gain_sq) <= self.power_budget_w;
        let estimate = (self.capacity_unchecked(self.power_budget_w, gain_sq) / chunk_bits).floor();
        let mut n = if estimate.is_finite() {
            estimate.clamp(0.0, f64::from(u32::MAX - 1)) as u32
        } else {
            u32::MAX - 1
        };
        // the floor can land one off when the ratio is within rounding of an integer
        while n > 0 && !fits(n) {
            n -= 1;
        }
        while n < u32::MAX - 1 && fits(n + 1) {
            n += 1;
        }
        n
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::with_nominal_snr(3.0e6, 1.0, 1.0, DEFAULT_POWER_BUDGET_W, 16.0)
    }
}

pub const DEFAULT_POWER_BUDGET_W: f64 = 10.0;
