//! Rayleigh block-fading link: power gain, instantaneous SNR, Shannon rate
//! and the per-slot byte budget.

use rand::Rng;
use rand_distr::Open01;

use crate::domain::CommContext;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    pub snr_clamp_db: (f64, f64),
    pub slot_ms: f64,
    /// Per-user mean SNR is drawn uniformly from this range at setup.
    pub mean_snr_range_db: (f64, f64),
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1.4e6,
            snr_clamp_db: (-13.0, 30.0),
            slot_ms: 50.0,
            mean_snr_range_db: (0.0, 20.0),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("channel.bandwidth_hz must be positive".into()));
        }
        if !(self.slot_ms > 0.0) {
            return Err(Error::Config("channel.slot_ms must be positive".into()));
        }
        if !(self.snr_clamp_db.0 <= self.snr_clamp_db.1) {
            return Err(Error::Config("channel SNR clamp interval is empty".into()));
        }
        if !(self.mean_snr_range_db.0 <= self.mean_snr_range_db.1) {
            return Err(Error::Config("channel mean SNR range is empty".into()));
        }
        Ok(())
    }

    /// Draws a user's mean SNR from the configured range.
    pub fn sample_mean_snr(&self, rng: &mut Stream) -> f64 {
        let (lo, hi) = self.mean_snr_range_db;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    }

    /// One block-fading realization for a user with the given mean SNR.
    pub fn draw(&self, mean_snr_db: f64, rng: &mut Stream) -> ChannelDraw {
        self.draw_with_gain(mean_snr_db, sample_power_gain(rng))
    }

    pub fn draw_with_gain(&self, mean_snr_db: f64, power_gain: f64) -> ChannelDraw {
        let snr = snr_instantaneous(mean_snr_db, power_gain, self.snr_clamp_db);
        self.draw_at_snr(power_gain, snr)
    }

    pub fn draw_at_snr(&self, power_gain: f64, instantaneous_snr_db: f64) -> ChannelDraw {
        let rate_bps = shannon_rate(self.bandwidth_hz, instantaneous_snr_db);
        ChannelDraw {
            power_gain,
            instantaneous_snr_db,
            rate_bps,
            byte_budget: slot_byte_budget(rate_bps, self.slot_ms),
        }
    }

    /// Byte budget implied by an SNR value, for decision-time estimates.
    pub fn budget_at_snr(&self, snr_db: f64) -> u64 {
        slot_byte_budget(shannon_rate(self.bandwidth_hz, snr_db), self.slot_ms)
    }

    pub fn comm_context(&self, mean_snr_db: f64, draw: &ChannelDraw) -> CommContext {
        CommContext {
            bandwidth_hz: self.bandwidth_hz,
            mean_snr_db,
            instantaneous_snr_db: draw.instantaneous_snr_db,
            power_gain: draw.power_gain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    pub power_gain: f64,
    pub instantaneous_snr_db: f64,
    pub rate_bps: f64,
    pub byte_budget: u64,
}

/// Exponential power gain from a uniform variate in (0, 1).
pub fn power_gain_from_uniform(u: f64) -> f64 {
    -u.ln()
}

/// Unit-mean exponential power gain (|h|² of a Rayleigh amplitude).
pub fn sample_power_gain(rng: &mut Stream) -> f64 {
    let u: f64 = rng.sample(Open01);
    power_gain_from_uniform(u)
}

pub fn snr_instantaneous(mean_snr_db: f64, power_gain: f64, clamp: (f64, f64)) -> f64 {
    debug_assert!(power_gain > 0.0);
    (mean_snr_db + 10.0 * power_gain.log10()).clamp(clamp.0, clamp.1)
}

pub fn shannon_rate(bandwidth_hz: f64, snr_db: f64) -> f64 {
    bandwidth_hz * (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

pub fn slot_byte_budget(rate_bps: f64, slot_ms: f64) -> u64 {
    (rate_bps * slot_ms / 1000.0 / 8.0).floor().max(0.0) as u64
}

/// Source of per-attempt channel realizations for one transmission.
pub trait AttemptChannel {
    fn draw(&mut self, attempt: u32) -> ChannelDraw;
}

/// Independent Rayleigh draws keyed by (seed, user, step, attempt).
#[derive(Debug, Clone)]
pub struct RayleighLink<'a> {
    pub params: &'a ChannelParams,
    pub mean_snr_db: f64,
    pub master_seed: u64,
    pub user: u64,
    pub step: u64,
}

impl AttemptChannel for RayleighLink<'_> {
    fn draw(&mut self, attempt: u32) -> ChannelDraw {
        let mut rng = substream(
            self.master_seed,
            "fading.attempt",
            &[self.user, self.step, u64::from(attempt)],
        );
        self.params.draw(self.mean_snr_db, &mut rng)
    }
}

/// Every attempt sees the same realization.
#[derive(Debug, Clone, Copy)]
pub struct PinnedLink(pub ChannelDraw);

impl<C: AttemptChannel + ?Sized> AttemptChannel for Box<C> {
    fn draw(&mut self, attempt: u32) -> ChannelDraw {
        (**self).draw(attempt)
    }
}

impl AttemptChannel for PinnedLink {
    fn draw(&mut self, _attempt: u32) -> ChannelDraw {
        self.0
    }
}

/// Replays a fixed sequence; the last entry repeats once exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedLink(pub Vec<ChannelDraw>);

impl AttemptChannel for ScriptedLink {
    fn draw(&mut self, attempt: u32) -> ChannelDraw {
        let i = (attempt as usize).min(self.0.len() - 1);
        self.0[i]
    }
}
