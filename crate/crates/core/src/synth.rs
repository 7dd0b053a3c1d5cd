//! Synthetic hourly price series for tests and desk-scale experiments.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::PriceSeries;
use crate::error::{Error, Result};

pub fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

/// `low` for the first `half_period` hours, `high` for the next, repeating.
pub fn square_wave(start: NaiveDateTime, hours: usize, low: f64, high: f64, half_period: usize) -> Result<PriceSeries> {
    if half_period == 0 {
        return Err(Error::InvalidInput("square wave half period must be positive".into()));
    }
    let prices = (0..hours)
        .map(|t| if (t / half_period).is_multiple_of(2) { low } else { high })
        .collect();
    PriceSeries::from_prices(start, prices)
}

/// Parameters of the synthetic market.
///
/// Price = base × season × exp(level) × daily profile × exp(noise) × spike,
/// where `level` is a slow AR(1) regime and `noise` a fast one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// $/MWh
    pub base: f64,
    /// Relative amplitude of the annual cycle.
    pub seasonal_amplitude: f64,
    /// Stationary std of the log regime level.
    pub level_std: f64,
    /// Hourly AR(1) coefficient of the regime level.
    pub level_persistence: f64,
    /// Stationary std of the fast log noise.
    pub noise_std: f64,
    pub noise_persistence: f64,
    /// Height of the morning and evening peaks relative to the night trough.
    pub morning_peak: f64,
    pub evening_peak: f64,
    /// Peak amplitude multiplier on Saturdays and Sundays.
    pub weekend_factor: f64,
    /// Probability per afternoon/evening hour that a spike starts.
    pub spike_prob: f64,
    /// Spike multiplier is drawn uniformly from `[1, spike_max]`.
    pub spike_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            base: 30.0,
            seasonal_amplitude: 0.15,
            level_std: 0.3,
            level_persistence: 0.995,
            noise_std: 0.06,
            noise_persistence: 0.7,
            morning_peak: 0.5,
            evening_peak: 0.9,
            weekend_factor: 0.6,
            spike_prob: 0.004,
            spike_max: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base > 0.0
            && (0.0..1.0).contains(&self.seasonal_amplitude)
            && self.level_std >= 0.0
            && (0.0..1.0).contains(&self.level_persistence)
            && self.noise_std >= 0.0
            && (0.0..1.0).contains(&self.noise_persistence)
            && self.morning_peak >= 0.0
            && self.evening_peak >= 0.0
            && self.weekend_factor >= 0.0
            && (0.0..=1.0).contains(&self.spike_prob)
            && self.spike_max >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid synthetic market config {self:?}")))
        }
    }

    /// Deterministic shape for a given hour: season × daily profile.
    pub fn shape(&self, ts: &NaiveDateTime) -> f64 {
        let day = ts.ordinal0() as f64;
        let season = 1.0 + self.seasonal_amplitude * (2.0 * std::f64::consts::PI * (day - 20.0) / 365.0).cos();
        let h = ts.hour() as f64;
        let bump = |center: f64, width: f64| (-(h - center).powi(2) / (2.0 * width * width)).exp();
        let weekend = ts.weekday().number_from_monday() >= 6;
        let amp = if weekend { self.weekend_factor } else { 1.0 };
        let profile = 0.7 + amp * (self.morning_peak * bump(8.0, 1.5) + self.evening_peak * bump(19.0, 2.0));
        season * profile
    }
}

fn ar1_step<R: Rng + ?Sized>(x: f64, phi: f64, stationary_std: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    phi * x + stationary_std * (1.0 - phi * phi).sqrt() * z
}

/// Hourly series with daily, weekly and seasonal structure, persistent
/// regimes and occasional spikes.
pub fn synthetic_market<R: Rng + ?Sized>(
    start: NaiveDateTime,
    hours: usize,
    config: &SynthConfig,
    rng: &mut R,
) -> Result<PriceSeries> {
    config.validate()?;
    let mut level = config.level_std * rng.sample::<f64, _>(StandardNormal);
    let mut noise = 0.0;
    let mut spike_left = 0usize;
    let mut spike = 1.0;
    let mut timestamps = Vec::with_capacity(hours);
    let mut prices = Vec::with_capacity(hours);
    for t in 0..hours {
        let ts = start + Duration::hours(t as i64);
        level = ar1_step(level, config.level_persistence, config.level_std, rng);
        noise = ar1_step(noise, config.noise_persistence, config.noise_std, rng);
        let u: f64 = rng.gen();
        let hour = ts.hour();
        if spike_left == 0 && (14..=21).contains(&hour) && u < config.spike_prob {
            spike_left = rng.gen_range(1..=3);
            spike = rng.gen_range(1.0..=config.spike_max);
        }
        let mult = if spike_left > 0 {
            spike_left -= 1;
            spike
        } else {
            1.0
        };
        let price = config.base * config.shape(&ts) * level.exp() * noise.exp() * mult;
        timestamps.push(ts);
        prices.push(price);
    }
    PriceSeries::new(timestamps, prices)
}

/// One calendar year (8760 hours) starting at `start`.
pub fn synthetic_year<R: Rng + ?Sized>(start: NaiveDateTime, config: &SynthConfig, rng: &mut R) -> Result<PriceSeries> {
    synthetic_market(start, 8760, config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mean_std;
    use crate::seeds;

    #[test]
    fn square_wave_levels() {
        let s = square_wave(default_start(), 50, 10.0, 50.0, 12).unwrap();
        assert_eq!(s.len(), 50);
        assert!(s.prices()[..12].iter().all(|&p| p == 10.0));
        assert!(s.prices()[12..24].iter().all(|&p| p == 50.0));
        assert_eq!(s.prices()[24], 10.0);
        assert_eq!(s.prices()[48], 10.0);
        assert!(square_wave(default_start(), 5, 1.0, 2.0, 0).is_err());
    }

    #[test]
    fn market_is_positive_and_reproducible() {
        let cfg = SynthConfig::default();
        let a = synthetic_year(default_start(), &cfg, &mut seeds::rng(3)).unwrap();
        let b = synthetic_year(default_start(), &cfg, &mut seeds::rng(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8760);
        assert!(a.prices().iter().all(|&p| p.is_finite() && p > 0.0));
        let c = synthetic_year(default_start(), &cfg, &mut seeds::rng(4)).unwrap();
        assert_ne!(a.prices(), c.prices());
    }

    #[test]
    fn evening_is_dearer_than_night() {
        let cfg = SynthConfig::default();
        let s = synthetic_year(default_start(), &cfg, &mut seeds::rng(1)).unwrap();
        let mut night = Vec::new();
        let mut evening = Vec::new();
        for (ts, &p) in s.timestamps().iter().zip(s.prices()) {
            match ts.hour() {
                2..=4 => night.push(p),
                18..=20 => evening.push(p),
                _ => {}
            }
        }
        let (n, _) = mean_std(&night);
        let (e, _) = mean_std(&evening);
        assert!(e > 1.3 * n, "{e} vs {n}");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            level_persistence: 1.0,
            ..SynthConfig::default()
        };
        assert!(synthetic_market(default_start(), 10, &cfg, &mut seeds::rng(0)).is_err());
    }
}
