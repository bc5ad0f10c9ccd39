use std::f64::consts::TAU;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::rng::{standard_normal, stream_rng, uniform, Stream};
use super::traffic::{TrafficRecord, SLOT_MINUTES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeriodicTrafficConfig {
    pub n_aps: usize,
    pub days: usize,
    pub seed: u64,
    /// Standard deviation of the log-normal multiplicative noise.
    pub noise_scale: f64,
    /// Relative amplitude of the diurnal cycle, in `[0,1]`.
    pub diurnal_amplitude: f64,
    /// Relative amplitude of the 7-day modulation, in `[0,1)`.
    pub weekly_amplitude: f64,
}

impl Default for PeriodicTrafficConfig {
    fn default() -> Self {
        Self {
            n_aps: 16,
            days: 50,
            seed: 1,
            noise_scale: 0.3,
            diurnal_amplitude: 0.8,
            weekly_amplitude: 0.2,
        }
    }
}

pub fn periodic_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 12, 20)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

pub fn ap_name(i: usize) -> String {
    format!("ap{i:02}")
}

pub fn gen_periodic_traffic(n_aps: usize, days: usize, seed: u64) -> Result<Vec<TrafficRecord>> {
    gen_periodic_traffic_with(&PeriodicTrafficConfig {
        n_aps,
        days,
        seed,
        ..Default::default()
    })
}

/// Per-AP diurnal sinusoid with a weekly modulation and log-normal noise, on
/// the 10-minute grid.
pub fn gen_periodic_traffic_with(cfg: &PeriodicTrafficConfig) -> Result<Vec<TrafficRecord>> {
    if cfg.days == 0 || cfg.n_aps == 0 {
        return Err(Error::Config("periodic traffic needs days >= 1 and n_aps >= 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.diurnal_amplitude)
        || !(0.0..1.0).contains(&cfg.weekly_amplitude)
        || !(cfg.noise_scale >= 0.0 && cfg.noise_scale.is_finite())
    {
        return Err(Error::Config("periodic traffic amplitudes or noise scale out of range".into()));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Traffic);
    let profiles: Vec<(f64, f64)> = (0..cfg.n_aps)
        .map(|_| (uniform(&mut rng, 50.0, 500.0), uniform(&mut rng, 0.0, 24.0)))
        .collect();
    let slots = cfg.days * 24 * 60 / SLOT_MINUTES as usize;
    let start = periodic_start();
    let sigma = cfg.noise_scale;
    let mut out = Vec::with_capacity(slots * cfg.n_aps);
    for s in 0..slots {
        let minutes = SLOT_MINUTES * s as i64;
        let hour_of_day = (minutes % (24 * 60)) as f64 / 60.0;
        let hour_of_week = (minutes % (7 * 24 * 60)) as f64 / 60.0;
        let week = 1.0 + cfg.weekly_amplitude * (TAU * hour_of_week / (24.0 * 7.0)).cos();
        for (i, &(base, peak)) in profiles.iter().enumerate() {
            let day = 1.0 + cfg.diurnal_amplitude * (TAU * (hour_of_day - peak) / 24.0).cos();
            let noise = if sigma > 0.0 {
                (sigma * standard_normal(&mut rng) - 0.5 * sigma * sigma).exp()
            } else {
                1.0
            };
            out.push(TrafficRecord {
                ap_id: ap_name(i),
                timestamp: start + Duration::minutes(minutes),
                volume: base * day * week * noise,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::traffic::{build_kv, EmbedConfig};

    #[test]
    fn one_day_one_ap_has_144_records() {
        assert_eq!(gen_periodic_traffic(1, 1, 3).unwrap().len(), 144);
    }

    #[test]
    fn zero_noise_repeats_daily() {
        let cfg = PeriodicTrafficConfig {
            n_aps: 2,
            days: 3,
            noise_scale: 0.0,
            weekly_amplitude: 0.0,
            ..Default::default()
        };
        let recs = gen_periodic_traffic_with(&cfg).unwrap();
        let per_day = 144 * 2;
        for i in 0..per_day {
            assert_eq!(recs[i].volume, recs[i + per_day].volume);
            assert_eq!(recs[i].volume, recs[i + 2 * per_day].volume);
        }
    }

    #[test]
    fn zero_noise_repeats_weekly() {
        let cfg = PeriodicTrafficConfig {
            n_aps: 1,
            days: 14,
            noise_scale: 0.0,
            ..Default::default()
        };
        let recs = gen_periodic_traffic_with(&cfg).unwrap();
        for i in (0..1008).step_by(37) {
            assert_eq!(recs[i].volume, recs[i + 1008].volume);
        }
    }

    fn autocorr(x: &[f64], lag: usize) -> f64 {
        let n = x.len() - lag;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        (0..n).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / (n as f64 * var)
    }

    #[test]
    fn daily_lag_dominates_half_day() {
        let recs = gen_periodic_traffic(1, 14, 5).unwrap();
        let x: Vec<f64> = recs.iter().map(|r| r.volume).collect();
        assert!(autocorr(&x, 144) > autocorr(&x, 72));
    }

    #[test]
    fn generated_data_loads_without_gaps() {
        let recs = gen_periodic_traffic(2, 2, 1).unwrap();
        let kv = build_kv(&recs, &EmbedConfig::default()).unwrap();
        assert_eq!(kv.streams.horizon(), 48);
        assert_eq!(kv.aps, vec!["ap00", "ap01"]);
    }
}
