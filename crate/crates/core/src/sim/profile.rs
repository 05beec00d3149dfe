use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::{CategoricalField, ContinuousField, Normalization, TransactionSchema, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const MCC_CARDINALITY: u32 = 24;
pub const CHANNEL_CARDINALITY: u32 = 3;
pub const DEVICE_CARDINALITY: u32 = 64;
/// Devices `0..LEGIT_DEVICE_POOL` are handed out to accounts.
pub const LEGIT_DEVICE_POOL: u32 = 40;

pub const CHANNEL_POS: u32 = 0;
pub const CHANNEL_ONLINE: u32 = 1;
pub const CHANNEL_ATM: u32 = 2;

pub const AMOUNT: usize = 0;
pub const TIME_DELTA: usize = 1;
pub const LAT: usize = 2;
pub const LON: usize = 3;

pub const MCC: usize = 0;
pub const CHANNEL: usize = 1;
pub const DEVICE: usize = 2;

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Schema used by the simulator: amount, per-account time since previous
/// transaction, latitude/longitude, MCC, channel and device.
pub fn default_schema() -> TransactionSchema {
    let cont = |name: &str, unit: &str, normalization| ContinuousField {
        name: name.into(),
        unit: unit.into(),
        normalization,
    };
    let cat = |name: &str, cardinality, embedding_dim| CategoricalField {
        name: name.into(),
        cardinality,
        embedding_dim,
    };
    TransactionSchema {
        version: SCHEMA_VERSION,
        continuous: vec![
            cont("amount", "currency", Normalization::LogThenZScore),
            cont("time_delta", "seconds", Normalization::LogThenZScore),
            cont("lat", "degrees", Normalization::ZScore),
            cont("lon", "degrees", Normalization::ZScore),
        ],
        categorical: vec![
            cat("mcc", MCC_CARDINALITY, 4),
            cat("channel", CHANNEL_CARDINALITY, 2),
            cat("device", DEVICE_CARDINALITY, 4),
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Great-circle distance in kilometres.
    pub fn distance_km(self, other: GeoPoint) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), other.lat.to_radians());
        let dp = p2 - p1;
        let dl = (other.lon - self.lon).to_radians();
        let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
    }

    /// Point reached travelling `km` along initial bearing `bearing_deg`.
    pub fn destination(self, bearing_deg: f64, km: f64) -> GeoPoint {
        let d = km / EARTH_RADIUS_KM;
        let (p1, l1) = (self.lat.to_radians(), self.lon.to_radians());
        let b = bearing_deg.to_radians();
        let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * b.cos()).asin();
        let l2 = l1 + (b.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
        let mut lon = l2.to_degrees();
        lon = (lon + 540.0).rem_euclid(360.0) - 180.0;
        GeoPoint {
            lat: p2.to_degrees(),
            lon,
        }
    }

    /// Small random displacement with per-axis standard deviation `km`.
    pub fn jitter<R: Rng + ?Sized>(self, km: f64, rng: &mut R) -> GeoPoint {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let dlat = n.sample(rng) * km / 111.0;
        let dlon = n.sample(rng) * km / (111.0 * self.lat.to_radians().cos().max(0.2));
        GeoPoint {
            lat: (self.lat + dlat).clamp(-89.9, 89.9),
            lon: (self.lon + dlon + 540.0).rem_euclid(360.0) - 180.0,
        }
    }
}

/// Spending behaviour of one legitimate account.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegitimateProfile {
    pub account: u32,
    /// Log-normal parameters of the amount.
    pub amount_mu: f64,
    pub amount_sigma: f64,
    /// Mean transactions per day (exponential inter-arrival).
    pub rate_per_day: f64,
    /// Distribution over MCC indices, length [`MCC_CARDINALITY`].
    pub mcc_probs: Vec<f64>,
    pub channel_probs: [f64; 3],
    pub home: GeoPoint,
    pub dispersion_km: f64,
    pub devices: Vec<u32>,
}

impl LegitimateProfile {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.mcc_probs.iter().sum();
        if !(self.amount_sigma > 0.0)
            || !(self.rate_per_day > 0.0)
            || self.mcc_probs.len() != MCC_CARDINALITY as usize
            || (total - 1.0).abs() > 1e-9
            || self.devices.is_empty()
        {
            return Err(Error::Scenario(format!("invalid profile for account {}", self.account)));
        }
        Ok(())
    }

    pub fn mean_interval_secs(&self) -> f64 {
        86_400.0 / self.rate_per_day
    }

    pub fn amount_distribution(&self) -> LogNormal<f64> {
        LogNormal::new(self.amount_mu, self.amount_sigma).expect("validated sigma")
    }

    /// Amount quantiles of the profile's log-normal at `z` standard scores.
    pub fn amount_at_z(&self, z: f64) -> f64 {
        (self.amount_mu + z * self.amount_sigma).exp()
    }

    pub fn sample_mcc<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        sample_index(&self.mcc_probs, rng) as u32
    }

    pub fn sample_channel<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        sample_index(&self.channel_probs, rng) as u32
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws `n` accounts with distinct homes, 4 preferred MCCs each and one or
/// two devices from the shared pool.
pub fn generate_profiles<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<LegitimateProfile>> {
    if n == 0 || n > (LEGIT_DEVICE_POOL / 2) as usize {
        return Err(Error::Scenario(format!(
            "account count must be in 1..={}",
            LEGIT_DEVICE_POOL / 2
        )));
    }
    let device_order = sample(rng, LEGIT_DEVICE_POOL as usize, LEGIT_DEVICE_POOL as usize).into_vec();
    let mut next_device = 0;
    let mut profiles = Vec::with_capacity(n);
    for account in 0..n as u32 {
        let mut mcc_probs = vec![0.0; MCC_CARDINALITY as usize];
        let picks = sample(rng, MCC_CARDINALITY as usize, 4).into_vec();
        let weights: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..2.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&m, w) in picks.iter().zip(&weights) {
            mcc_probs[m] = w / total;
        }
        let n_devices = if rng.random_bool(0.5) { 1 } else { 2 };
        let devices = (0..n_devices)
            .map(|_| {
                let d = device_order[next_device] as u32;
                next_device += 1;
                d
            })
            .collect();
        let online = rng.random_range(0.1..0.4);
        let atm = rng.random_range(0.02..0.1);
        profiles.push(LegitimateProfile {
            account,
            amount_mu: rng.random_range(2.5..4.5),
            amount_sigma: rng.random_range(0.4..0.8),
            rate_per_day: 3.0,
            mcc_probs,
            channel_probs: [1.0 - online - atm, online, atm],
            home: GeoPoint {
                lat: rng.random_range(-40.0..60.0),
                lon: rng.random_range(-170.0..170.0),
            },
            dispersion_km: rng.random_range(5.0..25.0),
            devices,
        });
    }
    Ok(profiles)
}
