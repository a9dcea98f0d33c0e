//! Synthetic PV fleet with known mounting configurations.
//!
//! Irradiance comes from a sine-of-elevation clear-sky model attenuated by a
//! regional cloud process shared by every plant. Plane-of-array irradiance is
//! the beam component projected through the incidence angle; there is no
//! diffuse or ground-reflected light. Weather forecasts are the truth smoothed
//! over two hours and perturbed with seeded noise.

use std::f64::consts::PI;

use chrono::{DateTime, Datelike, TimeDelta, TimeZone, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::timeseries::{
    Mounting, PlantRecord, TimeSeries, WeatherForecast, QUARTER_HOUR_SECS, SAMPLES_PER_DAY,
};

pub const MAX_LATITUDE: f64 = 66.5;
/// Clear-sky horizontal irradiance at zenith, W/m².
pub const CLEAR_SKY_PEAK: f64 = 1000.0;
pub const AIR_MASS_EXPONENT: f64 = 1.2;
/// Relative power loss per °C above 25 °C.
pub const TEMPERATURE_COEFFICIENT: f64 = 0.004;
pub const MAX_POWER_FRACTION: f64 = 1.2;
/// Forecast smoothing window: two hours of quarter-hourly samples, centered.
pub const FORECAST_SMOOTHING_SAMPLES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub elevation: f64,
    /// Clockwise from north.
    pub azimuth: f64,
}

/// Declination / hour-angle approximation with solar time taken as UTC.
pub fn solar_position(latitude: f64, ts: DateTime<Utc>) -> Result<SolarPosition> {
    if !latitude.is_finite() || latitude.abs() > MAX_LATITUDE {
        return Err(Error::Unsupported(format!(
            "latitude {latitude} outside ±{MAX_LATITUDE}° (no polar day/night handling)"
        )));
    }
    let doy = ts.ordinal() as f64;
    let hours = ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0;
    Ok(solar_position_at(latitude.to_radians(), doy, hours))
}

fn solar_position_at(lat: f64, doy: f64, hours: f64) -> SolarPosition {
    let decl = (23.45f64).to_radians() * (2.0 * PI * (284.0 + doy) / 365.0).sin();
    let hour_angle = (15.0 * (hours - 12.0)).to_radians();
    let sin_el = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    let elevation = sin_el.clamp(-1.0, 1.0).asin();
    let az_south =
        hour_angle.sin().atan2(hour_angle.cos() * lat.sin() - decl.tan() * lat.cos());
    let azimuth = (az_south.to_degrees() + 180.0).rem_euclid(360.0);
    SolarPosition { elevation: elevation.to_degrees(), azimuth }
}

/// One roof section of a plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoofSection {
    pub inclination: f64,
    pub azimuth: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPlantConfig {
    pub inclination: f64,
    /// Clockwise from north, 180 = south.
    pub azimuth: f64,
    pub p_n: f64,
    pub latitude: f64,
    /// Measurement noise standard deviation as a fraction of `p_n`.
    pub noise_std: f64,
    /// Multi-roof plants; overrides `inclination`/`azimuth` when present.
    #[serde(default)]
    pub mixture: Option<Vec<RoofSection>>,
}

impl SyntheticPlantConfig {
    pub const DEFAULT_LATITUDE: f64 = 49.0;
    pub const DEFAULT_NOISE: f64 = 0.02;

    pub fn single(inclination: f64, azimuth: f64, p_n: f64) -> Self {
        Self {
            inclination,
            azimuth,
            p_n,
            latitude: Self::DEFAULT_LATITUDE,
            noise_std: Self::DEFAULT_NOISE,
            mixture: None,
        }
    }

    pub fn mixture(sections: Vec<RoofSection>, p_n: f64) -> Self {
        let first = sections.first().copied().unwrap_or(RoofSection {
            inclination: 0.0,
            azimuth: 180.0,
            fraction: 1.0,
        });
        Self {
            inclination: first.inclination,
            azimuth: first.azimuth,
            p_n,
            latitude: Self::DEFAULT_LATITUDE,
            noise_std: Self::DEFAULT_NOISE,
            mixture: Some(sections),
        }
    }

    pub fn sections(&self) -> Vec<RoofSection> {
        match &self.mixture {
            Some(m) => m.clone(),
            None => vec![RoofSection {
                inclination: self.inclination,
                azimuth: self.azimuth,
                fraction: 1.0,
            }],
        }
    }

    /// Single-roof plants report their orientation; mixtures do not have one.
    pub fn mounting(&self) -> Option<Mounting> {
        self.mixture
            .is_none()
            .then_some(Mounting { inclination: self.inclination, azimuth: self.azimuth })
    }

    pub fn validate(&self) -> Result<()> {
        for s in self.sections() {
            Mounting::new(s.inclination, s.azimuth)?;
            if !(0.0..=1.0).contains(&s.fraction) {
                return Err(Error::InvalidConfig(format!("roof fraction {} not in [0, 1]", s.fraction)));
            }
        }
        if let Some(m) = &self.mixture {
            let total: f64 = m.iter().map(|s| s.fraction).sum();
            if m.is_empty() || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("mixture fractions sum to {total}, not 1")));
            }
        }
        if !(self.p_n > 0.0 && self.p_n.is_finite()) {
            return Err(Error::InvalidPlant(format!("p_n must be > 0, got {}", self.p_n)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if self.latitude.abs() > MAX_LATITUDE {
            return Err(Error::Unsupported(format!("latitude {} is polar", self.latitude)));
        }
        Ok(())
    }
}

/// Parameters of the shared weather processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherConfig {
    pub cloud_mean: f64,
    pub cloud_phi: f64,
    pub cloud_sigma: f64,
    /// Relative radiation-forecast error: AR(1) coefficient and innovation std.
    pub forecast_error_phi: f64,
    pub forecast_error_sigma: f64,
    /// Temperature forecast noise, °C.
    pub temperature_forecast_std: f64,
}

impl Default for WeatherConfig {
    fn default() -> Self {
        Self {
            cloud_mean: 0.7,
            cloud_phi: 0.99,
            cloud_sigma: 0.035,
            forecast_error_phi: 0.97,
            forecast_error_sigma: 0.18,
            temperature_forecast_std: 0.5,
        }
    }
}

impl WeatherConfig {
    /// Forecasts equal to the smoothed truth.
    pub fn perfect_forecast() -> Self {
        Self { forecast_error_sigma: 0.0, temperature_forecast_std: 0.0, ..Self::default() }
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shared regional weather over the generation horizon.
struct RegionalWeather {
    cloud: Vec<f64>,
    temperature: Vec<f64>,
    forecast_error: Vec<f64>,
    temperature_error: Vec<f64>,
}

fn regional_weather(start: DateTime<Utc>, n: usize, cfg: &WeatherConfig, seed: u64) -> RegionalWeather {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut cloud = Vec::with_capacity(n);
    let mut c = cfg.cloud_mean;
    let mut temperature = Vec::with_capacity(n);
    let mut t_noise = 0.0;
    let mut forecast_error = Vec::with_capacity(n);
    let mut e = 0.0;
    let mut temperature_error = Vec::with_capacity(n);
    for k in 0..n {
        c = (cfg.cloud_mean + cfg.cloud_phi * (c - cfg.cloud_mean)
            + cfg.cloud_sigma * std_normal.sample(&mut rng))
        .clamp(0.1, 1.0);
        cloud.push(c);

        let ts = start + TimeDelta::seconds(QUARTER_HOUR_SECS * k as i64);
        let doy = ts.ordinal() as f64;
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        t_noise = 0.995 * t_noise + 0.1 * std_normal.sample(&mut rng);
        let seasonal = 9.5 - 9.5 * (2.0 * PI * (doy - 20.0) / 365.25).cos();
        let diurnal = 5.0 * (2.0 * PI * (hour - 15.0) / 24.0).cos();
        temperature.push(seasonal + diurnal + t_noise);

        e = cfg.forecast_error_phi * e + cfg.forecast_error_sigma * std_normal.sample(&mut rng);
        forecast_error.push(e);
        temperature_error.push(cfg.temperature_forecast_std * std_normal.sample(&mut rng));
    }
    RegionalWeather { cloud, temperature, forecast_error, temperature_error }
}

fn centered_moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = v.len();
    (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(half), (k + half + 1).min(n));
            v[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

/// Fraction of peak irradiance reaching a tilted plane under clear sky.
fn plane_of_array_fraction(sun: SolarPosition, section: &RoofSection) -> f64 {
    if sun.elevation <= 0.0 {
        return 0.0;
    }
    let (el, az) = (sun.elevation.to_radians(), sun.azimuth.to_radians());
    let (tilt, paz) = (section.inclination.to_radians(), section.azimuth.to_radians());
    let cos_incidence = el.sin() * tilt.cos() + el.cos() * tilt.sin() * (az - paz).cos();
    // beam normal irradiance = horizontal clear-sky / sin(elevation)
    let beam = el.sin().powf(AIR_MASS_EXPONENT - 1.0);
    beam * cos_incidence.max(0.0)
}

/// Generate quarter-hourly records for every config over `days` days.
pub fn generate_fleet(
    configs: &[SyntheticPlantConfig],
    start: DateTime<Utc>,
    days: usize,
    seed: u64,
) -> Result<Vec<PlantRecord>> {
    generate_fleet_with(configs, &WeatherConfig::default(), start, days, seed, Execution::default())
}

pub fn generate_fleet_with(
    configs: &[SyntheticPlantConfig],
    weather: &WeatherConfig,
    start: DateTime<Utc>,
    days: usize,
    seed: u64,
    execution: Execution,
) -> Result<Vec<PlantRecord>> {
    if days == 0 {
        return Err(Error::InvalidConfig("days must be >= 1".into()));
    }
    configs.iter().try_for_each(SyntheticPlantConfig::validate)?;
    let n = days * SAMPLES_PER_DAY;
    let regional = regional_weather(start, n, weather, seed);
    let results = execution.map_range(configs.len(), |i| {
        generate_plant(&configs[i], i, &regional, start, n, seed)
    });
    results.into_iter().collect()
}

fn generate_plant(
    cfg: &SyntheticPlantConfig,
    index: usize,
    regional: &RegionalWeather,
    start: DateTime<Utc>,
    n: usize,
    seed: u64,
) -> Result<PlantRecord> {
    let lat = cfg.latitude.to_radians();
    let sections = cfg.sections();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64 + 1));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut ghi = Vec::with_capacity(n);
    let mut daylight = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for k in 0..n {
        // geometry evaluated at the interval midpoint
        let ts = start + TimeDelta::seconds(QUARTER_HOUR_SECS * k as i64 + QUARTER_HOUR_SECS / 2);
        let hours = ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0;
        let sun = solar_position_at(lat, ts.ordinal() as f64, hours);
        let up = sun.elevation > 0.0;
        let cloud = regional.cloud[k];
        let clear = if up {
            CLEAR_SKY_PEAK * sun.elevation.to_radians().sin().powf(AIR_MASS_EXPONENT)
        } else {
            0.0
        };
        ghi.push(clear * cloud);
        daylight.push(up);

        let value = if up {
            let poa: f64 =
                sections.iter().map(|s| s.fraction * plane_of_array_fraction(sun, s)).sum();
            let derate = 1.0 - TEMPERATURE_COEFFICIENT * (regional.temperature[k] - 25.0).max(0.0);
            let mut p = cfg.p_n * poa * cloud * derate;
            if cfg.noise_std > 0.0 {
                p += cfg.noise_std * cfg.p_n * noise.sample(&mut rng);
            }
            p.clamp(0.0, MAX_POWER_FRACTION * cfg.p_n)
        } else {
            0.0
        };
        power.push(value);
    }

    let smoothed_g = centered_moving_average(&ghi, FORECAST_SMOOTHING_SAMPLES);
    let g_hat: Vec<f64> = (0..n)
        .map(|k| {
            if daylight[k] {
                (smoothed_g[k] * (1.0 + regional.forecast_error[k])).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let smoothed_t = centered_moving_average(&regional.temperature, FORECAST_SMOOTHING_SAMPLES);
    let t_hat: Vec<f64> =
        smoothed_t.iter().zip(&regional.temperature_error).map(|(t, e)| t + e).collect();

    PlantRecord::new(
        format!("pv{:02}", index + 1),
        cfg.p_n,
        cfg.mounting(),
        TimeSeries::quarter_hourly(start, power),
        WeatherForecast::new(
            TimeSeries::quarter_hourly(start, g_hat),
            TimeSeries::quarter_hourly(start, t_hat),
        )?,
    )
}

/// Multiplicative production dip over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub factor: f64,
}

/// Scale power inside each window; weather is untouched.
pub fn inject_dips(rec: &PlantRecord, windows: &[DipWindow]) -> Result<PlantRecord> {
    let mut sorted = windows.to_vec();
    sorted.sort_by_key(|w| w.start);
    for w in &sorted {
        if !(0.0..1.0).contains(&w.factor) {
            return Err(Error::InvalidConfig(format!("dip factor {} not in [0, 1)", w.factor)));
        }
        if w.end <= w.start {
            return Err(Error::InvalidConfig(format!("empty dip window {} .. {}", w.start, w.end)));
        }
    }
    if let Some(p) = sorted.windows(2).find(|p| p[1].start < p[0].end) {
        return Err(Error::InvalidConfig(format!(
            "overlapping dip windows starting {} and {}",
            p[0].start, p[1].start
        )));
    }
    let mut values = rec.power.values().to_vec();
    for w in &sorted {
        let a = rec.power.index_of(w.start)?;
        let b = rec.power.index_of(w.end)?;
        values[a..b].iter_mut().for_each(|v| *v *= w.factor);
    }
    let mut out = rec.clone();
    out.power = rec.power.with_values(values);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetPlant {
    pub id: String,
    pub config: SyntheticPlantConfig,
    #[serde(default)]
    pub dips: Vec<DipWindow>,
}

/// Everything needed to regenerate a fleet bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSpec {
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub days: usize,
    pub weather: WeatherConfig,
    pub plants: Vec<FleetPlant>,
}

fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).single().expect("valid date")
}

impl FleetSpec {
    /// Eleven plants at 49° N over 2018–2020. Ten single orientations between
    /// south-east and south-west, a two-roof plant (ESE and WSW), and outages
    /// on pv07 during 2020.
    pub fn default_fleet(seed: u64) -> Self {
        let single = |i: f64, a: f64, p: f64| SyntheticPlantConfig::single(i, a, p);
        let mut configs = vec![
            single(30.0, 180.0, 10.0),
            single(15.0, 150.0, 7.5),
            single(45.0, 210.0, 12.0),
            single(30.0, 135.0, 8.0),
            single(30.0, 225.0, 9.0),
            single(10.0, 180.0, 15.0),
            single(35.0, 190.0, 6.0),
            single(50.0, 160.0, 5.0),
            single(20.0, 240.0, 11.0),
            single(40.0, 140.0, 20.0),
        ];
        configs.push(SyntheticPlantConfig::mixture(
            vec![
                RoofSection { inclination: 30.0, azimuth: 110.0, fraction: 0.6 },
                RoofSection { inclination: 30.0, azimuth: 250.0, fraction: 0.4 },
            ],
            10.0,
        ));
        let dips = vec![
            DipWindow { start: utc(2020, 5, 10), end: utc(2020, 5, 24), factor: 0.0 },
            DipWindow { start: utc(2020, 9, 5), end: utc(2020, 9, 12), factor: 0.5 },
            DipWindow { start: utc(2020, 9, 20), end: utc(2020, 9, 25), factor: 0.3 },
            DipWindow { start: utc(2020, 10, 8), end: utc(2020, 10, 15), factor: 0.6 },
        ];
        let plants = configs
            .into_iter()
            .enumerate()
            .map(|(i, config)| FleetPlant {
                id: format!("pv{:02}", i + 1),
                config,
                dips: if i == 6 { dips.clone() } else { Vec::new() },
            })
            .collect();
        Self { seed, start: utc(2018, 1, 1), days: 1096, weather: WeatherConfig::default(), plants }
    }

    pub fn with_days(mut self, days: usize) -> Self {
        self.days = days;
        self
    }

    pub fn generate(&self, execution: Execution) -> Result<Vec<PlantRecord>> {
        let configs: Vec<_> = self.plants.iter().map(|p| p.config.clone()).collect();
        let records =
            generate_fleet_with(&configs, &self.weather, self.start, self.days, self.seed, execution)?;
        let end = self.start + TimeDelta::days(self.days as i64);
        records
            .into_iter()
            .zip(&self.plants)
            .map(|(mut rec, p)| {
                rec.id = p.id.clone();
                let dips: Vec<DipWindow> = p
                    .dips
                    .iter()
                    .filter(|d| d.start < end && d.end > self.start)
                    .map(|d| DipWindow { start: d.start.max(self.start), end: d.end.min(end), ..*d })
                    .collect();
                if dips.is_empty() {
                    Ok(rec)
                } else {
                    inject_dips(&rec, &dips)
                }
            })
            .collect()
    }
}
