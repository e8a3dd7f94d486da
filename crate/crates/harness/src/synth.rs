//! Synthetic smart-building stream shaped like the ASHRAE energy data:
//! one site of 89 buildings with hourly meter readings and weather.

use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

/// Rules document matching [`write_csv`]'s columns.
pub const RULES_JSON: &str = include_str!("../examples/ashrae/rules.json");

pub const HEADER: [&str; 15] = [
    "row_id",
    "timestamp",
    "building_id",
    "meter_reading",
    "primary_use",
    "square_feet",
    "year_built",
    "floor_count",
    "air_temperature",
    "cloud_coverage",
    "dew_temperature",
    "precip_depth_1_hr",
    "sea_level_pressure",
    "wind_direction",
    "wind_speed",
];

const USES: [(&str, f64); 7] = [
    ("Education", 0.45),
    ("Office", 0.15),
    ("Entertainment/public assembly", 0.12),
    ("Lodging/residential", 0.10),
    ("Public services", 0.08),
    ("Technology/science", 0.06),
    ("Parking", 0.04),
];

const METER_MAX: f64 = 2293.88;

#[derive(Debug, Clone)]
pub struct Building {
    pub id: u32,
    pub primary_use: &'static str,
    pub square_feet: u32,
    pub year_built: u32,
    pub floor_count: u32,
}

#[derive(Debug, Clone, Copy)]
struct Weather {
    air: f64,
    cloud: u32,
    dew: f64,
    precip: i32,
    pressure: f64,
    wind_dir: u32,
    wind_speed: f64,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Building ids 565 to 655, two of them absent.
pub fn buildings(rng: &mut impl Rng) -> Vec<Building> {
    let uses = WeightedIndex::new(USES.iter().map(|u| u.1)).expect("weights");
    (565..=655)
        .filter(|id| *id != 603 && *id != 626)
        .map(|id| Building {
            id,
            primary_use: USES[uses.sample(rng)].0,
            square_feet: rng.gen_range(387f64.ln()..=420_885f64.ln()).exp().round() as u32,
            year_built: rng.gen_range(1903..=2016),
            floor_count: rng.gen_range(1..=14),
        })
        .collect()
}

struct WeatherModel {
    pressure: f64,
    noise: Normal<f64>,
}

impl WeatherModel {
    fn hour(&mut self, rng: &mut impl Rng, hour: u64) -> Weather {
        let day = hour as f64 / 24.0;
        let hod = (hour % 24) as f64;
        let season = (2.0 * std::f64::consts::PI * (day - 110.0) / 366.0).sin();
        let diurnal = (2.0 * std::f64::consts::PI * (hod - 9.0) / 24.0).sin();
        let air = (16.0 + 9.0 * season + 5.0 * diurnal + 1.5 * self.noise.sample(rng)).clamp(1.1, 35.0);
        let dew = (air - 6.0 - 3.0 * self.noise.sample(rng).abs()).clamp(-9.4, 17.8);
        self.pressure = (self.pressure + 0.4 * self.noise.sample(rng)).clamp(1007.8, 1031.7);
        let precip = [-1, 0, 3, 8][WeightedIndex::new([0.15, 0.75, 0.07, 0.03]).expect("weights").sample(rng)];
        Weather {
            air: round1(air),
            cloud: [0, 2, 4, 6][rng.gen_range(0..4)],
            dew: round1(dew),
            precip,
            pressure: round1(self.pressure),
            wind_dir: 10 * rng.gen_range(0..=36),
            wind_speed: round1((3.0 + 2.0 * self.noise.sample(rng)).abs().min(12.9)),
        }
    }
}

fn reading(rng: &mut impl Rng, noise: &Normal<f64>, b: &Building, hour: u64) -> f64 {
    let hod = (hour % 24) as f64;
    let occupancy = if (8.0..19.0).contains(&hod) { 1.6 } else { 1.0 };
    let base = f64::from(b.square_feet) / 600.0 * occupancy;
    round2((base * (0.25 * noise.sample(rng)).exp()).clamp(0.0, METER_MAX))
}

/// Writes `rows` data rows, hour by hour over all buildings, from 2016-01-01 00:00.
pub fn write_csv<W: Write>(out: W, rows: usize, seed: u64) -> csv::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fleet = buildings(&mut rng);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut weather = WeatherModel {
        pressure: 1018.0,
        noise,
    };
    let start = NaiveDate::from_ymd_opt(2016, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    let mut n = 0usize;
    for hour in 0u64.. {
        if n >= rows {
            break;
        }
        let ts = (start + Duration::hours(hour as i64)).format("%Y-%m-%d %H:%M:%S").to_string();
        let x = weather.hour(&mut rng, hour);
        for b in &fleet {
            if n >= rows {
                break;
            }
            let meter = reading(&mut rng, &noise, b, hour);
            w.write_record([
                format!("r{n}"),
                ts.clone(),
                b.id.to_string(),
                meter.to_string(),
                b.primary_use.to_owned(),
                b.square_feet.to_string(),
                b.year_built.to_string(),
                b.floor_count.to_string(),
                x.air.to_string(),
                x.cloud.to_string(),
                x.dew.to_string(),
                x.precip.to_string(),
                x.pressure.to_string(),
                x.wind_dir.to_string(),
                x.wind_speed.to_string(),
            ])?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(())
}

/// [`write_csv`] into memory.
pub fn csv_bytes(rows: usize, seed: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows, seed).expect("writing to memory");
    buf
}
