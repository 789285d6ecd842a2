//! Seeded synthetic fleet: rosters, trip index and raw 100 ms trip files.
//!
//! Randomness is split into independent ChaCha streams by purpose. Stream 0
//! draws the rosters and per-driver traits; stream `1 + i` draws every trip of
//! driver `i`. Changing trip counts or durations therefore never changes the
//! roster files, and one driver's trips never shift another's.
//!
//! Speed follows a mean-reverting walk toward `limit + personal bias` with
//! each step's change clipped to ±3.5 mph. A lead vehicle appears and
//! disappears as a two-state Markov chain; while present, headway reverts
//! toward the driver's preferred headway and following distance is headway
//! times current speed. Lane offset is an AR(1) process around the lane
//! center. Values are rounded to the precision written to disk, so the
//! in-memory fleet equals what a reader parses back.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_speed_limit, AgeRange, DriverProfile, Gender, RawTimestep, RoadAttributes, TripMeta, VehicleClass,
    VehicleProfile, STEP_MS,
};
use crate::error::{Error, Result};
use crate::formats::{write_drivers, write_raw_trip, write_trip_index, write_vehicles};

const MAX_SPEED_STEP_MPH: f64 = 3.5;
const MPH_TO_MPS: f64 = 0.447_04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub link_id: String,
    pub way_id: String,
    pub functional_class: String,
    pub road_class: String,
    pub speed_category: String,
    pub speed_limit_mph: u8,
}

impl RoadSegment {
    fn attributes(&self) -> RoadAttributes {
        RoadAttributes {
            link_id: Some(self.link_id.clone()),
            way_id: Some(self.way_id.clone()),
            functional_class: Some(self.functional_class.clone()),
            speed_category: Some(self.speed_category.clone()),
            road_class: Some(self.road_class.clone()),
            speed_limit_mph: Some(self.speed_limit_mph),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Behavior {
    /// Mean and spread of each driver's offset from the posted limit, mph.
    pub speeding_bias_mean: f64,
    pub speeding_bias_sd: f64,
    /// Mean and spread of each driver's preferred time headway, seconds.
    pub headway_mean_s: f64,
    pub headway_sd_s: f64,
}

impl Default for Behavior {
    fn default() -> Self {
        Behavior {
            speeding_bias_mean: 0.0,
            speeding_bias_sd: 3.0,
            headway_mean_s: 2.0,
            headway_sd_s: 0.5,
        }
    }
}

/// Behavior override for drivers matching every listed attribute; an
/// omitted list matches anything. The first matching cohort wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cohort {
    #[serde(default)]
    pub genders: Option<Vec<String>>,
    #[serde(default)]
    pub age_ranges: Option<Vec<String>>,
    #[serde(flatten)]
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dropout {
    pub speed: f64,
    pub lane_offset: f64,
    pub headway: f64,
    pub following_distance: f64,
    /// Probability that a whole segment has no map-matched attributes.
    pub map_match: f64,
}

impl Default for Dropout {
    fn default() -> Self {
        Dropout {
            speed: 0.01,
            lane_offset: 0.15,
            headway: 0.02,
            following_distance: 0.02,
            map_match: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub seed: u64,
    pub n_drivers: usize,
    /// Inclusive range.
    pub trips_per_driver: [usize; 2],
    /// Inclusive range, seconds.
    pub trip_duration_s: [u32; 2],
    /// Inclusive range, seconds spent on one segment before switching.
    pub segment_duration_s: [u32; 2],
    /// Per-step probability that a lead vehicle appears / is lost.
    pub lead_acquire_prob: f64,
    pub lead_lose_prob: f64,
    pub gender_weights: BTreeMap<String, f64>,
    pub age_weights: BTreeMap<String, f64>,
    pub vehicle_class_weights: BTreeMap<String, f64>,
    pub segments: Vec<RoadSegment>,
    #[serde(default)]
    pub default_behavior: Behavior,
    #[serde(default)]
    pub cohorts: Vec<Cohort>,
    #[serde(default)]
    pub dropout: Dropout,
}

impl Default for FleetConfig {
    fn default() -> Self {
        let seg = |link: &str, fc: &str, rc: &str, sc: &str, limit: u8| RoadSegment {
            link_id: link.to_string(),
            way_id: format!("w{link}"),
            functional_class: fc.to_string(),
            road_class: rc.to_string(),
            speed_category: sc.to_string(),
            speed_limit_mph: limit,
        };
        let weights = |pairs: &[(&str, f64)]| {
            pairs
                .iter()
                .map(|(k, w)| (k.to_string(), *w))
                .collect::<BTreeMap<_, _>>()
        };
        FleetConfig {
            seed: 42,
            n_drivers: 24,
            trips_per_driver: [8, 12],
            trip_duration_s: [60, 300],
            segment_duration_s: [15, 90],
            lead_acquire_prob: 0.01,
            lead_lose_prob: 0.005,
            gender_weights: weights(&[("Male", 1.0), ("Female", 1.0)]),
            age_weights: AgeRange::LABELS.iter().map(|l| (l.to_string(), 1.0)).collect(),
            vehicle_class_weights: weights(&[("Car", 4.0), ("SUV-Crossover", 3.0), ("Truck", 1.5), ("Minivan", 1.0)]),
            segments: vec![
                seg("1001", "1", "motorway", "2", 65),
                seg("1002", "1", "motorway", "2", 70),
                seg("1003", "2", "trunk", "3", 55),
                seg("1004", "3", "primary", "4", 45),
                seg("1005", "4", "secondary", "5", 35),
                seg("1006", "5", "residential", "6", 25),
            ],
            default_behavior: Behavior::default(),
            cohorts: Vec::new(),
            dropout: Dropout::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be in [0, 1], got {p}")))
    }
}

fn check_weights(name: &str, w: &BTreeMap<String, f64>) -> Result<()> {
    if w.values().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Config(format!("{name} must be nonnegative")));
    }
    if !w.values().any(|v| *v > 0.0) {
        return Err(Error::Config(format!("{name} needs at least one positive weight")));
    }
    Ok(())
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: &[T; 2]) -> Result<()> {
    if r[0] <= r[1] {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} range {r:?} is reversed")))
    }
}

fn check_behavior(b: &Behavior) -> Result<()> {
    let finite = [
        b.speeding_bias_mean,
        b.speeding_bias_sd,
        b.headway_mean_s,
        b.headway_sd_s,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite || b.speeding_bias_sd < 0.0 || b.headway_sd_s < 0.0 || b.headway_mean_s <= 0.0 {
        return Err(Error::Config(format!("invalid behavior {b:?}")));
    }
    Ok(())
}

impl FleetConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: FleetConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("fleet config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("road segment catalog is empty".into()));
        }
        if self.n_drivers == 0 {
            return Err(Error::Config("n_drivers must be positive".into()));
        }
        for s in &self.segments {
            validate_speed_limit(i64::from(s.speed_limit_mph))?;
        }
        check_range("trips_per_driver", &self.trips_per_driver)?;
        check_range("trip_duration_s", &self.trip_duration_s)?;
        check_range("segment_duration_s", &self.segment_duration_s)?;
        if self.trip_duration_s[0] == 0 || self.segment_duration_s[0] == 0 {
            return Err(Error::Config("durations must be positive".into()));
        }
        check_weights("gender_weights", &self.gender_weights)?;
        check_weights("age_weights", &self.age_weights)?;
        check_weights("vehicle_class_weights", &self.vehicle_class_weights)?;
        for k in self.gender_weights.keys() {
            k.parse::<Gender>()?;
        }
        for k in self.age_weights.keys() {
            k.parse::<AgeRange>()?;
        }
        for k in self.vehicle_class_weights.keys() {
            k.parse::<VehicleClass>()?;
        }
        check_prob("lead_acquire_prob", self.lead_acquire_prob)?;
        check_prob("lead_lose_prob", self.lead_lose_prob)?;
        let d = &self.dropout;
        check_prob("dropout.speed", d.speed)?;
        check_prob("dropout.lane_offset", d.lane_offset)?;
        check_prob("dropout.headway", d.headway)?;
        check_prob("dropout.following_distance", d.following_distance)?;
        check_prob("dropout.map_match", d.map_match)?;
        check_behavior(&self.default_behavior)?;
        for c in &self.cohorts {
            check_behavior(&c.behavior)?;
            for g in c.genders.iter().flatten() {
                g.parse::<Gender>()?;
            }
            for a in c.age_ranges.iter().flatten() {
                a.parse::<AgeRange>()?;
            }
        }
        Ok(())
    }

    fn behavior_for(&self, gender: Gender, age: AgeRange) -> &Behavior {
        self.cohorts
            .iter()
            .find(|c| {
                let g_ok = c
                    .genders
                    .as_ref()
                    .is_none_or(|gs| gs.iter().any(|g| g.parse::<Gender>().ok() == Some(gender)));
                let a_ok = c
                    .age_ranges
                    .as_ref()
                    .is_none_or(|as_| as_.iter().any(|a| a.parse::<AgeRange>().ok() == Some(age)));
                g_ok && a_ok
            })
            .map_or(&self.default_behavior, |c| &c.behavior)
    }
}

/// Per-driver traits drawn alongside the rosters; not written to disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverTraits {
    pub speeding_bias_mph: f64,
    pub headway_pref_s: f64,
}

#[derive(Debug, Clone)]
pub struct Fleet {
    pub drivers: Vec<DriverProfile>,
    pub vehicles: Vec<VehicleProfile>,
    pub traits: Vec<DriverTraits>,
    pub trips: Vec<TripMeta>,
    /// Records of `trips[i]`.
    pub records: Vec<Vec<RawTimestep>>,
}

impl Fleet {
    pub fn step_count(&self) -> usize {
        self.records.iter().map(Vec::len).sum()
    }
}

fn pick<'a, R: Rng>(rng: &mut R, weights: &'a BTreeMap<String, f64>) -> &'a str {
    let total: f64 = weights.values().sum();
    let mut x = rng.random::<f64>() * total;
    let mut last = "";
    for (k, w) in weights {
        if *w <= 0.0 {
            continue;
        }
        last = k;
        if x < *w {
            return k;
        }
        x -= w;
    }
    last
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("validated sd")
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate_fleet(config: &FleetConfig) -> Result<Fleet> {
    config.validate()?;
    let mut roster_rng = stream_rng(config.seed, 0);
    let mut drivers = Vec::with_capacity(config.n_drivers);
    let mut vehicles = Vec::with_capacity(config.n_drivers);
    let mut traits = Vec::with_capacity(config.n_drivers);
    for i in 0..config.n_drivers {
        let gender: Gender = pick(&mut roster_rng, &config.gender_weights).parse()?;
        let age: AgeRange = pick(&mut roster_rng, &config.age_weights).parse()?;
        let class: VehicleClass = pick(&mut roster_rng, &config.vehicle_class_weights).parse()?;
        let b = config.behavior_for(gender, age);
        let bias = normal(b.speeding_bias_mean, b.speeding_bias_sd).sample(&mut roster_rng);
        let headway = normal(b.headway_mean_s, b.headway_sd_s)
            .sample(&mut roster_rng)
            .max(0.3);
        drivers.push(DriverProfile {
            driver_id: format!("D{:04}", i + 1),
            gender,
            age_range: Some(age),
        });
        vehicles.push(VehicleProfile {
            vehicle_id: format!("V{:04}", i + 1),
            vehicle_class: class,
        });
        traits.push(DriverTraits {
            speeding_bias_mph: bias,
            headway_pref_s: headway,
        });
    }

    let mut trips = Vec::new();
    let mut records = Vec::new();
    for (i, (driver, vehicle)) in drivers.iter().zip(&vehicles).enumerate() {
        let mut rng = stream_rng(config.seed, 1 + i as u64);
        let [lo, hi] = config.trips_per_driver;
        let n_trips = rng.random_range(lo..=hi);
        for t in 0..n_trips {
            let meta = TripMeta {
                file_id: format!("{}-{:03}", driver.driver_id, t + 1),
                driver_id: driver.driver_id.clone(),
                vehicle_id: vehicle.vehicle_id.clone(),
            };
            records.push(generate_trip(config, &traits[i], &mut rng));
            trips.push(meta);
        }
    }
    Ok(Fleet {
        drivers,
        vehicles,
        traits,
        trips,
        records,
    })
}

fn generate_trip<R: Rng>(config: &FleetConfig, traits: &DriverTraits, rng: &mut R) -> Vec<RawTimestep> {
    let [dlo, dhi] = config.trip_duration_s;
    let steps = rng.random_range(dlo..=dhi) as usize * 10;
    let [slo, shi] = config.segment_duration_s;
    let drop = &config.dropout;
    let speed_noise = normal(0.0, 0.6);
    let lane_noise = normal(0.0, 0.04);
    let headway_noise = normal(0.0, 0.08);

    let mut out = Vec::with_capacity(steps);
    let mut speed = 0.0f64;
    let mut lane = normal(0.0, 0.2).sample(rng);
    let mut lead: Option<f64> = None;
    let mut road = RoadAttributes::default();
    let mut limit = f64::from(config.segments[0].speed_limit_mph);
    let mut segment_left = 0usize;

    for step in 0..steps {
        if segment_left == 0 {
            let seg = &config.segments[rng.random_range(0..config.segments.len())];
            limit = f64::from(seg.speed_limit_mph);
            road = if rng.random::<f64>() < drop.map_match {
                RoadAttributes::default()
            } else {
                seg.attributes()
            };
            segment_left = rng.random_range(slo..=shi) as usize * 10;
        }
        segment_left -= 1;

        let target = (limit + traits.speeding_bias_mph).max(0.0);
        let dv = (0.01 * (target - speed) + speed_noise.sample(rng)).clamp(-MAX_SPEED_STEP_MPH, MAX_SPEED_STEP_MPH);
        speed = round_to((speed + dv).max(0.0), 2);

        lane = 0.98 * lane + lane_noise.sample(rng);

        lead = match lead {
            Some(_) if rng.random::<f64>() < config.lead_lose_prob => None,
            None if rng.random::<f64>() < config.lead_acquire_prob => {
                Some(traits.headway_pref_s * rng.random_range(0.7..1.6))
            }
            other => other,
        };
        if speed < 1.0 {
            lead = None;
        }
        if let Some(h) = lead.as_mut() {
            *h = (traits.headway_pref_s + 0.97 * (*h - traits.headway_pref_s) + headway_noise.sample(rng)).max(0.05);
        }
        let headway = lead.map(|h| round_to(h, 2));
        let following = headway.map(|h| round_to(h * speed * MPH_TO_MPS, 1));

        let mut keep = |p: f64| rng.random::<f64>() >= p;
        let speed_out = keep(drop.speed).then_some(speed);
        let lane_out = keep(drop.lane_offset).then_some(round_to(lane, 2));
        let headway_out = headway.filter(|_| keep(drop.headway));
        let following_out = following.filter(|_| keep(drop.following_distance));

        out.push(RawTimestep {
            timestamp_ms: step as i64 * STEP_MS,
            speed_mph: speed_out,
            road: road.clone(),
            lane_offset_m: lane_out,
            headway_s: headway_out,
            following_distance_m: following_out,
        });
    }
    out
}

/// Locations of a fleet written by [`write_fleet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FleetPaths {
    pub drivers: PathBuf,
    pub vehicles: PathBuf,
    pub trip_index: PathBuf,
    pub trips_dir: PathBuf,
}

impl FleetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        FleetPaths {
            drivers: dir.join("drivers.csv"),
            vehicles: dir.join("vehicles.csv"),
            trip_index: dir.join("trip_index.csv"),
            trips_dir: dir.join("trips"),
        }
    }
}

pub fn write_fleet(fleet: &Fleet, dir: &Path) -> Result<FleetPaths> {
    let paths = FleetPaths::in_dir(dir);
    fs::create_dir_all(&paths.trips_dir).map_err(|e| Error::io(&paths.trips_dir, e))?;
    write_drivers(&paths.drivers, &fleet.drivers)?;
    write_vehicles(&paths.vehicles, &fleet.vehicles)?;
    write_trip_index(&paths.trip_index, &fleet.trips)?;
    for (meta, recs) in fleet.trips.iter().zip(&fleet.records) {
        write_raw_trip(&paths.trips_dir.join(format!("{}.csv", meta.file_id)), recs)?;
    }
    Ok(paths)
}
