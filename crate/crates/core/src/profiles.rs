//! Fleet configuration and hourly load/generation profiles.
//!
//! A scenario on disk is a TOML file plus CSV profile files. The CSV files
//! have a header `hour,agent_<id>,...` and one row per hour:
//!
//! ```text
//! hour,agent_1,agent_2
//! 0,3.5,4.1
//! 1,3.2,3.9
//! ```
//!
//! Values are kWh per hourly step. The TOML keys are documented in the
//! repository README.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::battery::BatterySpec;
use crate::error::{Error, Result};
use crate::pricing::TariffSchedule;

pub const HOURS_PER_DAY: usize = 24;
pub const SCENARIO_FILE: &str = "scenario.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmConfig {
    pub agent_id: u32,
    pub herd_size: u32,
    pub pv_capacity_kw: f64,
    #[serde(default = "yes")]
    pub has_battery: bool,
    #[serde(default = "yes")]
    pub has_re: bool,
    /// Overrides the scenario-wide battery spec for this farm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery: Option<BatterySpec>,
}

fn yes() -> bool {
    true
}

impl FarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.herd_size == 0 {
            return Err(Error::Scenario(format!(
                "agent {}: herd_size must be positive",
                self.agent_id
            )));
        }
        if !(self.pv_capacity_kw >= 0.0 && self.pv_capacity_kw.is_finite()) {
            return Err(Error::Scenario(format!(
                "agent {}: pv_capacity_kw must be finite and non-negative",
                self.agent_id
            )));
        }
        if let Some(b) = &self.battery {
            b.validate()?;
        }
        Ok(())
    }
}

/// Hourly kWh values. Length is a whole number of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() % HOURS_PER_DAY != 0 {
            return Err(Error::Scenario(format!(
                "series length {} is not a positive multiple of {HOURS_PER_DAY}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Scenario(format!("value {v} at hour {i} is not a finite non-negative number")));
        }
        Ok(Self { values })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, hour: usize) -> f64 {
        self.values[hour]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn days(&self) -> usize {
        self.values.len() / HOURS_PER_DAY
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeSeries::new(v)
    }
}

impl From<TimeSeries> for Vec<f64> {
    fn from(t: TimeSeries) -> Self {
        t.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub fleet: Vec<FarmConfig>,
    pub loads: BTreeMap<u32, TimeSeries>,
    pub generation: BTreeMap<u32, TimeSeries>,
    /// Wind generation; agents without an entry have none.
    #[serde(default)]
    pub wind: BTreeMap<u32, TimeSeries>,
    pub horizon_hours: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub tariff: TariffSchedule,
    #[serde(default)]
    pub battery: BatterySpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.fleet.is_empty() {
            return Err(Error::Scenario("fleet is empty".into()));
        }
        if self.horizon_hours == 0 || self.horizon_hours % HOURS_PER_DAY != 0 {
            return Err(Error::Scenario(format!(
                "horizon_hours {} is not a positive multiple of {HOURS_PER_DAY}",
                self.horizon_hours
            )));
        }
        self.tariff.validate()?;
        self.battery.validate()?;
        let mut seen = BTreeSet::new();
        for farm in &self.fleet {
            if !seen.insert(farm.agent_id) {
                return Err(Error::DuplicateAgent(farm.agent_id));
            }
            farm.validate()?;
            for (kind, map) in [("load", &self.loads), ("generation", &self.generation)] {
                let series = map.get(&farm.agent_id).ok_or_else(|| {
                    Error::Scenario(format!("agent {} has no {kind} series", farm.agent_id))
                })?;
                check_len(kind, farm.agent_id, series, self.horizon_hours)?;
            }
            if let Some(w) = self.wind.get(&farm.agent_id) {
                check_len("wind", farm.agent_id, w, self.horizon_hours)?;
            }
        }
        Ok(())
    }

    pub fn agent_ids(&self) -> Vec<u32> {
        self.fleet.iter().map(|f| f.agent_id).collect()
    }

    pub fn farm(&self, agent_id: u32) -> Option<&FarmConfig> {
        self.fleet.iter().find(|f| f.agent_id == agent_id)
    }

    pub fn battery_for(&self, farm: &FarmConfig) -> BatterySpec {
        farm.battery.unwrap_or(self.battery)
    }

    pub fn load(&self, agent_id: u32, hour: usize) -> f64 {
        self.loads[&agent_id].get(hour)
    }

    pub fn pv(&self, agent_id: u32, hour: usize) -> f64 {
        self.generation[&agent_id].get(hour)
    }

    pub fn wind_at(&self, agent_id: u32, hour: usize) -> f64 {
        self.wind.get(&agent_id).map_or(0.0, |w| w.get(hour))
    }

    /// Truncate to the first `hours` hours.
    pub fn truncated(&self, hours: usize) -> Result<Scenario> {
        if hours == 0 || hours > self.horizon_hours || hours % HOURS_PER_DAY != 0 {
            return Err(Error::Scenario(format!(
                "cannot truncate a {}-hour scenario to {hours} hours",
                self.horizon_hours
            )));
        }
        let cut = |m: &BTreeMap<u32, TimeSeries>| {
            m.iter()
                .map(|(k, v)| (*k, TimeSeries { values: v.values[..hours].to_vec() }))
                .collect()
        };
        Ok(Scenario {
            fleet: self.fleet.clone(),
            loads: cut(&self.loads),
            generation: cut(&self.generation),
            wind: cut(&self.wind),
            horizon_hours: hours,
            rng_seed: self.rng_seed,
            tariff: self.tariff.clone(),
            battery: self.battery,
        })
    }

    /// Replace every farm's load with a flat profile of the same daily energy.
    pub fn with_flat_loads(&self) -> Scenario {
        let mut out = self.clone();
        for series in out.loads.values_mut() {
            for day in series.values.chunks_mut(HOURS_PER_DAY) {
                let mean = day.iter().sum::<f64>() / HOURS_PER_DAY as f64;
                day.fill(mean);
            }
        }
        out
    }
}

fn check_len(kind: &str, agent: u32, series: &TimeSeries, expected: usize) -> Result<()> {
    if series.len() != expected {
        return Err(Error::LengthMismatch {
            what: format!("{kind} series of agent {agent}"),
            found: series.len(),
            expected,
        });
    }
    Ok(())
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub horizon_hours: usize,
    pub load_csv: PathBuf,
    pub generation_csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind_csv: Option<PathBuf>,
    #[serde(default)]
    pub tariff: TariffSchedule,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(rename = "farm")]
    pub farms: Vec<FarmConfig>,
}

/// Load a scenario from a TOML file, or from a directory containing `scenario.toml`.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let file = if path.is_dir() {
        path.join(SCENARIO_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let cfg: ScenarioFile = toml::from_str(&text).map_err(|e| Error::Config {
        path: file.clone(),
        message: e.to_string(),
    })?;
    let base = file.parent().unwrap_or(Path::new("."));
    let ids: Vec<u32> = cfg.farms.iter().map(|f| f.agent_id).collect();
    let mut seen = BTreeSet::new();
    for id in &ids {
        if !seen.insert(*id) {
            return Err(Error::DuplicateAgent(*id));
        }
    }

    let loads = read_profile_csv(&base.join(&cfg.load_csv), &ids, cfg.horizon_hours)?;
    let generation = read_profile_csv(&base.join(&cfg.generation_csv), &ids, cfg.horizon_hours)?;
    let wind = match &cfg.wind_csv {
        Some(p) => read_profile_csv(&base.join(p), &ids, cfg.horizon_hours)?,
        None => BTreeMap::new(),
    };
    let scenario = Scenario {
        fleet: cfg.farms,
        loads,
        generation,
        wind,
        horizon_hours: cfg.horizon_hours,
        rng_seed: cfg.seed,
        tariff: cfg.tariff,
        battery: cfg.battery,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Read a profile CSV, returning one series per requested agent.
///
/// Rows are numbered from 1, counting data rows only.
pub fn read_profile_csv(
    path: &Path,
    agents: &[u32],
    horizon: usize,
) -> Result<BTreeMap<u32, TimeSeries>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let profile_err = |row: usize, column: &str, message: String| Error::Profile {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };

    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("hour") {
        return Err(profile_err(0, headers.get(0).unwrap_or(""), "first column must be `hour`".into()));
    }
    let mut columns = BTreeMap::new();
    for (idx, name) in headers.iter().enumerate().skip(1) {
        let id = name
            .strip_prefix("agent_")
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| profile_err(0, name, "expected a column named agent_<id>".into()))?;
        if columns.insert(id, idx).is_some() {
            return Err(profile_err(0, name, "duplicate column".into()));
        }
    }
    for id in agents {
        if !columns.contains_key(id) {
            return Err(profile_err(0, &format!("agent_{id}"), "column missing".into()));
        }
    }

    let mut values: BTreeMap<u32, Vec<f64>> = agents.iter().map(|id| (*id, Vec::with_capacity(horizon))).collect();
    let mut ended = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let hour: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| profile_err(row, "hour", "not an hour index".into()))?;
        if hour != i {
            return Err(profile_err(row, "hour", format!("expected hour {i}, found {hour}")));
        }
        for id in agents {
            let name = format!("agent_{id}");
            let cell = record.get(columns[id]).unwrap_or("");
            let series = values.get_mut(id).expect("agent present");
            // A blank cell ends a short series; the length check below reports it.
            if cell.is_empty() {
                ended.insert(*id);
                continue;
            }
            if ended.contains(id) {
                return Err(profile_err(row, &name, "value after a blank cell".into()));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| profile_err(row, &name, format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(profile_err(row, &name, format!("{v} is not finite")));
            }
            if v < 0.0 {
                return Err(profile_err(row, &name, format!("negative value {v}")));
            }
            series.push(v);
        }
    }

    values
        .into_iter()
        .map(|(id, v)| {
            if v.len() != horizon {
                return Err(Error::LengthMismatch {
                    what: format!("{} column agent_{id}", path.display()),
                    found: v.len(),
                    expected: horizon,
                });
            }
            Ok((id, TimeSeries::new(v)?))
        })
        .collect()
}

pub fn write_profile_csv(path: &Path, series: &BTreeMap<u32, TimeSeries>, horizon: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Scenario(format!("{}: {other:?}", path.display())),
    })?;
    let mut header = vec!["hour".to_string()];
    header.extend(series.keys().map(|id| format!("agent_{id}")));
    w.write_record(&header)?;
    for h in 0..horizon {
        let mut row = vec![h.to_string()];
        row.extend(series.values().map(|s| s.get(h).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write `scenario.toml`, `load.csv`, `generation.csv` (and `wind.csv` if any) into `dir`.
pub fn write_scenario(scenario: &Scenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = ScenarioFile {
        seed: scenario.rng_seed,
        horizon_hours: scenario.horizon_hours,
        load_csv: "load.csv".into(),
        generation_csv: "generation.csv".into(),
        wind_csv: (!scenario.wind.is_empty()).then(|| "wind.csv".into()),
        tariff: scenario.tariff.clone(),
        battery: scenario.battery,
        farms: scenario.fleet.clone(),
    };
    write_profile_csv(&dir.join("load.csv"), &scenario.loads, scenario.horizon_hours)?;
    write_profile_csv(&dir.join("generation.csv"), &scenario.generation, scenario.horizon_hours)?;
    if !scenario.wind.is_empty() {
        write_profile_csv(&dir.join("wind.csv"), &scenario.wind, scenario.horizon_hours)?;
    }
    let text = toml::to_string(&cfg).map_err(|e| Error::Scenario(e.to_string()))?;
    let file = dir.join(SCENARIO_FILE);
    fs::write(&file, text).map_err(|e| Error::io(&file, e))?;
    Ok(())
}

/// Knobs for the synthetic profile generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileShape {
    /// Baseline load as a fraction of the milking-peak height.
    pub base_fraction: f64,
    pub morning_peak_hour: f64,
    pub evening_peak_hour: f64,
    pub peak_width_hours: f64,
    /// Relative amplitude of the multiplicative load noise.
    pub load_noise: f64,
    /// Floor on every hourly load value, kWh.
    pub min_load: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    /// Summer/winter swing of daily PV output around the mean.
    pub seasonal_amplitude: f64,
    /// Minimum daily clear-sky fraction (cloudiest day).
    pub min_clearness: f64,
    /// Annual PV energy over annual load energy is drawn from this band per farm.
    pub pv_to_load_ratio: (f64, f64),
    /// Day of year for day 0 of the series.
    pub start_day_of_year: u32,
}

impl Default for ProfileShape {
    fn default() -> Self {
        Self {
            base_fraction: 0.35,
            morning_peak_hour: 7.5,
            evening_peak_hour: 17.5,
            peak_width_hours: 1.0,
            load_noise: 0.1,
            min_load: 0.0,
            sunrise_hour: 7.0,
            sunset_hour: 19.0,
            seasonal_amplitude: 0.6,
            min_clearness: 0.5,
            pv_to_load_ratio: (0.40, 0.50),
            start_day_of_year: 0,
        }
    }
}

/// Fleet of `n` farms cycling through the five herd-size/PV pairs of the reference community.
pub fn reference_fleet(n: usize) -> Vec<FarmConfig> {
    const SIZES: [(u32, f64); 5] = [(30, 10.0), (40, 10.0), (50, 20.0), (60, 20.0), (70, 20.0)];
    (0..n)
        .map(|i| {
            let (herd, pv) = SIZES[(i / 2) % SIZES.len()];
            FarmConfig {
                agent_id: i as u32 + 1,
                herd_size: herd,
                pv_capacity_kw: pv,
                has_battery: true,
                has_re: true,
                battery: None,
            }
        })
        .collect()
}

fn daylight_fraction(hour: usize, shape: &ProfileShape) -> f64 {
    let mid = hour as f64 + 0.5;
    if mid <= shape.sunrise_hour || mid >= shape.sunset_hour {
        return 0.0;
    }
    let x = (mid - shape.sunrise_hour) / (shape.sunset_hour - shape.sunrise_hour);
    (PI * x).sin().max(0.0)
}

fn milking_shape(hour: usize, shape: &ProfileShape) -> f64 {
    let bump = |centre: f64| {
        let z = (hour as f64 + 0.5 - centre) / shape.peak_width_hours;
        (-0.5 * z * z).exp()
    };
    shape.base_fraction + bump(shape.morning_peak_hour) + bump(shape.evening_peak_hour)
}

/// Deterministic synthetic scenario: twice-daily milking load peaks and a
/// seasonal daylight PV curve. Load is scaled per farm so that annual PV
/// energy is a seeded fraction of annual load inside `shape.pv_to_load_ratio`.
pub fn synthesize_scenario(n_agents: usize, days: usize, seed: u64, shape: &ProfileShape) -> Result<Scenario> {
    if n_agents == 0 {
        return Err(Error::Scenario("n_agents must be at least 1".into()));
    }
    if days == 0 {
        return Err(Error::Scenario("days must be at least 1".into()));
    }
    let (lo, hi) = shape.pv_to_load_ratio;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::Scenario(format!("invalid pv_to_load_ratio ({lo}, {hi})")));
    }
    let horizon = days * HOURS_PER_DAY;
    let fleet = reference_fleet(n_agents);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Shared weather: one clearness value per day for the whole community.
    let clearness: Vec<f64> = (0..days)
        .map(|_| rng.gen_range(shape.min_clearness..=1.0))
        .collect();
    let seasonal: Vec<f64> = (0..days)
        .map(|d| {
            let doy = (shape.start_day_of_year as usize + d) % 365;
            // peaks at the June solstice
            1.0 + shape.seasonal_amplitude * (2.0 * PI * (doy as f64 - 172.0) / 365.0).cos()
        })
        .collect();
    // kWh per hour from 1 kW of PV at the top of the daylight curve.
    const PV_YIELD: f64 = 0.55;

    let mut loads = BTreeMap::new();
    let mut generation = BTreeMap::new();
    for farm in &fleet {
        let pv: Vec<f64> = (0..horizon)
            .map(|h| {
                let d = h / HOURS_PER_DAY;
                farm.pv_capacity_kw * PV_YIELD * daylight_fraction(h % HOURS_PER_DAY, shape) * seasonal[d] * clearness[d]
            })
            .collect();
        let raw: Vec<f64> = (0..horizon)
            .map(|h| {
                let noise = 1.0 + shape.load_noise * rng.gen_range(-1.0..=1.0);
                milking_shape(h % HOURS_PER_DAY, shape) * noise
            })
            .collect();
        let ratio = rng.gen_range(lo..=hi);
        let pv_total: f64 = pv.iter().sum();
        let raw_total: f64 = raw.iter().sum();
        // A horizon with no daylight at all still needs a load; size it from the herd.
        let target_load = if pv_total > 0.0 {
            pv_total / ratio
        } else {
            farm.herd_size as f64 * 1.5 * days as f64
        };
        let scale = target_load / raw_total;
        let load: Vec<f64> = raw.iter().map(|v| (v * scale).max(shape.min_load)).collect();
        loads.insert(farm.agent_id, TimeSeries::new(load)?);
        generation.insert(farm.agent_id, TimeSeries::new(pv)?);
    }

    let scenario = Scenario {
        fleet,
        loads,
        generation,
        wind: BTreeMap::new(),
        horizon_hours: horizon,
        rng_seed: seed,
        tariff: TariffSchedule::default(),
        battery: BatterySpec::default(),
    };
    scenario.validate()?;
    Ok(scenario)
}
