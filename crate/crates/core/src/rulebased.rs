//! Rule-based baseline policy: hourly battery and trade decisions per farm.
//!
//! Surplus generation first charges the battery (up to the charge target),
//! and whatever the battery cannot take is offered for sale. A deficit is
//! either bought, bought while charging (cheap night hours or a nearly empty
//! battery), or covered by the battery with the remainder bought.

use serde::{Deserialize, Serialize};

use crate::battery::{apply_charge, apply_discharge, usable_energy, BatterySpec, BatteryState};
use crate::error::Result;
use crate::pricing::Period;
use crate::profiles::FarmConfig;

/// How to resolve the overlap of the two night-time deficit branches when
/// the battery sits between the reserve and 50%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NightPrecedence {
    /// Buy and charge whenever SoC < 50% at night.
    #[default]
    ChargeFirst,
    /// Buy without charging whenever SoC is above the reserve at night.
    BuyOnlyFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleConfig {
    pub night_precedence: NightPrecedence,
    /// Treat the near-peak window as a night hour for charging decisions.
    pub priming_on: bool,
    /// SoC below which night charging is worthwhile.
    pub night_charge_below_pct: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            night_precedence: NightPrecedence::ChargeFirst,
            priming_on: true,
            night_charge_below_pct: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RuleDecision {
    pub charge: bool,
    pub discharge: bool,
    pub buy_kwh: f64,
    pub sell_kwh: f64,
    pub charge_kwh: f64,
    pub discharge_kwh: f64,
}

/// E_tot = E_pv + E_w + B_uc.
pub fn total_generation(e_pv: f64, e_w: f64, b_uc: f64) -> f64 {
    e_pv + e_w + b_uc
}

/// Battery charge rate for this step: the surplus when it is below the rate
/// limit on a farm with renewables, the full rate otherwise.
pub fn charging_capacity(has_re: bool, surplus: f64, spec: &BatterySpec) -> f64 {
    if has_re && surplus < spec.max_rate_kwh_per_step {
        surplus.max(0.0)
    } else {
        spec.max_rate_kwh_per_step
    }
}

fn headroom_to_target(battery: &BatteryState, spec: &BatterySpec) -> f64 {
    spec.pct_to_kwh((spec.charge_target_pct.min(spec.soc_ceiling_pct) - battery.soc_pct).max(0.0))
}

pub fn decide(
    farm: &FarmConfig,
    e_pv: f64,
    e_w: f64,
    load: f64,
    battery: &BatteryState,
    period: Period,
    spec: &BatterySpec,
    cfg: &RuleConfig,
) -> RuleDecision {
    let generation = if farm.has_re { e_pv + e_w } else { 0.0 };
    let mut d = RuleDecision::default();

    if !farm.has_battery {
        if !farm.has_re {
            d.buy_kwh = load;
        } else if generation > load {
            d.sell_kwh = generation - load;
        } else {
            d.buy_kwh = load - generation;
        }
        return d;
    }

    let soc = battery.soc_pct;
    if generation > load {
        let surplus = generation - load;
        if soc < spec.charge_target_pct {
            let cap = charging_capacity(farm.has_re, surplus, spec);
            let charge = cap.min(headroom_to_target(battery, spec));
            d.charge = charge > 0.0;
            d.charge_kwh = charge;
            d.sell_kwh = surplus - charge;
        } else {
            d.sell_kwh = surplus;
        }
        return d;
    }

    let deficit = load - generation;
    if deficit == 0.0 {
        return d;
    }
    let night = match period {
        Period::Night => true,
        Period::NearPeak => cfg.priming_on,
        Period::Day | Period::Peak => false,
    };
    let reserve = spec.reserve_pct;
    let charge_now = if night {
        match cfg.night_precedence {
            NightPrecedence::ChargeFirst => soc < cfg.night_charge_below_pct || soc <= reserve,
            NightPrecedence::BuyOnlyFirst => soc <= reserve,
        }
    } else {
        soc <= reserve && period != Period::Peak
    };

    if charge_now {
        let charge = spec.max_rate_kwh_per_step.min(headroom_to_target(battery, spec));
        d.charge = charge > 0.0;
        d.charge_kwh = charge;
        d.buy_kwh = deficit + charge;
    } else if !night && soc > reserve {
        let from_battery = usable_energy(battery, spec).min(deficit);
        d.discharge = from_battery > 0.0;
        d.discharge_kwh = from_battery;
        d.buy_kwh = deficit - from_battery;
    } else {
        d.buy_kwh = deficit;
    }
    d
}

/// Decide and apply the battery flows. Returns the decision and the new battery state.
pub fn step(
    farm: &FarmConfig,
    e_pv: f64,
    e_w: f64,
    load: f64,
    battery: BatteryState,
    period: Period,
    spec: &BatterySpec,
    cfg: &RuleConfig,
) -> Result<(RuleDecision, BatteryState)> {
    let mut d = decide(farm, e_pv, e_w, load, &battery, period, spec, cfg);
    let mut next = battery;
    if d.charge_kwh > 0.0 {
        let (b, accepted) = apply_charge(battery, d.charge_kwh, spec)?;
        debug_assert!((accepted - d.charge_kwh).abs() < 1e-12);
        d.charge_kwh = accepted;
        next = b;
    }
    if d.discharge_kwh > 0.0 {
        let (b, delivered) = apply_discharge(battery, d.discharge_kwh, spec)?;
        debug_assert!((delivered - d.discharge_kwh).abs() < 1e-12);
        d.discharge_kwh = delivered;
        next = b;
    }
    Ok((d, next))
}
