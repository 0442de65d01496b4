//! Battery state-of-charge arithmetic.
//!
//! State of charge is kept as a percentage of usable capacity. Conversions
//! between kWh and percent use `100 / capacity`; there are no losses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatterySpec {
    pub total_capacity_kwh: f64,
    pub max_rate_kwh_per_step: f64,
    pub soc_floor_pct: f64,
    pub soc_ceiling_pct: f64,
    /// Rule-based charging stops here.
    pub charge_target_pct: f64,
    /// Rule-based discharging keeps this much in reserve.
    pub reserve_pct: f64,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            total_capacity_kwh: 13.5,
            max_rate_kwh_per_step: 5.0,
            soc_floor_pct: 0.0,
            soc_ceiling_pct: 100.0,
            charge_target_pct: 90.0,
            reserve_pct: 20.0,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.total_capacity_kwh > 0.0
            && self.total_capacity_kwh.is_finite()
            && self.max_rate_kwh_per_step > 0.0
            && self.max_rate_kwh_per_step.is_finite()
            && 0.0 <= self.soc_floor_pct
            && self.soc_floor_pct < self.soc_ceiling_pct
            && self.soc_ceiling_pct <= 100.0
            && (0.0..=100.0).contains(&self.charge_target_pct)
            && (0.0..=100.0).contains(&self.reserve_pct);
        if ok {
            Ok(())
        } else {
            Err(Error::Scenario(format!("invalid battery spec {self:?}")))
        }
    }

    /// Percent of capacity per kWh.
    pub fn pct_per_kwh(&self) -> f64 {
        100.0 / self.total_capacity_kwh
    }

    pub fn kwh_to_pct(&self, kwh: f64) -> f64 {
        kwh * 100.0 / self.total_capacity_kwh
    }

    pub fn pct_to_kwh(&self, pct: f64) -> f64 {
        pct * self.total_capacity_kwh / 100.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc_pct: f64,
}

impl BatteryState {
    pub fn new(soc_pct: f64) -> Self {
        Self { soc_pct }
    }

    pub fn full() -> Self {
        Self { soc_pct: 100.0 }
    }

    /// Stored energy above the floor.
    pub fn stored_kwh(&self, spec: &BatterySpec) -> f64 {
        spec.pct_to_kwh((self.soc_pct - spec.soc_floor_pct).max(0.0))
    }

    /// Room left below the ceiling.
    pub fn headroom_kwh(&self, spec: &BatterySpec) -> f64 {
        spec.pct_to_kwh((spec.soc_ceiling_pct - self.soc_pct).max(0.0))
    }
}

/// Energy the battery can deliver this step: stored energy capped by the rate limit.
pub fn usable_energy(state: &BatteryState, spec: &BatterySpec) -> f64 {
    state.stored_kwh(spec).min(spec.max_rate_kwh_per_step)
}

/// Charge up to `energy_kwh`. Returns the new state and the energy accepted.
pub fn apply_charge(
    state: BatteryState,
    energy_kwh: f64,
    spec: &BatterySpec,
) -> Result<(BatteryState, f64)> {
    if !(energy_kwh >= 0.0) {
        return Err(Error::NegativeEnergy(energy_kwh));
    }
    let headroom = state.headroom_kwh(spec);
    let accepted = energy_kwh.min(spec.max_rate_kwh_per_step).min(headroom);
    let soc = if accepted == headroom {
        spec.soc_ceiling_pct.max(state.soc_pct)
    } else {
        (state.soc_pct + spec.kwh_to_pct(accepted)).min(spec.soc_ceiling_pct)
    };
    Ok((BatteryState::new(soc), accepted))
}

/// Discharge up to `energy_kwh`. Returns the new state and the energy delivered.
pub fn apply_discharge(
    state: BatteryState,
    energy_kwh: f64,
    spec: &BatterySpec,
) -> Result<(BatteryState, f64)> {
    if !(energy_kwh >= 0.0) {
        return Err(Error::NegativeEnergy(energy_kwh));
    }
    let stored = state.stored_kwh(spec);
    let delivered = energy_kwh.min(usable_energy(&state, spec));
    let soc = if delivered == stored {
        spec.soc_floor_pct.min(state.soc_pct)
    } else {
        (state.soc_pct - spec.kwh_to_pct(delivered)).max(spec.soc_floor_pct)
    };
    Ok((BatteryState::new(soc), delivered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> BatterySpec {
        BatterySpec::default()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn usable_energy_cases() {
        let s = spec();
        // 22.22% of 13.5 kWh is just under 3 kWh
        let e = usable_energy(&BatteryState::new(22.22), &s);
        assert!(close(e, 2.9997, 1e-9));
        assert!(close(usable_energy(&BatteryState::new(300.0 / 13.5), &s), 3.0, 1e-12));
        assert_eq!(usable_energy(&BatteryState::new(100.0), &s), 5.0);
        assert_eq!(usable_energy(&BatteryState::new(0.0), &s), 0.0);
    }

    #[test]
    fn charge_cases() {
        let s = spec();
        let (st, acc) = apply_charge(BatteryState::new(40.0), 5.0, &s).unwrap();
        assert_eq!(acc, 5.0);
        assert!(close(st.soc_pct, 40.0 + 500.0 / 13.5, 1e-12));
        assert!(close(st.soc_pct, 77.037, 1e-3));

        let (st, acc) = apply_charge(BatteryState::new(99.0), 5.0, &s).unwrap();
        assert!(close(acc, 0.135, 1e-12));
        assert_eq!(st.soc_pct, 100.0);

        let (st, acc) = apply_charge(BatteryState::new(50.0), 0.0, &s).unwrap();
        assert_eq!((st.soc_pct, acc), (50.0, 0.0));

        assert!(matches!(
            apply_charge(BatteryState::new(50.0), -1.0, &s),
            Err(Error::NegativeEnergy(_))
        ));
    }

    #[test]
    fn discharge_cases() {
        let s = spec();
        let (st, d) = apply_discharge(BatteryState::new(100.0), 5.0, &s).unwrap();
        assert_eq!(d, 5.0);
        assert!(close(st.soc_pct, 100.0 - 500.0 / 13.5, 1e-12));
        assert!(close(st.soc_pct, 62.963, 1e-3));

        let (st, d) = apply_discharge(BatteryState::new(10.0), 5.0, &s).unwrap();
        assert!(close(d, 1.35, 1e-12));
        assert_eq!(st.soc_pct, 0.0);

        let (st, d) = apply_discharge(BatteryState::new(42.0), 0.0, &s).unwrap();
        assert_eq!((st.soc_pct, d), (42.0, 0.0));

        assert!(apply_discharge(BatteryState::new(50.0), -0.1, &s).is_err());
    }

    #[test]
    fn round_trip_without_binding_bounds() {
        let s = spec();
        let start = BatteryState::new(37.5);
        let (mid, acc) = apply_charge(start, 3.2, &s).unwrap();
        let (end, del) = apply_discharge(mid, 3.2, &s).unwrap();
        assert_eq!(acc, 3.2);
        assert_eq!(del, 3.2);
        assert!(close(end.soc_pct, start.soc_pct, 1e-12));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Charge(f64),
        Discharge(f64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0.0f64..12.0).prop_map(Op::Charge),
            (0.0f64..12.0).prop_map(Op::Discharge),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_walk_stays_in_bounds(start in 0.0f64..=100.0, ops in prop::collection::vec(op(), 1..160)) {
            let s = spec();
            let mut st = BatteryState::new(start);
            for o in ops {
                let before = st.soc_pct;
                let (next, moved) = match o {
                    Op::Charge(e) => apply_charge(st, e, &s).unwrap(),
                    Op::Discharge(e) => apply_discharge(st, e, &s).unwrap(),
                };
                prop_assert!((0.0..=100.0).contains(&next.soc_pct));
                prop_assert!(moved <= s.max_rate_kwh_per_step);
                prop_assert!(moved >= 0.0);
                let implied = s.pct_to_kwh((next.soc_pct - before).abs());
                prop_assert!((implied - moved).abs() < 1e-12, "implied {implied} moved {moved}");
                st = next;
            }
        }
    }
}
