//! Time-of-use tariff schedule and the supply/demand-ratio price advisor.
//!
//! The advisor turns the community's total selling power (TSP) and total
//! buying power (TBP) for one hour into an internal selling price (ISP) and
//! internal buying price (IBP). Both are bounded by the feed-in tariff below
//! and the grid purchase price above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open hour window `[start, end)` within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourRange {
    pub start: u32,
    pub end: u32,
}

impl HourRange {
    pub const fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, hour: u32) -> bool {
        self.start <= hour && hour < self.end
    }

    fn overlaps(&self, other: &HourRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Tariff period of an hour.
///
/// `NearPeak` is billed at the night price. It only exists so that reward
/// shaping and the rule-based policy can prime batteries before the peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Period {
    Night,
    NearPeak,
    Day,
    Peak,
}

impl Period {
    pub const ALL: [Period; 4] = [Period::Night, Period::NearPeak, Period::Day, Period::Peak];

    /// Night-priced for grid billing.
    pub fn is_night_priced(self) -> bool {
        matches!(self, Period::Night | Period::NearPeak)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Period::Night => "night",
            Period::NearPeak => "near_peak",
            Period::Day => "day",
            Period::Peak => "peak",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TariffSchedule {
    pub peak_price: f64,
    pub day_price: f64,
    pub night_price: f64,
    pub fit_price: f64,
    pub peak_hours: HourRange,
    /// Pre-peak priming window, billed at the night price.
    pub near_peak_hours: HourRange,
    pub night_hours: Vec<HourRange>,
}

impl Default for TariffSchedule {
    fn default() -> Self {
        Self {
            peak_price: 0.66,
            day_price: 0.44,
            night_price: 0.22,
            fit_price: 0.135,
            peak_hours: HourRange::new(17, 19),
            near_peak_hours: HourRange::new(15, 17),
            night_hours: vec![HourRange::new(23, 24), HourRange::new(0, 8)],
        }
    }
}

impl TariffSchedule {
    pub fn validate(&self) -> Result<()> {
        let prices = [self.fit_price, self.night_price, self.day_price, self.peak_price];
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Tariff("prices must be finite".into()));
        }
        if !(self.fit_price > 0.0
            && self.fit_price < self.night_price
            && self.night_price < self.day_price
            && self.day_price < self.peak_price)
        {
            return Err(Error::Tariff(format!(
                "expected 0 < fit ({}) < night ({}) < day ({}) < peak ({})",
                self.fit_price, self.night_price, self.day_price, self.peak_price
            )));
        }
        let mut ranges = vec![("peak", self.peak_hours), ("near_peak", self.near_peak_hours)];
        ranges.extend(self.night_hours.iter().map(|r| ("night", *r)));
        for (name, r) in &ranges {
            if r.start >= r.end || r.end > 24 {
                return Err(Error::Tariff(format!(
                    "{name} window [{}, {}) is not inside [0, 24)",
                    r.start, r.end
                )));
            }
        }
        for (i, (a_name, a)) in ranges.iter().enumerate() {
            for (b_name, b) in &ranges[i + 1..] {
                if a.overlaps(b) {
                    return Err(Error::Tariff(format!(
                        "{a_name} window [{}, {}) overlaps {b_name} window [{}, {})",
                        a.start, a.end, b.start, b.end
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn period(&self, hour: u32) -> Result<Period> {
        if hour >= 24 {
            return Err(Error::HourOutOfRange(hour));
        }
        Ok(if self.peak_hours.contains(hour) {
            Period::Peak
        } else if self.near_peak_hours.contains(hour) {
            Period::NearPeak
        } else if self.night_hours.iter().any(|r| r.contains(hour)) {
            Period::Night
        } else {
            Period::Day
        })
    }

    /// Grid purchase price λ_buy for a period.
    pub fn buy_price(&self, period: Period) -> f64 {
        match period {
            Period::Peak => self.peak_price,
            Period::Day => self.day_price,
            Period::Night | Period::NearPeak => self.night_price,
        }
    }

    /// Grid export price λ_sell (feed-in tariff).
    pub fn sell_price(&self) -> f64 {
        self.fit_price
    }

    pub fn buy_price_at(&self, hour: u32) -> Result<f64> {
        Ok(self.buy_price(self.period(hour)?))
    }
}

/// Tariff period of `hour` under the default schedule.
pub fn tariff_period(hour: u32) -> Result<Period> {
    TariffSchedule::default().period(hour)
}

/// Supply/demand ratio of one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Sdr {
    Ratio(f64),
    /// Sellers but no buyers.
    Surplus,
    /// Neither sellers nor buyers.
    Idle,
}

impl Sdr {
    /// `true` when the ratio lies strictly inside (0, 1).
    pub fn is_interior(self) -> bool {
        matches!(self, Sdr::Ratio(r) if r > 0.0 && r < 1.0)
    }
}

pub fn compute_sdr(tsp: f64, tbp: f64) -> Result<Sdr> {
    if !(tsp >= 0.0) {
        return Err(Error::NegativeEnergy(tsp));
    }
    if !(tbp >= 0.0) {
        return Err(Error::NegativeEnergy(tbp));
    }
    Ok(if tbp > 0.0 {
        Sdr::Ratio(tsp / tbp)
    } else if tsp > 0.0 {
        Sdr::Surplus
    } else {
        Sdr::Idle
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceQuote {
    pub isp: f64,
    pub ibp: f64,
    pub sdr: Sdr,
    /// `false` when the hour has no internal market (idle community).
    pub internal_market: bool,
}

impl PriceQuote {
    /// Quote that simply passes grid prices through.
    pub fn grid_pass_through(lambda_buy: f64, lambda_sell: f64) -> Self {
        Self {
            isp: lambda_sell,
            ibp: lambda_buy,
            sdr: Sdr::Idle,
            internal_market: false,
        }
    }
}

pub fn internal_prices(sdr: Sdr, lambda_buy: f64, lambda_sell: f64) -> Result<PriceQuote> {
    if !(lambda_sell > 0.0 && lambda_sell < lambda_buy && lambda_buy.is_finite()) {
        return Err(Error::Tariff(format!(
            "expected 0 < lambda_sell ({lambda_sell}) < lambda_buy ({lambda_buy})"
        )));
    }
    let quote = match sdr {
        Sdr::Idle => PriceQuote::grid_pass_through(lambda_buy, lambda_sell),
        Sdr::Surplus => PriceQuote {
            isp: lambda_sell,
            ibp: lambda_buy,
            sdr,
            internal_market: true,
        },
        Sdr::Ratio(r) if !(r >= 0.0) || !r.is_finite() => {
            return Err(Error::Tariff(format!("invalid supply/demand ratio {r}")));
        }
        Sdr::Ratio(r) if r > 1.0 => PriceQuote {
            isp: lambda_sell,
            ibp: lambda_buy,
            sdr,
            internal_market: true,
        },
        Sdr::Ratio(r) => {
            let isp = lambda_sell * lambda_buy / ((lambda_buy - lambda_sell) * r + lambda_sell);
            // Rounding can push the quotient a few ulps past the tariff bounds.
            let isp = isp.clamp(lambda_sell, lambda_buy);
            let ibp = (isp * r + lambda_buy * (1.0 - r)).clamp(isp, lambda_buy);
            PriceQuote {
                isp,
                ibp,
                sdr,
                internal_market: true,
            }
        }
    };
    Ok(quote)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SELL: f64 = 0.135;
    const PEAK: f64 = 0.66;

    #[test]
    fn periods_follow_default_windows() {
        assert_eq!(tariff_period(18).unwrap(), Period::Peak);
        assert_eq!(tariff_period(16).unwrap(), Period::NearPeak);
        assert_eq!(tariff_period(12).unwrap(), Period::Day);
        let s = TariffSchedule::default();
        assert_eq!(s.buy_price_at(18).unwrap(), 0.66);
        assert_eq!(s.buy_price_at(16).unwrap(), 0.22);
        assert_eq!(s.buy_price_at(12).unwrap(), 0.44);
    }

    #[test]
    fn period_table_is_total_and_matches_boundaries() {
        let expected = |h: u32| {
            if (17..19).contains(&h) {
                Period::Peak
            } else if (15..17).contains(&h) {
                Period::NearPeak
            } else if h >= 23 || h < 8 {
                Period::Night
            } else {
                Period::Day
            }
        };
        for h in 0..24 {
            assert_eq!(tariff_period(h).unwrap(), expected(h), "hour {h}");
        }
        assert!(matches!(tariff_period(24), Err(Error::HourOutOfRange(24))));
    }

    #[test]
    fn schedule_validation() {
        TariffSchedule::default().validate().unwrap();
        let mut bad = TariffSchedule::default();
        bad.fit_price = 0.3;
        assert!(bad.validate().is_err());
        let mut overlap = TariffSchedule::default();
        overlap.peak_hours = HourRange::new(16, 19);
        assert!(overlap.validate().is_err());
        let mut outside = TariffSchedule::default();
        outside.night_hours = vec![HourRange::new(22, 25)];
        assert!(outside.validate().is_err());
    }

    #[test]
    fn sdr_cases() {
        assert_eq!(compute_sdr(5.0, 10.0).unwrap(), Sdr::Ratio(0.5));
        assert_eq!(compute_sdr(0.0, 10.0).unwrap(), Sdr::Ratio(0.0));
        assert_eq!(compute_sdr(10.0, 0.0).unwrap(), Sdr::Surplus);
        assert_eq!(compute_sdr(0.0, 0.0).unwrap(), Sdr::Idle);
        assert!(compute_sdr(-1.0, 1.0).is_err());
        assert!(compute_sdr(1.0, -1.0).is_err());
    }

    #[test]
    fn surplus_matches_limit_of_large_ratio() {
        // As TBP -> 0 the ratio grows without bound and the formulas hit the SDR > 1 branch.
        let limit = internal_prices(compute_sdr(10.0, 1e-12).unwrap(), PEAK, SELL).unwrap();
        let surplus = internal_prices(Sdr::Surplus, PEAK, SELL).unwrap();
        assert_eq!(limit.isp, surplus.isp);
        assert_eq!(limit.ibp, surplus.ibp);
    }

    #[test]
    fn quotes_at_reference_points() {
        let q0 = internal_prices(Sdr::Ratio(0.0), PEAK, SELL).unwrap();
        assert!((q0.isp - 0.66).abs() < 1e-12);
        assert!((q0.ibp - 0.66).abs() < 1e-12);

        let q1 = internal_prices(Sdr::Ratio(1.0), PEAK, SELL).unwrap();
        assert!((q1.isp - 0.135).abs() < 1e-12);
        assert!((q1.ibp - 0.135).abs() < 1e-12);

        // 0.0891 / 0.3975 and 0.5 * isp + 0.33
        let q = internal_prices(Sdr::Ratio(0.5), PEAK, SELL).unwrap();
        assert!((q.isp - 0.224_150_943_396_226_4).abs() < 1e-12);
        assert!((q.ibp - 0.442_075_471_698_113_2).abs() < 1e-12);
    }

    #[test]
    fn idle_hour_passes_grid_prices_through() {
        let q = internal_prices(Sdr::Idle, PEAK, SELL).unwrap();
        assert_eq!((q.isp, q.ibp), (SELL, PEAK));
        assert!(!q.internal_market);
    }

    #[test]
    fn rejects_inverted_tariffs() {
        assert!(internal_prices(Sdr::Ratio(0.5), 0.1, 0.2).is_err());
        assert!(internal_prices(Sdr::Ratio(0.5), 0.2, 0.0).is_err());
        assert!(internal_prices(Sdr::Ratio(-0.5), 0.66, 0.135).is_err());
    }

    proptest! {
        #[test]
        fn price_sandwich(sell in 0.01f64..1.0, spread in 0.001f64..1.0, r in 0.0f64..=1.0) {
            let buy = sell + spread;
            let q = internal_prices(Sdr::Ratio(r), buy, sell).unwrap();
            prop_assert!(sell <= q.isp && q.isp <= q.ibp && q.ibp <= buy);
        }

        #[test]
        fn isp_non_increasing(sell in 0.01f64..1.0, spread in 0.001f64..1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let buy = sell + spread;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let qlo = internal_prices(Sdr::Ratio(lo), buy, sell).unwrap();
            let qhi = internal_prices(Sdr::Ratio(hi), buy, sell).unwrap();
            prop_assert!(qhi.isp <= qlo.isp + 1e-15);
        }
    }
}
