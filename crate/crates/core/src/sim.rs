//! Whole-horizon runs: agent decisions, price advice, clearing and KPI
//! accounting, plus side-by-side comparison of run configurations.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::battery::BatteryState;
use crate::env::{CommunityEnv, EnvConfig, HourClearing, MarketConfig, MarketMode};
use crate::error::{Error, Result};
use crate::market::{AgentFlow, ClearingOptions, TradeRecord};
use crate::pricing::Period;
use crate::profiles::{Scenario, HOURS_PER_DAY};
use crate::rl::{self, Algorithm, EpisodeEnv, Features, Policy, TrainConfig, TrainedPolicy};
use crate::rulebased::{self, NightPrecedence, RuleConfig, RuleDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    pub advisor_on: bool,
    pub priming_on: bool,
    pub dairy_constraints_on: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Self {
            advisor_on: true,
            priming_on: true,
            dairy_constraints_on: true,
        }
    }
}

impl Ablations {
    pub fn label(&self) -> String {
        let mut off = Vec::new();
        if !self.advisor_on {
            off.push("no_advisor");
        }
        if !self.priming_on {
            off.push("no_priming");
        }
        if !self.dairy_constraints_on {
            off.push("no_dairy");
        }
        if off.is_empty() {
            "full".into()
        } else {
            off.join("+")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    RuleBased,
    QTable,
    Dqn,
    Ppo,
}

impl PolicyKind {
    pub fn of(policy: &TrainedPolicy) -> Self {
        match policy.algorithm() {
            Algorithm::Q => PolicyKind::QTable,
            Algorithm::Dqn => PolicyKind::Dqn,
            Algorithm::Ppo => PolicyKind::Ppo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: MarketMode,
    pub policy: PolicyKind,
    #[serde(default)]
    pub ablations: Ablations,
    /// Hours to simulate from the start of the scenario; `None` runs it all.
    #[serde(default)]
    pub horizon_hours: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strict_paper_mode: bool,
    #[serde(default)]
    pub night_precedence: NightPrecedence,
    /// Retrain a learned policy on the (ablated) scenario before running.
    #[serde(default)]
    pub retrain: bool,
}

impl RunConfig {
    pub fn new(mode: MarketMode, policy: PolicyKind) -> Self {
        Self {
            mode,
            policy,
            ablations: Ablations::default(),
            horizon_hours: None,
            seed: 0,
            strict_paper_mode: false,
            night_precedence: NightPrecedence::default(),
            retrain: false,
        }
    }

    fn market(&self) -> MarketConfig {
        MarketConfig {
            mode: self.mode,
            advisor_on: self.ablations.advisor_on,
            clearing: ClearingOptions {
                strict_paper_mode: self.strict_paper_mode,
            },
        }
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            priming_on: self.ablations.priming_on,
            ..EnvConfig::default()
        }
    }

    fn rule_config(&self) -> RuleConfig {
        RuleConfig {
            night_precedence: self.night_precedence,
            priming_on: self.ablations.priming_on,
            ..RuleConfig::default()
        }
    }
}

/// Who makes the per-hour battery and trading decisions.
#[derive(Debug, Clone)]
pub enum Controller {
    RuleBased,
    Learned {
        policy: TrainedPolicy,
        /// Used when a run asks for retraining.
        train: Option<TrainConfig>,
    },
}

impl Controller {
    pub fn learned(policy: TrainedPolicy) -> Self {
        Controller::Learned { policy, train: None }
    }
}

/// Totals over a run, for the community or one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiTotals {
    pub cost_bought_eur: f64,
    pub revenue_sold_eur: f64,
    /// Grid purchases during peak-tariff hours.
    pub peak_hour_demand_kwh: f64,
    pub grid_bought_kwh: f64,
    pub grid_sold_kwh: f64,
    pub p2p_bought_kwh: f64,
    pub p2p_sold_kwh: f64,
}

impl KpiTotals {
    fn add(&mut self, o: &KpiTotals) {
        self.cost_bought_eur += o.cost_bought_eur;
        self.revenue_sold_eur += o.revenue_sold_eur;
        self.peak_hour_demand_kwh += o.peak_hour_demand_kwh;
        self.grid_bought_kwh += o.grid_bought_kwh;
        self.grid_sold_kwh += o.grid_sold_kwh;
        self.p2p_bought_kwh += o.p2p_bought_kwh;
        self.p2p_sold_kwh += o.p2p_sold_kwh;
    }

    pub fn is_finite(&self) -> bool {
        [
            self.cost_bought_eur,
            self.revenue_sold_eur,
            self.peak_hour_demand_kwh,
            self.grid_bought_kwh,
            self.grid_sold_kwh,
            self.p2p_bought_kwh,
            self.p2p_sold_kwh,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Community totals after an hour, accumulated from the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourKpi {
    pub hour: usize,
    pub cost_bought_eur: f64,
    pub revenue_sold_eur: f64,
    pub peak_hour_demand_kwh: f64,
    /// Whether the hour cleared with supply strictly between zero and demand.
    pub interior_sdr: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KpiLedger {
    pub totals: KpiTotals,
    pub agents: BTreeMap<u32, KpiTotals>,
    pub hourly: Vec<HourKpi>,
}

/// One row of the hourly trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub hour: usize,
    pub agent: u32,
    pub action: String,
    pub buy: f64,
    pub sell: f64,
    pub soc: f64,
    /// Average price of the energy the agent settled this hour, or the
    /// internal buy price when it settled none.
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub agents: usize,
    pub horizon_hours: usize,
    pub ledger: KpiLedger,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub trades: Vec<TradeRecord>,
}

/// Per-agent flows of one hour before settlement.
struct AgentHour {
    agent_id: u32,
    action: String,
    buy: f64,
    sell: f64,
    soc: f64,
}

fn rule_label(d: &RuleDecision) -> String {
    let battery = if d.charge_kwh > 0.0 {
        "charge"
    } else if d.discharge_kwh > 0.0 {
        "discharge"
    } else {
        "hold"
    };
    let trade = if d.buy_kwh > 0.0 {
        "+buy"
    } else if d.sell_kwh > 0.0 {
        "+sell"
    } else {
        ""
    };
    format!("{battery}{trade}")
}

/// The scenario a run actually sees after horizon and ablation edits.
pub fn prepare_scenario(scenario: &Scenario, cfg: &RunConfig) -> Result<Scenario> {
    let mut s = match cfg.horizon_hours {
        Some(h) if h != scenario.horizon_hours => scenario.truncated(h)?,
        _ => scenario.clone(),
    };
    if !cfg.ablations.dairy_constraints_on {
        s = s.with_flat_loads();
    }
    s.validate()?;
    Ok(s)
}

struct Accountant {
    ledger: KpiLedger,
    trace: Vec<TraceRow>,
    trades: Vec<TradeRecord>,
    record_trace: bool,
}

impl Accountant {
    fn new(scenario: &Scenario, record_trace: bool) -> Self {
        let agents = scenario
            .agent_ids()
            .into_iter()
            .map(|id| (id, KpiTotals::default()))
            .collect();
        Self {
            ledger: KpiLedger {
                agents,
                ..KpiLedger::default()
            },
            trace: Vec::new(),
            trades: Vec::new(),
            record_trace,
        }
    }

    fn record(&mut self, clearing: &HourClearing, rows: &[AgentHour]) {
        let s = &clearing.settlement;
        let peak = clearing.period == Period::Peak;
        let mut hour_totals = KpiTotals::default();
        for row in rows {
            let id = row.agent_id;
            let grid_buy = s.grid_buys.get(&id).copied().unwrap_or(0.0);
            let grid_sell = s.grid_sells.get(&id).copied().unwrap_or(0.0);
            let spend = s.p2p_spend(id);
            let income = s.p2p_income(id);
            let k = KpiTotals {
                cost_bought_eur: grid_buy * clearing.grid.buy + spend,
                revenue_sold_eur: grid_sell * clearing.grid.sell + income,
                peak_hour_demand_kwh: if peak { grid_buy } else { 0.0 },
                grid_bought_kwh: grid_buy,
                grid_sold_kwh: grid_sell,
                p2p_bought_kwh: s.p2p_bought(id),
                p2p_sold_kwh: s.p2p_sold(id),
            };
            self.ledger.agents.entry(id).or_default().add(&k);
            hour_totals.add(&k);
            if self.record_trace {
                let price = if row.buy > 0.0 {
                    k.cost_bought_eur / row.buy
                } else if row.sell > 0.0 {
                    k.revenue_sold_eur / row.sell
                } else {
                    clearing.quote.ibp
                };
                self.trace.push(TraceRow {
                    hour: clearing.hour,
                    agent: id,
                    action: row.action.clone(),
                    buy: row.buy,
                    sell: row.sell,
                    soc: row.soc,
                    price,
                });
            }
        }
        if self.record_trace {
            self.trades.extend_from_slice(&s.trades);
        }
        self.ledger.totals.add(&hour_totals);
        let t = &self.ledger.totals;
        self.ledger.hourly.push(HourKpi {
            hour: clearing.hour,
            cost_bought_eur: t.cost_bought_eur,
            revenue_sold_eur: t.revenue_sold_eur,
            peak_hour_demand_kwh: t.peak_hour_demand_kwh,
            interior_sdr: clearing.quote.sdr.is_interior() && clearing.settlement.matched_kwh() > 0.0,
        });
    }
}

/// Simulate the whole (prepared) horizon.
pub fn run(scenario: &Scenario, controller: &Controller, cfg: &RunConfig) -> Result<RunReport> {
    run_with_trace(scenario, controller, cfg, true)
}

pub fn run_with_trace(
    scenario: &Scenario,
    controller: &Controller,
    cfg: &RunConfig,
    record_trace: bool,
) -> Result<RunReport> {
    let scenario = prepare_scenario(scenario, cfg)?;
    let mut acct = Accountant::new(&scenario, record_trace);
    match controller {
        Controller::RuleBased => {
            if cfg.policy != PolicyKind::RuleBased {
                return Err(Error::Scenario(format!(
                    "run asks for {:?} but the rule-based controller was supplied",
                    cfg.policy
                )));
            }
            run_rule_based(&scenario, cfg, &mut acct)?
        }
        Controller::Learned { policy, train } => {
            if cfg.policy != PolicyKind::of(policy) {
                return Err(Error::Scenario(format!(
                    "run asks for {:?} but a {:?} policy was supplied",
                    cfg.policy,
                    PolicyKind::of(policy)
                )));
            }
            if cfg.retrain {
                let mut tc = train.clone().ok_or_else(|| {
                    Error::TrainConfig("retrain requested without a training config".into())
                })?;
                tc.set_seed(cfg.seed);
                let retrained = retrain(&scenario, cfg, &tc)?;
                run_learned(&scenario, &retrained, cfg, &mut acct)?
            } else {
                run_learned(&scenario, policy, cfg, &mut acct)?
            }
        }
    }
    Ok(RunReport {
        config: *cfg,
        seed: cfg.seed,
        agents: scenario.fleet.len(),
        horizon_hours: scenario.horizon_hours,
        ledger: acct.ledger,
        trace: acct.trace,
        trades: acct.trades,
    })
}

fn retrain(scenario: &Scenario, cfg: &RunConfig, tc: &TrainConfig) -> Result<TrainedPolicy> {
    let mut env = EpisodeEnv::new(scenario.clone(), cfg.env_config(), cfg.market(), HOURS_PER_DAY)?;
    Ok(rl::train(&mut env, Features::for_scenario(scenario), tc)?.policy)
}

fn run_rule_based(scenario: &Scenario, cfg: &RunConfig, acct: &mut Accountant) -> Result<()> {
    let rules = cfg.rule_config();
    let market = cfg.market();
    let mut batteries: Vec<BatteryState> = scenario.fleet.iter().map(|_| BatteryState::full()).collect();
    let mut rows = Vec::with_capacity(scenario.fleet.len());
    let mut flows = Vec::with_capacity(scenario.fleet.len());
    for t in 0..scenario.horizon_hours {
        let period = scenario.tariff.period((t % HOURS_PER_DAY) as u32)?;
        rows.clear();
        flows.clear();
        for (i, farm) in scenario.fleet.iter().enumerate() {
            let id = farm.agent_id;
            let spec = scenario.battery_for(farm);
            let (d, next) = rulebased::step(
                farm,
                scenario.pv(id, t),
                scenario.wind_at(id, t),
                scenario.load(id, t),
                batteries[i],
                period,
                &spec,
                &rules,
            )?;
            batteries[i] = next;
            flows.push(AgentFlow {
                agent_id: id,
                buy_kwh: d.buy_kwh,
                sell_kwh: d.sell_kwh,
            });
            rows.push(AgentHour {
                agent_id: id,
                action: rule_label(&d),
                buy: d.buy_kwh,
                sell: d.sell_kwh,
                soc: next.soc_pct,
            });
        }
        let clearing = crate::env::settle_hour(&flows, t, &scenario.tariff, &market)?;
        acct.record(&clearing, &rows);
    }
    Ok(())
}

fn run_learned(scenario: &Scenario, policy: &dyn Policy, cfg: &RunConfig, acct: &mut Accountant) -> Result<()> {
    let mut env = CommunityEnv::new(scenario.clone(), cfg.env_config(), cfg.market())?;
    let mut obs = env.reset();
    loop {
        let actions: Vec<_> = obs.iter().map(|o| policy.act(o)).collect();
        let step = env.step(&actions)?;
        let rows: Vec<AgentHour> = step
            .agents
            .iter()
            .map(|a| AgentHour {
                agent_id: a.agent_id,
                action: a.action.name().to_string(),
                buy: a.meter.import_kwh,
                sell: a.meter.export_kwh,
                soc: a.outcome.new_soc,
            })
            .collect();
        acct.record(&step.clearing, &rows);
        obs = step.next_observations;
        if step.done {
            return Ok(());
        }
    }
}

fn repro_header(w: &mut impl Write, cfg: &RunConfig) -> std::io::Result<()> {
    let json = serde_json::to_string(cfg).map_err(std::io::Error::other)?;
    writeln!(w, "# seed: {}", cfg.seed)?;
    writeln!(w, "# config: {json}")
}

/// Hourly trace as CSV: `hour,agent,action,buy,sell,soc,price`, preceded by
/// `#` comment lines holding the seed and run config.
pub fn write_trace_csv(path: &Path, report: &RunReport) -> Result<()> {
    let mut buf = Vec::new();
    repro_header(&mut buf, &report.config).map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["hour", "agent", "action", "buy", "sell", "soc", "price"])?;
        for r in &report.trace {
            w.write_record([
                r.hour.to_string(),
                r.agent.to_string(),
                r.action.clone(),
                format!("{:.6}", r.buy),
                format!("{:.6}", r.sell),
                format!("{:.6}", r.soc),
                format!("{:.6}", r.price),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Every matched P2P trade, one row each.
pub fn write_trades_csv(path: &Path, report: &RunReport) -> Result<()> {
    let mut buf = Vec::new();
    repro_header(&mut buf, &report.config).map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["hour", "buyer", "seller", "price", "quantity"])?;
        for t in &report.trades {
            w.write_record([
                t.hour.to_string(),
                t.buyer_id.to_string(),
                t.seller_id.to_string(),
                format!("{:.6}", t.price),
                format!("{:.6}", t.quantity),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_report_json(path: &Path, report: &RunReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One column of a comparison: a labelled run config whose `mode` is
/// replaced by each requested market mode in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub config: RunConfig,
    pub totals: KpiTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub unit: String,
    /// One value per variant, in column order.
    pub values: Vec<f64>,
    /// Change relative to the first column, in percent; `None` when the
    /// baseline is zero and the value is not.
    pub delta_pct: Vec<Option<f64>>,
}

/// P2P against grid-only for one variant, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDelta {
    pub label: String,
    pub cost_pct: Option<f64>,
    pub revenue_pct: Option<f64>,
    pub peak_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub agents: usize,
    pub horizon_hours: usize,
    pub columns: Vec<String>,
    pub runs: Vec<RunSummary>,
    pub rows: Vec<ReportRow>,
    pub p2p_vs_grid: Vec<ModeDelta>,
}

pub fn pct_change(base: f64, value: f64) -> Option<f64> {
    if base == 0.0 {
        (value == 0.0).then_some(0.0)
    } else {
        Some((value - base) / base.abs() * 100.0)
    }
}

fn mode_phrase(mode: MarketMode) -> &'static str {
    match mode {
        MarketMode::GridOnly => "w/o P2P",
        MarketMode::P2p => "with P2P",
    }
}

/// Run every variant in every mode, at most `jobs` runs at a time, and
/// tabulate cost, revenue and peak demand per mode.
pub fn compare(
    scenario: &Scenario,
    controller: &Controller,
    variants: &[Variant],
    modes: &[MarketMode],
    jobs: usize,
) -> Result<ComparisonReport> {
    if variants.is_empty() || modes.is_empty() {
        return Err(Error::Scenario("compare needs at least one variant and one mode".into()));
    }
    let seed = variants[0].config.seed;
    if variants.iter().any(|v| v.config.seed != seed) {
        return Err(Error::Scenario("compared variants must share one seed".into()));
    }
    let tasks: Vec<(String, RunConfig)> = variants
        .iter()
        .flat_map(|v| {
            modes.iter().map(move |m| {
                let mut c = v.config;
                c.mode = *m;
                (v.label.clone(), c)
            })
        })
        .collect();

    let results: Mutex<Vec<Option<Result<RunReport>>>> = Mutex::new(tasks.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                log::debug!("compare: {} in {:?}", tasks[i].0, tasks[i].1.mode);
                let r = run_with_trace(scenario, controller, &tasks[i].1, false);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let mut reports = Vec::with_capacity(tasks.len());
    for r in results.into_inner().expect("no worker panicked") {
        reports.push(r.expect("every task ran")?);
    }

    let columns: Vec<String> = variants.iter().map(|v| v.label.clone()).collect();
    let runs: Vec<RunSummary> = tasks
        .iter()
        .zip(&reports)
        .map(|((label, cfg), r)| RunSummary {
            label: label.clone(),
            config: *cfg,
            totals: r.ledger.totals,
        })
        .collect();
    let total = |variant: usize, mode: usize| &reports[variant * modes.len() + mode].ledger.totals;

    type Metric = (&'static str, &'static str, fn(&KpiTotals) -> f64);
    let metrics: [Metric; 3] = [
        ("Electricity cost", "EUR", |k| k.cost_bought_eur),
        ("Electricity revenue", "EUR", |k| k.revenue_sold_eur),
        ("Peak hour demand", "kWh", |k| k.peak_hour_demand_kwh),
    ];
    let mut rows = Vec::new();
    for (name, unit, get) in metrics {
        for (mi, mode) in modes.iter().enumerate() {
            let values: Vec<f64> = (0..variants.len()).map(|v| get(total(v, mi))).collect();
            let delta_pct = values.iter().map(|v| pct_change(values[0], *v)).collect();
            rows.push(ReportRow {
                metric: format!("{name} {}", mode_phrase(*mode)),
                unit: unit.into(),
                values,
                delta_pct,
            });
        }
    }

    let grid = modes.iter().position(|m| *m == MarketMode::GridOnly);
    let p2p = modes.iter().position(|m| *m == MarketMode::P2p);
    let p2p_vs_grid = match (grid, p2p) {
        (Some(g), Some(p)) => (0..variants.len())
            .map(|v| {
                let (a, b) = (total(v, g), total(v, p));
                ModeDelta {
                    label: columns[v].clone(),
                    cost_pct: pct_change(a.cost_bought_eur, b.cost_bought_eur),
                    revenue_pct: pct_change(a.revenue_sold_eur, b.revenue_sold_eur),
                    peak_pct: pct_change(a.peak_hour_demand_kwh, b.peak_hour_demand_kwh),
                }
            })
            .collect(),
        _ => Vec::new(),
    };

    Ok(ComparisonReport {
        seed,
        agents: reports[0].agents,
        horizon_hours: reports[0].horizon_hours,
        columns,
        runs,
        rows,
        p2p_vs_grid,
    })
}

fn fmt_pct(p: Option<f64>) -> String {
    match p {
        Some(v) => format!("{v:+.1}%"),
        None => "n/a".into(),
    }
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Human-readable tables: one KPI row per metric and mode, one column
    /// per variant, then the P2P effect per variant.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Seed {}, {} agents, {} hours\n\n",
            self.seed, self.agents, self.horizon_hours
        ));
        out.push_str("| Metric |");
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} ({}) |", row.metric, row.unit));
            for (i, v) in row.values.iter().enumerate() {
                if i == 0 {
                    out.push_str(&format!(" {v:.1} |"));
                } else {
                    out.push_str(&format!(" {v:.1} ({}) |", fmt_pct(row.delta_pct[i])));
                }
            }
            out.push('\n');
        }
        if !self.p2p_vs_grid.is_empty() {
            out.push_str("\n| Variant | Cost change with P2P | Revenue change with P2P | Peak demand change with P2P |\n");
            out.push_str("|---|---:|---:|---:|\n");
            for d in &self.p2p_vs_grid {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    d.label,
                    fmt_pct(d.cost_pct),
                    fmt_pct(d.revenue_pct),
                    fmt_pct(d.peak_pct)
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{synthesize_scenario, FarmConfig, TimeSeries};

    fn farm(id: u32, has_battery: bool) -> FarmConfig {
        FarmConfig {
            agent_id: id,
            herd_size: 50,
            pv_capacity_kw: 10.0,
            has_battery,
            has_re: true,
            battery: None,
        }
    }

    /// Day of zeros with one hour overridden per agent.
    fn one_hour(hour: usize, agents: &[(u32, f64, f64)], battery: bool) -> Scenario {
        let mut loads = BTreeMap::new();
        let mut generation = BTreeMap::new();
        for (id, load, gen) in agents {
            let mut l = vec![0.0; 24];
            let mut g = vec![0.0; 24];
            l[hour] = *load;
            g[hour] = *gen;
            loads.insert(*id, TimeSeries::new(l).unwrap());
            generation.insert(*id, TimeSeries::new(g).unwrap());
        }
        Scenario {
            fleet: agents.iter().map(|a| farm(a.0, battery)).collect(),
            loads,
            generation,
            wind: BTreeMap::new(),
            horizon_hours: 24,
            rng_seed: 0,
            tariff: Default::default(),
            battery: Default::default(),
        }
    }

    #[test]
    fn balanced_pair_trades_at_feed_in_price() {
        let s = one_hour(12, &[(1, 0.0, 3.0), (2, 3.0, 0.0)], false);
        let r = run(&s, &Controller::RuleBased, &RunConfig::new(MarketMode::P2p, PolicyKind::RuleBased)).unwrap();
        let t = r.ledger.totals;
        assert!((t.p2p_bought_kwh - 3.0).abs() < 1e-12);
        assert!((t.cost_bought_eur - 3.0 * 0.135).abs() < 1e-12);
        assert!((t.revenue_sold_eur - 3.0 * 0.135).abs() < 1e-12);
        assert_eq!(t.grid_bought_kwh, 0.0);
        assert_eq!(t.grid_sold_kwh, 0.0);
    }

    #[test]
    fn grid_only_peak_purchase() {
        let s = one_hour(18, &[(1, 5.0, 0.0)], false);
        let r = run(&s, &Controller::RuleBased, &RunConfig::new(MarketMode::GridOnly, PolicyKind::RuleBased)).unwrap();
        assert!((r.ledger.totals.cost_bought_eur - 3.3).abs() < 1e-12);
        assert_eq!(r.ledger.totals.peak_hour_demand_kwh, 5.0);
    }

    #[test]
    fn empty_community_has_zero_kpis() {
        let s = one_hour(0, &[(1, 0.0, 0.0), (2, 0.0, 0.0)], false);
        for mode in [MarketMode::P2p, MarketMode::GridOnly] {
            let r = run(&s, &Controller::RuleBased, &RunConfig::new(mode, PolicyKind::RuleBased)).unwrap();
            assert_eq!(r.ledger.totals, KpiTotals::default());
        }
    }

    #[test]
    fn ledger_is_monotone_and_balanced() {
        let s = synthesize_scenario(6, 10, 3, &Default::default()).unwrap();
        let r = run(&s, &Controller::RuleBased, &RunConfig::new(MarketMode::P2p, PolicyKind::RuleBased)).unwrap();
        for w in r.ledger.hourly.windows(2) {
            assert!(w[1].cost_bought_eur >= w[0].cost_bought_eur);
            assert!(w[1].revenue_sold_eur >= w[0].revenue_sold_eur);
            assert!(w[1].peak_hour_demand_kwh >= w[0].peak_hour_demand_kwh);
        }
        let t = r.ledger.totals;
        let bought: f64 = r.trace.iter().map(|x| x.buy).sum();
        let sold: f64 = r.trace.iter().map(|x| x.sell).sum();
        assert!((t.grid_bought_kwh + t.p2p_bought_kwh - bought).abs() < 1e-6);
        assert!((t.grid_sold_kwh + t.p2p_sold_kwh - sold).abs() < 1e-6);
        assert!((t.p2p_bought_kwh - t.p2p_sold_kwh).abs() < 1e-6);
    }

    #[test]
    fn identical_variants_give_zero_deltas() {
        let s = synthesize_scenario(4, 3, 1, &Default::default()).unwrap();
        let cfg = RunConfig::new(MarketMode::P2p, PolicyKind::RuleBased);
        let v = vec![
            Variant { label: "a".into(), config: cfg },
            Variant { label: "b".into(), config: cfg },
        ];
        let rep = compare(&s, &Controller::RuleBased, &v, &[MarketMode::GridOnly, MarketMode::P2p], 2).unwrap();
        assert_eq!(rep.rows.len(), 6);
        for row in &rep.rows {
            assert_eq!(row.delta_pct[1], Some(0.0), "{}", row.metric);
        }
        assert!(rep.to_markdown().contains("Peak hour demand with P2P"));
    }

    #[test]
    fn mismatched_controller_is_rejected() {
        let s = one_hour(0, &[(1, 1.0, 0.0)], true);
        let cfg = RunConfig::new(MarketMode::P2p, PolicyKind::Dqn);
        assert!(run(&s, &Controller::RuleBased, &cfg).is_err());
    }

    #[test]
    fn pct_change_handles_zero_baseline() {
        assert_eq!(pct_change(0.0, 0.0), Some(0.0));
        assert_eq!(pct_change(0.0, 1.0), None);
        assert_eq!(pct_change(200.0, 150.0), Some(-25.0));
    }
}
