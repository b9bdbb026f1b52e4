//! Default labels, sub-portfolios and risk reports.
//!
//! Reports are computed from [`AccountPaths`], a compact per-account record
//! of due-installment states, which an observer can build while the
//! simulation streams. Binning tables additionally need feature values at
//! each observation point; [`BinningCollector`] keeps just the bin index and
//! raw value of each pooled row and resolves labels once the run is over.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abt::Features;
use crate::config::{Clause, Comparison, Variable, SOURCE_STATES, TARGET_STATES};
use crate::engine::{MonthBatch, MonthObserver, Status, TransactionRecord};
use crate::error::Error;

/// Outcome windows in months.
pub const OUTCOME_WINDOWS: [u32; 4] = [3, 6, 9, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DefaultLabel {
    Good,
    Bad,
    Indeterminate,
    /// The outcome window runs past the last simulated month unresolved.
    Unobservable,
}

/// Default status over a `t`-month outcome window.
///
/// `n_due` holds the due counts from the observation month onward, at most
/// `t` of them. A shorter slice means the account either terminated inside
/// the window (`final_status` is the status of the last row) or the
/// simulation horizon cut it off (`final_status` is `Active`).
///
/// Bad when the maximum exceeds 3 (2 for `t = 3`) or the account went Bad;
/// otherwise Good when the maximum is at most 1 or the account closed;
/// otherwise Indeterminate. A Bad breach takes precedence over closure.
pub fn label_default(n_due: &[u8], final_status: Status, t: u32) -> DefaultLabel {
    let threshold = if t == 3 { 2 } else { 3 };
    let window = &n_due[..n_due.len().min(t as usize)];
    let max = window.iter().copied().max().unwrap_or(0);
    let resolved = window.len() == n_due.len() && final_status.is_terminal();
    if max > threshold || (resolved && final_status == Status::Bad) {
        return DefaultLabel::Bad;
    }
    if resolved && final_status == Status::Closed {
        return DefaultLabel::Good;
    }
    if window.len() < t as usize {
        return DefaultLabel::Unobservable;
    }
    if max <= 1 {
        DefaultLabel::Good
    } else {
        DefaultLabel::Indeterminate
    }
}

// ---------------------------------------------------------------------------
// Portfolios

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Portfolio {
    /// Acceptance: the first month of every account.
    App,
    /// Behavioral: seasoned (seniority > 2) accounts with nothing due.
    Beh,
    /// Collection: exactly one installment due.
    Col,
}

impl Portfolio {
    pub const ALL: [Portfolio; 3] = [Portfolio::App, Portfolio::Beh, Portfolio::Col];

    pub fn name(self) -> &'static str {
        match self {
            Portfolio::App => "APP",
            Portfolio::Beh => "BEH",
            Portfolio::Col => "COL",
        }
    }
}

impl fmt::Display for Portfolio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Portfolio {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "APP" => Ok(Portfolio::App),
            "BEH" => Ok(Portfolio::Beh),
            "COL" => Ok(Portfolio::Col),
            _ => Err(format!("unknown portfolio `{s}`")),
        }
    }
}

/// Sub-portfolio memberships of one transaction row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PortfolioTags {
    pub app: bool,
    pub beh: bool,
    pub col: bool,
}

impl PortfolioTags {
    pub fn classify(seniority: u32, n_due: u8) -> Self {
        PortfolioTags {
            app: seniority == 1,
            beh: seniority > 2 && n_due == 0,
            col: n_due == 1,
        }
    }

    pub fn contains(&self, p: Portfolio) -> bool {
        match p {
            Portfolio::App => self.app,
            Portfolio::Beh => self.beh,
            Portfolio::Col => self.col,
        }
    }
}

/// Sub-portfolios of a transaction row. Closed and bad rows end an account
/// and start no outcome window, so they belong to none.
pub fn tag_portfolios(record: &TransactionRecord) -> PortfolioTags {
    if record.status.is_terminal() {
        return PortfolioTags::default();
    }
    PortfolioTags::classify(record.t_cur - record.t_app + 1, record.n_due)
}

/// Observation pool for binning tables: one sub-portfolio or every row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pool {
    All,
    Portfolio(Portfolio),
}

impl Pool {
    pub fn admits(self, tags: PortfolioTags) -> bool {
        match self {
            Pool::All => true,
            Pool::Portfolio(p) => tags.contains(p),
        }
    }
}

// ---------------------------------------------------------------------------
// Account paths

/// Due-count path of one account from its application month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountPath {
    pub t_app: u32,
    pub n_due: Vec<u8>,
    pub final_status: Status,
}

impl AccountPath {
    pub fn seniority_range(&self) -> impl Iterator<Item = u32> {
        1..=self.n_due.len() as u32
    }

    /// Default label observed at `t_obs` with a `t`-month window. Windows
    /// reaching past the last of `horizon` months are Unobservable even if
    /// the account resolved early.
    pub fn label(&self, t_obs: u32, t: u32, horizon: u32) -> DefaultLabel {
        if t_obs + t > horizon {
            return DefaultLabel::Unobservable;
        }
        let off = (t_obs - self.t_app) as usize;
        let end = (off + t as usize).min(self.n_due.len());
        let status = if end == self.n_due.len() {
            self.final_status
        } else {
            Status::Active
        };
        label_default(&self.n_due[off..end], status, t)
    }
}

/// Per-account due-count paths of a whole run, indexed by `app_id`.
#[derive(Debug, Clone, Default)]
pub struct AccountPaths {
    horizon: u32,
    paths: Vec<AccountPath>,
}

impl AccountPaths {
    pub fn new(horizon: u32) -> Self {
        AccountPaths {
            horizon,
            paths: Vec::new(),
        }
    }

    pub fn from_transactions<'a>(
        horizon: u32,
        rows: impl IntoIterator<Item = &'a TransactionRecord>,
    ) -> Result<Self, Error> {
        let mut paths = AccountPaths::new(horizon);
        for r in rows {
            paths.push(r)?;
        }
        Ok(paths)
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn push(&mut self, r: &TransactionRecord) -> Result<(), Error> {
        let id = r.app_id as usize;
        if id >= self.paths.len() {
            self.paths.resize_with(id + 1, || AccountPath {
                t_app: u32::MAX,
                n_due: Vec::new(),
                final_status: Status::Active,
            });
        }
        let p = &mut self.paths[id];
        if p.n_due.is_empty() {
            p.t_app = r.t_app;
        }
        if p.t_app != r.t_app || r.t_cur != p.t_app + p.n_due.len() as u32 {
            return Err(Error::Internal(format!(
                "account {} row for month {} is not contiguous",
                r.app_id, r.t_cur
            )));
        }
        if p.final_status.is_terminal() {
            return Err(Error::Internal(format!(
                "account {} continues after status {}",
                r.app_id, p.final_status
            )));
        }
        p.n_due.push(r.n_due);
        p.final_status = r.status;
        Ok(())
    }

    pub fn get(&self, app_id: u64) -> Option<&AccountPath> {
        self.paths.get(app_id as usize).filter(|p| !p.n_due.is_empty())
    }

    pub fn accounts(&self) -> impl Iterator<Item = (u64, &AccountPath)> {
        self.paths
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.n_due.is_empty())
            .map(|(id, p)| (id as u64, p))
    }

    pub fn label(&self, app_id: u64, t_obs: u32, t: u32) -> Option<DefaultLabel> {
        let p = self.get(app_id)?;
        (t_obs >= p.t_app && ((t_obs - p.t_app) as usize) < p.n_due.len())
            .then(|| p.label(t_obs, t, self.horizon))
    }

    /// Bad-rate series of a sub-portfolio on a `t`-month window.
    pub fn bad_rate_series(&self, portfolio: Portfolio, t: u32) -> Vec<BadRatePoint> {
        let h = self.horizon;
        let obs = self.accounts().flat_map(move |(_, p)| {
            let live = p.n_due.len() - p.final_status.is_terminal() as usize;
            p.n_due[..live].iter().enumerate().filter_map(move |(off, &n_due)| {
                let tags = PortfolioTags::classify(off as u32 + 1, n_due);
                let t_obs = p.t_app + off as u32;
                tags.contains(portfolio).then(|| (t_obs, p.label(t_obs, t, h)))
            })
        });
        bad_rate_series(obs, self.horizon)
    }

    pub fn flow_table(&self) -> FlowTable {
        flow_table(self)
    }
}

impl MonthObserver for AccountPaths {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        if self.paths.len() < batch.production.len() {
            self.paths.reserve(batch.production.len() - self.paths.len());
        }
        batch.transactions.iter().try_for_each(|r| self.push(r))
    }
}

// ---------------------------------------------------------------------------
// Bad rates

/// Which labels form the bad-rate denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateBasis {
    /// Good + Bad + Indeterminate.
    #[default]
    AllLabeled,
    /// Good + Bad only.
    GoodBad,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub good: u64,
    pub bad: u64,
    pub indeterminate: u64,
    pub unobservable: u64,
}

impl LabelCounts {
    pub fn add(&mut self, label: DefaultLabel) {
        match label {
            DefaultLabel::Good => self.good += 1,
            DefaultLabel::Bad => self.bad += 1,
            DefaultLabel::Indeterminate => self.indeterminate += 1,
            DefaultLabel::Unobservable => self.unobservable += 1,
        }
    }

    pub fn merge(&mut self, other: &LabelCounts) {
        self.good += other.good;
        self.bad += other.bad;
        self.indeterminate += other.indeterminate;
        self.unobservable += other.unobservable;
    }

    pub fn labeled(&self) -> u64 {
        self.good + self.bad + self.indeterminate
    }

    pub fn bad_rate(&self, basis: RateBasis) -> Option<f64> {
        let denom = match basis {
            RateBasis::AllLabeled => self.labeled(),
            RateBasis::GoodBad => self.good + self.bad,
        };
        (denom > 0).then(|| self.bad as f64 / denom as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BadRatePoint {
    pub t_obs: u32,
    pub counts: LabelCounts,
}

impl BadRatePoint {
    /// Number of labeled (observable) rows.
    pub fn n(&self) -> u64 {
        self.counts.labeled()
    }

    pub fn rate(&self) -> Option<f64> {
        self.counts.bad_rate(RateBasis::AllLabeled)
    }
}

/// Per-observation-month label counts; one point for every month of the horizon.
pub fn bad_rate_series(
    observations: impl IntoIterator<Item = (u32, DefaultLabel)>,
    horizon: u32,
) -> Vec<BadRatePoint> {
    let mut out: Vec<BadRatePoint> = (0..horizon)
        .map(|t_obs| BadRatePoint {
            t_obs,
            counts: LabelCounts::default(),
        })
        .collect();
    for (t_obs, label) in observations {
        out[t_obs as usize].counts.add(label);
    }
    out
}

/// Label counts pooled over all observation months.
pub fn pooled(series: &[BadRatePoint]) -> LabelCounts {
    let mut total = LabelCounts::default();
    for p in series {
        total.merge(&p.counts);
    }
    total
}

// ---------------------------------------------------------------------------
// Flow rates

/// Monthly transition counts `counts[m][i][j]` from month `m` to `m + 1`,
/// over accounts still active at `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    pub counts: Vec<[[u64; TARGET_STATES]; SOURCE_STATES]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRatePoint {
    pub month: u32,
    pub from: u64,
    pub to: u64,
    pub rate: Option<f64>,
}

fn flow_table(paths: &AccountPaths) -> FlowTable {
    let months = paths.horizon.saturating_sub(1) as usize;
    let mut counts = vec![[[0u64; TARGET_STATES]; SOURCE_STATES]; months];
    for (_, p) in paths.accounts() {
        for (off, w) in p.n_due.windows(2).enumerate() {
            let m = p.t_app as usize + off;
            counts[m][w[0] as usize][w[1] as usize] += 1;
        }
    }
    FlowTable { counts }
}

impl FlowTable {
    pub fn series(&self, i: usize, j: usize) -> Vec<FlowRatePoint> {
        self.counts
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let from: u64 = c[i].iter().sum();
                let to = c[i][j];
                FlowRatePoint {
                    month: m as u32,
                    from,
                    to,
                    rate: (from > 0).then(|| to as f64 / from as f64),
                }
            })
            .collect()
    }
}

/// Empirical monthly `i -> j` transition share.
pub fn flow_rate_series(paths: &AccountPaths, i: usize, j: usize) -> Vec<FlowRatePoint> {
    flow_table(paths).series(i, j)
}

// ---------------------------------------------------------------------------
// Vintages

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VintageRow {
    pub t_app: u32,
    pub accounts: u64,
    /// `cells[s - 1]`: share of the cohort that went Bad by seniority `s`;
    /// `None` once `s` runs past the horizon for this cohort.
    pub cells: Vec<Option<f64>>,
}

/// Cohort-by-seniority cumulative share of Bad accounts.
pub fn vintage_table(paths: &AccountPaths) -> Vec<VintageRow> {
    let h = paths.horizon;
    let mut accounts = vec![0u64; h as usize];
    let mut bad_at = vec![vec![0u64; h as usize + 1]; h as usize];
    for (_, p) in paths.accounts() {
        accounts[p.t_app as usize] += 1;
        if p.final_status == Status::Bad {
            bad_at[p.t_app as usize][p.n_due.len()] += 1;
        }
    }
    (0..h)
        .filter(|&c| accounts[c as usize] > 0)
        .map(|c| {
            let n = accounts[c as usize];
            let observable = h - c;
            let mut cum = 0u64;
            let cells = (1..=h)
                .map(|s| {
                    cum += bad_at[c as usize][s as usize];
                    (s <= observable).then(|| cum as f64 / n as f64)
                })
                .collect();
            VintageRow {
                t_app: c,
                accounts: n,
                cells,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Binning and Gini

/// One attribute of a binned characteristic. A bin without clauses marked
/// `otherwise` catches rows no other bin claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    #[serde(default)]
    pub clauses: Vec<Clause>,
    #[serde(default)]
    pub otherwise: bool,
}

impl Bin {
    pub fn when(label: &str, clauses: Vec<Clause>) -> Self {
        Bin {
            label: label.into(),
            clauses,
            otherwise: false,
        }
    }

    pub fn otherwise(label: &str) -> Self {
        Bin {
            label: label.into(),
            clauses: Vec::new(),
            otherwise: true,
        }
    }

    pub fn condition(&self) -> String {
        if self.otherwise {
            "otherwise".into()
        } else {
            self.clauses
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(" and ")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    pub name: String,
    /// Underlying variable, used for the unbinned Gini.
    pub variable: Variable,
    pub bins: Vec<Bin>,
}

impl Characteristic {
    /// Three attributes of `beh_n_due_6`: young accounts, seasoned with
    /// recent delinquency, and the rest.
    pub fn beh_n_due_6() -> Self {
        use Comparison::*;
        Characteristic {
            name: "beh_n_due_6".into(),
            variable: Variable::BehNDue6,
            bins: vec![
                Bin::when("1", vec![Clause::new(Variable::ActSeniority, Lt, 6.0)]),
                Bin::when(
                    "2",
                    vec![
                        Clause::new(Variable::BehNDue6, Gt, 0.0),
                        Clause::new(Variable::ActSeniority, Ge, 6.0),
                    ],
                ),
                Bin::otherwise("3"),
            ],
        }
    }

    /// Two income attributes split at 1800.
    pub fn income() -> Self {
        use Comparison::*;
        Characteristic {
            name: "income".into(),
            variable: Variable::Income,
            bins: vec![
                Bin::when("1", vec![Clause::new(Variable::Income, Lt, 1800.0)]),
                Bin::when("2", vec![Clause::new(Variable::Income, Ge, 1800.0)]),
            ],
        }
    }

    /// Index of the single bin containing the row.
    pub fn assign(&self, features: &Features<'_>) -> Result<usize, Error> {
        let mut hit: Option<usize> = None;
        for (k, bin) in self.bins.iter().enumerate() {
            if bin.otherwise {
                continue;
            }
            if bin.clauses.iter().all(|c| c.holds(features.value(c.variable))) {
                if let Some(prev) = hit {
                    return Err(Error::Config(crate::config::ConfigError::Invalid(vec![format!(
                        "characteristic {}: bins {} and {} overlap",
                        self.name, self.bins[prev].label, bin.label
                    )])));
                }
                hit = Some(k);
            }
        }
        hit.or_else(|| self.bins.iter().position(|b| b.otherwise))
            .ok_or_else(|| {
                Error::Config(crate::config::ConfigError::Invalid(vec![format!(
                    "characteristic {}: bins do not cover app {} at month {}",
                    self.name, features.abt.app_id, features.abt.t_cur
                )]))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeStats {
    pub label: String,
    pub condition: String,
    pub counts: LabelCounts,
    pub bad_rate: Option<f64>,
    /// Share of labeled rows falling in this attribute.
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningReport {
    pub characteristic: String,
    pub window: u32,
    pub attributes: Vec<AttributeStats>,
    /// Somers' D of the attributes against Good/Bad.
    pub gini_binned: f64,
    /// Somers' D of the unbinned variable against Good/Bad.
    pub gini_raw: f64,
}

/// Somers' D of an attribute table `(bad, good)` with attributes ordered by
/// descending bad rate; ties inside an attribute count as half.
pub fn gini_binned(table: &[(u64, u64)]) -> f64 {
    let mut rows: Vec<(u64, u64)> = table.iter().copied().filter(|(b, g)| b + g > 0).collect();
    rows.sort_by(|a, b| {
        let ra = a.0 as f64 / (a.0 + a.1) as f64;
        let rb = b.0 as f64 / (b.0 + b.1) as f64;
        rb.total_cmp(&ra)
    });
    let bads: u64 = rows.iter().map(|r| r.0).sum();
    let goods: u64 = rows.iter().map(|r| r.1).sum();
    if bads == 0 || goods == 0 {
        return 0.0;
    }
    // sum over attributes of bad_k * (goods ranked safer than k) minus the reverse
    let mut goods_after = goods as f64;
    let mut goods_before = 0.0;
    let mut d = 0.0;
    for &(b, g) in &rows {
        goods_after -= g as f64;
        d += b as f64 * (goods_after - goods_before);
        goods_before += g as f64;
    }
    d / (bads as f64 * goods as f64)
}

/// `|2 * AUC - 1|` of `value` as a separator of Bad from Good, with ties split.
pub fn gini_raw(samples: &[(f64, bool)]) -> f64 {
    let mut s: Vec<(f64, bool)> = samples.iter().copied().filter(|(v, _)| v.is_finite()).collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bads = s.iter().filter(|x| x.1).count() as f64;
    let goods = s.len() as f64 - bads;
    if bads == 0.0 || goods == 0.0 {
        return 0.0;
    }
    // Mann-Whitney: count (bad, good) pairs with bad value above good value.
    let mut goods_below = 0.0;
    let mut concordant = 0.0;
    let mut k = 0;
    while k < s.len() {
        let mut end = k;
        while end < s.len() && s[end].0 == s[k].0 {
            end += 1;
        }
        let tie_bads = s[k..end].iter().filter(|x| x.1).count() as f64;
        let tie_goods = (end - k) as f64 - tie_bads;
        concordant += tie_bads * (goods_below + 0.5 * tie_goods);
        goods_below += tie_goods;
        k = end;
    }
    let auc = concordant / (bads * goods);
    (2.0 * auc - 1.0).abs()
}

/// Accumulates attribute counts and raw values for one characteristic.
#[derive(Debug, Clone)]
pub struct BinningAccumulator {
    characteristic: Characteristic,
    window: u32,
    counts: Vec<LabelCounts>,
    raw: Vec<(f64, bool)>,
}

impl BinningAccumulator {
    pub fn new(characteristic: Characteristic, window: u32) -> Self {
        let n = characteristic.bins.len();
        BinningAccumulator {
            characteristic,
            window,
            counts: vec![LabelCounts::default(); n],
            raw: Vec::new(),
        }
    }

    pub fn add(&mut self, bin: usize, value: Option<f64>, label: DefaultLabel) {
        self.counts[bin].add(label);
        if matches!(label, DefaultLabel::Good | DefaultLabel::Bad) {
            self.raw.push((value.unwrap_or(f64::NAN), label == DefaultLabel::Bad));
        }
    }

    pub fn report(&self) -> BinningReport {
        let total: u64 = self.counts.iter().map(|c| c.labeled()).sum();
        let attributes = self
            .characteristic
            .bins
            .iter()
            .zip(&self.counts)
            .map(|(bin, c)| AttributeStats {
                label: bin.label.clone(),
                condition: bin.condition(),
                counts: *c,
                bad_rate: c.bad_rate(RateBasis::AllLabeled),
                population: if total > 0 {
                    c.labeled() as f64 / total as f64
                } else {
                    0.0
                },
            })
            .collect();
        let table: Vec<(u64, u64)> = self.counts.iter().map(|c| (c.bad, c.good)).collect();
        BinningReport {
            characteristic: self.characteristic.name.clone(),
            window: self.window,
            attributes,
            gini_binned: gini_binned(&table),
            gini_raw: gini_raw(&self.raw),
        }
    }
}

/// Binning table of one characteristic over labeled observation rows.
pub fn binning_report<'a>(
    characteristic: &Characteristic,
    window: u32,
    rows: impl IntoIterator<Item = (Features<'a>, DefaultLabel)>,
) -> Result<BinningReport, Error> {
    let mut acc = BinningAccumulator::new(characteristic.clone(), window);
    for (f, label) in rows {
        let bin = characteristic.assign(&f)?;
        acc.add(bin, f.value(characteristic.variable), label);
    }
    Ok(acc.report())
}

/// Observer that records, for every pooled live row, the attribute of each
/// characteristic; labels are attached after the run from [`AccountPaths`].
#[derive(Debug, Clone)]
pub struct BinningCollector {
    pool: Pool,
    characteristics: Vec<Characteristic>,
    app_ids: Vec<u32>,
    t_obs: Vec<u16>,
    bins: Vec<u8>,
    values: Vec<f32>,
}

impl BinningCollector {
    pub fn new(pool: Pool, characteristics: Vec<Characteristic>) -> Self {
        BinningCollector {
            pool,
            characteristics,
            app_ids: Vec::new(),
            t_obs: Vec::new(),
            bins: Vec::new(),
            values: Vec::new(),
        }
    }

    /// The two characteristics of the case-study binning tables.
    pub fn standard(pool: Pool) -> Self {
        Self::new(pool, vec![Characteristic::beh_n_due_6(), Characteristic::income()])
    }

    pub fn characteristics(&self) -> &[Characteristic] {
        &self.characteristics
    }

    pub fn rows(&self) -> usize {
        self.app_ids.len()
    }

    pub fn reports(&self, paths: &AccountPaths, window: u32) -> Vec<BinningReport> {
        let k = self.characteristics.len();
        let mut accs: Vec<BinningAccumulator> = self
            .characteristics
            .iter()
            .map(|c| BinningAccumulator::new(c.clone(), window))
            .collect();
        for row in 0..self.app_ids.len() {
            let Some(label) = paths.label(self.app_ids[row] as u64, self.t_obs[row] as u32, window)
            else {
                continue;
            };
            for (c, acc) in accs.iter_mut().enumerate() {
                let v = self.values[row * k + c];
                let value = (!v.is_nan()).then_some(v as f64);
                acc.add(self.bins[row * k + c] as usize, value, label);
            }
        }
        accs.iter().map(|a| a.report()).collect()
    }

    /// Per-attribute bad-rate series, `out[characteristic][attribute]`.
    pub fn attribute_series(&self, paths: &AccountPaths, window: u32) -> Vec<Vec<Vec<BadRatePoint>>> {
        let k = self.characteristics.len();
        let h = paths.horizon();
        let mut out: Vec<Vec<Vec<BadRatePoint>>> = self
            .characteristics
            .iter()
            .map(|c| vec![bad_rate_series(std::iter::empty(), h); c.bins.len()])
            .collect();
        for row in 0..self.app_ids.len() {
            let t_obs = self.t_obs[row] as u32;
            let Some(label) = paths.label(self.app_ids[row] as u64, t_obs, window) else {
                continue;
            };
            for (c, series) in out.iter_mut().enumerate() {
                series[self.bins[row * k + c] as usize][t_obs as usize].counts.add(label);
            }
        }
        out
    }
}

impl MonthObserver for BinningCollector {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        let records = batch.production.records();
        for (tx, abt) in batch.transactions.iter().zip(batch.abt) {
            if tx.status.is_terminal() || !self.pool.admits(tag_portfolios(tx)) {
                continue;
            }
            let f = Features::new(&records[tx.app_id as usize], abt);
            for c in &self.characteristics {
                self.bins.push(c.assign(&f)? as u8);
                self.values.push(f.value(c.variable).map_or(f32::NAN, |v| v as f32));
            }
            self.app_ids.push(tx.app_id as u32);
            self.t_obs.push(tx.t_cur as u16);
        }
        Ok(())
    }
}

/// Month of the largest defined value in a series.
pub fn argmax_month(values: impl IntoIterator<Item = (u32, Option<f64>)>) -> Option<u32> {
    values
        .into_iter()
        .filter_map(|(m, v)| v.map(|v| (m, v)))
        .fold(None, |best: Option<(u32, f64)>, (m, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((m, v)),
        })
        .map(|(m, _)| m)
}
