//! Generator layout: dates, migration matrix, macro cycle, scorecards,
//! crisis rule and sampling distributions.
//!
//! A [`Layout`] is loaded from TOML (human-edited) or JSON (canonical,
//! machine round-trip). Every omitted field falls back to the common
//! case-study parameters, so an empty document is a valid layout.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Current config schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of source delinquency states (0..=6 due installments).
pub const SOURCE_STATES: usize = 7;
/// Number of target states (0..=7, where 7 is Bad).
pub const TARGET_STATES: usize = 8;
/// Due-installment count at which an account is Bad.
pub const BAD_STATE: u8 = 7;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to parse configuration: {0}")]
    Parse(String),
    #[error("invalid layout: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown preset `{0}` (expected app_case or beh_case)")]
    UnknownPreset(String),
    #[error("failed to serialize configuration: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Calendar

/// Calendar month, written as `YYYY-MM` (`YYYY.MM` is also accepted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(YearMonth { year, month })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        YearMonth {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn plus_months(self, months: u32) -> Self {
        Self::from_ordinal(self.ordinal() + months as i64)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    /// The monthly due date (15th).
    pub fn due_date(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 15).expect("valid year-month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once(['-', '.'])
            .ok_or_else(|| format!("expected YYYY-MM, got `{s}`"))?;
        let year = y.trim().parse().map_err(|_| format!("bad year in `{s}`"))?;
        let month = m.trim().parse().map_err(|_| format!("bad month in `{s}`"))?;
        YearMonth::new(year, month).ok_or_else(|| format!("month out of range in `{s}`"))
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps simulation month indices (0 = start) onto the calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Calendar {
    start: YearMonth,
}

impl Calendar {
    pub fn new(start: YearMonth) -> Self {
        Calendar { start }
    }

    pub fn year_month(&self, month: u32) -> YearMonth {
        self.start.plus_months(month)
    }

    pub fn is_december(&self, month: u32) -> bool {
        self.year_month(month).month == 12
    }

    pub fn date(&self, month: u32) -> NaiveDate {
        self.year_month(month).due_date()
    }
}

// ---------------------------------------------------------------------------
// Migration matrix

/// Monthly transition probabilities between due-installment states.
///
/// Row `i` is the current number of due installments (0..=6), column `j` the
/// number one month later (0..=7). Rows are stochastic and banded: an account
/// worsens by at most one state per month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MigrationMatrix {
    rows: [[f64; TARGET_STATES]; SOURCE_STATES],
}

impl MigrationMatrix {
    pub fn new(rows: [[f64; TARGET_STATES]; SOURCE_STATES]) -> Self {
        MigrationMatrix { rows }
    }

    pub fn row(&self, i: usize) -> &[f64; TARGET_STATES] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[[f64; TARGET_STATES]; SOURCE_STATES] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.rows[i][j] = value;
    }
}

impl Default for MigrationMatrix {
    fn default() -> Self {
        MigrationMatrix::new([
            [0.850, 0.150, 0.000, 0.000, 0.000, 0.000, 0.000, 0.000],
            [0.250, 0.450, 0.300, 0.000, 0.000, 0.000, 0.000, 0.000],
            [0.040, 0.240, 0.190, 0.530, 0.000, 0.000, 0.000, 0.000],
            [0.005, 0.025, 0.080, 0.100, 0.790, 0.000, 0.000, 0.000],
            [0.000, 0.000, 0.010, 0.080, 0.090, 0.820, 0.000, 0.000],
            [0.000, 0.000, 0.000, 0.000, 0.020, 0.030, 0.950, 0.000],
            [0.000, 0.000, 0.000, 0.000, 0.000, 0.010, 0.010, 0.980],
        ])
    }
}

impl TryFrom<Vec<Vec<f64>>> for MigrationMatrix {
    type Error = String;

    fn try_from(value: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        if value.len() != SOURCE_STATES {
            return Err(format!(
                "migration matrix needs {SOURCE_STATES} rows, got {}",
                value.len()
            ));
        }
        let mut rows = [[0.0; TARGET_STATES]; SOURCE_STATES];
        for (i, row) in value.into_iter().enumerate() {
            if row.len() != TARGET_STATES {
                return Err(format!(
                    "migration matrix row {i} needs {TARGET_STATES} entries, got {}",
                    row.len()
                ));
            }
            rows[i].copy_from_slice(&row);
        }
        Ok(MigrationMatrix { rows })
    }
}

impl From<MigrationMatrix> for Vec<Vec<f64>> {
    fn from(m: MigrationMatrix) -> Self {
        m.rows.iter().map(|r| r.to_vec()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixRule {
    /// Entry outside [0, 1] (or not finite).
    OutOfRange(f64),
    /// Row does not sum to one.
    NotStochastic(f64),
    /// Non-zero entry more than one state above the diagonal.
    AboveBand(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixViolation {
    pub row: usize,
    pub column: Option<usize>,
    pub rule: MatrixRule,
}

impl fmt::Display for MatrixViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.rule, self.column) {
            (MatrixRule::NotStochastic(sum), _) => {
                write!(f, "row {} not stochastic (sums to {sum})", self.row)
            }
            (MatrixRule::OutOfRange(v), Some(j)) => {
                write!(f, "m[{}][{j}] = {v} outside [0, 1]", self.row)
            }
            (MatrixRule::AboveBand(v), Some(j)) => {
                write!(f, "m[{}][{j}] = {v}: j>i+1 must be zero", self.row)
            }
            (_, None) => write!(f, "row {}: {:?}", self.row, self.rule),
        }
    }
}

/// Lists every structural violation of `m`; empty iff the matrix is valid.
pub fn validate_matrix(m: &MigrationMatrix) -> Vec<MatrixViolation> {
    let mut out = Vec::new();
    for (i, row) in m.rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                out.push(MatrixViolation {
                    row: i,
                    column: Some(j),
                    rule: MatrixRule::OutOfRange(v),
                });
            }
            if j > i + 1 && v != 0.0 {
                out.push(MatrixViolation {
                    row: i,
                    column: Some(j),
                    rule: MatrixRule::AboveBand(v),
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
            out.push(MatrixViolation {
                row: i,
                column: None,
                rule: MatrixRule::NotStochastic(sum),
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Variables and scorecards

/// Closed vocabulary of record fields usable in scorecards, crisis rules
/// and binning conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Income,
    Spending,
    #[serde(rename = "nom_1")]
    Nom1,
    #[serde(rename = "nom_2")]
    Nom2,
    #[serde(rename = "nom_3")]
    Nom3,
    #[serde(rename = "nom_4")]
    Nom4,
    #[serde(rename = "int_1")]
    Int1,
    #[serde(rename = "int_2")]
    Int2,
    #[serde(rename = "int_3")]
    Int3,
    #[serde(rename = "int_4")]
    Int4,
    Installment,
    NInstallments,
    LoanAmount,
    ActDays,
    ActNPaid,
    ActNDue,
    ActUtl,
    ActDueutl,
    ActAge,
    ActCapacity,
    ActDueinc,
    ActLoaninc,
    ActSeniority,
    #[serde(rename = "beh_days_3")]
    BehDays3,
    #[serde(rename = "beh_days_6")]
    BehDays6,
    #[serde(rename = "beh_days_9")]
    BehDays9,
    #[serde(rename = "beh_days_12")]
    BehDays12,
    #[serde(rename = "beh_n_due_3")]
    BehNDue3,
    #[serde(rename = "beh_n_due_6")]
    BehNDue6,
    #[serde(rename = "beh_n_due_9")]
    BehNDue9,
    #[serde(rename = "beh_n_due_12")]
    BehNDue12,
}

impl Variable {
    pub const ALL: [Variable; 31] = [
        Variable::Income,
        Variable::Spending,
        Variable::Nom1,
        Variable::Nom2,
        Variable::Nom3,
        Variable::Nom4,
        Variable::Int1,
        Variable::Int2,
        Variable::Int3,
        Variable::Int4,
        Variable::Installment,
        Variable::NInstallments,
        Variable::LoanAmount,
        Variable::ActDays,
        Variable::ActNPaid,
        Variable::ActNDue,
        Variable::ActUtl,
        Variable::ActDueutl,
        Variable::ActAge,
        Variable::ActCapacity,
        Variable::ActDueinc,
        Variable::ActLoaninc,
        Variable::ActSeniority,
        Variable::BehDays3,
        Variable::BehDays6,
        Variable::BehDays9,
        Variable::BehDays12,
        Variable::BehNDue3,
        Variable::BehNDue6,
        Variable::BehNDue9,
        Variable::BehNDue12,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| format!("unknown variable `{s}`"))
    }
}

/// One standardized scorecard term: `beta * (x - mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTerm {
    pub variable: Variable,
    pub mean: f64,
    pub sd: f64,
    pub beta: f64,
}

impl ScoreTerm {
    pub fn new(variable: Variable, mean: f64, sd: f64, beta: f64) -> Self {
        ScoreTerm {
            variable,
            mean,
            sd,
            beta,
        }
    }
}

/// Normally distributed noise term of a scorecard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTerm {
    pub sd: f64,
    pub beta: f64,
}

/// Linear scorecard over standardized variables plus a noise term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSpec {
    pub intercept: f64,
    pub noise: NoiseTerm,
    pub terms: Vec<ScoreTerm>,
}

impl Default for ScoringSpec {
    /// The 28-row main scorecard of the case studies (27 variables + noise).
    fn default() -> Self {
        use Variable::*;
        let t = ScoreTerm::new;
        ScoringSpec {
            intercept: 0.0,
            noise: NoiseTerm {
                sd: 0.02916,
                beta: 1.0,
            },
            terms: vec![
                t(Nom1, 3.5, 3.0, 1.0),
                t(Nom2, 3.5, 3.0, 2.0),
                t(Nom3, 3.5, 3.0, 1.0),
                t(Nom4, 3.5, 3.0, 3.0),
                t(Int1, 5.0, 2.89, 1.0),
                t(Int2, 5.0, 2.89, -4.0),
                t(Int3, 5.0, 2.89, 1.0),
                t(Int4, 5.0, 2.89, -2.0),
                t(ActDays, 13.0, 2.42, -5.0),
                t(ActUtl, 0.36, 0.28, -4.0),
                t(ActDueutl, 0.12, 0.2, -6.0),
                t(ActNDue, 1.3, 2.0, -2.0),
                t(ActAge, 53.0, 9.9, 4.0),
                t(ActCapacity, 0.4, 0.21, -2.0),
                t(ActDueinc, 0.3, 0.6, -1.0),
                t(ActLoaninc, 2.4, 2.1, -2.0),
                t(Income, 2395.0, 1431.0, 2.0),
                t(LoanAmount, 5741.0, 6804.0, -1.0),
                t(NInstallments, 12.3, 4.63, -4.0),
                t(BehNDue3, 1.4, 1.6, -4.0),
                t(BehDays3, 14.15, 1.4, -6.0),
                t(BehNDue6, 1.6, 1.13, -5.0),
                t(BehDays6, 14.57, 1.02, -6.0),
                t(BehNDue9, 1.78, 0.75, -5.0),
                t(BehDays9, 14.78, 0.72, -6.0),
                t(BehNDue12, 1.89, 0.48, -5.0),
                t(BehDays12, 14.91, 0.49, -6.0),
            ],
        }
    }
}

impl ScoringSpec {
    /// Number of terms including the noise term.
    pub fn len(&self) -> usize {
        self.terms.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn validate(&self, ctx: &str, errors: &mut Vec<String>) {
        for (k, term) in self.terms.iter().enumerate() {
            if !(term.sd > 0.0) || !term.sd.is_finite() {
                errors.push(format!("{ctx}: term {k} ({}) needs sd > 0", term.variable));
            }
            if !term.mean.is_finite() || !term.beta.is_finite() {
                errors.push(format!("{ctx}: term {k} ({}) is not finite", term.variable));
            }
        }
        if !(self.noise.sd > 0.0) || !self.noise.sd.is_finite() {
            errors.push(format!("{ctx}: noise term needs sd > 0"));
        }
        if !self.intercept.is_finite() || !self.noise.beta.is_finite() {
            errors.push(format!("{ctx}: intercept and noise beta must be finite"));
        }
    }
}

// ---------------------------------------------------------------------------
// Crisis rule

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Comparison {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
            Comparison::Eq => lhs == rhs,
            Comparison::Ne => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Eq => "==",
            Comparison::Ne => "!=",
        }
    }
}

/// `variable <op> value`. A missing variable value never satisfies a clause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Clause {
    pub variable: Variable,
    pub op: Comparison,
    pub value: f64,
}

impl Clause {
    pub fn new(variable: Variable, op: Comparison, value: f64) -> Self {
        Clause {
            variable,
            op,
            value,
        }
    }

    pub fn holds(&self, value: Option<f64>) -> bool {
        value.is_some_and(|v| self.op.holds(v, self.value))
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.variable, self.op.symbol(), self.value)
    }
}

/// Selects which account-months receive the macro-adjusted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CycleRule {
    /// Adjusted when the linear crisis score is at or below `cutoff`.
    Linear { cutoff: f64, score: ScoringSpec },
    /// Adjusted when every clause holds (empty = always).
    Predicate { clauses: Vec<Clause> },
}

impl Default for CycleRule {
    fn default() -> Self {
        Preset::BehCase.cycle_rule()
    }
}

// ---------------------------------------------------------------------------
// Macro cycle and distributions

/// Parameters of the macro variable
/// `E(m) = floor + (level + amplitude * sin(frequency * pi * m / horizon) + noise_sd * N) / divisor`,
/// clamped into the open interval (0.01, 0.9).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroParams {
    pub floor: f64,
    pub level: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub noise_sd: f64,
    pub divisor: f64,
}

impl Default for MacroParams {
    fn default() -> Self {
        MacroParams {
            floor: 0.01,
            level: 1.5,
            amplitude: 1.0,
            frequency: 5.0,
            noise_sd: 0.2,
            divisor: 8.0,
        }
    }
}

/// Monthly application volume `base * (1 + noise_sd * N)`, times
/// `december_factor` in December.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeParams {
    pub monthly_base: f64,
    pub noise_sd: f64,
    pub december_factor: f64,
}

impl Default for VolumeParams {
    fn default() -> Self {
        VolumeParams {
            monthly_base: 300.0 * 30.0,
            noise_sd: 1.0 / 20.0,
            december_factor: 1.2,
        }
    }
}

/// `age = (max - min) * (N + shift) / divisor + offset + uniform_span * U`, clamped to [min, max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgeParams {
    pub min: f64,
    pub max: f64,
    pub shift: f64,
    pub divisor: f64,
    pub offset: f64,
    pub uniform_span: f64,
}

impl Default for AgeParams {
    fn default() -> Self {
        AgeParams {
            min: 18.0,
            max: 75.0,
            shift: 4.0,
            divisor: 7.0,
            offset: 10.0,
            uniform_span: 20.0,
        }
    }
}

/// `n_installments = max(int(scale * |N| / divisor + offset), min)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstallmentCountParams {
    pub scale: f64,
    pub divisor: f64,
    pub offset: f64,
    pub min: u32,
}

impl Default for InstallmentCountParams {
    fn default() -> Self {
        InstallmentCountParams {
            scale: 30.0,
            divisor: 4.0,
            offset: 6.0,
            min: 6,
        }
    }
}

/// Pay-day offsets: `-int(span * |N| / divisor)` while fewer than
/// `on_time_below` installments are due, else `int(span * N / divisor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayDayParams {
    pub span: f64,
    pub divisor: f64,
    pub on_time_below: u8,
}

impl Default for PayDayParams {
    fn default() -> Self {
        PayDayParams {
            span: 15.0,
            divisor: 4.0,
            on_time_below: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistParams {
    pub days_per_year: f64,
    /// `income = int(income_scale * |N| + income_floor)`.
    pub income_scale: f64,
    pub income_floor: f64,
    /// `installment = int(income * |N| / installment_divisor)`.
    pub installment_divisor: f64,
    /// `spending = int(income * |N| / spending_divisor)`.
    pub spending_divisor: f64,
    /// `nom_k = int(nominal_scale * |N|)`.
    pub nominal_scale: f64,
    /// `int_k = interval_span * U`.
    pub interval_span: f64,
    pub applications: VolumeParams,
    pub age: AgeParams,
    pub installments: InstallmentCountParams,
    pub pay_days: PayDayParams,
}

impl Default for DistParams {
    fn default() -> Self {
        DistParams {
            days_per_year: 365.5,
            income_scale: (10000.0 - 500.0) / 40.0 * 10.0,
            income_floor: 500.0,
            installment_divisor: 4.0,
            spending_divisor: 4.0,
            nominal_scale: 5.0,
            interval_span: 10.0,
            applications: VolumeParams::default(),
            age: AgeParams::default(),
            installments: InstallmentCountParams::default(),
            pay_days: PayDayParams::default(),
        }
    }
}

/// How accounts sharing a due state are ranked into transition groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmentation {
    /// All accounts in a state are ranked together; each account's group is
    /// read off its own (adjusted or unadjusted) row at its rank.
    #[default]
    SharedRank,
    /// Adjusted and unadjusted accounts are ranked separately, so each
    /// stratum's group sizes follow its row exactly.
    PerFlag,
}

// ---------------------------------------------------------------------------
// Layout

/// Complete generator parameterization. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Layout {
    pub schema_version: u32,
    /// First simulated month.
    pub start: YearMonth,
    /// Last simulated month (inclusive).
    pub end: YearMonth,
    /// Multiplier on monthly application counts.
    pub volume_scale: f64,
    pub seed: u64,
    pub migration: MigrationMatrix,
    #[serde(rename = "macro")]
    pub macro_cycle: MacroParams,
    pub scoring: ScoringSpec,
    pub cycle_rule: CycleRule,
    pub segmentation: Segmentation,
    pub distributions: DistParams,
}

impl Default for Layout {
    fn default() -> Self {
        Layout {
            schema_version: SCHEMA_VERSION,
            start: YearMonth { year: 1970, month: 1 },
            end: YearMonth { year: 1976, month: 12 },
            volume_scale: 1.0,
            seed: 1,
            migration: MigrationMatrix::default(),
            macro_cycle: MacroParams::default(),
            scoring: ScoringSpec::default(),
            cycle_rule: CycleRule::default(),
            segmentation: Segmentation::default(),
            distributions: DistParams::default(),
        }
    }
}

impl Layout {
    /// Number of simulated months, `end - start + 1`.
    pub fn horizon(&self) -> u32 {
        (self.start.months_until(self.end) + 1).max(0) as u32
    }

    pub fn calendar(&self) -> Calendar {
        Calendar::new(self.start)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_volume_scale(mut self, scale: f64) -> Self {
        self.volume_scale = scale;
        self
    }

    /// Checks every layout invariant, returning all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.end <= self.start {
            errors.push(format!("end {} must be after start {}", self.end, self.start));
        } else if self.horizon() < 13 {
            errors.push(format!(
                "horizon of {} months is shorter than 13",
                self.horizon()
            ));
        }
        if !(self.volume_scale > 0.0) || !self.volume_scale.is_finite() {
            errors.push(format!("volume_scale must be > 0, got {}", self.volume_scale));
        }
        if self.seed > i64::MAX as u64 {
            errors.push(format!("seed {} does not fit a TOML integer (max {})", self.seed, i64::MAX));
        }
        errors.extend(validate_matrix(&self.migration).iter().map(|v| v.to_string()));
        self.scoring.validate("scoring", &mut errors);
        if let CycleRule::Linear { cutoff, score } = &self.cycle_rule {
            score.validate("cycle_rule.score", &mut errors);
            if !cutoff.is_finite() {
                errors.push("cycle_rule: cutoff must be finite".into());
            }
        }
        if self.macro_cycle.divisor == 0.0 || !self.macro_cycle.divisor.is_finite() {
            errors.push("macro: divisor must be finite and non-zero".into());
        }
        let d = &self.distributions;
        let positive = [
            ("distributions.days_per_year", d.days_per_year),
            ("distributions.installment_divisor", d.installment_divisor),
            ("distributions.spending_divisor", d.spending_divisor),
            ("distributions.age.divisor", d.age.divisor),
            ("distributions.installments.divisor", d.installments.divisor),
            ("distributions.pay_days.divisor", d.pay_days.divisor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                errors.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if d.income_floor < 1.0 {
            errors.push("distributions.income_floor must be >= 1 (income is a divisor)".into());
        }
        if d.age.min > d.age.max {
            errors.push("distributions.age: min exceeds max".into());
        }
        if d.installments.min == 0 {
            errors.push("distributions.installments.min must be >= 1".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }

    pub fn from_toml_str(doc: &str) -> Result<Self, ConfigError> {
        let layout: Layout = toml::from_str(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn from_json_str(doc: &str) -> Result<Self, ConfigError> {
        let layout: Layout =
            serde_json::from_str(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    /// Canonical JSON form; the basis of run digests.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes to JSON")
    }
}

/// Loads and validates a layout file. `.json` files are read as JSON,
/// everything else as TOML.
pub fn load_layout(path: impl AsRef<Path>) -> Result<Layout, ConfigError> {
    let path = path.as_ref();
    let doc = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Layout::from_json_str(&doc)
    } else {
        Layout::from_toml_str(&doc)
    }
}

// ---------------------------------------------------------------------------
// Presets

/// The two bundled case studies. They differ only in the crisis rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Crisis hits low-income customers.
    AppCase,
    /// Crisis hits seasoned customers with recent delinquency.
    BehCase,
}

pub const APP_CASE_TOML: &str = include_str!("../presets/app_case.toml");
pub const BEH_CASE_TOML: &str = include_str!("../presets/beh_case.toml");

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::AppCase, Preset::BehCase];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AppCase => "app_case",
            Preset::BehCase => "beh_case",
        }
    }

    pub fn cycle_rule(self) -> CycleRule {
        use Comparison::*;
        let clauses = match self {
            Preset::AppCase => vec![Clause::new(Variable::Income, Lt, 1800.0)],
            Preset::BehCase => vec![
                Clause::new(Variable::BehNDue6, Gt, 0.0),
                Clause::new(Variable::ActSeniority, Gt, 6.0),
            ],
        };
        CycleRule::Predicate { clauses }
    }

    pub fn layout(self) -> Layout {
        Layout {
            cycle_rule: self.cycle_rule(),
            ..Layout::default()
        }
    }

    /// The bundled preset file contents.
    pub fn bundled_toml(self) -> &'static str {
        match self {
            Preset::AppCase => APP_CASE_TOML,
            Preset::BehCase => BEH_CASE_TOML,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "app_case" | "app" => Ok(Preset::AppCase),
            "beh_case" | "beh" => Ok(Preset::BehCase),
            _ => Err(ConfigError::UnknownPreset(s.to_owned())),
        }
    }
}

/// Looks up a bundled case study by name (`app_case`/`app`, `beh_case`/`beh`).
pub fn preset(name: &str) -> Result<Layout, ConfigError> {
    Ok(name.parse::<Preset>()?.layout())
}
