//! Analytical base table: actual-state and behavioral features for every
//! account-month, and standardized scorecard evaluation over them.

use serde::{Deserialize, Serialize};

use crate::config::{ScoringSpec, Variable};
use crate::engine::TransactionRecord;
use crate::population::ApplicationRecord;

/// Behavioral window lengths in months.
pub const WINDOWS: [usize; 4] = [3, 6, 9, 12];
/// Longest behavioral window; the history length kept per account.
pub const MAX_WINDOW: usize = 12;
/// `beh_days(t)` when the window is incomplete.
pub const IMPUTED_DAYS: f64 = 15.0;
/// `beh_n_due(t)` when the window is incomplete.
pub const IMPUTED_N_DUE: f64 = 2.0;
/// Offset turning signed pay days into `act_days` in [0, 30].
pub const DAYS_OFFSET: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbtRecord {
    pub app_id: u64,
    pub t_cur: u32,
    /// Pay day shifted into [0, 30]; `None` when no payment was made.
    pub act_days: Option<f64>,
    pub act_n_paid: u32,
    pub act_n_due: u8,
    pub act_utl: f64,
    pub act_dueutl: f64,
    pub act_age: f64,
    pub act_capacity: f64,
    pub act_dueinc: f64,
    pub act_loaninc: f64,
    pub act_seniority: u32,
    /// Mean `act_days` over the last 3, 6, 9 and 12 months.
    pub beh_days: [f64; 4],
    /// Mean `act_n_due` over the last 3, 6, 9 and 12 months.
    pub beh_n_due: [f64; 4],
}

/// Actual-state features of one transaction row. Behavioral fields start
/// out imputed; fill them with [`AbtRecord::with_behavioral`].
pub fn actuals(app: &ApplicationRecord, tx: &TransactionRecord, cur_age: f64) -> AbtRecord {
    debug_assert_eq!(app.app_id, tx.app_id);
    debug_assert!(tx.t_cur >= app.t_app);
    let n_inst = app.n_installments as f64;
    let income = app.income as f64;
    AbtRecord {
        app_id: tx.app_id,
        t_cur: tx.t_cur,
        act_days: tx.pay_days.map(|d| d as f64 + DAYS_OFFSET),
        act_n_paid: tx.n_paid,
        act_n_due: tx.n_due,
        act_utl: tx.n_paid as f64 / n_inst,
        act_dueutl: tx.n_due as f64 / n_inst,
        act_age: cur_age,
        act_capacity: (app.installment + app.spending) as f64 / income,
        act_dueinc: (tx.n_due as f64 * app.installment as f64) / income,
        act_loaninc: app.loan_amount as f64 / income,
        act_seniority: tx.t_cur - tx.t_app + 1,
        beh_days: [IMPUTED_DAYS; 4],
        beh_n_due: [IMPUTED_N_DUE; 4],
    }
}

/// Behavioral pair `(beh_days, beh_n_due)` for a `t`-month window.
///
/// `series[m]` is `(act_days, act_n_due)` from `m` months ago, `m = 0`
/// being the current month. An account younger than `t` months gets the
/// imputation pair `(15, 2)`. Otherwise `beh_n_due` is the plain mean, and
/// `beh_days` is the mean only when every month in the window has a pay
/// day, else 15.
pub fn behavioral(series: &[(Option<f64>, f64)], t: usize) -> (f64, f64) {
    if t == 0 || series.len() < t {
        return (IMPUTED_DAYS, IMPUTED_N_DUE);
    }
    let due: f64 = series[..t].iter().map(|x| x.1).sum();
    let days: Option<f64> = series[..t].iter().map(|x| x.0).sum();
    (days.map_or(IMPUTED_DAYS, |d| d / t as f64), due / t as f64)
}

/// The last twelve `(act_days, act_n_due)` observations of one account,
/// most recent first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PaymentHistory {
    entries: Vec<(Option<f64>, f64)>,
}

impl PaymentHistory {
    pub fn new() -> Self {
        PaymentHistory {
            entries: Vec::with_capacity(MAX_WINDOW),
        }
    }

    /// Records the current month's transaction row.
    pub fn push(&mut self, tx: &TransactionRecord) {
        if self.entries.len() == MAX_WINDOW {
            self.entries.pop();
        }
        self.entries
            .insert(0, (tx.pay_days.map(|d| d as f64 + DAYS_OFFSET), tx.n_due as f64));
    }

    pub fn series(&self) -> &[(Option<f64>, f64)] {
        &self.entries
    }
}

impl AbtRecord {
    pub fn with_behavioral(mut self, history: &PaymentHistory) -> Self {
        for (k, &t) in WINDOWS.iter().enumerate() {
            let (d, n) = behavioral(history.series(), t);
            self.beh_days[k] = d;
            self.beh_n_due[k] = n;
        }
        self
    }
}

/// Application and ABT record of one account-month, addressable by [`Variable`].
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub app: &'a ApplicationRecord,
    pub abt: &'a AbtRecord,
}

impl<'a> Features<'a> {
    pub fn new(app: &'a ApplicationRecord, abt: &'a AbtRecord) -> Self {
        Features { app, abt }
    }

    pub fn value(&self, var: Variable) -> Option<f64> {
        use Variable::*;
        let (a, r) = (self.app, self.abt);
        Some(match var {
            Income => a.income as f64,
            Spending => a.spending as f64,
            Nom1 => a.nominal[0] as f64,
            Nom2 => a.nominal[1] as f64,
            Nom3 => a.nominal[2] as f64,
            Nom4 => a.nominal[3] as f64,
            Int1 => a.interval[0],
            Int2 => a.interval[1],
            Int3 => a.interval[2],
            Int4 => a.interval[3],
            Installment => a.installment as f64,
            NInstallments => a.n_installments as f64,
            LoanAmount => a.loan_amount as f64,
            ActDays => return r.act_days,
            ActNPaid => r.act_n_paid as f64,
            ActNDue => r.act_n_due as f64,
            ActUtl => r.act_utl,
            ActDueutl => r.act_dueutl,
            ActAge => r.act_age,
            ActCapacity => r.act_capacity,
            ActDueinc => r.act_dueinc,
            ActLoaninc => r.act_loaninc,
            ActSeniority => r.act_seniority as f64,
            BehDays3 => r.beh_days[0],
            BehDays6 => r.beh_days[1],
            BehDays9 => r.beh_days[2],
            BehDays12 => r.beh_days[3],
            BehNDue3 => r.beh_n_due[0],
            BehNDue6 => r.beh_n_due[1],
            BehNDue9 => r.beh_n_due[2],
            BehNDue12 => r.beh_n_due[3],
        })
    }
}

/// Standardized term values `(x - mean) / sd` in scorecard order, followed
/// by the noise term `noise / noise.sd`, where `noise` is a standard-normal
/// draw. A missing variable standardizes to 0.
pub fn standardize(features: &Features<'_>, spec: &ScoringSpec, noise: f64) -> Vec<f64> {
    let mut out: Vec<f64> = spec
        .terms
        .iter()
        .map(|t| features.value(t.variable).map_or(0.0, |x| (x - t.mean) / t.sd))
        .collect();
    out.push(noise / spec.noise.sd);
    out
}

/// `intercept + sum(beta * z) + noise.beta * noise / noise.sd`.
pub fn score(features: &Features<'_>, spec: &ScoringSpec, noise: f64) -> f64 {
    let mut s = spec.intercept + spec.noise.beta * noise / spec.noise.sd;
    for t in &spec.terms {
        if let Some(x) = features.value(t.variable) {
            s += t.beta * (x - t.mean) / t.sd;
        }
    }
    s
}
