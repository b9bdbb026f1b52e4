//! Monthly iteration of the portfolio.
//!
//! Each month new applications enter as fresh accounts, closed and bad
//! accounts drop out, and every remaining account is scored. Accounts with
//! the same number of due installments are ranked by the main score and cut
//! into groups following the migration matrix row, macro-adjusted for
//! accounts the crisis rule flags. The group fixes next month's due count
//! and payment. See [`Segmentation`] for how flagged and unflagged accounts
//! share a ranking.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abt::{actuals, score, AbtRecord, Features, PaymentHistory};
use crate::config::{
    CycleRule, Layout, MigrationMatrix, Segmentation, BAD_STATE, SOURCE_STATES, TARGET_STATES,
};
use crate::error::Error;
use crate::par;
use crate::population::{ApplicationRecord, Production};
use crate::stochastic::{macro_path, sample_pay_days, Purpose, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "A")]
    Active,
    #[serde(rename = "C")]
    Closed,
    #[serde(rename = "B")]
    Bad,
}

impl Status {
    pub fn code(self) -> char {
        match self {
            Status::Active => 'A',
            Status::Closed => 'C',
            Status::Bad => 'B',
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Status::Active
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// One account-month of the transaction dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub app_id: u64,
    pub t_app: u32,
    pub t_cur: u32,
    pub n_due: u8,
    pub n_paid: u32,
    pub status: Status,
    /// Days before (negative) or after the due date; `None` when no payment.
    pub pay_days: Option<i8>,
}

/// Starting rows for the month's new applications.
pub fn insert_new_accounts(month: u32, apps: &[ApplicationRecord]) -> Vec<TransactionRecord> {
    apps.iter()
        .map(|a| {
            debug_assert_eq!(a.t_app, month);
            TransactionRecord {
                app_id: a.app_id,
                t_app: a.t_app,
                t_cur: month,
                n_due: 0,
                n_paid: 0,
                status: Status::Active,
                pay_days: Some(0),
            }
        })
        .collect()
}

/// Transition probabilities governing one stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedRow {
    pub i: usize,
    pub probs: [f64; TARGET_STATES],
    pub adjusted: bool,
}

impl AdjustedRow {
    pub fn unadjusted(m: &MigrationMatrix, i: usize) -> Self {
        AdjustedRow {
            i,
            probs: *m.row(i),
            adjusted: false,
        }
    }
}

/// Shifts macro-dependent mass from staying/improving (`j <= i`) to
/// worsening by one (`j = i + 1`); entries above the band are untouched.
pub fn adjust_matrix(m: &MigrationMatrix, i: usize, e: f64) -> AdjustedRow {
    let row = m.row(i);
    let mut probs = *row;
    let kept: f64 = row[..=i].iter().sum();
    for p in &mut probs[..=i] {
        *p *= 1.0 - e;
    }
    if i + 1 < TARGET_STATES {
        probs[i + 1] = row[i + 1] + e * kept;
    }
    AdjustedRow {
        i,
        probs,
        adjusted: true,
    }
}

/// Whether an account-month receives the adjusted matrix. `noise` feeds
/// the linear rule's noise term and is ignored by predicates.
pub fn evaluate_cycle(features: &Features<'_>, rule: &CycleRule, noise: f64) -> bool {
    match rule {
        CycleRule::Linear { cutoff, score: spec } => score(features, spec, noise) <= *cutoff,
        CycleRule::Predicate { clauses } => clauses
            .iter()
            .all(|c| c.holds(features.value(c.variable))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredAccount {
    pub app_id: u64,
    pub score: f64,
}

/// Cumulative rank boundaries: ranks `(b[g-1], b[g]]` (1-based) fall into
/// group `g`. Each boundary is the nearest integer to `cum_share * n`; the
/// last positive-probability group always ends at `n`.
pub fn group_boundaries(probs: &[f64; TARGET_STATES], n: usize) -> [usize; TARGET_STATES] {
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(TARGET_STATES - 1);
    let mut bounds = [n; TARGET_STATES];
    let mut cum = 0.0;
    let mut prev = 0usize;
    for g in 0..last {
        cum += probs[g];
        let b = ((cum * n as f64).round() as usize).clamp(prev, n);
        bounds[g] = b;
        prev = b;
    }
    bounds
}

/// Group of the account at 1-based `rank` under cumulative `bounds`.
pub fn group_at_rank(bounds: &[usize; TARGET_STATES], rank: usize) -> u8 {
    bounds.iter().position(|&b| rank <= b).unwrap_or(TARGET_STATES - 1) as u8
}

/// Ranks a stratum by descending score (ties by ascending `app_id`) and
/// assigns groups. Output is `(app_id, group)` in rank order.
pub fn segment_by_score(stratum: &[ScoredAccount], probs: &[f64; TARGET_STATES]) -> Vec<(u64, u8)> {
    let mut order: Vec<&ScoredAccount> = stratum.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));
    let bounds = group_boundaries(probs, order.len());
    order
        .iter()
        .enumerate()
        .map(|(r, acc)| (acc.app_id, group_at_rank(&bounds, r + 1)))
        .collect()
}

/// Ranks all accounts of one due state together; each account takes the
/// group that its own row assigns to its rank. `rows[0]` governs accounts
/// flagged `false`, `rows[1]` those flagged `true`. Output is in rank order.
pub fn segment_shared(
    accounts: &[(ScoredAccount, bool)],
    rows: [&[f64; TARGET_STATES]; 2],
) -> Vec<(u64, u8)> {
    let mut order: Vec<&(ScoredAccount, bool)> = accounts.iter().collect();
    order.sort_by(|a, b| rank_order(&a.0, &b.0));
    let n = order.len();
    let bounds = [group_boundaries(rows[0], n), group_boundaries(rows[1], n)];
    order
        .iter()
        .enumerate()
        .map(|(r, (acc, flag))| (acc.app_id, group_at_rank(&bounds[*flag as usize], r + 1)))
        .collect()
}

fn rank_order(a: &ScoredAccount, b: &ScoredAccount) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.app_id.cmp(&b.app_id))
}

/// Next month's row for an account in state `record` assigned to group `g`.
/// `pay_days` is only consulted when a payment is made.
pub fn apply_group(
    record: &TransactionRecord,
    n_installments: u32,
    g: u8,
    pay_days: impl FnOnce(u8) -> i8,
) -> Result<TransactionRecord, Error> {
    let i = record.n_due;
    if g > i + 1 {
        return Err(Error::Internal(format!(
            "account {} in state {i} assigned to group {g}",
            record.app_id
        )));
    }
    let mut next = TransactionRecord {
        t_cur: record.t_cur + 1,
        n_due: g,
        ..*record
    };
    if g <= i {
        next.n_paid = (record.n_paid + (i - g) as u32 + 1).min(n_installments);
        next.pay_days = Some(pay_days(i));
    } else {
        next.pay_days = None;
    }
    next.status = if next.n_paid == n_installments {
        Status::Closed
    } else if next.n_due == BAD_STATE {
        Status::Bad
    } else {
        Status::Active
    };
    Ok(next)
}

/// Group counts of one `(month, state, crisis flag)` stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub month: u32,
    pub state: u8,
    pub adjusted: bool,
    pub n: u32,
    /// Size of the ranking the group boundaries are cut from: `n` under
    /// per-flag segmentation, the whole state under shared ranking.
    pub pool_n: u32,
    pub probs: [f64; TARGET_STATES],
    pub counts: [u32; TARGET_STATES],
}

/// Everything produced for one simulated month.
#[derive(Debug, Clone, Copy)]
pub struct MonthBatch<'a> {
    pub month: u32,
    pub macro_e: f64,
    pub production: &'a Production,
    /// Rows of month `month`, ordered by `app_id`.
    pub transactions: &'a [TransactionRecord],
    /// ABT rows aligned with `transactions`.
    pub abt: &'a [AbtRecord],
    /// Segmentation of the transition from `month` to `month + 1`.
    pub strata: &'a [StratumReport],
}

/// Consumer of simulation output, one month at a time.
pub trait MonthObserver {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error>;

    fn finish(&mut self) -> Result<(), Error> {
        Ok(())
    }
}

impl<T: MonthObserver + ?Sized> MonthObserver for &mut T {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        (**self).observe(batch)
    }

    fn finish(&mut self) -> Result<(), Error> {
        (**self).finish()
    }
}

impl<T: MonthObserver> MonthObserver for Vec<T> {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        self.iter_mut().try_for_each(|o| o.observe(batch))
    }

    fn finish(&mut self) -> Result<(), Error> {
        self.iter_mut().try_for_each(|o| o.finish())
    }
}

macro_rules! tuple_observer {
    ($($name:ident),+) => {
        impl<$($name: MonthObserver),+> MonthObserver for ($($name,)+) {
            #[allow(non_snake_case)]
            fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
                let ($($name,)+) = self;
                $($name.observe(batch)?;)+
                Ok(())
            }

            #[allow(non_snake_case)]
            fn finish(&mut self) -> Result<(), Error> {
                let ($($name,)+) = self;
                $($name.finish()?;)+
                Ok(())
            }
        }
    };
}

tuple_observer!(A, B);
tuple_observer!(A, B, C);
tuple_observer!(A, B, C, D);
tuple_observer!(A, B, C, D, E);

/// Totals of a finished run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub production_rows: u64,
    pub transaction_rows: u64,
    pub closed_accounts: u64,
    pub bad_accounts: u64,
}

struct Account {
    record: TransactionRecord,
    history: PaymentHistory,
}

struct Scored {
    idx: usize,
    score: f64,
    adjusted: bool,
}

/// Runs the monthly iteration over `production`, streaming each month to `observer`.
pub fn simulate(
    layout: &Layout,
    production: &Production,
    observer: &mut impl MonthObserver,
) -> Result<RunCounts, Error> {
    let horizon = layout.horizon();
    let calendar = layout.calendar();
    let macro_e = macro_path(layout);
    let days_per_year = layout.distributions.days_per_year;
    let records = production.records();
    let mut counts = RunCounts {
        production_rows: production.len() as u64,
        ..RunCounts::default()
    };
    let mut active: Vec<Account> = Vec::new();

    for month in 0..horizon {
        // New accounts enter with the largest ids so far, keeping `active` sorted.
        for row in insert_new_accounts(month, production.month(month)) {
            if active.last().is_some_and(|a| a.record.app_id >= row.app_id) {
                return Err(Error::Internal(format!(
                    "duplicate or out-of-order app_id {} in active set",
                    row.app_id
                )));
            }
            active.push(Account {
                record: row,
                history: PaymentHistory::new(),
            });
        }
        for acc in &mut active {
            acc.history.push(&acc.record);
        }

        let date = calendar.date(month);
        let abt: Vec<AbtRecord> = par::map(&active, |acc| {
            let app = &records[acc.record.app_id as usize];
            actuals(app, &acc.record, app.age_on(date, days_per_year)).with_behavioral(&acc.history)
        });
        let transactions: Vec<TransactionRecord> = active.iter().map(|a| a.record).collect();
        counts.transaction_rows += transactions.len() as u64;

        let last_month = month + 1 == horizon;
        let e = macro_e[month as usize];
        let mut strata = Vec::new();
        let mut groups: Vec<u8> = Vec::new();
        if !last_month {
            let live: Vec<usize> = (0..active.len())
                .filter(|&k| !active[k].record.status.is_terminal())
                .collect();
            let scored: Vec<Scored> = par::map(&live, |&k| {
                let acc = &active[k];
                let app = &records[acc.record.app_id as usize];
                let features = Features::new(app, &abt[k]);
                let id = acc.record.app_id;
                let eps = RandomStream::for_account_month(layout.seed, Purpose::ScoreNoise, id, month)
                    .std_normal();
                let adjusted = match &layout.cycle_rule {
                    CycleRule::Predicate { .. } => evaluate_cycle(&features, &layout.cycle_rule, 0.0),
                    CycleRule::Linear { .. } => {
                        let eps2 = RandomStream::for_account_month(layout.seed, Purpose::CycleNoise, id, month)
                            .std_normal();
                        evaluate_cycle(&features, &layout.cycle_rule, eps2)
                    }
                };
                Scored {
                    idx: k,
                    score: score(&features, &layout.scoring, eps),
                    adjusted,
                }
            });
            groups = vec![u8::MAX; active.len()];
            segment_month(layout, month, e, &active, &scored, &mut groups, &mut strata);
        }

        observer.observe(&MonthBatch {
            month,
            macro_e: e,
            production,
            transactions: &transactions,
            abt: &abt,
            strata: &strata,
        })?;

        if last_month {
            break;
        }

        let next: Vec<Option<Result<TransactionRecord, Error>>> = par::map(
            &active.iter().zip(&groups).collect::<Vec<_>>(),
            |(acc, &g)| {
                if acc.record.status.is_terminal() {
                    return None;
                }
                let id = acc.record.app_id;
                let n_inst = records[id as usize].n_installments;
                Some(apply_group(&acc.record, n_inst, g, |i| {
                    sample_pay_days(layout, i, id, month)
                }))
            },
        );
        let mut survivors = Vec::with_capacity(active.len());
        for (acc, next) in active.into_iter().zip(next) {
            let Some(rec) = next else { continue };
            let rec = rec?;
            match rec.status {
                Status::Closed => counts.closed_accounts += 1,
                Status::Bad => counts.bad_accounts += 1,
                Status::Active => {}
            }
            survivors.push(Account {
                record: rec,
                history: acc.history,
            });
        }
        active = survivors;
    }
    observer.finish()?;
    Ok(counts)
}

fn segment_month(
    layout: &Layout,
    month: u32,
    e: f64,
    active: &[Account],
    scored: &[Scored],
    groups: &mut [u8],
    strata: &mut Vec<StratumReport>,
) {
    // `scored` follows `active`, so app ids ascend within every state.
    let mut by_state: Vec<Vec<(ScoredAccount, bool)>> = vec![Vec::new(); SOURCE_STATES];
    let mut index: Vec<Vec<usize>> = vec![Vec::new(); SOURCE_STATES];
    for s in scored {
        let rec = &active[s.idx].record;
        by_state[rec.n_due as usize].push((
            ScoredAccount {
                app_id: rec.app_id,
                score: s.score,
            },
            s.adjusted,
        ));
        index[rec.n_due as usize].push(s.idx);
    }
    for (state, members) in by_state.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let rows = [
            AdjustedRow::unadjusted(&layout.migration, state).probs,
            adjust_matrix(&layout.migration, state, e).probs,
        ];
        let mut assignment = Vec::with_capacity(members.len());
        let mut pool_n = [members.len(); 2];
        match layout.segmentation {
            Segmentation::SharedRank => assignment = segment_shared(members, [&rows[0], &rows[1]]),
            Segmentation::PerFlag => {
                for flag in [false, true] {
                    let sub: Vec<ScoredAccount> =
                        members.iter().filter(|m| m.1 == flag).map(|m| m.0).collect();
                    pool_n[flag as usize] = sub.len();
                    assignment.extend(segment_by_score(&sub, &rows[flag as usize]));
                }
            }
        }
        let mut counts = [[0u32; TARGET_STATES]; 2];
        let mut sizes = [0u32; 2];
        for (app_id, g) in assignment {
            let pos = members
                .binary_search_by(|m| m.0.app_id.cmp(&app_id))
                .expect("assigned account belongs to its state");
            groups[index[state][pos]] = g;
            let flag = members[pos].1 as usize;
            counts[flag][g as usize] += 1;
            sizes[flag] += 1;
        }
        for flag in [false, true] {
            let f = flag as usize;
            if sizes[f] == 0 {
                continue;
            }
            strata.push(StratumReport {
                month,
                state: state as u8,
                adjusted: flag,
                n: sizes[f],
                pool_n: pool_n[f] as u32,
                probs: rows[f],
                counts: counts[f],
            });
        }
    }
}

/// In-memory result of a full run. Suitable for small volumes.
#[derive(Debug, Clone, Default)]
pub struct SimulationOutput {
    pub production: Production,
    pub transactions: Vec<TransactionRecord>,
    pub abt: Vec<AbtRecord>,
    pub strata: Vec<StratumReport>,
    pub macro_e: Vec<f64>,
    pub counts: RunCounts,
}

#[derive(Default)]
struct Collector {
    transactions: Vec<TransactionRecord>,
    abt: Vec<AbtRecord>,
    strata: Vec<StratumReport>,
    macro_e: Vec<f64>,
}

impl MonthObserver for Collector {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        self.transactions.extend_from_slice(batch.transactions);
        self.abt.extend_from_slice(batch.abt);
        self.strata.extend_from_slice(batch.strata);
        self.macro_e.push(batch.macro_e);
        Ok(())
    }
}

/// Samples production and simulates the whole horizon in memory.
pub fn run_simulation(layout: &Layout) -> Result<SimulationOutput, Error> {
    layout.validate()?;
    let production = crate::population::generate_production(layout);
    run_with_production(layout, production)
}

/// Simulates a given production table in memory.
pub fn run_with_production(layout: &Layout, production: Production) -> Result<SimulationOutput, Error> {
    let mut collector = Collector::default();
    let counts = simulate(layout, &production, &mut collector)?;
    Ok(SimulationOutput {
        production,
        transactions: collector.transactions,
        abt: collector.abt,
        strata: collector.strata,
        macro_e: collector.macro_e,
        counts,
    })
}
