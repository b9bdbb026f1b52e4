//! Structural invariants of generated datasets, checked either while a run
//! streams ([`StructuralChecker`] as an observer) or over files on disk
//! ([`verify_dir`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{BAD_STATE, SOURCE_STATES, TARGET_STATES};
use crate::engine::{group_boundaries, MonthBatch, MonthObserver, Status, StratumReport, TransactionRecord};
use crate::error::Error;
use crate::io::{read_strata, read_transactions, OutputDir, ProductionRow};
use crate::population::ApplicationRecord;

/// Stored violations are capped; the per-rule totals are not.
const MAX_STORED: usize = 200;
const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub app_id: Option<u64>,
    pub month: Option<u32>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        if let Some(id) = self.app_id {
            write!(f, " [app {id}]")?;
        }
        if let Some(m) = self.month {
            write!(f, " [month {m}]")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub rows_checked: u64,
    pub strata_checked: u64,
    pub totals: BTreeMap<String, u64>,
    pub violations: Vec<Violation>,
}

impl CheckReport {
    pub fn is_ok(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.totals.values().sum()
    }

    pub fn count(&self, rule: &str) -> u64 {
        self.totals.get(rule).copied().unwrap_or(0)
    }

    fn push(&mut self, rule: &str, app_id: Option<u64>, month: Option<u32>, detail: String) {
        *self.totals.entry(rule.to_string()).or_default() += 1;
        if self.violations.len() < MAX_STORED {
            self.violations.push(Violation {
                rule: rule.to_string(),
                app_id,
                month,
                detail,
            });
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Last {
    t_cur: u32,
    n_due: u8,
    n_paid: u32,
    status: Status,
}

type Tally = [[u64; TARGET_STATES]; SOURCE_STATES];

/// Row-by-row invariant checker. Feed transaction rows in file order, then
/// strata, then call [`StructuralChecker::report`].
#[derive(Debug, Default)]
pub struct StructuralChecker {
    n_installments: Vec<u32>,
    last: Vec<Option<Last>>,
    prev_key: Option<(u32, u64)>,
    /// Observed `i -> j` moves out of each month.
    moves: Vec<Tally>,
    /// Moves implied by each month's strata.
    expected: Vec<Tally>,
    /// Active rows per state and month, against the strata sizes.
    active: Vec<[u64; SOURCE_STATES]>,
    strata_n: Vec<[u64; SOURCE_STATES]>,
    max_month: u32,
    production_seen: bool,
    report: CheckReport,
}

fn grow<T: Default + Clone>(v: &mut Vec<T>, month: u32) {
    if v.len() <= month as usize {
        v.resize(month as usize + 1, T::default());
    }
}

impl StructuralChecker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check_production<'a>(&mut self, records: impl IntoIterator<Item = &'a ApplicationRecord>) {
        self.production_seen = true;
        for (pos, r) in records.into_iter().enumerate() {
            if r.app_id != pos as u64 {
                self.report.push(
                    "production ids",
                    Some(r.app_id),
                    Some(r.t_app),
                    format!("expected dense id {pos}"),
                );
            }
            if r.loan_amount != r.installment * r.n_installments as i64 {
                self.report.push(
                    "loan amount",
                    Some(r.app_id),
                    Some(r.t_app),
                    format!("{} != {} * {}", r.loan_amount, r.installment, r.n_installments),
                );
            }
            let id = r.app_id as usize;
            if self.n_installments.len() <= id {
                self.n_installments.resize(id + 1, 0);
            }
            self.n_installments[id] = r.n_installments;
        }
        self.last = vec![None; self.n_installments.len()];
    }

    pub fn check_row(&mut self, r: &TransactionRecord) {
        self.report.rows_checked += 1;
        let rep = &mut self.report;
        let (id, m) = (Some(r.app_id), Some(r.t_cur));
        let key = (r.t_cur, r.app_id);
        if self.prev_key.is_some_and(|p| p >= key) {
            rep.push("row order", id, m, format!("follows {:?}", self.prev_key.unwrap()));
        }
        self.prev_key = Some(key);
        self.max_month = self.max_month.max(r.t_cur);

        let Some(&n_inst) = self.n_installments.get(r.app_id as usize) else {
            rep.push("unknown account", id, m, "no production row".into());
            return;
        };
        if r.n_due > BAD_STATE || r.n_paid > n_inst {
            rep.push("range", id, m, format!("n_due {} n_paid {}", r.n_due, r.n_paid));
            return;
        }
        if r.pay_days.is_some_and(|d| !(-15..=15).contains(&d)) {
            rep.push("pay days", id, m, format!("{:?} outside [-15, 15]", r.pay_days));
        }
        let expected_status = if r.n_paid == n_inst {
            Status::Closed
        } else if r.n_due == BAD_STATE {
            Status::Bad
        } else {
            Status::Active
        };
        if r.status != expected_status {
            let rule = match r.status {
                Status::Closed => "closed status",
                Status::Bad => "bad status",
                Status::Active => "active status",
            };
            rep.push(
                rule,
                id,
                m,
                format!("status {} with n_due {} n_paid {}/{}", r.status, r.n_due, r.n_paid, n_inst),
            );
        }
        if r.status == Status::Active {
            grow(&mut self.active, r.t_cur);
            self.active[r.t_cur as usize][r.n_due as usize] += 1;
        }

        let slot = &mut self.last[r.app_id as usize];
        match *slot {
            None => {
                if r.t_cur != r.t_app {
                    rep.push("contiguity", id, m, format!("first row is not in t_app {}", r.t_app));
                }
                if (r.n_due, r.n_paid, r.pay_days) != (0, 0, Some(0)) {
                    rep.push(
                        "insertion row",
                        id,
                        m,
                        format!("n_due {} n_paid {} pay_days {:?}", r.n_due, r.n_paid, r.pay_days),
                    );
                }
            }
            Some(prev) => {
                if prev.status.is_terminal() {
                    rep.push("status absorption", id, m, format!("row after status {}", prev.status));
                }
                if r.t_cur != prev.t_cur + 1 {
                    rep.push("contiguity", id, m, format!("previous row in month {}", prev.t_cur));
                }
                if r.n_paid < prev.n_paid {
                    rep.push("n_paid monotone", id, m, format!("{} -> {}", prev.n_paid, r.n_paid));
                }
                if r.n_due > prev.n_due + 1 {
                    rep.push("n_due step", id, m, format!("{} -> {}", prev.n_due, r.n_due));
                } else if r.n_due == prev.n_due + 1 {
                    if r.n_paid != prev.n_paid || r.pay_days.is_some() {
                        rep.push(
                            "payment rule",
                            id,
                            m,
                            format!("missed payment with n_paid {} -> {} pay_days {:?}", prev.n_paid, r.n_paid, r.pay_days),
                        );
                    }
                } else {
                    let paid = (prev.n_paid + (prev.n_due - r.n_due) as u32 + 1).min(n_inst);
                    if r.n_paid != paid || r.pay_days.is_none() {
                        rep.push(
                            "payment rule",
                            id,
                            m,
                            format!("payment with n_paid {} -> {} (expected {paid}) pay_days {:?}", prev.n_paid, r.n_paid, r.pay_days),
                        );
                    }
                }
                if !prev.status.is_terminal() && r.t_cur == prev.t_cur + 1 && r.n_due <= prev.n_due + 1 {
                    grow(&mut self.moves, prev.t_cur);
                    self.moves[prev.t_cur as usize][prev.n_due as usize][r.n_due as usize] += 1;
                }
            }
        }
        *slot = Some(Last {
            t_cur: r.t_cur,
            n_due: r.n_due,
            n_paid: r.n_paid,
            status: r.status,
        });
    }

    pub fn check_stratum(&mut self, s: &StratumReport) {
        self.report.strata_checked += 1;
        let rep = &mut self.report;
        let month = Some(s.month);
        let i = s.state as usize;
        if i >= SOURCE_STATES {
            rep.push("stratum row", None, month, format!("state {i}"));
            return;
        }
        let sum: f64 = s.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE || s.probs.iter().any(|&p| p < 0.0) {
            rep.push("stratum row", None, month, format!("state {i} row sums to {sum}"));
        }
        if s.probs.iter().skip(i + 2).any(|&p| p != 0.0) {
            rep.push("stratum row", None, month, format!("state {i} row has mass above the band"));
        }
        let total: u64 = s.counts.iter().map(|&c| c as u64).sum();
        if total != s.n as u64 {
            rep.push("segmentation proportion", None, month, format!("state {i} counts sum to {total}, n = {}", s.n));
        }
        if s.pool_n < s.n {
            rep.push("segmentation proportion", None, month, format!("state {i} pool {} < n {}", s.pool_n, s.n));
        } else if s.n > 0 {
            // a stratum ranked inside a larger pool can hold at most the
            // pool's share of each group; a stratum ranked alone must hit it
            let bounds = group_boundaries(&s.probs, s.pool_n as usize);
            let n = s.n as f64;
            for (g, (&c, &p)) in s.counts.iter().zip(&s.probs).enumerate() {
                let width = bounds[g] - if g == 0 { 0 } else { bounds[g - 1] };
                let off = if s.pool_n == s.n { (c as f64 / n - p).abs() > 1.0 / n + 1e-9 } else { c as usize > width };
                if off {
                    rep.push(
                        "segmentation proportion",
                        None,
                        month,
                        format!("state {i} group {g}: {c}/{} vs p = {p}", s.n),
                    );
                }
            }
        }
        grow(&mut self.expected, s.month);
        grow(&mut self.strata_n, s.month);
        self.strata_n[s.month as usize][i] += s.n as u64;
        for (g, &c) in s.counts.iter().enumerate() {
            // group i + 1 moves to state i + 1, every other group g to state g
            if g <= i + 1 {
                self.expected[s.month as usize][i][g] += c as u64;
            }
        }
    }

    /// Cross-checks the strata against observed moves and returns the result.
    pub fn report(mut self) -> CheckReport {
        if !self.production_seen {
            self.report.push("missing dataset", None, None, "no production rows".into());
        }
        let months = self.max_month as usize;
        for m in 0..months {
            let active = self.active.get(m).copied().unwrap_or_default();
            let strata = self.strata_n.get(m).copied().unwrap_or_default();
            if active != strata {
                self.report.push(
                    "strata coverage",
                    None,
                    Some(m as u32),
                    format!("active rows by state {active:?} vs strata sizes {strata:?}"),
                );
            }
            let moves = self.moves.get(m).copied().unwrap_or_default();
            let expected = self.expected.get(m).copied().unwrap_or_default();
            if moves != expected {
                self.report.push(
                    "transition counts",
                    None,
                    Some(m as u32),
                    "observed moves differ from stratum group counts".into(),
                );
            }
        }
        self.report
    }
}

impl MonthObserver for StructuralChecker {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        if !self.production_seen {
            self.check_production(batch.production.records());
        }
        for r in batch.transactions {
            self.check_row(r);
        }
        for s in batch.strata {
            self.check_stratum(s);
        }
        Ok(())
    }
}

/// Re-checks every structural invariant over the datasets in `dir`.
/// Missing or unreadable datasets are reported as violations.
pub fn verify_dir(dir: &OutputDir) -> CheckReport {
    let mut checker = StructuralChecker::new();
    let mut early = CheckReport::default();
    for path in [dir.production(), dir.transaction(), dir.strata()] {
        if !path.is_file() {
            early.push("missing dataset", None, None, path.display().to_string());
        }
    }
    if !early.is_ok() {
        return early;
    }
    let unreadable = |e: Error| {
        let mut r = CheckReport::default();
        r.push("unreadable dataset", None, None, e.to_string());
        r
    };

    let production: Result<Vec<ApplicationRecord>, Error> = csv::Reader::from_path(dir.production())
        .map_err(Error::from)
        .and_then(|rd| {
            rd.into_deserialize::<ProductionRow>()
                .map(|r| r.map(ApplicationRecord::from).map_err(Error::from))
                .collect()
        });
    match production {
        Ok(records) => checker.check_production(&records),
        Err(e) => return unreadable(e),
    }
    match read_transactions(&dir.transaction()) {
        Ok(rows) => {
            for r in rows {
                match r {
                    Ok(r) => checker.check_row(&r),
                    Err(e) => return unreadable(e),
                }
            }
        }
        Err(e) => return unreadable(e),
    }
    match read_strata(&dir.strata()) {
        Ok(strata) => strata.iter().for_each(|s| checker.check_stratum(s)),
        Err(e) => return unreadable(e),
    }
    checker.report()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Layout;
    use crate::engine::run_simulation;

    fn checked(out: &crate::engine::SimulationOutput) -> CheckReport {
        let mut c = StructuralChecker::new();
        c.check_production(out.production.records());
        out.transactions.iter().for_each(|r| c.check_row(r));
        out.strata.iter().for_each(|s| c.check_stratum(s));
        c.report()
    }

    #[test]
    fn clean_run_passes() {
        let out = run_simulation(&Layout::default().with_volume_scale(0.003).with_seed(9)).unwrap();
        let rep = checked(&out);
        assert!(rep.is_ok(), "{:?}", rep.violations);
        assert_eq!(rep.rows_checked, out.transactions.len() as u64);
    }

    #[test]
    fn detects_tampering() {
        let out = run_simulation(&Layout::default().with_volume_scale(0.003).with_seed(9)).unwrap();
        let k = out
            .transactions
            .iter()
            .position(|r| r.t_cur > r.t_app && r.status == Status::Active && r.n_due < 5)
            .unwrap();
        let mut bad = out.clone();
        bad.transactions[k].n_due += 2;
        assert!(checked(&bad).count("n_due step") > 0);

        let mut bad = out.clone();
        let k = bad.transactions.iter().position(|r| r.n_paid > 1).unwrap();
        bad.transactions[k].n_paid -= 2;
        assert!(checked(&bad).count("n_paid monotone") > 0);

        let mut bad = out.clone();
        let k = bad.transactions.iter().position(|r| r.status == Status::Closed).unwrap();
        let mut extra = bad.transactions[k];
        extra.t_cur += 1;
        bad.transactions.push(extra);
        let rep = checked(&bad);
        assert!(rep.count("status absorption") > 0);
        assert!(rep.count("row order") > 0);

        let mut bad = out.clone();
        bad.strata[0].counts.swap(0, 1);
        assert!(checked(&bad).count("segmentation proportion") > 0);
    }

    #[test]
    fn empty_dir_is_missing_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let rep = verify_dir(&OutputDir::new(dir.path()));
        assert!(rep.count("missing dataset") >= 3);
    }
}
