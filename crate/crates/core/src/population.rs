//! Production dataset: every loan application with its customer
//! characteristics and credit properties.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::config::Layout;
use crate::par;
use crate::stochastic::{sample_applicant, sample_applications_count};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationRecord {
    pub app_id: u64,
    /// Application month index.
    pub t_app: u32,
    pub birth: NaiveDate,
    pub income: i64,
    pub spending: i64,
    pub installment: i64,
    pub n_installments: u32,
    /// Always `installment * n_installments`.
    pub loan_amount: i64,
    pub nominal: [u32; 4],
    pub interval: [f64; 4],
}

impl ApplicationRecord {
    /// Age in years on `date`, using the generator's 365.5-day year.
    pub fn age_on(&self, date: NaiveDate, days_per_year: f64) -> f64 {
        (date - self.birth).num_days() as f64 / days_per_year
    }
}

/// All applications, ordered by `(t_app, app_id)`. `app_id` equals the
/// record's position, so lookups are direct indexing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Production {
    records: Vec<ApplicationRecord>,
    /// `month_starts[m]..month_starts[m + 1]` are the applications of month `m`.
    month_starts: Vec<usize>,
}

impl Production {
    pub fn records(&self) -> &[ApplicationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn months(&self) -> u32 {
        self.month_starts.len().saturating_sub(1) as u32
    }

    pub fn month(&self, month: u32) -> &[ApplicationRecord] {
        let m = month as usize;
        if m + 1 >= self.month_starts.len() {
            return &[];
        }
        &self.records[self.month_starts[m]..self.month_starts[m + 1]]
    }

    pub fn get(&self, app_id: u64) -> Option<&ApplicationRecord> {
        self.records.get(app_id as usize)
    }

    /// Rebuilds a production table from records sorted by `(t_app, app_id)`
    /// with dense ids starting at zero.
    pub fn from_records(records: Vec<ApplicationRecord>, months: u32) -> Result<Self, String> {
        let mut month_starts = vec![0usize; months as usize + 1];
        for (pos, r) in records.iter().enumerate() {
            if r.app_id != pos as u64 {
                return Err(format!("app_id {} at position {pos} is not dense", r.app_id));
            }
            if r.t_app >= months {
                return Err(format!("app_id {} has t_app {} beyond horizon", r.app_id, r.t_app));
            }
            if pos > 0 && records[pos - 1].t_app > r.t_app {
                return Err(format!("app_id {} breaks month order", r.app_id));
            }
            month_starts[r.t_app as usize + 1] += 1;
        }
        for m in 1..month_starts.len() {
            month_starts[m] += month_starts[m - 1];
        }
        Ok(Production {
            records,
            month_starts,
        })
    }
}

fn build_record(layout: &Layout, app_id: u64, month: u32, app_date: NaiveDate) -> ApplicationRecord {
    let draw = sample_applicant(layout, app_id);
    let days = (draw.age * layout.distributions.days_per_year).trunc() as i64;
    ApplicationRecord {
        app_id,
        t_app: month,
        birth: app_date - Duration::days(days),
        income: draw.income,
        spending: draw.spending,
        installment: draw.installment,
        n_installments: draw.n_installments,
        loan_amount: draw.installment * draw.n_installments as i64,
        nominal: draw.nominal,
        interval: draw.interval,
    }
}

/// Applications of a single month, numbered from `first_id`.
pub fn generate_month(layout: &Layout, month: u32, first_id: u64) -> Vec<ApplicationRecord> {
    let count = sample_applications_count(layout, month) as u64;
    let app_date = layout.calendar().date(month);
    let ids: Vec<u64> = (first_id..first_id + count).collect();
    par::map(&ids, |&id| build_record(layout, id, month, app_date))
}

/// Samples the whole production dataset for the layout's horizon.
pub fn generate_production(layout: &Layout) -> Production {
    let horizon = layout.horizon();
    let mut records = Vec::new();
    let mut month_starts = Vec::with_capacity(horizon as usize + 1);
    for month in 0..horizon {
        month_starts.push(records.len());
        let batch = generate_month(layout, month, records.len() as u64);
        records.extend(batch);
    }
    month_starts.push(records.len());
    Production {
        records,
        month_starts,
    }
}
