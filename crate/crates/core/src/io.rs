//! CSV datasets and reports.
//!
//! Schema version 1. Every file has a header row; missing values are empty
//! fields; floats use the shortest representation that round-trips.
//!
//! | file | row order | columns |
//! |---|---|---|
//! | `production.csv` | `t_app, app_id` | [`ProductionRow`] |
//! | `transaction.csv` | `t_cur, app_id` | [`TransactionRow`] |
//! | `abt.csv` | `t_cur, app_id` | [`AbtRow`] |
//! | `strata.csv` | `month, state, adjusted, n, pool_n` | [`StrataRow`] |

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::abt::AbtRecord;
use crate::analytics::{BadRatePoint, BinningReport, FlowRatePoint, VintageRow};
use crate::config::{Calendar, YearMonth, TARGET_STATES};
use crate::engine::{MonthBatch, MonthObserver, Status, StratumReport, TransactionRecord};
use crate::error::Error;
use crate::population::{ApplicationRecord, Production};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const PRODUCTION_FILE: &str = "production.csv";
pub const TRANSACTION_FILE: &str = "transaction.csv";
pub const ABT_FILE: &str = "abt.csv";
pub const STRATA_FILE: &str = "strata.csv";
pub const REPORTS_DIR: &str = "reports";
pub const MANIFEST_FILE: &str = "manifest.json";

/// File locations inside an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputDir { root: root.into() }
    }

    pub fn production(&self) -> PathBuf {
        self.root.join(PRODUCTION_FILE)
    }

    pub fn transaction(&self) -> PathBuf {
        self.root.join(TRANSACTION_FILE)
    }

    pub fn abt(&self) -> PathBuf {
        self.root.join(ABT_FILE)
    }

    pub fn strata(&self) -> PathBuf {
        self.root.join(STRATA_FILE)
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join(REPORTS_DIR)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionRow {
    pub app_id: u64,
    pub t_app: u32,
    pub app_month: YearMonth,
    pub birth: NaiveDate,
    pub income: i64,
    pub spending: i64,
    pub installment: i64,
    pub n_installments: u32,
    pub loan_amount: i64,
    pub nom_1: u32,
    pub nom_2: u32,
    pub nom_3: u32,
    pub nom_4: u32,
    pub int_1: f64,
    pub int_2: f64,
    pub int_3: f64,
    pub int_4: f64,
}

impl ProductionRow {
    pub fn new(r: &ApplicationRecord, calendar: &Calendar) -> Self {
        ProductionRow {
            app_id: r.app_id,
            t_app: r.t_app,
            app_month: calendar.year_month(r.t_app),
            birth: r.birth,
            income: r.income,
            spending: r.spending,
            installment: r.installment,
            n_installments: r.n_installments,
            loan_amount: r.loan_amount,
            nom_1: r.nominal[0],
            nom_2: r.nominal[1],
            nom_3: r.nominal[2],
            nom_4: r.nominal[3],
            int_1: r.interval[0],
            int_2: r.interval[1],
            int_3: r.interval[2],
            int_4: r.interval[3],
        }
    }
}

impl From<ProductionRow> for ApplicationRecord {
    fn from(r: ProductionRow) -> Self {
        ApplicationRecord {
            app_id: r.app_id,
            t_app: r.t_app,
            birth: r.birth,
            income: r.income,
            spending: r.spending,
            installment: r.installment,
            n_installments: r.n_installments,
            loan_amount: r.loan_amount,
            nominal: [r.nom_1, r.nom_2, r.nom_3, r.nom_4],
            interval: [r.int_1, r.int_2, r.int_3, r.int_4],
        }
    }
}

/// Same columns as [`TransactionRecord`]; `pay_days` is empty when missing.
pub type TransactionRow = TransactionRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbtRow {
    pub app_id: u64,
    pub t_cur: u32,
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
    pub beh_days_3: f64,
    pub beh_days_6: f64,
    pub beh_days_9: f64,
    pub beh_days_12: f64,
    pub beh_n_due_3: f64,
    pub beh_n_due_6: f64,
    pub beh_n_due_9: f64,
    pub beh_n_due_12: f64,
}

impl From<&AbtRecord> for AbtRow {
    fn from(r: &AbtRecord) -> Self {
        AbtRow {
            app_id: r.app_id,
            t_cur: r.t_cur,
            act_days: r.act_days,
            act_n_paid: r.act_n_paid,
            act_n_due: r.act_n_due,
            act_utl: r.act_utl,
            act_dueutl: r.act_dueutl,
            act_age: r.act_age,
            act_capacity: r.act_capacity,
            act_dueinc: r.act_dueinc,
            act_loaninc: r.act_loaninc,
            act_seniority: r.act_seniority,
            beh_days_3: r.beh_days[0],
            beh_days_6: r.beh_days[1],
            beh_days_9: r.beh_days[2],
            beh_days_12: r.beh_days[3],
            beh_n_due_3: r.beh_n_due[0],
            beh_n_due_6: r.beh_n_due[1],
            beh_n_due_9: r.beh_n_due[2],
            beh_n_due_12: r.beh_n_due[3],
        }
    }
}

/// One stratum of the month-to-month segmentation: governing row
/// probabilities `p_j` and realized group counts `c_j`. `pool_n` is the size
/// of the ranking the group boundaries were cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataRow {
    pub month: u32,
    pub state: u8,
    pub adjusted: u8,
    pub n: u32,
    pub pool_n: u32,
    pub p_0: f64,
    pub p_1: f64,
    pub p_2: f64,
    pub p_3: f64,
    pub p_4: f64,
    pub p_5: f64,
    pub p_6: f64,
    pub p_7: f64,
    pub c_0: u32,
    pub c_1: u32,
    pub c_2: u32,
    pub c_3: u32,
    pub c_4: u32,
    pub c_5: u32,
    pub c_6: u32,
    pub c_7: u32,
}

impl From<&StratumReport> for StrataRow {
    fn from(s: &StratumReport) -> Self {
        let [p_0, p_1, p_2, p_3, p_4, p_5, p_6, p_7] = s.probs;
        let [c_0, c_1, c_2, c_3, c_4, c_5, c_6, c_7] = s.counts;
        StrataRow {
            month: s.month,
            state: s.state,
            adjusted: s.adjusted as u8,
            n: s.n,
            pool_n: s.pool_n,
            p_0,
            p_1,
            p_2,
            p_3,
            p_4,
            p_5,
            p_6,
            p_7,
            c_0,
            c_1,
            c_2,
            c_3,
            c_4,
            c_5,
            c_6,
            c_7,
        }
    }
}

impl From<StrataRow> for StratumReport {
    fn from(r: StrataRow) -> Self {
        StratumReport {
            month: r.month,
            state: r.state,
            adjusted: r.adjusted != 0,
            n: r.n,
            pool_n: r.pool_n,
            probs: [r.p_0, r.p_1, r.p_2, r.p_3, r.p_4, r.p_5, r.p_6, r.p_7],
            counts: [r.c_0, r.c_1, r.c_2, r.c_3, r.c_4, r.c_5, r.c_6, r.c_7],
        }
    }
}

type CsvOut = csv::Writer<BufWriter<File>>;

fn create_writer(path: &Path) -> Result<CsvOut, Error> {
    let file = File::create(path)?;
    Ok(csv::Writer::from_writer(BufWriter::with_capacity(1 << 20, file)))
}

/// Row counts written by a [`CsvSink`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrittenRows {
    pub production: u64,
    pub transaction: u64,
    pub abt: u64,
    pub strata: u64,
}

/// Observer streaming every month straight to the dataset files.
pub struct CsvSink {
    dir: OutputDir,
    calendar: Calendar,
    production_written: bool,
    transaction: CsvOut,
    abt: CsvOut,
    strata: CsvOut,
    rows: WrittenRows,
}

impl CsvSink {
    pub fn create(dir: &OutputDir, calendar: Calendar) -> Result<Self, Error> {
        fs::create_dir_all(&dir.root)?;
        Ok(CsvSink {
            dir: dir.clone(),
            calendar,
            production_written: false,
            transaction: create_writer(&dir.transaction())?,
            abt: create_writer(&dir.abt())?,
            strata: create_writer(&dir.strata())?,
            rows: WrittenRows::default(),
        })
    }

    pub fn rows(&self) -> WrittenRows {
        self.rows
    }
}

impl MonthObserver for CsvSink {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        if !self.production_written {
            self.rows.production = write_production(&self.dir.production(), batch.production, &self.calendar)?;
            self.production_written = true;
        }
        for r in batch.transactions {
            self.transaction.serialize(r)?;
        }
        for r in batch.abt {
            self.abt.serialize(AbtRow::from(r))?;
        }
        for s in batch.strata {
            self.strata.serialize(StrataRow::from(s))?;
        }
        self.rows.transaction += batch.transactions.len() as u64;
        self.rows.abt += batch.abt.len() as u64;
        self.rows.strata += batch.strata.len() as u64;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), Error> {
        self.transaction.flush()?;
        self.abt.flush()?;
        self.strata.flush()?;
        Ok(())
    }
}

pub fn write_production(path: &Path, production: &Production, calendar: &Calendar) -> Result<u64, Error> {
    let mut w = create_writer(path)?;
    for r in production.records() {
        w.serialize(ProductionRow::new(r, calendar))?;
    }
    w.flush()?;
    Ok(production.len() as u64)
}

fn open_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>, Error> {
    let file = File::open(path)?;
    Ok(csv::Reader::from_reader(BufReader::with_capacity(1 << 20, file)))
}

pub fn read_production(path: &Path, months: u32) -> Result<Production, Error> {
    let records = open_reader(path)?
        .into_deserialize::<ProductionRow>()
        .map(|r| r.map(ApplicationRecord::from).map_err(Error::from))
        .collect::<Result<Vec<_>, Error>>()?;
    Production::from_records(records, months).map_err(Error::Internal)
}

/// Streams `transaction.csv` in file order.
pub fn read_transactions(path: &Path) -> Result<impl Iterator<Item = Result<TransactionRecord, Error>>, Error> {
    Ok(open_reader(path)?
        .into_deserialize::<TransactionRow>()
        .map(|r| r.map_err(Error::from)))
}

pub fn read_strata(path: &Path) -> Result<Vec<StratumReport>, Error> {
    open_reader(path)?
        .into_deserialize::<StrataRow>()
        .map(|r| r.map(StratumReport::from).map_err(Error::from))
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

fn fraction(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = create_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// `bad_rates_<portfolio>_<t>.csv`:
/// `t_obs,year_month,n,good,bad,indeterminate,unobservable,bad_rate`.
pub fn write_bad_rates(path: &Path, series: &[BadRatePoint], calendar: &Calendar) -> Result<(), Error> {
    write_table(
        path,
        &["t_obs", "year_month", "n", "good", "bad", "indeterminate", "unobservable", "bad_rate"],
        series.iter().map(|p| {
            vec![
                p.t_obs.to_string(),
                calendar.year_month(p.t_obs).to_string(),
                p.n().to_string(),
                p.counts.good.to_string(),
                p.counts.bad.to_string(),
                p.counts.indeterminate.to_string(),
                p.counts.unobservable.to_string(),
                fraction(p.rate()),
            ]
        }),
    )
}

/// `flow_rate_<i><j>.csv`: `month,year_month,from,to,rate`; `month` is the
/// origin month of the `month -> month + 1` transition.
pub fn write_flow_rate(path: &Path, series: &[FlowRatePoint], calendar: &Calendar) -> Result<(), Error> {
    write_table(
        path,
        &["month", "year_month", "from", "to", "rate"],
        series.iter().map(|p| {
            vec![
                p.month.to_string(),
                calendar.year_month(p.month).to_string(),
                p.from.to_string(),
                p.to.to_string(),
                fraction(p.rate),
            ]
        }),
    )
}

/// `vintage.csv`: `t_app,year_month,accounts,s_1..s_H`, cumulative Bad
/// share by seniority; empty past the horizon.
pub fn write_vintage(path: &Path, rows: &[VintageRow], calendar: &Calendar, horizon: u32) -> Result<(), Error> {
    let mut header: Vec<String> = vec!["t_app".into(), "year_month".into(), "accounts".into()];
    header.extend((1..=horizon).map(|s| format!("s_{s}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        path,
        &header,
        rows.iter().map(|r| {
            let mut out = vec![
                r.t_app.to_string(),
                calendar.year_month(r.t_app).to_string(),
                r.accounts.to_string(),
            ];
            out.extend(r.cells.iter().map(|c| fraction(*c)));
            out
        }),
    )
}

/// `binning_<case>.csv`: one row per attribute,
/// `characteristic,window,attribute,condition,n,good,bad,indeterminate,bad_rate,population,gini_binned,gini_raw`.
pub fn write_binning(path: &Path, reports: &[BinningReport]) -> Result<(), Error> {
    write_table(
        path,
        &[
            "characteristic",
            "window",
            "attribute",
            "condition",
            "n",
            "good",
            "bad",
            "indeterminate",
            "bad_rate",
            "population",
            "gini_binned",
            "gini_raw",
        ],
        reports.iter().flat_map(|rep| {
            rep.attributes.iter().map(move |a| {
                vec![
                    rep.characteristic.clone(),
                    rep.window.to_string(),
                    a.label.clone(),
                    a.condition.clone(),
                    a.counts.labeled().to_string(),
                    a.counts.good.to_string(),
                    a.counts.bad.to_string(),
                    a.counts.indeterminate.to_string(),
                    fraction(a.bad_rate),
                    a.population.to_string(),
                    rep.gini_binned.to_string(),
                    rep.gini_raw.to_string(),
                ]
            })
        }),
    )
}

/// Status codes as written in `transaction.csv`.
pub fn parse_status(code: &str) -> Option<Status> {
    match code {
        "A" => Some(Status::Active),
        "C" => Some(Status::Closed),
        "B" => Some(Status::Bad),
        _ => None,
    }
}

/// Column count of the strata file, for schema checks.
pub const STRATA_COLUMNS: usize = 5 + 2 * TARGET_STATES;
