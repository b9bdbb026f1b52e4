//! WebAssembly bindings behind `www/index.html`. Each export has a plain
//! Rust twin so it can be tested natively.

use loansim_core::analytics::{argmax_month, flow_rate_series, AccountPaths, BinningCollector, BinningReport, Pool, Portfolio};
use loansim_core::config::{Layout, Preset, SOURCE_STATES};
use loansim_core::engine::{adjust_matrix, simulate};
use loansim_core::population::generate_production;
use loansim_core::stochastic::macro_path;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest volume scale the page will run; about 7.8k accounts.
pub const MAX_SCALE: f64 = 0.01;

fn layout(case: &str, seed: u32) -> Result<Layout, String> {
    let p: Preset = case.parse().map_err(|e| format!("{e}"))?;
    Ok(p.layout().with_seed(seed as u64))
}

/// Monthly macro variable E(m) over the horizon.
pub fn macro_curve_for(case: &str, seed: u32) -> Result<Vec<f64>, String> {
    Ok(macro_path(&layout(case, seed)?))
}

/// Row `i` of the migration matrix before and after adjustment by `e`,
/// concatenated (16 values).
pub fn adjusted_row_for(i: usize, e: f64) -> Result<Vec<f64>, String> {
    if i >= SOURCE_STATES {
        return Err(format!("state {i} has no matrix row"));
    }
    if !(0.0..1.0).contains(&e) {
        return Err(format!("e = {e} must lie in [0, 1)"));
    }
    let m = Layout::default().migration;
    let mut out = m.row(i).to_vec();
    out.extend(adjust_matrix(&m, i, e).probs);
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
    pub peak_month: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub case: String,
    pub production_rows: u64,
    pub transaction_rows: u64,
    pub closed_accounts: u64,
    pub bad_accounts: u64,
    pub year_months: Vec<String>,
    pub macro_e: Vec<f64>,
    /// Bad rates on a 9-month window per portfolio, then the 2 -> 3 flow rate.
    pub series: Vec<Series>,
    pub binning: Vec<BinningReport>,
}

/// Small in-memory run with the headline risk curves and binning tables.
pub fn simulate_summary(case: &str, seed: u32, scale: f64) -> Result<Summary, String> {
    if !(scale > 0.0 && scale <= MAX_SCALE) {
        return Err(format!("scale must be in (0, {MAX_SCALE}]"));
    }
    let layout = layout(case, seed)?.with_volume_scale(scale);
    let production = generate_production(&layout);
    let mut paths = AccountPaths::new(layout.horizon());
    let mut beh = BinningCollector::standard(Pool::Portfolio(Portfolio::Beh));
    let counts = simulate(&layout, &production, &mut (&mut paths, &mut beh)).map_err(|e| e.to_string())?;

    let mut series: Vec<Series> = Portfolio::ALL
        .iter()
        .map(|&p| {
            let pts = paths.bad_rate_series(p, 9);
            Series {
                name: format!("{p} bad rate"),
                peak_month: argmax_month(pts.iter().map(|x| (x.t_obs, x.rate()))),
                values: pts.iter().map(|x| x.rate()).collect(),
            }
        })
        .collect();
    let flow = flow_rate_series(&paths, 2, 3);
    series.push(Series {
        name: "M23 flow rate".into(),
        peak_month: argmax_month(flow.iter().map(|x| (x.month, x.rate))),
        values: flow.iter().map(|x| x.rate).collect(),
    });
    let calendar = layout.calendar();
    Ok(Summary {
        case: layout_name(case),
        production_rows: counts.production_rows,
        transaction_rows: counts.transaction_rows,
        closed_accounts: counts.closed_accounts,
        bad_accounts: counts.bad_accounts,
        year_months: (0..layout.horizon()).map(|m| calendar.year_month(m).to_string()).collect(),
        macro_e: macro_path(&layout),
        series,
        binning: beh.reports(&paths, 9),
    })
}

fn layout_name(case: &str) -> String {
    case.parse::<Preset>().map_or_else(|_| case.to_string(), |p| p.name().to_string())
}

#[wasm_bindgen]
pub fn macro_curve(case: &str, seed: u32) -> Result<Vec<f64>, JsValue> {
    macro_curve_for(case, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn adjusted_row(i: usize, e: f64) -> Result<Vec<f64>, JsValue> {
    adjusted_row_for(i, e).map_err(|e| JsValue::from_str(&e))
}

/// JSON-encoded [`Summary`].
#[wasm_bindgen]
pub fn simulate_json(case: &str, seed: u32, scale: f64) -> Result<String, JsValue> {
    simulate_summary(case, seed, scale)
        .map(|s| serde_json::to_string(&s).expect("summary serializes"))
        .map_err(|e| JsValue::from_str(&e))
}
