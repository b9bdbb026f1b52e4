//! `loansim`: generate the synthetic loan portfolio, write its datasets and
//! reports, and re-verify written output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use chrono::{DateTime, Utc};
use clap::{ArgGroup, Args, Parser, Subcommand};
use loansim_core::analytics::{
    flow_rate_series, vintage_table, AccountPaths, BinningCollector, Pool, Portfolio,
    OUTCOME_WINDOWS,
};
use loansim_core::checks::verify_dir;
use loansim_core::config::{load_layout, ConfigError, Layout, Preset, SOURCE_STATES};
use loansim_core::engine::{simulate, MonthBatch, MonthObserver};
use loansim_core::io::{self, CsvSink, OutputDir, WrittenRows, CSV_SCHEMA_VERSION};
use loansim_core::population::generate_production;
use loansim_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "loansim", version, about = "Synthetic retail loan portfolio generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a case study or layout file and write datasets and reports.
    Run(RunArgs),
    /// Re-check the structural invariants of a run directory.
    Verify {
        /// Directory written by `loansim run`.
        dir: PathBuf,
    },
    /// Print a bundled case study as a TOML layout.
    Preset {
        /// `app` or `beh`.
        name: String,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true)))]
struct RunArgs {
    /// Bundled case study: `app` or `beh`.
    #[arg(long, group = "source")]
    case: Option<String>,
    /// Layout file (TOML, or JSON with a `.json` extension).
    #[arg(long, group = "source")]
    config: Option<PathBuf>,
    /// Overrides the layout seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the volume scale.
    #[arg(long)]
    scale: Option<f64>,
    /// Output directory.
    #[arg(long, env = "LOANSIM_OUT", default_value = "loansim-out")]
    out: PathBuf,
    /// `all`, `none` or a comma list of bad_rates, flow_rate, vintage, binning.
    #[arg(long, default_value = "all")]
    reports: ReportSelection,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ReportSelection {
    bad_rates: bool,
    flow_rate: bool,
    vintage: bool,
    binning: bool,
}

impl ReportSelection {
    fn any(self) -> bool {
        self.bad_rates || self.flow_rate || self.vintage || self.binning
    }
}

impl FromStr for ReportSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut sel = ReportSelection::default();
        match s {
            "all" => {
                return Ok(ReportSelection {
                    bad_rates: true,
                    flow_rate: true,
                    vintage: true,
                    binning: true,
                })
            }
            "none" => return Ok(sel),
            _ => {}
        }
        for part in s.split(',').map(str::trim) {
            match part {
                "bad_rates" => sel.bad_rates = true,
                "flow_rate" => sel.flow_rate = true,
                "vintage" => sel.vintage = true,
                "binning" => sel.binning = true,
                other => return Err(format!("unknown report `{other}`")),
            }
        }
        Ok(sel)
    }
}

/// Everything needed to trace a run directory back to its inputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool_version: &'static str,
    csv_schema_version: u32,
    case: String,
    layout_digest: String,
    seed: u64,
    volume_scale: f64,
    threads: usize,
    started: DateTime<Utc>,
    finished: DateTime<Utc>,
    elapsed_seconds: f64,
    rows: WrittenRows,
    files: Vec<String>,
}

enum Failure {
    Config(String),
    Io(String),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(ConfigError::Io(io)) => Failure::Io(io.to_string()),
            Error::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Error::Config(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify { dir } => verify(&dir),
        Command::Preset { name } => print_preset(&name),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verify) => ExitCode::from(3),
    }
}

fn print_preset(name: &str) -> Result<(), Failure> {
    let p: Preset = name.parse()?;
    print!("{}", p.layout().to_toml_string()?);
    Ok(())
}

fn resolve_layout(args: &RunArgs) -> Result<(String, Layout), Failure> {
    let (case, mut layout) = match (&args.case, &args.config) {
        (Some(name), _) => {
            let p: Preset = name.parse()?;
            (p.name().to_string(), p.layout())
        }
        (None, Some(path)) => {
            let stem = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
            let layout = load_layout(path).map_err(|e| match e {
                ConfigError::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
                other => Failure::Config(format!("{}: {other}", path.display())),
            })?;
            (stem, layout)
        }
        (None, None) => unreachable!("clap requires --case or --config"),
    };
    if let Some(seed) = args.seed {
        layout.seed = seed;
    }
    if let Some(scale) = args.scale {
        layout.volume_scale = scale;
    }
    layout.validate()?;
    Ok((case, layout))
}

/// Observer that only collects what the selected reports need.
struct Analytics {
    paths: Option<AccountPaths>,
    binning: Option<BinningCollector>,
}

impl MonthObserver for Analytics {
    fn observe(&mut self, batch: &MonthBatch<'_>) -> Result<(), Error> {
        if let Some(p) = &mut self.paths {
            p.observe(batch)?;
        }
        if let Some(b) = &mut self.binning {
            b.observe(batch)?;
        }
        Ok(())
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let (case, layout) = resolve_layout(&args)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let started = Utc::now();
    let t0 = Instant::now();
    let out = OutputDir::new(&args.out);
    let sel = args.reports;

    let (rows, analytics) = pool.install(|| -> Result<_, Error> {
        let production = generate_production(&layout);
        let mut sink = CsvSink::create(&out, layout.calendar())?;
        let mut analytics = Analytics {
            paths: sel.any().then(|| AccountPaths::new(layout.horizon())),
            binning: sel.binning.then(|| BinningCollector::standard(Pool::Portfolio(Portfolio::Beh))),
        };
        simulate(&layout, &production, &mut (&mut sink, &mut analytics))?;
        Ok((sink.rows(), analytics))
    })?;

    let mut files = vec![io::PRODUCTION_FILE, io::TRANSACTION_FILE, io::ABT_FILE, io::STRATA_FILE]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    if let Some(paths) = &analytics.paths {
        files.extend(write_reports(&out, &case, &layout, sel, paths, analytics.binning.as_ref())?);
    }
    let finished = Utc::now();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        csv_schema_version: CSV_SCHEMA_VERSION,
        case,
        layout_digest: layout_digest(&layout),
        seed: layout.seed,
        volume_scale: layout.volume_scale,
        threads,
        started,
        finished,
        elapsed_seconds: t0.elapsed().as_secs_f64(),
        rows,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out.manifest(), json + "\n")?;
    println!(
        "wrote {} production, {} transaction rows to {} in {:.1}s",
        rows.production,
        rows.transaction,
        out.root.display(),
        manifest.elapsed_seconds
    );
    Ok(())
}

fn layout_digest(layout: &Layout) -> String {
    let hash = Sha256::digest(layout.to_json_string().as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_reports(
    out: &OutputDir,
    case: &str,
    layout: &Layout,
    sel: ReportSelection,
    paths: &AccountPaths,
    binning: Option<&BinningCollector>,
) -> Result<Vec<String>, Error> {
    let dir = out.reports();
    std::fs::create_dir_all(&dir)?;
    let calendar = layout.calendar();
    let mut written = Vec::new();
    let mut file = |name: String| -> PathBuf {
        written.push(format!("{}/{name}", io::REPORTS_DIR));
        dir.join(name)
    };
    if sel.bad_rates {
        for p in Portfolio::ALL {
            for t in OUTCOME_WINDOWS {
                let path = file(format!("bad_rates_{}_{t}.csv", p.name().to_ascii_lowercase()));
                io::write_bad_rates(&path, &paths.bad_rate_series(p, t), &calendar)?;
            }
        }
    }
    if sel.flow_rate {
        for i in 0..SOURCE_STATES {
            let path = file(format!("flow_rate_{i}{}.csv", i + 1));
            io::write_flow_rate(&path, &flow_rate_series(paths, i, i + 1), &calendar)?;
        }
    }
    if sel.vintage {
        let path = file("vintage.csv".into());
        io::write_vintage(&path, &vintage_table(paths), &calendar, layout.horizon())?;
    }
    if let (true, Some(b)) = (sel.binning, binning) {
        let path = file(format!("binning_{case}.csv"));
        let reports: Vec<_> = OUTCOME_WINDOWS.iter().flat_map(|&t| b.reports(paths, t)).collect();
        io::write_binning(&path, &reports)?;
    }
    Ok(written)
}

fn verify(dir: &Path) -> Result<(), Failure> {
    let report = verify_dir(&OutputDir::new(dir));
    if report.is_ok() {
        println!(
            "PASS {}: {} transaction rows, {} strata checked",
            dir.display(),
            report.rows_checked,
            report.strata_checked
        );
        return Ok(());
    }
    println!("FAIL {}: {} violations", dir.display(), report.total());
    for (rule, n) in &report.totals {
        println!("  {rule}: {n}");
    }
    for v in &report.violations {
        println!("  {v}");
    }
    Err(Failure::Verify)
}
