//! `scoretrend`: fit score-trend indices for single matches or whole seasons.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scoretrend::bundle::{plot_rows, read_bundle, write_plot_csv};
use scoretrend::config::RunConfig;
use scoretrend::ingest::{validate_series, ScoreSeries};
use scoretrend::season::batch::{fit_match, load_matches, match_seed, run_season, MatchInput};
use scoretrend::{Error, Result};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_SEASON: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "scoretrend", version, about = "Trend Direction and Excitement Trend Indices from play-by-play scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one match and write its result bundle to --out.
    Fit {
        #[command(flatten)]
        opts: Overrides,
        /// Match to fit when the input CSV holds several.
        #[arg(long)]
        match_id: Option<String>,
    },
    /// Fit every match of a season and write season tables and clusters to --out.
    Season {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Turn a fit bundle (--input) into one CSV row per grid point (--out, default <bundle>/plotdata.csv).
    Plotdata {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse input matches and report data warnings without fitting.
    Validate {
        #[arg(long)]
        input: PathBuf,
        /// Regulation length in minutes.
        #[arg(long, default_value_t = 48.0)]
        domain_end: f64,
    },
}

/// Run settings. Flags override values from --config.
#[derive(Args, Debug)]
struct Overrides {
    /// Play-by-play CSV, series JSON, or a directory of them.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML or JSON file with any RunConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top-level seed; per-match and per-chain seeds derive from it [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Equidistant evaluation points on [0, domain_end] [default: 241].
    #[arg(long)]
    grid_points: Option<usize>,
    /// Regulation length in minutes; later events are dropped [default: 48].
    #[arg(long)]
    domain_end: Option<f64>,
    /// Scale of the Student-t hyperpriors [default: 5].
    #[arg(long)]
    prior_scale: Option<f64>,
    /// Degrees of freedom of the Student-t hyperpriors [default: 4].
    #[arg(long)]
    prior_df: Option<f64>,
    /// MCMC chains [default: 4].
    #[arg(long)]
    chains: Option<usize>,
    /// MCMC iterations per chain including warm-up [default: 5000].
    #[arg(long)]
    iters: Option<usize>,
    /// Fraction of iterations used for warm-up [default: 0.5].
    #[arg(long)]
    warmup_frac: Option<f64>,
    /// Target acceptance rate of the adaptive sampler [default: 0.3].
    #[arg(long)]
    target_accept: Option<f64>,
    /// Keep every n-th post-warm-up draw [default: 1].
    #[arg(long)]
    thin: Option<usize>,
    /// Optimizer starting points [default: 8].
    #[arg(long)]
    mle_starts: Option<usize>,
    /// Optimizer iterations per start [default: 300].
    #[arg(long)]
    mle_max_iter: Option<usize>,
    /// Optimizer gradient tolerance [default: 1e-5].
    #[arg(long)]
    mle_grad_tol: Option<f64>,
    /// Most hyperparameter draws used for index summaries [default: 500].
    #[arg(long)]
    max_draws: Option<usize>,
    /// Worker threads, 0 for all cores [default: 0].
    #[arg(long)]
    workers: Option<usize>,
    /// Largest number of team groups tried [default: 8].
    #[arg(long)]
    c_max: Option<usize>,
    /// RMSEP improvement below which no further group is added [default: 0.001].
    #[arg(long)]
    cluster_tol: Option<f64>,
    /// Failed-match fraction above which a season run fails [default: 0.05].
    #[arg(long)]
    max_failed_fraction: Option<f64>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set!(
            seed => seed,
            grid_points => grid_points,
            domain_end => domain_end,
            prior_scale => prior_scale,
            prior_df => prior_df,
            chains => mcmc.n_chains,
            iters => mcmc.n_iter,
            warmup_frac => mcmc.warmup_frac,
            target_accept => mcmc.target_accept,
            thin => mcmc.thin,
            mle_starts => mle.starts,
            mle_max_iter => mle.max_iter,
            mle_grad_tol => mle.grad_tol,
            max_draws => max_draws,
            workers => workers,
            c_max => c_max,
            cluster_tol => cluster_tol,
            max_failed_fraction => max_failed_fraction,
        );
        if let Some(o) = &self.out {
            c.out_dir = Some(o.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.out_dir
        .as_deref()
        .ok_or_else(|| Error::Config("an output directory is required (--out or out_dir)".into()))
}

fn pick_match(inputs: Vec<MatchInput>, id: Option<&str>) -> Result<ScoreSeries> {
    let chosen = match id {
        Some(id) => inputs
            .into_iter()
            .find(|m| m.match_id == id)
            .ok_or_else(|| Error::InvalidInput(format!("match {id} not in input")))?,
        None if inputs.len() == 1 => inputs.into_iter().next().expect("one input"),
        None => {
            return Err(Error::InvalidInput(format!(
                "input holds {} matches; choose one with --match-id",
                inputs.len()
            )))
        }
    };
    chosen.series
}

fn cmd_fit(opts: &Overrides, match_id: Option<&str>) -> Result<u8> {
    let cfg = opts.resolve()?;
    let out = out_dir(&cfg)?;
    let s = pick_match(load_matches(&opts.input, cfg.domain_end)?, match_id)?;
    for w in validate_series(&s) {
        log::warn!("{w}");
    }
    let bundle = fit_match(&s, &cfg, match_seed(&cfg, &s.match_id))?;
    bundle.write(out)?;
    println!(
        "{}",
        serde_json::json!({
            "match_id": s.match_id,
            "out": out,
            "eti_median": bundle.summary.eti_median,
            "mle": bundle.mle.theta,
        })
    );
    Ok(0)
}

fn cmd_season(opts: &Overrides) -> Result<u8> {
    let cfg = opts.resolve()?;
    let out = out_dir(&cfg)?.to_path_buf();
    let inputs = load_matches(&opts.input, cfg.domain_end)?;
    let report = run_season(&inputs, &cfg, &out)?;
    log::info!(
        "{} matches, {} failed, {} cache hits",
        report.total(),
        report.failures.len(),
        report.cache_hits
    );
    println!(
        "{}",
        serde_json::json!({
            "matches": report.total(),
            "failed": report.failures,
            "cache_hits": report.cache_hits,
            "stats": report.stats,
            "selected_c": report.clustering.as_ref().map(|c| c.selected_c),
        })
    );
    if report.records.is_empty() || report.failed_fraction() > cfg.max_failed_fraction {
        eprintln!(
            "{}",
            serde_json::json!({
                "error": "SeasonFailures",
                "message": format!("{} of {} matches failed", report.failures.len(), report.total()),
            })
        );
        return Ok(EXIT_SEASON);
    }
    Ok(0)
}

fn cmd_plotdata(input: &Path, out: Option<&Path>) -> Result<u8> {
    let view = read_bundle(input)?;
    let rows = plot_rows(&view);
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| input.join("plotdata.csv"));
    write_plot_csv(&path, &rows)?;
    println!("{}", serde_json::json!({ "out": path, "rows": rows.len() }));
    Ok(0)
}

fn cmd_validate(input: &Path, domain_end: f64) -> Result<u8> {
    let mut bad = 0;
    for m in load_matches(input, domain_end)? {
        let line = match &m.series {
            Ok(s) => serde_json::json!({
                "match_id": m.match_id,
                "events": s.len(),
                "warnings": validate_series(s).iter().map(ToString::to_string).collect::<Vec<_>>(),
            }),
            Err(e) => {
                bad += 1;
                serde_json::json!({ "match_id": m.match_id, "error": e.kind(), "message": e.to_string() })
            }
        };
        println!("{line}");
    }
    Ok(if bad > 0 { EXIT_INPUT } else { 0 })
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Fit { opts, match_id } => cmd_fit(opts, match_id.as_deref()),
        Command::Season { opts } => cmd_season(opts),
        Command::Plotdata { input, out } => cmd_plotdata(input, out.as_deref()),
        Command::Validate { input, domain_end } => cmd_validate(input, *domain_end),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
    }
}
