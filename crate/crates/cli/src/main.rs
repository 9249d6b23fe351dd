use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wcvar::backtest::TcMode;
use wcvar::pipeline::{self, RunConfig, Strategy};
use wcvar::{Error, Kappa};

#[derive(Parser)]
#[command(name = "wcvar", version, about = "Wasserstein-robust mean-CVaR portfolios: radius selection, solves and backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load prices, compute returns and write the in/out-of-sample split.
    Ingest {
        /// Write a synthetic panel of N_ASSETS x N_DAYS prices to the data path first.
        #[arg(long, num_args = 2, value_names = ["N_ASSETS", "N_DAYS"])]
        generate: Option<Vec<usize>>,
        #[command(flatten)]
        flags: Flags,
    },
    /// Select the ambiguity radius on the in-sample window.
    Radius(Flags),
    /// Solve each requested strategy on the in-sample window.
    Solve(Flags),
    /// Backtest the strategies out of sample.
    Backtest(Flags),
    /// Backtest with and without transaction costs.
    Compare(Flags),
}

/// Overrides for the run configuration; unset flags keep the config-file value.
#[derive(Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    in_sample_len: Option<usize>,
    #[arg(long)]
    tail_mass: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    kappa: Option<u8>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    smoothing_t: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    tc_rate: Option<f64>,
    /// Deduct transaction costs from wealth.
    #[arg(long, conflicts_with_all = ["no_tc", "report_tc"])]
    tc: bool,
    /// Ignore transaction costs.
    #[arg(long, conflicts_with = "report_tc")]
    no_tc: bool,
    /// Accumulate transaction costs without charging them.
    #[arg(long)]
    report_tc: bool,
    /// Comma-separated subset of NMC,BMC,KMC,RMC1,RMC2.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long)]
    allow_short: bool,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    reestimate_every: Option<usize>,
    /// Hold the initial solution instead of re-estimating.
    #[arg(long)]
    static_weights: bool,
    #[arg(long)]
    box_width: Option<f64>,
    #[arg(long)]
    bootstrap_samples: Option<usize>,
    #[arg(long)]
    bootstrap_level: Option<f64>,
}

impl Flags {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        set!(data, output_dir, in_sample_len, tail_mass, confidence, mc_samples, seed, smoothing_t, threshold, tc_rate, lookback, reestimate_every, box_width, bootstrap_samples, bootstrap_level);
        if self.rho.is_some() {
            c.rho = self.rho;
        }
        if self.delta.is_some() {
            c.delta = self.delta;
        }
        if let Some(k) = self.kappa {
            c.kappa = Kappa::try_from(k).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.tc {
            c.tc_mode = TcMode::Compound;
        } else if self.no_tc {
            c.tc_mode = TcMode::Off;
        } else if self.report_tc {
            c.tc_mode = TcMode::ReportOnly;
        }
        if let Some(list) = &self.strategies {
            c.strategies = list.iter().map(|s| s.trim().parse::<Strategy>()).collect::<Result<_, _>>()?;
        }
        if self.allow_short {
            c.long_only = false;
        }
        if self.static_weights {
            c.static_weights = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { generate, flags } => {
            let cfg = flags.config()?;
            if let Some(g) = generate {
                pipeline::write_synthetic(&cfg.data, g[0], g[1], cfg.seed)?;
                println!("wrote synthetic prices to {}", cfg.data.display());
            }
            let s = pipeline::cmd_ingest(&cfg)?;
            println!(
                "{} price rows ({} dropped), {} assets; in-sample {} / out-of-sample {} returns",
                s.price_rows,
                s.dropped_rows,
                s.tickers.len(),
                s.in_sample_rows,
                s.out_of_sample_rows
            );
        }
        Command::Radius(flags) => {
            let cfg = flags.config()?;
            let r = pipeline::cmd_radius(&cfg)?;
            println!(
                "kappa {}: delta* = {:e} (eta {:e}, rho {:e}, N {})",
                r.radius.config.kappa.order(),
                r.radius.delta_star,
                r.radius.eta_quantile,
                r.rho,
                r.radius.n_obs
            );
        }
        Command::Solve(flags) => {
            let cfg = flags.config()?;
            for s in pipeline::cmd_solve(&cfg)? {
                println!("{:<6} objective {:.8e}  rho {:.4e}  weights {:?}", s.strategy.to_string(), s.report.objective, s.rho, rounded(&s.report.portfolio.weights));
            }
        }
        Command::Backtest(flags) => {
            let cfg = flags.config()?;
            print_table(&pipeline::cmd_backtest(&cfg)?);
        }
        Command::Compare(flags) => {
            let cfg = flags.config()?;
            let c = pipeline::cmd_compare(&cfg)?;
            println!("with transaction costs");
            print_table(&c.with_tc);
            println!("without transaction costs");
            print_table(&c.without_tc);
        }
    }
    Ok(())
}

fn rounded(w: &[f64]) -> Vec<f64> {
    w.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

fn print_table(s: &pipeline::BacktestSummary) {
    println!("{:<6} {:>12} {:>12} {:>12} {:>8} {:>10} {:>6} {:>10}", "", "mean", "std", "cvar", "sharpe", "mean/cvar", "rebal", "wealth");
    for o in &s.outcomes {
        let m = &o.metrics;
        println!(
            "{:<6} {:>12.9} {:>12.9} {:>12.9} {:>8.4} {:>10.6} {:>6} {:>10.4}",
            o.strategy.to_string(),
            m.mean_daily,
            m.std_daily,
            m.cvar_tail,
            m.sharpe_annualized,
            m.mean_over_cvar,
            o.backtest.n_rebalances(),
            o.backtest.wealth.last().copied().unwrap_or(f64::NAN)
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
