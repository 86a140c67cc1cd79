use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedcorr::config::ExperimentConfig;
use fedcorr::cost::{breakeven, horizon};
use fedcorr::fedsim::{run_experiment, summarize, RunOptions, Scheme, SummaryRow};
use fedcorr::metrics::RankBudget;
use fedcorr::updates::ReshapeSpec;
use fedcorr::Error;

#[derive(Parser)]
#[command(name = "fedcorr", version, about = "Correlation-aware federated update compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with the configured scheme; writes rounds.jsonl, states.jsonl and summary.csv.
    Run(RunArgs),
    /// Train uncompressed and record structural, temporal and spatial correlation per round.
    Probe(RunArgs),
    /// Rounds of basis reuse needed before an m×r basis pays for itself.
    Breakeven { m: u64, r: u64 },
    /// Reuse horizon for a lower bound on consecutive-update cosine similarity.
    Horizon {
        #[arg(allow_negative_numbers = true)]
        cosine: f64,
    },
    /// Shape of the update matrix for a d-element layer with m rows.
    Reshape {
        d: usize,
        m: usize,
        /// Number of columns; defaults to ⌈d/m⌉.
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `fed.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cap PCA ranks by the data dimension alone instead of the sample count.
    #[arg(long)]
    strict_paper_pca: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDCORR_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cmd: Command) -> fedcorr::Result<()> {
    match cmd {
        Command::Run(args) => cmd_run(&args),
        Command::Probe(args) => cmd_probe(&args),
        Command::Breakeven { m, r } => {
            println!("{}", breakeven(m, r)?);
            Ok(())
        }
        Command::Horizon { cosine } => {
            let h = horizon(cosine)?;
            let show = |v: Option<u64>| v.map_or_else(|| "unbounded".to_string(), |j| j.to_string());
            println!("{}", show(h.full_turn));
            println!("alternate (quarter turn): {}", show(h.quarter_turn));
            Ok(())
        }
        Command::Reshape { d, m, n } => {
            let spec = match n {
                Some(n) => ReshapeSpec::flat_with(d, m, n)?,
                None => ReshapeSpec::flat(d, m)?,
            };
            println!("m={} n={} padding={}", spec.m, spec.n, spec.pad_count());
            Ok(())
        }
    }
}

fn load(args: &RunArgs) -> fedcorr::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.fed.seed = seed;
    }
    if args.strict_paper_pca {
        cfg.fed.pcafed.rank_budget = RankBudget::StrictPaper;
        cfg.probe.rank_budget = RankBudget::StrictPaper;
    }
    let out = args.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> fedcorr::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> fedcorr::Result<()> {
    let (cfg, out) = load(args)?;
    let ds = cfg.load_dataset()?;
    let model = cfg.build_model(&ds)?;
    log::info!("{} samples, d = {}, scheme {}", ds.len(), model.dim(), cfg.fed.scheme.name());
    let exp = run_experiment(&cfg.fed, &model, &ds, &RunOptions::default())?;

    write_jsonl(&out.join("rounds.jsonl"), &exp.records)?;
    write_jsonl(&out.join("states.jsonl"), exp.records.iter().flat_map(|r| &r.states))?;
    let row = summarize(cfg.fed.scheme, &exp, cfg.target_accuracy);
    fs::write(
        out.join("summary.csv"),
        format!("{}\n{}\n", SummaryRow::CSV_HEADER, row.to_csv()),
    )?;
    println!("{}", SummaryRow::CSV_HEADER);
    println!("{}", row.to_csv());
    Ok(())
}

fn cmd_probe(args: &RunArgs) -> fedcorr::Result<()> {
    let (mut cfg, out) = load(args)?;
    cfg.fed.scheme = Scheme::None;
    let ds = cfg.load_dataset()?;
    let model = cfg.build_model(&ds)?;
    let opts = RunOptions {
        probe: Some(cfg.probe.clone()),
        keep_trajectory: false,
    };
    let exp = run_experiment(&cfg.fed, &model, &ds, &opts)?;
    let readings: Vec<_> = exp.records.iter().flat_map(|r| &r.readings).collect();
    write_jsonl(&out.join("probe.jsonl"), &readings)?;
    println!("{} readings over {} rounds", readings.len(), exp.records.len());
    Ok(())
}
