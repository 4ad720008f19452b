use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qagen::generator::Pipeline;
use qagen_cli::commands::{self, Context};
use qagen_cli::{CliError, RunConfig, WorkDir};

#[derive(Parser)]
#[command(name = "qagen", version, about = "Expert-style question generation, filtering and evaluation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding every stage artifact.
    #[arg(long, global = true, default_value = "work")]
    work_dir: PathBuf,
    /// Override any config key, e.g. `--set generation.k=2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dedup_threshold: Option<f64>,
    /// `containment` or `jaccard`.
    #[arg(long, global = true)]
    overlap: Option<String>,
    /// Examples per few-shot combination.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Few-shot combinations per style.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PipelineArg {
    /// Pipeline to run; all three when omitted.
    #[arg(long, value_parser = parse_pipeline)]
    pipeline: Vec<Pipeline>,
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    s.parse().map_err(|e: qagen::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Chunk the corpus and load and split the expert pool.
    Ingest,
    /// Generate question records.
    Generate(PipelineArg),
    /// Remove near-duplicates and test-set collisions.
    Dedup(PipelineArg),
    /// Efficiency, topic coverage, Bloom levels and preference statistics.
    Metrics(PipelineArg),
    /// Embed and train the retrieval adapter.
    Train(PipelineArg),
    /// Top-k retrieval on the expert test split.
    Eval(PipelineArg),
    /// Combine stage results into report.json.
    Report,
    /// Every stage end to end.
    Run(PipelineArg),
    /// Which stage outputs exist in the work directory.
    Status,
}

impl Cli {
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(s) = self.seed {
            out.push(format!("provider.seed={s}"));
        }
        if let Some(t) = self.dedup_threshold {
            out.push(format!("dedup.threshold={t}"));
        }
        if let Some(m) = &self.overlap {
            out.push(format!("dedup.mode=\"{m}\""));
        }
        if let Some(n) = self.n {
            out.push(format!("generation.n={n}"));
        }
        if let Some(k) = self.k {
            out.push(format!("generation.k={k}"));
        }
        out.extend(self.overrides.iter().cloned());
        out
    }
}

fn pipelines(arg: &PipelineArg) -> Vec<Pipeline> {
    if arg.pipeline.is_empty() {
        Pipeline::ALL.to_vec()
    } else {
        arg.pipeline.clone()
    }
}

fn each(
    ctx: &Context,
    arg: &PipelineArg,
    f: fn(&Context, Pipeline) -> Result<String, CliError>,
) -> Result<Vec<String>, CliError> {
    pipelines(arg).into_iter().map(|p| f(ctx, p)).collect()
}

fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    let work = WorkDir::new(&cli.work_dir);
    if let Command::Status = cli.command {
        return Ok(commands::stage_status(&work)
            .into_iter()
            .map(|(p, stages)| {
                let marks: Vec<String> = stages
                    .iter()
                    .map(|(s, done)| format!("{s}:{}", if *done { "done" } else { "-" }))
                    .collect();
                format!("{:<12}{}", p.as_str(), marks.join("  "))
            })
            .collect());
    }
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    std::fs::create_dir_all(work.root()).map_err(|e| qagen::Error::Io {
        path: work.root().to_path_buf(),
        source: e,
    })?;
    let ctx = Context::new(config, work);
    match &cli.command {
        Command::Ingest => Ok(vec![commands::cmd_ingest(&ctx)?]),
        Command::Generate(a) => each(&ctx, a, commands::cmd_generate),
        Command::Dedup(a) => each(&ctx, a, commands::cmd_dedup),
        Command::Metrics(a) => each(&ctx, a, commands::cmd_metrics),
        Command::Train(a) => each(&ctx, a, commands::cmd_train),
        Command::Eval(a) => each(&ctx, a, commands::cmd_eval),
        Command::Report => Ok(vec![commands::cmd_report(&ctx)?]),
        Command::Run(a) => commands::cmd_run(&ctx, &pipelines(a)),
        Command::Status => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{}", l.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
