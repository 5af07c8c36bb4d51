use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plaincode::config::Config;
use plaincode::corpus::CorpusOptions;
use plaincode::pipeline::{
    analyze, compile_sources, generate, load_sources, read_file, read_test_dir, record, verify_tests, write_file,
    write_generated, AnalyzeOptions, PipelineError,
};
use plaincode::roundtrip::{run_corpus, HarnessOptions};
use plaincode::PlanDb;
use plaincode_lang::Limits;

#[derive(Parser)]
#[command(name = "plaincode", version, about = "Serialize runtime objects as plain code and generate tests from them")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, env = "PLAINCODE_CONFIG")]
    config: Option<PathBuf>,
    /// Plan database written by `analyze` and read by later phases.
    #[arg(long, global = true, env = "PLAINCODE_PLAN_DB")]
    plan_db: Option<PathBuf>,
    /// Trace file written by `record` and read by `generate`.
    #[arg(long, global = true, env = "PLAINCODE_TRACE")]
    trace: Option<PathBuf>,
    /// Output file (`analyze`) or directory (`generate`, `verify`).
    #[arg(long, global = true, env = "PLAINCODE_OUT")]
    out: Option<PathBuf>,
    /// Corpus seed; makes `verify` run the synthetic round-trip corpus.
    #[arg(long, global = true, env = "PLAINCODE_SEED")]
    seed: Option<u64>,
    /// Maximum captured sequence length.
    #[arg(long, global = true, env = "PLAINCODE_BOUND_SEQUENCE")]
    bound_sequence: Option<usize>,
    /// Minimum statement count of an outlined helper.
    #[arg(long, global = true, env = "PLAINCODE_OUTLINE_THRESHOLD")]
    outline_threshold: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select points, extract type models and synthesize plans into a plan database.
    Analyze,
    /// Run the configured entry point with the recorder attached.
    Record,
    /// Analyze the trace and emit Arrange-Act-Assert tests plus a report.
    Generate,
    /// Run generated tests against the application, or the round-trip corpus with --seed.
    Verify {
        /// Number of corpus objects.
        #[arg(long, env = "PLAINCODE_SIZE", default_value_t = 1000)]
        size: usize,
        /// Share of corpus objects carrying an over-bound sequence.
        #[arg(long, env = "PLAINCODE_OVER_BOUND_RATE", default_value_t = 0.0)]
        over_bound_rate: f64,
        /// Worker threads for the corpus; 0 uses every core.
        #[arg(long, env = "PLAINCODE_THREADS", default_value_t = 0)]
        threads: usize,
    },
}

enum Failure {
    Usage(String),
    Failed(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Usage(_) | PipelineError::Config(_) | PipelineError::Io { .. } => Failure::Usage(e.to_string()),
            other => Failure::Failed(other.to_string()),
        }
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    value.as_deref().ok_or_else(|| Failure::Usage(format!("missing required --{flag}")))
}

impl Cli {
    fn config(&self) -> Result<Config, Failure> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
            None => Config::default(),
        };
        if let Some(b) = self.bound_sequence {
            cfg.bounds.max_sequence_length = b;
        }
        if let Some(t) = self.outline_threshold {
            cfg.emit.outline_threshold = t;
        }
        Ok(cfg)
    }

    fn plan_db(&self) -> Result<PlanDb, Failure> {
        let path = required(&self.plan_db, "plan-db")?;
        PlanDb::parse(&read_file(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Analyze => {
            required(&cli.config, "config")?;
            let out = required(&cli.out, "out")?;
            let cfg = cli.config()?;
            let program = compile_sources(&load_sources(&cfg)?).map_err(PipelineError::from)?;
            let db = analyze(&program, &AnalyzeOptions::from_config(&cfg))?;
            write_file(out, &db.to_text())?;
            println!(
                "{} points, {} traced types: {} structure-based, {} trace-based",
                db.points.len(),
                db.traced.len(),
                db.plans.len(),
                db.trace_based().count()
            );
        }
        Command::Record => {
            required(&cli.config, "config")?;
            let trace = required(&cli.trace, "trace")?;
            let cfg = cli.config()?;
            let db = cli.plan_db()?;
            let program = compile_sources(&load_sources(&cfg)?).map_err(PipelineError::from)?;
            let recording = record(&program, &db, &cfg.entry, cfg.bounds.clone(), Limits::default())?;
            write_file(trace, &recording.trace)?;
            println!("{} events, {} records", recording.stats.events, recording.stats.records);
        }
        Command::Generate => {
            let trace_path = required(&cli.trace, "trace")?;
            let out = required(&cli.out, "out")?;
            let cfg = cli.config()?;
            let db = cli.plan_db()?;
            let generated = generate(&db, &read_file(trace_path)?, &cfg.adapters.adapters(), cfg.emit)?;
            write_generated(out, &generated)?;
            let report = &generated.report.generation;
            println!("{}", report.summary());
            for d in &report.discards {
                for r in &d.reasons {
                    println!("discarded {}@{}: {} {}", d.point_id, d.time, r.code, r.detail);
                }
            }
            if report.has_errors() {
                return Err(Failure::Failed("some records were discarded with errors".into()));
            }
        }
        Command::Verify { size, over_bound_rate, threads } => match cli.seed {
            Some(seed) => {
                let mut opts = HarnessOptions { threads: *threads, ..Default::default() };
                opts.corpus = CorpusOptions { over_bound_rate: *over_bound_rate, ..Default::default() };
                if let Some(b) = cli.bound_sequence {
                    opts.corpus.bound = b;
                }
                if let Some(t) = cli.outline_threshold {
                    opts.emit.outline_threshold = t;
                }
                let report = run_corpus(seed, *size, &opts);
                if let Some(out) = &cli.out {
                    let json = serde_json::to_string_pretty(&report).expect("report serializes");
                    write_file(&out.join("roundtrip.json"), &(json + "\n"))?;
                }
                println!("{}", report.summary());
                let unexpected = report
                    .objects
                    .iter()
                    .filter(|o| o.outcome.kind() != if o.over_bound { "partial" } else { "equal" })
                    .count();
                if unexpected > 0 || report.tests.failed > 0 || !report.transform_mismatches.is_empty() {
                    return Err(Failure::Failed(format!("{unexpected} objects with an unexpected outcome")));
                }
            }
            None => {
                required(&cli.config, "config")?;
                let dir = required(&cli.out, "out")?;
                let cfg = cli.config()?;
                let verdict = verify_tests(&load_sources(&cfg)?, &read_test_dir(dir)?, Limits::default());
                for f in &verdict.failed {
                    println!("FAILED {}: {}", f.test, f.message);
                }
                println!("{}", verdict.summary());
                if !verdict.ok() {
                    return Err(Failure::Failed("generated tests failed".into()));
                }
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
