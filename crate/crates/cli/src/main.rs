mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use nhqubit::io::{write_jump_log, Provenance};
use serde_json::json;

use config::{load_config, RunConfig, CONFIG_HELP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Runs one experiment on the driven, dissipative three-level qubit and writes
/// its result tables, a run manifest, and a JSON summary on stdout.
#[derive(Debug, Parser)]
#[command(name = "nhq", version, after_long_help = CONFIG_HELP)]
struct Args {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory [default: config output_dir, else ./out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed, overrides the config's master_seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Validate the configuration and exit.
    #[arg(long)]
    dry_run: bool,
    /// Table format.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

enum Failure {
    Config(String),
    Core(nhqubit::Error),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Core(e) if e.is_input() => 2,
            Failure::Core(e) if e.is_statistical() => 4,
            Failure::Core(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("config error: {m}"),
            Failure::Core(e) if e.is_statistical() => format!("statistics error: {e}"),
            Failure::Core(e) if e.is_input() => format!("config error: {e}"),
            Failure::Core(e) => format!("numeric error: {e}"),
            Failure::Io(m) => format!("output error: {m}"),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn prepare(args: &Args) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = load_config(&args.config).map_err(|e| Failure::Config(e.0))?;
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if args.workers == Some(0) {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let out = args.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn execute(args: &Args) -> Result<(), Failure> {
    let (cfg, out) = prepare(args)?;
    let hash = cfg.sha256();
    if args.dry_run {
        let v = json!({ "status": "valid", "experiment": cfg.experiment.name(), "config_sha256": hash, "seed": cfg.master_seed, "out": out });
        println!("{v}");
        return Ok(());
    }
    if let Some(n) = args.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Io(e.to_string()))?;
    }

    let start = Instant::now();
    let output = run::run(&cfg).map_err(Failure::Core)?;
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let prov = Provenance { config_sha256: hash.clone(), seed: Some(cfg.master_seed) };
    let mut files = Vec::new();
    for (name, table) in &output.tables {
        let path = match args.format {
            Format::Csv => out.join(format!("{name}.csv")),
            Format::Json => out.join(format!("{name}.json")),
        };
        let bytes = match args.format {
            Format::Csv => table.to_csv_string(Some(&prov)).into_bytes(),
            Format::Json => {
                let mut b = serde_json::to_vec_pretty(&table.to_json(Some(&prov))).expect("table serializes");
                b.push(b'\n');
                b
            }
        };
        fs::write(&path, bytes).map_err(io_err(&path))?;
        files.push(path);
    }
    if let Some(e) = output.ensemble.as_ref().filter(|e| e.jump_log.is_some()) {
        let path = out.join("jumps.jsonl");
        let mut w = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "{}", json!({ "provenance": prov })).map_err(io_err(&path))?;
        write_jump_log(&mut w, e).map_err(Failure::Core)?;
        w.flush().map_err(io_err(&path))?;
        files.push(path);
    }

    let manifest = json!({
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "config_sha256": hash,
        "seed": cfg.master_seed,
        "version": env!("CARGO_PKG_VERSION"),
        "workers": args.workers.unwrap_or_else(rayon::current_num_threads),
        "wall_time_s": wall,
        "outputs": files,
        "summary": output.summary,
    });
    let mpath = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&mpath, text).map_err(io_err(&mpath))?;

    let v = json!({
        "status": "ok",
        "experiment": cfg.experiment.name(),
        "outputs": files,
        "manifest": mpath,
        "wall_time_s": wall,
        "summary": manifest["summary"],
    });
    println!("{v}");
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("nhq: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
