//! `sdmatch`: command-line front end for the matching laboratory.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure.

mod config;

use clap::{Args, CommandFactory, Parser, Subcommand};
use config::Settings;
use sdmatch::experiments::{
    aggregate, linf_exponent_report, order_records, plot_data, prob_large_displacement, run_sweep, run_trial,
    summary_csv, LinfSample, TrialRecord, SCHEMA_VERSION,
};
use sdmatch::fields::ScalarField;
use sdmatch::hopflax::{hj_residual, hopflax_characteristics, hopflax_grid, DatumNorms, TestShape, C_M};
use sdmatch::stability::{calibration_suite, perturbation_scaling, stability_check, StabilityOptions, C_STAB};
use sdmatch::{Domain, Grid};
use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sdmatch", version, about = "Semi-discrete random matching laboratory")]
struct Cli {
    /// Key-value configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving every output file.
    #[arg(long, global = true, env = "SDMATCH_OUT_DIR", default_value = "sdmatch-out")]
    out: PathBuf,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct TrialFlags {
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Grid resolution N.
    #[arg(long)]
    resolution: Option<String>,
    /// Schedule exponent: t = (ln n)^alpha / n.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    tol_mass: Option<String>,
    #[arg(long)]
    samples_per_cell: Option<String>,
}

impl TrialFlags {
    fn apply(self, s: &mut Settings) {
        s.set("domain", self.domain);
        s.set("n", self.n);
        s.set("seed", self.seed);
        s.set("resolution", self.resolution);
        s.set("alpha", self.alpha);
        s.set("t", self.t);
        s.set("xi", self.xi);
        s.set("tol_mass", self.tol_mass);
        s.set("samples_per_cell", self.samples_per_cell);
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trial and write its record.
    Trial {
        #[command(flatten)]
        flags: TrialFlags,
    },
    /// Run a resumable sweep and write records, summary and plot data.
    Sweep {
        #[command(flatten)]
        flags: TrialFlags,
        /// Comma-separated cloud sizes, increasing.
        #[arg(long)]
        ns: Option<String>,
        #[arg(long)]
        trials: Option<String>,
        #[arg(long)]
        base_seed: Option<String>,
        /// Threshold for the large-displacement frequency.
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
    },
    /// Run the property suite and print a pass/fail table.
    Verify {
        /// Only properties whose `module/name` contains this text.
        #[arg(long)]
        filter: Option<String>,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// Run the stability comparison on the pinned suite.
    Stability {
        /// Also run each case over these comma-separated scales.
        #[arg(long)]
        scales: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute Q_t f by grid minimization and by characteristics.
    HopflaxDemo {
        /// cos, cos+sin or smooth-random.
        #[arg(long, default_value = "cos+sin")]
        shape: String,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        /// Time; defaults to half the admissibility limit.
        #[arg(long)]
        t: Option<f64>,
    },
}

/// A failure with its exit code.
struct Failure(u8, String);

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn numerical(msg: impl Into<String>) -> Failure {
    Failure(EXIT_NUMERICAL, msg.into())
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| usage(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(io(path))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| v.trim().parse().map_err(|e| usage(format!("`{v}`: {e}"))))
        .collect()
}

fn manifest(cli_config: &Option<PathBuf>, out: &Path, subcommand: &str) -> String {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "config": cli_config.as_ref().map(|p| p.display().to_string()),
        "output_directory": out.display().to_string(),
        "subcommand": subcommand,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": stamp,
    })
    .to_string()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut settings = match &cli.config {
        Some(p) => Settings::parse(&fs::read_to_string(p).map_err(io(p))?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => Settings::default(),
    };
    fs::create_dir_all(&cli.out).map_err(io(&cli.out))?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let name = match &cli.command {
        Command::Trial { .. } => "trial",
        Command::Sweep { .. } => "sweep",
        Command::Verify { .. } => "verify",
        Command::Stability { .. } => "stability",
        Command::HopflaxDemo { .. } => "hopflax-demo",
    };
    write_file(&cli.out.join(format!("manifest_{name}.json")), &manifest(&cli.config, &cli.out, name))?;
    match cli.command {
        Command::Trial { flags } => {
            flags.apply(&mut settings);
            let config = settings.trial_config(None).map_err(usage)?;
            let record = run_trial(&config).map_err(|e| usage(e.to_string()))?;
            let path = cli.out.join(format!("trial_{}_n{}_seed{}.jsonl", config.domain, config.n, config.seed));
            write_file(&path, &(record.to_json_line() + "\n"))?;
            println!("{}", path.display());
            match record.failure {
                Some(f) => Err(numerical(format!("trial failed in stage {}: {}", f.stage, f.reason))),
                None => Ok(()),
            }
        }
        Command::Sweep {
            flags,
            ns,
            trials,
            base_seed,
            eps,
        } => {
            flags.apply(&mut settings);
            settings.set("ns", ns);
            settings.set("trials", trials);
            settings.set("base_seed", base_seed);
            let plan = settings.sweep_plan().map_err(usage)?;
            let configs = plan.configs().map_err(|e| usage(e.to_string()))?;
            sweep(&cli.out, &configs, jobs, eps)
        }
        Command::Verify { filter, tolerance_scale } => {
            let outcomes = sdmatch::verify::run_suite(tolerance_scale, filter.as_deref());
            let table = sdmatch::verify::format_table(&outcomes);
            print!("{table}");
            write_file(&cli.out.join("verify.txt"), &table)?;
            if outcomes.iter().all(|o| o.passed) {
                Ok(())
            } else {
                Err(numerical("property suite reported failures"))
            }
        }
        Command::Stability { scales, seed } => stability(&cli.out, scales, seed, jobs),
        Command::HopflaxDemo {
            shape,
            eps,
            resolution,
            t,
        } => hopflax_demo(&cli.out, &shape, eps, resolution, t),
    }
}

fn read_records(path: &Path) -> Result<Vec<TrialRecord>, Failure> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io(path))?;
        // a torn final line from an interrupted run is dropped and recomputed
        if let Ok(r) = TrialRecord::from_json_line(&line) {
            out.push(r);
        }
    }
    Ok(out)
}

fn sweep(out: &Path, configs: &[sdmatch::experiments::TrialConfig], jobs: usize, eps: f64) -> Result<(), Failure> {
    let path = out.join("records.jsonl");
    let existing: Vec<TrialRecord> = read_records(&path)?
        .into_iter()
        .filter(|r| r.schema_version == SCHEMA_VERSION && configs.contains(&r.config))
        .collect();
    let done: HashSet<(usize, u64)> = existing.iter().map(|r| r.key()).collect();
    eprintln!("{} of {} trials already recorded", done.len(), configs.len());
    let sink_file = Mutex::new(OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?);
    let sink = |r: &TrialRecord| {
        let mut f = sink_file.lock().expect("sink lock");
        // the sink is best effort: the full dataset is rewritten below
        let _ = writeln!(f, "{}", r.to_json_line());
        let _ = f.flush();
        eprintln!("n = {:>5} seed = {:>20} {:.1} s", r.config.n, r.config.seed, r.runtime_seconds);
    };
    let fresh = run_sweep(configs, jobs, &done, &sink).map_err(|e| usage(e.to_string()))?;
    drop(sink_file);
    let records = order_records(configs, existing.into_iter().chain(fresh).collect());
    let body: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    write_file(&path, &body)?;

    let aggs = aggregate(&records);
    write_file(&out.join("summary.csv"), &summary_csv(&aggs))?;
    let samples: Vec<LinfSample> = records.iter().filter_map(LinfSample::from_record).collect();
    for (stem, csv) in plot_data(&aggs, &samples) {
        write_file(&out.join(format!("plot_{stem}.csv")), &csv)?;
    }
    let report = linf_exponent_report(&samples);
    let extra = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "linf_exponent": report,
        "large_displacement_eps": eps,
        "large_displacement_frequency": prob_large_displacement(&records, eps),
    });
    write_file(&out.join("report.json"), &(extra.to_string() + "\n"))?;
    print!("{}", summary_csv(&aggs));
    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        return Err(numerical(format!("{failed} trials failed; see records.jsonl")));
    }
    Ok(())
}

fn stability(out: &Path, scales: Option<String>, seed: u64, jobs: usize) -> Result<(), Failure> {
    let scales: Option<Vec<f64>> = scales.map(|s| parse_list(&s)).transpose()?;
    let opts = StabilityOptions {
        seed,
        ..Default::default()
    };
    let suite = calibration_suite().map_err(|e| numerical(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| usage(e.to_string()))?;
    use rayon::prelude::*;
    let lines: Vec<Result<(String, bool), String>> = pool.install(|| {
        suite
            .par_iter()
            .map(|case| {
                let r = stability_check(&case.f, &case.cloud, &opts).map_err(|e| format!("{}: {e}", case.label))?;
                let ok = !r.admissible || r.ratio_high.map_or(true, |x| x <= C_STAB);
                let mut obj = serde_json::to_value(&r).map_err(|e| e.to_string())?;
                obj["label"] = case.label.clone().into();
                if let Some(sc) = &scales {
                    let reps = perturbation_scaling(&case.f, &case.cloud, sc, &opts).map_err(|e| e.to_string())?;
                    obj["scaling"] = serde_json::to_value(&reps).map_err(|e| e.to_string())?;
                    obj["scaling_spread"] = sdmatch::stability::scaling_spread(&reps).into();
                }
                Ok((obj.to_string(), ok))
            })
            .collect()
    });
    let mut body = String::new();
    let mut bad = Vec::new();
    for l in lines {
        let (line, ok) = l.map_err(numerical)?;
        body.push_str(&line);
        body.push('\n');
        if !ok {
            bad.push(line);
        }
    }
    let path = out.join("stability.jsonl");
    write_file(&path, &body)?;
    println!("{}", path.display());
    if bad.is_empty() {
        Ok(())
    } else {
        Err(numerical(format!("{} admissible cases exceed C_stab = {C_STAB}", bad.len())))
    }
}

fn hopflax_demo(out: &Path, shape: &str, eps: f64, resolution: usize, t: Option<f64>) -> Result<(), Failure> {
    let shape = TestShape::ALL
        .into_iter()
        .find(|s| s.name() == shape)
        .ok_or_else(|| usage(format!("unknown shape `{shape}` (cos, cos+sin, smooth-random)")))?;
    if resolution < 8 {
        return Err(usage("resolution must be at least 8"));
    }
    let grid = Grid::new(Domain::Torus, resolution);
    let f = ScalarField::from_fn(grid, |p| eps * shape.eval(p));
    let norms = DatumNorms::of(&f);
    let t = t.unwrap_or(0.5 * C_M / (norms.grad_sup + norms.hess_sup).max(f64::MIN_POSITIVE));
    if !(t > 0.0) {
        return Err(usage("t must be positive"));
    }
    let by_grid = hopflax_grid(&f, t).map_err(|e| numerical(e.to_string()))?;
    let by_char = hopflax_characteristics(&f, t).map_err(|e| numerical(e.to_string()))?;
    let gap = by_grid.q.sup_distance(&by_char.q).map_err(|e| numerical(e.to_string()))?;
    let dt = 0.1 * t;
    let hj = if norms.admissible(t + dt) {
        format!("{:.3e}", hj_residual(&f, t, dt).map_err(|e| numerical(e.to_string()))?)
    } else {
        "n/a (t + dt inadmissible)".to_string()
    };
    let mut csv = String::from("x1,x2,f,q_grid,q_characteristics\n");
    for (i, p) in grid.nodes().enumerate() {
        csv.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e}\n",
            p.x1,
            p.x2,
            f.values()[i],
            by_grid.q.values()[i],
            by_char.q.values()[i]
        ));
    }
    write_file(&out.join("hopflax_demo.csv"), &csv)?;
    println!(
        "t = {t:.4e}  t(|grad f| + |hess f|) = {:.4}  sup |Q_grid - Q_char| = {gap:.3e} ({:.2} h)  HJ residual = {hj}",
        norms.product(t),
        gap / grid.h()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            if code == EXIT_USAGE {
                eprintln!("{}", Cli::command().render_usage());
            }
            ExitCode::from(code)
        }
    }
}
