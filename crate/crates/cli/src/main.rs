use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use gwolab::laplace::{log_laplace_joint, nre_terms, FddQuery};
use gwolab::limits::{limit_exponent, LimitParams, LimitQuery, Theorem};
use gwolab::multitype::{moment_table, nested_transform, simulate_multitype, MultitypeLaw, NestedQuery};
use gwolab::renewal::RenewalTable;
use gwolab::sim::{map_replicates, simulate, transform_sample, SimConfig, TransformEstimate, TransformTerm};
use gwolab::verify::{verify_all, verify_plans, RunReport, SweepPlan};
use gwolab::{Error, LifeLaw, DEFAULT_SEED};

mod format;

use format::{fmt_row, Csv};

#[derive(Parser)]
#[command(name = "gwolab", version, about = "Critical Galton-Watson processes with overlapping generations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Global {
    /// Seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, or "auto". GWOLAB_THREADS is used when this is not given.
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Dump the resolved configuration as JSON to this path.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Life laws.
    Law {
        #[command(subcommand)]
        command: LawCommand,
    },
    /// Renewal function U(t) or residual times R_t(j).
    Renewal {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        horizon: usize,
        /// Emit R_t(j) and R(j) at this t instead of U.
        #[arg(long)]
        residual: Option<usize>,
    },
    /// Exact log-Laplace transform Λ(t).
    Laplace {
        #[arg(long)]
        law: PathBuf,
        /// A query object or an array of query objects.
        #[arg(long, conflicts_with_all = ["score", "points", "weights"])]
        query: Option<PathBuf>,
        /// Score for an inline query: alive|newborn|ever_born|power:<gamma>|table:<file>.
        #[arg(long, requires = "points")]
        score: Option<String>,
        /// Inline query times t1,t2,..
        #[arg(long, value_delimiter = ',')]
        points: Vec<i64>,
        /// Inline query weights l1,l2,..; all 1 when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        horizon: i64,
        /// Add the renewal-equation residual for t >= 0.
        #[arg(long)]
        check_nre: bool,
    },
    /// Limit exponent r_p(y).
    Limit {
        #[arg(long)]
        theorem: Theorem,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// y0:y1:steps
        #[arg(long)]
        ygrid: String,
    },
    /// Monte Carlo simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        emit_trajectories: Option<PathBuf>,
        /// Transform weights and times: l1,l2@t1,t2.
        #[arg(long)]
        transform: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Replace the configured scores; repeat for several columns.
        #[arg(long)]
        score: Vec<String>,
        /// Score column the transform applies to, counted from 1.
        #[arg(long, default_value_t = 1)]
        column: usize,
    },
    /// Decomposable multitype processes.
    Multitype {
        #[command(subcommand)]
        command: MultitypeCommand,
    },
    /// Convergence sweeps and Monte Carlo checks.
    Verify {
        #[arg(long, conflicts_with = "all")]
        plan: Option<PathBuf>,
        #[arg(long)]
        all: bool,
        /// Plot-ready CSV of the sweep curves.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print the summary table to stderr.
        #[arg(long)]
        table: bool,
    },
}

#[derive(Subcommand)]
enum LawCommand {
    /// Check a law file and print its moments.
    Validate { file: PathBuf },
}

#[derive(Subcommand)]
enum MultitypeCommand {
    Simulate {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        replicates: usize,
    },
    /// Mean matrices M_ij(t).
    Moments {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        horizon: usize,
    },
    /// Exact joint transform from one type-1 individual.
    Transform {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        horizon: i64,
    },
}

enum Failure {
    Config(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn thread_count(flag: Option<&str>) -> gwolab::Result<Option<usize>> {
    let env = std::env::var("GWOLAB_THREADS").ok();
    let Some(raw) = flag.map(str::to_string).or(env) else {
        return Ok(None);
    };
    if raw == "auto" {
        return Ok(None);
    }
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(Error::Config {
            field: "threads".into(),
            reason: format!("expected a positive integer or \"auto\", got {raw:?}"),
        }),
    }
}

fn run(cli: Cli) -> Outcome {
    let threads = thread_count(cli.global.threads.as_deref())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config {
        field: "threads".into(),
        reason: e.to_string(),
    })?;
    let mut manifest = Manifest::new(&cli.global, threads);
    let result = pool.install(|| dispatch(&cli, &mut manifest));
    if let Some(path) = &cli.global.manifest {
        fs::write(path, serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n")?;
    }
    result
}

#[derive(Serialize)]
struct Manifest {
    version: &'static str,
    seed: u64,
    threads: Option<usize>,
    args: Vec<String>,
    inputs: serde_json::Map<String, Value>,
}

impl Manifest {
    fn new(global: &Global, threads: Option<usize>) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION"),
            seed: global.seed.unwrap_or(DEFAULT_SEED),
            threads,
            args: std::env::args().skip(1).collect(),
            inputs: serde_json::Map::new(),
        }
    }

    /// Read a JSON input and record it.
    fn read(&mut self, path: &Path) -> gwolab::Result<String> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            field: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            self.inputs.insert(path.display().to_string(), v);
        }
        Ok(text)
    }
}

fn emit(global: &Global, text: &str) -> io::Result<()> {
    match &global.output {
        Some(path) => fs::write(path, text),
        None => io::stdout().write_all(text.as_bytes()),
    }
}

fn dispatch(cli: &Cli, manifest: &mut Manifest) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Law {
            command: LawCommand::Validate { file },
        } => {
            let law = LifeLaw::from_json_str(&manifest.read(file)?)?;
            let m = law.moments();
            let text = serde_json::to_string_pretty(&json!({
                "histories": law.len(),
                "max_age": law.max_age(),
                "moments": m,
            }))
            .map_err(Error::from)?;
            emit(g, &(text + "\n"))?;
        }
        Command::Renewal { law, horizon, residual } => {
            let law = LifeLaw::from_json_str(&manifest.read(law)?)?;
            let table = RenewalTable::from_moments(&law.moments(), *horizon)?;
            let mut csv = Csv::new();
            match residual {
                None => {
                    csv.header(&["t", "U"]);
                    for (t, u) in table.values().iter().enumerate() {
                        csv.row(&fmt_row(t, &[*u]));
                    }
                }
                Some(t) => {
                    let r = table.residual_distribution(*t, None)?;
                    csv.header(&["j", "R_t", "R"]);
                    for (k, (rt, lim)) in r.residual.iter().zip(&r.limit).enumerate() {
                        csv.row(&fmt_row(k + 1, &[*rt, *lim]));
                    }
                }
            }
            emit(g, &csv.finish())?;
        }
        Command::Laplace {
            law,
            query,
            score,
            points,
            weights,
            scale,
            horizon,
            check_nre,
        } => {
            let law = LifeLaw::from_json_str(&manifest.read(law)?)?;
            let components = match (query, score) {
                (Some(path), _) => parse_queries(&manifest.read(path)?)?,
                (None, Some(score)) => vec![inline_query(score, points, weights, *scale)?],
                (None, None) => {
                    return Err(Error::Config {
                        field: "laplace".into(),
                        reason: "pass --query <json> or --score with --points".into(),
                    }
                    .into())
                }
            };
            let grid = log_laplace_joint(&components, &law, *horizon)?;
            let mut csv = Csv::new();
            if *check_nre {
                let renewal = RenewalTable::from_moments(&law.moments(), (*horizon).max(0) as usize)?;
                let terms = nre_terms(&grid, &law, &renewal, *horizon)?;
                csv.header(&["t", "Lambda", "nre_residual"]);
                for (t, v) in grid.iter() {
                    let res = if t >= 0 { terms[t as usize].residual() } else { f64::NAN };
                    csv.row(&format!("{t},{}", format::fmt17s(&[v, res])));
                }
            } else {
                csv.header(&["t", "Lambda"]);
                for (t, v) in grid.iter() {
                    csv.row(&format!("{t},{}", format::fmt17(v)));
                }
            }
            emit(g, &csv.finish())?;
        }
        Command::Limit {
            theorem,
            params,
            query,
            ygrid,
        } => {
            let params: LimitParams = serde_json::from_str(&manifest.read(params)?).map_err(Error::from)?;
            let query: LimitQuery = serde_json::from_str(&manifest.read(query)?).map_err(Error::from)?;
            let r = limit_exponent(*theorem, &params, &query)?;
            let ys = parse_ygrid(ygrid)?;
            let mut csv = Csv::new();
            csv.header(&["y", "r"]);
            for y in ys {
                csv.row(&format::fmt17s(&[y, r.eval(y)?]));
            }
            emit(g, &csv.finish())?;
        }
        Command::Simulate {
            config,
            emit_trajectories,
            transform,
            scale,
            score,
            column,
        } => {
            let mut config = SimConfig::from_json_str(&manifest.read(config)?)?;
            if let Some(seed) = g.seed {
                config.seed = seed;
            }
            if !score.is_empty() {
                config.scores = score.iter().map(|s| s.parse()).collect::<gwolab::Result<_>>()?;
                config.validate()?;
            }
            manifest.seed = config.seed;
            if let Some(path) = emit_trajectories {
                write_trajectories(&config, path)?;
            }
            match transform {
                Some(spec) => {
                    if *column == 0 {
                        return Err(Error::Config {
                            field: "column".into(),
                            reason: "score columns count from 1".into(),
                        }
                        .into());
                    }
                    let terms = parse_transform(spec, column - 1)?;
                    for t in &terms {
                        if t.time > config.horizon || t.score >= config.scores.len() {
                            return Err(Error::Config {
                                field: "transform".into(),
                                reason: format!("term {t:?} outside the configured scores or horizon"),
                            }
                            .into());
                        }
                    }
                    let samples = map_replicates(&config, |traj| transform_sample(&traj, &terms, *scale))?;
                    let est = TransformEstimate::from_samples(&samples, config.n)?;
                    emit(g, &(serde_json::to_string_pretty(&est).map_err(Error::from)? + "\n"))?;
                }
                None => emit(g, &simulation_summary(&config)?)?,
            }
        }
        Command::Multitype { command } => multitype(g, manifest, command)?,
        Command::Verify { plan, all, csv, table } => {
            let report = if *all {
                verify_all(manifest.seed)
            } else if let Some(path) = plan {
                let text = manifest.read(path)?;
                let plans: Vec<SweepPlan> = match serde_json::from_str::<Value>(&text).map_err(Error::from)? {
                    Value::Array(items) => items
                        .into_iter()
                        .map(|v| serde_json::from_value(v).map_err(Error::from))
                        .collect::<gwolab::Result<_>>()?,
                    v => vec![serde_json::from_value(v).map_err(Error::from)?],
                };
                for p in &plans {
                    p.validate()?;
                }
                verify_plans(&plans, manifest.seed)
            } else {
                return Err(Error::Config {
                    field: "verify".into(),
                    reason: "pass --plan <json> or --all".into(),
                }
                .into());
            };
            emit(g, &(report.to_json()? + "\n"))?;
            if let Some(path) = csv {
                fs::write(path, curves_csv(&report))?;
            }
            if *table {
                eprint!("{}", report.table());
            }
            if !report.pass {
                return Err(Failure::Verify);
            }
        }
    }
    Ok(())
}

fn multitype(g: &Global, manifest: &mut Manifest, command: &MultitypeCommand) -> Outcome {
    match command {
        MultitypeCommand::Simulate {
            law,
            n,
            horizon,
            replicates,
        } => {
            let law = MultitypeLaw::from_json_str(&manifest.read(law)?)?;
            let out = simulate_multitype(&law, *n, *horizon, *replicates, manifest.seed)?;
            let mut csv = Csv::new();
            let mut header = vec!["replicate".to_string(), "t".to_string()];
            header.extend((1..=law.q()).map(|j| format!("Z{j}")));
            csv.header(&header.iter().map(String::as_str).collect::<Vec<_>>());
            for (r, traj) in out.iter().enumerate() {
                for t in 0..=*horizon {
                    let counts: Vec<String> = traj.counts.iter().map(|c| c[t].to_string()).collect();
                    csv.row(&format!("{r},{t},{}", counts.join(",")));
                }
            }
            emit(g, &csv.finish())?;
        }
        MultitypeCommand::Moments { law, horizon } => {
            let law = MultitypeLaw::from_json_str(&manifest.read(law)?)?;
            let table = moment_table(&law, *horizon);
            let mut csv = Csv::new();
            csv.header(&["t", "i", "j", "M"]);
            for t in 0..=*horizon {
                for i in 1..=law.q() {
                    for j in i..=law.q() {
                        csv.row(&format!("{t},{i},{j},{}", format::fmt17(table.get(i, j, t))));
                    }
                }
            }
            emit(g, &csv.finish())?;
        }
        MultitypeCommand::Transform { law, query, horizon } => {
            let law = MultitypeLaw::from_json_str(&manifest.read(law)?)?;
            let query: NestedQuery = serde_json::from_str(&manifest.read(query)?).map_err(Error::from)?;
            let grid = nested_transform(&law, &query, *horizon)?;
            let mut csv = Csv::new();
            let mut header = vec!["t".to_string()];
            header.extend((1..=law.q()).map(|l| format!("Lambda{l}")));
            csv.header(&header.iter().map(String::as_str).collect::<Vec<_>>());
            for t in grid.t_min()..=grid.horizon() {
                let values: Vec<f64> = (1..=law.q()).map(|l| grid.at(l, t)).collect();
                csv.row(&format!("{t},{}", format::fmt17s(&values)));
            }
            emit(g, &csv.finish())?;
        }
    }
    Ok(())
}

fn parse_queries(text: &str) -> gwolab::Result<Vec<FddQuery>> {
    let v: Value = serde_json::from_str(text)?;
    let queries: Vec<FddQuery> = match v {
        Value::Array(_) => serde_json::from_value(v)?,
        v => vec![serde_json::from_value(v)?],
    };
    Ok(queries)
}

fn inline_query(score: &str, points: &[i64], weights: &[f64], scale: f64) -> gwolab::Result<FddQuery> {
    let weights = if weights.is_empty() { vec![1.0; points.len()] } else { weights.to_vec() };
    if weights.len() != points.len() {
        return Err(Error::Config {
            field: "weights".into(),
            reason: format!("{} points but {} weights", points.len(), weights.len()),
        });
    }
    let mut pairs: Vec<(i64, f64)> = points.iter().copied().zip(weights).collect();
    pairs.sort_by_key(|p| std::cmp::Reverse(p.0));
    let (points, weights) = pairs.into_iter().unzip();
    FddQuery::new(points, weights, score.parse()?, scale)
}

fn parse_ygrid(spec: &str) -> gwolab::Result<Vec<f64>> {
    let bad = || Error::Config {
        field: "ygrid".into(),
        reason: format!("expected y0:y1:steps, got {spec:?}"),
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let y0: f64 = parts[0].parse().map_err(|_| bad())?;
    let y1: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if steps == 0 || y1 < y0 || y0 < 0.0 {
        return Err(bad());
    }
    let grid = gwolab::verify::YGrid {
        start: y0,
        end: y1,
        steps,
    };
    Ok(grid.points())
}

fn parse_transform(spec: &str, score: usize) -> gwolab::Result<Vec<TransformTerm>> {
    let bad = |reason: String| Error::Config {
        field: "transform".into(),
        reason,
    };
    let (weights, times) = spec
        .split_once('@')
        .ok_or_else(|| bad(format!("expected l1,l2@t1,t2, got {spec:?}")))?;
    let weights: Vec<f64> = weights
        .split(',')
        .map(|w| w.trim().parse().map_err(|_| bad(format!("bad weight {w:?}"))))
        .collect::<gwolab::Result<_>>()?;
    let times: Vec<usize> = times
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad(format!("bad time {t:?}"))))
        .collect::<gwolab::Result<_>>()?;
    if weights.len() != times.len() {
        return Err(bad(format!("{} weights but {} times", weights.len(), times.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(bad("weights must be finite and nonnegative".into()));
    }
    Ok(weights
        .into_iter()
        .zip(times)
        .map(|(weight, time)| TransformTerm { score, time, weight })
        .collect())
}

fn write_trajectories(config: &SimConfig, path: &Path) -> gwolab::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    let mut header = vec!["replicate".to_string(), "t".to_string(), "Z".to_string()];
    header.extend((1..=config.scores.len()).map(|k| format!("X{k}")));
    writeln!(out, "{}", header.join(","))?;
    for (r, traj) in simulate(config)?.enumerate() {
        let traj = traj?;
        for t in 0..=config.horizon {
            let xs: Vec<f64> = traj.counts.iter().map(|c| c[t]).collect();
            if xs.is_empty() {
                writeln!(out, "{r},{t},{}", traj.newborns[t])?;
            } else {
                writeln!(out, "{r},{t},{},{}", traj.newborns[t], format::fmt17s(&xs))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-time sample means and standard errors of `Z_t` and each `X_k(t)`.
fn simulation_summary(config: &SimConfig) -> gwolab::Result<String> {
    let rows = map_replicates(config, |traj| {
        let mut cols = vec![traj.newborns.iter().map(|&z| z as f64).collect::<Vec<_>>()];
        cols.extend(traj.counts);
        cols
    })?;
    let k = config.scores.len();
    let mut csv = Csv::new();
    let mut header = vec!["t".to_string(), "mean_Z".to_string(), "se_Z".to_string()];
    for j in 1..=k {
        header.push(format!("mean_X{j}"));
        header.push(format!("se_X{j}"));
    }
    csv.header(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for t in 0..=config.horizon {
        let mut values = Vec::with_capacity(2 * (k + 1));
        for c in 0..=k {
            let samples: Vec<f64> = rows.iter().map(|r| r[c][t]).collect();
            let (mean, se) = gwolab::numeric::mean_and_std_error(&samples);
            values.push(mean);
            values.push(se);
        }
        csv.row(&fmt_row(t, &values));
    }
    Ok(csv.finish())
}

fn curves_csv(report: &RunReport) -> String {
    let mut ns: Vec<u64> = report
        .items
        .iter()
        .filter_map(|i| i.sweep.as_ref())
        .flat_map(|s| s.n_values.iter().copied())
        .collect();
    ns.sort_unstable();
    ns.dedup();
    let mut header = vec!["plan".to_string(), "y".to_string()];
    header.extend(ns.iter().map(|n| format!("n={n}")));
    header.push("limit".to_string());
    let mut csv = Csv::new();
    csv.header(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for item in &report.items {
        let Some(sweep) = &item.sweep else { continue };
        for p in &sweep.curves {
            let mut row = vec![item.id.clone(), format::fmt17(p.y)];
            for n in &ns {
                row.push(match sweep.n_values.iter().position(|m| m == n) {
                    Some(k) => format::fmt17(p.scaled[k]),
                    None => String::new(),
                });
            }
            row.push(format::fmt17(p.limit));
            csv.row(&row.join(","));
        }
    }
    csv.finish()
}
