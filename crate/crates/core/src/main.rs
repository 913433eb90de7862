use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use relfit::bench::{gen_scenario, gene_preprocess_columns, run_study, ScenarioKind, ScenarioSpec, StudyConfig, StudyMethod};
use relfit::hypothesis::{run_test, Method, MethodConfig};
use relfit::io::{read_csv_path, write_csv};
use relfit::select::{default_kmax, ic_select, srift_select, Criterion, Distance};
use relfit::tree::{assign_labels, grow_full_tree, prune_bottom_up, topdown_cluster, Direction, TreeOptions};
use relfit::{Error, FitConstraints, Result, RngStream};

#[derive(Parser)]
#[command(name = "relfit", version, about = "Relative-fit tests and clustering for Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a clustering tree and write it as JSON.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value = "topdown")]
        direction: Direction,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minimum rows per half for a node to be split; default 2(d+2).
        #[arg(long = "min-node")]
        min_node: Option<usize>,
        /// SigClust bootstrap replicates per node.
        #[arg(long, default_value_t = 1000)]
        b: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one test on the whole sample and print the outcome as JSON.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        b: usize,
    },
    /// Choose the number of mixture components.
    Selectk {
        #[arg(long)]
        input: PathBuf,
        /// Largest number of components; default min(10, ⌊√n⌋).
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long, default_value = "kl")]
        distance: Distance,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use an information criterion instead of sequential testing.
        #[arg(long)]
        criterion: Option<Criterion>,
    },
    /// Replicate a scenario and write one CSV row per replicate and method.
    Simulate {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Scenario parameter as key=value; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        /// Comma-separated methods, e.g. rift,mrift,mrift-topdown,srift-kl,bic.
        #[arg(long, default_value = "rift,mrift", value_delimiter = ',')]
        methods: Vec<StudyMethod>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        b: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the data of replicate 0 here.
        #[arg(long = "data-out")]
        data_out: Option<PathBuf>,
    },
    /// Log-transform an expression matrix and keep the most variable genes.
    Genes {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 500)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("'{v}' is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn config(b: usize) -> MethodConfig {
    MethodConfig {
        sigclust_b: b,
        ..MethodConfig::default()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidInput("alpha must lie in [0, 1)".into()))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster {
            input,
            method,
            direction,
            alpha,
            seed,
            min_node,
            b,
            out,
        } => {
            check_alpha(alpha)?;
            let (_, data) = read_csv_path(&input)?;
            let c = FitConstraints::default_for(&data);
            let rng = RngStream::new(seed, 0);
            let opts = TreeOptions {
                min_node_size: min_node,
                config: config(b),
                ..TreeOptions::default()
            };
            let tree = match direction {
                Direction::TopDown => topdown_cluster(&data, method, alpha, &c, &opts, &rng)?,
                Direction::BottomUp => {
                    let min = min_node.unwrap_or(2 * (data.cols() + 2));
                    let full = grow_full_tree(&data, &c, opts.max_depth, min, &opts, &rng)?;
                    prune_bottom_up(&full, &data, method, alpha, &c, &opts, &rng)?
                }
            };
            let labels = assign_labels(&tree, &data)?;
            log::info!("{} leaves; labels for {} rows", tree.n_leaves(), labels.len());
            let mut w = sink(out.as_deref())?;
            writeln!(w, "{}", tree.to_json()?)?;
        }
        Command::Test {
            input,
            method,
            alpha,
            seed,
            b,
        } => {
            check_alpha(alpha)?;
            let (_, data) = read_csv_path(&input)?;
            let c = FitConstraints::default_for(&data);
            let o = run_test(method, &data, &c, alpha, &config(b), &RngStream::new(seed, 0))?;
            writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&o)?)?;
        }
        Command::Selectk {
            input,
            kmax,
            distance,
            alpha,
            seed,
            criterion,
        } => {
            check_alpha(alpha)?;
            let (_, data) = read_csv_path(&input)?;
            let c = FitConstraints::default_for(&data);
            let k_max = kmax.unwrap_or_else(|| default_kmax(data.rows()));
            let rng = RngStream::new(seed, 0);
            let cfg = MethodConfig::default();
            let v = match criterion {
                Some(crit) => json!({ "criterion": crit, "k_max": k_max, "k_hat": ic_select(&data, k_max, crit, &c, &cfg.rift.em, &rng)? }),
                None => {
                    let r = srift_select(&data, k_max, alpha, distance, &c, &cfg.rift, &rng)?;
                    json!({ "distance": distance, "k_max": k_max, "k_hat": r.k_hat, "per_j": r.per_j })
                }
            };
            writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Command::Simulate {
            scenario,
            dim,
            params,
            methods,
            reps,
            alpha,
            seed,
            b,
            out,
            data_out,
        } => {
            check_alpha(alpha)?;
            let mut spec = ScenarioSpec::new(scenario, dim);
            for (k, v) in params {
                spec = spec.with(&k, v);
            }
            if let Some(p) = data_out {
                let (x, _) = gen_scenario(&spec, &RngStream::new(seed, 0).derive(0))?;
                let header: Vec<String> = (1..=x.cols()).map(|j| format!("x{j}")).collect();
                write_csv(BufWriter::new(File::create(p)?), &header, &x)?;
            }
            let mut cfg = StudyConfig::new(spec, methods, reps, alpha, seed);
            cfg.config.sigclust_b = b;
            let report = run_study(&cfg)?;
            report.write_csv(sink(out.as_deref())?)?;
        }
        Command::Genes { input, top, out } => {
            let (header, data) = read_csv_path(&input)?;
            let (processed, kept) = gene_preprocess_columns(&data, top)?;
            let header: Vec<String> = kept.into_iter().map(|j| header[j].clone()).collect();
            write_csv(sink(out.as_deref())?, &header, &processed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
