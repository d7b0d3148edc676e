use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use coevo::constants::{self, ModelConstants, Tolerances};
use coevo::growth::{self, GrowthConfig, Target, Variant};
use coevo::harness::{self, ExperimentSpec};
use coevo::{io, observables, walk, StepDistribution};

#[derive(Parser)]
#[command(name = "coevo", version, about = "Random trees grown by exploration walks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Limit constants of a step law.
    Constants {
        #[arg(long)]
        pmf: StepDistribution,
        /// Also report the PageRank exponent at this damping.
        #[arg(long)]
        damping: Option<f64>,
        /// Largest truncation for the Perron-root trace.
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long)]
        json: bool,
    },
    /// Hitting-time tables and profile series.
    Rw {
        #[command(subcommand)]
        cmd: RwCmd,
    },
    /// Grow one tree.
    Grow {
        #[arg(long)]
        pmf: StepDistribution,
        /// Vertex count, including the root.
        #[arg(long)]
        n: Option<u64>,
        /// Time horizon for continuous-time variants.
        #[arg(long)]
        t: Option<f64>,
        /// discrete, continuous, killed or pr:<c>
        #[arg(long, default_value = "discrete")]
        variant: Variant,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `.tsv` writes text, anything else the binary format.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Statistics of a saved tree.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pagerank: Option<f64>,
        /// Largest fringe tree size to tabulate.
        #[arg(long)]
        fringe: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment from JSON or a preset; exits 0 iff all pass.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// A1..A14, or "all".
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RwCmd {
    /// Grid of P(T_k = i).
    Hitting {
        #[arg(long)]
        pmf: StepDistribution,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        csv: bool,
    },
    /// Expected number of depth-k vertices of the killed tree at time t.
    Profile {
        #[arg(long, default_value = "geometric:0.5")]
        pmf: StepDistribution,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 400)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        // reader went away, e.g. piped into `head`
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type Res = Result<ExitCode, Box<dyn std::error::Error>>;

fn print_json(v: &impl serde::Serialize) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cli: Cli) -> Res {
    match cli.cmd {
        Cmd::Constants {
            pmf,
            damping,
            k,
            json,
        } => cmd_constants(&pmf, damping, k, json),
        Cmd::Rw { cmd } => match cmd {
            RwCmd::Hitting { pmf, k, steps, csv } => {
                let t = walk::hitting_time_table(&pmf, k, steps, 1e-14);
                if csv {
                    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
                    writeln!(out, "k,i,prob")?;
                    for kk in 1..=k {
                        for (i, p) in t.row(kk).iter().enumerate() {
                            writeln!(out, "{kk},{i},{p}")?;
                        }
                    }
                    out.flush()?;
                } else {
                    print_json(&t)?;
                }
                Ok(ExitCode::SUCCESS)
            }
            RwCmd::Profile { pmf, k, t, steps } => {
                let table = walk::hitting_time_table(&pmf, k, steps, 1e-14);
                let v = walk::expected_profile(&table, k, t)?;
                print_json(
                    &json!({ "pmf": pmf.to_string(), "k": k, "t": t, "value": v.value, "error_bound": v.error_bound }),
                )?;
                Ok(ExitCode::SUCCESS)
            }
        },
        Cmd::Grow {
            pmf,
            n,
            t,
            variant,
            seed,
            out,
            stats,
        } => {
            let target = match (n, t) {
                (Some(n), None) => Target::Vertices(n),
                (None, Some(t)) => Target::Horizon(t),
                _ => return Err("give exactly one of --n and --t".into()),
            };
            let cfg = GrowthConfig {
                pmf,
                target,
                variant,
                seed,
            };
            let tree = growth::grow(&cfg, 0)?;
            if let Some(path) = out {
                io::serialize_tree(&tree, &path, io::Format::from_path(&path))?;
            }
            let summary = tree_summary(&tree, None, None);
            match stats {
                Some(path) => std::fs::write(path, serde_json::to_string_pretty(&summary)?)?,
                None => print_json(&summary)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Stats {
            input,
            pagerank,
            fringe,
            json,
        } => {
            let tree = io::load_tree(&input)?;
            let summary = tree_summary(&tree, pagerank, fringe);
            if json {
                print_json(&summary)?;
            } else {
                for (k, v) in summary.as_object().unwrap() {
                    println!("{k}\t{v}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Experiment {
            config,
            preset,
            out,
            csv_dir,
        } => {
            let specs: Vec<ExperimentSpec> = match (config, preset) {
                (Some(path), None) => vec![ExperimentSpec::from_json(&std::fs::read_to_string(path)?)?],
                (None, Some(p)) if p.eq_ignore_ascii_case("all") => harness::PRESETS
                    .iter()
                    .flat_map(|n| harness::preset(n).unwrap())
                    .collect(),
                (None, Some(p)) => harness::preset(&p).ok_or(format!("unknown preset {p}"))?,
                _ => return Err("give exactly one of --config and --preset".into()),
            };
            let mut reports = Vec::new();
            for s in &specs {
                let r = harness::run_experiment(s)?;
                for line in r.summary_lines() {
                    println!("{line}");
                }
                if let Some(dir) = &csv_dir {
                    r.write_csv_dir(dir)?;
                }
                reports.push(r);
            }
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&reports)?)?;
            }
            Ok(if reports.iter().all(|r| r.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn cmd_constants(d: &StepDistribution, damping: Option<f64>, k: usize, as_json: bool) -> Res {
    let c = ModelConstants::compute(d, Tolerances::default())?;
    let ks: Vec<usize> = (1..=k).collect();
    let trace = constants::alpha_trace(d, &ks, 1e-13).ok();
    let pr = damping.map(|c_| constants::predicted_pagerank_exponent(&c, d, c_));
    if as_json {
        print_json(&json!({
            "constants": c,
            "alpha_trace": trace,
            "pagerank_exponent": pr.as_ref().map(|r| r.as_ref().ok()),
        }))?;
    } else {
        println!("pmf\t{}", c.pmf);
        println!("mean\t{}", c.mean_z);
        println!("regime\t{:?}", c.regime);
        println!("s0\t{}", c.s0);
        println!("R\t{}", c.r);
        println!("q*\t{}", c.q_star);
        println!("kappa0\t{} (at s = {})", c.kappa0, c.kappa0_minimizer);
        if let Some(e) = c.degree_exponent {
            println!("degree exponent\t[{}, {}]", e.lo(), e.hi());
        }
        if let Some(r) = pr {
            match r {
                Ok(e) => println!("pagerank exponent\t[{}, {}]", e.lo(), e.hi()),
                Err(e) => println!("pagerank exponent\t{e}"),
            }
        }
        if let Some(t) = trace.and_then(|t| t.last().copied()) {
            println!("alpha_{}\t{}", t.0, t.1);
        }
        for w in &c.warnings {
            println!("warning\t{w:?}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn tree_summary(tree: &growth::TreeState, damping: Option<f64>, fringe: Option<usize>) -> serde_json::Value {
    let n = tree.n();
    let mut v = json!({
        "n": n,
        "height": observables::height(tree),
        "root_degree": observables::root_degree(tree),
        "degree_histogram": observables::degree_histogram(tree),
        "profile": observables::depth_profile(tree).counts,
    });
    let o = v.as_object_mut().unwrap();
    if let Ok(w) = observables::martingale_w(tree) {
        o.insert("martingale_w".into(), json!(w));
    }
    if let Some(c) = damping {
        let pr = observables::pagerank_scores(tree, c);
        let max = pr.scores.iter().copied().fold(0.0, f64::max);
        o.insert("pagerank_damping".into(), json!(c));
        o.insert("pagerank_root".into(), json!(pr.scores[0]));
        o.insert("pagerank_max".into(), json!(max));
        o.insert("pagerank_total".into(), json!(pr.stationary_total()));
        if n >= 1000 {
            if let Ok(f) = observables::tail_exponent(&pr.scores, observables::TailParams::Hill { m: None }) {
                o.insert("pagerank_hill".into(), json!(f));
            }
        }
    }
    if let Some(m) = fringe {
        o.insert("fringe".into(), json!(observables::fringe_histogram(tree, m, 0)));
    }
    v
}
