use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use parinv::bench::{self, CompareConfig, GenSpec};
use parinv::constraints;
use parinv::exec::{run_forward, run_inverse, values_from_json, values_to_json};
use parinv::inversion::{invert, normalize};
use parinv::propagation::annotations_to_json;
use parinv::solve::{solve_theta, Objective, SolveConfig, UserLoss};
use parinv::{Graph, InverseProgram, Value};

#[derive(Parser)]
#[command(name = "parinv", version, about = "Parametric inversion of dataflow graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a graph file parses and builds.
    Validate { graph: PathBuf },
    /// Build the parametric inverse of a graph.
    Invert {
        graph: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the θ layout.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// Also write the propagated constants, shapes and types.
        #[arg(long = "dump-annotations")]
        dump_annotations: Option<PathBuf>,
    },
    /// Insert contractions so the inverse is defined everywhere.
    Totalize {
        program: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Eliminate parameters fixed by equality constraints.
    Reduce {
        program: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Write the collected constraints and eliminations.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a forward graph.
    Run {
        graph: PathBuf,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate an inverse program at (y, θ) and report losses.
    Runinv {
        program: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Optimize θ for a target y.
    Solve {
        program: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Propagate, invert, reduce, totalize and solve in one go.
    Pipeline {
        graph: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        opts: SolveOpts,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "no-reduce")]
        no_reduce: bool,
        #[arg(long = "no-totalize")]
        no_totalize: bool,
        #[arg(long = "dump-annotations")]
        dump_annotations: bool,
    },
    /// Generate benchmark graphs and comparison reports.
    Bench {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Graphs (random) or targets (ik, compare).
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Samples per ray for render1d.
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long = "max-evals", default_value_t = 5000)]
        max_evals: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Ik,
    Random,
    Render1d,
    Compare,
}

#[derive(Args)]
struct SolveOpts {
    /// `abs-sum`, `zero`, or `target:<values.json>`.
    #[arg(long, default_value = "abs-sum")]
    loss: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long = "max-evals", default_value_t = 5000)]
    max_evals: usize,
    /// Weight of the domain loss.
    #[arg(long = "lambda-dm", default_value_t = 1.0)]
    lambda_dm: f64,
}

impl SolveOpts {
    fn config(&self) -> SolveConfig {
        SolveConfig {
            restarts: self.restarts,
            max_evals: self.max_evals,
            seed: self.seed,
            ..SolveConfig::default()
        }
    }

    fn objective(&self, y: BTreeMap<String, Value>) -> Result<Objective> {
        let loss = match self.loss.as_str() {
            "abs-sum" => UserLoss::AbsSum,
            "zero" => UserLoss::Zero,
            other => match other.strip_prefix("target:") {
                Some(path) => UserLoss::Target(read_values(Path::new(path))?),
                None => bail!("unknown loss {other:?}; expected abs-sum, zero or target:<file>"),
            },
        };
        Ok(Objective {
            loss,
            lambda_dm: self.lambda_dm,
            y,
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_graph(path: &Path) -> Result<Graph> {
    parinv::json::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_program(path: &Path) -> Result<InverseProgram> {
    InverseProgram::from_json(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_values(path: &Path) -> Result<BTreeMap<String, Value>> {
    values_from_json(&read_json(path)?).with_context(|| format!("in {}", path.display()))
}

/// θ as a bare array or as the `theta` field of a solve result.
fn read_theta(path: &Path) -> Result<Vec<f64>> {
    let doc = read_json(path)?;
    let arr = doc.get("theta").unwrap_or(&doc);
    arr.as_array()
        .and_then(|a| a.iter().map(|v| v.as_f64()).collect::<Option<Vec<f64>>>())
        .with_context(|| format!("{}: expected an array of numbers", path.display()))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Write to `path` if given, otherwise to stdout.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_invert(graph: &Path, output: Option<&Path>, layout: Option<&Path>, annotations: Option<&Path>) -> Result<()> {
    let g = read_graph(graph)?;
    let (n, ann) = normalize(&g)?;
    let ip = invert(&n, &ann)?;
    if let Some(p) = annotations {
        write(p, &pretty(&annotations_to_json(&n, &ann)))?;
    }
    if let Some(p) = layout {
        write(p, &pretty(&ip.layout.to_json()))?;
    }
    emit(output, &ip.to_json())
}

fn cmd_reduce(program: &Path, output: Option<&Path>, report: Option<&Path>) -> Result<()> {
    let ip = read_program(program)?;
    let collected = constraints::collect(&ip);
    let (red, elim) = constraints::reduce(&ip)?;
    if let Some(p) = report {
        let mut doc = constraints::report_json(&ip, &collected, &elim);
        doc["slots_after"] = json!(red.layout.total);
        write(p, &pretty(&doc))?;
    }
    emit(output, &red.to_json())
}

fn cmd_solve(ip: &InverseProgram, y: &Path, opts: &SolveOpts, output: Option<&Path>) -> Result<()> {
    let obj = opts.objective(read_values(y)?)?;
    let r = solve_theta(ip, &obj, &opts.config())?;
    emit(output, &pretty(&r.to_json()))
}

fn cmd_pipeline(
    graph: &Path,
    y: &Path,
    opts: &SolveOpts,
    out: &Path,
    no_reduce: bool,
    no_totalize: bool,
    dump_annotations: bool,
) -> Result<()> {
    let g = read_graph(graph)?;
    let (n, ann) = normalize(&g)?;
    if dump_annotations {
        write(&out.join("annotations.json"), &pretty(&annotations_to_json(&n, &ann)))?;
    }
    let mut ip = invert(&n, &ann)?;
    write(&out.join("inverse.json"), &ip.to_json())?;
    if !no_reduce {
        let collected = constraints::collect(&ip);
        let (red, elim) = constraints::reduce(&ip)?;
        write(
            &out.join("reduce_report.json"),
            &pretty(&constraints::report_json(&ip, &collected, &elim)),
        )?;
        ip = red;
        write(&out.join("reduced.json"), &ip.to_json())?;
    }
    if !no_totalize {
        ip = parinv::totalize(&ip);
        write(&out.join("totalized.json"), &ip.to_json())?;
    }
    let obj = opts.objective(read_values(y)?)?;
    let r = solve_theta(&ip, &obj, &opts.config())?;
    let text = pretty(&r.to_json());
    write(&out.join("solve.json"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_bench(suite: Suite, seed: u64, out: &Path, count: usize, samples: usize, solve: SolveConfig) -> Result<()> {
    let mut written = Vec::new();
    let mut put = |name: String, text: &str| -> Result<()> {
        write(&out.join(&name), text)?;
        written.push(name);
        Ok(())
    };
    match suite {
        Suite::Ik => {
            put("ik3.json".into(), &parinv::json::to_json(&bench::ik3_graph()))?;
            for links in 4..=6 {
                put(format!("chain{links}.json"), &parinv::json::to_json(&bench::chain_graph(links)))?;
            }
            let targets: Vec<serde_json::Value> = bench::ik_targets(3, count, seed)
                .into_iter()
                .map(|(x, y)| json!({"x": x, "y": y}))
                .collect();
            put("ik3_targets.json".into(), &pretty(&json!(targets)))?;
        }
        Suite::Random => {
            for i in 0..count as u64 {
                let (g, x) = bench::gen_random_with_inputs(&GenSpec::with_seed(seed + i))?;
                put(format!("random_{:04}.json", seed + i), &parinv::json::to_json(&g))?;
                put(format!("random_{:04}_inputs.json", seed + i), &pretty(&values_to_json(&x)))?;
            }
        }
        Suite::Render1d => {
            let g = bench::render1d_graph(samples)?;
            put(format!("render1d_{samples}.json"), &parinv::json::to_json(&g))?;
        }
        Suite::Compare => {
            let cfg = CompareConfig {
                solve,
                ..CompareConfig::default()
            };
            let report = bench::compare_harness(&bench::ik_problems(count, seed), &cfg)?;
            put("compare.csv".into(), &report.csv())?;
            put("summary.csv".into(), &report.summary_csv())?;
            put("results.json".into(), &pretty(&json!(report.results)))?;
        }
    }
    print!("{}", pretty(&json!({ "written": written })));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { graph } => {
            let g = read_graph(&graph)?;
            let names = |v: Vec<(parinv::NodeId, &str)>| v.into_iter().map(|(_, n)| n.to_string()).collect::<Vec<_>>();
            let doc = json!({
                "valid": true,
                "nodes": g.len(),
                "ops": g.op_count(),
                "values": g.value_count(),
                "inputs": names(g.inputs()),
                "outputs": names(g.outputs()),
            });
            print!("{}", pretty(&doc));
            Ok(())
        }
        Command::Invert {
            graph,
            output,
            layout,
            dump_annotations,
        } => cmd_invert(&graph, output.as_deref(), layout.as_deref(), dump_annotations.as_deref()),
        Command::Totalize { program, output } => {
            let ip = parinv::totalize(&read_program(&program)?);
            emit(output.as_deref(), &ip.to_json())
        }
        Command::Reduce { program, output, report } => cmd_reduce(&program, output.as_deref(), report.as_deref()),
        Command::Run { graph, inputs, output } => {
            let g = read_graph(&graph)?;
            let (out, _) = run_forward(&g, &read_values(&inputs)?)?;
            emit(output.as_deref(), &pretty(&values_to_json(&out)))
        }
        Command::Runinv {
            program,
            y,
            theta,
            output,
        } => {
            let ip = read_program(&program)?;
            let report = run_inverse(&ip, &read_values(&y)?, &read_theta(&theta)?)?;
            emit(output.as_deref(), &pretty(&report.to_json()))
        }
        Command::Solve {
            program,
            y,
            opts,
            output,
        } => cmd_solve(&read_program(&program)?, &y, &opts, output.as_deref()),
        Command::Pipeline {
            graph,
            y,
            opts,
            out,
            no_reduce,
            no_totalize,
            dump_annotations,
        } => cmd_pipeline(&graph, &y, &opts, &out, no_reduce, no_totalize, dump_annotations),
        Command::Bench {
            suite,
            seed,
            out,
            count,
            samples,
            restarts,
            max_evals,
        } => {
            let solve = SolveConfig {
                restarts,
                max_evals,
                seed,
                ..SolveConfig::default()
            };
            cmd_bench(suite, seed, &out, count, samples, solve)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
