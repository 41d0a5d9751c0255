use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use asyflexa::engine::{run_async, Order, SolverConfig, StepSchedule, TauPolicy, UpdateRule};
use asyflexa::io::{fmt_float, parse_solver_config, read_instance, write_instance, write_trace_csv};
use asyflexa::model::RegFamily;
use asyflexa_bench::bound::{parse_constants, write_bound_table};
use asyflexa_bench::{
    run_error_curve, run_kepsilon, run_lambda_sweep, run_speedup, ExperimentPlan, InstanceSpec,
    Metric,
};

#[derive(Parser)]
#[command(name = "asyflexa", about = "Asynchronous block solver toolkit", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic problem instance to a file.
    Generate(GenerateArgs),
    /// Solve one instance and dump the trace.
    Solve(SolveArgs),
    /// Evaluate stepsize and iteration-complexity bounds over grids.
    Bound(BoundArgs),
    /// Multi-realization experiment drivers.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Args)]
struct InstanceArgs {
    /// liu-wright | nesterov | gondzio | nonconvex (alternative: --instance)
    #[arg(long)]
    family: Option<String>,
    /// Pre-generated instance file; fixes the data across realizations.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 400)]
    m: usize,
    #[arg(long, default_value_t = 800)]
    n: usize,
    /// Planted support size (liu-wright).
    #[arg(long, default_value_t = 20)]
    s: usize,
    /// Noise level (liu-wright).
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Planted nonzero percentage (nesterov, gondzio, nonconvex).
    #[arg(long, default_value_t = 5.0)]
    nnz_percent: f64,
    /// Gram condition target (gondzio).
    #[arg(long, default_value_t = 1e4)]
    cond: f64,
    /// Penalty sharpness (nonconvex).
    #[arg(long, default_value_t = 20.0)]
    theta: f64,
    /// Penalty family for the nonconvex generator: l1 | exp | log.
    #[arg(long, default_value = "log")]
    reg: String,
}

impl InstanceArgs {
    fn to_spec(&self) -> Result<InstanceSpec> {
        if let Some(path) = &self.instance {
            if self.family.is_some() {
                bail!("--family and --instance are mutually exclusive");
            }
            return Ok(InstanceSpec::File { path: path.clone() });
        }
        let family = self.family.as_deref().unwrap_or("liu-wright");
        Ok(match family {
            "liu-wright" => InstanceSpec::LiuWright {
                m: self.m,
                n: self.n,
                s: self.s,
                sigma: self.sigma,
            },
            "nesterov" => InstanceSpec::Nesterov {
                m: self.m,
                n: self.n,
                nnz_percent: self.nnz_percent,
            },
            "gondzio" => InstanceSpec::Gondzio {
                m: self.m,
                n: self.n,
                cond: self.cond,
                nnz_percent: self.nnz_percent,
            },
            "nonconvex" => InstanceSpec::Nonconvex {
                m: self.m,
                n: self.n,
                nnz_percent: self.nnz_percent,
                family: RegFamily::parse(&self.reg)?,
                theta: self.theta,
            },
            other => bail!("unknown family `{other}`"),
        })
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Solver config file (key = value); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file's worker count.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace CSV destination.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Solution vector destination (one value per line).
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    /// Key-value constants file (rho optional, defaults to 2).
    #[arg(long)]
    constants: PathBuf,
    #[arg(long, default_value = "0,1,2,4,8", value_parser = parse_u64_list)]
    deltas: std::vec::Vec<u64>,
    #[arg(long, default_value = "1e-1,1e-2,1e-3", value_parser = parse_f64_list)]
    epsilons: std::vec::Vec<f64>,
    /// K bounds are evaluated at this fraction of each delta's gamma_max.
    #[arg(long, default_value_t = 0.9)]
    gamma_frac: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value = "asyflexa", value_parser = parse_rule_list)]
    rules: std::vec::Vec<UpdateRule>,
    #[arg(long, default_value = "1", value_parser = parse_usize_list)]
    threads: std::vec::Vec<usize>,
    #[arg(long, default_value_t = 5)]
    realizations: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    rel_err: Option<f64>,
    #[arg(long)]
    merit: Option<f64>,
    #[arg(long)]
    max_iter: Option<u64>,
    #[arg(long)]
    time_budget_s: Option<f64>,
    /// Fixed stepsize (exclusive with the diminishing trio).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    floor: Option<f64>,
    /// Fixed proximal weight; omitted means the adaptive heuristic.
    #[arg(long)]
    tau: Option<f64>,
    /// cyclic | random
    #[arg(long, default_value = "random")]
    order: String,
    #[arg(long)]
    out_dir: PathBuf,
}

impl PlanArgs {
    fn to_plan(&self) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::new(self.instance.to_spec()?, self.out_dir.clone());
        plan.rules = self.rules.clone();
        plan.threads = self.threads.clone();
        plan.realizations = self.realizations;
        plan.seed = self.seed;
        plan.rel_err_target = self.rel_err;
        plan.merit_target = self.merit;
        plan.max_iter = self.max_iter;
        plan.time_budget_s = self.time_budget_s;
        plan.order = Order::parse(&self.order)?;
        if let Some(tau) = self.tau {
            plan.tau = TauPolicy::Fixed { tau };
        }
        let diminishing = self.gamma0.is_some() || self.mu.is_some() || self.floor.is_some();
        match (self.gamma, diminishing) {
            (Some(_), true) => bail!("--gamma conflicts with --gamma0/--mu/--floor"),
            (Some(g), false) => plan.schedule = StepSchedule::Fixed { gamma: g },
            (None, true) => {
                plan.schedule = StepSchedule::Diminishing {
                    gamma0: self.gamma0.unwrap_or(1.0),
                    mu: self.mu.ok_or_else(|| anyhow::anyhow!("diminishing needs --mu"))?,
                    floor: self.floor.unwrap_or(0.0),
                }
            }
            (None, false) => {}
        }
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Relative-error (or merit) versus wall time, averaged over realizations.
    ErrorCurve {
        #[command(flatten)]
        plan: PlanArgs,
        /// rel-err | merit
        #[arg(long, default_value = "rel-err")]
        metric: String,
    },
    /// Median time-to-target over worker counts.
    Speedup {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Recovery error and sparsity across penalty families and lambda scales.
    LambdaSweep {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value = "0.02,0.05,0.1,0.2,0.5,1,2,5,10,20", value_parser = parse_f64_list)]
        scales: std::vec::Vec<f64>,
        #[arg(long, default_value = "l1,log,exp", value_parser = parse_family_list)]
        families: std::vec::Vec<RegFamily>,
    },
    /// First-passage iterations for the squared stationarity measure.
    Kepsilon {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, default_value = "1e-1,1e-2,1e-3", value_parser = parse_f64_list)]
        epsilons: std::vec::Vec<f64>,
        /// Update budget in sweeps (multiples of n).
        #[arg(long, default_value_t = 200)]
        budget_sweeps: u64,
    },
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<u64>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

fn parse_rule_list(s: &str) -> Result<Vec<UpdateRule>, String> {
    s.split(',')
        .map(|v| UpdateRule::parse(v.trim()).map_err(|e| e.to_string()))
        .collect()
}

fn parse_family_list(s: &str) -> Result<Vec<RegFamily>, String> {
    s.split(',')
        .map(|v| RegFamily::parse(v.trim()).map_err(|e| e.to_string()))
        .collect()
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Generate(a) => generate(a),
        Cmd::Solve(a) => solve(a),
        Cmd::Bound(a) => bound(a),
        Cmd::Bench(b) => bench(b),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = a.instance.to_spec()?;
    if matches!(spec, InstanceSpec::File { .. }) {
        bail!("generate writes new instances; --instance makes no sense here");
    }
    let inst = spec.realize(a.seed)?;
    write_instance(&a.out, &inst)?;
    println!(
        "wrote {} ({} x {}, family {})",
        a.out.display(),
        inst.problem.loss.m(),
        inst.problem.n(),
        inst.problem.reg.family().name()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let inst = read_instance::<f64>(&a.instance)
        .with_context(|| format!("loading {}", a.instance.display()))?;
    let mut cfg: SolverConfig<f64> = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse_solver_config(&text)?
        }
        None => SolverConfig::default(),
    };
    if let Some(t) = a.threads {
        cfg.threads = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let out = run_async(&inst.problem, &cfg)?;

    if let Some(path) = &a.trace {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        write_trace_csv(&mut w, &out.trace)?;
        w.flush()?;
    }
    if let Some(path) = &a.solution {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        for v in &out.x {
            writeln!(w, "{}", fmt_float(*v))?;
        }
        w.flush()?;
    }
    let last = out.trace.rows.last().expect("trace always has rows");
    println!(
        "reason={} k={} objective={} merit={} time_s={}",
        out.trace.reason.name(),
        out.trace.k_final,
        fmt_float(last.objective),
        fmt_float(last.merit),
        fmt_float(last.time_s)
    );
    Ok(())
}

fn bound(a: BoundArgs) -> Result<()> {
    let text = fs::read_to_string(&a.constants)
        .with_context(|| format!("reading {}", a.constants.display()))?;
    let c = parse_constants(&text)?;
    let rows = write_bound_table(&c, &a.deltas, &a.epsilons, a.gamma_frac, &a.out)?;
    println!("wrote {} ({rows} rows)", a.out.display());
    Ok(())
}

fn bench(b: BenchCmd) -> Result<()> {
    match b {
        BenchCmd::ErrorCurve { plan, metric } => {
            let metric = match metric.as_str() {
                "rel-err" => Metric::RelErr,
                "merit" => Metric::Merit,
                other => bail!("unknown metric `{other}`"),
            };
            let plan = plan.to_plan()?;
            let outs = run_error_curve(&plan, metric)?;
            for o in &outs {
                println!(
                    "{} c={}: {} realizations, mean curve {}",
                    o.rule,
                    o.threads,
                    o.raw_files.len(),
                    o.mean_file.display()
                );
            }
        }
        BenchCmd::Speedup { plan } => {
            let plan = plan.to_plan()?;
            let report = run_speedup(&plan)?;
            for r in &report.rows {
                let s = r.speedup.map(fmt_float).unwrap_or_else(|| "-".into());
                println!("c={} speedup={s} {}", r.threads, r.flag);
            }
            println!("wrote {} (valid={})", report.csv.display(), report.valid);
        }
        BenchCmd::LambdaSweep { plan, scales, families } => {
            let plan = plan.to_plan()?;
            let (rows, csv) = run_lambda_sweep(&plan, &scales, &families)?;
            println!("wrote {} ({} rows)", csv.display(), rows.len());
        }
        BenchCmd::Kepsilon { plan, epsilons, budget_sweeps } => {
            // passage counts are only comparable under a constant stepsize,
            // so the plan's --gamma is mandatory here
            let gamma = plan.gamma.context("kepsilon needs a fixed --gamma")?;
            let plan = plan.to_plan()?;
            let n = match plan.instance.realize(plan.seed) {
                Ok(inst) => inst.problem.n() as u64,
                Err(e) => return Err(e),
            };
            let (rows, csv) = run_kepsilon(&plan, gamma, &epsilons, budget_sweeps * n)?;
            for r in &rows {
                match r.k {
                    Some(k) => println!("eps={} K={k}", fmt_float(r.epsilon)),
                    None => println!("eps={} budget-exhausted", fmt_float(r.epsilon)),
                }
            }
            println!("wrote {}", csv.display());
        }
    }
    Ok(())
}
