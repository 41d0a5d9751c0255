//! What to run: instance recipe, solver variants, realization protocol.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asyflexa::engine::{Order, SolverConfig, StepSchedule, TauPolicy, Termination, UpdateRule};
use asyflexa::generators::{
    gen_gondzio, gen_liu_wright, gen_nesterov, gen_nonconvex_sparse, GeneratedInstance,
};
use asyflexa::io::read_instance;
use asyflexa::model::RegFamily;

/// Recipe for one problem instance; `seed` varies per realization except for
/// pre-generated files, which are fixed data.
#[derive(Clone, Debug)]
pub enum InstanceSpec {
    LiuWright { m: usize, n: usize, s: usize, sigma: f64 },
    Nesterov { m: usize, n: usize, nnz_percent: f64 },
    Gondzio { m: usize, n: usize, cond: f64, nnz_percent: f64 },
    Nonconvex { m: usize, n: usize, nnz_percent: f64, family: RegFamily, theta: f64 },
    File { path: PathBuf },
}

impl InstanceSpec {
    pub fn realize(&self, seed: u64) -> Result<GeneratedInstance<f64>> {
        let inst = match *self {
            InstanceSpec::LiuWright { m, n, s, sigma } => gen_liu_wright(m, n, s, sigma, seed),
            InstanceSpec::Nesterov { m, n, nnz_percent } => gen_nesterov(m, n, nnz_percent, seed),
            InstanceSpec::Gondzio { m, n, cond, nnz_percent } => {
                gen_gondzio(m, n, cond, nnz_percent, seed)
            }
            InstanceSpec::Nonconvex { m, n, nnz_percent, family, theta } => {
                gen_nonconvex_sparse(m, n, nnz_percent, seed, family, theta)
            }
            InstanceSpec::File { ref path } => {
                return read_instance(path)
                    .with_context(|| format!("loading instance {}", path.display()));
            }
        };
        inst.map_err(Into::into)
    }

    pub fn describe(&self) -> String {
        match *self {
            InstanceSpec::LiuWright { m, n, s, sigma } => {
                format!("liu-wright m={m} n={n} s={s} sigma={sigma}")
            }
            InstanceSpec::Nesterov { m, n, nnz_percent } => {
                format!("nesterov m={m} n={n} nnz_percent={nnz_percent}")
            }
            InstanceSpec::Gondzio { m, n, cond, nnz_percent } => {
                format!("gondzio m={m} n={n} cond={cond} nnz_percent={nnz_percent}")
            }
            InstanceSpec::Nonconvex { m, n, nnz_percent, family, theta } => {
                format!(
                    "nonconvex m={m} n={n} nnz_percent={nnz_percent} family={} theta={theta}",
                    family.name()
                )
            }
            InstanceSpec::File { ref path } => format!("file {}", path.display()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub instance: InstanceSpec,
    pub rules: Vec<UpdateRule>,
    /// Worker counts, strictly ascending. Speedup additionally requires the
    /// first entry to be 1 (its baseline).
    pub threads: Vec<usize>,
    pub realizations: u32,
    pub rel_err_target: Option<f64>,
    pub merit_target: Option<f64>,
    pub time_budget_s: Option<f64>,
    pub max_iter: Option<u64>,
    pub schedule: StepSchedule<f64>,
    pub tau: TauPolicy<f64>,
    pub order: Order,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentPlan {
    pub fn new(instance: InstanceSpec, out_dir: PathBuf) -> Self {
        let d = SolverConfig::<f64>::default();
        ExperimentPlan {
            instance,
            rules: vec![UpdateRule::AsyFlexa],
            threads: vec![1],
            realizations: 5,
            rel_err_target: None,
            merit_target: None,
            time_budget_s: None,
            max_iter: None,
            schedule: d.schedule,
            tau: d.tau,
            order: d.order,
            seed: 1,
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            bail!("realizations must be at least 1");
        }
        if self.rules.is_empty() {
            bail!("no update rules selected");
        }
        if self.threads.is_empty() {
            bail!("no thread counts selected");
        }
        if !self.threads.windows(2).all(|w| w[0] < w[1]) {
            bail!("thread counts must be strictly ascending: {:?}", self.threads);
        }
        Ok(())
    }

    /// Seed for realization r; drives both the generator and the solver.
    pub fn realization_seed(&self, r: u32) -> u64 {
        self.seed.wrapping_add(r as u64)
    }

    pub fn solver_config(&self, rule: UpdateRule, threads: usize, seed: u64) -> SolverConfig<f64> {
        SolverConfig {
            rule,
            threads,
            schedule: self.schedule,
            tau: self.tau,
            order: self.order,
            seed,
            term: Termination {
                rel_err: self.rel_err_target,
                merit: self.merit_target,
                max_iter: self.max_iter,
                time_budget_s: self.time_budget_s,
            },
            ..SolverConfig::default()
        }
    }

    /// Key-value echo for the sidecar.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut kv = Vec::new();
        let mut push = |k: &str, v: String| kv.push((k.to_string(), v));
        push("instance", self.instance.describe());
        push(
            "rules",
            self.rules.iter().map(|r| r.name()).collect::<Vec<_>>().join(","),
        );
        let mut t = String::new();
        for (i, c) in self.threads.iter().enumerate() {
            if i > 0 {
                t.push(',');
            }
            let _ = write!(t, "{c}");
        }
        push("threads", t);
        push("realizations", self.realizations.to_string());
        push("seed", self.seed.to_string());
        push("schedule", self.schedule.describe());
        push(
            "tau",
            match self.tau {
                TauPolicy::Fixed { tau } => format!("fixed({tau})"),
                TauPolicy::Adaptive(_) => "adaptive".to_string(),
            },
        );
        push("order", self.order.name().to_string());
        if let Some(v) = self.rel_err_target {
            push("rel_err_target", format!("{v}"));
        }
        if let Some(v) = self.merit_target {
            push("merit_target", format!("{v}"));
        }
        if let Some(v) = self.time_budget_s {
            push("time_budget_s", format!("{v}"));
        }
        if let Some(v) = self.max_iter {
            push("max_iter", format!("{v}"));
        }
        kv
    }
}
