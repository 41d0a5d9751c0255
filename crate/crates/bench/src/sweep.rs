//! Regularization sweeps: recovery quality and sparsity across λ and
//! penalty families on shared data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asyflexa::engine::run_async;
use asyflexa::io::fmt_float;
use asyflexa::kernels::nmse;
use asyflexa::model::{CompositeProblem, RegFamily};

use crate::plan::{ExperimentPlan, InstanceSpec};
use crate::sidecar::write_sidecar;

/// Percentage of entries above the sparsity threshold 1e-6·‖x‖_∞. Exact
/// zeros only arise through thresholding; the tolerance absorbs drift from
/// concurrent updates.
pub fn nnz_percent(x: &[f64]) -> f64 {
    let hi = x.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if hi == 0.0 {
        return 0.0;
    }
    let t = 1e-6 * hi;
    100.0 * x.iter().filter(|v| v.abs() > t).count() as f64 / x.len() as f64
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub realization: u32,
    pub family: RegFamily,
    /// Multiplier applied to the family's own generator-chosen λ.
    pub scale: f64,
    pub lambda: f64,
    pub nmse: f64,
    pub nnz_pct: f64,
}

/// Solves the same planted-sparsity data under every (family, λ-scale) pair.
/// λ grids are relative: each family's generator λ rule sets the unit, so
/// penalties with very different origin slopes stay comparable.
pub fn run_lambda_sweep(
    plan: &ExperimentPlan,
    scales: &[f64],
    families: &[RegFamily],
) -> Result<(Vec<SweepRow>, PathBuf)> {
    plan.validate()?;
    let (m, n, nnz_percent_true, theta) = match plan.instance {
        InstanceSpec::Nonconvex { m, n, nnz_percent, theta, .. } => (m, n, nnz_percent, theta),
        _ => bail!("lambda sweeps run on the planted-sparsity generator"),
    };
    if scales.is_empty() || families.is_empty() {
        bail!("empty lambda or family grid");
    }
    fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating {}", plan.out_dir.display()))?;
    let threads = plan.threads[0];

    let mut rows = Vec::new();
    for r in 0..plan.realizations {
        let seed = plan.realization_seed(r);
        for &family in families {
            // same seed => identical (A, b, planted x) for every family
            let spec = InstanceSpec::Nonconvex {
                m,
                n,
                nnz_percent: nnz_percent_true,
                family,
                theta,
            };
            let inst = spec.realize(seed)?;
            let xbar = match inst.xbar {
                Some(ref v) => v.clone(),
                None => bail!("sweep instance carries no planted vector"),
            };
            let base_lambda = inst.problem.reg.lambda();
            for &scale in scales {
                let reg = inst.problem.reg.with_lambda(scale * base_lambda);
                let problem = CompositeProblem::new(inst.problem.loss.clone(), reg);
                let cfg = plan.solver_config(plan.rules[0], threads, seed);
                let out = run_async(&problem, &cfg)?;
                rows.push(SweepRow {
                    realization: r,
                    family,
                    scale,
                    lambda: scale * base_lambda,
                    nmse: nmse(&out.x, &xbar),
                    nnz_pct: nnz_percent(&out.x),
                });
            }
        }
    }

    let csv = plan.out_dir.join("lambda_sweep.csv");
    {
        let file = File::create(&csv)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "realization,family,scale,lambda,nmse,nnz_pct")?;
        for row in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                row.realization,
                row.family.name(),
                fmt_float(row.scale),
                fmt_float(row.lambda),
                fmt_float(row.nmse),
                fmt_float(row.nnz_pct)
            )?;
        }
        w.flush()?;
    }

    let mut meta = plan.echo();
    meta.push(("lambda_grid".into(), "scale x per-family generator lambda".into()));
    meta.push(("nnz_threshold".into(), "1e-6 x max abs entry".into()));
    meta.push(("solver_threads".into(), threads.to_string()));
    write_sidecar(&csv, &meta)?;
    Ok((rows, csv))
}
