//! Time-to-target scaling over worker counts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asyflexa::engine::run_async;
use asyflexa::io::fmt_float;

use crate::cpu::process_cpu_s;
use crate::fstar::ensure_fstar;
use crate::plan::ExperimentPlan;
use crate::sidecar::write_sidecar;
use crate::median;

#[derive(Clone, Debug)]
pub struct SpeedupRow {
    pub threads: usize,
    /// Median wall seconds to the relative-error target; None when any
    /// realization missed it (flagged, never extrapolated).
    pub median_time_s: Option<f64>,
    pub median_cpu_s: Option<f64>,
    pub speedup: Option<f64>,
    pub flag: &'static str,
}

#[derive(Debug)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
    /// False when the single-worker baseline itself missed the target.
    pub valid: bool,
    pub csv: PathBuf,
}

pub fn run_speedup(plan: &ExperimentPlan) -> Result<SpeedupReport> {
    plan.validate()?;
    if plan.threads.first() != Some(&1) {
        bail!("speedup needs the single-worker baseline first in the thread list");
    }
    if plan.rules.len() != 1 {
        bail!("speedup compares worker counts under one rule; got {}", plan.rules.len());
    }
    let target = match plan.rel_err_target {
        Some(t) => t,
        None => bail!("speedup needs a relative-error target"),
    };
    let rule = plan.rules[0];
    fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating {}", plan.out_dir.display()))?;

    let mut fstar_how = "certificate";
    let mut rows: Vec<SpeedupRow> = Vec::new();
    for &threads in &plan.threads {
        let mut wall: Vec<f64> = Vec::new();
        let mut cpu: Vec<f64> = Vec::new();
        let mut missed = false;
        for r in 0..plan.realizations {
            let seed = plan.realization_seed(r);
            let inst = plan.instance.realize(seed)?;
            let (problem, how) = ensure_fstar(inst.problem)?;
            fstar_how = how;
            let cfg = plan.solver_config(rule, threads, seed);
            let cpu0 = process_cpu_s();
            let out = run_async(&problem, &cfg)?;
            let cpu1 = process_cpu_s();
            let hit = out
                .trace
                .rows
                .iter()
                .find(|row| row.rel_err.is_some_and(|e| e <= target));
            match hit {
                Some(row) => {
                    wall.push(row.time_s);
                    cpu.push(cpu1 - cpu0);
                }
                None => missed = true,
            }
        }
        if missed {
            rows.push(SpeedupRow {
                threads,
                median_time_s: None,
                median_cpu_s: None,
                speedup: None,
                flag: "unreached",
            });
        } else {
            rows.push(SpeedupRow {
                threads,
                median_time_s: Some(median(&wall)),
                median_cpu_s: Some(median(&cpu)),
                speedup: None,
                flag: "",
            });
        }
    }

    let t1 = rows[0].median_time_s;
    let valid = t1.is_some();
    for row in rows.iter_mut() {
        if row.threads == 1 {
            // the baseline against itself, by definition
            row.speedup = valid.then_some(1.0);
            continue;
        }
        row.speedup = match (t1, row.median_time_s) {
            (Some(t1), Some(tc)) if tc > 0.0 => Some(t1 / tc),
            _ => None,
        };
        if let Some(s) = row.speedup {
            if s > row.threads as f64 * 1.1 {
                row.flag = "clock-suspect";
            }
        }
    }

    let csv = plan.out_dir.join("speedup.csv");
    {
        let file = File::create(&csv)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "threads,median_time_s,median_cpu_s,speedup,flag")?;
        for r in &rows {
            let cell = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                r.threads,
                cell(r.median_time_s),
                cell(r.median_cpu_s),
                cell(r.speedup),
                r.flag
            )?;
        }
        w.flush()?;
    }

    let mut meta = plan.echo();
    meta.push(("aggregation".into(), "median over realizations".into()));
    meta.push(("clock".into(), "wall time primary; process cpu time via getrusage".into()));
    meta.push(("fstar_source".into(), fstar_how.into()));
    meta.push(("valid".into(), valid.to_string()));
    write_sidecar(&csv, &meta)?;

    Ok(SpeedupReport { rows, valid, csv })
}
