//! Error-vs-wall-time curves, aligned across realizations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use asyflexa::engine::{run_async, Trace};
use asyflexa::io::{fmt_float, write_trace_csv};

use crate::fstar::ensure_fstar;
use crate::plan::ExperimentPlan;
use crate::sidecar::write_sidecar;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Metric {
    RelErr,
    Merit,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::RelErr => "rel_err",
            Metric::Merit => "merit",
        }
    }

    fn of(self, row: &asyflexa::engine::TraceRow<f64>) -> f64 {
        match self {
            Metric::RelErr => row.rel_err.unwrap_or(f64::NAN),
            Metric::Merit => row.merit,
        }
    }
}

pub struct CurveOutput {
    pub rule: String,
    pub threads: usize,
    pub raw_files: Vec<PathBuf>,
    pub mean_file: PathBuf,
    /// Per realization: wall seconds to reach the metric target, when reached.
    pub time_to_target: Vec<Option<f64>>,
}

/// Step-function value of a curve at each grid time: the last sample taken
/// at or before that instant (curves start at t = 0, so always defined).
fn resample(points: &[(f64, f64)], grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    let mut current = points[0].1;
    for &t in grid {
        while j < points.len() && points[j].0 <= t {
            current = points[j].1;
            j += 1;
        }
        out.push(current);
    }
    out
}

fn target_for(metric: Metric, plan: &ExperimentPlan) -> Option<f64> {
    match metric {
        Metric::RelErr => plan.rel_err_target,
        Metric::Merit => plan.merit_target,
    }
}

pub fn run_error_curve(plan: &ExperimentPlan, metric: Metric) -> Result<Vec<CurveOutput>> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating {}", plan.out_dir.display()))?;

    let need_fstar = metric == Metric::RelErr || plan.rel_err_target.is_some();
    let target = target_for(metric, plan);
    let mut fstar_how = "unused";
    let mut outputs = Vec::new();

    for &rule in &plan.rules {
        for &threads in &plan.threads {
            let mut traces: Vec<Trace<f64>> = Vec::new();
            let mut raw_files = Vec::new();
            for r in 0..plan.realizations {
                let seed = plan.realization_seed(r);
                let inst = plan.instance.realize(seed)?;
                let problem = if need_fstar {
                    let (p, how) = ensure_fstar(inst.problem)?;
                    fstar_how = how;
                    p
                } else {
                    inst.problem
                };
                let cfg = plan.solver_config(rule, threads, seed);
                let out = run_async(&problem, &cfg)?;

                let path = plan
                    .out_dir
                    .join(format!("curve_{}_c{}_r{}.csv", rule.name(), threads, r));
                let file = File::create(&path)?;
                let mut w = BufWriter::new(file);
                write_trace_csv(&mut w, &out.trace)?;
                w.flush()?;
                raw_files.push(path);
                traces.push(out.trace);
            }

            let curves: Vec<Vec<(f64, f64)>> = traces
                .iter()
                .map(|t| t.rows.iter().map(|row| (row.time_s, metric.of(row))).collect())
                .collect();
            if curves.iter().any(|c| c.is_empty()) {
                bail!("a run produced no trace rows");
            }

            let mut grid: Vec<f64> = curves.iter().flatten().map(|p| p.0).collect();
            grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            grid.dedup();

            let sampled: Vec<Vec<f64>> = curves.iter().map(|c| resample(c, &grid)).collect();
            let mean_file = plan
                .out_dir
                .join(format!("curve_{}_c{}_mean.csv", rule.name(), threads));
            {
                let file = File::create(&mean_file)?;
                let mut w = BufWriter::new(file);
                writeln!(w, "time_s,mean,min,max")?;
                for (gi, &t) in grid.iter().enumerate() {
                    let vals = sampled.iter().map(|s| s[gi]);
                    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
                    for v in vals {
                        lo = lo.min(v);
                        hi = hi.max(v);
                        sum += v;
                    }
                    let mean = sum / sampled.len() as f64;
                    writeln!(
                        w,
                        "{},{},{},{}",
                        fmt_float(t),
                        fmt_float(mean),
                        fmt_float(lo),
                        fmt_float(hi)
                    )?;
                }
                w.flush()?;
            }

            let time_to_target: Vec<Option<f64>> = curves
                .iter()
                .map(|c| {
                    target.and_then(|tv| c.iter().find(|(_, v)| *v <= tv).map(|(t, _)| *t))
                })
                .collect();

            outputs.push(CurveOutput {
                rule: rule.name().to_string(),
                threads,
                raw_files,
                mean_file,
                time_to_target,
            });
        }
    }

    // reached-the-threshold summary across every (rule, threads, realization)
    let summary = plan.out_dir.join("error_curve_targets.csv");
    {
        let file = File::create(&summary)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "rule,threads,realization,time_to_target_s,flag")?;
        for o in &outputs {
            for (r, t) in o.time_to_target.iter().enumerate() {
                match t {
                    Some(t) => {
                        writeln!(w, "{},{},{},{},reached", o.rule, o.threads, r, fmt_float(*t))?
                    }
                    None => writeln!(w, "{},{},{},,unreached", o.rule, o.threads, r)?,
                }
            }
        }
        w.flush()?;
    }

    let mut meta = plan.echo();
    meta.push(("metric".into(), metric.name().into()));
    meta.push(("alignment".into(), "last-value interpolation onto the union time grid".into()));
    meta.push(("averaging".into(), "pointwise mean over realizations".into()));
    meta.push(("fstar_source".into(), fstar_how.into()));
    meta.push((
        "determinism".into(),
        "single-thread runs are deterministic except the wall-clock time_s column".into(),
    ));
    write_sidecar(&summary, &meta)?;
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::InstanceSpec;

    fn tmp_dir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("asyflexa-curves-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn resampling_is_last_value_and_total() {
        let pts = vec![(0.0, 4.0), (1.0, 2.0), (3.0, 1.0)];
        let grid = vec![0.0, 0.5, 1.0, 2.0, 3.0, 9.0];
        assert_eq!(resample(&pts, &grid), vec![4.0, 4.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn single_thread_curve_is_monotone_and_mean_is_bracketed() {
        let dir = tmp_dir("mono");
        let mut plan = ExperimentPlan::new(
            InstanceSpec::LiuWright { m: 30, n: 45, s: 4, sigma: 0.01 },
            dir.clone(),
        );
        plan.realizations = 3;
        plan.rel_err_target = Some(1e-6);
        plan.max_iter = Some(400 * 45);
        let out = run_error_curve(&plan, Metric::RelErr).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].raw_files.len(), 3);
        assert!(out[0].time_to_target.iter().all(|t| t.is_some()));

        // fixed step, one worker: descent per committed update, so the
        // aligned curve must not increase
        let text = std::fs::read_to_string(&out[0].mean_file).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert!(rows.len() >= 3);
        for w in rows.windows(2) {
            assert!(w[1][1] <= w[0][1] + 1e-12, "mean went up: {:?} -> {:?}", w[0], w[1]);
        }
        for row in &rows {
            assert!(row[2] <= row[1] + 1e-15 && row[1] <= row[3] + 1e-15);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn one_realization_mean_equals_the_raw_curve() {
        let dir = tmp_dir("single");
        let mut plan = ExperimentPlan::new(
            InstanceSpec::LiuWright { m: 20, n: 30, s: 3, sigma: 0.01 },
            dir.clone(),
        );
        plan.realizations = 1;
        plan.max_iter = Some(40 * 30);
        let out = run_error_curve(&plan, Metric::Merit).unwrap();
        let mean = std::fs::read_to_string(&out[0].mean_file).unwrap();
        for line in mean.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[1], f[2]);
            assert_eq!(f[1], f[3]);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
