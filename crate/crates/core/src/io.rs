//! On-disk formats.
//!
//! Instance files carry a plain `key = value` text header terminated by an
//! `end-header` line, then the payload: the design matrix either as dense
//! binary (little-endian f64, row-major) or as a Matrix Market coordinate
//! block, then b, then the optional planted/optimal vectors, both binary.
//! Everything numeric is stored as f64 regardless of the in-memory scalar.
//!
//! Solver config files are `key = value` with `#` comments. Unknown keys are
//! hard errors: a typo must never silently fall back to a default.
//!
//! Traces go out as CSV with the fixed header
//! `time_s,k,objective,rel_err,merit,max_delay,gamma,tau`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use crate::engine::{
    CheckMode, Order, SolverConfig, StepSchedule, TauHeuristic, TauPolicy, Trace, UpdateRule,
};
use crate::generators::GeneratedInstance;
use crate::matrix::DesignMatrix;
use crate::model::{CompositeProblem, LossScale, QuadraticLoss, RegFamily, Regularizer};
use crate::scalar::Scalar;
use crate::{Error, Result};

const FORMAT_MARKER: &str = "asyflexa-instance-1";

/// Shortest round-trip text for a float: plain decimal in a readable range,
/// exponent notation outside it. Both forms parse back to the same bits.
pub fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-4 && v.abs() < 1e7 {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_f64s<W: Write>(w: &mut W, vals: impl Iterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read, S: Scalar>(r: &mut R, count: usize) -> Result<Vec<S>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| S::c(f64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut buf = Vec::new();
    let n = r.read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Err(Error::Format("unexpected end of file".into()));
    }
    String::from_utf8(buf)
        .map(|s| s.trim_end().to_string())
        .map_err(|_| Error::Format("header is not valid text".into()))
}

pub fn write_instance<S: Scalar>(path: &Path, inst: &GeneratedInstance<S>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_instance_to(&mut w, inst)?;
    w.flush()?;
    Ok(())
}

pub fn write_instance_to<S: Scalar, W: Write>(
    w: &mut W,
    inst: &GeneratedInstance<S>,
) -> Result<()> {
    let loss = &inst.problem.loss;
    let reg = &inst.problem.reg;
    let a = loss.design();
    let (m, n) = (a.rows(), a.cols());
    let f = |v: S| fmt_float(v.to_f64().unwrap());

    writeln!(w, "format = {FORMAT_MARKER}")?;
    writeln!(w, "m = {m}")?;
    writeln!(w, "n = {n}")?;
    writeln!(w, "storage = {}", if a.is_dense() { "dense" } else { "coordinate" })?;
    writeln!(w, "scale = {}", loss.scale().name())?;
    writeln!(w, "family = {}", reg.family().name())?;
    writeln!(w, "lambda = {}", f(reg.lambda()))?;
    if let Some(t) = reg.theta() {
        writeln!(w, "theta = {}", f(t))?;
    }
    if let Some(fs) = inst.problem.fstar {
        writeln!(w, "fstar = {}", f(fs))?;
    }
    writeln!(w, "xbar = {}", u8::from(inst.xbar.is_some()))?;
    writeln!(w, "xstar = {}", u8::from(inst.xstar.is_some()))?;
    for (k, v) in &inst.meta {
        writeln!(w, "meta.{k} = {v}")?;
    }
    writeln!(w, "end-header")?;

    match a {
        DesignMatrix::Dense { .. } => {
            // row-major on disk
            for i in 0..m {
                write_f64s(w, (0..n).map(|j| a.entry(i, j).to_f64().unwrap()))?;
            }
        }
        DesignMatrix::Csc { col_ptr, row_idx, vals, .. } => {
            let nnz = vals.len();
            writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
            writeln!(w, "{m} {n} {nnz}")?;
            for j in 0..n {
                for t in col_ptr[j]..col_ptr[j + 1] {
                    writeln!(
                        w,
                        "{} {} {}",
                        row_idx[t] + 1,
                        j + 1,
                        fmt_float(vals[t].to_f64().unwrap())
                    )?;
                }
            }
        }
    }
    write_f64s(w, loss.rhs().iter().map(|v| v.to_f64().unwrap()))?;
    if let Some(xb) = &inst.xbar {
        write_f64s(w, xb.iter().map(|v| v.to_f64().unwrap()))?;
    }
    if let Some(xs) = &inst.xstar {
        write_f64s(w, xs.iter().map(|v| v.to_f64().unwrap()))?;
    }
    Ok(())
}

pub fn read_instance<S: Scalar>(path: &Path) -> Result<GeneratedInstance<S>> {
    read_instance_from(&mut BufReader::new(File::open(path)?))
}

pub fn read_instance_from<S: Scalar, R: BufRead>(r: &mut R) -> Result<GeneratedInstance<S>> {
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    loop {
        let line = read_line(r)?;
        if line == "end-header" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header line {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if let Some(mk) = k.strip_prefix("meta.") {
            meta.insert(mk.to_string(), v.to_string());
        } else if header.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Format(format!("duplicate header key {k:?}")));
        }
    }

    fn take(h: &mut BTreeMap<String, String>, k: &str) -> Result<String> {
        h.remove(k)
            .ok_or_else(|| Error::Format(format!("missing header key {k:?}")))
    }
    if take(&mut header, "format")? != FORMAT_MARKER {
        return Err(Error::Format("not an instance file (bad format marker)".into()));
    }
    let parse_usize = |k: &str, v: String| {
        v.parse::<usize>()
            .map_err(|_| Error::Format(format!("key {k:?}: bad integer {v:?}")))
    };
    let parse_f64 = |k: &str, v: String| {
        v.parse::<f64>()
            .map_err(|_| Error::Format(format!("key {k:?}: bad float {v:?}")))
    };
    let m = parse_usize("m", take(&mut header, "m")?)?;
    let n = parse_usize("n", take(&mut header, "n")?)?;
    let storage = take(&mut header, "storage")?;
    let scale = LossScale::parse(&take(&mut header, "scale")?)?;
    let family = RegFamily::parse(&take(&mut header, "family")?)?;
    let lambda = parse_f64("lambda", take(&mut header, "lambda")?)?;
    let theta = header
        .remove("theta")
        .map(|v| parse_f64("theta", v))
        .transpose()?;
    let fstar = header
        .remove("fstar")
        .map(|v| parse_f64("fstar", v))
        .transpose()?;
    let has_xbar = take(&mut header, "xbar")? == "1";
    let has_xstar = take(&mut header, "xstar")? == "1";
    if let Some(k) = header.keys().next() {
        return Err(Error::Format(format!("unknown header key {k:?}")));
    }

    let a: DesignMatrix<S> = match storage.as_str() {
        "dense" => {
            let rows: Vec<S> = read_f64s(r, m * n)?;
            DesignMatrix::from_dense_rows(m, n, &rows)?
        }
        "coordinate" => read_matrix_market(r, m, n)?,
        other => return Err(Error::Format(format!("unknown storage {other:?}"))),
    };
    let b: Vec<S> = read_f64s(r, m)?;
    let xbar = has_xbar.then(|| read_f64s::<_, S>(r, n)).transpose()?;
    let xstar = has_xstar.then(|| read_f64s::<_, S>(r, n)).transpose()?;

    let reg = Regularizer::new(family, S::c(lambda), theta.map(S::c))?;
    let loss = QuadraticLoss::new(a, b, scale)?;
    let mut problem = CompositeProblem::new(loss, reg);
    if let Some(fs) = fstar {
        problem = problem.with_fstar(S::c(fs));
    }
    Ok(GeneratedInstance { problem, xbar, xstar, meta })
}

fn read_matrix_market<S: Scalar, R: BufRead>(
    r: &mut R,
    m: usize,
    n: usize,
) -> Result<DesignMatrix<S>> {
    let banner = read_line(r)?;
    if !banner.starts_with("%%MatrixMarket") || !banner.contains("coordinate") {
        return Err(Error::Format(format!("bad Matrix Market banner {banner:?}")));
    }
    let size = loop {
        let line = read_line(r)?;
        if !line.starts_with('%') && !line.trim().is_empty() {
            break line;
        }
    };
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad Matrix Market size line {size:?}")))?;
    let [mm, mn, nnz] = dims[..] else {
        return Err(Error::Format(format!("bad Matrix Market size line {size:?}")));
    };
    if mm != m || mn != n {
        return Err(Error::Format(format!(
            "matrix block is {mm}x{mn}, header says {m}x{n}"
        )));
    }
    let mut trip = Vec::with_capacity(nnz);
    while trip.len() < nnz {
        let line = read_line(r)?;
        if line.starts_with('%') || line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(i), Some(j), Some(v)) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Format(format!("bad Matrix Market entry {line:?}")));
        };
        let i: usize = i
            .parse()
            .map_err(|_| Error::Format(format!("bad row index {i:?}")))?;
        let j: usize = j
            .parse()
            .map_err(|_| Error::Format(format!("bad column index {j:?}")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Format(format!("bad value {v:?}")))?;
        if i == 0 || j == 0 {
            return Err(Error::Format("Matrix Market indices are 1-based".into()));
        }
        trip.push((i - 1, j - 1, S::c(v)));
    }
    DesignMatrix::from_triplets(m, n, &trip)
}

/// Parses a solver config file. Every key is optional (defaults apply), every
/// unknown or duplicate key is an error.
pub fn parse_solver_config<S: Scalar>(text: &str) -> Result<SolverConfig<S>> {
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if kv.insert(k, v).is_some() {
            return Err(Error::Config(format!("duplicate config key {k:?}")));
        }
    }

    let mut take = |k: &str| kv.remove(k);
    let f_s = |k: &str, v: &str| -> Result<S> {
        v.parse::<f64>()
            .map(S::c)
            .map_err(|_| Error::Config(format!("key {k:?}: bad float {v:?}")))
    };
    let f_u64 = |k: &str, v: &str| -> Result<u64> {
        v.parse::<u64>()
            .map_err(|_| Error::Config(format!("key {k:?}: bad integer {v:?}")))
    };

    let mut cfg = SolverConfig::<S>::default();
    if let Some(v) = take("rule") {
        cfg.rule = UpdateRule::parse(v)?;
    }
    if let Some(v) = take("threads") {
        cfg.threads = v
            .parse()
            .map_err(|_| Error::Config(format!("key \"threads\": bad integer {v:?}")))?;
    }
    if let Some(v) = take("order") {
        cfg.order = Order::parse(v)?;
    }
    if let Some(v) = take("seed") {
        cfg.seed = f_u64("seed", v)?;
    }

    let schedule_kind = take("schedule");
    let gamma = take("gamma").map(|v| f_s("gamma", v)).transpose()?;
    let gamma0 = take("gamma0").map(|v| f_s("gamma0", v)).transpose()?;
    let mu = take("mu").map(|v| f_s("mu", v)).transpose()?;
    let floor = take("floor").map(|v| f_s("floor", v)).transpose()?;
    let diminishing = match schedule_kind {
        Some("fixed") => false,
        Some("diminishing") => true,
        Some(other) => return Err(Error::Config(format!("unknown schedule {other:?}"))),
        // the keys themselves pick the variant when `schedule` is absent
        None => gamma0.is_some() || mu.is_some() || floor.is_some(),
    };
    if diminishing {
        if gamma.is_some() {
            return Err(Error::Config(
                "key \"gamma\" belongs to the fixed schedule; use gamma0".into(),
            ));
        }
        cfg.schedule = StepSchedule::Diminishing {
            gamma0: gamma0.unwrap_or_else(S::one),
            mu: mu.ok_or_else(|| Error::Config("diminishing schedule needs mu".into()))?,
            floor: floor.unwrap_or_else(S::zero),
        };
    } else {
        if gamma0.is_some() || mu.is_some() || floor.is_some() {
            return Err(Error::Config(
                "keys gamma0/mu/floor belong to the diminishing schedule".into(),
            ));
        }
        if let Some(g) = gamma {
            cfg.schedule = StepSchedule::Fixed { gamma: g };
        }
    }

    let tau_mode = take("tau.mode");
    let tau_value = take("tau.value").map(|v| f_s("tau.value", v)).transpose()?;
    let mut heur = TauHeuristic::<S>::default();
    let mut heur_touched = false;
    for (key, slot) in [
        ("tau.tau0_scale", &mut heur.tau0_scale),
        ("tau.shrink", &mut heur.shrink),
        ("tau.grow", &mut heur.grow),
        ("tau.min_scale", &mut heur.min_scale),
        ("tau.max_scale", &mut heur.max_scale),
    ] {
        if let Some(v) = take(key) {
            *slot = f_s(key, v)?;
            heur_touched = true;
        }
    }
    if let Some(v) = take("tau.window") {
        heur.window = Some(f_u64("tau.window", v)?);
        heur_touched = true;
    }
    let fixed_tau = match tau_mode {
        Some("fixed") => true,
        Some("adaptive") => false,
        Some(other) => return Err(Error::Config(format!("unknown tau.mode {other:?}"))),
        None => tau_value.is_some(),
    };
    if fixed_tau {
        if heur_touched {
            return Err(Error::Config(
                "adaptive tau.* keys conflict with tau.mode = fixed".into(),
            ));
        }
        let tau = tau_value
            .ok_or_else(|| Error::Config("tau.mode = fixed needs tau.value".into()))?;
        cfg.tau = TauPolicy::Fixed { tau };
    } else {
        if tau_value.is_some() {
            return Err(Error::Config("tau.value requires tau.mode = fixed".into()));
        }
        cfg.tau = TauPolicy::Adaptive(heur);
    }

    if let Some(v) = take("rel_err") {
        cfg.term.rel_err = Some(f_s("rel_err", v)?);
    }
    if let Some(v) = take("merit") {
        cfg.term.merit = Some(f_s("merit", v)?);
    }
    if let Some(v) = take("max_iter") {
        cfg.term.max_iter = Some(f_u64("max_iter", v)?);
    }
    if let Some(v) = take("time_budget_s") {
        cfg.term.time_budget_s = Some(
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("key \"time_budget_s\": bad float {v:?}")))?,
        );
    }
    if let Some(v) = take("check") {
        cfg.check = match v {
            "k-grid" => CheckMode::KGrid,
            "sampler" => CheckMode::Sampler,
            other => return Err(Error::Config(format!("unknown check mode {other:?}"))),
        };
    }
    if let Some(v) = take("check_every") {
        cfg.check_every = Some(f_u64("check_every", v)?);
    }
    if let Some(v) = take("probe_every") {
        cfg.probe_every = Some(f_u64("probe_every", v)?);
    }
    if let Some(v) = take("sample_interval_ms") {
        cfg.sample_interval = Duration::from_millis(f_u64("sample_interval_ms", v)?);
    }

    if let Some(k) = kv.keys().next() {
        return Err(Error::Config(format!("unknown config key {k:?}")));
    }
    Ok(cfg)
}

pub const TRACE_CSV_HEADER: &str = "time_s,k,objective,rel_err,merit,max_delay,gamma,tau";

pub fn write_trace_csv<S: Scalar, W: Write>(w: &mut W, trace: &Trace<S>) -> Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    let f = |v: S| fmt_float(v.to_f64().unwrap());
    for row in &trace.rows {
        // a missing reference optimum prints as literal "nan"
        let rel = row.rel_err.map_or_else(|| "nan".to_string(), f);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_float(row.time_s),
            row.k,
            f(row.objective),
            rel,
            f(row.merit),
            row.max_delay,
            f(row.gamma),
            f(row.tau)
        )?;
    }
    Ok(())
}
