//! Complexity-bound tables from a constants file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use asyflexa::io::fmt_float;
use asyflexa::theory::{fixed_step_bound, k_epsilon_bound, ComplexityConstants};

use crate::sidecar::write_sidecar;

/// Parses `key = value` constants. δ is supplied by the table's grid, not
/// the file; ρ defaults to 2. Unknown or repeated keys are hard errors so a
/// typo cannot silently fall back to a default.
pub fn parse_constants(text: &str) -> Result<ComplexityConstants<f64>> {
    let mut kv: BTreeMap<&str, f64> = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got `{raw}`", ln + 1);
        };
        let (k, v) = (k.trim(), v.trim());
        let parsed: f64 = v.parse().with_context(|| format!("line {}: value `{v}`", ln + 1))?;
        if kv.insert(k, parsed).is_some() {
            bail!("duplicate key `{k}`");
        }
    }

    fn take(kv: &mut BTreeMap<&str, f64>, k: &str) -> Result<f64> {
        kv.remove(k).ok_or_else(|| anyhow::anyhow!("missing constant `{k}`"))
    }
    let rho = kv.remove("rho").unwrap_or(2.0);
    let n_blocks = {
        let v = take(&mut kv, "n_blocks")?;
        if v < 1.0 || v.fract() != 0.0 {
            bail!("n_blocks must be a positive integer, got {v}");
        }
        v as usize
    };
    let c = ComplexityConstants {
        rho,
        delta: 0,
        n_blocks,
        l_f: take(&mut kv, "l_f")?,
        c_tilde_f: take(&mut kv, "c_tilde_f")?,
        l_xhat: take(&mut kv, "l_xhat")?,
        l_b: take(&mut kv, "l_b")?,
        l_e: take(&mut kv, "l_e")?,
        p_min: take(&mut kv, "p_min")?,
        cap_delta: take(&mut kv, "cap_delta")?,
        f0: take(&mut kv, "f0")?,
        fstar: take(&mut kv, "fstar")?,
    };
    if let Some(k) = kv.keys().next() {
        bail!("unknown constant `{k}`");
    }
    c.validate()?;
    Ok(c)
}

/// For each δ: the largest admissible fixed step, then the iteration bound
/// at γ = frac·γ_max for each ε. Writes CSV plus sidecar; returns row count.
pub fn write_bound_table(
    base: &ComplexityConstants<f64>,
    deltas: &[u64],
    epsilons: &[f64],
    gamma_frac: f64,
    out: &Path,
) -> Result<usize> {
    if deltas.is_empty() || epsilons.is_empty() {
        bail!("empty delta or epsilon grid");
    }
    if !(gamma_frac > 0.0 && gamma_frac <= 1.0) {
        bail!("gamma fraction must lie in (0, 1], got {gamma_frac}");
    }
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "delta,gamma_max,gamma_used,epsilon,k_epsilon_bound")?;
    let mut rows = 0;
    for &delta in deltas {
        let c = ComplexityConstants { delta, ..*base };
        let gmax = fixed_step_bound(&c);
        let gused = gamma_frac * gmax;
        for &eps in epsilons {
            if eps <= 0.0 {
                bail!("epsilon must be positive, got {eps}");
            }
            let k = k_epsilon_bound(&c, gused, eps);
            writeln!(
                w,
                "{},{},{},{},{}",
                delta,
                fmt_float(gmax),
                fmt_float(gused),
                fmt_float(eps),
                fmt_float(k)
            )?;
            rows += 1;
        }
    }
    w.flush()?;
    write_sidecar(
        out,
        &[
            ("gamma_rule".into(), format!("{gamma_frac} x gamma_max(delta)")),
            ("rho".into(), format!("{}", base.rho)),
            ("n_blocks".into(), base.n_blocks.to_string()),
        ],
    )?;
    Ok(rows)
}
