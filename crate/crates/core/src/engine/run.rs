//! The asynchronous run loop.
//!
//! Workers own disjoint coordinate ranges and loop: snapshot, partial
//! gradient, best response, relaxed commit, counter increment. Worker 0
//! additionally carries the bookkeeping duties (update-grid termination
//! checks, probes, proximal-weight adjustments) so those stay deterministic
//! in single-worker runs. The coordinator thread only samples telemetry in
//! Sampler mode; in KGrid mode with one worker nothing is spawned at all.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::shared::SharedIterate;
use super::{
    partition_blocks, CheckMode, DelayStats, Order, RunOutput, SolverConfig, StepSchedule,
    TauPolicy, Termination, TerminationReason, Trace, TraceMeta, TraceRow, UpdateRecord,
    UpdateRule, AGE_BUCKETS,
};
use crate::kernels::{self, best_response, BestResponseInputs};
use crate::model::{CompositeProblem, RegFamily};
use crate::scalar::{AtomicCell, Scalar};
use crate::Result;

struct Resolved<S> {
    max_iter: u64,
    check_every: u64,
    probe_every: Option<u64>,
    budget: Option<Duration>,
    sample_interval: Duration,
    rel_err_target: Option<S>,
    merit_target: Option<S>,
    l_arock: Option<S>,
    /// None means the proximal weight stays fixed.
    tau_window: Option<u64>,
    tau_shrink: S,
    tau_grow: S,
    tau_min: S,
    tau_max: S,
    merit_tau: S,
    gram: bool,
    kgrid: bool,
    order: Order,
    seed: u64,
    rule: UpdateRule,
}

enum GammaState<S: Scalar> {
    Fixed(S),
    Diminishing { cell: S::Atomic, mu: S, floor: S },
}

impl<S: Scalar> GammaState<S> {
    fn new(s: &StepSchedule<S>) -> Self {
        match *s {
            StepSchedule::Fixed { gamma } => GammaState::Fixed(gamma),
            StepSchedule::Diminishing { gamma0, mu, floor } => GammaState::Diminishing {
                cell: S::Atomic::new(gamma0),
                mu,
                floor,
            },
        }
    }

    #[inline]
    fn current(&self) -> S {
        match self {
            GammaState::Fixed(g) => *g,
            GammaState::Diminishing { cell, .. } => cell.load(),
        }
    }

    /// One recursion step γ ← max(floor, γ(1−μγ)); every committed update
    /// advances exactly once (exact recursion with one worker; under
    /// contention updates may observe a value a few steps off, which the
    /// diminishing analysis tolerates).
    #[inline]
    fn advance(&self) {
        if let GammaState::Diminishing { cell, mu, floor } = self {
            let (mu, floor) = (*mu, *floor);
            cell.rmw(|g| (g * (S::one() - mu * g)).max(floor));
        }
    }
}

struct RunCtx<'p, S: Scalar> {
    problem: &'p CompositeProblem<S>,
    shared: SharedIterate<S>,
    res: Resolved<S>,
    gamma: GammaState<S>,
    tau_cell: S::Atomic,
    stop: AtomicBool,
    reason: Mutex<Option<TerminationReason>>,
    span_max: AtomicU64,
    age_max: AtomicU64,
    age_hist: Option<Vec<AtomicU64>>,
    skipped: AtomicU64,
    rows: Mutex<Vec<TraceRow<S>>>,
    probes: Mutex<Vec<(u64, S)>>,
    updates: Option<Mutex<Vec<UpdateRecord<S>>>>,
    writers: Option<Vec<AtomicU64>>,
    violation: AtomicBool,
    // more workers than hardware threads: without a yield per commit the
    // scheduler hands each worker a whole timeslice, so one block spins in
    // place against a frozen rest and staleness grows into the thousands
    oversub: bool,
    start: Instant,
}

fn signal<S: Scalar>(ctx: &RunCtx<'_, S>, r: TerminationReason) {
    {
        let mut g = ctx.reason.lock().unwrap();
        if g.is_none() {
            *g = Some(r);
        }
    }
    ctx.stop.store(true, Ordering::Release);
}

fn push_row<S: Scalar>(ctx: &RunCtx<'_, S>, row: TraceRow<S>) {
    let mut rows = ctx.rows.lock().unwrap();
    if rows.last().map_or(true, |last| row.k > last.k) {
        rows.push(row);
    }
}

/// Objective, merit and targets on a best-effort snapshot; returns false if
/// evaluation went non-finite (run aborted).
fn evaluate_state<S: Scalar>(ctx: &RunCtx<'_, S>, eval: &mut [S], k_at: u64) -> bool {
    ctx.shared.snapshot_into(eval);
    let f = ctx.problem.objective(eval);
    let merit = kernels::merit_infinity(ctx.problem, eval, ctx.res.merit_tau);
    if !f.is_finite() || !merit.is_finite() {
        signal(ctx, TerminationReason::NonFinite);
        return false;
    }
    let rel = ctx.problem.fstar.map(|fs| kernels::relative_error(f, fs));
    push_row(
        ctx,
        TraceRow {
            time_s: ctx.start.elapsed().as_secs_f64(),
            k: k_at,
            objective: f,
            rel_err: rel,
            merit,
            max_delay: ctx.span_max.load(Ordering::Relaxed),
            gamma: ctx.gamma.current(),
            tau: ctx.tau_cell.load(),
        },
    );
    if let (Some(t), Some(r)) = (ctx.res.rel_err_target, rel) {
        if r <= t {
            signal(ctx, TerminationReason::RelErrTarget);
            return true;
        }
    }
    if let Some(t) = ctx.res.merit_target {
        if merit <= t {
            signal(ctx, TerminationReason::MeritTarget);
            return true;
        }
    }
    if let Some(b) = ctx.res.budget {
        if ctx.start.elapsed() >= b {
            signal(ctx, TerminationReason::TimeBudget);
        }
    }
    true
}

/// Cheap loss proxy for the proximal-weight rule: live residual norm in
/// matrix-free mode, the Gram quadratic identity otherwise. Comparisons only;
/// never reported as an objective value.
fn tau_proxy<S: Scalar>(ctx: &RunCtx<'_, S>, eval: &mut [S]) -> S {
    if let Some(v) = ctx.shared.residual_sq_norm() {
        v
    } else {
        ctx.shared.snapshot_into(eval);
        ctx.problem
            .loss
            .smooth_value_gram(eval)
            .expect("gram resident in non-residual mode")
    }
}

/// Worker-0 bookkeeping after a commit at `k_commit`.
struct LeadState<S> {
    eval: Vec<S>,
    next_check: u64,
    next_probe: u64,
    next_tau: u64,
    proxy_prev: Option<S>,
}

fn lead_duties<S: Scalar>(ctx: &RunCtx<'_, S>, st: &mut LeadState<S>, k_commit: u64) {
    if let Some(window) = ctx.res.tau_window {
        if k_commit >= st.next_tau {
            let proxy = tau_proxy(ctx, &mut st.eval);
            if let Some(prev) = st.proxy_prev {
                let t = ctx.tau_cell.load();
                let t2 = if proxy < prev {
                    (ctx.res.tau_shrink * t).max(ctx.res.tau_min)
                } else {
                    (ctx.res.tau_grow * t).min(ctx.res.tau_max)
                };
                ctx.tau_cell.store(t2);
            }
            st.proxy_prev = Some(proxy);
            let k_cur = ctx.shared.k.load(Ordering::Relaxed).max(k_commit);
            st.next_tau = (k_cur / window + 1) * window;
        }
    }
    if ctx.res.kgrid && k_commit >= st.next_check {
        if !evaluate_state(ctx, &mut st.eval, k_commit) {
            return;
        }
        let k_cur = ctx.shared.k.load(Ordering::Relaxed).max(k_commit);
        st.next_check = (k_cur / ctx.res.check_every + 1) * ctx.res.check_every;
    }
    if let Some(pe) = ctx.res.probe_every {
        if k_commit >= st.next_probe {
            ctx.shared.snapshot_into(&mut st.eval);
            let v = kernels::stationarity_sq_norm(ctx.problem, &st.eval);
            ctx.probes.lock().unwrap().push((k_commit, v));
            let k_cur = ctx.shared.k.load(Ordering::Relaxed).max(k_commit);
            st.next_probe = (k_cur / pe + 1) * pe;
        }
    }
}

fn worker<S: Scalar>(ctx: &RunCtx<'_, S>, id: usize, range: Range<usize>) {
    let problem = ctx.problem;
    let loss = &problem.loss;
    let a = loss.design();
    let n = problem.n();
    let gram = ctx.res.gram;
    let dc = problem.reg.family() != RegFamily::L1;
    let dc_curv = problem.reg.lambda() * problem.reg.hminus_curvature_bound();

    // the unit-prox baseline can never move zero-curvature coordinates; a
    // worker owning only those would spin without advancing the counter
    if ctx.res.rule == UpdateRule::Aspcd
        && !range.clone().any(|i| loss.curvature(i) > S::zero())
    {
        return;
    }

    let mut buf = vec![S::zero(); if gram { n } else { 0 }];
    let mut rng = matches!(ctx.res.order, Order::Random).then(|| {
        ChaCha8Rng::seed_from_u64(
            ctx.res
                .seed
                .wrapping_add((id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        )
    });
    let mut pos = range.start;
    let lead = id == 0;
    let mut lead_state = lead.then(|| LeadState {
        eval: vec![S::zero(); n],
        next_check: ctx.res.check_every,
        next_probe: ctx.res.probe_every.unwrap_or(u64::MAX),
        next_tau: ctx.res.tau_window.unwrap_or(u64::MAX),
        proxy_prev: None,
    });

    loop {
        if ctx.stop.load(Ordering::Acquire) {
            break;
        }
        if ctx.oversub {
            std::thread::yield_now();
        }
        let k_read = ctx.shared.k.load(Ordering::Relaxed);
        if k_read >= ctx.res.max_iter {
            signal(ctx, TerminationReason::MaxIter);
            break;
        }

        let i = match &mut rng {
            Some(r) => range.start + r.random_range(0..range.len()),
            None => {
                let i = pos;
                pos += 1;
                if pos == range.end {
                    pos = range.start;
                }
                i
            }
        };

        let tau_now = ctx.tau_cell.load();
        let (q_eff, tau_eff) = match ctx.res.rule {
            UpdateRule::AsyFlexa => (loss.curvature(i), tau_now),
            UpdateRule::ARock => (ctx.res.l_arock.expect("validated"), S::zero()),
            UpdateRule::Aspcd => {
                let li = loss.curvature(i);
                if li == S::zero() {
                    ctx.skipped.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
                (if dc { li + dc_curv } else { li }, S::zero())
            }
        };

        // snapshot: own coordinate is the worker's alone, so it is fresh by
        // construction; everything else may be stale
        let (x_old, g_i) = if gram {
            if let Some(h) = &ctx.age_hist {
                let age = ctx.shared.snapshot_with_ages(&mut buf, k_read, i, h);
                ctx.age_max.fetch_max(age, Ordering::Relaxed);
            } else {
                ctx.shared.snapshot_into(&mut buf);
            }
            (buf[i], loss.partial_gradient(&buf, i))
        } else {
            let xo = ctx.shared.read_x(i);
            (
                xo,
                loss.scale().grad_factor::<S>() * ctx.shared.residual_col_dot(a, i),
            )
        };

        let xhat = best_response(
            &problem.reg,
            BestResponseInputs {
                xtilde_i: x_old,
                grad_i: g_i,
                q_i: q_eff,
                tau: tau_eff,
            },
        );
        let gamma = ctx.gamma.current();
        let x_new = x_old + gamma * (xhat - x_old);
        if !x_new.is_finite() {
            signal(ctx, TerminationReason::NonFinite);
            break;
        }

        ctx.shared.write_x(i, x_new);
        if let Some(w) = &ctx.writers {
            let prev = w[i].swap(id as u64, Ordering::Relaxed);
            if prev != u64::MAX && prev != id as u64 {
                ctx.violation.store(true, Ordering::Relaxed);
            }
        }
        if !gram {
            let delta = x_new - x_old;
            if delta != S::zero() {
                ctx.shared.residual_add(a, i, delta);
            }
        }
        let k_prev = ctx.shared.k.fetch_add(1, Ordering::Relaxed);
        let k_commit = k_prev + 1;
        ctx.shared.stamp(i, k_commit);
        ctx.span_max.fetch_max(k_prev - k_read, Ordering::Relaxed);
        ctx.gamma.advance();

        if let Some(log) = &ctx.updates {
            log.lock().unwrap().push(UpdateRecord {
                worker: id,
                i,
                k_read,
                k_commit,
                x_old,
                xhat,
                gamma,
                tau: tau_now,
                x_new,
            });
        }

        if let Some(st) = &mut lead_state {
            lead_duties(ctx, st, k_commit);
        }
    }
}

/// Telemetry/termination loop run by the coordinator in Sampler mode.
fn sampler_loop<S: Scalar>(ctx: &RunCtx<'_, S>) {
    let mut eval = vec![S::zero(); ctx.problem.n()];
    loop {
        if ctx.stop.load(Ordering::Acquire) {
            break;
        }
        std::thread::sleep(ctx.res.sample_interval);
        if ctx.stop.load(Ordering::Acquire) {
            break;
        }
        if let Some(b) = ctx.res.budget {
            if ctx.start.elapsed() >= b {
                signal(ctx, TerminationReason::TimeBudget);
                break;
            }
        }
        let k = ctx.shared.k.load(Ordering::Relaxed);
        let advanced = ctx
            .rows
            .lock()
            .unwrap()
            .last()
            .map_or(k > 0, |last| k > last.k);
        if advanced && !evaluate_state(ctx, &mut eval, k) {
            break;
        }
    }
}

pub fn run_async<S: Scalar>(
    problem: &CompositeProblem<S>,
    config: &SolverConfig<S>,
) -> Result<RunOutput<S>> {
    config.validate(problem)?;
    let n = problem.n();
    let part = partition_blocks(n, config.threads)?;
    let gram = problem.loss.has_gram();

    let maxq = (0..n)
        .map(|i| problem.loss.curvature(i))
        .fold(S::zero(), S::max);
    let (tau0, tau_window, tau_shrink, tau_grow, tau_min, tau_max) = match config.tau {
        TauPolicy::Fixed { tau } => (tau, None, S::one(), S::one(), tau, tau),
        TauPolicy::Adaptive(h) => (
            h.tau0_scale * maxq,
            Some(h.window.unwrap_or(n as u64)),
            h.shrink,
            h.grow,
            h.min_scale * maxq,
            h.max_scale * maxq,
        ),
    };

    let Termination { rel_err, merit, max_iter, time_budget_s } = config.term;
    let res = Resolved {
        max_iter: max_iter.unwrap_or(100 * n as u64),
        check_every: config.check_every.unwrap_or(n as u64),
        probe_every: config.probe_every,
        budget: time_budget_s.map(Duration::from_secs_f64),
        sample_interval: config.sample_interval,
        rel_err_target: rel_err,
        merit_target: merit,
        l_arock: matches!(config.rule, UpdateRule::ARock)
            .then(|| super::arock_lipschitz(problem)),
        tau_window,
        tau_shrink,
        tau_grow,
        tau_min,
        tau_max,
        merit_tau: kernels::merit_tau(&problem.loss),
        gram,
        kgrid: config.check == CheckMode::KGrid,
        order: config.order,
        seed: config.seed,
        rule: config.rule,
    };

    let residual_init: Option<Vec<S>> =
        (!gram).then(|| problem.loss.rhs().iter().map(|&b| -b).collect());
    let shared = SharedIterate::new(n, residual_init.as_deref(), config.measure_delays);

    let avail = std::thread::available_parallelism()
        .map(|v| v.get())
        .unwrap_or(1);
    let meta = TraceMeta {
        rule: config.rule.name().into(),
        threads: config.threads,
        seed: config.seed,
        schedule: config.schedule.describe(),
        order: config.order.name().into(),
        check: config.check.name().into(),
        gram_mode: gram,
        oversubscribed: config.threads > avail,
        resolved_max_iter: res.max_iter,
        merit_tau: res.merit_tau.to_f64().unwrap_or(f64::NAN),
        skipped: 0,
        ownership_violation: false,
    };

    let ctx = RunCtx {
        problem,
        shared,
        res,
        gamma: GammaState::new(&config.schedule),
        tau_cell: S::Atomic::new(tau0),
        stop: AtomicBool::new(false),
        reason: Mutex::new(None),
        span_max: AtomicU64::new(0),
        age_max: AtomicU64::new(0),
        age_hist: config
            .measure_delays
            .then(|| (0..AGE_BUCKETS).map(|_| AtomicU64::new(0)).collect()),
        skipped: AtomicU64::new(0),
        rows: Mutex::new(Vec::new()),
        probes: Mutex::new(Vec::new()),
        updates: config.log_updates.then(|| Mutex::new(Vec::new())),
        writers: config
            .audit_ownership
            .then(|| (0..n).map(|_| AtomicU64::new(u64::MAX)).collect()),
        violation: AtomicBool::new(false),
        oversub: config.threads > avail,
        start: Instant::now(),
    };

    // starting-point row and probe (k = 0, consistent by definition)
    {
        let x0 = vec![S::zero(); n];
        let f0 = problem.objective(&x0);
        let merit0 = kernels::merit_infinity(problem, &x0, ctx.res.merit_tau);
        ctx.rows.lock().unwrap().push(TraceRow {
            time_s: 0.0,
            k: 0,
            objective: f0,
            rel_err: problem.fstar.map(|fs| kernels::relative_error(f0, fs)),
            merit: merit0,
            max_delay: 0,
            gamma: ctx.gamma.current(),
            tau: ctx.tau_cell.load(),
        });
        if ctx.res.probe_every.is_some() {
            ctx.probes
                .lock()
                .unwrap()
                .push((0, kernels::stationarity_sq_norm(problem, &x0)));
        }
    }

    let inline = config.threads == 1 && config.check == CheckMode::KGrid;
    if inline {
        worker(&ctx, 0, part.ranges[0].clone());
    } else {
        std::thread::scope(|s| {
            for (id, r) in part.ranges.iter().enumerate() {
                let ctx = &ctx;
                let r = r.clone();
                s.spawn(move || worker(ctx, id, r));
            }
            if config.check == CheckMode::Sampler {
                sampler_loop(&ctx);
            }
        });
    }

    let reason = ctx
        .reason
        .lock()
        .unwrap()
        .unwrap_or(TerminationReason::MaxIter);
    let x = ctx.shared.final_x();
    let residual = ctx.shared.final_residual();
    let k_final = ctx.shared.k.load(Ordering::Relaxed);

    // closing row on the quiesced iterate
    {
        let f = problem.objective(&x);
        let merit = kernels::merit_infinity(problem, &x, ctx.res.merit_tau);
        if f.is_finite() && merit.is_finite() {
            push_row(
                &ctx,
                TraceRow {
                    time_s: ctx.start.elapsed().as_secs_f64(),
                    k: k_final,
                    objective: f,
                    rel_err: problem.fstar.map(|fs| kernels::relative_error(f, fs)),
                    merit,
                    max_delay: ctx.span_max.load(Ordering::Relaxed),
                    gamma: ctx.gamma.current(),
                    tau: ctx.tau_cell.load(),
                },
            );
        }
    }

    let delays = ctx.age_hist.as_ref().map(|hist| DelayStats {
        max_span: ctx.span_max.load(Ordering::Relaxed),
        max_cell_age: ctx.age_max.load(Ordering::Relaxed),
        histogram: hist.iter().map(|c| c.load(Ordering::Relaxed)).collect(),
    });

    let mut meta = meta;
    meta.skipped = ctx.skipped.load(Ordering::Relaxed);
    meta.ownership_violation = ctx.violation.load(Ordering::Relaxed);

    let trace = Trace {
        rows: ctx.rows.into_inner().unwrap(),
        probes: ctx.probes.into_inner().unwrap(),
        reason,
        k_final,
        delays,
        updates: ctx.updates.map(|m| m.into_inner().unwrap()),
        meta,
    };
    Ok(RunOutput { x, residual, trace })
}
