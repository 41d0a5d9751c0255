//! The asynchronous solver: partitioned workers over a lock-free shared
//! iterate, relaxed best-response updates x_i ← x_i + γ(x̂_i − x_i), stepsize
//! schedules, an adaptive proximal weight, two baseline update rules, a
//! deterministic synchronous reference mode, and delay diagnostics.
//!
//! Concurrency model: one worker per partition element with exclusive write
//! ownership of its coordinates; everyone reads every cell without locks, so
//! snapshots are inconsistent by design. The global update counter and the
//! maintained-residual cells use indivisible read-modify-write operations.
//! With one worker, cyclic order and a fixed proximal weight the run is
//! bit-reproducible, and in that configuration the engine executes inline on
//! the calling thread with no spawns at all.

mod run;
mod shared;
mod sync;

pub use run::run_async;
pub use shared::SharedIterate;
pub use sync::{run_sync_reference, SyncConfig, SyncOutput};

use std::ops::Range;
use std::time::Duration;

use crate::model::CompositeProblem;
use crate::scalar::Scalar;
use crate::{kernels, Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UpdateRule {
    /// Best response against the strongly convex scalar surrogate, relaxed
    /// by the schedule's γ.
    AsyFlexa,
    /// Damped fixed-point iteration on the global prox-gradient map with a
    /// single Lipschitz constant.
    ARock,
    /// Unit-stepsize coordinate prox step with per-coordinate Lipschitz
    /// constants.
    Aspcd,
}

impl UpdateRule {
    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::AsyFlexa => "asyflexa",
            UpdateRule::ARock => "arock",
            UpdateRule::Aspcd => "aspcd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "asyflexa" => Ok(UpdateRule::AsyFlexa),
            "arock" => Ok(UpdateRule::ARock),
            "aspcd" => Ok(UpdateRule::Aspcd),
            _ => Err(Error::Config(format!("unknown rule {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Order {
    Cyclic,
    Random,
}

impl Order {
    pub fn name(self) -> &'static str {
        match self {
            Order::Cyclic => "cyclic",
            Order::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cyclic" => Ok(Order::Cyclic),
            "random" => Ok(Order::Random),
            _ => Err(Error::Config(format!("unknown order {s:?}"))),
        }
    }
}

/// When termination targets and trace rows are evaluated.
///
/// `KGrid` does both on the update-counter grid (worker 0, every
/// `check_every` updates): deterministic at one thread, and the mode used
/// whenever results must be reproducible. `Sampler` records rows at a
/// wall-clock cadence from the coordinator thread, which never perturbs the
/// workers; timing comparisons use it.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum CheckMode {
    #[default]
    KGrid,
    Sampler,
}

impl CheckMode {
    pub fn name(self) -> &'static str {
        match self {
            CheckMode::KGrid => "k-grid",
            CheckMode::Sampler => "sampler",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum StepSchedule<S> {
    Fixed { gamma: S },
    /// γ⁰ at the first update, then γ ← max(floor, γ(1−μγ)) after each
    /// update. Positive and nonincreasing.
    Diminishing { gamma0: S, mu: S, floor: S },
}

impl<S: Scalar> StepSchedule<S> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Fixed { gamma } => {
                if gamma > S::zero() && gamma <= S::one() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("fixed gamma {gamma} outside (0, 1]")))
                }
            }
            StepSchedule::Diminishing { gamma0, mu, floor } => {
                if !(gamma0 > S::zero() && gamma0 <= S::one()) {
                    Err(Error::Config(format!("gamma0 {gamma0} outside (0, 1]")))
                } else if !(mu > S::zero() && mu * gamma0 < S::one()) {
                    // μγ < 1 keeps the recursion γ(1−μγ) positive forever
                    Err(Error::Config(format!("mu {mu} outside (0, 1/gamma0)")))
                } else if !(floor >= S::zero() && floor <= gamma0) {
                    Err(Error::Config(format!("floor {floor} outside [0, gamma0]")))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn initial(&self) -> S {
        match *self {
            StepSchedule::Fixed { gamma } => gamma,
            StepSchedule::Diminishing { gamma0, .. } => gamma0,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            StepSchedule::Fixed { gamma } => format!("fixed(gamma={gamma})"),
            StepSchedule::Diminishing { gamma0, mu, floor } => {
                format!("diminishing(gamma0={gamma0},mu={mu},floor={floor})")
            }
        }
    }
}

/// Adaptive proximal-weight rule: every `window` global updates a designated
/// worker compares a cheap objective proxy against the previous window; on
/// progress τ shrinks, otherwise it grows, clamped to
/// [min_scale, max_scale]·max_i q_i. τ⁰ = tau0_scale·max_i q_i.
#[derive(Clone, Copy, Debug)]
pub struct TauHeuristic<S> {
    pub tau0_scale: S,
    pub shrink: S,
    pub grow: S,
    /// Updates between adjustments; `None` means n.
    pub window: Option<u64>,
    pub min_scale: S,
    pub max_scale: S,
}

impl<S: Scalar> Default for TauHeuristic<S> {
    fn default() -> Self {
        TauHeuristic {
            tau0_scale: S::c(0.5),
            shrink: S::c(0.9),
            grow: S::c(2.0),
            window: None,
            min_scale: S::c(1e-8),
            max_scale: S::c(1e8),
        }
    }
}

impl<S: Scalar> TauHeuristic<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau0_scale > S::zero()
            && self.shrink > S::zero()
            && self.shrink < S::one()
            && self.grow > S::one()
            && self.window != Some(0)
            && self.min_scale > S::zero()
            && self.max_scale >= self.min_scale;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tau heuristic {self:?}")))
        }
    }

    /// One adjustment: shrink on a decreased proxy, grow otherwise.
    pub fn adjust(&self, tau: S, proxy_prev: S, proxy_now: S, tau_min: S, tau_max: S) -> S {
        if proxy_now < proxy_prev {
            (self.shrink * tau).max(tau_min)
        } else {
            (self.grow * tau).min(tau_max)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum TauPolicy<S> {
    Fixed { tau: S },
    Adaptive(TauHeuristic<S>),
}

impl<S: Scalar> TauPolicy<S> {
    /// Zero is allowed for the fixed policy: the subproblem then uses the
    /// bare coordinate curvature, which `SolverConfig::validate` checks is
    /// positive everywhere.
    pub fn validate(&self) -> Result<()> {
        match self {
            TauPolicy::Fixed { tau } => {
                if *tau >= S::zero() && tau.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("fixed tau {tau} must be nonnegative")))
                }
            }
            TauPolicy::Adaptive(h) => h.validate(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Termination<S> {
    /// Stop when (F − F*)/max(1, |F*|) drops to this value; needs a known F*.
    pub rel_err: Option<S>,
    /// Stop when the ∞-norm best-response residual drops to this value.
    pub merit: Option<S>,
    /// Global update budget; defaults to 100·n when unset.
    pub max_iter: Option<u64>,
    pub time_budget_s: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig<S> {
    pub rule: UpdateRule,
    pub threads: usize,
    pub schedule: StepSchedule<S>,
    pub tau: TauPolicy<S>,
    pub order: Order,
    pub seed: u64,
    pub term: Termination<S>,
    pub check: CheckMode,
    /// Update-grid spacing for KGrid checks and rows; default n.
    pub check_every: Option<u64>,
    /// Sampler cadence.
    pub sample_interval: Duration,
    /// Record ‖M_F(x)‖² on this update grid (worker 0).
    pub probe_every: Option<u64>,
    /// Per-cell write stamps and read-age histograms (Gram mode only).
    pub measure_delays: bool,
    /// Log every committed update (test instrumentation; slow).
    pub log_updates: bool,
    /// Track which worker writes each cell (test instrumentation).
    pub audit_ownership: bool,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        SolverConfig {
            rule: UpdateRule::AsyFlexa,
            threads: 1,
            schedule: StepSchedule::Fixed { gamma: S::c(0.9) },
            tau: TauPolicy::Adaptive(TauHeuristic::default()),
            order: Order::Cyclic,
            seed: 0,
            term: Termination::default(),
            check: CheckMode::KGrid,
            check_every: None,
            sample_interval: Duration::from_millis(10),
            probe_every: None,
            measure_delays: false,
            log_updates: false,
            audit_ownership: false,
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self, problem: &CompositeProblem<S>) -> Result<()> {
        let n = problem.n();
        if self.threads < 1 || self.threads > n {
            return Err(Error::Config(format!(
                "threads {} outside 1..={n}",
                self.threads
            )));
        }
        self.schedule.validate()?;
        self.tau.validate()?;
        if matches!(self.rule, UpdateRule::AsyFlexa)
            && matches!(self.tau, TauPolicy::Fixed { tau } if tau == S::zero())
            && (0..n).any(|i| !(problem.loss.curvature(i) > S::zero()))
        {
            return Err(Error::Config(
                "fixed tau 0 needs strictly positive curvature on every coordinate".into(),
            ));
        }
        if self.check_every == Some(0) {
            return Err(Error::Config("check_every must be positive".into()));
        }
        if self.probe_every == Some(0) {
            return Err(Error::Config("probe_every must be positive".into()));
        }
        if self.term.rel_err.is_some() && problem.fstar.is_none() {
            return Err(Error::Config(
                "relative-error target requires a reference optimum on the problem".into(),
            ));
        }
        if let Some(t) = self.term.rel_err {
            if !(t > S::zero()) {
                return Err(Error::Config(format!("rel_err target {t} must be positive")));
            }
        }
        if let Some(t) = self.term.merit {
            if !(t > S::zero()) {
                return Err(Error::Config(format!("merit target {t} must be positive")));
            }
        }
        if self.measure_delays && !problem.loss.has_gram() {
            return Err(Error::Config(
                "delay measurement stamps x reads; it requires Gram-mode gradients".into(),
            ));
        }
        if !(kernels::merit_tau(&problem.loss) > S::zero()) {
            return Err(Error::Config(
                "merit weight degenerate: median Gram diagonal is zero".into(),
            ));
        }
        match self.rule {
            UpdateRule::AsyFlexa => {}
            UpdateRule::ARock => {
                let l = arock_lipschitz(problem);
                if !(l > S::zero() && l.is_finite()) {
                    return Err(Error::Config(format!(
                        "global Lipschitz estimate {l} unusable for the fixed-point baseline"
                    )));
                }
            }
            UpdateRule::Aspcd => {
                match self.schedule {
                    StepSchedule::Fixed { gamma } if gamma == S::one() => {}
                    _ => {
                        return Err(Error::Config(
                            "the unit-prox baseline runs at fixed gamma = 1".into(),
                        ))
                    }
                }
                let any_active = (0..n).any(|i| problem.loss.curvature(i) > S::zero());
                if !any_active {
                    return Err(Error::Config(
                        "every coordinate has zero curvature; nothing to update".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Global Lipschitz constant used by the fixed-point baseline: the spectral
/// bound of the scaled Gram matrix plus, for DC penalties, the curvature
/// bound of the linearized concave part.
pub fn arock_lipschitz<S: Scalar>(problem: &CompositeProblem<S>) -> S {
    problem.loss.spectral_bound(200)
        + problem.reg.lambda() * problem.reg.hminus_curvature_bound()
}

/// Contiguous balanced partition: block i belongs to exactly one worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub ranges: Vec<Range<usize>>,
}

impl Partition {
    pub fn workers(&self) -> usize {
        self.ranges.len()
    }

    pub fn owner_of(&self, i: usize) -> usize {
        self.ranges
            .iter()
            .position(|r| r.contains(&i))
            .expect("coordinate outside partition")
    }
}

/// Splits {0..n} into P contiguous ranges with sizes differing by at most 1;
/// the first n mod P ranges take the extra element.
pub fn partition_blocks(n: usize, p: usize) -> Result<Partition> {
    if p < 1 || p > n {
        return Err(Error::Config(format!("cannot split {n} blocks over {p} workers")));
    }
    let base = n / p;
    let rem = n % p;
    let mut ranges = Vec::with_capacity(p);
    let mut start = 0;
    for w in 0..p {
        let len = base + usize::from(w < rem);
        ranges.push(start..start + len);
        start += len;
    }
    debug_assert_eq!(start, n);
    Ok(Partition { ranges })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TerminationReason {
    RelErrTarget,
    MeritTarget,
    MaxIter,
    TimeBudget,
    /// A non-finite value appeared; the run aborted with the trace intact.
    NonFinite,
}

impl TerminationReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::RelErrTarget => "rel_err",
            TerminationReason::MeritTarget => "merit",
            TerminationReason::MaxIter => "max_iter",
            TerminationReason::TimeBudget => "time_budget",
            TerminationReason::NonFinite => "non_finite",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceRow<S> {
    pub time_s: f64,
    pub k: u64,
    pub objective: S,
    /// None when the problem carries no reference optimum.
    pub rel_err: Option<S>,
    pub merit: S,
    /// Running maximum of the commit-minus-read counter span.
    pub max_delay: u64,
    pub gamma: S,
    pub tau: S,
}

/// Observed-delay statistics from stamp bookkeeping.
///
/// `max_span` is the coarse per-update measure (counter value at commit minus
/// at snapshot read): 0 for one worker and for synchronous sweeps.
/// `max_cell_age` and `histogram` are per-cell read ages (counter at read
/// minus the cell's last-write stamp), the per-coordinate delays the theory
/// consumes; a worker's own coordinate always has age 0.
#[derive(Clone, Debug, Default)]
pub struct DelayStats {
    pub max_span: u64,
    pub max_cell_age: u64,
    /// histogram[a] counts reads at age a; the last bucket absorbs the tail.
    pub histogram: Vec<u64>,
}

pub const AGE_BUCKETS: usize = 513;

/// One committed update, logged when `log_updates` is on. The written value
/// obeys x_new = x_old + γ(x̂ − x_old) bitwise.
#[derive(Clone, Copy, Debug)]
pub struct UpdateRecord<S> {
    pub worker: usize,
    pub i: usize,
    pub k_read: u64,
    pub k_commit: u64,
    pub x_old: S,
    pub xhat: S,
    pub gamma: S,
    pub tau: S,
    pub x_new: S,
}

#[derive(Clone, Debug)]
pub struct TraceMeta {
    pub rule: String,
    pub threads: usize,
    pub seed: u64,
    pub schedule: String,
    pub order: String,
    pub check: String,
    pub gram_mode: bool,
    /// More workers than the host exposes; timings are not meaningful.
    pub oversubscribed: bool,
    pub resolved_max_iter: u64,
    pub merit_tau: f64,
    /// Zero-curvature coordinates skipped by the unit-prox baseline.
    pub skipped: u64,
    /// Some cell was written by two distinct workers (audit mode).
    pub ownership_violation: bool,
}

#[derive(Clone, Debug)]
pub struct Trace<S> {
    pub rows: Vec<TraceRow<S>>,
    /// (k, ‖M_F(x)‖²) samples when probing is on.
    pub probes: Vec<(u64, S)>,
    pub reason: TerminationReason,
    pub k_final: u64,
    pub delays: Option<DelayStats>,
    pub updates: Option<Vec<UpdateRecord<S>>>,
    pub meta: TraceMeta,
}

/// Delay statistics recorded by the run, when bookkeeping was enabled.
pub fn measure_delays<S>(trace: &Trace<S>) -> Option<&DelayStats> {
    trace.delays.as_ref()
}

pub struct RunOutput<S> {
    /// Final iterate, read after all workers quiesced.
    pub x: Vec<S>,
    /// Final maintained residual cells (residual mode only). Diverges from
    /// Ax−b only by accumulated rounding, which the tests bound.
    pub residual: Option<Vec<S>>,
    pub trace: Trace<S>,
}
