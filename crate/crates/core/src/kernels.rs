//! Scalar best responses in closed form, soft-thresholding, and the quality
//! measures (proximal-gradient residual, ∞-norm merit, NMSE, relative error).
//! Everything here is a pure function, callable concurrently from workers.

use crate::model::{CompositeProblem, QuadraticLoss, RegFamily, Regularizer};
use crate::scalar::Scalar;

/// sign(v)·max(|v|−t, 0); exactly zero when |v| ≤ t.
///
/// Panics if `t` is negative.
#[inline]
pub fn soft_threshold<S: Scalar>(v: S, t: S) -> S {
    assert!(t >= S::zero(), "soft_threshold: negative threshold");
    let mag = v.abs() - t;
    if mag <= S::zero() {
        S::zero()
    } else {
        v.signum() * mag
    }
}

/// Data for one scalar subproblem, read from a (possibly stale) snapshot.
/// `q_i` is the coordinate curvature 2s·(AᵀA)ᵢᵢ; `tau` is the proximal
/// weight. The surrogate is strongly convex: q_i + tau > 0.
#[derive(Clone, Copy, Debug)]
pub struct BestResponseInputs<S> {
    pub xtilde_i: S,
    pub grad_i: S,
    pub q_i: S,
    pub tau: S,
}

impl<S: Scalar> BestResponseInputs<S> {
    #[inline]
    fn denom(&self) -> S {
        // tau = 0 is legal when the curvature itself is positive (the
        // unit-stepsize prox baseline runs that way)
        debug_assert!(self.tau >= S::zero(), "tau must be nonnegative");
        let d = self.q_i + self.tau;
        debug_assert!(d > S::zero(), "surrogate not strongly convex");
        d
    }
}

/// Minimizer of  grad·(x−x̃) + ½(q+τ)(x−x̃)² + λ|x|.
#[inline]
pub fn best_response_l1<S: Scalar>(b: BestResponseInputs<S>, reg: &Regularizer<S>) -> S {
    assert!(
        reg.family() == RegFamily::L1,
        "best_response_l1: family mismatch"
    );
    let d = b.denom();
    let xhat = soft_threshold(b.xtilde_i - b.grad_i / d, reg.lambda() / d);
    debug_assert!(descent_holds(&b, xhat, b.grad_i, reg.lambda(), S::one()));
    xhat
}

/// Minimizer of the DC subproblem: the concave part h⁻ is linearized at x̃
/// (shifting the gradient), the convex majorant λη|x| sets the threshold.
#[inline]
pub fn best_response_dc<S: Scalar>(b: BestResponseInputs<S>, reg: &Regularizer<S>) -> S {
    assert!(
        reg.family() != RegFamily::L1,
        "best_response_dc: family mismatch"
    );
    let d = b.denom();
    let lambda = reg.lambda();
    let shifted = b.grad_i - lambda * reg.hminus_gradient(b.xtilde_i);
    let eta = reg.eta();
    let xhat = soft_threshold(b.xtilde_i - shifted / d, lambda * eta / d);
    debug_assert!(descent_holds(&b, xhat, shifted, lambda * eta, S::one()));
    xhat
}

/// Family dispatch.
#[inline]
pub fn best_response<S: Scalar>(reg: &Regularizer<S>, b: BestResponseInputs<S>) -> S {
    match reg.family() {
        RegFamily::L1 => best_response_l1(b, reg),
        _ => best_response_dc(b, reg),
    }
}

// Runtime diagnostic (debug builds): the best response must descend
//   geff·(x̂−x̃) + w(|x̂|−|x̃|) ≤ −(τ/2)(x̂−x̃)²,
// a weakened form of the strong-convexity descent inequality (the full
// constant is q+τ). `geff` is the effective smooth gradient, `w` the
// effective l1 weight of the subproblem.
#[inline]
fn descent_holds<S: Scalar>(
    b: &BestResponseInputs<S>,
    xhat: S,
    geff: S,
    w: S,
    _marker: S,
) -> bool {
    if !geff.is_finite() || !b.xtilde_i.is_finite() {
        // poisoned inputs propagate; the caller's finiteness check owns them
        return true;
    }
    let step = xhat - b.xtilde_i;
    let lhs = geff * step + w * (xhat.abs() - b.xtilde_i.abs());
    let rhs = -(b.tau / S::c(2.0)) * step * step * (S::one() - S::c(1e-9));
    lhs <= rhs + S::c(1e-12) * (S::one() + lhs.abs())
}

/// M_F(x) = x − y*, where y*ᵢ solves the unit-proximal subproblem
/// min_y ∇f(x)ᵢ(y−xᵢ) + g(y) + ½(y−xᵢ)². The smooth part f carries the
/// −λh⁻ shift for DC families (matching the solver's f/G split), so
/// M_F(x) = 0 exactly at the solver's fixed points.
pub fn prox_gradient_residual<S: Scalar>(p: &CompositeProblem<S>, x: &[S]) -> Vec<S> {
    assert_eq!(x.len(), p.n(), "prox_gradient_residual: dim mismatch");
    let g = p.loss.smooth_gradient(x);
    let lambda = p.reg.lambda();
    match p.reg.family() {
        RegFamily::L1 => x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| xi - soft_threshold(xi - gi, lambda))
            .collect(),
        _ => {
            let eta = p.reg.eta();
            x.iter()
                .zip(&g)
                .map(|(&xi, &gi)| {
                    let shifted = gi - lambda * p.reg.hminus_gradient(xi);
                    xi - soft_threshold(xi - shifted, lambda * eta)
                })
                .collect()
        }
    }
}

/// ‖M_F(x)‖²₂; what the iteration-complexity experiments sample.
pub fn stationarity_sq_norm<S: Scalar>(p: &CompositeProblem<S>, x: &[S]) -> S {
    prox_gradient_residual(p, x)
        .iter()
        .fold(S::zero(), |s, &v| s + v * v)
}

/// ‖x̂(x) − x‖_∞ with zero delay and a caller-fixed τ.
pub fn merit_infinity<S: Scalar>(p: &CompositeProblem<S>, x: &[S], tau: S) -> S {
    assert_eq!(x.len(), p.n(), "merit_infinity: dim mismatch");
    assert!(tau > S::zero(), "merit_infinity: tau must be positive");
    let g = p.loss.smooth_gradient(x);
    let mut worst = S::zero();
    for i in 0..p.n() {
        let xhat = best_response(
            &p.reg,
            BestResponseInputs {
                xtilde_i: x[i],
                grad_i: g[i],
                q_i: p.loss.curvature(i),
                tau,
            },
        );
        worst = worst.max((xhat - x[i]).abs());
    }
    worst
}

/// The frozen τ used for merit curves: the median of the raw Gram diagonal.
/// Fixing τ keeps the merit comparable across iterations and runs.
pub fn merit_tau<S: Scalar>(loss: &QuadraticLoss<S>) -> S {
    let mut d: Vec<S> = loss.gram_diag().to_vec();
    assert!(!d.is_empty());
    d.sort_by(|a, b| a.partial_cmp(b).expect("gram diagonal is finite"));
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / S::c(2.0)
    }
}

/// ‖x − x̄‖² / ‖x̄‖².
///
/// Panics when x̄ = 0.
pub fn nmse<S: Scalar>(x: &[S], xbar: &[S]) -> S {
    assert_eq!(x.len(), xbar.len(), "nmse: dim mismatch");
    let denom = xbar.iter().fold(S::zero(), |s, &v| s + v * v);
    assert!(denom > S::zero(), "nmse: reference vector is zero");
    let num = x
        .iter()
        .zip(xbar)
        .fold(S::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
    num / denom
}

/// (Fx − F*)/max(1, |F*|). The unit denominator guard is this project's
/// convention and is echoed in all output metadata.
#[inline]
pub fn relative_error<S: Scalar>(fx: S, fstar: S) -> S {
    (fx - fstar) / S::one().max(fstar.abs())
}
