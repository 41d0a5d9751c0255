//! Step-size and iteration-complexity bound calculators.
//!
//! Pure formula evaluation over user-supplied constants. Nothing here is
//! estimated from data: the Lipschitz constants of the best-response map and
//! of the surrogate gradients are inputs, and the calculators' value is exact
//! evaluation plus the synchronous-case reduction checks.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Constants entering the fixed-step and iteration-complexity bounds.
///
/// `delta` is the maximum staleness (in global update counts) of any
/// coordinate a worker reads. `p_min` bounds the probability of each block
/// being selected from below, `cap_delta` bounds each (block, delay) pair's
/// probability. The synchronous uniform-random special case has
/// `delta = 0`, `p_min = cap_delta = 1/N`.
#[derive(Clone, Copy, Debug)]
pub struct ComplexityConstants<S> {
    pub rho: S,
    pub delta: u64,
    pub n_blocks: usize,
    pub l_f: S,
    pub c_tilde_f: S,
    pub l_xhat: S,
    pub l_b: S,
    pub l_e: S,
    pub p_min: S,
    pub cap_delta: S,
    pub f0: S,
    pub fstar: S,
}

impl<S: Scalar> ComplexityConstants<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > S::one()
            && self.n_blocks >= 1
            && self.l_f >= S::zero()
            && self.c_tilde_f > S::zero()
            && self.l_xhat >= S::zero()
            && self.l_b >= S::zero()
            && self.l_e >= S::zero()
            && self.p_min > S::zero()
            && self.p_min <= S::one()
            && self.cap_delta > S::zero()
            && self.cap_delta <= S::one()
            && self.f0 >= self.fstar;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid complexity constants: {self:?}")))
        }
    }

    /// The synchronous special case: zero delay, uniform selection.
    pub fn synchronous(mut self) -> Self {
        self.delta = 0;
        let inv_n = S::one() / S::c(self.n_blocks as f64);
        self.p_min = inv_n;
        self.cap_delta = inv_n;
        self
    }
}

/// ψ(ρ, δ) = Σ_{t=1..δ} ρ^{t/2}; empty sum (δ = 0) is 0.
///
/// Panics if ρ ≤ 1.
pub fn psi<S: Scalar>(rho: S, delta: u64) -> S {
    assert!(rho > S::one(), "psi: rho must exceed 1");
    let r = rho.sqrt();
    let mut sum = S::zero();
    let mut pow = S::one();
    for _ in 0..delta {
        pow = pow * r;
        sum = sum + pow;
    }
    sum
}

/// ψ′(ρ, δ) = Σ_{t=1..δ} ρ^t; empty sum is 0.
pub fn psi_prime<S: Scalar>(rho: S, delta: u64) -> S {
    assert!(rho > S::one(), "psi_prime: rho must exceed 1");
    let mut sum = S::zero();
    let mut pow = S::one();
    for _ in 0..delta {
        pow = pow * rho;
        sum = sum + pow;
    }
    sum
}

/// Largest admissible fixed step size,
/// γ_max = min{ (1−ρ⁻¹) / (2(1 + L_x̂ N (3+2ψ))) ; c_f̃ / (L_f + δψ′L_f/(2Δ)) }.
/// With L_f = 0 the second term is +∞ and the first governs.
pub fn fixed_step_bound<S: Scalar>(c: &ComplexityConstants<S>) -> S {
    let two = S::c(2.0);
    let ps = psi(c.rho, c.delta);
    let n = S::c(c.n_blocks as f64);
    let first =
        (S::one() - c.rho.recip()) / (two * (S::one() + c.l_xhat * n * (S::c(3.0) + two * ps)));
    let second = if c.l_f == S::zero() {
        S::infinity()
    } else {
        let psp = psi_prime(c.rho, c.delta);
        c.c_tilde_f / (c.l_f + S::c(c.delta as f64) * psp * c.l_f / (two * c.cap_delta))
    };
    first.min(second)
}

/// Iteration count after which the expected squared stationarity measure is
/// below ε:
/// K_ε ≤ (1/ε) · 4(1+(1+L_B+L_E)(1+L_E L_B δψ′γ²))
///        / (p_min γ (2Δ(c_f̃−γL_f) − γδψ′L_f)) · (F(x⁰)−F*).
/// Returns +∞ when the denominator is nonpositive (γ too large for these
/// constants), so grid sweeps can proceed past invalid cells.
///
/// Panics if ε ≤ 0.
pub fn k_epsilon_bound<S: Scalar>(c: &ComplexityConstants<S>, gamma: S, epsilon: S) -> S {
    assert!(epsilon > S::zero(), "k_epsilon_bound: epsilon must be positive");
    let two = S::c(2.0);
    let four = S::c(4.0);
    let psp = psi_prime(c.rho, c.delta);
    let d = S::c(c.delta as f64);
    let numer =
        four * (S::one() + (S::one() + c.l_b + c.l_e) * (S::one() + c.l_e * c.l_b * d * psp * gamma * gamma));
    let denom = c.p_min * gamma * (two * c.cap_delta * (c.c_tilde_f - gamma * c.l_f) - gamma * d * psp * c.l_f);
    if denom <= S::zero() {
        return S::infinity();
    }
    let base = numer / denom * (c.f0 - c.fstar);
    base / epsilon
}

/// One row of the speedup-regime diagnostic table.
#[derive(Clone, Copy, Debug)]
pub struct RegimeRow<S> {
    pub n_r: usize,
    pub delta: u64,
    pub gamma_max: S,
    pub gamma_used: S,
    /// K_ε·ε for the given γ (the ε-free constant).
    pub bound_times_eps: S,
    /// Both γ² terms of the bound are below 1% of their additive partners.
    pub gamma_sq_negligible: bool,
    /// γ_used ≤ γ_max for this row's δ.
    pub gamma_valid: bool,
}

/// Evaluates, over a user-supplied (cores, delay) grid, whether the chosen γ
/// stays admissible and whether the γ² terms of the complexity bound are
/// negligible; when they are, K_ε·γ is approximately a constant over the
/// grid, the regime in which more cores buy proportionally fewer iterations
/// per unit time.
pub fn speedup_regime_note<S: Scalar>(
    base: &ComplexityConstants<S>,
    gamma: S,
    grid: &[(usize, u64)],
) -> Vec<RegimeRow<S>> {
    let two = S::c(2.0);
    let hundredth = S::c(0.01);
    grid.iter()
        .map(|&(n_r, delta)| {
            let c = ComplexityConstants { delta, ..*base };
            let gamma_max = fixed_step_bound(&c);
            let psp = psi_prime(c.rho, delta);
            let d = S::c(delta as f64);
            let num_term = c.l_e * c.l_b * d * psp * gamma * gamma;
            let den_partner = two * c.cap_delta * (c.c_tilde_f - gamma * c.l_f);
            let den_term = gamma * d * psp * c.l_f;
            let negligible =
                num_term < hundredth && den_partner > S::zero() && den_term < hundredth * den_partner;
            RegimeRow {
                n_r,
                delta,
                gamma_max,
                gamma_used: gamma,
                bound_times_eps: k_epsilon_bound(&c, gamma, S::one()),
                gamma_sq_negligible: negligible,
                gamma_valid: gamma <= gamma_max,
            }
        })
        .collect()
}
