//! Problem instances: quadratic loss, separable regularizers (with the DC
//! decomposition of the nonconvex families), and the composite objective.

use crate::matrix::DesignMatrix;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Loss convention: `Half` is ½‖Ax−b‖² (standard LASSO form), `Full` is
/// ‖Ax−b‖² (the convention the nonconvex experiments use). The flag travels
/// with every instance so objective values and F* references stay comparable.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LossScale {
    Half,
    Full,
}

impl LossScale {
    /// Multiplier on ‖Ax−b‖² in the objective.
    #[inline]
    pub fn loss_factor<S: Scalar>(self) -> S {
        match self {
            LossScale::Half => S::c(0.5),
            LossScale::Full => S::one(),
        }
    }

    /// Multiplier on AᵀAx − Aᵀb in the gradient (2 × loss factor).
    #[inline]
    pub fn grad_factor<S: Scalar>(self) -> S {
        match self {
            LossScale::Half => S::one(),
            LossScale::Full => S::c(2.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossScale::Half => "half",
            LossScale::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(LossScale::Half),
            "full" => Ok(LossScale::Full),
            other => Err(Error::Format(format!("unknown loss scale '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RegFamily {
    L1,
    Exp,
    Log,
}

impl RegFamily {
    pub fn name(self) -> &'static str {
        match self {
            RegFamily::L1 => "l1",
            RegFamily::Exp => "exp",
            RegFamily::Log => "log",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(RegFamily::L1),
            "exp" => Ok(RegFamily::Exp),
            "log" => Ok(RegFamily::Log),
            other => Err(Error::Format(format!("unknown regularizer '{other}'"))),
        }
    }
}

/// Separable penalty G(x) = λ Σᵢ h(xᵢ).
///
/// For the nonconvex families h splits as h = h⁺ − h⁻ with h⁺(x) = η(θ)·|x|
/// convex and h⁻ convex with a Lipschitz gradient; the solver linearizes h⁻
/// and keeps h⁺ in the proximal part. η is θ for `Exp` and θ/ln(1+θ) for
/// `Log`, which makes h⁻ = η|x| − h nonnegative and C¹.
#[derive(Clone, Copy, Debug)]
pub enum Regularizer<S> {
    L1 { lambda: S },
    Exp { lambda: S, theta: S },
    Log { lambda: S, theta: S },
}

impl<S: Scalar> Regularizer<S> {
    pub fn l1(lambda: S) -> Self {
        assert!(lambda >= S::zero() && lambda.is_finite(), "lambda >= 0");
        Regularizer::L1 { lambda }
    }

    pub fn exp(lambda: S, theta: S) -> Self {
        assert!(lambda >= S::zero() && lambda.is_finite(), "lambda >= 0");
        assert!(theta > S::zero() && theta.is_finite(), "theta > 0");
        Regularizer::Exp { lambda, theta }
    }

    pub fn log(lambda: S, theta: S) -> Self {
        assert!(lambda >= S::zero() && lambda.is_finite(), "lambda >= 0");
        assert!(theta > S::zero() && theta.is_finite(), "theta > 0");
        Regularizer::Log { lambda, theta }
    }

    pub fn new(family: RegFamily, lambda: S, theta: Option<S>) -> Result<Self> {
        match family {
            RegFamily::L1 => Ok(Self::l1(lambda)),
            RegFamily::Exp => Ok(Self::exp(
                lambda,
                theta.ok_or_else(|| Error::Config("exp family needs theta".into()))?,
            )),
            RegFamily::Log => Ok(Self::log(
                lambda,
                theta.ok_or_else(|| Error::Config("log family needs theta".into()))?,
            )),
        }
    }

    pub fn family(&self) -> RegFamily {
        match self {
            Regularizer::L1 { .. } => RegFamily::L1,
            Regularizer::Exp { .. } => RegFamily::Exp,
            Regularizer::Log { .. } => RegFamily::Log,
        }
    }

    pub fn lambda(&self) -> S {
        match self {
            Regularizer::L1 { lambda }
            | Regularizer::Exp { lambda, .. }
            | Regularizer::Log { lambda, .. } => *lambda,
        }
    }

    pub fn theta(&self) -> Option<S> {
        match self {
            Regularizer::L1 { .. } => None,
            Regularizer::Exp { theta, .. } | Regularizer::Log { theta, .. } => Some(*theta),
        }
    }

    /// Same penalty with a different weight; the λ sweep uses this.
    pub fn with_lambda(&self, lambda: S) -> Self {
        match *self {
            Regularizer::L1 { .. } => Self::l1(lambda),
            Regularizer::Exp { theta, .. } => Self::exp(lambda, theta),
            Regularizer::Log { theta, .. } => Self::log(lambda, theta),
        }
    }

    /// Slope of the convex majorant h⁺ = η|x|. Zero for L1 by convention
    /// (no DC split exists or is needed).
    pub fn eta(&self) -> S {
        match self {
            Regularizer::L1 { .. } => S::zero(),
            Regularizer::Exp { theta, .. } => *theta,
            Regularizer::Log { theta, .. } => *theta / (S::one() + *theta).ln(),
        }
    }

    /// Scalar penalty shape h(x) (without λ).
    pub fn h(&self, x: S) -> S {
        match self {
            Regularizer::L1 { .. } => x.abs(),
            Regularizer::Exp { theta, .. } => S::one() - (-*theta * x.abs()).exp(),
            Regularizer::Log { theta, .. } => {
                (S::one() + *theta * x.abs()).ln() / (S::one() + *theta).ln()
            }
        }
    }

    /// h⁻(x) = η|x| − h(x); nonnegative and convex for Exp/Log.
    pub fn hminus(&self, x: S) -> S {
        self.eta() * x.abs() - self.h(x)
    }

    /// d/dx h⁻(x). C¹ everywhere, exactly 0 at the origin, odd.
    ///
    /// Panics for the L1 family, which has no DC split.
    pub fn hminus_gradient(&self, x: S) -> S {
        match self {
            Regularizer::L1 { .. } => panic!("hminus_gradient: L1 has no DC decomposition"),
            Regularizer::Exp { theta, .. } => {
                // eta = theta here
                x.signum() * *theta * (S::one() - (-*theta * x.abs()).exp())
            }
            Regularizer::Log { theta, .. } => {
                if x == S::zero() {
                    return S::zero();
                }
                let ln1t = (S::one() + *theta).ln();
                x.signum() * (*theta / ln1t - *theta / ((S::one() + *theta * x.abs()) * ln1t))
            }
        }
    }

    /// Upper bound on h⁻'' (the Lipschitz constant of `hminus_gradient`);
    /// 0 for L1.
    pub fn hminus_curvature_bound(&self) -> S {
        match self {
            Regularizer::L1 { .. } => S::zero(),
            Regularizer::Exp { theta, .. } => *theta * *theta,
            Regularizer::Log { theta, .. } => *theta * *theta / (S::one() + *theta).ln(),
        }
    }

    /// G(x) = λ Σ h(xᵢ).
    pub fn penalty(&self, x: &[S]) -> S {
        let l = self.lambda();
        x.iter().fold(S::zero(), |acc, &v| acc + l * self.h(v))
    }
}

/// Default column-count limit under which the Gram matrix is precomputed.
pub const GRAM_AUTO_LIMIT: usize = 4096;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GramPolicy {
    /// Precompute AᵀA when n ≤ [`GRAM_AUTO_LIMIT`].
    Auto,
    Force,
    Never,
}

/// The smooth part s‖Ax−b‖² together with its offline precomputations.
///
/// Two evaluation modes exist. With a precomputed Gram matrix, a partial
/// gradient is one row dot product against the current iterate. Without it,
/// partial gradients come from a maintained residual r = Ax−b (one column
/// dot product); the engine owns the residual cells.
#[derive(Clone, Debug)]
pub struct QuadraticLoss<S> {
    a: DesignMatrix<S>,
    b: Vec<S>,
    scale: LossScale,
    gram: Option<Vec<S>>,
    gram_diag: Vec<S>,
    atb: Vec<S>,
    btb: S,
}

impl<S: Scalar> QuadraticLoss<S> {
    pub fn new(a: DesignMatrix<S>, b: Vec<S>, scale: LossScale) -> Result<Self> {
        Self::with_policy(a, b, scale, GramPolicy::Auto)
    }

    pub fn with_policy(
        a: DesignMatrix<S>,
        b: Vec<S>,
        scale: LossScale,
        policy: GramPolicy,
    ) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::Dimension(format!(
                "b has length {}, matrix has {} rows",
                b.len(),
                a.rows()
            )));
        }
        let gram = match policy {
            GramPolicy::Force => Some(a.gram()),
            GramPolicy::Never => None,
            GramPolicy::Auto => (a.cols() <= GRAM_AUTO_LIMIT).then(|| a.gram()),
        };
        let gram_diag = a.gram_diag();
        let atb = a.t_matvec(&b);
        let btb = b.iter().fold(S::zero(), |s, &v| s + v * v);
        Ok(QuadraticLoss {
            a,
            b,
            scale,
            gram,
            gram_diag,
            atb,
            btb,
        })
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn scale(&self) -> LossScale {
        self.scale
    }

    pub fn design(&self) -> &DesignMatrix<S> {
        &self.a
    }

    pub fn rhs(&self) -> &[S] {
        &self.b
    }

    pub fn has_gram(&self) -> bool {
        self.gram.is_some()
    }

    /// Row i of AᵀA when precomputed (the matrix is symmetric, so this is a
    /// contiguous column slice).
    pub fn gram_row(&self, i: usize) -> Option<&[S]> {
        let n = self.n();
        self.gram.as_ref().map(|g| &g[i * n..(i + 1) * n])
    }

    pub fn gram_diag(&self) -> &[S] {
        &self.gram_diag
    }

    pub fn atb(&self) -> &[S] {
        &self.atb
    }

    /// Curvature of the scalar coordinate quadratic: 2s·(AᵀA)ᵢᵢ.
    #[inline]
    pub fn curvature(&self, i: usize) -> S {
        self.scale.grad_factor::<S>() * self.gram_diag[i]
    }

    /// r = Ax − b.
    pub fn residual(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n(), "residual: dimension mismatch");
        let mut r = vec![S::zero(); self.m()];
        self.a.matvec(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri = *ri - *bi;
        }
        r
    }

    /// s‖Ax−b‖², evaluated through the residual (no Gram cancellation).
    pub fn smooth_value(&self, x: &[S]) -> S {
        let r = self.residual(x);
        self.scale.loss_factor::<S>() * r.iter().fold(S::zero(), |s, &v| s + v * v)
    }

    /// Smooth value through the Gram identity xᵀGx − 2xᵀAᵀb + bᵀb. Cheaper
    /// than a matvec when the Gram matrix is resident but subject to
    /// cancellation near zero residual; used only as a progress proxy.
    pub fn smooth_value_gram(&self, x: &[S]) -> Option<S> {
        let n = self.n();
        self.gram.as_ref().map(|g| {
            let mut quad = S::zero();
            for (i, &xi) in x.iter().enumerate() {
                if xi != S::zero() {
                    let row = &g[i * n..(i + 1) * n];
                    let mut acc = S::zero();
                    for (a, v) in row.iter().zip(x) {
                        acc = acc + *a * *v;
                    }
                    quad = quad + xi * acc;
                }
            }
            let cross = x
                .iter()
                .zip(&self.atb)
                .fold(S::zero(), |s, (&xi, &ti)| s + xi * ti);
            self.scale.loss_factor::<S>() * (quad - S::c(2.0) * cross + self.btb)
        })
    }

    /// Full gradient 2s·(AᵀAx − Aᵀb). The Gram path assembles the same row
    /// dot products `partial_gradient` uses; the matrix-free path reuses one
    /// residual, so entries agree bitwise with `partial_gradient_residual`.
    pub fn smooth_gradient(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n(), "smooth_gradient: dimension mismatch");
        if self.gram.is_some() {
            (0..self.n()).map(|i| self.partial_gradient(x, i)).collect()
        } else {
            let r = self.residual(x);
            (0..self.n())
                .map(|i| self.partial_gradient_residual(&r, i))
                .collect()
        }
    }

    /// (∇loss(snapshot))ᵢ. One Gram-row dot product in Gram mode. Without a
    /// Gram matrix this has to rebuild the residual, which costs a matvec;
    /// the engine's hot path never calls it in that mode and uses
    /// `partial_gradient_residual` against the maintained residual instead.
    pub fn partial_gradient(&self, snapshot: &[S], i: usize) -> S {
        assert!(i < self.n(), "partial_gradient: index out of range");
        assert_eq!(snapshot.len(), self.n(), "partial_gradient: dim mismatch");
        match &self.gram {
            Some(g) => {
                let n = self.n();
                let row = &g[i * n..(i + 1) * n];
                let mut acc = S::zero();
                for (a, v) in row.iter().zip(snapshot) {
                    acc = acc + *a * *v;
                }
                self.scale.grad_factor::<S>() * (acc - self.atb[i])
            }
            None => {
                let r = self.residual(snapshot);
                self.partial_gradient_residual(&r, i)
            }
        }
    }

    /// (∇loss)ᵢ from a maintained residual r = Ax−b: 2s·(aᵢᵀr). Cost is the
    /// number of nonzeros of column i.
    #[inline]
    pub fn partial_gradient_residual(&self, residual: &[S], i: usize) -> S {
        self.scale.grad_factor::<S>() * self.a.col(i).dot(residual)
    }

    /// Power-iteration estimate of 2s·λmax(AᵀA), the Lipschitz constant of
    /// the smooth gradient. Deterministic start vector; exact for 1-D.
    pub fn spectral_bound(&self, iters: usize) -> S {
        let n = self.n();
        assert!(iters >= 1);
        // splitmix64 start vector: deterministic, unstructured
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        let mut v: Vec<S> = (0..n)
            .map(|_| S::c((next() >> 11) as f64 / (1u64 << 53) as f64 - 0.5))
            .collect();
        let norm = |u: &[S]| u.iter().fold(S::zero(), |s, &a| s + a * a).sqrt();
        let nv = norm(&v);
        for e in v.iter_mut() {
            *e = *e / nv;
        }
        let mut lam = S::zero();
        let mut w = vec![S::zero(); self.m()];
        for _ in 0..iters {
            // u = AᵀA v
            let u = match &self.gram {
                Some(g) => {
                    let mut u = vec![S::zero(); n];
                    for (i, ui) in u.iter_mut().enumerate() {
                        let row = &g[i * n..(i + 1) * n];
                        let mut acc = S::zero();
                        for (a, x) in row.iter().zip(&v) {
                            acc = acc + *a * *x;
                        }
                        *ui = acc;
                    }
                    u
                }
                None => {
                    self.a.matvec(&v, &mut w);
                    self.a.t_matvec(&w)
                }
            };
            lam = u.iter().zip(&v).fold(S::zero(), |s, (&a, &b)| s + a * b);
            let nu = norm(&u);
            if nu == S::zero() {
                // A is the zero matrix
                return S::zero();
            }
            v = u.into_iter().map(|a| a / nu).collect();
        }
        self.scale.grad_factor::<S>() * lam
    }
}

/// F(x) = loss(x) + λ Σ h(xᵢ), with an optional reference optimum F*.
/// Blocks are scalar coordinates throughout (N = n).
#[derive(Clone, Debug)]
pub struct CompositeProblem<S> {
    pub loss: QuadraticLoss<S>,
    pub reg: Regularizer<S>,
    pub fstar: Option<S>,
}

impl<S: Scalar> CompositeProblem<S> {
    pub fn new(loss: QuadraticLoss<S>, reg: Regularizer<S>) -> Self {
        CompositeProblem {
            loss,
            reg,
            fstar: None,
        }
    }

    pub fn with_fstar(mut self, fstar: S) -> Self {
        self.fstar = Some(fstar);
        self
    }

    pub fn n(&self) -> usize {
        self.loss.n()
    }

    pub fn objective(&self, x: &[S]) -> S {
        assert_eq!(x.len(), self.n(), "objective: dimension mismatch");
        let v = self.loss.smooth_value(x) + self.reg.penalty(x);
        if let Some(fs) = self.fstar {
            debug_assert!(
                !(v.is_finite() && v < fs - S::c(1e-9) * (S::one() + fs.abs())),
                "objective {v} undercuts the reference optimum {fs}"
            );
        }
        v
    }
}
