//! Synthetic instance generators.
//!
//! Four families: Gaussian sparse regression with the classical
//! 20√(m·ln n)·σ penalty, a dual-certificate construction with a known
//! optimum, a controlled-spectrum family built from seeded orthonormal
//! factors, and a column-normalized family for the nonconvex penalties.
//! Every generator is a pure function of its arguments; the seed fixes the
//! instance bit for bit. Sampling happens in f64 and is converted to the
//! target scalar at assembly, so f32 instances are rounded copies of the f64
//! ones.

use std::collections::BTreeMap;

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matrix::DesignMatrix;
use crate::model::{CompositeProblem, LossScale, QuadraticLoss, RegFamily, Regularizer};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// A generated problem plus whatever ground truth the construction yields.
#[derive(Clone, Debug)]
pub struct GeneratedInstance<S: Scalar> {
    pub problem: CompositeProblem<S>,
    /// Planted sparse vector, when the construction uses one.
    pub xbar: Option<Vec<S>>,
    /// Certified optimum (dual-certificate family only).
    pub xstar: Option<Vec<S>>,
    pub meta: BTreeMap<String, String>,
}

fn meta_base(generator: &str, m: usize, n: usize, seed: u64) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("generator".into(), generator.into());
    meta.insert("m".into(), m.to_string());
    meta.insert("n".into(), n.to_string());
    meta.insert("seed".into(), seed.to_string());
    meta
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Sorted positions of a uniformly random s-subset of 0..n.
fn sparse_support(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Vec<usize> {
    let mut idx = index_sample(rng, n, s).into_vec();
    idx.sort_unstable();
    idx
}

fn support_size(n: usize, nnz_percent: f64) -> Result<usize> {
    if !(nnz_percent > 0.0 && nnz_percent <= 100.0) {
        return Err(Error::Config(format!("nonzero percentage {nnz_percent} outside (0, 100]")));
    }
    let s = (nnz_percent / 100.0 * n as f64).ceil() as usize;
    if s == 0 || s > n {
        return Err(Error::Config(format!("support size {s} infeasible for n={n}")));
    }
    Ok(s)
}

/// Col-major dense matrix into the row-major layout `DesignMatrix` ingests.
fn cols_to_rows<S: Scalar>(m: usize, n: usize, cols: &[f64]) -> Vec<S> {
    let mut rows = vec![S::zero(); m * n];
    for j in 0..n {
        for i in 0..m {
            rows[i * n + j] = S::c(cols[j * m + i]);
        }
    }
    rows
}

fn matvec_cols(m: usize, n: usize, cols: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for j in 0..n {
        let xj = x[j];
        if xj != 0.0 {
            let col = &cols[j * m..(j + 1) * m];
            for i in 0..m {
                out[i] += col[i] * xj;
            }
        }
    }
    out
}

fn col_dot(m: usize, cols: &[f64], j: usize, v: &[f64]) -> f64 {
    cols[j * m..(j + 1) * m].iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Gaussian design, planted s-sparse signal, Gaussian noise of standard
/// deviation `sigma`, penalty 20√(m·ln n)·σ (natural log; recorded in meta).
/// Loss is the ½‖Ax−b‖² convention.
pub fn gen_liu_wright<S: Scalar>(
    m: usize,
    n: usize,
    s: usize,
    sigma: f64,
    seed: u64,
) -> Result<GeneratedInstance<S>> {
    if m == 0 || n == 0 || s > n {
        return Err(Error::Dimension(format!("m={m}, n={n}, s={s}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Config(format!("sigma {sigma} must be nonnegative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = gaussian_vec(&mut rng, m * n, 1.0);
    let support = sparse_support(&mut rng, n, s);
    let mut xbar = vec![0.0; n];
    for &j in &support {
        xbar[j] = rng.sample::<f64, _>(StandardNormal);
    }
    let noise = gaussian_vec(&mut rng, m, sigma);

    let lambda = 20.0 * (m as f64 * (n as f64).ln()).sqrt() * sigma;
    let design = DesignMatrix::from_dense_rows(m, n, &cols_to_rows::<S>(m, n, &cols))?;
    let xbar_s: Vec<S> = xbar.iter().map(|&v| S::c(v)).collect();
    let mut b = vec![S::zero(); m];
    design.matvec(&xbar_s, &mut b);
    for (bi, ei) in b.iter_mut().zip(&noise) {
        *bi = *bi + S::c(*ei);
    }

    let loss = QuadraticLoss::new(design, b, LossScale::Half)?;
    let problem = CompositeProblem::new(loss, Regularizer::l1(S::c(lambda)));

    let mut meta = meta_base("liu_wright", m, n, seed);
    meta.insert("s".into(), s.to_string());
    meta.insert("sigma".into(), format!("{sigma:e}"));
    meta.insert("lambda".into(), format!("{lambda:.17e}"));
    meta.insert("lambda_rule".into(), "20*sqrt(m*ln(n))*sigma".into());
    meta.insert("log_base".into(), "natural".into());
    Ok(GeneratedInstance { problem, xbar: Some(xbar_s), xstar: None, meta })
}

/// Instance with a certified optimum, built from a dual certificate.
///
/// Start from a uniform[-1,1] design B and a unit-norm dual vector y. Columns
/// whose correlation v_j = b_jᵀy is largest in magnitude become the support
/// and are rescaled so a_jᵀy = λ·sign(v_j) exactly; off-support columns with
/// |v_j| > λ are shrunk below the threshold. With x* supported there (signs
/// matching v) and b = A·x* + y, the gradient at x* is -Aᵀy, which satisfies
/// the ℓ1 optimality conditions by construction. The certificate is checked
/// at generation time and the optimal value is stored on the problem.
pub fn gen_nesterov<S: Scalar>(
    m: usize,
    n: usize,
    nnz_percent: f64,
    seed: u64,
) -> Result<GeneratedInstance<S>> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("m={m}, n={n}")));
    }
    let s = support_size(n, nnz_percent)?;
    let lambda = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut cols: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut y: Vec<f64> = gaussian_vec(&mut rng, m, 1.0);
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm > 0.0, "degenerate dual vector");
    for v in &mut y {
        *v /= norm;
    }

    let v: Vec<f64> = (0..n).map(|j| col_dot(m, &cols, j, &y)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        v[b].abs().partial_cmp(&v[a].abs()).unwrap().then(a.cmp(&b))
    });
    let support = &order[..s];
    let mut on_support = vec![false; n];
    for &j in support {
        assert!(v[j] != 0.0, "zero correlation on a support column");
        on_support[j] = true;
    }

    for j in 0..n {
        let scale = if on_support[j] {
            lambda / v[j].abs()
        } else if v[j].abs() > lambda {
            lambda * rng.random::<f64>() / v[j].abs()
        } else {
            1.0
        };
        if scale != 1.0 {
            for e in &mut cols[j * m..(j + 1) * m] {
                *e *= scale;
            }
        }
    }

    let mut xstar = vec![0.0; n];
    for &j in support {
        // magnitude in (0, 1], so the planted support is exact
        xstar[j] = (1.0 - rng.random::<f64>()) * v[j].signum();
    }
    let mut b = matvec_cols(m, n, &cols, &xstar);
    for (bi, yi) in b.iter_mut().zip(&y) {
        *bi += yi;
    }

    // certificate check: gradient of ½‖Ax−b‖² at x* is -Aᵀy
    for j in 0..n {
        let g = -col_dot(m, &cols, j, &y);
        if xstar[j] != 0.0 {
            let r = (g + lambda * xstar[j].signum()).abs();
            assert!(r <= 1e-8, "optimality violated on support: {r}");
        } else {
            assert!(g.abs() <= lambda + 1e-8, "optimality violated off support: {g}");
        }
    }

    let design = DesignMatrix::from_dense_rows(m, n, &cols_to_rows::<S>(m, n, &cols))?;
    let b_s: Vec<S> = b.iter().map(|&v| S::c(v)).collect();
    let xstar_s: Vec<S> = xstar.iter().map(|&v| S::c(v)).collect();
    let loss = QuadraticLoss::new(design, b_s, LossScale::Half)?;
    let problem = CompositeProblem::new(loss, Regularizer::l1(S::c(lambda)));
    let fstar = problem.objective(&xstar_s);
    let problem = problem.with_fstar(fstar);

    let mut meta = meta_base("nesterov", m, n, seed);
    meta.insert("s".into(), s.to_string());
    meta.insert("nnz_percent".into(), format!("{nnz_percent}"));
    meta.insert("lambda".into(), format!("{lambda:.17e}"));
    Ok(GeneratedInstance { problem, xbar: None, xstar: Some(xstar_s), meta })
}

/// Controlled-spectrum design: A = U·diag(σ)·Vᵀ with orthonormal U, V from
/// seeded Gaussians (modified Gram-Schmidt, two passes) and σ log-spaced from
/// 1 down to 1/√cond_target, so the Gram matrix's nonzero spectrum has
/// condition number exactly cond_target. λ = 1.
pub fn gen_gondzio<S: Scalar>(
    m: usize,
    n: usize,
    cond_target: f64,
    nnz_percent: f64,
    seed: u64,
) -> Result<GeneratedInstance<S>> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("m={m}, n={n}")));
    }
    if n > 2000 {
        return Err(Error::Config(format!(
            "n={n} beyond the dense spectrum-controlled construction (limit 2000)"
        )));
    }
    if !(cond_target >= 1.0) {
        return Err(Error::Config(format!("condition target {cond_target} must be >= 1")));
    }
    let r = m.min(n);
    if cond_target > 1.0 && r < 2 {
        return Err(Error::Config("a single singular value cannot carry a condition number".into()));
    }
    let s = support_size(n, nnz_percent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let u = mgs_orthonormal(&mut rng, m, r);
    let v = mgs_orthonormal(&mut rng, n, r);
    let sigma = log_spaced_singular_values(r, cond_target);

    // A[i,j] = Σ_k u[i,k] σ_k v[j,k], assembled column by column
    let mut cols = vec![0.0; m * n];
    for j in 0..n {
        let col = &mut cols[j * m..(j + 1) * m];
        for k in 0..r {
            let w = sigma[k] * v[k * n + j];
            if w != 0.0 {
                let uk = &u[k * m..(k + 1) * m];
                for i in 0..m {
                    col[i] += w * uk[i];
                }
            }
        }
    }

    let support = sparse_support(&mut rng, n, s);
    let mut xbar = vec![0.0; n];
    for &j in &support {
        xbar[j] = rng.sample::<f64, _>(StandardNormal);
    }
    let noise_sigma = 1e-3;
    let noise = gaussian_vec(&mut rng, m, noise_sigma);
    let mut b = matvec_cols(m, n, &cols, &xbar);
    for (bi, ei) in b.iter_mut().zip(&noise) {
        *bi += ei;
    }

    let lambda = 1.0;
    let design = DesignMatrix::from_dense_rows(m, n, &cols_to_rows::<S>(m, n, &cols))?;
    let b_s: Vec<S> = b.iter().map(|&x| S::c(x)).collect();
    let xbar_s: Vec<S> = xbar.iter().map(|&x| S::c(x)).collect();
    let loss = QuadraticLoss::new(design, b_s, LossScale::Half)?;
    let problem = CompositeProblem::new(loss, Regularizer::l1(S::c(lambda)));

    let mut meta = meta_base("gondzio", m, n, seed);
    meta.insert("s".into(), s.to_string());
    meta.insert("nnz_percent".into(), format!("{nnz_percent}"));
    meta.insert("cond_target".into(), format!("{cond_target:e}"));
    meta.insert("noise_sigma".into(), format!("{noise_sigma:e}"));
    meta.insert("lambda".into(), format!("{lambda:.17e}"));
    Ok(GeneratedInstance { problem, xbar: Some(xbar_s), xstar: None, meta })
}

/// σ_k log-spaced over [1/√cond, 1], largest first; σ_0/σ_{r-1} = √cond so
/// the Gram spectrum spans exactly cond.
fn log_spaced_singular_values(r: usize, cond: f64) -> Vec<f64> {
    let half_log = 0.5 * cond.ln();
    (0..r)
        .map(|k| {
            if r == 1 {
                1.0
            } else {
                (-half_log * k as f64 / (r - 1) as f64).exp()
            }
        })
        .collect()
}

/// Column-major matrix (rows × cols) with orthonormal columns, from a seeded
/// Gaussian draw orthonormalized by modified Gram-Schmidt run twice.
fn mgs_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    assert!(cols <= rows, "cannot orthonormalize {cols} columns in {rows} dimensions");
    let mut q = gaussian_vec(rng, rows * cols, 1.0);
    for _pass in 0..2 {
        for j in 0..cols {
            for k in 0..j {
                let dot: f64 = (0..rows).map(|i| q[k * rows + i] * q[j * rows + i]).sum();
                for i in 0..rows {
                    q[j * rows + i] -= dot * q[k * rows + i];
                }
            }
            let norm: f64 = (0..rows).map(|i| q[j * rows + i] * q[j * rows + i]).sum::<f64>().sqrt();
            assert!(norm > 1e-12, "rank-deficient Gaussian draw");
            for i in 0..rows {
                q[j * rows + i] /= norm;
            }
        }
    }
    q
}

/// Column-normalized Gaussian design for the nonconvex penalties.
///
/// Same data pipeline for every family: A standard normal with each column
/// scaled to unit 2-norm ("normalized to one" read as column norms, noted in
/// meta), xbar standard normal on a ⌈nnz_percent·n/100⌉-sized support, noise
/// σ = 0.1, loss ‖Ax−b‖² (no ½). The regularizer is attached after all data
/// draws, so one seed yields identical (A, b, xbar) across families. λ
/// defaults to 0.1·‖∇loss(0)‖_∞ scaled by the penalty's slope at the origin;
/// the rule is recorded in meta.
pub fn gen_nonconvex_sparse<S: Scalar>(
    m: usize,
    n: usize,
    nnz_percent: f64,
    seed: u64,
    family: RegFamily,
    theta: f64,
) -> Result<GeneratedInstance<S>> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("m={m}, n={n}")));
    }
    let s = support_size(n, nnz_percent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut cols = gaussian_vec(&mut rng, m * n, 1.0);
    for j in 0..n {
        let col = &mut cols[j * m..(j + 1) * m];
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "zero column in Gaussian draw");
        for e in col.iter_mut() {
            *e /= norm;
        }
    }
    let support = sparse_support(&mut rng, n, s);
    let mut xbar = vec![0.0; n];
    for &j in &support {
        xbar[j] = rng.sample::<f64, _>(StandardNormal);
    }
    let noise = gaussian_vec(&mut rng, m, 0.1);
    let mut b = matvec_cols(m, n, &cols, &xbar);
    for (bi, ei) in b.iter_mut().zip(&noise) {
        *bi += ei;
    }

    // slope of the penalty at the origin; 1 for the plain ℓ1 norm
    let slope = match family {
        RegFamily::L1 => 1.0,
        RegFamily::Exp => theta,
        RegFamily::Log => theta / (1.0 + theta).ln(),
    };
    let grad0_inf = (0..n)
        .map(|j| 2.0 * col_dot(m, &cols, j, &b).abs())
        .fold(0.0f64, f64::max);
    let lambda = 0.1 * grad0_inf / slope;

    let design = DesignMatrix::from_dense_rows(m, n, &cols_to_rows::<S>(m, n, &cols))?;
    let b_s: Vec<S> = b.iter().map(|&x| S::c(x)).collect();
    let xbar_s: Vec<S> = xbar.iter().map(|&x| S::c(x)).collect();
    let loss = QuadraticLoss::new(design, b_s, LossScale::Full)?;
    let reg = Regularizer::new(family, S::c(lambda), Some(S::c(theta)))?;
    let problem = CompositeProblem::new(loss, reg);

    let mut meta = meta_base("nonconvex_sparse", m, n, seed);
    meta.insert("s".into(), s.to_string());
    meta.insert("nnz_percent".into(), format!("{nnz_percent}"));
    meta.insert("family".into(), family.name().into());
    meta.insert("theta".into(), format!("{theta}"));
    meta.insert("sigma".into(), "1e-1".into());
    meta.insert("lambda".into(), format!("{lambda:.17e}"));
    meta.insert("lambda_rule".into(), "0.1*max|grad loss(0)|/origin_slope".into());
    meta.insert("column_norm".into(), "unit (interpretation of normalized values)".into());
    Ok(GeneratedInstance { problem, xbar: Some(xbar_s), xstar: None, meta })
}
