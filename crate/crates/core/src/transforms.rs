//! Exogenous sampling and the constraint systems that realize `ξ_x = t(x, ϑ)`.
//!
//! Every endogenous element is driven by an exogenous draw `ϑ` whose law does
//! not depend on the first-stage decision. Emitters append the rows that tie
//! the realized value to the decision variables; the `eval_*`/[`realize`]
//! functions compute the same value directly and serve as oracles.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assignment, LinearExpr, MipModel, ModelError, Sense, VarId, VarSpec};
use crate::rng::{RngStream, StreamId};
use crate::stats::norm_quantile;

/// Default strict-inequality slack on the probability scale.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Bound applied to standard-normal draws when truncation is requested.
pub const NORMAL_TRUNCATION: f64 = 4.0;
const ENUMERATION_LIMIT: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("sample has {got} values, expected {expected}")]
    SampleArity { expected: usize, got: usize },
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("correlation matrix is not positive semidefinite")]
    NotPsd,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Finite exogenous distribution used by the selection kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn binomial(trials: u32, p: f64) -> Self {
        let values = (0..=trials).map(f64::from).collect();
        Self { values, probs: binomial_pmf(trials, p) }
    }

    /// Inverse-CDF draw from a uniform.
    pub fn quantile(&self, u: f64) -> f64 {
        self.values[eval_discrete_inverse_unchecked(&self.probs, u)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }
}

pub fn binomial_pmf(trials: u32, p: f64) -> Vec<f64> {
    let n = trials as usize;
    let mut out = vec![0.0; n + 1];
    let mut coeff = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        if k > 0 {
            coeff *= (n - k + 1) as f64 / k as f64;
        }
        *slot = coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum StandardMember {
    Normal,
    Gev { shape: f64 },
}

/// One decision-dependent random element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EndogenousSpec {
    /// `ξ = Σ_d ϑ_d x_d` with one-hot `x` choosing among exogenous laws.
    Selection { alternatives: Vec<DiscreteDist>, x_vars: Vec<VarId> },
    DiscreteInverse { realization_values: Vec<f64>, pmf_exprs: Vec<LinearExpr> },
    Bernoulli { success_prob_expr: LinearExpr },
    BinomialConvolution { success_prob_expr: LinearExpr, trials: u32 },
    Uniform { a: LinearExpr, b: LinearExpr },
    Exponential { rate: f64 },
    LocationScale {
        loc_expr: LinearExpr,
        scale: f64,
        #[serde(default)]
        truncate: bool,
    },
    GevLocationScale { loc_expr: LinearExpr, scale: f64, shape: f64 },
}

impl EndogenousSpec {
    pub fn validate(&self) -> Result<(), TransformError> {
        let bad = |m: &str| Err(TransformError::InvalidSpec(m.to_string()));
        match self {
            EndogenousSpec::Selection { alternatives, x_vars } => {
                if alternatives.is_empty() || alternatives.len() != x_vars.len() {
                    return bad("selection needs one binary per alternative");
                }
                for d in alternatives {
                    if d.values.len() != d.probs.len() || d.values.is_empty() {
                        return bad("alternative values/probs length mismatch");
                    }
                    check_pmf(&d.probs)?;
                }
                Ok(())
            }
            EndogenousSpec::DiscreteInverse { realization_values, pmf_exprs } => {
                if realization_values.is_empty() || realization_values.len() != pmf_exprs.len() {
                    return bad("one pmf expression per realization value is required");
                }
                Ok(())
            }
            EndogenousSpec::Bernoulli { .. } => Ok(()),
            EndogenousSpec::BinomialConvolution { trials, .. } => {
                if *trials == 0 {
                    return bad("trials must be at least 1");
                }
                Ok(())
            }
            EndogenousSpec::Uniform { .. } => Ok(()),
            EndogenousSpec::Exponential { rate } => {
                if !(*rate > 0.0) {
                    return bad("rate must be positive");
                }
                Ok(())
            }
            EndogenousSpec::LocationScale { scale, .. } | EndogenousSpec::GevLocationScale { scale, .. } => {
                if !(*scale >= 0.0) {
                    return bad("scale must be nonnegative");
                }
                Ok(())
            }
        }
    }

    /// Number of exogenous coordinates per draw.
    pub fn arity(&self) -> usize {
        match self {
            EndogenousSpec::Selection { alternatives, .. } => alternatives.len(),
            EndogenousSpec::BinomialConvolution { trials, .. } => *trials as usize,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSample {
    pub values: Vec<f64>,
    pub stream_id: StreamId,
}

/// Rows and variables appended to a model by one emitter call.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformEmission {
    pub new_vars: Vec<VarId>,
    pub new_rows: Range<usize>,
    pub value_expr: LinearExpr,
    /// The sample lies within ε of a reachable breakpoint; the completion may
    /// be wrong or missing for some decisions.
    pub degenerate: bool,
}

impl TransformEmission {
    fn pure(value_expr: LinearExpr) -> Self {
        Self { new_vars: Vec::new(), new_rows: 0..0, value_expr, degenerate: false }
    }

    pub fn var_specs<'a>(&self, model: &'a MipModel) -> Vec<&'a VarSpec> {
        self.new_vars.iter().map(|&v| model.var(v)).collect()
    }
}

fn check_pmf(pmf: &[f64]) -> Result<(), TransformError> {
    if pmf.is_empty() {
        return Err(TransformError::InvalidPmf("empty".into()));
    }
    if pmf.iter().any(|&p| !(p >= -1e-12)) {
        return Err(TransformError::InvalidPmf("negative or NaN mass".into()));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(TransformError::InvalidPmf(format!("masses sum to {total}")));
    }
    Ok(())
}

pub fn sample_exogenous(spec: &EndogenousSpec, rng: &mut RngStream, element: u64) -> Result<ExogenousSample, TransformError> {
    spec.validate()?;
    let values = match spec {
        EndogenousSpec::Selection { alternatives, .. } => {
            alternatives.iter().enumerate().map(|(d, dist)| dist.quantile(rng.uniform(element, d as u64))).collect()
        }
        EndogenousSpec::BinomialConvolution { trials, .. } => (0..*trials as u64).map(|t| rng.uniform(element, t)).collect(),
        EndogenousSpec::LocationScale { truncate, .. } => {
            let mut z = sample_standard_member(StandardMember::Normal, rng, element);
            if *truncate {
                z = z.clamp(-NORMAL_TRUNCATION, NORMAL_TRUNCATION);
            }
            vec![z]
        }
        EndogenousSpec::GevLocationScale { shape, .. } => {
            vec![sample_standard_member(StandardMember::Gev { shape: *shape }, rng, element)]
        }
        _ => vec![rng.uniform(element, 0)],
    };
    Ok(ExogenousSample { values, stream_id: rng.id() })
}

/// Draw from N(0,1) or the standard GEV member via inverse CDF of one uniform.
pub fn sample_standard_member(kind: StandardMember, rng: &mut RngStream, element: u64) -> f64 {
    standard_member_quantile(kind, rng.uniform_open(element, 0))
}

pub fn standard_member_quantile(kind: StandardMember, u: f64) -> f64 {
    match kind {
        StandardMember::Normal => norm_quantile(u),
        StandardMember::Gev { shape } => {
            let w = -u.ln();
            if shape == 0.0 {
                -w.ln()
            } else {
                (w.powf(-shape) - 1.0) / shape
            }
        }
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub dim: usize,
    pub correlation: Vec<Vec<f64>>,
}

impl CopulaSpec {
    /// Factor `B` with `B Bᵀ = correlation`, by Cholesky with diagonal pivoting.
    pub fn factor(&self) -> Result<Vec<Vec<f64>>, TransformError> {
        let n = self.dim;
        let c = &self.correlation;
        if c.len() != n || c.iter().any(|r| r.len() != n) {
            return Err(TransformError::InvalidParameter("correlation shape does not match dim".into()));
        }
        for i in 0..n {
            if (c[i][i] - 1.0).abs() > 1e-9 {
                return Err(TransformError::InvalidParameter("correlation diagonal must be 1".into()));
            }
            for j in 0..i {
                if (c[i][j] - c[j][i]).abs() > 1e-9 {
                    return Err(TransformError::InvalidParameter("correlation must be symmetric".into()));
                }
            }
        }
        let tol = 1e-10 * n as f64;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut a: Vec<Vec<f64>> = c.clone();
        let mut l = vec![vec![0.0; n]; n];
        for k in 0..n {
            let (piv, &maxd) = (k..n)
                .map(|i| (i, &a[perm[i]][perm[i]]))
                .max_by(|x, y| x.1.total_cmp(y.1))
                .expect("non-empty range");
            if maxd < -tol {
                return Err(TransformError::NotPsd);
            }
            if maxd <= tol {
                // Remaining Schur complement must vanish for a PSD input.
                for i in k..n {
                    for j in k..n {
                        if a[perm[i]][perm[j]].abs() > 1e-7 {
                            return Err(TransformError::NotPsd);
                        }
                    }
                }
                break;
            }
            perm.swap(k, piv);
            l.swap(k, piv);
            let pk = perm[k];
            let d = a[pk][pk].sqrt();
            l[k][k] = d;
            for i in k + 1..n {
                l[i][k] = a[perm[i]][pk] / d;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let (pi, pj) = (perm[i], perm[j]);
                    a[pi][pj] -= l[i][k] * l[j][k];
                }
            }
        }
        let mut b = vec![vec![0.0; n]; n];
        for (i, row) in l.into_iter().enumerate() {
            b[perm[i]] = row;
        }
        Ok(b)
    }
}

/// One vector of U(0,1) marginals coupled by a Gaussian copula.
pub fn gaussian_copula_sample(c: &CopulaSpec, rng: &mut RngStream, element: u64) -> Result<Vec<f64>, TransformError> {
    let b = c.factor()?;
    let z: Vec<f64> = (0..c.dim).map(|t| norm_quantile(rng.uniform_open(element, t as u64))).collect();
    Ok(b.iter()
        .map(|row| {
            let y: f64 = row.iter().zip(&z).map(|(l, z)| l * z).sum();
            normal_cdf(y).min(1.0 - f64::EPSILON / 2.0)
        })
        .collect())
}

/// `Σ_d ϑ_d x_d`; no rows are needed.
pub fn emit_selection(sample: &ExogenousSample, x_sel_vars: &[VarId]) -> Result<TransformEmission, TransformError> {
    if sample.values.len() != x_sel_vars.len() {
        return Err(TransformError::SampleArity { expected: x_sel_vars.len(), got: sample.values.len() });
    }
    let mut value = LinearExpr::new();
    for (&v, &x) in sample.values.iter().zip(x_sel_vars) {
        value.add_term(x, v);
    }
    Ok(TransformEmission::pure(value))
}

/// Smallest 0-based index `r` with `cdf[r] ≥ j`.
pub fn eval_generalized_inverse(cdf_values: &[f64], j: f64) -> Result<usize, TransformError> {
    let last = *cdf_values.last().ok_or_else(|| TransformError::InvalidPmf("empty cdf".into()))?;
    if (last - 1.0).abs() > 1e-9 {
        return Err(TransformError::InvalidPmf(format!("cdf ends at {last}")));
    }
    Ok(cdf_values.iter().position(|&c| c >= j).unwrap_or(cdf_values.len() - 1))
}

/// The unique 0-based `r` with `Σ_{k<r} p_k ≤ ϑ < Σ_{k≤r} p_k`.
pub fn eval_discrete_inverse(pmf_values: &[f64], theta: f64) -> Result<usize, TransformError> {
    check_pmf(pmf_values)?;
    if !(0.0..1.0).contains(&theta) {
        return Err(TransformError::InvalidParameter(format!("ϑ = {theta} outside [0, 1)")));
    }
    Ok(eval_discrete_inverse_unchecked(pmf_values, theta))
}

fn eval_discrete_inverse_unchecked(pmf: &[f64], theta: f64) -> usize {
    let mut cdf = 0.0;
    for (r, &p) in pmf.iter().enumerate() {
        cdf += p;
        if theta < cdf {
            return r;
        }
    }
    // Rounding left the total just below 1; the last realization absorbs it.
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(pmf.len() - 1)
}

fn partial_sum(exprs: &[LinearExpr], range: Range<usize>) -> LinearExpr {
    let mut out = LinearExpr::new();
    for e in &exprs[range] {
        out.add_scaled(e, 1.0);
    }
    out.normalize();
    out
}

/// All binary assignments of the variables used in `exprs`, if few enough.
fn reachable_points(exprs: &[&LinearExpr]) -> Option<Vec<Assignment>> {
    let mut vars: Vec<VarId> = exprs.iter().flat_map(|e| e.vars()).collect();
    vars.sort();
    vars.dedup();
    if vars.len() > ENUMERATION_LIMIT {
        return None;
    }
    Some(
        (0u32..1 << vars.len())
            .map(|mask| vars.iter().enumerate().map(|(i, &v)| (v, f64::from((mask >> i) & 1))).collect())
            .collect(),
    )
}

fn discrete_degenerate(pmf_exprs: &[LinearExpr], theta: f64, eps: f64) -> bool {
    let refs: Vec<&LinearExpr> = pmf_exprs.iter().collect();
    let Some(points) = reachable_points(&refs) else { return false };
    points.iter().any(|a| {
        let mut cdf = 0.0;
        pmf_exprs[..pmf_exprs.len() - 1].iter().any(|e| {
            cdf += e.evaluate(a).unwrap_or(0.0);
            (cdf - theta).abs() <= eps || cdf < eps
        })
    })
}

/// Binary θ/π system selecting the realization index for a fixed `ϑ`.
///
/// With `CDF_r(x) = Σ_{k≤r} p_k(x)` and `π_R = 1`:
/// `ϑ·π_r ≤ CDF_r(x) − ε` (r < R), `(1−ϑ)(1 − π_{r−1}) ≤ Σ_{k≥r} p_k(x)` (r ≥ 2),
/// `π_r = π_{r+1} − θ_{r+1}`, `Σ θ = 1`. The first two are the ratio-form
/// rows `π_r ≤ (CDF_r − ε)/ϑ` and `1 − π_{r−1} ≤ Σ_{k≥r} p_k/(1−ϑ)` multiplied
/// out. Keeping ε inside the ratio puts it on the probability scale and makes
/// the relaxation a subset of the Holzmann-style one for every ε.
pub fn emit_discrete_inverse(
    model: &mut MipModel,
    pmf_exprs: &[LinearExpr],
    realization_values: &[f64],
    theta: f64,
    eps: f64,
    name: &str,
) -> Result<TransformEmission, TransformError> {
    let r_count = pmf_exprs.len();
    if r_count == 0 || realization_values.len() != r_count {
        return Err(TransformError::InvalidSpec("one pmf expression per realization value is required".into()));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(TransformError::InvalidParameter(format!("ϑ = {theta} outside [0, 1)")));
    }
    let row_start = model.rows.len();
    let th: Vec<VarId> = (0..r_count).map(|r| model.add_binary(format!("{name}.theta[{r}]"))).collect();
    let pi: Vec<VarId> = (0..r_count).map(|r| model.add_binary(format!("{name}.pi[{r}]"))).collect();
    model.fix(pi[r_count - 1], 1.0);

    for r in 0..r_count - 1 {
        let cdf = partial_sum(pmf_exprs, 0..r + 1);
        let mut e = LinearExpr::term(pi[r], theta);
        e.add_scaled(&cdf, -1.0);
        model.add_constraint(e, Sense::Le, -eps);
    }
    for r in 1..r_count {
        let tail = partial_sum(pmf_exprs, r..r_count);
        let mut e = LinearExpr::term(pi[r - 1], -(1.0 - theta));
        e.add_scaled(&tail, -1.0);
        model.add_constraint(e, Sense::Le, -(1.0 - theta));
    }
    for r in 0..r_count - 1 {
        let mut e = LinearExpr::var(pi[r]);
        e.add_term(pi[r + 1], -1.0).add_term(th[r + 1], 1.0);
        model.add_constraint(e, Sense::Eq, 0.0);
    }
    let mut sum = LinearExpr::new();
    for &t in &th {
        sum.add_term(t, 1.0);
    }
    model.add_constraint(sum, Sense::Eq, 1.0);

    let mut value = LinearExpr::new();
    for (&t, &v) in th.iter().zip(realization_values) {
        value.add_term(t, v);
    }
    let mut new_vars = th;
    new_vars.extend(pi);
    Ok(TransformEmission {
        new_vars,
        new_rows: row_start..model.rows.len(),
        value_expr: value,
        degenerate: discrete_degenerate(pmf_exprs, theta, eps),
    })
}

/// Comparison formulation without the π chain:
/// `θ_r ≤ 1 + CDF_r(x) − ϑ − ε`, `θ_r ≤ ϑ + Σ_{k≥r} p_k(x)`, `Σ θ = 1`.
pub fn emit_holzmann_inverse(
    model: &mut MipModel,
    pmf_exprs: &[LinearExpr],
    realization_values: &[f64],
    theta: f64,
    eps: f64,
    name: &str,
) -> Result<TransformEmission, TransformError> {
    let r_count = pmf_exprs.len();
    if r_count == 0 || realization_values.len() != r_count {
        return Err(TransformError::InvalidSpec("one pmf expression per realization value is required".into()));
    }
    if !(0.0..1.0).contains(&theta) {
        return Err(TransformError::InvalidParameter(format!("ϑ = {theta} outside [0, 1)")));
    }
    let row_start = model.rows.len();
    let th: Vec<VarId> = (0..r_count).map(|r| model.add_binary(format!("{name}.theta[{r}]"))).collect();
    for r in 0..r_count {
        let cdf = partial_sum(pmf_exprs, 0..r + 1);
        let mut e = LinearExpr::var(th[r]);
        e.add_scaled(&cdf, -1.0);
        model.add_constraint(e, Sense::Le, 1.0 - theta - eps);

        let tail = partial_sum(pmf_exprs, r..r_count);
        let mut e = LinearExpr::var(th[r]);
        e.add_scaled(&tail, -1.0);
        model.add_constraint(e, Sense::Le, theta);
    }
    let mut sum = LinearExpr::new();
    for &t in &th {
        sum.add_term(t, 1.0);
    }
    model.add_constraint(sum, Sense::Eq, 1.0);
    let mut value = LinearExpr::new();
    for (&t, &v) in th.iter().zip(realization_values) {
        value.add_term(t, v);
    }
    Ok(TransformEmission {
        new_vars: th,
        new_rows: row_start..model.rows.len(),
        value_expr: value,
        degenerate: discrete_degenerate(pmf_exprs, theta, eps),
    })
}

/// Binary `υ = 1` iff `ϑ < φ(x)`: rows `(ϑ + ε)υ ≤ φ(x)` and `υ ≥ φ(x) − ϑ`.
pub fn emit_bernoulli(model: &mut MipModel, phi_expr: &LinearExpr, theta: f64, eps: f64, name: &str) -> Result<TransformEmission, TransformError> {
    if !(0.0..1.0).contains(&theta) {
        return Err(TransformError::InvalidParameter(format!("ϑ = {theta} outside [0, 1)")));
    }
    let row_start = model.rows.len();
    let u = model.add_binary(format!("{name}.upsilon"));
    let mut e = LinearExpr::term(u, theta + eps);
    e.add_scaled(phi_expr, -1.0);
    model.add_constraint(e, Sense::Le, 0.0);
    let mut e = LinearExpr::var(u);
    e.add_scaled(phi_expr, -1.0);
    model.add_constraint(e, Sense::Ge, -theta);

    let degenerate = reachable_points(&[phi_expr])
        .map(|pts| pts.iter().any(|a| (phi_expr.evaluate(a).unwrap_or(0.0) - theta).abs() < eps))
        .unwrap_or(false);
    Ok(TransformEmission { new_vars: vec![u], new_rows: row_start..model.rows.len(), value_expr: LinearExpr::var(u), degenerate })
}

/// Sum of one Bernoulli block per trial.
pub fn emit_binomial_convolution(
    model: &mut MipModel,
    phi_expr: &LinearExpr,
    thetas: &[f64],
    eps: f64,
    name: &str,
) -> Result<TransformEmission, TransformError> {
    if thetas.is_empty() {
        return Err(TransformError::InvalidSpec("trials must be at least 1".into()));
    }
    let row_start = model.rows.len();
    let mut out = TransformEmission { new_vars: Vec::new(), new_rows: 0..0, value_expr: LinearExpr::new(), degenerate: false };
    for (j, &t) in thetas.iter().enumerate() {
        let block = emit_bernoulli(model, phi_expr, t, eps, &format!("{name}[{j}]"))?;
        out.new_vars.extend(&block.new_vars);
        out.value_expr.add_scaled(&block.value_expr, 1.0);
        out.degenerate |= block.degenerate;
    }
    out.new_rows = row_start..model.rows.len();
    Ok(out)
}

pub fn transform_uniform(a: f64, b: f64, theta: f64) -> Result<f64, TransformError> {
    if a > b {
        return Err(TransformError::InvalidParameter(format!("a = {a} > b = {b}")));
    }
    Ok(a + (b - a) * theta)
}

pub fn transform_exponential(rate: f64, theta: f64) -> Result<f64, TransformError> {
    if !(rate > 0.0) {
        return Err(TransformError::InvalidParameter(format!("rate {rate} must be positive")));
    }
    Ok(-(-theta).ln_1p() / rate)
}

/// `μ(x) + σϑ`, affine in the decision.
pub fn transform_location_scale(mu_expr: &LinearExpr, sigma: f64, theta: f64) -> Result<LinearExpr, TransformError> {
    if !(sigma >= 0.0) {
        return Err(TransformError::InvalidParameter(format!("scale {sigma} must be nonnegative")));
    }
    let mut e = mu_expr.clone();
    e.add_constant(sigma * theta);
    Ok(e)
}

/// Exact linearization of `τ = b·z` for binary `b` and `0 ≤ z ≤ z_ub`.
pub fn mccormick_product(model: &mut MipModel, b: VarId, z: VarId, z_ub: f64, name: &str) -> Result<TransformEmission, TransformError> {
    if !(z_ub > 0.0) {
        return Err(TransformError::InvalidParameter(format!("z_ub = {z_ub} must be positive")));
    }
    let row_start = model.rows.len();
    let tau = model.add_continuous(0.0, z_ub, format!("{name}.tau"));
    let mut e = LinearExpr::var(tau);
    e.add_term(b, -z_ub);
    model.add_constraint(e, Sense::Le, 0.0);
    let mut e = LinearExpr::var(tau);
    e.add_term(z, -1.0);
    model.add_constraint(e, Sense::Le, 0.0);
    let mut e = LinearExpr::var(tau);
    e.add_term(z, -1.0).add_term(b, -z_ub);
    model.add_constraint(e, Sense::Ge, -z_ub);
    Ok(TransformEmission { new_vars: vec![tau], new_rows: row_start..model.rows.len(), value_expr: LinearExpr::var(tau), degenerate: false })
}

/// Emits the system for any spec kind. Exponential needs no decision
/// variables, so its value is a constant.
pub fn emit(model: &mut MipModel, spec: &EndogenousSpec, sample: &ExogenousSample, eps: f64, name: &str) -> Result<TransformEmission, TransformError> {
    spec.validate()?;
    if sample.values.len() != spec.arity() {
        return Err(TransformError::SampleArity { expected: spec.arity(), got: sample.values.len() });
    }
    let t = sample.values[0];
    match spec {
        EndogenousSpec::Selection { x_vars, .. } => emit_selection(sample, x_vars),
        EndogenousSpec::DiscreteInverse { realization_values, pmf_exprs } => {
            emit_discrete_inverse(model, pmf_exprs, realization_values, t, eps, name)
        }
        EndogenousSpec::Bernoulli { success_prob_expr } => emit_bernoulli(model, success_prob_expr, t, eps, name),
        EndogenousSpec::BinomialConvolution { success_prob_expr, .. } => {
            emit_binomial_convolution(model, success_prob_expr, &sample.values, eps, name)
        }
        EndogenousSpec::Uniform { a, b } => {
            let mut e = a.scaled(1.0 - t);
            e.add_scaled(b, t);
            Ok(TransformEmission::pure(e))
        }
        EndogenousSpec::Exponential { rate } => Ok(TransformEmission::pure(LinearExpr::constant(transform_exponential(*rate, t)?))),
        EndogenousSpec::LocationScale { loc_expr, scale, .. } | EndogenousSpec::GevLocationScale { loc_expr, scale, .. } => {
            Ok(TransformEmission::pure(transform_location_scale(loc_expr, *scale, t)?))
        }
    }
}

/// Oracle: the realized value `t(x, ϑ)` computed without any model.
pub fn realize(spec: &EndogenousSpec, x: &Assignment, sample: &ExogenousSample) -> Result<f64, TransformError> {
    spec.validate()?;
    if sample.values.len() != spec.arity() {
        return Err(TransformError::SampleArity { expected: spec.arity(), got: sample.values.len() });
    }
    let t = sample.values[0];
    Ok(match spec {
        EndogenousSpec::Selection { x_vars, .. } => {
            let chosen = x_vars
                .iter()
                .position(|&v| x.get(v).is_some_and(|b| b > 0.5))
                .ok_or_else(|| TransformError::InvalidParameter("no alternative selected".into()))?;
            sample.values[chosen]
        }
        EndogenousSpec::DiscreteInverse { realization_values, pmf_exprs } => {
            let pmf = pmf_exprs.iter().map(|e| e.evaluate(x)).collect::<Result<Vec<_>, _>>()?;
            realization_values[eval_discrete_inverse(&pmf, t)?]
        }
        EndogenousSpec::Bernoulli { success_prob_expr } => f64::from(u8::from(t < success_prob_expr.evaluate(x)?)),
        EndogenousSpec::BinomialConvolution { success_prob_expr, .. } => {
            let phi = success_prob_expr.evaluate(x)?;
            sample.values.iter().filter(|&&u| u < phi).count() as f64
        }
        EndogenousSpec::Uniform { a, b } => transform_uniform(a.evaluate(x)?, b.evaluate(x)?, t)?,
        EndogenousSpec::Exponential { rate } => transform_exponential(*rate, t)?,
        EndogenousSpec::LocationScale { loc_expr, scale, .. } | EndogenousSpec::GevLocationScale { loc_expr, scale, .. } => {
            loc_expr.evaluate(x)? + scale * t
        }
    })
}

/// Endogenous law `(value, probability)` of a discrete kind at a fixed decision.
pub fn endogenous_pmf(spec: &EndogenousSpec, x: &Assignment) -> Result<Vec<(f64, f64)>, TransformError> {
    let mut out: Vec<(f64, f64)> = match spec {
        EndogenousSpec::Selection { alternatives, x_vars } => {
            let chosen = x_vars
                .iter()
                .position(|&v| x.get(v).is_some_and(|b| b > 0.5))
                .ok_or_else(|| TransformError::InvalidParameter("no alternative selected".into()))?;
            let d = &alternatives[chosen];
            d.values.iter().copied().zip(d.probs.iter().copied()).collect()
        }
        EndogenousSpec::DiscreteInverse { realization_values, pmf_exprs } => {
            let pmf = pmf_exprs.iter().map(|e| e.evaluate(x)).collect::<Result<Vec<_>, _>>()?;
            realization_values.iter().copied().zip(pmf).collect()
        }
        EndogenousSpec::Bernoulli { success_prob_expr } => {
            let p = success_prob_expr.evaluate(x)?;
            vec![(0.0, 1.0 - p), (1.0, p)]
        }
        EndogenousSpec::BinomialConvolution { success_prob_expr, trials } => {
            let p = success_prob_expr.evaluate(x)?;
            binomial_pmf(*trials, p).into_iter().enumerate().map(|(k, q)| (k as f64, q)).collect()
        }
        _ => return Err(TransformError::InvalidSpec("continuous kind has no pmf".into())),
    };
    // Merge equal values so selection laws with repeated support compare cleanly.
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    Ok(out)
}
