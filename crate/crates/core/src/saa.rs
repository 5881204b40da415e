//! Sample average approximation with statistical bounds.
//!
//! `run_saa` solves `M` independent sampled programs of size `N`, picks the
//! candidate with the best estimated value on one shared evaluation sample of
//! size `N′`, and reports the lower/upper bound and gap estimators.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Assignment, MipModel, VarId};
use crate::rng::{StreamId, EVAL_REPLICATION};
use crate::solver::{MilpSolver, SolveParams, SolveStatus, SolverError};
use crate::stats::{self, StatsError};

#[derive(Debug, Error)]
pub enum SaaError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("too many failed replications: {failed} of {total}")]
    Replications { failed: usize, total: usize },
    #[error("problem error: {0}")]
    Problem(String),
}

/// A sampled program: model builder plus exact or sampled recourse evaluation.
pub trait SaaProblem: Sync {
    type Sample: Send + Sync;

    fn draw_sample(&self, base_seed: u64, id: StreamId) -> Result<Self::Sample, SaaError>;

    /// Extensive form over `samples` with equal weights. Returns the model and
    /// the first-stage variable ids, which must be identical for every sample set.
    fn build_saa_model(&self, samples: &[Self::Sample]) -> Result<(MipModel, Vec<VarId>), SaaError>;

    fn first_stage_cost(&self, x: &Assignment) -> Result<f64, SaaError>;

    fn evaluate_second_stage(&self, x: &Assignment, sample: &Self::Sample) -> Result<f64, SaaError>;

    /// Second-stage values for many samples; override to share work.
    fn evaluate_batch(&self, x: &Assignment, samples: &[Self::Sample]) -> Result<Vec<f64>, SaaError> {
        samples.par_iter().map(|s| self.evaluate_second_stage(x, s)).collect()
    }

    /// Exact `c⊤x + E[Q(x, ξ)]` when the support can be enumerated.
    fn exact_value(&self, _x: &Assignment) -> Option<Result<f64, SaaError>> {
        None
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaaConfig {
    pub m: usize,
    pub n: usize,
    pub n_prime: usize,
    pub alpha: f64,
    pub base_seed: u64,
    pub solve_params: SolveParams,
    /// Worker threads for replications and evaluation; 0 uses the rayon default.
    #[serde(default)]
    pub jobs: usize,
    /// Replace the `N′` estimate with the exact value when the problem offers one.
    #[serde(default)]
    pub exact_eval: bool,
}

impl SaaConfig {
    pub fn validate(&self) -> Result<(), SaaError> {
        if self.m < 2 {
            return Err(SaaError::Config(format!("M = {} must be at least 2", self.m)));
        }
        if self.n < 1 {
            return Err(SaaError::Config("N must be at least 1".into()));
        }
        if self.n_prime < self.n || self.n_prime < 2 {
            return Err(SaaError::Config(format!("N' = {} must be at least max(N, 2)", self.n_prime)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SaaError::Config(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self { m: 50, n: 750, n_prime: 10_000, alpha: 0.05, base_seed: 0, solve_params: SolveParams::default(), jobs: 0, exact_eval: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub j: usize,
    pub status: SolveStatus,
    pub v_hat: f64,
    pub bound: f64,
    pub x_hat: Assignment,
    pub eval_value: f64,
    pub excluded: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaaReport {
    pub x_bar: Assignment,
    pub selected_replication: usize,
    pub v_bar_nm: f64,
    pub sigma2_nm: f64,
    pub v_hat_nprime: f64,
    pub sigma2_nprime: f64,
    pub gap_over: f64,
    pub sigma2_gap: f64,
    pub v_lb: f64,
    pub v_ub: f64,
    pub sgap: f64,
    /// `100·(v̂ − v̄)/v̂`.
    pub gap_percent: f64,
    pub exact_eval: bool,
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub n_prime: usize,
    pub seed: u64,
    pub wall_time_s: f64,
    pub per_replication: Vec<ReplicationResult>,
}

/// Mean and `(1/(M(M−1))) Σ (v̂ʲ − v̄)²`.
pub fn lower_bound_stats(v_hats: &[f64]) -> Result<(f64, f64), SaaError> {
    let m = v_hats.len();
    if m < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: m }.into());
    }
    let v_bar = stats::mean(v_hats);
    let ss: f64 = v_hats.iter().map(|v| (v - v_bar).powi(2)).sum();
    Ok((v_bar, ss / (m as f64 * (m as f64 - 1.0))))
}

/// `c⊤x̄ + mean(Q)` and `(1/(N′(N′−1))) Σ (Qᵢ − mean)²`.
pub fn upper_bound_stats(second_stage_values: &[f64], first_stage_cost: f64) -> Result<(f64, f64), SaaError> {
    let n = second_stage_values.len();
    if n < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: n }.into());
    }
    let mean = stats::mean(second_stage_values);
    let ss: f64 = second_stage_values.iter().map(|q| (q - mean).powi(2)).sum();
    Ok((first_stage_cost + mean, ss / (n as f64 * (n as f64 - 1.0))))
}

/// `(v_lb, v_ub, sgap)` from the two bound estimators.
pub fn confidence_bounds(v_bar: f64, sigma2_nm: f64, v_hat: f64, sigma2_nprime: f64, alpha: f64, m: usize) -> Result<(f64, f64, f64), SaaError> {
    let t = stats::t_quantile(alpha, (m.max(2) - 1) as f64)?;
    let z = stats::z_quantile(alpha)?;
    let v_lb = v_bar - t * sigma2_nm.max(0.0).sqrt();
    let v_ub = v_hat + z * sigma2_nprime.max(0.0).sqrt();
    let sgap = v_hat - v_bar + z * (sigma2_nprime + sigma2_nm).max(0.0).sqrt();
    Ok((v_lb, v_ub, sgap))
}

pub fn run_saa<P: SaaProblem>(problem: &P, solver: &dyn MilpSolver, cfg: &SaaConfig) -> Result<SaaReport, SaaError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| SaaError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_saa_inner(problem, solver, cfg))
}

fn run_saa_inner<P: SaaProblem>(problem: &P, solver: &dyn MilpSolver, cfg: &SaaConfig) -> Result<SaaReport, SaaError> {
    let start = Instant::now();

    // Step 1: M independent replications (1-based stream indices).
    let mut reps: Vec<ReplicationResult> = (1..=cfg.m)
        .into_par_iter()
        .map(|j| -> Result<ReplicationResult, SaaError> {
            let samples = (0..cfg.n)
                .map(|i| problem.draw_sample(cfg.base_seed, StreamId::new(j as u64, i as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            let (model, first) = problem.build_saa_model(&samples)?;
            let res = solver.solve(&model, &cfg.solve_params)?;
            let ok = res.status == SolveStatus::Optimal;
            if !ok {
                warn!("replication {j} ended with status {:?}", res.status);
            }
            Ok(ReplicationResult {
                j,
                status: res.status,
                v_hat: res.objective,
                bound: res.bound,
                x_hat: res.assignment.restrict(&first, true),
                eval_value: f64::NAN,
                excluded: !ok,
                wall_time_s: res.wall_time_s,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let failed = reps.iter().filter(|r| r.excluded).count();
    if failed > 0 && (cfg.m - failed < cfg.m - 1 || cfg.m - failed < 2) {
        return Err(SaaError::Replications { failed, total: cfg.m });
    }

    // Step 2: every candidate on the same evaluation sample.
    let use_exact = cfg.exact_eval && problem.exact_value(&Assignment::new()).is_some();
    let eval_samples = if use_exact {
        Vec::new()
    } else {
        (0..cfg.n_prime)
            .into_par_iter()
            .map(|i| problem.draw_sample(cfg.base_seed, StreamId::new(EVAL_REPLICATION, i as u64)))
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut q_by_rep: Vec<Option<Vec<f64>>> = vec![None; reps.len()];
    for (r, slot) in reps.iter_mut().zip(q_by_rep.iter_mut()) {
        if r.excluded {
            continue;
        }
        if use_exact {
            r.eval_value = problem.exact_value(&r.x_hat).expect("checked above")?;
        } else {
            let q = problem.evaluate_batch(&r.x_hat, &eval_samples)?;
            r.eval_value = problem.first_stage_cost(&r.x_hat)? + stats::mean(&q);
            *slot = Some(q);
        }
    }
    let (k, _) = reps
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.excluded)
        .min_by(|a, b| a.1.eval_value.total_cmp(&b.1.eval_value).then(a.1.j.cmp(&b.1.j)))
        .ok_or(SaaError::Replications { failed, total: cfg.m })?;

    // Step 3: estimators.
    let v_hats: Vec<f64> = reps.iter().filter(|r| !r.excluded).map(|r| r.v_hat).collect();
    let (v_bar, sigma2_nm) = lower_bound_stats(&v_hats)?;
    let x_bar = reps[k].x_hat.clone();
    let (v_hat, sigma2_np) = match &q_by_rep[k] {
        Some(q) => upper_bound_stats(q, problem.first_stage_cost(&x_bar)?)?,
        None => (reps[k].eval_value, 0.0),
    };
    let (v_lb, v_ub, sgap) = confidence_bounds(v_bar, sigma2_nm, v_hat, sigma2_np, cfg.alpha, v_hats.len())?;
    let gap_over = v_hat - v_bar;
    let gap_percent = if v_hat != 0.0 { 100.0 * gap_over / v_hat } else { 0.0 };
    info!("SAA: v_bar={v_bar:.4} v_hat={v_hat:.4} gap={gap_percent:.3}% selected={}", reps[k].j);

    Ok(SaaReport {
        x_bar,
        selected_replication: reps[k].j,
        v_bar_nm: v_bar,
        sigma2_nm,
        v_hat_nprime: v_hat,
        sigma2_nprime: sigma2_np,
        gap_over,
        sigma2_gap: sigma2_np + sigma2_nm,
        v_lb,
        v_ub,
        sgap,
        gap_percent,
        exact_eval: use_exact,
        alpha: cfg.alpha,
        m: cfg.m,
        n: cfg.n,
        n_prime: cfg.n_prime,
        seed: cfg.base_seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        per_replication: reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearExpr, Sense};
    use crate::rng::RngStream;
    use crate::solver::HighsSolver;

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_stats(&[10.0, 10.0, 10.0]).unwrap(), (10.0, 0.0));
        assert_eq!(lower_bound_stats(&[8.0, 12.0]).unwrap(), (10.0, 4.0));
        let (m, v) = lower_bound_stats(&[0.0, 0.0, 6.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((v - 4.0).abs() < 1e-12);
        assert!(lower_bound_stats(&[1.0]).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(upper_bound_stats(&[5.0; 4], 1.0).unwrap(), (6.0, 0.0));
        assert_eq!(upper_bound_stats(&[4.0, 6.0], 0.0).unwrap(), (5.0, 1.0));
        assert!(upper_bound_stats(&[4.0], 0.0).is_err());

        let draws = |n: u64| -> Vec<f64> {
            let mut rng = RngStream::new(4, StreamId::new(0, 0));
            (0..n).map(|e| rng.uniform(e, 0)).collect()
        };
        let small = upper_bound_stats(&draws(100), 0.0).unwrap().1;
        let large = upper_bound_stats(&draws(10_000), 0.0).unwrap().1;
        assert!(large < small / 50.0);
    }

    #[test]
    fn bounds_without_variance() {
        let (lb, ub, sgap) = confidence_bounds(10.0, 0.0, 12.0, 0.0, 0.05, 5).unwrap();
        assert_eq!((lb, ub, sgap), (10.0, 12.0, 2.0));
    }

    /// Newsvendor: order x ∈ {0..5} at cost 1, shortage 3 per unit, demand U{0..4}.
    struct Newsvendor;

    impl SaaProblem for Newsvendor {
        type Sample = f64;

        fn draw_sample(&self, seed: u64, id: StreamId) -> Result<f64, SaaError> {
            Ok((RngStream::new(seed, id).uniform(0, 0) * 5.0).floor())
        }

        fn build_saa_model(&self, samples: &[f64]) -> Result<(MipModel, Vec<VarId>), SaaError> {
            let mut m = MipModel::new();
            let x = m.add_var(crate::model::VarKind::Integer, 0.0, 5.0, "x");
            m.objective = LinearExpr::var(x);
            for (i, &d) in samples.iter().enumerate() {
                let s = m.add_continuous(0.0, f64::INFINITY, format!("short[{i}]"));
                m.objective.add_term(s, 3.0 / samples.len() as f64);
                let mut e = LinearExpr::var(s);
                e.add_term(x, 1.0);
                m.add_constraint(e, Sense::Ge, d);
            }
            Ok((m, vec![x]))
        }

        fn first_stage_cost(&self, x: &Assignment) -> Result<f64, SaaError> {
            Ok(x.get(VarId(0)).unwrap_or(0.0))
        }

        fn evaluate_second_stage(&self, x: &Assignment, d: &f64) -> Result<f64, SaaError> {
            Ok(3.0 * (d - x.get(VarId(0)).unwrap_or(0.0)).max(0.0))
        }
    }

    fn newsvendor_value(x: f64) -> f64 {
        x + (0..5).map(|d| 3.0 * (d as f64 - x).max(0.0)).sum::<f64>() / 5.0
    }

    #[test]
    fn newsvendor_bounds_bracket_optimum() {
        let v_star = (0..=5).map(|x| newsvendor_value(x as f64)).fold(f64::INFINITY, f64::min);
        let cfg = SaaConfig { m: 10, n: 40, n_prime: 4000, base_seed: 3, jobs: 2, ..SaaConfig::default() };
        let rep = run_saa(&Newsvendor, &HighsSolver, &cfg).unwrap();
        assert!(rep.v_lb <= v_star + 1e-9 && v_star <= rep.v_ub + 1e-9, "{} {} {}", rep.v_lb, v_star, rep.v_ub);
        assert!(rep.sgap >= rep.gap_over);
        assert!(rep.sigma2_nm >= 0.0 && rep.sigma2_nprime >= 0.0);
        assert_eq!(rep.sigma2_gap, rep.sigma2_nm + rep.sigma2_nprime);
        assert_eq!(rep.per_replication.len(), 10);

        let again = run_saa(&Newsvendor, &HighsSolver, &SaaConfig { jobs: 1, ..cfg }).unwrap();
        assert_eq!(again.x_bar, rep.x_bar);
        assert_eq!(again.v_bar_nm, rep.v_bar_nm);
        assert_eq!(again.v_hat_nprime, rep.v_hat_nprime);
    }

    struct Constant;

    impl SaaProblem for Constant {
        type Sample = ();
        fn draw_sample(&self, _: u64, _: StreamId) -> Result<(), SaaError> {
            Ok(())
        }
        fn build_saa_model(&self, _: &[()]) -> Result<(MipModel, Vec<VarId>), SaaError> {
            let mut m = MipModel::new();
            m.objective = LinearExpr::constant(10.0);
            Ok((m, vec![]))
        }
        fn first_stage_cost(&self, _: &Assignment) -> Result<f64, SaaError> {
            Ok(10.0)
        }
        fn evaluate_second_stage(&self, _: &Assignment, _: &()) -> Result<f64, SaaError> {
            Ok(0.0)
        }
    }

    #[test]
    fn constant_problem_has_no_gap() {
        let cfg = SaaConfig { m: 3, n: 2, n_prime: 5, ..SaaConfig::default() };
        let rep = run_saa(&Constant, &HighsSolver, &cfg).unwrap();
        assert_eq!(rep.v_bar_nm, 10.0);
        assert_eq!(rep.v_hat_nprime, 10.0);
        assert_eq!(rep.sigma2_nm, 0.0);
        assert_eq!(rep.sigma2_nprime, 0.0);
        assert_eq!(rep.gap_over, 0.0);
    }

    #[test]
    fn config_validation() {
        let bad = SaaConfig { m: 1, ..SaaConfig::default() };
        assert!(matches!(run_saa(&Constant, &HighsSolver, &bad), Err(SaaError::Config(_))));
        let bad = SaaConfig { n: 10, n_prime: 5, ..SaaConfig::default() };
        assert!(bad.validate().is_err());
    }
}
