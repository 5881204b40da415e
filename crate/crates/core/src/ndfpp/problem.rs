use rayon::prelude::*;

use super::{build_saa_extensive, evaluate_solution_exact, realized_capacities, sample_scenario, Decision, NdfppError, NdfppInstance, NdfppScenario, RecourseEvaluator, Variant};
use crate::model::{Assignment, MipModel, VarId};
use crate::rng::StreamId;
use crate::saa::{SaaError, SaaProblem};

impl From<NdfppError> for SaaError {
    fn from(e: NdfppError) -> Self {
        match e {
            NdfppError::Solver(s) => SaaError::Solver(s),
            other => SaaError::Problem(other.to_string()),
        }
    }
}

/// The transformed NDFPP as an SAA problem.
#[derive(Debug, Clone)]
pub struct NdfppSaa<'a> {
    pub inst: &'a NdfppInstance,
    pub variant: Variant,
    pub epsilon: f64,
}

impl<'a> NdfppSaa<'a> {
    pub fn new(inst: &'a NdfppInstance, variant: Variant, epsilon: f64) -> Self {
        Self { inst, variant, epsilon }
    }
}

impl SaaProblem for NdfppSaa<'_> {
    type Sample = NdfppScenario;

    fn draw_sample(&self, base_seed: u64, id: StreamId) -> Result<NdfppScenario, SaaError> {
        Ok(sample_scenario(self.inst, self.variant, base_seed, id)?)
    }

    fn build_saa_model(&self, samples: &[NdfppScenario]) -> Result<(MipModel, Vec<VarId>), SaaError> {
        let b = build_saa_extensive(self.inst, self.variant, samples, self.epsilon)?;
        let first = b.first.all_vars();
        Ok((b.model, first))
    }

    fn first_stage_cost(&self, _x: &Assignment) -> Result<f64, SaaError> {
        Ok(0.0)
    }

    fn evaluate_second_stage(&self, x: &Assignment, sample: &NdfppScenario) -> Result<f64, SaaError> {
        Ok(self.evaluate_batch(x, std::slice::from_ref(sample))?[0])
    }

    fn evaluate_batch(&self, x: &Assignment, samples: &[NdfppScenario]) -> Result<Vec<f64>, SaaError> {
        let dec = Decision::from_assignment(self.inst, x)?;
        let eval = RecourseEvaluator::new(self.inst, &dec.open_edges);
        samples
            .par_iter()
            .map(|s| Ok(eval.cost(&realized_capacities(self.inst, self.variant, &dec, s)?)))
            .collect()
    }

    fn exact_value(&self, x: &Assignment) -> Option<Result<f64, SaaError>> {
        if !self.variant.is_enumerable() {
            return None;
        }
        Some(Decision::from_assignment(self.inst, x).and_then(|d| evaluate_solution_exact(self.inst, self.variant, &d)).map_err(SaaError::from))
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::tiny;
    use super::*;
    use crate::saa::{run_saa, SaaConfig};
    use crate::solver::HighsSolver;
    use crate::transforms::DEFAULT_EPSILON;

    #[test]
    fn saa_runs_on_tiny_instance() {
        let inst = tiny(1);
        let p = NdfppSaa::new(&inst, Variant::Binomial, DEFAULT_EPSILON);
        let cfg = SaaConfig { m: 4, n: 10, n_prime: 200, exact_eval: true, ..SaaConfig::default() };
        let rep = run_saa(&p, &HighsSolver, &cfg).unwrap();
        assert!(rep.exact_eval);
        assert!(rep.v_bar_nm.is_finite() && rep.v_hat_nprime.is_finite());
        let dec = Decision::from_assignment(&inst, &rep.x_bar).unwrap();
        assert!(dec.within_budget(&inst));
    }

    #[test]
    fn normal_variant_uses_sampled_evaluation() {
        let inst = tiny(1);
        let p = NdfppSaa::new(&inst, Variant::Normal, DEFAULT_EPSILON);
        let cfg = SaaConfig { m: 3, n: 8, n_prime: 300, exact_eval: true, ..SaaConfig::default() };
        let rep = run_saa(&p, &HighsSolver, &cfg).unwrap();
        assert!(!rep.exact_eval);
        assert!(rep.sigma2_nprime >= 0.0);
    }
}
