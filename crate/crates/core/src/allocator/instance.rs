use serde::{Deserialize, Serialize};

use super::{AllocError, AllocationProblem};
use crate::grid::{HouseholdId, Phase};

/// Serializable problem instance for regression corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<HouseholdId>>,
    pub commitments: Vec<f64>,
    pub current: Vec<Phase>,
    pub switchable: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_objective: Option<f64>,
}

impl ProblemInstance {
    pub fn from_problem(problem: &AllocationProblem<f64>, expected: Option<f64>) -> Self {
        Self {
            ids: Some(problem.ids().to_vec()),
            commitments: problem.commitments().to_vec(),
            current: problem.current().to_vec(),
            switchable: problem.switchable_mask().to_vec(),
            expected_objective: expected,
        }
    }

    pub fn to_problem(&self) -> Result<AllocationProblem<f64>, AllocError> {
        match &self.ids {
            Some(ids) => AllocationProblem::with_ids(
                ids.clone(),
                self.commitments.clone(),
                self.current.clone(),
                self.switchable.clone(),
            ),
            None => AllocationProblem::new(
                self.commitments.clone(),
                self.current.clone(),
                self.switchable.clone(),
            ),
        }
    }
}
