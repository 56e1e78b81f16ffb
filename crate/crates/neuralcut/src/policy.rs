//! The trained network as a core cut scorer.

use std::sync::Arc;

use cutlab_core::graph::{encode, encode_bipartite};
use cutlab_core::lp::LpSolution;
use cutlab_core::milp::LpRelaxation;
use cutlab_core::scorers::{CutPolicy, ScoreError, ScorerKind};
use cutlab_core::separators::CutPool;

use crate::model::score_graph;
use crate::params::PolicyParams;

#[derive(Clone, Debug)]
pub struct NeuralCutPolicy {
    pub params: Arc<PolicyParams>,
    pub label: String,
}

impl NeuralCutPolicy {
    pub fn new(params: PolicyParams) -> Self {
        let label = if params.config.bipartite {
            "neuralcut-bipartite"
        } else {
            "neuralcut"
        };
        NeuralCutPolicy {
            params: Arc::new(params),
            label: label.into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn into_scorer(self) -> ScorerKind {
        ScorerKind::Policy(Arc::new(self))
    }
}

impl CutPolicy for NeuralCutPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn score(
        &self,
        pool: &CutPool,
        relaxation: &LpRelaxation,
        lp: &LpSolution,
    ) -> Result<Vec<f64>, ScoreError> {
        let graph = if self.params.config.bipartite {
            encode_bipartite(pool, relaxation, lp)
        } else {
            encode(pool, relaxation, lp)
        }
        .map_err(|e| ScoreError::Policy(e.to_string()))?;
        score_graph(&self.params, &graph).map_err(|e| ScoreError::Policy(e.to_string()))
    }
}
