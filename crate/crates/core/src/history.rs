use crate::error::ModelError;

/// One step of a local history: the action taken, then the observation received.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStep<O = usize> {
    pub action: usize,
    pub observation: O,
}

/// Per-agent local histories aligned by time step. All local histories always
/// have the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistory<O = usize> {
    per_agent: Vec<Vec<LocalStep<O>>>,
}

impl<O: Clone> JointHistory<O> {
    pub fn new(num_agents: usize) -> Self {
        Self {
            per_agent: vec![Vec::new(); num_agents],
        }
    }

    /// Builds a history from a sequence of `(joint action, joint observation)` steps.
    pub fn from_steps(num_agents: usize, steps: &[(Vec<usize>, Vec<O>)]) -> Result<Self, ModelError> {
        let mut h = Self::new(num_agents);
        for (a, z) in steps {
            h.push(a, z)?;
        }
        Ok(h)
    }

    pub fn num_agents(&self) -> usize {
        self.per_agent.len()
    }

    pub fn len(&self) -> usize {
        self.per_agent.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, action: &[usize], obs: &[O]) -> Result<(), ModelError> {
        let n = self.num_agents();
        if action.len() != n || obs.len() != n {
            return Err(ModelError::JointArity {
                expected: n,
                got: action.len().min(obs.len()),
            });
        }
        for (i, local) in self.per_agent.iter_mut().enumerate() {
            local.push(LocalStep {
                action: action[i],
                observation: obs[i].clone(),
            });
        }
        Ok(())
    }

    pub fn local(&self, agent: usize) -> &[LocalStep<O>] {
        &self.per_agent[agent]
    }

    pub fn joint_action(&self, t: usize) -> Vec<usize> {
        self.per_agent.iter().map(|h| h[t].action).collect()
    }

    pub fn joint_observation(&self, t: usize) -> Vec<O> {
        self.per_agent
            .iter()
            .map(|h| h[t].observation.clone())
            .collect()
    }

    /// Observations of `agent` received before step `t`.
    pub fn local_observations(&self, agent: usize, t: usize) -> Vec<O> {
        self.per_agent[agent][..t]
            .iter()
            .map(|s| s.observation.clone())
            .collect()
    }

    pub fn truncated(&self, len: usize) -> Self {
        Self {
            per_agent: self
                .per_agent
                .iter()
                .map(|h| h[..len.min(h.len())].to_vec())
                .collect(),
        }
    }
}
