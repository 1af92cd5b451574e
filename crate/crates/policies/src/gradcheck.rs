//! Finite-difference validation for complete agents: central differences
//! over policy or critic parameters against one backward pass of a
//! caller-built loss node.

use nn_core::gradcheck::{rel_err, GradCheckReport};
use nn_core::graph::{Graph, NodeId};
use nn_core::Scalar;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::Agent;
use crate::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentPart {
    Policy,
    Critic,
}

/// Checks the gradients of `build`'s scalar loss with respect to the chosen
/// parameter store of the agent. `build` must be a pure function of the
/// agent's parameters. Checks a random subsample of at least 100 coordinates
/// when the store is larger than `max_coords`.
pub fn agent_grad_check<S: Scalar>(
    agent: &mut dyn Agent<S>,
    part: AgentPart,
    build: &dyn Fn(&dyn Agent<S>, &mut Graph<S>) -> NodeId,
    eps: f64,
    max_coords: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport, PolicyError> {
    // analytic gradients
    let grads = {
        let mut g = Graph::new();
        let loss = build(&*agent, &mut g);
        g.backward(loss);
        let store = match part {
            AgentPart::Policy => agent.policy_store_mut(),
            AgentPart::Critic => agent.critic_store_mut(),
        };
        store.zero_grads();
        g.grads_into(store)?;
        let mut grads = std::collections::HashMap::new();
        for e in store.iter() {
            if e.trainable {
                if let Some(gr) = &e.grad {
                    grads.insert(e.name.clone(), gr.clone());
                }
            }
        }
        grads
    };

    let names: Vec<(String, usize)> = {
        let store = match part {
            AgentPart::Policy => agent.policy_store(),
            AgentPart::Critic => agent.critic_store(),
        };
        store
            .iter()
            .filter(|e| e.trainable)
            .flat_map(|e| (0..e.value.len()).map(move |i| (e.name.clone(), i)))
            .collect()
    };
    let mut coords = names;
    let budget = max_coords.max(100);
    if coords.len() > budget {
        for i in 0..budget {
            let j = rng.gen_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(budget);
    }

    let eval = |agent: &dyn Agent<S>| -> Result<f64, PolicyError> {
        let mut g = Graph::new();
        let loss = build(agent, &mut g);
        let v = g.scalar_value(loss).as_f64();
        if !v.is_finite() {
            return Err(PolicyError::Nn(nn_core::NnError::NonFinite("grad check loss".into())));
        }
        Ok(v)
    };

    let mut report = GradCheckReport { max_rel_err: 0.0, coords_checked: 0, worst: None };
    for (name, ci) in coords {
        let orig = {
            let store = match part {
                AgentPart::Policy => agent.policy_store(),
                AgentPart::Critic => agent.critic_store(),
            };
            store.get(&name).at(ci)
        };
        let set = |agent: &mut dyn Agent<S>, v: S| {
            let store = match part {
                AgentPart::Policy => agent.policy_store_mut(),
                AgentPart::Critic => agent.critic_store_mut(),
            };
            store.get_mut(&name).as_mut_slice()[ci] = v;
        };
        let h = S::of(eps);
        set(agent, orig + h);
        let up = eval(&*agent)?;
        set(agent, orig - h);
        let down = eval(&*agent)?;
        set(agent, orig);

        let fd = (up - down) / (2.0 * eps);
        let bp = grads.get(&name).map(|g| g.at(ci).as_f64()).unwrap_or(0.0);
        let rel = rel_err(fd, bp);
        report.coords_checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = Some((name.clone(), ci));
        }
    }
    Ok(report)
}
