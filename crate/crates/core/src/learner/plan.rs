//! Which agents train with a teacher and which train from scratch.

use serde::{Deserialize, Serialize};

/// Partition of the agent set into reincarnated agents `X` (they rehearse
/// offline teacher data) and tabula rasa agents `Y` (they train from
/// scratch). Both endpoints are allowed: `X` empty is fully tabula rasa,
/// `Y` empty is fully reincarnated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReincarnationPlan {
    reincarnated: Vec<String>,
    tabula_rasa: Vec<String>,
}

impl ReincarnationPlan {
    /// Splits `all_agents` (in canonical order) by membership in
    /// `reincarnated`. Panics if `reincarnated` names an unknown agent or
    /// repeats one.
    pub fn new<S: AsRef<str>>(all_agents: &[String], reincarnated: &[S]) -> Self {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for name in all_agents {
            let hits = reincarnated.iter().filter(|r| r.as_ref() == name).count();
            assert!(hits <= 1, "agent {name} listed twice");
            if hits == 1 {
                x.push(name.clone());
            } else {
                y.push(name.clone());
            }
        }
        assert_eq!(
            x.len(),
            reincarnated.len(),
            "plan names an agent the environment does not have"
        );
        ReincarnationPlan {
            reincarnated: x,
            tabula_rasa: y,
        }
    }

    /// Plan from a bitmask over canonical agent indices: bit `i` set means
    /// agent `i` is reincarnated.
    pub fn from_bitmask(all_agents: &[String], mask: u64) -> Self {
        assert!(all_agents.len() <= 64);
        assert!(
            mask < (1u128 << all_agents.len()) as u64 || all_agents.len() == 64,
            "mask {mask:#b} has bits beyond {} agents",
            all_agents.len()
        );
        let chosen: Vec<&String> = all_agents
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, n)| n)
            .collect();
        Self::new(all_agents, &chosen)
    }

    /// Bitmask over canonical agent indices.
    pub fn bitmask(&self, all_agents: &[String]) -> u64 {
        let mut mask = 0u64;
        for (i, name) in all_agents.iter().enumerate() {
            if self.is_reincarnated(name) {
                mask |= 1 << i;
            }
        }
        mask
    }

    pub fn is_reincarnated(&self, agent: &str) -> bool {
        self.reincarnated.iter().any(|n| n == agent)
    }

    /// The set X.
    pub fn reincarnated(&self) -> &[String] {
        &self.reincarnated
    }

    /// The set Y.
    pub fn tabula_rasa(&self) -> &[String] {
        &self.tabula_rasa
    }

    /// x = |X| = n - y.
    pub fn x(&self) -> usize {
        self.reincarnated.len()
    }

    pub fn y(&self) -> usize {
        self.tabula_rasa.len()
    }

    pub fn n(&self) -> usize {
        self.x() + self.y()
    }

    /// Short display label: `TR` for fully tabula rasa, otherwise the
    /// reincarnated names joined with `+`.
    pub fn label(&self) -> String {
        if self.reincarnated.is_empty() {
            "TR".to_string()
        } else {
            self.reincarnated.join("+")
        }
    }
}
