use serde::{Deserialize, Serialize};

use super::PolyError;

/// What a variable stands for in a control problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Time,
    State,
    /// Continuous control owned by a single mode.
    Control,
    /// Algebraic auxiliary variable tied to the states by equality constraints.
    Lift,
}

/// Ordered variable list `(t, x_1..x_n, ...)` shared by every polynomial of a problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableSpace {
    names: Vec<String>,
    roles: Vec<Role>,
}

impl VariableSpace {
    pub fn new<S: Into<String>>(vars: impl IntoIterator<Item = (S, Role)>) -> Result<Self, PolyError> {
        let (names, roles): (Vec<String>, Vec<Role>) =
            vars.into_iter().map(|(n, r)| (n.into(), r)).unzip();
        for (i, n) in names.iter().enumerate() {
            let valid = n
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(PolyError::InvalidSpace(format!("invalid identifier '{n}'")));
            }
            if names[..i].contains(n) {
                return Err(PolyError::InvalidSpace(format!("duplicate variable '{n}'")));
            }
        }
        let ntime = roles.iter().filter(|r| **r == Role::Time).count();
        if ntime != 1 {
            return Err(PolyError::InvalidSpace(format!(
                "expected exactly one time variable, found {ntime}"
            )));
        }
        Ok(VariableSpace { names, roles })
    }

    /// Time plus `n` states named `x1..xn`, handy for tests and small models.
    pub fn time_states(time: &str, states: &[&str]) -> Self {
        let vars = std::iter::once((time, Role::Time)).chain(states.iter().map(|s| (*s, Role::State)));
        VariableSpace::new(vars).expect("valid identifiers")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn time_index(&self) -> usize {
        self.roles.iter().position(|r| *r == Role::Time).unwrap()
    }

    pub fn indices_with(&self, role: Role) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.roles[i] == role).collect()
    }

    pub fn state_indices(&self) -> Vec<usize> {
        self.indices_with(Role::State)
    }

    pub fn nstates(&self) -> usize {
        self.state_indices().len()
    }
}
