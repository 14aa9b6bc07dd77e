//! Opaque start tokens so an operator can run a condition without seeing
//! which one it is.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tipi_core::experiment::Condition;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindTable {
    /// token → condition
    pub tokens: BTreeMap<String, Condition>,
}

impl BlindTable {
    /// `per_condition` fresh numeric tokens for each condition.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, per_condition: usize) -> Self {
        let mut tokens = BTreeMap::new();
        for cond in [Condition::Rea, Condition::Ada] {
            let mut added = 0;
            while added < per_condition {
                let t = format!("{:04}-{:04}", rng.random_range(0..10_000), rng.random_range(0..10_000));
                if tokens.insert(t, cond).is_none() {
                    added += 1;
                }
            }
        }
        BlindTable { tokens }
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let table: BlindTable = toml::from_str(text).context("parsing blind token table")?;
        if table.tokens.is_empty() {
            bail!("blind token table is empty");
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("token table serializes")
    }

    pub fn resolve(&self, token: &str) -> Option<Condition> {
        self.tokens.get(token.trim()).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn tokens_resolve_and_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let t = BlindTable::generate(&mut rng, 3);
        assert_eq!(t.tokens.len(), 6);
        assert_eq!(t.tokens.values().filter(|c| **c == Condition::Ada).count(), 3);
        for (token, cond) in &t.tokens {
            assert_eq!(t.resolve(&format!(" {token} ")), Some(*cond));
            assert!(token.chars().all(|c| c.is_ascii_digit() || c == '-'));
        }
        assert_eq!(BlindTable::from_toml(&t.to_toml()).unwrap(), t);
        assert_eq!(t.resolve("ada"), None);
    }

    #[test]
    fn empty_table_is_rejected() {
        assert!(BlindTable::from_toml("[tokens]\n").is_err());
        assert!(BlindTable::from_toml("[tokens]\n\"1-2\" = \"MAYBE\"\n").is_err());
    }
}
