use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::experiment::{Condition, Order};

/// Integer answer range of one instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorItem {
    pub id: String,
    #[serde(default)]
    pub reverse: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    /// Key into [`FactorMap::scales`].
    pub scale: String,
    pub items: Vec<FactorItem>,
}

/// Which questionnaire items make up each factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorMap {
    pub scales: BTreeMap<String, Scale>,
    pub factors: Vec<Factor>,
}

impl FactorMap {
    pub fn from_toml(text: &str) -> Result<Self, StatsError> {
        let map: FactorMap = toml::from_str(text).map_err(|e| StatsError::FactorMap(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, StatsError> {
        let text = std::fs::read_to_string(path).map_err(|e| StatsError::FactorMap(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let bad = |m: String| Err(StatsError::FactorMap(m));
        for (name, s) in &self.scales {
            if s.min >= s.max {
                return bad(format!("scale {name} has min {} >= max {}", s.min, s.max));
            }
        }
        let mut names = BTreeSet::new();
        let mut seen: BTreeMap<(&str, &str), &str> = BTreeMap::new();
        for f in &self.factors {
            if !names.insert(f.name.as_str()) {
                return bad(format!("factor {} listed twice", f.name));
            }
            if !self.scales.contains_key(&f.scale) {
                return bad(format!("factor {} uses unknown scale {}", f.name, f.scale));
            }
            if f.items.is_empty() {
                return bad(format!("factor {} has no items", f.name));
            }
            for item in &f.items {
                if let Some(other) = seen.insert((f.scale.as_str(), item.id.as_str()), f.name.as_str()) {
                    return bad(format!("item {} appears in both {other} and {}", item.id, f.name));
                }
            }
        }
        Ok(())
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    fn scale_of(&self, item: &str) -> Option<Scale> {
        self.factors
            .iter()
            .find(|f| f.items.iter().any(|i| i.id == item))
            .map(|f| self.scales[&f.scale])
    }
}

/// One completed questionnaire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub participant_id: String,
    pub condition: Condition,
    pub order: Order,
    pub items: BTreeMap<String, i64>,
}

/// Per participant: order group and factor means under each condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    pub participant_id: String,
    pub order: Order,
    /// factor → (REA, ADA)
    pub factors: BTreeMap<String, (f64, f64)>,
}

fn parse_order(s: &str) -> Option<Order> {
    match s.trim().to_ascii_uppercase().as_str() {
        "A" => Some(Order::A),
        "B" => Some(Order::B),
        _ => None,
    }
}

/// Reads the wide CSV layout: `participant_id, condition, order` and one
/// integer column per item. Empty cells are treated as unanswered.
pub fn read_responses<R: Read>(input: R, map: &FactorMap) -> Result<Vec<QuestionnaireResponse>, StatsError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rd.headers().map_err(|e| StatsError::Input(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| StatsError::Input(format!("missing column {name}")))
    };
    let (pid, cond, ord) = (col("participant_id")?, col("condition")?, col("order")?);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| StatsError::Input(e.to_string()))?;
        let at = |msg: String| StatsError::Input(format!("row {}: {msg}", line + 2));
        let participant_id = rec[pid].to_string();
        let condition: Condition = rec[cond].parse().map_err(at)?;
        let order = parse_order(&rec[ord]).ok_or_else(|| at(format!("order '{}' is not A or B", &rec[ord])))?;
        if !seen.insert((participant_id.clone(), condition)) {
            return Err(StatsError::Duplicate { participant: participant_id, condition: condition.to_string() });
        }
        let mut items = BTreeMap::new();
        for (i, h) in headers.iter().enumerate() {
            if i == pid || i == cond || i == ord || rec[i].is_empty() {
                continue;
            }
            let score: i64 = rec[i].parse().map_err(|_| at(format!("item {h}: '{}' is not an integer", &rec[i])))?;
            if let Some(scale) = map.scale_of(h) {
                if score < scale.min || score > scale.max {
                    return Err(StatsError::OutOfRange {
                        participant: participant_id,
                        item: h.to_string(),
                        score,
                        min: scale.min,
                        max: scale.max,
                    });
                }
            }
            items.insert(h.to_string(), score);
        }
        out.push(QuestionnaireResponse { participant_id, condition, order, items });
    }
    Ok(out)
}

fn factor_mean(resp: &QuestionnaireResponse, factor: &Factor, scale: Scale) -> Result<f64, StatsError> {
    let mut sum = 0.0;
    for item in &factor.items {
        let score = *resp.items.get(&item.id).ok_or_else(|| StatsError::MissingItem {
            participant: resp.participant_id.clone(),
            item: item.id.clone(),
        })?;
        if score < scale.min || score > scale.max {
            return Err(StatsError::OutOfRange {
                participant: resp.participant_id.clone(),
                item: item.id.clone(),
                score,
                min: scale.min,
                max: scale.max,
            });
        }
        let value = if item.reverse { scale.min + scale.max - score } else { score };
        sum += value as f64;
    }
    Ok(sum / factor.items.len() as f64)
}

/// Factor means per participant and condition, items reverse-coded where
/// the map says so. Every participant must have answered under both
/// conditions, in one order group.
pub fn score_factors(responses: &[QuestionnaireResponse], map: &FactorMap) -> Result<Vec<FactorScores>, StatsError> {
    map.validate()?;
    let mut by_participant: BTreeMap<&str, [Option<&QuestionnaireResponse>; 2]> = BTreeMap::new();
    for r in responses {
        let slot = &mut by_participant.entry(&r.participant_id).or_default()[match r.condition {
            Condition::Rea => 0,
            Condition::Ada => 1,
        }];
        if slot.is_some() {
            return Err(StatsError::Duplicate { participant: r.participant_id.clone(), condition: r.condition.to_string() });
        }
        *slot = Some(r);
    }
    by_participant
        .into_iter()
        .map(|(id, [rea, ada])| {
            let (rea, ada) = rea.zip(ada).ok_or_else(|| StatsError::Unpaired(id.to_string()))?;
            if rea.order != ada.order {
                return Err(StatsError::Input(format!("participant {id} listed in both order groups")));
            }
            let mut factors = BTreeMap::new();
            for f in &map.factors {
                let scale = map.scales[&f.scale];
                factors.insert(f.name.clone(), (factor_mean(rea, f, scale)?, factor_mean(ada, f, scale)?));
            }
            Ok(FactorScores { participant_id: id.to_string(), order: rea.order, factors })
        })
        .collect()
}
