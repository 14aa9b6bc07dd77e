use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ats::{ats_interaction, AtsResult, SubjectScores};
use super::scoring::{FactorMap, FactorScores};
use super::wilcoxon::{wilcoxon_signed_rank, EffectLabel, TestResult};
use super::StatsError;
use crate::exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub factor: String,
    /// Paired test of ADA against REA (differences ADA − REA).
    pub wilcoxon: TestResult,
    pub interaction: AtsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub participants: usize,
    pub factors: Vec<FactorReport>,
    pub hypotheses: Vec<HypothesisDecision>,
}

/// Runs the paired test and the interaction test for every factor in the
/// map, in map order, plus the hypothesis decisions when their factors are
/// present.
pub fn analyze(scores: &[FactorScores], map: &FactorMap) -> Result<Report, StatsError> {
    let names: Vec<&str> = map.factors.iter().map(|f| f.name.as_str()).collect();
    let per_factor = exec::map(&names, |name| -> Result<FactorReport, StatsError> {
        let mut pairs = Vec::with_capacity(scores.len());
        let mut subjects = Vec::with_capacity(scores.len());
        for s in scores {
            let (rea, ada) = *s.factors.get(*name).ok_or_else(|| StatsError::MissingFactor(name.to_string()))?;
            pairs.push((rea, ada));
            subjects.push(SubjectScores { order: s.order, rea, ada });
        }
        Ok(FactorReport {
            factor: name.to_string(),
            wilcoxon: wilcoxon_signed_rank(&pairs)?,
            interaction: ats_interaction(&subjects)?,
        })
    });
    let factors = per_factor.into_iter().collect::<Result<Vec<_>, _>>()?;
    let results: BTreeMap<String, TestResult> = factors.iter().map(|f| (f.factor.clone(), f.wilcoxon)).collect();
    let hypotheses = evaluate_hypotheses(&results).unwrap_or_default();
    Ok(Report { participants: scores.len(), factors, hypotheses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Rea,
    Ada,
    /// The interval contains zero.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisDecision {
    pub hypothesis: String,
    pub factor: String,
    pub reject: bool,
    pub label: EffectLabel,
    /// Which condition the effect favours, from the sign of the interval.
    pub direction: Direction,
}

/// Hypotheses of no median change, as (name, factor).
pub const HYPOTHESES: [(&str, &str); 3] = [
    ("H0(2)", "Animacy"),
    ("H0(3)", "Competence"),
    ("H0(4)", "Perceived Intelligence"),
];

/// A null of no median change is rejected once the effect is at least
/// medium; small or negligible effects keep it.
pub fn evaluate_hypotheses(results: &BTreeMap<String, TestResult>) -> Result<Vec<HypothesisDecision>, StatsError> {
    HYPOTHESES
        .iter()
        .map(|(h, factor)| {
            let r = results.get(*factor).ok_or_else(|| StatsError::MissingFactor(factor.to_string()))?;
            let direction = if r.ci_lower > 0.0 {
                Direction::Ada
            } else if r.ci_upper < 0.0 {
                Direction::Rea
            } else {
                Direction::Undetermined
            };
            Ok(HypothesisDecision {
                hypothesis: h.to_string(),
                factor: factor.to_string(),
                reject: r.label >= EffectLabel::Medium,
                label: r.label,
                direction,
            })
        })
        .collect()
}

impl Report {
    pub const CSV_HEADER: [&'static str; 11] = [
        "factor",
        "ci_lower",
        "ci_upper",
        "p",
        "r",
        "label",
        "n",
        "zeros_dropped",
        "method",
        "interaction_p",
        "interaction_method",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), StatsError> {
        let io = |e: csv::Error| StatsError::Input(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER).map_err(io)?;
        for f in &self.factors {
            let t = &f.wilcoxon;
            let method = serde_json::to_value(t.method).expect("enum serializes");
            let imethod = serde_json::to_value(f.interaction.method).expect("enum serializes");
            w.write_record([
                f.factor.clone(),
                t.ci_lower.to_string(),
                t.ci_upper.to_string(),
                t.p_value.to_string(),
                t.effect_size_r.to_string(),
                t.label.to_string(),
                t.n.to_string(),
                t.zeros_dropped.to_string(),
                method.as_str().unwrap_or_default().to_string(),
                f.interaction.p_value.to_string(),
                imethod.as_str().unwrap_or_default().to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| StatsError::Input(e.to_string()))
    }

    /// Plain-text table: factor, CI bounds, p, r, label, interaction p.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Wilcoxon signed-rank, ADA vs REA ({} participants)", self.participants);
        let _ = writeln!(
            s,
            "{:<24} {:>8} {:>8} {:>7} {:>6}  {:<10} {:>7}",
            "factor", "CI low", "CI high", "p", "r", "effect", "int. p"
        );
        for f in &self.factors {
            let t = &f.wilcoxon;
            let _ = writeln!(
                s,
                "{:<24} {:>8.3} {:>8.3} {:>7.3} {:>6.3}  {:<10} {:>7.3}",
                f.factor,
                t.ci_lower,
                t.ci_upper,
                t.p_value,
                t.effect_size_r,
                t.label.to_string(),
                f.interaction.p_value
            );
        }
        let dropped: usize = self.factors.iter().map(|f| f.wilcoxon.zeros_dropped).sum();
        if dropped > 0 {
            let _ = writeln!(s, "zero differences dropped before ranking: {dropped}");
        }
        for h in &self.hypotheses {
            let verdict = if h.reject { "reject" } else { "accept" };
            let dir = match h.direction {
                Direction::Ada => ", in favour of ADA",
                Direction::Rea => ", in favour of REA",
                Direction::Undetermined => "",
            };
            let _ = writeln!(s, "{} ({}): {verdict}, {} effect{dir}", h.hypothesis, h.factor, h.label);
        }
        s
    }
}
