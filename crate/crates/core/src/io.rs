//! Instance file format and machine-readable reports.
//!
//! Instances are JSON:
//!
//! ```json
//! {"m": 2, "k": 1, "utility_class": "sum",
//!  "agents": [{"x": "1/6", "approve": [1, 2]}, {"x": "0.25", "approve": [2]}]}
//! ```
//!
//! Rationals are written as `"num/den"` strings; decimal strings are read as
//! exact decimal fractions. In reports agents are numbered from 1, like
//! facilities.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audit::{AuditReport, RatioReport};
use crate::model::{Agent, Instance, Lottery, ModelError, Preference, UtilityClass};
use crate::rational::Rational;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("agents[{index}]: {source}")]
    Agent { index: usize, source: ModelError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub x: Rational,
    pub approve: Vec<usize>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub m: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub utility_class: UtilityClass,
    pub agents: Vec<AgentFile>,
}

fn default_k() -> usize {
    1
}

impl From<&Instance> for InstanceFile {
    fn from(instance: &Instance) -> Self {
        InstanceFile {
            m: instance.m(),
            k: instance.k(),
            utility_class: instance.utility_class(),
            agents: instance
                .agents()
                .iter()
                .map(|a| AgentFile { x: a.position, approve: a.preference.facilities().collect() })
                .collect(),
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = IoError;

    fn try_from(file: InstanceFile) -> Result<Self, IoError> {
        let agents = file
            .agents
            .into_iter()
            .enumerate()
            .map(|(index, a)| {
                Preference::new(a.approve)
                    .and_then(|p| Agent::new(a.x, p))
                    .map_err(|source| IoError::Agent { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Instance::new(agents, file.m, file.k, file.utility_class)?)
    }
}

pub fn instance_from_json(text: &str) -> Result<Instance, IoError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    Instance::try_from(file)
}

/// Deterministic compact JSON.
pub fn instance_to_json(instance: &Instance) -> String {
    serde_json::to_string(&InstanceFile::from(instance)).expect("instance serializes")
}

pub fn instance_to_json_pretty(instance: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from(instance)).expect("instance serializes")
}

/// First 16 hex digits of the SHA-256 of the compact JSON form.
pub fn instance_digest(instance: &Instance) -> String {
    let digest = Sha256::digest(instance_to_json(instance).as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct PlacementJson {
    pub facility: usize,
    pub location: Rational,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct LotteryEntryJson {
    pub probability: Rational,
    pub placements: Vec<PlacementJson>,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct EvalReportJson {
    pub schema_version: u32,
    pub mechanism: String,
    pub instance_id: String,
    pub lottery: Vec<LotteryEntryJson>,
    pub expected_welfare: Rational,
    pub expected_welfare_decimal: f64,
}

pub fn lottery_json(lottery: &Lottery) -> Vec<LotteryEntryJson> {
    lottery
        .support()
        .iter()
        .map(|(p, o)| LotteryEntryJson {
            probability: *p,
            placements: o
                .placements()
                .iter()
                .map(|&(facility, location)| PlacementJson { facility, location })
                .collect(),
        })
        .collect()
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct MisreportJson {
    pub agent: usize,
    pub x: Rational,
    pub approve: Vec<usize>,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct ViolationJson {
    pub coalition: Vec<usize>,
    pub misreports: Vec<MisreportJson>,
    pub utility_before: Vec<Rational>,
    pub utility_after: Vec<Rational>,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct AuditReportJson {
    pub schema_version: u32,
    pub mechanism: String,
    pub instance_id: String,
    pub setting: String,
    pub grid: u32,
    pub max_coalition: usize,
    pub verdict: String,
    pub note: String,
    pub deviations_checked: u64,
    pub violations: Vec<ViolationJson>,
}

/// Context an audit was run in, for report headers.
#[derive(Clone, Debug)]
pub struct AuditContext<'a> {
    pub mechanism: &'a str,
    pub instance_id: &'a str,
    pub setting: &'a str,
    pub grid: u32,
    pub max_coalition: usize,
}

pub fn audit_report_json(ctx: &AuditContext<'_>, report: &AuditReport) -> AuditReportJson {
    let note = if report.passed() {
        "no violation in the searched deviation space (not a proof)".to_string()
    } else {
        format!("{} profitable deviation(s) found", report.violations.len())
    };
    AuditReportJson {
        schema_version: SCHEMA_VERSION,
        mechanism: ctx.mechanism.to_string(),
        instance_id: ctx.instance_id.to_string(),
        setting: ctx.setting.to_string(),
        grid: ctx.grid,
        max_coalition: ctx.max_coalition,
        verdict: report.verdict.to_string(),
        note,
        deviations_checked: report.deviations_checked,
        violations: report
            .violations
            .iter()
            .map(|v| ViolationJson {
                coalition: v.coalition.iter().map(|i| i + 1).collect(),
                misreports: v
                    .coalition
                    .iter()
                    .zip(&v.misreports)
                    .map(|(i, a)| MisreportJson {
                        agent: i + 1,
                        x: a.position,
                        approve: a.preference.facilities().collect(),
                    })
                    .collect(),
                utility_before: v.truthful_utilities.clone(),
                utility_after: v.deviant_utilities.clone(),
            })
            .collect(),
    }
}

pub const AUDIT_CSV_HEADER: &str =
    "mechanism,instance_id,setting,verdict,n_deviations,first_violation_agent,utility_before,utility_after";

/// One CSV data row (no trailing newline). Coalition columns use `;` to join
/// multiple members.
pub fn audit_csv_row(ctx: &AuditContext<'_>, report: &AuditReport) -> String {
    let (agent, before, after) = match report.violations.first() {
        None => (String::new(), String::new(), String::new()),
        Some(v) => (
            join(v.coalition.iter().map(|i| (i + 1).to_string())),
            join(v.truthful_utilities.iter().map(|u| u.to_string())),
            join(v.deviant_utilities.iter().map(|u| u.to_string())),
        ),
    };
    [
        csv_field(ctx.mechanism),
        csv_field(ctx.instance_id),
        csv_field(ctx.setting),
        report.verdict.to_string(),
        report.deviations_checked.to_string(),
        agent,
        before,
        after,
    ]
    .join(",")
}

fn join<I: Iterator<Item = String>>(it: I) -> String {
    it.collect::<Vec<_>>().join(";")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct RatioReportJson {
    pub schema_version: u32,
    pub mechanism: String,
    pub instance_id: String,
    pub instance_digest: String,
    pub mechanism_welfare: Rational,
    pub optimal_welfare: Rational,
    pub ratio: String,
    pub ratio_decimal: f64,
    pub proven_bound: Option<String>,
    pub within_bound: Option<bool>,
}

pub fn ratio_report_json(
    mechanism: &crate::mechanisms::Mechanism,
    instance_id: &str,
    report: &RatioReport,
) -> RatioReportJson {
    let bound = mechanism.proven_bound();
    RatioReportJson {
        schema_version: SCHEMA_VERSION,
        mechanism: mechanism.to_string(),
        instance_id: instance_id.to_string(),
        instance_digest: report.instance_digest.clone(),
        mechanism_welfare: report.mechanism_welfare,
        optimal_welfare: report.optimal_welfare,
        ratio: report.ratio.to_string(),
        ratio_decimal: report.ratio.to_f64(),
        proven_bound: bound.map(|b| b.to_string()),
        within_bound: bound.map(|b| report.within(b)),
    }
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct SearchReportJson {
    pub schema_version: u32,
    pub mechanism: String,
    pub seed: u64,
    pub iterations: u64,
    pub max_ratio: String,
    pub max_ratio_decimal: f64,
    pub proven_bound: Option<String>,
    pub exceeds_bound: Option<bool>,
    pub witness_instance: InstanceFile,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_format() {
        let inst = instance_from_json(
            r#"{"m": 2, "k": 1, "utility_class": "sum",
                "agents": [{"x": "1/6", "approve": [1, 2]}, {"x": "0.25", "approve": [2]}]}"#,
        )
        .unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.agents()[1].position, Rational::new(1, 4));
        assert_eq!(inst.agents()[0].preference, Preference::both());
    }

    #[test]
    fn defaults_to_one_facility_and_sum() {
        let inst = instance_from_json(r#"{"m": 3, "agents": [{"x": "0", "approve": [3]}]}"#).unwrap();
        assert_eq!((inst.k(), inst.utility_class()), (1, UtilityClass::Sum));
    }

    #[test]
    fn reports_offending_agent() {
        let err = instance_from_json(r#"{"m": 2, "agents": [{"x": "0", "approve": [1]}, {"x": "0", "approve": []}]}"#)
            .unwrap_err();
        assert_eq!(err.to_string(), "agents[1]: an agent must approve at least one facility");
        let err = instance_from_json(r#"{"m": 2, "agents": [{"x": "2", "approve": [1]}]}"#).unwrap_err();
        assert!(err.to_string().starts_with("agents[0]"));
        let err = instance_from_json("{\"m\": 2,\n \"agents\": [{\"x\": 0.5, \"approve\": [1]}]}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    fn arb_instance() -> impl Strategy<Value = Instance> {
        (2usize..5, proptest::collection::vec((0i128..=24, 1u32..16), 1..7)).prop_flat_map(|(m, raw)| {
            (1..=m).prop_map(move |k| {
                let agents = raw
                    .iter()
                    .map(|&(x, mask)| {
                        let mask = (mask % ((1 << m) - 1)) + 1;
                        Agent::at(Rational::new(x, 24), Preference::from_mask(mask).unwrap())
                    })
                    .collect();
                Instance::new(agents, m, k, UtilityClass::MinDist).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(inst in arb_instance()) {
            let text = instance_to_json(&inst);
            let back = instance_from_json(&text).unwrap();
            prop_assert_eq!(&back, &inst);
            prop_assert_eq!(instance_to_json(&back), text);
            prop_assert_eq!(instance_digest(&back), instance_digest(&inst));
        }
    }
}
