//! Strategyproofness audits by exhaustive misreport enumeration, and
//! approximation-ratio evaluation.
//!
//! A `Pass` only means that no profitable misreport exists inside the
//! searched deviation space; it is not a proof.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::io::instance_digest;
use crate::mechanisms::{Mechanism, MechanismError, ProvenBound};
use crate::model::{
    combinations, expected_agent_utility, expected_welfare, optimal_choice, Agent, InformationSetting, Instance,
    ModelError, Preference,
};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("deviation space of {size} misreports exceeds the cap of {cap}")]
    TooLarge { size: u128, cap: u128 },
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Misreports considered by an audit.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct DeviationSpace {
    pub setting: InformationSetting,
    /// Position misreports range over `{0, 1/q, ..., 1}`.
    pub position_grid_denominator: u32,
    /// Also try every agent's true position, and 0, 1/2, 1.
    pub include_positions: bool,
    /// Upper bound on the number of misreport profiles evaluated.
    pub max_deviations: u128,
}

impl DeviationSpace {
    pub const DEFAULT_CAP: u128 = 50_000_000;

    pub fn new(setting: InformationSetting, position_grid_denominator: u32) -> Self {
        assert!(position_grid_denominator >= 1, "grid denominator must be positive");
        DeviationSpace {
            setting,
            position_grid_denominator,
            include_positions: true,
            max_deviations: Self::DEFAULT_CAP,
        }
    }

    pub fn with_cap(mut self, max_deviations: u128) -> Self {
        self.max_deviations = max_deviations;
        self
    }

    fn positions(&self, instance: &Instance, truth: Rational) -> Vec<Rational> {
        if !self.setting.positions_private() {
            return vec![truth];
        }
        let q = self.position_grid_denominator as i128;
        let mut xs: Vec<Rational> = (0..=q).map(|i| Rational::new(i, q)).collect();
        if self.include_positions {
            xs.extend(instance.agents().iter().map(|a| a.position));
            xs.extend([Rational::ZERO, Rational::HALF, Rational::ONE]);
        }
        xs.sort();
        xs.dedup();
        xs
    }

    fn preferences(&self, instance: &Instance, truth: Preference) -> Vec<Preference> {
        if self.setting.preferences_private() {
            Preference::all(instance.m()).collect()
        } else {
            vec![truth]
        }
    }

    /// Every admissible report of agent `i` other than the truthful one,
    /// sorted by position then preference.
    pub fn misreports(&self, instance: &Instance, i: usize) -> Vec<Agent> {
        let truth = instance.agents()[i];
        let prefs = self.preferences(instance, truth.preference);
        self.positions(instance, truth.position)
            .into_iter()
            .flat_map(|x| prefs.iter().map(move |&p| Agent { position: x, preference: p }))
            .filter(|a| *a != truth)
            .collect()
    }
}

/// A coalition whose joint misreport strictly benefits every member.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Violation {
    pub coalition: Vec<usize>,
    pub misreports: Vec<Agent>,
    pub truthful_utilities: Vec<Rational>,
    pub deviant_utilities: Vec<Rational>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AuditReport {
    pub verdict: Verdict,
    /// Sorted by coalition, then by misreport.
    pub violations: Vec<Violation>,
    pub deviations_checked: u64,
}

impl AuditReport {
    fn from_violations(violations: Vec<Violation>, deviations_checked: u64) -> Self {
        let verdict = if violations.is_empty() { Verdict::Pass } else { Verdict::Fail };
        AuditReport { verdict, violations, deviations_checked }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Unilateral misreports only.
pub fn audit_strategyproof(
    mechanism: &Mechanism,
    instance: &Instance,
    space: &DeviationSpace,
) -> Result<AuditReport, AuditError> {
    audit_group_strategyproof(mechanism, instance, space, 1)
}

/// Every coalition of `1..=max_coalition` agents, every member misreporting.
///
/// Members reporting truthfully need not be enumerated: if such a coalition
/// gains, so does the sub-coalition of its misreporting members.
pub fn audit_group_strategyproof(
    mechanism: &Mechanism,
    instance: &Instance,
    space: &DeviationSpace,
    max_coalition: usize,
) -> Result<AuditReport, AuditError> {
    let n = instance.n();
    let max_coalition = max_coalition.min(n);
    let truthful = mechanism.apply(instance)?;
    let truthful_utilities: Vec<Rational> = (0..n)
        .map(|i| expected_agent_utility(instance, i, &truthful))
        .collect::<Result<_, _>>()?;
    let reports: Vec<Vec<Agent>> = (0..n).map(|i| space.misreports(instance, i)).collect();

    let coalitions: Vec<Vec<usize>> = (1..=max_coalition)
        .flat_map(|size| combinations(n, size))
        .map(|c| c.into_iter().map(|i| i - 1).collect())
        .collect();

    let size = coalitions
        .iter()
        .map(|c| c.iter().fold(1u128, |acc, &i| acc.saturating_mul(reports[i].len() as u128)))
        .fold(0u128, u128::saturating_add);
    if size > space.max_deviations {
        return Err(AuditError::TooLarge { size, cap: space.max_deviations });
    }

    let per_coalition: Vec<Result<(u64, Vec<Violation>), AuditError>> = coalitions
        .par_iter()
        .map(|coalition| check_coalition(mechanism, instance, coalition, &reports, &truthful_utilities))
        .collect();

    let mut checked = 0u64;
    let mut violations = Vec::new();
    for result in per_coalition {
        let (count, found) = result?;
        checked += count;
        violations.extend(found);
    }
    Ok(AuditReport::from_violations(violations, checked))
}

fn check_coalition(
    mechanism: &Mechanism,
    instance: &Instance,
    coalition: &[usize],
    reports: &[Vec<Agent>],
    truthful_utilities: &[Rational],
) -> Result<(u64, Vec<Violation>), AuditError> {
    let lists: Vec<&[Agent]> = coalition.iter().map(|&i| reports[i].as_slice()).collect();
    if lists.iter().any(|l| l.is_empty()) {
        return Ok((0, Vec::new()));
    }
    let mut idx = vec![0usize; coalition.len()];
    let mut checked = 0u64;
    let mut found = Vec::new();
    let mut agents = instance.agents().to_vec();
    loop {
        for (slot, &i) in coalition.iter().enumerate() {
            agents[i] = lists[slot][idx[slot]];
        }
        let reported = Instance::new(agents.clone(), instance.m(), instance.k(), instance.utility_class())?;
        let lottery = mechanism.apply(&reported)?;
        checked += 1;

        let mut deviant = Vec::with_capacity(coalition.len());
        for &i in coalition {
            let u = expected_agent_utility(instance, i, &lottery)?;
            if u <= truthful_utilities[i] {
                break;
            }
            deviant.push(u);
        }
        if deviant.len() == coalition.len() {
            found.push(Violation {
                coalition: coalition.to_vec(),
                misreports: coalition.iter().map(|&i| agents[i]).collect(),
                truthful_utilities: coalition.iter().map(|&i| truthful_utilities[i]).collect(),
                deviant_utilities: deviant,
            });
        }

        let mut pos = coalition.len();
        loop {
            if pos == 0 {
                return Ok((checked, found));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < lists[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `W*/E[W]`, or infinity when the mechanism earns nothing but the optimum
/// is positive. An instance where both are zero has ratio 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Ratio {
    Finite(Rational),
    Infinite,
}

impl Ratio {
    pub fn of(optimal: Rational, achieved: Rational) -> Self {
        if achieved.is_zero() {
            if optimal.is_zero() {
                Ratio::Finite(Rational::ONE)
            } else {
                Ratio::Infinite
            }
        } else {
            Ratio::Finite(optimal / achieved)
        }
    }

    pub fn finite(&self) -> Option<Rational> {
        match self {
            Ratio::Finite(r) => Some(*r),
            Ratio::Infinite => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Ratio::Finite(r) => r.to_f64(),
            Ratio::Infinite => f64::INFINITY,
        }
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Ratio::Finite(a), Ratio::Finite(b)) => a.cmp(b),
            (Ratio::Finite(_), Ratio::Infinite) => Ordering::Less,
            (Ratio::Infinite, Ratio::Finite(_)) => Ordering::Greater,
            (Ratio::Infinite, Ratio::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(r) => write!(f, "{r}"),
            Ratio::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RatioReport {
    pub instance_digest: String,
    pub mechanism_welfare: Rational,
    pub optimal_welfare: Rational,
    pub ratio: Ratio,
}

/// The ratio alone, without the digest.
pub fn ratio_value(mechanism: &Mechanism, instance: &Instance) -> Result<Ratio, MechanismError> {
    let lottery = mechanism.apply(instance)?;
    let achieved = expected_welfare(instance, &lottery)?;
    Ok(Ratio::of(optimal_choice(instance).welfare, achieved))
}

pub fn approximation_ratio(mechanism: &Mechanism, instance: &Instance) -> Result<RatioReport, MechanismError> {
    let lottery = mechanism.apply(instance)?;
    let mechanism_welfare = expected_welfare(instance, &lottery)?;
    let optimal_welfare = optimal_choice(instance).welfare;
    Ok(RatioReport {
        instance_digest: instance_digest(instance),
        mechanism_welfare,
        optimal_welfare,
        ratio: Ratio::of(optimal_welfare, mechanism_welfare),
    })
}

/// `W*/E[W] <= (1 + sqrt 3)/2` decided exactly: squaring gives
/// `2 W*^2 - 2 E^2 <= sqrt 3 * E^2`, which holds outright when the left side
/// is non-positive and otherwise iff `(2 W*^2 - 2 E^2)^2 <= 3 E^4`.
pub fn within_one_plus_sqrt3_over_2(optimal: Rational, achieved: Rational) -> bool {
    if achieved.is_zero() {
        return optimal.is_zero();
    }
    let two = Rational::from(2);
    let lhs = two * optimal * optimal - two * achieved * achieved;
    if lhs <= Rational::ZERO {
        return true;
    }
    lhs * lhs <= Rational::from(3) * achieved.pow(4)
}

impl RatioReport {
    /// Whether the ratio respects `bound`, decided in exact arithmetic.
    pub fn within(&self, bound: ProvenBound) -> bool {
        match bound {
            ProvenBound::Rational(b) => self.ratio <= Ratio::Finite(b),
            ProvenBound::OnePlusSqrt3Over2 => {
                within_one_plus_sqrt3_over_2(self.optimal_welfare, self.mechanism_welfare)
            }
        }
    }
}
