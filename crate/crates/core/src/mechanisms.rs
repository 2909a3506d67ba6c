//! Mechanisms mapping a reported instance to a lottery over outcomes.
//!
//! Randomized mechanisms return their distribution; nothing is sampled.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{optimal_choice, median_of_approvers, Instance, Lottery, ModelError, Outcome};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MechanismError {
    #[error("{mechanism} requires m=2, k=1 (instance has m={m}, k={k})")]
    Unsupported { mechanism: String, m: usize, k: usize },
    #[error("probability {0} is outside [0, 1]")]
    BadProbability(Rational),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse mechanism `{input}`: {reason}")]
pub struct ParseMechanismError {
    pub input: String,
    pub reason: String,
}

/// How Random Dictatorship resolves a dictator approving both facilities.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum TieRule {
    /// Lowest facility id. Not used by RD itself; documents the deterministic
    /// tie-break shared by the Middle family.
    LowestIndex,
    /// The welfare-optimal facility of the reported instance.
    Optimal,
    /// Facility 1 with probability `p`.
    Fixed(Rational),
    /// Facility `j` with probability `n_j / (n_1 + n_2)`.
    Proportional,
}

/// Counts-only rule choosing which facility a Random-Median mechanism opens.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum MedianRule {
    /// Facility 1 with probability `p`, regardless of counts.
    Constant(Rational),
    Proportional,
    Mirror,
}

impl MedianRule {
    /// `(q1, q2)` for approval counts `(n1, n2)`.
    pub fn probabilities(&self, n1: usize, n2: usize) -> (Rational, Rational) {
        match *self {
            MedianRule::Constant(p) => (p, Rational::ONE - p),
            MedianRule::Proportional => {
                let total = Rational::from(n1 + n2);
                let q1 = Rational::from(n1) / total;
                (q1, Rational::ONE - q1)
            }
            MedianRule::Mirror => {
                if n1 >= n2 {
                    let a = mirror_alpha(n1, n2);
                    (a, Rational::ONE - a)
                } else {
                    let a = mirror_alpha(n2, n1);
                    (Rational::ONE - a, a)
                }
            }
        }
    }
}

/// `(3 big - 2 small) / (4 big - 2 small)`, requires `big >= small`, `big >= 1`.
pub fn mirror_alpha(big: usize, small: usize) -> Rational {
    debug_assert!(big >= small && big >= 1);
    let (b, s) = (big as i128, small as i128);
    Rational::new(3 * b - 2 * s, 4 * b - 2 * s)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Mechanism {
    Middle,
    KmMiddle,
    RandomMedian(MedianRule),
    Proportional,
    Mirror,
    RandomDictatorship(TieRule),
}

impl Mechanism {
    pub fn apply(&self, instance: &Instance) -> Result<Lottery, MechanismError> {
        match *self {
            Mechanism::Middle => middle(instance),
            Mechanism::KmMiddle => Ok(km_middle(instance)),
            Mechanism::RandomMedian(rule) => random_median(instance, rule),
            Mechanism::Proportional => proportional(instance),
            Mechanism::Mirror => mirror(instance),
            Mechanism::RandomDictatorship(tie) => random_dictatorship(instance, tie),
        }
    }

    pub fn supports(&self, instance: &Instance) -> bool {
        matches!(self, Mechanism::KmMiddle) || instance.is_two_facility()
    }

    /// Proven worst-case approximation ratio where one is known exactly, as
    /// `(value, is_irrational)`; Proportional's bound is `(1 + sqrt 3) / 2`.
    pub fn proven_bound(&self) -> Option<ProvenBound> {
        match self {
            Mechanism::Middle | Mechanism::KmMiddle => Some(ProvenBound::Rational(Rational::from(2))),
            Mechanism::Mirror => Some(ProvenBound::Rational(Rational::new(4, 3))),
            Mechanism::Proportional => Some(ProvenBound::OnePlusSqrt3Over2),
            Mechanism::RandomDictatorship(TieRule::Optimal) => {
                Some(ProvenBound::Rational(Rational::new(3, 2)))
            }
            _ => None,
        }
    }
}

/// Upper bound on a mechanism's approximation ratio.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProvenBound {
    Rational(Rational),
    OnePlusSqrt3Over2,
}

impl fmt::Display for ProvenBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProvenBound::Rational(r) => write!(f, "{r}"),
            ProvenBound::OnePlusSqrt3Over2 => f.write_str("(1+sqrt3)/2"),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Middle => f.write_str("middle"),
            Mechanism::KmMiddle => f.write_str("km-middle"),
            Mechanism::RandomMedian(MedianRule::Constant(p)) => write!(f, "random-median:{p}"),
            Mechanism::RandomMedian(MedianRule::Proportional) => f.write_str("random-median:proportional"),
            Mechanism::RandomMedian(MedianRule::Mirror) => f.write_str("random-median:mirror"),
            Mechanism::Proportional => f.write_str("proportional"),
            Mechanism::Mirror => f.write_str("mirror"),
            Mechanism::RandomDictatorship(TieRule::Optimal) => f.write_str("rd:optimal"),
            Mechanism::RandomDictatorship(TieRule::Fixed(p)) => write!(f, "rd:fixed:{p}"),
            Mechanism::RandomDictatorship(TieRule::Proportional) => f.write_str("rd:proportional"),
            Mechanism::RandomDictatorship(TieRule::LowestIndex) => f.write_str("rd:lowest-index"),
        }
    }
}

fn probability(input: &str, raw: &str) -> Result<Rational, ParseMechanismError> {
    let err = |reason: String| ParseMechanismError { input: input.to_string(), reason };
    let p: Rational = raw.parse().map_err(|e| err(format!("{e}")))?;
    if !p.in_unit_interval() {
        return Err(err(format!("probability {p} is outside [0, 1]")));
    }
    Ok(p)
}

impl FromStr for Mechanism {
    type Err = ParseMechanismError;

    /// `middle`, `km-middle`, `proportional`, `mirror`, `rd:optimal`,
    /// `rd:fixed:<p>`, `rd:proportional`, `rd:lowest-index`,
    /// `random-median:<p>` (facility 1 with probability `p`),
    /// `random-median:proportional`, `random-median:mirror`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseMechanismError { input: s.to_string(), reason: reason.to_string() };
        match s {
            "middle" => return Ok(Mechanism::Middle),
            "km-middle" => return Ok(Mechanism::KmMiddle),
            "proportional" => return Ok(Mechanism::Proportional),
            "mirror" => return Ok(Mechanism::Mirror),
            "rd:optimal" => return Ok(Mechanism::RandomDictatorship(TieRule::Optimal)),
            "rd:proportional" => return Ok(Mechanism::RandomDictatorship(TieRule::Proportional)),
            "rd:lowest-index" => return Ok(Mechanism::RandomDictatorship(TieRule::LowestIndex)),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("rd:fixed:") {
            return Ok(Mechanism::RandomDictatorship(TieRule::Fixed(probability(s, p)?)));
        }
        if let Some(rule) = s.strip_prefix("random-median:") {
            return Ok(Mechanism::RandomMedian(match rule {
                "proportional" => MedianRule::Proportional,
                "mirror" => MedianRule::Mirror,
                p => MedianRule::Constant(probability(s, p)?),
            }));
        }
        Err(err("unknown mechanism"))
    }
}

fn require_two_facility(name: &str, instance: &Instance) -> Result<(), MechanismError> {
    if instance.is_two_facility() {
        Ok(())
    } else {
        Err(MechanismError::Unsupported { mechanism: name.to_string(), m: instance.m(), k: instance.k() })
    }
}

/// Places the most approved facility at 1/2; ties go to facility 1.
pub fn middle(instance: &Instance) -> Result<Lottery, MechanismError> {
    require_two_facility("middle", instance)?;
    Ok(km_middle(instance))
}

/// Places the `k` most approved facilities at 1/2; ties go to lower ids.
pub fn km_middle(instance: &Instance) -> Lottery {
    let mut counts: Vec<(usize, usize)> = (1..=instance.m()).map(|j| (j, instance.approval_count(j))).collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let placements = counts
        .into_iter()
        .take(instance.k())
        .map(|(j, _)| (j, Rational::HALF))
        .collect();
    Lottery::point(Outcome::new(placements).expect("distinct facilities"))
}

/// Opens facility `j` with the rule's probability at the lower median of its
/// approvers. A facility nobody approves keeps its probability and is placed
/// at 1/2.
pub fn random_median(instance: &Instance, rule: MedianRule) -> Result<Lottery, MechanismError> {
    require_two_facility("random-median", instance)?;
    if let MedianRule::Constant(p) = rule {
        if !p.in_unit_interval() {
            return Err(MechanismError::BadProbability(p));
        }
    }
    let (q1, q2) = rule.probabilities(instance.approval_count(1), instance.approval_count(2));
    let place = |j| Outcome::single(j, median_of_approvers(instance, j).unwrap_or(Rational::HALF));
    Ok(Lottery::from_weighted([(q1, place(1)), (q2, place(2))])?)
}

pub fn proportional(instance: &Instance) -> Result<Lottery, MechanismError> {
    random_median(instance, MedianRule::Proportional)
}

pub fn mirror(instance: &Instance) -> Result<Lottery, MechanismError> {
    random_median(instance, MedianRule::Mirror)
}

/// Each agent dictates with probability `1/n`: a single-approval dictator
/// gets her facility at her reported position, a dual approver is resolved
/// by `tie` (evaluated on the reported instance).
pub fn random_dictatorship(instance: &Instance, tie: TieRule) -> Result<Lottery, MechanismError> {
    require_two_facility("random dictatorship", instance)?;
    if let TieRule::Fixed(p) = tie {
        if !p.in_unit_interval() {
            return Err(MechanismError::BadProbability(p));
        }
    }
    let share = Rational::ONE / Rational::from(instance.n());
    let (first, second) = match tie {
        TieRule::Optimal => {
            let j = optimal_choice(instance).outcome.placements()[0].0;
            if j == 1 {
                (Rational::ONE, Rational::ZERO)
            } else {
                (Rational::ZERO, Rational::ONE)
            }
        }
        TieRule::LowestIndex => (Rational::ONE, Rational::ZERO),
        TieRule::Fixed(p) => (p, Rational::ONE - p),
        TieRule::Proportional => MedianRule::Proportional
            .probabilities(instance.approval_count(1), instance.approval_count(2)),
    };

    let mut entries = Vec::with_capacity(2 * instance.n());
    for agent in instance.agents() {
        let x = agent.position;
        match (agent.preference.approves(1), agent.preference.approves(2)) {
            (true, true) => {
                entries.push((share * first, Outcome::single(1, x)));
                entries.push((share * second, Outcome::single(2, x)));
            }
            (true, false) => entries.push((share, Outcome::single(1, x))),
            (false, true) => entries.push((share, Outcome::single(2, x))),
            (false, false) => unreachable!("preferences are non-empty"),
        }
    }
    Ok(Lottery::from_weighted(entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expected_welfare, Agent, Preference, UtilityClass};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn a(x: &str, approvals: &[usize]) -> Agent {
        Agent::at(r(x), Preference::new(approvals.iter().copied()).unwrap())
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "middle",
            "km-middle",
            "proportional",
            "mirror",
            "rd:optimal",
            "rd:proportional",
            "rd:fixed:1/2",
            "random-median:1/3",
            "random-median:proportional",
            "random-median:mirror",
        ] {
            let m: Mechanism = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!(
            "rd:fixed:0.25".parse::<Mechanism>().unwrap(),
            Mechanism::RandomDictatorship(TieRule::Fixed(r("1/4")))
        );
        assert!("rd:fixed:3/2".parse::<Mechanism>().is_err());
        assert!("median".parse::<Mechanism>().is_err());
    }

    #[test]
    fn middle_single_agent_and_wrong_shape() {
        let inst = Instance::two_facility(vec![a("0.9", &[2])]).unwrap();
        assert_eq!(middle(&inst).unwrap(), Lottery::point(Outcome::single(2, Rational::HALF)));
        let multi = Instance::new(vec![a("0", &[3])], 3, 1, UtilityClass::Sum).unwrap();
        assert!(matches!(middle(&multi), Err(MechanismError::Unsupported { .. })));
        assert!(matches!(mirror(&multi), Err(MechanismError::Unsupported { .. })));
    }

    #[test]
    fn mirror_alpha_values() {
        assert_eq!(mirror_alpha(2, 1), r("2/3"));
        assert_eq!(mirror_alpha(5, 5), Rational::HALF);
        assert_eq!(mirror_alpha(3, 0), r("3/4"));
        assert_eq!(MedianRule::Mirror.probabilities(1, 2), (r("1/3"), r("2/3")));
    }

    #[test]
    fn proportional_probabilities() {
        assert_eq!(MedianRule::Proportional.probabilities(3, 1), (r("3/4"), r("1/4")));
        assert_eq!(MedianRule::Proportional.probabilities(4, 4), (Rational::HALF, Rational::HALF));
    }

    #[test]
    fn constant_rule_degenerates_to_point_mass() {
        let inst = Instance::two_facility(vec![a("0.1", &[1]), a("0.7", &[1, 2]), a("1", &[2])]).unwrap();
        let l = random_median(&inst, MedianRule::Constant(Rational::ONE)).unwrap();
        assert_eq!(l, Lottery::point(Outcome::single(1, r("0.1"))));
    }

    #[test]
    fn empty_facility_is_placed_at_half() {
        let inst = Instance::two_facility(vec![a("0.2", &[1]), a("0.4", &[1])]).unwrap();
        let l = mirror(&inst).unwrap();
        assert_eq!(l.probability_of(&Outcome::single(2, Rational::HALF)), r("1/4"));
        assert_eq!(l.probability_of(&Outcome::single(1, r("0.2"))), r("3/4"));
        assert_eq!(expected_welfare(&inst, &l).unwrap(), r("3/4") * r("1.8"));
    }

    #[test]
    fn rd_single_agent_every_tie_rule() {
        let inst = Instance::two_facility(vec![a("0.3", &[1])]).unwrap();
        for tie in [TieRule::Optimal, TieRule::Proportional, TieRule::Fixed(r("0.2")), TieRule::LowestIndex] {
            assert_eq!(
                random_dictatorship(&inst, tie).unwrap(),
                Lottery::point(Outcome::single(1, r("0.3")))
            );
        }
    }

    #[test]
    fn rd_fixed_one_sends_dual_approvers_to_facility_one() {
        let inst = Instance::two_facility(vec![a("0", &[1, 2]), a("1/2", &[2]), a("1", &[1, 2])]).unwrap();
        let fixed = random_dictatorship(&inst, TieRule::Fixed(Rational::ONE)).unwrap();
        let lowest = random_dictatorship(&inst, TieRule::LowestIndex).unwrap();
        assert_eq!(fixed, lowest);
        assert_eq!(fixed.support().len(), 3);
    }

    #[test]
    fn km_middle_breaks_ties_by_index() {
        let agents = (1..=4).map(|j| Agent::at(Rational::HALF, Preference::only(j))).collect();
        let inst = Instance::new(agents, 4, 2, UtilityClass::Sum).unwrap();
        let expect = Outcome::new(vec![(1, Rational::HALF), (2, Rational::HALF)]).unwrap();
        assert_eq!(km_middle(&inst), Lottery::point(expect));
    }
}
