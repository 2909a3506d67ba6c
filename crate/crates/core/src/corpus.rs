//! Constructors for the instances behind the known bounds: lower-bound pairs,
//! manipulation examples, and the worst cases of Random Dictatorship.
//!
//! Named lookups (`fig1:1/100`, `km-nongsp:5:2`, ...) go through [`resolve`].

use thiserror::Error;

use crate::model::{Agent, Instance, ModelError, Preference, UtilityClass};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("{name} must satisfy {constraint} (got {value})")]
    OutOfRange { name: &'static str, constraint: &'static str, value: String },
    #[error("unknown corpus instance `{0}`; known: {known}", known = NAMES.join(", "))]
    UnknownName(String),
    #[error("bad parameter in `{input}`: {reason}")]
    BadParameter { input: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Base names accepted by [`resolve`]; `-prime` variants name the second
/// instance of a pair.
pub const NAMES: &[&str] = &[
    "fig1",
    "fig1-prime",
    "fig2",
    "fig2-prime",
    "random-median-lb",
    "random-median-lb-prime",
    "fig3",
    "fig3-prime",
    "prd",
    "km-nongsp",
    "km-lb",
    "km-lb-final",
    "rd-worst-case",
];

pub const DEFAULT_EPSILON: (i128, i128) = (1, 100);
pub const DEFAULT_FIG3: (usize, i128, i128) = (4, 1, 10);

/// An instance and the variant it is compared against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstancePair {
    pub original: Instance,
    pub modified: Instance,
}

fn one(j: usize) -> Preference {
    Preference::only(j)
}

fn check_epsilon(eps: Rational) -> Result<(), CorpusError> {
    if eps <= Rational::ZERO || eps >= Rational::HALF {
        return Err(CorpusError::OutOfRange {
            name: "epsilon",
            constraint: "0 < epsilon < 1/2",
            value: eps.to_string(),
        });
    }
    Ok(())
}

/// Two agents per facility, one of each at `eps` and at 1; the second
/// instance moves the facility-1 agent at `eps` to 1.
pub fn fig1_pair(eps: Rational) -> Result<InstancePair, CorpusError> {
    check_epsilon(eps)?;
    let agents = vec![
        Agent::at(eps, one(2)),
        Agent::at(eps, one(1)),
        Agent::at(Rational::ONE, one(2)),
        Agent::at(Rational::ONE, one(1)),
    ];
    let original = Instance::two_facility(agents)?;
    let modified = original.with_agent(1, Agent::at(Rational::ONE, one(1)))?;
    Ok(InstancePair { original, modified })
}

/// Known-positions pair; the agent at 1/6 approves both facilities in the
/// first instance and only facility 2 in the second.
pub fn fig2_pair() -> InstancePair {
    let original = Instance::two_facility(vec![
        Agent::at(Rational::ZERO, one(2)),
        Agent::at(Rational::new(1, 6), Preference::both()),
        Agent::at(Rational::new(5, 6), Preference::both()),
        Agent::at(Rational::ONE, one(1)),
    ])
    .expect("valid");
    let modified = original
        .with_agent(1, Agent::at(Rational::new(1, 6), one(2)))
        .expect("valid");
    InstancePair { original, modified }
}

/// One agent per facility at `eps` and at `1 - eps`; the second instance
/// moves the facility-1 agent at `1 - eps` to `eps`.
pub fn random_median_lb_pair(eps: Rational) -> Result<InstancePair, CorpusError> {
    check_epsilon(eps)?;
    let far = Rational::ONE - eps;
    let original = Instance::two_facility(vec![
        Agent::at(eps, one(2)),
        Agent::at(eps, one(1)),
        Agent::at(far, one(2)),
        Agent::at(far, one(1)),
    ])?;
    let modified = original.with_agent(3, Agent::at(eps, one(1)))?;
    Ok(InstancePair { original, modified })
}

/// `(1,0)` at 0, `n - 2` dual approvers at `1/2 - eps`, `(0,1)` at 1; the
/// second instance moves the last agent onto the dual approvers.
pub fn fig3_pair(n: usize, eps: Rational) -> Result<InstancePair, CorpusError> {
    if n < 4 {
        return Err(CorpusError::OutOfRange { name: "n", constraint: "n >= 4", value: n.to_string() });
    }
    check_epsilon(eps)?;
    let inner = Rational::HALF - eps;
    let mut agents = vec![Agent::at(Rational::ZERO, one(1))];
    agents.extend(std::iter::repeat_n(Agent::at(inner, Preference::both()), n - 2));
    agents.push(Agent::at(Rational::ONE, one(2)));
    let original = Instance::two_facility(agents)?;
    let modified = original.with_agent(n - 1, Agent::at(inner, one(2)))?;
    Ok(InstancePair { original, modified })
}

/// Fifty agents defeating every fixed tie-breaking probability.
pub fn prd_instance() -> Instance {
    let mut agents = Vec::with_capacity(50);
    agents.extend(std::iter::repeat_n(Agent::at(Rational::ZERO, Preference::both()), 15));
    agents.extend(std::iter::repeat_n(Agent::at(Rational::ZERO, one(1)), 15));
    agents.extend(std::iter::repeat_n(Agent::at(Rational::ONE, one(1)), 10));
    agents.extend(std::iter::repeat_n(Agent::at(Rational::ONE, one(2)), 10));
    Instance::two_facility(agents).expect("valid")
}

/// Agent `i` approves only facility `i`; everyone sits at 1/2.
pub fn km_nongsp_instance(m: usize, k: usize) -> Result<Instance, CorpusError> {
    if m < 4 {
        return Err(CorpusError::OutOfRange { name: "m", constraint: "m >= 4", value: m.to_string() });
    }
    if k < 2 || k > m - 2 {
        return Err(CorpusError::OutOfRange { name: "k", constraint: "2 <= k <= m - 2", value: k.to_string() });
    }
    let agents = (1..=m).map(|j| Agent::at(Rational::HALF, one(j))).collect();
    Ok(Instance::new(agents, m, k, UtilityClass::Sum)?)
}

/// `I_0, ..., I_{m-k}`: two approvers per facility (at `eps` and 1, agents
/// `2j - 2` and `2j - 1` for facility `j`); `I_t` moves the `eps` agents of
/// facilities `k+1 ..= k+t` to 1. Facilities `1..=k` are the ones
/// km-Middle selects on `I_0`.
pub fn km_lb_sequence(m: usize, k: usize, eps: Rational) -> Result<Vec<Instance>, CorpusError> {
    if k == 0 || 2 * k > m {
        return Err(CorpusError::OutOfRange { name: "k", constraint: "1 <= k <= m/2", value: k.to_string() });
    }
    check_epsilon(eps)?;
    let agents: Vec<Agent> = (1..=m)
        .flat_map(|j| [Agent::at(eps, one(j)), Agent::at(Rational::ONE, one(j))])
        .collect();
    let mut current = Instance::new(agents, m, k, UtilityClass::Sum)?;
    let mut seq = vec![current.clone()];
    for j in k + 1..=m {
        current = current.with_agent(2 * (j - 1), Agent::at(Rational::ONE, one(j)))?;
        seq.push(current.clone());
    }
    Ok(seq)
}

/// Three facility-1 agents at 0, one at 1, one facility-2 agent at each end.
pub fn rd_worst_case() -> Instance {
    let mut agents = vec![Agent::at(Rational::ZERO, one(1)); 3];
    agents.push(Agent::at(Rational::ONE, one(1)));
    agents.push(Agent::at(Rational::ZERO, one(2)));
    agents.push(Agent::at(Rational::ONE, one(2)));
    Instance::two_facility(agents).expect("valid")
}

/// Agents whose attributes differ between two instances of equal size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentDiff {
    pub agent: usize,
    pub position_changed: bool,
    pub preference_changed: bool,
}

pub fn differences(a: &Instance, b: &Instance) -> Vec<AgentDiff> {
    assert_eq!(a.n(), b.n(), "instances differ in size");
    a.agents()
        .iter()
        .zip(b.agents())
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(agent, (x, y))| AgentDiff {
            agent,
            position_changed: x.position != y.position,
            preference_changed: x.preference != y.preference,
        })
        .collect()
}

fn parse_param<T: std::str::FromStr>(input: &str, raw: &str) -> Result<T, CorpusError>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| CorpusError::BadParameter { input: input.to_string(), reason: e.to_string() })
}

/// Looks up a corpus instance by name with optional `:`-separated
/// parameters: `fig1[:eps]`, `random-median-lb[:eps]`, `fig3[:n[:eps]]`,
/// `km-nongsp[:m:k]`, `km-lb[:m:k[:eps]]`. Defaults: `eps = 1/100`,
/// `fig3` uses `n = 4, eps = 1/10`, `km-nongsp` and `km-lb` use `m = 4, k = 2`.
pub fn resolve(name: &str) -> Result<Instance, CorpusError> {
    let mut parts = name.split(':');
    let base = parts.next().unwrap_or_default();
    let params: Vec<&str> = parts.collect();
    let too_many = |max: usize| -> Result<(), CorpusError> {
        if params.len() > max {
            Err(CorpusError::BadParameter { input: name.to_string(), reason: format!("at most {max} parameter(s)") })
        } else {
            Ok(())
        }
    };
    let eps_at = |i: usize, default: (i128, i128)| -> Result<Rational, CorpusError> {
        params
            .get(i)
            .map(|p| parse_param::<Rational>(name, p))
            .unwrap_or(Ok(Rational::new(default.0, default.1)))
    };
    let usize_at = |i: usize, default: usize| -> Result<usize, CorpusError> {
        params.get(i).map(|p| parse_param::<usize>(name, p)).unwrap_or(Ok(default))
    };

    match base {
        "fig1" | "fig1-prime" => {
            too_many(1)?;
            let pair = fig1_pair(eps_at(0, DEFAULT_EPSILON)?)?;
            Ok(if base == "fig1" { pair.original } else { pair.modified })
        }
        "fig2" | "fig2-prime" => {
            too_many(0)?;
            let pair = fig2_pair();
            Ok(if base == "fig2" { pair.original } else { pair.modified })
        }
        "random-median-lb" | "random-median-lb-prime" => {
            too_many(1)?;
            let pair = random_median_lb_pair(eps_at(0, DEFAULT_EPSILON)?)?;
            Ok(if base == "random-median-lb" { pair.original } else { pair.modified })
        }
        "fig3" | "fig3-prime" => {
            too_many(2)?;
            let (n0, e0, e1) = DEFAULT_FIG3;
            let pair = fig3_pair(usize_at(0, n0)?, eps_at(1, (e0, e1))?)?;
            Ok(if base == "fig3" { pair.original } else { pair.modified })
        }
        "prd" => {
            too_many(0)?;
            Ok(prd_instance())
        }
        "km-nongsp" => {
            too_many(2)?;
            km_nongsp_instance(usize_at(0, 4)?, usize_at(1, 2)?)
        }
        "km-lb" | "km-lb-final" => {
            too_many(3)?;
            let seq = km_lb_sequence(usize_at(0, 4)?, usize_at(1, 2)?, eps_at(2, DEFAULT_EPSILON)?)?;
            Ok(if base == "km-lb" { seq[0].clone() } else { seq.last().expect("non-empty").clone() })
        }
        "rd-worst-case" => {
            too_many(0)?;
            Ok(rd_worst_case())
        }
        _ => Err(CorpusError::UnknownName(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{optimal_choice, social_welfare, Outcome};

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    #[test]
    fn pairs_differ_in_the_stated_attribute() {
        let p = fig1_pair(r("1/100")).unwrap();
        assert_eq!(differences(&p.original, &p.modified), vec![AgentDiff {
            agent: 1,
            position_changed: true,
            preference_changed: false
        }]);
        let p = fig2_pair();
        assert_eq!(differences(&p.original, &p.modified), vec![AgentDiff {
            agent: 1,
            position_changed: false,
            preference_changed: true
        }]);
        assert_eq!(p.original.agents()[1].position, r("1/6"));
        let p = random_median_lb_pair(r("1/1000")).unwrap();
        assert_eq!(differences(&p.original, &p.modified), vec![AgentDiff {
            agent: 3,
            position_changed: true,
            preference_changed: false
        }]);
        let p = fig3_pair(6, r("1/10")).unwrap();
        assert_eq!(differences(&p.original, &p.modified), vec![AgentDiff {
            agent: 5,
            position_changed: true,
            preference_changed: false
        }]);
    }

    #[test]
    fn parameter_ranges() {
        assert!(fig1_pair(r("1/2")).is_err());
        assert!(fig1_pair(Rational::ZERO).is_err());
        assert!(fig3_pair(3, r("1/10")).is_err());
        assert!(km_nongsp_instance(4, 3).is_err());
        assert!(km_nongsp_instance(3, 1).is_err());
        assert!(km_lb_sequence(4, 3, r("1/10")).is_err());
    }

    #[test]
    fn fig1_values() {
        let p = fig1_pair(r("1/100")).unwrap();
        assert_eq!(p.original.approval_count(1), 2);
        assert_eq!(p.original.approval_count(2), 2);
        let opt = optimal_choice(&p.modified);
        assert_eq!(opt.welfare, r("2"));
        assert_eq!(opt.outcome, Outcome::single(1, Rational::ONE));
        for y in ["0", "1/100", "1/2", "1"] {
            assert!(social_welfare(&p.modified, &Outcome::single(2, r(y))).unwrap() <= r("101/100"));
        }
    }

    #[test]
    fn km_sequence_shape() {
        let seq = km_lb_sequence(6, 3, r("1/100")).unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(seq[0].n(), 12);
        assert_eq!(differences(&seq[1], &seq[2]).len(), 1);
        let last = seq.last().unwrap();
        assert!(last.agents().iter().filter(|a| !a.preference.approves(1) && !a.preference.approves(2) && !a.preference.approves(3)).all(|a| a.position == Rational::ONE));
    }

    #[test]
    fn resolves_names() {
        assert_eq!(resolve("fig2").unwrap(), fig2_pair().original);
        assert_eq!(resolve("fig1:1/10").unwrap(), fig1_pair(r("1/10")).unwrap().original);
        assert_eq!(resolve("fig3").unwrap().agents()[1].position, r("2/5"));
        assert_eq!(resolve("fig3:5:1/4").unwrap().n(), 5);
        assert_eq!(resolve("km-nongsp:5:2").unwrap().m(), 5);
        assert_eq!(resolve("prd").unwrap().n(), 50);
        assert!(matches!(resolve("fig9"), Err(CorpusError::UnknownName(_))));
        assert!(matches!(resolve("fig1:x"), Err(CorpusError::BadParameter { .. })));
        assert!(matches!(resolve("fig2:1"), Err(CorpusError::BadParameter { .. })));
        for name in NAMES {
            resolve(name).unwrap();
        }
    }
}
