//! Expected-versus-computed check tables for the corpus constructions.

use std::fmt;

use thiserror::Error;

use crate::audit::{approximation_ratio, audit_group_strategyproof, AuditError, DeviationSpace, Ratio};
use crate::corpus::{self, CorpusError};
use crate::mechanisms::{Mechanism, MechanismError, TieRule};
use crate::model::{
    expected_agent_utility, expected_welfare, optimal_choice, social_welfare, InformationSetting, Instance,
    ModelError, Outcome,
};
use crate::rational::Rational;

/// Names accepted by [`reproduce`], each optionally followed by the same
/// `:`-parameters as the corpus.
pub const REPRODUCIBLE: &[&str] = &["fig1", "fig2", "random-median-lb", "fig3", "prd", "km-nongsp", "km-lb", "rd-worst-case"];

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Relation {
    Equal,
    AtMost,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Equal => "=",
            Relation::AtMost => "<=",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub quantity: String,
    pub relation: Relation,
    pub expected: Ratio,
    pub computed: Ratio,
    pub holds: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reproduction {
    pub name: String,
    pub checks: Vec<Check>,
}

impl Reproduction {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

struct Table(Vec<Check>);

impl Table {
    fn push(&mut self, quantity: impl Into<String>, relation: Relation, expected: impl Into<Ratio>, computed: impl Into<Ratio>) -> &mut Check {
        let (expected, computed) = (expected.into(), computed.into());
        let holds = match relation {
            Relation::Equal => computed == expected,
            Relation::AtMost => computed <= expected,
        };
        self.0.push(Check { quantity: quantity.into(), relation, expected, computed, holds, note: None });
        self.0.last_mut().expect("just pushed")
    }

    fn eq(&mut self, quantity: impl Into<String>, expected: impl Into<Ratio>, computed: impl Into<Ratio>) -> &mut Check {
        self.push(quantity, Relation::Equal, expected, computed)
    }
}

impl From<Rational> for Ratio {
    fn from(r: Rational) -> Self {
        Ratio::Finite(r)
    }
}

fn int(v: usize) -> Rational {
    Rational::from(v)
}

/// Largest welfare of facility `j` alone over locations in `[lo, hi]`. The
/// welfare is piecewise linear with kinks at approver positions, so the
/// maximum sits at an endpoint or a kink.
pub fn max_welfare_on(instance: &Instance, j: usize, lo: Rational, hi: Rational) -> Rational {
    let mut candidates = vec![lo, hi];
    candidates.extend(instance.approver_positions(j).into_iter().filter(|x| lo <= *x && *x <= hi));
    candidates
        .into_iter()
        .map(|y| social_welfare(instance, &Outcome::single(j, y)).expect("two-facility location"))
        .max()
        .expect("non-empty")
}

fn ratio_of(mechanism: &Mechanism, instance: &Instance) -> Result<Ratio, ReproduceError> {
    Ok(approximation_ratio(mechanism, instance)?.ratio)
}

fn params(name: &str) -> (&str, Vec<&str>) {
    let mut parts = name.split(':');
    let base = parts.next().unwrap_or_default();
    (base, parts.collect())
}

/// Runs the check suite of a corpus construction. Parameters after the name
/// are forwarded to the corpus (`fig1:1/1000`, `km-lb:6:3:1/50`).
pub fn reproduce(name: &str) -> Result<Reproduction, ReproduceError> {
    let (base, args) = params(name);
    let suffix = |s: &str| if args.is_empty() { s.to_string() } else { format!("{s}:{}", args.join(":")) };
    let mut t = Table(Vec::new());
    let (zero, half, one) = (Rational::ZERO, Rational::HALF, Rational::ONE);
    match base {
        "fig1" => {
            let i = corpus::resolve(&suffix("fig1"))?;
            let ip = corpus::resolve(&suffix("fig1-prime"))?;
            let eps = i.agents()[0].position;
            t.eq("approvals of facility 1 in I", int(2), int(i.approval_count(1)));
            t.eq("approvals of facility 2 in I", int(2), int(i.approval_count(2)));
            t.eq("optimal welfare of I'", Rational::from(2), optimal_choice(&ip).welfare);
            t.push("max welfare of facility 2 in I'", Relation::AtMost, one + eps, max_welfare_on(&ip, 2, zero, one));
            t.eq("middle ratio on I'", Rational::from(2), ratio_of(&Mechanism::Middle, &ip)?);
        }
        "fig2" => {
            let pair = corpus::fig2_pair();
            let (i, ip) = (&pair.original, &pair.modified);
            let w = Rational::new(11, 6);
            t.eq("optimal welfare of I", Rational::new(13, 6), optimal_choice(i).welfare);
            t.eq("max welfare of facility 1 in I on [0, 1/2]", w, max_welfare_on(i, 1, zero, half));
            t.eq("max welfare of facility 1 in I' on [5/6, 1]", w, max_welfare_on(ip, 1, Rational::new(5, 6), one));
            t.eq("max welfare of facility 1 in I'", w, max_welfare_on(ip, 1, zero, one));
            t.eq("welfare of facility 2 at 1/6 in I'", Rational::new(13, 6), social_welfare(ip, &Outcome::single(2, Rational::new(1, 6)))?);
            t.eq("max welfare of facility 2 in I'", Rational::new(13, 6), max_welfare_on(ip, 2, zero, one));
            t.eq("ratio 13/6 over 11/6", Rational::new(13, 11), optimal_choice(i).welfare / max_welfare_on(i, 1, zero, half));
            t.eq("middle welfare on I", w, expected_welfare(i, &Mechanism::Middle.apply(i)?)?);
        }
        "random-median-lb" => {
            let ip = corpus::resolve(&suffix("random-median-lb-prime"))?;
            let eps = ip.agents()[0].position;
            let f1 = max_welfare_on(&ip, 1, zero, one);
            let f2 = max_welfare_on(&ip, 2, eps, one - eps);
            let two = Rational::from(2);
            t.eq("max welfare of facility 1 in I'", two, f1);
            t.eq("welfare of facility 1 at epsilon in I'", two, social_welfare(&ip, &Outcome::single(1, eps))?);
            t.eq("max welfare of facility 2 in I' on [eps, 1-eps]", one + two * eps, f2).note =
                Some("direct evaluation gives 1+2eps rather than 1+eps".to_string());
            t.eq("ratio floor 4/(3+2eps)", Rational::from(4) / (Rational::from(3) + two * eps), two * f1 / (f1 + f2));
            t.eq("mirror ratio on I'", two / (Rational::new(3, 2) + eps), ratio_of(&Mechanism::Mirror, &ip)?);
        }
        "fig3" => {
            let i = corpus::resolve(&suffix("fig3"))?;
            let ip = corpus::resolve(&suffix("fig3-prime"))?;
            let n = i.n();
            let eps = half - i.agents()[1].position;
            let rd = Mechanism::RandomDictatorship(TieRule::Optimal);
            let before = expected_agent_utility(&i, n - 1, &rd.apply(&i)?)?;
            let after = expected_agent_utility(&i, n - 1, &rd.apply(&ip)?)?;
            t.eq(format!("truthful utility of agent {n}"), one / int(n), before);
            t.eq(format!("utility of agent {n} after misreport"), int(n - 1) * (half - eps) / int(n), after)
                .note = Some(format!("tends to (n-1)/(2n) = {} as eps -> 0", int(n - 1) / int(2 * n)));
            let audit = crate::audit::audit_strategyproof(&rd, &i, &DeviationSpace::new(InformationSetting::General, 10))?;
            let witnessed = audit
                .violations
                .iter()
                .any(|v| v.coalition == [n - 1] && v.deviant_utilities[0] >= after);
            t.eq(format!("general audit finds a deviation of agent {n} at least as good"), one, if witnessed { one } else { zero });
        }
        "prd" => {
            let i = corpus::prd_instance();
            t.eq("optimal welfare", Rational::from(30), optimal_choice(&i).welfare);
            for p in [zero, Rational::new(1, 4), half, one] {
                let rd = Mechanism::RandomDictatorship(TieRule::Fixed(p));
                let formula = ((Rational::from(3) + p) * Rational::from(225) + Rational::from(200)) / Rational::from(50);
                t.eq(format!("rd:fixed:{p} expected welfare"), formula, expected_welfare(&i, &rd.apply(&i)?)?);
                t.eq(format!("rd:fixed:{p} ratio"), Rational::from(30) / formula, ratio_of(&rd, &i)?);
            }
            t.eq("ratio at p = 0", Rational::new(12, 7), ratio_of(&Mechanism::RandomDictatorship(TieRule::Fixed(zero)), &i)?);
            let p = Rational::new(40, 65);
            let formula = ((Rational::from(3) + p) * Rational::from(225) + Rational::from(200)) / Rational::from(50);
            t.eq("rd:proportional ratio", Rational::from(30) / formula, ratio_of(&Mechanism::RandomDictatorship(TieRule::Proportional), &i)?)
                .note = Some("dual approvers pick facility 1 with probability 40/65".to_string());
        }
        "km-nongsp" => {
            let i = corpus::resolve(&suffix("km-nongsp"))?;
            let (m, k) = (i.m(), i.k());
            for j in 1..=m {
                t.eq(format!("approvals of facility {j}"), one, int(i.approval_count(j)));
            }
            let chosen: Vec<usize> = Mechanism::KmMiddle.apply(&i)?.support()[0].1.placements().iter().map(|p| p.0).collect();
            t.eq("km-middle picks facilities 1..k", one, if chosen == (1..=k).collect::<Vec<_>>() { one } else { zero });
            let audit = audit_group_strategyproof(
                &Mechanism::KmMiddle,
                &i,
                &DeviationSpace::new(InformationSetting::General, 2),
                2,
            )?;
            let pair = vec![k, k + 1];
            let hit = audit.violations.iter().find(|v| v.coalition == pair);
            t.eq(format!("coalition {{{}, {}}} manipulates", k + 1, k + 2), one, if hit.is_some() { one } else { zero });
            if let Some(v) = hit {
                for (member, u) in v.coalition.iter().zip(&v.deviant_utilities) {
                    t.eq(format!("utility of agent {} after deviation", member + 1), one, *u);
                }
            }
        }
        "km-lb" => {
            let (m, k, eps) = match args.as_slice() {
                [] => (4, 2, Rational::new(corpus::DEFAULT_EPSILON.0, corpus::DEFAULT_EPSILON.1)),
                [m, k] => (parse(name, m)?, parse(name, k)?, Rational::new(corpus::DEFAULT_EPSILON.0, corpus::DEFAULT_EPSILON.1)),
                [m, k, e] => (parse(name, m)?, parse(name, k)?, parse(name, e)?),
                _ => return Err(CorpusError::BadParameter { input: name.to_string(), reason: "expected m:k[:eps]".into() }.into()),
            };
            let seq = corpus::km_lb_sequence(m, k, eps)?;
            t.eq("sequence length", int(m - k + 1), int(seq.len()));
            let bound = (one + eps) * int(k);
            for (idx, inst) in seq.iter().enumerate() {
                let w = expected_welfare(inst, &Mechanism::KmMiddle.apply(inst)?)?;
                t.push(format!("km-middle welfare on I_{idx}"), Relation::AtMost, bound, w);
            }
            t.eq("optimal welfare of the last instance", int(2 * k), optimal_choice(seq.last().expect("non-empty")).welfare);
        }
        "rd-worst-case" => {
            let i = corpus::rd_worst_case();
            t.eq("rd:optimal ratio", Rational::new(3, 2), ratio_of(&Mechanism::RandomDictatorship(TieRule::Optimal), &i)?);
            t.eq("optimal welfare", Rational::from(3), optimal_choice(&i).welfare);
        }
        _ => return Err(CorpusError::UnknownName(name.to_string()).into()),
    }
    Ok(Reproduction { name: name.to_string(), checks: t.0 })
}

fn parse<T: std::str::FromStr>(input: &str, raw: &str) -> Result<T, CorpusError>
where
    T::Err: fmt::Display,
{
    raw.parse().map_err(|e: T::Err| CorpusError::BadParameter { input: input.to_string(), reason: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_holds_with_defaults() {
        for name in REPRODUCIBLE {
            let rep = reproduce(name).unwrap();
            assert!(!rep.checks.is_empty());
            for c in &rep.checks {
                assert!(c.holds, "{name}: {} expected {} got {}", c.quantity, c.expected, c.computed);
            }
        }
    }

    #[test]
    fn parameters_are_forwarded() {
        let rep = reproduce("fig3:6:1/20").unwrap();
        assert!(rep.all_hold());
        assert_eq!(rep.checks[0].expected, Ratio::Finite(Rational::new(1, 6)));
        assert!(reproduce("km-lb:6:3:1/50").unwrap().all_hold());
    }

    #[test]
    fn unknown_names_and_bad_parameters() {
        assert!(matches!(reproduce("fig9"), Err(ReproduceError::Corpus(CorpusError::UnknownName(_)))));
        assert!(reproduce("fig1:2").is_err());
        assert!(reproduce("km-lb:4:x").is_err());
    }

    #[test]
    fn piecewise_maximum_on_interval() {
        let pair = corpus::fig2_pair();
        assert_eq!(max_welfare_on(&pair.modified, 2, Rational::ZERO, Rational::ONE), Rational::new(13, 6));
        assert_eq!(max_welfare_on(&pair.original, 1, Rational::ZERO, Rational::new(1, 4)), Rational::new(19, 12));
    }
}
