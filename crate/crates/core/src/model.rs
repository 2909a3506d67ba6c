//! Instances, outcomes and lotteries, together with utility, welfare and the
//! optimal-welfare oracles.
//!
//! Facilities are numbered `1..=m`. Agents are addressed by their 0-based
//! index in [`Instance::agents`].

use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

/// Upper bound on the number of facilities (approval sets are bitmasks).
pub const MAX_FACILITIES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("an agent must approve at least one facility")]
    EmptyPreference,
    #[error("facility {facility} is outside 1..={m}")]
    FacilityOutOfRange { facility: usize, m: usize },
    #[error("position {0} is outside [0, 1]")]
    PositionOutOfRange(Rational),
    #[error("an instance needs at least one agent")]
    NoAgents,
    #[error("invalid facility counts m={m}, k={k} (need 2 <= m <= {MAX_FACILITIES} and 1 <= k <= m)")]
    InvalidCounts { m: usize, k: usize },
    #[error("unknown agent {agent} (instance has {n} agents)")]
    UnknownAgent { agent: usize, n: usize },
    #[error("outcome places {found} facilities, instance selects k={expected}")]
    PlacementCount { expected: usize, found: usize },
    #[error("facility {0} is placed twice")]
    DuplicateFacility(usize),
    #[error("location {0} is outside [0, 1]")]
    LocationOutOfRange(Rational),
    #[error("lottery probabilities sum to {0}, not 1")]
    ProbabilitySum(Rational),
    #[error("negative probability {0}")]
    NegativeProbability(Rational),
    #[error("search space of {size} evaluations exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },
}

/// Non-empty set of approved facilities.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Preference(u32);

impl Preference {
    pub fn new<I: IntoIterator<Item = usize>>(facilities: I) -> Result<Self, ModelError> {
        let mut mask = 0u32;
        for j in facilities {
            if j == 0 || j > MAX_FACILITIES {
                return Err(ModelError::FacilityOutOfRange { facility: j, m: MAX_FACILITIES });
            }
            mask |= 1 << (j - 1);
        }
        Self::from_mask(mask)
    }

    pub fn from_mask(mask: u32) -> Result<Self, ModelError> {
        if mask == 0 {
            Err(ModelError::EmptyPreference)
        } else {
            Ok(Preference(mask))
        }
    }

    /// Approves exactly facility `j`.
    pub fn only(j: usize) -> Self {
        assert!((1..=MAX_FACILITIES).contains(&j), "facility {j} out of range");
        Preference(1 << (j - 1))
    }

    /// Approves both facilities of the two-facility setting.
    pub fn both() -> Self {
        Preference(0b11)
    }

    pub fn mask(&self) -> u32 {
        self.0
    }

    pub fn approves(&self, j: usize) -> bool {
        (1..=MAX_FACILITIES).contains(&j) && self.0 & (1 << (j - 1)) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_facility(&self) -> usize {
        32 - self.0.leading_zeros() as usize
    }

    pub fn facilities(&self) -> impl Iterator<Item = usize> + '_ {
        (1..=MAX_FACILITIES).filter(move |&j| self.approves(j))
    }

    /// Every non-empty subset of `{1..=m}`, ordered by bitmask.
    pub fn all(m: usize) -> impl Iterator<Item = Preference> {
        assert!(m <= MAX_FACILITIES);
        let top: u64 = 1u64 << m;
        (1..top).map(|mask| Preference(mask as u32))
    }
}

impl fmt::Debug for Preference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.facilities()).finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Agent {
    pub position: Rational,
    pub preference: Preference,
}

impl Agent {
    pub fn new(position: Rational, preference: Preference) -> Result<Self, ModelError> {
        if !position.in_unit_interval() {
            return Err(ModelError::PositionOutOfRange(position));
        }
        Ok(Agent { position, preference })
    }

    /// Convenience for literals; panics on an out-of-range position.
    pub fn at(position: Rational, preference: Preference) -> Self {
        Self::new(position, preference).expect("agent position in [0, 1]")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize, Default)]
pub enum UtilityClass {
    /// Sum over every chosen approved facility.
    #[default]
    #[serde(rename = "sum")]
    Sum,
    /// Only the closest chosen approved facility counts.
    #[serde(rename = "min")]
    MinDist,
    /// Minimum over all chosen facilities, unapproved ones contributing 0.
    #[serde(rename = "max")]
    MaxDist,
}

impl fmt::Display for UtilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UtilityClass::Sum => "sum",
            UtilityClass::MinDist => "min",
            UtilityClass::MaxDist => "max",
        })
    }
}

impl std::str::FromStr for UtilityClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sum" => Ok(UtilityClass::Sum),
            "min" => Ok(UtilityClass::MinDist),
            "max" => Ok(UtilityClass::MaxDist),
            other => Err(format!("unknown utility class `{other}` (expected sum, min or max)")),
        }
    }
}

/// Which agent attributes are private, and hence misreportable.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InformationSetting {
    General,
    KnownPreferences,
    KnownPositions,
}

impl InformationSetting {
    pub fn positions_private(&self) -> bool {
        matches!(self, InformationSetting::General | InformationSetting::KnownPreferences)
    }

    pub fn preferences_private(&self) -> bool {
        matches!(self, InformationSetting::General | InformationSetting::KnownPositions)
    }
}

impl fmt::Display for InformationSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InformationSetting::General => "general",
            InformationSetting::KnownPreferences => "known-preferences",
            InformationSetting::KnownPositions => "known-positions",
        })
    }
}

impl std::str::FromStr for InformationSetting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "general" => Ok(InformationSetting::General),
            "known-preferences" | "known-prefs" => Ok(InformationSetting::KnownPreferences),
            "known-positions" => Ok(InformationSetting::KnownPositions),
            other => Err(format!(
                "unknown setting `{other}` (expected general, known-preferences or known-positions)"
            )),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Instance {
    agents: Vec<Agent>,
    m: usize,
    k: usize,
    utility_class: UtilityClass,
}

impl Instance {
    pub fn new(
        agents: Vec<Agent>,
        m: usize,
        k: usize,
        utility_class: UtilityClass,
    ) -> Result<Self, ModelError> {
        if !(2..=MAX_FACILITIES).contains(&m) || k == 0 || k > m {
            return Err(ModelError::InvalidCounts { m, k });
        }
        if agents.is_empty() {
            return Err(ModelError::NoAgents);
        }
        for a in &agents {
            if !a.position.in_unit_interval() {
                return Err(ModelError::PositionOutOfRange(a.position));
            }
            if a.preference.max_facility() > m {
                return Err(ModelError::FacilityOutOfRange { facility: a.preference.max_facility(), m });
            }
        }
        Ok(Instance { agents, m, k, utility_class })
    }

    /// Two facilities, one to be located, additive utilities.
    pub fn two_facility(agents: Vec<Agent>) -> Result<Self, ModelError> {
        Self::new(agents, 2, 1, UtilityClass::Sum)
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> Result<&Agent, ModelError> {
        self.agents.get(i).ok_or(ModelError::UnknownAgent { agent: i, n: self.n() })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn utility_class(&self) -> UtilityClass {
        self.utility_class
    }

    pub fn is_two_facility(&self) -> bool {
        self.m == 2 && self.k == 1
    }

    /// Same instance with agent `i` replaced.
    pub fn with_agent(&self, i: usize, agent: Agent) -> Result<Self, ModelError> {
        self.agent(i)?;
        let mut agents = self.agents.clone();
        agents[i] = agent;
        Self::new(agents, self.m, self.k, self.utility_class)
    }

    pub fn with_utility_class(&self, utility_class: UtilityClass) -> Self {
        Instance { utility_class, ..self.clone() }
    }

    /// Number of agents approving facility `j`.
    pub fn approval_count(&self, j: usize) -> usize {
        self.agents.iter().filter(|a| a.preference.approves(j)).count()
    }

    /// Sorted positions of the agents approving facility `j`.
    pub fn approver_positions(&self, j: usize) -> Vec<Rational> {
        let mut xs: Vec<Rational> = self
            .agents
            .iter()
            .filter(|a| a.preference.approves(j))
            .map(|a| a.position)
            .collect();
        xs.sort();
        xs
    }
}

/// Chosen facilities and their locations, sorted by facility id.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    placements: Vec<(usize, Rational)>,
}

impl Outcome {
    pub fn new(mut placements: Vec<(usize, Rational)>) -> Result<Self, ModelError> {
        placements.sort();
        for w in placements.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::DuplicateFacility(w[0].0));
            }
        }
        for &(j, y) in &placements {
            if j == 0 || j > MAX_FACILITIES {
                return Err(ModelError::FacilityOutOfRange { facility: j, m: MAX_FACILITIES });
            }
            if !y.in_unit_interval() {
                return Err(ModelError::LocationOutOfRange(y));
            }
        }
        Ok(Outcome { placements })
    }

    /// A single facility `j` at `y`. Panics on invalid input.
    pub fn single(j: usize, y: Rational) -> Self {
        Self::new(vec![(j, y)]).expect("valid single placement")
    }

    pub fn placements(&self) -> &[(usize, Rational)] {
        &self.placements
    }

    pub fn location_of(&self, j: usize) -> Option<Rational> {
        self.placements.iter().find(|p| p.0 == j).map(|p| p.1)
    }

    pub fn check_against(&self, instance: &Instance) -> Result<(), ModelError> {
        if self.placements.len() != instance.k() {
            return Err(ModelError::PlacementCount {
                expected: instance.k(),
                found: self.placements.len(),
            });
        }
        if let Some(&(j, _)) = self.placements.iter().find(|p| p.0 > instance.m()) {
            return Err(ModelError::FacilityOutOfRange { facility: j, m: instance.m() });
        }
        Ok(())
    }
}

impl fmt::Debug for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .placements
            .iter()
            .map(|(j, y)| format!("f{j}@{y}"))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Finite-support distribution over outcomes.
///
/// The support is sorted by outcome, merged, and free of zero-probability
/// entries, so two lotteries describing the same distribution compare equal.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Lottery {
    support: Vec<(Rational, Outcome)>,
}

impl Lottery {
    pub fn point(outcome: Outcome) -> Self {
        Lottery { support: vec![(Rational::ONE, outcome)] }
    }

    pub fn from_weighted<I>(entries: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (Rational, Outcome)>,
    {
        let mut sorted: Vec<(Outcome, Rational)> = Vec::new();
        for (p, o) in entries {
            if p.is_negative() {
                return Err(ModelError::NegativeProbability(p));
            }
            sorted.push((o, p));
        }
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut support: Vec<(Rational, Outcome)> = Vec::with_capacity(sorted.len());
        for (o, p) in sorted {
            match support.last_mut() {
                Some(last) if last.1 == o => last.0 += p,
                _ => support.push((p, o)),
            }
        }
        support.retain(|(p, _)| !p.is_zero());
        let total: Rational = support.iter().map(|e| e.0).sum();
        if total != Rational::ONE {
            return Err(ModelError::ProbabilitySum(total));
        }
        Ok(Lottery { support })
    }

    pub fn support(&self) -> &[(Rational, Outcome)] {
        &self.support
    }

    pub fn probability_of(&self, outcome: &Outcome) -> Rational {
        self.support
            .iter()
            .find(|(_, o)| o == outcome)
            .map(|e| e.0)
            .unwrap_or(Rational::ZERO)
    }

    pub fn is_deterministic(&self) -> bool {
        self.support.len() == 1
    }
}

/// `t_ij * (1 - |x_i - y_j|)`.
fn term(agent: &Agent, j: usize, y: Rational) -> Rational {
    if agent.preference.approves(j) {
        Rational::ONE - (agent.position - y).abs()
    } else {
        Rational::ZERO
    }
}

/// Utility without consistency checks; callers validate the outcome first.
pub(crate) fn utility_unchecked(agent: &Agent, class: UtilityClass, outcome: &Outcome) -> Rational {
    let mut terms = outcome.placements.iter().map(|&(j, y)| term(agent, j, y));
    match class {
        UtilityClass::Sum => terms.sum(),
        UtilityClass::MinDist => terms.fold(Rational::ZERO, Rational::max),
        UtilityClass::MaxDist => match terms.next() {
            Some(first) => terms.fold(first, Rational::min),
            None => Rational::ZERO,
        },
    }
}

pub fn agent_utility(instance: &Instance, agent_id: usize, outcome: &Outcome) -> Result<Rational, ModelError> {
    let agent = instance.agent(agent_id)?;
    outcome.check_against(instance)?;
    Ok(utility_unchecked(agent, instance.utility_class(), outcome))
}

pub fn social_welfare(instance: &Instance, outcome: &Outcome) -> Result<Rational, ModelError> {
    outcome.check_against(instance)?;
    Ok(welfare_unchecked(instance, outcome))
}

pub(crate) fn welfare_unchecked(instance: &Instance, outcome: &Outcome) -> Rational {
    let class = instance.utility_class();
    instance
        .agents()
        .iter()
        .map(|a| utility_unchecked(a, class, outcome))
        .sum()
}

pub fn expected_welfare(instance: &Instance, lottery: &Lottery) -> Result<Rational, ModelError> {
    let mut total = Rational::ZERO;
    for (p, o) in lottery.support() {
        total += *p * social_welfare(instance, o)?;
    }
    Ok(total)
}

/// Expected utility of `agent_id` at her attributes in `instance`, which may
/// differ from the reports that produced `lottery`.
pub fn expected_agent_utility(
    instance: &Instance,
    agent_id: usize,
    lottery: &Lottery,
) -> Result<Rational, ModelError> {
    let mut total = Rational::ZERO;
    for (p, o) in lottery.support() {
        total += *p * agent_utility(instance, agent_id, o)?;
    }
    Ok(total)
}

/// Lower median of the positions of facility `j`'s approvers, `None` when
/// nobody approves it.
pub fn median_of_approvers(instance: &Instance, j: usize) -> Option<Rational> {
    let xs = instance.approver_positions(j);
    lower_median(&xs)
}

pub(crate) fn lower_median(sorted: &[Rational]) -> Option<Rational> {
    if sorted.is_empty() {
        None
    } else {
        Some(sorted[(sorted.len() - 1) / 2])
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OptimalChoice {
    pub outcome: Outcome,
    pub welfare: Rational,
}

/// Best location and welfare of a single facility `j` on its own; `(0, 0)`
/// without approvers. The approvers' lower median is the smallest maximizer.
pub(crate) fn best_single_placement(instance: &Instance, j: usize) -> (Rational, Rational) {
    match median_of_approvers(instance, j) {
        None => (Rational::ZERO, Rational::ZERO),
        Some(y) => {
            let w = instance.agents().iter().map(|a| term(a, j, y)).sum();
            (y, w)
        }
    }
}

/// Welfare-maximizing outcome. Ties go to the lowest facility ids, then to
/// the smallest locations.
///
/// Exact for every `(m, k)` and utility class:
/// * `k = 1` and `Sum`: each facility's welfare is concave piecewise-linear
///   in its location and peaks at the approvers' median.
/// * `MaxDist`: only agents approving every chosen facility score, and for
///   them collapsing all facilities onto one point is never worse, so the
///   optimum is the median of that group.
/// * `MinDist`: for a fixed agent-to-facility assignment each facility sits
///   at a median of the agents assigned to it, all of whom approve it, so
///   searching approver positions per facility is exhaustive.
pub fn optimal_choice(instance: &Instance) -> OptimalChoice {
    match (instance.k(), instance.utility_class()) {
        (1, _) => optimal_single(instance),
        (_, UtilityClass::Sum) => optimal_sum(instance),
        (_, UtilityClass::MaxDist) => optimal_max_dist(instance),
        (_, UtilityClass::MinDist) => optimal_min_dist(instance),
    }
}

fn optimal_single(instance: &Instance) -> OptimalChoice {
    let mut best: Option<(usize, Rational, Rational)> = None;
    for j in 1..=instance.m() {
        let (y, w) = best_single_placement(instance, j);
        if best.is_none_or(|b| w > b.2) {
            best = Some((j, y, w));
        }
    }
    let (j, y, w) = best.expect("m >= 2");
    OptimalChoice { outcome: Outcome::single(j, y), welfare: w }
}

fn optimal_sum(instance: &Instance) -> OptimalChoice {
    let mut scored: Vec<(usize, Rational, Rational)> = (1..=instance.m())
        .map(|j| {
            let (y, w) = best_single_placement(instance, j);
            (j, y, w)
        })
        .collect();
    scored.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    scored.truncate(instance.k());
    let welfare = scored.iter().map(|s| s.2).sum();
    let outcome = Outcome::new(scored.into_iter().map(|(j, y, _)| (j, y)).collect())
        .expect("distinct facilities");
    OptimalChoice { outcome, welfare }
}

fn optimal_max_dist(instance: &Instance) -> OptimalChoice {
    let mut best: Option<(Vec<usize>, Rational, Rational)> = None;
    for subset in combinations(instance.m(), instance.k()) {
        let mut xs: Vec<Rational> = instance
            .agents()
            .iter()
            .filter(|a| subset.iter().all(|&j| a.preference.approves(j)))
            .map(|a| a.position)
            .collect();
        xs.sort();
        let (y, w) = match lower_median(&xs) {
            None => (Rational::ZERO, Rational::ZERO),
            Some(y) => (y, xs.iter().map(|&x| Rational::ONE - (x - y).abs()).sum()),
        };
        if best.as_ref().is_none_or(|b| w > b.2) {
            best = Some((subset, y, w));
        }
    }
    let (subset, y, w) = best.expect("k <= m");
    let outcome = Outcome::new(subset.into_iter().map(|j| (j, y)).collect()).expect("distinct facilities");
    OptimalChoice { outcome, welfare: w }
}

/// Positions scaled to a common denominator so the inner search loop runs on
/// integers.
struct ScaledPositions {
    scale: i128,
    xs: Vec<i128>,
}

impl ScaledPositions {
    fn new(instance: &Instance) -> Self {
        let scale = instance
            .agents()
            .iter()
            .fold(1i128, |acc, a| acc.lcm(&a.position.denom()));
        let xs = instance
            .agents()
            .iter()
            .map(|a| a.position.numer() * (scale / a.position.denom()))
            .collect();
        ScaledPositions { scale, xs }
    }

    fn to_rational(&self, v: i128) -> Rational {
        Rational::new(v, self.scale)
    }
}

fn optimal_min_dist(instance: &Instance) -> OptimalChoice {
    let scaled = ScaledPositions::new(instance);
    let agents = instance.agents();
    let candidates: Vec<Vec<i128>> = (1..=instance.m())
        .map(|j| {
            let mut c: Vec<i128> = agents
                .iter()
                .zip(&scaled.xs)
                .filter(|(a, _)| a.preference.approves(j))
                .map(|(_, &x)| x)
                .collect();
            c.sort_unstable();
            c.dedup();
            if c.is_empty() {
                c.push(0);
            }
            c
        })
        .collect();

    let mut best: Option<(Vec<usize>, Vec<i128>, i128)> = None;
    for subset in combinations(instance.m(), instance.k()) {
        let lists: Vec<&[i128]> = subset.iter().map(|&j| candidates[j - 1].as_slice()).collect();
        for_each_tuple(&lists, |ys| {
            let total: i128 = agents
                .iter()
                .zip(&scaled.xs)
                .map(|(a, &x)| {
                    subset
                        .iter()
                        .zip(ys)
                        .filter(|(&j, _)| a.preference.approves(j))
                        .map(|(_, &y)| scaled.scale - (x - y).abs())
                        .max()
                        .unwrap_or(0)
                })
                .sum();
            if best.as_ref().is_none_or(|b| total > b.2) {
                best = Some((subset.clone(), ys.to_vec(), total));
            }
        });
    }
    let (subset, ys, total) = best.expect("k <= m");
    let outcome = Outcome::new(
        subset
            .into_iter()
            .zip(ys)
            .map(|(j, y)| (j, scaled.to_rational(y)))
            .collect(),
    )
    .expect("distinct facilities");
    OptimalChoice { outcome, welfare: scaled.to_rational(total) }
}

/// Calls `f` on every tuple of the cartesian product, in lexicographic order.
fn for_each_tuple<T: Copy, F: FnMut(&[T])>(lists: &[&[T]], mut f: F) {
    if lists.iter().any(|l| l.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; lists.len()];
    let mut tuple: Vec<T> = lists.iter().map(|l| l[0]).collect();
    loop {
        f(&tuple);
        let mut pos = lists.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < lists[pos].len() {
                tuple[pos] = lists[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            tuple[pos] = lists[pos][0];
        }
    }
}

/// All `k`-subsets of `{1..=m}` in lexicographic order.
pub fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..=m {
            if m - j + 1 < k - cur.len() {
                break;
            }
            cur.push(j);
            rec(j + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, m, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Maximum welfare over every `k`-subset of facilities and every location
/// tuple drawn from `{0, 1/q, ..., 1}` plus the agents' positions.
///
/// Evaluates outcomes one by one through [`social_welfare`]; meant as an
/// oracle independent of [`optimal_choice`].
pub fn optimal_welfare_bruteforce(
    instance: &Instance,
    grid_denominator: u32,
    max_evaluations: u128,
) -> Result<Rational, ModelError> {
    assert!(grid_denominator >= 1, "grid denominator must be positive");
    let q = grid_denominator as i128;
    let mut candidates: Vec<Rational> = (0..=q).map(|i| Rational::new(i, q)).collect();
    candidates.extend(instance.agents().iter().map(|a| a.position));
    candidates.sort();
    candidates.dedup();

    let per_subset = (candidates.len() as u128)
        .checked_pow(instance.k() as u32)
        .unwrap_or(u128::MAX);
    let size = binomial(instance.m(), instance.k()).saturating_mul(per_subset);
    if size > max_evaluations {
        return Err(ModelError::SearchSpaceTooLarge { size, cap: max_evaluations });
    }

    let mut best = Rational::ZERO;
    let lists: Vec<&[Rational]> = vec![candidates.as_slice(); instance.k()];
    for subset in combinations(instance.m(), instance.k()) {
        for_each_tuple(&lists, |ys| {
            let outcome = Outcome::new(subset.iter().copied().zip(ys.iter().copied()).collect())
                .expect("valid grid outcome");
            let w = social_welfare(instance, &outcome).expect("consistent outcome");
            if w > best {
                best = w;
            }
        });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn agent(x: &str, approvals: &[usize]) -> Agent {
        Agent::at(r(x), Preference::new(approvals.iter().copied()).unwrap())
    }

    fn fig2() -> Instance {
        Instance::two_facility(vec![
            agent("0", &[2]),
            agent("1/6", &[1, 2]),
            agent("5/6", &[1, 2]),
            agent("1", &[1]),
        ])
        .unwrap()
    }

    #[test]
    fn utility_at_zero_distance_is_one() {
        let inst = Instance::two_facility(vec![agent("0", &[1])]).unwrap();
        assert_eq!(agent_utility(&inst, 0, &Outcome::single(1, r("0"))).unwrap(), Rational::ONE);
    }

    #[test]
    fn fig2_agent_at_one_sixth() {
        let inst = fig2();
        let o = Outcome::single(2, r("1/6"));
        assert_eq!(agent_utility(&inst, 1, &o).unwrap(), Rational::ONE);
        assert_eq!(social_welfare(&inst, &o).unwrap(), r("13/6"));
        assert_eq!(social_welfare(&inst, &Outcome::single(1, r("1/2"))).unwrap(), r("11/6"));
    }

    #[test]
    fn max_dist_counts_unapproved_facilities_as_zero() {
        let inst = Instance::new(vec![agent("1/4", &[1])], 2, 2, UtilityClass::MaxDist).unwrap();
        let o = Outcome::new(vec![(1, r("3/4")), (2, r("1/4"))]).unwrap();
        assert_eq!(agent_utility(&inst, 0, &o).unwrap(), Rational::ZERO);
        let sum = inst.with_utility_class(UtilityClass::Sum);
        assert_eq!(agent_utility(&sum, 0, &o).unwrap(), r("1/2"));
        let min = inst.with_utility_class(UtilityClass::MinDist);
        assert_eq!(agent_utility(&min, 0, &o).unwrap(), r("1/2"));
    }

    #[test]
    fn unapproved_facility_yields_zero_welfare() {
        let inst = Instance::two_facility(vec![agent("0.3", &[1]), agent("0.9", &[1])]).unwrap();
        for y in ["0", "1/2", "1"] {
            assert_eq!(social_welfare(&inst, &Outcome::single(2, r(y))).unwrap(), Rational::ZERO);
        }
    }

    #[test]
    fn lower_median_of_approvers() {
        let eps = r("1/100");
        let inst = Instance::two_facility(vec![
            Agent::at(eps, Preference::only(1)),
            Agent::at(Rational::ONE - eps, Preference::only(1)),
            Agent::at(r("1/3"), Preference::only(2)),
        ])
        .unwrap();
        assert_eq!(median_of_approvers(&inst, 1), Some(eps));
        assert_eq!(median_of_approvers(&inst, 2), Some(r("1/3")));

        let inst = Instance::two_facility(vec![
            agent("1", &[1]),
            agent("0", &[1]),
            agent("0", &[1]),
            agent("0", &[1]),
        ])
        .unwrap();
        assert_eq!(median_of_approvers(&inst, 1), Some(Rational::ZERO));
        assert_eq!(median_of_approvers(&inst, 2), None);
    }

    #[test]
    fn optimal_choice_examples() {
        let opt = optimal_choice(&fig2());
        assert_eq!(opt.welfare, r("13/6"));
        assert_eq!(opt.outcome, Outcome::single(1, r("5/6")));

        let single = Instance::two_facility(vec![agent("0.3", &[1])]).unwrap();
        let opt = optimal_choice(&single);
        assert_eq!(opt.outcome, Outcome::single(1, r("0.3")));
        assert_eq!(opt.welfare, Rational::ONE);

        let mut agents = vec![agent("0", &[1]); 3];
        agents.push(agent("1", &[1]));
        agents.push(agent("0", &[2]));
        agents.push(agent("1", &[2]));
        let opt = optimal_choice(&Instance::two_facility(agents).unwrap());
        assert_eq!(opt.welfare, r("3"));
        assert_eq!(opt.outcome, Outcome::single(1, r("0")));
    }

    #[test]
    fn bruteforce_examples() {
        assert_eq!(optimal_welfare_bruteforce(&fig2(), 6, 1_000_000).unwrap(), r("13/6"));
        let one = Instance::two_facility(vec![agent("1", &[2])]).unwrap();
        assert_eq!(optimal_welfare_bruteforce(&one, 1, 100).unwrap(), Rational::ONE);
        assert!(matches!(
            optimal_welfare_bruteforce(&fig2(), 1000, 10),
            Err(ModelError::SearchSpaceTooLarge { cap: 10, .. })
        ));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Preference::new([]), Err(ModelError::EmptyPreference));
        assert_eq!(Instance::two_facility(vec![]), Err(ModelError::NoAgents));
        assert!(matches!(
            Instance::two_facility(vec![agent("0", &[3])]),
            Err(ModelError::FacilityOutOfRange { facility: 3, m: 2 })
        ));
        assert!(Agent::new(r("3/2"), Preference::only(1)).is_err());
        assert!(matches!(
            Instance::new(vec![agent("0", &[1])], 2, 3, UtilityClass::Sum),
            Err(ModelError::InvalidCounts { .. })
        ));
        assert!(matches!(
            agent_utility(&fig2(), 7, &Outcome::single(1, r("0"))),
            Err(ModelError::UnknownAgent { agent: 7, n: 4 })
        ));
        assert!(matches!(
            social_welfare(&fig2(), &Outcome::single(3, r("0"))),
            Err(ModelError::FacilityOutOfRange { facility: 3, m: 2 })
        ));
        assert!(Outcome::new(vec![(1, r("0")), (1, r("1"))]).is_err());
    }

    #[test]
    fn lottery_merges_and_validates() {
        let a = Outcome::single(1, r("1/2"));
        let b = Outcome::single(2, r("0"));
        let l = Lottery::from_weighted(vec![
            (r("1/4"), a.clone()),
            (r("1/2"), b.clone()),
            (r("1/4"), a.clone()),
            (Rational::ZERO, Outcome::single(2, r("1"))),
        ])
        .unwrap();
        assert_eq!(l.support().len(), 2);
        assert_eq!(l.probability_of(&a), r("1/2"));
        assert!(matches!(
            Lottery::from_weighted(vec![(r("1/3"), a.clone())]),
            Err(ModelError::ProbabilitySum(_))
        ));
        assert!(matches!(
            Lottery::from_weighted(vec![(r("-1"), a), (r("2"), b)]),
            Err(ModelError::NegativeProbability(_))
        ));
    }

    #[test]
    fn expected_welfare_of_point_mass_and_mixture() {
        let inst = fig2();
        let o = Outcome::single(1, r("1/2"));
        assert_eq!(
            expected_welfare(&inst, &Lottery::point(o.clone())).unwrap(),
            social_welfare(&inst, &o).unwrap()
        );

        // Two outcomes of welfare 2 and 1 + 2 eps, mixed evenly.
        let eps = r("1/1000");
        let lb = Instance::two_facility(vec![
            Agent::at(eps, Preference::only(2)),
            Agent::at(eps, Preference::only(1)),
            Agent::at(Rational::ONE - eps, Preference::only(2)),
            Agent::at(eps, Preference::only(1)),
        ])
        .unwrap();
        let l = Lottery::from_weighted(vec![
            (Rational::HALF, Outcome::single(1, eps)),
            (Rational::HALF, Outcome::single(2, eps)),
        ])
        .unwrap();
        assert_eq!(expected_welfare(&lb, &l).unwrap(), r("3/2") + eps);
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(4, 2), vec![
            vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]
        ]);
        assert_eq!(combinations(3, 3), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn multi_facility_optimum_matches_bruteforce() {
        let agents = vec![
            agent("0", &[1, 2]),
            agent("0", &[1, 2]),
            agent("0", &[1, 2]),
            agent("0", &[3]),
            agent("1/4", &[3]),
            agent("1", &[4]),
            agent("3/4", &[2, 4]),
        ];
        for class in [UtilityClass::Sum, UtilityClass::MinDist, UtilityClass::MaxDist] {
            let inst = Instance::new(agents.clone(), 4, 2, class).unwrap();
            let opt = optimal_choice(&inst);
            assert_eq!(social_welfare(&inst, &opt.outcome).unwrap(), opt.welfare, "{class}");
            assert_eq!(optimal_welfare_bruteforce(&inst, 4, 10_000_000).unwrap(), opt.welfare, "{class}");
        }
    }
}
