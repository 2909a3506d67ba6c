//! Worst-case instance search.
//!
//! Three tools: the closed-form ratio of Random Dictatorship over its
//! worst-case family (and an exhaustive maximizer for it), a seeded
//! hill-climbing search over explicit instances for any mechanism, and a
//! scanner for RD with proportional tie-breaking.

use std::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::audit::{ratio_value, Ratio, RatioReport};
use crate::corpus::{prd_instance, rd_worst_case};
use crate::io::instance_to_json;
use crate::mechanisms::{Mechanism, MechanismError, TieRule};
use crate::model::{Agent, Instance, Preference, UtilityClass};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("invalid worst-case parameters: {0}")]
    InvalidParams(String),
    #[error("enumeration of {size} parameter tuples exceeds the cap of {cap}")]
    BudgetExceeded { size: u128, cap: u128 },
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// RD worst-case family, facility 1 optimal: `alpha0`, `alphax`, `alpha1`
/// facility-1 agents at 0, `x`, 1 and `beta0`, `beta1` facility-2 agents at
/// 0 and 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct WorstCaseParams {
    pub alpha0: u32,
    pub alphax: u32,
    pub alpha1: u32,
    pub beta0: u32,
    pub beta1: u32,
    pub x: Rational,
}

impl WorstCaseParams {
    pub fn new(alpha0: u32, alphax: u32, alpha1: u32, beta0: u32, beta1: u32, x: Rational) -> Self {
        WorstCaseParams { alpha0, alphax, alpha1, beta0, beta1, x }
    }

    pub fn total(&self) -> u32 {
        self.alpha0 + self.alphax + self.alpha1 + self.beta0 + self.beta1
    }

    /// Welfare of facility 1 at `x`; the optimum when the params are valid.
    fn facility_one_welfare(&self) -> Rational {
        let (a0, ax, a1) = (self.alpha0 as i128, self.alphax as i128, self.alpha1 as i128);
        Rational::from_integer(a0 + ax) + Rational::from_integer(a1 - a0) * self.x
    }

    /// `x` must be a median of the facility-1 agents (at least half of them
    /// on each side, agents at `x` counting for both), `beta0 >= beta1`, and
    /// facility 1 must be optimal.
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |msg: String| Err(SearchError::InvalidParams(msg));
        if self.total() == 0 {
            return bad("no agents".into());
        }
        if !self.x.in_unit_interval() {
            return bad(format!("x = {} outside [0, 1]", self.x));
        }
        if self.beta0 < self.beta1 {
            return bad(format!("beta0 = {} < beta1 = {}", self.beta0, self.beta1));
        }
        let ones = self.alpha0 + self.alphax + self.alpha1;
        let at_or_left = self.alpha0 + self.alphax + if self.x == Rational::ONE { self.alpha1 } else { 0 };
        let at_or_right = self.alpha1 + self.alphax + if self.x.is_zero() { self.alpha0 } else { 0 };
        if 2 * at_or_left < ones || 2 * at_or_right < ones {
            return bad(format!("x = {} is not a median of the facility-1 agents", self.x));
        }
        if self.facility_one_welfare() < Rational::from(self.beta0 as i64) {
            return bad("facility 2 beats facility 1".into());
        }
        Ok(())
    }

    /// The explicit instance, agents grouped in the order of the fields.
    pub fn materialize(&self) -> Instance {
        let mut agents = Vec::with_capacity(self.total() as usize);
        let groups = [
            (self.alpha0, Rational::ZERO, 1),
            (self.alphax, self.x, 1),
            (self.alpha1, Rational::ONE, 1),
            (self.beta0, Rational::ZERO, 2),
            (self.beta1, Rational::ONE, 2),
        ];
        for (count, x, j) in groups {
            agents.extend(std::iter::repeat_n(Agent::at(x, Preference::only(j)), count as usize));
        }
        Instance::two_facility(agents).expect("at least one agent")
    }
}

/// RD's approximation ratio on the family, from its closed form:
/// `n (a0 + ax + (a1 - a0) x) / ((a0 + ax)^2 + a1^2 + b0^2 + b1^2 + 2 ax (a1 - a0) x)`.
pub fn rd_closedform_ratio(params: &WorstCaseParams) -> Result<Rational, SearchError> {
    params.validate()?;
    let p = params;
    let (a0, ax, a1, b0, b1) = (
        p.alpha0 as i128,
        p.alphax as i128,
        p.alpha1 as i128,
        p.beta0 as i128,
        p.beta1 as i128,
    );
    let n = Rational::from_integer(p.total() as i128);
    let numer = n * p.facility_one_welfare();
    let denom = Rational::from_integer((a0 + ax).pow(2) + a1 * a1 + b0 * b0 + b1 * b1)
        + Rational::from_integer(2 * ax * (a1 - a0)) * p.x;
    Ok(numer / denom)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedFormMax {
    pub best: WorstCaseParams,
    pub ratio: Rational,
    /// Every maximizer, in preference order (`best` first).
    pub maximizers: Vec<WorstCaseParams>,
}

/// Preference among equal ratios: fewest agents, then most agents at 0
/// approving facility 1, then the remaining fields.
fn preference_key(p: &WorstCaseParams) -> (u32, Reverse<u32>, u32, u32, Reverse<u32>, u32, Rational) {
    (p.total(), Reverse(p.alpha0), p.alphax, p.alpha1, Reverse(p.beta0), p.beta1, p.x)
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Exhaustive maximization of [`rd_closedform_ratio`] over every valid
/// tuple with `1 <= total <= max_total_agents` and `x` on `{0, 1/q, ..., 1}`.
pub fn maximize_rd_closedform(
    max_total_agents: u32,
    x_grid_denominator: u32,
    max_evaluations: u128,
) -> Result<ClosedFormMax, SearchError> {
    if x_grid_denominator == 0 {
        return Err(SearchError::Config("x grid denominator must be positive".into()));
    }
    let size = binomial(max_total_agents as u128 + 5, 5) * (x_grid_denominator as u128 + 1);
    if size > max_evaluations {
        return Err(SearchError::BudgetExceeded { size, cap: max_evaluations });
    }
    let q = x_grid_denominator as i128;
    let mut best: Option<Rational> = None;
    let mut maximizers: Vec<WorstCaseParams> = Vec::new();
    let t = max_total_agents;
    for a0 in 0..=t {
        for ax in 0..=t - a0 {
            for a1 in 0..=t - a0 - ax {
                for b0 in 0..=t - a0 - ax - a1 {
                    for b1 in 0..=t - a0 - ax - a1 - b0 {
                        for i in 0..=q {
                            let p = WorstCaseParams::new(a0, ax, a1, b0, b1, Rational::new(i, q));
                            let Ok(r) = rd_closedform_ratio(&p) else { continue };
                            match best {
                                Some(b) if r < b => {}
                                Some(b) if r == b => maximizers.push(p),
                                _ => {
                                    best = Some(r);
                                    maximizers = vec![p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let ratio = best.ok_or_else(|| SearchError::Config("no valid parameters".into()))?;
    maximizers.sort_by_key(preference_key);
    Ok(ClosedFormMax { best: maximizers[0], ratio, maximizers })
}

/// Random search configuration. The seed fixes every trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchConfig {
    pub mechanism: Mechanism,
    pub n_agents: usize,
    pub m: usize,
    pub k: usize,
    pub utility_class: UtilityClass,
    /// Total ratio evaluations, split across restarts.
    pub iterations: u64,
    pub restarts: u32,
    pub seed: u64,
    /// Positions live on `{0, 1/q, ..., 1}`.
    pub grid: u32,
}

impl SearchConfig {
    pub fn new(mechanism: Mechanism, n_agents: usize, grid: u32, iterations: u64, seed: u64) -> Self {
        SearchConfig {
            mechanism,
            n_agents,
            m: 2,
            k: 1,
            utility_class: UtilityClass::Sum,
            iterations,
            restarts: 8,
            seed,
            grid,
        }
    }

    fn check(&self) -> Result<(), SearchError> {
        if self.n_agents == 0 || self.grid == 0 || self.restarts == 0 {
            return Err(SearchError::Config("n_agents, grid and restarts must be positive".into()));
        }
        let probe = random_instance(&mut ChaCha8Rng::seed_from_u64(0), self.n_agents, self.m, self.k, self.utility_class, self.grid);
        if !self.mechanism.supports(&probe) {
            return Err(SearchError::Mechanism(MechanismError::Unsupported {
                mechanism: self.mechanism.to_string(),
                m: self.m,
                k: self.k,
            }));
        }
        Ok(())
    }
}

/// Uniform positions on the `1/q` grid and uniform non-empty approval sets.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    k: usize,
    utility_class: UtilityClass,
    grid: u32,
) -> Instance {
    let q = grid as i128;
    let masks = (1u32 << m) - 1;
    let agents = (0..n)
        .map(|_| {
            let x = Rational::new(rng.random_range(0..=q), q);
            let mask = rng.random_range(1..=masks);
            Agent::at(x, Preference::from_mask(mask).expect("non-empty"))
        })
        .collect();
    Instance::new(agents, m, k, utility_class).expect("valid random instance")
}

fn neighbours(instance: &Instance, grid: u32) -> Vec<Instance> {
    let q = grid as i128;
    let mut steps = vec![1i128];
    while steps.last().copied().unwrap_or(q) * 4 < q {
        steps.push(steps.last().unwrap() * 4);
    }
    let mut out = Vec::new();
    for (i, agent) in instance.agents().iter().enumerate() {
        for &s in &steps {
            for delta in [-s, s] {
                let x = (agent.position + Rational::new(delta, q)).max(Rational::ZERO).min(Rational::ONE);
                if x != agent.position {
                    out.push(instance.with_agent(i, Agent::at(x, agent.preference)).expect("valid move"));
                }
            }
        }
        for j in 1..=instance.m() {
            if let Ok(p) = Preference::from_mask(agent.preference.mask() ^ (1 << (j - 1))) {
                out.push(instance.with_agent(i, Agent::at(agent.position, p)).expect("valid flip"));
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct ClimbResult {
    pub start_ratio: Ratio,
    pub instance: Instance,
    pub ratio: Ratio,
    pub evaluations: u64,
    /// `false` when the budget ran out before a local maximum.
    pub converged: bool,
}

/// First-improvement hill climbing from `start`. Neighbours move one agent
/// by `±s/q` (`s` = 1, 4, 16, ...) or toggle one approval; a move is taken
/// only on strict improvement, so plateaus end the climb.
pub fn hill_climb<R: Rng>(
    mechanism: &Mechanism,
    start: Instance,
    grid: u32,
    budget: u64,
    rng: &mut R,
) -> Result<ClimbResult, SearchError> {
    let start_ratio = ratio_value(mechanism, &start)?;
    let mut current = start;
    let mut current_ratio = start_ratio;
    let mut evaluations = 1u64;
    'climb: loop {
        let mut moves = neighbours(&current, grid);
        moves.shuffle(rng);
        for candidate in moves {
            if evaluations >= budget {
                return Ok(ClimbResult { start_ratio, instance: current, ratio: current_ratio, evaluations, converged: false });
            }
            let r = ratio_value(mechanism, &candidate)?;
            evaluations += 1;
            if r > current_ratio {
                current = candidate;
                current_ratio = r;
                continue 'climb;
            }
        }
        return Ok(ClimbResult { start_ratio, instance: current, ratio: current_ratio, evaluations, converged: true });
    }
}

fn restart_rng(seed: u64, restart: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Best instance of one restart: repeated climbs from fresh random starts
/// until its share of the budget is spent.
fn run_restart(config: &SearchConfig, restart: u32, budget: u64) -> Result<(Instance, Ratio, u64), SearchError> {
    let mut rng = restart_rng(config.seed, restart);
    let mut best: Option<(Instance, Ratio)> = None;
    let mut used = 0u64;
    while used < budget.max(1) {
        let start = random_instance(&mut rng, config.n_agents, config.m, config.k, config.utility_class, config.grid);
        let climb = hill_climb(&config.mechanism, start, config.grid, budget.max(1) - used, &mut rng)?;
        used += climb.evaluations;
        if best.as_ref().is_none_or(|b| climb.ratio > b.1) {
            best = Some((climb.instance, climb.ratio));
        }
    }
    let (inst, ratio) = best.expect("at least one climb");
    Ok((inst, ratio, used))
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub instance: Instance,
    pub report: RatioReport,
    pub evaluations: u64,
}

/// Seeded random restarts plus hill climbing. Restarts run in parallel with
/// private RNG streams; among equal ratios the witness with the smallest
/// JSON encoding (lexicographically) wins.
pub fn worst_case_search(config: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    config.check()?;
    let restarts = config.restarts as u64;
    let results: Vec<Result<(Instance, Ratio, u64), SearchError>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let share = config.iterations / restarts + u64::from((r as u64) < config.iterations % restarts);
            run_restart(config, r, share)
        })
        .collect();

    let mut best: Option<(Instance, Ratio, String)> = None;
    let mut evaluations = 0u64;
    for res in results {
        let (inst, ratio, used) = res?;
        evaluations += used;
        let key = instance_to_json(&inst);
        let better = match &best {
            None => true,
            Some((_, r, k)) => ratio > *r || (ratio == *r && key < *k),
        };
        if better {
            best = Some((inst, ratio, key));
        }
    }
    let (instance, _, _) = best.expect("at least one restart");
    let report = crate::audit::approximation_ratio(&config.mechanism, &instance)?;
    Ok(SearchOutcome { instance, report, evaluations })
}

#[derive(Clone, Debug)]
pub struct ReferenceValue {
    pub name: &'static str,
    pub ratio: Ratio,
    pub exceeds_three_halves: bool,
}

#[derive(Clone, Debug)]
pub struct ConjectureReport {
    pub max_ratio: Ratio,
    pub witness: Instance,
    pub evaluations: u64,
    /// Set when the search found a ratio above 3/2; recorded, never fatal.
    pub exceeds_three_halves: bool,
    /// Fixed instances evaluated alongside the search.
    pub references: Vec<ReferenceValue>,
}

/// Searches RD with proportional tie-breaking; `config.mechanism` is
/// ignored.
pub fn conjecture_scan(config: &SearchConfig) -> Result<ConjectureReport, SearchError> {
    let rd = Mechanism::RandomDictatorship(TieRule::Proportional);
    let config = SearchConfig { mechanism: rd, m: 2, k: 1, utility_class: UtilityClass::Sum, ..*config };
    let found = worst_case_search(&config)?;
    let three_halves = Ratio::Finite(Rational::new(3, 2));
    let references = [("prd", prd_instance()), ("rd-worst-case", rd_worst_case())]
        .into_iter()
        .map(|(name, inst)| {
            let ratio = ratio_value(&rd, &inst)?;
            Ok(ReferenceValue { name, ratio, exceeds_three_halves: ratio > three_halves })
        })
        .collect::<Result<Vec<_>, SearchError>>()?;
    Ok(ConjectureReport {
        max_ratio: found.report.ratio,
        exceeds_three_halves: found.report.ratio > three_halves,
        witness: found.instance,
        evaluations: found.evaluations,
        references,
    })
}
