//! Truthful mechanisms for heterogeneous facility location with limited
//! resources.
//!
//! Agents sit on `[0, 1]` and approve a non-empty subset of `m` facilities,
//! of which `k` can be built. The crate computes mechanism outcomes and
//! optimal welfare in exact rational arithmetic, audits
//! (group-)strategyproofness by enumerating misreports under three
//! information settings, rebuilds the instance constructions behind the
//! known bounds, and searches for instances with a high approximation ratio.

pub mod audit;
pub mod corpus;
pub mod io;
pub mod mechanisms;
pub mod model;
pub mod rational;
pub mod reproduce;
pub mod search;

pub use audit::{
    approximation_ratio, audit_group_strategyproof, audit_strategyproof, AuditError, AuditReport,
    DeviationSpace, Ratio, RatioReport, Verdict, Violation,
};
pub use mechanisms::{Mechanism, MedianRule, TieRule};
pub use model::{
    agent_utility, expected_agent_utility, expected_welfare, median_of_approvers, optimal_choice,
    optimal_welfare_bruteforce, social_welfare, Agent, InformationSetting, Instance, Lottery,
    ModelError, Outcome, Preference, UtilityClass,
};
pub use rational::Rational;
