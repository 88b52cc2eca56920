//! Brute-force offline optimum and realization-level guarantee verifiers.
//!
//! Under a truthful step-allocation mechanism, winning auction `t` costs
//! exactly its cost-to-win `c_t`, so offline bidding reduces to subset
//! selection: enumerate all win subsets, keep the feasible one maximizing the
//! chosen value field. Horizons are capped so `2^T` enumeration stays exact
//! and tractable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::RunLedger;
use crate::real::Real;

/// Hard cap on the subset-enumeration horizon.
pub const MAX_BRUTE_FORCE_T: usize = 24;
/// Cap for the joint subset x value-grid enumeration of `verify_upper_bound_optimality`.
pub const MAX_JOINT_ENUM_T: usize = 12;

/// Absolute slack for feasibility comparisons on accumulated sums.
const FEAS_TOL: f64 = 1e-9;
/// Slack for reward ties and verifier inequalities.
const TIE_TOL: f64 = 1e-12;

/// A small offline instance: per-auction true and adjusted values and the
/// cost-to-win under the truthful mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineInstance<R> {
    pub values_true: Vec<R>,
    pub values_adjusted: Vec<R>,
    pub costs: Vec<R>,
    pub budget: R,
}

impl<R: Real> OfflineInstance<R> {
    pub fn horizon(&self) -> usize {
        self.values_true.len()
    }
}

/// Which value field the oracle optimizes (objective and RoS constraint).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueField {
    True,
    Adjusted,
}

/// Hindsight-optimal winning set with its reward, spend and RoS slack.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<R> {
    pub winning_set: Vec<usize>,
    pub reward: R,
    pub spend: R,
    /// `sum v - sum c` over the winning set; nonnegative by feasibility.
    pub ros_slack: R,
}

/// Enumerates all `2^T` win subsets and returns the feasible one maximizing
/// the chosen value field. Ties break toward smaller spend, then toward the
/// subset first reached in ascending bitmask order.
pub fn offline_optimum<R: Real>(
    instance: &OfflineInstance<R>,
    field: ValueField,
) -> Result<OracleSolution<R>> {
    let t = instance.horizon();
    if t > MAX_BRUTE_FORCE_T {
        return Err(Error::HorizonTooLarge {
            got: t,
            cap: MAX_BRUTE_FORCE_T,
        });
    }
    let values = match field {
        ValueField::True => &instance.values_true,
        ValueField::Adjusted => &instance.values_adjusted,
    };
    let tol = R::of(FEAS_TOL);
    let tie = R::of(TIE_TOL);

    let mut best_mask = 0u32;
    let mut best_reward = R::zero();
    let mut best_spend = R::zero();
    for mask in 0u32..(1u32 << t) {
        let mut reward = R::zero();
        let mut spend = R::zero();
        for (i, (&v, &c)) in values.iter().zip(&instance.costs).enumerate() {
            if mask & (1 << i) != 0 {
                reward += v;
                spend += c;
            }
        }
        if spend > instance.budget + tol || spend > reward + tol {
            continue;
        }
        if reward > best_reward + tie
            || ((reward - best_reward).abs() <= tie && spend < best_spend - tie)
        {
            best_mask = mask;
            best_reward = reward;
            best_spend = spend;
        }
    }
    let winning_set: Vec<usize> = (0..t).filter(|i| best_mask & (1 << i) != 0).collect();
    let ros_slack = best_reward - best_spend;
    Ok(OracleSolution {
        winning_set,
        reward: best_reward,
        spend: best_spend,
        ros_slack,
    })
}

impl<R: Real> OracleSolution<R> {
    /// Independent feasibility assertion after the search.
    pub fn assert_feasible(&self, budget: R) -> bool {
        let tol = R::of(FEAS_TOL);
        self.spend <= budget + tol && self.ros_slack >= -tol
    }
}

/// Witness of the upper-bound optimality check: the grid optimum and whether an
/// all-upper-bound value assignment attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundWitness<R> {
    pub holds: bool,
    /// Maximum over subsets and the per-auction value grid `{0, v/2, v}`.
    pub best_reward: R,
    /// Maximum restricted to assignments with every chosen value at its
    /// interval upper bound.
    pub upper_bound_reward: R,
    pub winning_set: Vec<usize>,
}

/// Jointly enumerates win subsets and per-auction values on the grid
/// `{0, v_hat/2, v_hat}` inside each interval, and confirms the optimum is
/// attained with every chosen value at its upper bound.
pub fn verify_upper_bound_optimality<R: Real>(
    instance: &OfflineInstance<R>,
    upper_bounds: &[R],
) -> Result<UpperBoundWitness<R>> {
    let t = instance.horizon();
    if t > MAX_JOINT_ENUM_T {
        return Err(Error::HorizonTooLarge {
            got: t,
            cap: MAX_JOINT_ENUM_T,
        });
    }
    if upper_bounds.len() != t {
        return Err(Error::LengthMismatch {
            scores: upper_bounds.len(),
            weights: t,
        });
    }
    let tol = R::of(FEAS_TOL);
    let tie = R::of(TIE_TOL);
    let half = R::of(0.5);

    let mut best_any = R::zero();
    let mut best_upper = R::zero();
    let mut best_upper_set: Vec<usize> = Vec::new();
    for mask in 0u32..(1u32 << t) {
        let chosen: Vec<usize> = (0..t).filter(|i| mask & (1 << i) != 0).collect();
        let spend: R = chosen.iter().map(|&i| instance.costs[i]).sum();
        if spend > instance.budget + tol {
            continue;
        }
        // values of unchosen auctions never enter the objective or the RoS
        // constraint, so the grid only ranges over the chosen set
        let k = chosen.len();
        let mut assignment = vec![0u8; k];
        loop {
            let reward: R = chosen
                .iter()
                .zip(&assignment)
                .map(|(&i, &a)| match a {
                    0 => R::zero(),
                    1 => upper_bounds[i] * half,
                    _ => upper_bounds[i],
                })
                .sum();
            if spend <= reward + tol {
                if reward > best_any {
                    best_any = reward;
                }
                if assignment.iter().all(|&a| a == 2) && reward > best_upper {
                    best_upper = reward;
                    best_upper_set = chosen.clone();
                }
            }
            // advance the base-3 counter
            let mut pos = 0;
            loop {
                if pos == k {
                    break;
                }
                assignment[pos] += 1;
                if assignment[pos] < 3 {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
            if pos == k {
                break;
            }
        }
    }
    Ok(UpperBoundWitness {
        holds: best_upper + tie >= best_any,
        best_reward: best_any,
        upper_bound_reward: best_upper,
        winning_set: best_upper_set,
    })
}

/// Result of the RoS sandwich check on one ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport<R> {
    pub ros_true: R,
    pub ros_adjusted: R,
    pub xi: R,
    pub lower: R,
    pub upper: R,
    pub holds: bool,
}

/// Checks `(1 - xi) RoS <= RoS_hat <= (1 + xi) RoS` with
/// `xi = d_max / v_min`, exactly up to 1e-9.
pub fn check_ros_sandwich<R: Real>(ledger: &RunLedger<R>) -> Result<BoundsReport<R>> {
    let spend = ledger.total_spend();
    if spend <= R::zero() || spend.is_nan() || ledger.wins() == 0 {
        return Err(Error::UndefinedRos);
    }
    let v_min = ledger.v_min();
    if v_min <= R::zero() || v_min.is_nan() {
        return Err(Error::ZeroValueAssumption);
    }
    let xi = ledger.d_max() / v_min;
    let ros_true = ledger.true_reward() / spend;
    let ros_adjusted = ledger.adjusted_reward() / spend;
    let lower = (R::one() - xi) * ros_true;
    let upper = (R::one() + xi) * ros_true;
    let tol = R::of(FEAS_TOL);
    Ok(BoundsReport {
        ros_true,
        ros_adjusted,
        xi,
        lower,
        upper,
        holds: lower - tol <= ros_adjusted && ros_adjusted <= upper + tol,
    })
}

/// Result of the realized reward-guarantee check.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport<R> {
    pub holds: bool,
    pub lhs: R,
    pub rhs: R,
    pub skipped_reason: Option<String>,
}

/// Realization-level ingredients of the reward guarantee, conditioned on the
/// coverage event `v_t <= v_hat_t` for all `t`:
/// (a) the adjusted-value oracle dominates the true-value oracle, and
/// (b) `sum v_hat x <= (1 + xi) sum v x` for the agent's realized bids.
/// When coverage fails, the check is skipped with a reason (the guarantee
/// conditions on the coverage event).
pub fn check_reward_guarantee<R: Real>(
    ledger: &RunLedger<R>,
    oracle_true: &OracleSolution<R>,
    oracle_adjusted: &OracleSolution<R>,
) -> InequalityReport<R> {
    let tol = R::of(FEAS_TOL);
    if let Some(row) = ledger.rows.iter().find(|r| r.v_true > r.v_hat + tol) {
        return InequalityReport {
            holds: true,
            lhs: R::zero(),
            rhs: R::zero(),
            skipped_reason: Some(format!(
                "coverage event violated at round {} (v {} > v_hat {})",
                row.round, row.v_true, row.v_hat
            )),
        };
    }
    let dominance = oracle_adjusted.reward + tol >= oracle_true.reward;

    let v_min = ledger.v_min();
    let (lhs, rhs, sandwich) = if v_min > R::zero() {
        let xi = ledger.d_max() / v_min;
        let lhs = ledger.adjusted_reward();
        let rhs = (R::one() + xi) * ledger.true_reward();
        (lhs, rhs, lhs <= rhs + tol)
    } else {
        (R::zero(), R::zero(), false)
    };
    InequalityReport {
        holds: dominance && sandwich,
        lhs,
        rhs,
        skipped_reason: None,
    }
}

/// Checks the bound `d_max <= 2 (prediction sup-error + approximation
/// sup-error)` on synthetic data where the regression mean is known.
pub fn check_adjustment_error_bound<R: Real>(
    d_max: R,
    prediction_error_sup: R,
    approximation_error_sup: R,
) -> bool {
    d_max <= R::of(2.0) * (prediction_error_sup + approximation_error_sup) + R::of(FEAS_TOL)
}

/// One verifier outcome, serialized as a JSON record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifierRecord {
    pub check: String,
    pub instance_id: String,
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub skipped_reason: Option<String>,
}

impl VerifierRecord {
    pub fn new(check: &str, instance_id: &str, holds: bool, lhs: f64, rhs: f64) -> Self {
        Self {
            check: check.to_string(),
            instance_id: instance_id.to_string(),
            holds,
            lhs,
            rhs,
            skipped_reason: None,
        }
    }

    pub fn skipped(check: &str, instance_id: &str, reason: String) -> Self {
        Self {
            check: check.to_string(),
            instance_id: instance_id.to_string(),
            holds: true,
            lhs: 0.0,
            rhs: 0.0,
            skipped_reason: Some(reason),
        }
    }
}
