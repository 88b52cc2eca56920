//! Score with CPA penalty, performance ratio, coverage and RoS summaries.
//!
//! The score is `penalty * sum_t CVR_true_t * x_t` where the penalty kicks in
//! once the realized CPA exceeds the target: `min{(tCPA / CPA)^zeta, 1}`.
//! Conversions are counted in expectation (`CVR_true * x`), not as draws.

use crate::error::{Error, Result};
use crate::ledger::RunLedger;
use crate::real::Real;

/// Score of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreReport<R> {
    /// Expected conversions `sum CVR_true * x`.
    pub raw_conversions: R,
    /// Spend per conversion; `+inf` on positive spend with zero conversions.
    pub realized_cpa: R,
    pub penalty: R,
    pub score: R,
}

/// Normalized performance of one method against the True baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioReport<R> {
    pub numerator_mean: R,
    pub denominator_mean: R,
    /// Ratio of means.
    pub ratio: R,
    /// Standard deviation of the per-pair ratios.
    pub pairwise_std: R,
}

/// CPA penalty `min{(tcpa / realized_cpa)^zeta, 1}`: 1 at or below the
/// target, decaying polynomially above it, 0 at infinite CPA.
pub fn penalty<R: Real>(realized_cpa: R, tcpa: R, zeta: R) -> R {
    debug_assert!(tcpa > R::zero());
    if realized_cpa <= tcpa {
        return R::one();
    }
    if realized_cpa.is_infinite() {
        return R::zero();
    }
    (tcpa / realized_cpa).powf(zeta).min(R::one())
}

/// Computes the penalized score of a ledger.
pub fn score<R: Real>(ledger: &RunLedger<R>, tcpa: R, zeta: R) -> ScoreReport<R> {
    let raw: R = ledger.rows.iter().map(|r| r.cvr_true * r.allocation).sum();
    let spend = ledger.total_spend();
    let realized_cpa = if raw > R::zero() {
        spend / raw
    } else if spend > R::zero() {
        R::infinity()
    } else {
        // no spend, no conversions: the constraint is vacuous
        tcpa
    };
    let p = penalty(realized_cpa, tcpa, zeta);
    ScoreReport {
        raw_conversions: raw,
        realized_cpa,
        penalty: p,
        score: p * raw,
    }
}

/// Ratio of mean scores, paired by (request sequence, seed). Also reports the
/// spread of the per-pair ratios.
pub fn ratio<R: Real>(alg_scores: &[R], true_scores: &[R]) -> Result<RatioReport<R>> {
    if alg_scores.is_empty() || alg_scores.len() != true_scores.len() {
        return Err(Error::EmptyInput("ratio score lists"));
    }
    let n = R::of(alg_scores.len() as f64);
    let num_mean = alg_scores.iter().copied().sum::<R>() / n;
    let den_mean = true_scores.iter().copied().sum::<R>() / n;
    if den_mean == R::zero() {
        return Err(Error::UndefinedRatio);
    }
    let pairwise: Vec<R> = alg_scores
        .iter()
        .zip(true_scores)
        .filter(|(_, &t)| t != R::zero())
        .map(|(&a, &t)| a / t)
        .collect();
    let pairwise_std = std_dev(&pairwise);
    Ok(RatioReport {
        numerator_mean: num_mean,
        denominator_mean: den_mean,
        ratio: num_mean / den_mean,
        pairwise_std,
    })
}

pub(crate) fn mean<R: Real>(xs: &[R]) -> R {
    if xs.is_empty() {
        return R::zero();
    }
    xs.iter().copied().sum::<R>() / R::of(xs.len() as f64)
}

pub(crate) fn std_dev<R: Real>(xs: &[R]) -> R {
    if xs.len() < 2 {
        return R::zero();
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<R>() / R::of((xs.len() - 1) as f64);
    var.sqrt()
}

/// Fraction of rounds whose true value is covered by the one-sided interval,
/// i.e. `v_true <= v_hat`.
pub fn coverage<R: Real>(ledger: &RunLedger<R>) -> Result<R> {
    if ledger.rows.is_empty() {
        return Err(Error::EmptyLedger);
    }
    let covered = ledger.rows.iter().filter(|r| r.v_true <= r.v_hat).count();
    Ok(R::of(covered as f64) / R::of(ledger.rows.len() as f64))
}

/// RoS under true and adjusted values, plus the RoS violation
/// `max(0, sum p - sum v*x * (1 + d_max / v_min))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosSummary<R> {
    pub ros_true: R,
    pub ros_adjusted: R,
    pub violation: R,
}

pub fn ros_summary<R: Real>(ledger: &RunLedger<R>) -> Result<RosSummary<R>> {
    let spend = ledger.total_spend();
    if spend <= R::zero() || spend.is_nan() {
        return Err(Error::UndefinedRos);
    }
    let true_reward = ledger.true_reward();
    let adjusted_reward = ledger.adjusted_reward();
    let v_min = ledger.v_min();
    let xi = if v_min > R::zero() {
        ledger.d_max() / v_min
    } else {
        R::infinity()
    };
    Ok(RosSummary {
        ros_true: true_reward / spend,
        ros_adjusted: adjusted_reward / spend,
        violation: (spend - true_reward * (R::one() + xi)).max(R::zero()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::LedgerRow;

    fn ledger(rows: Vec<LedgerRow<f64>>) -> RunLedger<f64> {
        RunLedger {
            method: "adjust".into(),
            period: 0,
            horizon: rows.len(),
            seed: 0,
            budget: 100.0,
            rows,
            wall_time_s: 0.0,
        }
    }

    fn won(cvr_true: f64, v_hat: f64, payment: f64) -> LedgerRow<f64> {
        LedgerRow {
            round: 0,
            bid: 1.0,
            won: true,
            allocation: 1.0,
            payment,
            lambda: 1.0,
            mu: 0.0,
            remaining_budget: 1.0,
            v_hat,
            v_true: cvr_true,
            cvr_true,
            click: true,
            conversion: false,
            price_threshold: payment,
        }
    }

    fn lost(cvr_true: f64, v_hat: f64) -> LedgerRow<f64> {
        LedgerRow {
            allocation: 0.0,
            payment: 0.0,
            won: false,
            ..won(cvr_true, v_hat, 0.0)
        }
    }

    #[test]
    fn penalty_boundary_and_decay() {
        assert_eq!(penalty(1.5, 1.5, 2.0), 1.0);
        assert!((penalty::<f64>(3.0, 1.5, 2.0) - 0.25).abs() < 1e-12);
        assert_eq!(penalty(f64::INFINITY, 1.5, 2.0), 0.0);
        assert_eq!(penalty(0.2, 1.5, 2.0), 1.0);
    }

    #[test]
    fn score_without_wins_is_zero() {
        let l = ledger(vec![lost(0.3, 0.3)]);
        let report = score(&l, 1.5, 2.0);
        assert_eq!(report.score, 0.0);
        assert_eq!(report.raw_conversions, 0.0);
        // zero spend and zero conversions: vacuous constraint, full penalty
        assert_eq!(report.penalty, 1.0);
        assert_eq!(report.realized_cpa, 1.5);
    }

    #[test]
    fn score_matches_hand_arithmetic() {
        let l = ledger(vec![won(0.1, 0.1, 0.2), won(0.3, 0.3, 0.2)]);
        let report = score(&l, 1.5, 2.0);
        assert!((report.raw_conversions - 0.4).abs() < 1e-12);
        assert!((report.realized_cpa - 1.0).abs() < 1e-12);
        assert_eq!(report.penalty, 1.0);
        assert!((report.score - 0.4).abs() < 1e-12);

        // tighter target: cpa 1.0 > 0.5, penalty (0.5/1.0)^2 = 0.25
        let report = score(&l, 0.5, 2.0);
        assert!((report.penalty - 0.25).abs() < 1e-12);
        assert!((report.score - 0.1).abs() < 1e-12);
    }

    #[test]
    fn score_with_spend_but_no_conversions_is_fully_penalized() {
        let l = ledger(vec![won(0.0, 0.1, 0.2)]);
        let report = score(&l, 1.5, 2.0);
        assert!(report.realized_cpa.is_infinite());
        assert_eq!(report.penalty, 0.0);
        assert_eq!(report.score, 0.0);
    }

    #[test]
    fn ratio_of_identical_lists_is_one() {
        let xs = [0.4, 0.5, 0.6];
        let r = ratio(&xs, &xs).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.pairwise_std, 0.0);
    }

    #[test]
    fn ratio_is_mean_over_mean() {
        let r = ratio::<f64>(&[0.4], &[0.5]).unwrap();
        assert!((r.ratio - 0.8).abs() < 1e-12);
        let r = ratio::<f64>(&[0.99], &[1.00]).unwrap();
        assert!((r.ratio - 0.99).abs() < 1e-12);
    }

    #[test]
    fn ratio_rejects_zero_baseline() {
        assert!(matches!(ratio(&[0.4], &[0.0]), Err(Error::UndefinedRatio)));
    }

    #[test]
    fn coverage_counts_one_sided_hits() {
        let l = ledger(vec![won(0.5, 1.0, 0.1), lost(0.5, 0.0), won(0.5, 0.5, 0.1)]);
        assert!((coverage(&l).unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let all = ledger(vec![won(0.9, 1.0, 0.1)]);
        assert_eq!(coverage(&all).unwrap(), 1.0);
        let none = ledger(vec![won(0.9, 0.0, 0.1)]);
        assert_eq!(coverage(&none).unwrap(), 0.0);
        assert!(coverage(&ledger(vec![])).is_err());
    }

    #[test]
    fn ros_summary_equals_hand_arithmetic() {
        // the single-auction sandwich example: v 0.5, v_hat 0.6, p 0.4
        let l = ledger(vec![won(0.5, 0.6, 0.4)]);
        let s = ros_summary(&l).unwrap();
        assert!((s.ros_true - 1.25).abs() < 1e-12);
        assert!((s.ros_adjusted - 1.5).abs() < 1e-12);
        assert_eq!(s.violation, 0.0);
    }

    #[test]
    fn ros_violation_is_the_positive_part() {
        // spend 0.4, true reward 0.1, v_hat = v so xi = 0
        let l = ledger(vec![won(0.1, 0.1, 0.4)]);
        let s = ros_summary(&l).unwrap();
        assert!((s.violation - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ros_requires_positive_spend() {
        let l = ledger(vec![lost(0.5, 0.5)]);
        assert!(matches!(ros_summary(&l), Err(Error::UndefinedRos)));
    }

    #[test]
    fn score_never_exceeds_raw_conversions() {
        for (cpa_spend, tcpa) in [(0.1, 1.5), (0.9, 0.3), (2.0, 0.2)] {
            let l = ledger(vec![won(0.2, 0.2, cpa_spend), won(0.4, 0.4, cpa_spend)]);
            let r = score(&l, tcpa, 2.0);
            assert!(r.score <= r.raw_conversions + 1e-15);
            assert!(r.penalty >= 0.0 && r.penalty <= 1.0);
        }
    }

    #[test]
    fn coverage_agrees_with_naive_second_pass() {
        let rows: Vec<LedgerRow<f64>> = (0..200)
            .map(|i| {
                let v = (i % 17) as f64 / 17.0;
                let vh = (i % 13) as f64 / 13.0;
                if i % 2 == 0 {
                    won(v, vh, 0.01)
                } else {
                    lost(v, vh)
                }
            })
            .collect();
        let l = ledger(rows.clone());
        let naive = rows.iter().filter(|r| r.v_true <= r.v_hat).count() as f64 / rows.len() as f64;
        assert_eq!(coverage(&l).unwrap(), naive);
    }
}
