//! Per-round trace of one simulation run. Everything downstream — metrics,
//! guarantee checks, reports — is computed from these rows.

use std::io::Write;

use crate::error::{Error, Result};
use crate::real::Real;

/// One round of the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow<R> {
    pub round: u32,
    pub bid: R,
    pub won: bool,
    /// Realized allocation `x_t(b_t)`.
    pub allocation: R,
    pub payment: R,
    pub lambda: R,
    pub mu: R,
    pub remaining_budget: R,
    /// Value estimate the agent bid with.
    pub v_hat: R,
    /// Post-hoc true value.
    pub v_true: R,
    /// Post-hoc true conversion rate backing `v_true`.
    pub cvr_true: R,
    /// Pre-sampled click draw for this round.
    pub click: bool,
    /// Pre-sampled conversion draw for this round.
    pub conversion: bool,
    /// Cost-to-win of the round (kept for offline-oracle replay; not part of
    /// the CSV trace).
    pub price_threshold: R,
}

/// Full trace of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger<R> {
    pub method: String,
    pub period: u32,
    pub horizon: usize,
    pub seed: u64,
    pub budget: R,
    pub rows: Vec<LedgerRow<R>>,
    /// Wall-clock seconds of the bid+update loop only.
    pub wall_time_s: f64,
}

impl<R: Real> RunLedger<R> {
    pub fn total_spend(&self) -> R {
        self.rows.iter().map(|r| r.payment).sum()
    }

    /// `sum v_t * x_t`.
    pub fn true_reward(&self) -> R {
        self.rows.iter().map(|r| r.v_true * r.allocation).sum()
    }

    /// `sum v_hat_t * x_t`.
    pub fn adjusted_reward(&self) -> R {
        self.rows.iter().map(|r| r.v_hat * r.allocation).sum()
    }

    /// `max_t |v_hat_t - v_t|` over the whole horizon.
    pub fn d_max(&self) -> R {
        self.rows
            .iter()
            .map(|r| (r.v_hat - r.v_true).abs())
            .fold(R::zero(), R::max)
    }

    /// `min_t v_t` over the whole horizon.
    pub fn v_min(&self) -> R {
        self.rows
            .iter()
            .map(|r| r.v_true)
            .fold(R::infinity(), R::min)
    }

    pub fn wins(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.allocation > R::zero())
            .count()
    }

    /// Budget invariant: total spend never exceeds the budget.
    pub fn check_budget(&self) -> Result<()> {
        let spend = self.total_spend();
        if spend > self.budget {
            return Err(Error::BudgetOverdraft {
                payment: spend.to_f64().unwrap_or(f64::NAN),
                remaining: self.budget.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Writes the trace rows as CSV:
    /// `round,bid,won,allocation,payment,lambda,mu,remaining_budget,v_source,v_hat,v_true`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "round,bid,won,allocation,payment,lambda,mu,remaining_budget,v_source,v_hat,v_true"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                r.bid,
                u8::from(r.won),
                r.allocation,
                r.payment,
                r.lambda,
                r.mu,
                r.remaining_budget,
                self.method,
                r.v_hat,
                r.v_true
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v_true: f64, v_hat: f64, payment: f64, won: bool) -> LedgerRow<f64> {
        LedgerRow {
            round: 1,
            bid: 0.5,
            won,
            allocation: if won { 1.0 } else { 0.0 },
            payment,
            lambda: 1.0,
            mu: 0.0,
            remaining_budget: 1.0,
            v_hat,
            v_true,
            cvr_true: v_true,
            click: won,
            conversion: false,
            price_threshold: payment,
        }
    }

    #[test]
    fn aggregates_and_budget_check() {
        let ledger = RunLedger {
            method: "true".into(),
            period: 0,
            horizon: 2,
            seed: 0,
            budget: 1.0,
            rows: vec![row(0.5, 0.6, 0.4, true), row(0.3, 0.2, 0.0, false)],
            wall_time_s: 0.0,
        };
        assert!((ledger.total_spend() - 0.4).abs() < 1e-15);
        assert!((ledger.true_reward() - 0.5).abs() < 1e-15);
        assert!((ledger.adjusted_reward() - 0.6).abs() < 1e-15);
        assert!((ledger.d_max() - 0.1).abs() < 1e-12);
        assert!((ledger.v_min() - 0.3).abs() < 1e-15);
        assert_eq!(ledger.wins(), 1);
        assert!(ledger.check_budget().is_ok());

        let mut broke = ledger.clone();
        broke.budget = 0.3;
        assert!(broke.check_budget().is_err());
    }

    #[test]
    fn csv_has_exact_header_and_rows() {
        let ledger = RunLedger {
            method: "adjust".into(),
            period: 1,
            horizon: 1,
            seed: 7,
            budget: 1.0,
            rows: vec![row(0.5, 0.6, 0.4, true)],
            wall_time_s: 0.0,
        };
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "round,bid,won,allocation,payment,lambda,mu,remaining_budget,v_source,v_hat,v_true"
        );
        assert_eq!(lines.next().unwrap(), "1,0.5,1,1,0.4,1,0,1,adjust,0.6,0.5");
    }
}
