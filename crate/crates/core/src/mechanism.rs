//! Truthful single-slot auction engines.
//!
//! Two mechanisms: second-price (highest bid wins, pays the second-highest
//! bid) and eCPM-ranked pay-per-click where the slot goes to the highest
//! `bid * pctr * 1000` and the payment follows Myerson's envelope formula
//! `p(b) = b * x(b) - integral_0^b x(z) dz`, which for a step allocation at
//! threshold `theta` collapses to `theta` per allocated click.
//!
//! Engines are pure: all randomness (clicks, tie coin flips) is injected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// How a bid exactly equal to the highest competing bid is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    AgentWins,
    AgentLoses,
    /// Deterministic given the injected coin.
    SeededRandom {
        coin: bool,
    },
}

/// One second-price round: the competing bids the agent faces.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondPriceRound<R> {
    pub competing_bids: Vec<R>,
    pub tie_rule: TieRule,
}

impl<R: Real> SecondPriceRound<R> {
    pub fn new(competing_bids: Vec<R>, tie_rule: TieRule) -> Result<Self> {
        if competing_bids.is_empty() {
            return Err(Error::EmptyInput("competing_bids"));
        }
        Ok(Self {
            competing_bids,
            tie_rule,
        })
    }

    /// Highest competing bid: the cost-to-win of this round.
    pub fn price_threshold(&self) -> R {
        self.competing_bids
            .iter()
            .copied()
            .fold(R::neg_infinity(), R::max)
    }
}

/// One eCPM round: predicted click-through rate, the highest competing eCPM,
/// and the realized click (drawn upstream, injected here).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcpmRound<R> {
    pub pctr: R,
    pub competing_ecpm_max: R,
    pub click: bool,
}

impl<R: Real> EcpmRound<R> {
    /// Per-click price threshold `theta = competing_ecpm_max / (pctr * 1000)`.
    pub fn price_threshold(&self) -> R {
        self.competing_ecpm_max / (self.pctr * R::of(1000.0))
    }
}

/// Realized outcome of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionOutcome<R> {
    /// Whether the agent won the slot.
    pub won: bool,
    /// Realized allocation `x_t(b_t)` (for eCPM this requires the click).
    pub allocation: R,
    /// Realized payment `p_t(b_t)`; zero whenever the allocation is zero.
    pub payment: R,
    /// The cost-to-win of the round, revealed for bookkeeping.
    pub price_threshold: R,
}

/// Second-price outcome: win if the bid beats every competing bid (ties per
/// `tie_rule`), pay the highest competing bid on a win.
pub fn second_price_outcome<R: Real>(
    bid: R,
    round: &SecondPriceRound<R>,
) -> Result<AuctionOutcome<R>> {
    if !(bid >= R::zero() && bid.is_finite()) {
        return Err(Error::NegativeBid(bid.to_f64().unwrap_or(f64::NAN)));
    }
    let threshold = round.price_threshold();
    let won = if bid > threshold {
        true
    } else if bid == threshold {
        match round.tie_rule {
            TieRule::AgentWins => true,
            TieRule::AgentLoses => false,
            TieRule::SeededRandom { coin } => coin,
        }
    } else {
        false
    };
    Ok(AuctionOutcome {
        won,
        allocation: if won { R::one() } else { R::zero() },
        payment: if won { threshold } else { R::zero() },
        price_threshold: threshold,
    })
}

/// eCPM outcome: the slot is won iff `bid * pctr * 1000 >= competing_ecpm_max`
/// (equality counts as a win); the allocation additionally requires the click;
/// the Myerson payment for the step allocation is `theta` per allocated click.
pub fn ecpm_outcome<R: Real>(bid: R, round: &EcpmRound<R>) -> Result<AuctionOutcome<R>> {
    if !(bid >= R::zero() && bid.is_finite()) {
        return Err(Error::NegativeBid(bid.to_f64().unwrap_or(f64::NAN)));
    }
    if round.pctr <= R::zero() || round.pctr > R::one() {
        return Err(Error::UndefinedThreshold {
            bid: bid.to_f64().unwrap_or(f64::NAN),
        });
    }
    let theta = round.price_threshold();
    let slot_won = bid * round.pctr * R::of(1000.0) >= round.competing_ecpm_max;
    let allocated = slot_won && round.click;
    Ok(AuctionOutcome {
        won: slot_won,
        allocation: if allocated { R::one() } else { R::zero() },
        payment: if allocated { theta } else { R::zero() },
        price_threshold: theta,
    })
}
