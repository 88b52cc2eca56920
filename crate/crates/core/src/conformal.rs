//! Split conformal prediction for non-i.i.d. data using weighted quantiles.
//!
//! One-sided nonconformity scores `v - mu_hat` are grouped per bin, and the
//! adjustment term `d` for a bin is the `1 - beta` quantile of the bin's score
//! atoms plus a point mass at `+inf`, all weighted `1/(m+1)`. The adjusted
//! value `v_hat = clamp(mu_hat + d, 0, 1)` is the upper endpoint of the
//! one-sided prediction interval `[0, v_hat]`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Identifier of a calibration bin (a "field" of same-distribution data).
pub type BinId = u32;

/// One-sided residual `v - mu_hat`, bounded in [-1, 1] for inputs in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NonconformityScore<R>(R);

impl<R: Real> NonconformityScore<R> {
    pub fn value(self) -> R {
        self.0
    }
}

/// Computes the nonconformity score `v - mu_hat`. No absolute value is taken:
/// negative scores indicate over-prediction and tighten the interval.
pub fn nonconformity_score<R: Real>(mu_hat: R, v: R) -> Result<NonconformityScore<R>> {
    check_unit("mu_hat", mu_hat)?;
    check_unit("v", v)?;
    Ok(NonconformityScore(v - mu_hat))
}

fn check_unit<R: Real>(field: &'static str, x: R) -> Result<()> {
    if !(x >= R::zero() && x <= R::one()) {
        return Err(Error::OutOfRange {
            field,
            value: x.to_f64().unwrap_or(f64::NAN),
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// Whether the miscoverage level is split across the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiscoverageMode {
    /// `beta = alpha / T`: the coverage guarantee holds simultaneously for
    /// all `T` auctions (union bound).
    Union,
    /// `beta = alpha`: per-auction coverage.
    Marginal,
}

/// Behaviour when an adjustment is requested for a bin absent from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownBinPolicy {
    /// Fall back to the pooled scores of all bins.
    GlobalFallback,
    /// Hard error.
    Error,
}

/// Miscoverage level `alpha` together with the mode that maps it to the
/// effective per-quantile level `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiscoverageConfig<R> {
    alpha: R,
    mode: MiscoverageMode,
    horizon: usize,
    unknown_bin: UnknownBinPolicy,
}

impl<R: Real> MiscoverageConfig<R> {
    pub fn new(alpha: R, mode: MiscoverageMode, horizon: usize) -> Result<Self> {
        if !(alpha > R::zero() && alpha < R::one()) {
            return Err(Error::OutOfRange {
                field: "alpha",
                value: alpha.to_f64().unwrap_or(f64::NAN),
                lo: 0.0,
                hi: 1.0,
            });
        }
        if mode == MiscoverageMode::Union && horizon == 0 {
            return Err(Error::NonPositive {
                field: "horizon",
                value: 0.0,
            });
        }
        let cfg = Self {
            alpha,
            mode,
            horizon,
            unknown_bin: UnknownBinPolicy::GlobalFallback,
        };
        let beta = cfg.effective_beta();
        if !(beta > R::zero() && beta < R::one()) {
            return Err(Error::OutOfRange {
                field: "beta",
                value: beta.to_f64().unwrap_or(f64::NAN),
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(cfg)
    }

    pub fn marginal(alpha: R) -> Result<Self> {
        Self::new(alpha, MiscoverageMode::Marginal, 1)
    }

    pub fn union(alpha: R, horizon: usize) -> Result<Self> {
        Self::new(alpha, MiscoverageMode::Union, horizon)
    }

    pub fn with_unknown_bin_policy(mut self, policy: UnknownBinPolicy) -> Self {
        self.unknown_bin = policy;
        self
    }

    pub fn alpha(&self) -> R {
        self.alpha
    }

    pub fn mode(&self) -> MiscoverageMode {
        self.mode
    }

    /// Effective quantile miscoverage: `alpha / T` in union mode, `alpha` in
    /// marginal mode.
    pub fn effective_beta(&self) -> R {
        match self.mode {
            MiscoverageMode::Union => self.alpha / R::of(self.horizon as f64),
            MiscoverageMode::Marginal => self.alpha,
        }
    }

    pub fn unknown_bin_policy(&self) -> UnknownBinPolicy {
        self.unknown_bin
    }
}

/// Per-bin sorted nonconformity scores. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable<R> {
    bins: BTreeMap<BinId, Vec<R>>,
    global: Vec<R>,
    total: usize,
}

/// Groups scores by bin and sorts each bin ascending. Every record must have
/// `mu_hat` and `v` in [0, 1].
pub fn fit_calibration<R: Real>(records: &[(BinId, R, R)]) -> Result<CalibrationTable<R>> {
    if records.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let mut bins: BTreeMap<BinId, Vec<R>> = BTreeMap::new();
    let mut global = Vec::with_capacity(records.len());
    for &(bin, mu_hat, v) in records {
        let score = nonconformity_score(mu_hat, v)?.value();
        bins.entry(bin).or_default().push(score);
        global.push(score);
    }
    for scores in bins.values_mut() {
        scores.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    }
    global.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(CalibrationTable {
        bins,
        global,
        total: records.len(),
    })
}

impl<R: Real> CalibrationTable<R> {
    /// Sorted scores of one bin, if present.
    pub fn bin_scores(&self, bin: BinId) -> Option<&[R]> {
        self.bins.get(&bin).map(Vec::as_slice)
    }

    /// Sorted pool of all scores, used by the unknown-bin fallback.
    pub fn global_scores(&self) -> &[R] {
        &self.global
    }

    pub fn bin_ids(&self) -> impl Iterator<Item = BinId> + '_ {
        self.bins.keys().copied()
    }

    pub fn total_count(&self) -> usize {
        self.total
    }

    /// Precomputes the adjustment term of every bin (plus the global
    /// fallback) at the config's level. `d` depends only on (bin, beta), so
    /// this removes the per-auction quantile cost.
    pub fn precompute_adjustments(
        &self,
        config: &MiscoverageConfig<R>,
    ) -> Result<AdjustmentCache<R>> {
        let mut per_bin = BTreeMap::new();
        for &bin in self.bins.keys() {
            per_bin.insert(bin, adjustment_term(self, bin, config)?);
        }
        let global = match config.unknown_bin {
            UnknownBinPolicy::GlobalFallback => Some(adjustment_from_scores(
                &self.global,
                config.effective_beta(),
            )?),
            UnknownBinPolicy::Error => None,
        };
        Ok(AdjustmentCache {
            beta: config.effective_beta(),
            per_bin,
            global,
        })
    }
}

/// Quantile of a discrete distribution `sum_j weights[j] * delta(scores[j]) +
/// infinity_mass * delta(+inf)`: the smallest score whose cumulative weight
/// reaches `level`, or `+inf` when no finite score does.
///
/// `scores` must be sorted ascending; weights and `infinity_mass` must be
/// jointly normalized to 1.
pub fn weighted_quantile<R: Real>(
    scores: &[R],
    weights: &[R],
    infinity_mass: R,
    level: R,
) -> Result<R> {
    if scores.len() != weights.len() {
        return Err(Error::LengthMismatch {
            scores: scores.len(),
            weights: weights.len(),
        });
    }
    if scores.is_empty() && infinity_mass <= R::zero() {
        return Err(Error::EmptyQuantileSupport);
    }
    debug_assert!(
        scores.windows(2).all(|w| w[0] <= w[1]),
        "scores must be sorted ascending"
    );
    let mut total = infinity_mass;
    for &w in weights {
        if w < R::zero() {
            return Err(Error::NegativeWeight(w.to_f64().unwrap_or(f64::NAN)));
        }
        total += w;
    }
    let norm_slack = R::weight_slack() * R::of((weights.len() + 1) as f64).max(R::one());
    if (total - R::one()).abs() > norm_slack {
        return Err(Error::UnnormalizedWeights {
            total: total.to_f64().unwrap_or(f64::NAN),
        });
    }

    let slack = R::weight_slack();
    let mut cum = R::zero();
    for (&s, &w) in scores.iter().zip(weights) {
        cum += w;
        if cum + slack >= level {
            return Ok(s);
        }
    }
    Ok(R::infinity())
}

fn adjustment_from_scores<R: Real>(scores: &[R], beta: R) -> Result<R> {
    let m = scores.len();
    let w = R::one() / R::of((m + 1) as f64);
    let weights = vec![w; m];
    weighted_quantile(scores, &weights, w, R::one() - beta)
}

/// Adjustment term `d` for a bin: equal weights `1/(m+1)` on the bin's `m`
/// scores and on the point mass at `+inf`, quantile taken at `1 - beta`.
/// Returns `+inf` when the level is unreachable on the finite atoms.
pub fn adjustment_term<R: Real>(
    table: &CalibrationTable<R>,
    bin: BinId,
    config: &MiscoverageConfig<R>,
) -> Result<R> {
    let scores = match table.bin_scores(bin) {
        Some(s) => s,
        None => match config.unknown_bin {
            UnknownBinPolicy::GlobalFallback => table.global_scores(),
            UnknownBinPolicy::Error => return Err(Error::MissingCalibration { bin }),
        },
    };
    adjustment_from_scores(scores, config.effective_beta())
}

/// Adjusted predicted value and its components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedValue<R> {
    pub mu_hat: R,
    pub d: R,
    pub v_hat: R,
}

/// `v_hat = clamp(mu_hat + d, 0, 1)`; an infinite `d` maps to `v_hat = 1`
/// since values live in [0, 1]. The prediction interval is `[0, v_hat]`.
pub fn adjusted_value<R: Real>(mu_hat: R, d: R) -> AdjustedValue<R> {
    debug_assert!(mu_hat >= R::zero() && mu_hat <= R::one());
    AdjustedValue {
        mu_hat,
        d,
        v_hat: (mu_hat + d).clamp01(),
    }
}

/// Adjustment terms precomputed per bin for one effective level `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentCache<R> {
    beta: R,
    per_bin: BTreeMap<BinId, R>,
    global: Option<R>,
}

impl<R: Real> AdjustmentCache<R> {
    pub fn beta(&self) -> R {
        self.beta
    }

    /// Adjustment term for a bin, falling back to the global pool when the
    /// bin was absent at calibration time and the policy allows it.
    pub fn d_for(&self, bin: BinId) -> Result<R> {
        if let Some(&d) = self.per_bin.get(&bin) {
            return Ok(d);
        }
        self.global.ok_or(Error::MissingCalibration { bin })
    }

    pub fn iter(&self) -> impl Iterator<Item = (BinId, R)> + '_ {
        self.per_bin.iter().map(|(&b, &d)| (b, d))
    }
}

/// Reads calibration rows `bin_id,mu_hat,v` from a CSV file.
pub fn read_calibration_csv<R: Real>(path: &Path) -> Result<Vec<(BinId, R, R)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |idx: usize, column: &'static str| -> Result<f64> {
            record
                .get(idx)
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("missing column `{column}`"),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("column `{column}`: {e}"),
                })
        };
        let bin = parse(0, "bin_id")? as BinId;
        let mu_hat = parse(1, "mu_hat")?;
        let v = parse(2, "v")?;
        for (column, x) in [("mu_hat", mu_hat), ("v", v)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Validation {
                    line,
                    column: if column == "mu_hat" { "mu_hat" } else { "v" },
                    msg: format!("{x} outside [0, 1]"),
                });
            }
        }
        rows.push((bin, R::of(mu_hat), R::of(v)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    Ok(rows)
}

/// Writes the precomputed adjustment export `bin_id,beta,d` (one row per bin,
/// `inf` literal for the infinite sentinel).
pub fn write_adjustment_csv<R: Real>(cache: &AdjustmentCache<R>, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "bin_id,beta,d")?;
    for (bin, d) in cache.iter() {
        writeln!(out, "{},{},{}", bin, cache.beta(), d)?;
    }
    out.flush()?;
    Ok(())
}
