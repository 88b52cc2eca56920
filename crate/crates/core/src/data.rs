//! Dataset ingestion, the equal-size pCVR binning scheme, post-hoc true-CVR
//! construction, seeded synthetic generation and Bernoulli event sampling.
//!
//! The runner works in tCPA-normalized units: competing bids and budgets are
//! divided by the campaign tCPA so that values equal conversion rates and the
//! RoS target is 1.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::conformal::BinId;
use crate::error::{Error, Result};

/// One impression opportunity.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionRecord {
    pub period: u32,
    pub auction_id: u64,
    /// Predicted conversion rate.
    pub pcvr: f64,
    /// Scale of the CVR noise around the prediction.
    pub sigma: f64,
    /// Predicted click-through rate.
    pub pctr: f64,
    /// Competing bids (competing eCPMs under the eCPM mechanism).
    pub competing_bids: Vec<f64>,
    /// Calibration bin, assigned by a `BinScheme`.
    pub bin_id: BinId,
}

/// Advertiser budget and target CPA. Values are rescaled by `v = CVR * tCPA`
/// so the RoS target normalizes to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub budget: f64,
    pub tcpa: f64,
}

/// Equal-size binning of predicted conversion rates, with optional per-bin
/// post-hoc true CVRs.
#[derive(Debug, Clone, PartialEq)]
pub struct BinScheme {
    /// `n_bins - 1` cut values; a test point lands in the bin counting the
    /// cuts strictly below it (boundary values go to the lower bin).
    boundaries: Vec<f64>,
    n_bins: usize,
    bin_true_cvr: Option<Vec<f64>>,
    degenerate: bool,
}

/// Sorts the training pCVRs ascending and cuts them into `n_bins` bins of
/// equal size by sorted rank. Boundary ties go to the lower bin; test points
/// below the smallest cut land in bin 0.
pub fn build_bins(training_pcvrs: &[f64], n_bins: usize) -> Result<BinScheme> {
    if n_bins == 0 {
        return Err(Error::NonPositive {
            field: "n_bins",
            value: 0.0,
        });
    }
    let m = training_pcvrs.len();
    if m < n_bins {
        return Err(Error::TooFewPoints {
            points: m,
            bins: n_bins,
        });
    }
    let mut sorted = training_pcvrs.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("pcvr values are finite"));
    // cut k sits on the last sorted element of bin k
    let boundaries: Vec<f64> = (1..n_bins).map(|k| sorted[k * m / n_bins - 1]).collect();
    let degenerate = m > 0 && sorted[0] == sorted[m - 1];
    if degenerate {
        log::warn!("all training pcvrs identical; every record maps to bin 0");
    }
    Ok(BinScheme {
        boundaries,
        n_bins,
        bin_true_cvr: None,
        degenerate,
    })
}

impl BinScheme {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Total assignment: every pcvr maps to exactly one bin.
    pub fn assign(&self, pcvr: f64) -> BinId {
        self.boundaries.partition_point(|&c| c < pcvr) as BinId
    }

    /// Post-hoc true CVR of a bin, once filled.
    pub fn true_cvr(&self, bin: BinId) -> Option<f64> {
        self.bin_true_cvr.as_ref()?.get(bin as usize).copied()
    }
}

/// Assigns every record its bin under the scheme.
pub fn assign_bins(records: &mut [AuctionRecord], scheme: &BinScheme) {
    for r in records.iter_mut() {
        r.bin_id = scheme.assign(r.pcvr);
    }
}

/// Draws `CVR ~ N(pcvr + mean_shift, sigma^2)` per record (truncated to
/// [0, 1]) and stores each bin's average draw as its post-hoc true CVR.
/// `mean_shift = 0` is the unbiased-prediction protocol; a nonzero shift
/// models systematically biased predictions. Empty bins inherit the global
/// mean with a warning.
pub fn posthoc_true_cvr(
    records: &[AuctionRecord],
    scheme: &BinScheme,
    mean_shift: f64,
    rng: &mut impl Rng,
) -> Result<BinScheme> {
    if records.is_empty() {
        return Err(Error::EmptyInput("posthoc_true_cvr records"));
    }
    let n_bins = scheme.n_bins();
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    let mut global_sum = 0.0;
    for r in records {
        let draw = if r.sigma > 0.0 {
            let normal = Normal::new(r.pcvr + mean_shift, r.sigma).map_err(|e| {
                Error::Config(format!(
                    "invalid CVR distribution for record {}: {e}",
                    r.auction_id
                ))
            })?;
            normal.sample(rng).clamp(0.0, 1.0)
        } else {
            (r.pcvr + mean_shift).clamp(0.0, 1.0)
        };
        let bin = scheme.assign(r.pcvr) as usize;
        sums[bin] += draw;
        counts[bin] += 1;
        global_sum += draw;
    }
    let global_mean = global_sum / records.len() as f64;
    let bin_true_cvr: Vec<f64> = (0..n_bins)
        .map(|b| {
            if counts[b] > 0 {
                sums[b] / counts[b] as f64
            } else {
                log::warn!("bin {b} has no training data; using the global mean CVR");
                global_mean
            }
        })
        .collect();
    let mut filled = scheme.clone();
    filled.bin_true_cvr = Some(bin_true_cvr);
    Ok(filled)
}

/// One Bernoulli draw from the given stream.
pub fn sample_event(probability: f64, rng: &mut impl Rng) -> bool {
    debug_assert!((0.0..=1.0).contains(&probability));
    if probability <= 0.0 {
        false
    } else if probability >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < probability
    }
}

/// One member of the finite set of pCVR distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PcvrType {
    /// Continuous uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Deterministic cycle through a finite grid of values.
    Grid { values: Vec<f64> },
}

/// Competing-bid generator: log-normal, truncated at `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetingBidSettings {
    pub count: usize,
    pub log_mean: f64,
    pub log_sd: f64,
    pub cap: f64,
}

/// Settings of the synthetic auction-log generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSettings {
    pub n_periods: u32,
    pub records_per_period: usize,
    /// Finite set of pCVR distribution types; each period mixes them with
    /// period-dependent weights, so periods are independent but not
    /// identically distributed.
    pub pcvr_types: Vec<PcvrType>,
    /// CVR noise scale written to every record.
    pub sigma: f64,
    /// Mean shift of the true CVR relative to the prediction; nonzero values
    /// model biased predictions.
    #[serde(default)]
    pub cvr_mean_shift: f64,
    pub competing: CompetingBidSettings,
    pub pctr_lo: f64,
    pub pctr_hi: f64,
}

/// Whether competing values are stored as plain bids (second-price) or as
/// eCPMs (pay-per-click ranking).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompetingScale {
    Bid,
    Ecpm,
}

/// Emits `n_periods * records_per_period` records, deterministic given the
/// seed. Period `p` draws each record's type from period-specific mixture
/// weights over the finite type set (every type keeps positive mass, so a
/// single training period covers all of them).
pub fn generate_synthetic(
    settings: &GeneratorSettings,
    scale: CompetingScale,
    seed: u64,
) -> Result<Vec<AuctionRecord>> {
    use rand::SeedableRng;
    if settings.pcvr_types.is_empty() {
        return Err(Error::Config(
            "generator needs at least one pcvr type".into(),
        ));
    }
    if settings.competing.count == 0 {
        return Err(Error::Config("competing bid count must be positive".into()));
    }
    for t in &settings.pcvr_types {
        match t {
            PcvrType::Uniform { lo, hi } => {
                if !(0.0..=1.0).contains(lo) || !(0.0..=1.0).contains(hi) || lo > hi {
                    return Err(Error::Config(format!("invalid pcvr range [{lo}, {hi}]")));
                }
            }
            PcvrType::Grid { values } => {
                if values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Config("grid values must be in [0, 1]".into()));
                }
            }
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lognormal = LogNormal::new(settings.competing.log_mean, settings.competing.log_sd)
        .map_err(|e| Error::Config(format!("invalid competing-bid distribution: {e}")))?;
    let k = settings.pcvr_types.len();
    let mut records = Vec::with_capacity(settings.n_periods as usize * settings.records_per_period);
    let mut auction_id = 0u64;
    let mut grid_cursors = vec![0usize; k];
    for period in 0..settings.n_periods {
        // period-dependent mixture over the finite type set
        let raw: Vec<f64> = (0..k).map(|_| 0.5 + rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        for _ in 0..settings.records_per_period {
            let mut u = rng.gen::<f64>();
            let mut ty = k - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    ty = i;
                    break;
                }
                u -= w;
            }
            let pcvr = match &settings.pcvr_types[ty] {
                PcvrType::Uniform { lo, hi } => rng.gen_range(*lo..=*hi),
                PcvrType::Grid { values } => {
                    let v = values[grid_cursors[ty] % values.len()];
                    grid_cursors[ty] += 1;
                    v
                }
            };
            let pctr = rng.gen_range(settings.pctr_lo..=settings.pctr_hi);
            let competing_bids: Vec<f64> = (0..settings.competing.count)
                .map(|_| {
                    let cost = lognormal.sample(&mut rng).min(settings.competing.cap);
                    match scale {
                        CompetingScale::Bid => cost,
                        CompetingScale::Ecpm => cost * pctr * 1000.0,
                    }
                })
                .collect();
            records.push(AuctionRecord {
                period,
                auction_id,
                pcvr,
                sigma: settings.sigma,
                pctr,
                competing_bids,
                bin_id: 0,
            });
            auction_id += 1;
        }
    }
    Ok(records)
}

/// Exact CSV header of the auction-log schema.
pub const AUCTION_LOG_HEADER: &str = "period,auction_id,pcvr,sigma,pctr,competing_bids";

/// Loads an auction log, validating ranges and preserving file order.
pub fn load_auction_log(path: &Path) -> Result<Vec<AuctionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    {
        let headers = reader.headers()?;
        let expect: Vec<&str> = AUCTION_LOG_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().collect();
        if got != expect {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {got:?}, want {expect:?}"),
            });
        }
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |idx: usize, column: &'static str| -> Result<&str> {
            row.get(idx).map(str::trim).ok_or(Error::Parse {
                line,
                msg: format!("missing column `{column}`"),
            })
        };
        let num = |idx: usize, column: &'static str| -> Result<f64> {
            field(idx, column)?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("column `{column}`: {e}"),
                })
        };
        let unit = |idx: usize, column: &'static str| -> Result<f64> {
            let x = num(idx, column)?;
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Validation {
                    line,
                    column,
                    msg: format!("{x} outside [0, 1]"),
                });
            }
            Ok(x)
        };
        let period = num(0, "period")? as u32;
        let auction_id = num(1, "auction_id")? as u64;
        let pcvr = unit(2, "pcvr")?;
        let sigma = num(3, "sigma")?;
        if sigma < 0.0 {
            return Err(Error::Validation {
                line,
                column: "sigma",
                msg: format!("{sigma} is negative"),
            });
        }
        let pctr = unit(4, "pctr")?;
        let competing_raw = field(5, "competing_bids")?;
        if competing_raw.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty competing_bids cell".into(),
            });
        }
        let mut competing_bids = Vec::new();
        for part in competing_raw.split(';') {
            let bid = part.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("column `competing_bids`: {e}"),
            })?;
            if bid < 0.0 {
                return Err(Error::Validation {
                    line,
                    column: "competing_bids",
                    msg: format!("{bid} is negative"),
                });
            }
            competing_bids.push(bid);
        }
        records.push(AuctionRecord {
            period,
            auction_id,
            pcvr,
            sigma,
            pctr,
            competing_bids,
            bin_id: 0,
        });
    }
    Ok(records)
}

/// Writes records in the auction-log schema (competing bids `;`-separated).
pub fn write_auction_log(records: &[AuctionRecord], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{AUCTION_LOG_HEADER}")?;
    for r in records {
        let competing = r
            .competing_bids
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.period, r.auction_id, r.pcvr, r.sigma, r.pctr, competing
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Loads campaign rows `campaign_id,budget,tcpa`; returns (id, config) pairs
/// in file order.
pub fn load_campaigns(path: &Path) -> Result<Vec<(String, CampaignConfig)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row
            .get(0)
            .ok_or(Error::Parse {
                line,
                msg: "missing column `campaign_id`".into(),
            })?
            .trim()
            .to_string();
        let parse = |idx: usize, column: &'static str| -> Result<f64> {
            row.get(idx)
                .ok_or(Error::Parse {
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
        let budget = parse(1, "budget")?;
        let tcpa = parse(2, "tcpa")?;
        for (column, x) in [("budget", budget), ("tcpa", tcpa)] {
            if x <= 0.0 {
                return Err(Error::Validation {
                    line,
                    column: if column == "budget" { "budget" } else { "tcpa" },
                    msg: format!("{x} must be positive"),
                });
            }
        }
        out.push((id, CampaignConfig { budget, tcpa }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn settings() -> GeneratorSettings {
        GeneratorSettings {
            n_periods: 2,
            records_per_period: 500,
            pcvr_types: vec![
                PcvrType::Uniform { lo: 0.1, hi: 0.3 },
                PcvrType::Uniform { lo: 0.4, hi: 0.6 },
            ],
            sigma: 0.05,
            cvr_mean_shift: 0.0,
            competing: CompetingBidSettings {
                count: 3,
                log_mean: -1.5,
                log_sd: 0.5,
                cap: 1.0,
            },
            pctr_lo: 0.05,
            pctr_hi: 0.3,
        }
    }

    #[test]
    fn equal_size_bins_by_sorted_rank() {
        let pcvrs: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let scheme = build_bins(&pcvrs, 100).unwrap();
        let mut counts = vec![0usize; 100];
        for &p in &pcvrs {
            counts[scheme.assign(p) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 2), "counts: {counts:?}");
    }

    #[test]
    fn assignment_below_minimum_lands_in_bin_zero() {
        let pcvrs: Vec<f64> = (0..100).map(|i| 0.2 + i as f64 / 1000.0).collect();
        let scheme = build_bins(&pcvrs, 10).unwrap();
        assert_eq!(scheme.assign(0.01), 0);
        assert_eq!(scheme.assign(0.9), 9);
    }

    #[test]
    fn boundary_values_go_to_the_lower_bin() {
        // 4 points, 2 bins: cut at the 2nd smallest value
        let scheme = build_bins(&[0.1, 0.2, 0.3, 0.4], 2).unwrap();
        assert_eq!(scheme.assign(0.2), 0);
        assert_eq!(scheme.assign(0.21), 1);
    }

    #[test]
    fn identical_pcvrs_degenerate_to_bin_zero() {
        let scheme = build_bins(&[0.3; 50], 5).unwrap();
        assert!(scheme.is_degenerate());
        assert_eq!(scheme.assign(0.3), 0);
    }

    #[test]
    fn too_few_points_is_an_error() {
        assert!(matches!(
            build_bins(&[0.1, 0.2], 3),
            Err(Error::TooFewPoints { points: 2, bins: 3 })
        ));
    }

    fn record(period: u32, id: u64, pcvr: f64, sigma: f64) -> AuctionRecord {
        AuctionRecord {
            period,
            auction_id: id,
            pcvr,
            sigma,
            pctr: 0.1,
            competing_bids: vec![0.2],
            bin_id: 0,
        }
    }

    #[test]
    fn zero_noise_posthoc_equals_bin_mean() {
        let records = vec![record(0, 0, 0.2, 0.0), record(0, 1, 0.4, 0.0)];
        let scheme = build_bins(&[0.2, 0.4], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let filled = posthoc_true_cvr(&records, &scheme, 0.0, &mut rng).unwrap();
        assert!((filled.true_cvr(0).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn noisy_posthoc_concentrates_on_the_bin_mean() {
        let records: Vec<AuctionRecord> = (0..10_000)
            .map(|i| record(0, i, 0.4 + (i % 100) as f64 / 1000.0, 0.05))
            .collect();
        let pcvrs: Vec<f64> = records.iter().map(|r| r.pcvr).collect();
        let scheme = build_bins(&pcvrs, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let filled = posthoc_true_cvr(&records, &scheme, 0.0, &mut rng).unwrap();
        let pcvr_mean = pcvrs.iter().sum::<f64>() / pcvrs.len() as f64;
        assert!((filled.true_cvr(0).unwrap() - pcvr_mean).abs() < 0.002);
    }

    #[test]
    fn mean_shift_moves_the_posthoc_truth() {
        let records = vec![record(0, 0, 0.2, 0.0), record(0, 1, 0.4, 0.0)];
        let scheme = build_bins(&[0.2, 0.4], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let filled = posthoc_true_cvr(&records, &scheme, 0.05, &mut rng).unwrap();
        assert!((filled.true_cvr(0).unwrap() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn sample_event_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(!sample_event(0.0, &mut rng));
        assert!(sample_event(1.0, &mut rng));
        let hits = (0..100_000).filter(|_| sample_event(0.3, &mut rng)).count();
        let rate = hits as f64 / 100_000.0;
        assert!((0.294..=0.306).contains(&rate), "rate {rate}");
    }

    #[test]
    fn generator_is_deterministic_given_the_seed() {
        let a = generate_synthetic(&settings(), CompetingScale::Bid, 42).unwrap();
        let b = generate_synthetic(&settings(), CompetingScale::Bid, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&settings(), CompetingScale::Bid, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn periods_mix_the_same_types_with_different_weights() {
        let records = generate_synthetic(&settings(), CompetingScale::Bid, 7).unwrap();
        let share_low = |period: u32| {
            let of_period: Vec<&AuctionRecord> =
                records.iter().filter(|r| r.period == period).collect();
            of_period.iter().filter(|r| r.pcvr <= 0.3).count() as f64 / of_period.len() as f64
        };
        // both periods see both types, with different mixture weights
        let (s0, s1) = (share_low(0), share_low(1));
        assert!(s0 > 0.0 && s0 < 1.0);
        assert!(s1 > 0.0 && s1 < 1.0);
        assert!((s0 - s1).abs() > 0.01, "shares {s0} vs {s1}");
        // every pcvr lies in the union of the type supports
        assert!(records
            .iter()
            .all(|r| (0.1..=0.3).contains(&r.pcvr) || (0.4..=0.6).contains(&r.pcvr)));
    }

    #[test]
    fn ecpm_scale_multiplies_by_pctr_times_thousand() {
        let mut s = settings();
        s.competing = CompetingBidSettings {
            count: 1,
            log_mean: -1.5,
            log_sd: 0.0,
            cap: 10.0,
        };
        let bid_records = generate_synthetic(&s, CompetingScale::Bid, 5).unwrap();
        let ecpm_records = generate_synthetic(&s, CompetingScale::Ecpm, 5).unwrap();
        for (b, e) in bid_records.iter().zip(&ecpm_records) {
            assert!((e.competing_bids[0] - b.competing_bids[0] * e.pctr * 1000.0).abs() < 1e-9);
        }
    }

    #[test]
    fn auction_log_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let records = generate_synthetic(&settings(), CompetingScale::Bid, 3).unwrap();
        write_auction_log(&records, &path).unwrap();
        let loaded = load_auction_log(&path).unwrap();
        assert_eq!(records, loaded);
    }

    #[test]
    fn loader_reports_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "period,auction_id,pcvr,sigma,pctr,competing_bids\n0,0,1.2,0.05,0.1,0.2\n",
        )
        .unwrap();
        match load_auction_log(&path) {
            Err(Error::Validation { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "pcvr");
            }
            other => panic!("expected validation error, got {other:?}"),
        }

        std::fs::write(
            &path,
            "period,auction_id,pcvr,sigma,pctr,competing_bids\n0,0,0.2,0.05,0.1,\n",
        )
        .unwrap();
        assert!(matches!(
            load_auction_log(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn campaign_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("campaigns.csv");
        std::fs::write(
            &path,
            "campaign_id,budget,tcpa\ncamp-1,120.5,1.5\ncamp-2,80,2\n",
        )
        .unwrap();
        let campaigns = load_campaigns(&path).unwrap();
        assert_eq!(campaigns.len(), 2);
        assert_eq!(campaigns[0].0, "camp-1");
        assert!((campaigns[0].1.budget - 120.5).abs() < 1e-12);
        assert!((campaigns[1].1.tcpa - 2.0).abs() < 1e-12);

        std::fs::write(&path, "campaign_id,budget,tcpa\ncamp-1,0,1.5\n").unwrap();
        assert!(matches!(
            load_campaigns(&path),
            Err(Error::Validation {
                column: "budget",
                ..
            })
        ));
    }
}
