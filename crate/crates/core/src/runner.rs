//! Experiment orchestration: calibrate once, replay the request sequence for
//! every (method, period, horizon, seed), verify guarantees on small instances,
//! and emit CSV/JSON reports.
//!
//! Determinism contract: every run derives its random streams from
//! (master_seed, period, horizon, seed) independently of scheduling, and all
//! outputs are written in a fixed sort order, so a simulate is reproducible
//! byte for byte (wall-clock timings excepted).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{init_dual_state, UcbState, ValueSource};
use crate::conformal::{
    fit_calibration, write_adjustment_csv, BinId, MiscoverageConfig, MiscoverageMode,
};
use crate::data::{
    build_bins, generate_synthetic, load_auction_log, load_campaigns, posthoc_true_cvr,
    sample_event, AuctionRecord, BinScheme, CampaignConfig, CompetingScale, GeneratorSettings,
};
use crate::error::{Error, Result};
use crate::ledger::{LedgerRow, RunLedger};
use crate::mechanism::{ecpm_outcome, second_price_outcome, EcpmRound, SecondPriceRound, TieRule};
use crate::metrics::{self, mean, std_dev};
use crate::oracle::{
    check_reward_guarantee, check_ros_sandwich, offline_optimum, verify_upper_bound_optimality,
    OfflineInstance, ValueField, VerifierRecord,
};
use crate::Scalar;

/// Bidding method of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Adjust,
    Pred,
    True,
    Ucb,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adjust => "adjust",
            Method::Pred => "pred",
            Method::True => "true",
            Method::Ucb => "ucb",
        }
    }

    fn value_source(self) -> Option<ValueSource> {
        match self {
            Method::Adjust => Some(ValueSource::Adjust),
            Method::Pred => Some(ValueSource::Pred),
            Method::True => Some(ValueSource::True),
            Method::Ucb => None,
        }
    }
}

/// Auction mechanism of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    SecondPrice,
    Ecpm,
}

/// Where the auction data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        generator: GeneratorSettings,
    },
    Files {
        auction_log: PathBuf,
        #[serde(default)]
        campaign_file: Option<PathBuf>,
        #[serde(default)]
        campaign_id: Option<String>,
    },
    /// Pre-scored calibration rows `bin_id,mu_hat,v`; supports `calibrate`
    /// only.
    CalibrationCsv {
        path: PathBuf,
    },
}

/// Budget, either absolute or per round (scaled by the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSpec {
    Total(f64),
    PerRound(f64),
}

impl BudgetSpec {
    pub fn total_for(self, horizon: usize) -> f64 {
        match self {
            BudgetSpec::Total(b) => b,
            BudgetSpec::PerRound(rho) => rho * horizon as f64,
        }
    }
}

/// Campaign knobs for synthetic experiments (file experiments read them from
/// the campaign CSV).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub budget: BudgetSpec,
    pub tcpa: f64,
}

fn default_n_bins() -> usize {
    100
}

fn default_zeta() -> f64 {
    2.0
}

fn default_ucb_grid_size() -> usize {
    50
}

fn default_emit_ratio() -> bool {
    true
}

fn default_emit_ledgers() -> bool {
    true
}

fn default_mechanism() -> MechanismKind {
    MechanismKind::SecondPrice
}

fn default_horizons() -> Vec<usize> {
    vec![1]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// One experiment, deserialized from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetSource,
    #[serde(default = "default_mechanism")]
    pub mechanism: MechanismKind,
    /// Period whose records form the calibration set.
    #[serde(default)]
    pub train_period: u32,
    /// Periods the request sequences are sampled from.
    #[serde(default)]
    pub test_periods: Vec<u32>,
    #[serde(default)]
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub miscoverage_mode: MiscoverageMode,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_ucb_grid_size")]
    pub ucb_grid_size: usize,
    /// Upper end of the UCB bid grid; defaults to the maximum cost-to-win
    /// observed in the data.
    #[serde(default)]
    pub ucb_b_max: Option<f64>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub campaign: Option<CampaignSpec>,
    /// Budget gate threshold; defaults to the maximum per-round payment the
    /// mechanism can charge on the prepared sequences.
    #[serde(default)]
    pub min_bid_budget: Option<f64>,
    /// Emit per-run Ratio columns (requires the True baseline).
    #[serde(default = "default_emit_ratio")]
    pub emit_ratio: bool,
    /// Write per-run ledger CSVs.
    #[serde(default = "default_emit_ledgers")]
    pub emit_ledgers: bool,
    #[serde(default)]
    pub verify: Option<VerifySettings>,
}

/// Settings of the `verify` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub instances: usize,
    /// Horizon of each random instance (capped by the joint-enumeration limit).
    pub t_max: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if matches!(self.dataset, DatasetSource::CalibrationCsv { .. }) {
            // calibrate-only configs carry no simulation fields
            return Ok(());
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.emit_ratio && !self.methods.contains(&Method::True) {
            return Err(Error::Config(
                "the True baseline is required whenever Ratio is requested".into(),
            ));
        }
        if self.horizons.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("horizons and seeds must be non-empty".into()));
        }
        if self.test_periods.is_empty() {
            return Err(Error::Config("test_periods must be non-empty".into()));
        }
        if self.test_periods.contains(&self.train_period) {
            return Err(Error::Config(
                "calibration data must be disjoint from test data".into(),
            ));
        }
        if matches!(self.dataset, DatasetSource::Synthetic { .. }) && self.campaign.is_none() {
            return Err(Error::Config(
                "synthetic experiments need an inline campaign".into(),
            ));
        }
        Ok(())
    }
}

/// Everything shared read-only across runs: the calibration artifacts and the
/// per-period test pools, already tCPA-normalized.
pub struct PreparedExperiment {
    pub scheme: BinScheme,
    pub adjustments: Vec<f64>,
    pub adjustment_beta: f64,
    pub test_pools: BTreeMap<u32, Vec<PreparedRecord>>,
    pub campaign: CampaignConfig,
    pub min_bid_budget: f64,
    pub ucb_b_max: f64,
    pub calibration_size: usize,
}

/// One test record with its normalized round ingredients resolved.
#[derive(Debug, Clone)]
pub struct PreparedRecord {
    pub pcvr: f64,
    pub bin: BinId,
    /// Post-hoc true value in normalized units (= the bin's true CVR).
    pub v_true: f64,
    pub pctr: f64,
    /// Competing bids (second-price) or eCPMs (ecpm), tCPA-normalized.
    pub competing: Vec<f64>,
    /// Cost-to-win of the round.
    pub threshold: f64,
}

/// Derives an independent stream seed from the master seed and a context.
fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut x = master ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = splitmix64(x);
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Loads or generates the dataset, builds bins and post-hoc truth from the
/// training period, fits the calibration table and precomputes adjustment
/// terms.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    let competing_scale = match config.mechanism {
        MechanismKind::SecondPrice => CompetingScale::Bid,
        MechanismKind::Ecpm => CompetingScale::Ecpm,
    };
    let (mut records, campaign) = match &config.dataset {
        DatasetSource::Synthetic { generator } => {
            let records = generate_synthetic(
                generator,
                competing_scale,
                derive_seed(config.master_seed, &[0]),
            )?;
            let inline = config
                .campaign
                .ok_or_else(|| Error::Config("synthetic experiments need a campaign".into()))?;
            // per-horizon budgets resolve at run time from the inline campaign
            let campaign = CampaignConfig {
                budget: f64::NAN, // placeholder, never read on this path
                tcpa: inline.tcpa,
            };
            (records, campaign)
        }
        DatasetSource::Files {
            auction_log,
            campaign_file,
            campaign_id,
        } => {
            let records = load_auction_log(auction_log)?;
            // an inline campaign overrides the campaign file entirely
            let campaign = match (config.campaign, campaign_file) {
                (Some(spec), _) => CampaignConfig {
                    budget: match spec.budget {
                        BudgetSpec::Total(b) => b,
                        BudgetSpec::PerRound(_) => f64::NAN,
                    },
                    tcpa: spec.tcpa,
                },
                (None, Some(path)) => {
                    let campaigns = load_campaigns(path)?;
                    match campaign_id {
                        Some(id) => {
                            campaigns
                                .iter()
                                .find(|(cid, _)| cid == id)
                                .ok_or_else(|| Error::Config(format!("campaign `{id}` not found")))?
                                .1
                        }
                        None => {
                            campaigns
                                .first()
                                .ok_or_else(|| Error::Config("empty campaign file".into()))?
                                .1
                        }
                    }
                }
                (None, None) => {
                    return Err(Error::Config(
                        "file experiments need a campaign file or inline campaign".into(),
                    ))
                }
            };
            (records, campaign)
        }
        DatasetSource::CalibrationCsv { .. } => {
            return Err(Error::Config(
                "a calibration-only dataset cannot drive a simulation".into(),
            ))
        }
    };

    let tcpa = campaign.tcpa;
    if tcpa.is_nan() || tcpa <= 0.0 {
        return Err(Error::Config(format!("tcpa {tcpa} must be positive")));
    }
    // tCPA normalization: competing money quantities divide by tcpa
    for r in records.iter_mut() {
        for b in r.competing_bids.iter_mut() {
            *b /= tcpa;
        }
    }

    let train: Vec<&AuctionRecord> = records
        .iter()
        .filter(|r| r.period == config.train_period)
        .collect();
    if train.is_empty() {
        return Err(Error::Config(format!(
            "training period {} has no records",
            config.train_period
        )));
    }
    let train_pcvrs: Vec<f64> = train.iter().map(|r| r.pcvr).collect();
    let scheme = build_bins(&train_pcvrs, config.n_bins)?;
    let train_owned: Vec<AuctionRecord> = train.into_iter().cloned().collect();
    let mean_shift = match &config.dataset {
        DatasetSource::Synthetic { generator } => generator.cvr_mean_shift,
        _ => 0.0,
    };
    let mut posthoc_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, &[1]));
    let scheme = posthoc_true_cvr(&train_owned, &scheme, mean_shift, &mut posthoc_rng)?;

    // calibration rows: (bin, prediction, post-hoc true value), all on CVR scale
    let calibration_rows: Vec<(BinId, f64, f64)> = train_owned
        .iter()
        .map(|r| {
            let bin = scheme.assign(r.pcvr);
            (bin, r.pcvr, scheme.true_cvr(bin).expect("bin filled"))
        })
        .collect();
    let table = fit_calibration(&calibration_rows)?;
    let miscoverage = MiscoverageConfig::new(
        config.alpha,
        config.miscoverage_mode,
        config.horizons.iter().copied().max().unwrap_or(1),
    )?;
    let cache = table.precompute_adjustments(&miscoverage)?;
    let adjustments: Vec<f64> = (0..scheme.n_bins() as BinId)
        .map(|bin| cache.d_for(bin))
        .collect::<Result<_>>()?;

    let mut test_pools: BTreeMap<u32, Vec<PreparedRecord>> = BTreeMap::new();
    let mut max_threshold = 0.0f64;
    for r in &records {
        if !config.test_periods.contains(&r.period) {
            continue;
        }
        let bin = scheme.assign(r.pcvr);
        let v_true = scheme.true_cvr(bin).expect("bin filled");
        let threshold = match config.mechanism {
            MechanismKind::SecondPrice => r.competing_bids.iter().copied().fold(0.0, f64::max),
            MechanismKind::Ecpm => {
                if r.pctr <= 0.0 {
                    return Err(Error::Validation {
                        line: 0,
                        column: "pctr",
                        msg: format!(
                            "auction {} has pctr 0 under the ecpm mechanism",
                            r.auction_id
                        ),
                    });
                }
                r.competing_bids.iter().copied().fold(0.0, f64::max) / (r.pctr * 1000.0)
            }
        };
        max_threshold = max_threshold.max(threshold);
        test_pools
            .entry(r.period)
            .or_default()
            .push(PreparedRecord {
                pcvr: r.pcvr,
                bin,
                v_true,
                pctr: r.pctr,
                competing: r.competing_bids.clone(),
                threshold,
            });
    }
    for &p in &config.test_periods {
        if !test_pools.contains_key(&p) {
            return Err(Error::Config(format!("test period {p} has no records")));
        }
    }

    let min_bid_budget = config.min_bid_budget.unwrap_or(max_threshold);
    let ucb_b_max = config.ucb_b_max.unwrap_or(max_threshold).max(1e-9);
    Ok(PreparedExperiment {
        scheme,
        adjustments,
        adjustment_beta: miscoverage.effective_beta(),
        test_pools,
        campaign,
        min_bid_budget,
        ucb_b_max,
        calibration_size: calibration_rows.len(),
    })
}

/// One (method, period, horizon, seed) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunSpec {
    pub method: Method,
    pub period: u32,
    pub horizon: usize,
    pub seed: u64,
}

impl RunSpec {
    pub fn run_id(&self) -> String {
        format!(
            "{}-p{}-T{}-s{}",
            self.method.name(),
            self.period,
            self.horizon,
            self.seed
        )
    }
}

/// One round of the request sequence with its event draws resolved.
struct RoundInput {
    pcvr: f64,
    bin: BinId,
    v_true: f64,
    click: bool,
    conversion: bool,
    mech: MechRound,
}

enum MechRound {
    SecondPrice(SecondPriceRound<f64>),
    Ecpm(EcpmRound<f64>),
}

impl MechRound {
    fn outcome(&self, bid: f64) -> Result<crate::mechanism::AuctionOutcome<f64>> {
        match self {
            MechRound::SecondPrice(round) => second_price_outcome(bid, round),
            MechRound::Ecpm(round) => ecpm_outcome(bid, round),
        }
    }
}

/// Samples the request sequence of one run and pre-draws its click and
/// conversion events. Independent of the method, so methods compared on a
/// seed see identical randomness.
fn build_rounds(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
    spec: &RunSpec,
) -> Vec<RoundInput> {
    let pool = &prepared.test_pools[&spec.period];
    let mut seq_rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.master_seed,
        &[2, spec.period as u64, spec.horizon as u64, spec.seed],
    ));
    let indices: Vec<usize> = if pool.len() >= spec.horizon {
        rand::seq::index::sample(&mut seq_rng, pool.len(), spec.horizon).into_vec()
    } else {
        (0..spec.horizon)
            .map(|_| seq_rng.gen_range(0..pool.len()))
            .collect()
    };
    let mut event_rng = ChaCha8Rng::seed_from_u64(derive_seed(
        config.master_seed,
        &[3, spec.period as u64, spec.horizon as u64, spec.seed],
    ));
    indices
        .into_iter()
        .map(|i| {
            let r = &pool[i];
            let click = sample_event(r.pctr, &mut event_rng);
            let conversion = sample_event(r.v_true, &mut event_rng);
            let mech = match config.mechanism {
                MechanismKind::SecondPrice => MechRound::SecondPrice(SecondPriceRound {
                    competing_bids: r.competing.clone(),
                    tie_rule: TieRule::AgentLoses,
                }),
                MechanismKind::Ecpm => MechRound::Ecpm(EcpmRound {
                    pctr: r.pctr,
                    competing_ecpm_max: r.competing.iter().copied().fold(0.0, f64::max),
                    click,
                }),
            };
            RoundInput {
                pcvr: r.pcvr,
                bin: r.bin,
                v_true: r.v_true,
                click,
                conversion,
                mech,
            }
        })
        .collect()
}

fn run_budget(config: &ExperimentConfig, prepared: &PreparedExperiment, horizon: usize) -> f64 {
    match config.campaign {
        Some(spec) => spec.budget.total_for(horizon) / prepared.campaign.tcpa,
        None => prepared.campaign.budget / prepared.campaign.tcpa,
    }
}

/// Executes one run and returns its ledger. Only the per-round bid+update
/// loop is timed; preparation and I/O stay outside the clock.
pub fn execute_run(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
    spec: &RunSpec,
) -> Result<RunLedger<Scalar>> {
    let rounds = build_rounds(config, prepared, spec);
    let budget = run_budget(config, prepared, spec.horizon);
    if budget.is_nan() || budget <= 0.0 {
        return Err(Error::Config(format!("budget {budget} must be positive")));
    }
    let mut rows: Vec<LedgerRow<Scalar>> = Vec::with_capacity(rounds.len());
    let min_bid_budget = prepared.min_bid_budget;

    let wall_time_s = match spec.method.value_source() {
        Some(source) => {
            let mut state = init_dual_state(budget, spec.horizon)?;
            let start = Instant::now();
            for (t, round) in rounds.iter().enumerate() {
                let v_hat = match source {
                    ValueSource::Adjust => {
                        (round.pcvr + prepared.adjustments[round.bin as usize]).clamp(0.0, 1.0)
                    }
                    ValueSource::Pred => round.pcvr,
                    ValueSource::True => round.v_true,
                };
                let bid = state.compute_bid(v_hat, min_bid_budget);
                let outcome = round.mech.outcome(bid)?;
                state.update(v_hat, &outcome)?;
                rows.push(LedgerRow {
                    round: t as u32 + 1,
                    bid,
                    won: outcome.won,
                    allocation: outcome.allocation,
                    payment: outcome.payment,
                    lambda: state.lambda(),
                    mu: state.mu(),
                    remaining_budget: state.remaining_budget(),
                    v_hat,
                    v_true: round.v_true,
                    cvr_true: round.v_true,
                    click: round.click,
                    conversion: round.conversion,
                    price_threshold: outcome.price_threshold,
                });
            }
            start.elapsed().as_secs_f64()
        }
        None => {
            let mut ucb = UcbState::new(prepared.ucb_b_max, config.ucb_grid_size, budget)?;
            let mut tie_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                config.master_seed,
                &[4, spec.period as u64, spec.horizon as u64, spec.seed],
            ));
            let start = Instant::now();
            for (t, round) in rounds.iter().enumerate() {
                let decision = ucb.select_bid(&mut tie_rng);
                let outcome = round.mech.outcome(decision.bid)?;
                let conversion = outcome.allocation > 0.0 && round.conversion;
                if let Some(arm) = decision.arm {
                    ucb.update(arm, &outcome, conversion);
                }
                rows.push(LedgerRow {
                    round: t as u32 + 1,
                    bid: decision.bid,
                    won: outcome.won,
                    allocation: outcome.allocation,
                    payment: outcome.payment,
                    lambda: 0.0,
                    mu: 0.0,
                    remaining_budget: ucb.remaining_budget(),
                    v_hat: 0.0,
                    v_true: round.v_true,
                    cvr_true: round.v_true,
                    click: round.click,
                    conversion: round.conversion,
                    price_threshold: outcome.price_threshold,
                });
            }
            start.elapsed().as_secs_f64()
        }
    };

    let ledger = RunLedger {
        method: spec.method.name().to_string(),
        period: spec.period,
        horizon: spec.horizon,
        seed: spec.seed,
        budget,
        rows,
        wall_time_s,
    };
    // contract breach, not a tolerable outcome: abort before anything is written
    ledger.check_budget()?;
    Ok(ledger)
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: Method,
    pub period: u32,
    pub horizon: usize,
    pub seed: u64,
    pub score: f64,
    pub ratio: f64,
    pub coverage: f64,
    pub ros_true: f64,
    pub ros_adjusted: f64,
    pub violation: f64,
    pub d_max: f64,
    pub v_min: f64,
    pub wall_time_s: f64,
}

/// Aggregates of one method across runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MethodSummary {
    pub runs: usize,
    pub score_mean: f64,
    pub score_std: f64,
    pub ratio_mean: f64,
    pub ratio_std: f64,
    /// `E[Score(Alg)] / E[Score(True)]` over paired runs.
    pub ratio_of_means: f64,
    pub coverage_mean: f64,
    pub ros_true_mean: f64,
    pub violation_mean: f64,
    pub wall_time_mean_s: f64,
}

/// JSON summary mirroring the per-method mean +/- std table layout.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub schema_version: u32,
    pub methods: BTreeMap<String, MethodSummary>,
}

/// Everything `run_experiment` produces.
pub struct ReportBundle {
    pub metrics: Vec<MetricsRow>,
    pub summary: Summary,
    pub ledgers: Vec<RunLedger<Scalar>>,
    /// Oracle verifications of the runs whose horizon admits brute force.
    pub verifier: Vec<VerifierRecord>,
}

/// Runs the whole experiment: fan out over (method, period, horizon, seed),
/// compute all metrics, pair runs with the True baseline for ratios, and
/// write reports under `out_dir` when given.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ReportBundle> {
    config.validate()?;
    let prepared = prepare(config)?;

    let mut specs = Vec::new();
    for &method in &config.methods {
        for &period in &config.test_periods {
            for &horizon in &config.horizons {
                for &seed in &config.seeds {
                    specs.push(RunSpec {
                        method,
                        period,
                        horizon,
                        seed,
                    });
                }
            }
        }
    }
    specs.sort();

    let mut ledgers: Vec<RunLedger<Scalar>> = specs
        .par_iter()
        .map(|spec| execute_run(config, &prepared, spec))
        .collect::<Result<_>>()?;
    ledgers.sort_by(|a, b| {
        (a.method.clone(), a.period, a.horizon, a.seed).cmp(&(
            b.method.clone(),
            b.period,
            b.horizon,
            b.seed,
        ))
    });

    // paired True-baseline scores for the Ratio
    let mut true_scores: BTreeMap<(u32, usize, u64), f64> = BTreeMap::new();
    for ledger in &ledgers {
        if ledger.method == Method::True.name() {
            let report = metrics::score(ledger, 1.0, config.zeta);
            true_scores.insert((ledger.period, ledger.horizon, ledger.seed), report.score);
        }
    }

    let mut rows = Vec::with_capacity(ledgers.len());
    for ledger in &ledgers {
        let method = config
            .methods
            .iter()
            .copied()
            .find(|m| m.name() == ledger.method)
            .expect("ledger method comes from the config");
        let report = metrics::score(ledger, 1.0, config.zeta);
        let ratio = true_scores
            .get(&(ledger.period, ledger.horizon, ledger.seed))
            .map(|&t| if t > 0.0 { report.score / t } else { f64::NAN })
            .unwrap_or(f64::NAN);
        let cov = metrics::coverage(ledger).unwrap_or(f64::NAN);
        let (ros_true, ros_adjusted, violation) = match metrics::ros_summary(ledger) {
            Ok(s) => (s.ros_true, s.ros_adjusted, s.violation),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        rows.push(MetricsRow {
            run_id: format!(
                "{}-p{}-T{}-s{}",
                ledger.method, ledger.period, ledger.horizon, ledger.seed
            ),
            method,
            period: ledger.period,
            horizon: ledger.horizon,
            seed: ledger.seed,
            score: report.score,
            ratio,
            coverage: cov,
            ros_true,
            ros_adjusted,
            violation,
            d_max: ledger.d_max(),
            v_min: ledger.v_min(),
            wall_time_s: ledger.wall_time_s,
        });
    }

    let summary = summarize(config, &rows);

    // horizons small enough for exact subset enumeration get the full oracle
    // treatment on their realized ledgers
    let mut verifier = Vec::new();
    for ledger in &ledgers {
        if ledger.horizon > crate::oracle::MAX_BRUTE_FORCE_T || ledger.method == Method::Ucb.name()
        {
            continue;
        }
        verifier.extend(verify_ledger(ledger)?);
    }

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        if config.emit_ledgers {
            let ledger_dir = dir.join("ledgers");
            fs::create_dir_all(&ledger_dir)?;
            for ledger in &ledgers {
                let name = format!(
                    "{}-p{}-T{}-s{}.csv",
                    ledger.method, ledger.period, ledger.horizon, ledger.seed
                );
                let mut out = BufWriter::new(File::create(ledger_dir.join(name))?);
                ledger.write_csv(&mut out)?;
                out.flush()?;
            }
        }
        write_metrics_csv(&rows, &dir.join("metrics.csv"))?;
        if !verifier.is_empty() {
            write_verifier_json(&verifier, &dir.join("verifier.json"))?;
        }
        let mut out = BufWriter::new(File::create(dir.join("summary.json"))?);
        serde_json::to_writer_pretty(&mut out, &summary)?;
        out.write_all(b"\n")?;
        out.flush()?;
    }

    Ok(ReportBundle {
        metrics: rows,
        summary,
        ledgers,
        verifier,
    })
}

/// Runs the oracle checks applicable to one realized ledger: the RoS
/// sandwich and the reward-guarantee decomposition always (given brute force
/// is tractable), upper-bound optimality when the joint value-grid
/// enumeration fits.
fn verify_ledger(ledger: &RunLedger<Scalar>) -> Result<Vec<VerifierRecord>> {
    let id = format!(
        "{}-p{}-T{}-s{}",
        ledger.method, ledger.period, ledger.horizon, ledger.seed
    );
    let instance = OfflineInstance {
        values_true: ledger.rows.iter().map(|r| r.v_true).collect(),
        values_adjusted: ledger.rows.iter().map(|r| r.v_hat).collect(),
        costs: ledger.rows.iter().map(|r| r.price_threshold).collect(),
        budget: ledger.budget,
    };
    let mut records = Vec::new();
    let oracle_true = offline_optimum(&instance, ValueField::True)?;
    let oracle_adj = offline_optimum(&instance, ValueField::Adjusted)?;
    let t2 = check_reward_guarantee(ledger, &oracle_true, &oracle_adj);
    records.push(match t2.skipped_reason {
        Some(reason) => VerifierRecord::skipped("reward_guarantee", &id, reason),
        None => VerifierRecord::new("reward_guarantee", &id, t2.holds, t2.lhs, t2.rhs),
    });
    match check_ros_sandwich(ledger) {
        Ok(b) => records.push(VerifierRecord::new(
            "ros_sandwich",
            &id,
            b.holds,
            b.lower,
            b.upper,
        )),
        Err(Error::UndefinedRos) => records.push(VerifierRecord::skipped(
            "ros_sandwich",
            &id,
            "no won auction with positive spend".into(),
        )),
        Err(Error::ZeroValueAssumption) => records.push(VerifierRecord::skipped(
            "ros_sandwich",
            &id,
            "v_min = 0: run unverifiable under the positive-value assumption".into(),
        )),
        Err(e) => return Err(e),
    }
    if ledger.horizon <= crate::oracle::MAX_JOINT_ENUM_T {
        let upper: Vec<f64> = ledger.rows.iter().map(|r| r.v_hat).collect();
        let witness = verify_upper_bound_optimality(&instance, &upper)?;
        records.push(VerifierRecord::new(
            "upper_bound_optimality",
            &id,
            witness.holds,
            witness.upper_bound_reward,
            witness.best_reward,
        ));
    }
    Ok(records)
}

fn summarize(config: &ExperimentConfig, rows: &[MetricsRow]) -> Summary {
    let mut methods = BTreeMap::new();
    for &method in &config.methods {
        let of_method: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == method).collect();
        if of_method.is_empty() {
            continue;
        }
        let scores: Vec<f64> = of_method.iter().map(|r| r.score).collect();
        let ratios: Vec<f64> = of_method
            .iter()
            .map(|r| r.ratio)
            .filter(|x| x.is_finite())
            .collect();
        let coverages: Vec<f64> = of_method
            .iter()
            .map(|r| r.coverage)
            .filter(|x| x.is_finite())
            .collect();
        let ros: Vec<f64> = of_method
            .iter()
            .map(|r| r.ros_true)
            .filter(|x| x.is_finite())
            .collect();
        let violations: Vec<f64> = of_method
            .iter()
            .map(|r| r.violation)
            .filter(|x| x.is_finite())
            .collect();
        let times: Vec<f64> = of_method.iter().map(|r| r.wall_time_s).collect();
        // ratio of means over paired runs
        let ratio_of_means = if config.emit_ratio {
            let true_rows: BTreeMap<(u32, usize, u64), f64> = rows
                .iter()
                .filter(|r| r.method == Method::True)
                .map(|r| ((r.period, r.horizon, r.seed), r.score))
                .collect();
            let mut num = Vec::new();
            let mut den = Vec::new();
            for row in &of_method {
                if let Some(&t) = true_rows.get(&(row.period, row.horizon, row.seed)) {
                    num.push(row.score);
                    den.push(t);
                }
            }
            let dm = mean(&den);
            if dm > 0.0 {
                mean(&num) / dm
            } else {
                f64::NAN
            }
        } else {
            f64::NAN
        };
        methods.insert(
            method.name().to_string(),
            MethodSummary {
                runs: of_method.len(),
                score_mean: mean(&scores),
                score_std: std_dev(&scores),
                ratio_mean: mean(&ratios),
                ratio_std: std_dev(&ratios),
                ratio_of_means,
                coverage_mean: mean(&coverages),
                ros_true_mean: mean(&ros),
                violation_mean: mean(&violations),
                wall_time_mean_s: mean(&times),
            },
        );
    }
    Summary {
        schema_version: 1,
        methods,
    }
}

/// Exact metrics CSV schema.
pub const METRICS_HEADER: &str =
    "run_id,method,period,score,ratio,coverage,ros_true,ros_adjusted,violation,d_max,v_min,wall_time_s";

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{:.6}",
            r.run_id,
            r.method.name(),
            r.period,
            r.score,
            r.ratio,
            r.coverage,
            r.ros_true,
            r.ros_adjusted,
            r.violation,
            r.d_max,
            r.v_min,
            r.wall_time_s
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the per-bin adjustment export for the config's miscoverage level.
pub fn write_adjustments(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("adjustments.csv");
    match &config.dataset {
        DatasetSource::CalibrationCsv { path: csv_path } => {
            let rows = crate::conformal::read_calibration_csv::<f64>(csv_path)?;
            let table = fit_calibration(&rows)?;
            let miscoverage = MiscoverageConfig::new(
                config.alpha,
                config.miscoverage_mode,
                config.horizons.iter().copied().max().unwrap_or(1),
            )?;
            let cache = table.precompute_adjustments(&miscoverage)?;
            write_adjustment_csv(&cache, &path)?;
        }
        _ => {
            let prepared = prepare(config)?;
            let mut out = BufWriter::new(File::create(&path)?);
            writeln!(out, "bin_id,beta,d")?;
            for (bin, d) in prepared.adjustments.iter().enumerate() {
                writeln!(out, "{},{},{}", bin, prepared.adjustment_beta, d)?;
            }
            out.flush()?;
        }
    }
    Ok(path)
}

/// Runs the oracle verifications on random small instances: upper-bound
/// optimality, the reward-guarantee decomposition and the RoS sandwich, each
/// on a mirror-descent replay with coverage holding by construction.
pub fn run_verification(settings: &VerifySettings) -> Result<Vec<VerifierRecord>> {
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let t_cap = settings.t_max.clamp(2, crate::oracle::MAX_JOINT_ENUM_T);
    for idx in 0..settings.instances {
        let id = format!("inst-{idx}");
        let t = rng.gen_range(2..=t_cap);
        let values: Vec<f64> = (0..t).map(|_| rng.gen_range(0.1..0.9)).collect();
        let upper: Vec<f64> = values
            .iter()
            .map(|&v| (v + rng.gen_range(0.0..0.15)).min(1.0))
            .collect();
        let costs: Vec<f64> = (0..t).map(|_| rng.gen_range(0.02..0.8)).collect();
        let total_cost: f64 = costs.iter().sum();
        let budget = rng.gen_range(0.2..1.0) * total_cost;
        let instance = OfflineInstance {
            values_true: values.clone(),
            values_adjusted: upper.clone(),
            costs: costs.clone(),
            budget,
        };

        let witness = verify_upper_bound_optimality(&instance, &upper)?;
        records.push(VerifierRecord::new(
            "upper_bound_optimality",
            &id,
            witness.holds,
            witness.upper_bound_reward,
            witness.best_reward,
        ));

        let oracle_true = offline_optimum(&instance, ValueField::True)?;
        let oracle_adj = offline_optimum(&instance, ValueField::Adjusted)?;
        debug_assert!(oracle_true.assert_feasible(budget));
        debug_assert!(oracle_adj.assert_feasible(budget));

        let ledger = replay_instance(&instance, &upper, idx as u64);
        let t2 = check_reward_guarantee(&ledger, &oracle_true, &oracle_adj);
        records.push(match t2.skipped_reason {
            Some(reason) => VerifierRecord::skipped("reward_guarantee", &id, reason),
            None => VerifierRecord::new("reward_guarantee", &id, t2.holds, t2.lhs, t2.rhs),
        });

        match check_ros_sandwich(&ledger) {
            Ok(b) => records.push(VerifierRecord::new(
                "ros_sandwich",
                &id,
                b.holds,
                b.lower,
                b.upper,
            )),
            Err(Error::UndefinedRos) => records.push(VerifierRecord::skipped(
                "ros_sandwich",
                &id,
                "no won auction with positive spend".into(),
            )),
            Err(e) => return Err(e),
        }

        // oracle dominance over the (feasible) agent replay
        let agent_reward = ledger.true_reward();
        let feasible =
            ledger.total_spend() <= budget + 1e-9 && ledger.total_spend() <= agent_reward + 1e-9;
        if feasible {
            records.push(VerifierRecord::new(
                "oracle_dominance",
                &id,
                oracle_true.reward + 1e-9 >= agent_reward,
                agent_reward,
                oracle_true.reward,
            ));
        }
    }
    Ok(records)
}

/// Replays a mirror-descent agent bidding with the interval upper bounds over
/// the instance's rounds (cost-to-win = the single competing bid).
fn replay_instance(instance: &OfflineInstance<f64>, upper: &[f64], seed: u64) -> RunLedger<Scalar> {
    let t = instance.horizon();
    let budget = instance.budget.max(1e-6);
    let mut state = init_dual_state(budget, t).expect("valid replay state");
    let min_bid_budget = instance.costs.iter().copied().fold(0.0f64, f64::max);
    let mut rows = Vec::with_capacity(t);
    for (i, (&v_hat, &cost)) in upper.iter().zip(&instance.costs).enumerate() {
        let bid = state.compute_bid(v_hat, min_bid_budget);
        let round = SecondPriceRound {
            competing_bids: vec![cost],
            tie_rule: TieRule::AgentLoses,
        };
        let outcome = second_price_outcome(bid, &round).expect("valid bid");
        state
            .update(v_hat, &outcome)
            .expect("no overdraft under the gate");
        rows.push(LedgerRow {
            round: i as u32 + 1,
            bid,
            won: outcome.won,
            allocation: outcome.allocation,
            payment: outcome.payment,
            lambda: state.lambda(),
            mu: state.mu(),
            remaining_budget: state.remaining_budget(),
            v_hat,
            v_true: instance.values_true[i],
            cvr_true: instance.values_true[i],
            click: outcome.won,
            conversion: false,
            price_threshold: cost,
        });
    }
    RunLedger {
        method: "adjust".into(),
        period: 0,
        horizon: t,
        seed,
        budget,
        rows,
        wall_time_s: 0.0,
    }
}

/// Writes verifier records as a JSON array.
pub fn write_verifier_json(records: &[VerifierRecord], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, records)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Re-aggregates metrics rows read back from a metrics CSV (the `report`
/// subcommand). Returns per-method (mean, std) of score, ratio and coverage.
pub fn aggregate_metrics_csv(path: &Path) -> Result<BTreeMap<String, MethodSummary>> {
    // (score, ratio, coverage, violation, wall time) per row
    type ReadbackRow = (f64, f64, f64, f64, f64);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut grouped: BTreeMap<String, Vec<ReadbackRow>> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |idx: usize, name: &'static str| -> Result<f64> {
            row.get(idx)
                .ok_or(Error::Parse {
                    line,
                    msg: format!("missing column `{name}`"),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    msg: format!("column `{name}`: {e}"),
                })
        };
        let method = row
            .get(1)
            .ok_or(Error::Parse {
                line,
                msg: "missing column `method`".into(),
            })?
            .to_string();
        let score = get(3, "score")?;
        let ratio = get(4, "ratio")?;
        let coverage = get(5, "coverage")?;
        let violation = get(8, "violation")?;
        let wall = get(11, "wall_time_s")?;
        grouped
            .entry(method)
            .or_default()
            .push((score, ratio, coverage, violation, wall));
    }
    let mut out = BTreeMap::new();
    for (method, rows) in grouped {
        let scores: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let ratios: Vec<f64> = rows.iter().map(|r| r.1).filter(|x| x.is_finite()).collect();
        let coverages: Vec<f64> = rows.iter().map(|r| r.2).filter(|x| x.is_finite()).collect();
        let violations: Vec<f64> = rows.iter().map(|r| r.3).filter(|x| x.is_finite()).collect();
        let times: Vec<f64> = rows.iter().map(|r| r.4).collect();
        out.insert(
            method,
            MethodSummary {
                runs: rows.len(),
                score_mean: mean(&scores),
                score_std: std_dev(&scores),
                ratio_mean: mean(&ratios),
                ratio_std: std_dev(&ratios),
                ratio_of_means: f64::NAN,
                coverage_mean: mean(&coverages),
                ros_true_mean: f64::NAN,
                violation_mean: mean(&violations),
                wall_time_mean_s: mean(&times),
            },
        );
    }
    Ok(out)
}
