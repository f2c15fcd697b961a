//! Fault-injection campaigns.
//!
//! A fault lands on one arithmetic result chosen uniformly over every
//! operation an inference performs, so layers, phases and streams are hit in
//! proportion to their operation populations. Each trial replays inference
//! with the armed fault(s) and is classified against a fault-free golden run.
//!
//! Trial `t` draws from a ChaCha8 generator keyed by the master seed and
//! switched to stream `t`; successive draws advance the word position. Trials
//! are therefore independent of scheduling order and thread count.

mod report;

pub use report::{
    CampaignReport, CheckerSummary, OutcomeCounts, OutcomeRates, SiteMix, ThresholdOutcome,
};

use crate::abft::{CheckThreshold, CheckerKind, LayerHooks, Phase};
use crate::accounting::{op_count_table, phase_shares};
use crate::gcn::{classify, infer, infer_clean, GcnModel, ModelError};
use crate::matrix::{BitFlip, DenseMatrix, Matrix, MatrixError, Stream, Width};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("no operations to inject into")]
    EmptyPopulation,
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid fault site: {0}")]
    InvalidSite(String),
}

/// Fully resolved injection point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultSite {
    pub layer: usize,
    pub phase: Phase,
    pub stream: Stream,
    /// Index within `(layer, phase, stream)` in kernel execution order.
    pub op_index: u64,
    pub bit: u32,
    pub width: Width,
}

impl FaultSite {
    pub fn new(
        layer: usize,
        phase: Phase,
        stream: Stream,
        op_index: u64,
        bit: u32,
    ) -> Result<Self, LabError> {
        if phase == Phase::LayerEnd {
            return Err(LabError::InvalidSite(
                "faults target Phase1 or Phase2".into(),
            ));
        }
        let width = stream.width();
        if bit >= width.bits() {
            return Err(MatrixError::BitOutOfRange { bit, width }.into());
        }
        Ok(Self {
            layer,
            phase,
            stream,
            op_index,
            bit,
            width,
        })
    }

    fn flip(&self) -> BitFlip {
        BitFlip {
            stream: self.stream,
            op_index: self.op_index,
            bit: self.bit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub layer: usize,
    pub phase: Phase,
    pub stream: Stream,
    pub count: u64,
}

/// Faultable operations per `(layer, phase, stream)` for one checker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Populations {
    pub entries: Vec<PopulationEntry>,
}

impl Populations {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn count(&self, layer: usize, phase: Phase, stream: Stream) -> u64 {
        self.entries
            .iter()
            .find(|e| (e.layer, e.phase, e.stream) == (layer, phase, stream))
            .map_or(0, |e| e.count)
    }

    pub fn stream_total(&self, stream: Stream) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.stream == stream)
            .map(|e| e.count)
            .sum()
    }

    /// Maps a draw in `0..total()` to the operation it names.
    pub fn locate(&self, draw: u64) -> Option<(PopulationEntry, u64)> {
        let mut rest = draw;
        for e in &self.entries {
            if rest < e.count {
                return Some((*e, rest));
            }
            rest -= e.count;
        }
        None
    }
}

/// Runs one fault-free pass and records every stream population.
pub fn census(
    model: &GcnModel,
    features: &Matrix,
    checker: CheckerKind,
) -> Result<Populations, LabError> {
    let mut hooks = vec![LayerHooks::none(); model.layers().len()];
    infer(
        model,
        features,
        checker,
        CheckThreshold::new(1.0).expect("positive"),
        &mut hooks,
    )?;
    let mut entries = Vec::with_capacity(hooks.len() * 4);
    for (layer, h) in hooks.iter().enumerate() {
        for (phase, hook) in [(Phase::Phase1, &h.phase1), (Phase::Phase2, &h.phase2)] {
            for stream in [Stream::MacResult, Stream::ChecksumAccum] {
                entries.push(PopulationEntry {
                    layer,
                    phase,
                    stream,
                    count: hook.seen(stream),
                });
            }
        }
    }
    Ok(Populations { entries })
}

/// Site for a given operation draw and bit.
pub fn site_for_draw(
    populations: &Populations,
    draw: u64,
    bit: u32,
) -> Result<FaultSite, LabError> {
    let (entry, op_index) = populations.locate(draw).ok_or(LabError::EmptyPopulation)?;
    FaultSite::new(entry.layer, entry.phase, entry.stream, op_index, bit)
}

/// Draws an operation uniformly over all populations, then a bit uniformly
/// over that operation's width.
pub fn schedule_fault<R: Rng + ?Sized>(
    populations: &Populations,
    rng: &mut R,
) -> Result<FaultSite, LabError> {
    let total = populations.total();
    if total == 0 {
        return Err(LabError::EmptyPopulation);
    }
    let draw = rng.gen_range(0..total);
    let (entry, _) = populations.locate(draw).expect("draw below total");
    let bit = rng.gen_range(0..entry.stream.width().bits());
    site_for_draw(populations, draw, bit)
}

/// Independent generator for one trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeCategory {
    /// Output corrupted and flagged.
    Detected,
    /// Output intact but flagged.
    FalsePositive,
    /// Output corrupted and not flagged.
    Silent,
    /// Output intact and not flagged.
    Benign,
}

impl OutcomeCategory {
    pub fn classify(output_changed: bool, flagged: bool) -> Self {
        match (output_changed, flagged) {
            (true, true) => Self::Detected,
            (false, true) => Self::FalsePositive,
            (true, false) => Self::Silent,
            (false, false) => Self::Benign,
        }
    }
}

/// Fault-free reference artifacts shared by every trial.
#[derive(Debug, Clone)]
pub struct Golden {
    pub logits: DenseMatrix,
    pub labels: Vec<usize>,
}

impl Golden {
    pub fn compute(model: &GcnModel, features: &Matrix) -> Result<Self, LabError> {
        let trace = infer_clean(
            model,
            features,
            CheckerKind::Fused,
            CheckThreshold::new(1.0).expect("positive"),
        )?;
        let labels = classify(&trace.logits);
        Ok(Self {
            logits: trace.logits,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// One category per threshold, in the order given.
    pub categories: Vec<OutcomeCategory>,
    pub output_changed: bool,
    pub critical: bool,
    /// Fraction of nodes whose label changed.
    pub nodes_affected: f64,
    pub fired: Vec<BitFlip>,
}

/// Replays inference with `sites` armed and classifies the result.
pub fn run_trial(
    model: &GcnModel,
    features: &Matrix,
    golden: &Golden,
    checker: CheckerKind,
    sites: &[FaultSite],
    thresholds: &[CheckThreshold],
) -> Result<TrialOutcome, LabError> {
    let layers = model.layers().len();
    let mut hooks = vec![LayerHooks::none(); layers];
    for site in sites {
        let h = hooks
            .get_mut(site.layer)
            .ok_or_else(|| LabError::InvalidSite(format!("layer {} of {layers}", site.layer)))?;
        h.phase_mut(site.phase).arm(site.flip())?;
    }
    let tau = thresholds
        .first()
        .copied()
        .unwrap_or(CheckThreshold::new(1.0).expect("positive"));
    let trace = infer(model, features, checker, tau, &mut hooks)?;

    let output_changed = !trace.logits.bit_eq(&golden.logits);
    let categories = thresholds
        .iter()
        .map(|&t| OutcomeCategory::classify(output_changed, trace.flagged_at(t)))
        .collect();
    let labels = classify(&trace.logits);
    let changed = labels
        .iter()
        .zip(&golden.labels)
        .filter(|(a, b)| a != b)
        .count();
    let fired = hooks
        .iter()
        .flat_map(|h| h.phase1.fired().iter().chain(h.phase2.fired()))
        .copied()
        .collect();
    Ok(TrialOutcome {
        categories,
        output_changed,
        critical: changed > 0,
        nodes_affected: changed as f64 / golden.labels.len() as f64,
        fired,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub trials: u64,
    pub master_seed: u64,
    pub thresholds: Vec<CheckThreshold>,
    pub checkers: Vec<CheckerKind>,
    pub faults_per_trial: u32,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            master_seed: 0,
            thresholds: [1e-4, 1e-5, 1e-6, 1e-7]
                .into_iter()
                .map(|t| CheckThreshold::new(t).expect("positive"))
                .collect(),
            checkers: CheckerKind::ALL.to_vec(),
            faults_per_trial: 1,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), LabError> {
        if self.trials == 0 {
            return Err(LabError::InvalidConfig("trials must be at least 1".into()));
        }
        if self.thresholds.is_empty() {
            return Err(LabError::InvalidConfig(
                "at least one threshold required".into(),
            ));
        }
        if self.checkers.is_empty() {
            return Err(LabError::InvalidConfig(
                "at least one checker required".into(),
            ));
        }
        if self.faults_per_trial == 0 {
            return Err(LabError::InvalidConfig(
                "faults_per_trial must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Sites for one trial and checker.
pub fn trial_sites(
    populations: &Populations,
    master_seed: u64,
    trial: u64,
    faults: u32,
) -> Result<Vec<FaultSite>, LabError> {
    // every checker replays the same draws against its own populations
    let mut rng = trial_rng(master_seed, trial);
    (0..faults)
        .map(|_| schedule_fault(populations, &mut rng))
        .collect()
}

/// Runs every trial for every configured checker. Trials run on the current
/// rayon pool; the report does not depend on its size.
pub fn run_campaign(
    name: &str,
    model: &GcnModel,
    features: &Matrix,
    config: &CampaignConfig,
) -> Result<CampaignReport, LabError> {
    config.validate()?;
    let golden = Golden::compute(model, features)?;
    let populations = config
        .checkers
        .iter()
        .map(|&c| census(model, features, c).map(|p| (c, p)))
        .collect::<Result<Vec<_>, _>>()?;

    let per_checker = populations
        .iter()
        .map(|(checker, pops)| {
            let trials = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let sites = trial_sites(pops, config.master_seed, t, config.faults_per_trial)?;
                    let outcome = run_trial(
                        model,
                        features,
                        &golden,
                        *checker,
                        &sites,
                        &config.thresholds,
                    )?;
                    Ok((sites, outcome))
                })
                .collect::<Result<Vec<_>, LabError>>()?;
            let golden_trace = infer_clean(model, features, *checker, config.thresholds[0])?;
            Ok(CheckerSummary::aggregate(
                *checker,
                &config.thresholds,
                &golden_trace,
                &trials,
            ))
        })
        .collect::<Result<Vec<_>, LabError>>()?;

    Ok(CampaignReport {
        name: name.to_string(),
        trials: config.trials,
        faults_per_trial: config.faults_per_trial,
        master_seed: config.master_seed,
        checkers: per_checker,
        op_counts: op_count_table(model, features, &config.checkers)?,
        phase_shares: phase_shares(model, features)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::{Graph, NormalizedAdjacency};

    fn tiny_model() -> (GcnModel, Matrix) {
        let adj = NormalizedAdjacency::from_matrix(DenseMatrix::identity(2).unwrap().to_sparse())
            .unwrap();
        let w = DenseMatrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap();
        let model = GcnModel::new(adj, vec![w]).unwrap();
        let h = Matrix::Dense(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        (model, h)
    }

    #[test]
    fn census_counts_fused_layer() {
        let (model, h) = tiny_model();
        let pops = census(&model, &h, CheckerKind::Fused).unwrap();
        // gemm 2x2x2 plus x_r 2x2x1
        assert_eq!(pops.count(0, Phase::Phase1, Stream::MacResult), 8 + 4);
        assert_eq!(pops.count(0, Phase::Phase1, Stream::ChecksumAccum), 0);
        // spmm over 2 stored entries for 2 columns
        assert_eq!(pops.count(0, Phase::Phase2, Stream::MacResult), 4);
        // s_c x_r (2 per term) + sum of 4 outputs + difference
        assert_eq!(
            pops.count(0, Phase::Phase2, Stream::ChecksumAccum),
            4 + 4 + 1
        );
        assert_eq!(pops, census(&model, &h, CheckerKind::Fused).unwrap());
    }

    #[test]
    fn population_mapping_is_exact() {
        let pops = Populations {
            entries: vec![
                PopulationEntry {
                    layer: 0,
                    phase: Phase::Phase1,
                    stream: Stream::MacResult,
                    count: 3,
                },
                PopulationEntry {
                    layer: 0,
                    phase: Phase::Phase2,
                    stream: Stream::ChecksumAccum,
                    count: 1,
                },
            ],
        };
        let hits: Vec<_> = (0..4)
            .map(|d| site_for_draw(&pops, d, 0).unwrap())
            .collect();
        assert_eq!(
            hits.iter()
                .filter(|s| s.stream == Stream::MacResult)
                .count(),
            3
        );
        assert_eq!(hits[3].op_index, 0);
        assert_eq!(hits[2].op_index, 2);
        assert!(site_for_draw(&pops, 4, 0).is_err());
    }

    #[test]
    fn single_op_population_always_chosen() {
        let pops = Populations {
            entries: vec![PopulationEntry {
                layer: 1,
                phase: Phase::Phase2,
                stream: Stream::MacResult,
                count: 1,
            }],
        };
        let mut rng = trial_rng(3, 0);
        for _ in 0..100 {
            let site = schedule_fault(&pops, &mut rng).unwrap();
            assert_eq!(
                (site.layer, site.phase, site.op_index),
                (1, Phase::Phase2, 0)
            );
            assert_eq!(site.width, Width::Single);
            assert!(site.bit < 32);
        }
        let empty = Populations { entries: vec![] };
        assert_eq!(
            schedule_fault(&empty, &mut rng),
            Err(LabError::EmptyPopulation)
        );
    }

    #[test]
    fn site_width_follows_stream() {
        assert_eq!(
            FaultSite::new(0, Phase::Phase1, Stream::ChecksumAccum, 0, 63)
                .unwrap()
                .width,
            Width::Double
        );
        assert!(FaultSite::new(0, Phase::Phase1, Stream::MacResult, 0, 32).is_err());
        assert!(FaultSite::new(0, Phase::LayerEnd, Stream::MacResult, 0, 0).is_err());
    }

    #[test]
    fn trial_categories() {
        assert_eq!(
            OutcomeCategory::classify(true, true),
            OutcomeCategory::Detected
        );
        assert_eq!(
            OutcomeCategory::classify(false, true),
            OutcomeCategory::FalsePositive
        );
        assert_eq!(
            OutcomeCategory::classify(true, false),
            OutcomeCategory::Silent
        );
        assert_eq!(
            OutcomeCategory::classify(false, false),
            OutcomeCategory::Benign
        );
    }

    #[test]
    fn checksum_faults_on_final_sum() {
        let (model, h) = tiny_model();
        let golden = Golden::compute(&model, &h).unwrap();
        let pops = census(&model, &h, CheckerKind::Fused).unwrap();
        let last = pops.count(0, Phase::Phase2, Stream::ChecksumAccum) - 2;
        let tau = [CheckThreshold::new(1e-7).unwrap()];
        // bit 0 of the final output sum: sub-threshold, nothing observable
        let site = FaultSite::new(0, Phase::Phase2, Stream::ChecksumAccum, last, 0).unwrap();
        let out = run_trial(&model, &h, &golden, CheckerKind::Fused, &[site], &tau).unwrap();
        assert_eq!(out.categories, vec![OutcomeCategory::Benign]);
        assert_eq!(out.fired.len(), 1);
        // bit 62 blows the exponent up: flagged while the output is untouched
        let site = FaultSite::new(0, Phase::Phase2, Stream::ChecksumAccum, last, 62).unwrap();
        let out = run_trial(&model, &h, &golden, CheckerKind::Fused, &[site], &tau).unwrap();
        assert_eq!(out.categories, vec![OutcomeCategory::FalsePositive]);
        assert!(!out.critical);
    }

    #[test]
    fn criticality_counts_changed_labels() {
        let adj = NormalizedAdjacency::from_graph(&Graph::new(3, []).unwrap());
        let model = GcnModel::new(adj, vec![DenseMatrix::identity(3).unwrap()]).unwrap();
        let h = Matrix::Dense(
            DenseMatrix::from_rows(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.5],
                vec![0.0, 0.0, 1.0],
            ])
            .unwrap(),
        );
        let golden = Golden::compute(&model, &h).unwrap();
        assert_eq!(golden.labels, vec![0, 1, 2]);
        // node 1, column 2 is the 6th output; flip bit 30 of its only MAC: 0.5 -> huge
        let site = FaultSite::new(0, Phase::Phase2, Stream::MacResult, 5, 30).unwrap();
        let out = run_trial(
            &model,
            &h,
            &golden,
            CheckerKind::Split,
            &[site],
            &[CheckThreshold::new(1e-7).unwrap()],
        )
        .unwrap();
        assert!(out.critical);
        assert!((out.nodes_affected - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.categories, vec![OutcomeCategory::Detected]);
    }

    #[test]
    fn campaign_rejects_zero_trials() {
        let (model, h) = tiny_model();
        let config = CampaignConfig {
            trials: 0,
            ..CampaignConfig::default()
        };
        assert!(matches!(
            run_campaign("t", &model, &h, &config),
            Err(LabError::InvalidConfig(_))
        ));
    }
}
