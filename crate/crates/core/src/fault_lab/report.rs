use super::{FaultSite, OutcomeCategory, TrialOutcome};
use crate::abft::{CheckThreshold, CheckerKind, Phase};
use crate::accounting::{OpCountTable, PhaseShare};
use crate::gcn::InferenceTrace;
use crate::matrix::Stream;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub detected: u64,
    pub false_positive: u64,
    pub silent: u64,
    pub benign: u64,
}

impl OutcomeCounts {
    pub fn record(&mut self, category: OutcomeCategory) {
        match category {
            OutcomeCategory::Detected => self.detected += 1,
            OutcomeCategory::FalsePositive => self.false_positive += 1,
            OutcomeCategory::Silent => self.silent += 1,
            OutcomeCategory::Benign => self.benign += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.detected + self.false_positive + self.silent + self.benign
    }

    pub fn get(&self, category: OutcomeCategory) -> u64 {
        match category {
            OutcomeCategory::Detected => self.detected,
            OutcomeCategory::FalsePositive => self.false_positive,
            OutcomeCategory::Silent => self.silent,
            OutcomeCategory::Benign => self.benign,
        }
    }

    pub fn rates(&self) -> OutcomeRates {
        let total = self.total();
        let rate = |c: u64| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        };
        OutcomeRates {
            detected: rate(self.detected),
            false_positive: rate(self.false_positive),
            silent: rate(self.silent),
            benign: rate(self.benign),
        }
    }
}

/// Fractions of all trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRates {
    pub detected: f64,
    pub false_positive: f64,
    pub silent: f64,
    pub benign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    /// The fault-free run already exceeds this threshold, so every trial
    /// is flagged regardless of the fault.
    pub golden_flagged: bool,
    pub counts: OutcomeCounts,
    pub rates: OutcomeRates,
}

/// Where the scheduled faults landed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteMix {
    pub phase1_mac: u64,
    pub phase1_checksum: u64,
    pub phase2_mac: u64,
    pub phase2_checksum: u64,
}

impl SiteMix {
    fn record(&mut self, site: &FaultSite) {
        match (site.phase, site.stream) {
            (Phase::Phase1, Stream::MacResult) => self.phase1_mac += 1,
            (Phase::Phase1, Stream::ChecksumAccum) => self.phase1_checksum += 1,
            (_, Stream::MacResult) => self.phase2_mac += 1,
            (_, Stream::ChecksumAccum) => self.phase2_checksum += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckerSummary {
    pub checker: CheckerKind,
    pub thresholds: Vec<ThresholdOutcome>,
    /// Fraction of trials that changed at least one node's label.
    pub critical_fault_rate: f64,
    /// Fraction of nodes relabelled, averaged over all trials.
    pub avg_nodes_affected: f64,
    /// Fraction of the 32 single-precision bits flipped at least once.
    pub mac_bit_coverage: f64,
    /// Fraction of the 64 double-precision bits flipped at least once.
    pub checksum_bit_coverage: f64,
    pub site_mix: SiteMix,
}

impl CheckerSummary {
    pub fn aggregate(
        checker: CheckerKind,
        thresholds: &[CheckThreshold],
        golden: &InferenceTrace,
        trials: &[(Vec<FaultSite>, TrialOutcome)],
    ) -> Self {
        let mut counts = vec![OutcomeCounts::default(); thresholds.len()];
        let mut critical = 0u64;
        let mut affected = 0.0;
        let mut bits = BTreeSet::new();
        let mut site_mix = SiteMix::default();
        for (sites, outcome) in trials {
            for (c, &category) in counts.iter_mut().zip(&outcome.categories) {
                c.record(category);
            }
            critical += u64::from(outcome.critical);
            affected += outcome.nodes_affected;
            for site in sites {
                bits.insert((site.stream, site.bit));
                site_mix.record(site);
            }
        }
        let n = trials.len().max(1) as f64;
        let coverage = |stream: Stream| {
            bits.iter().filter(|(s, _)| *s == stream).count() as f64
                / f64::from(stream.width().bits())
        };
        Self {
            checker,
            thresholds: thresholds
                .iter()
                .zip(counts)
                .map(|(&t, counts)| ThresholdOutcome {
                    threshold: t.value(),
                    golden_flagged: golden.flagged_at(t),
                    counts,
                    rates: counts.rates(),
                })
                .collect(),
            critical_fault_rate: critical as f64 / n,
            avg_nodes_affected: affected / n,
            mac_bit_coverage: coverage(Stream::MacResult),
            checksum_bit_coverage: coverage(Stream::ChecksumAccum),
            site_mix,
        }
    }

    pub fn at(&self, threshold: f64) -> Option<&ThresholdOutcome> {
        self.thresholds.iter().find(|t| t.threshold == threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub name: String,
    pub trials: u64,
    pub faults_per_trial: u32,
    pub master_seed: u64,
    pub checkers: Vec<CheckerSummary>,
    pub op_counts: OpCountTable,
    pub phase_shares: Vec<PhaseShare>,
}

impl CampaignReport {
    pub fn checker(&self, kind: CheckerKind) -> Option<&CheckerSummary> {
        self.checkers.iter().find(|c| c.checker == kind)
    }
}
