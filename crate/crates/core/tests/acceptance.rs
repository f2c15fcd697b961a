//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use common::*;
use gcn_abft::abft::{
    check_ops_formula, fused_check_layer, CheckThreshold, CheckerKind, LayerCounters, LayerHooks,
    LayerOperands, Phase,
};
use gcn_abft::accounting::{layer_dims, op_count_table, phase_shares};
use gcn_abft::dataio::{generate_synthetic, FeatureStorage, SyntheticSpec};
use gcn_abft::fault_lab::{
    run_campaign, run_trial, CampaignConfig, FaultSite, Golden, OutcomeCategory,
};
use gcn_abft::gcn::{GcnLayer, GcnModel, Graph, NormalizedAdjacency};
use gcn_abft::matrix::{
    gemm, row_checksum, spmm, DenseMatrix, FaultHook, Matrix, OpCounter, SparseMatrix, Stream,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

const IDENTITY_TOLERANCE: f64 = 1e-7;
const IDENTITY_INSTANCES: usize = 200;
const IDENTITY_MAX_DIM: usize = 64;
const IDENTITY_BUDGET: Duration = Duration::from_secs(10);

const KERNEL_INSTANCES: usize = 500;
const KERNEL_MAX_DIM: usize = 8;
const KERNEL_RELATIVE_TOLERANCE: f64 = 1e-5;

const FORMULA_CONFIGS: usize = 100;

const CAMPAIGN_TRIALS: u64 = 5000;
const CAMPAIGN_TAU: f64 = 1e-7;
const CAMPAIGN_BUDGET: Duration = Duration::from_secs(300);

const MULTI_FAULT_TRIALS: u64 = 1000;
const MULTI_FAULTS: u32 = 3;
const MULTI_FAULT_FLAG_RATE: f64 = 0.99;

const ZERO_COLUMN_TRIALS: usize = 100;

const PHASE_SHARE_FLOOR: f64 = 0.85;

struct Verdict {
    pass: bool,
    detail: String,
}

fn tau(t: f64) -> CheckThreshold {
    CheckThreshold::new(t).unwrap()
}

fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> NormalizedAdjacency {
    let p = rng.gen_range(0.01..=1.0);
    NormalizedAdjacency::from_graph(&Graph::new(n, random_edges(rng, n, p)).unwrap())
}

fn fused_checksum_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut within, mut worst, mut worst_exact) = (0, 0.0f64, 0.0f64);
    for _ in 0..IDENTITY_INSTANCES {
        let n = rng.gen_range(1..=IDENTITY_MAX_DIM);
        let f = rng.gen_range(1..=IDENTITY_MAX_DIM);
        let h = rng.gen_range(1..=IDENTITY_MAX_DIM);
        let adj = random_adjacency(&mut rng, n);
        let features = Matrix::Dense(from_grid32(&random_grid32(&mut rng, n, f, 1.0)));
        let weight = from_grid32(&random_grid32(&mut rng, f, h, 1.0));
        let w_r = row_checksum(&weight, &mut OpCounter::new());
        let ops = LayerOperands {
            adjacency: adj.matrix(),
            adjacency_col_checksum: adj.col_checksum(),
            features: &features,
            weight: &weight,
            weight_row_checksum: &w_r,
        };
        let check = fused_check_layer(
            ops,
            tau(IDENTITY_TOLERANCE),
            &mut LayerCounters::default(),
            &mut LayerHooks::none(),
        )
        .unwrap();
        let v = check.verdicts[0];
        let gap = (v.predicted - v.actual).abs();
        worst = worst.max(gap);
        within += usize::from(gap <= IDENTITY_TOLERANCE);

        // the same identity evaluated entirely in double precision
        let s = to_grid(&adj.matrix().to_dense());
        let hh = to_grid(&features.to_dense());
        let w = to_grid(&weight);
        let total: f64 = matmul_f64(&s, &matmul_f64(&hh, &w)).iter().flatten().sum();
        let s_c = column_sums(&s);
        let x_r = matmul_f64(
            &hh,
            &row_sums(&w)
                .into_iter()
                .map(|v| vec![v])
                .collect::<Vec<_>>(),
        );
        let predicted: f64 = s_c.iter().zip(&x_r).map(|(a, b)| a * b[0]).sum();
        worst_exact = worst_exact.max((predicted - total).abs());
    }
    let elapsed = start.elapsed();
    Verdict {
        pass: within == IDENTITY_INSTANCES && elapsed < IDENTITY_BUDGET,
        detail: format!(
            "{within}/{IDENTITY_INSTANCES} within {IDENTITY_TOLERANCE:e}, max |pred-actual| {worst:.3e} \
             (double-only evaluation {worst_exact:.3e}), {elapsed:.2?}"
        ),
    }
}

fn kernel_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut exact) = (0.0f64, 0usize);
    for _ in 0..KERNEL_INSTANCES {
        let n = rng.gen_range(1..=KERNEL_MAX_DIM);
        let k = rng.gen_range(1..=KERNEL_MAX_DIM);
        let m = rng.gen_range(1..=KERNEL_MAX_DIM);
        let density = rng.gen_range(0.1..=1.0);
        let a = random_grid32(&mut rng, n, k, density);
        let b = random_grid32(&mut rng, k, m, 1.0);
        let (am, bm) = (from_grid32(&a), from_grid32(&b));
        let dense = gemm(&am, &bm, &mut OpCounter::new(), &mut FaultHook::none()).unwrap();
        let sparse = spmm(
            &am.to_sparse(),
            &bm,
            &mut OpCounter::new(),
            &mut FaultHook::none(),
        )
        .unwrap();
        let reference = matmul_f64(
            &a.iter()
                .map(|r| r.iter().map(|&v| f64::from(v)).collect())
                .collect(),
            &b.iter()
                .map(|r| r.iter().map(|&v| f64::from(v)).collect())
                .collect(),
        );
        worst = worst.max(relative_error(&to_grid(&dense), &reference));
        worst = worst.max(relative_error(&to_grid(&sparse), &reference));
        let same_dense = to_grid32(&dense) == matmul_f32_ordered(&a, &b, false);
        let same_sparse = to_grid32(&sparse) == matmul_f32_ordered(&a, &b, true);
        exact += usize::from(same_dense && same_sparse);
    }
    Verdict {
        pass: worst <= KERNEL_RELATIVE_TOLERANCE && exact == KERNEL_INSTANCES,
        detail: format!(
            "max relative error {worst:.3e} (tolerance {KERNEL_RELATIVE_TOLERANCE:e}), \
             {exact}/{KERNEL_INSTANCES} exact against the same-order reference"
        ),
    }
}

fn check_op_savings() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut dominated, mut matched, mut min_pct, mut max_pct) = (0, 0, f64::MAX, 0.0f64);
    for _ in 0..FORMULA_CONFIGS {
        let spec = SyntheticSpec {
            num_nodes: rng.gen_range(1..=48),
            edge_probability: rng.gen_range(0.01..=1.0),
            feature_dim: rng.gen_range(1..=64),
            feature_density: rng.gen_range(0.01..=1.0),
            hidden_dims: (0..rng.gen_range(0..=2))
                .map(|_| rng.gen_range(1..=24))
                .collect(),
            num_classes: rng.gen_range(1..=8),
            seed: rng.gen(),
            feature_storage: if rng.gen_bool(0.5) {
                FeatureStorage::Sparse
            } else {
                FeatureStorage::Dense
            },
        };
        let bundle = generate_synthetic(&spec).unwrap();
        let model = bundle.model().unwrap();
        let table = op_count_table(&model, &bundle.features, &CheckerKind::ALL).unwrap();
        let dims = layer_dims(&model, &bundle.features);
        let split = table.row(CheckerKind::Split).unwrap();
        let fused = table.row(CheckerKind::Fused).unwrap();
        dominated += usize::from(fused.check_ops < split.check_ops);
        let formula = |k| {
            dims.iter()
                .map(|d| check_ops_formula(k, d).unwrap())
                .sum::<u64>()
        };
        matched += usize::from(
            split.check_ops == formula(CheckerKind::Split)
                && fused.check_ops == formula(CheckerKind::Fused)
                && table.output_ops == table.formula_output_ops,
        );
        let pct = table.check_savings_pct.unwrap();
        min_pct = min_pct.min(pct);
        max_pct = max_pct.max(pct);
    }
    Verdict {
        pass: dominated == FORMULA_CONFIGS && matched == FORMULA_CONFIGS,
        detail: format!(
            "fused < split on {dominated}/{FORMULA_CONFIGS}, instrumented == formula on {matched}/{FORMULA_CONFIGS}, \
             check savings {min_pct:.1}%..{max_pct:.1}% (no dataset files supplied)"
        ),
    }
}

fn desk_model() -> (GcnModel, Matrix) {
    let spec = SyntheticSpec {
        num_nodes: 64,
        feature_dim: 32,
        hidden_dims: vec![16],
        num_classes: 4,
        seed: 1,
        ..SyntheticSpec::default()
    };
    let bundle = generate_synthetic(&spec).unwrap();
    (bundle.model().unwrap(), bundle.features)
}

fn desk_campaign() -> Verdict {
    let (model, features) = desk_model();
    let config = CampaignConfig {
        trials: CAMPAIGN_TRIALS,
        master_seed: 1,
        ..CampaignConfig::default()
    };
    let start = Instant::now();
    let report = run_campaign("desk", &model, &features, &config).unwrap();
    let elapsed = start.elapsed();
    let at = |k| report.checker(k).unwrap().at(CAMPAIGN_TAU).unwrap();
    let (split, fused) = (at(CheckerKind::Split), at(CheckerKind::Fused));
    let silent_free = split.counts.silent == 0 && fused.counts.silent == 0;
    let partition = [split, fused].iter().all(|t| {
        let (c, r) = (t.counts, t.rates);
        let rate_sum = r.detected + r.false_positive + r.benign;
        c.total() == CAMPAIGN_TRIALS && (rate_sum - 1.0).abs() <= 1e-12
    });
    let fp_order = fused.counts.false_positive <= split.counts.false_positive;
    Verdict {
        pass: silent_free && partition && fp_order && elapsed < CAMPAIGN_BUDGET,
        detail: format!(
            "silent split/fused {}/{}, false positives split/fused {}/{}, detected split/fused {}/{}, \
             fault-free run already flagged at {CAMPAIGN_TAU:e}: split {} fused {}, {elapsed:.2?}",
            split.counts.silent,
            fused.counts.silent,
            split.counts.false_positive,
            fused.counts.false_positive,
            split.counts.detected,
            fused.counts.detected,
            split.golden_flagged,
            fused.golden_flagged,
        ),
    }
}

fn multi_fault_saturation() -> Verdict {
    let (model, features) = desk_model();
    let config = CampaignConfig {
        trials: MULTI_FAULT_TRIALS,
        master_seed: 2,
        faults_per_trial: MULTI_FAULTS,
        thresholds: vec![tau(CAMPAIGN_TAU)],
        ..CampaignConfig::default()
    };
    let report = run_campaign("multi", &model, &features, &config).unwrap();
    let rates: Vec<(CheckerKind, f64)> = report
        .checkers
        .iter()
        .map(|s| {
            let r = s.thresholds[0].rates;
            (s.checker, r.detected + r.false_positive)
        })
        .collect();
    Verdict {
        pass: rates.len() == 2 && rates.iter().all(|(_, r)| *r >= MULTI_FAULT_FLAG_RATE),
        detail: rates
            .iter()
            .map(|(k, r)| format!("{k} detected+false-positive {r:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn zero_column_blind_spot() -> Verdict {
    let (n, f, h, zero) = (4usize, 4usize, 4usize, 2usize);
    let quarters = [0.25f32, 0.5, 0.75, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pick = |rows: usize, cols: usize| {
        let data = (0..rows * cols)
            .map(|_| quarters[rng.gen_range(0..4)])
            .collect();
        DenseMatrix::from_vec(rows, cols, data).unwrap()
    };
    let s_rows = [
        [0.5, 0.25, 0.0, 0.25],
        [0.25, 0.5, 0.0, 0.25],
        [0.25, 0.25, 0.0, 0.5],
        [0.5, 0.25, 0.0, 0.25],
    ];
    let mut triplets = Vec::new();
    for (i, row) in s_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                triplets.push((i, j, v));
            }
        }
    }
    let adjacency =
        NormalizedAdjacency::unchecked(SparseMatrix::from_triplets(n, n, triplets).unwrap());
    let model = GcnModel::from_layers(adjacency, vec![GcnLayer::new(pick(f, h), false)]).unwrap();
    let features = Matrix::Dense(pick(n, f));
    let golden = Golden::compute(&model, &features).unwrap();
    let taus = [tau(CAMPAIGN_TAU)];

    let row_ops = (zero * h * f) as u64..((zero + 1) * h * f) as u64;
    let sites: Vec<FaultSite> = row_ops
        .flat_map(|op| (23..=30).map(move |bit| (op, bit)))
        .take(ZERO_COLUMN_TRIALS)
        .map(|(op, bit)| FaultSite::new(0, Phase::Phase1, Stream::MacResult, op, bit).unwrap())
        .collect();
    let (mut fused_missed, mut split_caught) = (0, 0);
    for site in &sites {
        let fused = run_trial(
            &model,
            &features,
            &golden,
            CheckerKind::Fused,
            &[*site],
            &taus,
        )
        .unwrap();
        let split = run_trial(
            &model,
            &features,
            &golden,
            CheckerKind::Split,
            &[*site],
            &taus,
        )
        .unwrap();
        let flagged = |c: OutcomeCategory| {
            matches!(
                c,
                OutcomeCategory::Detected | OutcomeCategory::FalsePositive
            )
        };
        fused_missed += usize::from(!flagged(fused.categories[0]) && fused.fired.len() == 1);
        split_caught += usize::from(flagged(split.categories[0]));
    }
    Verdict {
        pass: sites.len() == ZERO_COLUMN_TRIALS
            && fused_missed == ZERO_COLUMN_TRIALS
            && split_caught == ZERO_COLUMN_TRIALS,
        detail: format!(
            "fused missed {fused_missed}/{}, split caught {split_caught}/{} (faults in row {zero} of H W)",
            sites.len(),
            sites.len()
        ),
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "name = determinism\ntrials = 2000\nseed = 7\n",
    )
    .unwrap();
    let threads = std::thread::available_parallelism()
        .map_or(8, |n| n.get())
        .max(2)
        .to_string();
    let mut outputs = Vec::new();
    for (label, t) in [("serial", "1"), ("parallel", threads.as_str())] {
        let status = Command::new(env!("CARGO_BIN_EXE_gcn-abft"))
            .args([
                "campaign",
                "--config",
                "run.cfg",
                "--format",
                "json",
                "--threads",
                t,
                "--out",
                label,
            ])
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        outputs.push(fs::read(dir.path().join(label).join("campaign.json")).unwrap());
    }
    Verdict {
        pass: outputs[0] == outputs[1],
        detail: format!(
            "serial vs {threads} threads: {} bytes, identical = {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    }
}

fn phase_share_sanity() -> Verdict {
    let n = 128;
    let spec = SyntheticSpec {
        num_nodes: n,
        edge_probability: 1.0 / n as f64,
        feature_dim: 256,
        feature_density: 0.01,
        hidden_dims: vec![16],
        num_classes: 4,
        seed: 8,
        feature_storage: FeatureStorage::Dense,
    };
    let bundle = generate_synthetic(&spec).unwrap();
    let model = bundle.model().unwrap();
    let shares = phase_shares(&model, &bundle.features).unwrap();
    let sparse = Matrix::Sparse(bundle.features.to_dense().to_sparse());
    let sparse_shares = phase_shares(&model, &sparse).unwrap();
    Verdict {
        pass: shares.iter().all(|s| s.phase1_share > PHASE_SHARE_FLOOR),
        detail: format!(
            "phase-1 share per layer {:?} (features stored densely; CSR storage gives {:?}), nnz(S)/n = {:.2}",
            shares.iter().map(|s| format!("{:.4}", s.phase1_share)).collect::<Vec<_>>(),
            sparse_shares.iter().map(|s| format!("{:.4}", s.phase1_share)).collect::<Vec<_>>(),
            model.adjacency().matrix().nnz() as f64 / n as f64,
        ),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("fused-checksum identity", fused_checksum_identity),
        ("kernel oracle equivalence", kernel_oracle_equivalence),
        ("check-op savings", check_op_savings),
        ("desk-scale fault campaign", desk_campaign),
        ("multi-fault saturation", multi_fault_saturation),
        ("zero-column blind spot", zero_column_blind_spot),
        ("determinism", determinism),
        ("phase-share sanity", phase_share_sanity),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        failed += usize::from(!v.pass);
        println!(
            "{} criterion {} ({name}): {}",
            if v.pass { "PASS" } else { "FAIL" },
            k + 1,
            v.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
