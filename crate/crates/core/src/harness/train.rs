//! The split-training loop with per-iteration leak measurement.
//!
//! One iteration of the two-party protocol:
//!
//! 1. the non-label party draws a batch and sends `f(X)` across the cut,
//! 2. the label party finishes the forward pass and computes per-example cut gradients,
//! 3. the label party perturbs them with the configured mechanism and sends them back,
//! 4. the non-label party backpropagates the received gradients into `f`.
//!
//! Leak AUCs are measured on what the non-label party sees (the perturbed cut
//! gradients, and the first-layer gradients they induce), with the cosine
//! oracle drawn from the clean gradients of a random positive example.

use super::config::ExperimentConfig;
use super::data::Dataset;
use crate::attacks::{leak_auc, quantile, roc_auc, select_oracle_index, ScoringFunction};
use crate::error::{Error, Result};
use crate::model::{
    apply_update, backprop_nonlabel, forward, label_backward, loss, mean_loss, Optimizer, SplitNet,
};
use crate::numeric::{Matrix, RngStream};
use crate::protection::MechanismConfig;

/// Stream ids under the run seed; each consumer owns one so toggling one
/// component never shifts another's draws.
mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const MECHANISM: u64 = 4;
    pub const ORACLE: u64 = 5;
}

pub const SUMMARY_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRow {
    pub iter: usize,
    pub train_loss: f64,
    pub norm_cut: Option<f64>,
    pub cos_cut: Option<f64>,
    pub norm_first: Option<f64>,
    pub cos_first: Option<f64>,
    pub sum_kl: Option<f64>,
    pub auc_bound: Option<f64>,
    pub noise_power: f64,
}

/// 95%-quantiles over measured iterations; `None` if nothing was measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakSummary {
    pub norm_cut: Option<f64>,
    pub cos_cut: Option<f64>,
    pub norm_first: Option<f64>,
    pub cos_first: Option<f64>,
}

impl LeakSummary {
    pub fn from_rows(rows: &[IterationRow]) -> Self {
        let q = |pick: fn(&IterationRow) -> Option<f64>| {
            let v: Vec<f64> = rows.iter().filter_map(pick).collect();
            quantile(&v, SUMMARY_QUANTILE).ok()
        };
        LeakSummary {
            norm_cut: q(|r| r.norm_cut),
            cos_cut: q(|r| r.cos_cut),
            norm_first: q(|r| r.norm_first),
            cos_first: q(|r| r.cos_first),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub mechanism: MechanismConfig,
    pub rows: Vec<IterationRow>,
    pub test_loss: f64,
    /// `None` when the test split has a single class.
    pub test_auc: Option<f64>,
    pub summary: LeakSummary,
    /// Iterations where marvell passed the batch through unperturbed.
    pub fallback_iterations: usize,
}

/// Loads the dataset named in `config`, splits it, and trains.
pub fn train_run(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let (train, test) = load_split(config)?;
    train_on(config, &train, &test)
}

/// The `(train, test)` split a run with this config trains on.
pub fn load_split(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let data = config.dataset.load()?;
    data.split(config.test_fraction, &mut RngStream::with_stream(config.seed, stream::SPLIT))
}

/// Trains on a given train/test split; dataset fields of `config` are ignored.
pub fn train_on(config: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<RunRecord> {
    config.validate()?;
    let b = config.batch_size;
    if train.len() < b {
        return Err(Error::Config(format!(
            "batch size {b} exceeds training set size {}",
            train.len()
        )));
    }
    let seed = config.seed;
    let mut init_rng = RngStream::with_stream(seed, stream::INIT);
    let mut shuffle_rng = RngStream::with_stream(seed, stream::SHUFFLE);
    let mut mech_rng = RngStream::with_stream(seed, stream::MECHANISM);
    let mut oracle_rng = RngStream::with_stream(seed, stream::ORACLE);

    let specs = config.net.layer_specs(train.dim());
    let mut net = SplitNet::from_specs(&specs, config.net.cut_index, &mut init_rng)?;
    let mut f_opt = Optimizer::new(config.optimizer);
    let mut h_opt = Optimizer::new(config.optimizer);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut rows = Vec::with_capacity(config.iterations);
    let mut fallback_iterations = 0;

    for iter in 0..config.iterations {
        if cursor + b > order.len() {
            shuffle_rng.shuffle(&mut order);
            cursor = 0;
        }
        let batch = train.subset(&order[cursor..cursor + b]);
        cursor += b;

        let state = forward(&net, &batch.x)?;
        let train_loss = mean_loss(&state, &batch.y);
        let label = label_backward(&net, &state, &batch.y)?;
        let clean = &label.cut_gradients;

        let outcome = config.mechanism.perturb(clean, &batch.y, &mut mech_rng)?;
        if outcome.fallback {
            fallback_iterations += 1;
        }
        if !outcome.perturbed.is_finite() {
            return Err(Error::NonFinite("perturbed cut gradients"));
        }
        let received = backprop_nonlabel(&net, &state, &outcome.perturbed)?;

        let oracle = select_oracle_index(&batch.y, &mut oracle_rng).ok();
        let (norm_cut, cos_cut) = measure(&outcome.perturbed, clean, &batch.y, oracle);
        let (norm_first, cos_first) = if norm_cut.is_some() {
            let clean_first = if matches!(config.mechanism, MechanismConfig::None) {
                received.first_layer_gradients.clone()
            } else {
                backprop_nonlabel(&net, &state, clean)?.first_layer_gradients
            };
            measure(&received.first_layer_gradients, &clean_first, &batch.y, oracle)
        } else {
            (None, None)
        };

        apply_update(&mut net.h, &label.h_grads, &mut h_opt)?;
        apply_update(&mut net.f, &received.f_grads, &mut f_opt)?;

        rows.push(IterationRow {
            iter,
            train_loss,
            norm_cut,
            cos_cut,
            norm_first,
            cos_first,
            sum_kl: outcome.certificate.map(|c| c.sum_kl),
            auc_bound: outcome.certificate.map(|c| c.auc_bound),
            noise_power: outcome.noise_power,
        });
    }

    let (test_loss, test_auc) = evaluate(&net, test)?;
    Ok(RunRecord {
        mechanism: config.mechanism,
        summary: LeakSummary::from_rows(&rows),
        rows,
        test_loss,
        test_auc,
        fallback_iterations,
    })
}

/// Norm and cosine leak AUCs of `seen`; `None` for unmeasurable batches.
fn measure(seen: &Matrix, clean: &Matrix, labels: &[f64], oracle: Option<usize>) -> (Option<f64>, Option<f64>) {
    let norm = leak_auc(seen, labels, &ScoringFunction::Norm).ok();
    let cos = oracle
        .and_then(|i| ScoringFunction::cosine(clean.row(i).to_vec()).ok())
        .and_then(|sf| leak_auc(seen, labels, &sf).ok());
    (norm, cos)
}

/// Mean test loss and test AUC of the logits.
pub fn evaluate(net: &SplitNet, test: &Dataset) -> Result<(f64, Option<f64>)> {
    if test.is_empty() {
        return Ok((f64::NAN, None));
    }
    let state = forward(net, &test.x)?;
    let l = state.logits.iter().zip(&test.y).map(|(&z, &y)| loss(z, y)).sum::<f64>() / test.len() as f64;
    Ok((l, roc_auc(&state.logits, &test.y).ok()))
}
