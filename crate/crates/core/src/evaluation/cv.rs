use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::folds::{make_grouped_folds, make_stratified_folds, FoldPlan};
use super::metrics::{metrics_from_confusion, summarize, ConfusionMatrix, MetricSet, MetricSummary, Scope};
use super::EvalError;
use crate::dataset::{SpeciesLabel, NUM_CLASSES};
use crate::features::{FeatureConfig, FeaturePatch};
use crate::models::{self, ensemble_decision, ArchitectureOptions, BinaryLabel, EnsembleModel, BINARY_CLASSES};
use crate::nn::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Binary,
    Multiclass,
    Ensemble,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Binary => "binary",
            Strategy::Multiclass => "multiclass",
            Strategy::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" => Ok(Strategy::Binary),
            "multiclass" => Ok(Strategy::Multiclass),
            "ensemble" => Ok(Strategy::Ensemble),
            other => Err(format!("unknown strategy {other:?} (expected binary, multiclass or ensemble)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    /// Keep all patches of a source file in one fold.
    pub group_by_file: bool,
    /// Epochs, batch size and optimizer; the seed is derived per fold.
    pub train: TrainConfig,
    pub arch: ArchitectureOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 10,
            seed: 0,
            group_by_file: false,
            train: TrainConfig::default(),
            arch: ArchitectureOptions::default(),
        }
    }
}

/// Training seed for fold `fold`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x0100_0000_01B3).wrapping_add(fold as u64 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: ConfusionMatrix<u64>,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub strategy: Strategy,
    /// Names of the confusion-matrix rows and columns.
    pub class_names: Vec<String>,
    /// Scope of the per-fold metrics.
    pub scope: Scope,
    pub folds: Vec<FoldOutcome>,
    pub summary: MetricSummary,
    pub total_confusion: ConfusionMatrix<u64>,
    /// Training loss per epoch, one curve per trained model.
    pub loss_curves: Vec<Vec<f64>>,
}

fn plan<L: Ord + Copy + fmt::Display>(labels: &[L], patches: &[FeaturePatch], opts: &CvOptions) -> Result<FoldPlan, EvalError> {
    if opts.group_by_file {
        let groups: Vec<&str> = patches.iter().map(|p| p.source_id.as_str()).collect();
        make_grouped_folds(labels, &groups, opts.k, opts.seed)
    } else {
        make_stratified_folds(labels, opts.k, opts.seed)
    }
}

fn check_patches(patches: &[FeaturePatch], cfg: &FeatureConfig) -> Result<(), EvalError> {
    if patches.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(p) = patches.iter().find(|p| p.n_bands != cfg.n_bands || p.n_frames != cfg.n_frames) {
        return Err(EvalError::PatchShape {
            source_id: p.source_id.clone(),
            bands: p.n_bands,
            frames: p.n_frames,
        });
    }
    Ok(())
}

fn refs<'a>(patches: &'a [FeaturePatch], idx: &[usize]) -> Vec<&'a FeaturePatch> {
    idx.iter().map(|&i| &patches[i]).collect()
}

fn train_cfg(opts: &CvOptions, fold: usize) -> TrainConfig {
    TrainConfig {
        seed: fold_seed(opts.seed, fold),
        ..opts.train
    }
}

/// k-fold cross-validation of the binary (target vs all) or multiclass
/// model. Binary folds are stratified on the binary label.
pub fn cross_validate(strategy: Strategy, patches: &[FeaturePatch], cfg: &FeatureConfig, opts: &CvOptions) -> Result<CvReport, EvalError> {
    check_patches(patches, cfg)?;
    let (class_names, scope, fold_plan) = match strategy {
        Strategy::Binary => {
            let labels: Vec<usize> = patches.iter().map(|p| BinaryLabel::of(p.label).index()).collect();
            for (i, name) in BINARY_CLASSES.iter().enumerate() {
                if !labels.contains(&i) {
                    return Err(EvalError::MissingClass(name.to_string()));
                }
            }
            let names: Vec<String> = BINARY_CLASSES.iter().map(|s| s.to_string()).collect();
            (names, Scope::Class(0), plan(&labels, patches, opts)?)
        }
        Strategy::Multiclass => {
            let labels: Vec<SpeciesLabel> = patches.iter().map(|p| p.label).collect();
            let names = SpeciesLabel::all().map(|s| s.name().to_string()).collect();
            (names, Scope::Macro, plan(&labels, patches, opts)?)
        }
        Strategy::Ensemble => return Err(EvalError::Strategy("use cross_validate_ensemble for the ensemble".into())),
    };
    let present: Vec<SpeciesLabel> = patches.iter().map(|p| p.label).collect::<BTreeSet<_>>().into_iter().collect();

    let mut folds = Vec::with_capacity(opts.k);
    let mut loss_curves = Vec::with_capacity(opts.k);
    for f in 0..opts.k {
        let train_idx = fold_plan.train_indices(f);
        let test_idx = fold_plan.test_indices(f);
        let train = refs(patches, &train_idx);
        let test = refs(patches, &test_idx);
        let tc = train_cfg(opts, f);
        log::info!("{strategy} fold {}/{}: {} train, {} test", f + 1, opts.k, train.len(), test.len());
        let wrap = |source| EvalError::Fold { fold: f, source };
        let confusion = match strategy {
            Strategy::Binary => {
                let model = models::train_binary(&train, cfg, &tc, &opts.arch).map_err(wrap)?;
                let preds = models::predict_binary_batch(&model, &test).map_err(wrap)?;
                loss_curves.push(model.metadata.loss_curve.clone());
                let truth: Vec<usize> = test.iter().map(|p| BinaryLabel::of(p.label).index()).collect();
                let pred: Vec<usize> = preds.iter().map(|(l, _)| l.index()).collect();
                ConfusionMatrix::from_predictions(2, &truth, &pred)
            }
            _ => {
                let model = models::train_multiclass(&train, &present, cfg, &tc, &opts.arch).map_err(wrap)?;
                let preds = models::predict_multiclass_batch(&model, &test).map_err(wrap)?;
                loss_curves.push(model.metadata.loss_curve.clone());
                let truth: Vec<usize> = test.iter().map(|p| p.label.index()).collect();
                let pred: Vec<usize> = preds.iter().map(|(l, _)| l.index()).collect();
                ConfusionMatrix::from_predictions(NUM_CLASSES, &truth, &pred)
            }
        };
        let metrics = metrics_from_confusion(&confusion, scope);
        log::info!("fold {} accuracy {:.4} recall {:.4}", f + 1, metrics.accuracy, metrics.recall);
        folds.push(FoldOutcome {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            confusion,
            metrics,
        });
    }
    let mut total_confusion = ConfusionMatrix::new(class_names.len());
    for f in &folds {
        total_confusion.merge(&f.confusion);
    }
    let summary = summarize(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    Ok(CvReport {
        strategy,
        class_names,
        scope,
        folds,
        summary,
        total_confusion,
        loss_curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub threshold: f64,
    pub min_votes: usize,
    pub folds: Vec<FoldOutcome>,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModelReport {
    pub negative: SpeciesLabel,
    pub folds: Vec<FoldOutcome>,
    pub summary: MetricSummary,
}

/// Positive-vote counts for one fold's shared test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldVotes {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub votes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCvReport {
    pub negatives: Vec<SpeciesLabel>,
    pub thresholds: Vec<ThresholdReport>,
    pub base_models: Vec<BaseModelReport>,
    /// Mean over base models of each model's fold-mean metrics.
    pub base_mean: MetricSummary,
    pub votes: Vec<FoldVotes>,
    pub loss_curves: Vec<Vec<f64>>,
}

/// No index may appear both in a training set and in the test set.
pub fn audit_leakage(fold: usize, training_sets: &[(SpeciesLabel, Vec<usize>)], test: &[usize]) -> Result<(), EvalError> {
    let test: BTreeSet<usize> = test.iter().copied().collect();
    for (neg, set) in training_sets {
        if let Some(&i) = set.iter().find(|i| test.contains(i)) {
            return Err(EvalError::Leakage {
                fold,
                model: neg.name().to_string(),
                index: i,
            });
        }
    }
    Ok(())
}

/// Cross-validation of the voting ensemble. Every fold has one stratified
/// test set shared by all base models; base model `s` trains on the
/// remaining target patches plus the remaining patches of species `s`.
pub fn cross_validate_ensemble(patches: &[FeaturePatch], cfg: &FeatureConfig, opts: &CvOptions, thresholds: &[f64]) -> Result<EnsembleCvReport, EvalError> {
    check_patches(patches, cfg)?;
    if thresholds.is_empty() {
        return Err(EvalError::Strategy("no vote thresholds".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.5..=1.0).contains(*t)) {
        return Err(EvalError::Strategy(format!("vote threshold {t} outside [0.5, 1]")));
    }
    let labels: Vec<SpeciesLabel> = patches.iter().map(|p| p.label).collect();
    if !labels.iter().any(|l| l.is_target()) {
        return Err(EvalError::MissingClass(SpeciesLabel::TARGET.name().to_string()));
    }
    let negatives: Vec<SpeciesLabel> = labels.iter().copied().filter(|l| !l.is_target()).collect::<BTreeSet<_>>().into_iter().collect();
    if negatives.is_empty() {
        return Err(EvalError::MissingClass("any non-target species".into()));
    }
    let fold_plan = plan(&labels, patches, opts)?;
    let n_voters = negatives.len();

    let mut per_threshold: Vec<Vec<FoldOutcome>> = vec![Vec::new(); thresholds.len()];
    let mut per_base: Vec<Vec<FoldOutcome>> = vec![Vec::new(); n_voters];
    let mut votes_out = Vec::with_capacity(opts.k);
    let mut loss_curves = Vec::new();

    for f in 0..opts.k {
        let train_idx = fold_plan.train_indices(f);
        let test_idx = fold_plan.test_indices(f);
        let training_sets: Vec<(SpeciesLabel, Vec<usize>)> = negatives
            .iter()
            .map(|&neg| (neg, train_idx.iter().copied().filter(|&i| labels[i].is_target() || labels[i] == neg).collect()))
            .collect();
        audit_leakage(f, &training_sets, &test_idx)?;
        let tc = train_cfg(opts, f);
        log::info!("ensemble fold {}/{}: {} base models, {} test", f + 1, opts.k, n_voters, test_idx.len());
        let wrap = |source| EvalError::Fold { fold: f, source };

        let mut base_models = Vec::with_capacity(n_voters);
        for (neg, set) in &training_sets {
            let cfg_neg = TrainConfig {
                seed: models::base_seed(tc.seed, *neg),
                ..tc
            };
            let model = models::train_binary(&refs(patches, set), cfg, &cfg_neg, &opts.arch).map_err(wrap)?;
            loss_curves.push(model.metadata.loss_curve.clone());
            base_models.push((*neg, model));
        }
        let ensemble = EnsembleModel::new(base_models, thresholds[0]).map_err(wrap)?;
        let test = refs(patches, &test_idx);
        let truth: Vec<usize> = test.iter().map(|p| BinaryLabel::of(p.label).index()).collect();

        let mut votes = vec![0usize; test.len()];
        for (b, ((neg, model), (_, set))) in ensemble.base_models.iter().zip(&training_sets).enumerate() {
            let preds = models::predict_binary_batch(model, &test).map_err(wrap)?;
            let pred: Vec<usize> = preds.iter().map(|(l, _)| l.index()).collect();
            for (v, (l, _)) in votes.iter_mut().zip(&preds) {
                *v += l.is_positive() as usize;
            }
            let confusion = ConfusionMatrix::from_predictions(2, &truth, &pred);
            log::debug!("fold {} base {neg}: {:?}", f + 1, confusion.rows());
            per_base[b].push(FoldOutcome {
                fold: f,
                n_train: set.len(),
                n_test: test.len(),
                metrics: metrics_from_confusion(&confusion, Scope::Class(0)),
                confusion,
            });
        }
        for (t, &threshold) in thresholds.iter().enumerate() {
            let pred: Vec<usize> = votes.iter().map(|&v| ensemble_decision(v, threshold, n_voters).index()).collect();
            let confusion = ConfusionMatrix::from_predictions(2, &truth, &pred);
            per_threshold[t].push(FoldOutcome {
                fold: f,
                n_train: train_idx.len(),
                n_test: test.len(),
                metrics: metrics_from_confusion(&confusion, Scope::Class(0)),
                confusion,
            });
        }
        votes_out.push(FoldVotes {
            fold: f,
            test_indices: test_idx,
            votes,
        });
    }

    let thresholds = thresholds
        .iter()
        .zip(per_threshold)
        .map(|(&threshold, folds)| ThresholdReport {
            threshold,
            min_votes: models::vote_threshold_to_min_votes(threshold, n_voters),
            summary: summarize(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>()),
            folds,
        })
        .collect();
    let base_models: Vec<BaseModelReport> = negatives
        .iter()
        .zip(per_base)
        .map(|(&negative, folds)| BaseModelReport {
            negative,
            summary: summarize(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>()),
            folds,
        })
        .collect();
    let base_mean = mean_of_summaries(&base_models.iter().map(|b| b.summary).collect::<Vec<_>>());
    Ok(EnsembleCvReport {
        negatives,
        thresholds,
        base_models,
        base_mean,
        votes: votes_out,
        loss_curves,
    })
}

fn mean_of_summaries(s: &[MetricSummary]) -> MetricSummary {
    use super::metrics::mean_std;
    let col = |get: fn(&MetricSummary) -> f64| mean_std(&s.iter().map(get).collect::<Vec<_>>());
    MetricSummary {
        accuracy: col(|m| m.accuracy.0),
        precision: col(|m| m.precision.0),
        recall: col(|m| m.recall.0),
        f1: col(|m| m.f1.0),
    }
}
