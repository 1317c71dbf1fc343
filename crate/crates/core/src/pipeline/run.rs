use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{train_tree, Classifier, DecisionTree};
use crate::discretize::{load_csv, DiscretizationConfig};
use crate::error::{Error, Result};
use crate::estimation::{
    fit_independence_given_overlap, fit_independent, fit_latent_nb, fit_marginal_preservation, log_likelihood,
    EmConfig, JointModel, Side,
};
use crate::freq::Smoothing;
use crate::metrics::{
    bootstrap_fairness, fidelity_report, BootstrapConfig, DiscriminatorConfig, FairnessReport, FidelityOptions,
    FidelityReport, Metric, ProtectedGroup,
};
use crate::sampling::sample;
use crate::schema::Schema;
use crate::seed;
use crate::separation::{Separation, SeparationSpec};
use crate::table::{holdout_split, DataTable};

use super::config::{ExperimentConfig, Method};
use super::report::write_report_files;

/// Fits one method on an internal/external pair.
pub fn fit_method(
    method: Method,
    internal: &DataTable,
    external: &DataTable,
    overlap: &[String],
    smoothing: Smoothing,
    em: &EmConfig,
) -> Result<JointModel> {
    match method {
        Method::IndepOverlap => fit_independence_given_overlap(internal, external, overlap, smoothing),
        Method::MarginalInternal => fit_marginal_preservation(internal, external, overlap, Side::Internal, smoothing),
        Method::MarginalExternal => fit_marginal_preservation(internal, external, overlap, Side::External, smoothing),
        Method::LatentNb => Ok(fit_latent_nb(internal, external, overlap, em)?.model),
        Method::Independent => fit_independent(internal, external),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub features: Vec<String>,
    pub label: String,
    pub positive: String,
    pub nodes: usize,
    pub depth: usize,
    /// Accuracy on the real test split.
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessDiff {
    pub attr: String,
    pub metric: Metric,
    pub real_mean: Option<f64>,
    pub synthetic_mean: Option<f64>,
    /// `|synthetic - real|` of the bootstrap means.
    pub abs_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub n_synthetic: usize,
    /// Log-likelihood of the internal and external training tables.
    pub train_log_likelihood: f64,
    pub fidelity: FidelityReport,
    pub fairness: FairnessReport,
    pub differences: Vec<FairnessDiff>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// Set when any stage of this method failed.
    pub error: Option<String>,
    pub outcome: Option<MethodOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: serde_json::Value,
    pub dataset: String,
    pub separation: String,
    pub overlap: Vec<String>,
    pub protected: Vec<ProtectedGroup>,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub classifier: ClassifierSummary,
    pub real_fairness: FairnessReport,
    pub methods: Vec<MethodReport>,
}

impl AuditReport {
    pub fn method(&self, m: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|r| r.method == m)?.outcome.as_ref()
    }
}

/// Everything shared between the methods of one audit.
pub struct Prepared {
    pub schema: Arc<Schema>,
    pub train: DataTable,
    pub test: DataTable,
    pub separation: Separation,
    pub overlap: Vec<String>,
    pub protected: Vec<ProtectedGroup>,
    pub label: String,
    pub positive: String,
    pub tree: DecisionTree,
}

impl Prepared {
    pub fn internal_train(&self) -> Result<DataTable> {
        self.train.project(&self.separation.internal)
    }

    pub fn external_train(&self) -> Result<DataTable> {
        self.train.project(&self.separation.external)
    }
}

/// Classifier features: the internal attributes other than the label.
/// Protected attributes are external-only, so they never appear.
pub fn classifier_features(schema: &Schema, sep: &Separation) -> Result<Vec<String>> {
    let label = schema.label_index();
    let features: Vec<String> = sep
        .internal
        .iter()
        .filter(|&&a| Some(a) != label)
        .map(|&a| schema.name(a).to_string())
        .collect();
    if let Some(p) = features.iter().find(|f| schema.index_of(f).is_some_and(|a| schema.is_protected(a))) {
        return Err(Error::Config(format!("protected attribute `{p}` cannot be a classifier feature")));
    }
    if features.is_empty() {
        return Err(Error::Config("the internal dataset has no features besides the label".into()));
    }
    Ok(features)
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let disc = DiscretizationConfig::from_file(&config.resolve(&config.discretization))?;
    let label_spec = disc
        .label
        .clone()
        .ok_or_else(|| Error::Config("the discretization config must name a label".into()))?;
    if disc.protected.is_empty() {
        return Err(Error::Config("the discretization config names no protected attribute".into()));
    }
    let (_, table) = load_csv(&config.resolve(&config.dataset), &disc)?;
    let schema = table.schema().clone();
    let spec = SeparationSpec::from_file(&config.resolve(&config.separation))?;
    let separation = spec.resolve(&schema)?;
    let (train, test) = holdout_split(&table, config.test_fraction, seed::derive(config.seed, "holdout", 0))?;

    let features = classifier_features(&schema, &separation)?;
    let tree = train_tree(&train, &features, &label_spec.name, &config.classifier)?;
    let protected = disc
        .protected
        .iter()
        .map(|p| ProtectedGroup {
            attr: p.name.clone(),
            privileged: p.privileged.clone(),
        })
        .collect();
    Ok(Prepared {
        overlap: separation.overlap.iter().map(|&a| schema.name(a).to_string()).collect(),
        schema,
        train,
        test,
        separation,
        protected,
        label: label_spec.name,
        positive: label_spec.positive,
        tree,
    })
}

fn fairness_of(p: &Prepared, table: &DataTable, config: &ExperimentConfig) -> Result<FairnessReport> {
    let preds = p.tree.predict(table)?;
    bootstrap_fairness(
        table,
        &preds,
        &p.label,
        &p.positive,
        &p.protected,
        &Metric::ALL,
        &BootstrapConfig {
            n_boot: config.bootstrap,
            seed: seed::derive(config.seed, "bootstrap", 0),
        },
    )
}

fn differences(real: &FairnessReport, synth: &FairnessReport) -> Vec<FairnessDiff> {
    real.entries
        .iter()
        .map(|e| {
            let r = e.bootstrap.as_ref().map(|b| b.mean);
            let s = synth.bootstrap_mean(&e.attr, e.metric);
            FairnessDiff {
                attr: e.attr.clone(),
                metric: e.metric,
                real_mean: r,
                synthetic_mean: s,
                abs_diff: r.zip(s).map(|(a, b)| (a - b).abs()),
            }
        })
        .collect()
}

fn run_method(
    method: Method,
    p: &Prepared,
    real_fairness: &FairnessReport,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<MethodOutcome> {
    let internal = p.internal_train()?;
    let external = p.external_train()?;
    let em = EmConfig {
        seed: seed::derive(config.seed, "em", 0),
        ..config.em.clone()
    };
    let model = fit_method(method, &internal, &external, &p.overlap, config.smoothing, &em)?;
    let train_log_likelihood =
        log_likelihood(&model, &internal)?.value + log_likelihood(&model, &external)?.value;
    let n = config.synthetic_size.unwrap_or(p.test.n_rows());
    let synth = sample(&model, n, seed::derive(config.seed, "sample", method.ordinal()))?;

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.save(&dir.join("model.json"))?;
    synth.write_csv_file(&dir.join("synthetic.csv"))?;

    let fidelity = fidelity_report(
        &p.test,
        &synth,
        &FidelityOptions {
            protected: p.protected.iter().map(|g| g.attr.clone()).collect(),
            label: Some(p.label.clone()),
            kl_alpha: config.kl_alpha,
            discriminator: Some(DiscriminatorConfig {
                seed: seed::derive(config.seed, "discriminator", method.ordinal()),
                ..config.discriminator.clone()
            }),
        },
    )?;
    let fairness = fairness_of(p, &synth, config)?;
    write_json(&dir.join("fidelity.json"), &fidelity)?;
    write_json(&dir.join("fairness.json"), &fairness)?;
    Ok(MethodOutcome {
        n_synthetic: n,
        train_log_likelihood,
        differences: differences(real_fairness, &fairness),
        fidelity,
        fairness,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Full audit: holdout, separation, classifier, then per method fit, sample,
/// fidelity and fairness. A failing method is recorded and the rest go on.
/// Writes everything below `config.run_dir()`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AuditReport> {
    let p = prepare(config)?;
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let test_pred = p.tree.predict(&p.test)?;
    let label_pos = p.test.position_of(&p.label)?;
    let correct = p.test.column(label_pos).zip(&test_pred).filter(|(y, q)| y == *q).count();
    let classifier = ClassifierSummary {
        features: p.tree.features().to_vec(),
        label: p.label.clone(),
        positive: p.positive.clone(),
        nodes: p.tree.nodes().len(),
        depth: p.tree.depth(),
        test_accuracy: correct as f64 / p.test.n_rows() as f64,
    };
    log::info!("classifier test accuracy {:.4}", classifier.test_accuracy);
    p.tree.save(&dir.join("classifier.json"))?;
    let real_fairness = fairness_of(&p, &p.test, config)?;

    let methods: Vec<MethodReport> = config
        .methods
        .par_iter()
        .map(|&m| {
            log::info!("{}: fitting", m.name());
            match run_method(m, &p, &real_fairness, config, &dir.join(m.name())) {
                Ok(outcome) => MethodReport {
                    method: m,
                    error: None,
                    outcome: Some(outcome),
                },
                Err(e) => {
                    log::error!("{}: {e}", m.name());
                    MethodReport {
                        method: m,
                        error: Some(e.to_string()),
                        outcome: None,
                    }
                }
            }
        })
        .collect();

    let report = AuditReport {
        config: config.echo()?,
        dataset: config.dataset_label(),
        separation: config.separation_label(),
        overlap: p.overlap.clone(),
        protected: p.protected.clone(),
        n_rows: p.train.n_rows() + p.test.n_rows(),
        n_train: p.train.n_rows(),
        n_test: p.test.n_rows(),
        classifier,
        real_fairness,
        methods,
    };
    write_report_files(&report, &dir)?;
    Ok(report)
}
