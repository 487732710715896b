use std::path::Path;

use cfu_core::counterfactual::{
    attach_metrics, proto_cf, train_autoencoder, wachter_cf, Autoencoder, CfMethod, CounterfactualResult,
    LatentIndex, LossTerms, NunSearcher,
};
use cfu_core::dataset::read_feature_rows;
use cfu_core::nn::{accuracy, checkpoint, mlp_classifier, predict, train, Head, Network, TrainReport};
use cfu_core::rng::mix_seed;
use cfu_core::stats::{spearman, wilcoxon_rank_sum, RankTestResult};
use cfu_core::uncertainty::McDropoutConfig;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{load_splits, Splits};
use crate::error::{CliError, Result};
use crate::output::OutputDir;
use crate::scoring::{Instruments, ScoreRow};

const IN_STREAM: u64 = 1;
const OOD_STREAM: u64 = 2;
const QUERY_STREAM: u64 = 3;
const INSTANCE_STREAM: u64 = 4;

/// Validate, load data, create the output directory and obtain the
/// classifier (loaded from the configured checkpoint or trained here).
struct Prepared {
    splits: Splits,
    net: Network,
    report: Option<TrainReport>,
    out: OutputDir,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let splits = load_splits(&cfg.dataset)?;
    let dim = splits.train.dim();
    let classes = splits.train.n_classes();
    let loaded = match &cfg.checkpoint {
        Some(path) => {
            let net = checkpoint::load_named(path, "classifier").map_err(CliError::Input)?;
            if net.input_len() != dim || net.output_len() < classes {
                return Err(CliError::Usage(format!(
                    "checkpoint maps {} features to {} classes; data has {dim} features and {classes} classes",
                    net.input_len(),
                    net.output_len()
                )));
            }
            Some(net)
        }
        None => None,
    };
    let out = OutputDir::create(&cfg.output_dir)?;
    out.log("start")?;
    let (net, report) = match loaded {
        Some(net) => (net, None),
        None => {
            let mut net = match &cfg.model.layers {
                Some(layers) => Network::new(
                    splits.train.feature_shape().to_vec(),
                    layers.clone(),
                    Head::Softmax,
                    cfg.init_seed(),
                )
                .map_err(CliError::Input)?,
                None => mlp_classifier(dim, &cfg.model.hidden, classes, cfg.model.dropout, cfg.init_seed())?,
            };
            let report = train(&mut net, &splits.train, &cfg.train)?;
            info!(
                "trained: loss {:.4} -> {:.4}, train accuracy {:.4}",
                report.initial_loss,
                report.final_loss(),
                report.train_accuracy
            );
            checkpoint::save(&out.path("checkpoint.bin"), &[("classifier", &net)])?;
            (net, Some(report))
        }
    };
    out.write_json("manifest.json", &splits.manifest())?;
    Ok(Prepared {
        splits,
        net,
        report,
        out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub config: ExperimentConfig,
    pub param_count: usize,
    pub initial_loss: f64,
    pub loss_history: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainMetrics> {
    if cfg.checkpoint.is_some() {
        return Err(CliError::Usage("train does not take a checkpoint".into()));
    }
    let p = prepare(cfg)?;
    let report = p.report.expect("freshly trained");
    let metrics = TrainMetrics {
        config: cfg.clone(),
        param_count: p.net.param_count(),
        initial_loss: report.initial_loss,
        loss_history: report.loss_history,
        train_accuracy: report.train_accuracy,
        test_accuracy: accuracy(&p.net, &p.splits.test)?,
    };
    p.out.write_json("metrics.json", &metrics)?;
    p.out.log("done")?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeans {
    pub count: usize,
    pub softmax: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub trust: f64,
    pub lof: f64,
    pub lof_flag_rate: f64,
}

impl SplitMeans {
    fn of(rows: &[ScoreRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&ScoreRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            count: rows.len(),
            softmax: mean(|r| r.softmax),
            mc_mean: mean(|r| r.mc_mean),
            mc_std: mean(|r| r.mc_std),
            trust: mean(|r| r.trust),
            lof: mean(|r| r.lof),
            lof_flag_rate: mean(|r| r.lof_flag as u8 as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagGroup {
    pub count: usize,
    pub mean_trust: Option<f64>,
}

/// Published full-scale figures carried along for comparison only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Reference {
    pub flagged_mean_trust: f64,
    pub unflagged_mean_trust: f64,
    pub spearman_mc_mean_trust: f64,
    pub wilcoxon_p_below: f64,
    pub note: String,
}

impl Default for Exp1Reference {
    fn default() -> Self {
        Self {
            flagged_mean_trust: 0.971,
            unflagged_mean_trust: 1.319,
            spearman_mc_mean_trust: 0.78,
            wilcoxon_p_below: 0.01,
            note: "digit classifier with a clothing-image shifted set; not expected to match at desk scale".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp1Summary {
    pub config: ExperimentConfig,
    pub test_accuracy: f64,
    pub in_distribution: SplitMeans,
    pub ood: SplitMeans,
    /// Trust scores, in-distribution sample first.
    pub wilcoxon_trust: RankTestResult,
    pub wilcoxon_mc_mean: RankTestResult,
    /// Over the pooled in-distribution and shifted rows; absent when undefined.
    pub spearman_mc_mean_trust: Option<f64>,
    pub lof_flagged: FlagGroup,
    pub lof_unflagged: FlagGroup,
    pub reference: Exp1Reference,
}

fn flag_group(rows: &[&ScoreRow]) -> FlagGroup {
    FlagGroup {
        count: rows.len(),
        mean_trust: (!rows.is_empty()).then(|| rows.iter().map(|r| r.trust).sum::<f64>() / rows.len() as f64),
    }
}

pub fn cmd_exp1(cfg: &ExperimentConfig) -> Result<Exp1Summary> {
    let p = prepare(cfg)?;
    let ood = p
        .splits
        .ood
        .as_ref()
        .ok_or_else(|| CliError::Usage("exp1 needs a shifted (ood) split".into()))?;
    let instruments = Instruments::fit(cfg, &p.net, &p.splits.train)?;
    let in_rows: Vec<&[f64]> = p.splits.test.rows().collect();
    let ood_rows: Vec<&[f64]> = ood.rows().collect();
    let scores_in = instruments.score_rows(&in_rows, IN_STREAM)?;
    let scores_ood = instruments.score_rows(&ood_rows, OOD_STREAM)?;
    p.out.write_csv("scores_in.csv", &scores_in)?;
    p.out.write_csv("scores_ood.csv", &scores_ood)?;

    let trust_in: Vec<f64> = scores_in.iter().map(|r| r.trust).collect();
    let trust_ood: Vec<f64> = scores_ood.iter().map(|r| r.trust).collect();
    let mc_in: Vec<f64> = scores_in.iter().map(|r| r.mc_mean).collect();
    let mc_ood: Vec<f64> = scores_ood.iter().map(|r| r.mc_mean).collect();
    let pooled: Vec<&ScoreRow> = scores_in.iter().chain(&scores_ood).collect();
    let pooled_mc: Vec<f64> = pooled.iter().map(|r| r.mc_mean).collect();
    let pooled_trust: Vec<f64> = pooled.iter().map(|r| r.trust).collect();
    let spearman_mc_mean_trust = match spearman(&pooled_mc, &pooled_trust) {
        Ok(rho) => Some(rho),
        Err(e) => {
            log::warn!("spearman undefined: {e}");
            None
        }
    };
    let (flagged, unflagged): (Vec<&ScoreRow>, Vec<&ScoreRow>) = pooled.iter().partition(|r| r.lof_flag);
    let summary = Exp1Summary {
        config: cfg.clone(),
        test_accuracy: accuracy(&p.net, &p.splits.test)?,
        in_distribution: SplitMeans::of(&scores_in),
        ood: SplitMeans::of(&scores_ood),
        wilcoxon_trust: wilcoxon_rank_sum(&trust_in, &trust_ood)?,
        wilcoxon_mc_mean: wilcoxon_rank_sum(&mc_in, &mc_ood)?,
        spearman_mc_mean_trust,
        lof_flagged: flag_group(&flagged),
        lof_unflagged: flag_group(&unflagged),
        reference: Exp1Reference::default(),
    };
    p.out.write_json("summary.json", &summary)?;
    p.out.log("done")?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRecord {
    /// Row of the test split.
    pub query_id: usize,
    pub method: CfMethod,
    pub y: usize,
    pub y_pred: usize,
    pub y_cf: usize,
    pub valid: bool,
    pub iterations: usize,
    pub loss: LossTerms,
    pub sparsity: usize,
    pub l1: f64,
    pub l2: f64,
    pub trust: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_cf: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: CfMethod,
    pub queries: usize,
    pub valid: usize,
    pub valid_rate: f64,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: CfMethod,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub trust: f64,
}

pub fn exp2_reference() -> Vec<ReferenceRow> {
    vec![
        ReferenceRow {
            method: CfMethod::Proto,
            mc_mean: 0.667,
            mc_std: 0.242,
            trust: 0.977,
        },
        ReferenceRow {
            method: CfMethod::Wachter,
            mc_mean: 0.761,
            mc_std: 0.294,
            trust: 1.017,
        },
        ReferenceRow {
            method: CfMethod::Nun,
            mc_mean: 0.931,
            mc_std: 0.115,
            trust: 1.180,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp2Summary {
    pub config: ExperimentConfig,
    pub test_accuracy: f64,
    /// Misclassified test rows before the query cap.
    pub misclassified: usize,
    pub queries: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    /// Mean trust score of the queries at their (wrong) predicted class.
    pub original_mean_trust: Option<f64>,
    pub table: Vec<TableRow>,
    pub reference: Vec<ReferenceRow>,
}

struct QueryOutcome {
    original_trust: f64,
    records: Vec<CfRecord>,
}

pub fn cmd_exp2(cfg: &ExperimentConfig) -> Result<Exp2Summary> {
    let p = prepare(cfg)?;
    let (train_set, test) = (&p.splits.train, &p.splits.test);
    let settings = &cfg.counterfactual;
    let mut misclassified = Vec::new();
    for i in 0..test.len() {
        if predict(&p.net, test.row(i))? != test.labels()[i] {
            misclassified.push(i);
        }
    }
    let total_misclassified = misclassified.len();
    misclassified.truncate(settings.max_queries);
    info!("{total_misclassified} misclassified test rows, explaining {}", misclassified.len());

    let instruments = Instruments::fit(cfg, &p.net, train_set)?;
    let nun = NunSearcher::new(train_set)?;
    let proto_parts = if settings.methods.contains(&CfMethod::Proto) && !misclassified.is_empty() {
        let (ae, report) = train_autoencoder(train_set, &settings.autoencoder)?;
        info!("autoencoder mse {:.5}", report.final_mse());
        checkpoint::save(
            &p.out.path("checkpoint.bin"),
            &[("classifier", &p.net), ("encoder", &ae.encoder), ("decoder", &ae.decoder)],
        )?;
        let index = LatentIndex::new(&ae, train_set)?;
        Some((ae, index))
    } else {
        None
    };

    let explain = |q: usize| -> Result<QueryOutcome> {
        let x = test.row(misclassified[q]);
        let predicted = predict(&p.net, x)?;
        let mc = McDropoutConfig {
            passes: cfg.mc.passes,
            seed: mix_seed(cfg.mc.seed, (QUERY_STREAM << 32) | misclassified[q] as u64),
        };
        let mut records = Vec::new();
        for &method in &settings.methods {
            let mut result = match method {
                CfMethod::Nun => nun.search(&p.net, train_set, x, predicted, None)?,
                CfMethod::Wachter => wachter_cf(&p.net, x, p.splits.range(), &settings.wachter)?,
                CfMethod::Proto => {
                    let (ae, index): &(Autoencoder, LatentIndex) = proto_parts.as_ref().expect("fitted above");
                    let prototypes = index.prototypes(&ae.encode(x)?, predicted, settings.proto.k_proto)?;
                    proto_cf(&p.net, ae, &prototypes, x, p.splits.range(), &settings.proto)?
                }
            };
            attach_metrics(x, &mut result, &p.net, &instruments.trust, &mc)?;
            records.push(record(misclassified[q], test.labels()[misclassified[q]], result, settings.dump_features));
        }
        Ok(QueryOutcome {
            original_trust: instruments.trust.score(x, predicted)?,
            records,
        })
    };
    let outcomes: Vec<QueryOutcome> = (0..misclassified.len())
        .into_par_iter()
        .map(explain)
        .collect::<Result<_>>()?;

    let records: Vec<CfRecord> = outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
    p.out.write_jsonl("cf_records.jsonl", &records)?;
    let table = settings
        .methods
        .iter()
        .filter(|_| !outcomes.is_empty())
        .map(|&method| {
            let rows: Vec<&CfRecord> = records.iter().filter(|r| r.method == method).collect();
            let n = rows.len() as f64;
            let valid = rows.iter().filter(|r| r.valid).count();
            TableRow {
                method,
                queries: rows.len(),
                valid,
                valid_rate: valid as f64 / n,
                mc_mean: rows.iter().map(|r| r.mc_mean).sum::<f64>() / n,
                mc_std: rows.iter().map(|r| r.mc_std).sum::<f64>() / n,
                trust: rows.iter().map(|r| r.trust).sum::<f64>() / n,
            }
        })
        .collect();
    let summary = Exp2Summary {
        config: cfg.clone(),
        test_accuracy: accuracy(&p.net, test)?,
        misclassified: total_misclassified,
        queries: outcomes.len(),
        notice: outcomes
            .is_empty()
            .then(|| "no misclassified test rows; nothing to explain".to_string()),
        original_mean_trust: (!outcomes.is_empty())
            .then(|| outcomes.iter().map(|o| o.original_trust).sum::<f64>() / outcomes.len() as f64),
        table,
        reference: exp2_reference(),
    };
    p.out.write_json("summary.json", &summary)?;
    p.out.log("done")?;
    Ok(summary)
}

fn record(query_id: usize, y: usize, r: CounterfactualResult, dump: bool) -> CfRecord {
    let m = r.metrics.expect("metrics attached");
    CfRecord {
        query_id,
        method: r.method,
        y,
        y_pred: r.original_class,
        y_cf: r.target,
        valid: r.valid,
        iterations: r.iterations,
        loss: r.loss,
        sparsity: m.sparsity,
        l1: m.l1,
        l2: m.l2,
        trust: m.trust,
        mc_mean: m.summary.mc_mean,
        mc_std: m.summary.mc_std,
        x_cf: dump.then_some(r.x_cf),
    }
}

/// Score the feature rows of a CSV file (in the model's feature space)
/// and write `scores.csv`.
pub fn cmd_score(cfg: &ExperimentConfig, instances: &Path) -> Result<Vec<ScoreRow>> {
    if !instances.exists() {
        return Err(CliError::Usage(format!("missing instance file {}", instances.display())));
    }
    let rows = read_feature_rows(instances).map_err(CliError::Input)?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!("instance file {} has no rows", instances.display())));
    }
    cfg.validate()?;
    let splits = load_splits(&cfg.dataset)?;
    let dim = splits.train.dim();
    if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
        return Err(CliError::Usage(format!(
            "instance row {} has {} features, model expects {dim}",
            bad + 1,
            rows[bad].len()
        )));
    }
    let p = prepare(cfg)?;
    let instruments = Instruments::fit(cfg, &p.net, &p.splits.train)?;
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let scores = instruments.score_rows(&refs, INSTANCE_STREAM)?;
    p.out.write_csv("scores.csv", &scores)?;
    p.out.log("done")?;
    Ok(scores)
}

/// Run `f` on a pool capped by `CFU_THREADS` when that is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var("CFU_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| CliError::Usage(format!("CFU_THREADS must be a positive integer, got {v:?}")))?;
            if n == 0 {
                return Err(CliError::Usage("CFU_THREADS must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

