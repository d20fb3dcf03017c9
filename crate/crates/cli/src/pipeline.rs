use serde::{Deserialize, Serialize};

use motifdisco::downstream::anomaly::{
    detect_anomalies_base, detect_anomalies_mc, inject_anomalies, train_autoencoder, WindowLabel,
};
use motifdisco::downstream::cluster::{kmeans, Clustering};
use motifdisco::downstream::forecast::{forecast_rmse, train_forecaster, EpochLog};
use motifdisco::downstream::metrics::{clustering_metrics, ClassificationMetrics, ClusteringMetrics, Confusion};
use motifdisco::gnn::LinkSession;
use motifdisco::motifs::{motifs_from_traces, ExtractionConfig, ExtractionMethod, MotifDocument};
use motifdisco::trace_data::{generate_synthetic, load_traces, split, PlantedStructure, TraceSet};
use motifdisco::training::{build_graph, train, TrainOutcome};
use motifdisco::Result;

use crate::config::RunConfig;

pub fn planted_structure(cfg: &RunConfig) -> Result<PlantedStructure> {
    let d = &cfg.data;
    PlantedStructure::random(d.templates, cfg.motifs.tau, d.successors, d.noise_sigma, d.seed)
}

/// Traces named by `data.path`, or freshly generated ones.
pub fn load_data(cfg: &RunConfig) -> Result<TraceSet> {
    match &cfg.data.path {
        Some(p) => load_traces(p, cfg.data.trace_length),
        None => generate_synthetic(&planted_structure(cfg)?, cfg.data.n, cfg.data.trace_length),
    }
}

pub struct Trained {
    pub outcome: TrainOutcome,
    pub motifs: MotifDocument,
}

/// Extract motifs of length `tau`, build the preliminary graph and train.
pub fn train_motif_model(traces: &TraceSet, tau: usize, cfg: &RunConfig) -> Result<Trained> {
    let ext = ExtractionConfig {
        tau,
        stride: if cfg.motifs.method == ExtractionMethod::Chop { tau } else { cfg.motifs.stride.min(tau) },
        ..cfg.motifs
    };
    let (set, motif_traces) = motifs_from_traces(traces, &ext)?;
    let graph = build_graph(&set, &motif_traces, &cfg.train, &cfg.entropy)?;
    let outcome = train(graph, &cfg.train, &cfg.entropy)?;
    Ok(Trained {
        outcome,
        motifs: MotifDocument::new(&set, &motif_traces),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Usecase {
    Forecast,
    Anomaly,
    Cluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "usecase", rename_all = "lowercase")]
pub enum UsecaseReport {
    Forecast {
        with_mc: bool,
        rmse: f64,
        selected_epoch: usize,
        history: Vec<EpochLog>,
    },
    Anomaly {
        with_mc: bool,
        #[serde(flatten)]
        metrics: ClassificationMetrics,
        confusion: Confusion,
        windows: usize,
        injected: usize,
    },
    Cluster {
        with_mc: bool,
        #[serde(flatten)]
        metrics: ClusteringMetrics,
        iterations: usize,
        sizes: Vec<usize>,
    },
}

/// Per-item artifacts that accompany a report.
pub enum UsecaseArtifacts {
    None,
    Labels(Vec<WindowLabel>),
    Clusters(TraceSet, Clustering),
}

/// Run one use case on the configured data. Forecasting and anomaly
/// detection train on one split and evaluate on the other; clustering uses
/// every trace. With `with_mc`, the motif model is trained on the training
/// portion at the use case's motif length.
pub fn run_usecase(cfg: &RunConfig, which: Usecase, with_mc: bool) -> Result<(UsecaseReport, UsecaseArtifacts)> {
    let data = load_data(cfg)?;
    let uc = &cfg.usecase;
    match which {
        Usecase::Forecast => {
            let (tr, te) = split(&data, &uc.split)?;
            let model = with_mc.then(|| train_motif_model(&tr, uc.forecast.window, cfg)).transpose()?;
            let session = model.as_ref().map(|m| LinkSession::new(&m.outcome.model, &m.outcome.graph)).transpose()?;
            let f = train_forecaster(&tr, &uc.forecast, session.as_ref())?;
            let rmse = forecast_rmse(&f, &te)?;
            Ok((
                UsecaseReport::Forecast {
                    with_mc,
                    rmse,
                    selected_epoch: f.selected_epoch,
                    history: f.history,
                },
                UsecaseArtifacts::None,
            ))
        }
        Usecase::Anomaly => {
            let (tr, te) = split(&data, &uc.split)?;
            let (test, truth) = inject_anomalies(&te, uc.anomaly.window, uc.inject, uc.anomaly.seed)?;
            let labels = if with_mc {
                let m = train_motif_model(&tr, uc.anomaly.window, cfg)?;
                let session = LinkSession::new(&m.outcome.model, &m.outcome.graph)?;
                detect_anomalies_mc(&session, &test, &uc.anomaly)?
            } else {
                let ae = train_autoencoder(&tr, &uc.anomaly)?;
                detect_anomalies_base(&ae, &test)?
            };
            let pred: Vec<bool> = labels.iter().map(|l| l.anomalous).collect();
            let confusion = Confusion::count(&pred, &truth)?;
            Ok((
                UsecaseReport::Anomaly {
                    with_mc,
                    metrics: confusion.metrics(),
                    confusion,
                    windows: truth.len(),
                    injected: uc.inject,
                },
                UsecaseArtifacts::Labels(labels),
            ))
        }
        Usecase::Cluster => {
            let model = with_mc.then(|| train_motif_model(&data, uc.cluster.tau, cfg)).transpose()?;
            let session = model.as_ref().map(|m| LinkSession::new(&m.outcome.model, &m.outcome.graph)).transpose()?;
            let c = kmeans(&data, &uc.cluster, session.as_ref())?;
            let points: Vec<Vec<f64>> = data.iter().map(|t| t.values.clone()).collect();
            let metrics = clustering_metrics(&points, &c.assignments, &c.centroids)?;
            let mut sizes = vec![0; uc.cluster.k];
            c.assignments.iter().for_each(|&a| sizes[a] += 1);
            Ok((
                UsecaseReport::Cluster {
                    with_mc,
                    metrics,
                    iterations: c.iterations,
                    sizes,
                },
                UsecaseArtifacts::Clusters(data, c),
            ))
        }
    }
}
