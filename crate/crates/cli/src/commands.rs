use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use motifdisco::downstream::anomaly::write_labels_csv;
use motifdisco::downstream::cluster::write_assignments_csv;
use motifdisco::gnn::LinkSession;
use motifdisco::graph::{export_graph, graph_from_json, graph_to_json, GraphFormat};
use motifdisco::trace_data::{generate_synthetic, save_traces};
use motifdisco::training::{train, write_bench_csv, benchmark_scalability, Checkpoint};
use motifdisco::{Error, Result};

use crate::cli::{BenchArgs, Cli, Command, ConfigArgs, ExportArgs, Format, GenArgs, PredictArgs, TrainArgs, UsecaseArgs};
use crate::config::{BenchConfig, RunConfig};
use crate::pipeline::{load_data, planted_structure, run_usecase, train_motif_model, UsecaseArtifacts};

static QUIET: AtomicBool = AtomicBool::new(false);

fn note(msg: impl AsRef<str>) {
    if !QUIET.load(Ordering::Relaxed) {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn run(cli: Cli) -> Result<()> {
    QUIET.store(cli.quiet, Ordering::Relaxed);
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::InvalidConfig("--workers must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Export(a) => export(a),
        Command::Usecase(a) => usecase(a),
        Command::Bench(a) => bench(a),
    }
}

fn base_config(c: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    Ok(cfg)
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_file(&dir.join("config.json"), &cfg.to_json())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("documents always serialize")
}

fn stdout_doc(doc: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(doc.as_bytes())
        .and_then(|_| if doc.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("stdout", e))
}

fn gen(a: GenArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    cfg.data.n = a.n;
    cfg.data.path = None;
    if let Some(v) = a.tau {
        cfg.motifs.tau = v;
        cfg.motifs.stride = v;
    }
    if let Some(v) = a.templates {
        cfg.data.templates = v;
    }
    if let Some(v) = a.successors {
        cfg.data.successors = v;
    }
    if let Some(v) = a.noise {
        cfg.data.noise_sigma = v;
    }
    if let Some(v) = a.trace_length {
        cfg.data.trace_length = v;
    }
    let cfg = cfg.resolved();
    let structure = planted_structure(&cfg)?;
    let traces = generate_synthetic(&structure, cfg.data.n, cfg.data.trace_length)?;
    out_dir(&a.out)?;
    save_traces(&traces, a.out.join("traces.csv"))?;
    write_file(&a.out.join("structure.json"), &to_json(&structure))?;
    echo_config(&a.out, &cfg)?;
    note(format!("wrote {} traces to {}", traces.len(), a.out.display()));
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = a.data {
        cfg.data.path = Some(p);
    }
    if let Some(v) = a.trace_length {
        cfg.data.trace_length = v;
    }
    if let Some(v) = a.tau {
        cfg.motifs.tau = v;
        cfg.motifs.stride = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.theta {
        cfg.train.theta = v;
    }
    if let Some(v) = a.gamma {
        cfg.train.gamma = v;
    }
    if let Some(v) = a.lambda {
        cfg.train.lambda = v;
    }
    let cfg = cfg.resolved();
    cfg.train.validate()?;
    let (outcome, motifs) = match &a.graph {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let g = graph_from_json(&text).map_err(|e| match e {
                Error::Parse { location, message } => Error::Parse {
                    location: format!("{}: {location}", p.display()),
                    message,
                },
                other => other,
            })?;
            note(format!("training on {} nodes, {} edges", g.num_nodes(), g.num_edges()));
            (train(g, &cfg.train, &cfg.entropy)?, None)
        }
        None => {
            let traces = load_data(&cfg)?;
            note(format!("training on {} traces, tau {}", traces.len(), cfg.motifs.tau));
            let t = train_motif_model(&traces, cfg.motifs.tau, &cfg)?;
            (t.outcome, Some(t.motifs))
        }
    };
    out_dir(&a.out)?;
    Checkpoint::new(cfg.train, outcome.model).save(a.out.join("checkpoint.json"))?;
    write_file(&a.out.join("graph.json"), &graph_to_json(&outcome.graph))?;
    write_file(&a.out.join("report.json"), &to_json(&outcome.report))?;
    if let Some(m) = motifs {
        write_file(&a.out.join("motifs.json"), &to_json(&m))?;
    }
    echo_config(&a.out, &cfg)?;
    note(format!(
        "{} -> {} edges, final loss {:.4}",
        outcome.report.initial_edges,
        outcome.report.final_edges,
        outcome.report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    ));
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairDoc {
    source: Vec<f64>,
    target: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PairsDoc {
    One(PairDoc),
    Many(Vec<PairDoc>),
}

#[derive(Debug, Serialize)]
struct PredictionDoc {
    probability: f64,
    mc: f64,
}

fn predict(a: PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let graph_path = a
        .graph
        .unwrap_or_else(|| a.checkpoint.parent().unwrap_or(Path::new(".")).join("graph.json"));
    let text = fs::read_to_string(&graph_path).map_err(|e| Error::io(&graph_path, e))?;
    let graph = graph_from_json(&text)?;
    let text = fs::read_to_string(&a.pairs).map_err(|e| Error::io(&a.pairs, e))?;
    let pairs: PairsDoc = serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", a.pairs.display(), e.line(), e.column()), e))?;
    let session = LinkSession::new(&ck.model, &graph)?;
    let score = |p: &PairDoc| {
        session
            .predict_new_edge(&p.source, &p.target)
            .map(|(probability, mc)| PredictionDoc { probability, mc })
    };
    let doc = match pairs {
        PairsDoc::One(p) => to_json(&score(&p)?),
        PairsDoc::Many(ps) => to_json(&ps.iter().map(score).collect::<Result<Vec<_>>>()?),
    };
    stdout_doc(&doc)
}

fn export(a: ExportArgs) -> Result<()> {
    let text = fs::read_to_string(&a.graph).map_err(|e| Error::io(&a.graph, e))?;
    let g = graph_from_json(&text)?;
    let format = match a.format {
        Format::Dot => GraphFormat::Dot,
        Format::Json => GraphFormat::Json,
    };
    stdout_doc(&export_graph(&g, format))
}

fn usecase(a: UsecaseArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(p) = a.data {
        cfg.data.path = Some(p);
    }
    if let Some(v) = a.trace_length {
        cfg.data.trace_length = v;
    }
    let uc = &mut cfg.usecase;
    if let Some(v) = a.theta {
        uc.anomaly.theta = v;
        cfg.train.theta = v;
    }
    if let Some(v) = a.k {
        uc.cluster.k = v;
    }
    if let Some(v) = a.window {
        uc.forecast.window = v;
        uc.anomaly.window = v;
    }
    if let Some(v) = a.epochs {
        uc.forecast.epochs = v;
        uc.anomaly.epochs = v;
    }
    if let Some(v) = a.train_epochs {
        cfg.train.epochs = v;
    }
    let cfg = cfg.resolved();
    note(format!("running {:?} use case{}", a.which, if a.with_mc { " with MC" } else { "" }));
    let (report, artifacts) = run_usecase(&cfg, a.which.into(), a.with_mc)?;
    let doc = to_json(&report);
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        write_file(&dir.join("metrics.json"), &doc)?;
        echo_config(dir, &cfg)?;
        match artifacts {
            UsecaseArtifacts::None => {}
            UsecaseArtifacts::Labels(labels) => {
                let path = dir.join("labels.csv");
                let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_labels_csv(&labels, std::io::BufWriter::new(f))?;
            }
            UsecaseArtifacts::Clusters(traces, c) => {
                let path = dir.join("assignments.csv");
                let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                write_assignments_csv(&traces, &c, std::io::BufWriter::new(f))?;
            }
        }
    }
    stdout_doc(&doc)
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.grid {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if let Some(v) = a.n_values {
        cfg.grid.n = v;
    }
    if let Some(v) = a.tau_values {
        cfg.grid.tau = v;
    }
    if let Some(v) = a.template_values {
        cfg.grid.templates = v;
    }
    if let Some(v) = a.repeats {
        cfg.base.repeats = v;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.base.seed = v;
        cfg.train.seed = v;
    }
    note("timing training cells");
    let rows = benchmark_scalability(&cfg.grid, &cfg.base, &cfg.train, &cfg.entropy)?;
    let mut buf = Vec::new();
    write_bench_csv(&rows, &mut buf)?;
    let doc = String::from_utf8(buf).expect("csv output is utf-8");
    if let Some(p) = &a.out {
        write_file(p, &doc)?;
    }
    stdout_doc(&doc)
}
