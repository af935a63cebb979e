use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use simm_core::attention::{load_checkpoint, save_checkpoint, Fusion, Variant};
use simm_core::clustering::{
    cosine_edges, g_cut, knn_edges, linear_grid, read_assignment_csv, threshold_sweep,
    write_assignment_csv, write_sweep_csv, EdgeRule, ScoredEdge,
};
use simm_core::io::{load_features, load_labels, save_features, save_labels, write_knn_csv};
use simm_core::metrics::{auc, bcubed_f, mean_average_precision, pairwise_f, roc_points, write_roc_csv};
use simm_core::multitest::{
    min_m_binary, min_m_real, sim_m, sim_m_edges, simulate as run_simulation, SimMMode, TestModel,
};
use simm_core::synthetic::{generate, SyntheticSpec};
use simm_core::training::{enhance as run_enhance, save_loss_trace, train as run_train, PairPolicy, TrainConfig};
use simm_core::{avg_enr, build_knn_graph, l2_normalize, Error, FeatureMatrix, KnnGraph, LabelVector, Result};

use crate::{
    BuildGraphArgs, ClusterArgs, EdgesArg, EnhanceArgs, EvalSimArgs, GenSyntheticArgs, GraphEdgeArgs,
    MetricsArgs, ModeArg, ScorerArg, SimMKind, SimulateArgs, SweepArgs, TrainArgs,
};

/// 3 for data and validation problems, 4 for numeric failures.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric { .. } => 4,
        _ => 3,
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn check_labels(features: &FeatureMatrix, labels: &LabelVector) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::Validation(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    Ok(())
}

pub fn gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let (features, labels) = generate(&SyntheticSpec {
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        noise: a.noise,
        seed: a.seed,
    })?;
    save_features(&a.out, &features)?;
    save_labels(&a.labels, &labels)
}

pub fn build_graph(a: &BuildGraphArgs) -> Result<()> {
    let features = l2_normalize(&load_features(&a.features)?)?;
    let graph = build_knn_graph(&features, a.k)?;
    write_knn_csv(create(&a.out)?, &graph)?;
    if let Some(path) = &a.labels {
        let labels = load_labels(path)?;
        check_labels(&features, &labels)?;
        println!("avg_enr={:.6}", avg_enr(&graph, &labels)?);
    }
    Ok(())
}

pub fn eval_sim(a: &EvalSimArgs) -> Result<()> {
    let features = l2_normalize(&load_features(&a.features)?)?;
    let labels = load_labels(&a.labels)?;
    check_labels(&features, &labels)?;
    let mode = match a.simm {
        SimMKind::Real => SimMMode::Real,
        SimMKind::Binary => SimMMode::Binary {
            threshold: a.test_threshold,
        },
    };
    let scale = if a.percent { 100.0 } else { 1.0 };
    let mut w = output(&a.out)?;
    writeln!(w, "k,enr,auc_s,auc_m,auc_delta")?;
    for &k in &a.k {
        let graph = build_knn_graph(&features, k)?;
        let enr = avg_enr(&graph, &labels)?;
        let same = |i: usize, j: usize| labels.get(i) == labels.get(j);
        let s_pairs: Vec<(f64, bool)> = graph.edges().map(|(i, j, s)| (s, same(i, j))).collect();
        let m_pairs: Vec<(f64, bool)> = sim_m_edges(&graph, &features, mode)?
            .into_iter()
            .map(|(i, j, s)| (s.value, same(i, j)))
            .collect();
        let auc_s = auc(&s_pairs)? * scale;
        let auc_m = auc(&m_pairs)? * scale;
        writeln!(w, "{k},{enr:.6},{auc_s:.6},{auc_m:.6},{:.6}", auc_m - auc_s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    // Validated with a placeholder pool size, then resized.
    let (model, min_m) = match a.mode {
        ModeArg::Binary => {
            let model = TestModel::binary(a.p.unwrap_or(f64::NAN), a.q.unwrap_or(f64::NAN), a.alpha, 1, a.gamma)?;
            let min_m = min_m_binary(&model);
            (model, min_m)
        }
        ModeArg::Real => {
            let mut model = TestModel::real(
                a.s_plus.unwrap_or(f64::NAN),
                a.s_minus.unwrap_or(f64::NAN),
                a.alpha,
                1,
                a.gamma,
            )?;
            if let Some(sd) = a.noise_sd {
                model = model.with_noise_sd(sd)?;
            }
            let min_m = min_m_real(&model);
            (model, min_m)
        }
    };
    let m = match (a.m, &min_m) {
        (Some(m), _) => m,
        (None, Ok(m)) => *m,
        (None, Err(e)) => {
            return Err(Error::InfeasibleBound(format!("no --m given and the bound is unusable: {e}")))
        }
    };
    let model = model.with_m(m);
    model.validate()?;
    let report = run_simulation(&model, a.trials, a.seed)?;
    let mut w = output(&a.out)?;
    writeln!(w, "trial,noisy_single,miss_single,simm_same,simm_cross")?;
    for r in &report.records {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6}",
            r.trial, r.noisy_single, r.miss_single, r.simm_same, r.simm_cross
        )?;
    }
    writeln!(w)?;
    let min_m_text = match min_m {
        Ok(v) => v.to_string(),
        Err(_) => "none".into(),
    };
    let footer: [(&str, String); 17] = [
        ("mode", format!("{:?}", a.mode).to_lowercase()),
        ("trials", report.trials.to_string()),
        ("seed", a.seed.to_string()),
        ("m", report.m.to_string()),
        ("min_m", min_m_text),
        ("delta", format!("{:.9}", report.delta)),
        ("threshold", format!("{:.9}", report.threshold_used)),
        ("noisy_mean", format!("{:.6}", report.noisy_mean)),
        ("noisy_expected", format!("{:.6}", report.noisy_expected)),
        ("noisy_sd", format!("{:.6}", report.noisy_sd)),
        ("miss_mean", format!("{:.6}", report.miss_mean)),
        ("miss_expected", format!("{:.6}", report.miss_expected)),
        ("miss_sd", format!("{:.6}", report.miss_sd)),
        ("noisy_rate_single", format!("{:.6}", report.noisy_rate_single)),
        ("miss_rate_single", format!("{:.6}", report.miss_rate_single)),
        ("noisy_rate_post", format!("{:.6}", report.noisy_rate_post)),
        ("miss_rate_post", format!("{:.6}", report.miss_rate_post)),
    ];
    for (k, v) in footer {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_reader(BufReader::new(File::open(path)?))?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.k_seed {
        cfg.k_seed = v;
    }
    if let Some(v) = a.layers {
        cfg.layers = v;
    }
    if let Some(v) = &a.variant {
        cfg.variant = Variant::parse(v)?;
    }
    if let Some(v) = &a.fusion {
        cfg.fusion = Fusion::parse(v)?;
    }
    if let Some(v) = &a.pairs {
        cfg.pairs = PairPolicy::parse(v)?;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let features = load_features(&a.features)?;
    let labels = load_labels(&a.labels)?;
    check_labels(&features, &labels)?;
    let outcome = run_train(&features, &labels, &cfg)?;
    save_checkpoint(&a.checkpoint, &outcome.model)?;
    if let Some(path) = &a.trace {
        save_loss_trace(path, &outcome.trace)?;
    }
    if let (Some(first), Some(last)) = (outcome.trace.first(), outcome.trace.last()) {
        eprintln!("loss {:.6} -> {:.6} over {} epochs", first.loss, last.loss, outcome.trace.len());
    }
    Ok(())
}

pub fn enhance(a: &EnhanceArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let features = load_features(&a.features)?;
    save_features(&a.out, &run_enhance(&model, &features)?)
}

fn scored_edges(g: &GraphEdgeArgs) -> Result<(usize, Vec<ScoredEdge>)> {
    let features = l2_normalize(&load_features(&g.features)?)?;
    let graph: KnnGraph = build_knn_graph(&features, g.k)?;
    let rule = match g.edges {
        EdgesArg::Union => EdgeRule::Union,
        EdgesArg::Intersection => EdgeRule::Intersection,
    };
    let edges = match g.scorer {
        ScorerArg::Cosine => cosine_edges(&features, &graph, rule)?,
        ScorerArg::Simm => knn_edges(&graph, rule, |x, y| {
            Ok(sim_m(&graph, &features, x, y, SimMMode::Real)?.value)
        })?,
    };
    Ok((features.rows(), edges))
}

pub fn cluster(a: &ClusterArgs) -> Result<()> {
    let (n, edges) = scored_edges(&a.graph)?;
    let assignment = g_cut(&edges, n, a.threshold)?;
    write_assignment_csv(create(&a.out)?, &assignment)?;
    eprintln!("{} clusters", assignment.cluster_count());
    Ok(())
}

pub fn metrics(a: &MetricsArgs) -> Result<()> {
    let features = l2_normalize(&load_features(&a.features)?)?;
    let labels = load_labels(&a.labels)?;
    check_labels(&features, &labels)?;
    let graph = build_knn_graph(&features, a.k)?;
    let pairs: Vec<(f64, bool)> = graph
        .edges()
        .map(|(i, j, s)| (s, labels.get(i) == labels.get(j)))
        .collect();
    let map = mean_average_precision(&features, &labels)?;
    let mut lines: Vec<(String, String)> = vec![
        ("map".into(), format!("{:.6}", map.map)),
        ("map_probes".into(), map.probes.to_string()),
        ("map_skipped".into(), map.skipped.to_string()),
        ("avg_enr".into(), format!("{:.6}", avg_enr(&graph, &labels)?)),
    ];
    // AUC needs both classes among kNN pairs.
    match auc(&pairs) {
        Ok(v) => lines.insert(0, ("auc".into(), format!("{v:.6}"))),
        Err(_) => lines.insert(0, ("auc".into(), "undefined".into())),
    }
    if let Some(path) = &a.roc {
        write_roc_csv(create(path)?, &roc_points(&pairs)?)?;
    }
    if let Some(path) = &a.assignment {
        let assignment = read_assignment_csv(BufReader::new(File::open(path)?))?;
        let pw = pairwise_f(&assignment, &labels)?;
        let bc = bcubed_f(&assignment, &labels)?;
        for (name, v) in [
            ("fp", pw.f),
            ("fp_precision", pw.precision),
            ("fp_recall", pw.recall),
            ("fb", bc.f),
            ("fb_precision", bc.precision),
            ("fb_recall", bc.recall),
        ] {
            lines.push((name.into(), format!("{v:.6}")));
        }
        lines.push(("clusters".into(), assignment.cluster_count().to_string()));
    }
    let mut w = output(&a.out)?;
    for (k, v) in lines {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let (n, edges) = scored_edges(&a.graph)?;
    if n != labels.len() {
        return Err(Error::Validation(format!("{n} feature rows but {} labels", labels.len())));
    }
    let result = threshold_sweep(&edges, n, &labels, &linear_grid(a.lo, a.hi, a.steps))?;
    write_sweep_csv(output(&a.out)?, &result.points)?;
    eprintln!(
        "best threshold={:.6} fp={:.6} fb={:.6}",
        result.best.threshold, result.best.fp, result.best.fb
    );
    Ok(())
}
