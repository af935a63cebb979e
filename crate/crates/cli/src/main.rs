use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "simm", version, about = "Sim-M similarity, B-Attention training and G-cut clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic feature set (FEAT + label file).
    GenSynthetic(GenSyntheticArgs),
    /// Build an exact cosine kNN graph and write it as CSV.
    BuildGraph(BuildGraphArgs),
    /// Compare AUC of Sim-S and Sim-M over kNN pairs for several k.
    EvalSim(EvalSimArgs),
    /// Monte Carlo check of the multiple-tests error rates.
    Simulate(SimulateArgs),
    /// Train an attention stack and write a BATT checkpoint.
    Train(TrainArgs),
    /// Apply a checkpoint to every node's subgraph and write enhanced features.
    Enhance(EnhanceArgs),
    /// G-cut clustering of the kNN graph at one threshold.
    Cluster(ClusterArgs),
    /// AUC, mAP and (optionally) clustering F-scores.
    Metrics(MetricsArgs),
    /// G-cut over a threshold grid with Pairwise and BCubed F-scores.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct GenSyntheticArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Expected norm of the noise added to each unit centroid.
    #[arg(long, default_value_t = 1.4)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output FEAT file.
    #[arg(long)]
    pub out: PathBuf,
    /// Output label file, one integer per line.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildGraphArgs {
    /// FEAT or CSV feature file.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// CSV `probe,neighbor,score`.
    #[arg(long)]
    pub out: PathBuf,
    /// Also print the average edge noise rate against these labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SimMKind {
    Real,
    Binary,
}

#[derive(Args, Debug)]
pub struct EvalSimArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value_t = SimMKind::Real)]
    pub simm: SimMKind,
    /// Single-test threshold for binary Sim-M.
    #[arg(long, default_value_t = 0.5)]
    pub test_threshold: f64,
    /// Print AUC values multiplied by 100.
    #[arg(long)]
    pub percent: bool,
    /// CSV `k,enr,auc_s,auc_m,auc_delta`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Binary,
    Real,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Binary)]
    pub mode: ModeArg,
    /// Same-category pass probability (binary mode).
    #[arg(long, required_if_eq("mode", "binary"))]
    pub p: Option<f64>,
    /// Cross-category pass probability (binary mode).
    #[arg(long, required_if_eq("mode", "binary"))]
    pub q: Option<f64>,
    /// Mean same-category similarity (real mode).
    #[arg(long, required_if_eq("mode", "real"))]
    pub s_plus: Option<f64>,
    /// Mean cross-category similarity (real mode).
    #[arg(long, required_if_eq("mode", "real"))]
    pub s_minus: Option<f64>,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub gamma: f64,
    /// Pool size; defaults to the smallest size satisfying the bound.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of real-mode similarity draws.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// CSV plus key=value footer; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// key=value config file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_seed: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// plain_gcn, self, qart, qart_tilde, band or band_tilde.
    #[arg(long)]
    pub variant: Option<String>,
    /// weighted_sum, plain_sum or elementwise_product.
    #[arg(long)]
    pub fusion: Option<String>,
    /// probe or all.
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output BATT checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output CSV `epoch,lr,loss`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output FEAT file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EdgesArg {
    Union,
    Intersection,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScorerArg {
    Cosine,
    Simm,
}

#[derive(Args, Debug)]
pub struct GraphEdgeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = EdgesArg::Union)]
    pub edges: EdgesArg,
    #[arg(long, value_enum, default_value_t = ScorerArg::Cosine)]
    pub scorer: ScorerArg,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub graph: GraphEdgeArgs,
    /// Keep edges scoring strictly above this value.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: f64,
    /// CSV `node,cluster`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// kNN size for the AUC pair set.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// CSV `node,cluster` to score with Pairwise and BCubed F.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// key=value summary; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV `fpr,tpr,threshold`.
    #[arg(long)]
    pub roc: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub graph: GraphEdgeArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    /// CSV `threshold,fp,fb`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(&a),
        Command::BuildGraph(a) => commands::build_graph(&a),
        Command::EvalSim(a) => commands::eval_sim(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Enhance(a) => commands::enhance(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simm: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
