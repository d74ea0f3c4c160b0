use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use tss_core::algebra::verify_girs;
use tss_core::apply::{matvec, matvec_opcount};
use tss_core::blockmat::{BlockLayout, GraphPartitionedMatrix};
use tss_core::construct::{construct_tss, hankel_rank_profile};
use tss_core::error::TssError;
use tss_core::generate::{
    dense_random, random_tree, random_tss_dense, random_vector, tree_sparse_inverse, well_conditioned_tss,
};
use tss_core::io;
use tss_core::lowrank::DEFAULT_TOL;
use tss_core::solve::{assemble_lifted, solve_lifted, solve_with_method, SolveMethod};
use tss_core::tree::RootedTree;
use tss_core::tss::RankProfile;

#[derive(Parser)]
#[command(name = "tss", version, about = "Tree semi-separable matrices: construct, apply, solve, analyze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a dense matrix into a TSS representation (JSON).
    Construct {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a TSS representation back into a dense matrix.
    Reconstruct {
        #[arg(long)]
        tss: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Multiply a TSS matrix with a vector.
    Matvec {
        #[arg(long)]
        tss: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Solve T x = b through the lifted sparse system.
    Solve {
        #[arg(long)]
        tss: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Retry with dense LU when a pivot block is singular or not square.
        #[arg(long)]
        fallback_dense: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Report the minimal rank profile and check graph-induced rank bounds.
    Analyze {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        /// Bound per border edge; defaults to the largest edge rank.
        #[arg(long)]
        girs_c: Option<f64>,
        /// Random subsets to test when the tree has more than 10 nodes.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded test matrix, vector or tree.
    ///
    /// tree-sparse-inverse: a matrix with nonzero blocks only on the diagonal
    /// and on tree edges, shifted by 4 times its largest absolute row sum
    /// for invertibility, then inverted densely.
    Generate(GenerateArgs),
    /// Time construction, matvec and solve over a range of tree sizes (CSV report).
    Bench {
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, default_value_t = 2)]
        block_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "all")]
        shape: BenchShape,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Kind {
    TreeSparseInverse,
    RandomTssDense,
    DenseRandom,
    Vector,
    RandomTree,
    LineTree,
    BinaryTree,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum BenchShape {
    Line,
    Binary,
    Random,
    All,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Tree JSON; required for matrix and vector kinds.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Node count for tree kinds (leaf count for binary-tree).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides every node's block size (binary trees keep internal nodes empty).
    #[arg(long)]
    block_size: Option<usize>,
    /// Uniform edge rank for random-tss-dense.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Also write the tree with the block sizes actually used.
    #[arg(long)]
    tree_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug)]
enum CliError {
    Core(TssError),
    Usage(String),
}

impl From<TssError> for CliError {
    fn from(e: TssError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn to_json(&self) -> Value {
        match self {
            CliError::Core(e) => {
                let mut v = json!({"error": e.kind(), "message": e.to_string()});
                if matches!(e, TssError::SingularMatrix) {
                    v["hint"] = json!("retry with a different --seed");
                }
                if matches!(e, TssError::SingularPivotBlock { .. } | TssError::NonSquarePivotBlock { .. }) {
                    v["hint"] = json!("rerun with --fallback-dense");
                }
                v
            }
            CliError::Usage(m) => json!({"error": "Usage", "message": m}),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Core(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn emit_matrix(output: &Output, m: &DMatrix<f64>) -> CliResult<()> {
    let text = match output.format {
        Format::Csv => io::format_matrix_csv(m),
        Format::Json => {
            let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
            json_text(&json!(rows))
        }
    };
    emit(output.out.as_deref(), &text)
}

fn emit_vector(output: &Output, v: &DVector<f64>) -> CliResult<()> {
    let text = match output.format {
        Format::Csv => io::format_vector_csv(v),
        Format::Json => json_text(&json!(v.iter().copied().collect::<Vec<_>>())),
    };
    emit(output.out.as_deref(), &text)
}

fn load_dense(matrix: &Path, tree: &Path) -> CliResult<GraphPartitionedMatrix> {
    let (tree, layout) = io::read_tree(tree)?;
    let values = io::read_matrix_csv(matrix)?;
    Ok(GraphPartitionedMatrix::new(Arc::new(tree), layout, values)?)
}

fn profile_json(p: &RankProfile) -> Value {
    json!(p
        .iter()
        .map(|(e, rho)| json!({"from": e.from.id(), "to": e.to.id(), "rho": rho}))
        .collect::<Vec<_>>())
}

fn generate(args: &GenerateArgs) -> CliResult<()> {
    let count = || {
        args.nodes
            .ok_or_else(|| CliError::Usage("--nodes is required for tree kinds".into()))
    };
    let tree_kind = |tree: RootedTree, empty: &[tss_core::tree::Node]| -> CliResult<()> {
        let s = args.block_size.unwrap_or(1);
        let layout = BlockLayout::with_empty(tree.node_count(), s, empty);
        let text = serde_json::to_string_pretty(&io::tree_to_json(&tree, &layout)).map_err(TssError::from)?;
        emit(args.output.out.as_deref(), &(text + "\n"))
    };
    match args.kind {
        Kind::RandomTree => return tree_kind(random_tree(count()?, args.seed)?, &[]),
        Kind::LineTree => return tree_kind(RootedTree::line(count()?)?, &[]),
        Kind::BinaryTree => {
            let (tree, empty) = RootedTree::hss_binary(count()?)?;
            return tree_kind(tree, &empty);
        }
        _ => {}
    }

    let path = args
        .tree
        .as_deref()
        .ok_or_else(|| CliError::Usage("--tree is required for matrix and vector kinds".into()))?;
    let (tree, mut layout) = io::read_tree(path)?;
    if let Some(s) = args.block_size {
        let keep_empty: Vec<_> = tree
            .nodes()
            .filter(|&k| layout.m(k) == 0 && layout.n(k) == 0)
            .collect();
        layout = BlockLayout::with_empty(tree.node_count(), s, &keep_empty);
    }
    if let Some(p) = &args.tree_out {
        io::write_tree(p, &tree, &layout)?;
    }
    let tree = Arc::new(tree);
    match args.kind {
        Kind::TreeSparseInverse => emit_matrix(&args.output, tree_sparse_inverse(tree, layout, args.seed)?.values()),
        Kind::RandomTssDense => emit_matrix(
            &args.output,
            random_tss_dense(tree, layout, args.rank, args.seed)?.values(),
        ),
        Kind::DenseRandom => emit_matrix(&args.output, dense_random(tree, layout, args.seed)?.values()),
        Kind::Vector => emit_vector(&args.output, &random_vector(layout.total_cols(), args.seed)),
        Kind::RandomTree | Kind::LineTree | Kind::BinaryTree => unreachable!("handled above"),
    }
}

struct BenchRow {
    shape: &'static str,
    nodes: usize,
    size: usize,
    construct_s: f64,
    matvec_s: f64,
    solve_s: f64,
    matvec_ops: usize,
    solve_ops: usize,
}

fn bench_one(shape: &'static str, tree: RootedTree, empty: &[tss_core::tree::Node], rank: usize, s: usize, seed: u64) -> CliResult<BenchRow> {
    let tree = Arc::new(tree);
    let k = tree.node_count();
    let layout = BlockLayout::with_empty(k, s, empty);
    let mut profile = RankProfile::uniform(&tree, rank);
    for e in tree.directed_edges() {
        // Edges between a leaf and its parent cannot carry more than the leaf block.
        let cap = [e.from, e.to].iter().map(|&n| layout.m(n)).filter(|&m| m > 0).min().unwrap_or(rank);
        profile.set(e, rank.min(cap));
    }
    let t = well_conditioned_tss(tree.clone(), layout, profile, seed)?;
    let dense = t.to_dense();
    let x = random_vector(t.layout().total_cols(), seed);

    let start = Instant::now();
    construct_tss(&dense, DEFAULT_TOL)?;
    let construct_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let b = matvec(&t, &x)?;
    let matvec_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let solve_ops = match solve_lifted(&assemble_lifted(&t, &b)?) {
        Ok(sol) => sol.opcount,
        Err(TssError::SingularPivotBlock { .. } | TssError::NonSquarePivotBlock { .. }) => 0,
        Err(e) => return Err(e.into()),
    };
    let solve_s = start.elapsed().as_secs_f64();
    Ok(BenchRow {
        shape,
        nodes: k,
        size: t.layout().total_cols(),
        construct_s,
        matvec_s,
        solve_s,
        matvec_ops: matvec_opcount(&t),
        solve_ops,
    })
}

fn bench(sizes: &[usize], rank: usize, s: usize, seed: u64, shape: BenchShape, output: &Output) -> CliResult<()> {
    let mut rows = Vec::new();
    for &k in sizes {
        if matches!(shape, BenchShape::Line | BenchShape::All) {
            rows.push(bench_one("line", RootedTree::line(k)?, &[], rank, s, seed)?);
        }
        if matches!(shape, BenchShape::Binary | BenchShape::All) {
            // Binary tree with k leaves and empty internal nodes.
            let (tree, empty) = RootedTree::hss_binary(k.max(2))?;
            rows.push(bench_one("binary", tree, &empty, rank, s, seed)?);
        }
        if matches!(shape, BenchShape::Random | BenchShape::All) {
            rows.push(bench_one("random", random_tree(k, seed)?, &[], rank, s, seed)?);
        }
    }
    let text = match output.format {
        Format::Csv => {
            let mut t = String::new();
            for r in &rows {
                t.push_str(&format!(
                    "{},{},{},{:e},{:e},{:e},{},{}\n",
                    r.shape, r.nodes, r.size, r.construct_s, r.matvec_s, r.solve_s, r.matvec_ops, r.solve_ops
                ));
            }
            if !t.is_empty() {
                t.insert_str(0, "shape,nodes,size,construct_s,matvec_s,solve_s,matvec_ops,solve_ops\n");
            }
            t
        }
        Format::Json => json_text(&json!(rows
            .iter()
            .map(|r| json!({
                "shape": r.shape, "nodes": r.nodes, "size": r.size,
                "construct_s": r.construct_s, "matvec_s": r.matvec_s, "solve_s": r.solve_s,
                "matvec_ops": r.matvec_ops, "solve_ops": r.solve_ops,
            }))
            .collect::<Vec<_>>())),
    };
    emit(output.out.as_deref(), &text)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Construct { matrix, tree, tol, out } => {
            let t = construct_tss(&load_dense(&matrix, &tree)?, tol)?;
            let text = serde_json::to_string(&io::tss_to_json(&t)).map_err(TssError::from)?;
            emit(out.as_deref(), &(text + "\n"))
        }
        Command::Reconstruct { tss, output } => emit_matrix(&output, io::read_tss(tss)?.to_dense().values()),
        Command::Matvec { tss, x, output } => {
            let t = io::read_tss(tss)?;
            emit_vector(&output, &matvec(&t, &io::read_vector_csv(x)?)?)
        }
        Command::Solve {
            tss,
            b,
            fallback_dense,
            output,
        } => {
            let t = io::read_tss(tss)?;
            let (x, method) = solve_with_method(&t, &io::read_vector_csv(b)?, fallback_dense)?;
            if method == SolveMethod::DenseFallback {
                eprintln!("{}", json!({"warning": "lifted solve failed, used dense LU"}));
            }
            emit_vector(&output, &x)
        }
        Command::Analyze {
            matrix,
            tree,
            girs_c,
            trials,
            seed,
            tol,
            out,
        } => {
            let t = load_dense(&matrix, &tree)?;
            let profile = hankel_rank_profile(&t, tol)?;
            let c = girs_c.unwrap_or(profile.max() as f64);
            if c < 0.0 {
                return Err(CliError::Usage("--girs-c must be nonnegative".into()));
            }
            let report = verify_girs(&t, c, trials, seed, tol)?;
            let v = json!({
                "profile": profile_json(&profile),
                "max_rank": profile.max(),
                "girs_c": c,
                "girs_max_ratio": report.max_ratio,
                "subsets_checked": report.subsets_checked,
                "exhaustive": report.exhaustive,
                "violations": report.violations,
            });
            emit(out.as_deref(), &json_text(&v))
        }
        Command::Generate(args) => generate(&args),
        Command::Bench {
            sizes,
            rank,
            block_size,
            seed,
            shape,
            output,
        } => bench(&sizes, rank, block_size, seed, shape, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::Usage(e.to_string().trim_end().to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
