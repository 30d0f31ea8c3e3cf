//! The `csgspace` command line.
//!
//! Exit codes: 0 success, 1 extraction failure (mixed products, target not
//! representable, degenerate primitive), 2 usage or input error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::cloud;
use crate::decomposition::reconstruct;
use crate::dnf::{extract_dnf, DnfOptions, ProductsDoc};
use crate::error::{Error, Result};
use crate::expr::{CsgExpr, SizeMetrics, Solid};
use crate::generate;
use crate::geometry::Point;
use crate::graph::build_graph;
use crate::sampling::{Agreement, SampledScene};
use crate::scene::Scene;
use crate::search_space::{count_trees_range, count_with_heuristics, SearchSpaceReport};
use crate::target::{TargetSamples, TargetSolid};

/// Lattice jitter used for extraction.
pub const EXTRACT_JITTER: f64 = 0.25;
/// Lattice jitter used for scoring, so scoring points differ from extraction
/// points even at the same resolution.
pub const SCORE_JITTER: f64 = 0.3;
/// Mixed into the seed of the scoring lattice.
pub const SCORE_SEED_SALT: u64 = 0x5c0e_5eed_0bad_cafe;

#[derive(Debug, Parser)]
#[command(name = "csgspace", version, about = "CSG search-space counting and expression extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count labelled CSG trees.
    Count(CountArgs),
    /// Write a scene, its ground-truth expression and a surface point cloud.
    GenScene(GenArgs),
    /// Print the intersection graph of a scene.
    Graph(GraphArgs),
    /// Extract an expression for the target solid of a scene.
    Extract(ExtractArgs),
    /// Score an expression against a ground truth or a point cloud.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Number of primitives |P|.
    #[arg(long)]
    pub primitives: u64,
    /// Number of operators |O|.
    #[arg(long, default_value_t = 3)]
    pub ops: u64,
    /// Count trees with exactly this many inner nodes.
    #[arg(long, conflicts_with = "auto")]
    pub n: Option<u64>,
    /// Sum over the heuristic range of inner-node counts.
    #[arg(long)]
    pub auto: bool,
    /// Replace the heuristic upper bound in auto mode.
    #[arg(long, requires = "auto")]
    pub n_max: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// One of the shipped layouts.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(generate::LAYOUTS), conflicts_with = "random")]
    pub layout: Option<String>,
    /// Number of random primitives.
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub dimension: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Lattice resolution used to sample the point cloud.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// File stem; defaults to the layout name or `random-<count>-<seed>`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Clone)]
pub struct Sampling {
    /// Lattice cells per axis.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Surface band half-width; defaults to 1e-4 of the scene diagonal.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub sampling: Sampling,
    /// Write the DOT text here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Union of full fundamental products.
    Dnf,
    /// Prime-implicant cover of the products.
    DnfMin,
    /// Dominant-primitive decomposition with two-level fallback.
    Decompose,
}

#[derive(Debug, Args, Clone)]
pub struct TargetArgs {
    /// Ground-truth expression file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Point cloud on the target surface (ASCII XYZ or PLY).
    #[arg(long)]
    pub cloud: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long, value_enum, default_value_t = Strategy::Decompose)]
    pub strategy: Strategy,
    /// Agreement fraction needed to call a product inside or outside.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Resolve mixed products by majority instead of failing.
    #[arg(long)]
    pub allow_mixed: bool,
    /// Write the expression here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Expression file to score.
    #[arg(long)]
    pub expr: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long)]
    pub json: bool,
}

/// Inputs of an extraction run.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub scene: Scene,
    pub truth: Option<CsgExpr>,
    pub cloud: Option<Vec<Point>>,
    pub resolution: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl SceneBundle {
    pub fn new(scene: Scene, truth: Option<CsgExpr>, cloud: Option<Vec<Point>>, sampling: &Sampling) -> Result<Self> {
        if truth.is_none() && cloud.is_none() {
            return Err(Error::InvalidScene("either a ground truth or a point cloud is required".into()));
        }
        let epsilon = sampling.epsilon.unwrap_or_else(|| scene.default_epsilon());
        Ok(SceneBundle {
            scene,
            truth,
            cloud,
            resolution: sampling.resolution,
            epsilon,
            seed: sampling.seed,
        })
    }

    pub fn sampled(&self) -> Result<SampledScene> {
        let plan = self.scene.plan(self.resolution, EXTRACT_JITTER)?;
        SampledScene::new(&self.scene.primitives, &plan, self.seed, self.epsilon)
    }

    /// Target labels on `sampled`: the ground truth when present, otherwise
    /// labels inferred from the cloud.
    pub fn target(&self, sampled: &SampledScene) -> Result<TargetSamples> {
        let ps = &self.scene.primitives;
        if let Some(truth) = &self.truth {
            return TargetSolid::Oracle(truth.clone()).sample(ps, sampled);
        }
        let cloud = self.cloud.as_ref().expect("checked in new");
        let tolerance = 1.5 * sampled.plan.max_cell_edge();
        let inferred = cloud::infer_table(ps, sampled, cloud, tolerance)?;
        TargetSolid::Table(inferred.table).sample(ps, sampled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreReport {
    /// `truth` or `cloud`.
    pub backend: &'static str,
    pub total: usize,
    pub matched: usize,
    pub mismatched: usize,
    pub surface_excluded: usize,
    pub match_fraction: f64,
    pub metrics: SizeMetrics,
}

/// Scores `solid` on a lattice distinct from the extraction lattice against
/// the ground truth, or, without one, by the fraction of cloud points that
/// lie within `epsilon` of the solid's boundary.
pub fn score(bundle: &SceneBundle, solid: &Solid) -> Result<ScoreReport> {
    let ps = &bundle.scene.primitives;
    let metrics = solid.size_metrics();
    if let Some(truth) = &bundle.truth {
        let plan = bundle.scene.plan(bundle.resolution, SCORE_JITTER)?;
        let sampled = SampledScene::new(ps, &plan, bundle.seed ^ SCORE_SEED_SALT, bundle.epsilon)?;
        let expected = sampled.evaluate_expr(truth, ps)?;
        let found = solid.evaluate_on(ps, &sampled)?;
        let a = Agreement::compare(&found, &expected);
        return Ok(ScoreReport {
            backend: "truth",
            total: a.total,
            matched: a.matched,
            mismatched: a.mismatched,
            surface_excluded: a.surface_excluded,
            match_fraction: a.match_fraction(),
            metrics,
        });
    }
    let cloud = bundle.cloud.as_ref().expect("checked in new");
    let matched = match solid.expr() {
        None => 0,
        Some(e) => {
            let r = e.resolve(ps)?;
            cloud
                .iter()
                .filter(|x| r.signed_value(ps, x).abs() <= bundle.epsilon)
                .count()
        }
    };
    Ok(ScoreReport {
        backend: "cloud",
        total: cloud.len(),
        matched,
        mismatched: cloud.len() - matched,
        surface_excluded: 0,
        match_fraction: if cloud.is_empty() { 0.0 } else { matched as f64 / cloud.len() as f64 },
        metrics,
    })
}

/// Result of [`run_extraction`].
#[derive(Debug, Clone)]
pub struct ExtractionOutput {
    pub solid: Solid,
    pub score: ScoreReport,
    /// Strategy-specific details: products and cover, or the decomposition
    /// trace.
    pub detail: serde_json::Value,
}

pub fn run_extraction(bundle: &SceneBundle, strategy: Strategy, options: &DnfOptions) -> Result<ExtractionOutput> {
    let ps = &bundle.scene.primitives;
    let sampled = bundle.sampled()?;
    let target = bundle.target(&sampled)?;
    let (solid, detail) = match strategy {
        Strategy::Dnf | Strategy::DnfMin => {
            let all: Vec<usize> = (0..ps.len()).collect();
            let x = extract_dnf(ps, &all, &sampled, &target, None, options)?;
            let doc = serde_json::to_value(ProductsDoc::new(&x.analysis, Some(&x.minimization)))?;
            let solid = if strategy == Strategy::Dnf { x.full } else { x.minimized };
            (solid, doc)
        }
        Strategy::Decompose => {
            let r = reconstruct(ps, &sampled, &target, options)?;
            let doc = serde_json::to_value(&r)?;
            (r.solid, doc)
        }
    };
    let score = score(bundle, &solid)?;
    Ok(ExtractionOutput { solid, score, detail })
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::MixedProducts(_)
        | Error::Unrepresentable(_)
        | Error::NoInteriorSamples(_)
        | Error::RecursionDepth(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code. Results go to `out`, diagnostics to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Count(a) => cmd_count(&a, out),
        Command::GenScene(a) => cmd_gen_scene(&a, out),
        Command::Graph(a) => cmd_graph(&a, out),
        Command::Extract(a) => cmd_extract(&a, out),
        Command::Score(a) => cmd_score(&a, out),
    }
}

fn emit_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn cmd_count(a: &CountArgs, out: &mut dyn Write) -> Result<()> {
    let report: SearchSpaceReport = match (a.n, a.auto) {
        (Some(n), _) => count_trees_range(a.primitives, a.ops, n, n)?,
        (None, true) => count_with_heuristics(a.primitives, a.ops, a.n_max)?,
        (None, false) => {
            return Err(Error::InvalidPlan("count needs --n or --auto".into()));
        }
    };
    if a.json {
        return emit_json(out, &report);
    }
    writeln!(out, "primitives: {}", report.primitive_count)?;
    writeln!(out, "operators: {}", report.operator_count)?;
    if let Some(h) = &report.heuristic {
        writeln!(out, "n_min: {}", h.n_min)?;
        writeln!(out, "h_max: {:.6}", h.h_max)?;
        let source = if h.n_max_overridden { " (override)" } else { "" };
        writeln!(out, "n_max: {}{source}", h.n_max)?;
    }
    for (n, c) in &report.per_n {
        writeln!(out, "n={n}: {c}")?;
    }
    writeln!(out, "total: {}", report.total)?;
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn cmd_gen_scene(a: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let (generated, default_name) = match (&a.layout, a.random) {
        (Some(name), None) => (generate::layout(name)?, name.clone()),
        (None, Some(count)) => (
            generate::random_scene(count, a.dimension, a.seed)?,
            format!("random-{count}-{}", a.seed),
        ),
        _ => {
            return Err(Error::InvalidScene("gen-scene needs --layout or --random".into()));
        }
    };
    let name = a.name.clone().unwrap_or(default_name);
    let scene = &generated.scene;
    let cloud = generate::surface_cloud(scene, &generated.truth, a.resolution, a.seed, scene.default_epsilon())?;
    let scene_path = a.out.join(format!("{name}.json"));
    let truth_path = a.out.join(format!("{name}.csg"));
    let cloud_path = a.out.join(format!("{name}.xyz"));
    write_file(&scene_path, &(scene.to_json() + "\n"))?;
    write_file(&truth_path, &format!("{}\n", generated.truth))?;
    write_file(&cloud_path, &cloud::to_xyz(&cloud))?;
    if a.json {
        return emit_json(
            out,
            &json!({
                "scene": scene_path,
                "truth": truth_path,
                "cloud": cloud_path,
                "primitives": scene.primitives.len(),
                "cloud_points": cloud.len(),
                "expression": generated.truth.to_string(),
            }),
        );
    }
    writeln!(out, "scene: {}", scene_path.display())?;
    writeln!(out, "truth: {}", truth_path.display())?;
    writeln!(out, "cloud: {} ({} points)", cloud_path.display(), cloud.len())?;
    writeln!(out, "expression: {}", generated.truth)?;
    Ok(())
}

pub fn cmd_graph(a: &GraphArgs, out: &mut dyn Write) -> Result<()> {
    let scene = Scene::load(&a.scene)?;
    let epsilon = a.sampling.epsilon.unwrap_or_else(|| scene.default_epsilon());
    let plan = scene.plan(a.sampling.resolution, EXTRACT_JITTER)?;
    let sampled = SampledScene::new(&scene.primitives, &plan, a.sampling.seed, epsilon)?;
    let graph = build_graph(&scene.primitives, &sampled);
    let components = graph.connected_components();
    let ids = components.ids(&graph);
    if let Some(path) = &a.out {
        write_file(path, &graph.to_dot())?;
    }
    if a.json {
        return emit_json(
            out,
            &json!({
                "adjacency": graph.to_adjacency_doc(),
                "components": ids,
                "pair_tests": graph.pair_tests,
            }),
        );
    }
    if a.out.is_none() {
        write!(out, "{}", graph.to_dot())?;
    }
    for (i, part) in ids.iter().enumerate() {
        writeln!(out, "// component {}: {}", i + 1, part.join(" "))?;
    }
    Ok(())
}

fn load_bundle(scene: &Path, target: &TargetArgs, sampling: &Sampling) -> Result<SceneBundle> {
    if target.truth.is_none() && target.cloud.is_none() {
        return Err(Error::InvalidScene("pass --truth or --cloud".into()));
    }
    let scene = Scene::load(scene)?;
    let truth = target
        .truth
        .as_ref()
        .map(|p| -> Result<CsgExpr> {
            let e = CsgExpr::parse(std::fs::read_to_string(p)?.trim())?;
            e.resolve(&scene.primitives)?;
            Ok(e)
        })
        .transpose()?;
    let cloud = target.cloud.as_ref().map(|p| cloud::load(p)).transpose()?;
    SceneBundle::new(scene, truth, cloud, sampling)
}

fn print_score(out: &mut dyn Write, s: &ScoreReport) -> Result<()> {
    writeln!(
        out,
        "score ({}): matched {} / mismatched {} / surface {} of {}; match fraction {:.6}",
        s.backend, s.matched, s.mismatched, s.surface_excluded, s.total, s.match_fraction
    )?;
    writeln!(
        out,
        "size: {} leaves, {} inner nodes, height {}",
        s.metrics.leaf_count, s.metrics.inner_count, s.metrics.height
    )?;
    Ok(())
}

pub fn cmd_extract(a: &ExtractArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load_bundle(&a.scene, &a.target, &a.sampling)?;
    let options = DnfOptions {
        tau: a.tau,
        allow_mixed: a.allow_mixed,
        ..DnfOptions::default()
    };
    let result = run_extraction(&bundle, a.strategy, &options)?;
    if let Some(path) = &a.out {
        write_file(path, &format!("{}\n", result.solid))?;
    }
    if a.json {
        return emit_json(
            out,
            &json!({
                "strategy": a.strategy,
                "expression": result.solid.to_string(),
                "score": result.score,
                "detail": result.detail,
            }),
        );
    }
    writeln!(out, "{}", result.solid)?;
    print_score(out, &result.score)
}

pub fn cmd_score(a: &ScoreArgs, out: &mut dyn Write) -> Result<()> {
    let bundle = load_bundle(&a.scene, &a.target, &a.sampling)?;
    let solid = Solid::parse(std::fs::read_to_string(&a.expr)?.trim())?;
    if let Some(e) = solid.expr() {
        e.resolve(&bundle.scene.primitives)?;
    }
    let report = score(&bundle, &solid)?;
    if a.json {
        return emit_json(out, &report);
    }
    print_score(out, &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("csgspace").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn count_single_n() {
        let (code, text) = run_capture(&["count", "--primitives", "2", "--ops", "3", "--n", "1"]);
        assert_eq!(code, 0);
        assert!(text.ends_with("n=1: 12\ntotal: 12\n"), "{text}");
    }

    #[test]
    fn count_auto_single_primitive() {
        let (code, text) = run_capture(&["count", "--primitives", "1", "--auto"]);
        assert_eq!(code, 0);
        assert!(text.contains("n_min: 0\n") && text.contains("n_max: 0\n"));
        assert!(text.ends_with("total: 1\n"));
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run_capture(&["count"]).0, 2);
        assert_eq!(run_capture(&["count", "--primitives", "2"]).0, 2);
        assert_eq!(run_capture(&["frobnicate"]).0, 2);
    }

    #[test]
    fn extraction_errors_exit_with_one() {
        assert_eq!(exit_code(&Error::MixedProducts(vec![])), 1);
        assert_eq!(exit_code(&Error::Unrepresentable(String::new())), 1);
        assert_eq!(exit_code(&Error::InvalidScene(String::new())), 2);
    }
}
