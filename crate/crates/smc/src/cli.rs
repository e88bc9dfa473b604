//! The `smc` command line.
//!
//! Exit status: 0 on success, 1 when a solver did not converge or broke down
//! (every artifact written so far is kept), 2 for usage, configuration and
//! input errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use smc_core::metrics::{inject_noise, NoiseSpec};
use smc_core::pipeline::{cluster_stage, evaluate, laplacians, neighbor_graph, ClusterStage};
use smc_core::refine::{solve_alternating_from, FactorPair, Refinement};
use smc_core::sharing::NeighborSource;
use smc_core::subspace::ClusterAssignment;
use smc_core::tagmat::{DatasetBundle, SimilarityGraph, TagMatrix};
use smc_core::testkit::gen_tagged_bundle;

use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::{factors, ids, manifest, mtx, parallel, report};

#[derive(Debug, Parser)]
#[command(name = "smc", version, about = "Image tag completion by subspace clustering and tag refinement by inductive matrix completion")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `pipeline.refine.mu=0.6`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Dataset manifest.
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Number of clusters (`pipeline.k`).
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Factor rank (`pipeline.refine.rank`).
    #[arg(long, global = true)]
    pub rank: Option<usize>,
    /// Factor penalty (`pipeline.refine.lambda1`).
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    /// Laplacian penalty (`pipeline.refine.lambda2`).
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    /// Discount on unannotated positions (`pipeline.refine.mu`).
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

impl GlobalArgs {
    /// `--set` values followed by the named flags, so named flags win.
    fn overrides(&self) -> Vec<String> {
        let mut out = self.set.clone();
        let named = [
            ("threads", self.threads.map(|v| v.to_string())),
            ("pipeline.k", self.k.map(|v| v.to_string())),
            ("pipeline.refine.rank", self.rank.map(|v| v.to_string())),
            ("pipeline.refine.lambda1", self.lambda1.map(float)),
            ("pipeline.refine.lambda2", self.lambda2.map(float)),
            ("pipeline.refine.mu", self.mu.map(float)),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| format!("{k}={v}"))));
        out
    }
}

/// TOML float literal for `v` (always with a fraction or exponent).
fn float(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sparse subspace clustering: writes z.mtx, affinity.mtx, labels.txt.
    Cluster,
    /// Cluster-local tag sharing: writes completed.mtx.
    Share {
        /// Cluster labels, one per line.
        #[arg(long)]
        labels: PathBuf,
        /// Affinity matrix from `cluster` (needed for affinity neighbors).
        #[arg(long)]
        affinity: Option<PathBuf>,
    },
    /// Tag refinement: writes p.mtx, q.mtx, refined_scores.mtx, refined.mtx.
    Refine {
        /// Tag matrix to refine instead of the manifest's.
        #[arg(long)]
        tags: Option<PathBuf>,
        /// Start from saved factors (p.mtx, q.mtx) in this directory.
        #[arg(long, value_name = "DIR")]
        factors_in: Option<PathBuf>,
        /// Apply the saved factors without solving.
        #[arg(long, requires = "factors_in")]
        predict_only: bool,
    },
    /// Cluster, share, refine and evaluate against ground truth if present.
    Pipeline,
    /// AP@N / AR@N of a prediction matrix.
    Eval {
        /// Predicted scores (array or coordinate Matrix Market).
        #[arg(long)]
        predictions: PathBuf,
        /// Ground truth; defaults to the manifest's.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Image identifiers for the per-image CSV.
        #[arg(long)]
        ids: Option<PathBuf>,
    },
    /// Writes a synthetic noisy dataset with ground truth.
    Synth,
    /// Grid search of refinement parameters against validation AP@N.
    Tune {
        /// Tag matrix to refine instead of the manifest's.
        #[arg(long)]
        tags: Option<PathBuf>,
    },
}

enum Status {
    Done,
    NotConverged(String),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Core(
            smc_core::Error::CgBreakdown { .. } | smc_core::Error::Eigen(_) | smc_core::Error::DegenerateRepresentation,
        ) => 1,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> ExitCode {
    let level = if cli.global.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    let config = match RunConfig::load(cli.global.config.as_deref(), &cli.global.overrides()) {
        Ok(mut c) => {
            if let Some(p) = &cli.global.manifest {
                c.manifest = Some(p.clone());
            }
            if let Some(p) = &cli.global.out {
                c.output = Some(p.clone());
            }
            c
        }
        Err(e) => {
            error!("{e}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli.command, &config) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(what)) => {
            error!("{what} did not converge; outputs were written");
            ExitCode::from(1)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config
        .output
        .clone()
        .ok_or_else(|| Error::Config("no output directory (set --out or `output`)".into()))?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn dataset(config: &RunConfig) -> Result<DatasetBundle> {
    let path = config
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config("no manifest (set --manifest or `manifest`)".into()))?;
    let bundle = manifest::load_dataset(path)?;
    info!(
        "loaded {} images x {} tags ({} annotations) from {}",
        bundle.tags.n_images(),
        bundle.tags.n_tags(),
        bundle.tags.nnz(),
        path.display()
    );
    Ok(bundle)
}

fn dispatch(command: &Command, config: &RunConfig) -> Result<Status> {
    let out = output_dir(config)?;
    config.write_snapshot(&out)?;
    match command {
        Command::Cluster => {
            let bundle = dataset(config)?;
            let stage = run_cluster(config, &bundle, &out)?;
            Ok(ssc_status(&stage))
        }
        Command::Share { labels, affinity } => {
            let bundle = dataset(config)?;
            let assignment = ClusterAssignment::from_labels(ids::read_usizes(labels)?);
            let sims = match config.pipeline.sharing.neighbor_source {
                NeighborSource::Affinity => {
                    let path = affinity.as_deref().ok_or_else(|| {
                        Error::Config("affinity neighbors need --affinity (or sharing.neighbor_source = \"cosine\")".into())
                    })?;
                    SimilarityGraph::new(mtx::read_dense(path)?)?
                }
                NeighborSource::Cosine => {
                    smc_core::tagmat::cosine_similarity_graph(&bundle.image_features, config.pipeline.rectification)?
                }
            };
            run_share(config, &bundle.tags, &assignment, &sims, &out)?;
            Ok(Status::Done)
        }
        Command::Refine {
            tags,
            factors_in,
            predict_only,
        } => {
            let bundle = dataset(config)?;
            let tags = match tags {
                Some(p) => mtx::read_tags(p)?,
                None => bundle.tags.clone(),
            };
            let init = factors_in.as_deref().map(factors::load_factors).transpose()?;
            if *predict_only {
                let factors = init.expect("clap enforces --factors-in");
                let scores = factors.predict(&bundle.image_features, &bundle.tag_features)?;
                mtx::write_dense(&out.join("refined_scores.mtx"), &scores)?;
                mtx::write_tags(&out.join("refined.mtx"), &TagMatrix::from_scores_clamped(&scores)?)?;
                info!("applied saved factors to {} images", scores.nrows());
                return Ok(Status::Done);
            }
            run_refine(config, &bundle, &tags, init, &out)?;
            Ok(Status::Done)
        }
        Command::Pipeline => {
            let bundle = dataset(config)?;
            let stage = run_cluster(config, &bundle, &out)?;
            let sims = neighbor_graph(
                config.pipeline.sharing.neighbor_source,
                &stage.affinity,
                &bundle.image_features,
                config.pipeline.rectification,
            )?;
            let completed = run_share(config, &bundle.tags, &stage.assignment, &sims, &out)?;
            let refined = run_refine(config, &bundle, &completed, None, &out)?;
            if let Some(truth) = &bundle.ground_truth {
                let reports = evaluate(&refined.scores, truth, &config.pipeline.eval_n, config.pipeline.empty_truth)?;
                write_eval(&out, &reports, &bundle.image_ids)?;
            }
            Ok(ssc_status(&stage))
        }
        Command::Eval { predictions, truth, ids } => {
            let scores = mtx::read_dense(predictions)?;
            let (truth, image_ids) = match truth {
                Some(p) => (mtx::read_tags(p)?, None),
                None => {
                    let bundle = dataset(config)?;
                    let truth = bundle
                        .ground_truth
                        .ok_or_else(|| Error::Config("the manifest has no ground_truth; pass --truth".into()))?;
                    (truth, Some(bundle.image_ids))
                }
            };
            let image_ids = match ids {
                Some(p) => ids::read_ids(p)?,
                None => image_ids.unwrap_or_default(),
            };
            let reports = evaluate(&scores, &truth, &config.pipeline.eval_n, config.pipeline.empty_truth)?;
            write_eval(&out, &reports, &image_ids)?;
            Ok(Status::Done)
        }
        Command::Synth => {
            run_synth(config, &out)?;
            Ok(Status::Done)
        }
        Command::Tune { tags } => {
            let bundle = dataset(config)?;
            let truth = bundle
                .ground_truth
                .as_ref()
                .ok_or_else(|| Error::Config("tuning needs ground_truth in the manifest".into()))?;
            let tags = match tags {
                Some(p) => mtx::read_tags(p)?,
                None => bundle.tags.clone(),
            };
            run_tune(config, &bundle, &tags, truth, &out)?;
            Ok(Status::Done)
        }
    }
}

fn ssc_status(stage: &ClusterStage) -> Status {
    if stage.representation.converged {
        Status::Done
    } else {
        Status::NotConverged(format!(
            "subspace clustering ({} iterations)",
            stage.representation.iterations
        ))
    }
}

fn run_cluster(config: &RunConfig, bundle: &DatasetBundle, out: &Path) -> Result<ClusterStage> {
    let p = &config.pipeline;
    let stage = cluster_stage(&bundle.image_features, &p.ssc, p.k, p.cluster_seed)?;
    let rep = &stage.representation;
    info!(
        "subspace clustering: {} iterations, converged {}, residuals affine {:.2e} reconstruction {:.2e}",
        rep.iterations, rep.converged, rep.residuals.affine, rep.residuals.reconstruction
    );
    if !stage.assignment.empty_clusters.is_empty() {
        warn!("clusters left empty after repair: {:?}", stage.assignment.empty_clusters);
    }
    mtx::write_dense(&out.join("z.mtx"), &rep.z)?;
    mtx::write_dense(&out.join("affinity.mtx"), stage.affinity.weights())?;
    ids::write_usizes(&out.join("labels.txt"), &stage.assignment.labels)?;
    let summary = format!(
        "iterations: {}\nconverged: {}\naffine_residual: {}\nreconstruction_residual: {}\ncoupling_residual: {}\nrepairs: {}\nempty_clusters: {}\n",
        rep.iterations,
        u8::from(rep.converged),
        rep.residuals.affine,
        rep.residuals.reconstruction,
        rep.residuals.coupling,
        stage.assignment.repairs,
        stage.assignment.empty_clusters.len(),
    );
    let path = out.join("cluster.txt");
    fs::write(&path, summary).map_err(io_err(&path))?;
    Ok(stage)
}

fn run_share(
    config: &RunConfig,
    tags: &TagMatrix,
    assignment: &ClusterAssignment,
    sims: &SimilarityGraph,
    out: &Path,
) -> Result<TagMatrix> {
    let completed = parallel::share_tags(tags, assignment, sims, &config.pipeline.sharing, config.threads)?;
    info!("sharing: {} -> {} annotations", tags.nnz(), completed.nnz());
    mtx::write_tags(&out.join("completed.mtx"), &completed)?;
    Ok(completed)
}

fn run_refine(
    config: &RunConfig,
    bundle: &DatasetBundle,
    tags: &TagMatrix,
    init: Option<FactorPair>,
    out: &Path,
) -> Result<Refinement> {
    let rc = &config.pipeline.refine;
    rc.validate(bundle.image_features.dim(), bundle.tag_features.dim())
        .map_err(|e| Error::Config(e.to_string()))?;
    let (l_v, l_s) = laplacians(&bundle.image_features, &bundle.tag_features, config.pipeline.rectification)?;
    let init = init.unwrap_or_else(|| {
        FactorPair::random(bundle.image_features.dim(), bundle.tag_features.dim(), rc.rank, rc.seed)
    });
    let solution = solve_alternating_from(tags, &bundle.image_features, &bundle.tag_features, &l_v, &l_s, rc, init)?;
    info!(
        "refinement: {} outer iterations, {} CG iterations, objective {:.6e}",
        solution.outer_iterations,
        solution.cg_iterations,
        solution.trace.last().copied().unwrap_or(f64::NAN)
    );
    factors::save_factors(out, &solution.factors)?;
    let trace: String = solution.trace.iter().map(|v| format!("{v:e}\n")).collect();
    let path = out.join("objective.txt");
    fs::write(&path, trace).map_err(io_err(&path))?;
    let scores = solution.factors.predict(&bundle.image_features, &bundle.tag_features)?;
    let refinement = Refinement { scores, solution };
    mtx::write_dense(&out.join("refined_scores.mtx"), &refinement.scores)?;
    mtx::write_tags(&out.join("refined.mtx"), &refinement.to_tags()?)?;
    Ok(refinement)
}

fn write_eval(out: &Path, reports: &[smc_core::metrics::EvalReport], image_ids: &[String]) -> Result<()> {
    for r in reports {
        info!("AP@{} = {:.4}, AR@{} = {:.4}", r.n, r.ap, r.n, r.ar);
    }
    report::write_reports(&out.join("eval.txt"), reports)?;
    report::write_per_image_csv(&out.join("eval_images.csv"), reports, image_ids)
}

fn run_synth(config: &RunConfig, out: &Path) -> Result<()> {
    let s = &config.synth;
    let bundle = gen_tagged_bundle(&s.bundle)?;
    let noisy = inject_noise(
        &bundle.truth,
        &NoiseSpec {
            missing_rate: s.missing_rate,
            inaccurate_rate: s.inaccurate_rate,
            seed: s.noise_seed,
        },
    )?;
    let n_images = bundle.truth.n_images();
    let n_tags = bundle.truth.n_tags();
    let dataset = DatasetBundle {
        tags: noisy,
        image_features: bundle.v,
        tag_features: bundle.t,
        image_ids: (0..n_images).map(|i| format!("img{i:05}")).collect(),
        tag_names: (0..n_tags).map(|j| format!("tag{j:03}")).collect(),
        ground_truth: Some(bundle.truth),
    };
    let manifest = manifest::save_dataset(&dataset, out)?;
    ids::write_usizes(&out.join("true_labels.txt"), &bundle.labels)?;
    info!(
        "wrote {} images x {} tags ({} noisy annotations) to {}",
        n_images,
        n_tags,
        dataset.tags.nnz(),
        manifest.display()
    );
    Ok(())
}

fn run_tune(config: &RunConfig, bundle: &DatasetBundle, tags: &TagMatrix, truth: &TagMatrix, out: &Path) -> Result<()> {
    let p = &config.pipeline;
    let report = parallel::tune(
        tags,
        &bundle.image_features,
        &bundle.tag_features,
        truth,
        &config.tune,
        &p.refine,
        p.rectification,
        p.empty_truth,
        config.threads,
    )?;
    let path = out.join("tune.csv");
    let csv_err = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["rank", "lambda1", "lambda2", "mu", "ap", "ar"]).map_err(csv_err)?;
    for pt in &report.points {
        w.write_record([
            pt.rank.to_string(),
            pt.lambda1.to_string(),
            pt.lambda2.to_string(),
            pt.mu.to_string(),
            pt.ap.to_string(),
            pt.ar.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    let best = report.best_point();
    info!(
        "best of {} points: rank {}, lambda1 {}, lambda2 {}, mu {} (AP@{} = {:.4} on {} validation images)",
        report.points.len(),
        best.rank,
        best.lambda1,
        best.lambda2,
        best.mu,
        config.tune.n,
        best.ap,
        report.validation_images.len()
    );
    let mut tuned = config.clone();
    tuned.pipeline.refine.rank = best.rank;
    tuned.pipeline.refine.lambda1 = best.lambda1;
    tuned.pipeline.refine.lambda2 = best.lambda2;
    tuned.pipeline.refine.mu = best.mu;
    let path = out.join("tuned_config.toml");
    fs::write(&path, tuned.to_toml()?).map_err(io_err(&path))
}
