//! `blendrec` command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage, configuration or input-file
//! problems, 3 when training or evaluation fails.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use blendrec::blenders::BlenderFamily;
use blendrec::config::ExperimentConfig;
use blendrec::data::{parse_movies, parse_ratings, GenreCatalog, RatingsDataset};
use blendrec::pipeline::{
    build_blendset, evaluate_recommender, finalize_blender, nested_cv, Blendset, CvScore, NestedCvReport,
};
use blendrec::recommenders::{Family, RecommenderSpec};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser, Debug)]
#[command(
    name = "blendrec",
    version,
    about = "Cross-validated recommender blending experiments"
)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-validated RMSE of each recommender in the roster.
    Evaluate {
        /// Evaluate only this family instead of the configured roster.
        #[arg(long)]
        family: Option<String>,
        /// Hyper-parameters for `--family`, as a JSON object.
        #[arg(long, requires = "family")]
        params: Option<String>,
    },
    /// Builds the blendset of out-of-fold predictions and meta-features.
    Blendset,
    /// Nested cross-validation of the blender grid on a blendset.
    NestedCv {
        /// Blendset CSV; defaults to `blendset.csv` in the output directory.
        #[arg(long)]
        blendset: Option<PathBuf>,
        /// Only consider blenders of this family.
        #[arg(long)]
        restrict_family: Option<String>,
        /// Also select and refit a blender on the whole blendset.
        #[arg(long)]
        finalize: bool,
    },
    /// Compares nested-CV report files.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code: 2,
            error: e.into(),
        })
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code: 3,
            error: e.into(),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CmdResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("--threads")
            .usage()?;
    }
    match &cli.command {
        Command::Evaluate { family, params } => cmd_evaluate(&cli, family.as_deref(), params.as_deref()),
        Command::Blendset => cmd_blendset(&cli),
        Command::NestedCv {
            blendset,
            restrict_family,
            finalize,
        } => cmd_nested_cv(&cli, blendset.as_deref(), restrict_family.as_deref(), *finalize),
        Command::Report { paths } => cmd_report(paths),
    }
}

/// The configuration with command-line overrides applied.
struct Setup {
    config: ExperimentConfig,
    out: PathBuf,
    digest: String,
}

fn setup(cli: &Cli) -> CmdResult<Setup> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required for this command"))
        .usage()?;
    let mut config = ExperimentConfig::load(path).usage()?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    // The output directory is not part of the experiment's identity.
    config.out = None;
    let digest = sha256_hex(serde_json::to_string(&config).usage()?.as_bytes());
    config.out = Some(out.clone());
    fs::create_dir_all(&out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .usage()?;
    Ok(Setup { config, out, digest })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_data(config: &ExperimentConfig) -> CmdResult<(RatingsDataset, Option<GenreCatalog>)> {
    let ratings = parse_ratings(&config.ratings).usage()?;
    let genres = match &config.movies {
        Some(p) => Some(parse_movies(p).usage()?),
        None if config.needs_genres() => {
            return Err(anyhow!(
                "the roster contains rfcb, which needs `movies` in the configuration"
            ))
            .usage();
        }
        None => None,
    };
    Ok((ratings, genres))
}

fn write_artifact(path: &Path, bytes: &[u8]) -> CmdResult<()> {
    fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()
}

fn to_json(value: &impl Serialize) -> CmdResult<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value).runtime()?;
    text.push(b'\n');
    Ok(text)
}

/// Space-padded columns, the first left-aligned and the rest right-aligned.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                s.push_str(&format!("{cell:<w$}", w = width[c]));
            } else {
                s.push_str(&format!("  {cell:>w$}", w = width[c]));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(
        width
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    ));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn parse_family<F: std::str::FromStr>(name: &str) -> CmdResult<F>
where
    F::Err: Display,
{
    name.parse::<F>().map_err(|e| anyhow!("{e}")).usage()
}

#[derive(Serialize)]
struct EvaluationEntry {
    recommender: String,
    spec: RecommenderSpec,
    folds: usize,
    per_fold: Vec<f64>,
    mean_rmse: f64,
}

#[derive(Serialize)]
struct Evaluation {
    config_digest: String,
    seed: u64,
    results: Vec<EvaluationEntry>,
}

fn cmd_evaluate(cli: &Cli, family: Option<&str>, params: Option<&str>) -> CmdResult<()> {
    let Setup {
        mut config,
        out,
        digest,
    } = setup(cli)?;
    if let Some(name) = family {
        let family: Family = parse_family(name)?;
        let spec = match params {
            None => RecommenderSpec::default_for(family),
            Some(text) => {
                let mut value: serde_json::Value = serde_json::from_str(text).context("--params").usage()?;
                let obj = value
                    .as_object_mut()
                    .ok_or_else(|| anyhow!("--params must be a JSON object"))
                    .usage()?;
                obj.insert("family".into(), family.name().into());
                serde_json::from_value(value).context("--params").usage()?
            }
        };
        spec.validate().usage()?;
        config.roster = vec![spec];
    }
    let (ratings, genres) = load_data(&config)?;
    let k = config.trainer_folds;
    let seed = config.trainer_seed();
    let roster = config.seeded_roster();
    let scores: Vec<_> = roster
        .par_iter()
        .map(|spec| evaluate_recommender(&ratings, spec, genres.as_ref(), k, seed))
        .collect();
    let scores: Vec<CvScore> = scores.into_iter().collect::<Result<_, _>>().runtime()?;
    let results: Vec<EvaluationEntry> = roster
        .iter()
        .zip(scores)
        .map(|(spec, s)| EvaluationEntry {
            recommender: spec.label(),
            spec: spec.clone(),
            folds: k,
            per_fold: s.per_fold,
            mean_rmse: s.mean,
        })
        .collect();
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|e| vec![e.recommender.clone(), format!("{:.4}", e.mean_rmse)])
        .collect();
    print!("{}", table(&["recommender", "cv_rmse"], &rows));
    let report = Evaluation {
        config_digest: digest,
        seed: config.seed,
        results,
    };
    write_artifact(&out.join("evaluate.json"), &to_json(&report)?)
}

#[derive(Serialize)]
struct Provenance {
    config_digest: String,
    seed: u64,
    trainer_seed: u64,
    trainer_folds: usize,
    rows: usize,
    ratings_sha256: String,
    fold_plan_sha256: String,
    recommenders: Vec<RecommenderSpec>,
}

fn cmd_blendset(cli: &Cli) -> CmdResult<()> {
    let Setup { config, out, digest } = setup(cli)?;
    let (ratings, genres) = load_data(&config)?;
    let roster = config.seeded_roster();
    let blendset = build_blendset(
        &ratings,
        &roster,
        genres.as_ref(),
        config.trainer_folds,
        config.trainer_seed(),
    )
    .runtime()?;
    let mut csv = Vec::new();
    blendset.write_csv(&mut csv).runtime()?;
    write_artifact(&out.join("blendset.csv"), &csv)?;
    let plan = blendset.fold_plan.as_ref().expect("built blendsets carry their folds");
    let provenance = Provenance {
        config_digest: digest,
        seed: config.seed,
        trainer_seed: config.trainer_seed(),
        trainer_folds: config.trainer_folds,
        rows: blendset.len(),
        ratings_sha256: sha256_hex(ratings.to_movielens().as_bytes()),
        fold_plan_sha256: sha256_hex(plan.to_csv().as_bytes()),
        recommenders: roster,
    };
    write_artifact(&out.join("blendset.provenance.json"), &to_json(&provenance)?)?;
    println!(
        "wrote {} rows to {}",
        blendset.len(),
        out.join("blendset.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FinalArtifact<'a> {
    cv_rmse: f64,
    train_rmse: f64,
    warnings: &'a [String],
}

fn cmd_nested_cv(cli: &Cli, blendset: Option<&Path>, restrict: Option<&str>, finalize: bool) -> CmdResult<()> {
    let Setup { config, out, digest } = setup(cli)?;
    let path = blendset.map_or_else(|| out.join("blendset.csv"), Path::to_path_buf);
    let file = fs::File::open(&path)
        .with_context(|| format!("cannot open blendset {}", path.display()))
        .usage()?;
    let data = Blendset::read_csv(std::io::BufReader::new(file))
        .with_context(|| format!("cannot parse blendset {}", path.display()))
        .usage()?;
    let family = restrict.map(parse_family::<BlenderFamily>).transpose()?;
    let grid = config.grid.candidates_for(family);
    if grid.is_empty() {
        return Err(anyhow!("the grid has no {} candidates", restrict.unwrap_or_default())).usage();
    }
    let seed = config.tester_seed();
    let mut report: NestedCvReport =
        nested_cv(&data.rows, &grid, config.tester_folds, config.inner_folds(), seed).runtime()?;
    report.config_digest = Some(digest);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let suffix = family.map_or(String::new(), |f| format!(".{}", f.name()));
    write_artifact(&out.join(format!("nested_cv{suffix}.json")), &to_json(&report)?)?;
    let rows: Vec<Vec<String>> = report
        .per_fold
        .iter()
        .map(|f| vec![f.fold.to_string(), f.selected.label(), format!("{:.4}", f.rmse)])
        .collect();
    print!("{}", table(&["fold", "selected", "rmse"], &rows));
    println!("mean rmse {:.4}", report.mean_rmse);

    if finalize {
        let fin = finalize_blender(&data.rows, &grid, config.inner_folds(), seed).runtime()?;
        let model = fin.model.to_json(&fin.spec).runtime()?;
        write_artifact(
            &out.join(format!("blender{suffix}.json")),
            format!("{model}\n").as_bytes(),
        )?;
        let meta = FinalArtifact {
            cv_rmse: fin.cv_rmse,
            train_rmse: fin.train_rmse,
            warnings: &fin.warnings,
        };
        write_artifact(&out.join(format!("blender{suffix}.meta.json")), &to_json(&meta)?)?;
        println!("final blender {} (cv rmse {:.4})", fin.spec, fin.cv_rmse);
    }
    Ok(())
}

fn cmd_report(paths: &[PathBuf]) -> CmdResult<()> {
    let mut rows = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .usage()?;
        let raw: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("{} is not JSON", path.display()))
            .usage()?;
        let report: NestedCvReport = serde_json::from_value(raw.clone())
            .with_context(|| format!("{} is not a nested-CV report", path.display()))
            .usage()?;
        let mut counts: Vec<(String, usize)> = Vec::new();
        for f in &report.per_fold {
            let label = f.selected.label();
            match counts.iter_mut().find(|(l, _)| *l == label) {
                Some((_, n)) => *n += 1,
                None => counts.push((label, 1)),
            }
        }
        let selected = counts
            .iter()
            .map(|(l, n)| format!("{l} x{n}"))
            .collect::<Vec<_>>()
            .join(", ");
        rows.push(vec![
            path.display().to_string(),
            report
                .config_digest
                .as_deref()
                .map_or("-".into(), |d| d[..d.len().min(12)].to_string()),
            raw["mean_rmse"].to_string(),
            selected,
        ]);
    }
    print!("{}", table(&["report", "config", "mean_rmse", "selected"], &rows));
    Ok(())
}
