//! Pipeline stages as library calls. The binary is a thin clap layer over
//! these functions; every stage reads and writes plain files so it can run on
//! its own or as part of [`run_all`].

mod config;
mod run;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{
    corpus_stats, filter_record, normalize_text, read_dataset, write_dataset, Dataset, Example,
    FilterDecision, Format, LanguageShare, NormalizationConfig, Origin, MAX_SCORE, MIN_SCORE,
};
use crate::ensemble::{
    build_ensemble, candidate_configs, ensemble_predict, load_ensemble, make_fold_plan,
    make_stratified_fold_plan, save_ensemble, EnsembleModel,
};
use crate::error::Error;
use crate::metrics::{disparity_report, evaluate, DisparityReport, EvalReport, GroupBy};
use crate::pseudolabel::{
    confidence_filter, expand_dataset, occupancy_report, occupancy_tsv, score_unlabeled,
    scored_from_pseudo, stratified_cap, write_scored, CellOccupancy,
};

pub use config::{PipelineConfig, WORKDIR_ENV};
pub use run::{run_all, ArtifactHash, RunLayout, RunManifest, StageRecord, RUN_MANIFEST};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

pub const PREDICTIONS_HEADER: &str = "id\tprediction";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Data(#[from] Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Stage { .. } => EXIT_STAGE,
            CliError::Data(e) => match e {
                Error::Config(_) => EXIT_USAGE,
                Error::EmptyDataset
                | Error::Diverged { .. }
                | Error::TooFewExamples { .. }
                | Error::NoValidCandidate { .. }
                | Error::EmptyEnsemble => EXIT_STAGE,
                _ => EXIT_DATA,
            },
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            CliError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn in_stage<T>(stage: &str, r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Stage {
        stage: stage.to_string(),
        source,
    })
}

/// Refuses to clobber `path` unless `force`, in which case it is removed.
fn claim_output(path: &Path, force: bool) -> CliResult<()> {
    if fs::symlink_metadata(path).is_ok() {
        if !force {
            return Err(CliError::Usage(format!(
                "{} already exists; pass --force or choose another output",
                path.display()
            )));
        }
        let removed = if path.is_dir() {
            fs::remove_dir_all(path)
        } else {
            fs::remove_file(path)
        };
        removed.map_err(|e| Error::io(path, e))?;
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn read(path: &Path) -> CliResult<Dataset> {
    Ok(read_dataset(path, Format::from_path(path))?)
}

fn write(ds: &Dataset, path: &Path, header: bool) -> CliResult<()> {
    Ok(write_dataset(ds, path, Format::from_path(path), header)?)
}

/// How stages treat the files they write.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutputOptions {
    /// Replace existing outputs instead of refusing.
    pub force: bool,
    /// Start dataset and prediction TSVs with a header row.
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub read: usize,
    pub kept: usize,
    pub dropped: BTreeMap<String, usize>,
    pub stats: Vec<LanguageShare>,
}

/// Normalizes every text and, when `filter` is set, drops records that fail
/// the length or language rules. Running it on its own output changes nothing.
pub fn cmd_preprocess(
    input: &Path,
    output: &Path,
    cfg: &NormalizationConfig,
    filter: bool,
    out: OutputOptions,
) -> CliResult<PreprocessSummary> {
    cfg.validate()?;
    let ds = read(input)?;
    claim_output(output, out.force)?;
    let read_count = ds.len();
    let mut dropped = BTreeMap::new();
    let mut kept = Vec::with_capacity(read_count);
    for mut ex in ds.into_examples() {
        ex.text = normalize_text(&ex.text, cfg);
        match filter.then(|| filter_record(&ex, cfg)) {
            Some(FilterDecision::Drop(reason)) => {
                *dropped.entry(reason.as_str().to_string()).or_insert(0) += 1;
            }
            _ => kept.push(ex),
        }
    }
    let kept_ds = Dataset::new(kept)?;
    write(&kept_ds, output, out.header)?;
    Ok(PreprocessSummary {
        read: read_count,
        kept: kept_ds.len(),
        dropped,
        stats: corpus_stats(&kept_ds),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainStage {
    /// Gold data only.
    Initial,
    /// Gold examples are split into folds; pseudo-labeled ones join every
    /// split's training data.
    Final,
}

impl TrainStage {
    pub fn name(self) -> &'static str {
        match self {
            TrainStage::Initial => "train-ensemble-initial",
            TrainStage::Final => "train-ensemble-final",
        }
    }
}

/// Builds and saves an ensemble (`k * m` trainings, `k` members kept).
pub fn cmd_train_ensemble(
    cfg: &PipelineConfig,
    stage: TrainStage,
    input: &Path,
    out_dir: &Path,
    out: OutputOptions,
) -> CliResult<EnsembleModel> {
    let ds = read(input)?;
    let (labeled, extra, fold_seed) = match stage {
        TrainStage::Initial => {
            if let Some(ex) = ds.iter().find(|e| e.origin == Origin::Pseudo) {
                return Err(Error::InvalidExample {
                    id: ex.id.clone(),
                    message: "initial training takes gold examples only".into(),
                }
                .into());
            }
            (ds, None, cfg.fold_seed_initial)
        }
        TrainStage::Final => {
            let gold = ds.filter(|e| e.origin == Origin::Gold);
            let pseudo = ds.filter(|e| e.origin == Origin::Pseudo);
            (
                gold,
                Some(pseudo).filter(|p| !p.is_empty()),
                cfg.fold_seed_final,
            )
        }
    };
    if let Some(ex) = labeled.iter().find(|e| e.score.is_none()) {
        return Err(Error::InvalidExample {
            id: ex.id.clone(),
            message: "training example has no score".into(),
        }
        .into());
    }
    claim_output(out_dir, out.force)?;
    let plan = in_stage(
        "fold-plan",
        if cfg.stratify_folds {
            make_stratified_fold_plan(&labeled, cfg.k, fold_seed)
        } else {
            make_fold_plan(&labeled, cfg.k, fold_seed)
        },
    )?;
    let candidates = candidate_configs(&cfg.train_config, &cfg.seeds);
    let ens = in_stage(
        stage.name(),
        build_ensemble(&labeled, &plan, &candidates, &cfg.features, extra.as_ref()),
    )?;
    save_ensemble(&ens, out_dir)?;
    Ok(ens)
}

pub const SCORED_FILE: &str = "scored.tsv";
pub const KEPT_FILE: &str = "kept.tsv";
pub const OCCUPANCY_FILE: &str = "occupancy.tsv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoLabelSummary {
    pub scored: usize,
    pub confident: usize,
    pub kept: usize,
    pub occupancy: Vec<CellOccupancy>,
}

/// Scores the unlabeled pool, filters by ensemble std and caps each
/// (language, bin) cell. Writes `scored.tsv`, `kept.tsv` (dataset format,
/// pseudo origin) and `occupancy.tsv` into `out_dir`.
pub fn cmd_pseudo_label(
    cfg: &PipelineConfig,
    ensemble_dir: &Path,
    unlabeled: &Path,
    out_dir: &Path,
    out: OutputOptions,
) -> CliResult<PseudoLabelSummary> {
    cfg.pseudo.validate()?;
    let ens = load_ensemble(ensemble_dir)?;
    let pool = read(unlabeled)?;
    claim_output(out_dir, out.force)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let scored = in_stage("pseudo-label", score_unlabeled(&ens, &pool))?;
    let confident = confidence_filter(&scored, &cfg.pseudo);
    let capped = stratified_cap(&confident, &cfg.pseudo);
    let occupancy = occupancy_report(&scored, &confident, &capped, &cfg.pseudo);

    write_scored(&scored, &out_dir.join(SCORED_FILE))?;
    let kept = Dataset::new(
        capped
            .iter()
            .map(|s| {
                Example::pseudo(
                    s.example.id.clone(),
                    s.example.language.clone(),
                    s.mean,
                    s.std,
                    s.example.text.clone(),
                )
            })
            .collect(),
    )?;
    write(&kept, &out_dir.join(KEPT_FILE), out.header)?;
    write_text(&out_dir.join(OCCUPANCY_FILE), &occupancy_tsv(&occupancy))?;
    Ok(PseudoLabelSummary {
        scored: scored.len(),
        confident: confident.len(),
        kept: capped.len(),
        occupancy,
    })
}

/// Original training set followed by the kept pseudo-labeled examples.
pub fn cmd_expand(
    train: &Path,
    kept: &Path,
    output: &Path,
    out: OutputOptions,
) -> CliResult<Dataset> {
    let original = read(train)?;
    if let Some(ex) = original.iter().find(|e| e.origin == Origin::Pseudo) {
        return Err(Error::InvalidExample {
            id: ex.id.clone(),
            message: "training set already contains pseudo-labeled examples".into(),
        }
        .into());
    }
    let extra = scored_from_pseudo(&read(kept)?)?;
    claim_output(output, out.force)?;
    let expanded = expand_dataset(&original, &extra)?;
    write(&expanded, output, out.header)?;
    Ok(expanded)
}

/// Ensemble-mean predictions in input order, optionally clamped to the
/// score range. Writes `id<TAB>prediction` lines.
pub fn cmd_predict(
    ensemble_dir: &Path,
    input: &Path,
    output: &Path,
    clamp: bool,
    out: OutputOptions,
) -> CliResult<Vec<(String, f64)>> {
    let ens = load_ensemble(ensemble_dir)?;
    let ds = read(input)?;
    claim_output(output, out.force)?;
    let preds: Vec<(String, f64)> = in_stage(
        "predict",
        ds.examples()
            .par_iter()
            .map(|ex| {
                let p = ensemble_predict(&ens, ex)?.mean;
                Ok((
                    ex.id.clone(),
                    if clamp {
                        p.clamp(MIN_SCORE, MAX_SCORE)
                    } else {
                        p
                    },
                ))
            })
            .collect(),
    )?;
    write_text(output, &predictions_tsv(&preds, out.header))?;
    Ok(preds)
}

pub fn predictions_tsv(preds: &[(String, f64)], header: bool) -> String {
    let mut out = String::with_capacity(16 + preds.len() * 24);
    if header {
        out.push_str(PREDICTIONS_HEADER);
        out.push('\n');
    }
    for (id, p) in preds {
        out.push_str(id);
        out.push('\t');
        out.push_str(&p.to_string());
        out.push('\n');
    }
    out
}

/// Reads an `id<TAB>prediction` file (header optional).
pub fn read_predictions(path: &Path) -> CliResult<HashMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || (line_no == 1 && line == PREDICTIONS_HEADER) {
            continue;
        }
        let (id, value) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(line_no, "expected id<TAB>prediction".into()))?;
        let p: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad prediction {value:?}")))?;
        if !p.is_finite() {
            return Err(parse_err(line_no, format!("non-finite prediction {value:?}")).into());
        }
        if out.insert(id.to_string(), p).is_some() {
            return Err(parse_err(line_no, format!("duplicate id {id:?}")).into());
        }
    }
    Ok(out)
}

pub const REPORT_TSV: &str = "report.tsv";
pub const REPORT_TXT: &str = "report.txt";
pub const DISPARITY_TSV: &str = "disparity.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub reports: Vec<(String, EvalReport)>,
    /// Present when more than one system was scored.
    pub disparity: Option<DisparityReport>,
}

impl Evaluation {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system\tgroup\tn\tpearson\n");
        for (name, report) in &self.reports {
            for line in report.to_tsv().lines().skip(1) {
                out.push_str(name);
                out.push('\t');
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (name, report) in &self.reports {
            out.push_str(&format!("== {name} ==\n"));
            out.push_str(&report.to_table());
            out.push('\n');
        }
        if let Some(d) = &self.disparity {
            out.push_str("== ranking (ALL vs AVG, * = inverted) ==\n");
            out.push_str(&d.to_table());
        }
        out
    }
}

/// Scores each named prediction file against the gold set. With an output
/// directory, writes `report.tsv`, `report.txt` and (for several systems)
/// `disparity.tsv`.
pub fn cmd_evaluate(
    systems: &[(String, PathBuf)],
    gold: &Path,
    group_by: GroupBy,
    out_dir: Option<&Path>,
    out: OutputOptions,
) -> CliResult<Evaluation> {
    if systems.is_empty() {
        return Err(CliError::Usage("no prediction files given".into()));
    }
    let mut names: Vec<&str> = systems.iter().map(|(n, _)| n.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("system names must be distinct".into()));
    }
    let gold = read(gold)?;
    let mut reports = Vec::with_capacity(systems.len());
    for (name, path) in systems {
        let preds = read_predictions(path)?;
        reports.push((name.clone(), evaluate(&preds, &gold, group_by)?));
    }
    let disparity = if reports.len() > 1 {
        Some(disparity_report(&reports)?)
    } else {
        None
    };
    let eval = Evaluation { reports, disparity };
    if let Some(dir) = out_dir {
        claim_output(dir, out.force)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(&dir.join(REPORT_TSV), &eval.to_tsv())?;
        write_text(&dir.join(REPORT_TXT), &eval.to_table())?;
        if let Some(d) = &eval.disparity {
            write_text(&dir.join(DISPARITY_TSV), &d.to_tsv())?;
        }
    }
    Ok(eval)
}

/// `name=path` or a bare path (named after its file stem).
pub fn parse_system(arg: &str) -> CliResult<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        Some(_) => Err(CliError::Usage(format!("bad system spec {arg:?}"))),
        None => {
            let path = PathBuf::from(arg);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| CliError::Usage(format!("bad prediction path {arg:?}")))?;
            Ok((name, path))
        }
    }
}
