use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use earkd_core::dataset::{
    load_hypnogram, load_recording_container, synth_electrode_subject, write_hypnogram,
    write_recording_container, StageLabel, SynthConfig,
};
use earkd_core::evaluation::{
    embed_2d, extract_features, fold_configs, predict, EmbedMethod, FeatureSet, MetricsReport,
};
use earkd_core::models::{load_checkpoint, save_checkpoint, Arch, ModelConfig};
use earkd_core::preprocess::preprocess_subject;
use earkd_core::training::{loss_csv, run_strategy, Domain, PairedSet, Strategy, TrainConfig};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::layout::*;

/// Model and optimiser settings read by `train`, as TOML with `[model]` and
/// `[train]` tables. Missing keys take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_config(path)?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| earkd_core::Error::InvalidConfig(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> CliResult<String> {
    if !path.is_file() {
        return Err(CliError::ConfigNotFound(path.to_path_buf()));
    }
    read_file(path)
}

/// What a command did, for the run manifest.
pub struct Outcome {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub manifest_path: PathBuf,
}

pub fn synth(config: Option<&Path>, out: &Path, seed: u64) -> CliResult<Outcome> {
    let cfg = match config {
        Some(p) => SynthConfig::from_toml_str(&read_config(p)?)?,
        None => SynthConfig::default(),
    };
    cfg.validate()?;
    create_dir(out)?;
    let mut outputs = Vec::new();
    for index in 0..cfg.n_subjects {
        let subject = synth_electrode_subject(&cfg, seed, index)?;
        let dir = out.join(&subject.subject_id);
        write_recording_container(&dir.join(SCALP_DIR), &subject.scalp)?;
        write_recording_container(&dir.join(EAR_DIR), &subject.ear)?;
        write_hypnogram(&dir.join(HYPNOGRAM_FILE), &subject.hypnogram)?;
        outputs.push(dir);
    }
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        seed: Some(seed),
        inputs: config.map(Path::to_path_buf).into_iter().collect(),
        outputs,
        manifest_path: out.join(crate::manifest::MANIFEST_NAME),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RejectedRecording {
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub subjects: Vec<String>,
    pub rejected_recordings: Vec<RejectedRecording>,
}

pub fn preprocess(input: &Path, out: &Path) -> CliResult<Outcome> {
    let subjects = subject_dirs(input)?;
    create_dir(out)?;
    let mut summary = PreprocessSummary {
        subjects: Vec::new(),
        rejected_recordings: Vec::new(),
    };
    let mut outputs = Vec::new();
    for (id, dir) in &subjects {
        let scalp = load_recording_container(&dir.join(SCALP_DIR))?;
        let ear = load_recording_container(&dir.join(EAR_DIR))?;
        let hypnogram = load_hypnogram(&dir.join(HYPNOGRAM_FILE))?;
        let target = out.join(id);
        create_dir(&target)?;
        match preprocess_subject(&scalp, &ear) {
            Ok(p) => {
                write_recording_container(&target.join(SCALP_DIR), p.scalp.recording())?;
                write_recording_container(&target.join(EAR_DIR), p.ear.recording())?;
                write_hypnogram(&target.join(HYPNOGRAM_FILE), &hypnogram)?;
                write_json(&target.join(REJECTION_FILE), &p.report)?;
                summary.subjects.push(id.clone());
            }
            Err((earkd_core::Error::RecordingRejected(reason), report)) => {
                if let Some(report) = report {
                    write_json(&target.join(REJECTION_FILE), &report)?;
                }
                summary.rejected_recordings.push(RejectedRecording {
                    subject: id.clone(),
                    reason,
                });
            }
            Err((e, _)) => return Err(e.into()),
        }
        outputs.push(target);
    }
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    outputs.push(out.join(SUMMARY_FILE));
    Ok(Outcome {
        config: serde_json::json!({ "band_hz": earkd_core::signal::PREPROCESS_BAND }),
        seed: None,
        inputs: vec![input.to_path_buf()],
        outputs,
        manifest_path: out.join(crate::manifest::MANIFEST_NAME),
    })
}

pub struct TrainArgs<'a> {
    pub strategy: &'a str,
    pub arch: Option<&'a str>,
    pub data: &'a Path,
    pub fold: usize,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub teacher: Option<&'a Path>,
    pub seed: Option<u64>,
}

pub fn parse_strategy(s: &str) -> CliResult<Strategy> {
    s.parse().map_err(|_| {
        let known: Vec<&str> = Strategy::ALL.iter().map(|s| s.as_str()).collect();
        CliError::Usage(format!("unknown strategy {s:?}, expected one of {}", known.join(", ")))
    })
}

fn checkpoint_meta(
    strategy: Strategy,
    domain: Domain,
    fold: usize,
    test_subject: &str,
) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("strategy".to_string(), strategy.as_str().to_string()),
        ("domain".to_string(), domain.as_str().to_string()),
        ("fold".to_string(), fold.to_string()),
        ("test_subject".to_string(), test_subject.to_string()),
    ])
}

pub fn train(args: &TrainArgs) -> CliResult<Outcome> {
    let strategy = parse_strategy(args.strategy)?;
    if strategy == Strategy::KdOffline && args.teacher.is_none() {
        return Err(CliError::Usage(
            "kd-offline needs a frozen scalp teacher: pass --teacher <checkpoint>".into(),
        ));
    }
    let mut cfg = match args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(arch) = args.arch {
        cfg.model.arch = arch
            .parse::<Arch>()
            .map_err(|_| CliError::Usage(format!("unknown arch {arch:?}, expected cnn or transformer")))?;
    }
    if let Some(seed) = args.seed {
        cfg.model.seed = seed;
        cfg.train.seed = seed;
    }

    let data = FoldData::open(args.data, args.fold)?;
    let train_subjects = data.train_subjects()?;
    let first = train_subjects
        .iter()
        .flat_map(|s| s.epochs.first())
        .next()
        .ok_or(earkd_core::Error::EmptyDataset)?;
    cfg.model.epoch_samples = first.scalp.num_samples();
    cfg.model.in_channels = first.scalp.num_channels();
    cfg.model.validate()?;
    let refs: Vec<_> = train_subjects.iter().collect();
    let paired = PairedSet::<f32>::from_subjects(&refs)?;
    drop(train_subjects);

    let teacher = match args.teacher {
        Some(p) => {
            let ck = load_checkpoint::<f32>(p)?;
            let tc = ck.model.config();
            if tc.epoch_samples != cfg.model.epoch_samples || tc.in_channels != cfg.model.in_channels {
                return Err(earkd_core::Error::CheckpointMismatch(format!(
                    "teacher expects {}x{} epochs, data has {}x{}",
                    tc.epoch_samples, tc.in_channels, cfg.model.epoch_samples, cfg.model.in_channels
                ))
                .into());
            }
            Some(ck.model)
        }
        None => None,
    };
    let (model_cfg, train_cfg) = fold_configs(&cfg.model, &cfg.train, args.fold);
    let use_teacher = if strategy == Strategy::KdOffline { teacher.as_ref() } else { None };
    let result = run_strategy(strategy, &model_cfg, &paired, &train_cfg, use_teacher)?;

    create_dir(args.out)?;
    let test = &data.fold.test_subject;
    let ckpt = args.out.join(CHECKPOINT_FILE);
    save_checkpoint(
        &result.model,
        &checkpoint_meta(strategy, strategy.eval_domain(), args.fold, test),
        &ckpt,
    )?;
    let loss = args.out.join(LOSS_FILE);
    write_file(&loss, loss_csv(&result.loss_trace, result.teacher_trace.as_deref()))?;
    let mut outputs = vec![ckpt, loss];
    if matches!(strategy, Strategy::KdOnline | Strategy::Transfer) {
        if let Some(t) = &result.teacher {
            let path = args.out.join(TEACHER_CHECKPOINT_FILE);
            save_checkpoint(t, &checkpoint_meta(strategy, Domain::Scalp, args.fold, test), &path)?;
            outputs.push(path);
        }
    }

    let mut inputs: Vec<PathBuf> = data
        .fold
        .train_subjects
        .iter()
        .map(|id| data.dir_of(id))
        .collect();
    inputs.extend(args.config.map(Path::to_path_buf));
    inputs.extend(args.teacher.map(Path::to_path_buf));
    Ok(Outcome {
        config: serde_json::json!({
            "strategy": strategy.as_str(),
            "fold": args.fold,
            "test_subject": test,
            "train_subjects": data.fold.train_subjects,
            "model": model_cfg,
            "train": train_cfg,
        }),
        seed: Some(cfg.train.seed),
        inputs,
        outputs,
        manifest_path: args.out.join(crate::manifest::MANIFEST_NAME),
    })
}

pub fn evaluate(checkpoint: &Path, data_dir: &Path, fold: usize, out: &Path) -> CliResult<Outcome> {
    let ck = load_checkpoint::<f32>(checkpoint)?;
    let domain: Domain = match ck.meta.get("domain") {
        Some(d) => d.parse()?,
        None => Domain::Ear,
    };
    let data = FoldData::open(data_dir, fold)?;
    let subject = data.test_subject()?;
    let set = PairedSet::<f32>::from_subjects(&[&subject])?;
    let epochs = set.domain(domain);
    let cfg = ck.model.config();
    if epochs.epoch_samples() != cfg.epoch_samples || epochs.channels() != cfg.in_channels {
        return Err(earkd_core::Error::CheckpointMismatch(format!(
            "checkpoint expects {}x{} epochs, data has {}x{}",
            cfg.epoch_samples,
            cfg.in_channels,
            epochs.epoch_samples(),
            epochs.channels()
        ))
        .into());
    }
    let preds = predict(&ck.model, epochs);
    let report = MetricsReport::from_predictions(&preds, epochs.labels())?;

    create_dir(out)?;
    let metrics = out.join(METRICS_FILE);
    write_file(&metrics, report.to_json()?)?;
    let confusion = out.join(CONFUSION_FILE);
    write_file(&confusion, report.confusion.to_csv())?;
    let features = out.join(FEATURES_FILE);
    write_file(&features, features_csv(&extract_features(&ck.model, epochs, domain)?))?;

    let strategy = ck.meta.get("strategy").cloned().unwrap_or_default();
    Ok(Outcome {
        config: serde_json::json!({
            "strategy": strategy,
            "arch": cfg.arch.to_string(),
            "domain": domain.as_str(),
            "fold": fold,
            "test_subject": data.fold.test_subject,
            "checkpoint_meta": ck.meta,
        }),
        seed: Some(cfg.seed),
        inputs: vec![checkpoint.to_path_buf(), data.dir_of(&data.fold.test_subject)],
        outputs: vec![metrics, confusion, features],
        manifest_path: out.join(crate::manifest::MANIFEST_NAME),
    })
}

/// `stage,domain,f0,f1,...` with one row per epoch.
pub fn features_csv(set: &FeatureSet) -> String {
    let d = set.features.ncols();
    let mut out = String::from("stage,domain");
    for j in 0..d {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for (i, row) in set.features.rows().into_iter().enumerate() {
        let stage = StageLabel::from_code(set.labels[i]).map(|s| s.token()).unwrap_or("?");
        let _ = write!(out, "{stage},{}", set.domains[i].as_str());
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_features_csv(text: &str) -> CliResult<FeatureSet> {
    let bad = |line: usize, what: &str| {
        earkd_core::Error::ShapeError(format!("features line {}: {what}", line + 1))
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(0, "missing header"))?;
    let d = header.split(',').count().saturating_sub(2);
    let (mut values, mut labels, mut domains) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        let stage: StageLabel = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(i + 1, "bad stage"))?;
        let domain: Domain = fields
            .next()
            .ok_or_else(|| bad(i + 1, "missing domain"))?
            .parse()?;
        let row: Vec<f64> = fields
            .map(|v| v.parse::<f64>().map_err(|_| bad(i + 1, "bad value")))
            .collect::<Result<_, _>>()?;
        if row.len() != d {
            return Err(bad(i + 1, "wrong column count").into());
        }
        values.extend(row);
        labels.push(stage.code());
        domains.push(domain);
    }
    let features = Array2::from_shape_vec((labels.len(), d), values)
        .map_err(|e| earkd_core::Error::ShapeError(e.to_string()))?;
    Ok(FeatureSet {
        features,
        labels,
        domains,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub architecture: String,
    pub modality: String,
    pub method: String,
    pub strategy: String,
    pub runs: usize,
    pub n_epochs: u64,
    pub accuracy: f64,
    pub kappa: f64,
}

fn modality(domain: &str) -> &'static str {
    if domain == "scalp" {
        "Scalp-EEG"
    } else {
        "Ear-EEG"
    }
}

fn arch_label(arch: &str) -> String {
    match arch {
        "cnn" => "CNN".into(),
        "transformer" => "Transformer".into(),
        other => other.into(),
    }
}

/// One row per (architecture, strategy), pooling the confusion matrices of
/// every run in the group.
pub fn report_rows(runs: &[PathBuf]) -> CliResult<Vec<ReportRow>> {
    let mut groups: BTreeMap<(String, usize, String), (String, MetricsReport, usize)> = BTreeMap::new();
    for run in runs {
        let manifest = crate::manifest::RunManifest::load(&run.join(crate::manifest::MANIFEST_NAME))?;
        let metrics: MetricsReport = serde_json::from_str(&read_file(&run.join(METRICS_FILE))?)?;
        let field = |k: &str| manifest.config.get(k).and_then(|v| v.as_str()).unwrap_or("").to_string();
        let strategy = parse_strategy(&field("strategy"))
            .map_err(|_| CliError::Usage(format!("{} is not an evaluation run", run.display())))?;
        let rank = Strategy::ALL.iter().position(|s| *s == strategy).unwrap_or(usize::MAX);
        let key = (field("arch"), rank, strategy.as_str().to_string());
        match groups.get_mut(&key) {
            Some((_, pooled, n)) => {
                let mut cm = pooled.confusion;
                cm.add(&metrics.confusion);
                *pooled = MetricsReport::from_confusion(&cm)?;
                *n += 1;
            }
            None => {
                groups.insert(key, (field("domain"), metrics, 1));
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((arch, _, strategy), (domain, m, runs))| ReportRow {
            architecture: arch_label(&arch),
            modality: modality(&domain).to_string(),
            method: parse_strategy(&strategy).map(|s| s.method()).unwrap_or("").to_string(),
            strategy,
            runs,
            n_epochs: m.n_epochs,
            accuracy: m.accuracy,
            kappa: m.kappa,
        })
        .collect())
}

pub fn rows_markdown(rows: &[ReportRow]) -> String {
    let mut out = String::from("| Architecture | Modality | Method | ACC | κ |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2} | {:.3} |",
            r.architecture,
            r.modality,
            r.method,
            100.0 * r.accuracy,
            r.kappa
        );
    }
    out
}

pub fn rows_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("architecture,modality,method,strategy,runs,n_epochs,acc,kappa\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.architecture, r.modality, r.method, r.strategy, r.runs, r.n_epochs, r.accuracy, r.kappa
        );
    }
    out
}

pub struct ReportArgs<'a> {
    pub runs: &'a [PathBuf],
    pub out: &'a Path,
    pub svg: Option<&'a Path>,
    pub embed: EmbedMethod,
    pub seed: u64,
}

pub fn report(args: &ReportArgs) -> CliResult<Outcome> {
    if args.runs.is_empty() {
        return Err(CliError::Usage("report needs at least one --runs directory".into()));
    }
    let rows = report_rows(args.runs)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_file(args.out, rows_markdown(&rows))?;
    let csv = args.out.with_extension("csv");
    write_file(&csv, rows_csv(&rows))?;
    let mut outputs = vec![args.out.to_path_buf(), csv];
    if let Some(svg) = args.svg {
        let parts: Vec<FeatureSet> = args
            .runs
            .iter()
            .map(|r| parse_features_csv(&read_file(&r.join(FEATURES_FILE))?))
            .collect::<CliResult<_>>()?;
        let export = embed_2d(&FeatureSet::concat(&parts)?, args.embed, args.seed)?;
        write_file(svg, export.to_svg("Feature distribution"))?;
        let points = svg.with_extension("csv");
        write_file(&points, export.to_csv())?;
        outputs.push(svg.to_path_buf());
        outputs.push(points);
    }
    let stem = args.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Outcome {
        config: serde_json::json!({
            "embed": match args.embed { EmbedMethod::Pca => "pca", EmbedMethod::Sne => "sne" },
        }),
        seed: Some(args.seed),
        inputs: args.runs.to_vec(),
        outputs,
        manifest_path: args.out.with_file_name(format!("{stem}.manifest.json")),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

