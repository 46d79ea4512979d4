//! Stage orchestration: synth -> features -> train -> curate -> refine ->
//! attrib -> report, all file-based and deterministic for a given resolved
//! config.

mod config;

pub use config::{
    AttribSection, CorruptionSection, FeatureSection, PipelineConfig, PipelineSection,
    RefineSection, RescoreSection, Stage, TrainSection,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attrib::{permutation_importance, shapley_for_model, ImportanceMetric};
use crate::curate::{
    class_thresholds, confidence_scores, confident_joint, flag_label_issues,
    flag_low_confidence, margin_confidence, prune_training_set, refine_iteratively, apply_map,
    ClassScheme, CurationReport, MarginReport, MarginStatus, PointFlag, RefineParams,
    StepSummary,
};
use crate::error::{Error, Result};
use crate::eval::{lopo_evaluate, rescoring_study, ConfusionMatrix, RescoreReport};
use crate::features::{extract_feature_matrix, FeatureMatrix};
use crate::io::{
    read_features_csv, read_posteriors_csv, read_stamped_json, read_waveforms_csv, write_confidence_histogram_csv,
    write_features_csv, write_matrix_csv, write_posteriors_csv, write_stamped_json,
    write_waveforms_csv, Provenance,
};
use crate::model::{select_baseline, train, ModelKind, TrainData};
use crate::rng::{derive_seed, rng_for, stage as seed_stage};
use crate::sim::{
    inject_label_noise, synth_dataset, CorruptionLog, DatasetIndex, DatasetManifest,
};

pub mod files {
    pub const MANIFEST: &str = "manifest.json";
    pub const CORRUPTION_LOG: &str = "corruption_log.json";
    pub const WAVEFORMS: &str = "waveforms.csv";
    pub const FEATURES: &str = "features.csv";
    pub const BASELINE: &str = "baseline.json";
    pub const BASELINE_POSTERIORS: &str = "posteriors_baseline.csv";
    pub const CURATION_REPORT: &str = "curation_report.json";
    pub const CONFIDENT_JOINT: &str = "confident_joint.csv";
    pub const METRICS_REPORT: &str = "metrics_report.json";
    pub const ATTRIBUTION: &str = "attribution.csv";
    pub const ATTRIBUTION_TOPK: &str = "attribution_topk.json";
    pub const PERMUTATION_IMPORTANCE: &str = "permutation_importance.csv";
    pub const SUMMARY: &str = "summary.txt";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub kind: ModelKind,
    pub accuracy: f64,
    pub per_class_auc: Vec<f64>,
    pub mean_auc: f64,
    pub selection_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub candidates: Vec<CandidateReport>,
    pub winner: ModelKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetrics {
    pub scheme: Vec<String>,
    pub n_classes: usize,
    pub merged: Option<String>,
    pub accepted: bool,
    pub accuracy: f64,
    pub per_class_auc: Vec<f64>,
    pub fold_accuracy: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub mean_confidence: f64,
    pub lc_point_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedMetrics {
    pub removed: usize,
    pub accuracy: f64,
    pub per_class_auc: Vec<f64>,
    pub fold_accuracy: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_kind: ModelKind,
    pub steps: Vec<SchemeMetrics>,
    pub final_scheme: ClassScheme,
    pub pruned: PrunedMetrics,
    pub rescoring: RescoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRow {
    pub class: String,
    pub feature: String,
    pub mean_abs_attribution: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAttribution {
    pub point_id: String,
    pub class: String,
    pub prediction: f64,
    pub baseline: f64,
    pub values: Vec<f64>,
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
    prov: Provenance,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, stage: Stage) -> Result<PathBuf> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::StageDependency {
                stage: stage.name().to_string(),
                artifact: name.to_string(),
            });
        }
        Ok(path)
    }

    fn seed(&self) -> u64 {
        self.config.pipeline.seed
    }
}

/// Run the configured stages in canonical order against an output directory.
/// Returns the paths written. Rerunning with the same resolved config
/// produces byte-identical files.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let ctx = Ctx {
        config,
        out: out_dir,
        prov: Provenance { config_sha256: config.sha256(), seed: config.pipeline.seed },
    };
    let mut written = Vec::new();
    for stage in config.ordered_stages() {
        let paths = match stage {
            Stage::Synth => stage_synth(&ctx)?,
            Stage::Features => stage_features(&ctx)?,
            Stage::Train => stage_train(&ctx)?,
            Stage::Curate => stage_curate(&ctx)?,
            Stage::Refine => stage_refine(&ctx)?,
            Stage::Attrib => stage_attrib(&ctx)?,
            Stage::Report => stage_report(&ctx)?,
        };
        written.extend(paths);
    }
    Ok(written)
}

fn stage_synth(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let dataset = synth_dataset(&ctx.config.sim, derive_seed(ctx.seed(), &[seed_stage::SYNTH]))?;
    let (manifest, log) = if ctx.config.corruption.rate > 0.0 {
        inject_label_noise(
            &dataset.manifest,
            ctx.config.corruption.rate,
            ctx.config.corruption.mode,
            derive_seed(ctx.seed(), &[seed_stage::CORRUPT]),
        )?
    } else {
        (dataset.manifest.clone(), CorruptionLog::default())
    };

    let manifest_path = ctx.path(files::MANIFEST);
    write_stamped_json(&manifest_path, &ctx.prov, &manifest)?;
    let log_path = ctx.path(files::CORRUPTION_LOG);
    write_stamped_json(&log_path, &ctx.prov, &log)?;
    let wave_path = ctx.path(files::WAVEFORMS);
    write_waveforms_csv(&wave_path, &ctx.prov, &manifest, &dataset.waveforms)?;
    Ok(vec![manifest_path, log_path, wave_path])
}

fn load_manifest(ctx: &Ctx<'_>, stage: Stage) -> Result<DatasetManifest> {
    let path = ctx.require(files::MANIFEST, stage)?;
    Ok(read_stamped_json::<DatasetManifest>(&path)?.payload)
}

fn stage_features(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(ctx, Stage::Features)?;
    let wave_path = ctx.require(files::WAVEFORMS, Stage::Features)?;
    let waveforms = read_waveforms_csv(&wave_path, &manifest)?;
    let schema = ctx.config.features.schema();
    let features = extract_feature_matrix(
        &waveforms,
        manifest.acquisition.dt_ns,
        manifest.acquisition.irf_fwhm_ns,
        ctx.config.features.alpha,
        &schema,
    )?;
    let path = ctx.path(files::FEATURES);
    write_features_csv(&path, &ctx.prov, &manifest, &features)?;
    Ok(vec![path])
}

fn load_features(ctx: &Ctx<'_>, manifest: &DatasetManifest, stage: Stage) -> Result<FeatureMatrix> {
    let path = ctx.require(files::FEATURES, stage)?;
    read_features_csv(&path, manifest)
}

fn stage_train(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(ctx, Stage::Train)?;
    let features = load_features(ctx, &manifest, Stage::Train)?;
    let index = DatasetIndex::from_manifest(&manifest);
    let labels = index.point_labels();
    let n_classes = manifest.n_classes();

    let mut candidates = Vec::new();
    let mut outcomes = Vec::new();
    for (k, &kind) in ctx.config.train.kinds.iter().enumerate() {
        let outcome = lopo_evaluate(
            &features,
            &labels,
            &index,
            n_classes,
            kind,
            &ctx.config.train.zoo,
            derive_seed(ctx.seed(), &[seed_stage::TRAIN, k as u64]),
            None,
        )?;
        candidates.push((kind, outcome.pooled.clone()));
        outcomes.push(outcome);
    }
    let winner = select_baseline(&candidates)?;
    let winner_index =
        ctx.config.train.kinds.iter().position(|&k| k == winner).expect("winner in kinds");

    let report = BaselineReport {
        candidates: candidates
            .iter()
            .map(|(kind, m)| CandidateReport {
                kind: *kind,
                accuracy: m.accuracy,
                per_class_auc: m.per_class_auc.clone(),
                mean_auc: m.mean_auc(),
                selection_score: m.selection_score(),
            })
            .collect(),
        winner,
    };
    let baseline_path = ctx.path(files::BASELINE);
    write_stamped_json(&baseline_path, &ctx.prov, &report)?;
    let posterior_path = ctx.path(files::BASELINE_POSTERIORS);
    write_posteriors_csv(
        &posterior_path,
        &ctx.prov,
        &index.point_ids,
        &manifest.class_names,
        &outcomes[winner_index].posteriors,
    )?;
    Ok(vec![baseline_path, posterior_path])
}

fn stage_curate(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(ctx, Stage::Curate)?;
    let index = DatasetIndex::from_manifest(&manifest);
    let posterior_path = ctx.require(files::BASELINE_POSTERIORS, Stage::Curate)?;
    let (ids, posteriors) = read_posteriors_csv(&posterior_path)?;
    if ids != index.point_ids {
        return Err(Error::Input(
            "posterior point ids do not match the manifest order".into(),
        ));
    }
    let labels = index.point_labels();

    let cs = confidence_scores(&posteriors)?;
    let mcs = margin_confidence(&cs, &index.point_margin, index.n_margins())?;
    let tau = class_thresholds(&posteriors, &labels, ctx.config.curation.threshold_mode)?;
    let joint = confident_joint(&posteriors, &labels, &tau)?;
    let lc = flag_low_confidence(&posteriors, &labels, &tau)?;
    let margin_flags =
        flag_label_issues(&lc, &index.point_margin, index.n_margins(), &ctx.config.curation)?;

    let report = CurationReport {
        class_names: manifest.class_names.clone(),
        thresholds: tau,
        confident_joint: joint.clone(),
        points: index
            .point_ids
            .iter()
            .enumerate()
            .map(|(k, id)| PointFlag {
                point_id: id.clone(),
                confidence: cs[k],
                low_confidence: lc[k],
            })
            .collect(),
        margins: index
            .margin_ids
            .iter()
            .enumerate()
            .map(|(m, id)| MarginReport {
                margin_id: id.clone(),
                mcs: mcs[m],
                lc_fraction: margin_flags.lc_fraction[m],
                status: margin_flags.status[m],
            })
            .collect(),
        scheme_history: Vec::new(),
        final_scheme: None,
        final_low_confidence: None,
        pruned_accuracy: None,
        pruned_removed: None,
    };
    let report_path = ctx.path(files::CURATION_REPORT);
    write_stamped_json(&report_path, &ctx.prov, &report)?;
    let joint_path = ctx.path(files::CONFIDENT_JOINT);
    write_matrix_csv(&joint_path, &ctx.prov, &manifest.class_names, &joint.counts)?;
    Ok(vec![report_path, joint_path])
}

fn refine_model_kind(ctx: &Ctx<'_>) -> Result<ModelKind> {
    if let Some(kind) = ctx.config.refine.model {
        return Ok(kind);
    }
    let path = ctx.require(files::BASELINE, Stage::Refine)?;
    Ok(read_stamped_json::<BaselineReport>(&path)?.payload.winner)
}

fn stage_refine(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(ctx, Stage::Refine)?;
    let features = load_features(ctx, &manifest, Stage::Refine)?;
    let index = DatasetIndex::from_manifest(&manifest);
    let kind = refine_model_kind(ctx)?;
    let report_path = ctx.require(files::CURATION_REPORT, Stage::Refine)?;
    let mut curation_report = read_stamped_json::<CurationReport>(&report_path)?.payload;
    let log_path = ctx.require(files::CORRUPTION_LOG, Stage::Refine)?;
    let log = read_stamped_json::<CorruptionLog>(&log_path)?.payload;

    let params = RefineParams {
        policy: ctx.config.refine.policy.clone(),
        curation: ctx.config.curation,
    };
    let start = ClassScheme::identity(manifest.class_names.clone());
    let outcome = refine_iteratively(
        &features,
        &index,
        &start,
        kind,
        &ctx.config.train.zoo,
        &params,
        derive_seed(ctx.seed(), &[seed_stage::REFINE]),
    )?;

    // Re-scoring study: groups from the curation report, agreement measured
    // against the pruned model's final-scheme predictions.
    let statuses: Vec<MarginStatus> = curation_report.margins.iter().map(|m| m.status).collect();
    let predictions = outcome.pruned_posteriors.predicted_labels();
    let rescoring = rescoring_study(
        &index,
        &statuses,
        &log,
        &predictions,
        &outcome.final_scheme.map,
        ctx.config.rescore.policy,
        derive_seed(ctx.seed(), &[seed_stage::RESCORE]),
    )?;

    let mut written = Vec::new();
    for (i, step) in outcome.steps.iter().enumerate() {
        let tag = format!("step{}_{}class", i, step.scheme.n_classes());
        let confusion_path = ctx.path(&format!("confusion_{tag}.csv"));
        write_matrix_csv(&confusion_path, &ctx.prov, &step.scheme.names, &step.confusion.counts)?;
        written.push(confusion_path);
        let hist_path = ctx.path(&format!("confidence_hist_{tag}.csv"));
        write_confidence_histogram_csv(
            &hist_path,
            &ctx.prov,
            &step.scheme.names,
            &step.confidence_scores,
            &step.labels,
            20,
        )?;
        written.push(hist_path);
    }
    let pruned_confusion_path = ctx.path(&format!(
        "confusion_pruned_{}class.csv",
        outcome.final_scheme.n_classes()
    ));
    write_matrix_csv(
        &pruned_confusion_path,
        &ctx.prov,
        &outcome.final_scheme.names,
        &outcome.pruned_confusion.counts,
    )?;
    written.push(pruned_confusion_path);

    let metrics = MetricsReport {
        model_kind: kind,
        steps: outcome
            .steps
            .iter()
            .map(|s| SchemeMetrics {
                scheme: s.scheme.names.clone(),
                n_classes: s.scheme.n_classes(),
                merged: s.merged.clone(),
                accepted: s.accepted,
                accuracy: s.metrics.accuracy,
                per_class_auc: s.metrics.per_class_auc.clone(),
                fold_accuracy: s.fold_accuracy.clone(),
                confusion: s.confusion.clone(),
                mean_confidence: s.mean_confidence,
                lc_point_fraction: s.lc_point_fraction,
            })
            .collect(),
        final_scheme: outcome.final_scheme.clone(),
        pruned: PrunedMetrics {
            removed: outcome.pruned_removed,
            accuracy: outcome.pruned_metrics.accuracy,
            per_class_auc: outcome.pruned_metrics.per_class_auc.clone(),
            fold_accuracy: outcome.pruned_fold_accuracy.clone(),
            confusion: outcome.pruned_confusion.clone(),
        },
        rescoring,
    };
    let metrics_path = ctx.path(files::METRICS_REPORT);
    write_stamped_json(&metrics_path, &ctx.prov, &metrics)?;
    written.push(metrics_path);

    // Fold the trajectory back into the curation report.
    curation_report.scheme_history =
        outcome.steps.iter().map(StepSummary::from_step).collect();
    curation_report.final_scheme = Some(outcome.final_scheme.clone());
    curation_report.final_low_confidence = Some(outcome.final_lc.clone());
    curation_report.pruned_accuracy = Some(outcome.pruned_metrics.accuracy);
    curation_report.pruned_removed = Some(outcome.pruned_removed);
    write_stamped_json(&report_path, &ctx.prov, &curation_report)?;
    written.push(report_path);
    Ok(written)
}

fn stage_attrib(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let manifest = load_manifest(ctx, Stage::Attrib)?;
    let features = load_features(ctx, &manifest, Stage::Attrib)?;
    let index = DatasetIndex::from_manifest(&manifest);
    let report_path = ctx.require(files::CURATION_REPORT, Stage::Attrib)?;
    let curation_report = read_stamped_json::<CurationReport>(&report_path)?.payload;
    let scheme = curation_report.final_scheme.clone().ok_or(Error::StageDependency {
        stage: Stage::Attrib.name().to_string(),
        artifact: "curation_report.json: final_scheme (run the refine stage)".to_string(),
    })?;
    let lc = curation_report.final_low_confidence.clone().ok_or(Error::StageDependency {
        stage: Stage::Attrib.name().to_string(),
        artifact: "curation_report.json: final_low_confidence".to_string(),
    })?;
    let kind = refine_model_kind(ctx)?;

    // Final curated model: all points minus LC flags, final scheme labels.
    let labels = apply_map(&index.point_labels(), &scheme.map);
    let all_rows: Vec<usize> = (0..features.n_rows).collect();
    let kept = prune_training_set(&all_rows, &lc, &labels, &scheme.names)?;
    let x_train = features.select_rows(&kept);
    let y_train: Vec<usize> = kept.iter().map(|&r| labels[r]).collect();
    let g_train: Vec<usize> = kept.iter().map(|&r| index.point_patient[r]).collect();
    let model = train(
        kind,
        &TrainData {
            x: &x_train,
            labels: &y_train,
            groups: &g_train,
            n_classes: scheme.n_classes(),
        },
        &ctx.config.train.zoo,
        derive_seed(ctx.seed(), &[seed_stage::ATTRIB, 0]),
    )?;

    // Stratified background from the curated training points.
    let background = {
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); scheme.n_classes()];
        for &r in &kept {
            per_class[labels[r]].push(r);
        }
        let mut rng = rng_for(derive_seed(ctx.seed(), &[seed_stage::ATTRIB, 1]), &[]);
        use rand::seq::SliceRandom;
        for list in &mut per_class {
            list.shuffle(&mut rng);
        }
        let mut rows = Vec::new();
        let mut cursor = vec![0usize; scheme.n_classes()];
        'outer: loop {
            let mut advanced = false;
            for c in 0..scheme.n_classes() {
                if rows.len() >= ctx.config.attrib.background_size {
                    break 'outer;
                }
                if cursor[c] < per_class[c].len() {
                    rows.push(per_class[c][cursor[c]]);
                    cursor[c] += 1;
                    advanced = true;
                }
            }
            if !advanced {
                break;
            }
        }
        rows.sort_unstable();
        features.select_rows(&rows)
    };

    // Per-class attribution over sampled instances of that class.
    let mut rows_csv: Vec<AttributionRow> = Vec::new();
    let mut top_instances: Vec<InstanceAttribution> = Vec::new();
    for c in 0..scheme.n_classes() {
        let mut pool: Vec<usize> = (0..features.n_rows).filter(|&r| labels[r] == c).collect();
        let mut rng = rng_for(derive_seed(ctx.seed(), &[seed_stage::ATTRIB, 2, c as u64]), &[]);
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
        pool.truncate(ctx.config.attrib.instances_per_class);
        pool.sort_unstable();

        let mut mean_abs = vec![0.0; features.n_cols];
        let mut per_instance: Vec<(usize, crate::attrib::AttributionResult)> = Vec::new();
        for &r in &pool {
            let result = shapley_for_model(
                &model,
                &background,
                features.row(r),
                c,
                ctx.config.attrib.scale,
                ctx.config.attrib.n_permutations,
                derive_seed(ctx.seed(), &[seed_stage::ATTRIB, 3, r as u64]),
            )?;
            for (acc, v) in mean_abs.iter_mut().zip(&result.values) {
                *acc += v.abs();
            }
            per_instance.push((r, result));
        }
        if !pool.is_empty() {
            for acc in &mut mean_abs {
                *acc /= pool.len() as f64;
            }
        }

        let mut order: Vec<usize> = (0..features.n_cols).collect();
        order.sort_by(|&a, &b| {
            mean_abs[b].partial_cmp(&mean_abs[a]).unwrap().then(a.cmp(&b))
        });
        for (rank, &j) in order.iter().enumerate() {
            rows_csv.push(AttributionRow {
                class: scheme.names[c].clone(),
                feature: features.names[j].clone(),
                mean_abs_attribution: mean_abs[j],
                rank: rank + 1,
            });
        }

        per_instance.sort_by(|(ra, a), (rb, b)| {
            let sa: f64 = a.values.iter().map(|v| v.abs()).sum();
            let sb: f64 = b.values.iter().map(|v| v.abs()).sum();
            sb.partial_cmp(&sa).unwrap().then(ra.cmp(rb))
        });
        for (r, result) in per_instance.into_iter().take(ctx.config.attrib.top_k) {
            top_instances.push(InstanceAttribution {
                point_id: index.point_ids[r].clone(),
                class: scheme.names[c].clone(),
                prediction: result.prediction,
                baseline: result.baseline,
                values: result.values,
            });
        }
    }

    let attribution_path = ctx.path(files::ATTRIBUTION);
    {
        use std::io::Write as _;
        let file = std::fs::File::create(&attribution_path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(
            format!("# config_sha256={} seed={}\n", ctx.prov.config_sha256, ctx.prov.seed)
                .as_bytes(),
        )?;
        writeln!(w, "class,feature,mean_abs_attribution,rank")?;
        for row in &rows_csv {
            writeln!(
                w,
                "{},{},{},{}",
                row.class, row.feature, row.mean_abs_attribution, row.rank
            )?;
        }
        w.flush()?;
    }

    let topk_path = ctx.path(files::ATTRIBUTION_TOPK);
    write_stamped_json(&topk_path, &ctx.prov, &top_instances)?;

    // Permutation importance as a cheap cross-check on the same model.
    let importances = permutation_importance(
        &model,
        &features,
        &labels,
        ImportanceMetric::Accuracy,
        ctx.config.attrib.importance_repeats,
        derive_seed(ctx.seed(), &[seed_stage::ATTRIB, 4]),
    )?;
    let importance_path = ctx.path(files::PERMUTATION_IMPORTANCE);
    {
        use std::io::Write as _;
        let file = std::fs::File::create(&importance_path)?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(
            format!("# config_sha256={} seed={}\n", ctx.prov.config_sha256, ctx.prov.seed)
                .as_bytes(),
        )?;
        writeln!(w, "feature,accuracy_drop,rank")?;
        let mut order: Vec<usize> = (0..features.n_cols).collect();
        order.sort_by(|&a, &b| {
            importances[b].partial_cmp(&importances[a]).unwrap().then(a.cmp(&b))
        });
        let mut rank_of = vec![0usize; features.n_cols];
        for (rank, &j) in order.iter().enumerate() {
            rank_of[j] = rank + 1;
        }
        for j in 0..features.n_cols {
            writeln!(w, "{},{},{}", features.names[j], importances[j], rank_of[j])?;
        }
        w.flush()?;
    }

    Ok(vec![attribution_path, topk_path, importance_path])
}

fn stage_report(ctx: &Ctx<'_>) -> Result<Vec<PathBuf>> {
    let text = render_summary(ctx)?;
    let path = ctx.path(files::SUMMARY);
    std::fs::write(&path, text)?;
    Ok(vec![path])
}

/// Human-readable run summary assembled from whatever artifacts exist.
fn render_summary(ctx: &Ctx<'_>) -> Result<String> {
    use std::fmt::Write as _;
    let mut s = String::new();
    writeln!(s, "flimcurate run summary").unwrap();
    writeln!(s, "config_sha256: {}", ctx.prov.config_sha256).unwrap();
    writeln!(s, "seed: {}", ctx.prov.seed).unwrap();

    let mut found_any = false;

    if ctx.path(files::MANIFEST).exists() {
        found_any = true;
        let manifest: DatasetManifest =
            read_stamped_json::<DatasetManifest>(&ctx.path(files::MANIFEST))?.payload;
        writeln!(s, "\n== dataset ==").unwrap();
        writeln!(
            s,
            "patients: {}  margins: {}  points: {}  classes: {}",
            manifest.patients.len(),
            manifest.n_margins(),
            manifest.n_points(),
            manifest.n_classes()
        )
        .unwrap();
        let mut counts = vec![0usize; manifest.n_classes()];
        for m in manifest.margins() {
            counts[m.observed_label] += 1;
        }
        for (c, name) in manifest.class_names.iter().enumerate() {
            writeln!(s, "  {name}: {} margins", counts[c]).unwrap();
        }
        if ctx.path(files::CORRUPTION_LOG).exists() {
            let log: CorruptionLog =
                read_stamped_json::<CorruptionLog>(&ctx.path(files::CORRUPTION_LOG))?.payload;
            writeln!(s, "corrupted margins: {}", log.entries.len()).unwrap();
        }
    }

    if ctx.path(files::BASELINE).exists() {
        found_any = true;
        let baseline: BaselineReport =
            read_stamped_json::<BaselineReport>(&ctx.path(files::BASELINE))?.payload;
        writeln!(s, "\n== baseline selection ==").unwrap();
        for c in &baseline.candidates {
            writeln!(
                s,
                "  {:<14} accuracy {:.4}  mean AUC {:.4}  score {:.4}",
                c.kind.name(),
                c.accuracy,
                c.mean_auc,
                c.selection_score
            )
            .unwrap();
        }
        writeln!(s, "winner: {}", baseline.winner.name()).unwrap();
    }

    if ctx.path(files::CURATION_REPORT).exists() {
        found_any = true;
        let report: CurationReport =
            read_stamped_json::<CurationReport>(&ctx.path(files::CURATION_REPORT))?.payload;
        writeln!(s, "\n== curation ==").unwrap();
        let lc_points = report.points.iter().filter(|p| p.low_confidence).count();
        writeln!(
            s,
            "low-confidence points: {} of {} ({:.1}%)",
            lc_points,
            report.points.len(),
            100.0 * lc_points as f64 / report.points.len() as f64
        )
        .unwrap();
        writeln!(
            s,
            "thresholds: [{}]",
            report
                .thresholds
                .iter()
                .map(|t| format!("{t:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        )
        .unwrap();
        let mut issue = Vec::new();
        let mut control = Vec::new();
        let mut indeterminate = 0usize;
        for m in &report.margins {
            match m.status {
                MarginStatus::Issue => issue.push(m.margin_id.as_str()),
                MarginStatus::Control => control.push(m.margin_id.as_str()),
                MarginStatus::Indeterminate => indeterminate += 1,
            }
        }
        writeln!(
            s,
            "margin statuses: {} issue / {} control / {} indeterminate",
            issue.len(),
            control.len(),
            indeterminate
        )
        .unwrap();
        writeln!(s, "issue margins: [{}]", issue.join(", ")).unwrap();

        if !report.scheme_history.is_empty() {
            writeln!(s, "\n== refinement trajectory ==").unwrap();
            let trajectory: Vec<String> = report
                .scheme_history
                .iter()
                .filter(|st| st.accepted)
                .map(|st| st.n_classes.to_string())
                .collect();
            writeln!(s, "scheme history: {}", trajectory.join(" -> ")).unwrap();
            for st in &report.scheme_history {
                writeln!(
                    s,
                    "  {}-class{}: accuracy {:.4}  mean CS {:.4}  LC {:.1}%{}",
                    st.n_classes,
                    st.merged
                        .as_ref()
                        .map(|m| format!(" (merged {m})"))
                        .unwrap_or_default(),
                    st.accuracy,
                    st.mean_confidence,
                    100.0 * st.lc_point_fraction,
                    if st.accepted { "" } else { "  [reverted]" }
                )
                .unwrap();
            }
            if let (Some(acc), Some(removed)) = (report.pruned_accuracy, report.pruned_removed) {
                writeln!(
                    s,
                    "pruned retrain: accuracy {acc:.4} after removing {removed} training points"
                )
                .unwrap();
            }
        }
    }

    if ctx.path(files::METRICS_REPORT).exists() {
        found_any = true;
        let metrics: MetricsReport =
            read_stamped_json::<MetricsReport>(&ctx.path(files::METRICS_REPORT))?.payload;
        writeln!(s, "\n== re-scoring study ==").unwrap();
        for (name, group) in
            [("issue", &metrics.rescoring.issue), ("control", &metrics.rescoring.control)]
        {
            writeln!(
                s,
                "  {name}: {} margins ({} corrupted), accuracy {:.4} -> {:.4}",
                group.n_margins, group.n_corrupted, group.accuracy_before, group.accuracy_after
            )
            .unwrap();
        }
        if let Some(w) = &metrics.rescoring.warning {
            writeln!(s, "  warning: {w}").unwrap();
        }
    }

    writeln!(s, "\n== attribution ==").unwrap();
    if ctx.path(files::ATTRIBUTION).exists() {
        let text = std::fs::read_to_string(ctx.path(files::ATTRIBUTION))?;
        let mut by_class: Vec<(String, Vec<String>)> = Vec::new();
        for line in text.lines().skip(2) {
            let mut f = line.split(',');
            let class = f.next().unwrap_or_default().to_string();
            let feature = f.next().unwrap_or_default().to_string();
            let _val = f.next();
            let rank: usize = f.next().and_then(|r| r.parse().ok()).unwrap_or(usize::MAX);
            if rank <= 5 {
                match by_class.iter_mut().find(|(c, _)| *c == class) {
                    Some((_, feats)) => feats.push(feature),
                    None => by_class.push((class, vec![feature])),
                }
            }
        }
        for (class, feats) in by_class {
            writeln!(s, "  {class}: top features {}", feats.join(", ")).unwrap();
        }
    } else {
        writeln!(s, "  (attribution stage has not run; section omitted)").unwrap();
    }

    if !found_any {
        return Err(Error::Config(
            "report: no pipeline artifacts found in the output directory".into(),
        ));
    }
    Ok(s)
}
