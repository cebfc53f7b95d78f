//! Report files written for trials, suites and deployments, and plot
//! regeneration from a stored trial directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Analysis, ContainmentSummary, DeploymentConfig, DeploymentResult, SuiteEntry, SuiteResult, TableRow, TrialConfig,
    TrialKind, TrialResult,
};
use crate::clustering::{confusion_matrix, ClusterModel, ConfusionMatrix};
use crate::data::ClassId;
use crate::density::ContainmentRow;
use crate::encoder::{ClassMap, EmbeddingSet, Provenance};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::plotting::{confusion_heatmap, scatter_panels, trial_grid, Layout, PlotSpec, ScatterData, TrialPanel};
use crate::projection::Projection2D;

pub const SCHEMA_VERSION: u32 = 1;

/// Cluster layout needed to redraw a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLayout {
    pub n_known: usize,
    pub n_free: usize,
    /// Known class of each cluster, `None` for free clusters.
    pub cluster_classes: Vec<Option<ClassId>>,
    pub iterations_run: usize,
    pub inertia: f64,
}

impl ClusterLayout {
    fn of(m: &ClusterModel) -> Self {
        Self {
            n_known: m.n_known,
            n_free: m.n_free,
            cluster_classes: (0..m.k()).map(|c| m.cluster_class(c)).collect(),
            iterations_run: m.iterations_run,
            inertia: m.inertia,
        }
    }

    /// Cluster model carrying only what plotting reads.
    fn model(&self, assignments: Vec<usize>) -> ClusterModel {
        let known: Vec<ClassId> = self.cluster_classes.iter().flatten().copied().collect();
        ClusterModel {
            centroids: Matrix::zeros(self.n_known + self.n_free, 0),
            assignments,
            n_known: self.n_known,
            n_free: self.n_free,
            iterations_run: self.iterations_run,
            inertia: self.inertia,
            inertia_trace: Vec::new(),
            class_map: ClassMap::new(known),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub withheld_class: Option<ClassId>,
    pub alpha: f64,
    pub mc_samples: usize,
    pub novelty_threshold: f64,
    pub k: usize,
    pub n_free: usize,
    pub perplexity: f64,
    pub epochs: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub config: TrialConfig,
}

/// Contents of a trial's `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub schema_version: u32,
    pub kind: TrialKind,
    pub metadata: TrialMetadata,
    pub class_names: BTreeMap<ClassId, String>,
    pub table_row: TableRow,
    pub containment: ContainmentSummary,
    pub novel: bool,
    pub clusters: ClusterLayout,
    pub free_clusters: Vec<ContainmentRow>,
    pub unscored_clusters: Vec<usize>,
    pub final_loss: Option<f64>,
    pub tsne_kl: f64,
}

impl TrialReport {
    pub fn new(r: &TrialResult) -> Self {
        let c = &r.config;
        let n_labeled = r.embeddings.provenance.iter().filter(|p| p.is_labeled()).count();
        TrialReport {
            schema_version: SCHEMA_VERSION,
            kind: r.kind,
            metadata: TrialMetadata {
                seed: c.seed,
                config_hash: r.config_hash.clone(),
                withheld_class: c.withheld_class,
                alpha: c.density.alpha,
                mc_samples: c.density.mc_samples,
                novelty_threshold: c.density.novelty_threshold,
                k: r.analysis.clusters.k(),
                n_free: r.analysis.clusters.n_free,
                perplexity: c.tsne.perplexity,
                epochs: c.encoder.epochs,
                n_labeled,
                n_unlabeled: r.embeddings.len() - n_labeled,
                config: c.clone(),
            },
            class_names: r.class_names.clone(),
            table_row: r.row.clone(),
            containment: r.summary.clone(),
            novel: r.summary.novel,
            clusters: ClusterLayout::of(&r.analysis.clusters),
            free_clusters: r.analysis.containment.rows.clone(),
            unscored_clusters: r.analysis.unscored_clusters.clone(),
            final_loss: r.loss_trace.last().copied(),
            tsne_kl: r.analysis.projection.kl,
        }
    }
}

/// `3` for a removed class, `all` otherwise; used in file names.
pub fn trial_tag(withheld: Option<ClassId>) -> String {
    withheld.map_or("all".into(), |c| c.to_string())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

const ROWS_HEADER: [&str; 7] = ["id", "provenance", "label", "truth", "cluster", "x", "y"];

/// One line per row: provenance, labels, cluster and t-SNE coordinates.
fn rows_csv(emb: &EmbeddingSet, a: &Analysis) -> Result<String> {
    csv_text(
        &ROWS_HEADER,
        (0..emb.len()).map(|i| {
            let (prov, label) = match emb.provenance[i] {
                Provenance::Labeled(k) => ("labeled", k.to_string()),
                Provenance::Unlabeled => ("unlabeled", String::new()),
            };
            let p = a.projection.point(i);
            vec![
                emb.ids[i].clone(),
                prov.into(),
                label,
                opt(emb.truth[i]),
                a.clusters.assignments[i].to_string(),
                p[0].to_string(),
                p[1].to_string(),
            ]
        }),
    )
}

fn loss_csv(trace: &[f64]) -> Result<String> {
    csv_text(
        &["epoch", "loss"],
        trace.iter().enumerate().map(|(e, l)| vec![(e + 1).to_string(), l.to_string()]),
    )
}

fn class_list(names: &BTreeMap<ClassId, String>) -> Vec<(ClassId, String)> {
    names.iter().map(|(k, v)| (*k, v.clone())).collect()
}

fn confusion_labels(m: &ConfusionMatrix, names: &BTreeMap<ClassId, String>, clusters: &ClusterLayout) -> (Vec<String>, Vec<String>) {
    let rows = m
        .truth_classes
        .iter()
        .map(|c| format!("{c}:{}", names.get(c).map_or("?", |s| s.as_str())))
        .collect();
    let cols = clusters
        .cluster_classes
        .iter()
        .enumerate()
        .map(|(j, k)| k.map_or(format!("free {j}"), |k| k.to_string()))
        .collect();
    (rows, cols)
}

/// Files written for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialArtifacts {
    pub dir: PathBuf,
    pub report: PathBuf,
    pub panels_svg: PathBuf,
    pub confusion_svg: PathBuf,
}

/// Writes `report.json`, `rows.csv`, `confusion.csv`, `containment.csv`,
/// `loss.csv`, `encoder.json` and the panel and confusion SVGs into `dir`.
pub fn write_trial(dir: &Path, r: &TrialResult) -> Result<TrialArtifacts> {
    create_dir(dir)?;
    let report = TrialReport::new(r);
    let report_path = dir.join("report.json");
    write(&report_path, &json_text(&report)?)?;
    write(&dir.join("rows.csv"), &rows_csv(&r.embeddings, &r.analysis)?)?;
    write(&dir.join("confusion.csv"), &r.metrics.confusion.to_csv())?;
    write(&dir.join("containment.csv"), &r.analysis.containment.to_csv()?)?;
    write(&dir.join("loss.csv"), &loss_csv(&r.loss_trace)?)?;
    r.encoder.save_checkpoint(dir.join("encoder.json"))?;
    let (panels_svg, confusion_svg) = draw_trial(
        dir,
        &report,
        &r.analysis.projection,
        &r.embeddings.truth,
        &r.analysis.clusters,
        &r.embeddings.provenance,
        &r.metrics.confusion,
    )?;
    Ok(TrialArtifacts {
        dir: dir.to_path_buf(),
        report: report_path,
        panels_svg,
        confusion_svg,
    })
}

fn trial_title(report: &TrialReport) -> String {
    let verdict = match report.containment.containment_score {
        Some(s) => format!("O_c = {s:.3}{}", if report.novel { ", novel" } else { "" }),
        None => "O_c not scored".into(),
    };
    format!("{} {} ({verdict})", report.kind.as_str(), report.table_row.ind_name)
}

fn draw_trial(
    dir: &Path,
    report: &TrialReport,
    projection: &Projection2D,
    truth: &[Option<ClassId>],
    clusters: &ClusterModel,
    provenance: &[Provenance],
    confusion: &ConfusionMatrix,
) -> Result<(PathBuf, PathBuf)> {
    let tag = trial_tag(report.metadata.withheld_class);
    let title = trial_title(report);
    let data = ScatterData {
        projection,
        truth,
        clusters,
        provenance,
    };
    let spec = PlotSpec {
        title: Some(title.clone()),
        output: Some(dir.join(format!("trial_{tag}_panels.svg"))),
        ..PlotSpec::with_layout(Layout::Quad)
    };
    spec.save(&scatter_panels(&data, &class_list(&report.class_names), &spec)?)?;
    let panels = spec.output.clone().expect("set above");

    let spec = PlotSpec {
        title: Some(title),
        output: Some(dir.join(format!("trial_{tag}_confusion.svg"))),
        ..PlotSpec::default()
    };
    let (rows, cols) = confusion_labels(confusion, &report.class_names, &report.clusters);
    spec.save(&confusion_heatmap(confusion, &rows, &cols, &spec)?)?;
    Ok((panels, spec.output.clone().expect("set above")))
}

/// Rows of a stored trial, as read back from `rows.csv`.
struct StoredRows {
    projection: Projection2D,
    truth: Vec<Option<ClassId>>,
    provenance: Vec<Provenance>,
    assignments: Vec<usize>,
}

fn read_rows(path: &Path) -> Result<StoredRows> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header = rdr.headers()?.clone();
    if header.iter().ne(ROWS_HEADER) {
        return Err(Error::Parse {
            row: 1,
            message: format!("{}: expected header {}", path.display(), ROWS_HEADER.join(",")),
        });
    }
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut truth = Vec::new();
    let mut provenance = Vec::new();
    let mut assignments = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |what: &str| Error::Parse {
            row,
            message: format!("{}: invalid {what}", path.display()),
        };
        let class = |s: &str, what: &str| -> Result<Option<ClassId>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        ids.push(rec[0].to_string());
        provenance.push(match &rec[1] {
            "labeled" => Provenance::Labeled(class(&rec[2], "label")?.ok_or_else(|| bad("label"))?),
            "unlabeled" => Provenance::Unlabeled,
            _ => return Err(bad("provenance")),
        });
        truth.push(class(&rec[3], "truth")?);
        assignments.push(rec[4].parse().map_err(|_| bad("cluster"))?);
        let x: f64 = rec[5].parse().map_err(|_| bad("x"))?;
        let y: f64 = rec[6].parse().map_err(|_| bad("y"))?;
        coords.push([x, y]);
    }
    let n = ids.len();
    Ok(StoredRows {
        projection: Projection2D {
            coords: if n == 0 { Matrix::zeros(0, 2) } else { Matrix::from_rows(&coords) },
            ids,
            kl: f64::NAN,
            kl_after_exaggeration: f64::NAN,
            row_perplexities: Vec::new(),
        },
        truth,
        provenance,
        assignments,
    })
}

fn read_report(dir: &Path) -> Result<TrialReport> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: TrialReport =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: schema version {} is not supported",
            path.display(),
            report.schema_version
        )));
    }
    Ok(report)
}

/// Redraws the SVGs of a trial directory written by [`write_trial`].
pub fn regenerate_plots(dir: &Path) -> Result<Vec<PathBuf>> {
    let report = read_report(dir)?;
    let rows = read_rows(&dir.join("rows.csv"))?;
    let clusters = report.clusters.model(rows.assignments.clone());
    if let Some(&bad) = rows.assignments.iter().find(|&&c| c >= clusters.k()) {
        return Err(Error::Validation(format!("rows.csv refers to cluster {bad} of {}", clusters.k())));
    }
    let confusion_path = dir.join("confusion.csv");
    let confusion = ConfusionMatrix::from_csv(
        &std::fs::read_to_string(&confusion_path).map_err(|e| Error::io(&confusion_path, e))?,
    )?;
    let (a, b) = draw_trial(
        dir,
        &report,
        &rows.projection,
        &rows.truth,
        &clusters,
        &rows.provenance,
        &confusion,
    )?;
    Ok(vec![a, b])
}

/// A table row rendered for CSV: acc `-` when absent by design, `NA` when
/// the trial failed or the cluster was not scored.
fn table_record(row: Option<&TableRow>, kind: TrialKind, class: ClassId, name: &str) -> Vec<String> {
    let fixed3 = |v: Option<f64>| v.map_or("NA".into(), |v| format!("{v:.3}"));
    match row {
        Some(r) => vec![
            r.ind_name.clone(),
            opt(r.rem_class),
            r.disc_class.map_or("NA".into(), |d| d.to_string()),
            match kind {
                TrialKind::Discovery => fixed3(r.acc),
                TrialKind::Control => "-".into(),
            },
            fixed3(r.cnt_score),
        ],
        None => vec![
            format!("{class}:{name}"),
            class.to_string(),
            "NA".into(),
            match kind {
                TrialKind::Discovery => "NA".into(),
                TrialKind::Control => "-".into(),
            },
            "NA".into(),
        ],
    }
}

pub const TABLE_HEADER: [&str; 5] = ["ind:name", "rem_class", "disc_class", "acc", "cnt_score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFailure {
    pub class: ClassId,
    pub kind: TrialKind,
    pub error: String,
}

/// Contents of `suite.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub base: TrialConfig,
    pub class_names: BTreeMap<ClassId, String>,
    pub discovery: Vec<TableRow>,
    pub control: Vec<TableRow>,
    pub failures: Vec<SuiteFailure>,
}

fn trial_dir(out: &Path, e: &SuiteEntry) -> PathBuf {
    out.join(format!("{}_{}", e.kind.as_str(), e.class))
}

/// Writes every trial into `<kind>_<class>/`, the two tables as
/// `discovery.csv` and `control.csv`, both together in `suite.csv` and
/// `suite.json`, and one pair grid per trial kind.
pub fn write_suite(
    out: &Path,
    suite: &SuiteResult,
    base: &TrialConfig,
    class_names: &BTreeMap<ClassId, String>,
) -> Result<()> {
    create_dir(out)?;
    for e in &suite.entries {
        if let Ok(r) = &e.result {
            write_trial(&trial_dir(out, e), r)?;
        }
    }
    let name = |c: ClassId| class_names.get(&c).map_or("?", |s| s.as_str()).to_string();
    let mut suite_rows = Vec::new();
    for kind in [TrialKind::Discovery, TrialKind::Control] {
        let recs: Vec<Vec<String>> = suite
            .of_kind(kind)
            .map(|e| table_record(e.result.as_ref().ok().map(|r| &r.row), kind, e.class, &name(e.class)))
            .collect();
        write(&out.join(format!("{}.csv", kind.as_str())), &csv_text(&TABLE_HEADER, recs.clone())?)?;
        suite_rows.extend(recs.into_iter().map(|mut r| {
            r.insert(0, kind.as_str().to_string());
            r
        }));

        let trials: Vec<(String, &TrialResult)> = suite
            .of_kind(kind)
            .filter_map(|e| e.result.as_ref().ok())
            .map(|r| (trial_title(&TrialReport::new(r)), r))
            .collect();
        if !trials.is_empty() {
            let panels: Vec<TrialPanel> = trials
                .iter()
                .map(|(label, r)| TrialPanel {
                    label,
                    removed_class: r.config.withheld_class,
                    data: ScatterData {
                        projection: &r.analysis.projection,
                        truth: &r.embeddings.truth,
                        clusters: &r.analysis.clusters,
                        provenance: &r.embeddings.provenance,
                    },
                })
                .collect();
            let spec = PlotSpec {
                title: Some(format!("{} trials", kind.as_str())),
                output: Some(out.join(format!("trial_{}_grid.svg", kind.as_str()))),
                ..PlotSpec::with_layout(Layout::PairGrid { columns: 3 })
            };
            spec.save(&trial_grid(&panels, &class_list(class_names), &spec)?)?;
        }
    }
    let mut header = vec!["protocol"];
    header.extend(TABLE_HEADER);
    write(&out.join("suite.csv"), &csv_text(&header, suite_rows)?)?;

    let rows_of = |kind| {
        suite
            .of_kind(kind)
            .filter_map(|e| e.result.as_ref().ok().map(|r| r.row.clone()))
            .collect()
    };
    let report = SuiteReport {
        schema_version: SCHEMA_VERSION,
        base: base.clone(),
        class_names: class_names.clone(),
        discovery: rows_of(TrialKind::Discovery),
        control: rows_of(TrialKind::Control),
        failures: suite
            .entries
            .iter()
            .filter_map(|e| {
                e.result.as_ref().err().map(|err| SuiteFailure {
                    class: e.class,
                    kind: e.kind,
                    error: err.clone(),
                })
            })
            .collect(),
    };
    write(&out.join("suite.json"), &json_text(&report)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentMetadata {
    pub seed: u64,
    pub window: usize,
    pub stride: usize,
    pub k: usize,
    pub n_known: usize,
    pub n_free: usize,
    pub alpha: f64,
    pub mc_samples: usize,
    pub novelty_threshold: f64,
    pub n_segments: usize,
    pub config: TrialConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub schema_version: u32,
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub short: bool,
    pub novel: bool,
    pub min_score: Option<f64>,
    pub clusters: ClusterLayout,
    pub free_clusters: Vec<ContainmentRow>,
    pub unscored_clusters: Vec<usize>,
    pub window_ids: Vec<String>,
}

/// Contents of `deploy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub schema_version: u32,
    pub metadata: DeploymentMetadata,
    pub known_classes: Vec<ClassId>,
    pub novel_windows: Vec<usize>,
    pub windows: Vec<WindowSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub short: bool,
    pub novel: bool,
    pub min_score: Option<f64>,
}

/// Writes `deploy.json`, `deploy.csv` and one `window_<i>/` directory per
/// window with its report, rows and assignment plot.
pub fn write_deployment(
    out: &Path,
    d: &DeploymentResult,
    trial: &TrialConfig,
    class_names: &BTreeMap<ClassId, String>,
) -> Result<()> {
    create_dir(out)?;
    d.encoder.save_checkpoint(out.join("encoder.json"))?;
    write(&out.join("loss.csv"), &loss_csv(&d.loss_trace)?)?;
    let DeploymentConfig { window, stride, k } = d.config;
    let mut summaries = Vec::new();
    for w in &d.windows {
        let min_score = w
            .analysis
            .containment
            .rows
            .iter()
            .map(|r| r.score)
            .min_by(f64::total_cmp);
        let dir = out.join(format!("window_{:03}", w.index));
        create_dir(&dir)?;
        let report = WindowReport {
            schema_version: SCHEMA_VERSION,
            index: w.index,
            start: w.start,
            len: w.len,
            short: w.short,
            novel: w.novel,
            min_score,
            clusters: ClusterLayout::of(&w.analysis.clusters),
            free_clusters: w.analysis.containment.rows.clone(),
            unscored_clusters: w.analysis.unscored_clusters.clone(),
            window_ids: w.ids.clone(),
        };
        write(&dir.join("report.json"), &json_text(&report)?)?;
        write(&dir.join("rows.csv"), &rows_csv(&w.embeddings, &w.analysis)?)?;
        write(&dir.join("containment.csv"), &w.analysis.containment.to_csv()?)?;
        let confusion = confusion_matrix(&w.analysis.clusters, &w.embeddings)?;
        write(&dir.join("confusion.csv"), &confusion.to_csv())?;
        let spec = PlotSpec {
            title: Some(format!(
                "window {} ({}){}",
                w.index,
                min_score.map_or("not scored".into(), |s| format!("min O_c = {s:.3}")),
                if w.novel { ", novel" } else { "" }
            )),
            output: Some(dir.join(format!("trial_window{:03}_panels.svg", w.index))),
            ..PlotSpec::with_layout(Layout::Single)
        };
        let data = ScatterData {
            projection: &w.analysis.projection,
            truth: &w.embeddings.truth,
            clusters: &w.analysis.clusters,
            provenance: &w.embeddings.provenance,
        };
        spec.save(&scatter_panels(&data, &class_list(class_names), &spec)?)?;
        summaries.push(WindowSummary {
            index: w.index,
            start: w.start,
            len: w.len,
            short: w.short,
            novel: w.novel,
            min_score,
        });
    }
    let n_segments = d.windows.last().map_or(0, |w| w.start + w.len);
    let report = DeploymentReport {
        schema_version: SCHEMA_VERSION,
        metadata: DeploymentMetadata {
            seed: trial.seed,
            window,
            stride,
            k,
            n_known: d.known_classes.len(),
            n_free: d.n_free,
            alpha: trial.density.alpha,
            mc_samples: trial.density.mc_samples,
            novelty_threshold: trial.density.novelty_threshold,
            n_segments,
            config: trial.clone(),
        },
        known_classes: d.known_classes.clone(),
        novel_windows: d.novel_windows(),
        windows: summaries.clone(),
    };
    write(&out.join("deploy.json"), &json_text(&report)?)?;
    write(
        &out.join("deploy.csv"),
        &csv_text(
            &["window", "start", "len", "short", "min_score", "novel"],
            summaries.iter().map(|s| {
                vec![
                    s.index.to_string(),
                    s.start.to_string(),
                    s.len.to_string(),
                    s.short.to_string(),
                    s.min_score.map_or("NA".into(), |v| format!("{v:.3}")),
                    s.novel.to_string(),
                ]
            }),
        )?,
    )
}
