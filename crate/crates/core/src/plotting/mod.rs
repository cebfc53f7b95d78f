//! Static SVG figures: four-panel t-SNE views, grids of trial pairs and
//! confusion-matrix heatmaps. Output depends only on the inputs.

mod svg;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterModel, ConfusionMatrix};
use crate::data::ClassId;
use crate::encoder::Provenance;
use crate::error::{Error, Result};
use crate::projection::Projection2D;

use svg::{escape, num, Svg};

/// Qualitative palette indexed by class id modulo its length.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
/// Points assigned to a free cluster.
pub const FREE_COLOR: &str = "#000000";
/// Rows without a known truth label.
pub const UNKNOWN_COLOR: &str = "#c8c8c8";
pub const AXIS_LABEL: &str = "t-SNE coordinates, arbitrary units";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Cluster assignments of every row.
    Single,
    /// Truth, all assignments, labeled-only, unlabeled-only.
    Quad,
    /// Truth and assignment panels side by side, `columns` pairs per row.
    PairGrid { columns: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub layout: Layout,
    pub palette: Vec<String>,
    pub free_color: String,
    pub axis_label: String,
    pub title: Option<String>,
    /// Edge length of one square panel in px.
    pub panel_size: f64,
    pub point_radius: f64,
    pub output: Option<PathBuf>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            layout: Layout::Quad,
            palette: PALETTE.iter().map(|s| s.to_string()).collect(),
            free_color: FREE_COLOR.into(),
            axis_label: AXIS_LABEL.into(),
            title: None,
            panel_size: 320.0,
            point_radius: 2.2,
            output: None,
        }
    }
}

impl PlotSpec {
    pub fn with_layout(layout: Layout) -> Self {
        Self {
            layout,
            ..Self::default()
        }
    }

    pub fn class_color(&self, class: ClassId) -> &str {
        &self.palette[class as usize % self.palette.len()]
    }

    fn validate(&self) -> Result<()> {
        if self.palette.is_empty() {
            return Err(Error::Config("plot palette is empty".into()));
        }
        if !(self.panel_size > 0.0 && self.point_radius > 0.0) {
            return Err(Error::Config("plot panel size and point radius must be positive".into()));
        }
        if let Layout::PairGrid { columns: 0 } = self.layout {
            return Err(Error::Config("pair grid needs at least one column".into()));
        }
        Ok(())
    }

    /// Writes `doc` to `output`.
    pub fn save(&self, doc: &str) -> Result<()> {
        let path = self
            .output
            .as_ref()
            .ok_or_else(|| Error::Config("plot has no output path".into()))?;
        std::fs::write(path, doc).map_err(|e| Error::io(path, e))
    }
}

/// Row-aligned inputs of one scatter figure.
#[derive(Debug, Clone, Copy)]
pub struct ScatterData<'a> {
    pub projection: &'a Projection2D,
    pub truth: &'a [Option<ClassId>],
    pub clusters: &'a ClusterModel,
    pub provenance: &'a [Provenance],
}

impl ScatterData<'_> {
    fn check(&self) -> Result<()> {
        let n = self.projection.len();
        if self.truth.len() != n || self.clusters.assignments.len() != n || self.provenance.len() != n {
            return Err(Error::Shape(format!(
                "plot rows misaligned: {} coordinates, {} truth labels, {} assignments, {} provenance entries",
                n,
                self.truth.len(),
                self.clusters.assignments.len(),
                self.provenance.len()
            )));
        }
        Ok(())
    }

    fn bounds(&self) -> Bounds {
        Bounds::of((0..self.projection.len()).map(|i| self.projection.point(i)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PanelKind {
    Truth,
    Assigned,
    LabeledOnly,
    UnlabeledOnly,
}

impl PanelKind {
    fn name(self) -> &'static str {
        match self {
            PanelKind::Truth => "truth",
            PanelKind::Assigned => "assignments",
            PanelKind::LabeledOnly => "labeled",
            PanelKind::UnlabeledOnly => "unlabeled",
        }
    }

    fn title(self) -> &'static str {
        match self {
            PanelKind::Truth => "ground truth",
            PanelKind::Assigned => "cluster assignments",
            PanelKind::LabeledOnly => "assignments, labeled rows",
            PanelKind::UnlabeledOnly => "assignments, unlabeled rows",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    min: [f64; 2],
    max: [f64; 2],
}

impl Bounds {
    fn of(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut b = Bounds {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for p in points {
            for d in 0..2 {
                b.min[d] = b.min[d].min(p[d]);
                b.max[d] = b.max[d].max(p[d]);
            }
        }
        for d in 0..2 {
            if !b.min[d].is_finite() {
                b.min[d] = -1.0;
                b.max[d] = 1.0;
            }
            let pad = ((b.max[d] - b.min[d]) * 0.05).max(1e-9);
            b.min[d] -= pad;
            b.max[d] += pad;
        }
        b
    }
}

const MARGIN: f64 = 36.0;
const TITLE_H: f64 = 28.0;

fn panel(doc: &mut Svg, spec: &PlotSpec, data: &ScatterData, kind: PanelKind, origin: [f64; 2], b: Bounds) {
    let s = spec.panel_size;
    let (x0, y0) = (origin[0], origin[1]);
    doc.open(&format!(
        r#"g class="panel" data-panel="{}" transform="translate({},{})""#,
        kind.name(),
        num(x0),
        num(y0)
    ));
    doc.line(&format!(
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff" stroke="#444444" stroke-width="1"/>"##,
        num(s),
        num(s)
    ));
    doc.line(&format!(
        r#"<text x="{}" y="-8" text-anchor="middle" font-size="13">{}</text>"#,
        num(s / 2.0),
        kind.title()
    ));
    doc.line(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
        num(s / 2.0),
        num(s + 16.0),
        escape(&spec.axis_label)
    ));
    doc.line(&format!(
        r#"<text x="-10" y="{}" text-anchor="middle" font-size="10" transform="rotate(-90 -10 {})">{}</text>"#,
        num(s / 2.0),
        num(s / 2.0),
        escape(&spec.axis_label)
    ));
    let sx = s / (b.max[0] - b.min[0]);
    let sy = s / (b.max[1] - b.min[1]);
    doc.open(r#"g class="points""#);
    for i in 0..data.projection.len() {
        let keep = match kind {
            PanelKind::Truth | PanelKind::Assigned => true,
            PanelKind::LabeledOnly => data.provenance[i].is_labeled(),
            PanelKind::UnlabeledOnly => !data.provenance[i].is_labeled(),
        };
        if !keep {
            continue;
        }
        let color = match kind {
            PanelKind::Truth => data.truth[i].map_or(UNKNOWN_COLOR, |c| spec.class_color(c)),
            _ => cluster_color(spec, data.clusters, data.clusters.assignments[i]),
        };
        let p = data.projection.point(i);
        doc.line(&format!(
            r#"<circle cx="{}" cy="{}" r="{}" fill="{}"/>"#,
            num((p[0] - b.min[0]) * sx),
            num(s - (p[1] - b.min[1]) * sy),
            num(spec.point_radius),
            color
        ));
    }
    doc.close("g");
    doc.close("g");
}

fn cluster_color<'a>(spec: &'a PlotSpec, clusters: &ClusterModel, cluster: usize) -> &'a str {
    match clusters.cluster_class(cluster) {
        Some(class) => spec.class_color(class),
        None => &spec.free_color,
    }
}

fn legend(doc: &mut Svg, spec: &PlotSpec, classes: &[(ClassId, String)], has_free: bool, origin: [f64; 2]) {
    doc.open(&format!(
        r#"g class="legend" transform="translate({},{})""#,
        num(origin[0]),
        num(origin[1])
    ));
    let mut x = 0.0;
    let mut entry = |doc: &mut Svg, color: &str, label: &str| {
        doc.line(&format!(
            r#"<circle cx="{}" cy="0" r="4" fill="{}"/><text x="{}" y="4" font-size="10">{}</text>"#,
            num(x),
            color,
            num(x + 7.0),
            escape(label)
        ));
        x += 14.0 + 6.0 * label.chars().count() as f64;
    };
    for (class, name) in classes {
        entry(doc, spec.class_color(*class), &format!("{class}:{name}"));
    }
    if has_free {
        entry(doc, &spec.free_color, "free cluster");
    }
    doc.close("g");
}

/// Scatter figure of one projection. `Quad` gives ground truth, all
/// assignments, labeled-only and unlabeled-only panels with shared axes;
/// `Single` gives the assignment panel alone.
pub fn scatter_panels(data: &ScatterData, class_names: &[(ClassId, String)], spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    data.check()?;
    let kinds: &[PanelKind] = match spec.layout {
        Layout::Single => &[PanelKind::Assigned],
        Layout::Quad => &[
            PanelKind::Truth,
            PanelKind::Assigned,
            PanelKind::LabeledOnly,
            PanelKind::UnlabeledOnly,
        ],
        Layout::PairGrid { .. } => {
            return Err(Error::Config("pair grids are drawn by trial_grid".into()));
        }
    };
    let cols = kinds.len().min(2);
    let rows = kinds.len().div_ceil(2);
    let cell_w = spec.panel_size + 2.0 * MARGIN;
    let cell_h = spec.panel_size + 2.0 * MARGIN;
    let width = cols as f64 * cell_w;
    let height = TITLE_H + rows as f64 * cell_h + 24.0;
    let mut doc = Svg::new(width, height);
    if let Some(t) = &spec.title {
        doc.line(&format!(
            r#"<text x="{}" y="18" text-anchor="middle" font-size="15">{}</text>"#,
            num(width / 2.0),
            escape(t)
        ));
    }
    let b = data.bounds();
    for (n, &kind) in kinds.iter().enumerate() {
        let origin = [
            (n % 2) as f64 * cell_w + MARGIN,
            TITLE_H + (n / 2) as f64 * cell_h + MARGIN,
        ];
        panel(&mut doc, spec, data, kind, origin, b);
    }
    legend(
        &mut doc,
        spec,
        class_names,
        data.clusters.n_free > 0,
        [MARGIN, height - 12.0],
    );
    Ok(doc.finish())
}

/// One truth/assignment pair of a grid.
#[derive(Debug, Clone, Copy)]
pub struct TrialPanel<'a> {
    pub label: &'a str,
    /// Colors the pair's border; `None` draws it gray.
    pub removed_class: Option<ClassId>,
    pub data: ScatterData<'a>,
}

/// Grid of truth/assignment pairs, one per trial, each pair framed in the
/// color of its removed class. Each pair uses its own axis range.
pub fn trial_grid(trials: &[TrialPanel], class_names: &[(ClassId, String)], spec: &PlotSpec) -> Result<String> {
    spec.validate()?;
    let Layout::PairGrid { columns } = spec.layout else {
        return Err(Error::Config("trial_grid needs a pair-grid layout".into()));
    };
    for t in trials {
        t.data.check()?;
    }
    let columns = columns.min(trials.len()).max(1);
    let rows = trials.len().div_ceil(columns);
    let pair_w = 2.0 * (spec.panel_size + 2.0 * MARGIN);
    let pair_h = spec.panel_size + 2.0 * MARGIN + 20.0;
    let gap = 12.0;
    let width = columns as f64 * (pair_w + gap) + gap;
    let height = TITLE_H + rows as f64 * (pair_h + gap) + 30.0;
    let mut doc = Svg::new(width, height);
    if let Some(t) = &spec.title {
        doc.line(&format!(
            r#"<text x="{}" y="18" text-anchor="middle" font-size="15">{}</text>"#,
            num(width / 2.0),
            escape(t)
        ));
    }
    let mut has_free = false;
    for (n, t) in trials.iter().enumerate() {
        has_free |= t.data.clusters.n_free > 0;
        let x = gap + (n % columns) as f64 * (pair_w + gap);
        let y = TITLE_H + (n / columns) as f64 * (pair_h + gap);
        let border = t.removed_class.map_or("#999999", |c| spec.class_color(c));
        doc.open(&format!(
            r#"g class="pair" data-trial="{}" transform="translate({},{})""#,
            escape(t.label),
            num(x),
            num(y)
        ));
        doc.line(&format!(
            r#"<rect class="border" x="0" y="0" width="{}" height="{}" fill="none" stroke="{}" stroke-width="4"/>"#,
            num(pair_w),
            num(pair_h),
            border
        ));
        doc.line(&format!(
            r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#,
            num(pair_w / 2.0),
            escape(t.label)
        ));
        let b = t.data.bounds();
        let half = spec.panel_size + 2.0 * MARGIN;
        panel(&mut doc, spec, &t.data, PanelKind::Truth, [MARGIN, 20.0 + MARGIN], b);
        panel(&mut doc, spec, &t.data, PanelKind::Assigned, [half + MARGIN, 20.0 + MARGIN], b);
        doc.close("g");
    }
    legend(&mut doc, spec, class_names, has_free, [gap + MARGIN, height - 12.0]);
    Ok(doc.finish())
}

/// Heatmap of truth rows against clusters. Shading is proportional to the
/// cell count relative to the largest count, and every count is printed.
pub fn confusion_heatmap(
    m: &ConfusionMatrix,
    row_labels: &[String],
    col_labels: &[String],
    spec: &PlotSpec,
) -> Result<String> {
    if m.counts.is_empty() || m.n_clusters == 0 {
        return Err(Error::Validation("confusion matrix is empty".into()));
    }
    if row_labels.len() != m.counts.len() || col_labels.len() != m.n_clusters {
        return Err(Error::Shape(format!(
            "{} row and {} column labels for a {}x{} matrix",
            row_labels.len(),
            col_labels.len(),
            m.counts.len(),
            m.n_clusters
        )));
    }
    let cell = 44.0;
    let left = 120.0;
    let top = TITLE_H + 60.0;
    let width = left + cell * m.n_clusters as f64 + MARGIN;
    let height = top + cell * m.counts.len() as f64 + MARGIN;
    let max = m.counts.iter().flatten().copied().max().unwrap_or(0);
    let mut doc = Svg::new(width, height);
    if let Some(t) = &spec.title {
        doc.line(&format!(
            r#"<text x="{}" y="18" text-anchor="middle" font-size="15">{}</text>"#,
            num(width / 2.0),
            escape(t)
        ));
    }
    doc.line(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">cluster</text>"#,
        num(left + cell * m.n_clusters as f64 / 2.0),
        num(TITLE_H + 14.0)
    ));
    for (j, label) in col_labels.iter().enumerate() {
        doc.line(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            num(left + cell * (j as f64 + 0.5)),
            num(top - 8.0),
            escape(label)
        ));
    }
    doc.open(r#"g class="cells""#);
    for (i, row) in m.counts.iter().enumerate() {
        let y = top + cell * i as f64;
        doc.line(&format!(
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{}</text>"#,
            num(left - 6.0),
            num(y + cell / 2.0 + 4.0),
            escape(&row_labels[i])
        ));
        for (j, &v) in row.iter().enumerate() {
            let shade = if max == 0 { 0.0 } else { v as f64 / max as f64 };
            let fill = blend(shade);
            let ink = if shade > 0.5 { "#ffffff" } else { "#000000" };
            let x = left + cell * j as f64;
            doc.line(&format!(
                r##"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="#ffffff"/><text x="{}" y="{}" text-anchor="middle" font-size="11" fill="{}">{}</text>"##,
                num(x),
                num(y),
                num(cell),
                num(cell),
                fill,
                num(x + cell / 2.0),
                num(y + cell / 2.0 + 4.0),
                ink,
                v
            ));
        }
    }
    doc.close("g");
    Ok(doc.finish())
}

/// White at 0, dark blue at 1.
fn blend(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lo = [255.0, 255.0, 255.0];
    let hi = [8.0, 48.0, 107.0];
    let c: Vec<u8> = (0..3).map(|k| (lo[k] + (hi[k] - lo[k]) * t).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}
