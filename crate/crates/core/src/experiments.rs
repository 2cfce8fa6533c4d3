//! Seeded Monte Carlo sweeps over model/estimator grids, figure presets and
//! the per-panel CSV tables they produce.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::error::{GmmError, Result};
use crate::estimators::{
    averaging, equivalence, hard_margin_svm, min_norm_ls, ridge_or_ls, support_vector_fraction, SvmOptions,
};
use crate::model::presets::MeanPlacement;
use crate::model::{preset_model, sample_dataset, FigureId, GmmModel, LabelMode, PresetParams};
use crate::quadforms::{certificate_all_positive, duality_certificate};
use crate::regimes::{check_positive_correlation, check_thm1, check_thm2};
use crate::risk::{exact_risk, monte_carlo_risk, noisy_risk};
use crate::seeds::derive;

/// Relative distance under which SVM and LS count as the same classifier.
pub const EQUIVALENCE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Preset {
        figure: FigureId,
        #[serde(default)]
        params: PresetParams,
    },
    Explicit(GmmModel),
}

impl ModelSpec {
    /// The model and, for presets, the preset's sample size.
    pub fn resolve(&self) -> Result<(GmmModel, Option<usize>)> {
        match self {
            ModelSpec::Preset { figure, params } => {
                let p = preset_model(*figure, params.clone())?;
                Ok((p.model, Some(p.n)))
            }
            ModelSpec::Explicit(m) => Ok((m.clone(), None)),
        }
    }
}

fn observed_labels() -> LabelMode {
    LabelMode::Corrupted
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    /// Free-form coordinates echoed into aggregates (e.g. `n`, `eta`).
    #[serde(default)]
    pub coords: BTreeMap<String, f64>,
    pub model: ModelSpec,
    /// Required for explicit models; presets fall back to their own `n`.
    #[serde(default)]
    pub n: Option<usize>,
    /// Ridge parameters; `0` is the min-norm interpolator.
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default)]
    pub ls: bool,
    #[serde(default)]
    pub svm: bool,
    #[serde(default)]
    pub averaging: bool,
    #[serde(default = "observed_labels")]
    pub labels: LabelMode,
    /// Weight coordinates recorded for every `τ`.
    #[serde(default)]
    pub track: Vec<usize>,
}

impl GridPoint {
    pub fn new(model: ModelSpec) -> Self {
        GridPoint {
            coords: BTreeMap::new(),
            model,
            n: None,
            taus: vec![],
            ls: false,
            svm: false,
            averaging: false,
            labels: observed_labels(),
            track: vec![],
        }
    }

    pub fn coord(mut self, key: &str, value: f64) -> Self {
        self.coords.insert(key.to_string(), value);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Vec<GridPoint>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// `0` disables Monte Carlo risk.
    #[serde(default)]
    pub mc_test_samples: usize,
    /// Metric names to keep (matched before any `[`); empty keeps all.
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn new(grid: Vec<GridPoint>, trials: usize, base_seed: u64) -> Self {
        SweepConfig {
            grid,
            trials,
            base_seed,
            mc_test_samples: 0,
            outputs: vec![],
            threads: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(GmmError::InvalidInput("trials must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(GmmError::InvalidInput("sweep grid is empty".into()));
        }
        for (i, pt) in self.grid.iter().enumerate() {
            if pt.taus.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
                return Err(GmmError::InvalidInput(format!("grid point {i}: taus must be finite and non-negative")));
            }
            if !(pt.ls || pt.svm || pt.averaging || !pt.taus.is_empty()) {
                return Err(GmmError::InvalidInput(format!("grid point {i} requests no estimator")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub seed: u64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub conditions: BTreeMap<String, bool>,
}

impl TrialRecord {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; `0` for a single value.
    pub std: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat {
            mean,
            std,
            count: values.len(),
        })
    }

    pub fn std_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAggregate {
    pub point: usize,
    pub coords: BTreeMap<String, f64>,
    pub failed_trials: usize,
    pub stats: BTreeMap<String, Stat>,
}

impl PointAggregate {
    pub fn stat(&self, key: &str) -> Option<Stat> {
        self.stats.get(key).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<PointAggregate>,
}

impl SweepResult {
    pub fn records_for(&self, point: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.point == point)
    }
}

/// Per-point mean and sample std of every metric, in trial order.
pub fn aggregate(config: &SweepConfig, records: &[TrialRecord]) -> Vec<PointAggregate> {
    config
        .grid
        .iter()
        .enumerate()
        .map(|(point, pt)| {
            let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            let mut failed_trials = 0;
            for r in records.iter().filter(|r| r.point == point) {
                failed_trials += usize::from(r.failed);
                for (k, &v) in &r.metrics {
                    values.entry(k.as_str()).or_default().push(v);
                }
            }
            PointAggregate {
                point,
                coords: pt.coords.clone(),
                failed_trials,
                stats: values
                    .into_iter()
                    .filter_map(|(k, v)| Stat::of(&v).map(|s| (k.to_string(), s)))
                    .collect(),
            }
        })
        .collect()
}

struct ResolvedPoint {
    model: GmmModel,
    n: usize,
    conditions: BTreeMap<String, bool>,
}

fn resolve_point(i: usize, pt: &GridPoint) -> Result<ResolvedPoint> {
    let (model, preset_n) = pt.model.resolve()?;
    let n = pt
        .n
        .or(preset_n)
        .ok_or_else(|| GmmError::InvalidInput(format!("grid point {i}: n is required for an explicit model")))?;
    if n == 0 {
        return Err(GmmError::InvalidInput(format!("grid point {i}: n must be at least 1")));
    }
    if let Some(&j) = pt.track.iter().find(|&&j| j >= model.dim()) {
        return Err(GmmError::InvalidInput(format!("grid point {i}: tracked coordinate {j} out of range")));
    }
    let c = Constants::new();
    let mut conditions = BTreeMap::new();
    if n >= 2 {
        if let Ok(r) = check_thm1(&model, n, &c) {
            conditions.insert("thm1".to_string(), r.all_hold);
        }
    }
    if let Ok(r) = check_thm2(&model, n, &c) {
        conditions.insert("thm2".to_string(), r.all_hold);
    }
    if let Ok(r) = check_positive_correlation(&model, n, 0.0, &c) {
        conditions.insert("positive_correlation".to_string(), r.all_hold);
    }
    Ok(ResolvedPoint { model, n, conditions })
}

fn risk_of(w: &DVector<f64>, model: &GmmModel) -> Result<f64> {
    if model.flip_prob() > 0.0 {
        noisy_risk(w, model).map(|r| r.exact)
    } else {
        exact_risk(w, model).map(|r| r.exact)
    }
}

fn keep(outputs: &[String], key: &str) -> bool {
    let base = key.split('[').next().unwrap_or(key);
    outputs.is_empty() || outputs.iter().any(|o| o == base)
}

fn run_trial(config: &SweepConfig, point: usize, pt: &GridPoint, rp: &ResolvedPoint, trial: usize) -> TrialRecord {
    let seed = derive(config.base_seed, point as u64, trial as u64);
    let mut rec = TrialRecord {
        point,
        trial,
        seed,
        failed: false,
        failures: vec![],
        metrics: BTreeMap::new(),
        conditions: rp.conditions.clone(),
    };
    let ds = match sample_dataset(&rp.model, rp.n, seed) {
        Ok(ds) => ds,
        Err(e) => {
            rec.failed = true;
            rec.failures.push(format!("sample: {e}"));
            return rec;
        }
    };
    let model = &rp.model;
    let mut fitted: Vec<(String, DVector<f64>)> = vec![];
    let fail = |rec: &mut TrialRecord, what: &str, e: GmmError| {
        rec.failed = true;
        rec.failures.push(format!("{what}: {e}"));
    };

    let ls = if pt.ls || pt.svm {
        match min_norm_ls(&ds, pt.labels) {
            Ok(c) => Some(c),
            Err(e) => {
                if pt.ls {
                    fail(&mut rec, "ls", e);
                }
                None
            }
        }
    } else {
        None
    };
    if pt.ls {
        if let Some(c) = &ls {
            fitted.push(("ls".into(), c.w.clone()));
        }
    }
    if pt.svm {
        match hard_margin_svm(&ds, pt.labels, SvmOptions::default()) {
            Ok(sol) => {
                rec.metrics.insert("sv_fraction".into(), support_vector_fraction(&sol));
                rec.metrics.insert("duality_gap".into(), sol.duality_gap());
                if let Some(ls) = &ls {
                    if let Ok(cert) = duality_certificate(&ds, pt.labels) {
                        let eq = equivalence(&sol, ls, &cert, EQUIVALENCE_TOL);
                        rec.metrics.insert("svm_ls_rel_distance".into(), eq.rel_distance);
                        rec.metrics.insert("svm_equals_ls".into(), f64::from(u8::from(eq.equal)));
                        rec.metrics
                            .insert("certificate_all_positive".into(), f64::from(u8::from(certificate_all_positive(&cert))));
                    }
                }
                fitted.push(("svm".into(), sol.classifier.w));
            }
            Err(e) => fail(&mut rec, "svm", e),
        }
    }
    if pt.averaging {
        match averaging(&ds, pt.labels) {
            Ok(c) => fitted.push(("avg".into(), c.w)),
            Err(e) => fail(&mut rec, "avg", e),
        }
    }
    for (i, &tau) in pt.taus.iter().enumerate() {
        match ridge_or_ls(&ds, tau, pt.labels) {
            Ok(c) => {
                let norm = c.w.norm();
                for &j in &pt.track {
                    rec.metrics.insert(format!("w_tau[{i}][{j}]"), c.w[j]);
                    if norm > 0.0 {
                        rec.metrics.insert(format!("u_tau[{i}][{j}]"), c.w[j] / norm);
                    }
                }
                fitted.push((format!("tau[{i}]"), c.w));
            }
            Err(e) => fail(&mut rec, &format!("tau[{i}]"), e),
        }
    }

    for (k, (name, w)) in fitted.iter().enumerate() {
        match risk_of(w, model) {
            Ok(r) => {
                rec.metrics.insert(format!("risk_{name}"), r);
            }
            Err(e) => fail(&mut rec, &format!("risk_{name}"), e),
        }
        if config.mc_test_samples > 0 {
            match monte_carlo_risk(w, model, config.mc_test_samples, derive(seed, 0x4d43, k as u64)) {
                Ok(r) => {
                    rec.metrics.insert(format!("mc_risk_{name}"), r.risk);
                }
                Err(e) => fail(&mut rec, &format!("mc_risk_{name}"), e),
            }
        }
    }
    rec.metrics.retain(|k, _| keep(&config.outputs, k));
    rec
}

/// Run every (point, trial) pair. Records come back sorted by
/// `(point, trial)` and do not depend on the thread count.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let resolved: Vec<ResolvedPoint> = config
        .grid
        .iter()
        .enumerate()
        .map(|(i, pt)| resolve_point(i, pt))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..config.grid.len())
        .flat_map(|p| (0..config.trials).map(move |t| (p, t)))
        .collect();
    let work = || -> Vec<TrialRecord> {
        jobs.par_iter()
            .map(|&(p, t)| run_trial(config, p, &config.grid[p], &resolved[p], t))
            .collect()
    };
    let records = match config.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| GmmError::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let aggregates = aggregate(config, &records);
    Ok(SweepResult {
        config: config.clone(),
        records,
        aggregates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) if v.is_nan() => String::new(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// One CSV table feeding one figure panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Panel {
    fn new(name: &str, columns: &[&str]) -> Self {
        Panel {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| GmmError::InvalidInput(format!("panel {} has no column '{name}'", self.name)))
    }

    /// Numeric values of a column; text cells become NaN.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn text(&self, name: &str) -> Result<Vec<String>> {
        let j = self.column(name)?;
        Ok(self.rows.iter().map(|r| r[j].render()).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| GmmError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Max over a common grid of the spread (max − min) between curves, after
/// linear interpolation. Curves are the groups of `group_column`.
pub fn collapse_score(panel: &Panel, group_column: &str, x_column: &str, y_column: &str) -> Result<f64> {
    let g = panel.text(group_column)?;
    let x = panel.values(x_column)?;
    let y = panel.values(y_column)?;
    let mut curves: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for i in 0..g.len() {
        if x[i].is_finite() && y[i].is_finite() {
            curves.entry(g[i].as_str()).or_default().push((x[i], y[i]));
        }
    }
    let mut curves: Vec<Vec<(f64, f64)>> = curves.into_values().collect();
    for c in &mut curves {
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    if curves.len() < 2 {
        return Err(GmmError::NoOverlap("fewer than two curves".into()));
    }
    let lo = curves.iter().map(|c| c[0].0).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves.iter().map(|c| c[c.len() - 1].0).fold(f64::INFINITY, f64::min);
    if !(lo <= hi) {
        return Err(GmmError::NoOverlap(format!("x ranges do not overlap ({lo} > {hi})")));
    }
    const GRID: usize = 50;
    let mut score: f64 = 0.0;
    for k in 0..GRID {
        let t = if lo == hi { lo } else { lo + (hi - lo) * k as f64 / (GRID - 1) as f64 };
        let vals: Vec<f64> = curves.iter().map(|c| interpolate(c, t)).collect();
        let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - vals.iter().cloned().fold(f64::INFINITY, f64::min);
        score = score.max(spread);
    }
    Ok(score)
}

fn interpolate(c: &[(f64, f64)], t: f64) -> f64 {
    let j = c.partition_point(|&(x, _)| x < t);
    if j == 0 {
        return c[0].1;
    }
    if j == c.len() {
        return c[c.len() - 1].1;
    }
    let (x0, y0) = c[j - 1];
    let (x1, y1) = c[j];
    if x1 == x0 {
        y1
    } else {
        y0 + (y1 - y0) * (t - x0) / (x1 - x0)
    }
}

/// Knobs a figure run may change. Setting a scalar in `params` pins that
/// axis to one value unless the matching grid is also given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureOverrides {
    pub trials: Option<usize>,
    pub base_seed: Option<u64>,
    pub threads: Option<usize>,
    pub mc_test_samples: Option<usize>,
    #[serde(default)]
    pub params: PresetParams,
    pub n_grid: Option<Vec<usize>>,
    pub p_grid: Option<Vec<usize>>,
    pub eta_grid: Option<Vec<f64>>,
    pub alpha_grid: Option<Vec<f64>>,
    pub placements: Option<Vec<MeanPlacement>>,
    pub taus: Option<Vec<f64>>,
}

impl FigureOverrides {
    pub fn trials(mut self, trials: usize) -> Self {
        self.trials = Some(trials);
        self
    }

    pub fn p_grid(mut self, grid: Vec<usize>) -> Self {
        self.p_grid = Some(grid);
        self
    }

    pub fn eta_grid(mut self, grid: Vec<f64>) -> Self {
        self.eta_grid = Some(grid);
        self
    }

    pub fn n_grid(mut self, grid: Vec<usize>) -> Self {
        self.n_grid = Some(grid);
        self
    }

    pub fn alpha_grid(mut self, grid: Vec<f64>) -> Self {
        self.alpha_grid = Some(grid);
        self
    }

    pub fn taus(mut self, taus: Vec<f64>) -> Self {
        self.taus = Some(taus);
        self
    }
}

fn axis<T: Clone>(grid: &Option<Vec<T>>, fixed: Option<T>, default: &[T]) -> Vec<T> {
    match (grid, fixed) {
        (Some(g), _) => g.clone(),
        (None, Some(v)) => vec![v],
        (None, None) => default.to_vec(),
    }
}

fn placement_index(p: MeanPlacement) -> f64 {
    match p {
        MeanPlacement::Last => 0.0,
        MeanPlacement::First => 1.0,
        MeanPlacement::Equal => 2.0,
    }
}

fn placement_panel(p: MeanPlacement) -> &'static str {
    match p {
        MeanPlacement::Last => "left",
        MeanPlacement::First => "middle",
        MeanPlacement::Equal => "right",
    }
}

/// The sweep a figure runs, before execution.
pub fn figure_config(figure: FigureId, overrides: &FigureOverrides) -> Result<SweepConfig> {
    let base = preset_model(figure, overrides.params.clone())?;
    let d = &base.defaults;
    let prm = &overrides.params;
    let mut grid = vec![];
    let mut point = |params: PresetParams, coords: &[(&str, f64)]| -> Result<()> {
        let preset = preset_model(figure, params.clone())?;
        let mut pt = GridPoint::new(ModelSpec::Preset { figure, params });
        for &(k, v) in coords {
            pt.coords.insert(k.to_string(), v);
        }
        pt.n = Some(preset.n);
        pt.ls = preset.defaults.ls;
        pt.svm = preset.defaults.svm;
        pt.averaging = preset.defaults.averaging;
        pt.taus = overrides.taus.clone().unwrap_or_else(|| preset.defaults.taus.clone());
        if figure == FigureId::Fig5 {
            let p = preset.model.dim();
            pt.track = vec![0, 1, p - 1];
        }
        grid.push(pt);
        Ok(())
    };
    match figure {
        FigureId::Fig1 => {
            for eta in axis(&overrides.eta_grid, prm.eta, &d.eta_grid) {
                for n in axis(&overrides.n_grid, prm.n, &d.n_grid) {
                    point(prm.clone().eta(eta).n(n), &[("eta", eta), ("n", n as f64)])?;
                }
            }
        }
        FigureId::Fig2 | FigureId::Fig3 => {
            for eta in axis(&overrides.eta_grid, prm.eta, &d.eta_grid) {
                for p in axis(&overrides.p_grid, prm.p, &d.p_grid) {
                    point(prm.clone().eta(eta).p(p), &[("eta", eta), ("p", p as f64)])?;
                }
            }
        }
        FigureId::Fig4 => {
            for pl in axis(&overrides.placements, prm.placement, &d.placements) {
                for p in axis(&overrides.p_grid, prm.p, &d.p_grid) {
                    point(
                        prm.clone().placement(pl).p(p),
                        &[("placement", placement_index(pl)), ("p", p as f64)],
                    )?;
                }
            }
        }
        FigureId::Fig5 => {
            for a in axis(&overrides.alpha_grid, prm.alpha, &d.alpha_grid) {
                point(prm.clone().alpha(a), &[("alpha", a)])?;
            }
        }
        FigureId::Fig6a | FigureId::Fig6b => {
            for p in axis(&overrides.p_grid, prm.p, &d.p_grid) {
                point(prm.clone().p(p), &[("p", p as f64)])?;
            }
        }
    }
    Ok(SweepConfig {
        grid,
        trials: overrides.trials.unwrap_or(d.trials),
        base_seed: overrides.base_seed.unwrap_or(0),
        mc_test_samples: overrides.mc_test_samples.unwrap_or(0),
        outputs: vec![],
        threads: overrides.threads,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureOutput {
    pub figure: FigureId,
    pub result: SweepResult,
    pub panels: Vec<Panel>,
}

impl FigureOutput {
    pub fn panel(&self, name: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.name == name)
    }

    /// Write `<figure>_<panel>.csv` for every panel plus
    /// `<figure>_summary.json` (config echo and aggregates).
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = vec![];
        for p in &self.panels {
            let path = dir.join(format!("{}_{}.csv", self.figure, p.name));
            std::fs::write(&path, p.to_csv()?)?;
            out.push(path);
        }
        let path = dir.join(format!("{}_summary.json", self.figure));
        let summary = serde_json::json!({
            "figure": self.figure,
            "config": self.result.config,
            "aggregates": self.result.aggregates,
        });
        std::fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
        out.push(path);
        Ok(out)
    }
}

fn num(v: f64) -> Cell {
    Cell::Num(v)
}

fn int(v: f64) -> Cell {
    Cell::Int(v.round() as i64)
}

fn mean_std(a: &PointAggregate, key: &str) -> [Cell; 2] {
    match a.stat(key) {
        Some(s) => [num(s.mean), num(s.std)],
        None => [num(f64::NAN), num(f64::NAN)],
    }
}

/// Run a figure preset and tabulate its panels.
pub fn figure(figure: FigureId, overrides: &FigureOverrides) -> Result<FigureOutput> {
    let config = figure_config(figure, overrides)?;
    let result = run_sweep(&config)?;
    let panels = figure_panels(figure, &result)?;
    Ok(FigureOutput { figure, result, panels })
}

fn point_model(result: &SweepResult, point: usize) -> Result<(GmmModel, usize)> {
    let pt = &result.config.grid[point];
    let (m, n) = pt.model.resolve()?;
    Ok((m, pt.n.or(n).unwrap_or(0)))
}

/// Tables for each panel of a figure from its sweep result.
pub fn figure_panels(figure: FigureId, result: &SweepResult) -> Result<Vec<Panel>> {
    let aggs = &result.aggregates;
    let grid = &result.config.grid;
    let c = |a: &PointAggregate, k: &str| a.coords.get(k).copied().unwrap_or(f64::NAN);
    let mut panels = vec![];
    match figure {
        FigureId::Fig1 => {
            let cols = ["n", "eta", "raw_x", "rescaled_x", "sv_fraction_mean", "sv_fraction_std"];
            let mut table = Panel::new("left", &cols);
            for a in aggs {
                let (model, n) = point_model(result, a.point)?;
                let nf = n as f64;
                let rescaled = nf * (2.0 * nf).ln().sqrt() * model.sigma() / model.spectrum().l1();
                let [m, s] = mean_std(a, "sv_fraction");
                table.rows.push(vec![int(nf), num(c(a, "eta")), num(nf), num(rescaled), m, s]);
            }
            let mut right = table.clone();
            right.name = "right".into();
            panels.push(table);
            panels.push(right);
        }
        FigureId::Fig2 => {
            let cols = ["p", "eta_norm_sq", "ls_risk_mean", "ls_risk_std", "neg_log_risk_mean", "neg_log_risk_std"];
            let mut left = Panel::new("left", &cols);
            let mut middle = Panel::new("middle", &cols);
            let mut right = Panel::new("right", &cols);
            for a in aggs {
                let neg_log: Vec<f64> = result
                    .records_for(a.point)
                    .filter_map(|r| r.metric("risk_ls"))
                    .map(|r| -r.ln())
                    .collect();
                let nl = Stat::of(&neg_log);
                let [m, s] = mean_std(a, "risk_ls");
                let row = vec![
                    int(c(a, "p")),
                    num(c(a, "eta")),
                    m,
                    s,
                    num(nl.map_or(f64::NAN, |s| s.mean)),
                    num(nl.map_or(f64::NAN, |s| s.std)),
                ];
                let n = grid[a.point].n.unwrap_or(1) as f64;
                if c(a, "eta") > c(a, "p") / n {
                    middle.rows.push(row.clone());
                } else {
                    right.rows.push(row.clone());
                }
                left.rows.push(row);
            }
            panels.extend([left, middle, right]);
        }
        FigureId::Fig3 => {
            let mut left = Panel::new(
                "left",
                &["p", "eta", "ls_risk_mean", "ls_risk_std", "svm_risk_mean", "svm_risk_std"],
            );
            let mut right = Panel::new("right", &["p", "eta", "sv_fraction_mean", "sv_fraction_std"]);
            for a in aggs {
                let [lm, ls] = mean_std(a, "risk_ls");
                let [sm, ss] = mean_std(a, "risk_svm");
                left.rows.push(vec![int(c(a, "p")), num(c(a, "eta")), lm, ls, sm, ss]);
                let [fm, fs] = mean_std(a, "sv_fraction");
                right.rows.push(vec![int(c(a, "p")), num(c(a, "eta")), fm, fs]);
            }
            panels.extend([left, right]);
        }
        FigureId::Fig4 => {
            for pl in [MeanPlacement::Last, MeanPlacement::First, MeanPlacement::Equal] {
                let mut t = Panel::new(placement_panel(pl), &["p", "estimator", "tau", "risk_mean", "risk_std"]);
                for a in aggs.iter().filter(|a| c(a, "placement") == placement_index(pl)) {
                    push_tau_rows(&mut t, a, &grid[a.point], |row| {
                        let mut r = vec![int(c(a, "p"))];
                        r.extend(row);
                        r
                    });
                }
                if !t.rows.is_empty() {
                    panels.push(t);
                }
            }
        }
        FigureId::Fig5 => {
            let mut left = Panel::new("left", &["alpha", "tau", "risk_mean", "risk_std"]);
            let mut coords: Vec<Panel> = ["eta1", "eta2", "etap"]
                .iter()
                .map(|name| Panel::new(name, &["alpha", "tau", "value_mean", "value_std", "unit_mean", "unit_std"]))
                .collect();
            for a in aggs {
                let pt = &grid[a.point];
                for (i, &tau) in pt.taus.iter().enumerate() {
                    let [m, s] = mean_std(a, &format!("risk_tau[{i}]"));
                    left.rows.push(vec![num(c(a, "alpha")), num(tau), m, s]);
                    for (panel, &j) in coords.iter_mut().zip(&pt.track) {
                        let [vm, vs] = mean_std(a, &format!("w_tau[{i}][{j}]"));
                        let [um, us] = mean_std(a, &format!("u_tau[{i}][{j}]"));
                        panel.rows.push(vec![num(c(a, "alpha")), num(tau), vm, vs, um, us]);
                    }
                }
            }
            panels.push(left);
            panels.extend(coords);
        }
        FigureId::Fig6a => {
            let mut t = Panel::new("main", &["p", "tau", "tau_over_n", "risk_mean", "risk_std"]);
            for a in aggs {
                let pt = &grid[a.point];
                let n = pt.n.unwrap_or(1) as f64;
                for (i, &tau) in pt.taus.iter().enumerate() {
                    let [m, s] = mean_std(a, &format!("risk_tau[{i}]"));
                    t.rows.push(vec![int(c(a, "p")), num(tau), num(tau / n), m, s]);
                }
            }
            panels.push(t);
        }
        FigureId::Fig6b => {
            let cols = ["p", "estimator", "tau", "risk_mean", "risk_std"];
            let mut left = Panel::new("left", &cols);
            let mut right = Panel::new("right", &cols);
            for a in aggs {
                let p = c(a, "p");
                let mut rows = vec![];
                push_rows_into(&mut rows, a, &grid[a.point]);
                for row in rows {
                    let mut r = vec![int(p)];
                    r.extend(row);
                    if p >= 600.0 {
                        right.rows.push(r.clone());
                    }
                    left.rows.push(r);
                }
            }
            panels.extend([left, right]);
        }
    }
    Ok(panels)
}

/// `[estimator, tau, mean, std]` rows for each fitted estimator of a point.
fn push_rows_into(rows: &mut Vec<Vec<Cell>>, a: &PointAggregate, pt: &GridPoint) {
    for (i, &tau) in pt.taus.iter().enumerate() {
        let [m, s] = mean_std(a, &format!("risk_tau[{i}]"));
        let name = if tau == 0.0 { "ls" } else { "ridge" };
        rows.push(vec![Cell::Text(name.into()), num(tau), m, s]);
    }
    for (key, name) in [("risk_ls", "ls"), ("risk_avg", "averaging"), ("risk_svm", "svm")] {
        let requested = match name {
            "ls" => pt.ls,
            "averaging" => pt.averaging,
            _ => pt.svm,
        };
        if requested {
            let [m, s] = mean_std(a, key);
            let tau = if name == "ls" { 0.0 } else { f64::NAN };
            rows.push(vec![Cell::Text(name.into()), num(tau), m, s]);
        }
    }
}

fn push_tau_rows(t: &mut Panel, a: &PointAggregate, pt: &GridPoint, wrap: impl Fn(Vec<Cell>) -> Vec<Cell>) {
    let mut rows = vec![];
    push_rows_into(&mut rows, a, pt);
    t.rows.extend(rows.into_iter().map(wrap));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curve_panel(curves: &[(&str, Vec<(f64, f64)>)]) -> Panel {
        let mut p = Panel::new("t", &["g", "x", "y"]);
        for (g, pts) in curves {
            for &(x, y) in pts {
                p.rows.push(vec![Cell::Text(g.to_string()), num(x), num(y)]);
            }
        }
        p
    }

    #[test]
    fn collapse_score_examples() {
        let a: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (i as f64).sin())).collect();
        let p = curve_panel(&[("a", a.clone()), ("b", a.clone())]);
        assert_eq!(collapse_score(&p, "g", "x", "y").unwrap(), 0.0);

        let b: Vec<(f64, f64)> = a.iter().map(|&(x, y)| (x, y + 0.2)).collect();
        let p = curve_panel(&[("a", a.clone()), ("b", b)]);
        assert_relative_eq!(collapse_score(&p, "g", "x", "y").unwrap(), 0.2, max_relative = 1e-12);

        let far: Vec<(f64, f64)> = a.iter().map(|&(x, y)| (x + 100.0, y)).collect();
        let p = curve_panel(&[("a", a.clone()), ("b", far)]);
        assert!(matches!(collapse_score(&p, "g", "x", "y"), Err(GmmError::NoOverlap(_))));
        let p = curve_panel(&[("a", a)]);
        assert!(matches!(collapse_score(&p, "g", "x", "y"), Err(GmmError::NoOverlap(_))));
    }

    #[test]
    fn interpolation_on_unequal_grids() {
        let a = vec![(0.0, 0.0), (2.0, 2.0)];
        let b = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)];
        let p = curve_panel(&[("a", a), ("b", b)]);
        assert!(collapse_score(&p, "g", "x", "y").unwrap() < 1e-12);
    }

    fn small_config() -> SweepConfig {
        let model = GmmModel::isotropic(vec![0.3; 40]).unwrap();
        let mut pt = GridPoint::new(ModelSpec::Explicit(model)).coord("p", 40.0);
        pt.n = Some(10);
        pt.ls = true;
        pt.svm = true;
        pt.averaging = true;
        pt.taus = vec![0.0, 1.0, 100.0];
        pt.track = vec![0, 39];
        let mut c = SweepConfig::new(vec![pt.clone(), pt.coord("p", 41.0)], 4, 7);
        c.mc_test_samples = 2000;
        c
    }

    #[test]
    fn sweep_is_deterministic_across_thread_counts() {
        let mut c = small_config();
        c.threads = Some(1);
        let a = run_sweep(&c).unwrap();
        c.threads = Some(3);
        let b = run_sweep(&c).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.aggregates, b.aggregates);
        let csv = |r: &SweepResult| figure_panels(FigureId::Fig6a, r).unwrap()[0].to_csv().unwrap();
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.records.len(), 8);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!((r.point, r.trial), (i / 4, i % 4));
            assert_eq!(r.seed, derive(7, r.point as u64, r.trial as u64));
            assert!(!r.failed, "{:?}", r.failures);
        }
        let rec = &a.records[0];
        for key in ["risk_ls", "risk_svm", "risk_avg", "risk_tau[2]", "mc_risk_svm", "sv_fraction", "w_tau[1][39]"] {
            assert!(rec.metric(key).is_some(), "{key}");
        }
        assert_eq!(rec.metric("risk_ls"), rec.metric("risk_tau[0]"));
    }

    #[test]
    fn aggregates_recompute_from_records() {
        let r = run_sweep(&small_config()).unwrap();
        let again = aggregate(&r.config, &r.records);
        for (a, b) in r.aggregates.iter().zip(&again) {
            for (k, s) in &a.stats {
                let t = b.stats[k];
                assert!((s.mean - t.mean).abs() <= 1e-12 * s.mean.abs().max(1.0));
                assert!((s.std - t.std).abs() <= 1e-12 * s.std.abs().max(1.0));
            }
        }
        let vals: Vec<f64> = r.records_for(0).map(|t| t.metric("risk_ls").unwrap()).collect();
        let s = r.aggregates[0].stat("risk_ls").unwrap();
        let mean = vals.iter().sum::<f64>() / 4.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert_relative_eq!(s.mean, mean, max_relative = 1e-14);
        assert_relative_eq!(s.std, var.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let model = GmmModel::isotropic(vec![0.3; 5]).unwrap();
        let mut pt = GridPoint::new(ModelSpec::Explicit(model));
        pt.n = Some(20);
        pt.ls = true;
        pt.averaging = true;
        let r = run_sweep(&SweepConfig::new(vec![pt], 2, 0)).unwrap();
        assert!(r.records.iter().all(|t| t.failed && t.metric("risk_avg").is_some()));
        assert_eq!(r.aggregates[0].failed_trials, 2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small_config();
        c.trials = 0;
        assert!(run_sweep(&c).is_err());
        let mut c = small_config();
        c.grid.clear();
        assert!(run_sweep(&c).is_err());
        let mut c = small_config();
        c.grid[0].n = None;
        assert!(run_sweep(&c).is_err());
        let json = r#"{"grid": [], "trials": 1, "bogus": 1}"#;
        assert!(serde_json::from_str::<SweepConfig>(json).is_err());
    }

    #[test]
    fn outputs_filter_metrics() {
        let mut c = small_config();
        c.outputs = vec!["risk_tau".into()];
        let r = run_sweep(&c).unwrap();
        assert!(r.records[0].metrics.keys().all(|k| k.starts_with("risk_tau[")));
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = figure_config(FigureId::Fig4, &FigureOverrides::default().trials(2)).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: SweepConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.grid.len(), 15);
    }

    #[test]
    fn fig1_panels_have_documented_columns() {
        let o = FigureOverrides::default().trials(2).n_grid(vec![25, 50]).eta_grid(vec![0.1, 0.3]);
        let out = figure(FigureId::Fig1, &o).unwrap();
        let left = out.panel("left").unwrap();
        assert_eq!(
            left.columns,
            ["n", "eta", "raw_x", "rescaled_x", "sv_fraction_mean", "sv_fraction_std"]
        );
        assert_eq!(left.rows.len(), 4);
        let model = preset_model(FigureId::Fig1, PresetParams::default().eta(0.3)).unwrap().model;
        let x = left.values("rescaled_x").unwrap()[3];
        assert_relative_eq!(x, 50.0 * 100f64.ln().sqrt() * model.sigma() / model.spectrum().l1(), max_relative = 1e-12);
        let csv = left.to_csv().unwrap();
        assert!(csv.starts_with("n,eta,raw_x,rescaled_x,sv_fraction_mean,sv_fraction_std\n25,1.0000000000000001e-1,"));

        let dir = tempfile::tempdir().unwrap();
        let files = out.write(dir.path()).unwrap();
        let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["fig1_left.csv", "fig1_right.csv", "fig1_summary.json"]);
    }

    #[test]
    fn every_figure_tabulates() {
        let small = |f: FigureId| -> FigureOverrides {
            let mut o = FigureOverrides::default().trials(1);
            match f {
                FigureId::Fig1 => o.n_grid = Some(vec![20]),
                FigureId::Fig5 => o.taus = Some(vec![1e2, 1e4]),
                FigureId::Fig6a | FigureId::Fig6b => o.p_grid = Some(vec![100, 700]),
                _ => o.p_grid = Some(vec![300]),
            }
            o
        };
        for f in FigureId::ALL {
            let out = figure(f, &small(f)).unwrap();
            assert!(!out.panels.is_empty(), "{f}");
            for p in &out.panels {
                for row in &p.rows {
                    assert_eq!(row.len(), p.columns.len());
                }
            }
        }
    }
}
