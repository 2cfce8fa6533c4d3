//! Generating configurations of the six simulation figures.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{GmmModel, Spectrum};
use crate::error::{GmmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6a,
    Fig6b,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Fig1,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::Fig6a,
        FigureId::Fig6b,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6a => "fig6a",
            FigureId::Fig6b => "fig6b",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = GmmError;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| GmmError::UnknownFigure(s.to_string()))
    }
}

/// Where the mean vector puts its mass (Fig. 4 panels).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanPlacement {
    /// All entries equal.
    #[default]
    Equal,
    /// Only the first entry non-zero.
    First,
    /// Only the last entry non-zero.
    Last,
}

impl FromStr for MeanPlacement {
    type Err = GmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(MeanPlacement::Equal),
            "first" => Ok(MeanPlacement::First),
            "last" => Ok(MeanPlacement::Last),
            other => Err(GmmError::InvalidInput(format!(
                "placement must be equal, first or last, got '{other}'"
            ))),
        }
    }
}

/// Free parameters of a preset. Unset fields take the figure's default.
///
/// `eta` is figure specific:
/// fig1/fig3 the common entry `η_i`; fig2 the squared norm `‖η‖²`;
/// fig4 the factor `c` in `‖η‖² = c² p`; fig5/fig6a the last entry `η_p`;
/// fig6b the factor `c` in `η_p = c √50 p^0.6`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetParams {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub eta: Option<f64>,
    /// Fig. 5 share of the trace carried by `λ₁`.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Fig. 4 mean placement.
    #[serde(default)]
    pub placement: Option<MeanPlacement>,
}

impl PresetParams {
    pub fn p(mut self, p: usize) -> Self {
        self.p = Some(p);
        self
    }

    pub fn n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn placement(mut self, placement: MeanPlacement) -> Self {
        self.placement = Some(placement);
        self
    }
}

/// Grids a figure sweeps over by default. Empty grids are not swept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDefaults {
    pub n_grid: Vec<usize>,
    pub p_grid: Vec<usize>,
    pub eta_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub placements: Vec<MeanPlacement>,
    /// Ridge parameters; `0` means the min-norm interpolator.
    pub taus: Vec<f64>,
    pub ls: bool,
    pub svm: bool,
    pub averaging: bool,
    pub trials: usize,
}

impl SweepDefaults {
    fn base() -> Self {
        SweepDefaults {
            n_grid: vec![],
            p_grid: vec![],
            eta_grid: vec![],
            alpha_grid: vec![],
            placements: vec![],
            taus: vec![],
            ls: false,
            svm: false,
            averaging: false,
            trials: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub figure: FigureId,
    pub model: GmmModel,
    pub n: usize,
    pub params: PresetParams,
    pub defaults: SweepDefaults,
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

fn one_hot(p: usize, index: usize, value: f64) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[index] = value;
    v
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(GmmError::InvalidInput(msg.into()))
    }
}

/// Bi-level spectrum of Fig. 6: `λ₂ = … = λ_p = 50`, `λ₁ = 10 ‖λ‖₋₁`.
fn fig6_spectrum(p: usize) -> Vec<f64> {
    let mut v = vec![50.0; p];
    v[0] = 10.0 * 50.0 * (p - 1) as f64;
    v
}

fn diagonal(beta: Vec<f64>, spectrum: Vec<f64>) -> Result<GmmModel> {
    GmmModel::new(DVector::from_vec(beta), None, Spectrum::new(spectrum)?, 0.5, 0.0)
}

/// Build the model a figure is generated from.
pub fn preset_model(figure: FigureId, params: PresetParams) -> Result<Preset> {
    let mut d = SweepDefaults::base();
    let (model, n) = match figure {
        FigureId::Fig1 => {
            let p = params.p.unwrap_or(1500);
            require(p >= 3, "fig1 needs p >= 3")?;
            let eta = params.eta.unwrap_or(0.1);
            let mut lam = vec![1.0; p];
            lam[0] = 7.5;
            lam[p - 1] = 0.2;
            d.n_grid = vec![25, 50, 75, 100, 125, 150];
            d.eta_grid = vec![0.1, 0.15, 0.2, 0.25, 0.3];
            d.svm = true;
            (diagonal(vec![eta; p], lam)?, params.n.unwrap_or(100))
        }
        FigureId::Fig2 => {
            let p = params.p.unwrap_or(150);
            let norm_sq = params.eta.unwrap_or(3.0);
            require(norm_sq > 0.0, "fig2 needs a positive squared mean norm")?;
            d.p_grid = vec![150, 300, 600, 1200, 2400, 4800];
            d.eta_grid = vec![3.0, 5.0, 8.0, 10.0];
            d.ls = true;
            let entry = (norm_sq / p as f64).sqrt();
            (diagonal(vec![entry; p], vec![1.0; p])?, params.n.unwrap_or(100))
        }
        FigureId::Fig3 => {
            let p = params.p.unwrap_or(1000);
            require(p >= 3, "fig3 needs p >= 3")?;
            let eta = params.eta.unwrap_or(0.1);
            let pf = p as f64;
            let l1 = 0.005 * pf;
            let lp = 0.2 * 0.995 * pf / (pf - 1.0);
            let mid = (pf - l1 - lp) / (pf - 2.0);
            let mut lam = vec![mid; p];
            lam[0] = l1;
            lam[p - 1] = lp;
            d.p_grid = vec![500, 1000, 2000, 4000];
            d.eta_grid = vec![0.1, 0.15, 0.2, 0.25];
            d.ls = true;
            d.svm = true;
            (diagonal(vec![eta; p], lam)?, params.n.unwrap_or(50))
        }
        FigureId::Fig4 => {
            let p = params.p.unwrap_or(1000);
            require(p >= 3, "fig4 needs p >= 3")?;
            let c = params.eta.unwrap_or(0.125);
            let pf = p as f64;
            let l1_sq = 0.0125 * pf;
            let lp_sq = 0.000125 * pf;
            let mut lam = vec![((pf - l1_sq - lp_sq) / (pf - 2.0)).sqrt(); p];
            lam[0] = l1_sq.sqrt();
            lam[p - 1] = lp_sq.sqrt();
            let norm = c * pf.sqrt();
            let beta = match params.placement.unwrap_or_default() {
                MeanPlacement::Equal => vec![norm / pf.sqrt(); p],
                MeanPlacement::First => one_hot(p, 0, norm),
                MeanPlacement::Last => one_hot(p, p - 1, norm),
            };
            d.p_grid = vec![250, 500, 1000, 2000, 4000];
            d.placements = vec![MeanPlacement::Last, MeanPlacement::First, MeanPlacement::Equal];
            d.taus = vec![0.0, 10.0, 100.0, 1000.0, 1e6];
            d.averaging = true;
            (diagonal(beta, lam)?, params.n.unwrap_or(100))
        }
        FigureId::Fig5 => {
            let p = params.p.unwrap_or(200);
            require(p >= 3, "fig5 needs p >= 3")?;
            let alpha = params.alpha.unwrap_or(0.005);
            require(
                alpha > 0.0 && alpha < 1.0,
                format!("fig5 alpha must lie in (0, 1), got {alpha}"),
            )?;
            let eta_p = params.eta.unwrap_or(200f64.sqrt());
            let trace = p as f64 * 150.0;
            let mut lam = vec![(1.0 - alpha) * trace / (p - 1) as f64; p];
            lam[0] = alpha * trace;
            d.alpha_grid = vec![0.005, 0.1, 0.4, 0.8];
            d.taus = log_space(1e2, 1e8, 25);
            (diagonal(one_hot(p, p - 1, eta_p), lam)?, params.n.unwrap_or(100))
        }
        FigureId::Fig6a => {
            let p = params.p.unwrap_or(500);
            require(p >= 3, "fig6a needs p >= 3")?;
            let eta_p = params.eta.unwrap_or(25.0);
            let n = params.n.unwrap_or(30);
            d.p_grid = vec![75, 100, 200, 300, 500];
            d.taus = log_space(1e-2, 1e3, 20)
                .into_iter()
                .map(|t| t * n as f64)
                .collect();
            (diagonal(one_hot(p, p - 1, eta_p), fig6_spectrum(p))?, n)
        }
        FigureId::Fig6b => {
            let p = params.p.unwrap_or(600);
            require(p >= 3, "fig6b needs p >= 3")?;
            let c = params.eta.unwrap_or(0.1);
            let eta_p = c * 50f64.sqrt() * (p as f64).powf(0.6);
            d.p_grid = vec![100, 200, 400, 600, 800, 1000, 1500, 2000];
            d.taus = vec![0.0, 10.0, 100.0, 1000.0, 10000.0];
            d.svm = true;
            (diagonal(one_hot(p, p - 1, eta_p), fig6_spectrum(p))?, params.n.unwrap_or(30))
        }
    };
    require(n >= 1, "n must be at least 1")?;
    Ok(Preset {
        figure,
        model,
        n,
        params,
        defaults: d,
    })
}
