//! Gaussian-mixture population, covariance spectra and training-set sampling.
//!
//! A model is stored in the eigenbasis of its covariance: `Σ = V Λ Vᵀ` and
//! `η = V β`. When no basis is given, `V = I`, so `Σ` is diagonal and `η = β`.

pub mod presets;

pub use presets::{preset_model, FigureId, Preset, PresetParams, SweepDefaults};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GmmError, Result};
use crate::linalg;
use crate::seeds;

/// Covariance eigenvalues, strictly positive and non-increasing.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(GmmError::InvalidModel("spectrum is empty".into()));
        }
        if let Some((i, v)) = eigenvalues
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(GmmError::InvalidModel(format!(
                "eigenvalue {i} = {v} is not strictly positive"
            )));
        }
        // Relative slack so that analytically equal eigenvalues computed by
        // different formulas are not rejected.
        for (i, w) in eigenvalues.windows(2).enumerate() {
            if w[1] > w[0] * (1.0 + 1e-12) {
                return Err(GmmError::InvalidModel(format!(
                    "spectrum is not non-increasing at index {}: {} < {}",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Spectrum(eigenvalues))
    }

    pub fn isotropic(p: usize) -> Self {
        Spectrum(vec![1.0; p])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// ‖λ‖₁
    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    /// ‖λ‖₂²
    pub fn l2_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// ‖λ‖₂
    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    /// ‖λ‖∞ (the leading eigenvalue).
    pub fn linf(&self) -> f64 {
        self.0[0]
    }

    /// ‖λ‖₋₁ = Σ_{i≥2} λᵢ.
    pub fn l1_without_first(&self) -> f64 {
        self.0[1..].iter().sum()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&v| v == 1.0)
    }
}

impl<'de> Deserialize<'de> for Spectrum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Spectrum::new(v).map_err(serde::de::Error::custom)
    }
}

/// Effective ranks `(r_k, R_k)` of a spectrum.
pub fn effective_ranks(spectrum: &Spectrum, k: usize) -> Result<(f64, f64)> {
    let vals = spectrum.values();
    if k >= vals.len() {
        return Err(GmmError::InvalidInput(format!(
            "k = {k} must be smaller than p = {}",
            vals.len()
        )));
    }
    let tail = &vals[k..];
    let sum: f64 = tail.iter().sum();
    let sum_sq: f64 = tail.iter().map(|v| v * v).sum();
    Ok((sum / tail[0], sum * sum / sum_sq))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    Balanced,
    BiLevel,
    Neither,
}

/// Thresholds for the balanced / bi-level spectrum tests. All must exceed 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConstants {
    pub b: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for EnsembleConstants {
    fn default() -> Self {
        EnsembleConstants {
            b: 1.5,
            b1: 1.5,
            b2: 1.5,
        }
    }
}

pub fn is_balanced(spectrum: &Spectrum, n: usize, b: f64) -> bool {
    b * n as f64 * spectrum.linf() <= spectrum.l1_without_first()
}

pub fn is_bilevel(spectrum: &Spectrum, n: usize, b1: f64, b2: f64) -> bool {
    let vals = spectrum.values();
    if vals.len() < 3 {
        return false;
    }
    let n = n as f64;
    let rest: f64 = vals[2..].iter().sum();
    b1 * n * vals[0] >= spectrum.l1_without_first() && b2 * n * vals[1] <= rest
}

/// Classify a spectrum. When both predicate sets hold, `Balanced` wins.
pub fn classify_ensemble(
    spectrum: &Spectrum,
    n: usize,
    constants: EnsembleConstants,
) -> Result<Ensemble> {
    let EnsembleConstants { b, b1, b2 } = constants;
    if !(b > 1.0 && b1 > 1.0 && b2 > 1.0) {
        return Err(GmmError::InvalidInput(format!(
            "ensemble constants must exceed 1, got b={b}, b1={b1}, b2={b2}"
        )));
    }
    Ok(if is_balanced(spectrum, n, b) {
        Ensemble::Balanced
    } else if is_bilevel(spectrum, n, b1, b2) {
        Ensemble::BiLevel
    } else {
        Ensemble::Neither
    })
}

/// Binary Gaussian mixture: `y = ±1` with prior `π₊`, `x | y ~ N(y η, Σ)`,
/// and observed labels flipped independently with probability `γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct GmmModel {
    beta: DVector<f64>,
    basis: Option<DMatrix<f64>>,
    spectrum: Spectrum,
    prior_plus: f64,
    flip_prob: f64,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    beta: Vec<f64>,
    spectrum: Spectrum,
    #[serde(default)]
    basis: Option<Vec<Vec<f64>>>,
    #[serde(default = "half")]
    prior_plus: f64,
    #[serde(default)]
    flip_prob: f64,
}

fn half() -> f64 {
    0.5
}

impl TryFrom<RawModel> for GmmModel {
    type Error = GmmError;

    fn try_from(raw: RawModel) -> Result<Self> {
        let basis = match raw.basis {
            None => None,
            Some(rows) => {
                let p = rows.len();
                if rows.iter().any(|r| r.len() != p) {
                    return Err(GmmError::InvalidModel("basis must be a square matrix".into()));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                Some(DMatrix::from_row_slice(p, p, &flat))
            }
        };
        GmmModel::new(
            DVector::from_vec(raw.beta),
            basis,
            raw.spectrum,
            raw.prior_plus,
            raw.flip_prob,
        )
    }
}

impl From<GmmModel> for RawModel {
    fn from(m: GmmModel) -> Self {
        RawModel {
            beta: m.beta.iter().copied().collect(),
            basis: m.basis.map(|v| {
                (0..v.nrows())
                    .map(|i| v.row(i).iter().copied().collect())
                    .collect()
            }),
            spectrum: m.spectrum,
            prior_plus: m.prior_plus,
            flip_prob: m.flip_prob,
        }
    }
}

impl GmmModel {
    pub fn new(
        beta: DVector<f64>,
        basis: Option<DMatrix<f64>>,
        spectrum: Spectrum,
        prior_plus: f64,
        flip_prob: f64,
    ) -> Result<Self> {
        let p = spectrum.len();
        if beta.len() != p {
            return Err(GmmError::InvalidModel(format!(
                "beta has length {} but the spectrum has {p} eigenvalues",
                beta.len()
            )));
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::InvalidModel("beta has non-finite entries".into()));
        }
        if !(prior_plus > 0.0 && prior_plus < 1.0) {
            return Err(GmmError::InvalidModel(format!(
                "prior_plus = {prior_plus} must lie in (0, 1)"
            )));
        }
        if !(0.0..0.5).contains(&flip_prob) {
            return Err(GmmError::InvalidModel(format!(
                "flip_prob = {flip_prob} must lie in [0, 0.5)"
            )));
        }
        if let Some(v) = &basis {
            if v.nrows() != p || v.ncols() != p {
                return Err(GmmError::InvalidModel(format!(
                    "basis must be {p}x{p}, got {}x{}",
                    v.nrows(),
                    v.ncols()
                )));
            }
            let dev = (v.transpose() * v - DMatrix::identity(p, p)).amax();
            if dev > 1e-10 {
                return Err(GmmError::InvalidModel(format!(
                    "basis is not orthogonal (max |VᵀV − I| = {dev:e})"
                )));
            }
        }
        Ok(GmmModel {
            beta,
            basis,
            spectrum,
            prior_plus,
            flip_prob,
        })
    }

    /// Diagonal covariance, balanced classes, no label noise.
    pub fn diagonal(beta: Vec<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        GmmModel::new(
            DVector::from_vec(beta),
            None,
            Spectrum::new(eigenvalues)?,
            0.5,
            0.0,
        )
    }

    /// `Σ = I`, balanced classes, no label noise.
    pub fn isotropic(eta: Vec<f64>) -> Result<Self> {
        let p = eta.len();
        GmmModel::diagonal(eta, vec![1.0; p])
    }

    pub fn with_flip_prob(mut self, flip_prob: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&flip_prob) {
            return Err(GmmError::InvalidModel(format!(
                "flip_prob = {flip_prob} must lie in [0, 0.5)"
            )));
        }
        self.flip_prob = flip_prob;
        Ok(self)
    }

    pub fn with_prior_plus(mut self, prior_plus: f64) -> Result<Self> {
        if !(prior_plus > 0.0 && prior_plus < 1.0) {
            return Err(GmmError::InvalidModel(format!(
                "prior_plus = {prior_plus} must lie in (0, 1)"
            )));
        }
        self.prior_plus = prior_plus;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn prior_plus(&self) -> f64 {
        self.prior_plus
    }

    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }

    /// True when `Σ` is diagonal in the standard basis.
    pub fn is_diagonal(&self) -> bool {
        match &self.basis {
            None => true,
            Some(v) => *v == DMatrix::identity(v.nrows(), v.ncols()),
        }
    }

    /// Mean vector `η = V β`.
    pub fn eta(&self) -> DVector<f64> {
        match &self.basis {
            None => self.beta.clone(),
            Some(v) => v * &self.beta,
        }
    }

    pub fn eta_norm_sq(&self) -> f64 {
        self.beta.norm_squared()
    }

    pub fn eta_norm(&self) -> f64 {
        self.beta.norm()
    }

    /// Signal strength in the direction of Σ, `σ² = ηᵀΣη = βᵀΛβ`.
    pub fn sigma_signal(&self) -> f64 {
        self.beta
            .iter()
            .zip(self.spectrum.values())
            .map(|(b, l)| l * b * b)
            .sum()
    }

    /// `σ = √(ηᵀΣη)`.
    pub fn sigma(&self) -> f64 {
        self.sigma_signal().sqrt()
    }

    /// `‖η‖₂⁴ / ηᵀΣη`.
    pub fn snr(&self) -> Result<f64> {
        let s2 = self.sigma_signal();
        if s2 <= 0.0 {
            return Err(GmmError::UndefinedSnr);
        }
        let e2 = self.eta_norm_sq();
        Ok(e2 * e2 / s2)
    }

    /// `wᵀ Σ w`.
    pub fn quad_form(&self, w: &DVector<f64>) -> f64 {
        let coords = match &self.basis {
            None => w.clone(),
            Some(v) => v.transpose() * w,
        };
        coords
            .iter()
            .zip(self.spectrum.values())
            .map(|(c, l)| l * c * c)
            .sum()
    }

    /// One draw of the noise vector `V Λ^{1/2} z`.
    fn draw_noise<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(self.spectrum.values()) {
            let z: f64 = rng.sample(StandardNormal);
            *o = l.sqrt() * z;
        }
        if let Some(v) = &self.basis {
            let rotated = v * DVector::from_column_slice(out);
            out.copy_from_slice(rotated.as_slice());
        }
    }

    /// Draw one labelled sample: `(x, y, y_c)`.
    pub fn draw<R: Rng>(&self, rng: &mut R, eta: &DVector<f64>, x: &mut [f64]) -> (f64, f64) {
        let y = if rng.random::<f64>() < self.prior_plus {
            1.0
        } else {
            -1.0
        };
        self.draw_noise(rng, x);
        for (xi, e) in x.iter_mut().zip(eta.iter()) {
            *xi += y * e;
        }
        let flipped = rng.random::<f64>() < self.flip_prob;
        (y, if flipped { -y } else { y })
    }
}

/// Which label vector an estimator is trained on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    #[default]
    Clean,
    Corrupted,
}

impl std::str::FromStr for LabelMode {
    type Err = GmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(LabelMode::Clean),
            "corrupted" => Ok(LabelMode::Corrupted),
            other => Err(GmmError::InvalidInput(format!(
                "labels must be 'clean' or 'corrupted', got '{other}'"
            ))),
        }
    }
}

/// A training set `X = y ηᵀ + Q` with clean and corrupted labels.
#[derive(Debug)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    y_c: DVector<f64>,
    seed: u64,
    q: Option<DMatrix<f64>>,
    gram: OnceLock<DMatrix<f64>>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        let gram = OnceLock::new();
        if let Some(g) = self.gram.get() {
            let _ = gram.set(g.clone());
        }
        Dataset {
            x: self.x.clone(),
            y: self.y.clone(),
            y_c: self.y_c.clone(),
            seed: self.seed,
            q: self.q.clone(),
            gram,
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y && self.y_c == other.y_c && self.seed == other.seed
    }
}

fn check_labels(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(GmmError::InvalidInput(format!(
            "{name} has length {} but X has {n} rows",
            v.len()
        )));
    }
    if v.iter().any(|&l| l != 1.0 && l != -1.0) {
        return Err(GmmError::InvalidInput(format!("{name} entries must be ±1")));
    }
    Ok(())
}

impl Dataset {
    /// Build a dataset from an explicit feature matrix and labels.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, y_c: DVector<f64>, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(GmmError::InvalidInput("X must be non-empty".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::InvalidInput("X has non-finite entries".into()));
        }
        check_labels("y", &y, n)?;
        check_labels("y_c", &y_c, n)?;
        Ok(Dataset {
            x,
            y,
            y_c,
            seed,
            q: None,
            gram: OnceLock::new(),
        })
    }

    /// Build `X = y ηᵀ + Q` from a noise matrix, keeping `Q`.
    pub fn from_noise(
        q: DMatrix<f64>,
        eta: &DVector<f64>,
        y: DVector<f64>,
        y_c: DVector<f64>,
        seed: u64,
    ) -> Result<Self> {
        if eta.len() != q.ncols() {
            return Err(GmmError::InvalidInput(format!(
                "eta has length {} but Q has {} columns",
                eta.len(),
                q.ncols()
            )));
        }
        let x = &y * eta.transpose() + &q;
        let mut ds = Dataset::new(x, y, y_c, seed)?;
        ds.q = Some(q);
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn y_c(&self) -> &DVector<f64> {
        &self.y_c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels(&self, mode: LabelMode) -> &DVector<f64> {
        match mode {
            LabelMode::Clean => &self.y,
            LabelMode::Corrupted => &self.y_c,
        }
    }

    /// Indices where the observed label differs from the clean one.
    pub fn flipped(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.y[i] != self.y_c[i]).collect()
    }

    /// Cached `X Xᵀ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| linalg::gram(&self.x))
    }

    /// The noise matrix `Q = X − y ηᵀ`; the sampled one when available.
    pub fn noise(&self, model: &GmmModel) -> Result<DMatrix<f64>> {
        if model.dim() != self.p() {
            return Err(GmmError::InvalidInput(format!(
                "model dimension {} does not match dataset p = {}",
                model.dim(),
                self.p()
            )));
        }
        Ok(match &self.q {
            Some(q) => q.clone(),
            None => &self.x - &self.y * model.eta().transpose(),
        })
    }
}

/// Draw `n` i.i.d. samples; identical `(model, n, seed)` gives identical output.
pub fn sample_dataset(model: &GmmModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(GmmError::InvalidInput("n must be at least 1".into()));
    }
    let p = model.dim();
    let mut rng = seeds::rng(seed);
    let zero = DVector::zeros(p);
    let mut q = vec![0.0; n * p];
    let mut y = DVector::zeros(n);
    let mut y_c = DVector::zeros(n);
    for i in 0..n {
        let (yi, yci) = model.draw(&mut rng, &zero, &mut q[i * p..(i + 1) * p]);
        y[i] = yi;
        y_c[i] = yci;
    }
    let q = DMatrix::from_row_slice(n, p, &q);
    Dataset::from_noise(q, &model.eta(), y, y_c, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig1_spectrum(p: usize) -> Vec<f64> {
        let mut v = vec![1.0; p];
        v[0] = 7.5;
        v[p - 1] = 0.2;
        v
    }

    #[test]
    fn spectrum_rejects_bad_input() {
        assert!(Spectrum::new(vec![]).is_err());
        assert!(Spectrum::new(vec![1.0, 0.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0]).is_err());
        assert!(Spectrum::new(vec![2.0, 2.0, 1.0]).is_ok());
    }

    #[test]
    fn sigma_and_snr() {
        let m = GmmModel::diagonal(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.sigma_signal(), 0.0);
        assert!(matches!(m.snr(), Err(GmmError::UndefinedSnr)));

        let m = GmmModel::isotropic(vec![1.0, -2.0, 0.5]).unwrap();
        assert_relative_eq!(m.sigma_signal(), 5.25, max_relative = 1e-15);
        assert_relative_eq!(m.snr().unwrap(), 5.25, max_relative = 1e-15);

        // λ is stored non-increasing, so β=(2,0), λ=(1,4) is expressed as β=(0,2), λ=(4,1).
        let m = GmmModel::diagonal(vec![0.0, 2.0], vec![4.0, 1.0]).unwrap();
        assert_eq!(m.sigma_signal(), 4.0);
        assert_eq!(m.snr().unwrap(), 4.0);
    }

    #[test]
    fn effective_rank_examples() {
        let s = Spectrum::new(vec![1.0; 4]).unwrap();
        assert_eq!(effective_ranks(&s, 0).unwrap(), (4.0, 4.0));

        let mut v = vec![1.0; 10];
        v[0] = 100.0;
        let s = Spectrum::new(v).unwrap();
        let (r0, big_r0) = effective_ranks(&s, 0).unwrap();
        assert_relative_eq!(r0, 1.09, max_relative = 1e-14);
        assert_relative_eq!(big_r0, 109.0 * 109.0 / 10009.0, max_relative = 1e-14);
        assert_eq!(effective_ranks(&s, 1).unwrap(), (9.0, 9.0));
        assert!(effective_ranks(&s, 10).is_err());
    }

    #[test]
    fn ensemble_examples() {
        let c = EnsembleConstants::default();
        let s = Spectrum::new(fig1_spectrum(1500)).unwrap();
        assert_eq!(classify_ensemble(&s, 100, c).unwrap(), Ensemble::Balanced);

        let mut v = vec![150.0; 200];
        v[0] = 10.0 * 199.0 * 150.0;
        let s = Spectrum::new(v).unwrap();
        let c2 = EnsembleConstants {
            b: 2.0,
            b1: 2.0,
            b2: 2.0,
        };
        // The second bi-level clause needs (p − 2) ≥ b₂ n on a flat tail, so at
        // n = 100 this spectrum is neither; at n = 50 it is bi-level.
        assert_eq!(classify_ensemble(&s, 100, c2).unwrap(), Ensemble::Neither);
        assert_eq!(classify_ensemble(&s, 50, c2).unwrap(), Ensemble::BiLevel);

        let s = Spectrum::new(vec![1.0; 5]).unwrap();
        assert_eq!(classify_ensemble(&s, 10, c).unwrap(), Ensemble::Neither);
        assert!(classify_ensemble(&s, 10, EnsembleConstants { b: 1.0, b1: 2.0, b2: 2.0 }).is_err());
    }

    #[test]
    fn zero_mean_identity_sampling() {
        let m = GmmModel::isotropic(vec![0.0; 4]).unwrap();
        let ds = sample_dataset(&m, 3, 11).unwrap();
        assert_eq!(ds.y(), ds.y_c());
        assert_eq!(ds.noise(&m).unwrap(), *ds.x());
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = GmmModel::diagonal(vec![0.3; 6], vec![3.0, 2.0, 1.0, 1.0, 1.0, 0.5])
            .unwrap()
            .with_flip_prob(0.2)
            .unwrap();
        let a = sample_dataset(&m, 20, 99).unwrap();
        let b = sample_dataset(&m, 20, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_dataset(&m, 20, 100).unwrap();
        assert_ne!(a.x(), c.x());
    }

    #[test]
    fn rows_follow_mean_plus_noise() {
        let m = GmmModel::isotropic(vec![1.0, -1.0, 2.0]).unwrap();
        let ds = sample_dataset(&m, 5, 3).unwrap();
        let q = ds.noise(&m).unwrap();
        let rebuilt = ds.y() * m.eta().transpose() + q;
        assert!((rebuilt - ds.x()).amax() < 1e-15);
    }

    #[test]
    fn flip_fraction_concentrates() {
        let gamma = 0.5 - 1e-3;
        let m = GmmModel::isotropic(vec![0.1]).unwrap().with_flip_prob(gamma).unwrap();
        let n = 100_000;
        let ds = sample_dataset(&m, n, 5).unwrap();
        let frac = ds.flipped().len() as f64 / n as f64;
        let tol = 3.0 * (gamma * (1.0 - gamma) / n as f64).sqrt();
        assert!((frac - gamma).abs() <= tol, "{frac} vs {gamma}");
    }

    #[test]
    fn label_prior_concentrates() {
        let m = GmmModel::isotropic(vec![0.0; 2]).unwrap().with_prior_plus(0.3).unwrap();
        let n = 50_000;
        let ds = sample_dataset(&m, n, 8).unwrap();
        let frac = ds.y().iter().filter(|&&v| v > 0.0).count() as f64 / n as f64;
        assert!((frac - 0.3).abs() <= 4.0 * (0.3 * 0.7 / n as f64).sqrt());
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let v = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let m = GmmModel::new(
            DVector::from_vec(vec![1.0, 0.5]),
            Some(v),
            Spectrum::new(vec![2.0, 1.0]).unwrap(),
            0.4,
            0.1,
        )
        .unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: GmmModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);

        let bad = r#"{"beta":[1,2],"spectrum":[1],"basis":null,"prior_plus":0.5,"flip_prob":0}"#;
        assert!(serde_json::from_str::<GmmModel>(bad).is_err());
        let bad = r#"{"beta":[1,2],"spectrum":[1,1],"basis":[[1,1],[0,1]],"prior_plus":0.5,"flip_prob":0}"#;
        assert!(serde_json::from_str::<GmmModel>(bad).is_err());
        let bad = r#"{"beta":[1],"spectrum":[1],"prior_plus":0.5,"flip_prob":0.5}"#;
        assert!(serde_json::from_str::<GmmModel>(bad).is_err());
    }

    #[test]
    fn rotated_model_quad_form_matches_dense_covariance() {
        let v = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let lam = [3.0, 0.5];
        let m = GmmModel::new(
            DVector::from_vec(vec![1.0, 2.0]),
            Some(v.clone()),
            Spectrum::new(lam.to_vec()).unwrap(),
            0.5,
            0.0,
        )
        .unwrap();
        let sigma = &v * DMatrix::from_diagonal(&DVector::from_vec(lam.to_vec())) * v.transpose();
        let w = DVector::from_vec(vec![0.3, -1.1]);
        assert_relative_eq!(m.quad_form(&w), (w.transpose() * &sigma * &w)[0], max_relative = 1e-14);
        let eta = m.eta();
        assert_relative_eq!(m.sigma_signal(), (eta.transpose() * &sigma * &eta)[0], max_relative = 1e-14);
    }
}
