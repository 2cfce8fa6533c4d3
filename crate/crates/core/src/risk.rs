//! Exact Gaussian risk of a linear classifier, its Chernoff bound, the
//! label-noise risk, Monte Carlo estimates, and the theorem bound evaluators.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::error::{GmmError, Result};
use crate::model::{is_bilevel, EnsembleConstants, GmmModel};
use crate::seeds;

/// Standard normal upper tail `P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RiskKind {
    Clean,
    Noisy { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// `wᵀη`
    pub correlation: f64,
    /// `wᵀΣw`
    pub noise_power: f64,
    pub ratio: f64,
    pub exact: f64,
    pub chernoff: Option<f64>,
    pub kind: RiskKind,
}

fn ratio(w: &DVector<f64>, model: &GmmModel) -> Result<(f64, f64, f64)> {
    if w.len() != model.dim() {
        return Err(GmmError::InvalidInput(format!(
            "classifier has dimension {} but the model has {}",
            w.len(),
            model.dim()
        )));
    }
    let noise_power = model.quad_form(w);
    if !(noise_power > 0.0) {
        return Err(GmmError::DegenerateClassifier);
    }
    let correlation = w.dot(&model.eta());
    Ok((correlation, noise_power, correlation / noise_power.sqrt()))
}

/// `Q(wᵀη / √(wᵀΣw))`, ignoring label noise.
pub fn exact_risk(w: &DVector<f64>, model: &GmmModel) -> Result<RiskReport> {
    let (correlation, noise_power, r) = ratio(w, model)?;
    Ok(RiskReport {
        correlation,
        noise_power,
        ratio: r,
        exact: q_function(r),
        chernoff: (correlation > 0.0).then(|| (-0.5 * r * r).exp()),
        kind: RiskKind::Clean,
    })
}

/// `exp(−ratio²/2)`; needs `wᵀη > 0`.
pub fn chernoff_bound(w: &DVector<f64>, model: &GmmModel) -> Result<f64> {
    let (correlation, _, r) = ratio(w, model)?;
    if !(correlation > 0.0) {
        return Err(GmmError::NonPositiveCorrelation(correlation));
    }
    Ok((-0.5 * r * r).exp())
}

/// `γ + (1 − 2γ) Q(ratio)` with `γ` the model's flip probability.
pub fn noisy_risk(w: &DVector<f64>, model: &GmmModel) -> Result<RiskReport> {
    let mut report = exact_risk(w, model)?;
    let gamma = model.flip_prob();
    report.exact = gamma + (1.0 - 2.0 * gamma) * report.exact;
    report.kind = RiskKind::Noisy { gamma };
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRisk {
    pub risk: f64,
    pub std_error: f64,
    pub samples: usize,
}

const MC_CHUNK: usize = 1 << 14;

/// Error rate of `sign(wᵀx)` against the observed (possibly flipped) label
/// over `m` fresh draws. Deterministic in `seed` regardless of thread count.
pub fn monte_carlo_risk(w: &DVector<f64>, model: &GmmModel, m: usize, seed: u64) -> Result<McRisk> {
    if m == 0 {
        return Err(GmmError::InvalidInput("m must be at least 1".into()));
    }
    if w.len() != model.dim() {
        return Err(GmmError::InvalidInput(format!(
            "classifier has dimension {} but the model has {}",
            w.len(),
            model.dim()
        )));
    }
    let eta = model.eta();
    let chunks = m.div_ceil(MC_CHUNK);
    let errors: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(m - c * MC_CHUNK);
            let mut rng = seeds::rng(seeds::derive(seed, c as u64, 0));
            let mut x = vec![0.0; model.dim()];
            let mut wrong = 0;
            for _ in 0..len {
                let (_, label) = model.draw(&mut rng, &eta, &mut x);
                let score: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
                let pred = if score > 0.0 { 1.0 } else { -1.0 };
                if pred != label {
                    wrong += 1;
                }
            }
            wrong
        })
        .sum();
    let risk = errors as f64 / m as f64;
    Ok(McRisk {
        risk,
        std_error: (risk * (1.0 - risk) / m as f64).sqrt(),
        samples: m,
    })
}

/// Uniform record for theorem bound evaluations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: Option<f64>,
    pub precondition_ok: bool,
    pub vacuous: bool,
    pub constants_used: BTreeMap<String, f64>,
}

impl BoundValue {
    fn from_parts(base: f64, exponent: impl FnOnce(f64) -> f64, floor: f64, constants_used: BTreeMap<String, f64>) -> Self {
        if base > 0.0 {
            let value = floor + (-exponent(base)).exp();
            BoundValue {
                value: Some(value),
                precondition_ok: true,
                vacuous: value >= 1.0,
                constants_used,
            }
        } else {
            BoundValue {
                value: None,
                precondition_ok: false,
                vacuous: false,
                constants_used,
            }
        }
    }
}

fn require_identity(model: &GmmModel, what: &str) -> Result<()> {
    if model.is_diagonal() && model.spectrum().is_identity() {
        Ok(())
    } else {
        Err(GmmError::StructuralMismatch(format!("{what} needs an identity covariance")))
    }
}

/// Balanced-ensemble bound on the scalar summaries of a model.
pub fn balanced_bound_value(
    eta_sq: f64,
    sigma: f64,
    n: usize,
    tau: f64,
    l1: f64,
    l2_sq: f64,
    c: &BTreeMap<String, f64>,
) -> Option<f64> {
    let n = n as f64;
    let scale = tau + l1;
    let base = eta_sq - c["C1"] * n * sigma * sigma / scale - c["C2"] * sigma;
    if base <= 0.0 {
        return None;
    }
    let spread = (n * n * sigma * sigma / (scale * scale)).max(1.0);
    let denom = c["C3"] * spread * l2_sq + c["C4"] * sigma * sigma;
    Some((-base * base / denom).exp())
}

pub fn bound_balanced(model: &GmmModel, n: usize, tau: f64, constants: &Constants) -> Result<BoundValue> {
    let c = constants.resolve(&["C1", "C2", "C3", "C4"])?;
    let s = model.spectrum();
    let value = balanced_bound_value(model.eta_norm_sq(), model.sigma(), n, tau, s.l1(), s.l2_sq(), &c);
    Ok(bound_from_option(value, c))
}

fn bound_from_option(value: Option<f64>, constants_used: BTreeMap<String, f64>) -> BoundValue {
    BoundValue {
        value,
        precondition_ok: value.is_some(),
        vacuous: value.is_some_and(|v| v >= 1.0),
        constants_used,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrRegime {
    High,
    Low,
}

/// High-SNR iff `‖η‖² > p/n`.
pub fn snr_regime(eta_norm_sq: f64, n: usize, p: usize) -> SnrRegime {
    if eta_norm_sq > p as f64 / n as f64 {
        SnrRegime::High
    } else {
        SnrRegime::Low
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropicBound {
    pub main: BoundValue,
    pub high_snr: BoundValue,
    pub low_snr: BoundValue,
    pub regime: SnrRegime,
}

impl IsotropicBound {
    /// The specialization matching the regime.
    pub fn regime_bound(&self) -> &BoundValue {
        match self.regime {
            SnrRegime::High => &self.high_snr,
            SnrRegime::Low => &self.low_snr,
        }
    }
}

/// Isotropic bound and its two regime specializations, from `‖η‖`, `n`, `p`.
pub fn isotropic_bound_values(eta_norm: f64, n: usize, p: usize, c: &BTreeMap<String, f64>) -> IsotropicBound {
    let (nf, pf) = (n as f64, p as f64);
    let over = 1.0 - nf / pf;
    let e2 = eta_norm * eta_norm;
    let main = BoundValue::from_parts(
        over * eta_norm - c["C1"],
        |b| e2 * b * b / (c["C2"] * (pf / nf + e2)),
        0.0,
        c.clone(),
    );
    let base = if eta_norm > 0.0 { over - c["C1"] / eta_norm } else { -1.0 };
    let high_snr = BoundValue::from_parts(base, |b| c["C2"] * e2 * b * b, 0.0, c.clone());
    let low_snr = BoundValue::from_parts(base, |b| c["C2"] * e2 * e2 * b * b / (pf / nf), 0.0, c.clone());
    IsotropicBound {
        main,
        high_snr,
        low_snr,
        regime: snr_regime(e2, n, p),
    }
}

/// `Σ = I` bound for the min-norm interpolator.
pub fn bound_isotropic(model: &GmmModel, n: usize, constants: &Constants) -> Result<IsotropicBound> {
    require_identity(model, "the isotropic bound")?;
    let c = constants.resolve(&["C1", "C2"])?;
    Ok(isotropic_bound_values(model.eta_norm(), n, model.dim(), &c))
}

/// The non-zero index of a one-sparse mean, if any.
pub fn one_sparse_index(model: &GmmModel) -> Option<usize> {
    let nz: Vec<usize> = (0..model.dim()).filter(|&i| model.beta()[i] != 0.0).collect();
    (nz.len() == 1).then(|| nz[0])
}

/// Bi-level bound from scalar inputs; `k` is the 0-based non-zero index.
pub fn bilevel_bound_value(
    lambda: &[f64],
    k: usize,
    eta_k: f64,
    n: usize,
    tau: f64,
    c: &BTreeMap<String, f64>,
) -> Option<f64> {
    let n = n as f64;
    let lk = lambda[k];
    let l1 = lambda[0];
    let rest: f64 = lambda[1..].iter().sum();
    let sigma = (lk * eta_k * eta_k).sqrt();
    let scale = tau + rest;
    let base = eta_k * eta_k * (1.0 - c["C1"] * n * lk / scale) - c["C2"] * sigma;
    if base <= 0.0 {
        return None;
    }
    let a = c["C3"] * l1 * l1 * ((scale + c["C4"] * n * sigma) / (scale + n * l1)).powi(2);
    let others: f64 = lambda
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != 0 && i != k)
        .map(|(_, v)| v * v)
        .sum();
    let b = c["C5"] * others * (1.0 + c["C4"] * n * sigma / scale).powi(2);
    let denom = a + b + c["C6"] * (lk * lk + sigma * sigma);
    Some((-base * base / denom).exp())
}

/// Bound for a diagonal bi-level covariance with a one-sparse mean at `k ≠ 0`.
pub fn bound_bilevel(
    model: &GmmModel,
    n: usize,
    tau: f64,
    ensemble: EnsembleConstants,
    constants: &Constants,
) -> Result<BoundValue> {
    let c = constants.resolve(&["C1", "C2", "C3", "C4", "C5", "C6"])?;
    if !model.is_diagonal() {
        return Err(GmmError::StructuralMismatch("bi-level bound needs a diagonal covariance".into()));
    }
    let k = one_sparse_index(model)
        .ok_or_else(|| GmmError::StructuralMismatch("bi-level bound needs a one-sparse mean".into()))?;
    if k == 0 {
        return Err(GmmError::StructuralMismatch(
            "bi-level bound needs the mean off the leading eigendirection".into(),
        ));
    }
    if !is_bilevel(model.spectrum(), n, ensemble.b1, ensemble.b2) {
        return Err(GmmError::StructuralMismatch(format!(
            "spectrum is not bi-level at n = {n} (b1 = {}, b2 = {})",
            ensemble.b1, ensemble.b2
        )));
    }
    let value = bilevel_bound_value(model.spectrum().values(), k, model.beta()[k], n, tau, &c);
    Ok(bound_from_option(value, c))
}

pub fn averaging_bound_value(eta_sq: f64, sigma: f64, l2_sq: f64, c: &BTreeMap<String, f64>) -> Option<f64> {
    let base = eta_sq - c["C1"] * sigma;
    (base > 0.0).then(|| (-base * base / (c["C2"] * l2_sq + c["C3"] * sigma * sigma)).exp())
}

pub fn bound_averaging(model: &GmmModel, constants: &Constants) -> Result<BoundValue> {
    let c = constants.resolve(&["C1", "C2", "C3"])?;
    let value = averaging_bound_value(model.eta_norm_sq(), model.sigma(), model.spectrum().l2_sq(), &c);
    Ok(bound_from_option(value, c))
}

/// `γ` plus the low-SNR isotropic term.
pub fn bound_noisy_isotropic(model: &GmmModel, n: usize, constants: &Constants) -> Result<BoundValue> {
    require_identity(model, "the noisy isotropic bound")?;
    let c = constants.resolve(&["C1", "C2"])?;
    let iso = isotropic_bound_values(model.eta_norm(), n, model.dim(), &c);
    let mut b = iso.low_snr;
    if let Some(v) = b.value.as_mut() {
        *v += model.flip_prob();
        b.vacuous = *v >= 1.0;
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginBound {
    pub raw: f64,
    pub clamped: f64,
    /// Radius `R = ‖η‖ + c √p` used for `‖x‖`.
    pub radius: f64,
}

impl MarginBound {
    fn new(raw: f64, radius: f64) -> Self {
        MarginBound {
            raw,
            clamped: raw.clamp(0.0, 1.0),
            radius,
        }
    }
}

pub const DEFAULT_RADIUS_CONSTANT: f64 = 1.05;

pub fn margin_radius(model: &GmmModel, radius_constant: f64) -> f64 {
    model.eta_norm() + radius_constant * (model.dim() as f64).sqrt()
}

/// `2R‖η‖/√n + (1 + R‖η‖)√(2 ln(2/δ)/n)` with `η* = η`.
pub fn margin_bound_classic(n: usize, model: &GmmModel, delta: f64, radius_constant: f64) -> Result<MarginBound> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(GmmError::InvalidInput(format!("delta = {delta} must lie in (0, 1]")));
    }
    let r = margin_radius(model, radius_constant);
    let e = model.eta_norm();
    let nf = n as f64;
    let raw = 2.0 * r * e / nf.sqrt() + (1.0 + r * e) * (2.0 * (2.0 / delta).ln() / nf).sqrt();
    Ok(MarginBound::new(raw, r))
}

/// `4R‖w‖/√n + √(ln(4 log₂‖w‖ / δ)/n)`; the second term is dropped when
/// the log argument is at most 1.
pub fn margin_bound_svm(
    w_norm: f64,
    n: usize,
    model: &GmmModel,
    delta: f64,
    radius_constant: f64,
) -> Result<MarginBound> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(GmmError::InvalidInput(format!("delta = {delta} must lie in (0, 1]")));
    }
    let r = margin_radius(model, radius_constant);
    let nf = n as f64;
    let arg = 4.0 * w_norm.log2() / delta;
    let tail = if arg > 1.0 { (arg.ln() / nf).sqrt() } else { 0.0 };
    Ok(MarginBound::new(4.0 * r * w_norm / nf.sqrt() + tail, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ones(keys: &[&str]) -> BTreeMap<String, f64> {
        keys.iter().map(|k| (k.to_string(), 1.0)).collect()
    }

    #[test]
    fn q_function_identities() {
        assert_eq!(q_function(0.0), 0.5);
        assert_relative_eq!(q_function(2.0), 0.022750131948179195, max_relative = 1e-14);
        assert_relative_eq!(q_function(8.0), 6.22096057427178e-16, max_relative = 1e-12);
        let mut prev = 1.0;
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            let q = q_function(x);
            assert!(q < prev || q == 0.0);
            assert!((q_function(-x) - (1.0 - q)).abs() < 1e-15);
            prev = q;
        }
    }

    #[test]
    fn exact_risk_examples() {
        let m = GmmModel::isotropic(vec![2.0, 0.0]).unwrap();
        let r = exact_risk(&DVector::from_vec(vec![0.0, 1.0]), &m).unwrap();
        assert_eq!(r.exact, 0.5);
        let r = exact_risk(m.beta(), &m).unwrap();
        assert_relative_eq!(r.exact, 0.02275, epsilon = 1e-5);
        let neg = exact_risk(&(-m.beta()), &m).unwrap();
        assert_relative_eq!(neg.exact, 1.0 - r.exact, max_relative = 1e-15);
        assert!(matches!(exact_risk(&DVector::zeros(2), &m), Err(GmmError::DegenerateClassifier)));
    }

    #[test]
    fn chernoff_examples() {
        let m = GmmModel::isotropic(vec![2.0, 0.0]).unwrap();
        let b = chernoff_bound(m.beta(), &m).unwrap();
        assert_relative_eq!(b, (-2.0f64).exp(), max_relative = 1e-15);
        assert!(matches!(
            chernoff_bound(&(-m.beta()), &m),
            Err(GmmError::NonPositiveCorrelation(_))
        ));
    }

    #[test]
    fn noisy_risk_examples() {
        let m = GmmModel::isotropic(vec![2.0, 0.0]).unwrap().with_flip_prob(0.1).unwrap();
        let r = noisy_risk(m.beta(), &m).unwrap();
        assert_relative_eq!(r.exact, 0.1 + 0.8 * q_function(2.0), max_relative = 1e-15);
        assert!((r.exact - 0.1182).abs() < 1e-4);
        let r = noisy_risk(&DVector::from_vec(vec![0.0, 1.0]), &m).unwrap();
        assert_eq!(r.exact, 0.5);
        let far = GmmModel::isotropic(vec![40.0, 0.0]).unwrap().with_flip_prob(0.1).unwrap();
        assert_relative_eq!(noisy_risk(far.beta(), &far).unwrap().exact, 0.1, max_relative = 1e-15);
    }

    #[test]
    fn monte_carlo_half() {
        let m = GmmModel::isotropic(vec![1.0, 0.0]).unwrap();
        let mc = monte_carlo_risk(&DVector::from_vec(vec![0.0, 1.0]), &m, 1_000_000, 4).unwrap();
        assert!((mc.risk - 0.5).abs() < 0.002);
        let again = monte_carlo_risk(&DVector::from_vec(vec![0.0, 1.0]), &m, 1_000_000, 4).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn balanced_examples() {
        let c = ones(&["C1", "C2", "C3", "C4"]);
        let v = balanced_bound_value(4.0, 1.0, 1, 0.0, 10.0, 1.0, &c).unwrap();
        assert_relative_eq!(v, (-(2.9f64 * 2.9) / 2.0).exp(), max_relative = 1e-14);
        let v0 = balanced_bound_value(4.0, 0.0, 1, 0.0, 10.0, 3.0, &c).unwrap();
        assert_relative_eq!(v0, (-16.0f64 / 3.0).exp(), max_relative = 1e-14);
        assert!(balanced_bound_value(1.0, 1.0, 1, 0.0, 10.0, 1.0, &c).is_none());
    }

    #[test]
    fn isotropic_examples() {
        let c = ones(&["C1", "C2"]);
        let b = isotropic_bound_values(4.0, 1, 2, &c);
        assert_relative_eq!(b.main.value.unwrap(), (-16.0f64 / 18.0).exp(), max_relative = 1e-14);
        assert!((b.main.value.unwrap() - 0.4111).abs() < 1e-4);
        let b = isotropic_bound_values(1.5, 1, 2, &c);
        assert!(b.main.value.is_none() && !b.main.precondition_ok);
        assert_eq!(snr_regime(5.0, 1, 3), SnrRegime::High);
        assert_eq!(snr_regime(2.0, 1, 3), SnrRegime::Low);
        let m = GmmModel::diagonal(vec![1.0, 1.0], vec![2.0, 1.0]).unwrap();
        assert!(matches!(
            bound_isotropic(&m, 1, &Constants::new()),
            Err(GmmError::StructuralMismatch(_))
        ));
    }

    #[test]
    fn averaging_examples() {
        let c = ones(&["C1", "C2", "C3"]);
        assert_relative_eq!(
            averaging_bound_value(3.0, 0.0, 2.0, &c).unwrap(),
            (-9.0f64 / 2.0).exp(),
            max_relative = 1e-15
        );
        assert!(averaging_bound_value(2.0, 2.0, 1.0, &c).is_none());
    }

    #[test]
    fn bilevel_large_lambda1_limit() {
        let c = ones(&["C1", "C2", "C3", "C4", "C5", "C6"]);
        let (n, tau, eta_k) = (10usize, 0.0, 3.0);
        let tail = vec![1.0; 50];
        let rest: f64 = tail.iter().sum();
        let sigma = eta_k;
        let target = (tau + rest + 10.0 * sigma).powi(2) / 100.0;
        let mut prev_gap = f64::INFINITY;
        for l1 in [1e3, 1e5, 1e7] {
            let mut lam = vec![l1];
            lam.extend(&tail);
            let a = l1 * l1 * ((tau + rest + 10.0 * sigma) / (tau + rest + n as f64 * l1)).powi(2);
            let gap = (a - target).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
            assert!(bilevel_bound_value(&lam, 50, eta_k, n, tau, &c).is_some());
        }
        assert!(prev_gap / target < 1e-4);
    }

    #[test]
    fn bilevel_rejects_structure() {
        let mut lam = vec![1.0; 60];
        lam[0] = 1000.0;
        let m = GmmModel::diagonal(vec![1.0; 60], lam.clone()).unwrap();
        let e = EnsembleConstants::default();
        assert!(matches!(bound_bilevel(&m, 10, 0.0, e, &Constants::new()), Err(GmmError::StructuralMismatch(_))));
        let mut beta = vec![0.0; 60];
        beta[0] = 1.0;
        let m = GmmModel::diagonal(beta, lam).unwrap();
        assert!(matches!(bound_bilevel(&m, 10, 0.0, e, &Constants::new()), Err(GmmError::StructuralMismatch(_))));
    }

    #[test]
    fn noisy_isotropic_reduces_to_low_snr() {
        let m = GmmModel::isotropic(vec![1.0; 16]).unwrap();
        let c = Constants::new();
        let iso = bound_isotropic(&m, 2, &c).unwrap();
        assert_eq!(bound_noisy_isotropic(&m, 2, &c).unwrap().value, iso.low_snr.value);
        let noisy = m.clone().with_flip_prob(0.1).unwrap();
        let b = bound_noisy_isotropic(&noisy, 2, &c).unwrap().value.unwrap();
        assert_relative_eq!(b, 0.1 + iso.low_snr.value.unwrap(), max_relative = 1e-15);
    }

    #[test]
    fn noisy_isotropic_floor_limit() {
        let c = ones(&["C1", "C2"]);
        let n = 50;
        let mut prev = f64::INFINITY;
        for ratio in [1e2, 1e4, 1e6, 1e8] {
            let p = (ratio * n as f64) as usize;
            let eta = (ratio as f64).powf(1.2 / 4.0);
            let v = 0.1 + isotropic_bound_values(eta, n, p, &c).low_snr.value.unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev - 0.1 < 1e-3);
    }

    #[test]
    fn margin_bound_examples() {
        let m = GmmModel::isotropic(vec![0.5, 0.0]).unwrap();
        let b = margin_bound_classic(4, &m, 1.0, 1.05).unwrap();
        let r = 0.5 + 1.05 * 2f64.sqrt();
        let expect = 2.0 * r * 0.5 / 2.0 + (1.0 + r * 0.5) * (2.0 * 2f64.ln() / 4.0).sqrt();
        assert_relative_eq!(b.raw, expect, max_relative = 1e-15);
        assert_eq!(b.clamped, b.raw.min(1.0));

        let s = margin_bound_svm(1.0, 1, &m, 0.05, 1.05).unwrap();
        assert_relative_eq!(s.raw, 4.0 * r, max_relative = 1e-15);
        let s2 = margin_bound_svm(2.0, 1, &m, 0.05, 1.05).unwrap();
        assert!(s2.raw > s.raw);
        assert_eq!(s2.clamped, 1.0);

        let mut prev = f64::INFINITY;
        for n in [10, 1000, 100000, 10000000] {
            let v = margin_bound_classic(n, &m, 0.05, 1.05).unwrap().raw;
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 0.01);
    }

    proptest! {
        #[test]
        fn scale_invariance(c in 1e-3f64..1e3, seed in any::<u64>()) {
            let m = GmmModel::diagonal(vec![0.3, -0.2, 0.5], vec![2.0, 1.0, 0.5]).unwrap();
            let mut rng = seeds::rng(seed);
            let w = DVector::from_fn(3, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            prop_assume!(w.norm() > 1e-3);
            let a = exact_risk(&w, &m).unwrap().exact;
            let b = exact_risk(&(&w * c), &m).unwrap().exact;
            prop_assert!((a - b).abs() <= 1e-14);
        }

        #[test]
        fn chernoff_dominates_q(x in 0.0f64..40.0) {
            prop_assert!((-0.5 * x * x).exp() >= q_function(x));
        }

        #[test]
        fn noisy_floor(gamma in 0.0f64..0.49, r1 in -5.0f64..5.0, dr in 0.0f64..5.0) {
            let a = gamma + (1.0 - 2.0 * gamma) * q_function(r1);
            let b = gamma + (1.0 - 2.0 * gamma) * q_function(r1 + dr);
            prop_assert!(a >= gamma.min(1.0 - gamma) - 1e-15);
            prop_assert!(b <= a + 1e-15);
        }

        #[test]
        fn averaging_is_large_tau_limit(
            eta_sq in 1.0f64..20.0,
            sigma in 0.0f64..0.8,
            l2 in 0.5f64..10.0,
            cs in prop::array::uniform4(0.5f64..2.0),
        ) {
            let bal: BTreeMap<String, f64> =
                ["C1", "C2", "C3", "C4"].iter().zip(cs).map(|(k, v)| (k.to_string(), v)).collect();
            let avg: BTreeMap<String, f64> =
                ["C1", "C2", "C3"].iter().zip(&cs[1..]).map(|(k, v)| (k.to_string(), *v)).collect();
            let b = balanced_bound_value(eta_sq, sigma, 10, 1e12, 5.0, l2, &bal);
            let a = averaging_bound_value(eta_sq, sigma, l2, &avg);
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-6 * a.max(1e-300)),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }

        #[test]
        fn bilevel_large_tau_matches_averaging(eta_k in 2.0f64..20.0, c in 0.5f64..2.0, c2 in 0.5f64..2.0) {
            let mut lam = vec![2.0; 40];
            lam[0] = 500.0;
            let k = 39;
            let bi: BTreeMap<String, f64> = [("C1", 1.0), ("C2", c2), ("C3", c), ("C4", 1.0), ("C5", c), ("C6", c)]
                .iter().map(|(k, v)| (k.to_string(), *v)).collect();
            let avg: BTreeMap<String, f64> = [("C1", c2), ("C2", c), ("C3", c)]
                .iter().map(|(k, v)| (k.to_string(), *v)).collect();
            let sigma = (lam[k] * eta_k * eta_k).sqrt();
            let l2: f64 = lam.iter().map(|v| v * v).sum();
            let b = bilevel_bound_value(&lam, k, eta_k, 10, 1e12, &bi);
            let a = averaging_bound_value(eta_k * eta_k, sigma, l2, &avg);
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-6 * a.max(1e-300)),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
