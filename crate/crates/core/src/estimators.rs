//! Min-norm interpolation, ridge, averaging and the no-bias hard-margin SVM.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GmmError, Result};
use crate::linalg::{self, SpdSolver};
use crate::model::{Dataset, LabelMode};
use crate::quadforms;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ClassifierKind {
    Ls,
    Ridge(f64),
    Averaging,
    Svm,
}

impl ClassifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Ls => "ls",
            ClassifierKind::Ridge(_) => "ridge",
            ClassifierKind::Averaging => "averaging",
            ClassifierKind::Svm => "svm",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Final max KKT violation (SVM) or interpolation residual `‖Xw − v‖∞` (LS).
    pub residual: Option<f64>,
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClassifier", into = "RawClassifier")]
pub struct Classifier {
    pub w: DVector<f64>,
    pub kind: ClassifierKind,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize, Deserialize)]
struct RawClassifier {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
    w: Vec<f64>,
    #[serde(default)]
    diagnostics: Diagnostics,
}

impl From<Classifier> for RawClassifier {
    fn from(c: Classifier) -> Self {
        let tau = match c.kind {
            ClassifierKind::Ridge(t) => Some(t),
            _ => None,
        };
        RawClassifier {
            kind: c.kind.name().to_string(),
            tau,
            w: c.w.iter().copied().collect(),
            diagnostics: c.diagnostics,
        }
    }
}

impl TryFrom<RawClassifier> for Classifier {
    type Error = GmmError;

    fn try_from(raw: RawClassifier) -> Result<Self> {
        let kind = match (raw.kind.as_str(), raw.tau) {
            ("ls", _) => ClassifierKind::Ls,
            ("ridge", Some(t)) => ClassifierKind::Ridge(t),
            ("ridge", None) => {
                return Err(GmmError::InvalidInput("ridge classifier needs tau".into()))
            }
            ("averaging", _) => ClassifierKind::Averaging,
            ("svm", _) => ClassifierKind::Svm,
            (other, _) => {
                return Err(GmmError::InvalidInput(format!("unknown classifier kind '{other}'")))
            }
        };
        Classifier::new(DVector::from_vec(raw.w), kind, raw.diagnostics)
    }
}

impl Classifier {
    pub fn new(w: DVector<f64>, kind: ClassifierKind, diagnostics: Diagnostics) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::InvalidInput("classifier weights are not finite".into()));
        }
        Ok(Classifier { w, kind, diagnostics })
    }

    /// A bare weight vector, e.g. for risk evaluation of arbitrary directions.
    pub fn from_weights(w: DVector<f64>) -> Result<Self> {
        Classifier::new(w, ClassifierKind::Ls, Diagnostics::default())
    }
}

/// `Xᵀ(XXᵀ)⁻¹v`.
pub fn min_norm_ls(dataset: &Dataset, labels: LabelMode) -> Result<Classifier> {
    if dataset.n() > dataset.p() {
        return Err(GmmError::NotInterpolable(format!(
            "n = {} exceeds p = {}",
            dataset.n(),
            dataset.p()
        )));
    }
    let v = dataset.labels(labels);
    let (a, jitter) = linalg::solve_refined(dataset.gram(), v).map_err(|e| match e {
        GmmError::SingularGram(msg) => GmmError::NotInterpolable(msg),
        other => other,
    })?;
    let w = dataset.x().tr_mul(&a);
    let residual = linalg::inf_norm(&(dataset.x() * &w - v));
    if !(residual <= 1e-8) {
        return Err(GmmError::NotInterpolable(format!(
            "interpolation residual {residual:e} exceeds 1e-8"
        )));
    }
    Classifier::new(
        w,
        ClassifierKind::Ls,
        Diagnostics {
            iterations: 1,
            residual: Some(residual),
            jitter,
        },
    )
}

/// `Xᵀ(XXᵀ + τI)⁻¹v`, `τ > 0`.
pub fn ridge(dataset: &Dataset, tau: f64, labels: LabelMode) -> Result<Classifier> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GmmError::InvalidInput(format!("ridge needs tau > 0, got {tau}")));
    }
    let mut k = dataset.gram().clone();
    for i in 0..k.nrows() {
        k[(i, i)] += tau;
    }
    let (a, jitter) = linalg::solve_refined(&k, dataset.labels(labels))?;
    Classifier::new(
        dataset.x().tr_mul(&a),
        ClassifierKind::Ridge(tau),
        Diagnostics {
            iterations: 1,
            residual: None,
            jitter,
        },
    )
}

/// Ridge for `τ > 0`, min-norm interpolation for `τ = 0`.
pub fn ridge_or_ls(dataset: &Dataset, tau: f64, labels: LabelMode) -> Result<Classifier> {
    if tau == 0.0 {
        min_norm_ls(dataset, labels)
    } else {
        ridge(dataset, tau, labels)
    }
}

/// `Xᵀv / n`.
pub fn averaging(dataset: &Dataset, labels: LabelMode) -> Result<Classifier> {
    let w = dataset.x().tr_mul(dataset.labels(labels)) / dataset.n() as f64;
    Classifier::new(w, ClassifierKind::Averaging, Diagnostics::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            kkt_tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmSolution {
    pub classifier: Classifier,
    pub alpha: Vec<f64>,
    pub support_set: Vec<usize>,
    pub min_margin: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl SvmSolution {
    pub fn w(&self) -> &DVector<f64> {
        &self.classifier.w
    }

    /// `|primal − dual|`.
    pub fn duality_gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs()
    }
}

const DUAL_LIMIT: f64 = 1e12;
const POLISH_EVERY: usize = 10;

fn support_threshold(alpha: &[f64]) -> f64 {
    1e-8 * alpha.iter().cloned().fold(1.0_f64, f64::max)
}

/// Max KKT violation given margins `m_i = y_i wᵀx_i`.
fn kkt_violation(alpha: &[f64], margins: &[f64]) -> f64 {
    let thr = support_threshold(alpha);
    alpha
        .iter()
        .zip(margins)
        .map(|(&a, &m)| if a > thr { (m - 1.0).abs() } else { (1.0 - m).max(0.0) })
        .fold(0.0, f64::max)
}

/// Solve `K_SS a = 1` on the current support; accept if it is dual feasible
/// and leaves every other point on or outside the margin.
fn polish(k: &DMatrix<f64>, alpha: &[f64], tol: f64) -> Option<Vec<f64>> {
    let thr = support_threshold(alpha);
    let support: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > thr).collect();
    if support.is_empty() {
        return None;
    }
    let kss = k.select_rows(&support).select_columns(&support);
    let solver = SpdSolver::new(kss).ok()?;
    if solver.jitter() > 0.0 {
        return None;
    }
    let a = solver.solve(&DVector::from_element(support.len(), 1.0));
    if a.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let mut out = vec![0.0; alpha.len()];
    for (&i, &v) in support.iter().zip(a.iter()) {
        out[i] = v;
    }
    let ka = k * DVector::from_column_slice(&out);
    let ok = (0..alpha.len())
        .filter(|i| out[*i] == 0.0)
        .all(|j| ka[j] >= 1.0 - tol);
    ok.then_some(out)
}

/// No-intercept hard-margin SVM by cyclic dual coordinate ascent from `α = 0`.
pub fn hard_margin_svm(dataset: &Dataset, labels: LabelMode, opts: SvmOptions) -> Result<SvmSolution> {
    let n = dataset.n();
    let v = dataset.labels(labels);
    let mut k = dataset.gram().clone();
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] *= v[i] * v[j];
        }
    }
    // A zero row can never reach margin 1.
    if (0..n).any(|i| !(k[(i, i)] > 0.0)) {
        return Err(GmmError::Infeasible {
            dual_norm: f64::INFINITY,
        });
    }

    let mut alpha = vec![0.0; n];
    // grad_i = 1 − (Kα)_i = 1 − margin_i
    let mut grad = vec![1.0; n];
    let mut sweeps = 0;
    let mut violation = f64::INFINITY;

    let finish = |alpha: Vec<f64>, sweeps: usize| -> Result<SvmSolution> {
        let a = DVector::from_iterator(n, alpha.iter().zip(v.iter()).map(|(a, y)| a * y));
        let w = dataset.x().tr_mul(&a);
        let margins: Vec<f64> = (dataset.x() * &w).component_mul(v).iter().copied().collect();
        let violation = kkt_violation(&alpha, &margins);
        if !(violation <= opts.kkt_tol) {
            return Err(GmmError::NonConvergence { sweeps, violation });
        }
        let thr = support_threshold(&alpha);
        let support_set = (0..n).filter(|&i| alpha[i] > thr).collect();
        let w_sq = w.norm_squared();
        let alpha_sum: f64 = alpha.iter().sum();
        let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(SvmSolution {
            classifier: Classifier::new(
                w,
                ClassifierKind::Svm,
                Diagnostics {
                    iterations: sweeps,
                    residual: Some(violation),
                    jitter: 0.0,
                },
            )?,
            alpha,
            support_set,
            min_margin,
            primal_objective: 0.5 * w_sq,
            dual_objective: alpha_sum - 0.5 * w_sq,
        })
    };

    while sweeps < opts.max_sweeps {
        for i in 0..n {
            let new = (alpha[i] + grad[i] / k[(i, i)]).max(0.0);
            let delta = new - alpha[i];
            if delta != 0.0 {
                alpha[i] = new;
                for j in 0..n {
                    grad[j] -= delta * k[(j, i)];
                }
            }
        }
        sweeps += 1;

        let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm <= DUAL_LIMIT) {
            return Err(GmmError::Infeasible { dual_norm: norm });
        }

        let cheap = kkt_violation(&alpha, &grad.iter().map(|g| 1.0 - g).collect::<Vec<_>>());
        if sweeps % POLISH_EVERY == 0 || cheap <= opts.kkt_tol {
            // Rebuild the gradient to shed accumulated rounding.
            let ka = &k * DVector::from_column_slice(&alpha);
            for j in 0..n {
                grad[j] = 1.0 - ka[j];
            }
            if let Some(polished) = polish(&k, &alpha, opts.kkt_tol) {
                if let Ok(sol) = finish(polished, sweeps) {
                    return Ok(sol);
                }
            }
            violation = kkt_violation(&alpha, &grad.iter().map(|g| 1.0 - g).collect::<Vec<_>>());
            if violation <= opts.kkt_tol {
                if let Ok(sol) = finish(alpha.clone(), sweeps) {
                    return Ok(sol);
                }
            }
        }
    }
    // Gordan: the data are inseparable iff 0 lies in conv{y_i x_i}. The
    // normalized iterate w / Σα is a point of that hull, and on inseparable
    // data it drifts to the origin while α grows.
    let alpha_sum: f64 = alpha.iter().sum();
    let a = DVector::from_iterator(n, alpha.iter().zip(v.iter()).map(|(a, y)| a * y));
    let hull_point = dataset.x().tr_mul(&a).norm() / alpha_sum;
    let radius = (0..n).map(|i| k[(i, i)]).fold(0.0, f64::max).sqrt();
    if hull_point < 1e-3 * radius {
        return Err(GmmError::Infeasible {
            dual_norm: alpha.iter().map(|a| a * a).sum::<f64>().sqrt(),
        });
    }
    Err(GmmError::NonConvergence {
        sweeps,
        violation,
    })
}

/// `|support set| / n`.
pub fn support_vector_fraction(svm: &SvmSolution) -> f64 {
    svm.support_set.len() as f64 / svm.alpha.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    pub equal: bool,
    pub rel_distance: f64,
    pub certificate_positive: bool,
}

/// Compare SVM and min-norm LS weights; `tol` is relative.
pub fn svm_equals_ls(dataset: &Dataset, labels: LabelMode, tol: f64) -> Result<Equivalence> {
    let ls = min_norm_ls(dataset, labels)?;
    let svm = hard_margin_svm(dataset, labels, SvmOptions::default())?;
    let c = quadforms::duality_certificate(dataset, labels)?;
    Ok(equivalence(&svm, &ls, &c, tol))
}

pub fn equivalence(svm: &SvmSolution, ls: &Classifier, certificate: &DVector<f64>, tol: f64) -> Equivalence {
    let rel_distance = (svm.w() - &ls.w).norm() / ls.w.norm();
    Equivalence {
        equal: rel_distance <= tol,
        rel_distance,
        certificate_positive: quadforms::certificate_all_positive(certificate),
    }
}
