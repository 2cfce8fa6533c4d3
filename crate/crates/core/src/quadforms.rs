//! Gram-matrix algebra for `X = y ηᵀ + Q`: the primitive quadratic forms in
//! `U_τ = QQᵀ + τI`, the inverse-Gram decomposition, the duality certificate
//! and a row-rank test.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GmmError, Result};
use crate::linalg::{self, SpdSolver};
use crate::model::{Dataset, GmmModel, LabelMode};

/// Noise matrix, `d = Qη`, and a factorization of `U_τ`.
#[derive(Clone, Debug)]
pub struct GramContext {
    q: DMatrix<f64>,
    d: DVector<f64>,
    y: DVector<f64>,
    tau: f64,
    u_tau: SpdSolver,
}

impl GramContext {
    pub fn new(dataset: &Dataset, model: &GmmModel, tau: f64) -> Result<Self> {
        let q = dataset.noise(model)?;
        GramContext::from_parts(q, &model.eta(), dataset.y().clone(), tau)
    }

    pub fn from_parts(q: DMatrix<f64>, eta: &DVector<f64>, y: DVector<f64>, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(GmmError::InvalidInput(format!("tau = {tau} must be finite and >= 0")));
        }
        if eta.len() != q.ncols() || y.len() != q.nrows() {
            return Err(GmmError::InvalidInput(format!(
                "shape mismatch: Q is {}x{}, eta has {}, y has {}",
                q.nrows(),
                q.ncols(),
                eta.len(),
                y.len()
            )));
        }
        let d = &q * eta;
        let u_tau = SpdSolver::new(u_matrix(&q, tau))?;
        Ok(GramContext { q, d, y, tau, u_tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `U_τ⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.u_tau.solve(v)
    }

    pub fn jitter(&self) -> f64 {
        self.u_tau.jitter()
    }
}

fn u_matrix(q: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut u = linalg::gram(q);
    for i in 0..u.nrows() {
        u[(i, i)] += tau;
    }
    u
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveForms {
    pub s: f64,
    pub t: f64,
    pub h: f64,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    #[serde(rename = "D")]
    pub det: f64,
}

/// `s, t, h` use `U_τ`; `g` and `f` always use `U₀`.
pub fn primitive_forms(ctx: &GramContext, eta_norm_sq: f64) -> Result<PrimitiveForms> {
    let uy = ctx.solve(&ctx.y);
    let ud = ctx.solve(&ctx.d);
    let s = ctx.y.dot(&uy);
    let t = ctx.d.dot(&ud);
    let h = ctx.y.dot(&ud);
    let (g, f) = if ctx.tau == 0.0 {
        (uy, ud)
    } else {
        let u0 = SpdSolver::new(u_matrix(&ctx.q, 0.0))?;
        (u0.solve(&ctx.y), u0.solve(&ctx.d))
    };
    let det = s * (eta_norm_sq - t) + (h + 1.0) * (h + 1.0);
    Ok(PrimitiveForms {
        s,
        t,
        h,
        g: g.iter().copied().collect(),
        f: f.iter().copied().collect(),
        det,
    })
}

/// `yᵀ(XXᵀ + τI)⁻¹` computed two ways: directly, and as the three-term
/// correction of `yᵀU_τ⁻¹`.
pub fn decomposition_sides(
    dataset: &Dataset,
    model: &GmmModel,
    tau: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let ctx = GramContext::new(dataset, model, tau)?;
    let mut k = dataset.gram().clone();
    for i in 0..k.nrows() {
        k[(i, i)] += tau;
    }
    let direct = SpdSolver::new(k)?.solve(dataset.y());

    let eta_sq = model.eta_norm_sq();
    let eta_norm = eta_sq.sqrt();
    let uy = ctx.solve(&ctx.y);
    let ud = ctx.solve(&ctx.d);
    let (s, t, h) = (ctx.y.dot(&uy), ctx.d.dot(&ud), ctx.y.dot(&ud));
    let det = s * (eta_sq - t) + (h + 1.0) * (h + 1.0);
    let c = [eta_norm * s, h * h + h - s * t, s];
    let rhs = &uy - (&uy * (c[0] * eta_norm) + &uy * c[1] + &ud * c[2]) / det;
    Ok((direct, rhs))
}

/// Max-abs difference between the two sides of the decomposition.
pub fn decomposition_residual(dataset: &Dataset, model: &GmmModel, tau: f64) -> Result<f64> {
    let (direct, rhs) = decomposition_sides(dataset, model, tau)?;
    Ok((direct - rhs).amax())
}

/// `c_i = v_i e_iᵀ(XXᵀ)⁻¹ v` for the chosen label vector `v`.
pub fn duality_certificate(dataset: &Dataset, labels: LabelMode) -> Result<DVector<f64>> {
    let v = dataset.labels(labels);
    let (a, _) = linalg::solve_refined(dataset.gram(), v)?;
    Ok(v.component_mul(&a))
}

/// Entries above `1e-10 · ‖c‖∞` count as positive.
pub fn certificate_all_positive(c: &DVector<f64>) -> bool {
    let scale = linalg::inf_norm(c);
    scale > 0.0 && c.iter().all(|&ci| ci > 1e-10 * scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub separable: bool,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
}

/// Full row rank of `X`, which gives both interpolability and separability.
pub fn linear_separability(dataset: &Dataset) -> Separability {
    let x = dataset.x();
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = if dataset.n() > dataset.p() {
        0.0
    } else {
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Separability {
        separable: max > 0.0 && min > 1e-10 * max,
        min_singular_value: min,
        max_singular_value: max,
    }
}

/// Scale-free versions of the primitive forms. Ratios that divide by
/// `σ` are `None` when `σ = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma5Ratios {
    pub s_ratio: f64,
    pub t_ratio: Option<f64>,
    pub h_ratio: Option<f64>,
    pub d_ratio: Option<f64>,
    pub f_ratio: Option<f64>,
}

pub fn lemma5_ratios(dataset: &Dataset, model: &GmmModel, tau: f64) -> Result<Lemma5Ratios> {
    let ctx = GramContext::new(dataset, model, tau)?;
    let forms = primitive_forms(&ctx, model.eta_norm_sq())?;
    let n = dataset.n() as f64;
    let l1 = model.spectrum().l1();
    let scale = tau + l1;
    let sigma = model.sigma();
    let by_sigma = |v: f64| (sigma > 0.0).then_some(v);
    let f_max = forms.f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(Lemma5Ratios {
        s_ratio: forms.s * scale / n,
        t_ratio: by_sigma(forms.t * scale / (n * sigma * sigma)),
        h_ratio: by_sigma(forms.h * scale / (n * sigma)),
        d_ratio: by_sigma(ctx.d.norm_squared() / (n * sigma * sigma)),
        f_ratio: by_sigma(f_max * l1 / ((2.0 * n).ln().sqrt() * sigma)),
    })
}
