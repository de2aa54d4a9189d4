//! Bergman functions, Hitchin-equation residuals, balanced-to-Hitchin
//! asymptotics, the Hörmander-estimate inequality, and the `A_j`/`B_j`
//! operator expansion.
//!
//! Endomorphism-valued fields are stored in the unitary gauge of their
//! metric, `X̃ = H^{1/2} X H^{-1/2}`, so stored values are plain hermitian
//! matrices with the right spectrum and norms are frame-free.

use crate::balanced::{
    BalancedContext, IterationControls, MetricState, balanced_state, frob_sq_in_frame,
    l2_gram_fs,
};
use crate::geometry::{ChartPoint, QuadratureScheme, fs_line_weight, numeric_curvature};
use crate::hermitian::{self, HermitianForm};
use crate::model::{HiggsInstance, SplitBundle, poly_eval};
use crate::quantization::{
    PushforwardMatrix, QuantParams, SectionBasis, p_endomorphism, pushforward_adjoint,
    pushforward_norms, reference_gram_closed, section_basis, twist_gram_closed,
};
use crate::util::{chunked_scalar_sum, frobenius, hermitize, identity};
use crate::{C64, CMatrix, Error, Result};
use num_rational::Rational64;

/// Evaluable hermitian metric on a split bundle, in either chart frame.
#[derive(Debug, Clone)]
pub enum BundleMetric {
    /// Summand-wise Fubini-Study weights `diag((1+|z|^2)^{-deg_i})`.
    SummandFs { degrees: Vec<i64> },
    /// Identity in the chart-0 frame (a global metric only when all
    /// degrees vanish; chart 1 applies the frame transition).
    Flat { degrees: Vec<i64> },
    /// `(Σ_j s̃_j s̃_j†)^{-1} (1+|z|^2)^{-untwist}` for the orthonormal
    /// coefficients in the columns of `coeffs`; `untwist = -k` converts the
    /// `E(k)` metric into one on `E`.
    FsPullback { basis: SectionBasis, coeffs: CMatrix, untwist: i64 },
    /// Conformal distortion `base · exp(-amp · (z+z̄)/(1+|z|^2))` by the
    /// real spherical-harmonic factor (smooth across charts).
    HarmonicScaled { base: Box<BundleMetric>, amp: f64 },
    /// `base · (1+|z|^2)^{-k}`, the metric induced on `E(k)` by a metric on
    /// `E` (the Fubini-Study weight reads the same in both chart frames).
    Twisted { base: Box<BundleMetric>, k: i64 },
}

impl BundleMetric {
    pub fn rank(&self) -> usize {
        match self {
            BundleMetric::SummandFs { degrees } | BundleMetric::Flat { degrees } => degrees.len(),
            BundleMetric::FsPullback { basis, .. } => basis.rank(),
            BundleMetric::HarmonicScaled { base, .. } => base.rank(),
            BundleMetric::Twisted { base, .. } => base.rank(),
        }
    }

    /// Metric matrix in the frame of the requested chart at coordinate `z`.
    pub fn eval(&self, chart: u8, z: C64) -> CMatrix {
        match self {
            BundleMetric::SummandFs { degrees } => {
                let w = 1.0 + z.norm_sqr();
                CMatrix::from_fn(degrees.len(), degrees.len(), |i, j| {
                    if i == j {
                        C64::new(w.powi(-(degrees[i] as i32)), 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
            }
            BundleMetric::Flat { degrees } => {
                if chart == 0 {
                    identity(degrees.len())
                } else {
                    // frame transition e^{(1)} = z^{-d} e^{(0)}
                    CMatrix::from_fn(degrees.len(), degrees.len(), |i, j| {
                        if i == j {
                            C64::new(z.norm_sqr().powi(degrees[i] as i32), 0.0)
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    })
                }
            }
            BundleMetric::FsPullback { basis, coeffs, untwist } => {
                let m = basis.value_matrix_in_chart(chart, z) * coeffs;
                let gram = &m * m.adjoint();
                let inv = gram.try_inverse().unwrap_or_else(|| {
                    CMatrix::from_element(
                        basis.rank(),
                        basis.rank(),
                        C64::new(f64::NAN, 0.0),
                    )
                });
                inv * C64::new((1.0 + z.norm_sqr()).powi(-(*untwist as i32)), 0.0)
            }
            BundleMetric::HarmonicScaled { base, amp } => {
                let u = (z + z.conj()).re / (1.0 + z.norm_sqr());
                // the distortion is chart-covariant: (w + w̄)/(1+|w|^2)
                // equals the same global function
                base.eval(chart, z) * C64::new((-amp * u).exp(), 0.0)
            }
            BundleMetric::Twisted { base, k } => {
                base.eval(chart, z) * C64::new((1.0 + z.norm_sqr()).powi(-(*k as i32)), 0.0)
            }
        }
    }

    /// FS-pullback metric of a state on `E(k)` (`untwist = 0`) or on `E`
    /// (`untwist = -k`... positive `k` divides out the `O(k)` weight).
    pub fn from_state(basis: &SectionBasis, state: &MetricState, untwist: i64) -> Self {
        BundleMetric::FsPullback {
            basis: basis.clone(),
            coeffs: state.orthonormalizer.clone(),
            untwist,
        }
    }
}

/// Higgs matrix in the frame of the requested chart: entry `(i,j)` is
/// `p_ij(z)` in chart 0 and `w^{e_ij} p_ij(1/w)` in chart 1.
pub fn higgs_in_chart(inst: &HiggsInstance, chart: u8, z: C64) -> CMatrix {
    let r = inst.rank();
    CMatrix::from_fn(r, r, |i, j| {
        let p = &inst.phi.entries[i][j];
        if p.is_empty() {
            return C64::new(0.0, 0.0);
        }
        if chart == 0 {
            poly_eval(p, z)
        } else {
            let e = inst.entry_degree(i, j);
            let mut acc = C64::new(0.0, 0.0);
            for (u, coeff) in p.iter().enumerate() {
                acc += coeff * z.powi((e - u as i64) as i32);
            }
            acc
        }
    })
}

/// Fiberwise commutator `[φ, φ^{*_h}] = h_M^{-1}(Φ H^{-1}Φ†H - H^{-1}Φ†HΦ)`
/// in the frame of the chart, as an endomorphism of `E` (or `E(k)`, the
/// twist cancels).
pub fn higgs_commutator_at(
    inst: &HiggsInstance,
    h: &CMatrix,
    chart: u8,
    z: C64,
) -> Result<CMatrix> {
    let phi = higgs_in_chart(inst, chart, z);
    let h_inv = h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateForm("metric not invertible".into()))?;
    let h_m = fs_line_weight(&ChartPoint::new(chart, z).canonical(), inst.twist.degree);
    let star = &h_inv * phi.adjoint() * h;
    Ok((&phi * &star - &star * &phi) * C64::new(1.0 / h_m, 0.0))
}

fn herm_sqrt_pair(h: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let form = HermitianForm::new(hermitize(h))?;
    Ok((form.sqrt(), form.inv_sqrt()))
}

/// Bergman endomorphism field of the metric whose L2 Gram is `g`:
/// `B(z) = Σ_j s'_j(z) (·, s'_j(z))_{H}` over the `g`-orthonormal basis,
/// stored in the unitary gauge `H^{1/2} V V† H^{1/2}`.
pub struct BergmanField {
    pub values: Vec<CMatrix>,
    pub rank: usize,
}

impl BergmanField {
    pub fn integral_trace(&self, scheme: &QuadratureScheme) -> f64 {
        chunked_scalar_sum(self.values.len(), |i| {
            self.values[i].diagonal().sum() * C64::new(scheme.weights[i], 0.0)
        })
        .re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.clone().symmetric_eigen().eigenvalues.min())
            .fold(f64::MAX, f64::min)
    }

    pub fn sup_deviation_from(&self, target: &CMatrix) -> f64 {
        self.values.iter().map(|v| frobenius(&(v - target))).fold(0.0, f64::max)
    }
}

pub fn bergman_function(
    g: &HermitianForm,
    metric: &BundleMetric,
    basis: &SectionBasis,
    scheme: &QuadratureScheme,
) -> Result<BergmanField> {
    if g.dim() != basis.len() {
        return Err(Error::ShapeMismatch("gram dimension vs basis".into()));
    }
    let ortho = g.inv_sqrt();
    let mut values = Vec::with_capacity(scheme.len());
    for p in &scheme.nodes {
        let v = basis.value_matrix(p) * &ortho;
        let h = metric.eval(p.chart, p.z);
        let (h_sqrt, _) = herm_sqrt_pair(&h)?;
        values.push(hermitize(&(&h_sqrt * &v * v.adjoint() * &h_sqrt)));
    }
    Ok(BergmanField { values, rank: basis.rank() })
}

/// Log-log least-squares fit `log y = slope · log k + intercept`.
pub fn fit_loglog(points: &[(i64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|(_, y)| *y <= 0.0) {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (k, y) in points {
        let x = (*k as f64).ln();
        let ly = y.ln();
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    Some((slope, intercept))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlopeReport {
    pub points: Vec<(i64, f64)>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// All residuals were below the floor 1e-12: the expansion holds to
    /// working precision and no order can be fitted.
    pub exact: bool,
}

impl SlopeReport {
    fn from_points(points: Vec<(i64, f64)>) -> Self {
        let exact = points.iter().all(|(_, y)| *y < 1e-12);
        let fit = if exact { None } else { fit_loglog(&points) };
        SlopeReport {
            points,
            slope: fit.map(|f| f.0),
            intercept: fit.map(|f| f.1),
            exact,
        }
    }

    /// True when the fitted decay order is at least `order` (within the
    /// stated slack), or the residuals are exact to precision.
    pub fn order_at_most(&self, bound: f64) -> bool {
        self.exact || self.slope.is_some_and(|s| s <= bound)
    }
}

/// Sup-norm residual of the Bergman expansion
/// `k^{-1} B_k - Id - k^{-1}(ΛF_h + S_ω/2)` against `k`, for a fixed smooth
/// metric `h` on `E`.
pub fn bergman_expansion_check(
    e: &SplitBundle,
    h: &BundleMetric,
    k_range: &[i64],
    scheme: &QuadratureScheme,
    fd_step: f64,
) -> Result<SlopeReport> {
    if k_range.len() < 4 {
        return Err(Error::Config(format!(
            "k_range has {} points, need at least 4",
            k_range.len()
        )));
    }
    let r = e.rank();
    // curvature of h plus scalar-curvature half: constant-in-k field
    let mut first_order = Vec::with_capacity(scheme.len());
    for p in &scheme.nodes {
        let chart = p.chart;
        let closure = |zz: C64| h.eval(chart, zz);
        let lam_f = numeric_curvature(&closure, p, fd_step, true)?;
        let hp = h.eval(p.chart, p.z);
        let (h_sqrt, h_inv_sqrt) = herm_sqrt_pair(&hp)?;
        let gauged = hermitize(&(&h_sqrt * lam_f * &h_inv_sqrt));
        first_order.push(gauged + identity(r));
    }
    let mut points = Vec::new();
    for &k in k_range {
        let basis = section_basis(e, k)?;
        let hk = twist_metric(h, k);
        let gram = l2_gram_of_metric(&basis, &hk, scheme)?;
        let b = bergman_function(&gram, &hk, &basis, scheme)?;
        let mut sup = 0.0f64;
        for (bv, fo) in b.values.iter().zip(first_order.iter()) {
            let resid = bv / C64::new(k as f64, 0.0)
                - identity(r)
                - fo / C64::new(k as f64, 0.0);
            sup = sup.max(frobenius(&resid));
        }
        points.push((k, sup));
    }
    Ok(SlopeReport::from_points(points))
}

/// Metric on `E(k)` induced by a metric on `E`: scale by the `O(k)` weight.
pub fn twist_metric(h: &BundleMetric, k: i64) -> BundleMetric {
    match h {
        BundleMetric::SummandFs { degrees } => {
            BundleMetric::SummandFs { degrees: degrees.iter().map(|d| d + k).collect() }
        }
        BundleMetric::HarmonicScaled { base, amp } => BundleMetric::HarmonicScaled {
            base: Box::new(twist_metric(base, k)),
            amp: *amp,
        },
        BundleMetric::FsPullback { basis, coeffs, untwist } => BundleMetric::FsPullback {
            basis: basis.clone(),
            coeffs: coeffs.clone(),
            untwist: untwist + k,
        },
        other => BundleMetric::Twisted { base: Box::new(other.clone()), k },
    }
}

/// L2 Gram of the monomial basis under an evaluable metric, by quadrature.
pub fn l2_gram_of_metric(
    basis: &SectionBasis,
    metric: &BundleMetric,
    scheme: &QuadratureScheme,
) -> Result<HermitianForm> {
    let n = basis.len();
    let gram = crate::util::chunked_matrix_sum(scheme.len(), n, n, |idx| {
        let p = &scheme.nodes[idx];
        let v = basis.value_matrix(p);
        let h = metric.eval(p.chart, p.z);
        v.adjoint() * h * v * C64::new(scheme.weights[idx], 0.0)
    });
    HermitianForm::new(gram)
}

/// Pointwise Hitchin residual `iΛF_h + c[φ,φ^{*_h}] - λ Id` with
/// `λ = deg E / rk E`, in the unitary gauge, plus its sup and L2 norms.
pub fn hitchin_residual(
    h: &BundleMetric,
    inst: &HiggsInstance,
    c: f64,
    scheme: &QuadratureScheme,
    fd_step: f64,
) -> Result<(Vec<CMatrix>, f64, f64)> {
    if c < 0.0 {
        return Err(Error::Config("coupling constant must be nonnegative".into()));
    }
    let r = inst.rank();
    let lambda = inst.bundle.degree() as f64 / r as f64;
    let mut values = Vec::with_capacity(scheme.len());
    let mut sup = 0.0f64;
    for p in &scheme.nodes {
        let chart = p.chart;
        let closure = |zz: C64| h.eval(chart, zz);
        let lam_f = numeric_curvature(&closure, p, fd_step, true)?;
        let hp = h.eval(p.chart, p.z);
        let comm = higgs_commutator_at(inst, &hp, p.chart, p.z)?;
        let resid = lam_f + comm * C64::new(c, 0.0) - identity(r) * C64::new(lambda, 0.0);
        let (h_sqrt, h_inv_sqrt) = herm_sqrt_pair(&hp)?;
        let gauged = hermitize(&(&h_sqrt * resid * &h_inv_sqrt));
        sup = sup.max(frobenius(&gauged));
        values.push(gauged);
    }
    let l2_sq = chunked_scalar_sum(values.len(), |i| {
        C64::new(frobenius(&values[i]).powi(2) * scheme.weights[i], 0.0)
    })
    .re;
    Ok((values, sup, l2_sq.max(0.0).sqrt()))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HitchinTrendRow {
    pub k: i64,
    pub epsilon: f64,
    pub frob_sq: f64,
    pub operator_norm: f64,
    /// `‖T_k‖_{L2}` with `T_k = χ^{-1}(Id + ε k^{-1}[φ,φ^{*_k}]) B_k - Id`.
    pub t_norm: f64,
    /// `‖B_k + ε [φ,φ^{*_k}] - χ Id‖_{L2}`.
    pub defect_norm: f64,
}

/// Values at or below this are indistinguishable from iteration noise
/// (the defect scales linearly with the solver tolerance); a defect below
/// the floor counts as zero for trend purposes.
pub const DEFECT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HitchinTrendReport {
    pub rows: Vec<HitchinTrendRow>,
    pub c_prime: f64,
    pub epsilon_limit: f64,
    pub bound_low: f64,
    pub bound_high: f64,
    pub defect_nonincreasing: bool,
    pub increments_decreasing: bool,
    pub bounds_contained: bool,
}

/// Balanced-to-Hitchin diagnostics across `k`: requires the instance to
/// balance at every level (residual below `controls.tol`).
pub fn balanced_to_hitchin_check(
    inst: &HiggsInstance,
    k_range: &[i64],
    ell: Rational64,
    controls: &IterationControls,
    scheme: &QuadratureScheme,
) -> Result<HitchinTrendReport> {
    let mut rows = Vec::new();
    for &k in k_range {
        let ctx = BalancedContext::new(inst, k, ell, scheme.clone())?;
        let state = balanced_state(&ctx, controls)?;
        rows.push(hitchin_row(&ctx, &state)?);
    }
    let c_prime = rows.iter().map(|r| r.operator_norm).fold(0.0, f64::max);
    // linear-in-1/k extrapolation of ε(k) from the last two levels
    let epsilon_limit = match rows.len() {
        0 | 1 => rows.last().map_or(0.0, |r| r.epsilon),
        _ => {
            let a = &rows[rows.len() - 2];
            let b = &rows[rows.len() - 1];
            let (ka, kb) = (a.k as f64, b.k as f64);
            (kb * b.epsilon - ka * a.epsilon) / (kb - ka)
        }
    };
    let ell_f = *ell.numer() as f64 / *ell.denom() as f64;
    let r_e = inst.rank() as f64;
    let bound_low = ell_f / (1.0 + r_e * c_prime);
    let bound_high = ell_f / (1.0 + c_prime / r_e);
    let defect_nonincreasing = rows.windows(2).all(|w| {
        let a = w[0].defect_norm.max(DEFECT_FLOOR);
        let b = w[1].defect_norm.max(DEFECT_FLOOR);
        b <= a + 1e-12
    });
    let increments: Vec<f64> =
        rows.windows(2).map(|w| (w[1].epsilon - w[0].epsilon).abs()).collect();
    let increments_decreasing = increments.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let bounds_contained =
        epsilon_limit >= 0.9 * bound_low && epsilon_limit <= 1.1 * bound_high;
    Ok(HitchinTrendReport {
        rows,
        c_prime,
        epsilon_limit,
        bound_low,
        bound_high,
        defect_nonincreasing,
        increments_decreasing,
        bounds_contained,
    })
}

/// One row of the balanced-to-Hitchin table at an already-balanced state.
pub fn hitchin_row(ctx: &BalancedContext, state: &MetricState) -> Result<HitchinTrendRow> {
    let resid = crate::balanced::balanced_residual(ctx, state)?;
    if resid > 1e-8 {
        return Err(Error::Config(format!(
            "state is not balanced: residual {resid:.3e}"
        )));
    }
    let a_on = ctx.pushforward_in_frame(state);
    let frob_sq = frob_sq_in_frame(&a_on, &ctx.g_m);
    let epsilon = ctx.params.epsilon(frob_sq);
    let (_, opnorm) = pushforward_norms(&ctx.a_ref, &state.form, &ctx.g_m)?;
    let chi = ctx.params.chi();
    let k = ctx.k;
    // H_k-orthonormal coefficients: S Q^{-1/2}
    let q = l2_gram_fs(ctx, state)?;
    let q_form = HermitianForm::new(q)?;
    let ortho_coeffs = &state.orthonormalizer * q_form.inv_sqrt();
    let (t_sq, d_sq) = node_norms(ctx, state, &ortho_coeffs, epsilon, chi, k)?;
    Ok(HitchinTrendRow {
        k,
        epsilon,
        frob_sq,
        operator_norm: opnorm,
        t_norm: t_sq.max(0.0).sqrt(),
        defect_norm: d_sq.max(0.0).sqrt(),
    })
}

fn node_norms(
    ctx: &BalancedContext,
    state: &MetricState,
    ortho_coeffs: &CMatrix,
    epsilon: f64,
    chi: f64,
    k: i64,
) -> Result<(f64, f64)> {
    let r = ctx.inst.rank();
    let mut t_vals = Vec::with_capacity(ctx.scheme.len());
    let mut d_vals = Vec::with_capacity(ctx.scheme.len());
    for (idx, p) in ctx.scheme.nodes.iter().enumerate() {
        let w = ctx.node_values()[idx].clone();
        let m = &w * &state.orthonormalizer;
        let h = (&m * m.adjoint())
            .try_inverse()
            .ok_or_else(|| Error::DegenerateForm("fiber evaluation degenerate".into()))?;
        let (h_sqrt, h_inv_sqrt) = herm_sqrt_pair(&h)?;
        let v = &w * ortho_coeffs;
        let b = hermitize(&(&h_sqrt * &v * v.adjoint() * &h_sqrt));
        let comm = higgs_commutator_at(&ctx.inst, &h, p.chart, p.z)?;
        let comm_gauged = hermitize(&(&h_sqrt * comm * &h_inv_sqrt));
        let t = (identity(r) + &comm_gauged * C64::new(epsilon / k as f64, 0.0)) * &b
            / C64::new(chi, 0.0)
            - identity(r);
        let d = &b + &comm_gauged * C64::new(epsilon, 0.0) - identity(r) * C64::new(chi, 0.0);
        t_vals.push(frobenius(&t).powi(2));
        d_vals.push(frobenius(&d).powi(2));
    }
    let t_sq = chunked_scalar_sum(t_vals.len(), |i| {
        C64::new(t_vals[i] * ctx.scheme.weights[i], 0.0)
    })
    .re;
    let d_sq = chunked_scalar_sum(d_vals.len(), |i| {
        C64::new(d_vals[i] * ctx.scheme.weights[i], 0.0)
    })
    .re;
    Ok((t_sq, d_sq))
}

/// Coefficients of the operator expansion, from the recursion
/// `A_0 = B_0 = Id`, `A_{j+1} = ε Σ_{i<=j} [α, A_i β B_{j-i}]`,
/// `B_{j+1} = -Σ_{i<=j} B_i A_{j+1-i}`.
#[derive(Debug, Clone)]
pub struct ExpansionCoeffs {
    pub a: Vec<CMatrix>,
    pub b: Vec<CMatrix>,
    pub epsilon: f64,
}

pub fn ajbj_recursion(
    alpha: &PushforwardMatrix,
    beta: &CMatrix,
    epsilon: f64,
    order: usize,
) -> Result<ExpansionCoeffs> {
    if order > 6 {
        return Err(Error::Config(format!("expansion order {order} > 6")));
    }
    let n = alpha.sections();
    if beta.nrows() != alpha.h_dim * n || beta.ncols() != n {
        return Err(Error::ShapeMismatch("beta shape".into()));
    }
    let mut a = vec![identity(n)];
    let mut b = vec![identity(n)];
    for j in 0..order {
        let mut acc = CMatrix::zeros(n, n);
        for i in 0..=j {
            let inner = hermitian::sandwich_map(&a[i], beta, &b[j - i], alpha.h_dim);
            acc += hermitian::commutator(&alpha.matrix, &inner, alpha.h_dim)?;
        }
        a.push(acc * C64::new(epsilon, 0.0));
        let mut bacc = CMatrix::zeros(n, n);
        for i in 0..=j {
            bacc -= &b[i] * &a[j + 1 - i];
        }
        b.push(bacc);
    }
    Ok(ExpansionCoeffs { a, b, epsilon })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExpansionCheckRow {
    pub k: i64,
    pub residual: f64,
    pub a_norms: Vec<f64>,
}

/// Residual `‖χP - Σ_{j<=N} k^{-j} A_j‖'` against `k` for the reference
/// geometric metrics, with the paired L2 metric emulated exactly by
/// `(·,·)' := (P·,·)` (so `β` is the adjoint against the primed form and
/// the defining fixed-point equation holds by construction).
pub fn expansion_convergence_check(
    inst: &HiggsInstance,
    k_range: &[i64],
    order: usize,
    ell: Rational64,
) -> Result<(SlopeReport, Vec<ExpansionCheckRow>)> {
    if k_range.len() < 4 {
        return Err(Error::Config("k_range too short for a fit".into()));
    }
    let g_m = twist_gram_closed(inst.twist.degree)?;
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for &k in k_range {
        let g = reference_gram_closed(&inst.bundle, k)?;
        let state = MetricState::new(g);
        let a_ref = crate::quantization::pushforward(inst, k)?;
        let a_on = a_ref.transformed(&state.form.sqrt(), &state.orthonormalizer);
        let params = QuantParams::new(inst, k, ell)?;
        let n = a_on.sections();
        let id_form = HermitianForm::identity(n);
        let pe = p_endomorphism(&a_on, &id_form, &g_m, &params)?;
        let p_mat = hermitize(&pe.matrix);
        let p_form = HermitianForm::new(p_mat.clone())?;
        // primed metric: Gram P in the orthonormal frame
        let beta = pushforward_adjoint(&a_on, &p_form, &g_m)?;
        let epsilon = params.epsilon(pe.frob_sq);
        let coeffs = ajbj_recursion(&a_on, &beta, epsilon, order)?;
        let chi = params.chi();
        let mut expansion = CMatrix::zeros(n, n);
        for (j, aj) in coeffs.a.iter().enumerate().take(order + 1) {
            expansion += aj * C64::new((k as f64).powi(-(j as i32)), 0.0);
        }
        let resid = hermitian::operator_norm_wrt(
            &(&p_mat * C64::new(chi, 0.0) - expansion),
            &p_form,
            &p_form,
        )?;
        let a_norms = coeffs
            .a
            .iter()
            .map(|aj| hermitian::operator_norm_wrt(aj, &p_form, &p_form).unwrap_or(f64::NAN))
            .collect();
        points.push((k, resid));
        rows.push(ExpansionCheckRow { k, residual: resid, a_norms });
    }
    Ok((SlopeReport::from_points(points), rows))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HormanderReport {
    pub k: i64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub max_lhs: f64,
}

/// Hörmander-inequality check at one level: for each column
/// `f_j = φ^{*_{H_k}} s'_j` of the adjoint Higgs field, compare the
/// projection defect `‖f - Π_k f‖^2` against `‖∂̄ f‖^2` and report
/// `k · lhs / rhs` per section.  `H_k` is the Fubini-Study pullback of the
/// supplied state.
pub fn hormander_check(
    ctx: &BalancedContext,
    state: &MetricState,
    fd_step: f64,
) -> Result<HormanderReport> {
    if ctx.inst.phi.is_zero() {
        return Err(Error::InvalidInstance("nothing to check for phi = 0".into()));
    }
    let inst = &ctx.inst;
    let k = ctx.k;
    let m_deg = inst.twist.degree;
    let scheme = &ctx.scheme;
    // H_k-orthonormal sections: the FS L2 Gram in the orthonormal frame is Q
    let q = l2_gram_fs(ctx, state)?;
    let q_form = HermitianForm::new(q)?;
    let ortho = &state.orthonormalizer * q_form.inv_sqrt();
    let n = ctx.n_sections();
    let h_k = BundleMetric::from_state(&ctx.basis, state, 0);
    // evaluator for f_j(z) in the M⊗E(k) frame of the given chart
    let f_at = |chart: u8, z: C64, col: usize| -> Result<nalgebra::DVector<C64>> {
        let h = h_k.eval(chart, z);
        let h_inv = h
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateForm("metric singular".into()))?;
        let h_m = fs_line_weight(&ChartPoint::new(chart, z).canonical(), m_deg);
        let phi = higgs_in_chart(inst, chart, z);
        let star = (h_inv * phi.adjoint() * &h) * C64::new(1.0 / h_m, 0.0);
        let sec = ctx.basis.value_matrix_in_chart(chart, z) * &ortho;
        Ok(star * sec.column(col).into_owned())
    };
    // target space H^0(M ⊗ E(k)) with metric h_M · H_k
    let target = inst.bundle.twisted(m_deg);
    let target_basis = section_basis(&target, k)?;
    let nt = target_basis.len();
    let target_metric_at = |p: &ChartPoint| -> CMatrix {
        let h = h_k.eval(p.chart, p.z);
        h * C64::new(fs_line_weight(p, m_deg), 0.0)
    };
    let gram_t = crate::util::chunked_matrix_sum(scheme.len(), nt, nt, |idx| {
        let p = &scheme.nodes[idx];
        let v = target_basis.value_matrix(p);
        v.adjoint() * target_metric_at(p) * v * C64::new(scheme.weights[idx], 0.0)
    });
    let gram_t_form = HermitianForm::new(gram_t)?;
    let gram_t_inv = gram_t_form.inverse();

    let mut ratios = Vec::with_capacity(n);
    let mut max_lhs = 0.0f64;
    for col in 0..n {
        // inner products (f, β_μ) and ‖f‖^2
        let mut pairings = nalgebra::DVector::<C64>::zeros(nt);
        let mut dbar_sq = 0.0f64;
        let mut f_nodes = Vec::with_capacity(scheme.len());
        for (idx, p) in scheme.nodes.iter().enumerate() {
            let f = f_at(p.chart, p.z, col)?;
            let ht = target_metric_at(p);
            let v = target_basis.value_matrix(p);
            let w = scheme.weights[idx];
            pairings += v.adjoint() * &ht * &f * C64::new(w, 0.0);
            // ∂̄f by central differences in the node's chart
            let s = fd_step;
            let ex = C64::new(s, 0.0);
            let ey = C64::new(0.0, s);
            let fxp = f_at(p.chart, p.z + ex, col)?;
            let fxm = f_at(p.chart, p.z - ex, col)?;
            let fyp = f_at(p.chart, p.z + ey, col)?;
            let fym = f_at(p.chart, p.z - ey, col)?;
            let dbar = ((fxp - fxm) + (fyp - fym) * C64::new(0.0, 1.0))
                / C64::new(4.0 * s, 0.0);
            // |dz̄|^2 = 2π (1+|z|^2)^2 under the volume-one form
            let dual = 2.0 * std::f64::consts::PI * (1.0 + p.z.norm_sqr()).powi(2);
            dbar_sq += ((dbar.adjoint() * &ht * &dbar)[(0, 0)]).re * dual * w;
            f_nodes.push(f);
        }
        let coeffs = &gram_t_inv * &pairings;
        // lhs = ‖f‖^2 - 2Re(f, Πf) + ‖Πf‖^2 computed pointwise for robustness
        let mut lhs = 0.0f64;
        for (idx, p) in scheme.nodes.iter().enumerate() {
            let v = target_basis.value_matrix(p);
            let proj = &v * &coeffs;
            let diff = &f_nodes[idx] - proj;
            let ht = target_metric_at(p);
            lhs += ((diff.adjoint() * ht * &diff)[(0, 0)]).re * scheme.weights[idx];
        }
        max_lhs = max_lhs.max(lhs);
        let ratio = if dbar_sq > 1e-300 { k as f64 * lhs / dbar_sq } else { 0.0 };
        ratios.push(ratio);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(HormanderReport { k, ratios, max_ratio, max_lhs })
}
