//! Fubini-Study pullback metrics, the balanced fixed-point iteration, the
//! moment map, and the Kempf-Ness functional.
//!
//! A metric state is a positive hermitian Gram `G` on `H^0(E(k))` in the
//! reference monomial basis.  Every computation happens in the state's
//! orthonormal frame `s̃ = s · G^{-1/2}`:
//!
//! * `Q` is the L2 Gram of the orthonormal basis under the pulled-back
//!   Fubini-Study metric, `Q = ∫ M†(MM†)^{-1}M ω` with `M(z) = W(z) G^{-1/2}`;
//! * `P` is the endomorphism `χ^{-1}(Id + δ[φ_*,φ_*^*]/(1+|||φ_*|||^2))`
//!   with adjoints against `(G_M ⊗ Id, Id)` in that frame.
//!
//! The update `G' = P^{-1/2} Q P^{-1/2}` (mapped back to the reference
//! frame) has the balanced states `Q = P` as its fixed points and reduces
//! to the classical `G' = χQ` iteration when `phi = 0`.

use crate::geometry::QuadratureScheme;
use crate::hermitian::{HermitianForm, column_block};
use crate::model::HiggsInstance;
use crate::quantization::{
    PushforwardMatrix, QuantParams, SectionBasis, p_endomorphism, pushforward,
    reference_gram_closed, section_basis, twist_gram_closed,
};
use crate::util::{chunked_matrix_sum, chunked_scalar_sum, frobenius, hermitize, identity};
use crate::{C64, CMatrix, Error, Result};
use num_rational::Rational64;

/// Gram matrix on `H^0(E(k))` with its cached orthonormalizer.
#[derive(Debug, Clone)]
pub struct MetricState {
    pub form: HermitianForm,
    /// `G^{-1/2}`, whose columns are the orthonormal basis coefficients.
    pub orthonormalizer: CMatrix,
    pub step: usize,
}

impl MetricState {
    pub fn new(form: HermitianForm) -> Self {
        let orthonormalizer = form.inv_sqrt();
        Self { form, orthonormalizer, step: 0 }
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }
}

/// Everything fixed along an iteration at one level: instance, basis,
/// quadrature, section values at the nodes, and the reference-frame
/// pushforward.
pub struct BalancedContext {
    pub inst: HiggsInstance,
    pub k: i64,
    pub params: QuantParams,
    pub basis: SectionBasis,
    pub scheme: QuadratureScheme,
    pub g_m: HermitianForm,
    pub a_ref: PushforwardMatrix,
    node_values: Vec<CMatrix>,
}

impl BalancedContext {
    pub fn new(
        inst: &HiggsInstance,
        k: i64,
        ell: Rational64,
        scheme: QuadratureScheme,
    ) -> Result<Self> {
        let basis = section_basis(&inst.bundle, k)?;
        let params = QuantParams::new(inst, k, ell)?;
        let g_m = twist_gram_closed(inst.twist.degree)?;
        let a_ref = pushforward(inst, k)?;
        let node_values: Vec<CMatrix> =
            scheme.nodes.iter().map(|p| basis.value_matrix(p)).collect();
        Ok(Self { inst: inst.clone(), k, params, basis, scheme, g_m, a_ref, node_values })
    }

    pub fn n_sections(&self) -> usize {
        self.basis.len()
    }

    /// Reference state: the closed-form Fubini-Study L2 Gram.
    pub fn reference_state(&self) -> Result<MetricState> {
        Ok(MetricState::new(reference_gram_closed(&self.inst.bundle, self.k)?))
    }

    pub fn node_values(&self) -> &[CMatrix] {
        &self.node_values
    }

    /// Pushforward expressed in the orthonormal frame of a state.
    pub fn pushforward_in_frame(&self, state: &MetricState) -> PushforwardMatrix {
        self.a_ref.transformed(&state.form.sqrt(), &state.orthonormalizer)
    }
}

/// `Q` from explicit node values: `Σ_x w(x) M(x)†(M(x)M(x)†)^{-1}M(x)` with
/// `M(x) = W(x) S`.  Split out so equivariance tests can feed transformed
/// section values.
pub fn l2_gram_fs_values(
    values: &[CMatrix],
    scheme: &QuadratureScheme,
    s: &CMatrix,
) -> Result<CMatrix> {
    if values.len() != scheme.len() {
        return Err(Error::SchemeMismatch(format!(
            "{} value matrices vs {} nodes",
            values.len(),
            scheme.len()
        )));
    }
    let n = s.ncols();
    // Inversion failures are poisoned into NaN and caught after the
    // reduction, keeping the parallel loop infallible.
    let q = chunked_matrix_sum(scheme.len(), n, n, |idx| {
        let m = &values[idx] * s;
        let gram = &m * m.adjoint();
        match gram.try_inverse() {
            Some(inv) => m.adjoint() * inv * m * C64::new(scheme.weights[idx], 0.0),
            None => CMatrix::from_element(n, n, C64::new(f64::NAN, 0.0)),
        }
    });
    if q.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::InadmissibleLevel {
            k: 0,
            reason: "sections fail to generate a fiber (rank-deficient evaluation)".into(),
        });
    }
    Ok(hermitize(&q))
}

/// L2 Gram of the state's orthonormal basis under the pulled-back
/// Fubini-Study metric, in the orthonormal frame.
pub fn l2_gram_fs(ctx: &BalancedContext, state: &MetricState) -> Result<CMatrix> {
    l2_gram_fs_values(&ctx.node_values, &ctx.scheme, &state.orthonormalizer)
}

/// Fiber metric `(Σ_j s̃_j(z) s̃_j(z)†)^{-1}` of the pulled-back
/// Fubini-Study metric at one point, in the canonical chart frame.
pub fn fs_pullback_metric(
    ctx: &BalancedContext,
    state: &MetricState,
    p: &crate::geometry::ChartPoint,
) -> Result<CMatrix> {
    let m = ctx.basis.value_matrix(p) * &state.orthonormalizer;
    let gram = &m * m.adjoint();
    gram.try_inverse().ok_or(Error::InadmissibleLevel {
        k: ctx.k,
        reason: "sections fail to generate the fiber".into(),
    })
}

/// Per-step data shared by the residual, the moment map, and the update.
pub struct StepData {
    /// FS-pullback L2 Gram in the orthonormal frame.
    pub q: CMatrix,
    /// `P` endomorphism in the orthonormal frame.
    pub p: CMatrix,
    pub frob_sq: f64,
    /// `‖Q - P‖_F / ‖P‖_F`.
    pub residual: f64,
}

pub fn step_data(ctx: &BalancedContext, state: &MetricState) -> Result<StepData> {
    let q = l2_gram_fs(ctx, state)?;
    let a_on = ctx.pushforward_in_frame(state);
    let pe = p_endomorphism(&a_on, &HermitianForm::identity(state.dim()), &ctx.g_m, &ctx.params)?;
    let p = hermitize(&pe.matrix);
    let residual = frobenius(&(&q - &p)) / frobenius(&p);
    Ok(StepData { q, p, frob_sq: pe.frob_sq, residual })
}

pub fn balanced_residual(ctx: &BalancedContext, state: &MetricState) -> Result<f64> {
    Ok(step_data(ctx, state)?.residual)
}

/// One fixed-point update `G' = G^{1/2} (P^{-1/2} Q P^{-1/2}) G^{1/2}`.
pub fn t_step(ctx: &BalancedContext, state: &MetricState) -> Result<(MetricState, StepData)> {
    let data = step_data(ctx, state)?;
    let next = t_step_from_data(state, &data)?;
    Ok((next, data))
}

fn t_step_from_data(state: &MetricState, data: &StepData) -> Result<MetricState> {
    let p_form = HermitianForm::new(data.p.clone())?;
    let p_inv_sqrt = p_form.inv_sqrt();
    let g_on = hermitize(&(&p_inv_sqrt * &data.q * &p_inv_sqrt));
    let sqrt = state.form.sqrt();
    let g_new = hermitize(&(&sqrt * g_on * &sqrt));
    let mut next = MetricState::new(HermitianForm::new(g_new)?);
    next.step = state.step + 1;
    Ok(next)
}

/// Moment map value in the orthonormal frame:
/// `μ = -(i/2)(Q - P) - (i/2χ) Id`, anti-hermitian.
pub fn moment_map(ctx: &BalancedContext, state: &MetricState) -> Result<CMatrix> {
    let data = step_data(ctx, state)?;
    moment_map_from_data(ctx, &data)
}

pub fn moment_map_from_data(ctx: &BalancedContext, data: &StepData) -> Result<CMatrix> {
    let n = data.q.nrows();
    let half_i = C64::new(0.0, -0.5);
    Ok((&data.q - &data.p) * half_i + identity(n) * C64::new(0.0, -0.5 / ctx.params.chi()))
}

/// Cached base-point data for Kempf-Ness evaluations.
pub struct KempfNessBase {
    m0: Vec<CMatrix>,
    logdet0: Vec<f64>,
    a0: PushforwardMatrix,
    frob0: f64,
}

impl KempfNessBase {
    pub fn new(ctx: &BalancedContext, state0: &MetricState) -> Result<Self> {
        Self::from_raw(&ctx.node_values, state0, &ctx.a_ref, &ctx.g_m)
    }

    /// Build from explicit section values and a reference-frame pushforward
    /// (equivariance tests feed co-transformed data through here).
    pub fn from_raw(
        node_values: &[CMatrix],
        state0: &MetricState,
        a_ref: &PushforwardMatrix,
        g_m: &HermitianForm,
    ) -> Result<Self> {
        let m0: Vec<CMatrix> =
            node_values.iter().map(|w| w * &state0.orthonormalizer).collect();
        let mut logdet0 = Vec::with_capacity(m0.len());
        for m in &m0 {
            logdet0.push(logdet_pd(&(m * m.adjoint()))?);
        }
        let a0 = a_ref.transformed(&state0.form.sqrt(), &state0.orthonormalizer);
        let frob0 = frob_sq_in_frame(&a0, g_m);
        Ok(Self { m0, logdet0, a0, frob0 })
    }
}

fn logdet_pd(gram: &CMatrix) -> Result<f64> {
    let det = gram.determinant();
    if !(det.re > 1e-280) || det.re.is_nan() {
        return Err(Error::DegenerateForm(format!("wedge-norm underflow: det = {det}")));
    }
    Ok(det.re.ln())
}

/// `|||α|||^2 = tr(α (G_M^{-1} ⊗ Id) α†)` in an orthonormal section frame.
pub fn frob_sq_in_frame(a: &PushforwardMatrix, g_m: &HermitianForm) -> f64 {
    let n = a.sections();
    let m_inv = g_m.inverse();
    let mut acc = C64::new(0.0, 0.0);
    for c in 0..a.h_dim {
        for cp in 0..a.h_dim {
            let prod = column_block(&a.matrix, cp, n) * column_block(&a.matrix, c, n).adjoint();
            acc += m_inv[(cp, c)] * prod.diagonal().sum();
        }
    }
    acc.re.max(0.0)
}

/// Kempf-Ness value along the geodesic through `state0` with hermitian
/// traceless generator `ζ`, at parameter `t`:
///
/// `L(t) = (1/4) ∫ log[det(M e^{2tζ} M†)/det(M M†)] ω
///        + (δ/4χ)[log(1+|||e^{tζ}·φ_*|||^2) - log(1+|||φ_*|||^2)]`,
///
/// with `M` the orthonormal section values of `state0` and the group acting
/// on the quantized Higgs field by `α ↦ e^{tζ} α e^{-tζ}` blockwise.  The
/// determinant ratio is the Cauchy-Binet collapse of the wedge-norm sums,
/// so the choice of metric on `det E(k)` cancels.
pub fn kempf_ness(
    ctx: &BalancedContext,
    base: &KempfNessBase,
    zeta: &CMatrix,
    t: f64,
) -> Result<f64> {
    let n = ctx.n_sections();
    if zeta.nrows() != n || zeta.ncols() != n {
        return Err(Error::ShapeMismatch("zeta dimension".into()));
    }
    let scale = frobenius(zeta).max(1e-300);
    if frobenius(&(zeta - zeta.adjoint())) / scale > 1e-10 {
        return Err(Error::InvalidOneParam("zeta must be hermitian".into()));
    }
    let tr: C64 = zeta.diagonal().sum();
    if tr.norm() / scale > 1e-10 {
        return Err(Error::InvalidOneParam("zeta must be traceless".into()));
    }
    let exp_t = herm_exp(zeta, t);
    let exp_mt = herm_exp(zeta, -t);
    kempf_ness_from_transform(ctx, base, &exp_t, &exp_mt)
}

/// Kempf-Ness value for an explicit positive transform `E` (with inverse):
/// the basis moves by `s̃ ↦ s̃ E`, and the quantized Higgs field is
/// re-expressed in the moved basis, `α ↦ E^{-1} α E` blockwise (this is
/// what reproduces the `e^{±2(1+ν)t}` scaling of the off-diagonal blocks
/// in the subsheaf-direction limit).
pub fn kempf_ness_from_transform(
    ctx: &BalancedContext,
    base: &KempfNessBase,
    e: &CMatrix,
    e_inv: &CMatrix,
) -> Result<f64> {
    let e_sq = hermitize(&(e * e.adjoint()));
    let vals: Vec<Result<f64>> = base
        .m0
        .iter()
        .zip(base.logdet0.iter())
        .map(|(m, ld0)| Ok(logdet_pd(&(m * &e_sq * m.adjoint()))? - ld0))
        .collect();
    let mut ratios = Vec::with_capacity(vals.len());
    for v in vals {
        ratios.push(v?);
    }
    let integral =
        chunked_scalar_sum(ratios.len(), |i| C64::new(ratios[i] * ctx.scheme.weights[i], 0.0)).re;
    let l1 = 0.25 * integral;
    let a_t = base.a0.transformed(e_inv, e);
    let frob_t = frob_sq_in_frame(&a_t, &ctx.g_m);
    let l2 = ctx.params.delta() / (4.0 * ctx.params.chi())
        * ((1.0 + frob_t).ln() - (1.0 + base.frob0).ln());
    Ok(l1 + l2)
}

/// `exp(tζ)` for hermitian `ζ` via its eigendecomposition.
pub fn herm_exp(zeta: &CMatrix, t: f64) -> CMatrix {
    let se = hermitize(zeta).symmetric_eigen();
    let n = zeta.nrows();
    let d = CMatrix::from_fn(n, n, |i, j| {
        if i == j { C64::new((t * se.eigenvalues[i]).exp(), 0.0) } else { C64::new(0.0, 0.0) }
    });
    &se.eigenvectors * d * se.eigenvectors.adjoint()
}

/// Kempf-Ness value of an arbitrary state against the base state: the group
/// element is read off from the relative Gram in the base orthonormal frame
/// (determinant-normalized to land in the special-linear slice).
pub fn kempf_ness_of_state(
    ctx: &BalancedContext,
    base: &KempfNessBase,
    state0: &MetricState,
    state: &MetricState,
) -> Result<f64> {
    let s0_inv = &state0.orthonormalizer;
    let rel = hermitize(&(s0_inv * state.form.gram() * s0_inv));
    let n = rel.nrows() as f64;
    let logdet = logdet_pd(&rel)?;
    let rel_norm = rel * C64::new((-logdet / n).exp(), 0.0);
    // metric Gram e^{-2tζ} corresponds to the basis transform e^{+tζ}
    let rel_form = HermitianForm::new(rel_norm)?;
    let e = rel_form.inv_sqrt();
    let e_inv = rel_form.sqrt();
    kempf_ness_from_transform(ctx, base, &e, &e_inv)
}

/// The Kempf-Ness direction attached to the coordinate subsheaf spanned by
/// `summands`: `+1` on the `H = H^0(F(k))` coordinates and `-ν` on the
/// complement, `ν = h^0(F(k)) / (h^0(E(k)) - h^0(F(k)))`; hermitian and
/// exactly traceless.
pub fn subsheaf_kn_direction(basis: &SectionBasis, summands: &[usize]) -> Result<CMatrix> {
    let n = basis.len();
    let in_h: Vec<bool> = basis.items.iter().map(|(i, _)| summands.contains(i)).collect();
    let p = in_h.iter().filter(|b| **b).count();
    if p == 0 || p == n {
        return Err(Error::InvalidSubset("subsheaf must be proper".into()));
    }
    let nu = p as f64 / (n - p) as f64;
    Ok(CMatrix::from_fn(n, n, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if in_h[i] {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-nu, 0.0)
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Verdict {
    Converged,
    MaxIter,
    Degenerate,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub residual: f64,
    pub kn_value: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationControls {
    pub tol: f64,
    pub max_iter: usize,
    pub degen_threshold: f64,
    pub burn_in: usize,
    pub record_kempf_ness: bool,
}

impl Default for IterationControls {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 2000,
            degen_threshold: 1e8,
            burn_in: 20,
            record_kempf_ness: true,
        }
    }
}

pub struct IterationReport {
    pub records: Vec<StepRecord>,
    pub verdict: Verdict,
    pub final_state: MetricState,
    pub final_residual: f64,
}

impl IterationReport {
    /// Per-step CSV: `step,residual,kn_value,min_eig,max_eig,epsilon`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,residual,kn_value,min_eig,max_eig,epsilon\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.step, r.residual, r.kn_value, r.min_eig, r.max_eig, r.epsilon
            ));
        }
        out
    }
}

/// Run the fixed-point iteration from the reference Gram.
pub fn iterate(ctx: &BalancedContext, controls: &IterationControls) -> Result<IterationReport> {
    let state0 = ctx.reference_state()?;
    let base =
        if controls.record_kempf_ness { Some(KempfNessBase::new(ctx, &state0)?) } else { None };
    let mut state = state0.clone();
    let mut records = Vec::new();
    let verdict;
    let final_residual;
    loop {
        let data = match step_data(ctx, &state) {
            Ok(d) => d,
            Err(_) => {
                verdict = Verdict::Degenerate;
                final_residual = records.last().map_or(f64::NAN, |r: &StepRecord| r.residual);
                break;
            }
        };
        let kn = match &base {
            Some(b) => kempf_ness_of_state(ctx, b, &state0, &state).unwrap_or(f64::NAN),
            None => 0.0,
        };
        records.push(StepRecord {
            step: state.step,
            residual: data.residual,
            kn_value: kn,
            min_eig: state.form.min_eigenvalue(),
            max_eig: state.form.max_eigenvalue(),
            epsilon: ctx.params.epsilon(data.frob_sq),
        });
        if data.residual < controls.tol {
            verdict = Verdict::Converged;
            final_residual = data.residual;
            break;
        }
        if state.step >= controls.burn_in
            && state.form.condition_number() > controls.degen_threshold
        {
            verdict = Verdict::Degenerate;
            final_residual = data.residual;
            break;
        }
        if state.step >= controls.max_iter {
            verdict = Verdict::MaxIter;
            final_residual = data.residual;
            break;
        }
        match t_step_from_data(&state, &data) {
            Ok(next) => state = next,
            Err(_) => {
                verdict = Verdict::Degenerate;
                final_residual = data.residual;
                break;
            }
        }
    }
    Ok(IterationReport { records, verdict, final_state: state, final_residual })
}

/// Iterate to a balanced state, erroring out unless convergence is reached.
pub fn balanced_state(ctx: &BalancedContext, controls: &IterationControls) -> Result<MetricState> {
    let mut c = *controls;
    c.record_kempf_ness = false;
    let report = iterate(ctx, &c)?;
    if report.verdict != Verdict::Converged {
        return Err(Error::DegenerateForm(format!(
            "iteration did not converge: {:?} at residual {:.3e}",
            report.verdict, report.final_residual
        )));
    }
    Ok(report.final_state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_quadrature;
    use crate::hermitian::test_support::{random_matrix, random_unitary, rng};
    use crate::model::fixtures;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ctx_for(inst: &HiggsInstance, k: i64, np: usize, na: usize) -> BalancedContext {
        BalancedContext::new(inst, k, Rational64::new(1, 1), build_quadrature(np, na).unwrap())
            .unwrap()
    }

    #[test]
    fn line_bundle_reference_is_balanced() {
        // E = O(d), phi = 0: the Beta-diagonal Gram is an exact fixed point.
        for d in [0i64, 2] {
            let inst = fixtures::line(d);
            let k = 3;
            let ctx = ctx_for(&inst, k, 24, 48);
            let state = ctx.reference_state().unwrap();
            let data = step_data(&ctx, &state).unwrap();
            let n = d + k;
            let want = identity(ctx.n_sections()) * c(1.0 / (n as f64 + 1.0), 0.0);
            assert!((&data.q - &want).norm() < 1e-12, "d={d}: Q off");
            assert!(data.residual < 1e-12, "d={d}: residual {}", data.residual);
            let (next, _) = t_step(&ctx, &state).unwrap();
            assert!((next.form.gram() - state.form.gram()).norm() < 1e-10);
        }
    }

    #[test]
    fn partition_of_unity_trace() {
        // tr(Q) = r for every state.
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 24, 48);
        let mut r = rng(5);
        let n = ctx.n_sections();
        let a = random_matrix(&mut r, n, n);
        let g = HermitianForm::new(&a * a.adjoint() + identity(n) * c(0.3, 0.0)).unwrap();
        let state = MetricState::new(g);
        let q = l2_gram_fs(&ctx, &state).unwrap();
        let tr: C64 = q.diagonal().sum();
        assert!((tr.re - inst.rank() as f64).abs() < 1e-10 && tr.im.abs() < 1e-12);
    }

    #[test]
    fn q_refinement_agreement() {
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 5, 56, 112);
        let mut r = rng(9);
        let n = ctx.n_sections();
        let a = random_matrix(&mut r, n, n);
        let g = HermitianForm::new(&a * a.adjoint() + identity(n) * c(0.5, 0.0)).unwrap();
        let state = MetricState::new(g);
        let q1 = l2_gram_fs(&ctx, &state).unwrap();
        let ctx2 =
            BalancedContext::new(&inst, 5, Rational64::new(1, 1), ctx.scheme.doubled()).unwrap();
        let q2 = l2_gram_fs(&ctx2, &state).unwrap();
        assert!((q1 - q2).norm() < 1e-10);
    }

    #[test]
    fn fs_pullback_line_bundle_density() {
        // E = O(2) at level 3 (n = 5), balanced Gram: h_FS (1+|z|^2)^n = 1/(n+1).
        let inst = fixtures::line(2);
        let ctx = ctx_for(&inst, 3, 16, 32);
        let n = 5i64;
        let state = ctx.reference_state().unwrap();
        for z in [c(0.0, 0.0), c(0.5, -0.3), c(2.0, 1.0)] {
            let p = crate::geometry::ChartPoint::from_affine(z);
            let h = fs_pullback_metric(&ctx, &state, &p).unwrap();
            let weight = crate::geometry::fs_line_weight(&p, n);
            let got = h[(0, 0)].re / weight;
            assert!((got - 1.0 / (n as f64 + 1.0)).abs() < 1e-12, "z={z}: {got}");
        }
    }

    #[test]
    fn fs_pullback_unitary_invariance() {
        // a unitary rotation of the orthonormal basis leaves the metric fixed
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 3, 16, 32);
        let state = ctx.reference_state().unwrap();
        let mut r = rng(21);
        let u = random_unitary(&mut r, ctx.n_sections());
        let p = crate::geometry::ChartPoint::from_affine(c(0.4, 0.2));
        let m = ctx.basis.value_matrix(&p) * &state.orthonormalizer;
        let h1 = (&m * m.adjoint()).try_inverse().unwrap();
        let mu = &m * &u;
        let h2 = (&mu * mu.adjoint()).try_inverse().unwrap();
        assert!((h1 - h2).norm() < 1e-12);
    }

    #[test]
    fn rank_one_constant_section_metric() {
        // r = 1, k = 0, E = O: single constant section, h = 1/|s|^2 = 1.
        let inst = fixtures::line(0);
        let ctx = ctx_for(&inst, 0, 8, 8);
        let state = ctx.reference_state().unwrap();
        let p = crate::geometry::ChartPoint::from_affine(c(0.7, 0.1));
        let h = fs_pullback_metric(&ctx, &state, &p).unwrap();
        assert!((h[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_higgs_step_is_classical_t_map() {
        let inst = fixtures::balanced_pair(1);
        let ctx = ctx_for(&inst, 2, 16, 32);
        let state = ctx.reference_state().unwrap();
        let data = step_data(&ctx, &state).unwrap();
        let chi = ctx.params.chi();
        let want_p = identity(ctx.n_sections()) * c(1.0 / chi, 0.0);
        assert!((&data.p - &want_p).norm() < 1e-14);
        // G' = χ G^{1/2} Q G^{1/2}
        let (next, _) = t_step(&ctx, &state).unwrap();
        let sqrt = state.form.sqrt();
        let want = hermitize(&(&sqrt * &data.q * &sqrt)) * c(chi, 0.0);
        assert!((next.form.gram() - want).norm() < 1e-12);
    }

    #[test]
    fn residual_detects_perturbation() {
        let inst = fixtures::line(1);
        let ctx = ctx_for(&inst, 1, 16, 32);
        let state = ctx.reference_state().unwrap();
        assert!(balanced_residual(&ctx, &state).unwrap() < 1e-12);

        let mut g = state.form.gram().clone();
        g[(0, 0)] *= c(1.0 + 1e-3, 0.0);
        let perturbed = MetricState::new(HermitianForm::new(g).unwrap());
        let res = balanced_residual(&ctx, &perturbed).unwrap();
        assert!(res > 1e-5 && res < 1e-1, "residual {res}");
    }

    #[test]
    fn moment_map_properties() {
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 24, 48);
        let state = ctx.reference_state().unwrap();
        let mu = moment_map(&ctx, &state).unwrap();
        // anti-hermitian
        assert!((&mu + mu.adjoint()).norm() < 1e-10);
        // tr(2iμ) = tr(Q) = r
        let tr: C64 = (mu * c(0.0, 2.0)).diagonal().sum();
        assert!((tr.re - inst.rank() as f64).abs() < 1e-10);
    }

    #[test]
    fn moment_map_balanced_value_zero_higgs() {
        // at the balanced line-bundle state with phi = 0: μ = -(i/2χ) Id
        let inst = fixtures::line(0);
        let ctx = ctx_for(&inst, 4, 16, 32);
        let state = ctx.reference_state().unwrap();
        let mu = moment_map(&ctx, &state).unwrap();
        let want = identity(ctx.n_sections()) * c(0.0, -0.5 / ctx.params.chi());
        assert!((mu - want).norm() < 1e-11);
    }

    #[test]
    fn kempf_ness_zero_at_origin_and_convex() {
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 20, 40);
        let state0 = ctx.reference_state().unwrap();
        let base = KempfNessBase::new(&ctx, &state0).unwrap();
        let n = ctx.n_sections();
        let mut r = rng(13);
        for _ in 0..3 {
            let raw = random_matrix(&mut r, n, n);
            let mut zeta = hermitize(&raw);
            let tr: C64 = zeta.diagonal().sum();
            zeta -= identity(n) * (tr / c(n as f64, 0.0));
            let l0 = kempf_ness(&ctx, &base, &zeta, 0.0).unwrap();
            assert!(l0.abs() < 1e-12);
            let ts: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
            let ls: Vec<f64> =
                ts.iter().map(|t| kempf_ness(&ctx, &base, &zeta, *t).unwrap()).collect();
            for w in ls.windows(3) {
                let second = w[2] - 2.0 * w[1] + w[0];
                assert!(second > -1e-8, "second difference {second}");
            }
        }
    }

    #[test]
    fn kempf_ness_rejects_bad_zeta() {
        let inst = fixtures::line(1);
        let ctx = ctx_for(&inst, 2, 8, 8);
        let state0 = ctx.reference_state().unwrap();
        let base = KempfNessBase::new(&ctx, &state0).unwrap();
        let n = ctx.n_sections();
        let not_traceless = identity(n);
        assert!(kempf_ness(&ctx, &base, &not_traceless, 1.0).is_err());
        let mut not_herm = CMatrix::zeros(n, n);
        not_herm[(0, 1)] = c(1.0, 0.0);
        assert!(kempf_ness(&ctx, &base, &not_herm, 1.0).is_err());
    }

    #[test]
    fn kempf_ness_slope_signs() {
        // Decreasing along the direction attached to the destabilizing
        // subsheaf of the unstable fixture; increasing for a stable-side
        // subsheaf of O(2) ⊕ O.
        let unstable = fixtures::unstable();
        let ctx = ctx_for(&unstable, 3, 20, 40);
        let state0 = ctx.reference_state().unwrap();
        let base = KempfNessBase::new(&ctx, &state0).unwrap();
        let zeta = subsheaf_kn_direction(&ctx.basis, &[0]).unwrap();
        let l4 = kempf_ness(&ctx, &base, &zeta, 4.0).unwrap();
        let l5 = kempf_ness(&ctx, &base, &zeta, 5.0).unwrap();
        assert!(l5 < l4, "expected decreasing tail: {l4} -> {l5}");

        let stable_side = fixtures::split_two_zero();
        let ctx2 = ctx_for(&stable_side, 3, 20, 40);
        let state2 = ctx2.reference_state().unwrap();
        let base2 = KempfNessBase::new(&ctx2, &state2).unwrap();
        // second summand O: h^0(F(3)) underfills the mean
        let zeta2 = subsheaf_kn_direction(&ctx2.basis, &[1]).unwrap();
        let l4b = kempf_ness(&ctx2, &base2, &zeta2, 4.0).unwrap();
        let l5b = kempf_ness(&ctx2, &base2, &zeta2, 5.0).unwrap();
        assert!(l5b > l4b, "expected increasing tail: {l4b} -> {l5b}");
    }

    #[test]
    fn iterate_zero_higgs_pair_converges_immediately() {
        let inst = fixtures::balanced_pair(0);
        let ctx = ctx_for(&inst, 4, 20, 40);
        let rep = iterate(&ctx, &IterationControls::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Converged);
        assert!(rep.final_residual < 1e-9);
        assert!(rep.records.len() <= 2);
    }

    #[test]
    fn moment_map_value_at_balanced_state() {
        // residual < tol forces ‖μ + (i/2χ)Id‖_F < 10·tol
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 24, 48);
        let controls = IterationControls { tol: 1e-9, ..Default::default() };
        let state = balanced_state(&ctx, &controls).unwrap();
        let mu = moment_map(&ctx, &state).unwrap();
        let n = ctx.n_sections();
        let dev = (&mu + identity(n) * c(0.0, 0.5 / ctx.params.chi())).norm();
        assert!(dev < 10.0 * controls.tol, "‖μ + (i/2χ)Id‖ = {dev:.3e}");
    }

    #[test]
    fn line_bundle_recovers_balanced_gram_from_perturbation() {
        // rank one, phi = 0: the classical iteration pulls a perturbed Gram
        // back to the Beta diagonal within a few dozen steps
        let inst = fixtures::line(2);
        let ctx = ctx_for(&inst, 3, 20, 40);
        let reference = ctx.reference_state().unwrap();
        let mut g = reference.form.gram().clone();
        for i in 0..g.nrows() {
            g[(i, i)] *= c(1.0 + 0.2 * (i as f64 + 1.0), 0.0);
            if i + 1 < g.nrows() {
                g[(i, i + 1)] = c(0.01, 0.005);
                g[(i + 1, i)] = c(0.01, -0.005);
            }
        }
        let mut state = MetricState::new(HermitianForm::new(g).unwrap());
        let mut residual = f64::MAX;
        for _ in 0..80 {
            let (next, data) = t_step(&ctx, &state).unwrap();
            residual = data.residual;
            if residual < 1e-9 {
                break;
            }
            state = next;
        }
        assert!(residual < 1e-9, "residual {residual:.3e} after 80 steps");
        // fixed point is the Beta diagonal up to the overall trace scale
        let ratio = state.form.gram()[(0, 0)].re / reference.form.gram()[(0, 0)].re;
        let rescaled = state.form.gram() / c(ratio, 0.0);
        assert!((rescaled - reference.form.gram()).norm() < 1e-6);
    }

    #[test]
    fn iterate_polystable_converges() {
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 24, 48);
        let controls = IterationControls { tol: 1e-9, ..Default::default() };
        let rep = iterate(&ctx, &controls).unwrap();
        assert_eq!(rep.verdict, Verdict::Converged, "residual {}", rep.final_residual);
        // at the fixed point the state reproduces itself
        let state = rep.final_state;
        let (next, data) = t_step(&ctx, &state).unwrap();
        assert!(data.residual < 1e-8);
        assert!((next.form.gram() - state.form.gram()).norm() / state.form.gram().norm() < 1e-8);
    }

    #[test]
    fn iterate_unstable_degenerates() {
        let inst = fixtures::unstable();
        let ctx = ctx_for(&inst, 3, 20, 40);
        let controls = IterationControls { max_iter: 3000, ..Default::default() };
        let rep = iterate(&ctx, &controls).unwrap();
        assert_eq!(rep.verdict, Verdict::Degenerate);
        // min eigenvalue decreasing after burn-in
        for w in rep.records[controls.burn_in..].windows(2) {
            assert!(w[1].min_eig <= w[0].min_eig * (1.0 + 1e-9));
        }
    }

    #[test]
    fn unitary_equivariance() {
        // co-transform section values, Gram, and pushforward by a unitary;
        // the residual is unchanged.
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 20, 40);
        let state = ctx.reference_state().unwrap();
        let data = step_data(&ctx, &state).unwrap();

        let mut r = rng(33);
        let n = ctx.n_sections();
        let u = random_unitary(&mut r, n);

        let values_u: Vec<CMatrix> = ctx.node_values.iter().map(|w| w * &u).collect();
        let g_u = HermitianForm::new(u.adjoint() * state.form.gram() * &u).unwrap();
        let state_u = MetricState::new(g_u);
        let q_u = l2_gram_fs_values(&values_u, &ctx.scheme, &state_u.orthonormalizer).unwrap();

        let a_u = PushforwardMatrix {
            matrix: {
                let mut out = CMatrix::zeros(n, ctx.a_ref.h_dim * n);
                for cdx in 0..ctx.a_ref.h_dim {
                    let block = u.adjoint() * column_block(&ctx.a_ref.matrix, cdx, n) * &u;
                    out.columns_mut(cdx * n, n).copy_from(&block);
                }
                out
            },
            h_dim: ctx.a_ref.h_dim,
        };
        let a_u_on = a_u.transformed(&state_u.form.sqrt(), &state_u.orthonormalizer);
        let pe =
            p_endomorphism(&a_u_on, &HermitianForm::identity(n), &ctx.g_m, &ctx.params).unwrap();
        let res_u = frobenius(&(&q_u - &pe.matrix)) / frobenius(&pe.matrix);
        assert!((res_u - data.residual).abs() < 1e-10);
    }

    #[test]
    fn kempf_ness_of_state_zero_for_base() {
        let inst = fixtures::polystable();
        let ctx = ctx_for(&inst, 4, 16, 32);
        let state0 = ctx.reference_state().unwrap();
        let base = KempfNessBase::new(&ctx, &state0).unwrap();
        let v = kempf_ness_of_state(&ctx, &base, &state0, &state0).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn herm_exp_matches_series() {
        let mut r = rng(17);
        let raw = random_matrix(&mut r, 3, 3);
        let zeta = hermitize(&raw);
        let t = 0.3;
        let e = herm_exp(&zeta, t);
        let mut acc = identity(3);
        let mut term = identity(3);
        for j in 1..12 {
            term = term * &zeta * c(t / j as f64, 0.0);
            acc += &term;
        }
        assert!((e - acc).norm() < 1e-9);
    }
}
