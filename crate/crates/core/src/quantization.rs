//! Section spaces `H^0(E(k))` and `H^0(M)`, their L2 Grams, the pushforward
//! `φ_*`, the `P` endomorphism, and weakly-geometric diagnostics.
//!
//! The pushforward matrix is laid out with the domain `H^0(M) ⊗ H^0(E(k))`
//! in `h^0(M)`-major column blocks: column `(c, (j, a))` sits at index
//! `c * N + col(j, a)`, so block `c` is the action on `t_c ⊗ H^0(E(k))`.
//! Its entries are exact copies of Higgs coefficients (monomial times
//! monomial is a monomial), so roundtrips are exact.

use crate::geometry::{ChartPoint, QuadratureScheme, fs_line_weight};
use crate::hermitian::{self, HermitianForm, column_block};
use crate::model::{HiggsField, HiggsInstance, SplitBundle, hilbert_value, poly_is_zero};
use crate::util::{beta_gram_entry, chunked_matrix_sum, identity};
use crate::{C64, CMatrix, Error, Result};
use num_rational::Rational64;

/// Indexed monomial basis of `H^0(E(k))`: item `(i, a)` is the monomial
/// `z^a` in the degree-`n_i` frame of summand `i`, `n_i = d_i + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionBasis {
    pub summand_degrees: Vec<i64>,
    pub k: i64,
    pub items: Vec<(usize, i64)>,
    offsets: Vec<usize>,
}

impl SectionBasis {
    pub fn rank(&self) -> usize {
        self.summand_degrees.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Twisted degree `n_i = d_i + k` of summand `i`.
    pub fn twisted_degree(&self, i: usize) -> i64 {
        self.summand_degrees[i] + self.k
    }

    pub fn index_of(&self, summand: usize, exponent: i64) -> usize {
        self.offsets[summand] + exponent as usize
    }

    /// Values of all basis sections at a point, as an `r x N` matrix in the
    /// canonical chart frame of the point: chart 0 gives `z^a`, chart 1
    /// gives `w^{n_i - a}`.
    pub fn value_matrix(&self, p: &ChartPoint) -> CMatrix {
        let q = p.canonical();
        self.value_matrix_in_chart(q.chart, q.z)
    }

    /// Values in the frame of a fixed chart, without canonicalization
    /// (finite-difference stencils must stay in one frame).
    pub fn value_matrix_in_chart(&self, chart: u8, z: C64) -> CMatrix {
        let r = self.rank();
        let mut out = CMatrix::zeros(r, self.len());
        let max_n = (0..r).map(|i| self.twisted_degree(i)).max().unwrap_or(0);
        let mut powers = Vec::with_capacity(max_n as usize + 1);
        let mut acc = C64::new(1.0, 0.0);
        for _ in 0..=max_n {
            powers.push(acc);
            acc *= z;
        }
        for (col, (i, a)) in self.items.iter().enumerate() {
            let e = if chart == 0 { *a } else { self.twisted_degree(*i) - *a };
            out[(*i, col)] = powers[e as usize];
        }
        out
    }

    /// Reference Fubini-Study metric matrix of `E(k)` at a point, in the
    /// canonical chart frame: `diag((1+|z|^2)^{-n_i})`.
    pub fn reference_metric(&self, p: &ChartPoint) -> CMatrix {
        let r = self.rank();
        CMatrix::from_fn(r, r, |i, j| {
            if i == j {
                C64::new(fs_line_weight(p, self.twisted_degree(i)), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

pub fn section_basis(e: &SplitBundle, k: i64) -> Result<SectionBasis> {
    hilbert_value(e, k)?;
    let mut items = Vec::new();
    let mut offsets = Vec::with_capacity(e.rank());
    for (i, d) in e.degrees().iter().enumerate() {
        offsets.push(items.len());
        for a in 0..=(d + k) {
            items.push((i, a));
        }
    }
    Ok(SectionBasis { summand_degrees: e.degrees().to_vec(), k, items, offsets })
}

/// Monomial values of `H^0(O(m))` at a point, as a `1 x (m+1)` row in the
/// canonical chart frame.
pub fn twist_values(m: i64, p: &ChartPoint) -> CMatrix {
    let q = p.canonical();
    CMatrix::from_fn(1, (m + 1) as usize, |_, c| {
        let e = if q.chart == 0 { c as i64 } else { m - c as i64 };
        q.z.powi(e as i32)
    })
}

/// L2 Gram of the monomial basis of `H^0(O(m))` under the Fubini-Study
/// metric, computed by quadrature.  Exact quadrature gives the diagonal
/// `c!(m-c)!/(m+1)!`.
pub fn twist_l2_gram(m: i64, scheme: &QuadratureScheme) -> Result<HermitianForm> {
    if m < 0 {
        return Err(Error::InvalidInstance(format!("twist degree {m} < 0")));
    }
    let dim = (m + 1) as usize;
    let gram = chunked_matrix_sum(scheme.len(), dim, dim, |idx| {
        let p = &scheme.nodes[idx];
        let v = twist_values(m, p);
        let w = fs_line_weight(p, m) * scheme.weights[idx];
        v.adjoint() * v * C64::new(w, 0.0)
    });
    HermitianForm::new(gram)
}

/// L2 Gram of the monomial section basis under the summand-wise
/// Fubini-Study reference metric, by quadrature.
pub fn reference_l2_gram(
    e: &SplitBundle,
    k: i64,
    scheme: &QuadratureScheme,
) -> Result<HermitianForm> {
    let basis = section_basis(e, k)?;
    let n = basis.len();
    let gram = chunked_matrix_sum(scheme.len(), n, n, |idx| {
        let p = &scheme.nodes[idx];
        let v = basis.value_matrix(p);
        let h = basis.reference_metric(p);
        v.adjoint() * h * v * C64::new(scheme.weights[idx], 0.0)
    });
    HermitianForm::new(gram)
}

/// Closed-form reference Gram: block diagonal with Beta entries
/// `a!(n_i-a)!/(n_i+1)!`.
pub fn reference_gram_closed(e: &SplitBundle, k: i64) -> Result<HermitianForm> {
    let basis = section_basis(e, k)?;
    let entries: Vec<f64> = basis
        .items
        .iter()
        .map(|(i, a)| beta_gram_entry(basis.twisted_degree(*i), *a))
        .collect();
    HermitianForm::from_real_diagonal(&entries)
}

/// Closed-form twist Gram `diag(c!(m-c)!/(m+1)!)`.
pub fn twist_gram_closed(m: i64) -> Result<HermitianForm> {
    let entries: Vec<f64> = (0..=m).map(|c| beta_gram_entry(m, c)).collect();
    HermitianForm::from_real_diagonal(&entries)
}

/// Matrix of `φ_*: H^0(M) ⊗ H^0(E(k)) → H^0(E(k))`.
#[derive(Debug, Clone)]
pub struct PushforwardMatrix {
    pub matrix: CMatrix,
    /// `h^0(M) = m + 1`.
    pub h_dim: usize,
}

impl PushforwardMatrix {
    pub fn sections(&self) -> usize {
        self.matrix.nrows()
    }

    /// Conjugate into another frame: block `c` becomes `left A_c right`.
    pub fn transformed(&self, left: &CMatrix, right: &CMatrix) -> PushforwardMatrix {
        let n = self.sections();
        let mut out = CMatrix::zeros(n, self.h_dim * n);
        for c in 0..self.h_dim {
            let block = left * column_block(&self.matrix, c, n) * right;
            out.columns_mut(c * n, n).copy_from(&block);
        }
        PushforwardMatrix { matrix: out, h_dim: self.h_dim }
    }
}

/// Assemble the pushforward from the Higgs coefficients:
/// `t_c ⊗ (z^a e_j) ↦ Σ_i Σ_u φ_{ij,u} z^{u+c+a} e_i`.
pub fn pushforward(inst: &HiggsInstance, k: i64) -> Result<PushforwardMatrix> {
    let diag = crate::model::validate(inst);
    if !diag.is_valid() {
        return Err(Error::InvalidInstance(diag.violations.join("; ")));
    }
    let basis = section_basis(&inst.bundle, k)?;
    let n = basis.len();
    let m = inst.twist.degree;
    let h_dim = (m + 1) as usize;
    let r = inst.rank();
    let mut a = CMatrix::zeros(n, h_dim * n);
    for c in 0..=m {
        for (col, (j, s_exp)) in basis.items.iter().enumerate() {
            for i in 0..r {
                let p = &inst.phi.entries[i][*j];
                if poly_is_zero(p) {
                    continue;
                }
                for (u, coeff) in p.iter().enumerate() {
                    let row = basis.index_of(i, u as i64 + c + s_exp);
                    a[(row, c as usize * n + col)] += coeff;
                }
            }
        }
    }
    Ok(PushforwardMatrix { matrix: a, h_dim })
}

/// Recover the Higgs field from a pushforward matrix by solving the
/// fiberwise evaluation system at roots of unity, checking at every sample
/// that the map descends to the fibers (`α(ker e_{2,x}) ⊂ ker e_{1,x}`)
/// and that the roundtrip reproduces the input.
pub fn reconstruct_higgs(
    a: &PushforwardMatrix,
    e: &SplitBundle,
    m: i64,
    k: i64,
) -> Result<HiggsField> {
    let basis = section_basis(e, k)?;
    let n = basis.len();
    let r = e.rank();
    if a.matrix.nrows() != n || a.matrix.ncols() != a.h_dim * n || a.h_dim as i64 != m + 1 {
        return Err(Error::ShapeMismatch(format!(
            "pushforward is {}x{} with h_dim {}, expected {}x{} with {}",
            a.matrix.nrows(),
            a.matrix.ncols(),
            a.h_dim,
            n,
            (m + 1) * n as i64,
            m + 1
        )));
    }
    let tol = 1e-9 * (1.0 + a.matrix.norm());
    let max_deg = (0..r)
        .flat_map(|i| (0..r).map(move |j| (i, j)))
        .map(|(i, j)| e.degrees()[i] - e.degrees()[j] - m)
        .max()
        .unwrap_or(0)
        .max(0);
    let samples = (max_deg + 2).max(4) as usize;
    let mut phi_values: Vec<CMatrix> = Vec::with_capacity(samples);
    let mut points = Vec::with_capacity(samples);
    for s in 0..samples {
        let theta = 2.0 * std::f64::consts::PI * s as f64 / samples as f64;
        let x = C64::from_polar(1.0, theta);
        points.push(x);
        // e_{2,x}: (c,(j,b)) ↦ x^{c+b} into component j; e_{1,x}: (j,b) ↦ x^b.
        let mut e2 = CMatrix::zeros(r, a.h_dim * n);
        for c in 0..a.h_dim {
            for (col, (j, b)) in basis.items.iter().enumerate() {
                e2[(*j, c * n + col)] = x.powi(c as i32 + *b as i32);
            }
        }
        let mut e1 = CMatrix::zeros(r, n);
        for (col, (j, b)) in basis.items.iter().enumerate() {
            e1[(*j, col)] = x.powi(*b as i32);
        }
        let lhs = &e1 * &a.matrix;
        let gram = &e2 * e2.adjoint();
        let ginv = gram
            .try_inverse()
            .ok_or_else(|| Error::NotBundleMorphism("degenerate evaluation".into()))?;
        let phi_x = &lhs * e2.adjoint() * ginv;
        let resid = (&phi_x * &e2 - &lhs).norm();
        if resid > tol {
            return Err(Error::NotBundleMorphism(format!(
                "evaluation condition fails at sample {s}: residual {resid:.3e}"
            )));
        }
        phi_values.push(phi_x);
    }
    // Inverse DFT over the unit circle recovers polynomial coefficients.
    let mut entries = vec![vec![Vec::new(); r]; r];
    for i in 0..r {
        for j in 0..r {
            let e_ij = e.degrees()[i] - e.degrees()[j] - m;
            let mut coeffs = Vec::with_capacity(samples);
            for u in 0..samples {
                let mut acc = C64::new(0.0, 0.0);
                for (s, x) in points.iter().enumerate() {
                    acc += phi_values[s][(i, j)] * x.powi(-(u as i32));
                }
                coeffs.push(acc / C64::new(samples as f64, 0.0));
            }
            let degree_bound = if e_ij < 0 { 0 } else { (e_ij + 1) as usize };
            for (u, cf) in coeffs.iter().enumerate() {
                if u >= degree_bound && cf.norm() > tol {
                    return Err(Error::NotBundleMorphism(format!(
                        "entry ({i},{j}) has spectral content at degree {u} beyond e_ij={e_ij}"
                    )));
                }
            }
            if e_ij >= 0 {
                let mut p: Vec<C64> = coeffs[..degree_bound].to_vec();
                if p.iter().all(|c| c.norm() <= tol) {
                    p.clear();
                }
                entries[i][j] = p;
            }
        }
    }
    let phi = HiggsField { entries };
    let inst = HiggsInstance {
        twist: crate::model::TwistBundle { degree: m },
        bundle: e.clone(),
        phi: phi.clone(),
        label: String::new(),
    };
    let back = pushforward(&inst, k)?;
    let err = (&back.matrix - &a.matrix).norm();
    if err > tol {
        return Err(Error::NotBundleMorphism(format!("roundtrip residual {err:.3e}")));
    }
    Ok(phi)
}

/// Level parameters: `δ = ℓ k^{n-1} = ℓ` on the curve and
/// `χ = N / (rk_E · Vol) = N / rk_E`.
#[derive(Debug, Clone, Copy)]
pub struct QuantParams {
    pub k: i64,
    pub ell: Rational64,
    pub n_sections: usize,
    pub rank: usize,
}

impl QuantParams {
    pub fn new(inst: &HiggsInstance, k: i64, ell: Rational64) -> Result<Self> {
        let n = hilbert_value(&inst.bundle, k)? as usize;
        Ok(Self { k, ell, n_sections: n, rank: inst.rank() })
    }

    pub fn delta(&self) -> f64 {
        *self.ell.numer() as f64 / *self.ell.denom() as f64
    }

    pub fn chi(&self) -> f64 {
        self.n_sections as f64 / self.rank as f64
    }

    pub fn chi_rational(&self) -> Rational64 {
        Rational64::new(self.n_sections as i64, self.rank as i64)
    }

    /// `ε = δ k / (1 + |||φ_*|||^2)` at the current metric.
    pub fn epsilon(&self, frob_sq: f64) -> f64 {
        self.delta() * self.k as f64 / (1.0 + frob_sq)
    }

    /// GIT weight mixing `ε = δ/χ`.
    pub fn epsilon_git(&self) -> Rational64 {
        self.ell * Rational64::new(self.rank as i64, self.n_sections as i64)
    }
}

/// The endomorphism `P = χ^{-1}(Id + δ [φ_*, φ_*^*] / (1 + |||φ_*|||^2))`
/// with adjoints taken against `(G_M ⊗ G, G)`.
#[derive(Debug, Clone)]
pub struct PEndomorphism {
    pub matrix: CMatrix,
    pub frob_sq: f64,
}

/// Adjoint of the pushforward with respect to `(G_M ⊗ G, G)`.
pub fn pushforward_adjoint(
    a: &PushforwardMatrix,
    g: &HermitianForm,
    g_m: &HermitianForm,
) -> Result<CMatrix> {
    if g_m.dim() != a.h_dim || g.dim() != a.sections() {
        return Err(Error::ShapeMismatch(format!(
            "adjoint: pushforward {}x{} vs forms {} and {}",
            a.matrix.nrows(),
            a.matrix.ncols(),
            g_m.dim(),
            g.dim()
        )));
    }
    hermitian::kron_inv_apply(g_m, g, &(a.matrix.adjoint() * g.gram()))
}

pub fn p_endomorphism(
    a: &PushforwardMatrix,
    g: &HermitianForm,
    g_m: &HermitianForm,
    params: &QuantParams,
) -> Result<PEndomorphism> {
    let n = a.sections();
    let beta = pushforward_adjoint(a, g, g_m)?;
    let frob_sq: f64 = (&a.matrix * &beta).diagonal().sum().re.max(0.0);
    let comm = hermitian::commutator(&a.matrix, &beta, a.h_dim)?;
    let chi = params.chi();
    let scale = params.delta() / (1.0 + frob_sq);
    let p = (identity(n) + comm * C64::new(scale, 0.0)) * C64::new(1.0 / chi, 0.0);
    Ok(PEndomorphism { matrix: p, frob_sq })
}

/// Frobenius-squared and operator norm of the pushforward under
/// `(G_M ⊗ G, G)`.
pub fn pushforward_norms(
    a: &PushforwardMatrix,
    g: &HermitianForm,
    g_m: &HermitianForm,
) -> Result<(f64, f64)> {
    let beta = pushforward_adjoint(a, g, g_m)?;
    let frob_sq = (&a.matrix * &beta).diagonal().sum().re.max(0.0);
    let g_sqrt = g.sqrt();
    let g_inv_sqrt = g.inv_sqrt();
    let m_inv_sqrt = g_m.inv_sqrt();
    let n = a.sections();
    let mut white = CMatrix::zeros(n, a.h_dim * n);
    for c in 0..a.h_dim {
        let mut acc = CMatrix::zeros(n, n);
        for cp in 0..a.h_dim {
            acc += column_block(&a.matrix, cp, n) * m_inv_sqrt[(cp, c)];
        }
        white.columns_mut(c * n, n).copy_from(&(&g_sqrt * acc * &g_inv_sqrt));
    }
    let svd = white.svd(false, false);
    Ok((frob_sq, svd.singular_values.max()))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeaklyGeometricRow {
    pub k: i64,
    /// `|||φ_*|||^2 · rk_E / k^n`.
    pub frobenius_scaled: f64,
    pub operator_norm: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeaklyGeometricReport {
    pub rows: Vec<WeaklyGeometricRow>,
    /// Fitted constant: the largest observed operator norm.
    pub c_prime: f64,
    pub lower_bound_violated: bool,
    pub upper_bound_violated: bool,
}

/// Per-level `(|||φ_*|||^2 rk/k, ‖φ_*‖)` under the geometric (reference L2)
/// metrics, with the two weakly-geometric bounds checked for the fitted
/// constant.
pub fn weakly_geometric_report(
    inst: &HiggsInstance,
    k_range: &[i64],
) -> Result<WeaklyGeometricReport> {
    if inst.phi.is_zero() {
        return Err(Error::InvalidInstance("weakly geometric report needs phi != 0".into()));
    }
    let g_m = twist_gram_closed(inst.twist.degree)?;
    let mut rows = Vec::new();
    for &k in k_range {
        let a = pushforward(inst, k)?;
        let g = reference_gram_closed(&inst.bundle, k)?;
        let (frob_sq, opnorm) = pushforward_norms(&a, &g, &g_m)?;
        rows.push(WeaklyGeometricRow {
            k,
            frobenius_scaled: frob_sq * inst.rank() as f64 / k as f64,
            operator_norm: opnorm,
        });
    }
    let c_prime = rows.iter().map(|r| r.operator_norm).fold(0.0, f64::max);
    let r_e = inst.rank() as f64;
    // c'/rk · k <= |||φ_*|||^2  ⟺  c' k / r <= frobenius_scaled · k / r
    let lower_bound_violated = rows.iter().any(|row| {
        let frob_sq = row.frobenius_scaled * row.k as f64 / r_e;
        c_prime * row.k as f64 / r_e > frob_sq + 1e-12
    });
    let upper_bound_violated = rows.iter().any(|r| r.operator_norm > c_prime + 1e-12);
    Ok(WeaklyGeometricReport { rows, c_prime, lower_bound_violated, upper_bound_violated })
}

/// Norm-squared of the multiplication map
/// `H^0(E(k)) ⊗ H^0(O(m')) → H^0(O(m') ⊗ E(k))` under L2 metrics, together
/// with the bound `C = h^0(M') · sup{ |t(x)|^2 : ‖t‖ = 1 }`.
pub fn multiplication_norm_check(
    m_deg: i64,
    e: &SplitBundle,
    k: i64,
    scheme: &QuadratureScheme,
) -> Result<(f64, f64)> {
    let basis = section_basis(e, k)?;
    let n = basis.len();
    let h = (m_deg + 1) as usize;
    let target = e.twisted(m_deg);
    let target_basis = section_basis(&target, k)?;
    let mut mat = CMatrix::zeros(target_basis.len(), h * n);
    for c in 0..=m_deg {
        for (col, (j, a)) in basis.items.iter().enumerate() {
            let row = target_basis.index_of(*j, a + c);
            mat[(row, c as usize * n + col)] = C64::new(1.0, 0.0);
        }
    }
    let g_e = reference_gram_closed(e, k)?;
    let g_m = twist_gram_closed(m_deg)?;
    let dom = HermitianForm::new(hermitian::kron(g_m.gram(), g_e.gram()))?;
    let cod = reference_gram_closed(&target, k)?;
    let norm = hermitian::operator_norm_wrt(&mat, &dom, &cod)?;
    // sup over nodes of max_{‖t‖=1} |t(x)|^2: the scalar Bergman density of
    // O(m'), evaluated rather than assumed constant.
    let m_inv = g_m.inverse();
    let mut sup = 0.0f64;
    for p in &scheme.nodes {
        let v = twist_values(m_deg, p);
        let w = fs_line_weight(p, m_deg);
        let val = (&v * &m_inv * v.adjoint())[(0, 0)].re * w;
        sup = sup.max(val);
    }
    let bound = h as f64 * sup;
    Ok((norm * norm, bound))
}
