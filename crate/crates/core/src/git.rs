//! Hilbert-Mumford weight computations for one-parameter subgroups acting
//! on the quantized data, and the closed-form maximal weights of subsheaf
//! directions.
//!
//! For a weight decomposition `U = ⊕_n U_n` the filtration `U_{<=n}`
//! generates subsheaves whose generic ranks enter
//! `Θ(U') = rk_{F'} dim U - rk_E dim U'`.  The first weight is reported
//! both normalized, `μ_1 = (Σ_levels Θ(U_{<=n})) / dim U` (the sum running
//! over the distinct filtration jumps), and un-normalized as the plain jump
//! sum; for the two-weight subsheaf subgroup the un-normalized value is the
//! integer `rk_F P_E(k) - rk_E P_F(k)`.  The second weight `μ_2` reads off
//! the upward block structure of the pushforward in the adapted basis.

use crate::geometry::ChartPoint;
use crate::hermitian::{HermitianForm, column_block};
use crate::model::{HiggsInstance, SplitBundle, hilbert_value};
use crate::quantization::{PushforwardMatrix, SectionBasis, pushforward, section_basis};
use crate::{C64, CMatrix, Error, Result};
use num_rational::Rational64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Tolerance below which a pushforward block counts as exactly zero.  The
/// entries are exact coefficient copies, so this only guards float dust.
pub const BLOCK_ZERO_TOL: f64 = 1e-11;

/// Singular-value cutoff for the sampled generic-rank evaluation.
pub const RANK_CUTOFF: f64 = 1e-9;

/// One-parameter subgroup given by an integer weight per reference-basis
/// vector, with an optional basis change into the reference frame.
#[derive(Debug, Clone)]
pub struct OneParamSubgroup {
    pub weights: Vec<i64>,
    pub basis: Option<CMatrix>,
    pub sl: bool,
}

impl OneParamSubgroup {
    pub fn new(weights: Vec<i64>, basis: Option<CMatrix>, sl: bool) -> Result<Self> {
        let mut distinct = weights.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::InvalidOneParam("need at least two distinct weights".into()));
        }
        if sl {
            let total: i64 = weights.iter().sum();
            if total != 0 {
                return Err(Error::InvalidOneParam(format!(
                    "SL-flagged weights must sum to zero, got {total}"
                )));
            }
        }
        if let Some(b) = &basis {
            if b.nrows() != weights.len() || b.ncols() != weights.len() {
                return Err(Error::InvalidOneParam("basis change has wrong shape".into()));
            }
        }
        Ok(Self { weights, basis, sl })
    }

    /// Two-weight subgroup of a coordinate subsheaf: weight `-dim U''` on
    /// the `H^0(F(k))` coordinates and `+dim U'` on the complement.
    pub fn from_subsheaf(basis: &SectionBasis, summands: &[usize]) -> Result<Self> {
        let n = basis.len();
        let in_h: Vec<bool> = basis.items.iter().map(|(i, _)| summands.contains(i)).collect();
        let p = in_h.iter().filter(|b| **b).count();
        if p == 0 || p == n {
            return Err(Error::InvalidSubset("subsheaf must be proper".into()));
        }
        let weights =
            in_h.iter().map(|h| if *h { -((n - p) as i64) } else { p as i64 }).collect();
        OneParamSubgroup::new(weights, None, true)
    }

    pub fn distinct_levels(&self) -> Vec<i64> {
        let mut levels = self.weights.clone();
        levels.sort_unstable();
        levels.dedup();
        levels
    }

    /// Columns spanning `U_{<=n}` in the reference basis.
    fn filtration_span(&self, level: i64) -> CMatrix {
        let n = self.weights.len();
        let cols: Vec<usize> = (0..n).filter(|i| self.weights[*i] <= level).collect();
        let mut out = CMatrix::zeros(n, cols.len());
        for (j, i) in cols.iter().enumerate() {
            out[(*i, j)] = C64::new(1.0, 0.0);
        }
        match &self.basis {
            Some(b) => b * out,
            None => out,
        }
    }
}

/// Sample points for generic-rank evaluation: a fixed golden-angle set plus
/// seeded pseudo-random points.
fn rank_samples(extra: usize, seed: u64) -> Vec<ChartPoint> {
    let golden = 0.6180339887498949f64;
    let mut pts = Vec::new();
    let fixed = 16;
    for j in 0..fixed {
        let t = -1.0 + 2.0 * (j as f64 + 0.5) / fixed as f64;
        let theta = 2.0 * std::f64::consts::PI * ((j as f64 * golden) % 1.0);
        let rho = ((1.0 + t) / (1.0 - t)).sqrt();
        pts.push(ChartPoint::from_affine(C64::from_polar(rho, theta)));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..extra {
        let t: f64 = rng.gen_range(-0.999..0.999);
        let theta: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let rho = ((1.0 + t) / (1.0 - t)).sqrt();
        pts.push(ChartPoint::from_affine(C64::from_polar(rho, theta)));
    }
    pts
}

/// Generic rank of the subsheaf generated by a coefficient subspace: the
/// maximum over sample points of the rank of the fiber-evaluation span.
/// Returns 0 when every evaluation is rank-deficient below the cutoff.
pub fn generic_rank(
    subspace: &CMatrix,
    basis: &SectionBasis,
    extra_samples: usize,
    seed: u64,
) -> Result<usize> {
    if subspace.ncols() == 0 || subspace.norm() == 0.0 {
        return Err(Error::InvalidSubset("subspace must be nonzero".into()));
    }
    // normalize columns so the absolute cutoff is meaningful
    let mut cols = subspace.clone();
    for mut c in cols.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= C64::new(norm, 0.0);
        }
    }
    let mut rank = 0usize;
    for p in rank_samples(extra_samples, seed) {
        let eval = basis.value_matrix(&p) * &cols;
        let svd = eval.svd(false, false);
        let rk = svd.singular_values.iter().filter(|s| **s > RANK_CUTOFF).count();
        rank = rank.max(rk);
    }
    Ok(rank)
}

/// `Θ(U') = rk_{F'} dim U - rk_E dim U'`, exact integer arithmetic on top
/// of the sampled generic rank.
pub fn theta(
    subspace: &CMatrix,
    basis: &SectionBasis,
    e: &SplitBundle,
    k: i64,
    seed: u64,
) -> Result<i64> {
    let dim_u = hilbert_value(e, k)?;
    let rk = generic_rank(subspace, basis, 8, seed)? as i64;
    Ok(rk * dim_u - e.rank() as i64 * subspace.ncols() as i64)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Mu1Data {
    /// `(level, Θ(U_{<=level}))` at each distinct weight.
    pub theta_by_level: Vec<(i64, i64)>,
    /// Jump sum `Σ Θ(U_{<=n})` over the distinct levels.
    pub unnormalized: i64,
    #[serde(with = "crate::model::ratio_serde")]
    pub mu1: Rational64,
}

pub fn mu1(
    lps: &OneParamSubgroup,
    e: &SplitBundle,
    k: i64,
    basis: &SectionBasis,
    seed: u64,
) -> Result<Mu1Data> {
    let n = basis.len();
    if lps.weights.len() != n {
        return Err(Error::InvalidOneParam(format!(
            "{} weights for a {n}-dimensional section space",
            lps.weights.len()
        )));
    }
    let mut theta_by_level = Vec::new();
    let mut unnormalized = 0i64;
    for level in lps.distinct_levels() {
        let span = lps.filtration_span(level);
        let th = if span.ncols() == n { 0 } else { theta(&span, basis, e, k, seed)? };
        theta_by_level.push((level, th));
        unnormalized += th;
    }
    Ok(Mu1Data { theta_by_level, unnormalized, mu1: Rational64::new(unnormalized, n as i64) })
}

/// Mumford weight of the quantized Higgs point: zero when every block
/// `φ_*^{ab}` with `a >= b` vanishes, otherwise the largest `a - b` over
/// nonvanishing upper blocks.
pub fn mu2(lps: &OneParamSubgroup, a: &PushforwardMatrix) -> Result<i64> {
    let n = a.sections();
    if lps.weights.len() != n {
        return Err(Error::InvalidOneParam("weight count mismatch".into()));
    }
    // move the pushforward into the adapted basis when one is attached
    let adapted = match &lps.basis {
        Some(b) => {
            let b_inv = b
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::InvalidOneParam("basis change is singular".into()))?;
            a.transformed(&b_inv, b)
        }
        None => a.clone(),
    };
    let mut best: Option<i64> = None;
    for (row, wa) in lps.weights.iter().enumerate() {
        for c in 0..adapted.h_dim {
            let block = column_block(&adapted.matrix, c, n);
            for (col, wb) in lps.weights.iter().enumerate() {
                if wa < wb {
                    continue;
                }
                if block[(row, col)].norm() > BLOCK_ZERO_TOL {
                    best = Some(best.map_or(wa - wb, |b: i64| b.max(wa - wb)));
                }
            }
        }
    }
    Ok(best.unwrap_or(0))
}

/// Closed-form maximal weight data of a coordinate subsheaf direction:
/// `ν = h^0(F(k)) / (h^0(E(k)) - h^0(F(k)))`,
/// `w_1 = Vol·rk_E·rk_F / (2 (h^0 E - h^0 F)) · (h^0 E / rk_E - h^0 F / rk_F)`,
/// and the t→∞ limit of the Higgs term, which is `0` when the subsheaf is
/// invariant (block `E_21 = 0`) and `1 + ν` otherwise.  Blocks are taken
/// with respect to the `G`-orthogonal splitting `H ⊕ H^⊥`.
pub fn maximal_weight(
    inst: &HiggsInstance,
    k: i64,
    summands: &[usize],
    g: &HermitianForm,
) -> Result<(f64, f64, Rational64)> {
    let r = inst.rank();
    if summands.is_empty() || summands.len() >= r || summands.iter().any(|i| *i >= r) {
        return Err(Error::InvalidSubset(format!("bad summand subset {summands:?}")));
    }
    let basis = section_basis(&inst.bundle, k)?;
    let n = basis.len();
    let h_e = n as i64;
    let f_degs: Vec<i64> = summands.iter().map(|&i| inst.bundle.degrees()[i]).collect();
    let rk_f = f_degs.len() as i64;
    let h_f = hilbert_value(&SplitBundle::new(f_degs)?, k)?;
    let nu = Rational64::new(h_f, h_e - h_f);
    let w1 = (r as f64) * (rk_f as f64) / (2.0 * (h_e - h_f) as f64)
        * (h_e as f64 / r as f64 - h_f as f64 / rk_f as f64);
    // G-orthogonal projection of φ_*(H^0(M) ⊗ H) onto H^⊥
    let a = pushforward(inst, k)?;
    let in_h: Vec<bool> = basis.items.iter().map(|(i, _)| summands.contains(i)).collect();
    let h_cols: Vec<usize> = (0..n).filter(|i| in_h[*i]).collect();
    let mut inj = CMatrix::zeros(n, h_cols.len());
    for (j, i) in h_cols.iter().enumerate() {
        inj[(*i, j)] = C64::new(1.0, 0.0);
    }
    let g_hh = inj.adjoint() * g.gram() * &inj;
    let g_hh_inv = g_hh
        .try_inverse()
        .ok_or_else(|| Error::DegenerateForm("restricted gram singular".into()))?;
    let proj_h = &inj * g_hh_inv * inj.adjoint() * g.gram();
    let proj_perp = crate::util::identity(n) - proj_h;
    let mut e21_norm_sq = 0.0f64;
    for c in 0..a.h_dim {
        let block = column_block(&a.matrix, c, n);
        for (col, is_h) in in_h.iter().enumerate() {
            if !is_h {
                continue;
            }
            let image = &proj_perp * block.column(col);
            e21_norm_sq += image.norm_squared();
        }
    }
    let w2_limit = if e21_norm_sq.sqrt() < BLOCK_ZERO_TOL {
        0.0
    } else {
        1.0 + *nu.numer() as f64 / *nu.denom() as f64
    };
    Ok((w1, w2_limit, nu))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WeightClass {
    Unstable,
    StrictlySemistable,
    StableCompatible,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WeightReport {
    pub theta_by_level: Vec<(i64, i64)>,
    #[serde(with = "crate::model::ratio_serde")]
    pub mu1: Rational64,
    pub mu1_unnormalized: i64,
    pub mu2: i64,
    #[serde(with = "crate::model::ratio_serde")]
    pub epsilon: Rational64,
    #[serde(with = "crate::model::ratio_serde")]
    pub mu_total: Rational64,
    pub classification: WeightClass,
    pub w1: Option<f64>,
    pub w2_limit: Option<f64>,
    pub nu: Option<(i64, i64)>,
}

/// Assemble `μ = μ_1 + ε μ_2` with `ε = δ/χ = ℓ rk_E / N`, plus the
/// closed-form subsheaf data when the subgroup came from one.
pub fn total_weight(
    lps: &OneParamSubgroup,
    inst: &HiggsInstance,
    k: i64,
    ell: Rational64,
    subsheaf: Option<&[usize]>,
    seed: u64,
) -> Result<WeightReport> {
    let basis = section_basis(&inst.bundle, k)?;
    let m1 = mu1(lps, &inst.bundle, k, &basis, seed)?;
    let a = pushforward(inst, k)?;
    let m2 = mu2(lps, &a)?;
    let n = basis.len() as i64;
    let epsilon = ell * Rational64::new(inst.rank() as i64, n);
    let mu_total = m1.mu1 + epsilon * Rational64::new(m2, 1);
    let zero = Rational64::new(0, 1);
    let classification = if mu_total < zero {
        WeightClass::Unstable
    } else if mu_total == zero {
        WeightClass::StrictlySemistable
    } else {
        WeightClass::StableCompatible
    };
    let (w1, w2_limit, nu) = match subsheaf {
        Some(s) => {
            let g = crate::quantization::reference_gram_closed(&inst.bundle, k)?;
            let (w1, w2, nu) = maximal_weight(inst, k, s, &g)?;
            (Some(w1), Some(w2), Some((*nu.numer(), *nu.denom())))
        }
        None => (None, None, None),
    };
    Ok(WeightReport {
        theta_by_level: m1.theta_by_level,
        mu1: m1.mu1,
        mu1_unnormalized: m1.unnormalized,
        mu2: m2,
        epsilon,
        mu_total,
        classification,
        w1,
        w2_limit,
        nu,
    })
}

// --- JSON forms -------------------------------------------------------------
//
// {"weights": [n_1, ..., n_N]} in the reference basis, or
// {"subsheaf_summands": [i, ...], "k": k} for the two-weight construction
// (summand indices are zero-based).

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum OneParamJson {
    Weights { weights: Vec<i64> },
    Subsheaf { subsheaf_summands: Vec<usize>, k: i64 },
}

/// Parse a subgroup spec against an instance at level `k`; returns the
/// subgroup and the subsheaf summands when given in that form.
pub fn parse_one_param(
    json: &OneParamJson,
    inst: &HiggsInstance,
    k: i64,
) -> Result<(OneParamSubgroup, Option<Vec<usize>>)> {
    let basis = section_basis(&inst.bundle, k)?;
    match json {
        OneParamJson::Weights { weights } => {
            if weights.len() != basis.len() {
                return Err(Error::InvalidOneParam(format!(
                    "{} weights for N = {}",
                    weights.len(),
                    basis.len()
                )));
            }
            Ok((OneParamSubgroup::new(weights.clone(), None, true)?, None))
        }
        OneParamJson::Subsheaf { subsheaf_summands, k: kj } => {
            if *kj != k {
                return Err(Error::InvalidOneParam(format!(
                    "subgroup was built at k={kj}, run uses k={k}"
                )));
            }
            let lps = OneParamSubgroup::from_subsheaf(&basis, subsheaf_summands)?;
            Ok((lps, Some(subsheaf_summands.clone())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures;
    use crate::quantization::reference_gram_closed;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn coord_span(n: usize, cols: &[usize]) -> CMatrix {
        let mut out = CMatrix::zeros(n, cols.len());
        for (j, i) in cols.iter().enumerate() {
            out[(*i, j)] = c(1.0, 0.0);
        }
        out
    }

    #[test]
    fn generic_rank_cases() {
        let e = SplitBundle::new(vec![2, 0]).unwrap();
        let basis = section_basis(&e, 3).unwrap();
        let n = basis.len();
        // full space generates everything
        let full = coord_span(n, &(0..n).collect::<Vec<_>>());
        assert_eq!(generic_rank(&full, &basis, 4, 0).unwrap(), 2);
        // summand-1 sections span only that line subbundle
        let first: Vec<usize> = (0..6).collect();
        assert_eq!(generic_rank(&coord_span(n, &first), &basis, 4, 0).unwrap(), 1);
        // a single section
        assert_eq!(generic_rank(&coord_span(n, &[2]), &basis, 4, 0).unwrap(), 1);
        assert!(generic_rank(&CMatrix::zeros(n, 1), &basis, 4, 0).is_err());
    }

    #[test]
    fn theta_values() {
        let e = SplitBundle::new(vec![2, 0]).unwrap();
        let basis = section_basis(&e, 3).unwrap();
        let n = basis.len();
        // F = O(2): U' = H^0(O(2)(3)) is the first 6 coordinates
        let uprime = coord_span(n, &(0..6).collect::<Vec<_>>());
        assert_eq!(theta(&uprime, &basis, &e, 3, 0).unwrap(), 10 - 2 * 6);
        let full = coord_span(n, &(0..n).collect::<Vec<_>>());
        assert_eq!(theta(&full, &basis, &e, 3, 0).unwrap(), 0);
    }

    #[test]
    fn mu1_subsheaf_two_weight() {
        let inst = fixtures::split_two_zero();
        let basis = section_basis(&inst.bundle, 3).unwrap();
        let lps = OneParamSubgroup::from_subsheaf(&basis, &[0]).unwrap();
        // weights: -4 on the six F-coordinates, +6 on the rest; traceless
        assert_eq!(lps.weights.iter().sum::<i64>(), 0);
        let data = mu1(&lps, &inst.bundle, 3, &basis, 0).unwrap();
        assert_eq!(data.unnormalized, -2);
        assert_eq!(data.mu1, Rational64::new(-2, 10));
    }

    #[test]
    fn mu1_generic_weights_nonnegative_theta() {
        // weights whose filtration saturates to E from the first jump
        let inst = fixtures::balanced_pair(1);
        let basis = section_basis(&inst.bundle, 2).unwrap();
        let n = basis.len();
        // interleave so every filtration level mixes both summands
        let weights: Vec<i64> = (0..n as i64).map(|i| if i % 2 == 0 { -1 } else { 1 }).collect();
        let lps = OneParamSubgroup::new(weights, None, false).unwrap();
        let data = mu1(&lps, &inst.bundle, 2, &basis, 0).unwrap();
        for (_, th) in &data.theta_by_level {
            assert!(*th >= 0, "theta {th}");
        }
    }

    #[test]
    fn single_weight_rejected() {
        assert!(OneParamSubgroup::new(vec![1, 1, 1], None, false).is_err());
        assert!(OneParamSubgroup::new(vec![1, -1, 1], None, true).is_err());
    }

    #[test]
    fn mu2_cases() {
        // synthetic two-dimensional section space with h^0(M) = 1
        let zero = PushforwardMatrix { matrix: CMatrix::zeros(2, 2), h_dim: 1 };
        let lps = OneParamSubgroup::new(vec![-1, 1], None, true).unwrap();
        assert_eq!(mu2(&lps, &zero).unwrap(), 0);

        // only block (a,b) = (-1, 1): row of weight -1, column of weight 1
        let mut down = CMatrix::zeros(2, 2);
        down[(0, 1)] = c(1.0, 0.0);
        let a_down = PushforwardMatrix { matrix: down, h_dim: 1 };
        assert_eq!(mu2(&lps, &a_down).unwrap(), 0);

        // only block (a,b) = (1, -1): weight jump 2
        let mut up = CMatrix::zeros(2, 2);
        up[(1, 0)] = c(2.0, 0.0);
        let a_up = PushforwardMatrix { matrix: up, h_dim: 1 };
        assert_eq!(mu2(&lps, &a_up).unwrap(), 2);
    }

    #[test]
    fn mu2_zero_for_invariant_subsheaf() {
        // invariant summand set ⇒ exact zero upward blocks ⇒ μ2 = 0
        let inst = fixtures::unstable();
        let k = 3;
        let basis = section_basis(&inst.bundle, k).unwrap();
        let lps = OneParamSubgroup::from_subsheaf(&basis, &[0]).unwrap();
        let a = pushforward(&inst, k).unwrap();
        assert_eq!(mu2(&lps, &a).unwrap(), 0);
    }

    #[test]
    fn mu2_positive_for_noninvariant_subsheaf() {
        let inst = fixtures::polystable();
        let k = 3;
        let basis = section_basis(&inst.bundle, k).unwrap();
        // neither summand is invariant for phi = [[0,2],[1,0]]
        let lps = OneParamSubgroup::from_subsheaf(&basis, &[0]).unwrap();
        let a = pushforward(&inst, k).unwrap();
        let m2 = mu2(&lps, &a).unwrap();
        assert!(m2 > 0);
    }

    #[test]
    fn maximal_weight_cases() {
        // E = O^2, F = O (first summand), k = 3: ν = 1, w1 = 0
        let pair = fixtures::semistable();
        let g = reference_gram_closed(&pair.bundle, 3).unwrap();
        let (w1, w2, nu) = maximal_weight(&pair, 3, &[0], &g).unwrap();
        assert_eq!(nu, Rational64::new(1, 1));
        assert!(w1.abs() < 1e-14);
        // F invariant under [[0,1],[0,0]], so the Higgs limit vanishes
        assert_eq!(w2, 0.0);

        // the complementary summand is not invariant: w2 = 1 + ν
        let (_, w2b, nub) = maximal_weight(&pair, 3, &[1], &g).unwrap();
        assert_eq!(w2b, 2.0);
        assert_eq!(nub, Rational64::new(1, 1));

        // destabilizing direction of O(2) ⊕ O has negative w1
        let split = fixtures::split_two_zero();
        let g2 = reference_gram_closed(&split.bundle, 3).unwrap();
        let (w1c, w2c, nuc) = maximal_weight(&split, 3, &[0], &g2).unwrap();
        assert_eq!(nuc, Rational64::new(6, 4));
        assert!((w1c - (2.0 * 1.0 / (2.0 * 4.0)) * (5.0 - 6.0)).abs() < 1e-14);
        assert_eq!(w2c, 0.0); // phi = 0
        assert!(w1c < 0.0);
    }

    #[test]
    fn w2_limit_in_two_element_set() {
        for (inst, s) in [
            (fixtures::semistable(), vec![0usize]),
            (fixtures::semistable(), vec![1usize]),
            (fixtures::polystable(), vec![0usize]),
            (fixtures::unstable(), vec![0usize]),
        ] {
            let g = reference_gram_closed(&inst.bundle, 4).unwrap();
            let (_, w2, nu) = maximal_weight(&inst, 4, &s, &g).unwrap();
            let nu_f = *nu.numer() as f64 / *nu.denom() as f64;
            assert!(
                w2 == 0.0 || (w2 - (1.0 + nu_f)).abs() < 1e-15,
                "w2 = {w2}, nu = {nu_f}"
            );
        }
    }

    #[test]
    fn total_weight_examples() {
        let ell = Rational64::new(1, 1);
        // destabilizing subsheaf of O(2) ⊕ O: μ < 0
        let split = fixtures::split_two_zero();
        let basis = section_basis(&split.bundle, 3).unwrap();
        let lps = OneParamSubgroup::from_subsheaf(&basis, &[0]).unwrap();
        let rep = total_weight(&lps, &split, 3, ell, Some(&[0]), 0).unwrap();
        assert_eq!(rep.mu1_unnormalized, -2);
        assert_eq!(rep.mu2, 0);
        assert_eq!(rep.classification, WeightClass::Unstable);

        // invariant summand of the semistable fixture: μ = 0
        let semi = fixtures::semistable();
        let basis2 = section_basis(&semi.bundle, 3).unwrap();
        let lps2 = OneParamSubgroup::from_subsheaf(&basis2, &[0]).unwrap();
        let rep2 = total_weight(&lps2, &semi, 3, ell, Some(&[0]), 0).unwrap();
        assert_eq!(rep2.mu1_unnormalized, 0);
        assert_eq!(rep2.mu2, 0);
        assert_eq!(rep2.classification, WeightClass::StrictlySemistable);

        // an upward Higgs block strictly increases μ
        let poly = fixtures::polystable();
        let basis3 = section_basis(&poly.bundle, 3).unwrap();
        let lps3 = OneParamSubgroup::from_subsheaf(&basis3, &[0]).unwrap();
        let rep3 = total_weight(&lps3, &poly, 3, ell, Some(&[0]), 0).unwrap();
        assert!(rep3.mu2 > 0);
        assert!(rep3.mu_total > rep3.mu1);
    }

    #[test]
    fn sign_coherence_over_summand_subsets() {
        // sign(un-normalized μ1 of the two-weight subgroup)
        //   = sign(rk_F P_E(k) - rk_E P_F(k)), exactly.
        let cases = [fixtures::split_two_zero(), fixtures::semistable(), fixtures::unstable()];
        for inst in cases {
            let k = 4;
            let basis = section_basis(&inst.bundle, k).unwrap();
            let r = inst.rank();
            for mask in 1u32..(1 << r) - 1 {
                let s: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
                let lps = OneParamSubgroup::from_subsheaf(&basis, &s).unwrap();
                let data = mu1(&lps, &inst.bundle, k, &basis, 0).unwrap();
                let degs: Vec<i64> = s.iter().map(|&i| inst.bundle.degrees()[i]).collect();
                let p_f = hilbert_value(&SplitBundle::new(degs).unwrap(), k).unwrap();
                let p_e = hilbert_value(&inst.bundle, k).unwrap();
                let want = s.len() as i64 * p_e - r as i64 * p_f;
                assert_eq!(data.unnormalized, want, "{}: S={s:?}", inst.label);
            }
        }
    }

    #[test]
    fn one_param_json_forms() {
        let inst = fixtures::split_two_zero();
        let j: OneParamJson =
            serde_json::from_str(r#"{"subsheaf_summands": [0], "k": 3}"#).unwrap();
        let (lps, sub) = parse_one_param(&j, &inst, 3).unwrap();
        assert_eq!(sub, Some(vec![0]));
        assert_eq!(lps.weights.len(), 10);

        let j2: OneParamJson =
            serde_json::from_str(r#"{"weights": [-1,-1,-1,-1,-1,-1,2,2,2,0]}"#).unwrap();
        let (lps2, sub2) = parse_one_param(&j2, &inst, 3).unwrap();
        assert!(sub2.is_none());
        assert_eq!(lps2.weights[6], 2);

        // weights not summing to zero are rejected under the SL flag
        let j3: OneParamJson =
            serde_json::from_str(r#"{"weights": [1,1,1,1,1,1,1,1,1,1]}"#).unwrap();
        assert!(parse_one_param(&j3, &inst, 3).is_err());
    }
}
