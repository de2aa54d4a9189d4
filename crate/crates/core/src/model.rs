//! Twisted Higgs bundle instances on the projective line and their
//! elementary sheaf arithmetic.
//!
//! Bundles are represented split, `E = ⊕ O(d_i)` with `d_1 >= ... >= d_r`,
//! and the Higgs field `phi: O(m) ⊗ E → E` entrywise: entry `(i, j)` is a
//! polynomial of degree `e_ij = d_i - d_j - m` when that is nonnegative and
//! zero otherwise.  Polynomials are dense coefficient lists in the chart-0
//! monomial basis; the empty list is the zero polynomial.

use crate::{C64, Error, Result};
use num_rational::Rational64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Twisting line bundle `M = O(m)`, `m >= 0` (global generation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistBundle {
    pub degree: i64,
}

/// Split bundle `⊕ O(d_i)`, degrees sorted descending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBundle {
    degrees: Vec<i64>,
}

impl SplitBundle {
    pub fn new(mut degrees: Vec<i64>) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::InvalidInstance("bundle must have positive rank".into()));
        }
        degrees.sort_unstable_by(|a, b| b.cmp(a));
        Ok(Self { degrees })
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[i64] {
        &self.degrees
    }

    pub fn degree(&self) -> i64 {
        self.degrees.iter().sum()
    }

    /// The split bundle `M ⊗ E` for `M = O(m)`.
    pub fn twisted(&self, m: i64) -> SplitBundle {
        SplitBundle { degrees: self.degrees.iter().map(|d| d + m).collect() }
    }
}

/// A polynomial coefficient list; empty means zero.
pub type Poly = Vec<C64>;

pub fn poly_is_zero(p: &Poly) -> bool {
    p.is_empty() || p.iter().all(|c| c.norm() == 0.0)
}

pub fn poly_eval(p: &Poly, z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for c in p.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Higgs matrix: `entries[i][j]` is the polynomial of entry `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiggsField {
    pub entries: Vec<Vec<Poly>>,
}

impl HiggsField {
    pub fn zero(rank: usize) -> Self {
        Self { entries: vec![vec![Vec::new(); rank]; rank] }
    }

    /// Constant matrix entries (each a degree-zero polynomial, admissible
    /// only where `e_ij = 0`).
    pub fn constant(matrix: &[&[f64]]) -> Self {
        let entries = matrix
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| if *v == 0.0 { Vec::new() } else { vec![C64::new(*v, 0.0)] })
                    .collect()
            })
            .collect();
        Self { entries }
    }

    pub fn rank(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|row| row.iter().all(poly_is_zero))
    }

    /// Entry values at a chart-0 coordinate.
    pub fn eval(&self, z: C64) -> crate::CMatrix {
        let r = self.rank();
        crate::CMatrix::from_fn(r, r, |i, j| poly_eval(&self.entries[i][j], z))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiggsInstance {
    pub twist: TwistBundle,
    pub bundle: SplitBundle,
    pub phi: HiggsField,
    pub label: String,
}

impl HiggsInstance {
    pub fn new(m: i64, degrees: Vec<i64>, phi: HiggsField, label: &str) -> Result<Self> {
        let inst = Self {
            twist: TwistBundle { degree: m },
            bundle: SplitBundle::new(degrees)?,
            phi,
            label: label.to_string(),
        };
        let diag = validate(&inst);
        if !diag.is_valid() {
            return Err(Error::InvalidInstance(diag.violations.join("; ")));
        }
        Ok(inst)
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    /// Admissible degree of entry `(i, j)`: `e_ij = d_i - d_j - m`.
    pub fn entry_degree(&self, i: usize, j: usize) -> i64 {
        self.bundle.degrees()[i] - self.bundle.degrees()[j] - self.twist.degree
    }
}

/// Structured validation report; violations are collected, not raised.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub violations: Vec<String>,
    pub zero_higgs: bool,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(inst: &HiggsInstance) -> Diagnostics {
    let mut d = Diagnostics { violations: Vec::new(), zero_higgs: inst.phi.is_zero() };
    let r = inst.bundle.rank();
    if inst.twist.degree < 0 {
        d.violations.push(format!("twist degree m={} must be >= 0", inst.twist.degree));
    }
    if inst.phi.rank() != r || inst.phi.entries.iter().any(|row| row.len() != r) {
        d.violations.push(format!(
            "phi must be a {r}x{r} array, got {}x{:?}",
            inst.phi.rank(),
            inst.phi.entries.iter().map(|row| row.len()).collect::<Vec<_>>()
        ));
        return d;
    }
    for i in 0..r {
        for j in 0..r {
            let p = &inst.phi.entries[i][j];
            if poly_is_zero(p) {
                continue;
            }
            let e = inst.entry_degree(i, j);
            if e < 0 {
                d.violations.push(format!("entry ({i},{j}) must vanish: e_ij = {e} < 0"));
            } else if p.len() as i64 != e + 1 {
                d.violations.push(format!(
                    "entry ({i},{j}) has {} coefficients, expected {} (degree {e})",
                    p.len(),
                    e + 1
                ));
            }
        }
    }
    d
}

/// `P_E(k) = Σ_i (d_i + k + 1)`, valid when every `d_i + k >= 0` so the
/// Hilbert value equals `h^0(E(k))`.
pub fn hilbert_value(e: &SplitBundle, k: i64) -> Result<i64> {
    if let Some(dmin) = e.degrees().iter().min() {
        if dmin + k < 0 {
            return Err(Error::InadmissibleLevel {
                k,
                reason: format!("d_min + k = {} < 0", dmin + k),
            });
        }
    }
    Ok(e.degrees().iter().map(|d| d + k + 1).sum())
}

/// True iff the coordinate subsheaf `⊕_{i ∈ S} O(d_i)` is `phi`-invariant:
/// `phi_{ij} ≡ 0` for all `i ∉ S`, `j ∈ S`.
pub fn is_invariant_summand_set(inst: &HiggsInstance, s: &[usize]) -> Result<bool> {
    let r = inst.rank();
    if s.is_empty() || s.len() >= r {
        return Err(Error::InvalidSubset(format!(
            "need a nonempty proper subset of 0..{r}, got {s:?}"
        )));
    }
    let mut seen = vec![false; r];
    for &i in s {
        if i >= r || seen[i] {
            return Err(Error::InvalidSubset(format!("bad index {i} in {s:?}")));
        }
        seen[i] = true;
    }
    for i in 0..r {
        if seen[i] {
            continue;
        }
        for &j in s {
            if !poly_is_zero(&inst.phi.entries[i][j]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// What a destabilizing-witness search found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WitnessKind {
    /// Coordinate subsheaf given by summand indices.
    SummandSet(Vec<usize>),
    /// Eigen-subspace decomposition of a constant Higgs matrix (m = 0);
    /// the eigen-subsheaves all have the reported margin.
    EigenSplitting { eigenvalue_re: Vec<f64>, eigenvalue_im: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityHint {
    Unstable,
    StrictlySemistable,
    PolystableSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kind: WitnessKind,
    /// `P_F(k)/rk_F - P_E(k)/rk_E` at the query level.
    #[serde(with = "crate::model::ratio_serde")]
    pub margin: Rational64,
    pub hint: StabilityHint,
    /// The eigen-subsheaf route is a heuristic, not a complete search.
    pub heuristic: bool,
}

/// Search `phi`-invariant summand subsets (and, for `m = 0` with constant
/// `phi`, eigen-subspace subsheaves) for a witness against stability: the
/// subsheaf maximizing the reduced-Hilbert margin when that maximum is
/// nonnegative.  The search is sound but explicitly incomplete.
pub fn destabilizing_witness(inst: &HiggsInstance, k: i64) -> Result<Option<Witness>> {
    let r = inst.rank();
    let chi_e = Rational64::new(hilbert_value(&inst.bundle, k)?, r as i64);
    let mut best: Option<(Vec<usize>, Rational64)> = None;
    // All nonempty proper subsets; r is small at desk scale.
    for mask in 1u32..(1u32 << r) - 1 {
        let s: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
        if !is_invariant_summand_set(inst, &s)? {
            continue;
        }
        let degs: Vec<i64> = s.iter().map(|&i| inst.bundle.degrees()[i]).collect();
        let f = SplitBundle::new(degs)?;
        let margin = Rational64::new(hilbert_value(&f, k)?, s.len() as i64) - chi_e;
        if best.as_ref().map_or(true, |(_, m)| margin > *m) {
            best = Some((s, margin));
        }
    }
    if let Some((s, margin)) = best {
        if margin >= Rational64::new(0, 1) {
            let hint = if margin > Rational64::new(0, 1) {
                StabilityHint::Unstable
            } else {
                // Zero margin: an invariant complement reads as a
                // polystable-compatible split.
                let complement: Vec<usize> = (0..r).filter(|i| !s.contains(i)).collect();
                if !complement.is_empty()
                    && complement.len() < r
                    && is_invariant_summand_set(inst, &complement)?
                {
                    StabilityHint::PolystableSplit
                } else {
                    StabilityHint::StrictlySemistable
                }
            };
            return Ok(Some(Witness {
                kind: WitnessKind::SummandSet(s),
                margin,
                hint,
                heuristic: false,
            }));
        }
    }
    if inst.twist.degree == 0 && !inst.phi.is_zero() && higgs_is_constant(&inst.phi) {
        if let Some(w) = eigen_witness(inst)? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

fn higgs_is_constant(phi: &HiggsField) -> bool {
    phi.entries.iter().all(|row| row.iter().all(|p| p.len() <= 1))
}

/// Eigen-subspace subsheaves of a constant Higgs matrix.  Clean only when
/// all summand degrees are equal (then a constant subspace `V` generates
/// `V ⊗ O(d)` with margin zero); flagged heuristic.
fn eigen_witness(inst: &HiggsInstance) -> Result<Option<Witness>> {
    let degs = inst.bundle.degrees();
    if degs.iter().any(|d| *d != degs[0]) {
        return Ok(None);
    }
    let r = inst.rank();
    let mat = inst.phi.eval(C64::new(0.0, 0.0));
    let eigs = complex_eigenvalues(&mat);
    let mut distinct: Vec<C64> = Vec::new();
    'outer: for e in &eigs {
        for d in &distinct {
            if (e - d).norm() < 1e-8 * (1.0 + e.norm()) {
                continue 'outer;
            }
        }
        distinct.push(*e);
    }
    if distinct.len() < 2 {
        return Ok(None);
    }
    // The constant matrix splits iff its eigenspaces span.
    let mut total_dim = 0usize;
    for lam in &distinct {
        let shifted = &mat - crate::CMatrix::identity(r, r) * *lam;
        let svd = shifted.svd(false, false);
        let null_dim = svd.singular_values.iter().filter(|s| **s < 1e-9).count();
        total_dim += null_dim.max(1);
    }
    let splits = total_dim >= r;
    Ok(Some(Witness {
        kind: WitnessKind::EigenSplitting {
            eigenvalue_re: distinct.iter().map(|e| e.re).collect(),
            eigenvalue_im: distinct.iter().map(|e| e.im).collect(),
        },
        margin: Rational64::new(0, 1),
        hint: if splits {
            StabilityHint::PolystableSplit
        } else {
            StabilityHint::StrictlySemistable
        },
        heuristic: true,
    }))
}

/// Eigenvalues of a small complex matrix by Durand-Kerner on the
/// characteristic polynomial (coefficients via Faddeev-LeVerrier).
pub(crate) fn complex_eigenvalues(m: &crate::CMatrix) -> Vec<C64> {
    let n = m.nrows();
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    let mut am = m.clone();
    for i in 1..=n {
        let tr: C64 = am.diagonal().sum();
        let c = -tr / C64::new(i as f64, 0.0);
        coeffs.push(c);
        if i < n {
            am = m * (&am + crate::CMatrix::identity(n, n) * c);
        }
    }
    durand_kerner(&coeffs)
}

/// Roots of a monic polynomial with coefficients `[1, c_1, ..., c_n]` in
/// descending powers.
pub(crate) fn durand_kerner(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let eval = |z: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in coeffs {
            acc = acc * z + c;
        }
        acc
    };
    let radius = 1.0 + coeffs[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let seed = C64::new(0.4, 0.9);
    let mut roots: Vec<C64> = (0..n).map(|i| seed.powi(i as i32 + 1) * radius).collect();
    for _ in 0..200 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-13 {
            break;
        }
    }
    roots
}

// --- JSON schema ----------------------------------------------------------
//
// {"twist_degree": m, "bundle_degrees": [d_1..d_r],
//  "phi": [[[coeffs...], ...], ...], "label": "..."}
// A coefficient is a number or a [re, im] pair; a zero entry is [].

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceJson {
    pub twist_degree: i64,
    pub bundle_degrees: Vec<i64>,
    pub phi: Vec<Vec<Vec<CoeffJson>>>,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffJson(pub C64);

impl Serialize for CoeffJson {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.im == 0.0 {
            s.serialize_f64(self.0.re)
        } else {
            [self.0.re, self.0.im].serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for CoeffJson {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Real(f64),
            Pair([f64; 2]),
        }
        match Raw::deserialize(d)? {
            Raw::Real(x) => Ok(CoeffJson(C64::new(x, 0.0))),
            Raw::Pair([re, im]) => Ok(CoeffJson(C64::new(re, im))),
        }
    }
}

impl TryFrom<InstanceJson> for HiggsInstance {
    type Error = Error;

    fn try_from(j: InstanceJson) -> Result<Self> {
        let entries: Vec<Vec<Poly>> = j
            .phi
            .iter()
            .map(|row| row.iter().map(|p| p.iter().map(|c| c.0).collect()).collect())
            .collect();
        HiggsInstance::new(j.twist_degree, j.bundle_degrees, HiggsField { entries }, &j.label)
    }
}

impl From<&HiggsInstance> for InstanceJson {
    fn from(inst: &HiggsInstance) -> Self {
        InstanceJson {
            twist_degree: inst.twist.degree,
            bundle_degrees: inst.bundle.degrees().to_vec(),
            phi: inst
                .phi
                .entries
                .iter()
                .map(|row| {
                    row.iter().map(|p| p.iter().map(|c| CoeffJson(*c)).collect()).collect()
                })
                .collect(),
            label: inst.label.clone(),
        }
    }
}

pub fn parse_instance(json: &str) -> Result<HiggsInstance> {
    let j: InstanceJson =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("instance JSON: {e}")))?;
    j.try_into()
}

pub(crate) mod ratio_serde {
    use num_rational::Rational64;
    use serde::ser::SerializeStruct;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Rational", 2)?;
        st.serialize_field("num", r.numer())?;
        st.serialize_field("den", r.denom())?;
        st.end()
    }

    #[allow(dead_code)]
    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Rational64, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            num: i64,
            den: i64,
        }
        let raw = Raw::deserialize(d)?;
        Ok(Rational64::new(raw.num, raw.den))
    }
}

/// Fixtures shared by tests and the acceptance suite.
pub mod fixtures {
    use super::*;

    /// `E = O^2`, `m = 0`, `phi = [[0,2],[1,0]]` (polystable, non-normal).
    pub fn polystable() -> HiggsInstance {
        HiggsInstance::new(
            0,
            vec![0, 0],
            HiggsField::constant(&[&[0.0, 2.0], &[1.0, 0.0]]),
            "polystable",
        )
        .unwrap()
    }

    /// `E = O^2`, `m = 0`, `phi = [[0,1],[0,0]]` (semistable, not polystable).
    pub fn semistable() -> HiggsInstance {
        HiggsInstance::new(
            0,
            vec![0, 0],
            HiggsField::constant(&[&[0.0, 1.0], &[0.0, 0.0]]),
            "semistable",
        )
        .unwrap()
    }

    /// `E = O(1) ⊕ O(-1)`, `m = 0`, `phi = [[0, 1+z^2],[0,0]]`: the
    /// degree-two entry makes the fiberwise adjoint genuinely
    /// non-holomorphic under reference metrics.
    pub fn poly_entry() -> HiggsInstance {
        let mut phi = HiggsField::zero(2);
        phi.entries[0][1] =
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        HiggsInstance::new(0, vec![1, -1], phi, "poly-entry").unwrap()
    }

    /// `E = O(1) ⊕ O(-1)`, `m = 2`, `phi = [[0,1],[0,0]]` (unstable).
    pub fn unstable() -> HiggsInstance {
        HiggsInstance::new(
            2,
            vec![1, -1],
            HiggsField::constant(&[&[0.0, 1.0], &[0.0, 0.0]]),
            "unstable",
        )
        .unwrap()
    }

    /// Rank one `E = O(d)` with zero Higgs field.
    pub fn line(d: i64) -> HiggsInstance {
        HiggsInstance::new(0, vec![d], HiggsField::zero(1), "line").unwrap()
    }

    /// `E = O(a) ⊕ O(a)` with zero Higgs field.
    pub fn balanced_pair(a: i64) -> HiggsInstance {
        HiggsInstance::new(0, vec![a, a], HiggsField::zero(2), "pair").unwrap()
    }

    /// `E = O(2) ⊕ O`, zero Higgs field (unstable as a plain bundle).
    pub fn split_two_zero() -> HiggsInstance {
        HiggsInstance::new(0, vec![2, 0], HiggsField::zero(2), "o2-o0").unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_unstable_fixture() {
        let inst = fixtures::unstable();
        // only e_12 = 0 is admissible
        assert_eq!(inst.entry_degree(0, 1), 0);
        assert_eq!(inst.entry_degree(0, 0), -2);
        assert_eq!(inst.entry_degree(1, 1), -2);
        assert_eq!(inst.entry_degree(1, 0), -4);
        let d = validate(&inst);
        assert!(d.is_valid() && !d.zero_higgs);
    }

    #[test]
    fn validate_rejects_misplaced_entry() {
        let inst = HiggsInstance {
            twist: TwistBundle { degree: 2 },
            bundle: SplitBundle::new(vec![1, -1]).unwrap(),
            phi: HiggsField::constant(&[&[0.0, 1.0], &[1.0, 0.0]]),
            label: String::new(),
        };
        let d = validate(&inst);
        assert!(!d.is_valid());
        assert!(d.violations.iter().any(|v| v.contains("(1,0)")));
    }

    #[test]
    fn validate_zero_higgs_flag() {
        let inst = fixtures::balanced_pair(0);
        let d = validate(&inst);
        assert!(d.is_valid() && d.zero_higgs);
    }

    #[test]
    fn validate_wrong_coefficient_count() {
        // entry (0,1) of the unstable fixture has degree 0, so two
        // coefficients is a violation
        let mut phi = HiggsField::zero(2);
        phi.entries[0][1] = vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
        let inst = HiggsInstance {
            twist: TwistBundle { degree: 2 },
            bundle: SplitBundle::new(vec![1, -1]).unwrap(),
            phi,
            label: String::new(),
        };
        assert!(!validate(&inst).is_valid());
    }

    #[test]
    fn hilbert_values() {
        let e = SplitBundle::new(vec![0, 0]).unwrap();
        assert_eq!(hilbert_value(&e, 3).unwrap(), 8);
        let e2 = SplitBundle::new(vec![2, 0]).unwrap();
        assert_eq!(hilbert_value(&e2, 3).unwrap(), 10);
        let o = SplitBundle::new(vec![0]).unwrap();
        assert_eq!(hilbert_value(&o, 0).unwrap(), 1);
        assert!(hilbert_value(&SplitBundle::new(vec![-2]).unwrap(), 1).is_err());
    }

    #[test]
    fn invariant_subsets() {
        let zero = fixtures::balanced_pair(1);
        assert!(is_invariant_summand_set(&zero, &[0]).unwrap());
        assert!(is_invariant_summand_set(&zero, &[1]).unwrap());

        let inst = fixtures::unstable();
        assert!(is_invariant_summand_set(&inst, &[0]).unwrap());
        assert!(!is_invariant_summand_set(&inst, &[1]).unwrap());

        assert!(is_invariant_summand_set(&inst, &[]).is_err());
        assert!(is_invariant_summand_set(&inst, &[0, 1]).is_err());
        assert!(is_invariant_summand_set(&inst, &[5]).is_err());
    }

    #[test]
    fn witness_unstable_fixture() {
        let inst = fixtures::unstable();
        let w = destabilizing_witness(&inst, 3).unwrap().expect("witness");
        assert_eq!(w.kind, WitnessKind::SummandSet(vec![0]));
        // h0(O(1)(3)) = 5 vs 8/2 = 4
        assert_eq!(w.margin, Rational64::new(1, 1));
        assert_eq!(w.hint, StabilityHint::Unstable);
    }

    #[test]
    fn witness_semistable_fixture() {
        let inst = fixtures::semistable();
        let w = destabilizing_witness(&inst, 4).unwrap().expect("witness");
        assert_eq!(w.kind, WitnessKind::SummandSet(vec![0]));
        assert_eq!(w.margin, Rational64::new(0, 1));
        assert_eq!(w.hint, StabilityHint::StrictlySemistable);
    }

    #[test]
    fn witness_polystable_fixture_via_eigenspaces() {
        let inst = fixtures::polystable();
        let w = destabilizing_witness(&inst, 4).unwrap().expect("witness");
        assert!(w.heuristic);
        assert_eq!(w.hint, StabilityHint::PolystableSplit);
        match &w.kind {
            WitnessKind::EigenSplitting { eigenvalue_re, .. } => {
                let mut re = eigenvalue_re.clone();
                re.sort_by(f64::total_cmp);
                assert!((re[0] + 2f64.sqrt()).abs() < 1e-9 && (re[1] - 2f64.sqrt()).abs() < 1e-9);
            }
            other => panic!("expected eigen splitting, got {other:?}"),
        }
    }

    #[test]
    fn witness_margin_sign_is_k_independent() {
        let inst = fixtures::unstable();
        for k in [2, 5, 9] {
            let w = destabilizing_witness(&inst, k).unwrap().expect("witness");
            assert!(w.margin > Rational64::new(0, 1), "k={k}");
        }
    }

    #[test]
    fn witness_none_for_stable_line() {
        let inst = fixtures::line(2);
        assert!(destabilizing_witness(&inst, 3).unwrap().is_none());
    }

    #[test]
    fn instance_json_roundtrip() {
        let json = r#"{
            "twist_degree": 2,
            "bundle_degrees": [1, -1],
            "phi": [[[], [1.0]], [[], []]],
            "label": "unstable"
        }"#;
        let inst = parse_instance(json).unwrap();
        assert_eq!(inst, fixtures::unstable());
        let back = serde_json::to_string(&InstanceJson::from(&inst)).unwrap();
        let again = parse_instance(&back).unwrap();
        assert_eq!(again, inst);
    }

    #[test]
    fn instance_json_complex_coefficient() {
        let json = r#"{
            "twist_degree": 0,
            "bundle_degrees": [1, -1],
            "phi": [[[], [0.0, [1.0, -2.0], 3.0]], [[], []]],
            "label": "cx"
        }"#;
        let inst = parse_instance(json).unwrap();
        assert_eq!(inst.phi.entries[0][1][1], C64::new(1.0, -2.0));
    }

    #[test]
    fn instance_json_rejects_bad_placement() {
        let json = r#"{
            "twist_degree": 2,
            "bundle_degrees": [1, -1],
            "phi": [[[], []], [[1.0], []]],
            "label": "bad"
        }"#;
        assert!(parse_instance(json).is_err());
    }

    #[test]
    fn eigenvalues_of_constant_matrix() {
        let m = fixtures::polystable().phi.eval(C64::new(0.0, 0.0));
        let mut eigs = complex_eigenvalues(&m);
        eigs.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((eigs[0].re + 2f64.sqrt()).abs() < 1e-10);
        assert!((eigs[1].re - 2f64.sqrt()).abs() < 1e-10);
    }
}
