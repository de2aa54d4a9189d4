//! Dense hermitian linear algebra over section spaces.
//!
//! Gram convention, used everywhere in the crate: `G_{jl} = (e_l, e_j)`, so
//! for coefficient columns `(u, v) = v† G u` and matrices act on coefficient
//! columns.  The adjoint of `A` between spaces with forms `G_dom`, `G_cod`
//! is `A* = G_dom^{-1} A† G_cod`.

use crate::util::{frobenius, hermitize, identity};
use crate::{C64, CMatrix, Error, Result};
use nalgebra::DVector;

/// Condition-number guard: Gram degeneration beyond this signals a
/// degenerate form instead of silently continuing.
pub const DEGENERACY_THRESHOLD: f64 = 1e10;

/// Positive-definite hermitian Gram matrix with its cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct HermitianForm {
    dim: usize,
    gram: CMatrix,
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
}

impl HermitianForm {
    /// Validates hermiticity (to 1e-12 relative), positivity, and the
    /// degeneracy guard, then caches the eigendecomposition.
    pub fn new(gram: CMatrix) -> Result<Self> {
        if gram.nrows() != gram.ncols() {
            return Err(Error::ShapeMismatch("gram matrix must be square".into()));
        }
        let dim = gram.nrows();
        let scale = frobenius(&gram).max(1e-300);
        let asym = frobenius(&(&gram - gram.adjoint()));
        if asym / scale > 1e-12 {
            return Err(Error::DegenerateForm(format!(
                "gram is not hermitian: relative asymmetry {:.3e}",
                asym / scale
            )));
        }
        let g = hermitize(&gram);
        let se = g.clone().symmetric_eigen();
        let min = se.eigenvalues.min();
        let max = se.eigenvalues.max();
        if !(min > 0.0) {
            return Err(Error::DegenerateForm(format!(
                "smallest eigenvalue {min:.3e} is not positive"
            )));
        }
        if max / min > DEGENERACY_THRESHOLD {
            return Err(Error::DegenerateForm(format!(
                "condition number {:.3e} exceeds {:.1e}",
                max / min,
                DEGENERACY_THRESHOLD
            )));
        }
        Ok(Self { dim, gram: g, eigenvalues: se.eigenvalues, eigenvectors: se.eigenvectors })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            gram: identity(dim),
            eigenvalues: DVector::from_element(dim, 1.0),
            eigenvectors: identity(dim),
        }
    }

    pub fn from_real_diagonal(entries: &[f64]) -> Result<Self> {
        let dim = entries.len();
        let gram = CMatrix::from_fn(dim, dim, |i, j| {
            if i == j { C64::new(entries[i], 0.0) } else { C64::new(0.0, 0.0) }
        });
        Self::new(gram)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.max()
    }

    pub fn condition_number(&self) -> f64 {
        self.max_eigenvalue() / self.min_eigenvalue()
    }

    fn functional(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let d = CMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j { C64::new(f(self.eigenvalues[i]), 0.0) } else { C64::new(0.0, 0.0) }
        });
        &self.eigenvectors * d * self.eigenvectors.adjoint()
    }

    pub fn sqrt(&self) -> CMatrix {
        self.functional(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> CMatrix {
        self.functional(|x| 1.0 / x.sqrt())
    }

    pub fn inverse(&self) -> CMatrix {
        self.functional(|x| 1.0 / x)
    }

    /// Inner product of coefficient columns: `(u, v) = v† G u`.
    pub fn inner(&self, u: &DVector<C64>, v: &DVector<C64>) -> C64 {
        (v.adjoint() * &self.gram * u)[(0, 0)]
    }
}

/// Matrix square root pair `(G^{1/2}, G^{-1/2})`, both hermitian positive.
pub fn herm_sqrt(form: &HermitianForm) -> (CMatrix, CMatrix) {
    (form.sqrt(), form.inv_sqrt())
}

fn check_shapes(a: &CMatrix, dom: &HermitianForm, cod: &HermitianForm) -> Result<()> {
    if a.ncols() != dom.dim() || a.nrows() != cod.dim() {
        return Err(Error::ShapeMismatch(format!(
            "map is {}x{}, forms are dom {} cod {}",
            a.nrows(),
            a.ncols(),
            dom.dim(),
            cod.dim()
        )));
    }
    Ok(())
}

/// Adjoint with `(A v, w)_cod = (v, A* w)_dom`: `A* = G_dom^{-1} A† G_cod`.
pub fn adjoint_wrt(a: &CMatrix, dom: &HermitianForm, cod: &HermitianForm) -> Result<CMatrix> {
    check_shapes(a, dom, cod)?;
    Ok(dom.inverse() * a.adjoint() * cod.gram())
}

/// Frobenius norm `sqrt(tr(A* A))` with the form adjoint.
pub fn frobenius_norm_wrt(a: &CMatrix, dom: &HermitianForm, cod: &HermitianForm) -> Result<f64> {
    let adj = adjoint_wrt(a, dom, cod)?;
    let tr: C64 = (adj * a).diagonal().sum();
    Ok(tr.re.max(0.0).sqrt())
}

/// Operator norm: largest singular value of `G_cod^{1/2} A G_dom^{-1/2}`.
pub fn operator_norm_wrt(a: &CMatrix, dom: &HermitianForm, cod: &HermitianForm) -> Result<f64> {
    check_shapes(a, dom, cod)?;
    let white = cod.sqrt() * a * dom.inv_sqrt();
    let svd = white.svd(false, false);
    Ok(svd.singular_values.max())
}

/// Row or column blocks of a map to/from `H ⊗ U` with `dim H = h_dim`.
/// Block `c` of an `N x hN` matrix is columns `cN..(c+1)N`; of an `hN x N`
/// matrix, rows `cN..(c+1)N`.
pub fn column_block(a: &CMatrix, c: usize, n: usize) -> CMatrix {
    a.columns(c * n, n).into_owned()
}

pub fn row_block(b: &CMatrix, c: usize, n: usize) -> CMatrix {
    b.rows(c * n, n).into_owned()
}

/// Commutator `[α, β] ∈ End(U)` for `α: H⊗U → U` (column blocks) and
/// `β: U → H⊗U` (row blocks): `αβ - Σ_c β_c α_c`.  The `H*`-against-`H`
/// pairing is metric-free, so the formula is valid in any basis of `H` as
/// long as both factors use the same one.  For `dim H = 1` this is the plain
/// matrix commutator.
pub fn commutator(a: &CMatrix, b: &CMatrix, h_dim: usize) -> Result<CMatrix> {
    let n = a.nrows();
    if a.ncols() != h_dim * n || b.nrows() != h_dim * n || b.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "commutator blocks: a is {}x{}, b is {}x{}, h_dim {}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            h_dim
        )));
    }
    let mut swapped = CMatrix::zeros(n, n);
    for c in 0..h_dim {
        swapped += row_block(b, c, n) * column_block(a, c, n);
    }
    Ok(a * b - swapped)
}

/// `Y ↦ [Y, β]` for `Y ∈ End(U)` acting on `H⊗U` as `id ⊗ Y`:
/// row blocks `Y β_c - β_c Y`.
pub fn end_commutes_map(y: &CMatrix, b: &CMatrix, h_dim: usize) -> CMatrix {
    let n = y.nrows();
    let mut out = CMatrix::zeros(h_dim * n, n);
    for c in 0..h_dim {
        let bc = row_block(b, c, n);
        out.rows_mut(c * n, n).copy_from(&(y * &bc - bc * y));
    }
    out
}

/// Sandwich `X β Y` for `X, Y ∈ End(U)` and `β: U → H⊗U`.
pub fn sandwich_map(x: &CMatrix, b: &CMatrix, y: &CMatrix, h_dim: usize) -> CMatrix {
    let n = x.nrows();
    let mut out = CMatrix::zeros(h_dim * n, n);
    for c in 0..h_dim {
        out.rows_mut(c * n, n).copy_from(&(x * row_block(b, c, n) * y));
    }
    out
}

/// Kronecker product, small sizes only (tests and tensor forms).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let scaled = b * a[(i, j)];
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&scaled);
        }
    }
    out
}

/// Apply `(M^{-1} ⊗ G^{-1})` to an `hN x N` stacked map: row block `c` of the
/// result is `Σ_{c'} (M^{-1})_{c c'} G^{-1} X_{c'}`.
pub fn kron_inv_apply(
    m_form: &HermitianForm,
    g_form: &HermitianForm,
    x: &CMatrix,
) -> Result<CMatrix> {
    let h = m_form.dim();
    let n = g_form.dim();
    if x.nrows() != h * n {
        return Err(Error::ShapeMismatch("kron_inv_apply: row count mismatch".into()));
    }
    let m_inv = m_form.inverse();
    let g_inv = g_form.inverse();
    let mut out = CMatrix::zeros(h * n, x.ncols());
    for c in 0..h {
        let mut acc = CMatrix::zeros(n, x.ncols());
        for cp in 0..h {
            acc += &g_inv * x.rows(cp * n, n) * m_inv[(c, cp)];
        }
        out.rows_mut(c * n, n).copy_from(&acc);
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub fn rng(seed: u64) -> StdRng {
        StdRng::seed_from_u64(seed)
    }

    pub fn random_matrix(r: &mut StdRng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
    }

    pub fn random_spd(r: &mut StdRng, n: usize) -> HermitianForm {
        let a = random_matrix(r, n, n);
        let g = &a * a.adjoint() + identity(n) * C64::new(0.5, 0.0);
        HermitianForm::new(g).unwrap()
    }

    pub fn random_unitary(r: &mut StdRng, n: usize) -> CMatrix {
        let a = random_matrix(r, n, n);
        let qr = a.qr();
        qr.q()
    }
}
