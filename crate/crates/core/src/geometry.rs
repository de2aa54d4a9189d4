//! Geometry of the projective line: charts, the normalized Fubini-Study
//! Kähler form, quadrature, and numeric curvature operators.
//!
//! The volume is normalized to one, `ω = (i/2π) ∂∂̄ log(1+|z|^2)`.  In polar
//! form with `t = (|z|^2-1)/(|z|^2+1) ∈ [-1,1]` and azimuth `θ`,
//! `∫ f ω = (1/4π) ∫_0^{2π} ∫_{-1}^1 f dt dθ`, so a tensor product of
//! Gauss-Legendre nodes in `t` with uniform azimuthal nodes integrates the
//! monomial Gram densities `z^p z̄^q (1+|z|^2)^{-k}` exactly.

use crate::util::{chunked_matrix_sum, hermitize};
use crate::{C64, CMatrix, Error, Result};

/// A point of `P^1` in one of the two standard charts.  Chart 1 covers the
/// infinity of chart 0 through `w = 1/z`.  Canonical representatives have
/// `|z| <= 1`; the circle `|z| = 1` is canonical in chart 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub chart: u8,
    pub z: C64,
}

impl ChartPoint {
    pub fn new(chart: u8, z: C64) -> Self {
        assert!(chart < 2, "chart index must be 0 or 1");
        Self { chart, z }
    }

    /// Point from the affine coordinate of chart 0, canonicalized.
    pub fn from_affine(z: C64) -> Self {
        Self::new(0, z).canonical()
    }

    pub fn is_canonical(&self) -> bool {
        let r = self.z.norm();
        if self.chart == 0 {
            r <= 1.0
        } else {
            r < 1.0
        }
    }

    /// The canonical representative of the same point.
    pub fn canonical(&self) -> Self {
        if self.is_canonical() {
            *self
        } else {
            Self::new(1 - self.chart, C64::new(1.0, 0.0) / self.z)
        }
    }

    /// Coordinate of the point in the requested chart, when finite there.
    pub fn in_chart(&self, chart: u8) -> Option<C64> {
        if chart == self.chart {
            Some(self.z)
        } else if self.z.norm() > 0.0 {
            Some(C64::new(1.0, 0.0) / self.z)
        } else {
            None
        }
    }

    pub fn abs_sq(&self) -> f64 {
        self.z.norm_sqr()
    }
}

/// Quadrature nodes and weights for `∫ · ω` with `Σ weights = 1`.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    pub nodes: Vec<ChartPoint>,
    pub weights: Vec<f64>,
    pub orders: (usize, usize),
}

impl QuadratureScheme {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same construction with both orders doubled; used by refinement checks.
    pub fn doubled(&self) -> QuadratureScheme {
        build_quadrature(self.orders.0 * 2, self.orders.1 * 2).expect("doubling valid orders")
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre polynomial with the usual cosine initial guesses.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Build the tensor Gauss-Legendre x uniform-azimuth scheme.  Exact for all
/// integrands `z^p z̄^q (1+|z|^2)^{-k-2}` with `p, q <= k` once
/// `n_polar > k` and `n_azimuthal > 2k`.
pub fn build_quadrature(n_polar: usize, n_azimuthal: usize) -> Result<QuadratureScheme> {
    if n_polar < 2 || n_azimuthal < 4 {
        return Err(Error::Quadrature(format!(
            "orders below minimum: n_polar={n_polar} (>=2), n_azimuthal={n_azimuthal} (>=4)"
        )));
    }
    let (t, wt) = gauss_legendre(n_polar);
    let mut nodes = Vec::with_capacity(n_polar * n_azimuthal);
    let mut weights = Vec::with_capacity(n_polar * n_azimuthal);
    let wa = 1.0 / n_azimuthal as f64;
    for (ti, wi) in t.iter().zip(wt.iter()) {
        // |z|^2 = (1+t)/(1-t)
        let rho_sq = (1.0 + ti) / (1.0 - ti);
        let rho = rho_sq.sqrt();
        for j in 0..n_azimuthal {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n_azimuthal as f64;
            let z = C64::from_polar(rho, theta);
            nodes.push(ChartPoint::new(0, z).canonical());
            weights.push(0.5 * wi * wa);
        }
    }
    Ok(QuadratureScheme { nodes, weights, orders: (n_polar, n_azimuthal) })
}

/// Matrix-valued function sampled on the nodes of a scheme.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub values: Vec<CMatrix>,
    pub rows: usize,
    pub cols: usize,
}

impl SampledField {
    pub fn from_fn<F>(scheme: &QuadratureScheme, rows: usize, cols: usize, f: F) -> Result<Self>
    where
        F: Fn(&ChartPoint) -> CMatrix + Sync,
    {
        let values: Vec<CMatrix> = scheme.nodes.iter().map(|p| f(p)).collect();
        for v in &values {
            if v.nrows() != rows || v.ncols() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "field value {}x{} does not match declared shape {}x{}",
                    v.nrows(),
                    v.ncols(),
                    rows,
                    cols
                )));
            }
        }
        Ok(Self { values, rows, cols })
    }

    pub fn constant(scheme: &QuadratureScheme, value: CMatrix) -> Self {
        let (rows, cols) = (value.nrows(), value.ncols());
        Self { values: vec![value; scheme.len()], rows, cols }
    }

    pub fn scalar_from_fn<F>(scheme: &QuadratureScheme, f: F) -> Self
    where
        F: Fn(&ChartPoint) -> C64,
    {
        let values = scheme
            .nodes
            .iter()
            .map(|p| CMatrix::from_element(1, 1, f(p)))
            .collect();
        Self { values, rows: 1, cols: 1 }
    }

    pub fn sup_frobenius(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Weighted sum of a sampled field against the scheme, with the fixed
/// deterministic pairwise reduction.
pub fn integrate(f: &SampledField, q: &QuadratureScheme) -> Result<CMatrix> {
    if f.values.len() != q.len() {
        return Err(Error::SchemeMismatch(format!(
            "field has {} values, scheme has {} nodes",
            f.values.len(),
            q.len()
        )));
    }
    Ok(chunked_matrix_sum(q.len(), f.rows, f.cols, |i| {
        &f.values[i] * C64::new(q.weights[i], 0.0)
    }))
}

pub fn integrate_scalar(f: &SampledField, q: &QuadratureScheme) -> Result<C64> {
    let m = integrate(f, q)?;
    if m.nrows() != 1 || m.ncols() != 1 {
        return Err(Error::ShapeMismatch("integrate_scalar on a matrix field".into()));
    }
    Ok(m[(0, 0)])
}

/// Fiber weight `(1+|z|^2)^{-k}` of the Fubini-Study metric on `O(k)` in the
/// canonical chart frame of the point.
pub fn fs_line_weight(p: &ChartPoint, k: i64) -> f64 {
    let q = p.canonical();
    (1.0 + q.abs_sq()).powi(-(k as i32))
}

fn cmatrix_is_pd(m: &CMatrix) -> bool {
    let se = m.clone().symmetric_eigen();
    se.eigenvalues.iter().all(|x| *x > 0.0 && x.is_finite())
}

/// Degree-normalized contraction `iΛF_h` at `p` by central finite
/// differences of `∂̄(h^{-1} ∂h)`:
/// `iΛF = -(1+|z|^2)^2 ∂_z̄ (h^{-1} ∂_z h)`, so that the Fubini-Study metric
/// on `O(d)` returns the constant `d`.
///
/// `h` must evaluate the metric matrix in the chart of `p` near `p`.  With
/// `richardson` the step is halved once and the `O(step^2)` error removed.
pub fn numeric_curvature<F>(h: &F, p: &ChartPoint, step: f64, richardson: bool) -> Result<CMatrix>
where
    F: Fn(C64) -> CMatrix,
{
    if !(step.is_finite()) || step < 1e-9 {
        return Err(Error::FiniteDifference(format!("step underflow: {step}")));
    }
    let base = curvature_once(h, p.z, step)?;
    let out = if richardson {
        let half = curvature_once(h, p.z, step / 2.0)?;
        (half * C64::new(4.0, 0.0) - base) / C64::new(3.0, 0.0)
    } else {
        base
    };
    // The exact contraction is hermitian with respect to h(p); symmetrize in
    // the h-inner product.
    let hp = h(p.z);
    let hinv = hp
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::FiniteDifference("metric not invertible at base point".into()))?;
    Ok((&out + hinv * out.adjoint() * &hp) * C64::new(0.5, 0.0))
}

fn curvature_once<F>(h: &F, z: C64, s: f64) -> Result<CMatrix>
where
    F: Fn(C64) -> CMatrix,
{
    let ex = C64::new(s, 0.0);
    let ey = C64::new(0.0, s);
    // a(ζ) = h^{-1} ∂_z h at ζ
    let a = |zz: C64| -> Result<CMatrix> {
        let hc = h(zz);
        if !cmatrix_is_pd(&hermitize(&hc)) {
            return Err(Error::FiniteDifference(format!(
                "loss of positivity on stencil at {zz}"
            )));
        }
        let hinv = hc
            .try_inverse()
            .ok_or_else(|| Error::FiniteDifference("singular metric on stencil".into()))?;
        let dx = (h(zz + ex) - h(zz - ex)) / C64::new(2.0 * s, 0.0);
        let dy = (h(zz + ey) - h(zz - ey)) / C64::new(2.0 * s, 0.0);
        // ∂_z = (∂_x - i ∂_y)/2
        let dz = (dx - dy * C64::new(0.0, 1.0)) * C64::new(0.5, 0.0);
        Ok(hinv * dz)
    };
    let ax_p = a(z + ex)?;
    let ax_m = a(z - ex)?;
    let ay_p = a(z + ey)?;
    let ay_m = a(z - ey)?;
    let dax = (ax_p - ax_m) / C64::new(2.0 * s, 0.0);
    let day = (ay_p - ay_m) / C64::new(2.0 * s, 0.0);
    // ∂_z̄ = (∂_x + i ∂_y)/2
    let dzbar = (dax + day * C64::new(0.0, 1.0)) * C64::new(0.5, 0.0);
    let factor = -(1.0 + z.norm_sqr()).powi(2);
    Ok(dzbar * C64::new(factor, 0.0))
}
