//! Catalog of nonsmooth oracles: separable shrinkage operators and set
//! projections, each with a documented deterministic tie-break.
//!
//! Set-valued proximal maps (nonconvex `g`) return one fixed selection so
//! that runs are reproducible; the tie-break for every operator is stated on
//! its function. Matrix-valued variables are packed into vectors column by
//! column (see [`mat_from_col_major`]), which keeps per-column blocks
//! contiguous for the block-separable oracles.

use std::cell::Cell;

use ndarray::ShapeBuilder;
use ndarray_linalg::{Lapack, Scalar, SVD};

use crate::problem::{ExtReal, NonsmoothOracle};
use crate::{real, Error, Matrix, Real, Result, Vector};

/// Soft-thresholding: `prox_{gamma lambda ||.||_1}`, componentwise
/// `sign(x) max(|x| - gamma lambda, 0)`.
pub fn prox_l1<T: Real>(x: &Vector<T>, lambda: T, gamma: T) -> Vector<T> {
    let t = lambda * gamma;
    x.mapv(|v| {
        let m = v.abs() - t;
        if m > T::zero() {
            m * v.signum()
        } else {
            T::zero()
        }
    })
}

/// Prox of `lambda sum_i |x_i|^{1/2}`, componentwise.
///
/// For `u != 0` the positive stationary points of
/// `h(z) = lambda |z|^{1/2} + (z - u)^2 / (2 gamma)` satisfy the depressed
/// cubic `w^3 - |u| w + gamma lambda / 2 = 0` in `w = |z|^{1/2}`; its largest
/// root, by the trigonometric method, is
///
/// ```text
/// z = (2u/3) (1 + cos(2 pi/3 - (2/3) p)),  p = arccos((gamma lambda/4) (|u|/3)^{-3/2})
/// ```
///
/// valid when the arccos argument is at most one (otherwise no interior
/// stationary point exists and the answer is zero). Zero versus candidate is
/// always decided by comparing `h` directly, never by a hardcoded threshold;
/// ties go to zero.
pub fn prox_l_half<T: Real>(x: &Vector<T>, lambda: T, gamma: T) -> Vector<T> {
    x.mapv(|v| prox_l_half_scalar(v, lambda, gamma))
}

fn prox_l_half_scalar<T: Real>(u: T, lambda: T, gamma: T) -> T {
    if u == T::zero() {
        return T::zero();
    }
    let a = u.abs();
    let three: T = real(3.0);
    let arg = (gamma * lambda / real(4.0)) * (a / three).powf(real(-1.5));
    if arg > T::one() {
        return T::zero();
    }
    let p = arg.acos();
    let two_thirds: T = real(2.0 / 3.0);
    let angle = real::<T>(2.0 * std::f64::consts::FRAC_PI_3) - two_thirds * p;
    let z = two_thirds * u * (T::one() + angle.cos());
    // Decide zero vs candidate by the subproblem objective; the sqrt branch
    // of h at the candidate uses |z| so the formula is odd in u.
    let h_z = lambda * z.abs().sqrt() + (z - u) * (z - u) / (real::<T>(2.0) * gamma);
    let h_0 = u * u / (real::<T>(2.0) * gamma);
    if h_z < h_0 {
        z
    } else {
        T::zero()
    }
}

/// Hard-thresholding: prox of `lambda ||x||_0`, componentwise `x_i` if
/// `|x_i| > sqrt(2 gamma lambda)` else `0`; the tie `|x_i| = sqrt(2 gamma
/// lambda)` maps to `0` (both selections are minimizers there).
pub fn prox_l0<T: Real>(x: &Vector<T>, lambda: T, gamma: T) -> Vector<T> {
    let t = (real::<T>(2.0) * gamma * lambda).sqrt();
    x.mapv(|v| if v.abs() > t { v } else { T::zero() })
}

/// Euclidean projection onto the unit sphere: `d / ||d||`; the origin, where
/// every unit vector is nearest, maps to the first standard basis vector.
pub fn project_sphere<T: Real>(d: &Vector<T>) -> Vector<T> {
    let n = crate::norm2(d);
    if n == T::zero() {
        let mut e = Vector::zeros(d.len());
        e[0] = T::one();
        return e;
    }
    d.mapv(|v| v / n)
}

/// Projection onto `{ c : ||c||_0 <= n_keep, ||c||_inf <= t_bound }`: keep
/// the `n_keep` largest magnitudes (ties broken toward the lowest index) and
/// clip them to `[-t_bound, t_bound]`.
///
/// Keep-then-clip is exact for this set: clipping only shrinks magnitudes,
/// so no discarded entry could beat a kept one after clipping.
pub fn project_box_l0<T: Real>(c: &Vector<T>, n_keep: usize, t_bound: T) -> Vector<T> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    // Stable sort by descending magnitude keeps lower indices first on ties.
    idx.sort_by(|&i, &j| {
        c[j].abs()
            .partial_cmp(&c[i].abs())
            .expect("projection input must be free of NaN")
    });
    let mut out = Vector::zeros(c.len());
    for &i in idx.iter().take(n_keep) {
        out[i] = num_traits::clamp(c[i], -t_bound, t_bound);
    }
    out
}

/// Projection onto the set of matrices with rank at most `r`: truncated SVD,
/// keeping the `r` largest singular values. When singular values tie at the
/// cut the LAPACK ordering (descending) decides, which is deterministic for
/// a fixed backend.
pub fn project_rank<T>(x: &Matrix<T>, r: usize) -> Result<Matrix<T>>
where
    T: Real + Lapack + Scalar<Real = T>,
{
    let (rows, cols) = x.dim();
    let k = r.min(rows.min(cols));
    let (u, s, vt) = x
        .svd(true, true)
        .map_err(|e| Error::Linalg(format!("svd failed: {e}")))?;
    let u = u.expect("svd was asked for U");
    let vt = vt.expect("svd was asked for V^T");
    // Scale the kept columns of U by the singular values, then multiply by
    // the kept rows of V^T.
    let mut uk = u.slice(ndarray::s![.., ..k]).to_owned();
    for (j, mut col) in uk.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| v * s[j]);
    }
    Ok(uk.dot(&vt.slice(ndarray::s![..k, ..])))
}

/// `lambda ||x||_1` as a nonsmooth oracle.
pub struct L1Oracle<T> {
    pub lambda: T,
    count: Cell<u64>,
}

impl<T: Real> L1Oracle<T> {
    pub fn new(lambda: T) -> Self {
        L1Oracle {
            lambda,
            count: Cell::new(0),
        }
    }
}

impl<T: Real> NonsmoothOracle<T> for L1Oracle<T> {
    fn prox(&self, x: &Vector<T>, gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        let z = prox_l1(x, self.lambda, gamma);
        let g = self.lambda * z.iter().map(|v| v.abs()).sum::<T>();
        (z, g)
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        ExtReal::Finite(self.lambda * x.iter().map(|v| v.abs()).sum::<T>())
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// `lambda sum_i |x_i|^{1/2}` as a nonsmooth oracle. Nonconvex; prox-bounded
/// for every step size since the growth is sublinear.
pub struct LHalfOracle<T> {
    pub lambda: T,
    count: Cell<u64>,
}

impl<T: Real> LHalfOracle<T> {
    pub fn new(lambda: T) -> Self {
        LHalfOracle {
            lambda,
            count: Cell::new(0),
        }
    }
}

impl<T: Real> NonsmoothOracle<T> for LHalfOracle<T> {
    fn prox(&self, x: &Vector<T>, gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        let z = prox_l_half(x, self.lambda, gamma);
        let g = self.lambda * z.iter().map(|v| v.abs().sqrt()).sum::<T>();
        (z, g)
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        ExtReal::Finite(self.lambda * x.iter().map(|v| v.abs().sqrt()).sum::<T>())
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// `lambda ||x||_0` (number of nonzeros) as a nonsmooth oracle.
pub struct L0Oracle<T> {
    pub lambda: T,
    count: Cell<u64>,
}

impl<T: Real> L0Oracle<T> {
    pub fn new(lambda: T) -> Self {
        L0Oracle {
            lambda,
            count: Cell::new(0),
        }
    }
}

impl<T: Real> NonsmoothOracle<T> for L0Oracle<T> {
    fn prox(&self, x: &Vector<T>, gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        let z = prox_l0(x, self.lambda, gamma);
        let nnz = z.iter().filter(|v| **v != T::zero()).count();
        (z, self.lambda * real(nnz as f64))
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        let nnz = x.iter().filter(|v| **v != T::zero()).count();
        ExtReal::Finite(self.lambda * real(nnz as f64))
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// Indicator of the unit sphere. Membership for `value` is tested to a
/// relative tolerance of sqrt(machine epsilon); prox outputs are exactly
/// normalized so they always pass.
pub struct SphereOracle {
    count: Cell<u64>,
}

impl SphereOracle {
    pub fn new() -> Self {
        SphereOracle {
            count: Cell::new(0),
        }
    }
}

impl Default for SphereOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> NonsmoothOracle<T> for SphereOracle {
    fn prox(&self, x: &Vector<T>, _gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        (project_sphere(x), T::zero())
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        let n = crate::norm2(x);
        if (n - T::one()).abs() <= T::epsilon().sqrt() {
            ExtReal::Finite(T::zero())
        } else {
            ExtReal::PosInf
        }
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// Indicator of `{ c : ||c||_0 <= n_keep, ||c||_inf <= t_bound }`.
pub struct BoxL0Oracle<T> {
    pub n_keep: usize,
    pub t_bound: T,
    count: Cell<u64>,
}

impl<T: Real> BoxL0Oracle<T> {
    pub fn new(n_keep: usize, t_bound: T) -> Self {
        BoxL0Oracle {
            n_keep,
            t_bound,
            count: Cell::new(0),
        }
    }
}

impl<T: Real> NonsmoothOracle<T> for BoxL0Oracle<T> {
    fn prox(&self, x: &Vector<T>, _gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        (project_box_l0(x, self.n_keep, self.t_bound), T::zero())
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        let nnz = x.iter().filter(|v| **v != T::zero()).count();
        let inside = nnz <= self.n_keep && x.iter().all(|v| v.abs() <= self.t_bound);
        if inside {
            ExtReal::Finite(T::zero())
        } else {
            ExtReal::PosInf
        }
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// Indicator of `{ X : rank(X) <= r }` on column-major-flattened `rows x
/// cols` matrices. Membership for `value` tolerates a singular-value tail of
/// sqrt(machine epsilon) relative to the largest singular value; `value`
/// costs one SVD per call.
pub struct RankOracle<T> {
    pub rows: usize,
    pub cols: usize,
    pub r: usize,
    count: Cell<u64>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T> RankOracle<T> {
    pub fn new(rows: usize, cols: usize, r: usize) -> Self {
        RankOracle {
            rows,
            cols,
            r,
            count: Cell::new(0),
            _scalar: std::marker::PhantomData,
        }
    }
}

impl<T> NonsmoothOracle<T> for RankOracle<T>
where
    T: Real + Lapack + Scalar<Real = T>,
{
    fn prox(&self, x: &Vector<T>, _gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        let m = mat_from_col_major(x, self.rows, self.cols);
        let z = project_rank(&m, self.r).expect("svd on finite input");
        (col_major_from_mat(&z), T::zero())
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        let m = mat_from_col_major(x, self.rows, self.cols);
        let s = m.svd(false, false).expect("svd on finite input").1;
        if s.is_empty() || s[0] == T::zero() {
            return ExtReal::Finite(T::zero());
        }
        let tol = num_traits::Float::sqrt(T::epsilon()) * s[0];
        let rank = s.iter().filter(|v| **v > tol).count();
        if rank <= self.r {
            ExtReal::Finite(T::zero())
        } else {
            ExtReal::PosInf
        }
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// One block of a separable product `g(x) = sum_b g_b(x[start..end])`.
pub struct Block<T: Real> {
    pub start: usize,
    pub end: usize,
    pub oracle: Box<dyn NonsmoothOracle<T>>,
}

/// Block-separable nonsmooth term; prox applies each block's oracle to its
/// slice. Blocks must tile `0..dim` exactly.
pub struct ProductOracle<T: Real> {
    blocks: Vec<Block<T>>,
    dim: usize,
    count: Cell<u64>,
}

impl<T: Real> ProductOracle<T> {
    pub fn new(mut blocks: Vec<Block<T>>, dim: usize) -> Result<Self> {
        blocks.sort_by_key(|b| b.start);
        let mut cursor = 0;
        for b in &blocks {
            if b.start != cursor || b.end <= b.start {
                return Err(Error::Partition(format!(
                    "block [{}, {}) does not continue the tiling at {}",
                    b.start, b.end, cursor
                )));
            }
            cursor = b.end;
        }
        if cursor != dim {
            return Err(Error::Partition(format!(
                "blocks cover 0..{cursor} but the dimension is {dim}"
            )));
        }
        Ok(ProductOracle {
            blocks,
            dim,
            count: Cell::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Apply a tiling of block oracles to `x`; returns the blockwise prox point
/// and the sum of block `g` values. Shared by [`ProductOracle::prox`].
pub fn prox_product<T: Real>(blocks: &[Block<T>], x: &Vector<T>, gamma: T) -> (Vector<T>, T) {
    let mut z = Vector::zeros(x.len());
    let mut g = T::zero();
    for b in blocks {
        let piece = x.slice(ndarray::s![b.start..b.end]).to_owned();
        let (zb, gb) = b.oracle.prox(&piece, gamma);
        z.slice_mut(ndarray::s![b.start..b.end]).assign(&zb);
        g = g + gb;
    }
    (z, g)
}

impl<T: Real> NonsmoothOracle<T> for ProductOracle<T> {
    fn prox(&self, x: &Vector<T>, gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        prox_product(&self.blocks, x, gamma)
    }

    fn value(&self, x: &Vector<T>) -> ExtReal<T> {
        let mut total = T::zero();
        for b in &self.blocks {
            let piece = x.slice(ndarray::s![b.start..b.end]).to_owned();
            match b.oracle.value(&piece) {
                ExtReal::Finite(v) => total = total + v,
                ExtReal::PosInf => return ExtReal::PosInf,
            }
        }
        ExtReal::Finite(total)
    }

    fn gamma_bound(&self) -> ExtReal<T> {
        // The product is prox-bounded up to the most restrictive block.
        let mut bound = ExtReal::PosInf;
        for b in &self.blocks {
            match (bound, b.oracle.gamma_bound()) {
                (ExtReal::Finite(cur), ExtReal::Finite(blk)) if blk < cur => {
                    bound = ExtReal::Finite(blk)
                }
                (ExtReal::PosInf, ExtReal::Finite(blk)) => bound = ExtReal::Finite(blk),
                _ => {}
            }
        }
        bound
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// Named catalog entry for validation sweeps over the separable operators.
pub struct ProxCatalogEntry<T: Real> {
    pub name: &'static str,
    pub oracle: Box<dyn NonsmoothOracle<T>>,
    pub separable: bool,
    pub convex: bool,
    pub gamma_bound: ExtReal<T>,
}

/// The lambda-parameterized separable operators; set projections take shape
/// arguments and are constructed directly instead.
pub fn standard_catalog<T: Real>(lambda: T) -> Vec<ProxCatalogEntry<T>> {
    vec![
        ProxCatalogEntry {
            name: "l1",
            oracle: Box::new(L1Oracle::new(lambda)),
            separable: true,
            convex: true,
            gamma_bound: ExtReal::PosInf,
        },
        ProxCatalogEntry {
            name: "l_half",
            oracle: Box::new(LHalfOracle::new(lambda)),
            separable: true,
            convex: false,
            gamma_bound: ExtReal::PosInf,
        },
        ProxCatalogEntry {
            name: "l0",
            oracle: Box::new(L0Oracle::new(lambda)),
            separable: true,
            convex: false,
            gamma_bound: ExtReal::PosInf,
        },
    ]
}

/// Unpack a column-major flattened vector into a `rows x cols` matrix:
/// entry `(i, j)` sits at `v[j * rows + i]`.
pub fn mat_from_col_major<T: Real>(v: &Vector<T>, rows: usize, cols: usize) -> Matrix<T> {
    assert_eq!(v.len(), rows * cols, "flattened length must be rows*cols");
    Matrix::from_shape_vec((rows, cols).f(), v.to_vec())
        .expect("shape was just checked against the length")
}

/// Flatten a matrix column by column, inverse of [`mat_from_col_major`].
pub fn col_major_from_mat<T: Real>(m: &Matrix<T>) -> Vector<T> {
    let mut out = Vec::with_capacity(m.len());
    for col in m.columns() {
        out.extend(col.iter().cloned());
    }
    Vector::from_vec(out)
}
