//! Seeded generators for the three benchmark families: sparse approximation
//! with an l-1/2 penalty, dictionary learning over sphere and box-l0 blocks,
//! and low-rank plus sparse matrix decomposition.
//!
//! Every generator is deterministic in its seed (independent ChaCha streams
//! per ingredient, so changing one ingredient never shifts another) and
//! returns the raw data next to the assembled `Problem` so tests can check
//! the oracles against the matrices they were built from.

use std::cell::Cell;

use ndarray::s;
use ndarray_linalg::SVD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zerofpr::problem::{compose_least_squares, FnSmooth, Problem, SmoothOracle};
use zerofpr::prox::{
    col_major_from_mat, mat_from_col_major, Block, BoxL0Oracle, L0Oracle, LHalfOracle,
    ProductOracle, RankOracle, SphereOracle,
};
use zerofpr::{MatrixF64, ProblemF64, VectorF64};
use zerofpr_testlib::SeedSplitter;

fn gauss_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> VectorF64 {
    VectorF64::from_iter((0..len).map(|_| rng.sample::<f64, _>(StandardNormal) * std))
}

fn gauss_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> MatrixF64 {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
        .collect();
    MatrixF64::from_shape_vec((rows, cols), data).expect("shape matches the data length")
}

/// Sparse approximation instance: `f(x) = (1/2)||Ax - b||^2`,
/// `g = lambda sum_i |x_i|^{1/2}`.
pub struct SparseApproxInstance {
    pub problem: ProblemF64,
    /// Conventional starting point (the origin).
    pub x0: VectorF64,
    /// Planted sparse signal behind `b`.
    pub x_orig: VectorF64,
    pub a: MatrixF64,
    pub b: VectorF64,
    /// `||A||^2`, the gradient Lipschitz constant handed to the problem.
    pub lipschitz: f64,
}

/// Generate a sparse-approximation instance with `m = floor(n/5)`
/// measurements: `A` has Gaussian entries of variance `1/m`, the planted
/// signal has 5 standard-normal nonzeros (fewer only if `n < 5`), and
/// `b = A x_orig + v` with noise variance `1/m`.
pub fn gen_sparse_approx(n: usize, lambda: f64, seed: u64) -> SparseApproxInstance {
    assert!(n >= 5, "need n >= 5 so that m = n/5 is at least 1");
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let m = n / 5;
    let std = (1.0 / m as f64).sqrt();
    let split = SeedSplitter::new(seed);

    let a = gauss_mat(&mut split.stream(0), m, n, std);

    let mut rng_x = split.stream(1);
    let nnz = n.min(5);
    let support = rand::seq::index::sample(&mut rng_x, n, nnz);
    let mut x_orig = VectorF64::zeros(n);
    for i in support {
        x_orig[i] = rng_x.sample(StandardNormal);
    }

    let v = gauss_vec(&mut split.stream(2), m, std);
    let b = a.dot(&x_orig) + &v;

    let smax = a.svd(false, false).expect("svd of a finite matrix").1[0];
    let lipschitz = smax * smax;

    let smooth = compose_least_squares(a.clone(), b.clone())
        .expect("A and b agree on the row count by construction");
    let problem = Problem::new(
        Box::new(smooth),
        Box::new(LHalfOracle::new(lambda)),
        n,
        Some(lipschitz),
    );
    SparseApproxInstance {
        problem,
        x0: VectorF64::zeros(n),
        x_orig,
        a,
        b,
        lipschitz,
    }
}

/// Smooth term of dictionary learning, `f(D, C) = (1/2)||Y - DC||_F^2` over
/// the concatenated variable `[vec(D) | vec(C)]` (column-major blocks).
///
/// Each eval performs three matrix products (`DC`, the D-gradient, the
/// C-gradient), counted as matvecs; there is no single data matrix to count
/// against, so the product count is the honest analogue.
pub struct DictSmooth {
    y: MatrixF64,
    n: usize,
    k: usize,
    m: usize,
    evals: Cell<u64>,
    matvecs: Cell<u64>,
}

impl DictSmooth {
    pub fn new(y: MatrixF64, k: usize) -> Self {
        let (n, m) = y.dim();
        DictSmooth {
            y,
            n,
            k,
            m,
            evals: Cell::new(0),
            matvecs: Cell::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.k + self.k * self.m
    }
}

impl SmoothOracle<f64> for DictSmooth {
    fn eval(&self, z: &VectorF64) -> (f64, VectorF64) {
        let nk = self.n * self.k;
        debug_assert_eq!(z.len(), self.dim());
        let d = mat_from_col_major(&z.slice(s![..nk]).to_owned(), self.n, self.k);
        let c = mat_from_col_major(&z.slice(s![nk..]).to_owned(), self.k, self.m);
        let resid = d.dot(&c) - &self.y;
        let val = 0.5 * resid.iter().map(|v| v * v).sum::<f64>();
        let grad_d = resid.dot(&c.t());
        let grad_c = d.t().dot(&resid);
        self.evals.set(self.evals.get() + 1);
        self.matvecs.set(self.matvecs.get() + 3);
        let mut grad = VectorF64::zeros(z.len());
        grad.slice_mut(s![..nk])
            .assign(&col_major_from_mat(&grad_d));
        grad.slice_mut(s![nk..])
            .assign(&col_major_from_mat(&grad_c));
        (val, grad)
    }

    fn eval_count(&self) -> u64 {
        self.evals.get()
    }

    fn matvec_count(&self) -> u64 {
        self.matvecs.get()
    }
}

/// Dictionary-learning instance: variables `[vec(D) | vec(C)]` with `D` of
/// shape `n x k` and `C` of shape `k x m`; `g` constrains every dictionary
/// column to the unit sphere and every code column to at most `n_keep`
/// nonzeros inside `[-t_bound, t_bound]`.
pub struct DictLearningInstance {
    pub problem: ProblemF64,
    /// Conventional starting point `(D, C) = (0, 0)`.
    pub x0: VectorF64,
    pub y: MatrixF64,
    pub d_gen: MatrixF64,
    pub c_gen: MatrixF64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub n_keep: usize,
    pub t_bound: f64,
}

/// Generate dictionary-learning data `Y = D_gen C_gen + V`: unit-norm random
/// atoms, codes with `n_keep` standard-normal nonzeros per column, noise of
/// variance 1e-2. No Lipschitz constant is declared (none holds globally for
/// this bilinear term), which forces the adaptive step-size path in every
/// solver.
pub fn gen_dict_learning(
    n: usize,
    m: usize,
    k: usize,
    n_keep: usize,
    t_bound: f64,
    seed: u64,
) -> DictLearningInstance {
    assert!(n >= 1 && m >= 1 && k >= 1, "sizes must be at least 1");
    assert!(
        n_keep >= 1 && n_keep <= k,
        "n_keep must lie in 1..=k, got {n_keep} with k = {k}"
    );
    assert!(t_bound > 0.0, "t_bound must be positive");
    let split = SeedSplitter::new(seed);

    let mut d_gen = gauss_mat(&mut split.stream(0), n, k, 1.0);
    for mut col in d_gen.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        } else {
            col[0] = 1.0;
        }
    }

    let mut rng_c = split.stream(1);
    let mut c_gen = MatrixF64::zeros((k, m));
    for j in 0..m {
        let rows = rand::seq::index::sample(&mut rng_c, k, n_keep);
        for i in rows {
            c_gen[[i, j]] = rng_c.sample(StandardNormal);
        }
    }

    let v = gauss_mat(&mut split.stream(2), n, m, 0.1);
    let y = d_gen.dot(&c_gen) + &v;

    let nk = n * k;
    let dim = nk + k * m;
    let mut blocks: Vec<Block<f64>> = Vec::with_capacity(k + m);
    for j in 0..k {
        blocks.push(Block {
            start: j * n,
            end: (j + 1) * n,
            oracle: Box::new(SphereOracle::new()),
        });
    }
    for j in 0..m {
        blocks.push(Block {
            start: nk + j * k,
            end: nk + (j + 1) * k,
            oracle: Box::new(BoxL0Oracle::new(n_keep, t_bound)),
        });
    }
    let g = ProductOracle::new(blocks, dim).expect("blocks tile the dimension by construction");

    let problem = Problem::new(Box::new(DictSmooth::new(y.clone(), k)), Box::new(g), dim, None);
    DictLearningInstance {
        problem,
        x0: VectorF64::zeros(dim),
        y,
        d_gen,
        c_gen,
        n,
        m,
        k,
        n_keep,
        t_bound,
    }
}

/// Matrix-decomposition instance: variables `[vec(X_L) | vec(X_S)]`, both
/// `rows x cols` column-major; `f = (1/2)||A - X_L - X_S||_F^2` with
/// Lipschitz constant exactly 2, `g = indicator(rank <= r) + lambda ||.||_0`
/// blockwise.
pub struct MatDecompInstance {
    pub problem: ProblemF64,
    /// Conventional starting point (both blocks zero).
    pub x0: VectorF64,
    pub a: MatrixF64,
    pub l_truth: MatrixF64,
    pub s_truth: MatrixF64,
    pub rows: usize,
    pub cols: usize,
    pub r: usize,
    pub lambda: f64,
}

/// Generate decomposition data `A = L0 + S0 + noise` with `rank(L0) = r` and
/// `S0` holding spikes of magnitude in `[1, 2]` on about 5% of the entries.
pub fn gen_mat_decomp(rows: usize, cols: usize, r: usize, lambda: f64, seed: u64) -> MatDecompInstance {
    gen_mat_decomp_with(rows, cols, r, lambda, 1e-3, seed)
}

/// [`gen_mat_decomp`] with an explicit noise standard deviation; zero noise
/// makes the planted pair an exact fixed point of the prox-gradient map.
pub fn gen_mat_decomp_with(
    rows: usize,
    cols: usize,
    r: usize,
    lambda: f64,
    noise_std: f64,
    seed: u64,
) -> MatDecompInstance {
    assert!(rows >= 1 && cols >= 1, "sizes must be at least 1");
    assert!(r >= 1, "rank bound must be at least 1");
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    assert!(noise_std >= 0.0, "noise_std must be nonnegative");
    let split = SeedSplitter::new(seed);

    // Entries of L0 come out with unit variance: each is a sum of r unit
    // products scaled by 1/sqrt(r).
    let u = gauss_mat(&mut split.stream(0), rows, r, 1.0);
    let v = gauss_mat(&mut split.stream(1), cols, r, 1.0);
    let l_truth = u.dot(&v.t()).mapv(|t| t / (r as f64).sqrt());

    let mut rng_s = split.stream(2);
    let total = rows * cols;
    let spikes = (total / 20).max(1);
    let positions = rand::seq::index::sample(&mut rng_s, total, spikes);
    let mut s_truth = MatrixF64::zeros((rows, cols));
    for p in positions {
        let magnitude = 1.0 + rng_s.random::<f64>();
        let sign = if rng_s.random::<bool>() { 1.0 } else { -1.0 };
        s_truth[[p % rows, p / rows]] = sign * magnitude;
    }

    let noise = gauss_mat(&mut split.stream(3), rows, cols, noise_std);
    let a = &l_truth + &s_truth + &noise;

    let mn = rows * cols;
    let a_flat = col_major_from_mat(&a);
    let smooth = FnSmooth::new(move |z: &VectorF64| {
        let mut resid = VectorF64::zeros(mn);
        for i in 0..mn {
            resid[i] = z[i] + z[mn + i] - a_flat[i];
        }
        let val = 0.5 * resid.dot(&resid);
        let mut grad = VectorF64::zeros(2 * mn);
        grad.slice_mut(s![..mn]).assign(&resid);
        grad.slice_mut(s![mn..]).assign(&resid);
        (val, grad)
    });

    let blocks = vec![
        Block {
            start: 0,
            end: mn,
            oracle: Box::new(RankOracle::new(rows, cols, r)),
        },
        Block {
            start: mn,
            end: 2 * mn,
            oracle: Box::new(L0Oracle::new(lambda)),
        },
    ];
    let g = ProductOracle::new(blocks, 2 * mn).expect("two blocks tile the dimension");

    let problem = Problem::new(Box::new(smooth), Box::new(g), 2 * mn, Some(2.0));
    MatDecompInstance {
        problem,
        x0: VectorF64::zeros(2 * mn),
        a,
        l_truth,
        s_truth,
        rows,
        cols,
        r,
        lambda,
    }
}
