use ndarray::{Array1, Array2};
use ndarray_linalg::QR;
use rand::Rng;
use rand_distr::StandardNormal;
use zerofpr::direction::Broyden;
use zerofpr::problem::Problem;
use zerofpr::prox::L1Oracle;
use zerofpr::solver::{zerofpr_solve, SolverConfig};
use zerofpr::{MatrixF64, ProblemF64, VectorF64};
use zerofpr_testlib::problems::QuadraticOracle;
use zerofpr_testlib::SeedSplitter;

fn haar(n: usize, seed: u64, stream: u64) -> MatrixF64 {
    let mut rng = SeedSplitter::new(seed).stream(stream);
    let raw: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let gauss = Array2::from_shape_vec((n, n), raw).unwrap();
    let (q, _) = gauss.qr().unwrap();
    q
}

fn superlinear_cuts(res: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut cuts = Vec::new();
    for k in 6..res.len() {
        let prefix = &res[..=k];
        let tenth = prefix[0] / 10.0;
        let settled = prefix.iter().filter(|&&e| e < tenth).count();
        if settled < 10 {
            continue;
        }
        let factors: Vec<f64> = prefix.windows(2).map(|w| w[1] / w[0]).collect();
        let tail = &factors[factors.len() - 5..];
        let decreasing = tail.windows(2).all(|p| p[1] < p[0]);
        let last = *tail.last().unwrap();
        if !(decreasing && last < 0.1) {
            continue;
        }
        let min_before = res[..k].iter().cloned().fold(f64::INFINITY, f64::min);
        if res[k] < min_before {
            cuts.push((k, res[k], min_before));
        }
    }
    cuts
}

fn scan(p: &ProblemF64, x0: &VectorF64, label: &str) -> Vec<(usize, f64, f64)> {
    let cfg = SolverConfig {
        tol: 1e-13,
        max_iters: 800,
        ..Default::default()
    };
    let mut eng = Broyden::new(p.dim);
    let (_, trace) = zerofpr_solve(p, x0, &cfg, &mut eng).unwrap();
    let res: Vec<f64> = trace.rows.iter().map(|r| r.res_norm).collect();
    let r0 = res[0];
    let k0 = res.iter().position(|&r| r <= 1e-3 * r0);
    let tau_bad = match k0 {
        Some(i) => trace.rows[i + 1..]
            .iter()
            .filter(|row| row.tau != 1.0)
            .count(),
        None => usize::MAX,
    };
    let cuts = superlinear_cuts(&res);
    let windows: Vec<String> = cuts
        .iter()
        .map(|(k, lo, hi)| format!("k={k} [{lo:.1e},{hi:.1e})"))
        .collect();
    println!(
        "{label}: iters={} tau_bad={tau_bad} cuts={:?}",
        res.len(),
        windows
    );
    cuts
}

fn best_common_tol(all: &[Vec<(usize, f64, f64)>]) -> (usize, f64) {
    let mut best = (0usize, 0.0f64);
    for e in 40..130 {
        let tol = 10f64.powf(-(e as f64) / 10.0);
        let hits = all
            .iter()
            .filter(|cuts| cuts.iter().any(|&(_, lo, hi)| lo <= tol && tol < hi))
            .count();
        if hits > best.0 {
            best = (hits, tol);
        }
    }
    best
}

// Lasso with block-diagonal Gram: support columns carry a two-cluster
// spectrum, off-support columns live in the orthogonal complement with
// singular value 0.8, so no iterate ever activates them and the strict
// complementarity margin is exact.
fn decoupled_lasso(
    m: usize,
    n: usize,
    s: usize,
    slow: usize,
    c: f64,
    lambda: f64,
    seed: u64,
) -> ProblemF64 {
    assert!(m >= n);
    let mut rng0 = SeedSplitter::new(seed).stream(0);
    let raw: Vec<f64> = (0..m * n).map(|_| rng0.sample(StandardNormal)).collect();
    let gauss = Array2::from_shape_vec((m, n), raw).unwrap();
    let (u, _) = gauss.qr().unwrap();
    let u_s = u.slice(ndarray::s![.., ..s]).to_owned();
    let u_o = u.slice(ndarray::s![.., s..n]).to_owned();

    let mut eig = vec![1.0f64; s];
    for j in 0..slow {
        eig[j] = (1.0 / c) * (1.0 + 0.25 * j as f64 / (slow.max(2) - 1) as f64);
    }
    let v_s = haar(s, seed, 1);
    let mut usd = u_s.clone();
    for (j, mut col) in usd.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|t| t * eig[j].sqrt());
    }
    let a_s = usd.dot(&v_s.t());
    let v_o = haar(n - s, seed, 2);
    let a_o = u_o.dot(&v_o.t()).mapv(|t| 0.8 * t);

    let mut a = Array2::zeros((m, n));
    a.slice_mut(ndarray::s![.., ..s]).assign(&a_s);
    a.slice_mut(ndarray::s![.., s..]).assign(&a_o);

    let mut rng = SeedSplitter::new(seed).stream(3);
    let mut xstar: VectorF64 = Array1::zeros(n);
    for j in 0..s {
        let magnitude = 1.0 + rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        xstar[j] = sign * magnitude;
    }
    // G w = v blockwise: G_s = V_s diag(eig) V_s^T, G_o = 0.64 I
    let mut v: VectorF64 = Array1::zeros(n);
    for j in 0..n {
        v[j] = if j < s {
            xstar[j].signum()
        } else {
            let mag = 0.3 + 0.5 * rng.random::<f64>();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * mag
        };
    }
    let vs = v.slice(ndarray::s![..s]).to_owned();
    let vo = v.slice(ndarray::s![s..]).to_owned();
    let mut w: VectorF64 = Array1::zeros(n);
    {
        // G_s^{-1} v_s = V_s diag(1/eig) V_s^T v_s
        let t = v_s.t().dot(&vs);
        let t = Array1::from(
            t.iter()
                .zip(eig.iter())
                .map(|(&ti, &ei)| ti / ei)
                .collect::<Vec<f64>>(),
        );
        let ws = v_s.dot(&t);
        w.slice_mut(ndarray::s![..s]).assign(&ws);
        w.slice_mut(ndarray::s![s..]).assign(&vo.mapv(|t| t / 0.64));
    }
    let b = &a.dot(&xstar) + &a.dot(&w).mapv(|t| lambda * t);
    let ls = zerofpr::problem::compose_least_squares(a, b).unwrap();
    Problem::new(Box::new(ls), Box::new(L1Oracle::new(lambda)), n, Some(1.0))
}

#[test]
fn probe_decoupled_lasso() {
    for (s, slow) in [(10usize, 3usize), (8, 3), (12, 3)] {
        for c in [8.0f64, 10.0] {
            for lambda in [0.1f64, 0.3] {
                let mut all: Vec<Vec<(usize, f64, f64)>> = Vec::new();
                for seed in 0..10 {
                    let prob = decoupled_lasso(40, 20, s, slow, c, lambda, seed);
                    let cuts = scan(
                        &prob,
                        &Array1::zeros(20),
                        &format!("dl s={s} c={c} lam={lambda} sd={seed}"),
                    );
                    all.push(cuts);
                }
                let (hits, tol) = best_common_tol(&all);
                println!(
                    "CELL dl s={s} slow={slow} c={c} lam={lambda}: best hits={hits} at tol={tol:.2e}"
                );
            }
        }
    }
}

fn two_cluster_quadratic(n: usize, c: f64, slow: usize, spread: f64, seed: u64) -> ProblemF64 {
    let mut eigs = vec![1.0; n];
    for j in 0..slow {
        eigs[j] = (1.0 / c) * (1.0 + spread * j as f64 / (slow.max(2) - 1) as f64);
    }
    let v = haar(n, seed, 0);
    let mut vd = v.clone();
    for (j, mut col) in vd.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|t| t * eigs[j]);
    }
    let q = vd.dot(&v.t());
    let q = (&q + &q.t()).mapv(|t| 0.5 * t);
    let mut rng = SeedSplitter::new(seed).stream(1);
    let xstar = Array1::from(
        (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>(),
    );
    let b = q.dot(&xstar);
    Problem::new(
        Box::new(QuadraticOracle::new(q, b)),
        Box::new(zerofpr::problem::ZeroOracle::new()),
        n,
        Some(1.0),
    )
}

#[test]
fn probe_quad_seed_bases() {
    for c in [8.0f64, 10.0] {
        for spread in [0.2f64, 0.25] {
            for base in [0u64, 10, 20, 30, 40] {
                let mut all: Vec<Vec<(usize, f64, f64)>> = Vec::new();
                for seed in base..base + 10 {
                    let prob = two_cluster_quadratic(20, c, 3, spread, seed);
                    let cuts = scan(
                        &prob,
                        &Array1::zeros(20),
                        &format!("qb c={c} spr={spread} s={seed}"),
                    );
                    all.push(cuts);
                }
                let (hits, tol) = best_common_tol(&all);
                println!(
                    "CELL qb c={c} spr={spread} base={base}: best hits={hits} at tol={tol:.2e}"
                );
            }
        }
    }
}
