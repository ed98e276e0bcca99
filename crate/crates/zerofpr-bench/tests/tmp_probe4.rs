use ndarray::{Array1, Array2};
use ndarray_linalg::{Solve, QR, SVD};
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

fn tall_orthonormal(m: usize, n: usize, seed: u64, stream: u64) -> MatrixF64 {
    let mut rng = SeedSplitter::new(seed).stream(stream);
    let raw: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    let gauss = Array2::from_shape_vec((m, n), raw).unwrap();
    let (q, _) = gauss.qr().unwrap();
    q.slice(ndarray::s![.., ..n]).to_owned()
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

fn two_cluster_quadratic(
    n: usize,
    c: f64,
    slow: usize,
    mid: usize,
    spread: f64,
    seed: u64,
) -> ProblemF64 {
    let mut eigs = vec![1.0; n];
    for j in 0..slow {
        eigs[j] = (1.0 / c) * (1.0 + spread * j as f64 / (slow.max(2) - 1) as f64);
    }
    for j in slow..slow + mid {
        eigs[j] = 0.3;
    }
    let v = haar(n, seed, 0);
    let mut vd = v.clone();
    for (j, mut col) in vd.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|t| t * eigs[j]);
    }
    let q = vd.dot(&v.t());
    let q = (&q + &q.t()).mapv(|t| 0.5 * t);
    // balanced error: x* itself gaussian, so x0 = 0 spreads the initial
    // error evenly across eigenmodes instead of amplifying the slow ones
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

fn two_cluster_quadratic_split(
    n: usize,
    c: f64,
    slow: usize,
    spread: f64,
    slow_energy: f64,
    seed: u64,
) -> ProblemF64 {
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
    // x* with fixed energy in the slow and fast eigenspaces
    let mut rng = SeedSplitter::new(seed).stream(1);
    let mut slow_part: VectorF64 = Array1::zeros(n);
    let mut fast_part: VectorF64 = Array1::zeros(n);
    for j in 0..n {
        let coef: f64 = rng.sample(StandardNormal);
        if j < slow {
            slow_part.scaled_add(coef, &v.column(j).to_owned());
        } else {
            fast_part.scaled_add(coef, &v.column(j).to_owned());
        }
    }
    let ns = slow_part.dot(&slow_part).sqrt();
    let nf = fast_part.dot(&fast_part).sqrt();
    let xstar = &slow_part.mapv(|t| slow_energy * t / ns) + &fast_part.mapv(|t| t / nf);
    let b = q.dot(&xstar);
    Problem::new(
        Box::new(QuadraticOracle::new(q, b)),
        Box::new(zerofpr::problem::ZeroOracle::new()),
        n,
        Some(1.0),
    )
}

#[test]
fn probe_quad_split() {
    for slow in [3usize, 4] {
        for c in [8.0f64, 10.0] {
            for spread in [0.25f64, 0.3] {
                for se in [0.5f64, 1.0, 2.0] {
                    let mut all: Vec<Vec<(usize, f64, f64)>> = Vec::new();
                    for seed in 0..10 {
                        let prob = two_cluster_quadratic_split(20, c, slow, spread, se, seed);
                        let cuts = scan(
                            &prob,
                            &Array1::zeros(20),
                            &format!("qs slow={slow} c={c} spr={spread} se={se} s={seed}"),
                        );
                        all.push(cuts);
                    }
                    let mut best = (0usize, 0.0f64);
                    for e in 50..130 {
                        let tol = 10f64.powf(-(e as f64) / 10.0);
                        let hits = all
                            .iter()
                            .filter(|cuts| cuts.iter().any(|&(_, lo, hi)| lo <= tol && tol < hi))
                            .count();
                        if hits > best.0 {
                            best = (hits, tol);
                        }
                    }
                    println!(
                        "CELL slow={slow} c={c} spr={spread} se={se}: best hits={} at tol={:.2e}",
                        best.0, best.1
                    );
                }
            }
        }
    }
}

#[test]
fn probe_quad_dense() {
    for c in [6.0f64, 8.0, 10.0] {
        for spread in [0.25f64, 0.3, 0.4, 0.5] {
            let mut all: Vec<Vec<(usize, f64, f64)>> = Vec::new();
            for seed in 0..10 {
                let prob = two_cluster_quadratic(20, c, 3, 0, spread, seed);
                let cuts = scan(
                    &prob,
                    &Array1::zeros(20),
                    &format!("qd c={c} spr={spread} s={seed}"),
                );
                all.push(cuts);
            }
            // best common tolerance over a log grid
            let mut best = (0usize, 0.0f64);
            for e in 50..130 {
                let tol = 10f64.powf(-(e as f64) / 10.0);
                let hits = all
                    .iter()
                    .filter(|cuts| cuts.iter().any(|&(_, lo, hi)| lo <= tol && tol < hi))
                    .count();
                if hits > best.0 {
                    best = (hits, tol);
                }
            }
            println!("CELL c={c} spr={spread}: best hits={} at tol={:.2e}", best.0, best.1);
        }
    }
}

#[test]
fn probe_quad_grid() {
    let mut by_cell: Vec<(String, usize)> = Vec::new();
    for c in [8.0f64, 12.0] {
        for mid in [0usize, 1, 2] {
            for spread in [0.1f64, 0.3] {
                let mut hits = 0;
                for seed in 0..10 {
                    let prob = two_cluster_quadratic(20, c, 3, mid, spread, seed);
                    let cuts = scan(
                        &prob,
                        &Array1::zeros(20),
                        &format!("q c={c} mid={mid} spr={spread} s={seed}"),
                    );
                    if cuts
                        .iter()
                        .any(|&(_, lo, hi)| lo <= 1e-9 && 1e-9 < hi)
                    {
                        hits += 1;
                    }
                }
                by_cell.push((format!("q c={c} mid={mid} spr={spread}"), hits));
            }
        }
    }
    println!("== tol=1e-9 hits per cell ==");
    for (cell, hits) in by_cell {
        println!("{cell}: {hits}/10");
    }
}

fn structured_lasso(
    m: usize,
    n: usize,
    s: usize,
    slow: usize,
    c: f64,
    lambda: f64,
    seed: u64,
) -> ProblemF64 {
    // support columns get a prescribed two-cluster Gram spectrum; off-support
    // columns sit at singular value 0.8 so they set neither L nor the
    // on-support dynamics
    let mut eig = vec![1.0f64; s];
    for j in 0..slow {
        eig[j] = (1.0 / c) * (1.0 + 0.3 * j as f64 / (slow.max(2) - 1) as f64);
    }
    let us = tall_orthonormal(m, s, seed, 0);
    let vs = haar(s, seed, 1);
    let mut usd = us.clone();
    for (j, mut col) in usd.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|t| t * eig[j].sqrt());
    }
    let a_s = usd.dot(&vs.t());
    let uo = tall_orthonormal(m, n - s, seed, 2);
    let a_off = uo.mapv(|t| 0.8 * t);

    // interleave: support indices are the first s (kept simple on purpose)
    let mut a = Array2::zeros((m, n));
    a.slice_mut(ndarray::s![.., ..s]).assign(&a_s);
    a.slice_mut(ndarray::s![.., s..]).assign(&a_off);

    let mut rng = SeedSplitter::new(seed).stream(3);
    let mut xstar: VectorF64 = Array1::zeros(n);
    for j in 0..s {
        let magnitude = 1.0 + rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        xstar[j] = sign * magnitude;
    }
    let mut v: VectorF64 = Array1::zeros(n);
    for j in 0..n {
        v[j] = if j < s {
            xstar[j].signum()
        } else {
            0.8 * (2.0 * rng.random::<f64>() - 1.0)
        };
    }
    let g = a.t().dot(&a);
    let w = g.solve(&v).unwrap();
    let b = &a.dot(&xstar) + &a.dot(&w).mapv(|t| lambda * t);
    let l = {
        let smax = a.svd(false, false).unwrap().1[0];
        smax * smax
    };
    let ls = zerofpr::problem::compose_least_squares(a, b).unwrap();
    Problem::new(Box::new(ls), Box::new(L1Oracle::new(lambda)), n, Some(l))
}

#[test]
fn probe_lasso_grid() {
    let mut by_cell: Vec<(String, usize)> = Vec::new();
    for (s, slow) in [(5usize, 2usize), (5, 3), (6, 3)] {
        for c in [8.0f64, 12.0] {
            for lambda in [0.1f64, 0.3] {
                let mut hits = 0;
                for seed in 0..10 {
                    let prob = structured_lasso(40, 20, s, slow, c, lambda, seed);
                    let cuts = scan(
                        &prob,
                        &Array1::zeros(20),
                        &format!("l s={s} slow={slow} c={c} lam={lambda} sd={seed}"),
                    );
                    if cuts
                        .iter()
                        .any(|&(_, lo, hi)| lo <= 1e-9 && 1e-9 < hi)
                    {
                        hits += 1;
                    }
                }
                by_cell.push((format!("l s={s} slow={slow} c={c} lam={lambda}"), hits));
            }
        }
    }
    println!("== tol=1e-9 hits per cell ==");
    for (cell, hits) in by_cell {
        println!("{cell}: {hits}/10");
    }
}
