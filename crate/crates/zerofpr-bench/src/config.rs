//! Experiment specification and its two sources: key=value config files and
//! command-line flags. The merge order is fixed: per-kind defaults, then the
//! file, then the flags, so anything on the command line wins.

use anyhow::{bail, Context, Result};

/// The three benchmark families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    SparseApprox,
    DictLearning,
    MatDecomp,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sparse_approx" => Ok(ExperimentKind::SparseApprox),
            "dict_learning" => Ok(ExperimentKind::DictLearning),
            "mat_decomp" => Ok(ExperimentKind::MatDecomp),
            other => bail!(
                "unknown experiment kind {other:?}; expected sparse_approx, dict_learning, or mat_decomp"
            ),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::SparseApprox => "sparse_approx",
            ExperimentKind::DictLearning => "dict_learning",
            ExperimentKind::MatDecomp => "mat_decomp",
        }
    }
}

/// Everything needed to reproduce one experiment over a seed range.
///
/// Field relevance by kind: sparse approximation reads `n` and `lambda`
/// (the measurement count is `n/5`); dictionary learning reads `n`, `m`,
/// `k`, `n_keep`, `t_bound`; matrix decomposition reads `m` (rows), `n`
/// (columns), `r`, `lambda`. Irrelevant fields are carried but ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub r: usize,
    pub n_keep: usize,
    pub t_bound: f64,
    pub lambda: f64,
    /// Base seed; repetition `i` runs at seed `seed + i`.
    pub seed: u64,
    /// Number of seeded repetitions.
    pub reps: usize,
    pub solvers: Vec<String>,
    pub tol: f64,
    pub max_iters: usize,
    pub threads: usize,
}

impl ExperimentSpec {
    /// Per-kind defaults matching the reference experiments.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let common = ExperimentSpec {
            kind,
            n: 0,
            m: 0,
            k: 0,
            r: 1,
            n_keep: 3,
            t_bound: 1e6,
            lambda: 0.0,
            seed: 0,
            reps: 1,
            solvers: vec!["fbs".into(), "zerofpr-lbfgs".into()],
            tol: 1e-6,
            max_iters: 50_000,
            threads: 1,
        };
        match kind {
            ExperimentKind::SparseApprox => ExperimentSpec {
                n: 500,
                lambda: 0.1,
                tol: 1e-6,
                ..common
            },
            ExperimentKind::DictLearning => ExperimentSpec {
                n: 20,
                m: 500,
                k: 50,
                tol: 1e-4,
                max_iters: 20_000,
                ..common
            },
            ExperimentKind::MatDecomp => ExperimentSpec {
                m: 80,
                n: 60,
                r: 1,
                lambda: 3e-3,
                tol: 1e-4,
                ..common
            },
        }
    }

    /// Apply one key=value pair. Unknown keys are an error; `kind` must
    /// agree with the spec's kind (it selects defaults, so it cannot be
    /// changed after the fact).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let ctx = || format!("invalid value {value:?} for key {key:?}");
        match key {
            "kind" => {
                let k = ExperimentKind::parse(value)?;
                if k != self.kind {
                    bail!(
                        "config kind {} conflicts with the requested kind {}",
                        k.as_str(),
                        self.kind.as_str()
                    );
                }
            }
            "n" => self.n = value.parse().with_context(ctx)?,
            "m" => self.m = value.parse().with_context(ctx)?,
            "k" => self.k = value.parse().with_context(ctx)?,
            "r" => self.r = value.parse().with_context(ctx)?,
            "n_keep" => self.n_keep = value.parse().with_context(ctx)?,
            "t_bound" => self.t_bound = value.parse().with_context(ctx)?,
            "lambda" => self.lambda = value.parse().with_context(ctx)?,
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "seeds" => self.reps = value.parse().with_context(ctx)?,
            "solvers" => {
                self.solvers = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
            }
            "tol" => self.tol = value.parse().with_context(ctx)?,
            "max_iters" => self.max_iters = value.parse().with_context(ctx)?,
            "threads" => self.threads = value.parse().with_context(ctx)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            bail!("seeds must be at least 1");
        }
        if self.solvers.is_empty() {
            bail!("at least one solver is required");
        }
        if !(self.tol > 0.0) {
            bail!("tol must be positive, got {}", self.tol);
        }
        if self.max_iters == 0 {
            bail!("max_iters must be at least 1");
        }
        if self.threads == 0 {
            bail!("threads must be at least 1");
        }
        match self.kind {
            ExperimentKind::SparseApprox => {
                if self.n < 5 {
                    bail!("sparse_approx needs n >= 5, got {}", self.n);
                }
            }
            ExperimentKind::DictLearning => {
                if self.n == 0 || self.m == 0 || self.k == 0 {
                    bail!("dict_learning needs positive n, m, k");
                }
                if self.n_keep == 0 || self.n_keep > self.k {
                    bail!("dict_learning needs 1 <= n_keep <= k");
                }
            }
            ExperimentKind::MatDecomp => {
                if self.m == 0 || self.n == 0 || self.r == 0 {
                    bail!("mat_decomp needs positive m, n, r");
                }
            }
        }
        Ok(())
    }

    /// Identifier used in result rows and trace file names. Never contains
    /// a comma, so it is safe as the first CSV field.
    pub fn experiment_id(&self) -> String {
        match self.kind {
            ExperimentKind::SparseApprox => {
                format!("sparse_approx_n{}_lam{}", self.n, self.lambda)
            }
            ExperimentKind::DictLearning => {
                format!("dict_learning_n{}_m{}_k{}", self.n, self.m, self.k)
            }
            ExperimentKind::MatDecomp => {
                format!("mat_decomp_m{}_n{}_r{}", self.m, self.n, self.r)
            }
        }
    }

    /// The seeds the repetitions run at.
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.reps as u64).map(move |i| self.seed + i)
    }
}

/// Parse key=value lines. Blank lines and `#` comments are skipped; values
/// may contain `=` (the split is on the first one).
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {raw:?}", lineno + 1);
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Build a spec for `kind` from defaults, then the config file pairs, then
/// the command-line pairs, and validate the result.
pub fn build_spec(
    kind: ExperimentKind,
    file_pairs: &[(String, String)],
    cli_pairs: &[(String, String)],
) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::defaults(kind);
    for (key, value) in file_pairs.iter().chain(cli_pairs) {
        spec.apply(key, value)?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Build a spec from a problem file alone (used by `solve` and `diagnose`,
/// where the kind comes from the file's `kind` key).
pub fn spec_from_problem_file(text: &str) -> Result<ExperimentSpec> {
    let pairs = parse_kv(text)?;
    let kind_value = pairs
        .iter()
        .find(|(k, _)| k == "kind")
        .map(|(_, v)| v.clone())
        .context("problem file must set kind=...")?;
    let kind = ExperimentKind::parse(&kind_value)?;
    build_spec(kind, &pairs, &[])
}
