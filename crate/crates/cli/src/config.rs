//! Run configuration: a single TOML file with either a reduced parameter
//! block or an original four-exponent block, weight specs, grid and oracle
//! settings. Every numeric range is validated at parse time.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ggamma_core::functionals::{OriginalParams, ParamTriple};
use ggamma_core::grids::GridMode;
use ggamma_core::oracle::OracleBudget;
use ggamma_core::report::GridSettings;
use ggamma_core::weights::{make_weight, Domain, Weight, WeightSet, WeightSpec};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Reduced exponents (p, q, r); exactly one of `params`/`original`.
    pub params: Option<ParamsBlock>,
    /// Original exponents (r1, q1, r2, q2) with their four weights.
    pub original: Option<OriginalBlock>,
    #[serde(default)]
    pub domain: DomainBlock,
    /// Weights of the reduced inequality; required with `params`.
    pub weights: Option<WeightsBlock>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub quadrature: QuadBlock,
    #[serde(default)]
    pub covering: CoveringBlock,
    #[serde(default)]
    pub oracle: OracleBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OriginalBlock {
    pub r1: f64,
    pub q1: f64,
    pub r2: f64,
    pub q2: f64,
    pub w1: WeightSpecConfig,
    pub w2: WeightSpecConfig,
    pub delta1: WeightSpecConfig,
    pub delta2: WeightSpecConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    /// Finite length, or the string "inf".
    pub length: toml::Value,
    /// Truncation for infinite domains.
    pub l_trunc: Option<f64>,
}

impl Default for DomainBlock {
    fn default() -> Self {
        DomainBlock {
            length: toml::Value::Float(1.0),
            l_trunc: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    pub u: WeightSpecConfig,
    pub delta: WeightSpecConfig,
    pub v: WeightSpecConfig,
    pub w: WeightSpecConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WeightSpecConfig {
    Power {
        alpha: f64,
    },
    Powerlog {
        alpha: f64,
        beta: f64,
    },
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    Table {
        points: Vec<[f64; 2]>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub inner_n: usize,
    pub mode: String,
    pub esup_tol: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock {
            n: ggamma_core::grids::DEFAULT_OUTER_N,
            inner_n: ggamma_core::grids::DEFAULT_INNER_N,
            mode: "logarithmic".into(),
            esup_tol: ggamma_core::grids::DEFAULT_ESUP_TOL,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadBlock {
    pub tol: f64,
}

impl Default for QuadBlock {
    fn default() -> Self {
        QuadBlock { tol: 1e-9 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringBlock {
    pub a: f64,
}

impl Default for CoveringBlock {
    fn default() -> Self {
        CoveringBlock {
            a: ggamma_core::covering::DEFAULT_RATIO,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub pieces: usize,
    pub restarts: usize,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for OracleBlock {
    fn default() -> Self {
        let b = OracleBudget::default();
        OracleBlock {
            pieces: b.pieces,
            restarts: b.restarts,
            sweeps: b.sweeps,
            seed: b.seed,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub out: Option<String>,
}

/// A fully validated run: reduced parameters, weights, and settings.
pub struct Run {
    pub params: ParamTriple<f64>,
    pub ws: WeightSet<f64>,
    pub settings: GridSettings,
    pub mode: GridMode,
    pub covering_a: f64,
    pub quad_tol: f64,
    pub budget: OracleBudget,
    pub out: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<FileConfig> {
        let cfg: FileConfig = toml::from_str(text).context("config parse error")?;
        match (&cfg.params, &cfg.original) {
            (Some(_), Some(_)) => {
                bail!("config error: exactly one of [params] and [original] may be present")
            }
            (None, None) => {
                bail!("config error: one of [params] or [original] is required")
            }
            _ => {}
        }
        if cfg.params.is_some() && cfg.weights.is_none() {
            bail!("config error: [params] requires a [weights] block");
        }
        Ok(cfg)
    }

    pub fn domain(&self) -> Result<Domain<f64>> {
        let d = match &self.domain.length {
            toml::Value::String(s) if s == "inf" => match self.domain.l_trunc {
                Some(t) => {
                    Domain::infinite_truncated(t).context("config error in domain.l_trunc")?
                }
                None => Domain::infinite(),
            },
            toml::Value::Float(l) => Domain::finite(*l).context("config error in domain.length")?,
            toml::Value::Integer(l) => {
                Domain::finite(*l as f64).context("config error in domain.length")?
            }
            other => bail!("config error: domain.length must be a number or \"inf\", got {other}"),
        };
        Ok(d)
    }

    /// Resolves the config into a reduced-parameter run, applying the
    /// rescaling reduction when the original block is given.
    pub fn resolve(&self) -> Result<Run> {
        let domain = self.domain()?;
        let (params, ws) = if let Some(pb) = &self.params {
            let params = ParamTriple::new(pb.p, pb.q, pb.r).context("config error in [params]")?;
            let wb = self.weights.as_ref().unwrap();
            let ws = WeightSet::new(
                build_weight(&wb.u, domain).context("config error in weights.u")?,
                build_weight(&wb.delta, domain).context("config error in weights.delta")?,
                build_weight(&wb.v, domain).context("config error in weights.v")?,
                build_weight(&wb.w, domain).context("config error in weights.w")?,
            )?;
            (params, ws)
        } else {
            let ob = self.original.as_ref().unwrap();
            let orig = OriginalParams {
                r1: ob.r1,
                q1: ob.q1,
                r2: ob.r2,
                q2: ob.q2,
                w1: build_weight(&ob.w1, domain).context("config error in original.w1")?,
                w2: build_weight(&ob.w2, domain).context("config error in original.w2")?,
                delta1: build_weight(&ob.delta1, domain)
                    .context("config error in original.delta1")?,
                delta2: build_weight(&ob.delta2, domain)
                    .context("config error in original.delta2")?,
            };
            ggamma_core::functionals::reduce_parameters(&orig)?
        };
        let mode = parse_mode(&self.grid.mode)?;
        if self.grid.n < 8 || self.grid.inner_n < 8 {
            bail!("config error: grid.n and grid.inner_n must be at least 8");
        }
        if !(self.covering.a > 1.0) {
            bail!(
                "config error: covering.a must exceed 1, got {}",
                self.covering.a
            );
        }
        if !(self.quadrature.tol > 0.0 && self.quadrature.tol < 1.0) {
            bail!("config error: quadrature.tol must be in (0, 1)");
        }
        Ok(Run {
            params,
            ws,
            settings: GridSettings {
                outer_n: self.grid.n,
                inner_n: self.grid.inner_n,
                mode,
                esup_tol: self.grid.esup_tol,
            },
            mode,
            covering_a: self.covering.a,
            quad_tol: self.quadrature.tol,
            budget: OracleBudget {
                pieces: self.oracle.pieces,
                restarts: self.oracle.restarts,
                sweeps: self.oracle.sweeps,
                seed: self.oracle.seed,
            },
            out: self.output.out.clone(),
        })
    }
}

pub fn parse_mode(s: &str) -> Result<GridMode> {
    match s {
        "linear" => Ok(GridMode::Linear),
        "logarithmic" | "log" => Ok(GridMode::Logarithmic),
        "hybrid" => Ok(GridMode::Hybrid),
        other => bail!("config error: unknown grid mode {other:?}"),
    }
}

pub fn build_weight(spec: &WeightSpecConfig, domain: Domain<f64>) -> Result<Weight<f64>> {
    let ws = match spec {
        WeightSpecConfig::Power { alpha } => WeightSpec::Power { alpha: *alpha },
        WeightSpecConfig::Powerlog { alpha, beta } => WeightSpec::PowerLog {
            alpha: *alpha,
            beta: *beta,
        },
        WeightSpecConfig::Piecewise {
            breakpoints,
            values,
        } => WeightSpec::Piecewise {
            breakpoints: breakpoints.clone(),
            values: values.clone(),
        },
        WeightSpecConfig::Table { points } => WeightSpec::Table {
            points: points.iter().map(|p| (p[0], p[1])).collect(),
        },
    };
    Ok(make_weight(ws, domain)?)
}

/// Template written by `init`, with all defaults spelled out.
pub const TEMPLATE: &str = r#"# Embedding-check run configuration.
# Exactly one of [params] (reduced exponents) or [original] must be present.

[params]
p = 1.0
q = 1.0
r = 1.0

# [original]
# r1 = 1.0
# q1 = 1.0
# r2 = 1.0
# q2 = 2.0
# w1 = { kind = "power", alpha = 0.0 }
# w2 = { kind = "power", alpha = 0.0 }
# delta1 = { kind = "power", alpha = 0.0 }
# delta2 = { kind = "power", alpha = 0.0 }

[domain]
# Finite length, or "inf" with an optional l_trunc (default 1e6).
length = 1.0
# l_trunc = 1e6

# Weight kinds: power {alpha > -1}, powerlog {alpha > -1, beta},
# piecewise {breakpoints, values (one more value than breakpoints)},
# table {points = [[t, v], ...], linear interpolation}.
[weights.u]
kind = "power"
alpha = 0.0

[weights.delta]
kind = "power"
alpha = 0.0

[weights.v]
kind = "power"
alpha = 0.0

[weights.w]
kind = "power"
alpha = 0.0

[grid]
n = 2048
inner_n = 512
mode = "logarithmic"   # linear | logarithmic | hybrid
esup_tol = 1e-6

[quadrature]
tol = 1e-9

[covering]
a = 109.0

[oracle]
pieces = 16
restarts = 8
sweeps = 30
seed = 42

[output]
# out = "report.json"
"#;
