//! Run configuration files.
//!
//! The format is one `key = value` pair per line; blank lines and lines
//! starting with `#` are ignored, as is anything after a `#` on a line.
//! Lists are comma separated; matrix rows are separated by `;`. Paths are
//! relative to the directory holding the configuration file.
//!
//! | key | value | default |
//! |-----|-------|---------|
//! | `edges_file` | edge list path | required |
//! | `attributes_file` | node attribute CSV path | none |
//! | `nodes` | node count | from attributes or edges |
//! | `model` | term list, e.g. `edges, gwesp:0.2` | required |
//! | `summary` | term list | the model terms |
//! | `summary.transform` | `none`, `sqrt1p`, or one per summary term | `none` |
//! | `prior.mean` | list | zeros |
//! | `prior.var` | one value or a list (diagonal) | `100` |
//! | `prior.cov` | full matrix, rows split by `;` | |
//! | `algorithm` | `is`, `ais`, `rejection`, `aea` | `ais` |
//! | `rounds` | draws per round | `8000, 24000` |
//! | `nu` | one value or one per round | `4` |
//! | `omega` | one value or one per round | `4` |
//! | `burnin` | MH steps per simulated network | `2 n²` |
//! | `sampler` | `tnt` or `uniform` | `tnt` |
//! | `kernel` | `gaussian`, `gaussian-quadratic` or `constant` | `gaussian` |
//! | `retain_previous` | `true` or `false` | `false` |
//! | `proposal.mean`, `proposal.cov` | first-round proposal location and scale | MPLE |
//! | `seed` | master seed | `1` |
//! | `workers` | worker threads, `0` for all cores | `0` |
//! | `output` | output directory | `out` |
//! | `rejection.n` | accepted draws | `1000` |
//! | `rejection.threshold` | fixed distance threshold | |
//! | `rejection.quantile` | pilot-distance quantile threshold | `0.01` |
//! | `rejection.pilot` | pilot run size | `1000` |
//! | `rejection.batch` | simulations per batch | `1000` |
//! | `rejection.min_acceptance` | acceptance-rate floor | `1e-4` |
//! | `aea.chains` | number of chains | `2p` |
//! | `aea.burnin` | burn-in iterations per chain | `500` |
//! | `aea.iters` | retained iterations per chain | `1500` |
//! | `aea.aux_burnin` | MH steps per auxiliary network | `burnin` |
//! | `aea.proposal` | `ads`, `rw` or `prior` | `ads` |
//! | `aea.gamma` | differential step size | `0.5` |
//! | `aea.epsilon` | jitter, in MPLE standard errors | `0.001` |
//! | `aea.rw_scale` | random-walk scale on the MPLE covariance | `1` |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::abc::{AbcConfig, InitialProposal, KernelMode, RejectionConfig, RoundSpec, Threshold};
use crate::aea::{AeaConfig, AeaProposal};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeAttributes};
use crate::kernel_stats::{GaussianPrior, Prior, DEFAULT_NU, DEFAULT_OMEGA};
use crate::model::{ModelSpec, SummarySpec, Transform};
use crate::sampler::{default_burn_in, ProposalKind};

pub const DEFAULT_PRIOR_VARIANCE: f64 = 100.0;

const KEYS: &[&str] = &[
    "edges_file",
    "attributes_file",
    "nodes",
    "directed",
    "model",
    "summary",
    "summary.transform",
    "prior.mean",
    "prior.var",
    "prior.cov",
    "algorithm",
    "rounds",
    "nu",
    "omega",
    "burnin",
    "sampler",
    "kernel",
    "retain_previous",
    "proposal.mean",
    "proposal.cov",
    "seed",
    "workers",
    "output",
    "rejection.n",
    "rejection.threshold",
    "rejection.quantile",
    "rejection.pilot",
    "rejection.batch",
    "rejection.min_acceptance",
    "aea.chains",
    "aea.burnin",
    "aea.iters",
    "aea.aux_burnin",
    "aea.proposal",
    "aea.gamma",
    "aea.epsilon",
    "aea.rw_scale",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Is,
    Ais,
    Rejection,
    Aea,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "is" => Ok(Algorithm::Is),
            "ais" => Ok(Algorithm::Ais),
            "rejection" => Ok(Algorithm::Rejection),
            "aea" => Ok(Algorithm::Aea),
            other => Err(Error::Config(format!(
                "unknown algorithm `{}` (expected is, ais, rejection or aea)",
                other
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Is => "is",
            Algorithm::Ais => "ais",
            Algorithm::Rejection => "rejection",
            Algorithm::Aea => "aea",
        })
    }
}

/// Raw `key = value` entries with their line numbers.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigLine {
                line: lineno,
                msg: format!("expected `key = value`, found `{}`", content),
            })?;
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::ConfigLine {
                    line: lineno,
                    msg: format!("unknown key `{}`", key),
                });
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(Error::ConfigLine {
                    line: lineno,
                    msg: format!("`{}` already set on line {}", key, first),
                });
            }
            entries.insert(key, (lineno, value.trim().to_string()));
        }
        Ok(RawConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Set or replace a value, as from a command-line override.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (_, v))| (k.as_str(), v.as_str()))
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        let msg = format!("`{}`: {}", key, msg.into());
        match self.line(key) {
            0 => Error::Config(msg),
            line => Error::ConfigLine { line, msg },
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| self.err(key, format!("`{}`: {}", v, e))))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<T>()
                            .map_err(|e| self.err(key, format!("`{}`: {}", x.trim(), e)))
                    })
                    .collect()
            })
            .transpose()
    }

    fn matrix(&self, key: &str) -> Result<Option<DMatrix<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let rows: Vec<Vec<f64>> = v
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|e| self.err(key, format!("`{}`: {}", x.trim(), e)))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(self.err(key, "matrix must be square"));
        }
        Ok(Some(DMatrix::from_fn(d, d, |i, j| rows[i][j])))
    }
}

/// Settings for rejection ABC.
#[derive(Debug, Clone)]
pub struct RejectionSettings {
    pub n_accept: usize,
    pub threshold: Threshold,
    pub pilot_size: usize,
    pub batch_size: usize,
    pub min_acceptance: f64,
}

/// A validated run configuration with defaults resolved and the network
/// loaded.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub edges_file: PathBuf,
    pub attributes_file: Option<PathBuf>,
    pub graph: Graph,
    pub model: ModelSpec,
    pub summary: SummarySpec,
    pub prior: Prior,
    pub algorithm: Algorithm,
    pub rounds: Vec<RoundSpec>,
    pub burn_in: u64,
    pub sampler: ProposalKind,
    pub kernel: KernelMode,
    pub retain_previous: bool,
    pub initial: InitialProposal,
    pub seed: u64,
    pub workers: usize,
    pub output: PathBuf,
    pub rejection: RejectionSettings,
    pub aea_chains: Option<usize>,
    pub aea_burnin: usize,
    pub aea_iters: usize,
    pub aea_aux_burnin: u64,
    pub aea_proposal: AeaProposal,
}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {}", path.display(), e)))?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::from_raw(RawConfig::parse(&text)?, base)
}

fn broadcast(values: Option<Vec<f64>>, default: f64, len: usize, key: &str, raw: &RawConfig) -> Result<Vec<f64>> {
    match values {
        None => Ok(vec![default; len]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; len]),
        Some(v) if v.len() == len => Ok(v),
        Some(v) => Err(raw.err(
            key,
            format!("{} values given for {} rounds", v.len(), len),
        )),
    }
}

impl RunConfig {
    /// Resolve a parsed configuration; relative paths are taken from `base`.
    pub fn from_raw(raw: RawConfig, base: &Path) -> Result<Self> {
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let edges_file = resolve(
            raw.get("edges_file")
                .ok_or_else(|| Error::Config("missing required key `edges_file`".into()))?,
        );
        let attributes_file = raw.get("attributes_file").map(resolve);
        let attributes = attributes_file
            .as_ref()
            .map(|p| {
                NodeAttributes::from_csv_path(p).map_err(|e| {
                    raw.err("attributes_file", format!("{}: {}", p.display(), e))
                })
            })
            .transpose()?;
        let directed = raw.parsed::<bool>("directed")?.unwrap_or(false);
        let nodes = raw.parsed::<usize>("nodes")?;
        let graph = Graph::read_edge_file(&edges_file, nodes, directed, attributes)
            .map_err(|e| raw.err("edges_file", format!("{}: {}", edges_file.display(), e)))?;

        let model = ModelSpec::parse(
            raw.get("model")
                .ok_or_else(|| Error::Config("missing required key `model`".into()))?,
        )
        .map_err(|e| raw.err("model", e.to_string()))?;
        let mut summary = match raw.get("summary") {
            Some(s) => SummarySpec::parse(s).map_err(|e| raw.err("summary", e.to_string()))?,
            None => SummarySpec::from_model(&model),
        };
        if let Some(ts) = raw.list::<Transform>("summary.transform")? {
            summary = if ts.len() == 1 {
                summary.with_transform_all(ts[0])
            } else {
                summary
                    .with_transforms(ts)
                    .map_err(|e| raw.err("summary.transform", e.to_string()))?
            };
        }
        // binding checks attribute columns and directedness
        for (key, terms) in [("model", model.terms()), ("summary", summary.terms())] {
            crate::model::BoundTerms::bind(terms, &graph).map_err(|e| raw.err(key, e.to_string()))?;
        }

        let p = model.dim();
        let prior_mean = raw.list::<f64>("prior.mean")?.unwrap_or_else(|| vec![0.0; p]);
        if prior_mean.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: prior_mean.len(),
            });
        }
        let prior_cov = match (raw.matrix("prior.cov")?, raw.list::<f64>("prior.var")?) {
            (Some(_), Some(_)) => {
                return Err(raw.err("prior.var", "give either prior.var or prior.cov, not both"))
            }
            (Some(m), None) => m,
            (None, v) => {
                let v = v.unwrap_or_else(|| vec![DEFAULT_PRIOR_VARIANCE]);
                let v = if v.len() == 1 { vec![v[0]; p] } else { v };
                if v.len() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        got: v.len(),
                    });
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v))
            }
        };
        if prior_cov.nrows() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: prior_cov.nrows(),
            });
        }
        let prior = Prior::Gaussian(GaussianPrior::new(prior_mean, prior_cov)?);

        let algorithm = raw.parsed::<Algorithm>("algorithm")?.unwrap_or(Algorithm::Ais);
        let sizes = raw.list::<usize>("rounds")?.unwrap_or_else(|| vec![8000, 24000]);
        if sizes.is_empty() {
            return Err(raw.err("rounds", "at least one round is required"));
        }
        let nu = broadcast(raw.list("nu")?, DEFAULT_NU, sizes.len(), "nu", &raw)?;
        let omega = broadcast(raw.list("omega")?, DEFAULT_OMEGA, sizes.len(), "omega", &raw)?;
        let rounds: Vec<RoundSpec> = sizes
            .iter()
            .zip(&nu)
            .zip(&omega)
            .map(|((&n, &nu), &omega)| RoundSpec { n, nu, omega })
            .collect();
        let burn_in = raw
            .parsed::<u64>("burnin")?
            .unwrap_or_else(|| default_burn_in(graph.node_count()));
        let sampler = raw.parsed::<ProposalKind>("sampler")?.unwrap_or_default();
        let kernel = match raw.get("kernel") {
            None | Some("gaussian") => KernelMode::Gaussian,
            Some("gaussian-quadratic") => KernelMode::GaussianQuadratic,
            Some("constant") => KernelMode::Constant,
            Some(other) => {
                return Err(raw.err("kernel", format!("`{}` (expected gaussian, gaussian-quadratic or constant)", other)))
            }
        };
        let retain_previous = raw.parsed::<bool>("retain_previous")?.unwrap_or(false);
        let initial = match (raw.list::<f64>("proposal.mean")?, raw.matrix("proposal.cov")?) {
            (None, None) => InitialProposal::Mple,
            (Some(mu), Some(sigma)) => {
                if mu.len() != p || sigma.nrows() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        got: if mu.len() != p { mu.len() } else { sigma.nrows() },
                    });
                }
                InitialProposal::Supplied { mu, sigma }
            }
            _ => {
                return Err(Error::Config(
                    "`proposal.mean` and `proposal.cov` must be given together".into(),
                ))
            }
        };
        let seed = raw.parsed::<u64>("seed")?.unwrap_or(1);
        let workers = raw.parsed::<usize>("workers")?.unwrap_or(0);
        let output = raw.get("output").map_or_else(|| PathBuf::from("out"), PathBuf::from);

        let threshold = match (
            raw.parsed::<f64>("rejection.threshold")?,
            raw.parsed::<f64>("rejection.quantile")?,
        ) {
            (Some(_), Some(_)) => {
                return Err(raw.err(
                    "rejection.quantile",
                    "give either a fixed threshold or a quantile, not both",
                ))
            }
            (Some(h), None) => Threshold::Fixed(h),
            (None, q) => Threshold::PilotQuantile(q.unwrap_or(0.01)),
        };
        let rejection = RejectionSettings {
            n_accept: raw.parsed("rejection.n")?.unwrap_or(1000),
            threshold,
            pilot_size: raw.parsed("rejection.pilot")?.unwrap_or(1000),
            batch_size: raw.parsed("rejection.batch")?.unwrap_or(1000),
            min_acceptance: raw.parsed("rejection.min_acceptance")?.unwrap_or(1e-4),
        };

        let aea_proposal = match raw.get("aea.proposal").unwrap_or("ads") {
            "ads" => AeaProposal::ParallelAds {
                gamma: raw.parsed("aea.gamma")?.unwrap_or(0.5),
                epsilon_scale: raw.parsed("aea.epsilon")?.unwrap_or(1e-3),
            },
            "rw" => AeaProposal::RandomWalk {
                scale: raw.parsed("aea.rw_scale")?.unwrap_or(1.0),
            },
            "prior" => AeaProposal::PriorIndependence,
            other => {
                return Err(raw.err("aea.proposal", format!("`{}` (expected ads, rw or prior)", other)))
            }
        };

        let cfg = RunConfig {
            edges_file,
            attributes_file,
            graph,
            model,
            summary,
            prior,
            algorithm,
            rounds,
            burn_in,
            sampler,
            kernel,
            retain_previous,
            initial,
            seed,
            workers,
            output,
            rejection,
            aea_chains: raw.parsed("aea.chains")?,
            aea_burnin: raw.parsed("aea.burnin")?.unwrap_or(500),
            aea_iters: raw.parsed("aea.iters")?.unwrap_or(1500),
            aea_aux_burnin: raw.parsed("aea.aux_burnin")?.unwrap_or(burn_in),
            aea_proposal,
            raw,
        };
        cfg.abc_config().validate(p)?;
        Ok(cfg)
    }

    pub fn abc_config(&self) -> AbcConfig {
        AbcConfig {
            rounds: self.rounds.clone(),
            burn_in: self.burn_in,
            seed: self.seed,
            workers: self.workers,
            initial: self.initial.clone(),
            kernel: self.kernel,
            retain_previous: self.retain_previous,
        }
    }

    pub fn rejection_config(&self) -> RejectionConfig {
        RejectionConfig {
            n_accept: self.rejection.n_accept,
            threshold: self.rejection.threshold,
            pilot_size: self.rejection.pilot_size,
            batch_size: self.rejection.batch_size,
            burn_in: self.burn_in,
            seed: self.seed,
            workers: self.workers,
            min_acceptance: self.rejection.min_acceptance,
        }
    }

    pub fn aea_config(&self) -> AeaConfig {
        AeaConfig {
            n_chains: self.aea_chains,
            burn_in: self.aea_burnin,
            main_iters: self.aea_iters,
            aux_burnin: self.aea_aux_burnin,
            proposal: self.aea_proposal.clone(),
            seed: self.seed,
            workers: self.workers,
            init_jitter: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_edges(dir: &Path) {
        let mut f = std::fs::File::create(dir.join("e.txt")).unwrap();
        writeln!(f, "1 2\n2 3\n3 4\n1 3").unwrap();
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_edges(dir.path());
        let raw = RawConfig::parse("edges_file = e.txt\nnodes = 6\nmodel = edges, triangle\n").unwrap();
        let cfg = RunConfig::from_raw(raw, dir.path()).unwrap();
        assert_eq!(cfg.burn_in, 72);
        assert_eq!(cfg.rounds.len(), 2);
        assert!(cfg.rounds.iter().all(|r| r.nu == 4.0 && r.omega == 4.0));
        assert_eq!(cfg.algorithm, Algorithm::Ais);
        assert_eq!(cfg.graph.edge_count(), 4);
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = RawConfig::parse("model = edges\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 2, .. }));
        let err = RawConfig::parse("model = edges\nmodel = triangle\n").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 2, .. }));
        let err = RawConfig::parse("just words\n").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 1, .. }));
    }

    #[test]
    fn missing_attribute_and_prior_dimension() {
        let dir = tempfile::tempdir().unwrap();
        write_edges(dir.path());
        let raw = RawConfig::parse("edges_file = e.txt\nmodel = edges, nodematch:grade\n").unwrap();
        let err = RunConfig::from_raw(raw, dir.path()).unwrap_err();
        assert!(err.to_string().contains("grade"), "{}", err);
        let raw = RawConfig::parse(
            "edges_file = e.txt\nmodel = edges, triangle, gwesp:0.5\nprior.mean = 0, 0\n",
        )
        .unwrap();
        let err = RunConfig::from_raw(raw, dir.path()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn schedules_must_match_rounds() {
        let dir = tempfile::tempdir().unwrap();
        write_edges(dir.path());
        let raw =
            RawConfig::parse("edges_file = e.txt\nmodel = edges\nrounds = 100, 200\nomega = 4, 2, 1\n")
                .unwrap();
        let err = RunConfig::from_raw(raw, dir.path()).unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 4, .. }));
    }
}
