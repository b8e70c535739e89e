use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use seq2seq_univ::construct::{Limits, DEFAULT_LAYER_BUDGET};
use seq2seq_univ::convert::ConversionParams;
use seq2seq_univ::grid::GridParams;
use seq2seq_univ::scalar::{format_rational, parse_rational};
use seq2seq_univ::target::{constant_target, identity_target, random_target, PiecewiseConstantFn};
use seq2seq_univ::verify::{Suite, DEFAULT_SEED};

use crate::CliError;

pub const BUDGET_ENV: &str = "SEQ2SEQ_UNIV_BUDGET";
pub const DEFAULT_OUT: &str = "seq2seq-univ-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Construct,
    Verify,
    Convert,
    DpReport,
    LayerCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Random,
    Identity,
    Constant,
    File,
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML (or `.json`) config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid step as a fraction "1/q"
    #[arg(long)]
    pub delta: Option<String>,
    /// Embedding dimension
    #[arg(long)]
    pub d: Option<usize>,
    /// Sequence length
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub target: Option<TargetKind>,
    /// Target JSON file, implies `--target file`
    #[arg(long)]
    pub target_file: Option<PathBuf>,
    /// Entry value for `--target constant`, e.g. "5/4"
    #[arg(long)]
    pub value: Option<String>,
    /// Draw a target that is not permutation equivariant (random targets only)
    #[arg(long)]
    pub non_equivariant: bool,
    /// Seed for random targets and all verifier sampling
    #[arg(long)]
    pub seed: Option<u64>,
    /// Softmax temperatures, comma separated
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// ReLU band widths, comma separated, e.g. "1/10,1/100" or "1e-3"
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<String>>,
    /// Cap on the number of sublayers a construction may emit
    #[arg(long)]
    pub budget: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scalar type of the serialized network
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Verification suite
    #[arg(long)]
    pub suite: Option<String>,
    /// Exponents for dp-report, comma separated
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<u32>>,
    /// Monte Carlo samples for d_p estimates
    #[arg(long)]
    pub samples: Option<usize>,
    /// Build the positional-encoding pipeline even for equivariant targets
    #[arg(long)]
    pub positional: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    kind: Option<TargetKind>,
    path: Option<PathBuf>,
    value: Option<String>,
    equivariant: Option<bool>,
}

/// Config file contents; every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    delta: Option<String>,
    d: Option<usize>,
    n: Option<usize>,
    target: Option<TargetFile>,
    seed: Option<u64>,
    lambdas: Option<Vec<f64>>,
    epsilons: Option<Vec<String>>,
    budget: Option<usize>,
    out: Option<PathBuf>,
    mode: Option<ModeArg>,
    suite: Option<String>,
    p: Option<Vec<u32>>,
    samples: Option<usize>,
    positional: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSpec {
    pub kind: TargetKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub equivariant: bool,
}

/// Fully resolved run configuration, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub delta: String,
    pub d: usize,
    pub n: usize,
    pub target: TargetSpec,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub epsilons: Vec<String>,
    pub budget: usize,
    pub out: String,
    pub mode: ModeArg,
    pub suite: String,
    pub p: Vec<u32>,
    pub samples: usize,
    pub positional: bool,
}

fn read_file_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn parse_budget_env(raw: Option<String>) -> Result<Option<usize>, CliError> {
    raw.map(|s| {
        s.trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{BUDGET_ENV} must be a non-negative integer, got {s:?}")))
    })
    .transpose()
}

impl RunConfig {
    /// Precedence: command-line flag, then `SEQ2SEQ_UNIV_BUDGET` (budget only),
    /// then the config file, then built-in defaults.
    pub fn resolve(command: Command, args: RunArgs, budget_env: Option<String>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        let ft = file.target.unwrap_or_default();
        let missing = |name: &str| CliError::Config(format!("missing required setting `{name}`"));

        let flag_kind = args.target.or(args.target_file.as_ref().map(|_| TargetKind::File));
        let path = args.target_file.or(ft.path);
        let kind = flag_kind
            .or(ft.kind)
            .unwrap_or(if path.is_some() { TargetKind::File } else { TargetKind::Random });
        if kind == TargetKind::File && path.is_none() {
            return Err(CliError::Config("`--target file` needs `--target-file PATH`".into()));
        }
        let value = args.value.or(ft.value);
        if kind == TargetKind::Constant && value.is_none() {
            return Err(CliError::Config("`--target constant` needs `--value`".into()));
        }
        let equivariant = if args.non_equivariant { false } else { ft.equivariant.unwrap_or(true) };

        let schedule = ConversionParams::default_schedule();
        let cfg = Self {
            command,
            delta: args.delta.or(file.delta).ok_or_else(|| missing("delta"))?,
            d: args.d.or(file.d).ok_or_else(|| missing("d"))?,
            n: args.n.or(file.n).ok_or_else(|| missing("n"))?,
            target: TargetSpec {
                kind,
                path: if kind == TargetKind::File { path.map(|p| p.display().to_string()) } else { None },
                value: if kind == TargetKind::Constant { value } else { None },
                equivariant: kind != TargetKind::Random || equivariant,
            },
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            lambdas: args
                .lambdas
                .or(file.lambdas)
                .unwrap_or_else(|| schedule.iter().map(|s| s.lambda).collect()),
            epsilons: args
                .epsilons
                .or(file.epsilons)
                .unwrap_or_else(|| schedule.iter().map(|s| format_rational(&s.epsilon)).collect()),
            budget: match args.budget {
                Some(b) => b,
                None => parse_budget_env(budget_env)?
                    .or(file.budget)
                    .unwrap_or(DEFAULT_LAYER_BUDGET),
            },
            out: args
                .out
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
                .display()
                .to_string(),
            mode: args.mode.or(file.mode).unwrap_or(ModeArg::Exact),
            suite: args.suite.or(file.suite).unwrap_or_else(|| "all".into()),
            p: args.p.or(file.p).unwrap_or_else(|| vec![1, 2]),
            samples: args.samples.or(file.samples).unwrap_or(seq2seq_univ::verify::dp::DEFAULT_SAMPLES),
            positional: args.positional || file.positional.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.suite()?;
        let schedule = self.schedule()?;
        if self.command == Command::Convert && schedule.is_empty() {
            return Err(CliError::Config("conversion schedule is empty".into()));
        }
        if self.p.contains(&0) {
            return Err(CliError::Config("p must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(CliError::Config("samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridParams, CliError> {
        let literal = self
            .delta
            .strip_prefix("1/")
            .is_some_and(|q| !q.is_empty() && q.bytes().all(|b| b.is_ascii_digit()));
        if !literal {
            return Err(CliError::Config(format!("delta must be written as \"1/q\", got {:?}", self.delta)));
        }
        GridParams::parse(&self.delta, self.d, self.n).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn suite(&self) -> Result<Suite, CliError> {
        self.suite.parse().map_err(|e: seq2seq_univ::Error| CliError::Config(e.to_string()))
    }

    pub fn limits(&self) -> Limits {
        Limits {
            layer_budget: self.budget,
            ..Limits::default()
        }
    }

    /// `λ` and `ε` paired in order.
    pub fn schedule(&self) -> Result<Vec<ConversionParams>, CliError> {
        if self.lambdas.len() != self.epsilons.len() {
            return Err(CliError::Config(format!(
                "{} lambdas but {} epsilons",
                self.lambdas.len(),
                self.epsilons.len()
            )));
        }
        self.lambdas
            .iter()
            .zip(&self.epsilons)
            .map(|(&l, e)| ConversionParams::parse(l, e).map_err(|err| CliError::Config(err.to_string())))
            .collect()
    }

    pub fn load_target(&self) -> Result<PiecewiseConstantFn, CliError> {
        let grid = self.grid()?;
        let target = match self.target.kind {
            TargetKind::Random => random_target(grid, self.target.equivariant, self.seed),
            TargetKind::Identity => identity_target(grid),
            TargetKind::Constant => {
                let raw = self.target.value.as_deref().unwrap_or_default();
                let v = parse_rational(raw).map_err(|e| CliError::Config(e.to_string()))?;
                constant_target(grid, v)
            }
            TargetKind::File => {
                let path = self.target.path.as_deref().unwrap_or_default();
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read target {path}: {e}")))?;
                let t = PiecewiseConstantFn::from_json(&text).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
                if *t.grid() != grid {
                    return Err(CliError::Config(format!(
                        "target file grid ({}) differs from the configured grid ({grid})",
                        t.grid()
                    )));
                }
                Ok(t)
            }
        };
        target.map_err(CliError::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(delta: &str, d: usize, n: usize) -> RunArgs {
        RunArgs {
            delta: Some(delta.into()),
            d: Some(d),
            n: Some(n),
            ..RunArgs::default()
        }
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::resolve(Command::Construct, args("1/2", 1, 2), None).unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.target.kind, TargetKind::Random);
        assert_eq!(cfg.lambdas, vec![10.0, 100.0, 1000.0, 10000.0]);
        assert_eq!(cfg.epsilons, vec!["1/10", "1/100", "1/1000", "1/10000"]);
        assert_eq!(cfg.budget, DEFAULT_LAYER_BUDGET);
    }

    #[test]
    fn budget_precedence() {
        let env = Some("7".to_string());
        let cfg = RunConfig::resolve(Command::Construct, args("1/2", 1, 2), env.clone()).unwrap();
        assert_eq!(cfg.budget, 7);
        let mut a = args("1/2", 1, 2);
        a.budget = Some(9);
        assert_eq!(RunConfig::resolve(Command::Construct, a, env).unwrap().budget, 9);
        let bad = RunConfig::resolve(Command::Construct, args("1/2", 1, 2), Some("lots".into()));
        assert!(matches!(bad, Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_bad_settings() {
        for delta in ["0.5", "2/3", "1/1"] {
            assert!(matches!(
                RunConfig::resolve(Command::Construct, args(delta, 1, 2), None),
                Err(CliError::Config(_))
            ));
        }
        let mut a = args("1/2", 1, 2);
        a.lambdas = Some(vec![10.0]);
        assert!(RunConfig::resolve(Command::Convert, a, None).is_err());
        let mut a = args("1/2", 1, 2);
        a.lambdas = Some(vec![]);
        a.epsilons = Some(vec![]);
        assert!(RunConfig::resolve(Command::Convert, a.clone(), None).is_err());
        assert!(RunConfig::resolve(Command::Construct, a, None).is_ok());
        let mut a = args("1/2", 1, 2);
        a.suite = Some("everything".into());
        assert!(RunConfig::resolve(Command::Verify, a, None).is_err());
    }

    #[test]
    fn toml_file_is_read_and_flags_win() {
        let dir = std::env::temp_dir().join(format!("s2su-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(
            &path,
            "delta = \"1/3\"\nd = 1\nn = 3\nseed = 5\n[target]\nkind = \"constant\"\nvalue = \"1/2\"\n",
        )
        .unwrap();
        let a = RunArgs {
            config: Some(path.clone()),
            seed: Some(6),
            ..RunArgs::default()
        };
        let cfg = RunConfig::resolve(Command::Verify, a, None).unwrap();
        assert_eq!((cfg.delta.as_str(), cfg.d, cfg.n, cfg.seed), ("1/3", 1, 3, 6));
        assert_eq!(cfg.target.kind, TargetKind::Constant);
        assert!(cfg.load_target().unwrap().entries().all(|(_, a)| a.data().iter().all(|v| *v == seq2seq_univ::scalar::rat(1, 2))));

        std::fs::write(&path, "delta = \"1/3\"\nwidth = 4\n").unwrap();
        let a = RunArgs {
            config: Some(path),
            ..RunArgs::default()
        };
        assert!(matches!(RunConfig::resolve(Command::Verify, a, None), Err(CliError::Config(_))));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
