//! Executable property suites for the constructions.

pub mod contextual;
pub mod conversion;
pub mod dp;
pub mod end_to_end;
pub mod equivariance;
pub mod layer_count;
pub mod report;
pub mod shift_oracle;

use std::fmt;
use std::str::FromStr;

use crate::construct::{assemble_modified_network, build_contextual_mapper, Limits};
use crate::convert::ConversionParams;
use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::layers::Normalizer;
use crate::target::PiecewiseConstantFn;

pub use report::{Counterexample, VerificationReport, DEFAULT_SEED};

/// Random inputs per equivariance check.
pub const EQUIVARIANCE_TRIALS: usize = 20;

/// Sequence length used for the stand-alone sublayer equivariance checks.
pub const SUBLAYER_TOKENS: usize = 4;

/// Independent weight draws in the BProj distinctness check, and the rate it must reach.
pub const DISTINCTNESS_SEEDS: usize = 100;
pub const DISTINCTNESS_MIN_RATE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Contextual,
    ShiftOracle,
    EndToEnd,
    Equivariance,
    Dp,
    Conversion,
    LayerCount,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] = [
        Suite::Contextual,
        Suite::ShiftOracle,
        Suite::EndToEnd,
        Suite::Equivariance,
        Suite::Dp,
        Suite::Conversion,
        Suite::LayerCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Contextual => "contextual",
            Suite::ShiftOracle => "shift-oracle",
            Suite::EndToEnd => "end-to-end",
            Suite::Equivariance => "equivariance",
            Suite::Dp => "dp",
            Suite::Conversion => "conversion",
            Suite::LayerCount => "layer-count",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub grid: GridParams,
    pub target: PiecewiseConstantFn,
    pub limits: Limits,
    pub seed: u64,
    pub dp_samples: usize,
    pub schedule: Vec<ConversionParams>,
}

impl SuiteConfig {
    pub fn new(grid: GridParams, target: PiecewiseConstantFn) -> Self {
        Self {
            grid,
            target,
            limits: Limits::default(),
            seed: DEFAULT_SEED,
            dp_samples: dp::DEFAULT_SAMPLES,
            schedule: ConversionParams::default_schedule(),
        }
    }
}

fn equivariance_suite(cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    use equivariance::*;
    let (d, seed) = (cfg.grid.d(), cfg.seed);
    let n = SUBLAYER_TOKENS;
    let t = EQUIVARIANCE_TRIALS;
    let mut out = vec![
        check_equivariance("attention-hardmax", &random_attention(d, 1, 2, Normalizer::Hardmax, seed), d, n, t, seed)?,
        check_equivariance("attention-average", &random_attention(d, 1, 1, Normalizer::Average, seed), d, n, t, seed)?,
        check_equivariance("feed-forward-relu", &random_feedforward(d, 3, false, seed), d, n, t, seed)?,
        check_equivariance("feed-forward-phi", &random_feedforward(d, 1, true, seed), d, n, t, seed)?,
    ];
    if cfg.target.is_equivariant() {
        let built = assemble_modified_network(&cfg.grid, &cfg.target, cfg.limits)?;
        out.push(
            check_equivariance("constructed-network", &built.network, d, cfg.grid.n(), t, seed)?
                .with_grid(&cfg.grid),
        );
    }
    out.push(check_equivariance("bproj", &random_bproj(d, n, seed), d, n, t, seed)?.negative_control());
    out.push(check_equivariance("sepconv", &random_sepconv(d, 3, seed), d, n, t, seed)?.negative_control());
    out.push(check_bproj_distinctness(d.max(2), n, DISTINCTNESS_SEEDS, seed, DISTINCTNESS_MIN_RATE));
    Ok(out)
}

/// Runs one suite (or all of them) and returns its reports in a fixed order.
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<Vec<VerificationReport>> {
    let (grid, cap, seed) = (&cfg.grid, cfg.limits.enumeration_cap, cfg.seed);
    match suite {
        Suite::All => {
            let mut out = Vec::new();
            for s in Suite::EACH {
                out.extend(run_suite(s, cfg)?);
            }
            Ok(out)
        }
        Suite::Contextual => {
            let mapper = build_contextual_mapper(grid)?;
            Ok(vec![contextual::check_contextual_properties(grid, &mapper, cap, seed)?])
        }
        Suite::ShiftOracle => {
            let mapper = build_contextual_mapper(grid)?;
            Ok(vec![
                shift_oracle::check_oracle_equivalence(grid, &mapper, cap, seed)?,
                shift_oracle::check_injectivity(grid, &mapper, cap)?,
            ])
        }
        Suite::EndToEnd => {
            let built = assemble_modified_network(grid, &cfg.target, cfg.limits)?;
            Ok(vec![end_to_end::check_end_to_end(grid, &cfg.target, &built.network, cap)?])
        }
        Suite::Equivariance => equivariance_suite(cfg),
        Suite::Dp => {
            let built = assemble_modified_network(grid, &cfg.target, cfg.limits)?;
            [1, 2]
                .into_iter()
                .map(|p| dp::check_dp_bound(grid, &cfg.target, &built.network, p, seed, cfg.dp_samples, cap))
                .collect()
        }
        Suite::Conversion => {
            let built = assemble_modified_network(grid, &cfg.target, cfg.limits)?;
            let eps = cfg
                .schedule
                .last()
                .map(|p| p.epsilon.clone())
                .ok_or_else(|| Error::InvalidParameter("conversion schedule is empty".into()))?;
            Ok(vec![
                conversion::check_annealing(grid, &built.network, &cfg.schedule, cap)?,
                conversion::check_relu4_off_band(&built.network, &eps, conversion::RELU4_SAMPLES, seed)?,
            ])
        }
        Suite::LayerCount => Ok(vec![layer_count::check_layer_counts(grid, cfg.limits)?]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::random_target;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn every_suite_is_as_expected_on_small_grid() {
        let grid = GridParams::new(2, 1, 2).unwrap();
        let mut cfg = SuiteConfig::new(grid, random_target(grid, true, 7).unwrap());
        cfg.dp_samples = 2000;
        let reports = run_suite(Suite::All, &cfg).unwrap();
        for r in &reports {
            assert!(r.as_expected(), "{}", r.summary());
            if !r.passed {
                assert!(r.counterexample.is_some());
            }
        }
        assert!(reports.iter().any(|r| r.expect_failure));
    }
}
