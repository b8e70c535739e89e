use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use seq2seq_univ::construct::{
    assemble_modified_network, build_positional_pipeline, value_layer_count, ConstructionResult,
};
use seq2seq_univ::convert::anneal_network;
use seq2seq_univ::io::network_to_json;
use seq2seq_univ::scalar::format_rational;
use seq2seq_univ::target::PiecewiseConstantFn;
use seq2seq_univ::verify::conversion::{convergence_table, cube_test_set};
use seq2seq_univ::verify::dp::check_dp_bound;
use seq2seq_univ::verify::layer_count::{layer_count_table, value_bound};
use seq2seq_univ::verify::{run_suite, SuiteConfig, VerificationReport};
use seq2seq_univ::GridParams;

use crate::config::{Command, ModeArg, RunConfig};
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Construct => construct(cfg),
        Command::Verify => verify(cfg),
        Command::Convert => convert(cfg),
        Command::DpReport => dp_report(cfg),
        Command::LayerCount => layer_count(cfg),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = PathBuf::from(&cfg.out);
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_csv<R: AsRef<[u8]>>(&self, name: &str, header: &[&str], rows: &[Vec<R>]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        self.write(name, &bytes)
    }
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

/// Equivariant targets use `g_v ∘ g_c ∘ g_q`; others (or `--positional`) the
/// positional-encoding pipeline.
fn build(cfg: &RunConfig, grid: &GridParams, target: &PiecewiseConstantFn) -> Result<(ConstructionResult, &'static str), CliError> {
    if cfg.positional || !target.is_equivariant() {
        Ok((build_positional_pipeline(grid, target, cfg.limits())?, "positional"))
    } else {
        Ok((assemble_modified_network(grid, target, cfg.limits())?, "equivariant"))
    }
}

fn closed_forms(grid: &GridParams, pipeline: &str) -> [u128; 3] {
    let (q, d, n) = (grid.q() as u128, grid.d() as u128, grid.n() as u128);
    let c = grid.column_count() as u128;
    if pipeline == "positional" {
        [d * n * q, n * c + 1, n * grid.grid_size()]
    } else {
        [d * q + d, c + 1, value_layer_count(grid)]
    }
}

fn construct(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let target = cfg.load_target()?;
    let (built, pipeline) = build(cfg, &grid, &target)?;
    let out = Output::new(cfg)?;

    let network_json = match cfg.mode {
        ModeArg::Exact => network_to_json(&built.network)?,
        ModeArg::Float => network_to_json(&built.network.to_f64())?,
    };
    let net_path = out.write("network.json", format!("{network_json}\n").as_bytes())?;

    let counts = built.layer_counts;
    let closed = closed_forms(&grid, pipeline);
    let rows: Vec<Vec<String>> = [("quantizer", counts.quantizer), ("contextual", counts.contextual), ("value", counts.value)]
        .iter()
        .zip(closed)
        .map(|((name, measured), c)| vec![name.to_string(), measured.to_string(), c.to_string()])
        .collect();
    out.write_csv("layer-counts.csv", &["component", "measured", "closed_form"], &rows)?;
    out.write_json(
        "construct.json",
        &json!({
            "config": cfg,
            "pipeline": pipeline,
            "layer_counts": counts,
            "u": built.u.iter().map(format_rational).collect::<Vec<_>>(),
            "t_l": format_rational(&built.t_l),
            "t_r": format_rational(&built.t_r),
        }),
    )?;
    println!(
        "{pipeline} pipeline on {grid}: quantizer {}, contextual {}, value {} (total {})",
        counts.quantizer,
        counts.contextual,
        counts.value,
        counts.total()
    );
    println!("wrote {}", show(&net_path));
    Ok(())
}

fn report_rows(reports: &[VerificationReport]) -> Vec<Vec<String>> {
    reports
        .iter()
        .map(|r| {
            let metric = r
                .headline_metric()
                .map(|(k, v)| match v {
                    serde_json::Value::String(s) => format!("{k}={s}"),
                    other => format!("{k}={other}"),
                })
                .unwrap_or_default();
            vec![
                r.property.clone(),
                seq2seq_univ::verify::report::scope_string(&r.scope),
                r.passed.to_string(),
                metric,
            ]
        })
        .collect()
}

fn emit_reports(cfg: &RunConfig, stem: &str, reports: &[VerificationReport]) -> Result<(), CliError> {
    let out = Output::new(cfg)?;
    let json_path = out.write_json(&format!("{stem}.json"), &json!({ "config": cfg, "reports": reports }))?;
    out.write_csv(&format!("{stem}.csv"), &["property", "scope", "pass", "metric"], &report_rows(reports))?;
    for r in reports {
        println!("{}", r.summary());
    }
    println!("wrote {}", show(&json_path));
    let failed: Vec<&str> = reports.iter().filter(|r| !r.as_expected()).map(|r| r.property.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}

fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let suite_cfg = SuiteConfig {
        grid: cfg.grid()?,
        target: cfg.load_target()?,
        limits: cfg.limits(),
        seed: cfg.seed,
        dp_samples: cfg.samples,
        schedule: cfg.schedule()?,
    };
    let reports = run_suite(cfg.suite()?, &suite_cfg)?;
    emit_reports(cfg, "report", &reports)
}

fn convert(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let target = cfg.load_target()?;
    let (built, _) = build(cfg, &grid, &target)?;
    let schedule = cfg.schedule()?;
    let inputs = cube_test_set(&grid, cfg.limits().enumeration_cap)?;
    let rows = convergence_table(&built.network, &schedule, &inputs)?;
    let last = schedule.last().expect("validated non-empty");
    let annealed = anneal_network(&built.network, last)?;

    let out = Output::new(cfg)?;
    let net_path = out.write("annealed-network.json", format!("{}\n", network_to_json(&annealed)?).as_bytes())?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.lambda.to_string(), r.epsilon.clone(), r.sup_error.to_string()])
        .collect();
    out.write_csv("convergence.csv", &["lambda", "epsilon", "sup_error"], &csv_rows)?;
    out.write_json(
        "convert.json",
        &json!({ "config": cfg, "test_points": inputs.len(), "convergence": rows }),
    )?;
    for r in &rows {
        println!("lambda {:>8} epsilon {:>8} sup-error {:e}", r.lambda, r.epsilon, r.sup_error);
    }
    println!("wrote {}", show(&net_path));
    Ok(())
}

fn dp_report(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let target = cfg.load_target()?;
    let (built, _) = build(cfg, &grid, &target)?;
    let cap = cfg.limits().enumeration_cap;
    let reports = cfg
        .p
        .iter()
        .map(|&p| check_dp_bound(&grid, &target, &built.network, p, cfg.seed, cfg.samples, cap))
        .collect::<seq2seq_univ::Result<Vec<_>>>()?;
    emit_reports(cfg, "dp-report", &reports)
}

fn layer_count(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let rows = layer_count_table(&grid, cfg.limits())?;
    let out = Output::new(cfg)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                r.component.to_string(),
                r.measured.to_string(),
                r.closed_form.to_string(),
                r.bound.map(|b| b.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    out.write_csv("layer-count.csv", &["variant", "component", "measured", "closed_form", "bound"], &csv_rows)?;
    let path = out.write_json(
        "layer-count.json",
        &json!({ "config": cfg, "value_bound": value_bound(&grid), "rows": rows }),
    )?;
    for r in &rows {
        let bound = r.bound.map(|b| format!(" <= {b}")).unwrap_or_default();
        println!("{:<11} {:<10} {:>6} closed form {}{bound}", r.variant, r.component, r.measured, r.closed_form);
    }
    println!("wrote {}", show(&path));
    match rows.iter().find(|r| !r.holds()) {
        Some(r) => Err(CliError::Failed(format!("{} {} count {} != {}", r.variant, r.component, r.measured, r.closed_form))),
        None => Ok(()),
    }
}
