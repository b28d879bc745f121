use std::io::Write;

use logicforge_core::trainer::{evaluate, train, Splits, TrainConfig};
use logicforge_core::{model_lut_cost, parameter_count, validate_spec, NetworkSpec};
use rayon::prelude::*;

use super::{Project, EXPLORE_FILE};
use crate::config::NetworkConfig;
use crate::error::CliError;
use crate::{ExploreArgs, Outcome};

pub const CSV_HEADER: [&str; 8] = [
    "hidden",
    "beta",
    "gamma",
    "x_per_layer",
    "max_x",
    "model_luts",
    "params",
    "accuracy",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub hidden: Vec<usize>,
    pub beta: u32,
    pub gamma: usize,
    pub spec: NetworkSpec,
    pub x_per_layer: Vec<u32>,
    pub model_luts: u64,
    pub params: usize,
    pub accuracy: Option<f64>,
}

impl Candidate {
    fn record(&self) -> Vec<String> {
        let join = |v: &[String]| v.join("-");
        vec![
            join(
                &self
                    .hidden
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>(),
            ),
            self.beta.to_string(),
            self.gamma.to_string(),
            join(
                &self
                    .x_per_layer
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>(),
            ),
            self.x_per_layer
                .iter()
                .max()
                .copied()
                .unwrap_or(0)
                .to_string(),
            self.model_luts.to_string(),
            self.params.to_string(),
            self.accuracy.map_or(String::new(), |a| format!("{a:.6}")),
        ]
    }
}

/// Grid points that pass validation under `cap` and fit `budget`, in grid
/// order (hidden, then beta, then gamma).
pub fn candidates(
    base: &NetworkConfig,
    hidden: &[Vec<usize>],
    betas: &[u32],
    gammas: &[usize],
    cap: u32,
    budget: Option<u64>,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    for h in hidden {
        for &beta in betas {
            for &gamma in gammas {
                let net = NetworkConfig {
                    hidden: h.clone(),
                    beta,
                    gamma,
                    ..base.clone()
                };
                let spec = net.spec();
                if !validate_spec(&spec, cap).is_empty() {
                    continue;
                }
                let Ok(model_luts) = model_lut_cost(&spec) else {
                    continue;
                };
                if budget.is_some_and(|b| model_luts > b) {
                    continue;
                }
                out.push(Candidate {
                    hidden: h.clone(),
                    beta,
                    gamma,
                    x_per_layer: spec.layers.iter().map(|l| l.fanin_bits()).collect(),
                    model_luts,
                    params: parameter_count(&spec),
                    spec,
                    accuracy: None,
                });
            }
        }
    }
    out
}

fn accuracy(c: &Candidate, splits: &Splits, cfg: &TrainConfig) -> Result<f64, CliError> {
    let model = train(&c.spec, &splits.train, None, cfg, |_| {})?.model;
    let eval_set = if splits.val.is_empty() {
        &splits.train
    } else {
        &splits.val
    };
    Ok(evaluate(&model, eval_set)?)
}

pub fn to_csv(rows: &[Candidate]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn run(
    args: &ExploreArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let mut project = Project::open(&args.common)?;
    if let Some(s) = args.seed {
        project.config.network.seed = s;
        project.config.train.seed = s;
    }
    let v = project.validated()?;
    let cfg = &project.config;
    let ex = cfg
        .explore
        .as_ref()
        .ok_or_else(|| CliError::Config("explore: this command needs an explore block".into()))?;
    let hidden = if ex.hidden.is_empty() {
        vec![cfg.network.hidden.clone()]
    } else {
        ex.hidden.clone()
    };
    let budget = args.budget.or(ex.lut_budget);
    let mut rows = candidates(
        &cfg.network,
        &hidden,
        &ex.beta,
        &ex.gamma,
        cfg.fanin_cap,
        budget,
    );
    if rows.is_empty() {
        writeln!(
            err,
            "warning: no grid point passes the fan-in cap{}",
            if budget.is_some() {
                " and LUT budget"
            } else {
                ""
            }
        )?;
    }

    if ex.train || args.epochs.is_some() {
        let splits = project.load_splits(cfg.network.input_features)?;
        let tcfg = TrainConfig {
            epochs: args.epochs.unwrap_or(ex.epochs),
            ..v.train
        };
        tcfg.validate()?;
        let accs: Vec<Result<f64, CliError>> = if ex.parallel || args.parallel {
            rows.par_iter()
                .map(|c| accuracy(c, &splits, &tcfg))
                .collect()
        } else {
            rows.iter().map(|c| accuracy(c, &splits, &tcfg)).collect()
        };
        for (r, a) in rows.iter_mut().zip(accs) {
            r.accuracy = Some(a?);
        }
    }

    let text = to_csv(&rows)?;
    project.create_out_dir()?;
    super::write_file(&project.output(EXPLORE_FILE), &text)?;
    out.write_all(text.as_bytes())?;
    Ok(Outcome::Success)
}
