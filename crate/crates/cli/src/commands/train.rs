use std::io::Write;

use logicforge_core::trainer::{checkpoint, evaluate, train, EpochMetrics};

use super::{fmt_acc, write_file, Project, CHECKPOINT_FILE, METRICS_FILE};
use crate::error::CliError;
use crate::{Outcome, TrainArgs};

pub fn run(args: &TrainArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let mut project = Project::open(&args.common)?;
    if let Some(s) = args.seed {
        project.config.network.seed = s;
        project.config.train.seed = s;
    }
    if let Some(e) = args.epochs {
        project.config.train.epochs = e;
    }
    let v = project.validated()?;
    let splits = project.load_splits(v.spec.input_features)?;
    project.create_out_dir()?;

    let every = (v.train.epochs / 10).max(1);
    let mut csv = format!("{}\n", EpochMetrics::CSV_HEADER);
    let mut log = Vec::new();
    let outcome = train(&v.spec, &splits.train, Some(&splits.val), &v.train, |m| {
        csv.push_str(&m.csv_line());
        csv.push('\n');
        if m.epoch % every == 0 || m.epoch + 1 == v.train.epochs {
            log.push(format!(
                "epoch {:>5}  lr {:.1e}  loss {:.4}  train {}  val {}",
                m.epoch,
                m.lr,
                m.train_loss,
                fmt_acc(m.train_acc),
                fmt_acc(m.val_acc)
            ));
        }
    })?;
    for line in &log {
        writeln!(out, "{line}")?;
    }

    let ckpt = project.output(CHECKPOINT_FILE);
    let metrics = project.output(METRICS_FILE);
    checkpoint::save(&outcome.model, &ckpt)?;
    write_file(&metrics, csv)?;

    let val = if splits.val.is_empty() {
        f64::NAN
    } else {
        evaluate(&outcome.model, &splits.val)?
    };
    let test = if splits.test.is_empty() {
        f64::NAN
    } else {
        evaluate(&outcome.model, &splits.test)?
    };
    writeln!(out, "validation accuracy: {}", fmt_acc(val))?;
    writeln!(out, "test accuracy: {}", fmt_acc(test))?;
    writeln!(out, "checkpoint: {}", ckpt.display())?;
    writeln!(out, "metrics: {}", metrics.display())?;
    Ok(Outcome::Success)
}
