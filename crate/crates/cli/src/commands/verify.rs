use std::io::Write;

use logicforge_core::netlist::dump;
use logicforge_core::simulator::DEFAULT_EXHAUSTIVE_BOUND_BITS;
use logicforge_core::trainer::checkpoint;
use logicforge_core::{check_equivalence, CheckMode};

use super::{Project, CHECKPOINT_FILE, NETLIST_FILE};
use crate::error::CliError;
use crate::{Outcome, VerifyArgs};

pub const DEFAULT_SAMPLES: usize = 10_000;

pub fn run(args: &VerifyArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let project = Project::open(&args.common)?;
    let ckpt = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| project.output(CHECKPOINT_FILE));
    let netlist = args
        .netlist
        .clone()
        .unwrap_or_else(|| project.output(NETLIST_FILE));
    let model = checkpoint::load(&ckpt)?;
    let net = dump::load(&netlist)?;
    let mode = if args.exhaustive {
        CheckMode::Exhaustive {
            bound_bits: args.bound_bits.unwrap_or(DEFAULT_EXHAUSTIVE_BOUND_BITS),
        }
    } else {
        CheckMode::Random {
            samples: args.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: args.seed.unwrap_or(0),
        }
    };
    let report = check_equivalence(&model, &net, mode)?;
    writeln!(out, "{report}")?;
    Ok(if report.passed() {
        Outcome::Success
    } else {
        Outcome::Failure
    })
}
