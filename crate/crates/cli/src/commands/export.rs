use std::fmt::Write as _;
use std::io::Write;

use logicforge_core::netlist::{dump, verilog};
use logicforge_core::simulator::{emit_testbench, pipeline_report, random_inputs};
use logicforge_core::trainer::checkpoint;
use logicforge_core::{build_netlist, insert_registers, prune_dead, RegisterPolicy};

use super::{
    write_file, Project, CHECKPOINT_FILE, NETLIST_FILE, SUMMARY_FILE, TESTBENCH_FILE, VERILOG_DIR,
    VERILOG_FILE,
};
use crate::error::CliError;
use crate::{ExportArgs, Outcome, RegistersArg};

pub fn run(args: &ExportArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let project = Project::open(&args.common)?;
    let cfg = &project.config;
    let ckpt = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| project.output(CHECKPOINT_FILE));
    let model = checkpoint::load(&ckpt)?;

    let full = build_netlist(&model, cfg.fanin_cap)?;
    let (pre_hbbs, pre_luts) = (full.hbb_count(), full.lut_cost()?);
    let prune = cfg.export.prune && !args.no_prune;
    let net = if prune { prune_dead(full) } else { full };
    let policy = match args.registers {
        Some(RegistersArg::Default) => RegisterPolicy::Default,
        Some(RegistersArg::None) => RegisterPolicy::None,
        None => cfg.export.registers.policy(),
    };
    let net = insert_registers(net, &policy);
    net.validate()?;
    project.create_out_dir()?;

    if cfg.export.split_files || args.split_files {
        for (name, text) in verilog::emit_verilog_files(&net) {
            write_file(&project.output(VERILOG_DIR).join(name), text)?;
        }
    } else {
        write_file(&project.output(VERILOG_FILE), verilog::emit_verilog(&net))?;
    }
    dump::save(&net, &project.output(NETLIST_FILE))?;
    if cfg.export.testbench_vectors > 0 {
        let inputs = random_inputs(
            net.input_features,
            net.input_bits,
            cfg.export.testbench_vectors,
            args.seed.unwrap_or(0),
        );
        write_file(
            &project.output(TESTBENCH_FILE),
            emit_testbench(&net, &inputs)?,
        )?;
    }

    let mut s = String::new();
    writeln!(s, "HBBs before prune: {pre_hbbs}").unwrap();
    writeln!(s, "HBBs after prune: {}", net.hbb_count()).unwrap();
    writeln!(s, "model LUTs before prune: {pre_luts}").unwrap();
    writeln!(s, "model LUTs after prune: {}", net.lut_cost()?).unwrap();
    writeln!(s, "prune: {}", if prune { "on" } else { "off" }).unwrap();
    writeln!(s, "register stages: {:?}", net.register_stages).unwrap();
    if let Some(clock) = cfg.export.clock_ns {
        writeln!(s, "{}", pipeline_report(&net, clock)).unwrap();
    }
    write_file(&project.output(SUMMARY_FILE), &s)?;
    out.write_all(s.as_bytes())?;
    writeln!(out, "netlist: {}", project.output(NETLIST_FILE).display())?;
    Ok(Outcome::Success)
}
