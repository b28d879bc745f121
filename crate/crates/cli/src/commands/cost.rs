use std::io::Write;

use logicforge_core::{lut_cost, parameter_count, NetworkSpec};

use super::Project;
use crate::error::CliError;
use crate::{CostArgs, Outcome};

pub struct LayerCost {
    pub x: u32,
    pub y: u32,
    pub neurons: usize,
    pub per_neuron: u64,
    pub subtotal: u64,
}

pub fn layer_costs(spec: &NetworkSpec) -> Result<Vec<LayerCost>, CliError> {
    spec.layers
        .iter()
        .map(|l| {
            let x = l.fanin_bits();
            let per_neuron = lut_cost(x, l.out_bits)?;
            Ok(LayerCost {
                x,
                y: l.out_bits,
                neurons: l.out_width,
                per_neuron,
                subtotal: per_neuron * l.out_width as u64,
            })
        })
        .collect()
}

pub fn report(spec: &NetworkSpec, out: &mut dyn Write) -> Result<u64, CliError> {
    let rows = layer_costs(spec)?;
    writeln!(
        out,
        "{:>5} {:>8} {:>6} {:>3} {:>3} {:>12} {:>12}",
        "layer", "neurons", "fanin", "X", "Y", "LUTs/neuron", "subtotal"
    )?;
    for (k, (r, l)) in rows.iter().zip(&spec.layers).enumerate() {
        writeln!(
            out,
            "{k:>5} {:>8} {:>6} {:>3} {:>3} {:>12} {:>12}",
            r.neurons, l.fanin, r.x, r.y, r.per_neuron, r.subtotal
        )?;
    }
    let total: u64 = rows.iter().map(|r| r.subtotal).sum();
    writeln!(out, "total model LUTs: {total}")?;
    writeln!(out, "parameters: {}", parameter_count(spec))?;
    Ok(total)
}

pub fn run(args: &CostArgs, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let project = Project::open(&args.common)?;
    let v = project.validated()?;
    let total = report(&v.spec, out)?;
    if let Some(b) = args.budget {
        if total > b {
            writeln!(out, "over budget: {total} > {b}")?;
            return Ok(Outcome::Failure);
        }
    }
    Ok(Outcome::Success)
}
