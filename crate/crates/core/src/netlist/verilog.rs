//! Verilog emission: one ROM module per HBB plus a pipelined top module.
//!
//! Signal naming in the top module:
//! - `in_f<i>`: slice `i` of the input bus, `l<k>_n<n>`: output of HBB
//!   `layer<k>_n<n>`.
//! - Every such signal has a stage copy with a `_q` suffix. On a registered
//!   boundary the copy is a flop updated in that stage's single
//!   `always @(posedge clk)` block; otherwise it is a plain wire.
//! - HBB inputs and the output bus read only `_q` signals.

use std::fmt::Write;

use super::{HbbInstance, Netlist, Source};

pub const TOP_MODULE: &str = "logicnet";

pub fn module_name(h: &HbbInstance) -> String {
    format!("layer{}_n{}", h.id.layer, h.id.neuron)
}

/// ROM with a full `case` over the address and a default arm.
pub fn emit_hbb(h: &HbbInstance) -> String {
    let x = h.table.in_bits;
    let y = h.table.out_bits;
    let mut s = String::new();
    writeln!(s, "module {} (", module_name(h)).unwrap();
    writeln!(s, "    input  wire [{}:0] in,", x - 1).unwrap();
    writeln!(s, "    output reg  [{}:0] out", y - 1).unwrap();
    writeln!(s, ");").unwrap();
    writeln!(s, "    always @(*) begin").unwrap();
    writeln!(s, "        case (in)").unwrap();
    for (a, &e) in h.table.entries.iter().enumerate() {
        writeln!(s, "            {x}'d{a}: out = {y}'d{e};").unwrap();
    }
    writeln!(s, "            default: out = {y}'d0;").unwrap();
    writeln!(s, "        endcase").unwrap();
    writeln!(s, "    end").unwrap();
    writeln!(s, "endmodule").unwrap();
    s
}

fn signal(src: Source) -> String {
    match src {
        Source::Input(i) => format!("in_f{i}"),
        Source::Neuron(id) => format!("l{}_n{}", id.layer, id.neuron),
    }
}

/// Signals crossing boundary `b` with their widths.
fn boundary_signals(net: &Netlist, b: usize) -> Vec<(String, u32)> {
    if b == 0 {
        (0..net.input_features)
            .map(|i| (signal(Source::Input(i)), net.input_bits))
            .collect()
    } else {
        let layer = &net.layers[b - 1];
        layer
            .hbbs
            .iter()
            .map(|h| (signal(Source::Neuron(h.id)), layer.out_bits))
            .collect()
    }
}

pub fn emit_top(net: &Netlist) -> String {
    let in_w = net.input_features as u32 * net.input_bits;
    let out_w = net.num_classes as u32 * net.output_bits;
    let mut s = String::new();
    writeln!(s, "module {TOP_MODULE} (").unwrap();
    writeln!(s, "    input  wire clk,").unwrap();
    writeln!(s, "    input  wire [{}:0] in,", in_w - 1).unwrap();
    writeln!(s, "    output wire [{}:0] out", out_w - 1).unwrap();
    writeln!(s, ");").unwrap();

    let b_in = net.input_bits;
    for i in 0..net.input_features {
        let lo = i as u32 * b_in;
        writeln!(
            s,
            "    wire [{}:0] in_f{i} = in[{}:{lo}];",
            b_in - 1,
            lo + b_in - 1
        )
        .unwrap();
    }

    let l = net.layers.len();
    for b in 0..=l {
        let registered = net.register_stages.contains(&b);
        let sigs = boundary_signals(net, b);
        if b > 0 {
            writeln!(s).unwrap();
            writeln!(s, "    // layer {}", b - 1).unwrap();
            let layer = &net.layers[b - 1];
            for h in &layer.hbbs {
                let name = signal(Source::Neuron(h.id));
                let ins: Vec<String> = h
                    .input_wires
                    .iter()
                    .map(|&w| format!("{}_q", signal(w)))
                    .collect();
                writeln!(s, "    wire [{}:0] {name};", layer.out_bits - 1).unwrap();
                writeln!(
                    s,
                    "    {} u_{name} (.in({{{}}}), .out({name}));",
                    module_name(h),
                    ins.join(", ")
                )
                .unwrap();
            }
        }
        writeln!(s).unwrap();
        if registered {
            writeln!(s, "    // stage {b} (registered)").unwrap();
            for (name, w) in &sigs {
                writeln!(s, "    reg  [{}:0] {name}_q;", w - 1).unwrap();
            }
            writeln!(s, "    always @(posedge clk) begin").unwrap();
            for (name, _) in &sigs {
                writeln!(s, "        {name}_q <= {name};").unwrap();
            }
            writeln!(s, "    end").unwrap();
        } else {
            writeln!(s, "    // stage {b} (combinational)").unwrap();
            for (name, w) in &sigs {
                writeln!(s, "    wire [{}:0] {name}_q = {name};", w - 1).unwrap();
            }
        }
    }

    let last = &net.layers[l - 1];
    let outs: Vec<String> = last
        .hbbs
        .iter()
        .rev()
        .map(|h| format!("{}_q", signal(Source::Neuron(h.id))))
        .collect();
    writeln!(s).unwrap();
    writeln!(s, "    assign out = {{{}}};", outs.join(", ")).unwrap();
    writeln!(s, "endmodule").unwrap();
    s
}

const HEADER: &str = "// Generated by logicforge. Do not edit.\n";

/// The whole design in one file: HBB modules in layer/neuron order, then the
/// top module.
pub fn emit_verilog(net: &Netlist) -> String {
    let mut s = String::from(HEADER);
    for h in net.hbbs() {
        s.push('\n');
        s.push_str(&emit_hbb(h));
    }
    s.push('\n');
    s.push_str(&emit_top(net));
    s
}

/// One `(file name, contents)` pair per module.
pub fn emit_verilog_files(net: &Netlist) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = net
        .hbbs()
        .map(|h| {
            (
                format!("{}.v", module_name(h)),
                format!("{HEADER}\n{}", emit_hbb(h)),
            )
        })
        .collect();
    files.push((
        format!("{TOP_MODULE}.v"),
        format!("{HEADER}\n{}", emit_top(net)),
    ));
    files
}
