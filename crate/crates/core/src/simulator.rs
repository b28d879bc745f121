//! Value-level netlist simulation, equivalence checking against the trained
//! model, and pipeline bookkeeping.

use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netlist::verilog::TOP_MODULE;
use crate::netlist::Netlist;
use crate::trainer::TrainedModel;

pub const DEFAULT_EXHAUSTIVE_BOUND_BITS: u32 = 24;
const BLOCK: usize = 4096;

fn check_input(net: &Netlist, input: &[u32]) -> Result<()> {
    if input.len() != net.input_features {
        return Err(Error::Shape(format!(
            "netlist has {} inputs, got {}",
            net.input_features,
            input.len()
        )));
    }
    if let Some(&c) = input.iter().find(|&&c| c >> net.input_bits != 0) {
        return Err(Error::Shape(format!(
            "input code {c} exceeds {} bits",
            net.input_bits
        )));
    }
    Ok(())
}

/// Output codes, one per class, for one input code vector.
pub fn eval_netlist(net: &Netlist, input: &[u32]) -> Result<Vec<u32>> {
    check_input(net, input)?;
    let mut prev = input.to_vec();
    let mut cur = Vec::new();
    for layer in &net.layers {
        cur.clear();
        cur.resize(layer.width, 0);
        for h in &layer.hbbs {
            let addr = h.input_wires.iter().fold(0usize, |a, w| {
                let idx = match *w {
                    crate::netlist::Source::Input(i) => i,
                    crate::netlist::Source::Neuron(id) => id.neuron,
                };
                (a << layer.in_bits) | prev[idx] as usize
            });
            cur[h.id.neuron] = h.table.lookup(addr);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    /// Every input vector; refused above `2^bound_bits` samples.
    Exhaustive {
        bound_bits: u32,
    },
    Random {
        samples: usize,
        seed: u64,
    },
}

impl CheckMode {
    pub fn exhaustive() -> Self {
        CheckMode::Exhaustive {
            bound_bits: DEFAULT_EXHAUSTIVE_BOUND_BITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub index: u64,
    pub input: Vec<u32>,
    pub model: Vec<u32>,
    pub netlist: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub samples_checked: u64,
    pub mismatches: u64,
    /// Lowest-index failing sample.
    pub first_mismatch: Option<Mismatch>,
    pub exhaustive: bool,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }

    pub fn summary_line(&self) -> String {
        format!(
            "equivalence samples={} mismatches={} exhaustive={}",
            self.samples_checked, self.mismatches, self.exhaustive
        )
    }

    fn merge(mut self, other: Self) -> Self {
        self.samples_checked += other.samples_checked;
        self.mismatches += other.mismatches;
        self.first_mismatch = match (self.first_mismatch, other.first_mismatch) {
            (Some(a), Some(b)) => Some(if a.index <= b.index { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "mode:            {}",
            if self.exhaustive {
                "exhaustive"
            } else {
                "random"
            }
        )?;
        writeln!(f, "samples checked: {}", self.samples_checked)?;
        writeln!(f, "mismatches:      {}", self.mismatches)?;
        if let Some(m) = &self.first_mismatch {
            writeln!(f, "first mismatch:  sample {}", m.index)?;
            writeln!(f, "  input:   {:?}", m.input)?;
            writeln!(f, "  model:   {:?}", m.model)?;
            writeln!(f, "  netlist: {:?}", m.netlist)?;
        }
        write!(f, "{}", self.summary_line())
    }
}

/// `n` uniform input code vectors drawn from a ChaCha8 stream.
pub fn random_inputs(features: usize, bits: u32, n: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..features)
                .map(|_| rng.random_range(0..1u32 << bits))
                .collect()
        })
        .collect()
}

/// Input vector number `index` in exhaustive order: feature `i` is read from
/// bits `[i*b, (i+1)*b)` of the index.
fn decode_index(index: u64, features: usize, bits: u32) -> Vec<u32> {
    let mask = (1u64 << bits) - 1;
    (0..features)
        .map(|i| ((index >> (i as u32 * bits)) & mask) as u32)
        .collect()
}

fn check_block(
    model: &TrainedModel,
    net: &Netlist,
    first: u64,
    inputs: &[Vec<u32>],
    exhaustive: bool,
) -> Result<EquivalenceReport> {
    let empty = EquivalenceReport {
        samples_checked: 0,
        mismatches: 0,
        first_mismatch: None,
        exhaustive,
    };
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let a = model.eval_codes(x)?;
            let b = eval_netlist(net, x)?;
            let bad = a != b;
            Ok(EquivalenceReport {
                samples_checked: 1,
                mismatches: bad as u64,
                first_mismatch: bad.then(|| Mismatch {
                    index: first + i as u64,
                    input: x.clone(),
                    model: a,
                    netlist: b,
                }),
                exhaustive,
            })
        })
        .try_reduce(|| empty.clone(), |a, b| Ok(a.merge(b)))
}

/// Compares the model's eval-mode output codes with the netlist's, bit for
/// bit.
pub fn check_equivalence(
    model: &TrainedModel,
    net: &Netlist,
    mode: CheckMode,
) -> Result<EquivalenceReport> {
    if !model.frozen {
        return Err(Error::NotFrozen("equivalence checking"));
    }
    if model.spec.input_features != net.input_features
        || model.spec.input_bits != net.input_bits
        || model.num_classes() != net.num_classes
        || model.spec.output_bits() != net.output_bits
    {
        return Err(Error::Shape("model and netlist ports differ".into()));
    }
    let (features, bits) = (net.input_features, net.input_bits);
    let exhaustive = matches!(mode, CheckMode::Exhaustive { .. });
    let mut report = EquivalenceReport {
        samples_checked: 0,
        mismatches: 0,
        first_mismatch: None,
        exhaustive,
    };
    match mode {
        CheckMode::Exhaustive { bound_bits } => {
            let total_bits = features as u64 * bits as u64;
            if total_bits > bound_bits as u64 || total_bits >= 64 {
                return Err(Error::ExhaustiveTooLarge {
                    bits: total_bits.min(u32::MAX as u64) as u32,
                    bound_bits,
                });
            }
            let total = 1u64 << total_bits;
            let mut start = 0u64;
            while start < total {
                let end = (start + BLOCK as u64).min(total);
                let inputs: Vec<Vec<u32>> = (start..end)
                    .map(|i| decode_index(i, features, bits))
                    .collect();
                report = report.merge(check_block(model, net, start, &inputs, true)?);
                start = end;
            }
        }
        CheckMode::Random { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut start = 0usize;
            while start < samples {
                let end = (start + BLOCK).min(samples);
                let inputs: Vec<Vec<u32>> = (start..end)
                    .map(|_| {
                        (0..features)
                            .map(|_| rng.random_range(0..1u32 << bits))
                            .collect()
                    })
                    .collect();
                report = report.merge(check_block(model, net, start as u64, &inputs, false)?);
                start = end;
            }
        }
    }
    Ok(report)
}

/// LUT levels of an X-input table built as a 6-LUT layer feeding a tree of
/// 4:1 muxes.
pub fn logic_levels(x: u32) -> u32 {
    if x <= 6 {
        1
    } else {
        1 + (x - 6).div_ceil(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    /// Register stages on the input-to-output path.
    pub depth: usize,
    pub latency_ns: f64,
    /// Samples per second at an initiation interval of one cycle.
    pub throughput: f64,
    /// Largest number of LUT levels between two adjacent registers.
    pub logic_levels: u32,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pipeline depth:  {} cycles", self.depth)?;
        writeln!(
            f,
            "latency:         {:.3} ns (model estimate)",
            self.latency_ns
        )?;
        writeln!(
            f,
            "throughput:      {:.4e} samples/s (model estimate)",
            self.throughput
        )?;
        write!(f, "max LUT levels:  {}", self.logic_levels)
    }
}

pub fn pipeline_report(net: &Netlist, clock_period_ns: f64) -> PipelineReport {
    let depth = net.register_stages.len();
    let layer_levels: Vec<u32> = net
        .layers
        .iter()
        .map(|l| {
            l.hbbs
                .iter()
                .map(|h| logic_levels(h.table.in_bits))
                .max()
                .unwrap_or(0)
        })
        .collect();
    // Layer k sits between boundaries k and k+1; a registered boundary
    // k >= 1 closes the running segment.
    let mut worst = 0;
    let mut run = 0;
    for (k, &lv) in layer_levels.iter().enumerate() {
        run += lv;
        if net.register_stages.contains(&(k + 1)) {
            worst = worst.max(run);
            run = 0;
        }
    }
    worst = worst.max(run);
    PipelineReport {
        depth,
        latency_ns: depth as f64 * clock_period_ns,
        throughput: 1e9 / clock_period_ns,
        logic_levels: worst,
    }
}

/// Hex literal of a bus with element `i` at bits `[i*b, (i+1)*b)`.
fn bus_literal(codes: &[u32], bits: u32) -> String {
    let width = codes.len() * bits as usize;
    let mut nibbles = vec![0u8; width.div_ceil(4)];
    for (i, &c) in codes.iter().enumerate() {
        for j in 0..bits as usize {
            if c >> j & 1 == 1 {
                let pos = i * bits as usize + j;
                nibbles[pos / 4] |= 1 << (pos % 4);
            }
        }
    }
    let hex: String = nibbles
        .iter()
        .rev()
        .map(|n| char::from_digit(*n as u32, 16).unwrap())
        .collect();
    format!("{width}'h{hex}")
}

/// Self-checking testbench for the top module. Each vector is applied, the
/// bench waits one clock per register stage, then compares the output bus.
pub fn emit_testbench(net: &Netlist, inputs: &[Vec<u32>]) -> Result<String> {
    let in_w = net.input_features * net.input_bits as usize;
    let out_w = net.num_classes * net.output_bits as usize;
    let depth = net.register_stages.len();
    let mut s = String::from("// Generated by logicforge. Do not edit.\n`timescale 1ns/1ps\n\n");
    writeln!(s, "module {TOP_MODULE}_tb;").unwrap();
    writeln!(s, "    reg clk = 0;").unwrap();
    writeln!(s, "    reg  [{}:0] in;", in_w - 1).unwrap();
    writeln!(s, "    wire [{}:0] out;", out_w - 1).unwrap();
    writeln!(s, "    integer errors = 0;").unwrap();
    writeln!(s, "    {TOP_MODULE} dut (.clk(clk), .in(in), .out(out));").unwrap();
    writeln!(s, "    always #5 clk = ~clk;").unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "    task check(input [{}:0] x, input [{}:0] expected);",
        in_w - 1,
        out_w - 1
    )
    .unwrap();
    writeln!(s, "        begin").unwrap();
    writeln!(s, "            in = x;").unwrap();
    if depth > 0 {
        writeln!(s, "            repeat ({depth}) @(posedge clk);").unwrap();
    }
    writeln!(s, "            #1;").unwrap();
    writeln!(s, "            if (out !== expected) begin").unwrap();
    writeln!(s, "                errors = errors + 1;").unwrap();
    writeln!(
        s,
        "                $display(\"MISMATCH in=%h out=%h expected=%h\", x, out, expected);"
    )
    .unwrap();
    writeln!(s, "            end").unwrap();
    writeln!(s, "        end").unwrap();
    writeln!(s, "    endtask").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "    initial begin").unwrap();
    for x in inputs {
        let y = eval_netlist(net, x)?;
        writeln!(
            s,
            "        check({}, {});",
            bus_literal(x, net.input_bits),
            bus_literal(&y, net.output_bits)
        )
        .unwrap();
    }
    writeln!(
        s,
        "        if (errors == 0) $display(\"PASS {} vectors\");",
        inputs.len()
    )
    .unwrap();
    writeln!(
        s,
        "        else $display(\"FAIL %0d of {} vectors\", errors);",
        inputs.len()
    )
    .unwrap();
    writeln!(s, "        $finish;").unwrap();
    writeln!(s, "    end").unwrap();
    writeln!(s, "endmodule").unwrap();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{
        build_netlist, insert_registers, prune_dead, HbbId, HbbInstance, NetLayer, RegisterPolicy,
        Source, TruthTable,
    };
    use crate::topology::{Knobs, NetworkSpec};
    use crate::trainer::{Codes, InputQuantizer, Mode};

    fn single(table: TruthTable, features: usize, bits: u32) -> Netlist {
        let y = table.out_bits;
        Netlist {
            input_features: features,
            input_bits: bits,
            num_classes: 1,
            output_bits: y,
            layers: vec![NetLayer {
                width: 1,
                in_bits: bits,
                out_bits: y,
                hbbs: vec![HbbInstance {
                    id: HbbId {
                        layer: 0,
                        neuron: 0,
                    },
                    table,
                    input_wires: (0..features).map(Source::Input).collect(),
                }],
            }],
            register_stages: vec![0, 1],
        }
    }

    fn model(seed: u64) -> TrainedModel {
        let spec = NetworkSpec::mlp(5, &[7, 6], 3, Knobs::uniform(2, 3), seed);
        let iq = InputQuantizer::new(2, vec![(0.0, 1.0); 5]).unwrap();
        let mut m = TrainedModel::init(&spec, iq, seed).unwrap();
        m.layers.iter_mut().for_each(|l| l.act_quant.scale = 0.35);
        m.freeze();
        m
    }

    #[test]
    fn constant_table() {
        let net = single(TruthTable::new(4, 3, vec![5; 16]).unwrap(), 2, 2);
        for x in random_inputs(2, 2, 20, 1) {
            assert_eq!(eval_netlist(&net, &x).unwrap(), vec![5]);
        }
    }

    #[test]
    fn identity_table_echoes() {
        let net = single(TruthTable::new(3, 3, (0..8).collect()).unwrap(), 1, 3);
        for c in 0..8 {
            assert_eq!(eval_netlist(&net, &[c]).unwrap(), vec![c]);
        }
    }

    #[test]
    fn address_order_first_wire_is_msb() {
        let net = single(TruthTable::new(2, 2, vec![0, 1, 2, 3]).unwrap(), 2, 1);
        assert_eq!(eval_netlist(&net, &[1, 0]).unwrap(), vec![2]);
        assert_eq!(eval_netlist(&net, &[0, 1]).unwrap(), vec![1]);
    }

    #[test]
    fn width_errors() {
        let net = single(TruthTable::new(2, 1, vec![0; 4]).unwrap(), 2, 1);
        assert!(eval_netlist(&net, &[0]).is_err());
        assert!(eval_netlist(&net, &[0, 2]).is_err());
    }

    #[test]
    fn matches_model_forward() {
        let m = model(3);
        let net = build_netlist(&m, 15).unwrap();
        let inputs = random_inputs(5, 2, 10_000, 8);
        let codes = Codes::new(inputs.len(), 5, inputs.concat()).unwrap();
        let fwd = m.forward(&codes, Mode::Eval).unwrap().codes.unwrap();
        for (i, x) in inputs.iter().enumerate() {
            assert_eq!(eval_netlist(&net, x).unwrap(), fwd.row(i));
        }
    }

    #[test]
    fn built_netlist_is_equivalent() {
        let m = model(4);
        let net = build_netlist(&m, 15).unwrap();
        let r = check_equivalence(
            &m,
            &net,
            CheckMode::Random {
                samples: 10_000,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(
            (r.samples_checked, r.mismatches, r.first_mismatch.is_none()),
            (10_000, 0, true)
        );
        let r = check_equivalence(&m, &net, CheckMode::exhaustive()).unwrap();
        assert_eq!(
            (r.samples_checked, r.mismatches, r.exhaustive),
            (1024, 0, true)
        );
        let again = build_netlist(&m, 15).unwrap();
        assert!(check_equivalence(&m, &again, CheckMode::exhaustive())
            .unwrap()
            .passed());
    }

    #[test]
    fn corrupted_entry_is_caught() {
        let m = model(5);
        let mut net = build_netlist(&m, 15).unwrap();
        for e in net.layers[2].hbbs[0].table.entries.iter_mut() {
            *e ^= 1;
        }
        let r = check_equivalence(&m, &net, CheckMode::exhaustive()).unwrap();
        assert!(r.mismatches >= 1);
        let first = r.first_mismatch.as_ref().unwrap();
        assert_eq!(first.index, 0);
        assert_ne!(first.model, first.netlist);
        assert!(r.to_string().contains("first mismatch"));
    }

    #[test]
    fn first_mismatch_is_lowest_index() {
        let m = model(6);
        let mut net = build_netlist(&m, 15).unwrap();
        let last = net.layers[2].hbbs[1].table.entries.len() - 1;
        net.layers[2].hbbs[1].table.entries[last] ^= 1;
        let r = check_equivalence(&m, &net, CheckMode::exhaustive()).unwrap();
        if let Some(first) = &r.first_mismatch {
            let serial = (0..1024u64)
                .find(|&i| {
                    let x = decode_index(i, 5, 2);
                    m.eval_codes(&x).unwrap() != eval_netlist(&net, &x).unwrap()
                })
                .unwrap();
            assert_eq!(first.index, serial);
        }
    }

    #[test]
    fn exhaustive_bound() {
        let m = model(7);
        let net = build_netlist(&m, 15).unwrap();
        let err = check_equivalence(&m, &net, CheckMode::Exhaustive { bound_bits: 8 }).unwrap_err();
        assert!(matches!(
            err,
            Error::ExhaustiveTooLarge {
                bits: 10,
                bound_bits: 8
            }
        ));
        assert!(err.to_string().contains("random mode"));
    }

    #[test]
    fn registers_and_pruning_are_transparent() {
        let m = model(9);
        let net = build_netlist(&m, 15).unwrap();
        let variants = [
            insert_registers(net.clone(), &RegisterPolicy::None),
            insert_registers(net.clone(), &RegisterPolicy::Custom(vec![1])),
            prune_dead(net.clone()),
        ];
        for x in random_inputs(5, 2, 500, 2) {
            let y = eval_netlist(&net, &x).unwrap();
            for v in &variants {
                assert_eq!(eval_netlist(v, &x).unwrap(), y);
            }
        }
    }

    #[test]
    fn pipeline_arithmetic() {
        let spec = NetworkSpec::mlp(4, &[4, 4, 4], 2, Knobs::uniform(2, 2), 0);
        let iq = InputQuantizer::new(2, vec![(0.0, 1.0); 4]).unwrap();
        let mut m = TrainedModel::init(&spec, iq, 0).unwrap();
        m.freeze();
        let net = build_netlist(&m, 15).unwrap();
        let r = pipeline_report(&net, 2.381);
        assert_eq!(r.depth, 5);
        assert!((r.latency_ns - 11.905).abs() < 1e-9);
        assert!((r.throughput - 1e9 / 2.381).abs() < 1e-3);
        assert_eq!(r.logic_levels, 1);
        let comb = pipeline_report(&insert_registers(net, &RegisterPolicy::None), 2.381);
        assert_eq!(
            (comb.depth, comb.latency_ns, comb.logic_levels),
            (0, 0.0, 4)
        );
    }

    #[test]
    fn levels() {
        assert_eq!(
            [1, 6, 7, 8, 9, 12, 15].map(logic_levels),
            [1, 1, 2, 2, 3, 4, 6]
        );
    }

    #[test]
    fn bus_packing() {
        assert_eq!(bus_literal(&[1, 2], 2), "4'h9");
        assert_eq!(bus_literal(&[3, 0, 1], 3), "9'h043");
    }

    #[test]
    fn testbench_has_one_check_per_vector() {
        let m = model(2);
        let net = build_netlist(&m, 15).unwrap();
        let tb = emit_testbench(&net, &random_inputs(5, 2, 12, 0)).unwrap();
        assert_eq!(tb.matches("        check(").count(), 12);
        assert!(tb.contains("repeat (4) @(posedge clk);"));
    }
}
