//! Truth-table netlists built from frozen models.
//!
//! Bit order: a truth-table address is the concatenation of the neuron's
//! input codes in mask order with the first masked input in the most
//! significant position. For a neuron with fan-in `f` and input width `b`,
//! input `k` occupies address bits `[(f-1-k)*b, (f-k)*b)`. Buses pack
//! element `i` (input feature or output class) into bits `[i*b, (i+1)*b)`,
//! so element 0 sits at the least significant end.
//!
//! Register stages are numbered by boundary: stage 0 is the network input,
//! stage `k` (1 <= k <= L) sits after layer `k-1`, and stage `L` is the
//! network output.

pub mod dump;
pub mod verilog;

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::topology::lut_cost;
use crate::trainer::TrainedModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthTable {
    pub in_bits: u32,
    pub out_bits: u32,
    pub entries: Vec<u32>,
}

impl TruthTable {
    pub fn new(in_bits: u32, out_bits: u32, entries: Vec<u32>) -> Result<Self> {
        let t = Self {
            in_bits,
            out_bits,
            entries,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_bits == 0 || self.in_bits > 30 || self.out_bits == 0 || self.out_bits > 31 {
            return Err(Error::Netlist(format!(
                "unsupported table shape {}:{}",
                self.in_bits, self.out_bits
            )));
        }
        if self.entries.len() != 1usize << self.in_bits {
            return Err(Error::Netlist(format!(
                "{} entries for a {}-input table",
                self.entries.len(),
                self.in_bits
            )));
        }
        if let Some(e) = self.entries.iter().find(|&&e| e >> self.out_bits != 0) {
            return Err(Error::Netlist(format!(
                "entry {e} does not fit in {} bits",
                self.out_bits
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn lookup(&self, address: usize) -> u32 {
        self.entries[address]
    }

    pub fn storage_bits(&self) -> u64 {
        self.out_bits as u64 * (1u64 << self.in_bits)
    }

    pub fn lut_cost(&self) -> Result<u64> {
        lut_cost(self.in_bits, self.out_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HbbId {
    pub layer: usize,
    pub neuron: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Input(usize),
    Neuron(HbbId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HbbInstance {
    pub id: HbbId,
    pub table: TruthTable,
    /// Drivers in address order (first wire is most significant).
    pub input_wires: Vec<Source>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetLayer {
    /// Neuron count before pruning; ids index into `0..width`.
    pub width: usize,
    pub in_bits: u32,
    pub out_bits: u32,
    /// Surviving HBBs in ascending neuron order.
    pub hbbs: Vec<HbbInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub input_features: usize,
    pub input_bits: u32,
    pub num_classes: usize,
    pub output_bits: u32,
    pub layers: Vec<NetLayer>,
    /// Registered boundaries, ascending, each in `0..=layers.len()`.
    pub register_stages: Vec<usize>,
}

impl Netlist {
    pub fn hbb_count(&self) -> usize {
        self.layers.iter().map(|l| l.hbbs.len()).sum()
    }

    pub fn hbbs(&self) -> impl Iterator<Item = &HbbInstance> {
        self.layers.iter().flat_map(|l| l.hbbs.iter())
    }

    pub fn find(&self, id: HbbId) -> Option<&HbbInstance> {
        let l = self.layers.get(id.layer)?;
        l.hbbs
            .binary_search_by_key(&id.neuron, |h| h.id.neuron)
            .ok()
            .map(|i| &l.hbbs[i])
    }

    /// Sum of the analytical LUT cost of every HBB present.
    pub fn lut_cost(&self) -> Result<u64> {
        self.hbbs().try_fold(0u64, |acc, h| {
            acc.checked_add(h.table.lut_cost()?)
                .ok_or(Error::ExceedsDeviceScale { x: h.table.in_bits })
        })
    }

    pub fn source_bits(&self, s: Source) -> u32 {
        match s {
            Source::Input(_) => self.input_bits,
            Source::Neuron(id) => self.layers[id.layer].out_bits,
        }
    }

    /// Structural checks: strictly layered wiring to existing drivers,
    /// table shapes consistent with wiring, output layer complete.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Netlist("no layers".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let expected_in_bits = if k == 0 {
                self.input_bits
            } else {
                self.layers[k - 1].out_bits
            };
            if layer.in_bits != expected_in_bits {
                return Err(Error::Netlist(format!(
                    "layer {k}: in_bits {} != {expected_in_bits}",
                    layer.in_bits
                )));
            }
            let mut prev = None;
            for h in &layer.hbbs {
                if h.id.layer != k
                    || h.id.neuron >= layer.width
                    || prev.is_some_and(|p| p >= h.id.neuron)
                {
                    return Err(Error::Netlist(format!(
                        "layer {k}: bad or unordered HBB id {:?}",
                        h.id
                    )));
                }
                prev = Some(h.id.neuron);
                h.table.validate()?;
                if h.table.out_bits != layer.out_bits {
                    return Err(Error::Netlist(format!(
                        "{:?}: table width differs from layer",
                        h.id
                    )));
                }
                if h.input_wires.len() as u32 * layer.in_bits != h.table.in_bits {
                    return Err(Error::Netlist(format!(
                        "{:?}: wire count does not match table inputs",
                        h.id
                    )));
                }
                for &w in &h.input_wires {
                    let ok = match w {
                        Source::Input(i) => k == 0 && i < self.input_features,
                        Source::Neuron(src) => {
                            k > 0 && src.layer == k - 1 && self.find(src).is_some()
                        }
                    };
                    if !ok {
                        return Err(Error::Netlist(format!(
                            "{:?}: dangling or non-adjacent wire {w:?}",
                            h.id
                        )));
                    }
                }
            }
        }
        let last = self.layers.last().unwrap();
        if last.width != self.num_classes
            || last.hbbs.len() != self.num_classes
            || last.out_bits != self.output_bits
        {
            return Err(Error::Netlist(
                "output layer must drive every output port".into(),
            ));
        }
        if self.register_stages.windows(2).any(|w| w[0] >= w[1])
            || self.register_stages.iter().any(|&s| s > self.layers.len())
        {
            return Err(Error::Netlist(
                "register stages must be ascending boundaries".into(),
            ));
        }
        Ok(())
    }

    /// HBB ids in a topological order of the wiring graph.
    pub fn topological_order(&self) -> Result<Vec<HbbId>> {
        use std::collections::{BTreeMap, VecDeque};
        let mut indegree: BTreeMap<HbbId, usize> = BTreeMap::new();
        let mut users: BTreeMap<HbbId, Vec<HbbId>> = BTreeMap::new();
        for h in self.hbbs() {
            let deps = h
                .input_wires
                .iter()
                .filter(|w| matches!(w, Source::Neuron(_)))
                .count();
            indegree.insert(h.id, deps);
            for w in &h.input_wires {
                if let Source::Neuron(src) = w {
                    users.entry(*src).or_default().push(h.id);
                }
            }
        }
        let mut ready: VecDeque<HbbId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(id) = ready.pop_front() {
            order.push(id);
            for u in users.get(&id).into_iter().flatten() {
                let d = indegree.get_mut(u).expect("known HBB");
                *d -= 1;
                if *d == 0 {
                    ready.push_back(*u);
                }
            }
        }
        if order.len() != indegree.len() {
            return Err(Error::Netlist("wiring graph has a cycle".into()));
        }
        Ok(order)
    }
}

/// Exhaustively evaluates one frozen neuron over all `2^X` input codes.
pub fn enumerate_neuron(
    model: &TrainedModel,
    layer: usize,
    neuron: usize,
    fanin_cap: u32,
) -> Result<TruthTable> {
    if !model.frozen {
        return Err(Error::NotFrozen("truth-table enumeration"));
    }
    let spec = model
        .spec
        .layers
        .get(layer)
        .ok_or_else(|| Error::Netlist(format!("no layer {layer}")))?;
    if neuron >= spec.out_width {
        return Err(Error::Netlist(format!(
            "layer {layer} has no neuron {neuron}"
        )));
    }
    let x = spec.fanin_bits();
    if x > fanin_cap {
        return Err(Error::InvalidSpec(format!(
            "layer {layer}: fan-in X = {x} exceeds cap {fanin_cap}"
        )));
    }
    let in_q = model.input_quantizer_of(layer);
    let params = &model.layers[layer];
    let fanin = spec.fanin;
    let b = spec.in_bits;
    let code_mask = (1usize << b) - 1;
    // Dequantized value of every code, computed once.
    let values: Vec<f64> = (0..1u32 << b).map(|c| in_q.value_of(c)).collect();
    let mut gathered = vec![0.0; fanin];
    let entries = (0..1usize << x)
        .map(|a| {
            for (k, g) in gathered.iter_mut().enumerate() {
                let shift = (fanin - 1 - k) as u32 * b;
                *g = values[(a >> shift) & code_mask];
            }
            params.eval_neuron(neuron, &gathered)
        })
        .collect::<Result<Vec<_>>>()?;
    TruthTable::new(x, spec.out_bits, entries)
}

/// One HBB per neuron, wired per the model's masks, with every boundary
/// registered.
pub fn build_netlist(model: &TrainedModel, fanin_cap: u32) -> Result<Netlist> {
    if !model.frozen {
        return Err(Error::NotFrozen("netlist construction"));
    }
    model.spec.check_with_cap(fanin_cap)?;
    let spec = &model.spec;
    let layers = spec
        .layers
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let hbbs = (0..l.out_width)
                .into_par_iter()
                .map(|n| {
                    let table = enumerate_neuron(model, k, n, fanin_cap)?;
                    let input_wires = model.masks[k].neurons[n]
                        .iter()
                        .map(|&i| {
                            if k == 0 {
                                Source::Input(i)
                            } else {
                                Source::Neuron(HbbId {
                                    layer: k - 1,
                                    neuron: i,
                                })
                            }
                        })
                        .collect();
                    Ok(HbbInstance {
                        id: HbbId {
                            layer: k,
                            neuron: n,
                        },
                        table,
                        input_wires,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(NetLayer {
                width: l.out_width,
                in_bits: l.in_bits,
                out_bits: l.out_bits,
                hbbs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Netlist {
        input_features: spec.input_features,
        input_bits: spec.input_bits,
        num_classes: spec.num_classes,
        output_bits: spec.output_bits(),
        layers,
        register_stages: Vec::new(),
    };
    Ok(insert_registers(net, &RegisterPolicy::Default))
}

/// Drops every HBB with no directed path to an output port. Output-layer
/// HBBs are the ports and always stay.
pub fn prune_dead(mut net: Netlist) -> Netlist {
    let l = net.layers.len();
    if l == 0 {
        return net;
    }
    let mut live: BTreeSet<HbbId> = net.layers[l - 1].hbbs.iter().map(|h| h.id).collect();
    for k in (0..l).rev() {
        let mut feeding = BTreeSet::new();
        for h in net.layers[k].hbbs.iter().filter(|h| live.contains(&h.id)) {
            for w in &h.input_wires {
                if let Source::Neuron(src) = w {
                    feeding.insert(*src);
                }
            }
        }
        if k > 0 {
            net.layers[k - 1].hbbs.retain(|h| feeding.contains(&h.id));
        }
        live.extend(feeding);
    }
    net
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegisterPolicy {
    /// Input, every inter-layer boundary and output.
    Default,
    /// Purely combinational.
    None,
    /// Explicit boundary indices; out-of-range entries are ignored.
    Custom(Vec<usize>),
}

pub fn insert_registers(mut net: Netlist, policy: &RegisterPolicy) -> Netlist {
    let l = net.layers.len();
    net.register_stages = match policy {
        RegisterPolicy::Default => (0..=l).collect(),
        RegisterPolicy::None => Vec::new(),
        RegisterPolicy::Custom(v) => {
            let s: BTreeSet<usize> = v.iter().copied().filter(|&b| b <= l).collect();
            s.into_iter().collect()
        }
    };
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Knobs, LayerSpec, NetworkSpec};
    use crate::trainer::{InputQuantizer, TrainedModel};

    fn frozen(spec: &NetworkSpec, seed: u64) -> TrainedModel {
        let iq =
            InputQuantizer::new(spec.input_bits, vec![(0.0, 1.0); spec.input_features]).unwrap();
        let mut m = TrainedModel::init(spec, iq, seed).unwrap();
        for l in &mut m.layers {
            l.act_quant.scale = 0.4;
        }
        m.freeze();
        m
    }

    #[test]
    fn constant_neuron() {
        let spec = NetworkSpec::mlp(3, &[], 1, Knobs::uniform(2, 3), 0);
        let mut m = frozen(&spec, 0);
        m.layers[0].weights.iter_mut().for_each(|w| *w = 0.0);
        let t = enumerate_neuron(&m, 0, 0, 15).unwrap();
        let zero = m.layers[0].act_quant.quantize(0.0).unwrap().value;
        assert_eq!(t.entries.len(), 64);
        assert!(t.entries.iter().all(|&e| e == zero));
    }

    #[test]
    fn one_input_one_bit_by_hand() {
        let spec = NetworkSpec {
            input_features: 1,
            input_bits: 1,
            layers: vec![LayerSpec {
                in_width: 1,
                out_width: 1,
                fanin: 1,
                in_bits: 1,
                out_bits: 1,
            }],
            num_classes: 1,
            seed: 0,
        };
        let mut m = frozen(&spec, 0);
        m.layers[0].weights = vec![1.0];
        m.layers[0].act_quant.scale = 1.0;
        m.layers[0].bn.running_var = vec![1.0 - m.layers[0].bn.eps];
        // The network input is unsigned, so codes 0/1 are the values 0.0/1.0.
        // code 0 -> z = 0 -> level 0 -> code 1; code 1 -> z = 1 -> level 1
        // clamps to int_max 0 -> code 1.
        assert_eq!(enumerate_neuron(&m, 0, 0, 15).unwrap().entries, vec![1, 1]);
        // With weight -1: code 1 -> z = -1 -> level -1 -> code 0.
        m.layers[0].weights = vec![-1.0];
        assert_eq!(enumerate_neuron(&m, 0, 0, 15).unwrap().entries, vec![1, 0]);
    }

    #[test]
    fn signed_hidden_input_by_hand() {
        // Layer 1 reads a signed 1-bit activation with scale 1: code 0 is
        // -1.0 and code 1 is 0.0.
        let spec = NetworkSpec {
            input_features: 1,
            input_bits: 1,
            layers: vec![
                LayerSpec {
                    in_width: 1,
                    out_width: 1,
                    fanin: 1,
                    in_bits: 1,
                    out_bits: 1,
                },
                LayerSpec {
                    in_width: 1,
                    out_width: 1,
                    fanin: 1,
                    in_bits: 1,
                    out_bits: 1,
                },
            ],
            num_classes: 1,
            seed: 0,
        };
        let mut m = frozen(&spec, 0);
        for l in &mut m.layers {
            l.weights = vec![1.0];
            l.act_quant.scale = 1.0;
            l.bn.running_var = vec![1.0 - l.bn.eps];
        }
        // entry[code 0 (-1.0)]: z = -1 -> level -1 -> code 0
        // entry[code 1 (0.0)]: z = 0 -> level 0 -> code 1
        assert_eq!(enumerate_neuron(&m, 1, 0, 15).unwrap().entries, vec![0, 1]);
    }

    #[test]
    fn unfrozen_and_over_cap_are_rejected() {
        let spec = NetworkSpec::mlp(8, &[], 2, Knobs::uniform(2, 8), 0);
        let mut m = frozen(&spec, 0);
        assert!(matches!(
            enumerate_neuron(&m, 0, 0, 15),
            Err(Error::InvalidSpec(_))
        ));
        m.frozen = false;
        assert!(matches!(
            enumerate_neuron(&m, 0, 0, 16),
            Err(Error::NotFrozen(_))
        ));
    }

    #[test]
    fn tables_match_layer_eval_exhaustively() {
        let spec = NetworkSpec::mlp(6, &[5, 4], 3, Knobs::uniform(2, 3), 21);
        let m = frozen(&spec, 5);
        let net = build_netlist(&m, 15).unwrap();
        for (k, layer) in net.layers.iter().enumerate() {
            let width = m.spec.layers[k].in_width;
            for h in &layer.hbbs {
                for a in 0..1usize << h.table.in_bits {
                    let mut input = vec![0u32; width];
                    for (j, w) in h.input_wires.iter().enumerate() {
                        let src = match *w {
                            Source::Input(i) => i,
                            Source::Neuron(id) => id.neuron,
                        };
                        input[src] = ((a >> ((2 - j) * 2)) & 3) as u32;
                    }
                    let out = m.eval_layer_codes(k, &input).unwrap();
                    assert_eq!(out[h.id.neuron], h.table.lookup(a));
                }
            }
        }
    }

    #[test]
    fn wide_reference_shape() {
        let spec = NetworkSpec::mlp(32, &[32, 32, 32], 32, Knobs::uniform(2, 6), 3);
        let net = build_netlist(&frozen(&spec, 1), 15).unwrap();
        assert_eq!(net.hbb_count(), 128);
        assert!(net
            .hbbs()
            .all(|h| h.table.in_bits == 12 && h.table.out_bits == 2));
        assert_eq!(net.lut_cost().unwrap(), 21_760);
        net.validate().unwrap();
    }

    #[test]
    fn single_neuron_net_has_two_stages() {
        let spec = NetworkSpec::mlp(2, &[], 1, Knobs::uniform(2, 2), 0);
        let net = build_netlist(&frozen(&spec, 0), 15).unwrap();
        assert_eq!(net.hbb_count(), 1);
        assert_eq!(net.register_stages, vec![0, 1]);
    }

    #[test]
    fn storage_is_y_times_two_to_the_x() {
        let t = TruthTable::new(6, 1, vec![0; 64]).unwrap();
        assert_eq!(t.storage_bits(), 64);
        assert!(TruthTable::new(3, 1, vec![0; 7]).is_err());
        assert!(TruthTable::new(1, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn dense_nets_are_not_pruned() {
        let spec = NetworkSpec::mlp(4, &[4, 4], 4, Knobs::uniform(1, 4), 2);
        let net = build_netlist(&frozen(&spec, 0), 15).unwrap();
        assert_eq!(prune_dead(net.clone()), net);
    }

    #[test]
    fn unreferenced_neuron_is_removed() {
        let spec = NetworkSpec::mlp(4, &[4, 6], 2, Knobs::uniform(1, 2), 0);
        let mut m = frozen(&spec, 0);
        m.masks[1].neurons = vec![
            vec![0, 1],
            vec![2, 3],
            vec![0, 2],
            vec![1, 3],
            vec![0, 3],
            vec![1, 2],
        ];
        m.masks[2] = crate::topology::SparsityMask {
            in_width: 6,
            fanin: 3,
            neurons: vec![vec![0, 1, 2], vec![2, 3, 4]],
        };
        m.spec.layers[2].fanin = 3;
        m.layers[2].weights = vec![0.5, -0.25, 1.0, 0.75, -1.0, 0.5];
        let net = build_netlist(&m, 15).unwrap();
        let pruned = prune_dead(net.clone());
        assert_eq!(pruned.hbb_count(), net.hbb_count() - 1);
        assert!(pruned
            .find(HbbId {
                layer: 1,
                neuron: 5
            })
            .is_none());
        pruned.validate().unwrap();
        assert_eq!(prune_dead(pruned.clone()), pruned);
    }

    #[test]
    fn register_policies() {
        let spec = NetworkSpec::mlp(4, &[4, 4, 4], 2, Knobs::uniform(2, 2), 0);
        let net = build_netlist(&frozen(&spec, 0), 15).unwrap();
        assert_eq!(net.register_stages.len(), 5);
        let none = insert_registers(net.clone(), &RegisterPolicy::None);
        assert!(none.register_stages.is_empty());
        let custom = insert_registers(net.clone(), &RegisterPolicy::Custom(vec![4, 0, 9, 2, 2]));
        assert_eq!(custom.register_stages, vec![0, 2, 4]);
        let twice = insert_registers(custom.clone(), &RegisterPolicy::Custom(vec![4, 0, 9, 2, 2]));
        assert_eq!(twice, custom);
        assert_eq!(insert_registers(net.clone(), &RegisterPolicy::Default), net);
    }

    #[test]
    fn topological_order_covers_every_hbb() {
        let spec = NetworkSpec::mlp(6, &[5, 4], 3, Knobs::uniform(2, 3), 21);
        let net = build_netlist(&frozen(&spec, 5), 15).unwrap();
        let order = net.topological_order().unwrap();
        assert_eq!(order.len(), net.hbb_count());
        let pos: std::collections::HashMap<HbbId, usize> =
            order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        for h in net.hbbs() {
            for w in &h.input_wires {
                if let Source::Neuron(src) = w {
                    assert!(pos[src] < pos[&h.id]);
                }
            }
        }
    }
}
