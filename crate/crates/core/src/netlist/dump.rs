//! Line-oriented netlist interchange format.
//!
//! ```text
//! logicforge-netlist 1
//! inputs <features> <bits>
//! outputs <classes> <bits>
//! registers <count> <stage>...
//! layers <L>
//! layer <k> <width> <in_bits> <out_bits> <hbb_count>
//! hbb <k> <n> <X> <Y> <fanin> <wire>...
//! <table rows>
//! ...
//! end
//! ```
//!
//! Fields are separated by single spaces. A wire is `i<feature>` for a
//! network input or `n<neuron>` for a neuron of the previous layer, listed in
//! address order (first wire is most significant). Each `hbb` line is
//! followed by its `2^X` entries in address order, each written as
//! `ceil(Y / 4)` lowercase hex digits, 64 entries per line. `layer` blocks
//! appear in order and list their HBBs by ascending neuron index.

use std::fmt::Write as _;
use std::path::Path;

use super::{HbbId, HbbInstance, NetLayer, Netlist, Source, TruthTable};
use crate::error::{Error, Result};

const MAGIC: &str = "logicforge-netlist";
const VERSION: u32 = 1;
const ENTRIES_PER_LINE: usize = 64;

pub fn to_text(net: &Netlist) -> String {
    let mut s = String::new();
    writeln!(s, "{MAGIC} {VERSION}").unwrap();
    writeln!(s, "inputs {} {}", net.input_features, net.input_bits).unwrap();
    writeln!(s, "outputs {} {}", net.num_classes, net.output_bits).unwrap();
    write!(s, "registers {}", net.register_stages.len()).unwrap();
    for r in &net.register_stages {
        write!(s, " {r}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "layers {}", net.layers.len()).unwrap();
    for (k, layer) in net.layers.iter().enumerate() {
        writeln!(
            s,
            "layer {k} {} {} {} {}",
            layer.width,
            layer.in_bits,
            layer.out_bits,
            layer.hbbs.len()
        )
        .unwrap();
        for h in &layer.hbbs {
            let t = &h.table;
            write!(
                s,
                "hbb {} {} {} {} {}",
                h.id.layer,
                h.id.neuron,
                t.in_bits,
                t.out_bits,
                h.input_wires.len()
            )
            .unwrap();
            for w in &h.input_wires {
                match w {
                    Source::Input(i) => write!(s, " i{i}").unwrap(),
                    Source::Neuron(id) => write!(s, " n{}", id.neuron).unwrap(),
                }
            }
            writeln!(s).unwrap();
            let digits = t.out_bits.div_ceil(4) as usize;
            for chunk in t.entries.chunks(ENTRIES_PER_LINE) {
                for e in chunk {
                    write!(s, "{e:0digits$x}").unwrap();
                }
                writeln!(s).unwrap();
            }
        }
    }
    writeln!(s, "end").unwrap();
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let (i, l) = self
            .it
            .next()
            .ok_or_else(|| Error::Netlist("unexpected end of dump".into()))?;
        self.line = i + 1;
        Ok(l)
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Netlist(format!("line {}: {msg}", self.line))
    }

    /// Next line split into fields, checked against a leading keyword.
    fn fields(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let f: Vec<&str> = l.split(' ').collect();
        if f[0] != keyword {
            return Err(self.err(format!("expected `{keyword}`, found {:?}", f[0])));
        }
        Ok(f[1..].to_vec())
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number {s:?}")))
    }
}

pub fn from_text(text: &str) -> Result<Netlist> {
    let mut r = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    let head = r.fields(MAGIC)?;
    if head.len() != 1 || r.num::<u32>(head[0])? != VERSION {
        return Err(r.err("unsupported dump version"));
    }
    let f = r.fields("inputs")?;
    let (input_features, input_bits): (usize, u32) = (r.num(f[0])?, r.num(f[1])?);
    let f = r.fields("outputs")?;
    let (num_classes, output_bits): (usize, u32) = (r.num(f[0])?, r.num(f[1])?);
    let f = r.fields("registers")?;
    let count: usize = r.num(f[0])?;
    if f.len() != count + 1 {
        return Err(r.err("register count does not match the list"));
    }
    let register_stages = f[1..]
        .iter()
        .map(|x| r.num(x))
        .collect::<Result<Vec<usize>>>()?;
    let f = r.fields("layers")?;
    let n_layers: usize = r.num(f[0])?;

    let mut layers = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let f = r.fields("layer")?;
        if f.len() != 5 || r.num::<usize>(f[0])? != k {
            return Err(r.err(format!("expected layer {k} header")));
        }
        let width: usize = r.num(f[1])?;
        let in_bits: u32 = r.num(f[2])?;
        let out_bits: u32 = r.num(f[3])?;
        let n_hbbs: usize = r.num(f[4])?;
        let mut hbbs = Vec::with_capacity(n_hbbs);
        for _ in 0..n_hbbs {
            let f = r.fields("hbb")?;
            if f.len() < 5 {
                return Err(r.err("short hbb header"));
            }
            let layer: usize = r.num(f[0])?;
            let neuron: usize = r.num(f[1])?;
            let x: u32 = r.num(f[2])?;
            let y: u32 = r.num(f[3])?;
            let fanin: usize = r.num(f[4])?;
            if layer != k || f.len() != 5 + fanin || x == 0 || x > 30 || y == 0 || y > 31 {
                return Err(r.err("malformed hbb header"));
            }
            let input_wires = f[5..]
                .iter()
                .map(|w| match (w.get(..1), w.get(1..)) {
                    (Some("i"), Some(v)) if k == 0 => Ok(Source::Input(r.num(v)?)),
                    (Some("n"), Some(v)) if k > 0 => Ok(Source::Neuron(HbbId {
                        layer: k - 1,
                        neuron: r.num(v)?,
                    })),
                    _ => Err(r.err(format!("bad wire {w:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let digits = y.div_ceil(4) as usize;
            let total = 1usize << x;
            let mut entries = Vec::with_capacity(total);
            while entries.len() < total {
                let line = r.next()?;
                if line.len() % digits != 0 || !line.is_ascii() {
                    return Err(r.err("table row is not a whole number of entries"));
                }
                for i in (0..line.len()).step_by(digits) {
                    let e = u32::from_str_radix(&line[i..i + digits], 16).map_err(|_| {
                        r.err(format!("bad table entry {:?}", &line[i..i + digits]))
                    })?;
                    entries.push(e);
                }
            }
            if entries.len() != total {
                return Err(r.err("table has extra entries"));
            }
            let table = TruthTable::new(x, y, entries).map_err(|e| r.err(e))?;
            hbbs.push(HbbInstance {
                id: HbbId { layer, neuron },
                table,
                input_wires,
            });
        }
        layers.push(NetLayer {
            width,
            in_bits,
            out_bits,
            hbbs,
        });
    }
    r.fields("end")?;
    let net = Netlist {
        input_features,
        input_bits,
        num_classes,
        output_bits,
        layers,
        register_stages,
    };
    net.validate()?;
    Ok(net)
}

pub fn save(net: &Netlist, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Netlist> {
    from_text(&std::fs::read_to_string(path)?)
}
