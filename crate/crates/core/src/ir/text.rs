//! Line-oriented graph text format.
//!
//! ```text
//! srzoo-graph v1
//! name msrresnet
//! config {"arch":"msrresnet",...}
//! node input Input input channels=3
//! node conv_first SfeBlk conv in=3 out=64 k=3x3 stride=1 pad=1 dil=1 groups=1 pad_mode=zero bias=true <- input
//! ...
//! output out
//! shared a,b
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Graph, IrError, LayerKind, LayerSpec, Result};
use crate::tensor::{ConvParams, PadMode, ResizeMode, ResizeSpec};

const HEADER: &str = "srzoo-graph v1";

fn kind_fields(kind: &LayerKind) -> String {
    match kind {
        LayerKind::Input { channels } => format!("input channels={channels}"),
        LayerKind::Conv(p) => format!(
            "conv in={} out={} k={}x{} stride={} pad={} dil={} groups={} pad_mode={} bias={}",
            p.in_channels,
            p.out_channels,
            p.kernel.0,
            p.kernel.1,
            p.stride,
            p.padding,
            p.dilation,
            p.groups,
            match p.pad_mode {
                PadMode::Zero => "zero",
                PadMode::Reflect => "reflect",
            },
            p.has_bias
        ),
        LayerKind::Activation(a) => format!("act fn={a}"),
        LayerKind::PixelShuffle { r } => format!("pixel_shuffle r={r}"),
        LayerKind::Resize(s) => format!(
            "resize scale={} mode={} antialias={} align_corners={}",
            s.scale,
            match s.mode {
                ResizeMode::Bilinear => "bilinear",
                ResizeMode::Bicubic => "bicubic",
            },
            s.antialias,
            s.align_corners
        ),
        LayerKind::GlobalAvgPool => "global_avg_pool".to_string(),
        LayerKind::Concat => "concat".to_string(),
        LayerKind::Add => "add".to_string(),
        LayerKind::Mul => "mul".to_string(),
        LayerKind::Split { sizes, part } => {
            let sizes: Vec<String> = sizes.iter().map(usize::to_string).collect();
            format!("split sizes={} part={part}", sizes.join(","))
        }
        LayerKind::Scale { learnable, init } => format!("scale learnable={learnable} init={init}"),
        LayerKind::Dense { in_features, out_features, has_bias } => {
            format!("dense in={in_features} out={out_features} bias={has_bias}")
        }
    }
}

pub fn write_graph(graph: &Graph) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "name {}", graph.name()).unwrap();
    if let Some(cfg) = graph.config() {
        writeln!(out, "config {cfg}").unwrap();
    }
    for n in graph.nodes() {
        write!(out, "node {} {} {}", n.id, n.block_tag, kind_fields(&n.kind)).unwrap();
        if !n.inputs.is_empty() {
            write!(out, " <- {}", n.inputs.join(",")).unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "output {}", graph.output()).unwrap();
    for g in graph.shared_groups() {
        writeln!(out, "shared {}", g.join(",")).unwrap();
    }
    out
}

struct Fields<'a> {
    map: HashMap<&'a str, &'a str>,
    line: usize,
}

impl<'a> Fields<'a> {
    fn err(&self, detail: impl Into<String>) -> IrError {
        IrError::Parse { line: self.line, detail: detail.into() }
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.map.get(key).copied().ok_or_else(|| self.err(format!("missing field {key}")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse::<T>().map_err(|_| self.err(format!("bad value {raw:?} for {key}")))
    }
}

fn parse_kind(kind: &str, fields: &Fields<'_>) -> Result<LayerKind> {
    Ok(match kind {
        "input" => LayerKind::Input { channels: fields.get("channels")? },
        "conv" => {
            let k = fields.raw("k")?;
            let (kh, kw) = k
                .split_once('x')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| fields.err(format!("bad kernel {k:?}")))?;
            let pad_mode = match fields.raw("pad_mode")? {
                "zero" => PadMode::Zero,
                "reflect" => PadMode::Reflect,
                other => return Err(fields.err(format!("bad pad_mode {other:?}"))),
            };
            LayerKind::Conv(ConvParams {
                in_channels: fields.get("in")?,
                out_channels: fields.get("out")?,
                kernel: (kh, kw),
                stride: fields.get("stride")?,
                padding: fields.get("pad")?,
                dilation: fields.get("dil")?,
                groups: fields.get("groups")?,
                pad_mode,
                has_bias: fields.get("bias")?,
            })
        }
        "act" => LayerKind::Activation(
            fields.raw("fn")?.parse().map_err(|e: crate::tensor::TensorError| fields.err(e.to_string()))?,
        ),
        "pixel_shuffle" => LayerKind::PixelShuffle { r: fields.get("r")? },
        "resize" => LayerKind::Resize(ResizeSpec {
            scale: fields.get("scale")?,
            mode: match fields.raw("mode")? {
                "bilinear" => ResizeMode::Bilinear,
                "bicubic" => ResizeMode::Bicubic,
                other => return Err(fields.err(format!("bad resize mode {other:?}"))),
            },
            antialias: fields.get("antialias")?,
            align_corners: fields.get("align_corners")?,
        }),
        "global_avg_pool" => LayerKind::GlobalAvgPool,
        "concat" => LayerKind::Concat,
        "add" => LayerKind::Add,
        "mul" => LayerKind::Mul,
        "split" => {
            let sizes = fields
                .raw("sizes")?
                .split(',')
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| fields.err("bad split sizes"))?;
            LayerKind::Split { sizes, part: fields.get("part")? }
        }
        "scale" => LayerKind::Scale { learnable: fields.get("learnable")?, init: fields.get("init")? },
        "dense" => LayerKind::Dense {
            in_features: fields.get("in")?,
            out_features: fields.get("out")?,
            has_bias: fields.get("bias")?,
        },
        other => return Err(fields.err(format!("unknown layer kind {other:?}"))),
    })
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == HEADER => {}
        _ => return Err(IrError::Parse { line: 1, detail: format!("expected header {HEADER:?}") }),
    }
    let mut name = None;
    let mut config = None;
    let mut output = None;
    let mut nodes = Vec::new();
    let mut shared = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let perr = |d: &str| IrError::Parse { line: lineno, detail: d.to_string() };
        let (head, rest) = line.split_once(' ').ok_or_else(|| perr("expected `<keyword> <value>`"))?;
        match head {
            "name" => name = Some(rest.trim().to_string()),
            "config" => config = Some(rest.trim().to_string()),
            "output" => output = Some(rest.trim().to_string()),
            "shared" => shared.push(rest.trim().split(',').map(str::to_string).collect()),
            "node" => {
                let (decl, inputs) = match rest.split_once(" <- ") {
                    Some((d, i)) => (d, i.trim().split(',').map(str::to_string).collect()),
                    None => (rest, Vec::new()),
                };
                let mut parts = decl.split_whitespace();
                let (Some(id), Some(tag), Some(kind)) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(perr("node needs id, tag and kind"));
                };
                let mut map = HashMap::new();
                for kv in parts {
                    let (k, v) = kv.split_once('=').ok_or_else(|| perr(&format!("bad field {kv:?}")))?;
                    map.insert(k, v);
                }
                let fields = Fields { map, line: lineno };
                nodes.push(LayerSpec {
                    id: id.to_string(),
                    kind: parse_kind(kind, &fields)?,
                    inputs,
                    block_tag: tag.to_string(),
                });
            }
            other => return Err(perr(&format!("unknown keyword {other:?}"))),
        }
    }
    let name = name.ok_or(IrError::Parse { line: 0, detail: "missing name".into() })?;
    let output = output.ok_or(IrError::Parse { line: 0, detail: "missing output".into() })?;
    let graph = Graph::new(name, nodes, output, shared)?;
    Ok(match config {
        Some(c) => graph.with_config(c),
        None => graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::GraphBuilder;
    use crate::tensor::Activation;

    #[test]
    fn round_trip_covers_every_kind() {
        let mut b = GraphBuilder::new("all");
        let x = b.input(4);
        b.set_tag("Blk");
        let c = b.conv("c", &x, ConvParams::new(4, 4, 3).dilated(2).reflect().no_bias());
        let a = b.act("a", &c, Activation::LeakyRelu { alpha: 0.05 });
        let parts = b.split("s", &a, &[1, 3]);
        let cat = b.concat("cat", &[&parts[1], &parts[0]]);
        let p = b.add("pool", LayerKind::GlobalAvgPool, &[&cat]);
        let d = b.add("fc", LayerKind::Dense { in_features: 4, out_features: 4, has_bias: true }, &[&p]);
        let m = b.add("gate", LayerKind::Mul, &[&cat, &d]);
        let s = b.scale("sc", &m, true, 0.1);
        let sum = b.sum("sum", &[&s, &x]);
        let ps = b.pixel_shuffle("ps", &sum, 2);
        let r = b.add("up", LayerKind::Resize(ResizeSpec::bicubic(2.0)), &[&x]);
        let c2 = b.conv("c2", &r, ConvParams::new(4, 4, 1));
        let c3 = b.conv("c3", &c2, ConvParams::new(4, 4, 1));
        b.share(vec![c2.clone(), c3.clone()]);
        let r2 = b.conv("r2", &c3, ConvParams::new(4, 1, 1));
        let out = b.sum("out", &[&ps, &r2]);
        let g = b.finish(&out).unwrap().with_config(r#"{"arch":"test"}"#);

        let text = write_graph(&g);
        let back = parse_graph(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(write_graph(&back), text);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "srzoo-graph v1\nname x\nnode input Input input channels=3\nnode c Blk conv in=3 <- input\noutput c\n";
        match parse_graph(text) {
            Err(IrError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_graph("nope").is_err());
    }
}
