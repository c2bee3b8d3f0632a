use std::fmt::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use srzoo::data::{self, from_unit, to_unit};
use srzoo::eval::{self, BenchInput, EntryRecord, TimingOptions, Track, TrackRules};
use srzoo::ir::{self, count_macs, count_params, forward, receptive_field, Breakdown, InitScheme};
use srzoo::search::{self, Constraints, SPACE_SIZE};
use srzoo::zoo::{self, ArchConfig, ZooError, MODEL_IDS};
use srzoo::{Graph, Shape, WeightStore};

use crate::config::Positionals;
use crate::format::{grouped, table};
use crate::{usage, Command, ModelArgs};

/// What a subcommand prints: JSON under `--json`, text otherwise.
pub struct Output {
    pub json: Value,
    pub text: String,
}

fn output(value: &impl Serialize, text: String) -> Result<Output> {
    Ok(Output { json: serde_json::to_value(value)?, text })
}

pub fn dispatch(cmd: Command, seed: u64, pos: Positionals) -> Result<Output> {
    match cmd {
        Command::Inspect(mut a) => {
            pos.fill(&mut a.model.model, "model");
            inspect(&a.model, a.input, a.graph_out.as_deref())
        }
        Command::Degrade(mut a) => {
            pos.fill(&mut a.hr_dir, "hr_dir");
            pos.fill(&mut a.out_dir, "out_dir");
            degrade(&required(a.hr_dir, "HR_DIR")?, &required(a.out_dir, "OUT_DIR")?)
        }
        Command::Synth(mut a) => {
            pos.fill(&mut a.root, "root");
            synth(&required(a.root, "ROOT")?, a.count, a.size, seed)
        }
        Command::InitWeights(mut a) => {
            pos.fill(&mut a.model.model, "model");
            init_weights(&a.model, &a.scheme, &required(a.out, "--out")?, seed)
        }
        Command::Infer(mut a) => {
            pos.fill(&mut a.model.model, "model");
            pos.fill(&mut a.lr_dir, "lr_dir");
            pos.fill(&mut a.out_dir, "out_dir");
            let weights = required(a.weights, "--weights")?;
            infer(&a.model, &weights, &required(a.lr_dir, "LR_DIR")?, &required(a.out_dir, "OUT_DIR")?)
        }
        Command::Bench(mut a) => {
            pos.fill(&mut a.model.model, "model");
            pos.fill(&mut a.lr_dir, "lr_dir");
            let lr_dir = required(a.lr_dir.clone(), "LR_DIR")?;
            bench(&a, &lr_dir, seed)
        }
        Command::Validate(mut a) => {
            pos.fill(&mut a.entries, "entries");
            validate(a.entries.as_deref(), a.table, a.track, a.strict)
        }
        Command::Search(a) => search(&a, seed),
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing required argument {name}")))
}

fn zoo_error(e: ZooError) -> anyhow::Error {
    match e {
        ZooError::UnknownModel(_) | ZooError::InvalidConfig(_) => usage(e.to_string()),
        ZooError::Ir(e) => e.into(),
    }
}

fn overrides(set: &[String]) -> Result<Vec<(String, String)>> {
    set.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {s:?}")))
        })
        .collect()
}

/// A registered id or a graph text file, with overrides applied.
fn resolve_model(args: &ModelArgs) -> Result<(String, Graph)> {
    let id = args.model.as_deref().ok_or_else(|| usage("missing model id"))?;
    let sets = overrides(&args.set)?;
    if MODEL_IDS.contains(&id) {
        return Ok((id.to_string(), zoo::build_model(id, &sets).map_err(zoo_error)?));
    }
    let path = Path::new(id);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let graph = ir::parse_graph(&text).with_context(|| format!("parsing {}", path.display()))?;
        let graph = if sets.is_empty() {
            graph
        } else {
            let cfg = graph.config().ok_or_else(|| usage("graph file has no config to override"))?;
            let cfg = ArchConfig::from_json(cfg).and_then(|c| c.with_overrides(&sets)).map_err(zoo_error)?;
            zoo::build(&cfg).map_err(zoo_error)?
        };
        return Ok((graph.name().to_string(), graph));
    }
    Err(usage(format!("unknown model {id:?}; known ids: {}", MODEL_IDS.join(", "))))
}

fn breakdown_rows(params: &Breakdown, macs: &Breakdown) -> Vec<Vec<String>> {
    params
        .per_block
        .iter()
        .map(|b| {
            vec![
                b.tag.clone(),
                grouped(b.count),
                format!("{:.2}", b.percent),
                grouped(macs.count(&b.tag)),
                format!("{:.2}", macs.percent(&b.tag)),
            ]
        })
        .collect()
}

#[derive(Serialize)]
struct InspectReport {
    model: String,
    fingerprint: String,
    config: Option<Value>,
    input_shape: Shape,
    params: Breakdown,
    macs: Breakdown,
    receptive_field: ir::ReceptiveField,
    reported_params: Option<u64>,
    param_delta: Option<f64>,
}

fn inspect(args: &ModelArgs, input: Shape, graph_out: Option<&Path>) -> Result<Output> {
    let (model, graph) = resolve_model(args)?;
    if input.c != graph.input_channels() {
        return Err(usage(format!("input has {} channels, model expects {}", input.c, graph.input_channels())));
    }
    let params = count_params(&graph);
    let macs = count_macs(&graph, input)?;
    let reported = zoo::reported_params(&model);
    let report = InspectReport {
        fingerprint: graph.fingerprint(),
        config: graph.config().and_then(|c| serde_json::from_str(c).ok()),
        input_shape: input,
        receptive_field: receptive_field(&graph),
        reported_params: reported.map(|r| r.params),
        param_delta: reported.map(|r| zoo::relative_delta(params.total, r.params)),
        params,
        macs,
        model,
    };
    if let Some(path) = graph_out {
        std::fs::write(path, ir::write_graph(&graph)).with_context(|| format!("writing {}", path.display()))?;
    }

    let mut text = String::new();
    writeln!(text, "model            {}", report.model)?;
    writeln!(text, "fingerprint      {}", report.fingerprint)?;
    writeln!(text, "input            {}", report.input_shape)?;
    write!(text, "params           {}", grouped(report.params.total))?;
    match (report.reported_params, report.param_delta) {
        (Some(r), Some(d)) => writeln!(text, " (reported {}, {:+.2}%)", grouped(r), 100.0 * d)?,
        _ => writeln!(text)?,
    }
    writeln!(text, "MACs             {}", grouped(report.macs.total))?;
    writeln!(text, "receptive field  {}", report.receptive_field)?;
    writeln!(text)?;
    text.push_str(&table(&["block", "params", "%", "MACs", "%"], "lrrrr", &breakdown_rows(&report.params, &report.macs)));
    output(&report, text)
}

fn degrade(hr_dir: &Path, out_dir: &Path) -> Result<Output> {
    let manifest = data::degrade_dir(hr_dir, out_dir)?;
    for s in &manifest.skipped {
        eprintln!("warning: skipped {}: {}", s.file, s.reason);
    }
    let text = format!(
        "degraded {} image(s) into {}, skipped {}\n",
        manifest.pairs.len(),
        out_dir.display(),
        manifest.skipped.len()
    );
    output(&manifest, text)
}

fn synth(root: &Path, count: usize, size: usize, seed: u64) -> Result<Output> {
    if size == 0 || !size.is_multiple_of(4) {
        return Err(usage(format!("--size must be a positive multiple of 4, got {size}")));
    }
    let manifest = data::synthesize_dataset(root, count, size, seed)?;
    let text = format!("wrote {count} HR image(s) to {0}/HR and LR versions to {0}/LR\n", root.display());
    output(&manifest, text)
}

fn init_weights(args: &ModelArgs, scheme: &str, out: &Path, seed: u64) -> Result<Output> {
    let (model, graph) = resolve_model(args)?;
    let scheme: InitScheme = scheme.parse().map_err(usage)?;
    let store = ir::init_weights(&graph, seed, scheme);
    ir::save_weights(&store, out).with_context(|| format!("writing {}", out.display()))?;
    let value = json!({
        "model": model,
        "fingerprint": store.fingerprint,
        "out": out,
        "slots": store.slots.len(),
        "params": store.numel(),
        "seed": seed,
        "scheme": scheme.to_string(),
    });
    let text = format!(
        "wrote {} ({} slots, {} params, {} seed {seed}) to {}\n",
        model,
        store.slots.len(),
        grouped(store.numel() as u64),
        scheme,
        out.display()
    );
    Ok(Output { json: value, text })
}

fn load_store(path: &Path, graph: &Graph) -> Result<WeightStore> {
    ir::load_weights(path, graph).with_context(|| format!("loading weights {}", path.display()))
}

fn load_images(dir: &Path) -> Result<Vec<(String, srzoo::Tensor)>> {
    let images = data::load_dir(dir)?;
    if images.is_empty() {
        bail!("no PNG images in {}", dir.display());
    }
    Ok(images)
}

#[derive(Serialize)]
struct InferredImage {
    file: String,
    lr_size: [usize; 2],
    sr_size: [usize; 2],
}

fn infer(args: &ModelArgs, weights: &Path, lr_dir: &Path, out_dir: &Path) -> Result<Output> {
    let (model, graph) = resolve_model(args)?;
    let store = load_store(weights, &graph)?;
    let images = load_images(lr_dir)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut outputs = Vec::with_capacity(images.len());
    for (name, lr) in &images {
        let sr = from_unit(&forward(&graph, &store, &to_unit(lr)).with_context(|| format!("running {name}"))?);
        data::save_png(&sr, out_dir.join(name))?;
        let (l, s) = (lr.shape(), sr.shape());
        outputs.push(InferredImage { file: name.clone(), lr_size: [l.h, l.w], sr_size: [s.h, s.w] });
    }
    let text = format!("wrote {} SR image(s) to {}\n", outputs.len(), out_dir.display());
    let value = json!({ "model": model, "fingerprint": store.fingerprint, "outputs": outputs });
    Ok(Output { json: value, text })
}

fn bench(a: &crate::BenchArgs, lr_dir: &Path, seed: u64) -> Result<Output> {
    if a.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let (model, graph) = resolve_model(&a.model)?;
    let store = match &a.weights {
        Some(p) => load_store(p, &graph)?,
        None => ir::init_weights(&graph, seed, InitScheme::KaimingUniform),
    };
    let lr_named = load_images(lr_dir)?;
    let hr: Option<Vec<srzoo::Tensor>> = match &a.hr_dir {
        Some(dir) => Some(
            lr_named
                .iter()
                .map(|(name, _)| data::load_png(dir.join(name)).with_context(|| format!("ground truth for {name}")))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let baseline = match &a.baseline {
        Some(p) => Some(
            eval::load_entries(p)?
                .into_iter()
                .find(|e| e.baseline)
                .ok_or_else(|| anyhow!("{}: no baseline row", p.display()))?,
        ),
        None => None,
    };
    let lr: Vec<srzoo::Tensor> = lr_named.into_iter().map(|(_, t)| t).collect();
    let report = eval::bench(&BenchInput {
        model: &model,
        graph: &graph,
        store: &store,
        lr: &lr,
        hr: hr.as_deref(),
        timing: TimingOptions { trials: a.trials, warmup: !a.no_warmup, single_thread: a.single_thread },
        baseline,
        rules: if a.strict { TrackRules::strict() } else { TrackRules::default() },
    })?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        std::fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    }

    let mut text = String::new();
    writeln!(text, "model         {} ({})", report.model, report.fingerprint)?;
    writeln!(text, "params        {}", grouped(report.params.total))?;
    writeln!(text, "MACs          {} at {}", grouped(report.macs.total), report.input_shape)?;
    let trials: Vec<String> = report.trials.iter().map(|t| format!("{t:.4}")).collect();
    writeln!(text, "trials        [{}] s/image over {} image(s)", trials.join(", "), report.images)?;
    writeln!(text, "best runtime  {:.4} s/image", report.best_avg_runtime)?;
    if let Some(p) = &report.psnr {
        match p.mean_db {
            Some(db) => writeln!(text, "PSNR          {db:.2} dB ({} exact)", p.infinite)?,
            None => writeln!(text, "PSNR          inf (all {} exact)", p.images)?,
        }
    }
    for v in &report.track_verdicts {
        let status = if v.verdict.ranked { "ranked".to_string() } else { v.verdict.reasons.join("; ") };
        writeln!(text, "track {}       {status}", v.track)?;
    }
    output(&report, text)
}

#[derive(Serialize)]
struct TrackTable {
    track: Track,
    standings: Vec<eval::Standing>,
}

fn validate(entries: Option<&Path>, table_no: Option<u8>, track: Option<u8>, strict: bool) -> Result<Output> {
    let as_track = |n: u8| Track::try_from(n).map_err(|e| usage(e.to_string()));
    let entries: Vec<EntryRecord> = match (entries, table_no) {
        (Some(p), _) => eval::load_entries(p)?,
        (None, Some(n)) => eval::table_fixture(as_track(n)?),
        (None, None) => return Err(usage("give an entries file or --table N")),
    };
    let tracks = match track.or(table_no) {
        Some(n) => vec![as_track(n)?],
        None => Track::ALL.to_vec(),
    };
    let rules = if strict { TrackRules::strict() } else { TrackRules::default() };
    let mut tables = Vec::new();
    for t in tracks {
        tables.push(TrackTable { track: t, standings: eval::rank_entries(&entries, t, &rules)? });
    }

    let mut text = String::new();
    for t in &tables {
        writeln!(text, "track {}", t.track)?;
        let rows: Vec<Vec<String>> = t
            .standings
            .iter()
            .map(|s| {
                vec![
                    s.rank.map_or("-".into(), |r| r.to_string()),
                    s.entry.team.clone(),
                    format!("{:.2}", s.entry.psnr),
                    grouped(s.entry.params),
                    format!("{:.3}", s.entry.runtime_s),
                    s.reasons.join("; "),
                ]
            })
            .collect();
        text.push_str(&table(&["rank", "team", "psnr", "params", "runtime_s", "unranked because"], "rlrrrl", &rows));
        text.push('\n');
    }
    output(&json!({ "rules": rules, "tracks": tables }), text)
}

fn search(a: &crate::SearchArgs, seed: u64) -> Result<Output> {
    let s = a.input;
    if s.c != 3 || s.n == 0 || s.h == 0 || s.w == 0 {
        return Err(usage(format!("--input must be Nx3xHxW with nonzero sizes, got {s}")));
    }
    let configs: Vec<_> = if a.full {
        search::enumerate_krahaon_space().collect()
    } else {
        if a.k == 0 || a.k > SPACE_SIZE {
            return Err(usage(format!("--k must be in 1..={SPACE_SIZE}")));
        }
        search::sample(seed, a.k)?
    };
    let limits = Constraints { max_params: a.max_params, max_macs: a.max_macs, input_shape: s, max_rf: a.max_rf };
    let kept = search::filter_constraints(&configs, &limits)?;

    let mut text = format!("scanned {} configs, {} within bounds\n", configs.len(), kept.len());
    let shown = if a.top == 0 { kept.len() } else { a.top.min(kept.len()) };
    if shown > 0 {
        let rows: Vec<Vec<String>> = kept[..shown]
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = c.config;
                let mut r = vec![(i + 1).to_string()];
                r.extend([k.x, k.y, k.z, k.n_x, k.n_y, k.n_z].map(|v| v.to_string()));
                r.extend([grouped(c.params), grouped(c.macs), c.rf.to_string()]);
                r
            })
            .collect();
        text.push_str(&table(&["rank", "x", "y", "z", "n_x", "n_y", "n_z", "params", "MACs", "RF"], "rrrrrrrrrr", &rows));
    }
    let value = json!({
        "scanned": configs.len(),
        "kept": kept.len(),
        "seed": seed,
        "full": a.full,
        "constraints": limits,
        "candidates": kept,
    });
    Ok(Output { json: value, text })
}
