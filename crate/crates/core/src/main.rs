use clap::{Parser, Subcommand, ValueEnum};
use csa_forge::arith::build_modular_adder;
use csa_forge::comm::{build_bell_measure, build_fanout_with, build_teleport_with, build_unfanout_with};
use csa_forge::estimate::{self, default_modulus};
use csa_forge::export;
use csa_forge::formulas::{self, FormulaId, FormulaValue, METRICS};
use csa_forge::hier::{HierCircuit, Stage};
use csa_forge::model::{Block, Circuit, ModelError};
use csa_forge::modexp::{build_modexp_tree, ModExpPlan};
use csa_forge::mult::{build_mma_tree, build_modular_multiplier, build_multiplier_symbolic, Variant};
use csa_forge::sim::{self, Outcomes};
use csa_forge::verify::{verify_architecture, verify_modules_flat, ArchitectureRules};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

// stdout writes that end the process quietly when the reader has gone away
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = write!(std::io::stdout(), $($t)*) {
            stdout_failed(e);
        }
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($t)*) {
            stdout_failed(e);
        }
    }};
}

fn stdout_failed(e: std::io::Error) -> ! {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        std::process::exit(0);
    }
    eprintln!("error: stdout: {e}");
    std::process::exit(6);
}

#[derive(Parser)]
#[command(name = "csa-forge", version, about = "Synthesize, estimate, simulate and verify modular arithmetic circuits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a circuit and write it as JSON.
    Synth {
        #[command(subcommand)]
        what: Synth,
        /// Output file (stdout when omitted).
        #[arg(short, long, global = true)]
        output: Option<PathBuf>,
    },
    /// Closed-form resources, optionally beside the constructed counts.
    Estimate {
        #[arg(long)]
        block: String,
        #[arg(long)]
        n: u64,
        #[arg(long = "mod")]
        modulus: Option<u64>,
        #[arg(long)]
        constructed: bool,
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        #[arg(long)]
        csv: bool,
    },
    /// Gate-level simulation of a circuit file, or classical evaluation with --semantic.
    Simulate(SimArgs),
    /// Architecture and module checks of a circuit file ("-" reads stdin).
    Verify {
        file: String,
        /// Register width for the per-module size and width-ratio rules.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 40.0)]
        c: f64,
        #[arg(long)]
        json: bool,
    },
    /// Render a circuit file.
    Export {
        format: ExportFormat,
        file: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Synth {
    /// Bell measurement, teleport chain, fanout or unfanout.
    Comm {
        #[arg(long, value_enum)]
        kind: CommKind,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Reset measured ancillae with conditioned X gates.
        #[arg(long)]
        resets: bool,
    },
    /// Constant-depth modular adder tile.
    Adder {
        #[arg(long)]
        n: usize,
        #[arg(long = "mod")]
        modulus: u64,
    },
    /// Fully placed modular multiplier, flattened.
    Mult {
        #[arg(long)]
        n: usize,
        #[arg(long = "mod")]
        modulus: u64,
        /// Classical base times a quantum x.
        #[arg(long, requires = "base")]
        serial: bool,
        #[arg(long)]
        base: Option<u64>,
    },
    /// Module-level exponentiation tree (summary; too large to flatten).
    ModexpTree {
        #[arg(long)]
        n: usize,
        #[arg(long = "mod")]
        modulus: u64,
        #[arg(long, default_value_t = 2)]
        base: u64,
        /// Leaf count (defaults to 2867n).
        #[arg(long)]
        t: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CommKind {
    Bell,
    Teleport,
    Fanout,
    Unfanout,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Svg,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemanticBlock {
    Adder,
    Mult,
    Mma,
    Modexp,
}

#[derive(clap::Args)]
struct SimArgs {
    /// Circuit file written by `synth` ("-" reads stdin).
    file: Option<String>,
    #[arg(long)]
    a: Option<u128>,
    #[arg(long)]
    b: Option<u128>,
    #[arg(long)]
    c: Option<u128>,
    /// Further port values, as name=value.
    #[arg(long = "set", value_name = "PORT=VALUE")]
    sets: Vec<String>,
    #[arg(long, conflicts_with = "outcomes")]
    seed: Option<u64>,
    /// Forced measurement outcomes, one 0/1 per record slot.
    #[arg(long)]
    outcomes: Option<String>,
    /// Evaluate a block classically instead of simulating a file.
    #[arg(long, value_enum, conflicts_with = "file")]
    semantic: Option<SemanticBlock>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "mod")]
    modulus: Option<u64>,
    #[arg(long)]
    base: Option<u64>,
    #[arg(long)]
    t: Option<usize>,
    /// Input values for --semantic, comma separated.
    #[arg(long, value_delimiter = ',')]
    inputs: Vec<u128>,
    #[arg(long)]
    json: bool,
}

enum Failure {
    Violation,
    Usage(String),
    Malformed(String),
    Domain(String),
    Simulation(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Violation => 1,
            Failure::Usage(_) => 2,
            Failure::Malformed(_) => 3,
            Failure::Domain(_) => 4,
            Failure::Simulation(_) => 5,
            Failure::Io(_) => 6,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> Failure {
    Failure::Domain(e.to_string())
}

fn read_input(path: &str) -> Result<String, Failure> {
    let mut s = String::new();
    if path == "-" {
        std::io::stdin().read_to_string(&mut s).map_err(|e| Failure::Io(e.to_string()))?;
    } else {
        s = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
    }
    Ok(s)
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            out!("{text}");
            Ok(())
        }
    }
}

/// Circuit plus named ports, as written by `synth`.
fn load(path: &str) -> Result<(Circuit, BTreeMap<String, Vec<usize>>), Failure> {
    let text = read_input(path)?;
    let c = Circuit::from_json(&text).map_err(|e| Failure::Malformed(e.to_string()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Malformed(e.to_string()))?;
    let ports = match v.get("ports") {
        Some(p) => serde_json::from_value(p.clone()).map_err(|e| Failure::Malformed(format!("ports: {e}")))?,
        None => BTreeMap::new(),
    };
    if ports.values().flatten().any(|&q: &usize| q >= c.qubits.len()) {
        return Err(Failure::Malformed("port refers to an undeclared qubit".into()));
    }
    Ok((c, ports))
}

fn circuit_json(c: &Circuit, ports: &BTreeMap<String, Vec<usize>>) -> String {
    let mut v: Value = serde_json::from_str(&c.to_json()).expect("circuit json");
    if !ports.is_empty() {
        v["ports"] = json!(ports);
    }
    let mut s = v.to_string();
    s.push('\n');
    s
}

fn block_json(b: &Block) -> String {
    circuit_json(&b.circuit, &b.ports)
}

fn hier_summary(h: &HierCircuit) -> Value {
    let stages: Vec<Value> = h
        .stages()
        .iter()
        .map(|s| match s {
            Stage::Compute(insts) => json!({
                "compute": insts.iter().map(|i| json!({
                    "block": i.child.name, "count": i.count, "placement": format!("{:?}", i.placement).to_lowercase(),
                    "resources": i.child.resources(),
                })).collect::<Vec<_>>()
            }),
            Stage::Teleport(pairs) => json!({"teleport": pairs.len()}),
            Stage::Transfer { layers, qubits } => json!({"transfer": {"layers": layers, "qubits": qubits}}),
        })
        .collect();
    json!({"name": h.name, "resources": h.resources(), "stages": stages})
}

fn synth(what: Synth, output: Option<PathBuf>) -> Result<(), Failure> {
    let text = match what {
        Synth::Comm { kind, n, resets } => {
            let b = match kind {
                CommKind::Bell => build_bell_measure([0, 0], [1, 0]),
                CommKind::Teleport => build_teleport_with(n, resets),
                CommKind::Fanout => build_fanout_with(n, resets),
                CommKind::Unfanout => build_unfanout_with(n, resets),
            }
            .map_err(domain)?;
            block_json(&b)
        }
        Synth::Adder { n, modulus } => block_json(&build_modular_adder(n, modulus).map_err(domain)?.block()),
        Synth::Mult { n, modulus, serial, base } => {
            let variant = if serial { Variant::Serial } else { Variant::Parallel };
            let mm = build_modular_multiplier(n, modulus, variant, base).map_err(domain)?;
            let c = mm.flatten().map_err(domain)?;
            let mut ports = BTreeMap::new();
            ports.insert("x".to_string(), mm.x_in.clone());
            if !mm.y_in.is_empty() {
                ports.insert("y".to_string(), mm.y_in.clone());
            }
            ports.insert("u".to_string(), mm.out_u.clone());
            ports.insert("v".to_string(), mm.out_v.clone());
            circuit_json(&c, &ports)
        }
        Synth::ModexpTree { n, modulus, base, t } => {
            let t = t.unwrap_or(formulas::ksv_t(n as u64) as usize);
            if t < 2 {
                return Err(Failure::Domain("the tree needs at least two leaves".into()));
            }
            let plan = ModExpPlan::new(n, modulus, base, t).map_err(domain)?;
            let h = build_modexp_tree(&plan).map_err(domain)?;
            format!("{}\n", serde_json::to_string_pretty(&hier_summary(&h)).expect("summary"))
        }
    };
    write_output(output.as_ref(), &text)
}

fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.fract() == 0.0 => format!("{}", x as i64),
        Some(x) => format!("{x:.3}"),
        None => "-".into(),
    }
}

fn estimate_cmd(
    block: &str,
    n: u64,
    modulus: Option<u64>,
    constructed: bool,
    json_out: bool,
    csv: bool,
) -> Result<(), Failure> {
    let id: FormulaId = block.parse().map_err(|e: formulas::FormulaError| Failure::Usage(e.to_string()))?;
    let value = formulas::eval(id, n).map_err(domain)?;
    let nu = n as usize;
    match value {
        FormulaValue::Scalar(f) => {
            let c = if constructed { estimate::constructed_scalar(id, nu, modulus).map_err(domain)? } else { None };
            let pass = c.map(|c| c <= f);
            if json_out {
                let mut v = json!({"id": id.name(), "n": n, "formula": f});
                if let Some(c) = c {
                    v["constructed"] = json!(c);
                    v["pass"] = json!(pass);
                }
                outln!("{v}");
            } else if csv {
                outln!("{}", export::BOUNDS_CSV_HEADER);
                let cs = c.map(|x| x.to_string()).unwrap_or_default();
                let ps = pass.map(|x| x.to_string()).unwrap_or_default();
                outln!("{},{n},value,{f},{cs},{ps}", id.name());
            } else {
                outln!("{:<8} {:>14} {:>14} {:>6}", "metric", "formula", "constructed", "pass");
                let cs = c.map(|x| x.to_string()).unwrap_or("-".into());
                let ps = pass.map(|x| x.to_string()).unwrap_or("-".into());
                outln!("{:<8} {:>14} {:>14} {:>6}", "value", f, cs, ps);
            }
            if pass == Some(false) {
                return Err(Failure::Violation);
            }
        }
        FormulaValue::Report(r) => {
            let check = if constructed { estimate::check(id, nu, modulus).map_err(domain)? } else { None };
            if json_out {
                match &check {
                    Some(c) => outln!("{}", c.to_json()),
                    None => outln!("{}", json!({"id": id.name(), "n": n, "formula": r.to_json()})),
                }
            } else if csv {
                outln!("{}", export::BOUNDS_CSV_HEADER);
                match &check {
                    Some(c) => out!("{}", export::bounds_csv(c)),
                    None => {
                        for (m, v) in METRICS.iter().zip(r.values) {
                            if let Some(v) = v {
                                outln!("{},{n},{m},{v},,", id.name());
                            }
                        }
                    }
                }
            } else {
                outln!("{:<8} {:>18} {:>14} {:>6}", "metric", "formula", "constructed", "pass");
                for (i, m) in METRICS.iter().enumerate() {
                    let row = check.as_ref().map(|c| &c.rows[i]);
                    let cs = row.map(|r| r.constructed.to_string()).unwrap_or("-".into());
                    let ps = row.and_then(|r| r.pass).map(|p| p.to_string()).unwrap_or("-".into());
                    outln!("{:<8} {:>18} {:>14} {:>6}", m, fmt_num(r.values[i]), cs, ps);
                }
            }
            if check.is_some_and(|c| !c.pass()) {
                return Err(Failure::Violation);
            }
        }
    }
    Ok(())
}

fn parse_outcomes(s: &str) -> Result<Vec<bool>, Failure> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(Failure::Usage(format!("outcome bits must be 0 or 1, got {ch:?}"))),
        })
        .collect()
}

fn simulate_semantic(block: SemanticBlock, a: &SimArgs) -> Result<(), Failure> {
    let need = |x: Option<usize>, f: &str| x.ok_or_else(|| Failure::Usage(format!("--semantic needs --{f}")));
    let n = need(a.n, "n")?;
    let m = a.modulus.unwrap_or_else(|| default_modulus(n));
    let mut inputs = a.inputs.clone();
    let h = match block {
        SemanticBlock::Adder => {
            if inputs.is_empty() {
                inputs = vec![a.a.unwrap_or(0), a.b.unwrap_or(0), a.c.unwrap_or(0)];
            }
            build_modular_adder(n, m).map_err(domain)?.hier()
        }
        SemanticBlock::Mult => build_multiplier_symbolic(n, m).map_err(domain)?,
        SemanticBlock::Mma => build_mma_tree(inputs.len(), n, m).map_err(domain)?,
        SemanticBlock::Modexp => {
            let t = need(a.t, "t")?;
            let plan = ModExpPlan::new(n, m, a.base.unwrap_or(2), t).map_err(domain)?;
            build_modexp_tree(&plan).map_err(domain)?
        }
    };
    let out = sim::run_semantic(&h, &inputs).map_err(domain)?;
    let decoded = match block {
        SemanticBlock::Modexp => out[0],
        _ => (out[0] + out[1]) % m as u128,
    };
    if a.json {
        outln!("{}", json!({"block": h.name, "inputs": inputs, "outputs": out, "decoded": decoded}));
    } else {
        outln!("outputs {out:?}\ndecoded {decoded}");
    }
    Ok(())
}

fn simulate(a: SimArgs) -> Result<(), Failure> {
    if let Some(block) = a.semantic {
        return simulate_semantic(block, &a);
    }
    let file = a.file.as_deref().ok_or_else(|| Failure::Usage("simulate needs a circuit file or --semantic".into()))?;
    let (c, ports) = load(file)?;
    let mut values: Vec<(String, u128)> = Vec::new();
    for (name, v) in [("a", a.a), ("b", a.b), ("c", a.c)] {
        if let Some(v) = v {
            values.push((name.into(), v));
        }
    }
    for s in &a.sets {
        let (k, v) = s.split_once('=').ok_or_else(|| Failure::Usage(format!("expected PORT=VALUE, got {s}")))?;
        let v = v.parse().map_err(|_| Failure::Usage(format!("bad value in {s}")))?;
        values.push((k.to_string(), v));
    }
    let mut initial = Vec::new();
    for (name, v) in &values {
        let qs = ports.get(name).ok_or_else(|| Failure::Usage(format!("circuit has no port {name}")))?;
        if qs.len() < 128 && v >> qs.len() != 0 {
            return Err(Failure::Domain(format!("{v} does not fit in the {}-qubit port {name}", qs.len())));
        }
        initial.extend(qs.iter().enumerate().map(|(i, &q)| (q, (v >> i) & 1 == 1)));
    }
    let outcomes = match &a.outcomes {
        Some(s) => Outcomes::Forced(parse_outcomes(s)?),
        None => Outcomes::Seed(a.seed.unwrap_or(0)),
    };
    let state = sim::run(&c, &initial, outcomes).map_err(|e| Failure::Simulation(e.to_string()))?;
    let mut out = Map::new();
    for (name, qs) in &ports {
        let bits: Option<Vec<bool>> = qs.iter().map(|&q| state.bit(q)).collect();
        let v = bits.map(|b| b.iter().enumerate().map(|(i, &x)| (x as u128) << i).sum::<u128>());
        out.insert(name.clone(), v.map_or(Value::Null, |v| json!(v)));
    }
    if a.json {
        outln!("{}", json!({"ports": out, "support": state.support()}));
    } else {
        for (k, v) in &out {
            outln!("{k} = {v}");
        }
    }
    Ok(())
}

fn verify_cmd(file: &str, n: Option<usize>, c: f64, json_out: bool) -> Result<(), Failure> {
    let (circ, _) = load(file)?;
    let rules = ArchitectureRules { c, ..Default::default() };
    let structural = match circ.validate() {
        Ok(()) => None,
        Err(ModelError::SchemaVersion(v)) => return Err(Failure::Malformed(format!("schema version {v}"))),
        Err(e) => Some(e.to_string()),
    };
    let mut rep = verify_architecture(&circ, &rules);
    if let Some(n) = n {
        rep.merge(verify_modules_flat(&circ, n, &rules));
    }
    if json_out {
        let mut v: Value = serde_json::from_str(&rep.to_json()).expect("report json");
        v["structural"] = json!(structural);
        outln!("{v}");
    } else {
        if let Some(s) = &structural {
            outln!("structural: {s}");
        }
        out!("{rep}");
    }
    if rep.is_empty() && structural.is_none() {
        Ok(())
    } else {
        Err(Failure::Violation)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Synth { what, output } => synth(what, output),
        Cmd::Estimate { block, n, modulus, constructed, json, csv } => {
            estimate_cmd(&block, n, modulus, constructed, json, csv)
        }
        Cmd::Simulate(a) => simulate(a),
        Cmd::Verify { file, n, c, json } => verify_cmd(&file, n, c, json),
        Cmd::Export { format, file, output } => {
            let (c, _) = load(&file)?;
            let text = match format {
                ExportFormat::Dot => export::to_dot(&c),
                ExportFormat::Svg => export::to_svg(&c),
                ExportFormat::Csv => export::gates_csv(&c),
            };
            write_output(output.as_ref(), &text)
        }
    }
}

fn main() -> ExitCode {
    if let Some(k) = std::env::var("CSA_FORGE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Violation => {}
                Failure::Usage(s)
                | Failure::Malformed(s)
                | Failure::Domain(s)
                | Failure::Simulation(s)
                | Failure::Io(s) => {
                    eprintln!("error: {s}")
                }
            }
            ExitCode::from(f.code())
        }
    }
}
