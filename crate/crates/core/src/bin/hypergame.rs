use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hypergame::adversary::{Adversary, Avoider, RandomFair, Scripted, Subset};
use hypergame::game::{GameState, Limits, SessionError, SessionStats, Termination, Transcript};
use hypergame::minimax::{minimax_moves_to_mark, strategy_worst_case};
use hypergame::model::{parse_model_with, serialize_model, ModelDecl, ParseOptions};
use hypergame::provider::{gen_chain, gen_random_bounded_degree, gen_ring, CounterMachine, FileProvider, Provider, RandomGraph};
use hypergame::transform::{apply_transforms, parse_transform_list};

const EXIT_ALL_MARKED: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_UNREACHABLE: u8 = 3;
const EXIT_MOVE_CAP: u8 = 4;
const EXIT_ADVERSARY: u8 = 5;

/// Game-based conformance testing on hypergraph models.
#[derive(Parser)]
#[command(name = "hypergame", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print vertex and edge ranks.
    Rank(RankArgs),
    /// Play a testing session.
    Run(RunArgs),
    /// Compare the min-rank strategy with exhaustive search.
    Solve(SolveArgs),
    /// Rewrite a model.
    Transform(TransformArgs),
    /// Generate a model.
    Gen(GenArgs),
}

#[derive(Args)]
struct ModelOpts {
    /// Require every vertex to be declared with a `vertex` line.
    #[arg(long)]
    strict_vertices: bool,
}

#[derive(Args)]
struct RankArgs {
    model: PathBuf,
    /// Vertices to mark before ranking (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    after_mark: Vec<String>,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdversaryKind {
    Random,
    Avoider,
    Subset,
    Script,
}

#[derive(Args)]
struct RunArgs {
    /// Model file; omit when using --gen.
    #[arg(required_unless_present = "gen", conflicts_with = "gen")]
    model: Option<PathBuf>,
    /// Generated model: `random:N:D:F:SEED`, `chain:K`, `ring:N:EXTRA:F:SEED`
    /// or (lazy only) `counter:N`.
    #[arg(long)]
    gen: Option<String>,
    /// Comma-separated transforms applied before the session.
    #[arg(long)]
    transform: Option<String>,
    #[arg(long, value_enum, default_value = "random")]
    adversary: AdversaryKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allowed responses for the subset adversary.
    #[arg(long)]
    allowed: Option<PathBuf>,
    /// Responses for the script adversary, one vertex per line.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    max_moves: u64,
    /// Transcript output (TSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Stats output (JSON).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Run K sessions with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeat: u64,
    /// Expand states only when first visited.
    #[arg(long)]
    lazy: bool,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct SolveArgs {
    model: PathBuf,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct TransformArgs {
    model: PathBuf,
    /// Comma-separated: break-self-loops, edge-coverage, branch-coverage,
    /// compress-chains.
    #[arg(long)]
    apply: String,
    /// Output model; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// JSON report of added, rewritten and removed items.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    opts: ModelOpts,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    /// Output model; stdout when absent.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenKind {
    /// Random bounded-degree hypergraph.
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        out_degree: usize,
        #[arg(long)]
        fanout: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A line of states.
    Chain {
        #[arg(long)]
        length: usize,
    },
    /// A ring with extra random hyperedges.
    Ring {
        #[arg(long)]
        states: usize,
        #[arg(long, default_value_t = 0)]
        extra: usize,
        #[arg(long, default_value_t = 2)]
        fanout: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure with its exit code.
struct Fail(u8, String);

impl Fail {
    fn config(msg: impl ToString) -> Self {
        Fail(EXIT_CONFIG, msg.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rank(a) => cmd_rank(a),
        Command::Run(a) => cmd_run(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("hypergame: {msg}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail::config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(|e| Fail::config(format!("{}: {e}", path.display())))
}

fn load(path: &Path, opts: &ModelOpts) -> Result<ModelDecl, Fail> {
    let text = read(path)?;
    let popts = ParseOptions {
        strict_vertices: opts.strict_vertices,
    };
    parse_model_with(&text, popts).map_err(|e| Fail::config(format!("{}: {e}", path.display())))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Fail> {
    match output {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_rank(a: RankArgs) -> Result<u8, Fail> {
    let decl = load(&a.model, &a.opts)?;
    let mut marks: Vec<&str> = a.after_mark.iter().map(String::as_str).collect();
    marks.retain(|m| *m != decl.initial);
    let gs = GameState::at_position(&decl, &marks, &decl.initial).map_err(Fail::config)?;
    // dead edges leave vertex ranks alone, so listing them costs nothing
    let ranks = hypergame::oracle_ranks(gs.graph(), true);
    print!("{}", ranks.listing(gs.graph(), true));
    Ok(EXIT_ALL_MARKED)
}

fn cmd_solve(a: SolveArgs) -> Result<u8, Fail> {
    let decl = load(&a.model, &a.opts)?;
    let mut gs = GameState::start(&decl).map_err(Fail::config)?;
    let value = minimax_moves_to_mark(&gs).map_err(Fail::config)?;
    let strategy = strategy_worst_case(&mut gs);
    println!("value {value}");
    println!("strategy {strategy}");
    println!("optimal {}", if value == strategy { "yes" } else { "no" });
    Ok(EXIT_ALL_MARKED)
}

fn cmd_transform(a: TransformArgs) -> Result<u8, Fail> {
    let decl = load(&a.model, &a.opts)?;
    let kinds = parse_transform_list(&a.apply).map_err(Fail::config)?;
    let (out, reports) = apply_transforms(&decl, &kinds).map_err(Fail::config)?;
    emit(a.output.as_deref(), &serialize_model(&out))?;
    if let Some(path) = &a.report {
        let body: Vec<_> = reports
            .iter()
            .map(|(k, r)| json!({ "transform": k, "report": r }))
            .collect();
        write(path, &format!("{}\n", serde_json::to_string_pretty(&body).expect("report json")))?;
    }
    Ok(EXIT_ALL_MARKED)
}

fn cmd_gen(a: GenArgs) -> Result<u8, Fail> {
    let decl = match a.kind {
        GenKind::Random {
            states,
            out_degree,
            fanout,
            seed,
        } => gen_random_bounded_degree(states, out_degree, fanout, seed),
        GenKind::Chain { length } => gen_chain(length),
        GenKind::Ring {
            states,
            extra,
            fanout,
            seed,
        } => gen_ring(states, extra, fanout, seed),
    }
    .map_err(Fail::config)?;
    emit(a.output.as_deref(), &serialize_model(&decl))?;
    Ok(EXIT_ALL_MARKED)
}

/// Where a session's states come from.
enum Source {
    Decl(ModelDecl),
    Random(RandomGraph),
    Counter(u64),
}

fn gen_fields<const N: usize>(desc: &str, rest: &str) -> Result<[u64; N], Fail> {
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() != N {
        return Err(Fail::config(format!("--gen {desc}: expected {N} fields")));
    }
    let mut out = [0; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse()
            .map_err(|_| Fail::config(format!("--gen {desc}: `{p}` is not a number")))?;
    }
    Ok(out)
}

fn parse_gen(desc: &str) -> Result<Source, Fail> {
    let (kind, rest) = desc.split_once(':').unwrap_or((desc, ""));
    let n = |x: u64| x as usize;
    Ok(match kind {
        "random" => {
            let [states, d, f, seed] = gen_fields::<4>(desc, rest)?;
            Source::Random(RandomGraph::new(n(states), n(d), n(f), seed).map_err(Fail::config)?)
        }
        "chain" => {
            let [k] = gen_fields::<1>(desc, rest)?;
            Source::Decl(gen_chain(n(k)).map_err(Fail::config)?)
        }
        "ring" => {
            let [states, extra, f, seed] = gen_fields::<4>(desc, rest)?;
            Source::Decl(gen_ring(n(states), n(extra), n(f), seed).map_err(Fail::config)?)
        }
        "counter" => Source::Counter(gen_fields::<1>(desc, rest)?[0]),
        _ => return Err(Fail::config(format!("--gen {desc}: unknown generator `{kind}`"))),
    })
}

fn session_exit(err: SessionError) -> Fail {
    match err {
        SessionError::Adversary(_) | SessionError::NotInTail { .. } | SessionError::IllegalEdge { .. } => {
            Fail(EXIT_ADVERSARY, err.to_string())
        }
        other => Fail::config(other),
    }
}

fn termination_code(t: Option<Termination>) -> u8 {
    match t {
        Some(Termination::AllMarked) => EXIT_ALL_MARKED,
        Some(Termination::Unreachable) => EXIT_UNREACHABLE,
        Some(Termination::MoveCap) | None => EXIT_MOVE_CAP,
    }
}

fn cmd_run(a: RunArgs) -> Result<u8, Fail> {
    let mut source = match (&a.model, &a.gen) {
        (Some(path), _) => Source::Decl(load(path, &a.opts)?),
        (None, Some(desc)) => parse_gen(desc)?,
        (None, None) => unreachable!("clap requires a model source"),
    };
    if let Some(list) = &a.transform {
        let kinds = parse_transform_list(list).map_err(Fail::config)?;
        if !kinds.is_empty() {
            let decl = match source {
                Source::Decl(d) => d,
                Source::Random(rg) => rg.materialize(),
                Source::Counter(_) => {
                    return Err(Fail::config("transforms need a materialized model, not counter"))
                }
            };
            source = Source::Decl(apply_transforms(&decl, &kinds).map_err(Fail::config)?.0);
        }
    }
    if matches!(source, Source::Counter(_)) && !a.lazy {
        return Err(Fail::config("the counter generator needs --lazy"));
    }
    let allowed = match (a.adversary, &a.allowed) {
        (AdversaryKind::Subset, Some(p)) => Some(Subset::parse_allowed(&read(p)?).map_err(Fail::config)?),
        (AdversaryKind::Subset, None) => return Err(Fail::config("--adversary subset needs --allowed")),
        _ => None,
    };
    let script = match (a.adversary, &a.script) {
        (AdversaryKind::Script, Some(p)) => Some(read(p)?),
        (AdversaryKind::Script, None) => return Err(Fail::config("--adversary script needs --script")),
        _ => None,
    };
    let limits = Limits { max_moves: a.max_moves };

    let mut traces = Vec::new();
    let mut stats: Vec<(u64, SessionStats)> = Vec::new();
    let mut code = EXIT_ALL_MARKED;
    for i in 0..a.repeat {
        let seed = a.seed.wrapping_add(i);
        let mut adv: Box<dyn Adversary> = match a.adversary {
            AdversaryKind::Random => Box::new(RandomFair::new(seed)),
            AdversaryKind::Avoider => Box::new(Avoider),
            AdversaryKind::Subset => Box::new(Subset::new(allowed.clone().expect("checked"), seed)),
            AdversaryKind::Script => Box::new(Scripted::parse(script.as_deref().expect("checked"))),
        };
        let mut gs = start(&source, a.lazy).map_err(Fail::config)?;
        let (t, s) = gs.run(adv.as_mut(), &limits).map_err(session_exit)?;
        code = code.max(termination_code(s.terminated));
        println!(
            "session {i} seed {seed}: {} after {} moves, coverage {}/{}, R {}",
            s.terminated.map_or("running".to_string(), |t| t.to_string()),
            s.moves,
            s.states_marked_e,
            s.states_total,
            s.max_rank_r,
        );
        traces.push(t);
        stats.push((seed, s));
    }
    if let Some(path) = &a.trace {
        write(path, &trace_text(&traces))?;
    }
    if let Some(path) = &a.stats {
        let value = if stats.len() == 1 {
            stats[0].1.to_json(Some(stats[0].0))
        } else {
            aggregate(&stats)
        };
        write(path, &format!("{}\n", serde_json::to_string_pretty(&value).expect("stats json")))?;
    }
    Ok(code)
}

fn start(source: &Source, lazy: bool) -> Result<GameState, SessionError> {
    if !lazy {
        return match source {
            Source::Decl(d) => GameState::start(d),
            Source::Random(rg) => GameState::start(&rg.materialize()),
            Source::Counter(_) => unreachable!("rejected above"),
        };
    }
    let provider: Box<dyn Provider + Send> = match source {
        Source::Decl(d) => Box::new(FileProvider::new(d)),
        Source::Random(rg) => Box::new(rg.clone()),
        Source::Counter(n) => Box::new(CounterMachine { n: *n }),
    };
    GameState::start_lazy(provider)
}

fn trace_text(traces: &[Transcript]) -> String {
    match traces {
        [only] => only.to_tsv(),
        _ => traces
            .iter()
            .enumerate()
            .map(|(i, t)| format!("# session {i}\n{}", t.to_tsv()))
            .collect(),
    }
}

fn aggregate(stats: &[(u64, SessionStats)]) -> serde_json::Value {
    let n = stats.len() as f64;
    let count = |t: Termination| stats.iter().filter(|(_, s)| s.terminated == Some(t)).count();
    let mean = |f: &dyn Fn(&SessionStats) -> f64| stats.iter().map(|(_, s)| f(s)).sum::<f64>() / n;
    json!({
        "sessions": stats.iter().map(|(seed, s)| s.to_json(Some(*seed))).collect::<Vec<_>>(),
        "aggregate": {
            "count": stats.len(),
            "all_marked": count(Termination::AllMarked),
            "unreachable": count(Termination::Unreachable),
            "move_cap": count(Termination::MoveCap),
            "mean_moves": mean(&|s| s.moves as f64),
            "mean_states_marked": mean(&|s| s.states_marked_e as f64),
            "min_states_marked": stats.iter().map(|(_, s)| s.states_marked_e).min(),
            "max_states_marked": stats.iter().map(|(_, s)| s.states_marked_e).max(),
        }
    })
}
