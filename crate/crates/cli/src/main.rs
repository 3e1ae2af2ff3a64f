use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use infq_core::exec::{ExecConfig, NullPolicy};
use infq_core::ir::{output_schema, ArithOp, Catalog, CatalogModel, DataType, Literal, Op, Plan, PlanNode, ScalarExpr};
use infq_core::rules::{optimize, parse_rule_set, RuleConfig, TraceEntry};
use infq_core::synth;
use infq_core::workspace::Workspace;
use infq_core::Error;

#[derive(Parser)]
#[command(name = "infq", version, about = "Optimize, run and validate SQL inference queries")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Workspace directory holding catalog.json
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rows per execution batch
    #[arg(long, global = true, default_value_t = 2048)]
    batch: usize,
    #[arg(long, global = true, value_enum, default_value_t = Policy::Error)]
    null_policy: Policy,
    /// `all`, `none` or a comma-separated list of rule names
    #[arg(long, global = true, default_value = "all")]
    rules: String,
    /// Print plans before and after every fired rule
    #[arg(long, global = true)]
    explain: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Error,
    Drop,
}

#[derive(Args)]
struct QueryArg {
    /// File holding the SQL query
    #[arg(required_unless_present = "sql")]
    query: Option<PathBuf>,
    /// Query text given inline
    #[arg(short = 'e', long, conflicts_with = "query")]
    sql: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rule trace and the optimized SQL
    Optimize {
        #[command(flatten)]
        query: QueryArg,
        /// Write the SQL here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a query and write the result as CSV
    Run {
        #[command(flatten)]
        query: QueryArg,
        /// Execute the plan as written
        #[arg(long)]
        no_opt: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare naive and optimized plans on the data and on perturbed copies
    Validate {
        #[command(flatten)]
        query: QueryArg,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        /// Shift model outputs of the optimized plan (exercises the checker)
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Time a query over a grid of batch sizes
    Bench {
        #[command(flatten)]
        query: QueryArg,
        #[arg(long)]
        no_opt: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,64,2048")]
        batches: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long)]
        json: bool,
    },
    /// Cluster a table and register specialized models for each cluster
    ClusterCompile {
        #[arg(long)]
        model: String,
        #[arg(long)]
        table: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Dump table statistics as JSON
    Stats { table: Option<String> },
    /// Write a synthetic example workspace
    GenExample {
        #[arg(value_enum)]
        kind: ExampleKind,
        dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleKind {
    Hospital,
    Flights,
}

/// Usage problems exit with 2, everything else with 1.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

impl Global {
    fn policy(&self) -> NullPolicy {
        match self.null_policy {
            Policy::Error => NullPolicy::Error,
            Policy::Drop => NullPolicy::Drop,
        }
    }

    fn rules(&self) -> Result<RuleConfig, Failure> {
        let config = RuleConfig {
            null_policy: self.policy(),
            cluster_seed: self.seed,
            ..RuleConfig::default()
        }
        .with_rules(parse_rule_set(&self.rules)?);
        config.validate()?;
        Ok(config)
    }

    fn exec(&self) -> Result<ExecConfig, Failure> {
        let mut config = ExecConfig {
            batch_size: self.batch,
            null_policy: self.policy(),
            ..ExecConfig::default()
        };
        if let Some(t) = self.threads {
            config.threads = t;
        }
        config.validate()?;
        Ok(config)
    }
}

impl QueryArg {
    fn text(&self) -> Result<String, Failure> {
        match (&self.sql, &self.query) {
            (Some(s), _) => Ok(s.clone()),
            (None, Some(p)) => fs::read_to_string(p).map_err(|e| io_failure(p, e)),
            (None, None) => Err(Failure {
                code: 2,
                message: "no query given".into(),
            }),
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Optimize { query, out } => {
            let (rules, sql) = (g.rules()?, query.text()?);
            let ws = Workspace::load(&g.workspace)?;
            let o = ws.optimize(&sql, &rules)?;
            print_trace(&o.trace, g.explain);
            if g.explain {
                dump_graphs(&o.optimized, &o.catalog);
            }
            write_output(out.as_deref(), o.sql.as_bytes())?;
            Ok(0)
        }
        Command::Run { query, no_opt, out } => {
            let (rules, exec, sql) = (g.rules()?, g.exec()?, query.text()?);
            let ws = Workspace::load(&g.workspace)?;
            if g.explain && !no_opt {
                print_trace(&ws.optimize(&sql, &rules)?.trace, true);
            }
            let r = ws.run(&sql, (!no_opt).then_some(&rules), &exec)?;
            let mut buf = Vec::new();
            r.table.write_csv(&mut buf)?;
            write_output(out.as_deref(), &buf)?;
            eprintln!(
                "{} rows in {:.3} s ({} model rows, {} tree node visits, batch {}, {} threads{})",
                r.table.row_count(),
                r.elapsed.as_secs_f64(),
                r.stats.model_rows,
                r.stats.node_visits,
                exec.batch_size,
                exec.threads,
                if *no_opt { ", unoptimized" } else { "" },
            );
            Ok(0)
        }
        Command::Validate {
            query,
            trials,
            tolerance,
            inject_fault,
        } => {
            let (rules, exec, sql) = (g.rules()?, g.exec()?, query.text()?);
            let ws = Workspace::load(&g.workspace)?;
            let report = ws.validate_with(&sql, &exec, g.seed, *trials, *tolerance, &|plan, catalog| {
                let p = optimize(plan, catalog, &rules)?.plan;
                if *inject_fault {
                    corrupt(&p, catalog)
                } else {
                    Ok(p)
                }
            })?;
            for t in &report.trials {
                let label = if t.trial == 0 { "data".to_string() } else { format!("trial {}", t.trial) };
                println!(
                    "{label:>9}: {} rows, max deviation {:.3e}, {}",
                    t.rows,
                    t.max_deviation,
                    if t.matched { "ok" } else { "MISMATCH" }
                );
                if let Some(d) = t.detail.as_ref().filter(|_| !t.matched || g.explain) {
                    println!("           {d}");
                }
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            println!(
                "{verdict}: {} of {} runs mismatched, max deviation {:.3e} (tolerance {:.1e})",
                report.mismatches(),
                report.trials.len(),
                report.max_deviation(),
                report.tolerance
            );
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Bench {
            query,
            no_opt,
            batches,
            runs,
            warmup,
            json,
        } => {
            let (rules, exec, sql) = (g.rules()?, g.exec()?, query.text()?);
            let grid: Vec<ExecConfig> = batches
                .iter()
                .map(|&b| ExecConfig {
                    batch_size: b,
                    ..exec.clone()
                })
                .collect();
            for c in &grid {
                c.validate()?;
            }
            let ws = Workspace::load(&g.workspace)?;
            let report = ws.bench(&sql, (!no_opt).then_some(&rules), &grid, *warmup, *runs)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&report.to_json()).expect("json"));
            } else {
                println!("{:>8} {:>8} {:>12} {:>14} {:>12}", "batch", "threads", "mean s", "rows/s", "visits/row");
                for e in &report.entries {
                    let visits = if e.rows == 0 { 0.0 } else { e.node_visits as f64 / e.rows as f64 };
                    println!(
                        "{:>8} {:>8} {:>12.4} {:>14.0} {:>12.2}",
                        e.config.batch_size, e.config.threads, e.mean_secs, e.rows_per_sec, visits
                    );
                }
            }
            Ok(0)
        }
        Command::ClusterCompile { model, table, k } => {
            let mut ws = Workspace::load(&g.workspace)?;
            let out = ws.cluster_compile(model, table, *k, g.seed, true)?;
            println!(
                "registered {} ({} clusters, compiled in {:.3} ms)",
                out.name,
                out.clusters.len(),
                out.compile_time.as_secs_f64() * 1e3
            );
            for (i, c) in out.clusters.iter().enumerate() {
                let constants: Vec<String> = c.constants.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!(
                    "  cluster {i}: {} rows, {} of {} features, {} nodes, constants [{}]",
                    c.members,
                    c.feature_count,
                    out.original_features,
                    c.node_count,
                    constants.join(", ")
                );
            }
            Ok(0)
        }
        Command::Stats { table } => {
            let ws = Workspace::load(&g.workspace)?;
            let mut doc = serde_json::Map::new();
            for meta in ws.catalog.tables() {
                if table.as_ref().is_some_and(|t| t != &meta.name) {
                    continue;
                }
                let stats = meta.stats.as_ref().map_or(json!(null), |s| s.to_json());
                doc.insert(meta.name.clone(), stats);
            }
            if let Some(t) = table.as_ref().filter(|_| doc.is_empty()) {
                return Err(Error::UnknownTable(t.clone()).into());
            }
            let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
            write_output(None, text.as_bytes())?;
            Ok(0)
        }
        Command::GenExample { kind, dir, rows } => {
            match kind {
                ExampleKind::Hospital => {
                    synth::hospital::workspace(dir, *rows, g.seed, true)?;
                    fs::write(dir.join("query.sql"), format!("{}\n", synth::hospital::QUERY))
                        .map_err(|e| io_failure(dir, e))?;
                }
                ExampleKind::Flights => {
                    synth::flights::workspace(dir, *rows, g.seed)?;
                    fs::write(dir.join("query.sql"), format!("{}\n", synth::flights::QUERY))
                        .map_err(|e| io_failure(dir, e))?;
                }
            }
            println!("wrote {}", dir.display());
            Ok(0)
        }
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_failure(p, e)),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| io_failure(Path::new("stdout"), e)),
    }
}

fn print_trace(trace: &[TraceEntry], explain: bool) {
    if trace.is_empty() {
        eprintln!("-- no rules enabled; plan unchanged");
        return;
    }
    for t in trace.iter().filter(|t| explain || t.fired) {
        if explain {
            eprint!("{t}");
        } else {
            let delta = t.nodes_after as isize - t.nodes_before as isize;
            eprintln!(
                "-- {} (pass {}): nodes {} -> {} ({delta:+})",
                t.rule, t.pass, t.nodes_before, t.nodes_after
            );
            for n in &t.notes {
                eprintln!("     {n}");
            }
        }
    }
    if !trace.iter().any(|t| t.fired) {
        eprintln!("-- no rule changed the plan");
    }
}

fn dump_graphs(plan: &Plan, catalog: &Catalog) {
    for node in plan.preorder() {
        if let Op::TensorEval { model, .. } = &node.op {
            if let Ok(CatalogModel::Tensor(t)) = catalog.model(model) {
                eprintln!("-- graph {model}");
                eprintln!("{}", serde_json::to_string(&t.graph.to_json()).expect("json"));
            }
        }
    }
}

/// Adds 0.5 to every numeric output column.
fn corrupt(plan: &Plan, catalog: &Catalog) -> infq_core::Result<Plan> {
    let schema = output_schema(plan, catalog)?;
    let exprs = schema
        .fields()
        .iter()
        .map(|f| {
            let c = ScalarExpr::Column(f.name.clone());
            let e = if f.data_type == DataType::Numeric {
                ScalarExpr::Arith {
                    op: ArithOp::Add,
                    left: Box::new(c),
                    right: Box::new(ScalarExpr::Literal(Literal::Num(0.5))),
                }
            } else {
                c
            };
            (f.name.clone(), e)
        })
        .collect();
    Ok(PlanNode::project(plan.clone(), exprs))
}
