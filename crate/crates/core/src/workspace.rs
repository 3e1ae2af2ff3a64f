//! Workspaces: a directory with `catalog.json`, CSV tables and model
//! documents, plus the commands run against one.
//!
//! ```json
//! {"tables": {"patient_info": {"csv": "patient_info.csv",
//!                              "schema": [{"name": "id", "type": "numeric"}],
//!                              "unique_keys": ["id"],
//!                              "foreign_keys": [{"column": "id", "table": "blood_tests", "references": "id"}]}},
//!  "models": {"risk": "models/risk.json"}}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codegen::emit_sql;
use crate::error::{Error, Result};
use crate::exec::{
    bench, compare_bags, execute_with_stats, load_csv, BenchReport, Column, ColumnBuilder, Database, ExecConfig,
    ExecStats, Table,
};
use crate::frontend::{
    dispatch_to_json, is_dispatch_doc, load_dispatch, load_pipeline_file, parse_sql, pipeline_to_json,
};
use crate::ir::{Catalog, CatalogModel, DataType, Field, ForeignKey, Literal, ModelPipeline, Plan, Schema, TableMeta};
use crate::rules::{cluster_compile, optimize, ClusterReport, RuleConfig, TraceEntry};

pub const CATALOG_FILE: &str = "catalog.json";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogDoc {
    pub tables: BTreeMap<String, TableDoc>,
    #[serde(default)]
    pub models: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDoc {
    pub csv: String,
    pub schema: Vec<Field>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unique_keys: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub foreign_keys: Vec<ForeignKeyDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForeignKeyDoc {
    pub column: String,
    pub table: String,
    pub references: String,
}

pub struct Workspace {
    pub root: PathBuf,
    pub doc: CatalogDoc,
    pub catalog: Catalog,
    pub db: Database,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Workspace(format!("{}: {e}", path.display()))
}

impl Workspace {
    pub fn load(root: impl AsRef<Path>) -> Result<Workspace> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(CATALOG_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let doc: CatalogDoc = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Workspace(format!("{}: {}: {}", path.display(), e.path(), e.inner())))?;

        let mut catalog = Catalog::new();
        let mut db = Database::new();
        for (name, t) in &doc.tables {
            let schema = Schema::new(t.schema.clone())?;
            let table = load_csv(root.join(&t.csv), &schema)?;
            let mut meta = TableMeta::new(name.clone(), schema);
            meta.unique_keys = t.unique_keys.clone();
            meta.foreign_keys = t
                .foreign_keys
                .iter()
                .map(|f| ForeignKey {
                    column: f.column.clone(),
                    table: f.table.clone(),
                    references: f.references.clone(),
                })
                .collect();
            meta.stats = Some(table.stats());
            catalog.add_table(meta)?;
            db.insert(name.clone(), Arc::new(table));
        }
        check_constraints(&catalog, &db)?;
        for (name, rel) in &doc.models {
            let p = root.join(rel);
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            let model = if is_dispatch_doc(&text) {
                CatalogModel::Dispatch(Arc::new(load_dispatch(&text).map_err(|e| prefix(&p, e))?))
            } else {
                CatalogModel::Pipeline(Arc::new(load_pipeline_file(&p)?))
            };
            catalog.add_model(name.clone(), model)?;
        }
        Ok(Workspace { root, doc, catalog, db })
    }

    /// Writes a new workspace directory and loads it back.
    pub fn create(
        root: impl AsRef<Path>,
        tables: &[(TableMeta, &Table)],
        models: &[(&str, &ModelPipeline)],
    ) -> Result<Workspace> {
        let root = root.as_ref();
        std::fs::create_dir_all(root.join("models")).map_err(|e| io_err(root, e))?;
        let mut doc = CatalogDoc::default();
        for (meta, table) in tables {
            let csv = format!("{}.csv", meta.name);
            let path = root.join(&csv);
            let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
            table.write_csv(std::io::BufWriter::new(file))?;
            doc.tables.insert(
                meta.name.clone(),
                TableDoc {
                    csv,
                    schema: meta.schema.fields().to_vec(),
                    unique_keys: meta.unique_keys.clone(),
                    foreign_keys: meta
                        .foreign_keys
                        .iter()
                        .map(|f| ForeignKeyDoc {
                            column: f.column.clone(),
                            table: f.table.clone(),
                            references: f.references.clone(),
                        })
                        .collect(),
                },
            );
        }
        for (name, p) in models {
            let rel = format!("models/{name}.json");
            let path = root.join(&rel);
            std::fs::write(&path, pipeline_to_json(p)).map_err(|e| io_err(&path, e))?;
            doc.models.insert(name.to_string(), rel);
        }
        write_doc(root, &doc)?;
        Workspace::load(root)
    }

    /// Stores a model document under `models/` and records it in
    /// `catalog.json`.
    pub fn persist_model(&mut self, name: &str, model: &CatalogModel) -> Result<()> {
        let text = match model {
            CatalogModel::Pipeline(p) => pipeline_to_json(p),
            CatalogModel::Dispatch(d) => dispatch_to_json(d),
            CatalogModel::Tensor(_) => {
                return Err(Error::Workspace(format!("tensor model `{name}` has no document form")))
            }
        };
        let rel = format!("models/{name}.json");
        let path = self.root.join(&rel);
        std::fs::create_dir_all(self.root.join("models")).map_err(|e| io_err(&path, e))?;
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.doc.models.insert(name.to_string(), rel);
        write_doc(&self.root, &self.doc)
    }

    pub fn plan(&self, sql: &str) -> Result<Plan> {
        parse_sql(sql, &self.catalog)
    }

    pub fn optimize(&self, sql: &str, rules: &RuleConfig) -> Result<OptimizeOutput> {
        optimize_against(sql, &self.catalog, rules)
    }

    pub fn run(&self, sql: &str, rules: Option<&RuleConfig>, exec: &ExecConfig) -> Result<RunOutput> {
        let plan = match rules {
            Some(r) => self.optimize(sql, r)?.optimized,
            None => self.plan(sql)?,
        };
        let t0 = Instant::now();
        let (table, stats) = execute_with_stats(&plan, &self.db, exec)?;
        Ok(RunOutput {
            table,
            stats,
            elapsed: t0.elapsed(),
        })
    }

    pub fn bench(
        &self,
        sql: &str,
        rules: Option<&RuleConfig>,
        grid: &[ExecConfig],
        warmup: usize,
        runs: usize,
    ) -> Result<BenchReport> {
        let plan = match rules {
            Some(r) => self.optimize(sql, r)?.optimized,
            None => self.plan(sql)?,
        };
        bench(&plan, &self.db, grid, warmup, runs)
    }

    /// Runs the naive and optimized plans on the workspace data and on
    /// `trials` seeded perturbations of it, re-optimizing against each
    /// perturbed table's statistics.
    pub fn validate(
        &self,
        sql: &str,
        rules: &RuleConfig,
        exec: &ExecConfig,
        seed: u64,
        trials: usize,
        tolerance: f64,
    ) -> Result<ValidationReport> {
        self.validate_with(sql, exec, seed, trials, tolerance, &|plan, catalog| {
            Ok(optimize(plan, catalog, rules)?.plan)
        })
    }

    /// [`Workspace::validate`] with a caller-supplied rewrite in place of
    /// the optimizer.
    pub fn validate_with(
        &self,
        sql: &str,
        exec: &ExecConfig,
        seed: u64,
        trials: usize,
        tolerance: f64,
        rewrite: &dyn Fn(&Plan, &mut Catalog) -> Result<Plan>,
    ) -> Result<ValidationReport> {
        let mut reports = Vec::with_capacity(trials + 1);
        for trial in 0..=trials {
            let (catalog, db) = if trial == 0 {
                (self.catalog.clone(), self.db.clone())
            } else {
                self.perturbed(seed.wrapping_add(trial as u64))?
            };
            let naive = parse_sql(sql, &catalog)?;
            let mut opt_catalog = catalog.clone();
            let optimized = rewrite(&naive, &mut opt_catalog)?;
            let a = execute_with_stats(&naive, &db, exec);
            let b = execute_with_stats(&optimized, &db, exec);
            let report = match (a, b) {
                (Ok((x, _)), Ok((y, _))) => {
                    let c = compare_bags(&x, &y, tolerance);
                    TrialReport {
                        trial,
                        rows: x.row_count(),
                        matched: c.matched,
                        max_deviation: c.max_deviation,
                        detail: c.counterexample,
                    }
                }
                (Err(x), Err(y)) => TrialReport {
                    trial,
                    rows: 0,
                    matched: true,
                    max_deviation: 0.0,
                    detail: Some(format!("both plans failed: {x} / {y}")),
                },
                (Err(e), Ok(_)) | (Ok(_), Err(e)) => TrialReport {
                    trial,
                    rows: 0,
                    matched: false,
                    max_deviation: f64::INFINITY,
                    detail: Some(format!("only one plan failed: {e}")),
                },
            };
            reports.push(report);
        }
        Ok(ValidationReport {
            trials: reports,
            tolerance,
        })
    }

    /// The workspace data with non-key values resampled. Key and foreign key
    /// columns are left alone so declared constraints keep holding.
    pub fn perturbed(&self, seed: u64) -> Result<(Catalog, Database)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut catalog = self.catalog.clone();
        let mut db = Database::new();
        for (name, table) in &self.db {
            let meta = self.catalog.table(name)?;
            let frozen: HashSet<&str> = meta
                .unique_keys
                .iter()
                .map(String::as_str)
                .chain(meta.foreign_keys.iter().map(|f| f.column.as_str()))
                .chain(
                    self.catalog
                        .tables()
                        .flat_map(|t| t.foreign_keys.iter())
                        .filter(|f| &f.table == name)
                        .map(|f| f.references.as_str()),
                )
                .collect();
            let columns = table
                .schema()
                .fields()
                .iter()
                .zip(table.columns())
                .map(|(f, c)| {
                    if frozen.contains(f.name.as_str()) {
                        (**c).clone()
                    } else {
                        perturb_column(f, c, &mut rng)
                    }
                })
                .collect();
            let t = Table::from_columns(table.schema().clone(), columns)?;
            catalog.table_mut(name)?.stats = Some(t.stats());
            db.insert(name.clone(), Arc::new(t));
        }
        Ok((catalog, db))
    }

    /// Clusters `table` for `model` (inputs bound by column name) and
    /// registers the dispatcher as a derived model; persisted to disk when
    /// `persist`.
    pub fn cluster_compile(
        &mut self,
        model: &str,
        table: &str,
        k: usize,
        seed: u64,
        persist: bool,
    ) -> Result<ClusterOutput> {
        let pipeline = match self.catalog.model(model)? {
            CatalogModel::Pipeline(p) => p.clone(),
            _ => return Err(Error::Cluster(format!("`{model}` is not a pipeline model"))),
        };
        let sample = self
            .db
            .get(table)
            .ok_or_else(|| Error::UnknownTable(table.to_string()))?
            .clone();
        let bound: Vec<String> = pipeline.inputs().iter().map(|i| i.name.clone()).collect();
        let t0 = Instant::now();
        let (dispatch, clusters) = cluster_compile(&sample, &pipeline, &bound, k, seed)?;
        let compile_time = t0.elapsed();
        let model_entry = CatalogModel::Dispatch(Arc::new(dispatch));
        let name = self.catalog.register_derived(model, "cluster", model_entry.clone());
        if persist {
            self.persist_model(&name, &model_entry)?;
        }
        Ok(ClusterOutput {
            name,
            original_features: pipeline.model().feature_count(),
            clusters,
            compile_time,
        })
    }
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Pipeline { path: p, message } => Error::Pipeline {
            path: format!("{}: {p}", path.display()),
            message,
        },
        other => other,
    }
}

fn write_doc(root: &Path, doc: &CatalogDoc) -> Result<()> {
    let path = root.join(CATALOG_FILE);
    let text = serde_json::to_string_pretty(doc).expect("catalog documents always serialize");
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

/// Unique keys are non-null and distinct; foreign keys point at a unique
/// key and every non-null value has a match.
fn check_constraints(catalog: &Catalog, db: &Database) -> Result<()> {
    let column = |t: &str, c: &str| -> Result<Arc<Column>> {
        db[t].column_by_name(c)
            .cloned()
            .ok_or_else(|| Error::Workspace(format!("constraint names missing column {t}.{c}")))
    };
    for meta in catalog.tables() {
        for k in &meta.unique_keys {
            let c = column(&meta.name, k)?;
            let mut seen = HashSet::new();
            for r in 0..c.len() {
                let v = c
                    .value(r)
                    .ok_or_else(|| Error::Workspace(format!("unique key {}.{k} is NULL in row {}", meta.name, r + 1)))?;
                if !seen.insert(v.clone()) {
                    return Err(Error::Workspace(format!(
                        "unique key {}.{k} repeats value {v}",
                        meta.name
                    )));
                }
            }
        }
        for fk in &meta.foreign_keys {
            let target = catalog.table(&fk.table)?;
            if !target.is_unique(&fk.references) {
                return Err(Error::Workspace(format!(
                    "foreign key {}.{} references {}.{}, which is not a declared unique key",
                    meta.name, fk.column, fk.table, fk.references
                )));
            }
            let keys: HashSet<Literal> = {
                let c = column(&fk.table, &fk.references)?;
                (0..c.len()).filter_map(|r| c.value(r)).collect()
            };
            let c = column(&meta.name, &fk.column)?;
            if let Some(r) = (0..c.len()).find(|&r| c.value(r).is_some_and(|v| !keys.contains(&v))) {
                return Err(Error::Workspace(format!(
                    "foreign key {}.{} value {} in row {} has no match in {}.{}",
                    meta.name,
                    fk.column,
                    c.value(r).expect("checked non-null"),
                    r + 1,
                    fk.table,
                    fk.references
                )));
            }
        }
    }
    Ok(())
}

fn perturb_column(field: &Field, c: &Column, rng: &mut ChaCha8Rng) -> Column {
    let n = c.len();
    let values: Vec<Option<Literal>> = (0..n).map(|r| c.value(r)).collect();
    let present: Vec<&Literal> = values.iter().flatten().collect();
    let distinct: Vec<&Literal> = present.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let (mean, spread) = {
        let nums: Vec<f64> = present.iter().filter_map(|l| l.as_feature_value()).collect();
        let m = nums.iter().sum::<f64>() / nums.len().max(1) as f64;
        let v = nums.iter().map(|x| (x - m).powi(2)).sum::<f64>() / nums.len().max(1) as f64;
        (m, v.sqrt().max(1e-3))
    };
    let mut b = ColumnBuilder::new(field.data_type);
    for v in &values {
        if field.nullable && rng.gen_bool(0.02) {
            b.push_null();
            continue;
        }
        if rng.gen_bool(0.5) || distinct.is_empty() {
            b.push(v.as_ref());
            continue;
        }
        match field.data_type {
            DataType::Numeric => {
                if rng.gen_bool(0.5) {
                    b.push(Some(distinct[rng.gen_range(0..distinct.len())]));
                } else {
                    let base = v.as_ref().and_then(Literal::as_feature_value).unwrap_or(mean);
                    b.push_num(base + rng.gen_range(-1.0..1.0) * spread);
                }
            }
            DataType::Categorical => b.push(Some(distinct[rng.gen_range(0..distinct.len())])),
            DataType::Boolean => b.push_bool(rng.gen_bool(0.5)),
        }
    }
    b.finish()
}

/// Result of optimizing one query.
pub struct OptimizeOutput {
    pub naive: Plan,
    pub optimized: Plan,
    /// The input catalog plus every derived model.
    pub catalog: Catalog,
    pub trace: Vec<TraceEntry>,
    pub sql: String,
}

pub fn optimize_against(sql: &str, catalog: &Catalog, rules: &RuleConfig) -> Result<OptimizeOutput> {
    let naive = parse_sql(sql, catalog)?;
    let mut catalog = catalog.clone();
    let out = optimize(&naive, &mut catalog, rules)?;
    let sql = emit_sql(&out.plan, &catalog)?;
    Ok(OptimizeOutput {
        naive,
        optimized: out.plan,
        catalog,
        trace: out.trace,
        sql,
    })
}

pub struct RunOutput {
    pub table: Table,
    pub stats: ExecStats,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    /// 0 is the unmodified workspace data.
    pub trial: usize,
    pub rows: usize,
    pub matched: bool,
    pub max_deviation: f64,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub trials: Vec<TrialReport>,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.trials.iter().all(|t| t.matched)
    }

    pub fn mismatches(&self) -> usize {
        self.trials.iter().filter(|t| !t.matched).count()
    }

    pub fn max_deviation(&self) -> f64 {
        self.trials.iter().map(|t| t.max_deviation).fold(0.0, f64::max)
    }
}

pub struct ClusterOutput {
    pub name: String,
    pub original_features: usize,
    pub clusters: Vec<ClusterReport>,
    pub compile_time: Duration,
}
