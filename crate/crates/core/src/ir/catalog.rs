use std::collections::BTreeMap;
use std::sync::Arc;

use super::dispatch::ClusterDispatch;
use super::pipeline::{ModelPipeline, PipelineInput};
use super::schema::Schema;
use crate::analysis::TableStats;
use crate::error::{Error, Result};
use crate::tensor::TensorModel;

/// `column` references `table.references` (a unique key there).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForeignKey {
    pub column: String,
    pub table: String,
    pub references: String,
}

#[derive(Clone, Debug)]
pub struct TableMeta {
    pub name: String,
    pub schema: Schema,
    pub unique_keys: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
    pub stats: Option<Arc<TableStats>>,
}

impl TableMeta {
    pub fn new(name: impl Into<String>, schema: Schema) -> Self {
        TableMeta {
            name: name.into(),
            schema,
            unique_keys: Vec::new(),
            foreign_keys: Vec::new(),
            stats: None,
        }
    }

    pub fn with_unique_key(mut self, column: impl Into<String>) -> Self {
        self.unique_keys.push(column.into());
        self
    }

    pub fn with_foreign_key(
        mut self,
        column: impl Into<String>,
        table: impl Into<String>,
        references: impl Into<String>,
    ) -> Self {
        self.foreign_keys.push(ForeignKey {
            column: column.into(),
            table: table.into(),
            references: references.into(),
        });
        self
    }

    pub fn is_unique(&self, column: &str) -> bool {
        self.unique_keys.iter().any(|k| k == column)
    }
}

/// A registered model, as PREDICT sees it.
#[derive(Clone, Debug, PartialEq)]
pub enum CatalogModel {
    Pipeline(Arc<ModelPipeline>),
    Tensor(Arc<TensorModel>),
    Dispatch(Arc<ClusterDispatch>),
}

impl CatalogModel {
    pub fn inputs(&self) -> &[PipelineInput] {
        self.pipeline().inputs()
    }

    pub fn output_width(&self) -> usize {
        self.pipeline().output_width()
    }

    /// The pipeline whose semantics the model implements.
    pub fn pipeline(&self) -> &ModelPipeline {
        match self {
            CatalogModel::Pipeline(p) => p,
            CatalogModel::Tensor(t) => &t.source,
            CatalogModel::Dispatch(d) => &d.fallback,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Catalog {
    tables: BTreeMap<String, TableMeta>,
    models: BTreeMap<String, CatalogModel>,
}

impl Catalog {
    pub fn new() -> Self {
        Catalog::default()
    }

    pub fn add_table(&mut self, table: TableMeta) -> Result<()> {
        if self.tables.contains_key(&table.name) {
            return Err(Error::Workspace(format!("table `{}` declared twice", table.name)));
        }
        self.tables.insert(table.name.clone(), table);
        Ok(())
    }

    pub fn add_model(&mut self, name: impl Into<String>, model: CatalogModel) -> Result<()> {
        let name = name.into();
        if self.models.contains_key(&name) {
            return Err(Error::Workspace(format!("model `{name}` declared twice")));
        }
        self.models.insert(name, model);
        Ok(())
    }

    /// Registers a model under `base__tag_n` with the first free `n`.
    pub fn register_derived(&mut self, base: &str, tag: &str, model: CatalogModel) -> String {
        let root = base.split("__").next().unwrap_or(base);
        let mut n = 1;
        loop {
            let name = format!("{root}__{tag}_{n}");
            if !self.models.contains_key(&name) {
                self.models.insert(name.clone(), model);
                return name;
            }
            n += 1;
        }
    }

    pub fn table(&self, name: &str) -> Result<&TableMeta> {
        self.tables
            .get(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn table_mut(&mut self, name: &str) -> Result<&mut TableMeta> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn model(&self, name: &str) -> Result<&CatalogModel> {
        self.models
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableMeta> {
        self.tables.values()
    }

    pub fn models(&self) -> impl Iterator<Item = (&str, &CatalogModel)> {
        self.models.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn has_model(&self, name: &str) -> bool {
        self.models.contains_key(name)
    }
}
