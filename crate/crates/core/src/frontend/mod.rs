//! SQL and pipeline-document ingestion.
//!
//! The accepted grammar is documented on [`parse_query`].

mod dispatch_json;
mod lexer;
mod lower;
mod parser;
mod pipeline_json;

pub use dispatch_json::{dispatch_to_json, is_dispatch_doc, load_dispatch};
pub use lower::{bind, plan_query};
pub(crate) use lower::normalize_conjunct;
pub use parser::{parse_expr, parse_query, JoinClause, Query, Select, SelectItem};
pub use pipeline_json::{load_pipeline, load_pipeline_file, pipeline_to_json, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::ir::{Catalog, Plan};

/// Parses, resolves and binds a query into a validated plan.
pub fn parse_sql(text: &str, catalog: &Catalog) -> Result<Plan> {
    if text.trim().is_empty() {
        return Err(Error::Syntax {
            line: 1,
            column: 1,
            message: "empty query".into(),
        });
    }
    plan_query(&parse_query(text)?, catalog)
}
