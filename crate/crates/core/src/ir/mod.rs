//! The unified IR: relational operators, model operators and their payloads.

pub mod catalog;
pub mod dispatch;
pub mod expr;
pub mod model;
pub mod pipeline;
pub mod plan;
pub mod schema;
pub mod value;

pub use catalog::{Catalog, CatalogModel, ForeignKey, TableMeta};
pub use dispatch::{ClusterDispatch, ClusterSpec, DispatchKernel};
pub use expr::{boolean, col, num, string, ArithOp, CmpOp, ScalarExpr};
pub use model::{Aggregation, Link, Model, Tree, TreeNode, TreeShape};
pub use pipeline::{
    argmax, onehot_feature, FeatureSource, Featurizer, ModelPipeline, OutputKind, PipelineInput,
    PipelineKernel, RowIssue, UnknownPolicy,
};
pub use plan::{
    explain, join_right_names, output_schema, referenced_models, validate_plan, Diagnostic, JoinKey,
    ModelPayload, Op, Plan, PlanNode,
};
pub use schema::{DataType, Field, Schema};
pub use value::{format_number, Literal};
