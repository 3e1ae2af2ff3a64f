use std::collections::{BTreeMap, HashMap};

use super::derive::{derive_domains, stats_domains};
use super::domain::{DomainEnv, FeatureDomain};
use crate::error::Result;
use crate::ir::{join_right_names, output_schema, Catalog, Op, Plan, PlanNode, ScalarExpr};

/// Column domains of every node's output, memoized per node.
pub struct DomainAnalysis<'a> {
    catalog: &'a Catalog,
    use_stats: bool,
    memo: HashMap<*const PlanNode, DomainEnv>,
}

impl<'a> DomainAnalysis<'a> {
    pub fn new(catalog: &'a Catalog, use_stats: bool) -> Self {
        DomainAnalysis {
            catalog,
            use_stats,
            memo: HashMap::new(),
        }
    }

    pub fn env(&mut self, node: &Plan) -> Result<DomainEnv> {
        let key = std::sync::Arc::as_ptr(node);
        if let Some(e) = self.memo.get(&key) {
            return Ok(e.clone());
        }
        let env = self.compute(node)?;
        self.memo.insert(key, env.clone());
        Ok(env)
    }

    /// Domains over the model's input names for a Predict or TensorEval node.
    pub fn model_inputs(&mut self, node: &Plan) -> Result<DomainEnv> {
        let (Op::Predict { inputs, .. } | Op::TensorEval { inputs, .. }) = &node.op else {
            return Ok(DomainEnv::top());
        };
        let names: Vec<String> = match &node.op {
            Op::Predict { payload, .. } => payload.inputs().iter().map(|i| i.name.clone()).collect(),
            Op::TensorEval { program, .. } => program.source.inputs().iter().map(|i| i.name.clone()).collect(),
            _ => unreachable!(),
        };
        let child = self.env(node.input())?;
        if child.is_unreachable() {
            return Ok(DomainEnv::Unreachable);
        }
        let mut env = DomainEnv::top();
        for (bound, name) in inputs.iter().zip(&names) {
            env.restrict(name, &child.get(bound));
        }
        Ok(env)
    }

    fn compute(&mut self, node: &Plan) -> Result<DomainEnv> {
        Ok(match &node.op {
            Op::Scan { table } => {
                let meta = self.catalog.table(table)?;
                match (&meta.stats, self.use_stats) {
                    (Some(s), true) => stats_domains(s),
                    _ => DomainEnv::top(),
                }
            }
            Op::Filter { predicate } => self.env(node.input())?.meet(&derive_domains(predicate, None)),
            Op::Project { exprs } => {
                let child = self.env(node.input())?;
                if child.is_unreachable() {
                    return Ok(DomainEnv::Unreachable);
                }
                let mut env = DomainEnv::top();
                for (name, e) in exprs {
                    let d = match e {
                        ScalarExpr::Column(c) => child.get(c),
                        ScalarExpr::Literal(l) => FeatureDomain::Constant(l.clone()),
                        _ => FeatureDomain::Top,
                    };
                    env.restrict(name, &d);
                }
                env
            }
            Op::Join { keys } => {
                let left = self.env(&node.inputs[0])?;
                let right = self.env(&node.inputs[1])?;
                let right_schema = output_schema(&node.inputs[1], self.catalog)?;
                let names = join_right_names(node, self.catalog)?;
                let rename: BTreeMap<&str, &str> = right_schema
                    .names()
                    .zip(names.iter().map(String::as_str))
                    .collect();
                let mut env = left;
                for (c, d) in right.columns() {
                    if let Some(out) = rename.get(c) {
                        env.restrict(out, d);
                    }
                }
                if right.is_unreachable() {
                    env = DomainEnv::Unreachable;
                }
                for k in keys {
                    let Some(r) = rename.get(k.right.as_str()) else {
                        continue;
                    };
                    let both = env.get(r);
                    env.restrict(&k.left, &both);
                    let both = env.get(&k.left);
                    env.restrict(r, &both);
                }
                env
            }
            Op::UnionAll => {
                let mut env = DomainEnv::Unreachable;
                for c in &node.inputs {
                    env = env.join(&self.env(c)?);
                }
                env
            }
            Op::Predict { .. } | Op::TensorEval { .. } => self.env(node.input())?,
            Op::Udf { .. } => DomainEnv::top(),
        })
    }
}

/// Input domains of every model node, keyed by pre-order node id.
pub fn propagate_domains(plan: &Plan, catalog: &Catalog, use_stats: bool) -> Result<BTreeMap<usize, DomainEnv>> {
    let mut analysis = DomainAnalysis::new(catalog, use_stats);
    let mut out = BTreeMap::new();
    for (id, node) in plan.preorder().iter().enumerate() {
        if node.op.is_model() {
            out.insert(id, analysis.model_inputs(node)?);
        }
    }
    Ok(out)
}
