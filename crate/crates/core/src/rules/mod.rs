//! Cross-optimizer: rewrite rules over the unified IR and the fixed-order
//! driver that applies them.

mod cluster;
mod columns;
mod inline;
mod models;
mod onehot;
mod prune;
mod pushdown;
mod split;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Value};

pub use cluster::{cluster_compile, kmeans, specialize, ClusterReport, KMeans};
pub use columns::{eliminate_joins, origin, projection_pushdown};
pub use inline::{inline_tree, split_condition, SplitCondition};
pub use models::{
    constant_bindings, fold_models, fold_tensor_models, inline_candidate, inline_models, prune_models,
    translate_models,
};
pub use onehot::fold_onehot;
pub use prune::{feature_bounds, prune_model, prune_tree};
pub use pushdown::push_predicates;
pub use split::{split_model_query, SplitResult};

use crate::analysis::DomainAnalysis;
use crate::error::{Error, Result};
use crate::exec::NullPolicy;
use crate::frontend::bind;
use crate::ir::{explain, Catalog, Plan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    PushPredicates,
    PropagateDomains,
    PruneTree,
    FoldOnehot,
    ProjectionPushdown,
    EliminateJoins,
    SplitModelQuery,
    InlineTree,
    NnTranslate,
    ConstFold,
}

impl Rule {
    pub const ALL: [Rule; 10] = [
        Rule::PushPredicates,
        Rule::PropagateDomains,
        Rule::PruneTree,
        Rule::FoldOnehot,
        Rule::ProjectionPushdown,
        Rule::EliminateJoins,
        Rule::SplitModelQuery,
        Rule::InlineTree,
        Rule::NnTranslate,
        Rule::ConstFold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::PushPredicates => "push_predicates",
            Rule::PropagateDomains => "propagate_domains",
            Rule::PruneTree => "prune_tree",
            Rule::FoldOnehot => "fold_onehot",
            Rule::ProjectionPushdown => "projection_pushdown",
            Rule::EliminateJoins => "eliminate_joins",
            Rule::SplitModelQuery => "split_model_query",
            Rule::InlineTree => "inline_tree",
            Rule::NnTranslate => "nn_translate",
            Rule::ConstFold => "const_fold",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rule> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown rule `{s}`")))
    }
}

/// Parses `all`, `none` or a comma-separated list of rule names.
pub fn parse_rule_set(s: &str) -> Result<BTreeSet<Rule>> {
    match s.trim() {
        "all" => Ok(Rule::ALL.into_iter().collect()),
        "none" | "" => Ok(BTreeSet::new()),
        list => list.split(',').map(|r| r.trim().parse()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleConfig {
    pub enabled: BTreeSet<Rule>,
    /// Minimum larger/smaller subtree node-count ratio for splitting.
    pub split_gain_threshold: f64,
    pub inline_max_nodes: usize,
    pub cluster_k: usize,
    pub cluster_seed: u64,
    pub null_policy: NullPolicy,
    /// Let table statistics seed domains at scans.
    pub use_stats: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            enabled: Rule::ALL.into_iter().collect(),
            split_gain_threshold: 2.0,
            inline_max_nodes: 64,
            cluster_k: 4,
            cluster_seed: 0,
            null_policy: NullPolicy::Error,
            use_stats: true,
        }
    }
}

impl RuleConfig {
    pub fn none() -> Self {
        RuleConfig {
            enabled: BTreeSet::new(),
            ..RuleConfig::default()
        }
    }

    pub fn with_rules(mut self, rules: BTreeSet<Rule>) -> Self {
        self.enabled = rules;
        self
    }

    pub fn is_enabled(&self, rule: Rule) -> bool {
        self.enabled.contains(&rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_gain_threshold.is_finite() && self.split_gain_threshold > 0.0) {
            return Err(Error::Config("split gain threshold must be positive".into()));
        }
        if self.inline_max_nodes == 0 {
            return Err(Error::Config("inline node limit must be positive".into()));
        }
        if self.cluster_k == 0 {
            return Err(Error::Config("cluster count must be at least 1".into()));
        }
        Ok(())
    }
}

/// One rule application in the driver.
#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub rule: Rule,
    pub pass: usize,
    pub fired: bool,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub before: String,
    pub after: String,
    pub notes: Vec<String>,
}

impl TraceEntry {
    pub fn to_json(&self) -> Value {
        json!({
            "rule": self.rule.name(),
            "pass": self.pass,
            "fired": self.fired,
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "notes": self.notes,
        })
    }
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let delta = self.nodes_after as isize - self.nodes_before as isize;
        writeln!(
            f,
            "== {} (pass {}): {} | nodes {} -> {} ({delta:+})",
            self.rule,
            self.pass,
            if self.fired { "fired" } else { "no change" },
            self.nodes_before,
            self.nodes_after
        )?;
        for n in &self.notes {
            writeln!(f, "   note: {n}")?;
        }
        if self.fired {
            writeln!(f, "-- before")?;
            f.write_str(&self.before)?;
            writeln!(f, "-- after")?;
            f.write_str(&self.after)?;
        }
        Ok(())
    }
}

pub struct Optimized {
    pub plan: Plan,
    pub trace: Vec<TraceEntry>,
}

impl Optimized {
    pub fn fired(&self, rule: Rule) -> bool {
        self.trace.iter().any(|t| t.rule == rule && t.fired)
    }
}

struct Driver<'a> {
    catalog: &'a mut Catalog,
    config: &'a RuleConfig,
    trace: Vec<TraceEntry>,
}

impl Driver<'_> {
    fn step(
        &mut self,
        rule: Rule,
        pass: usize,
        plan: Plan,
        f: impl FnOnce(&Plan, &mut Catalog) -> Result<(Plan, Vec<String>)>,
    ) -> Result<Plan> {
        if !self.config.is_enabled(rule) {
            return Ok(plan);
        }
        let (after, notes) = f(&plan, self.catalog)?;
        let before_text = explain(&plan, self.catalog);
        let after_text = explain(&after, self.catalog);
        self.trace.push(TraceEntry {
            rule,
            pass,
            fired: before_text != after_text,
            nodes_before: plan.node_count(),
            nodes_after: after.node_count(),
            before: before_text,
            after: after_text,
            notes,
        });
        Ok(after)
    }

    fn relational(&mut self, plan: Plan, pass: usize) -> Result<Plan> {
        let policy = self.config.null_policy;
        let stats = self.config.use_stats;
        let domains = self.config.is_enabled(Rule::PropagateDomains);
        let plan = self.step(Rule::PushPredicates, pass, plan, |p, c| {
            Ok((push_predicates(p, c, policy)?, Vec::new()))
        })?;
        let plan = self.step(Rule::PropagateDomains, pass, plan, |p, c| {
            let mut analysis = DomainAnalysis::new(c, stats);
            let mut notes = Vec::new();
            for node in p.preorder() {
                if node.op.is_model() {
                    let env = analysis.model_inputs(&node)?;
                    notes.push(format!("{}: {env}", node.op));
                }
            }
            Ok((p.clone(), notes))
        })?;
        let plan = if domains {
            let plan = self.step(Rule::PruneTree, pass, plan, |p, c| prune_models(p, c, stats))?;
            self.step(Rule::FoldOnehot, pass, plan, |p, c| fold_models(p, c, stats))?
        } else {
            plan
        };
        let plan = self.step(Rule::ProjectionPushdown, pass, plan, |p, c| {
            Ok((projection_pushdown(p, c)?, Vec::new()))
        })?;
        self.step(Rule::EliminateJoins, pass, plan, |p, c| Ok((eliminate_joins(p, c)?, Vec::new())))
    }
}

/// Applies the enabled rules in their fixed order: pushdown, domain
/// propagation, tree pruning, one-hot folding, projection pushdown, join
/// elimination, model/query splitting (followed by one more relational
/// pass), then inlining or tensor translation and tensor constant folding.
/// Derived models are registered in `catalog`.
pub fn optimize(plan: &Plan, catalog: &mut Catalog, config: &RuleConfig) -> Result<Optimized> {
    config.validate()?;
    bind(plan, catalog)?;
    let mut d = Driver {
        catalog,
        config,
        trace: Vec::new(),
    };
    let policy = config.null_policy;
    let gain = config.split_gain_threshold;
    let max_nodes = config.inline_max_nodes;
    let stats = config.use_stats;

    let mut plan = d.relational(plan.clone(), 1)?;
    plan = d.step(Rule::SplitModelQuery, 1, plan, |p, c| {
        let r = split_model_query(p, c, gain, policy)?;
        Ok((r.plan, r.notes))
    })?;
    if d.trace.last().is_some_and(|t| t.rule == Rule::SplitModelQuery && t.fired) {
        plan = d.relational(plan, 2)?;
    }
    plan = d.step(Rule::InlineTree, 1, plan, |p, c| inline_models(p, c, max_nodes))?;
    plan = d.step(Rule::NnTranslate, 1, plan, |p, c| translate_models(p, c, max_nodes))?;
    if config.is_enabled(Rule::PropagateDomains) {
        plan = d.step(Rule::ConstFold, 1, plan, |p, c| fold_tensor_models(p, c, stats))?;
    }
    let trace = d.trace;
    bind(&plan, catalog)?;
    Ok(Optimized { plan, trace })
}

/// Renders the fired entries of a trace, or every entry when `all`.
pub fn render_trace(trace: &[TraceEntry], all: bool) -> String {
    trace
        .iter()
        .filter(|t| all || t.fired)
        .map(|t| t.to_string())
        .collect()
}
