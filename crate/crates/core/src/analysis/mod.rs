//! Abstract interpretation of predicates and statistics into per-column
//! value domains.

mod derive;
mod domain;
mod propagate;
mod stats;

pub use derive::{derive_domains, stats_domains};
pub use domain::{DomainEnv, FeatureDomain, Interval};
pub use propagate::{propagate_domains, DomainAnalysis};
pub use stats::{collect_stats, collect_stats_with_cap, ColumnStats, TableStats, DISTINCT_CAP};
