use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use infq_core::codegen::{emit_sql, round_trips};
use infq_core::exec::{compare_bags, execute, Database, ExecConfig, Table};
use infq_core::frontend::{load_pipeline, parse_sql, pipeline_to_json};
use infq_core::ir::{Catalog, CatalogModel, ModelPipeline, TableMeta};
use infq_core::rules::{kmeans, optimize, RuleConfig};
use infq_core::synth::{self, ModelKind, CATEGORIES};

fn setup(p: &ModelPipeline, t: &Table) -> (Catalog, Database) {
    let mut catalog = Catalog::default();
    let mut meta = TableMeta::new("t", t.schema().clone());
    meta.stats = Some(t.stats());
    catalog.add_table(meta).unwrap();
    catalog.add_model("m", CatalogModel::Pipeline(Arc::new(p.clone()))).unwrap();
    let mut db = Database::new();
    db.insert("t".into(), Arc::new(t.clone()));
    (catalog, db)
}

fn kind(i: u8) -> ModelKind {
    [ModelKind::Tree, ModelKind::Forest, ModelKind::Linear][i as usize % 3]
}

/// A query over a mixed pipeline with a random mix of data and model
/// predicates.
fn query(rng: &mut impl Rng, p: &ModelPipeline) -> String {
    let args: Vec<&str> = p.inputs().iter().map(|i| i.name.as_str()).collect();
    let call = format!("PREDICT(m, {})", args.join(", "));
    let mut conds = Vec::new();
    if rng.gen_bool(0.5) {
        conds.push(format!("cat = '{}'", CATEGORIES[rng.gen_range(0..CATEGORIES.len())]));
    }
    if rng.gen_bool(0.3) {
        conds.push("(cat = 'a' OR cat = 'c')".to_string());
    }
    if rng.gen_bool(0.5) {
        conds.push(format!("x0 > {:.2}", rng.gen_range(-2.0..2.0)));
    }
    if rng.gen_bool(0.3) {
        conds.push(format!("flag = {}", rng.gen_bool(0.5)));
    }
    if p.output_width() == 1 && rng.gen_bool(0.5) {
        conds.push(format!("{call} > {:.2}", rng.gen_range(-1.0..1.0)));
    }
    let mut sql = format!("SELECT x0, cat, {call} AS p FROM t");
    if !conds.is_empty() {
        sql.push_str(" WHERE ");
        sql.push_str(&conds.join(" AND "));
    }
    sql
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimized_plans_agree_with_naive(seed in any::<u64>(), k in 0u8..3, n in 1usize..4) {
        let mut rng = synth::rng(seed);
        let p = synth::mixed_pipeline(&mut rng, kind(k), n);
        prop_assume!(p.output_width() == 1);
        let t = synth::random_input_table(&mut rng, &p, 400);
        let (catalog, db) = setup(&p, &t);
        let sql = query(&mut rng, &p);
        let naive = parse_sql(&sql, &catalog).unwrap();
        let mut opt_catalog = catalog.clone();
        let opt = optimize(&naive, &mut opt_catalog, &RuleConfig::default()).unwrap().plan;
        let exec = ExecConfig::default();
        let a = execute(&naive, &db, &exec).unwrap();
        let b = execute(&opt, &db, &exec).unwrap();
        let c = compare_bags(&a, &b, 1e-9);
        prop_assert!(c.matched, "{sql}: {:?}", c.counterexample);
    }

    #[test]
    fn emitted_sql_round_trips(seed in any::<u64>(), k in 0u8..3) {
        let mut rng = synth::rng(seed);
        let p = synth::mixed_pipeline(&mut rng, kind(k), 2);
        prop_assume!(p.output_width() == 1);
        let t = synth::random_input_table(&mut rng, &p, 50);
        let (catalog, db) = setup(&p, &t);
        let sql = query(&mut rng, &p);
        let mut opt_catalog = catalog.clone();
        let opt = optimize(&parse_sql(&sql, &catalog).unwrap(), &mut opt_catalog, &RuleConfig::default())
            .unwrap()
            .plan;
        prop_assert!(round_trips(&opt, &opt_catalog).unwrap());
        let reparsed = parse_sql(&emit_sql(&opt, &opt_catalog).unwrap(), &opt_catalog).unwrap();
        let exec = ExecConfig::default();
        let c = compare_bags(&execute(&opt, &db, &exec).unwrap(), &execute(&reparsed, &db, &exec).unwrap(), 0.0);
        prop_assert!(c.matched);
    }

    #[test]
    fn pipeline_documents_round_trip(seed in any::<u64>(), k in 0u8..3, n in 1usize..5) {
        let mut rng = synth::rng(seed);
        let p = synth::mixed_pipeline(&mut rng, kind(k), n);
        let text = pipeline_to_json(&p);
        let back = load_pipeline(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(pipeline_to_json(&back), text);
    }

    #[test]
    fn kmeans_is_deterministic_and_assigns_nearest(seed in any::<u64>(), k in 1usize..6, n in 10usize..80) {
        let mut rng = synth::rng(seed);
        let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let a = kmeans(&points, k, seed).unwrap();
        let b = kmeans(&points, k, seed).unwrap();
        prop_assert_eq!(&a.assignment, &b.assignment);
        prop_assert_eq!(&a.centroids, &b.centroids);
        let d = |p: &[f64], c: &[f64]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
        for (p, &c) in points.iter().zip(&a.assignment) {
            let best = a.centroids.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min);
            prop_assert!(d(p, &a.centroids[c]) <= best + 1e-9);
        }
    }
}
