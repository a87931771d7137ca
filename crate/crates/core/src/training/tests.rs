use super::*;
use crate::graph::build_graph;
use crate::radio::simulate;
use crate::scenario::{generate_scenario, Bounds, GenerateParams};

fn graph(seed: u64, include_m: bool) -> CellGraph {
    let s = generate_scenario(&GenerateParams {
        n_sites: 10,
        sectors_per_site: 3,
        carriers: vec![800, 2100],
        bounds: Bounds::square(5000.0),
        seed,
    })
    .unwrap();
    let sim = simulate(&s).unwrap();
    build_graph(&s, &sim, include_m, seed).unwrap()
}

fn quick(kind: BackboneKind, kpi: Kpi) -> TrainConfig {
    let mut c = TrainConfig::new(kind, kpi);
    c.n_pt = 15;
    c.n_ft = 25;
    c.backbone.hidden = 16;
    c.backbone.layers = 2;
    c
}

fn embeddings(t: &mut Tape, rows: &[&[f64]]) -> Var {
    t.constant(Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
}

#[test]
fn ssl_loss_zero_for_identical_embeddings_and_unit_targets() {
    let mut t = Tape::new();
    let h = embeddings(&mut t, &[&[0.3, 0.4], &[0.3, 0.4], &[0.3, 0.4]]);
    let l = loss_ssl(&mut t, h, &[0, 1, 2], &[1, 2, 0], &[1.0; 3]).unwrap();
    assert!(t.value(l).item().abs() < 1e-15);
}

#[test]
fn ssl_loss_zero_for_orthogonal_pair() {
    let mut t = Tape::new();
    let h = embeddings(&mut t, &[&[1.0, 0.0], &[0.0, 1.0]]);
    let l = loss_ssl(&mut t, h, &[0], &[1], &[0.0]).unwrap();
    assert_eq!(t.value(l).item(), 0.0);
}

#[test]
fn ssl_loss_matches_hand_sum() {
    let rows: [[f64; 3]; 4] = [[1.0, 2.0, 0.0], [0.0, -1.0, 1.0], [2.0, 2.0, 1.0], [-1.0, 0.5, 0.5]];
    let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
    let targets = [0.1, 0.9, 0.0, 0.5, 1.0];
    let mut t = Tape::new();
    let h = embeddings(&mut t, &rows.iter().map(|r| &r[..]).collect::<Vec<_>>());
    let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let l = loss_ssl(&mut t, h, &src, &dst, &targets).unwrap();
    let cos = |a: &[f64; 3], b: &[f64; 3]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let n = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (n(a) * n(b))
    };
    let expected: f64 = edges
        .iter()
        .zip(targets)
        .map(|(&(i, j), y)| (cos(&rows[i], &rows[j]) - y).powi(2))
        .sum::<f64>()
        / 5.0;
    assert!((t.value(l).item() - expected).abs() < 1e-14);
}

#[test]
fn ssl_loss_rejects_empty_edge_set() {
    let mut t = Tape::new();
    let h = embeddings(&mut t, &[&[1.0]]);
    assert!(matches!(loss_ssl(&mut t, h, &[], &[], &[]), Err(Error::Empty(_))));
}

#[test]
fn mse_loss_reference_values() {
    let mut t = Tape::new();
    let p = embeddings(&mut t, &[&[0.1, 0.2, 0.3, 0.4]]);
    let l = loss_mse(&mut t, p, &[[0.1, 0.2, 0.3, 0.4]]).unwrap();
    assert_eq!(t.value(l).item(), 0.0);
    let p = embeddings(&mut t, &[&[1.0, 0.0, 0.0, 0.0]]);
    let l = loss_mse(&mut t, p, &[[0.0, 1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(t.value(l).item(), 0.5);
    let p = embeddings(&mut t, &[&[0.25; 4]]);
    let l = loss_mse(&mut t, p, &[[1.0, 0.0, 0.0, 0.0]]).unwrap();
    assert!((t.value(l).item() - 0.1875).abs() < 1e-15);
    assert!(matches!(loss_mse(&mut t, p, &[]), Err(Error::Empty(_))));
}

#[test]
fn few_shot_sizes_and_determinism() {
    let pool: Vec<usize> = (0..200).collect();
    assert_eq!(sample_few_shot(&pool, 2.5, 1).len(), 5);
    assert_eq!(sample_few_shot(&pool, 10.0, 1).len(), 20);
    assert_eq!(sample_few_shot(&pool, 0.01, 1).len(), 1);
    assert_eq!(sample_few_shot(&pool, 100.0, 1).len(), 200);
    assert_eq!(sample_few_shot(&pool, 2.5, 7), sample_few_shot(&pool, 2.5, 7));
    let odd: Vec<usize> = (0..50).map(|i| 2 * i + 1).collect();
    let v = sample_few_shot(&odd, 30.0, 3);
    assert_eq!(v.len(), 15);
    assert!(v.iter().all(|i| i % 2 == 1));
    assert!(v.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn config_validation() {
    let mut c = TrainConfig::new(BackboneKind::Gine, Kpi::Cqi);
    c.validate().unwrap();
    c.alpha_pct = 0.0;
    assert!(c.validate().is_err());
    c.alpha_pct = 100.5;
    assert!(c.validate().is_err());
    c.alpha_pct = 100.0;
    c.n_pt = 0;
    assert!(c.validate().is_err());
}

#[test]
fn group_hash_ignores_seed_only() {
    let mut a = TrainConfig::new(BackboneKind::Gine, Kpi::Cqi);
    let mut b = a;
    b.seed = 99;
    assert_eq!(a.group_hash(Mode::Pf2), b.group_hash(Mode::Pf2));
    assert_ne!(a.group_hash(Mode::Pf2), a.group_hash(Mode::Supervised));
    a.alpha_pct = 10.0;
    assert_ne!(a.group_hash(Mode::Pf2), b.group_hash(Mode::Pf2));
}

#[test]
fn pf2_contracts() {
    let g = graph(3, false);
    let cfg = quick(BackboneKind::Gine, Kpi::Cqi);
    let (r, model) = run_pf2(&g, &cfg).unwrap();
    let expected = few_shot_size(g.masks.train.len(), cfg.alpha_pct);
    assert_eq!(r.labeled_nodes.len(), expected);
    assert_eq!(r.train_label_reads, expected);
    assert!(r.labeled_nodes.iter().all(|i| g.masks.train.contains(i)));
    assert_eq!(r.eval_nodes, g.n_nodes() - expected);
    assert_eq!(r.pt_loss.len(), cfg.n_pt);
    assert_eq!(r.train_loss.len(), cfg.n_ft);
    assert!(model.backbone.params.is_frozen());
    assert!(r.mse() >= 0.0 && r.mse().is_finite());
    assert!(r.peak_mem_bytes > 0);
}

#[test]
fn pf2_rejects_measurement_features() {
    let g = graph(3, true);
    assert!(matches!(run_pf2(&g, &quick(BackboneKind::Mlp, Kpi::Sinr)), Err(Error::Validation(_))));
}

#[test]
fn pf2_without_pretext_at_full_budget_trains_readout_on_all_training_nodes() {
    let g = graph(4, false);
    let mut cfg = quick(BackboneKind::Gat, Kpi::Sinr);
    cfg.pretext = Pretext::None;
    cfg.alpha_pct = 100.0;
    let (r, _) = run_pf2(&g, &cfg).unwrap();
    assert!(r.pt_loss.is_empty());
    assert_eq!(r.labeled_nodes, {
        let mut t = g.masks.train.clone();
        t.sort_unstable();
        t
    });
    assert_eq!(r.eval_nodes, g.masks.test.len());
}

#[test]
fn pf2_pretraining_reduces_pretext_loss() {
    let g = graph(5, false);
    let mut cfg = quick(BackboneKind::Gine, Kpi::Cqi);
    cfg.n_pt = 60;
    let (r, _) = run_pf2(&g, &cfg).unwrap();
    assert!(r.pt_loss.last().unwrap() < &r.pt_loss[0]);
}

#[test]
fn runs_are_reproducible() {
    let g = graph(6, false);
    let cfg = quick(BackboneKind::Wcgcn, Kpi::Cqi);
    let (a, ma) = run_pf2(&g, &cfg).unwrap();
    let (b, mb) = run_pf2(&g, &cfg).unwrap();
    assert_eq!(a.metrics(), b.metrics());
    assert!(bitwise_equal(&ma.backbone.params, &mb.backbone.params));
}

#[test]
fn pf1_transductive_learns_over_untrained_init() {
    let g = graph(7, true);
    let mut cfg = quick(BackboneKind::Mlp, Kpi::Sinr);
    cfg.n_ft = 1;
    let (before, _) = run_pf1(&g, None, &cfg).unwrap();
    cfg.n_ft = 150;
    let (after, _) = run_pf1(&g, None, &cfg).unwrap();
    assert!(after.mse() < before.mse(), "{} vs {}", after.mse(), before.mse());
    assert_eq!(after.eval_nodes, g.masks.test.len());
    assert_eq!(after.train_label_reads, g.masks.train.len());
}

#[test]
fn pf1_inductive_never_reads_target_labels_while_training() {
    let a = graph(8, true);
    let b = graph(9, true);
    let mut cfg = quick(BackboneKind::Gine, Kpi::Cqi);
    cfg.split = Split::Inductive;
    let before = b.label_reads();
    let (r, _) = run_pf1(&a, Some(&b), &cfg).unwrap();
    assert_eq!(r.target_label_reads_during_training, Some(0));
    assert_eq!(r.eval_nodes, b.n_nodes());
    // evaluation itself reads every node of the target once
    assert_eq!(b.label_reads() - before, b.n_nodes());
}

#[test]
fn pf1_requires_measurement_features_and_matching_split() {
    let g = graph(3, false);
    let cfg = quick(BackboneKind::Mlp, Kpi::Cqi);
    assert!(run_pf1(&g, None, &cfg).is_err());
    let gm = graph(3, true);
    let mut ind = cfg;
    ind.split = Split::Inductive;
    assert!(matches!(run_pf1(&gm, None, &ind), Err(Error::Config(_))));
}

#[test]
fn full_supervision_reference_runs_without_m() {
    let g = graph(10, false);
    let (r, _) = run_full_supervision(&g, &quick(BackboneKind::Gine, Kpi::Cqi)).unwrap();
    assert_eq!(r.mode, Mode::Supervised);
    assert_eq!(r.labeled_nodes.len(), g.masks.train.len());
    assert!(run_full_supervision(&graph(10, true), &quick(BackboneKind::Gine, Kpi::Cqi)).is_err());
}

fn fake(mse: f64, pretext: Pretext) -> RunReport {
    let mut cfg = TrainConfig::new(BackboneKind::Gat, Kpi::Sinr);
    cfg.pretext = pretext;
    let mut r = report(Mode::Pf2, &cfg, mse, &Meter::new());
    r.wallclock_s = 0.0;
    r
}

#[test]
fn gain_arithmetic() {
    let pt = fake(8.9, Pretext::Ia);
    let base = fake(9.0, Pretext::None);
    assert!((gain(&pt, &base).unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(gain(&pt, &pt).unwrap(), 0.0);
    assert_eq!(gain(&pt, &base).unwrap(), -gain(&base, &pt).unwrap());
    let mut other = fake(9.0, Pretext::None);
    other.config.alpha_pct = 10.0;
    assert!(matches!(gain(&pt, &other), Err(Error::Config(_))));
}

#[test]
fn report_round_trip_and_version_check() {
    let r = fake(3.5, Pretext::Id);
    assert_eq!(RunReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    let bad = r.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 4");
    assert!(matches!(RunReport::from_json(&bad), Err(Error::SchemaVersion { .. })));
}

#[test]
fn ledger_append_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.csv");
    for s in 0..3 {
        let mut r = fake(2.0 + s as f64, Pretext::Ia);
        r.config.seed = s;
        r.gain = Some(0.5);
        append_ledger(&path, &r).unwrap();
    }
    let rows = read_ledger(&path).unwrap();
    assert_eq!(rows.len(), 3);
    let summary = aggregate(&rows);
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].mse_text(), "3.0 ± 1.0%");
}

#[test]
fn trained_model_round_trip_predicts_identically() {
    let g = graph(11, false);
    let (_, m) = run_pf2(&g, &quick(BackboneKind::Gat, Kpi::Cqi)).unwrap();
    let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back.predict(&g).unwrap(), m.predict(&g).unwrap());
    let p = m.predict(&g).unwrap();
    for r in 0..p.rows() {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn trained_model_rejects_foreign_feature_layout() {
    let (_, m) = run_pf2(&graph(12, false), &quick(BackboneKind::Mlp, Kpi::Cqi)).unwrap();
    assert!(matches!(m.predict(&graph(12, true)), Err(Error::Validation(_))));
}

#[test]
fn parallel_map_preserves_order() {
    let items: Vec<u64> = (0..23).collect();
    let out = parallel_map(&items, 4, |x| x * x);
    assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
    assert!(parallel_map(&[] as &[u64], 3, |x| *x).is_empty());
}
