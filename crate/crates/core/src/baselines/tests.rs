use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dataio::Familiarity;
use crate::evaluation::{evaluate, Subset};
use crate::model::{SeqBatch, Targets};
use crate::numerics::{grad_check, GradCheckConfig, Graph, GraphObjective};
use crate::training::variant_config;

fn win(user: UserId, target: PoiId) -> TrainingWindow {
    TrainingWindow {
        user,
        session: 0,
        start: 0,
        input: vec![0],
        target_poi: target,
        target_cat: 0,
        familiarity: Familiarity::Familiar,
    }
}

#[test]
fn majority_examples() {
    let (a, b) = (3, 7);
    let mut w: Vec<TrainingWindow> = (0..5).map(|_| win(1, a)).collect();
    w.extend((0..2).map(|_| win(1, b)));
    w.extend((0..9).map(|_| win(2, 4)));
    let m = MajorityModel::fit(&w, 10);
    assert_eq!(majority_predict(&m, 1, 2), vec![a, b]);
    // user POIs first, then the global ranking fills in
    assert_eq!(majority_predict(&m, 1, 4), vec![a, b, 4, 0]);
    // unseen user gets the global head
    assert_eq!(majority_predict(&m, 99, 3), vec![4, a, b]);
}

#[test]
fn majority_text_round_trip() {
    let w: Vec<TrainingWindow> = [(1, 3), (1, 3), (2, 5), (7, 3)].iter().map(|&(u, p)| win(u, p)).collect();
    let m = MajorityModel::fit(&w, 9);
    let text = m.to_text();
    assert_eq!(text, "poi_count=9\n1\t3\t2\n2\t5\t1\n7\t3\t1\n");
    assert_eq!(MajorityModel::parse(&text).unwrap(), m);
    assert!(MajorityModel::parse("1\t2\t3\n").is_err());
}

#[test]
fn majority_matches_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let windows: Vec<TrainingWindow> = (0..3000)
        .map(|_| win(rng.random_range(0..100), rng.random_range(0..25)))
        .collect();
    let m = MajorityModel::fit(&windows, 25);
    for user in 0..100u32 {
        let mut counts = [0u64; 25];
        let mut global = [0u64; 25];
        for w in &windows {
            global[w.target_poi] += 1;
            if w.user == user {
                counts[w.target_poi] += 1;
            }
        }
        // selection sort on (own count desc, global count desc, id asc)
        let mut left: Vec<usize> = (0..25).collect();
        let mut expect = Vec::new();
        while !left.is_empty() {
            let mut best = 0;
            for i in 1..left.len() {
                let (p, q) = (left[i], left[best]);
                let key = |x: usize| (counts[x], if counts[x] == 0 { global[x] } else { 0 });
                if key(p) > key(q) {
                    best = i;
                }
            }
            expect.push(left.remove(best));
        }
        assert_eq!(majority_predict(&m, user, 25), expect, "user {user}");
    }
}

#[test]
fn majority_ignores_validation_windows() {
    let train: Vec<TrainingWindow> = (0..6).map(|i| win(1, i % 3)).collect();
    let val = vec![win(1, 8), win(1, 8), win(1, 8)];
    let m = MajorityModel::fit(&train, 10);
    assert!(!m.global_counts.contains_key(&8));
    assert!(m.per_user_counts[&1].keys().all(|&p| train.iter().any(|w| w.target_poi == p)));
    let r = evaluate(&m, &val).unwrap();
    assert_eq!(r[0].top1, 0.0);
}

#[test]
fn majority_is_perfect_on_constant_revisits() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let home: Vec<PoiId> = (0..30).map(|_| rng.random_range(0..40)).collect();
    let windows: Vec<TrainingWindow> = (0..600).map(|i| win(i % 30, home[i as usize % 30])).collect();
    let m = MajorityModel::fit(&windows, 40);
    let maj = evaluate(&m, &windows).unwrap();
    assert_eq!(maj[2].top1, 1.0);
    let untrained = Model::new(ModelConfig::miniature(40, 1), 0).unwrap();
    let net = evaluate(&untrained, &windows).unwrap();
    assert!(net[2].top1 < 1.0);
    assert_eq!(maj[2].subset, Subset::Total);
}

#[test]
fn transformer_baseline_is_the_no_moe_variant() {
    let base = ModelConfig::miniature(12, 3);
    let a = transformer_model(&base, 4).unwrap();
    let b = Model::new(variant_config("no_moe", &base).unwrap(), 4).unwrap();
    let batch = SeqBatch::single(&[3, 1, 4, 1, 5, 9]);
    let rows = [0, 3, 5];
    assert_eq!(a.poi_logits(&batch, &rows).unwrap(), b.poi_logits(&batch, &rows).unwrap());
}

#[test]
fn mlp_ignores_input_order() {
    let m = mlp_model(&ModelConfig::miniature(12, 3), 2).unwrap();
    let seq = [3usize, 1, 4, 1, 5, 9, 2];
    let mut rev = seq;
    rev.reverse();
    let mut rot = seq;
    rot.rotate_left(3);
    let at_end = |s: &[usize]| m.poi_logits(&SeqBatch::single(s), &[s.len() - 1]).unwrap().into_data();
    let base = at_end(&seq);
    for other in [at_end(&rev), at_end(&rot)] {
        for (x, y) in base.iter().zip(&other) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn baselines_pass_gradient_check() {
    let base = ModelConfig::miniature(10, 3);
    let builders: [fn(&ModelConfig, u64) -> Result<Model>; 3] = [mlp_model, lstm_model, transformer_model];
    for (k, build) in builders.into_iter().enumerate() {
        let mut m = build(&base, k as u64).unwrap();
        for p in m.params.iter_mut().filter(|p| p.name.starts_with("embed.")) {
            p.value = p.value.map(|x| x * 50.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64 + 40);
        let batch = SeqBatch {
            ids: (0..16).map(|_| rng.random_range(0..10)).collect(),
            seq_len: 8,
        };
        let targets = Targets {
            rows: vec![7, 15],
            poi: vec![rng.random_range(0..10), rng.random_range(0..10)],
            cat: vec![rng.random_range(0..3), rng.random_range(0..3)],
        };
        let model = m.clone();
        let obj = GraphObjective(|g: &mut Graph| model.loss(g, &batch, &targets));
        let err = grad_check(&mut m.params, &obj, &GradCheckConfig { seed: k as u64, ..Default::default() }).unwrap();
        assert!(err < 1e-4, "{}: {err}", m.config.arch.name());
    }
}

#[test]
fn kinds_parse_and_build() {
    let base = ModelConfig::miniature(10, 3);
    for k in ModelKind::ALL {
        assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        let built = k.build(&base, Variant::Full, 0).unwrap();
        assert_eq!(built.is_none(), k == ModelKind::Majority);
    }
    assert!("deepmove".parse::<ModelKind>().is_err());
    let lstm = lstm_model(&base, 0).unwrap();
    assert_eq!(lstm.config.arch, Architecture::Lstm);
}
