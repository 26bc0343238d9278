//! Property tests of the library's invariants on random inputs.

mod common;

use proptest::prelude::*;

use common::{brute_force, sqd};
use reidbias::dataset::{generate_synthetic, read_dataset, write_dataset, Channel, Preset, Sample, Split};
use reidbias::evaluation::{cmc_map, nauc, rank_gallery, same_bias_rank_prob, Polarity};
use reidbias::losses::{bias_easy_loss, combined_loss, pairwise_sqdist, reid_hard_loss, LossOutput};
use reidbias::numerics::{EncoderShape, Schedule};
use reidbias::{concat, embed_all, rng, Dataset, EmbeddingSet, EncoderParams, LossWeights, Matrix, Mode, Protocol};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn matrix(n: usize, d: usize, values: &[f64]) -> Matrix {
    Matrix::from_vec(n, d, values[..n * d].to_vec()).unwrap()
}

/// `(embeddings, labels)` for a batch of up to 16 rows. Half the cases use a
/// coarse integer grid so that distance ties actually occur.
fn batch() -> impl Strategy<Value = (Matrix, Vec<u8>)> {
    (2usize..=16, 1usize..=3, any::<bool>()).prop_flat_map(|(n, d, coarse)| {
        let value = if coarse {
            (0i32..3).prop_map(f64::from).boxed()
        } else {
            (-2.0f64..2.0).boxed()
        };
        (
            prop::collection::vec(value, n * d).prop_map(move |v| matrix(n, d, &v)),
            prop::collection::vec(0u8..4, n),
        )
    })
}

/// A batch in general position: continuous values, no ties in practice.
fn generic_batch() -> impl Strategy<Value = (Matrix, Vec<u8>)> {
    (4usize..=12, 1usize..=4).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * d).prop_map(move |v| matrix(n, d, &v)),
            prop::collection::vec(0u8..3, n),
        )
    })
}

fn assert_matches_brute_force(out: &LossOutput, e: &Matrix, labels: &[u8], margin: f64, hardest: bool, hinge: bool) {
    let bf = brute_force(e, labels, margin, hardest, hinge);
    assert_eq!(out.value, bf.value);
    for (sel, pick) in out.selections.iter().zip(&bf.picks) {
        assert_eq!(sel.map(|s| (s.positive, s.negative, s.argument)), *pick);
    }
}

/// Gradient implied by the selections: every contributing anchor adds the
/// derivative of `m + |a - p|^2 - |a - n|^2`.
fn gradient_from_selections(out: &LossOutput, e: &Matrix, hinge: bool) -> Matrix {
    let mut g = Matrix::zeros(e.rows(), e.cols());
    for (a, sel) in out.selections.iter().enumerate() {
        let Some(s) = sel else { continue };
        if hinge && s.argument <= 0.0 {
            continue;
        }
        for k in 0..e.cols() {
            let (xa, xp, xn) = (e.row(a)[k], e.row(s.positive)[k], e.row(s.negative)[k]);
            g.row_mut(a)[k] += 2.0 * (xn - xp);
            g.row_mut(s.positive)[k] -= 2.0 * (xa - xp);
            g.row_mut(s.negative)[k] += 2.0 * (xa - xn);
        }
    }
    g
}

fn assert_close_matrix(a: &Matrix, b: &Matrix) {
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!(close(*x, *y), "{x} vs {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pairwise_distances_match_naive_loop((e, _) in batch()) {
        let d = pairwise_sqdist(&e);
        for i in 0..e.rows() {
            for j in 0..e.rows() {
                prop_assert!(close(d.row(i)[j], sqd(e.row(i), e.row(j))));
            }
        }
    }

    #[test]
    fn reid_loss_equals_exhaustive_search((e, ids) in batch(), margin in 0.0f64..1.0) {
        match reid_hard_loss(&e, &ids, margin) {
            Ok(out) => assert_matches_brute_force(&out, &e, &ids, margin, true, true),
            // every anchor of a re-ID batch needs a positive and a negative
            Err(_) => prop_assert!(brute_force(&e, &ids, margin, true, true).picks.iter().any(Option::is_none)),
        }
    }

    #[test]
    fn bias_loss_equals_exhaustive_search((e, bias) in batch(), margin in 0.0f64..1.0, hinge: bool) {
        match bias_easy_loss(&e, &bias, margin, hinge) {
            Ok(out) => assert_matches_brute_force(&out, &e, &bias, margin, false, hinge),
            Err(_) => prop_assert!(brute_force(&e, &bias, margin, false, hinge).picks.iter().all(Option::is_none)),
        }
    }

    #[test]
    fn only_active_hinges_carry_gradient((e, labels) in batch(), margin in 0.0f64..1.0, hinge: bool) {
        if let Ok(out) = reid_hard_loss(&e, &labels, margin) {
            assert_close_matrix(&out.grads, &gradient_from_selections(&out, &e, true));
        }
        if let Ok(out) = bias_easy_loss(&e, &labels, margin, hinge) {
            assert_close_matrix(&out.grads, &gradient_from_selections(&out, &e, hinge));
        }
    }

    #[test]
    fn losses_are_permutation_equivariant(
        (e, labels) in generic_batch(),
        seed: u64,
    ) {
        use rand::seq::SliceRandom;
        let n = e.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng::stream(seed, "perm"));
        let pe = e.select_rows(&perm);
        let pl: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        let pairs = [
            (reid_hard_loss(&e, &labels, 0.3), reid_hard_loss(&pe, &pl, 0.3)),
            (bias_easy_loss(&e, &labels, 0.3, true), bias_easy_loss(&pe, &pl, 0.3, true)),
        ];
        for pair in pairs {
            let (Ok(a), Ok(b)) = pair else { continue };
            prop_assert!(close(a.value, b.value));
            for (new, &old) in perm.iter().enumerate() {
                for k in 0..e.cols() {
                    prop_assert!(close(b.grads.row(new)[k], a.grads.row(old)[k]));
                }
            }
        }
    }

    #[test]
    fn modes_differ_only_in_bias_sign(
        (e, ids) in generic_batch(),
        bias in prop::collection::vec(0u8..2, 12),
        lambda_dr in 0.0f64..2.0,
        lambda_db in 0.0f64..0.2,
    ) {
        let bias = &bias[..e.rows()];
        let w = LossWeights { lambda_dr, lambda_db, ..LossWeights::default() };
        let (Ok(r), Ok(en)) = (
            combined_loss(&e, &ids, bias, Mode::Reduce, &w),
            combined_loss(&e, &ids, bias, Mode::Enhance, &w),
        ) else {
            return Ok(());
        };
        let lr = r.reid.as_ref().map_or(0.0, |o| o.value);
        let lb = r.bias.as_ref().map_or(0.0, |o| o.value);
        prop_assert!(close(r.value, lambda_dr * lr - lambda_db * lb));
        prop_assert!(close(en.value, lambda_dr * lr + lambda_db * lb));
        let half_sum: Vec<f64> = r.grads.as_slice().iter().zip(en.grads.as_slice()).map(|(a, b)| (a + b) / 2.0).collect();
        let reid_part = r.reid.as_ref().map(|o| o.grads.as_slice().iter().map(|g| lambda_dr * g).collect::<Vec<_>>());
        if let Some(reid_part) = reid_part {
            for (x, y) in half_sum.iter().zip(&reid_part) {
                prop_assert!(close(*x, *y));
            }
        }
    }

    #[test]
    fn schedule_decays_linearly_to_zero(base in 1e-6f64..1.0, total in 1usize..200) {
        let s = Schedule::new(base, total).unwrap();
        prop_assert_eq!(s.rate(0).unwrap(), base);
        prop_assert_eq!(s.rate(total).unwrap(), 0.0);
        for e in 0..total {
            prop_assert!(s.rate(e + 1).unwrap() <= s.rate(e).unwrap());
        }
        prop_assert!(s.rate(total - 1).unwrap() <= base / total as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn nauc_lies_within_the_curve(curve in prop::collection::vec(0.0f64..=1.0, 1..30), k in 1usize..30) {
        prop_assume!(k <= curve.len());
        let v = nauc(&curve, k).unwrap();
        let lo = curve[..k].iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = curve[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-15 <= v && v <= hi + 1e-15);
    }
}

/// A random query/gallery set with one `pose` channel.
fn ranking_instance() -> impl Strategy<Value = EmbeddingSet> {
    (1usize..=6, 1usize..=20, 1usize..=3).prop_flat_map(|(nq, ng, d)| {
        let n = nq + ng;
        (
            prop::collection::vec(-1.0f64..1.0, n * d),
            prop::collection::vec((0u32..4, 0u32..3, 0u32..3), n),
        )
            .prop_map(move |(values, labels)| {
                EmbeddingSet::new(
                    matrix(n, d, &values),
                    labels.iter().map(|l| l.0).collect(),
                    labels.iter().map(|l| l.1).collect(),
                    vec![Channel { name: "pose".into(), classes: vec!["a".into(), "b".into(), "c".into()] }],
                    labels.iter().map(|l| vec![l.2]).collect(),
                    (0..n).map(|i| if i < nq { Split::Query } else { Split::Gallery }).collect(),
                    "p",
                )
                .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cmc_is_monotone_and_bounded(emb in ranking_instance()) {
        let Ok(rr) = rank_gallery(&emb, &Protocol::Standard) else { return Ok(()) };
        let Ok(m) = cmc_map(&rr) else { return Ok(()) };
        for k in 1..rr.max_len() {
            prop_assert!(m.rank(k) <= m.rank(k + 1));
        }
        prop_assert!((0.0..=1.0).contains(&m.map));
    }

    #[test]
    fn ranking_is_sorted_and_nobias_removes_same_bias_negatives(emb in ranking_instance()) {
        let nobias = Protocol::parse("nobias", Some("pose")).unwrap();
        for protocol in [Protocol::Standard, nobias.clone()] {
            let Ok(rr) = rank_gallery(&emb, &protocol) else { continue };
            for q in &rr.queries {
                prop_assert!(q.distances.windows(2).all(|w| w[0] <= w[1]));
            }
            if protocol == nobias && rr.max_len() > 0 {
                let curve = same_bias_rank_prob(&rr, "pose", Polarity::Negative, rr.max_len()).unwrap();
                prop_assert!(curve.iter().all(|&p| p == 0.0));
            }
        }
    }

    #[test]
    fn concatenated_distance_is_sum_of_branch_distances(
        n in 2usize..10,
        dims in (1usize..5, 1usize..5),
        values in prop::collection::vec(-3.0f64..3.0, 80),
    ) {
        let make = |d: usize, offset: usize, branch: &str| {
            EmbeddingSet::new(
                matrix(n, d, &values[offset..]),
                vec![0; n],
                vec![0; n],
                Vec::new(),
                vec![Vec::new(); n],
                vec![Split::Gallery; n],
                branch,
            )
            .unwrap()
        };
        let a = make(dims.0, 0, "R");
        let b = make(dims.1, 40, "E");
        let c = concat(&[a.clone(), b.clone()]).unwrap();
        prop_assert_eq!(c.dim(), dims.0 + dims.1);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(close(c.sq_dist(i, j), a.sq_dist(i, j) + b.sq_dist(i, j)));
            }
        }
    }
}

fn small_generator() -> reidbias::GeneratorConfig {
    let mut cfg = Preset::Default.config();
    cfg.n_ids = 12;
    cfg.n_train_ids = 6;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generator_is_a_pure_function_of_config_and_seed(seed: u64) {
        let cfg = small_generator();
        let a = generate_synthetic(&cfg, seed).unwrap();
        let b = generate_synthetic(&cfg, seed).unwrap();
        prop_assert!(a.same_content(&b));
    }

    #[test]
    fn dataset_csv_round_trips_exactly(seed: u64) {
        let ds = generate_synthetic(&small_generator(), seed).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "back").unwrap();
        prop_assert_eq!(back.samples(), ds.samples());
    }

    #[test]
    fn embedding_ignores_bias_annotations(seed: u64) {
        let ds = generate_synthetic(&small_generator(), seed).unwrap();
        let shape = EncoderShape::new(ds.dim(), vec![8], 4);
        let params = EncoderParams::init(&shape, &mut rng::stream(seed, "init")).unwrap();
        let samples: Vec<Sample> = ds
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| Sample {
                camera: (s.camera + 1) % 2,
                bias: s.bias.iter().map(|&b| (b + i as u32) % 2).collect(),
                ..s.clone()
            })
            .collect();
        let relabelled = Dataset::new("relabelled", ds.channels().to_vec(), ds.dim(), samples).unwrap();
        let splits = [Split::Train, Split::Query, Split::Gallery];
        let a = embed_all(&params, &ds, &splits, "R").unwrap();
        let b = embed_all(&params, &relabelled, &splits, "R").unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
    }
}

#[test]
fn bias_classes_are_close_to_uniform() {
    let cfg = Preset::Default.config();
    for seed in 0..10 {
        let ds = generate_synthetic(&cfg, seed).unwrap();
        assert!(ds.len() >= 1000);
        for name in ds.channel_names() {
            let labels = ds.labels(&name).unwrap();
            let classes = *labels.iter().max().unwrap() as usize + 1;
            for k in 0..classes {
                let share = labels.iter().filter(|&&l| l as usize == k).count() as f64 / labels.len() as f64;
                assert!((share - 1.0 / classes as f64).abs() <= 0.05, "seed {seed} {name} class {k}: {share}");
            }
        }
    }
}
