use std::f64::consts::{LN_2, PI};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{self, all_triplets, count_valid_triplets, sample_triplets, LossNoise};
use super::*;
use crate::autodiff::{grad_check_with, Coverage, Var};
use crate::stroke::{GroupLabels, Pen, SegmentDelta};

fn tiny() -> HyperParams {
    HyperParams {
        enc_hidden: 3,
        dec_hidden: 4,
        latent_dim: 2,
        feat_dim: 5,
        mixtures: 2,
        ..HyperParams::default()
    }
}

fn random_sketch(rng: &mut ChaCha8Rng, n: usize) -> Sketch {
    let segs = (0..n)
        .map(|i| {
            let pen = if i + 1 == n || rng.random_bool(0.3) {
                Pen::Up
            } else {
                Pen::Down
            };
            SegmentDelta::new(
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                pen,
            )
        })
        .collect();
    Sketch::new(segs, None).unwrap()
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> GroupLabels {
    GroupLabels::new((0..n).map(|_| rng.random_range(0..k)).collect())
}

fn constant_mdn(n: usize, m: usize, mu: (f64, f64), sigma: f64, pen: [f64; 2]) -> MdnParams {
    let full = |v| Array::full(&[n, m], v);
    MdnParams {
        pi: full(1.0 / m as f64),
        mu_x: full(mu.0),
        mu_y: full(mu.1),
        sigma_x: full(sigma),
        sigma_y: full(sigma),
        rho: full(0.0),
        pen_logits: Array::new(&[n, 2], (0..n).flat_map(|_| pen).collect()).unwrap(),
    }
}

// Independent plain-f64 evaluation of the mixture negative log-likelihood.
fn recon_oracle(mdn: &MdnParams, sketch: &Sketch) -> f64 {
    let n = sketch.len();
    let m = mdn.pi.last_dim();
    let mut total = 0.0;
    for (i, s) in sketch.segments().iter().enumerate() {
        let mut dens = 0.0;
        for k in 0..m {
            let g = |a: &Array| a.get2(i, k);
            let (sx, sy, r) = (g(&mdn.sigma_x), g(&mdn.sigma_y), g(&mdn.rho));
            let zx = (s.dx - g(&mdn.mu_x)) / sx;
            let zy = (s.dy - g(&mdn.mu_y)) / sy;
            let z = zx * zx + zy * zy - 2.0 * r * zx * zy;
            let norm = 2.0 * PI * sx * sy * (1.0 - r * r).sqrt();
            dens += g(&mdn.pi) * (-z / (2.0 * (1.0 - r * r))).exp() / norm;
        }
        let (a, b) = (mdn.pen_logits.get2(i, 0), mdn.pen_logits.get2(i, 1));
        let target = if s.pen == Pen::Up { b } else { a };
        let lse = a.max(b) + ((a - a.max(b)).exp() + (b - a.max(b)).exp()).ln();
        total += -dens.ln() + (lse - target);
    }
    total / n as f64
}

#[test]
fn default_loss_weights() {
    let h = HyperParams::default();
    assert_eq!((h.lambda_r, h.lambda_a, h.lambda_g), (0.5, 0.6, 1.0));
    assert_eq!(h.feat_dim, 128);
}

#[test]
fn invalid_hyper_rejected() {
    let mut h = HyperParams::default();
    h.margin = 0.0;
    assert!(matches!(h.validate(), Err(Error::Config(_))));
    let mut h = HyperParams::default();
    h.mixtures = 0;
    assert!(h.validate().is_err());
    let mut h = HyperParams::default();
    h.lambda_g = -1.0;
    assert!(h.validate().is_err());
}

#[test]
fn zero_weights_give_bias_outputs() {
    let h = tiny();
    let mut params = GrouperParams::zeros(&h).unwrap();
    let l = h.latent_dim;
    let lb: Vec<f64> = (0..2 * l).map(|k| 0.1 * k as f64 - 0.2).collect();
    *params.get_mut("latent.b").unwrap() = Array::vector(lb.clone());
    let fb: Vec<f64> = (0..h.feat_dim).map(|k| k as f64).collect();
    *params.get_mut("feat.b").unwrap() = Array::vector(fb.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_sketch(&mut rng, 5);
    let (mu, sigma) = encode(&s, &params, &h).unwrap();
    assert_eq!(mu.data(), &lb[..l]);
    for (s, b) in sigma.data().iter().zip(&lb[l..]) {
        assert_eq!(*s, (b / 2.0).exp());
    }
    let out = decode(&s, &mu, &params, &h).unwrap();
    assert_eq!(out.features.shape(), &[5, h.feat_dim]);
    for i in 0..5 {
        assert_eq!(out.features.row(i), &fb[..]);
    }
}

#[test]
fn reversed_sketch_changes_latent() {
    let h = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = GrouperParams::init(&h, &mut rng).unwrap();
    let s = random_sketch(&mut rng, 6);
    let mut segs = s.segments().to_vec();
    segs.reverse();
    segs.last_mut().unwrap().pen = Pen::Up;
    let r = Sketch::new(segs, None).unwrap();
    let (m1, s1) = encode(&s, &params, &h).unwrap();
    let (m2, s2) = encode(&r, &params, &h).unwrap();
    assert!(m1 != m2 || s1 != s2);
}

#[test]
fn single_segment_sketch_runs() {
    let h = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = GrouperParams::init(&h, &mut rng).unwrap();
    let s = random_sketch(&mut rng, 1);
    let (mu, sigma) = encode(&s, &params, &h).unwrap();
    assert!(mu.all_finite() && sigma.data().iter().all(|&x| x > 0.0));
    let out = decode(&s, &mu, &params, &h).unwrap();
    assert_eq!(out.features.shape(), &[1, h.feat_dim]);
    let g = predict_affinity(&out.features, &params).unwrap();
    assert_eq!(g.values(), &[1.0]);
}

#[test]
fn different_latents_give_different_features() {
    let h = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = GrouperParams::init(&h, &mut rng).unwrap();
    let s = random_sketch(&mut rng, 4);
    let a = decode(&s, &Array::vector(vec![0.0, 0.0]), &params, &h).unwrap();
    let b = decode(&s, &Array::vector(vec![1.0, -1.0]), &params, &h).unwrap();
    assert_ne!(a.features, b.features);
}

#[test]
fn decoder_output_invariants() {
    let h = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = GrouperParams::init(&h, &mut rng).unwrap();
    let s = random_sketch(&mut rng, 7);
    let out = decode(&s, &Array::vector(vec![0.3, -0.7]), &params, &h).unwrap();
    for i in 0..7 {
        let total: f64 = out.mdn.pi.row(i).iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    assert!(out
        .mdn
        .sigma_x
        .data()
        .iter()
        .chain(out.mdn.sigma_y.data())
        .all(|&v| v > 0.0));
    assert!(out.mdn.rho.data().iter().all(|r| r.abs() < 1.0));
    assert_eq!(out.mdn.pen_logits.shape(), &[7, 2]);
}

#[test]
fn sample_latent_limits() {
    let mu = Array::vector(vec![0.5, -2.0]);
    let tiny_sigma = Array::vector(vec![1e-300, 1e-300]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    assert_eq!(sample_latent(&mu, &tiny_sigma, &mut rng).unwrap(), mu);
    let sigma = Array::vector(vec![1.0, 2.0]);
    let a = sample_latent(&mu, &sigma, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = sample_latent(&mu, &sigma, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
    assert!(sample_latent(&mu, &Array::vector(vec![1.0, 0.0]), &mut rng).is_err());
}

#[test]
fn sample_latent_monte_carlo_mean() {
    let d = 4;
    let mu = Array::zeros(&[d]);
    let sigma = Array::full(&[d], 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut acc = vec![0.0; d];
    let n = 10_000;
    for _ in 0..n {
        let z = sample_latent(&mu, &sigma, &mut rng).unwrap();
        acc.iter_mut().zip(z.data()).for_each(|(a, v)| *a += v);
    }
    for a in acc {
        assert!((a / n as f64).abs() < 0.05);
    }
}

#[test]
fn identical_features_give_bias_affinity() {
    let h = tiny();
    let mut params = GrouperParams::zeros(&h).unwrap();
    *params.get_mut("affinity.b").unwrap() = Array::vector(vec![0.4]);
    *params.get_mut("affinity.w").unwrap() = Array::full(&[1, h.feat_dim], 0.3);
    let f = Array::full(&[3, h.feat_dim], 2.5);
    let g = predict_affinity(&f, &params).unwrap();
    let s = 1.0 / (1.0 + (-0.4f64).exp());
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(g.get(i, j), if i == j { 1.0 } else { s });
        }
    }
    let raw = affinity_scores(&f, &params).unwrap();
    assert_eq!(raw.get2(1, 1), s);
}

#[test]
fn saturated_bias_gives_all_ones() {
    let h = tiny();
    let mut params = GrouperParams::zeros(&h).unwrap();
    *params.get_mut("affinity.b").unwrap() = Array::vector(vec![800.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = Array::new(
        &[4, h.feat_dim],
        (0..4 * h.feat_dim).map(|_| rng.random()).collect(),
    )
    .unwrap();
    let g = predict_affinity(&f, &params).unwrap();
    assert!(g.values().iter().all(|&v| v == 1.0));
}

#[test]
fn local_loss_anchors() {
    let truth = AffinityMatrix::from_labels(&GroupLabels::new(vec![0, 1, 0]));
    let half = Array::full(&[3, 3], 0.5);
    assert!((loss_local(&half, &truth).unwrap() - 9.0 * LN_2).abs() < 1e-12);

    let exact = truth.to_array();
    let floor = -(1.0 - 1e-7f64).ln();
    assert!((loss_local(&exact, &truth).unwrap() - 9.0 * floor).abs() < 1e-12);

    let truth = AffinityMatrix::from_labels(&GroupLabels::new(vec![0, 1]));
    let g = Array::matrix(2, 2, vec![1.0, 0.9, 0.9, 1.0]).unwrap();
    let expected = 2.0 * -(0.1f64).ln() + 2.0 * floor;
    let got = loss_local(&g, &truth).unwrap();
    assert!((got - expected).abs() < 1e-9);
    assert!((got - 4.605).abs() < 1e-3);

    assert!(matches!(
        loss_local(
            &Array::full(&[2, 2], 0.5),
            &AffinityMatrix::from_labels(&GroupLabels::new(vec![0, 0, 1]))
        ),
        Err(Error::Contract(_))
    ));
}

#[test]
fn global_loss_anchors() {
    let labels = GroupLabels::new(vec![0, 0, 1, 1]);
    // rows are one-hot by group: positives coincide, negatives at squared distance 2 ≥ Δ = 1
    let g = Array::matrix(
        4,
        4,
        vec![
            1., 1., 0., 0., 1., 1., 0., 0., 0., 0., 1., 1., 0., 0., 1., 1.,
        ],
    )
    .unwrap();
    let tr = all_triplets(&labels);
    let r = loss_global_with(&g, &labels, &tr, 1.0).unwrap();
    assert_eq!(r.value, 0.0);
    assert_eq!(r.triplets_used, 8);

    let same = Array::full(&[4, 4], 0.3);
    for margin in [0.25, 1.0, 3.0] {
        let r = loss_global_with(&same, &labels, &tr, margin).unwrap();
        assert!((r.value - margin).abs() < 1e-12);
    }

    let single = GroupLabels::new(vec![0, 0, 0, 0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = loss_global(&same, &single, &HyperParams::default(), &mut rng).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.degenerate);
}

#[test]
fn triplet_counts_and_sampling() {
    let labels = GroupLabels::new(vec![0, 0, 0, 1, 1, 2]);
    let all = all_triplets(&labels);
    assert_eq!(all.len(), count_valid_triplets(&labels));
    assert_eq!(all.len(), 3 * 2 * 3 + 2 * 1 * 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert_eq!(sample_triplets(&labels, 100, false, &mut rng), all);
    assert_eq!(sample_triplets(&labels, 1, true, &mut rng), all);
    let some = sample_triplets(&labels, 10, false, &mut rng);
    assert_eq!(some.len(), 10);
    for t in some {
        assert!(all.contains(&t));
    }
}

#[test]
fn triplet_sampling_is_uniform() {
    let labels = GroupLabels::new(vec![0, 0, 0, 1, 1, 2]);
    let all = all_triplets(&labels);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = std::collections::HashMap::new();
    let draws = 26_000;
    for _ in 0..draws {
        for t in sample_triplets(&labels, 1, false, &mut rng) {
            *counts.entry(t).or_insert(0usize) += 1;
        }
    }
    let expected = draws as f64 / all.len() as f64;
    for t in &all {
        let c = counts.get(t).copied().unwrap_or(0) as f64;
        assert!(
            (c - expected).abs() < 5.0 * expected.sqrt(),
            "{t:?}: {c} vs {expected}"
        );
    }
}

#[test]
fn recon_anchors() {
    let s = Sketch::new(
        vec![
            SegmentDelta::new(0.5, -0.25, Pen::Down),
            SegmentDelta::new(0.5, -0.25, Pen::Up),
        ],
        None,
    )
    .unwrap();
    let at_mode = constant_mdn(2, 1, (0.5, -0.25), 1.0, [0.0, 0.0]);
    let r = loss_recon(&at_mode, &s).unwrap();
    assert!((r.offset - (2.0 * PI).ln()).abs() < 1e-12);
    assert!((r.pen - LN_2).abs() < 1e-12);

    let perfect = MdnParams {
        pen_logits: Array::matrix(2, 2, vec![40.0, -40.0, -40.0, 40.0]).unwrap(),
        ..at_mode.clone()
    };
    assert!(loss_recon(&perfect, &s).unwrap().pen < 1e-30);

    let off = constant_mdn(2, 1, (1.5, 0.0), 1.0, [0.0, 0.0]);
    let wide = constant_mdn(2, 1, (1.5, 0.0), 2.0, [0.0, 0.0]);
    assert!(loss_recon(&wide, &s).unwrap().offset > loss_recon(&off, &s).unwrap().offset - 10.0);
    let wider_at_mode = constant_mdn(2, 1, (0.5, -0.25), 2.0, [0.0, 0.0]);
    assert!(loss_recon(&wider_at_mode, &s).unwrap().offset > r.offset);
}

#[test]
fn recon_matches_direct_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.random_range(1..6);
        let m = rng.random_range(1..4);
        let s = random_sketch(&mut rng, n);
        let mut rand = |lo: f64, hi: f64, shape: &[usize]| {
            let k = shape.iter().product();
            Array::new(shape, (0..k).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
        };
        let w = rand(0.1, 1.0, &[n, m]);
        let mut pi = w.clone();
        for i in 0..n {
            let t: f64 = w.row(i).iter().sum();
            for k in 0..m {
                pi.data_mut()[i * m + k] /= t;
            }
        }
        let mdn = MdnParams {
            pi,
            mu_x: rand(-1.0, 1.0, &[n, m]),
            mu_y: rand(-1.0, 1.0, &[n, m]),
            sigma_x: rand(0.3, 2.0, &[n, m]),
            sigma_y: rand(0.3, 2.0, &[n, m]),
            rho: rand(-0.9, 0.9, &[n, m]),
            pen_logits: rand(-2.0, 2.0, &[n, 2]),
        };
        let got = loss_recon(&mdn, &s).unwrap().total;
        let want = recon_oracle(&mdn, &s);
        assert!(
            (got - want).abs() < 1e-10 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }
}

#[test]
fn kl_anchors() {
    assert_eq!(
        loss_kl(&Array::zeros(&[3]), &Array::full(&[3], 1.0)).unwrap(),
        0.0
    );
    let kl = loss_kl(
        &Array::vector(vec![1.0, 1.0]),
        &Array::vector(vec![1.0, 1.0]),
    )
    .unwrap();
    assert!((kl - 1.0).abs() < 1e-15);
    assert!(loss_kl(&Array::zeros(&[1]), &Array::zeros(&[1])).is_err());
}

fn full_setup(seed: u64, n: usize) -> (HyperParams, GrouperParams, Sketch, GroupLabels) {
    let h = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = GrouperParams::init(&h, &mut rng).unwrap();
    let s = random_sketch(&mut rng, n);
    let l = random_labels(&mut rng, n, 3);
    (h, params, s, l)
}

#[test]
fn loss_full_weighting() {
    let (mut h, params, s, l) = full_setup(12, 6);
    let (total, b) = loss_full(&s, &l, &params, &h, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!((total - b.weighted(&h)).abs() < 1e-9 * total.abs().max(1.0));

    h.lambda_a = 0.0;
    h.lambda_g = 0.0;
    h.lambda_r = 0.0;
    let (zero, _) = loss_full(&s, &l, &params, &h, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(zero, 0.0);

    h.lambda_a = 1.0;
    let (only_a, b) = loss_full(&s, &l, &params, &h, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(only_a, b.local);
}

#[test]
fn full_loss_terms_match_value_apis() {
    let (h, params, s, l) = full_setup(13, 5);
    let noise = LossNoise::draw(&h, &l, &mut ChaCha8Rng::seed_from_u64(4));
    let mut tape = crate::autodiff::Tape::new();
    let p = ParamVars::constants(&mut tape, &params);
    let vars = losses::full_loss_vars(&mut tape, &p, &h, &s, &l, &noise).unwrap();
    let b = vars.breakdown(&tape);

    let (mu, sigma) = encode(&s, &params, &h).unwrap();
    let z = Array::vector(
        mu.data()
            .iter()
            .zip(sigma.data())
            .zip(noise.eps.data())
            .map(|((m, s), e)| m + s * e)
            .collect(),
    );
    let out = decode(&s, &z, &params, &h).unwrap();
    let raw = affinity_scores(&out.features, &params).unwrap();
    let truth = AffinityMatrix::from_labels(&l);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9 * a.abs().max(1.0);
    assert!(close(b.local, loss_local(&raw, &truth).unwrap()));
    assert!(close(
        b.global,
        loss_global_with(&raw, &l, &noise.triplets, h.margin)
            .unwrap()
            .value
    ));
    assert!(close(b.recon, recon_oracle(&out.mdn, &s)));
    assert!(close(b.kl, loss_kl(&mu, &sigma).unwrap()));
}

fn check_term(seed: u64, n: usize, pick: fn(&losses::LossVars) -> Var) -> f64 {
    let (h, params, s, l) = full_setup(seed, n);
    let noise = LossNoise::draw(&h, &l, &mut ChaCha8Rng::seed_from_u64(seed + 100));
    let f = |tape: &mut crate::autodiff::Tape, vars: &[Var]| {
        let p = ParamVars::from_slice(vars);
        let lv = losses::full_loss_vars(tape, &p, &h, &s, &l, &noise)?;
        Ok(pick(&lv))
    };
    let report = grad_check_with(f, params.tensors(), 1e-3, Coverage::All).unwrap();
    assert!(report.coordinates_checked > 0);
    report.max_relative_error
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let err = check_term(seed, 6, |v| v.total);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn term_gradients_match_finite_differences() {
    let picks: [fn(&losses::LossVars) -> Var; 4] =
        [|v| v.local, |v| v.global.unwrap(), |v| v.recon, |v| v.kl];
    for (k, pick) in picks.into_iter().enumerate() {
        let err = check_term(20 + k as u64, 5, pick);
        assert!(err < 1e-4, "term {k}: {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predicted_affinity_symmetric_unit_diagonal(seed in any::<u64>(), n in 1usize..7, scale in -5.0f64..5.0) {
        let h = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = GrouperParams::init(&h, &mut rng).unwrap();
        params.get_mut("feat.w").unwrap().data_mut().iter_mut().for_each(|w| *w *= scale);
        let s = random_sketch(&mut rng, n);
        let (mu, _) = encode(&s, &params, &h).unwrap();
        let out = decode(&s, &mu, &params, &h).unwrap();
        let g = predict_affinity(&out.features, &params).unwrap();
        prop_assert!(g.is_symmetric());
        for i in 0..n {
            prop_assert_eq!(g.get(i, i), 1.0);
        }
        prop_assert!(g.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn local_loss_permutation_equivariant(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = random_labels(&mut rng, n, 3);
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(0.0..1.0);
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pl = GroupLabels::new(perm.iter().map(|&p| labels.as_slice()[p]).collect());
        let pg: Vec<f64> = (0..n * n).map(|k| g[perm[k / n] * n + perm[k % n]]).collect();
        let a = loss_local(&Array::matrix(n, n, g).unwrap(), &AffinityMatrix::from_labels(&labels)).unwrap();
        let b = loss_local(&Array::matrix(n, n, pg).unwrap(), &AffinityMatrix::from_labels(&pl)).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn kl_non_negative(mu in prop::collection::vec(-3.0f64..3.0, 1..6), ls in prop::collection::vec(-2.0f64..2.0, 6)) {
        let d = mu.len();
        let sigma = Array::vector(ls[..d].iter().map(|v| v.exp()).collect());
        prop_assert!(loss_kl(&Array::vector(mu), &sigma).unwrap() >= 0.0);
    }
}
