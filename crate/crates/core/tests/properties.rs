mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robustlab::datasets::{parse_csv, to_csv_string};
use robustlab::model::{checkpoint_to_string, parse_checkpoint};
use robustlab::tensor::argmax_rows;
use robustlab::{
    argmax, compute_weights, gen_rings, gen_two_moons, pgd_attack,
    project_linf, softmax, Activation, AttackConfig, CheckpointMeta, DomainBox, MlpConfig,
    MlpParams, Tensor,
};

use common::{gradient_check, random_tensor, tiny_2d_model};

fn tanh_model(sizes: Vec<usize>, seed: u64) -> MlpParams {
    MlpParams::init(&MlpConfig::new(sizes, Activation::Tanh, seed).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn autodiff_matches_finite_differences(
        d in 1usize..4,
        hidden in 1usize..12,
        c in 2usize..5,
        n in 1usize..4,
        alpha in prop::sample::select(vec![0.01, 1.0, 10.0, 100.0]),
        seed in any::<u64>(),
    ) {
        let model = tanh_model(vec![d, hidden, c], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(&mut rng, vec![n, d], 0.0, 1.0);
        let y: Vec<usize> = (0..n).map(|i| (seed as usize + i) % c).collect();
        let w = vec![1.0; n];
        prop_assert!(gradient_check(&model, &x, &y, alpha, &w) < 1e-5);
    }

    #[test]
    fn projection_stays_in_ball_and_box(
        x0 in prop::collection::vec(0.0f64..=1.0, 3),
        delta in prop::collection::vec(-2.0f64..2.0, 3),
        eps in 0.0f64..0.5,
    ) {
        let domain = DomainBox::unit(3);
        let x0 = Tensor::new(vec![1, 3], x0).unwrap();
        let x = Tensor::new(vec![1, 3], x0.data().iter().zip(&delta).map(|(a, b)| a + b).collect()).unwrap();
        let p = project_linf(&x, &x0, eps, Some(&domain)).unwrap();
        prop_assert!(p.max_abs_diff(&x0) <= eps + 1e-12);
        prop_assert!(domain.contains(p.data()));
        let again = project_linf(&p, &x0, eps, Some(&domain)).unwrap();
        prop_assert_eq!(p, again);
    }

    #[test]
    fn attack_outputs_respect_ball(seed in any::<u64>(), eps in 0.001f64..0.3, alpha in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = tiny_2d_model(&mut rng);
        let x0 = random_tensor(&mut rng, vec![8, 2], 0.0, 1.0);
        let y = vec![0, 1, 0, 1, 1, 0, 0, 1];
        let domain = DomainBox::unit(2);
        let cfg = AttackConfig { steps: 8, ..AttackConfig::pgd20(eps) }.with_alpha(alpha).with_seed(seed);
        let r = pgd_attack(&model, &x0, &y, Some(&domain), &cfg).unwrap();
        prop_assert!(r.adversarial.max_abs_diff(&x0) <= eps + 1e-12);
        for i in 0..8 {
            prop_assert!(domain.contains(r.adversarial.row(i)));
            prop_assert!(r.kappa[i] <= cfg.steps);
        }
    }

    #[test]
    fn weights_are_normalized_and_monotone(
        k in 1usize..30,
        raw in prop::collection::vec(any::<u32>(), 1..100),
        lambda in -6.0f64..6.0,
    ) {
        let kappa: Vec<usize> = raw.iter().map(|&r| r as usize % (k + 1)).collect();
        let w = compute_weights(&kappa, k, lambda).unwrap();
        let w = w.weights();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() / w.len() as f64 - 1.0).abs() <= 1e-10);
        for i in 0..w.len() {
            for j in 0..w.len() {
                if kappa[i] < kappa[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 2..8), alpha in 1e-3f64..1e3) {
        let n = z.len();
        let p = softmax(&Tensor::new(vec![1, n], z).unwrap(), alpha).unwrap();
        prop_assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn larger_alpha_sharpens(z in prop::collection::vec(-5.0f64..5.0, 2..8), a in 0.01f64..10.0, factor in 1.0f64..10.0) {
        let n = z.len();
        let t = Tensor::new(vec![1, n], z).unwrap();
        let top = |alpha: f64| softmax(&t, alpha).unwrap().data().iter().cloned().fold(0.0, f64::max);
        prop_assert!(top(a * factor) >= top(a) - 1e-12);
    }

    #[test]
    fn prediction_ignores_alpha(z in prop::collection::vec(-10.0f64..10.0, 2..8), alpha in 1e-4f64..1e2) {
        let n = z.len();
        let t = Tensor::new(vec![1, n], z.clone()).unwrap();
        prop_assert_eq!(argmax_rows(&softmax(&t, alpha).unwrap())[0], argmax(&z));
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), hidden in 1usize..10, scale in -200i32..200) {
        let base = tanh_model(vec![2, hidden, 3], seed);
        let f = 10f64.powi(scale);
        let layers = base.layers().iter().map(|l| robustlab::Layer {
            weight: Tensor::new(l.weight.shape().to_vec(), l.weight.data().iter().map(|v| v * f).collect()).unwrap(),
            bias: l.bias.clone(),
        }).collect();
        let params = MlpParams::from_layers(base.config().clone(), layers).unwrap();
        let meta = CheckpointMeta { method: "gairat".into(), seed, epochs: hidden };
        let text = checkpoint_to_string(&params, &meta);
        let back = parse_checkpoint(&text).unwrap();
        prop_assert_eq!(&back.params, &params);
        prop_assert_eq!(checkpoint_to_string(&back.params, &back.meta), text);
    }

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), n in 1usize..40, rings in any::<bool>()) {
        let ds = if rings {
            gen_rings(2 * n, (0.5, 1.0), 0.05, seed).unwrap()
        } else {
            gen_two_moons(2 * n, 0.1, seed).unwrap()
        };
        let text = to_csv_string(&ds);
        let back = parse_csv(&text).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(to_csv_string(&back), text);
    }
}
