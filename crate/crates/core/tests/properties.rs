use proptest::prelude::*;
use shortcut_unlearn::data::{BiasedSample, DatasetSplit, ForgetSpec, SplitRole};
use shortcut_unlearn::eval::{metrics_report, subset_accuracy};
use shortcut_unlearn::nn::{
    forward, grad, hvp_fd, loss, Activation, Batch, GradVector, MlpSpec, Params,
};
use shortcut_unlearn::unlearn::{
    decompose, mask_from_saliency, partition, pathway_update, percentile_count,
};

fn net() -> impl Strategy<Value = (MlpSpec, u64)> {
    (1usize..6, 0usize..3, 1usize..8, 2usize..5, any::<u64>()).prop_map(
        |(input, depth, width, k, seed)| {
            let spec = MlpSpec::new(input, vec![width; depth], k, Activation::Tanh).unwrap();
            (spec, seed)
        },
    )
}

fn inputs(dim: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), n)
}

fn vector(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #[test]
    fn loss_is_non_negative(
        ((spec, seed), xs, scale) in net().prop_flat_map(|(s, seed)| {
            let d = s.input_dim();
            (Just((s, seed)), inputs(d, 4), 0.1f64..50.0)
        })
    ) {
        let base = Params::<f64>::init(&spec, seed);
        let params = base.with_values(base.values().iter().map(|v| v * scale).collect()).unwrap();
        let k = spec.num_classes();
        let ys: Vec<usize> = (0..xs.len()).map(|i| i % k).collect();
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
        let l = loss(&params, &batch).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
    }

    #[test]
    fn hessian_vector_products_are_symmetric(
        ((spec, seed), xs, u, v) in net().prop_flat_map(|(s, seed)| {
            let d = s.input_dim();
            let p = s.param_count();
            (Just((s, seed)), inputs(d, 3), vector(p), vector(p))
        })
    ) {
        let params = Params::<f64>::init(&spec, seed);
        let k = spec.num_classes();
        let ys: Vec<usize> = (0..xs.len()).map(|i| i % k).collect();
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
        let (u, v) = (GradVector::new(u), GradVector::new(v));
        let hu = hvp_fd(&params, &batch, &u, 1e-4).unwrap();
        let hv = hvp_fd(&params, &batch, &v, 1e-4).unwrap();
        let (nu, nv) = (u.norm(), v.norm());
        prop_assume!(nu > 1e-6 && nv > 1e-6);
        let h_norm = (hu.norm() / nu).max(hv.norm() / nv);
        let asym = (u.dot(&hv) - v.dot(&hu)).abs();
        prop_assert!(asym <= 1e-4 * nu * nv * h_norm + 1e-12, "asym {asym} h {h_norm}");
    }

    #[test]
    fn decomposition_parts_recombine(
        (g_f, g_c) in (1usize..64).prop_flat_map(|n| (vector(n), vector(n)))
    ) {
        let (g_f, g_c) = (GradVector::new(g_f), GradVector::new(g_c));
        let d = decompose(&g_f, &g_c).unwrap();
        for i in 0..g_f.len() {
            prop_assert_eq!(d.g_bias.values[i], g_f.values[i] - d.g_proj.values[i]);
            let sum = d.g_proj.values[i] + d.g_bias.values[i];
            let scale = g_f.values[i].abs().max(d.g_proj.values[i].abs());
            prop_assert!((sum - g_f.values[i]).abs() <= scale * f64::EPSILON);
        }
        if g_c.norm() >= 1e-12 {
            let inner = d.g_bias.dot(&g_c).abs();
            prop_assert!(inner <= 1e-9 * g_f.norm() * g_c.norm());
        } else {
            prop_assert_eq!(&d.g_bias, &g_f);
        }
    }

    #[test]
    fn partition_cardinality_and_order(
        omega in prop::collection::vec(prop_oneof![Just(0.5f64), -1.0f64..1.0], 1..200),
        k in 0.01f64..=100.0,
    ) {
        let p = partition(&omega, k).unwrap();
        let n = omega.len();
        prop_assert_eq!(p.causal.len(), percentile_count(k, n));
        prop_assert_eq!(p.causal.len() + p.bias.len(), n);
        let mut all: Vec<usize> = p.causal.iter().chain(&p.bias).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for &c in &p.causal {
            prop_assert!(omega[c] >= p.threshold);
            for &b in &p.bias {
                prop_assert!(omega[c] > omega[b] || (omega[c] == omega[b] && c < b));
            }
        }
    }

    #[test]
    fn mask_popcount_and_scale_invariance(
        saliency in prop::collection::vec(prop_oneof![Just(1.0f64), Just(0.0), -5.0f64..5.0], 1..300),
        tau_p in 0.01f64..=100.0,
        scale in 1e-3f64..1e3,
    ) {
        let m = mask_from_saliency(saliency.clone(), tau_p).unwrap();
        prop_assert_eq!(m.popcount(), percentile_count(tau_p, saliency.len()));
        prop_assert_eq!(
            m.popcount(),
            ((tau_p * saliency.len() as f64 / 100.0) - 1e-9).ceil().max(0.0) as usize
        );
        let scaled = mask_from_saliency(saliency.iter().map(|s| s * scale).collect(), tau_p).unwrap();
        prop_assert_eq!(&m.bits, &scaled.bits);
    }

    #[test]
    fn pathways_receive_only_their_own_term(
        (proj, bias, mask) in (1usize..40).prop_flat_map(|n| {
            (vector(n), vector(n), prop::collection::vec(any::<bool>(), n))
        }),
        w in 0.0f64..3.0,
        alpha in 1e-3f64..1.0,
    ) {
        let d = pathway_update(&proj, &bias, &mask, w, alpha, true, true);
        for i in 0..d.len() {
            let want = if mask[i] { alpha * w * proj[i] } else { alpha * bias[i] };
            prop_assert_eq!(d[i], want);
        }
    }

    #[test]
    fn accuracy_ignores_sample_order(
        xs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 8..40),
        seed in any::<u64>(),
        rot in 0usize..40,
    ) {
        let samples: Vec<BiasedSample<f64>> = xs
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let y = i % 2;
                let b = (i / 2) % 2;
                BiasedSample { x, y, b, aligned: y == b }
            })
            .collect();
        let mut rotated = samples.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let a = DatasetSplit::new(samples, SplitRole::Test, 2, 2, 2).unwrap();
        let b = DatasetSplit::new(rotated, SplitRole::Test, 2, 2, 2).unwrap();
        let spec = MlpSpec::new(4, vec![3], 2, Activation::Tanh).unwrap();
        let params = Params::<f64>::init(&spec, seed);
        prop_assert_eq!(subset_accuracy(&params, &a).unwrap(), subset_accuracy(&params, &b).unwrap());
        let forget = ForgetSpec::new(0, 2).unwrap();
        let r = metrics_report(&params, &a, forget, "m", 0).unwrap();
        let (ba, bc) = (r.aligned_accuracy.unwrap(), r.conflicting_accuracy.unwrap());
        prop_assert_eq!(r.gap.unwrap(), (ba - bc).abs());
        prop_assert_eq!(r.worst_group_accuracy.unwrap(), ba.max(bc));
    }
}

#[test]
fn single_precision_tracks_double_precision() {
    let spec = MlpSpec::new(5, vec![6], 3, Activation::Tanh).unwrap();
    let p64 = Params::<f64>::init(&spec, 8);
    let p32 = Params::<f32>::from_values(&spec, p64.values().iter().map(|&v| v as f32).collect())
        .unwrap();
    let x64 = [0.3, -1.2, 0.8, 2.0, -0.4];
    let x32: Vec<f32> = x64.iter().map(|&v| v as f32).collect();
    let l64 = forward(&p64, &x64).unwrap().logits;
    let l32 = forward(&p32, &x32).unwrap().logits;
    for (a, b) in l64.iter().zip(&l32) {
        assert!((a - f64::from(*b)).abs() < 1e-5);
    }
    let g64 = grad(&p64, &Batch::single(&x64, 1)).unwrap();
    let g32 = grad(&p32, &Batch::single(&x32, 1)).unwrap();
    for (a, b) in g64.values.iter().zip(&g32.values) {
        assert!((a - f64::from(*b)).abs() < 1e-4);
    }
}
