mod common;

use common::oracles::param_count_formula;
use ecgseg::model::{EcgModel, Mode, ModelConfig};
use ecgseg_nn::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn analytic_count(c: &ModelConfig) -> usize {
    param_count_formula(c.widths, c.kernel, c.skip_width, c.cls_branch.then_some((c.cls_filters, c.cls_kernel)))
}

#[test]
fn full_scale_count_in_range() {
    let cfg = ModelConfig::full();
    let n = EcgModel::new(cfg.clone(), 0).unwrap().param_count();
    assert_eq!(n, analytic_count(&cfg));
    assert_eq!(n, 19_985_860);
    assert!((15_000_000..=20_000_000).contains(&n));
}

#[test]
fn desk_count_frozen() {
    let cfg = ModelConfig::desk();
    let n = EcgModel::new(cfg.clone(), 0).unwrap().param_count();
    assert_eq!(n, analytic_count(&cfg));
    assert_eq!(n, 2_051_862);
    assert_eq!(EcgModel::new(cfg.with_cls_branch(false), 0).unwrap().param_count(), 1_442_196);
}

#[test]
fn doubling_widths_quadruples_conv_params() {
    let base = ModelConfig::desk().with_cls_branch(false);
    let double = ModelConfig {
        widths: base.widths.map(|w| w * 2),
        skip_width: base.skip_width * 2,
        ..base.clone()
    };
    let r = analytic_count(&double) as f64 / analytic_count(&base) as f64;
    assert!((3.9..=4.0).contains(&r), "ratio {r}");
}

#[test]
fn every_parameter_receives_gradient() {
    let cfg = ModelConfig {
        cls_dropout: 0.0,
        ..ModelConfig::desk()
    };
    let mut model = EcgModel::new(cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let len = 512;
    let x: Vec<f32> = (0..2 * len).map(|i| ((i as f32) * 0.037).sin() + 0.1 * ((i * 7919 % 13) as f32 - 6.0) / 6.0).collect();
    let labels: Vec<u8> = (0..2 * len).map(|i| ((i / 37) % 4) as u8).collect();
    let mut g = Graph::new();
    let input = g.input(Tensor::new(vec![2, 1, len], x).unwrap());
    let out = model.forward(&mut g, input, 500, Mode::Train(&mut rng)).unwrap();
    let trimmed: Vec<u8> = labels.chunks(len).flat_map(|c| c[..500].to_vec()).collect();
    let focal = g.focal_loss_logits(out.seg_logits, &trimmed, 1.0).unwrap();
    let ce = g.cross_entropy_logits(out.cls_logits.unwrap(), &[Some(0), Some(1)]).unwrap();
    let total = g.add(focal, ce).unwrap();
    g.backward(total).unwrap();
    model.params_mut().zero_grads();
    model.params_mut().accumulate_grads(&g);
    for (_, p) in model.params().iter() {
        assert!(p.grad.iter().any(|&v| v != 0.0), "no gradient reached {}", p.name);
        assert!(p.grad.iter().all(|v| v.is_finite()), "non-finite gradient in {}", p.name);
    }
}

#[test]
fn shift_by_pooling_grid_shifts_labels() {
    let model = EcgModel::new(ModelConfig::desk(), 11).unwrap();
    let len = 2048;
    let s: Vec<f32> = (0..len + 16)
        .map(|i| {
            let t = i as f32 / 500.0;
            (t * 6.0).sin() + 0.8 * ((t * 1.3).fract() < 0.05) as u8 as f32
        })
        .collect();
    let a = model.forward_segment(&s[..len]).unwrap().argmax();
    let b = model.forward_segment(&s[16..]).unwrap().argmax();
    // Exact outside the receptive field; near the edges only a smoke bound.
    let receptive = 512;
    let bad: Vec<usize> = (100..len - 16 - 100).filter(|&t| b[t] != a[t + 16]).collect();
    assert!(bad.iter().all(|&t| t < receptive || t >= len - 16 - receptive), "{bad:?}");
    assert!(bad.len() * 100 <= len, "{} mismatches", bad.len());
}
