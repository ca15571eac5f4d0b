use obsum::metrics::evaluate;
use obsum::pipeline::synth::{generate_synthetic_scene, SceneSpec};
use obsum::pipeline::{simulate_coarse, stepwise_report};
use obsum::{fuse, FusionConfig, FusionInputs, Raster, ScaleFactor};

fn scene(seed: u64) -> obsum::pipeline::synth::SyntheticScene {
    generate_synthetic_scene(&SceneSpec {
        width: 128,
        height: 128,
        scale: 8,
        n_objects: 24,
        seed,
        ..SceneSpec::default()
    })
    .unwrap()
}

fn cfg() -> FusionConfig {
    FusionConfig::new(ScaleFactor::new(8).unwrap())
}

fn object_mean_error(pred: &Raster, truth: &Raster, labels: &[u32], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for b in 0..pred.bands() {
        let mut sum = vec![0.0f64; n];
        let mut cnt = vec![0usize; n];
        for (i, &o) in labels.iter().enumerate() {
            sum[o as usize] += pred.band(b)[i] as f64 - truth.band(b)[i] as f64;
            cnt[o as usize] += 1;
        }
        for o in 0..n {
            worst = worst.max((sum[o] / cnt[o] as f64).abs());
        }
    }
    worst
}

/// Noise-free scene, constant within each class region.
fn piecewise_constant(seed: u64) -> obsum::pipeline::synth::SyntheticScene {
    generate_synthetic_scene(&SceneSpec {
        n_objects: 24,
        ..SceneSpec::exact(128, 128, 8, seed)
    })
    .unwrap()
}

fn fuse_with_truth_maps(sc: &obsum::pipeline::synth::SyntheticScene, target: &Raster) -> Raster {
    let coarse = simulate_coarse(target, ScaleFactor::new(8).unwrap(), None).unwrap();
    let mut inputs = FusionInputs::new(&sc.fine_tb, &coarse);
    inputs.classes = Some(&sc.classes);
    inputs.objects = Some(&sc.objects);
    fuse(&inputs, &cfg()).unwrap().obsum
}

#[test]
fn no_change_reproduces_base_object_means() {
    let sc = piecewise_constant(11);
    let pred = fuse_with_truth_maps(&sc, &sc.fine_tb);
    let err = object_mean_error(
        &pred,
        &sc.fine_tb,
        sc.objects.labels(),
        sc.objects.object_count(),
    );
    assert!(err <= 1e-3, "object-mean error {err}");
}

#[test]
fn uniform_shift_is_recovered() {
    let sc = piecewise_constant(12);
    let shifted = Raster::from_fn(128, 128, sc.fine_tb.bands(), |b, r, c| {
        sc.fine_tb.get(b, r, c) + 0.1
    })
    .unwrap();
    let pred = fuse_with_truth_maps(&sc, &shifted);
    let err = object_mean_error(
        &pred,
        &shifted,
        sc.objects.labels(),
        sc.objects.object_count(),
    );
    assert!(err <= 1e-3, "object-mean error {err}");
}

#[test]
fn stepwise_without_change_is_near_exact() {
    let sc = generate_synthetic_scene(&SceneSpec {
        class_change: 0.0,
        ..SceneSpec::exact(128, 128, 8, 13)
    })
    .unwrap();
    let rep = stepwise_report(&sc, &cfg()).unwrap();
    for (name, stage) in rep.stages() {
        assert!(stage.mean.rmse <= 1e-3, "{name} rmse {}", stage.mean.rmse);
    }
}

#[test]
fn rmse_strictly_decreases_across_stages() {
    for seed in [21, 22] {
        let rep = stepwise_report(&scene(seed), &cfg()).unwrap();
        assert!(rep.olrc.mean.rmse < rep.olu.mean.rmse, "seed {seed}");
        assert!(rep.obsum.mean.rmse < rep.olrc.mean.rmse, "seed {seed}");
    }
}

#[test]
fn clouded_scene_fuses_with_valid_output() {
    let sc = generate_synthetic_scene(&SceneSpec {
        width: 128,
        height: 128,
        scale: 8,
        n_objects: 24,
        cloud_fraction: 0.2,
        seed: 14,
        ..SceneSpec::default()
    })
    .unwrap();
    let out = fuse(&FusionInputs::new(&sc.fine_tb, &sc.coarse_tp), &cfg()).unwrap();
    for b in 0..out.obsum.bands() {
        assert!(out.obsum.band(b).iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(evaluate(&out.obsum, &sc.fine_tp).unwrap().mean.rmse < 0.05);
}
