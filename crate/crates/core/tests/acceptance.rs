//! Acceptance suite: runs every acceptance criterion, prints one PASS/FAIL
//! line per criterion and fails if any criterion fails.

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use tlt_core::embedding::{embed, euclidean, knn_graph, silhouette, trustworthiness, EmbedHyper};
use tlt_core::evaluation::{eval_heads, eval_unseen_classes};
use tlt_core::feature_store::{read_features, split_train_test, write_features, FormatError};
use tlt_core::nn::BCE_CLAMP;
use tlt_core::pretext::{build_model, train, HeadConfig, HeadOutputs, Labels, PretextModel, TrainConfig};
use tlt_core::synthetic::{gen_synthetic, SynthConfig};
use tlt_core::trajectory::{
    compute_velocities, condition_velocity, fit_bgmm, fit_gmm, fit_trajectory_model, rollout, Component, GaussianMixture, MixturePrior,
    RolloutMode, RolloutStatus, TrajConfig, Track,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn heads_from_bits(bits: usize, n_classes: usize) -> HeadConfig {
    HeadConfig {
        time: bits & 1 != 0,
        variety: bits & 2 != 0,
        fungicide: bits & 4 != 0,
        rot: bits & 8 != 0,
        n_classes,
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_classes: usize) -> (Vec<Vec<f64>>, Vec<Labels>) {
    let xs = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n)
        .map(|i| Labels {
            time: rng.random(),
            variety: rng.random_range(0..n_classes),
            fungicide: rng.random(),
            // Keep at least one rot label per batch.
            rot: if i == 0 || rng.random_bool(0.7) { Some(rng.random()) } else { None },
        })
        .collect();
    (xs, labels)
}

fn batch_loss(model: &PretextModel, xs: &[Vec<f64>], labels: &[Labels]) -> f64 {
    let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
    model.loss_and_gradients(&inputs, labels).unwrap().0.total()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for m in 0..20 {
        let dim = [8, 16, 64][m % 3];
        let heads = heads_from_bits(m % 15 + 1, 3);
        let mut model = build_model(dim, heads, m as u64).map_err(|e| e.to_string())?;
        // Non-zero biases so every parameter block is exercised away from init.
        for layer in model.layers_mut() {
            for b in layer.bias.iter_mut() {
                *b = rng.random_range(-0.1..0.1);
            }
        }
        let (xs, labels) = random_batch(&mut rng, 4, dim, 3);
        let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let (_, grads) = model.loss_and_gradients(&inputs, &labels).map_err(|e| e.to_string())?;
        let n_layers = grads.len();
        for li in 0..n_layers {
            for (is_bias, analytic) in [(false, &grads[li].weights), (true, &grads[li].bias)] {
                for (j, &a) in analytic.iter().enumerate() {
                    let eval = |delta: f64| {
                        let mut probe = model.clone();
                        let layer = &mut probe.layers_mut()[li];
                        if is_bias {
                            layer.bias[j] += delta;
                        } else {
                            layer.weights[j] += delta;
                        }
                        batch_loss(&probe, &xs, &labels)
                    };
                    let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                    worst = worst.max(rel);
                    checked += 1;
                    ensure(rel < 1e-4, || format!("model {m} layer {li} param {j}: analytic {a:e} numeric {numeric:e} rel {rel:e}"))?;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{checked} parameters, worst rel error {worst:.2e}, {elapsed:.1?}"))
}

fn oracle_bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn oracle_total(outs: &[HeadOutputs], labels: &[Labels], heads: &HeadConfig) -> f64 {
    let n = outs.len() as f64;
    let mut total = 0.0;
    if heads.time {
        total += outs.iter().zip(labels).map(|(o, l)| (o.time.unwrap() - l.time).powi(2)).sum::<f64>() / n;
    }
    if heads.variety {
        let mut s = 0.0;
        for (o, l) in outs.iter().zip(labels) {
            for (c, &p) in o.variety.as_ref().unwrap().iter().enumerate() {
                s += oracle_bce(p, if c == l.variety { 1.0 } else { 0.0 });
            }
        }
        total += s / (n * heads.n_classes as f64);
    }
    if heads.fungicide {
        total += outs.iter().zip(labels).map(|(o, l)| oracle_bce(o.fungicide.unwrap(), f64::from(u8::from(l.fungicide)))).sum::<f64>() / n;
    }
    if heads.rot {
        let valid: Vec<f64> = outs
            .iter()
            .zip(labels)
            .filter_map(|(o, l)| l.rot.map(|r| oracle_bce(o.rot.unwrap(), f64::from(u8::from(r)))))
            .collect();
        if !valid.is_empty() {
            total += valid.iter().sum::<f64>() / valid.len() as f64;
        }
    }
    total
}

fn loss_composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let models: Vec<PretextModel> = (1..16).map(|bits| build_model(16, heads_from_bits(bits, 4), bits as u64).unwrap()).collect();
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let model = &models[case % models.len()];
        let n = rng.random_range(1..6);
        let (xs, labels) = random_batch(&mut rng, n, 16, 4);
        let outs: Vec<HeadOutputs> = xs.iter().map(|x| model.forward(x).unwrap().1).collect();
        let inputs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let (loss, _) = model.loss_and_gradients(&inputs, &labels).map_err(|e| e.to_string())?;
        let parts = [loss.time, loss.variety, loss.fungicide, loss.rot];
        let sum: f64 = parts.iter().flatten().sum();
        let expected = oracle_total(&outs, &labels, model.head_config());
        let diff = (loss.total() - expected).abs().max((loss.total() - sum).abs());
        worst = worst.max(diff);
        ensure(diff <= 1e-12, || format!("case {case}: total {} vs oracle {expected}", loss.total()))?;
    }
    Ok(format!("1000 inputs, worst |difference| {worst:.1e}"))
}

fn end_to_end_synthetic() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let (set, _) = gen_synthetic(&cfg, 0).map_err(|e| e.to_string())?;
    let (train_set, test_set) = split_train_test(&set, 0.75, 0).map_err(|e| e.to_string())?;
    let heads = HeadConfig {
        time: true,
        variety: true,
        fungicide: false,
        rot: false,
        n_classes: cfg.n_classes,
    };
    let tc = TrainConfig::default();
    ensure(tc.learning_rate == 0.005 && tc.epochs == 8, || "training defaults changed".into())?;
    let model = build_model(cfg.feature_dim, heads, 0).map_err(|e| e.to_string())?;
    let (model, _) = train(&model, &train_set, &tc).map_err(|e| e.to_string())?;
    let report = eval_heads(&model, &test_set).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mae = report.time.unwrap().mae_days;
    let pa = report.variety.unwrap().percent;
    let limit = 0.08 * set.span_days;
    let detail = format!("time MAE {mae:.2} d (< {limit:.2}), variety PA {pa:.1}% (> 85), {} test records, {elapsed:.1?}", test_set.len());
    ensure(mae < limit && pa > 85.0 && elapsed < Duration::from_secs(120), || detail.clone())?;
    Ok(detail)
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, scale: f64, floor: f64) -> Vec<f64> {
    let a: Vec<f64> = (0..d * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { floor } else { 0.0 };
        }
    }
    s
}

fn cholesky(s: &[f64], d: usize) -> Vec<f64> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let sum: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                l[i * d + i] = (s[i * d + i] - sum).sqrt();
            } else {
                l[i * d + j] = (s[i * d + j] - sum) / l[j * d + j];
            }
        }
    }
    l
}

/// Draws from an explicit mixture by ancestral sampling.
fn sample_mixture(comps: &[Component], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = comps[0].mean.len();
    let chol: Vec<Vec<f64>> = comps.iter().map(|c| cholesky(&c.covariance, d)).collect();
    (0..n)
        .map(|_| {
            let mut u: f64 = rng.random();
            let mut k = comps.len() - 1;
            for (i, c) in comps.iter().enumerate() {
                if u < c.weight {
                    k = i;
                    break;
                }
                u -= c.weight;
            }
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            (0..d).map(|i| comps[k].mean[i] + (0..=i).map(|j| chol[k][i * d + j] * z[j]).sum::<f64>()).collect()
        })
        .collect()
}

fn em_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut steps = 0usize;
    for run in 0..50u64 {
        let d = rng.random_range(2..5);
        let true_k = rng.random_range(1..4);
        let comps: Vec<Component> = (0..true_k)
            .map(|_| Component {
                weight: 1.0 / true_k as f64,
                mean: (0..d).map(|_| rng.random_range(-3.0..3.0)).collect(),
                covariance: random_spd(&mut rng, d, 0.5, 0.05),
            })
            .collect();
        let data = sample_mixture(&comps, rng.random_range(100..400), &mut rng);
        let k = rng.random_range(1..7);
        let gmm = fit_gmm(&data, k, run, &MixturePrior::default()).map_err(|e| format!("run {run}: {e}"))?;
        let hist = &gmm.diagnostics().history;
        for w in hist.windows(2) {
            steps += 1;
            ensure(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), || format!("run {run}: objective fell {} -> {}", w[0], w[1]))?;
        }
    }

    let truth = vec![
        Component {
            weight: 0.5,
            mean: vec![0.0, 0.0, 0.0, 0.0],
            covariance: random_spd(&mut rng, 4, 0.3, 0.1),
        },
        Component {
            weight: 0.3,
            mean: vec![3.0, 0.0, 1.0, 0.0],
            covariance: random_spd(&mut rng, 4, 0.3, 0.1),
        },
        Component {
            weight: 0.2,
            mean: vec![0.0, 3.0, 0.0, -1.0],
            covariance: random_spd(&mut rng, 4, 0.3, 0.1),
        },
    ];
    let data = sample_mixture(&truth, 5000, &mut rng);
    let gmm = fit_gmm(&data, 3, 7, &MixturePrior::default()).map_err(|e| e.to_string())?;
    ensure(gmm.n_components() == 3, || format!("{} components survived", gmm.n_components()))?;
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .map(|p| (0..3).map(|i| euclidean(&truth[i].mean, &gmm.components()[p[i]].mean)).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    ensure(best < 0.1, || format!("worst matched mean error {best:.3}"))?;
    Ok(format!("50 runs / {steps} EM steps monotone; 3-component recovery worst mean error {best:.3}"))
}

fn conditioning_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst_z: f64 = 0.0;
    let mut min_count = usize::MAX;
    for m in 0..10 {
        let k = if m < 5 { 1 } else { rng.random_range(2..4) };
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        let comps: Vec<Component> = raw
            .iter()
            .map(|w| Component {
                weight: w / total,
                mean: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                covariance: random_spd(&mut rng, 4, 0.3, 0.05),
            })
            .collect();
        let gmm = GaussianMixture::new(4, comps.clone()).map_err(|e| e.to_string())?;
        let anchor = &comps[rng.random_range(0..k)].mean;
        let x0 = [anchor[0], anchor[1]];
        let analytic = condition_velocity(&gmm, x0).map_err(|e| e.to_string())?.mean();

        let draws = sample_mixture(&comps, 1_000_000, &mut rng);
        let hits: Vec<&Vec<f64>> = draws.iter().filter(|s| (s[0] - x0[0]).abs() <= 0.01 && (s[1] - x0[1]).abs() <= 0.01).collect();
        let n = hits.len();
        min_count = min_count.min(n);
        ensure(n >= 30, || format!("mixture {m}: only {n} draws in the window"))?;
        for c in 0..2 {
            let vals: Vec<f64> = hits.iter().map(|s| s[2 + c]).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let se = (var / n as f64).sqrt();
            let z = (analytic[c] - mean).abs() / se;
            worst_z = worst_z.max(z);
            ensure(z <= 3.0, || format!("mixture {m} coord {c}: analytic {:.4} vs MC {mean:.4} (se {se:.4})", analytic[c]))?;
        }
    }
    Ok(format!("10 mixtures, worst deviation {worst_z:.2} SE, smallest window {min_count} draws"))
}

fn velocity_algebra() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 500,
        ..PropConfig::default()
    });
    // Dyadic coefficients keep every product and difference exact.
    let strategy = (2usize..80, -64i32..64, -64i32..64, -64i32..64, -64i32..64, 1usize..80);
    runner
        .run(&strategy, |(t_len, a0, a1, b0, b1, eps)| {
            let eps = 1 + (eps - 1) % (t_len - 1);
            let a = [f64::from(a0) / 8.0, f64::from(a1) / 8.0];
            let b = [f64::from(b0) / 16.0, f64::from(b1) / 16.0];
            let pts = (0..t_len).map(|t| (t as u16, [a[0] + b[0] * t as f64, a[1] + b[1] * t as f64])).collect();
            let track = Track::new(0, 0, false, pts).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let vs = compute_velocities(&track, eps).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(vs.len(), t_len - eps);
            for s in &vs {
                prop_assert_eq!(s.v, [b[0] * eps as f64, b[1] * eps as f64]);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("500 linear tracks: every velocity equals b*eps exactly, count T - eps".into())
}

fn arc_tracks(rng: &mut ChaCha8Rng, n_tracks: usize, t_len: usize) -> Vec<Track> {
    let jitter = Normal::new(0.0, 0.02).unwrap();
    let noise = Normal::new(0.0, 0.005).unwrap();
    (0..n_tracks)
        .map(|id| {
            let off = [jitter.sample(rng), jitter.sample(rng)];
            let pts = (0..t_len)
                .map(|t| {
                    let th = std::f64::consts::PI * (1.0 - t as f64 / (t_len - 1) as f64);
                    (t as u16, [th.cos() + off[0] + noise.sample(rng), th.sin() + off[1] + noise.sample(rng)])
                })
                .collect();
            Track::new(id as u32, 0, false, pts).unwrap()
        })
        .collect()
}

fn rollout_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let t_len = 40;
    let tracks = arc_tracks(&mut rng, 8, t_len);
    let samples: Vec<_> = tracks.iter().flat_map(|t| compute_velocities(t, 1).unwrap()).collect();
    let gmm = fit_bgmm(&samples, 8, 0, &MixturePrior::default()).map_err(|e| e.to_string())?;
    let r = rollout(&gmm, [-1.0, 0.0], t_len - 1, RolloutMode::Mean, 0, 1).map_err(|e| e.to_string())?;
    ensure(r.status == RolloutStatus::Complete, || format!("rollout stopped early: {:?}", r.status))?;
    let end = r.points.last().unwrap();
    let miss = euclidean(end, &[1.0, 0.0]);
    let diameter = 2.0;
    let detail = format!("endpoint ({:.3}, {:.3}), miss {miss:.3} vs limit {:.3}", end[0], end[1], 0.1 * diameter);
    ensure(miss <= 0.1 * diameter, || detail.clone())?;
    Ok(detail)
}

fn embedding_quality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let dim = 10;
    let mut latents = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..60 {
            latents.push((0..dim).map(|d| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if d == c { 10.0 + z } else { z }
            }).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    let emb = embed(&latents, &EmbedHyper::default()).map_err(|e| e.to_string())?;
    let low: Vec<Vec<f64>> = emb.coords().iter().map(|p| p.to_vec()).collect();
    let tw = trustworthiness(&latents, &low, 15).map_err(|e| e.to_string())?;
    let sil = silhouette(&low, &labels).map_err(|e| e.to_string())?;
    ensure(tw > 0.9 && sil > 0.5, || format!("trustworthiness {tw:.3}, silhouette {sil:.3}"))?;

    let mut runner = TestRunner::new(PropConfig {
        cases: 64,
        ..PropConfig::default()
    });
    // Small integer grids make exact distance ties common.
    let strategy = (2usize..=500, 1usize..5, any::<u64>(), 1usize..40);
    runner
        .run(&strategy, |(n, d, seed, k)| {
            let k = 1 + (k - 1) % (n - 1);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| f64::from(r.random_range(0..6u8))).collect()).collect();
            let g = knn_graph(&pts, k).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for i in 0..n {
                let mut all: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), j))
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let idx: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
                prop_assert_eq!(&g.indices[i], &idx);
                for (got, want) in g.distances[i].iter().zip(&all[..k]) {
                    prop_assert!((got - want.0).abs() <= 1e-12);
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("trustworthiness {tw:.3}, silhouette {sil:.3}; knn_graph matched brute force on 64 random sets of up to 500 points"))
}

fn determinism_and_formats() -> Outcome {
    let cfg = SynthConfig {
        n_classes: 3,
        tracks_per_class: 4,
        n_sessions: 12,
        feature_dim: 16,
        ..SynthConfig::default()
    };
    let run = || -> Result<_, String> {
        let (set, _) = gen_synthetic(&cfg, 9).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        write_features(&set, &mut bytes).map_err(|e| e.to_string())?;
        let (tr, te) = split_train_test(&set, 0.75, 9).map_err(|e| e.to_string())?;
        let model = build_model(16, heads_from_bits(7, 3), 9).map_err(|e| e.to_string())?;
        let (model, history) = train(&model, &tr, &TrainConfig { seed: 9, ..TrainConfig::default() }).map_err(|e| e.to_string())?;
        let mut model_doc = Vec::new();
        model.to_writer(&mut model_doc).map_err(|e| e.to_string())?;
        let latents = model.encode_batch(&tr.records.iter().map(|r| r.features_f64()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let hyper = EmbedHyper {
            k: 10,
            epochs: 100,
            seed: 9,
            ..EmbedHyper::default()
        };
        let emb = embed(&latents, &hyper).map_err(|e| e.to_string())?;
        let test_latents = model.encode_batch(&te.records.iter().map(|r| r.features_f64()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let placed = emb.transform_new(&test_latents).map_err(|e| e.to_string())?;
        let mut by_track: std::collections::BTreeMap<u32, Vec<(u16, [f64; 2])>> = Default::default();
        for (r, p) in tr.records.iter().zip(emb.coords()) {
            by_track.entry(r.track_id).or_default().push((r.session_index, *p));
        }
        let tracks: Vec<Track> = by_track
            .into_iter()
            .map(|(id, pts)| {
                let r = tr.records.iter().find(|r| r.track_id == id).unwrap();
                Track::new(id, r.variety_id, r.fungicide, pts).unwrap()
            })
            .collect();
        let traj = fit_trajectory_model(&tracks, &TrajConfig { k: 2, seed: 9, ..TrajConfig::default() }).map_err(|e| e.to_string())?;
        let mut traj_doc = Vec::new();
        traj.to_writer(&mut traj_doc).map_err(|e| e.to_string())?;
        let g = &traj.groups[0].mixture;
        let start = tracks[0].points()[0].1;
        let sampled = rollout(g, start, 5, RolloutMode::Sample, 9, 1).map_err(|e| e.to_string())?;
        let points: Vec<[f64; 2]> = placed.clone();
        let varieties: Vec<u16> = te.records.iter().map(|r| r.variety_id).collect();
        let unseen = eval_unseen_classes(&points, &varieties, 2, 9).map_err(|e| e.to_string())?;
        Ok((bytes, history, model_doc, emb.coords().to_vec(), placed, traj_doc, sampled.points, unseen.to_bits()))
    };
    let a = run()?;
    let b = run()?;
    ensure(a == b, || "two identical pipeline runs differ".into())?;

    let bytes = &a.0;
    let set = read_features(&bytes[..]).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_features(&set, &mut again).map_err(|e| e.to_string())?;
    ensure(&again == bytes, || "TLTF write -> read -> write is not byte-identical".into())?;
    ensure(set == gen_synthetic(&cfg, 9).unwrap().0, || "TLTF round trip changed the feature set".into())?;

    for cut in 0..bytes.len() {
        match read_features(&bytes[..cut]) {
            Err(e @ FormatError::Truncated { .. }) => {
                ensure(e.offset().is_some_and(|o| o <= cut), || format!("cut {cut}: offset beyond data"))?;
            }
            other => return Err(format!("prefix of {cut} bytes gave {other:?}")),
        }
    }
    let corruptions: [(usize, u8); 3] = [(0, b'X'), (4, 9), (bytes.len() - 1, 0xFF)];
    for (at, val) in corruptions {
        let mut bad = bytes.clone();
        bad[at] = val;
        if at == bytes.len() - 1 {
            // Turn the last feature float into a NaN.
            let n = bad.len();
            bad[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        }
        let err = read_features(&bad[..]).err().ok_or_else(|| format!("corruption at {at} accepted"))?;
        ensure(err.offset().is_some(), || format!("corruption at {at}: error without position: {err}"))?;
    }
    let mut trailing = bytes.clone();
    trailing.push(0);
    ensure(read_features(&trailing[..]).err().and_then(|e| e.offset()) == Some(bytes.len()), || "trailing byte not reported at end offset".into())?;
    Ok(format!("pipeline bit-identical across runs; TLTF round trip exact; every one of {} truncated prefixes and each corruption rejected with an offset", bytes.len()))
}

fn unseen_class_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in [(5u16, [0.0, 0.0]), (9u16, [15.0, -4.0])] {
        for _ in 0..80 {
            pts.push([center[0] + n01.sample(&mut rng), center[1] + n01.sample(&mut rng)]);
            labels.push(c);
        }
    }
    let separated = eval_unseen_classes(&pts, &labels, 2, 0).map_err(|e| e.to_string())?;
    ensure(separated == 100.0, || format!("separable classes scored {separated:.1}%"))?;

    let blob: Vec<[f64; 2]> = (0..400).map(|_| [n01.sample(&mut rng), n01.sample(&mut rng)]).collect();
    let mixed: Vec<u16> = (0..400).map(|i| if i % 10 < 7 { 1 } else { 2 }).collect();
    let interleaved = eval_unseen_classes(&blob, &mixed, 2, 0).map_err(|e| e.to_string())?;
    let majority = 70.0;
    ensure((interleaved - majority).abs() <= 5.0, || format!("interleaved classes scored {interleaved:.1}% vs majority share {majority}%"))?;
    Ok(format!("separable 100.0%; interleaved {interleaved:.1}% vs majority share {majority:.0}% (tolerance 5 points)"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradient_correctness),
        ("loss composition", loss_composition),
        ("end-to-end synthetic run", end_to_end_synthetic),
        ("EM properties", em_properties),
        ("conditioning oracle", conditioning_oracle),
        ("velocity algebra", velocity_algebra),
        ("rollout fidelity", rollout_fidelity),
        ("embedding quality", embedding_quality),
        ("determinism and formats", determinism_and_formats),
        ("unseen-class protocol", unseen_class_protocol),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
