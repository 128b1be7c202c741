use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trafficmetric::losses::{sparse_reconstruction_loss, LossWeights, MarginParams};
use trafficmetric::mining::{build_index, mine_epoch, NegativeStrategy, Quadruplet};
use trafficmetric::nn::*;
use trafficmetric::scenario::{Category, Dataset, Scenario, Trajectory};
use trafficmetric::synthgen::{generate, GeneratorConfig};

const H: f64 = 1e-5;

fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()) + 1e-8
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Checks `sum(out * r)` for a random `r` against central differences on
/// every input value.
fn check_op(seed: u64, inputs: Vec<Tensor>, build: impl Fn(&mut Tape, &[Var]) -> Var) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = eval(&inputs);
    let r = random_tensor(&mut rng, tape.value(out).shape.clone());
    let weighted = |t: &Tensor| t.data.iter().zip(&r.data).map(|(a, b)| a * b).sum::<f64>();
    let grads = tape.backward(&[(out, r.clone())]);
    for (k, v) in vars.iter().enumerate() {
        let g = grads.get(*v).expect("gradient reaches every input");
        for i in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data[i] += H;
            let mut minus = inputs.clone();
            minus[k].data[i] -= H;
            let (tp, _, op) = eval(&plus);
            let (tm, _, om) = eval(&minus);
            let numeric = (weighted(tp.value(op)) - weighted(tm.value(om))) / (2.0 * H);
            assert!(
                close(g.data[i], numeric, 1e-4),
                "input {k}[{i}]: analytic {} numeric {numeric}",
                g.data[i]
            );
        }
    }
}

#[test]
fn dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = vec![
        random_tensor(&mut rng, vec![3, 4]),
        random_tensor(&mut rng, vec![4, 5]),
        random_tensor(&mut rng, vec![1, 5]),
    ];
    check_op(2, inputs, |t, v| {
        let h = t.matmul(v[0], v[1]);
        t.add_row(h, v[2])
    });
}

#[test]
fn nonlinearity_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&mut rng, vec![2, 6]);
    check_op(4, vec![x.clone()], |t, v| t.silu(v[0]));
    check_op(5, vec![x.clone()], |t, v| t.sigmoid(v[0]));
    check_op(6, vec![x.clone()], |t, v| t.softmax_rows(v[0]));
    check_op(7, vec![x], |t, v| t.scale(v[0], -2.5));
}

#[test]
fn structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_tensor(&mut rng, vec![3, 4]);
    let b = random_tensor(&mut rng, vec![2, 4]);
    let c = random_tensor(&mut rng, vec![3, 2]);
    check_op(9, vec![a.clone(), b.clone()], |t, v| t.concat_rows(v[0], v[1]));
    check_op(10, vec![a.clone(), c.clone()], |t, v| t.concat_cols(&[v[0], v[1], v[0]]));
    check_op(11, vec![a.clone()], |t, v| t.slice_cols(v[0], 1, 2));
    check_op(12, vec![a.clone()], |t, v| t.slice_row(v[0], 2));
    check_op(13, vec![a.clone()], |t, v| t.transpose(v[0]));
    check_op(14, vec![a.clone()], |t, v| t.reshape(v[0], vec![2, 6]));
    let a2 = random_tensor(&mut rng, vec![3, 4]);
    check_op(15, vec![a.clone(), a2.clone()], |t, v| t.add(v[0], v[1]));
    check_op(16, vec![a, a2], |t, v| t.sq_dist(v[0], v[1]));
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (h, w) in [(5, 5), (6, 4)] {
        let inputs = vec![
            random_tensor(&mut rng, vec![2, h, w]),
            random_tensor(&mut rng, vec![3, 2, 3, 3]),
            random_tensor(&mut rng, vec![1, 3]),
        ];
        check_op(18, inputs, |t, v| {
            t.conv2d(v[0], v[1], v[2], tape::ConvSpec { stride: 2, pad: 1 })
        });
    }
}

#[test]
fn transposed_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let inputs = vec![
        random_tensor(&mut rng, vec![2, 3, 2]),
        random_tensor(&mut rng, vec![2, 3, 4, 4]),
        random_tensor(&mut rng, vec![1, 3]),
    ];
    check_op(20, inputs, |t, v| {
        let y = t.conv_transpose2d(v[0], v[1], v[2], tape::ConvSpec { stride: 2, pad: 1 });
        assert_eq!(t.value(y).shape, vec![3, 6, 4]);
        y
    });
}

#[test]
fn attention_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inputs = vec![
        random_tensor(&mut rng, vec![5, 4]),
        random_tensor(&mut rng, vec![4, 4]),
        random_tensor(&mut rng, vec![4, 4]),
        random_tensor(&mut rng, vec![4, 4]),
    ];
    check_op(22, inputs, |t, v| {
        let q = t.matmul(v[0], v[1]);
        let k = t.matmul(v[0], v[2]);
        let val = t.matmul(v[0], v[3]);
        let kt = t.transpose(k);
        let s = t.matmul(q, kt);
        let s = t.scale(s, 0.5);
        let a = t.softmax_rows(s);
        t.matmul(a, val)
    });
}

fn tiny_config() -> NetworkConfig {
    NetworkConfig {
        image_size: 8,
        latent_i: 4,
        latent_t: 3,
        latent: 4,
        enc_channels: [2, 2, 3, 2],
        dec_channels: [2, 2, 2, 2],
        attn_width: 4,
        heads: 2,
        seed: 5,
    }
}

fn tiny_dataset(size: usize) -> Dataset {
    generate(&GeneratorConfig {
        seed: 4,
        per_template: 4,
        templates: vec![Category::SingleLane, Category::Intersection],
        image_size: size,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn tiny_quads(dataset: &Dataset, seed: u64) -> Vec<Quadruplet> {
    let index = build_index(dataset).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mine_epoch(&index, NegativeStrategy::Random, &mut rng).unwrap().quadruplets
}

#[test]
fn full_model_gradient_check() {
    let dataset = tiny_dataset(8);
    let config = tiny_config();
    let data = PreparedData::new(&config, &dataset).unwrap();
    let quad = tiny_quads(&dataset, 1)[0];
    let margins = MarginParams::default();
    let weights = LossWeights::default();
    let state = ModelState::init(&config).unwrap();
    let (_, grads) = objective(&state, &quad, &data, &margins, &weights).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let p = rng.gen_range(0..state.params.len());
        let i = rng.gen_range(0..state.params[p].value.len());
        let eval = |delta: f64| {
            let mut s = state.clone();
            s.params[p].value.data[i] += delta;
            objective(&s, &quad, &data, &margins, &weights).unwrap().0.total
        };
        let numeric = (eval(H) - eval(-H)) / (2.0 * H);
        let analytic = grads[p].data[i];
        assert!(
            close(analytic, numeric, 1e-4),
            "{}[{i}]: analytic {analytic} numeric {numeric}",
            state.params[p].name
        );
    }
}

#[test]
fn decoder_reconstruction_gradient() {
    let dataset = tiny_dataset(8);
    let config = tiny_config();
    let state = ModelState::init(&config).unwrap();
    let target = dataset.entries()[0].reconstruction_target().unwrap();
    let z = vec![0.3, -0.7, 1.1, 0.2];
    let weights = LossWeights::default();

    let loss_of = |s: &ModelState| {
        let pred = forward_decode(s, &z).unwrap();
        sparse_reconstruction_loss(&target, &pred, &weights).unwrap()
    };
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &state);
    let zv = tape.leaf(Tensor::row(z.clone()));
    let out = bound.decode(&mut tape, zv);
    let rec = loss_of(&state);
    let seed = Tensor::new(tape.value(out).shape.clone(), rec.grad.clone());
    let grads = tape.backward(&[(out, seed)]);

    for name in ["dec.fc.w", "dec.tconv0.w", "dec.tconv2.b"] {
        let p = state.params.iter().position(|p| p.name == name).unwrap();
        let analytic = grads.get(bound.vars[p]).unwrap().data[1];
        let mut plus = state.clone();
        plus.params[p].value.data[1] += H;
        let mut minus = state.clone();
        minus.params[p].value.data[1] -= H;
        let numeric = (loss_of(&plus).value - loss_of(&minus).value) / (2.0 * H);
        assert!(close(analytic, numeric, 1e-4), "{name}: {analytic} vs {numeric}");
    }
}

#[test]
fn update_direction_descends() {
    let dataset = tiny_dataset(8);
    let data = PreparedData::new(&tiny_config(), &dataset).unwrap();
    let quads = tiny_quads(&dataset, 2);
    let margins = MarginParams::default();
    let weights = LossWeights::default();
    for k in 0..20u64 {
        let config = NetworkConfig {
            seed: 100 + k,
            ..tiny_config()
        };
        let mut state = ModelState::init(&config).unwrap();
        // warm the optimizer moments so later steps are exercised too
        for q in quads.iter().take(k as usize % 4) {
            train_step(&mut state, q, &data, &margins, &weights, 1e-3).unwrap();
        }
        let quad = quads[k as usize % quads.len()];
        let (before, grads) = objective(&state, &quad, &data, &margins, &weights).unwrap();
        let (dir, _, _) = adam_direction(&state, &grads);
        let slope: f64 = grads
            .iter()
            .zip(&dir)
            .map(|(g, u)| g.data.iter().zip(&u.data).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        assert!(slope < 0.0, "state {k}: directional derivative {slope}");
        let mut moved = state.clone();
        for (p, u) in moved.params.iter_mut().zip(&dir) {
            p.value.data.iter_mut().zip(&u.data).for_each(|(x, u)| *x += 1e-7 * u);
        }
        let after = objective(&moved, &quad, &data, &margins, &weights).unwrap().0;
        assert!(after.total < before.total, "state {k}: {} -> {}", before.total, after.total);
    }
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let dataset = tiny_dataset(8);
    let data = PreparedData::new(&tiny_config(), &dataset).unwrap();
    let quad = tiny_quads(&dataset, 3)[0];
    let weights = LossWeights {
        beta_m: 0.0,
        beta_g: 0.0,
        beta_r: 0.0,
        beta_t: 0.0,
        beta_rec: 0.0,
        ..LossWeights::default()
    };
    let mut state = ModelState::init(&tiny_config()).unwrap();
    let before = state.params.clone();
    train_step(&mut state, &quad, &data, &MarginParams::default(), &weights, 1e-3).unwrap();
    assert_eq!(state.params, before);
}

#[test]
fn encode_is_deterministic_and_order_sensitive() {
    let dataset = tiny_dataset(64);
    let state = ModelState::init(&NetworkConfig::default()).unwrap();
    let s = &dataset.entries()[0];
    let a = forward_encode(&state, s).unwrap();
    assert_eq!(a, forward_encode(&state, s).unwrap());
    assert_eq!((a.z.len(), a.z_i.len(), a.z_t.len()), (64, 64, 16));
    assert!(a.z.iter().all(|v| v.is_finite()));

    let mut rev: Vec<[f64; 3]> = s.trajectory.points().iter().map(|p| [p.x, p.y, p.t]).collect();
    let times: Vec<f64> = rev.iter().map(|p| p[2]).collect();
    rev.reverse();
    for (p, t) in rev.iter_mut().zip(times) {
        p[2] = t;
    }
    let reversed = Scenario {
        trajectory: Trajectory::from_xyt(&rev).unwrap(),
        ..s.clone()
    };
    assert_ne!(forward_encode(&state, &reversed).unwrap().z, a.z);
}

#[test]
fn image_size_mismatch_is_rejected() {
    let dataset = tiny_dataset(8);
    let state = ModelState::init(&NetworkConfig::default()).unwrap();
    assert!(matches!(forward_encode(&state, &dataset.entries()[0]), Err(NnError::Shape(_))));
    assert!(forward_decode(&state, &[0.0; 3]).is_err());
}

#[test]
fn decode_shape_and_range() {
    let state = ModelState::init(&NetworkConfig::default()).unwrap();
    let out = forward_decode(&state, &[0.5; 64]).unwrap();
    assert_eq!(out.len(), 2 * 64 * 64);
    assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn embed_rows_match_single_encodes() {
    let dataset = tiny_dataset(8);
    let state = ModelState::init(&tiny_config()).unwrap();
    let rows = embed_dataset(&state, &dataset).unwrap();
    assert_eq!(rows.len(), dataset.len());
    for (row, s) in rows.iter().zip(dataset.entries()) {
        assert_eq!(row.len(), 4);
        assert_eq!(*row, forward_encode(&state, s).unwrap().z);
    }
}

#[test]
fn zero_epochs_return_initial_state() {
    let dataset = tiny_dataset(8);
    let config = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let out = train(&dataset, &tiny_config(), &config).unwrap();
    assert!(out.log.is_empty());
    assert_eq!(out.state, ModelState::init(&tiny_config()).unwrap());
}

#[test]
fn training_is_reproducible() {
    let dataset = tiny_dataset(8);
    let config = TrainConfig {
        epochs: 2,
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train(&dataset, &tiny_config(), &config).unwrap();
    let b = train(&dataset, &tiny_config(), &config).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.state, b.state);
    assert_eq!(a.log.len(), 2);
    assert!(a.log.iter().all(|m| m.total.is_finite() && (0.0..=1.0).contains(&m.ordering)));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dataset = tiny_dataset(8);
    let config = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let state = train(&dataset, &tiny_config(), &config).unwrap().state;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&state, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), state);

    let mut bytes = Vec::new();
    write_checkpoint(&state, &mut bytes).unwrap();
    bytes.truncate(bytes.len() - 8);
    assert!(read_checkpoint(&bytes[..]).unwrap_err().to_string().contains("shape mismatch"));
    assert!(read_checkpoint(&b"JUNKJUNKJUNK"[..]).is_err());
}
