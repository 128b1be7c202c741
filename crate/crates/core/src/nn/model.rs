use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{ConvSpec, Tape, Tensor, Var};
use super::NnError;
use crate::scenario::Scenario;

const ENC_CONV: ConvSpec = ConvSpec { stride: 2, pad: 1 };
const DEC_CONV: ConvSpec = ConvSpec { stride: 2, pad: 1 };
const ENC_KERNEL: usize = 3;
const DEC_KERNEL: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub image_size: usize,
    pub latent_i: usize,
    pub latent_t: usize,
    pub latent: usize,
    /// Output channels of the four strided encoder blocks.
    pub enc_channels: [usize; 4],
    /// Input channels of the decoder's upsampling blocks; the last block
    /// always emits the two target channels.
    pub dec_channels: [usize; 4],
    pub attn_width: usize,
    pub heads: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            latent_i: 64,
            latent_t: 16,
            latent: 64,
            enc_channels: [8, 16, 16, 32],
            dec_channels: [32, 16, 16, 8],
            attn_width: 64,
            heads: 2,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.image_size < 8 {
            return bad(format!("image_size {} below 8", self.image_size));
        }
        let dims = [self.latent_i, self.latent_t, self.latent, self.attn_width, self.heads];
        if dims.contains(&0) || self.enc_channels.contains(&0) || self.dec_channels.contains(&0) {
            return bad("all widths must be at least 1".into());
        }
        if self.attn_width % self.heads != 0 {
            return bad(format!(
                "attention width {} not divisible by {} heads",
                self.attn_width, self.heads
            ));
        }
        Ok(())
    }

    /// Number of upsampling blocks in the decoder.
    pub fn decoder_blocks(&self) -> usize {
        (self.image_size.trailing_zeros() as usize).min(4)
    }

    fn encoder_side(&self) -> usize {
        (0..4).fold(self.image_size, |s, _| (s + 2 * ENC_CONV.pad - ENC_KERNEL) / ENC_CONV.stride + 1)
    }

    /// Parameter names and shapes in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| out.push((name, shape));
        let mut cin = 1;
        for (k, &c) in self.enc_channels.iter().enumerate() {
            add(format!("enc.conv{k}.w"), vec![c, cin, ENC_KERNEL, ENC_KERNEL]);
            add(format!("enc.conv{k}.b"), vec![1, c]);
            cin = c;
        }
        let side = self.encoder_side();
        add("enc.fc.w".into(), vec![cin * side * side, self.latent_i]);
        add("enc.fc.b".into(), vec![1, self.latent_i]);

        let d = self.attn_width;
        add("traj.embed.w".into(), vec![3, d]);
        add("traj.embed.b".into(), vec![1, d]);
        add("traj.token".into(), vec![1, d]);
        for m in ["q", "k", "v", "o"] {
            add(format!("traj.{m}"), vec![d, d]);
        }
        add("traj.out.w".into(), vec![d, self.latent_t]);
        add("traj.out.b".into(), vec![1, self.latent_t]);

        add("fuse.0.w".into(), vec![self.latent_t + self.latent_i, self.latent]);
        add("fuse.0.b".into(), vec![1, self.latent]);
        add("fuse.1.w".into(), vec![self.latent, self.latent]);
        add("fuse.1.b".into(), vec![1, self.latent]);

        let nb = self.decoder_blocks();
        let s = self.image_size;
        if nb == 0 {
            add("dec.fc.w".into(), vec![self.latent, 2 * s * s]);
            add("dec.fc.b".into(), vec![1, 2 * s * s]);
        } else {
            let s0 = s >> nb;
            let c0 = self.dec_channels[0];
            add("dec.fc.w".into(), vec![self.latent, c0 * s0 * s0]);
            add("dec.fc.b".into(), vec![1, c0 * s0 * s0]);
            for k in 0..nb {
                let cin = self.dec_channels[k];
                let cout = if k + 1 == nb { 2 } else { self.dec_channels[k + 1] };
                add(format!("dec.tconv{k}.w"), vec![cin, cout, DEC_KERNEL, DEC_KERNEL]);
                add(format!("dec.tconv{k}.b"), vec![1, cout]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Parameters of all four sub-networks plus Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: NetworkConfig,
    pub params: Vec<Param>,
    pub moment1: Vec<Tensor>,
    pub moment2: Vec<Tensor>,
    pub step: u64,
}

fn fans(name: &str, shape: &[usize]) -> (usize, usize) {
    match shape {
        [o, c, k, k2] if name.starts_with("enc.") => (c * k * k2, o * k * k2),
        [c, o, k, k2] => (c * k * k2, o * k * k2),
        [a, b] => (*a, *b),
        _ => (1, 1),
    }
}

impl ModelState {
    /// Glorot-uniform weights, zero biases, small random embedding token.
    pub fn init(config: &NetworkConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params: Vec<Param> = config
            .parameter_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n = shape.iter().product();
                let data = if name.ends_with(".b") {
                    vec![0.0; n]
                } else {
                    let limit = if name == "traj.token" {
                        0.5
                    } else {
                        let (fi, fo) = fans(&name, &shape);
                        (6.0 / (fi + fo) as f64).sqrt()
                    };
                    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
                };
                Param {
                    name,
                    value: Tensor::new(shape, data),
                }
            })
            .collect();
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape.clone())).collect();
        Ok(Self {
            config: config.clone(),
            moment1: zeros.clone(),
            moment2: zeros,
            params,
            step: 0,
        })
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Checks that parameter names and shapes match the config.
    pub fn check_shapes(&self) -> Result<(), NnError> {
        let expected = self.config.parameter_shapes();
        let ok = expected.len() == self.params.len()
            && self.moment1.len() == self.params.len()
            && self.moment2.len() == self.params.len()
            && expected.iter().zip(&self.params).zip(self.moment1.iter().zip(&self.moment2)).all(
                |(((name, shape), p), (m, v))| {
                    *name == p.name && *shape == p.value.shape && *shape == m.shape && *shape == v.shape
                },
            );
        if ok {
            Ok(())
        } else {
            Err(NnError::Shape("parameters do not match the network config".into()))
        }
    }
}

/// Network inputs of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInput {
    /// `[1, S, S]`.
    pub image: Tensor,
    /// `[N, 3]` rows of normalized (x, y, t).
    pub trajectory: Tensor,
}

/// Positions relative to the image centre scaled to [-1, 1] over the image
/// extent, time scaled to [0, 1].
pub fn prepare_input(config: &NetworkConfig, s: &Scenario) -> Result<ScenarioInput, NnError> {
    let size = s.image.size();
    if size != config.image_size {
        return Err(NnError::Shape(format!(
            "image size {size} does not match network image size {}",
            config.image_size
        )));
    }
    let half = s.image.extent() / 2.0;
    let pts = s.trajectory.points();
    let (t0, span) = (pts[0].t, s.trajectory.duration());
    let traj = pts
        .iter()
        .flat_map(|p| [(p.x - half) / half, (p.y - half) / half, (p.t - t0) / span])
        .collect();
    Ok(ScenarioInput {
        image: Tensor::new(vec![1, size, size], s.image.pixels().to_vec()),
        trajectory: Tensor::new(vec![pts.len(), 3], traj),
    })
}

fn position_encoding(n: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let freq = 1.0 / 10000f64.powf((i - i % 2) as f64 / d as f64);
            let a = pos as f64 * freq;
            data[pos * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    Tensor::new(vec![n, d], data)
}

/// Model parameters placed on a tape.
pub struct Bound<'a> {
    state: &'a ModelState,
    pub vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    pub fn new(tape: &mut Tape, state: &'a ModelState) -> Self {
        let vars = state.params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        Self { state, vars }
    }

    fn p(&self, name: &str) -> Var {
        let i = self
            .state
            .params
            .iter()
            .position(|p| p.name == name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        self.vars[i]
    }

    fn dense(&self, tape: &mut Tape, x: Var, layer: &str) -> Var {
        let h = tape.matmul(x, self.p(&format!("{layer}.w")));
        tape.add_row(h, self.p(&format!("{layer}.b")))
    }

    fn encode_image(&self, tape: &mut Tape, image: &Tensor) -> Var {
        let mut x = tape.leaf(image.clone());
        for k in 0..4 {
            let (w, b) = (self.p(&format!("enc.conv{k}.w")), self.p(&format!("enc.conv{k}.b")));
            let c = tape.conv2d(x, w, b, ENC_CONV);
            x = tape.silu(c);
        }
        let n = tape.value(x).len();
        let flat = tape.reshape(x, vec![1, n]);
        self.dense(tape, flat, "enc.fc")
    }

    fn encode_trajectory(&self, tape: &mut Tape, traj: &Tensor) -> Var {
        let cfg = &self.state.config;
        let (n, d) = (traj.shape[0], cfg.attn_width);
        let x = tape.leaf(traj.clone());
        let e = self.dense(tape, x, "traj.embed");
        let e = tape.silu(e);
        let pe = tape.leaf(position_encoding(n, d));
        let e = tape.add(e, pe);
        let seq = tape.concat_rows(self.p("traj.token"), e);

        let token = tape.slice_row(seq, 0);
        let q = tape.matmul(token, self.p("traj.q"));
        let k = tape.matmul(seq, self.p("traj.k"));
        let v = tape.matmul(seq, self.p("traj.v"));
        let dh = d / cfg.heads;
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let attn = tape.softmax_rows(scores);
            heads.push(tape.matmul(attn, vh));
        }
        let o = tape.concat_cols(&heads);
        let o = tape.matmul(o, self.p("traj.o"));
        let h = tape.add(token, o);
        let h = tape.silu(h);
        self.dense(tape, h, "traj.out")
    }

    /// Returns `(z, z_i, z_t)`, each a single-row matrix.
    pub fn encode(&self, tape: &mut Tape, input: &ScenarioInput) -> (Var, Var, Var) {
        let z_i = self.encode_image(tape, &input.image);
        let z_t = self.encode_trajectory(tape, &input.trajectory);
        let cat = tape.concat_cols(&[z_t, z_i]);
        let h = self.dense(tape, cat, "fuse.0");
        let h = tape.silu(h);
        let z = self.dense(tape, h, "fuse.1");
        (z, z_i, z_t)
    }

    /// `[2, S, S]` prediction in [0, 1].
    pub fn decode(&self, tape: &mut Tape, z: Var) -> Var {
        let cfg = &self.state.config;
        let (s, nb) = (cfg.image_size, cfg.decoder_blocks());
        let h = self.dense(tape, z, "dec.fc");
        let mut x = if nb == 0 {
            tape.reshape(h, vec![2, s, s])
        } else {
            let s0 = s >> nb;
            let r = tape.reshape(h, vec![cfg.dec_channels[0], s0, s0]);
            tape.silu(r)
        };
        for k in 0..nb {
            let (w, b) = (self.p(&format!("dec.tconv{k}.w")), self.p(&format!("dec.tconv{k}.b")));
            x = tape.conv_transpose2d(x, w, b, DEC_CONV);
            if k + 1 < nb {
                x = tape.silu(x);
            }
        }
        tape.sigmoid(x)
    }
}

/// Embedding of one scenario with its intermediate encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub z: Vec<f64>,
    pub z_i: Vec<f64>,
    pub z_t: Vec<f64>,
}

pub fn encode_input(state: &ModelState, input: &ScenarioInput) -> LatentVector {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, state);
    let (z, z_i, z_t) = bound.encode(&mut tape, input);
    LatentVector {
        z: tape.value(z).data.clone(),
        z_i: tape.value(z_i).data.clone(),
        z_t: tape.value(z_t).data.clone(),
    }
}

pub fn forward_encode(state: &ModelState, s: &Scenario) -> Result<LatentVector, NnError> {
    let input = prepare_input(&state.config, s)?;
    Ok(encode_input(state, &input))
}

/// Reconstruction in the channel-major layout of the reconstruction target.
pub fn forward_decode(state: &ModelState, z: &[f64]) -> Result<Vec<f64>, NnError> {
    if z.len() != state.config.latent {
        return Err(NnError::Shape(format!(
            "latent length {} does not match {}",
            z.len(),
            state.config.latent
        )));
    }
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, state);
    let zv = tape.leaf(Tensor::row(z.to_vec()));
    let out = bound.decode(&mut tape, zv);
    Ok(tape.value(out).data.clone())
}
