//! Small multilayer perceptrons: tanh hidden activations, identity
//! output, optional bias removal, Glorot initialization, and the two
//! regularizers (spectral-norm sum and l2).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
/// Power-iteration count for the differentiable spectral norm.
pub const SPECTRAL_ITERS: usize = 25;

/// Network shape: tanh after every affine layer except the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub use_bias: bool,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, use_bias: bool) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArchitecture(
                "need at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArchitecture("zero-sized layer".into()));
        }
        Ok(MlpSpec {
            layer_sizes,
            use_bias,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Total parameter count (weights, plus biases when enabled).
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in 0..self.n_layers() {
            n += self.layer_sizes[l] * self.layer_sizes[l + 1];
            if self.use_bias {
                n += self.layer_sizes[l + 1];
            }
        }
        n
    }

    /// Offset of layer `l`'s weight block in the flat parameter vector.
    /// Layout per layer: W_l row-major (out×in), then b_l if enabled.
    fn layer_offset(&self, l: usize) -> usize {
        let mut off = 0;
        for i in 0..l {
            off += self.layer_sizes[i] * self.layer_sizes[i + 1];
            if self.use_bias {
                off += self.layer_sizes[i + 1];
            }
        }
        off
    }

    pub fn layer_weights<'a, S>(&self, params: &'a [S], l: usize) -> &'a [S] {
        let off = self.layer_offset(l);
        &params[off..off + self.layer_sizes[l] * self.layer_sizes[l + 1]]
    }
}

/// Trained (or initial) parameters paired with their shape.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<f64>,
    pub seed: u64,
}

/// Glorot-uniform initialization: weights on `[−L, L]` with
/// `L = sqrt(6/(fan_in+fan_out))`, biases zero, deterministic per seed.
pub fn mlp_new(layer_sizes: Vec<usize>, use_bias: bool, seed: u64) -> Result<MlpParams> {
    let spec = MlpSpec::new(layer_sizes, use_bias)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(spec.param_count());
    for l in 0..spec.n_layers() {
        let (fan_in, fan_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            weights.push(rng.gen_range(-limit..limit));
        }
        if use_bias {
            weights.extend(std::iter::repeat(0.0).take(fan_out));
        }
    }
    Ok(MlpParams {
        spec,
        weights,
        seed,
    })
}

/// Forward pass, generic over the scalar type so it can run on a tape.
pub fn mlp_forward<S: Real>(spec: &MlpSpec, params: &[S], input: &[S]) -> Result<Vec<S>> {
    if input.len() != spec.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input length {} does not match first layer size {}",
            input.len(),
            spec.input_dim()
        )));
    }
    debug_assert_eq!(params.len(), spec.param_count());
    let mut act = input.to_vec();
    let mut off = 0;
    for l in 0..spec.n_layers() {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let w = &params[off..off + n_in * n_out];
        off += n_in * n_out;
        let mut next = Vec::with_capacity(n_out);
        for r in 0..n_out {
            let mut acc = S::zero();
            for (c, &a) in act.iter().enumerate() {
                acc = acc + w[r * n_in + c] * a;
            }
            next.push(acc);
        }
        if spec.use_bias {
            let b = &params[off..off + n_out];
            off += n_out;
            for (v, &bi) in next.iter_mut().zip(b) {
                *v = *v + bi;
            }
        }
        if l + 1 < spec.n_layers() {
            for v in next.iter_mut() {
                *v = v.tanh();
            }
        }
        act = next;
    }
    Ok(act)
}

impl MlpParams {
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.spec, &self.weights, input)
    }
}

/// Largest-singular-value estimate via power iteration on `WᵀW` with a
/// fixed all-ones start vector; differentiable (participates in tapes).
pub fn spectral_norm<S: Real>(w: &[S], rows: usize, cols: usize, iters: usize) -> S {
    debug_assert_eq!(w.len(), rows * cols);
    let frob: f64 = w.iter().map(|x| x.value() * x.value()).sum();
    if frob == 0.0 {
        return S::zero();
    }
    let mut v: Vec<S> = vec![S::from_f64(1.0 / (cols as f64).sqrt()); cols];
    for _ in 0..iters {
        // u = W v, then v ← normalize(Wᵀ u)
        let u: Vec<S> = (0..rows)
            .map(|r| {
                (0..cols).fold(S::zero(), |acc, c| acc + w[r * cols + c] * v[c])
            })
            .collect();
        let wtu: Vec<S> = (0..cols)
            .map(|c| (0..rows).fold(S::zero(), |acc, r| acc + w[r * cols + c] * u[r]))
            .collect();
        let norm = wtu
            .iter()
            .fold(S::zero(), |acc, &x| acc + x * x)
            .sqrt_clamped();
        v = wtu.iter().map(|&x| x / norm).collect();
    }
    let wv: Vec<S> = (0..rows)
        .map(|r| (0..cols).fold(S::zero(), |acc, c| acc + w[r * cols + c] * v[c]))
        .collect();
    wv.iter()
        .fold(S::zero(), |acc, &x| acc + x * x)
        .sqrt_clamped()
}

/// Which complexity measure to penalize, and its weight in the cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    SpectralSum,
    L2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegSpec {
    pub kind: RegKind,
    pub weight: f64,
}

impl RegSpec {
    pub fn spectral_sum(weight: f64) -> Self {
        assert!(weight >= 0.0);
        RegSpec {
            kind: RegKind::SpectralSum,
            weight,
        }
    }
    pub fn l2(weight: f64) -> Self {
        assert!(weight >= 0.0);
        RegSpec {
            kind: RegKind::L2,
            weight,
        }
    }
}

/// Unscaled regularization term `R(θ)`; the caller multiplies by the
/// spec weight when assembling the cost.
pub fn regularizer<S: Real>(spec: &MlpSpec, params: &[S], reg: &RegSpec) -> S {
    match reg.kind {
        RegKind::SpectralSum => {
            let mut sum = S::zero();
            for l in 0..spec.n_layers() {
                let w = spec.layer_weights(params, l);
                sum = sum
                    + spectral_norm(w, spec.layer_sizes[l + 1], spec.layer_sizes[l], SPECTRAL_ITERS);
            }
            sum
        }
        RegKind::L2 => params.iter().fold(S::zero(), |acc, &x| acc + x * x),
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    use_bias: bool,
    seed: u64,
    /// Flat parameter vector; per layer: W row-major, then bias if enabled.
    weights: Vec<f64>,
    /// Fitted shooting states, when the checkpoint comes out of training.
    #[serde(default)]
    shooting_states: Vec<Vec<f64>>,
}

/// Checkpoint IO: JSON with shapes, flags, row-major weights, the seed
/// and a format-version field.
pub fn save_checkpoint(
    path: &std::path::Path,
    params: &MlpParams,
    shooting_states: &[Vec<f64>],
) -> Result<()> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        layer_sizes: params.spec.layer_sizes.clone(),
        use_bias: params.spec.use_bias,
        seed: params.seed,
        weights: params.weights.clone(),
        shooting_states: shooting_states.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<(MlpParams, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            file.format_version
        )));
    }
    let spec = MlpSpec::new(file.layer_sizes, file.use_bias)?;
    if file.weights.len() != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "weight count {} does not match shape (expected {})",
            file.weights.len(),
            spec.param_count()
        )));
    }
    Ok((
        MlpParams {
            spec,
            weights: file.weights,
            seed: file.seed,
        },
        file.shooting_states,
    ))
}
