//! Two-head multilayer perceptron.
//!
//! A shared trunk of dense layers (with a nonlinearity after each) feeds two
//! linear heads: one scoring target objects, one scoring grasp directions.
//! Inputs are standardized with per-feature mean and scale stored with the
//! weights.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use super::{FeatureVector, NUM_FEATURES, NUM_OBJECTS};
use crate::error::{Error, Result};
use crate::rng;
use crate::scene::GraspDirection;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpArchitecture {
    pub inputs: usize,
    pub hidden: Vec<usize>,
    pub num_objects: usize,
    pub num_directions: usize,
    pub activation: Activation,
}

impl Default for MlpArchitecture {
    /// 8 → 64 → 64 → 64 → (objects | directions), ReLU trunk.
    fn default() -> Self {
        MlpArchitecture {
            inputs: NUM_FEATURES,
            hidden: vec![64, 64, 64],
            num_objects: NUM_OBJECTS,
            num_directions: GraspDirection::COUNT,
            activation: Activation::Relu,
        }
    }
}

/// Dense layer `y = W x + b` with `W` of shape (outputs, inputs).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    fn zeros(outputs: usize, inputs: usize) -> Self {
        Dense { weights: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs) }
    }

    fn he(outputs: usize, inputs: usize, rng: &mut rng::Rng) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        Dense {
            weights: DMatrix::from_fn(outputs, inputs, |_, _| normal.sample(rng)),
            bias: DVector::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    /// Batched forward pass; columns of `x` are samples.
    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingMetadata {
    pub final_loss: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub trunk: Vec<Dense>,
    pub object_head: Dense,
    pub direction_head: Dense,
    pub activation: Activation,
    /// Per-feature standardization applied before the trunk.
    pub input_mean: DVector<f64>,
    pub input_scale: DVector<f64>,
    pub seed: u64,
    pub metadata: TrainingMetadata,
}

/// Gradients laid out like [`MlpParams`] layers.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub trunk: Vec<Dense>,
    pub object_head: Dense,
    pub direction_head: Dense,
}

impl MlpParams {
    /// He-initialized parameters.
    pub fn random(arch: &MlpArchitecture, seed: u64) -> Result<Self> {
        if arch.inputs == 0 || arch.num_objects == 0 || arch.num_directions == 0 || arch.hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let mut rng = rng::stream(seed, "mlp-init");
        let mut trunk = Vec::with_capacity(arch.hidden.len());
        let mut fan_in = arch.inputs;
        for &h in &arch.hidden {
            trunk.push(Dense::he(h, fan_in, &mut rng));
            fan_in = h;
        }
        Ok(MlpParams {
            trunk,
            object_head: Dense::he(arch.num_objects, fan_in, &mut rng),
            direction_head: Dense::he(arch.num_directions, fan_in, &mut rng),
            activation: arch.activation,
            input_mean: DVector::zeros(arch.inputs),
            input_scale: DVector::from_element(arch.inputs, 1.0),
            seed,
            metadata: TrainingMetadata::default(),
        })
    }

    /// All weights and biases zero.
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let mut fan_in = arch.inputs;
        let trunk = arch
            .hidden
            .iter()
            .map(|&h| {
                let d = Dense::zeros(h, fan_in);
                fan_in = h;
                d
            })
            .collect();
        MlpParams {
            trunk,
            object_head: Dense::zeros(arch.num_objects, fan_in),
            direction_head: Dense::zeros(arch.num_directions, fan_in),
            activation: arch.activation,
            input_mean: DVector::zeros(arch.inputs),
            input_scale: DVector::from_element(arch.inputs, 1.0),
            seed: 0,
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.input_mean.len()
    }

    pub fn num_objects(&self) -> usize {
        self.object_head.outputs()
    }

    pub fn num_directions(&self) -> usize {
        self.direction_head.outputs()
    }

    /// Checks the layer shape chain and finiteness.
    pub fn validate(&self) -> Result<()> {
        let mut fan_in = self.num_inputs();
        if self.input_scale.len() != fan_in {
            return Err(Error::invalid("input normalization sizes differ"));
        }
        for (i, l) in self.trunk.iter().enumerate() {
            if l.inputs() != fan_in || l.bias.len() != l.outputs() {
                return Err(Error::invalid(format!("trunk layer {i} has shape {}x{}, expected input {fan_in}", l.outputs(), l.inputs())));
            }
            fan_in = l.outputs();
        }
        for (name, h) in [("object", &self.object_head), ("direction", &self.direction_head)] {
            if h.inputs() != fan_in || h.bias.len() != h.outputs() || h.outputs() == 0 {
                return Err(Error::invalid(format!("{name} head has an inconsistent shape")));
            }
        }
        let finite = self.layers().all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.input_mean.iter().all(|v| v.is_finite())
            && self.input_scale.iter().all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        Ok(())
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk.iter().chain([&self.object_head, &self.direction_head])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk.iter_mut().chain([&mut self.object_head, &mut self.direction_head])
    }

    pub fn num_parameters(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then biases, layer by layer (trunk, object head, direction head).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for l in self.layers() {
            v.extend(l.weights.iter());
            v.extend(l.bias.iter());
        }
        v
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_parameters() {
            return Err(Error::invalid("flat parameter length mismatch"));
        }
        let mut i = 0;
        for l in self.layers_mut() {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = values[i];
                i += 1;
            }
        }
        Ok(())
    }

    fn normalize(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.input_mean;
            col.component_div_assign(&self.input_scale);
        }
        out
    }

    /// Batched forward pass returning trunk activations (input included) and
    /// raw head scores.
    fn forward_batch(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, DMatrix<f64>, DMatrix<f64>) {
        let mut acts = Vec::with_capacity(self.trunk.len() + 1);
        acts.push(self.normalize(x));
        for layer in &self.trunk {
            let mut z = layer.forward(acts.last().expect("non-empty"));
            let act = self.activation;
            z.apply(|v| *v = act.apply(*v));
            acts.push(z);
        }
        let top = acts.last().expect("non-empty");
        let obj = self.object_head.forward(top);
        let dir = self.direction_head.forward(top);
        (acts, obj, dir)
    }

    /// Scores for a batch of feature columns.
    pub fn scores_batch(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (_, o, d) = self.forward_batch(x);
        (o, d)
    }

    /// Mean (over the batch) of the summed per-head cross-entropy, and its
    /// gradient with respect to every weight and bias.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, objects: &[usize], directions: &[usize]) -> (f64, Gradients) {
        let b = x.ncols();
        let (acts, obj, dir) = self.forward_batch(x);
        let inv_b = 1.0 / b as f64;
        let mut loss = 0.0;
        let mut head_delta = |scores: &DMatrix<f64>, labels: &[usize]| {
            let mut delta = DMatrix::zeros(scores.nrows(), b);
            for (j, col) in scores.column_iter().enumerate() {
                let p = softmax(col.as_slice());
                loss -= p[labels[j]].max(f64::MIN_POSITIVE).ln();
                for (k, pk) in p.iter().enumerate() {
                    delta[(k, j)] = (pk - if k == labels[j] { 1.0 } else { 0.0 }) * inv_b;
                }
            }
            delta
        };
        let d_obj = head_delta(&obj, objects);
        let d_dir = head_delta(&dir, directions);
        loss *= inv_b;

        let top = acts.last().expect("non-empty");
        let grad_of = |delta: &DMatrix<f64>, input: &DMatrix<f64>| Dense {
            weights: delta * input.transpose(),
            bias: delta.column_sum(),
        };
        let object_head = grad_of(&d_obj, top);
        let direction_head = grad_of(&d_dir, top);

        let mut upstream = self.object_head.weights.transpose() * &d_obj + self.direction_head.weights.transpose() * &d_dir;
        let mut trunk = vec![Dense::zeros(0, 0); self.trunk.len()];
        for i in (0..self.trunk.len()).rev() {
            let act = self.activation;
            let mut delta = upstream;
            delta.zip_apply(&acts[i + 1], |d, a| *d *= act.derivative(a));
            trunk[i] = grad_of(&delta, &acts[i]);
            upstream = self.trunk[i].weights.transpose() * &delta;
        }
        (loss, Gradients { trunk, object_head, direction_head })
    }

    /// Loss only.
    pub fn loss(&self, x: &DMatrix<f64>, objects: &[usize], directions: &[usize]) -> f64 {
        self.loss_and_gradient(x, objects, directions).0
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }

    /// Text model format (see `docs/formats.md`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            let parts: Vec<String> = vals.map(|v| format!("{v:e}")).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        };
        let _ = writeln!(s, "teleop-mlp {MODEL_FORMAT_VERSION}");
        let _ = writeln!(s, "activation {}", self.activation.as_str());
        let _ = writeln!(s, "seed {}", self.seed);
        match self.metadata.final_loss {
            Some(l) => {
                let _ = writeln!(s, "final_loss {l:e}");
            }
            None => s.push_str("final_loss none\n"),
        }
        for w in &self.metadata.warnings {
            let _ = writeln!(s, "warning {}", w.replace('\n', " "));
        }
        let _ = writeln!(s, "inputs {}", self.num_inputs());
        s.push_str("input_mean ");
        row(&mut s, &mut self.input_mean.iter().copied());
        s.push_str("input_scale ");
        row(&mut s, &mut self.input_scale.iter().copied());
        let named = self
            .trunk
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("trunk.{i}"), l))
            .chain([("object_head".to_string(), &self.object_head), ("direction_head".to_string(), &self.direction_head)]);
        for (name, l) in named {
            let _ = writeln!(s, "layer {name} {} {}", l.outputs(), l.inputs());
            for r in 0..l.outputs() {
                row(&mut s, &mut l.weights.row(r).iter().copied());
            }
            s.push_str("bias ");
            row(&mut s, &mut l.bias.iter().copied());
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let err = |line: usize, msg: &str| Error::Parse { location: format!("{source}:{}", line + 1), message: msg.to_string() };
        let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
            let (i, l) = lines.next().ok_or_else(|| err(usize::MAX - 1, &format!("unexpected end of file, expected {expect}")))?;
            Ok((i, l.split_whitespace().map(str::to_string).collect()))
        };
        let nums = |i: usize, parts: &[String], n: usize| -> Result<Vec<f64>> {
            if parts.len() != n {
                return Err(err(i, &format!("expected {n} values, found {}", parts.len())));
            }
            parts.iter().map(|p| p.parse::<f64>().map_err(|_| err(i, &format!("bad number '{p}'")))).collect()
        };

        let (i, header) = next("header")?;
        if header.len() != 2 || header[0] != "teleop-mlp" {
            return Err(err(i, "missing 'teleop-mlp <version>' header"));
        }
        if header[1] != MODEL_FORMAT_VERSION.to_string() {
            return Err(err(i, &format!("unsupported model version {}", header[1])));
        }
        let (i, act) = next("activation")?;
        let activation = match act.as_slice() {
            [k, v] if k == "activation" => Activation::parse(v).ok_or_else(|| err(i, "unknown activation"))?,
            _ => return Err(err(i, "expected 'activation <name>'")),
        };
        let (i, seed) = next("seed")?;
        let seed = match seed.as_slice() {
            [k, v] if k == "seed" => v.parse().map_err(|_| err(i, "bad seed"))?,
            _ => return Err(err(i, "expected 'seed <u64>'")),
        };
        let (i, fl) = next("final_loss")?;
        let final_loss = match fl.as_slice() {
            [k, v] if k == "final_loss" && v == "none" => None,
            [k, v] if k == "final_loss" => Some(v.parse().map_err(|_| err(i, "bad final_loss"))?),
            _ => return Err(err(i, "expected 'final_loss <value|none>'")),
        };
        let mut warnings = Vec::new();
        let (mut i, mut parts) = next("inputs")?;
        while parts.first().map(String::as_str) == Some("warning") {
            warnings.push(parts[1..].join(" "));
            (i, parts) = next("inputs")?;
        }
        let inputs: usize = match parts.as_slice() {
            [k, v] if k == "inputs" => v.parse().map_err(|_| err(i, "bad input count"))?,
            _ => return Err(err(i, "expected 'inputs <n>'")),
        };
        let mut vector_line = |key: &str| -> Result<DVector<f64>> {
            let (i, parts) = next(key)?;
            if parts.first().map(String::as_str) != Some(key) {
                return Err(err(i, &format!("expected '{key}'")));
            }
            Ok(DVector::from_vec(nums(i, &parts[1..], inputs)?))
        };
        let input_mean = vector_line("input_mean")?;
        let input_scale = vector_line("input_scale")?;

        let mut layers: Vec<(String, Dense)> = Vec::new();
        loop {
            let (i, parts) = next("layer or end")?;
            if parts.first().map(String::as_str) == Some("end") {
                break;
            }
            let (name, rows, cols) = match parts.as_slice() {
                [k, name, r, c] if k == "layer" => (
                    name.clone(),
                    r.parse::<usize>().map_err(|_| err(i, "bad row count"))?,
                    c.parse::<usize>().map_err(|_| err(i, "bad column count"))?,
                ),
                _ => return Err(err(i, "expected 'layer <name> <outputs> <inputs>'")),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (i, parts) = next("weight row")?;
                data.extend(nums(i, &parts, cols)?);
            }
            let (i, parts) = next("bias")?;
            if parts.first().map(String::as_str) != Some("bias") {
                return Err(err(i, "expected 'bias'"));
            }
            let bias = DVector::from_vec(nums(i, &parts[1..], rows)?);
            layers.push((name, Dense { weights: DMatrix::from_row_slice(rows, cols, &data), bias }));
        }
        if layers.len() < 2 {
            return Err(err(0, "model needs at least the two head layers"));
        }
        let (dname, direction_head) = layers.pop().expect("len checked");
        let (oname, object_head) = layers.pop().expect("len checked");
        if dname != "direction_head" || oname != "object_head" {
            return Err(err(0, "last two layers must be object_head then direction_head"));
        }
        for (k, (name, _)) in layers.iter().enumerate() {
            if *name != format!("trunk.{k}") {
                return Err(err(0, &format!("unexpected layer name {name}")));
            }
        }
        let params = MlpParams {
            trunk: layers.into_iter().map(|(_, l)| l).collect(),
            object_head,
            direction_head,
            activation,
            input_mean,
            input_scale,
            seed,
            metadata: TrainingMetadata { final_loss, warnings },
        };
        params.validate().map_err(|e| Error::Parse { location: source.to_string(), message: e.to_string() })?;
        Ok(params)
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Object and direction scores for one feature vector.
pub fn mlp_forward(params: &MlpParams, features: &FeatureVector) -> Result<(DVector<f64>, DVector<f64>)> {
    if features.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    if params.num_inputs() != NUM_FEATURES {
        return Err(Error::invalid("model input size does not match the feature vector"));
    }
    let x = DMatrix::from_column_slice(NUM_FEATURES, 1, &features.0);
    let (o, d) = params.scores_batch(&x);
    Ok((o.column(0).into_owned(), d.column(0).into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn small_arch() -> MlpArchitecture {
        MlpArchitecture { inputs: 8, hidden: vec![4, 4], num_objects: 3, num_directions: 2, activation: Activation::Tanh }
    }

    #[test]
    fn zero_params_score_zero() {
        let p = MlpParams::zeros(&MlpArchitecture::default());
        let f = FeatureVector([0.3, 0.1, 0.2, 0.0, 1.0, -0.5, 0.2, 0.1]);
        let (o, d) = mlp_forward(&p, &f).unwrap();
        assert!(o.iter().chain(d.iter()).all(|v| *v == 0.0));
        assert_eq!(o.argmax().0, 0);
        assert_eq!(d.argmax().0, 0);
    }

    #[test]
    fn forward_deterministic_and_softmax_normalized() {
        let p = MlpParams::random(&MlpArchitecture::default(), 4).unwrap();
        let f = FeatureVector([0.3, 0.1, 0.2, 0.05, 0.7, -0.5, 0.2, 0.1]);
        let a = mlp_forward(&p, &f).unwrap();
        assert_eq!(a, mlp_forward(&p, &f).unwrap());
        for head in [&a.0, &a.1] {
            let s: f64 = softmax(head.as_slice()).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert!(mlp_forward(&p, &FeatureVector([f64::NAN; 8])).is_err());
    }

    #[test]
    fn argmax_shift_invariance() {
        let scores = [0.2, 1.4, -0.3];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 7.5).collect();
        let am = |v: &[f64]| DVector::from_column_slice(v).argmax().0;
        assert_eq!(am(&scores), am(&shifted));
        let a = softmax(&scores);
        let b = softmax(&shifted);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn default_shape_chain() {
        let p = MlpParams::random(&MlpArchitecture::default(), 1).unwrap();
        let shapes: Vec<(usize, usize)> = p.trunk.iter().map(|l| (l.outputs(), l.inputs())).collect();
        assert_eq!(shapes, vec![(64, 8), (64, 64), (64, 64)]);
        assert_eq!((p.object_head.outputs(), p.direction_head.outputs()), (3, 2));
        p.validate().unwrap();
    }

    /// Central finite differences of the loss against the analytic gradient.
    fn gradient_check(seed: u64) -> f64 {
        let mut p = MlpParams::random(&small_arch(), seed).unwrap();
        let mut rng = rng::stream(seed, "gradcheck");
        let b = 5;
        let x = DMatrix::from_fn(8, b, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let objs: Vec<usize> = (0..b).map(|_| rng.random_range(0..3)).collect();
        let dirs: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
        let (_, g) = p.loss_and_gradient(&x, &objs, &dirs);
        let analytic: Vec<f64> = g
            .trunk
            .iter()
            .chain([&g.object_head, &g.direction_head])
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect();
        let base = p.flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] = base[i] + h;
            p.set_flat(&v).unwrap();
            let up = p.loss(&x, &objs, &dirs);
            v[i] = base[i] - h;
            p.set_flat(&v).unwrap();
            let down = p.loss(&x, &objs, &dirs);
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        p.set_flat(&base).unwrap();
        worst
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let err = gradient_check(seed);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn text_format_round_trip() {
        let mut p = MlpParams::random(&MlpArchitecture::default(), 9).unwrap();
        p.metadata.final_loss = Some(0.25);
        p.metadata.warnings.push("single class".into());
        p.input_scale[3] = 0.125;
        let text = p.to_text();
        let back = MlpParams::from_text(&text, "mem").unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_text(), text);
        assert!(MlpParams::from_text("teleop-mlp 2\n", "mem").is_err());
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(MlpParams::from_text(&truncated, "mem").is_err());
    }
}
