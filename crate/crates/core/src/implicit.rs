//! The implicit occupancy function: a small MLP whose weights come from outside.
//!
//! Every layer computes `y = (W x) * s + b` with an elementwise scale `s`
//! applied before the bias. Hidden layers use a leaky ReLU, the output layer a
//! sigmoid, so `g(p)` is a confidence in `(0, 1)` that `p` lies on the object.
//!
//! Besides evaluation this module provides the two analytic derivatives the
//! rest of the crate needs: the gradient of `-log g(p)` with respect to the
//! input point (used by the sampler) and the gradient of the mean binary
//! cross-entropy with respect to the flat weight vector (used to train the
//! encoder that generates those weights).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArch {
    pub layer_dims: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for MlpArch {
    fn default() -> Self {
        Self { layer_dims: vec![3, 32, 32, 1], leaky_slope: 0.2 }
    }
}

impl MlpArch {
    pub fn new(layer_dims: Vec<usize>, leaky_slope: f64) -> Result<Self> {
        let arch = Self { layer_dims, leaky_slope };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.layer_dims;
        if d.len() < 2 || d[0] != 3 || *d.last().unwrap() != 1 || d.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "layer dims must start at 3, end at 1 and be positive, got {d:?}"
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::ShapeMismatch(format!(
                "leaky slope must lie in (0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// `(in, out)` for layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_dims[l], self.layer_dims[l + 1])
    }

    fn max_width(&self) -> usize {
        *self.layer_dims.iter().max().unwrap()
    }
}

/// Number of scalars in weights, biases and scales over all layers.
pub fn param_count(arch: &MlpArch) -> usize {
    (0..arch.num_layers())
        .map(|l| {
            let (i, o) = arch.layer_shape(l);
            i * o + 2 * o
        })
        .sum()
}

/// Which of the three per-layer tensors a flat range belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    Scale,
}

impl ParamKind {
    pub const ALL: [ParamKind; 3] = [ParamKind::Weight, ParamKind::Bias, ParamKind::Scale];

    pub fn tag(self) -> &'static str {
        match self {
            ParamKind::Weight => "w",
            ParamKind::Bias => "b",
            ParamKind::Scale => "s",
        }
    }
}

/// Offset and length of every `(layer, kind)` tensor inside the flat vector.
///
/// The flat layout is layer-major; within a layer the weight matrix comes
/// first (row-major, `out x in`), then the bias, then the scale.
pub fn flat_layout(arch: &MlpArch) -> Vec<(usize, ParamKind, usize, usize)> {
    let mut out = Vec::with_capacity(arch.num_layers() * 3);
    let mut offset = 0;
    for l in 0..arch.num_layers() {
        let (i, o) = arch.layer_shape(l);
        for (kind, len) in [(ParamKind::Weight, i * o), (ParamKind::Bias, o), (ParamKind::Scale, o)] {
            out.push((l, kind, offset, len));
            offset += len;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Row-major `out x in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Weights, biases and scales of one implicit function, checked against its arch.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitParams {
    arch: MlpArch,
    layers: Vec<LayerParams>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Largest f64 below 1; keeps saturated confidences strictly inside `(0, 1)`.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
fn confidence_of(z: f64) -> f64 {
    sigmoid(z).clamp(f64::MIN_POSITIVE, ONE_MINUS)
}

/// Binary cross-entropy of logit `z` against `label`, and its derivative in `z`.
#[inline]
pub(crate) fn bce_with_logit(z: f64, label: f64) -> (f64, f64) {
    let loss = label * softplus(-z) + (1.0 - label) * softplus(z);
    (loss, sigmoid(z) - label)
}

/// Per-layer scratch buffers: inputs and pre-activations.
struct Workspace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

impl Workspace {
    fn new(arch: &MlpArch) -> Self {
        let n = arch.num_layers();
        Self {
            inputs: (0..n).map(|l| vec![0.0; arch.layer_dims[l]]).collect(),
            pre: (0..n).map(|l| vec![0.0; arch.layer_dims[l + 1]]).collect(),
            delta: Vec::with_capacity(arch.max_width()),
            back: Vec::with_capacity(arch.max_width()),
        }
    }
}

impl ImplicitParams {
    pub fn new(arch: MlpArch, layers: Vec<LayerParams>) -> Result<Self> {
        arch.validate()?;
        if layers.len() != arch.num_layers() {
            return Err(Error::ShapeMismatch(format!(
                "arch has {} layers, got {}",
                arch.num_layers(),
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (i, o) = arch.layer_shape(l);
            if layer.weight.len() != i * o || layer.bias.len() != o || layer.scale.len() != o {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: expected {o}x{i} weight and {o}-vectors, got {}/{}/{}",
                    layer.weight.len(),
                    layer.bias.len(),
                    layer.scale.len()
                )));
            }
            let finite = layer
                .weight
                .iter()
                .chain(&layer.bias)
                .chain(&layer.scale)
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::ShapeMismatch(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(Self { arch, layers })
    }

    /// Builds params from the flat layer-major vector described by [`flat_layout`].
    pub fn from_flat(arch: MlpArch, flat: &[f64]) -> Result<Self> {
        arch.validate()?;
        if flat.len() != param_count(&arch) {
            return Err(Error::ShapeMismatch(format!(
                "expected {} scalars, got {}",
                param_count(&arch),
                flat.len()
            )));
        }
        let mut rest = flat;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let layers = (0..arch.num_layers())
            .map(|l| {
                let (i, o) = arch.layer_shape(l);
                LayerParams { weight: take(i * o), bias: take(o), scale: take(o) }
            })
            .collect();
        Self::new(arch, layers)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(param_count(&self.arch));
        for layer in &self.layers {
            out.extend_from_slice(&layer.weight);
            out.extend_from_slice(&layer.bias);
            out.extend_from_slice(&layer.scale);
        }
        out
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Runs the network on `p`, filling the workspace, and returns the output logit.
    fn logit_into(&self, p: Point3, ws: &mut Workspace) -> f64 {
        let slope = self.arch.leaky_slope;
        let last = self.layers.len() - 1;
        ws.inputs[0].copy_from_slice(&p.to_array());
        for (l, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = self.arch.layer_shape(l);
            for o in 0..n_out {
                let row = &layer.weight[o * n_in..(o + 1) * n_in];
                let dot: f64 = row.iter().zip(&ws.inputs[l]).map(|(w, x)| w * x).sum();
                ws.pre[l][o] = dot * layer.scale[o] + layer.bias[o];
            }
            if l < last {
                for (dst, &y) in ws.inputs[l + 1].iter_mut().zip(&ws.pre[l]) {
                    *dst = if y >= 0.0 { y } else { slope * y };
                }
            }
        }
        ws.pre[last][0]
    }

    /// Backpropagates `dz` (derivative of a scalar loss in the output logit)
    /// down to the input point, leaving per-layer deltas untouched.
    fn input_grad_from(&self, dz: f64, ws: &mut Workspace) -> Point3 {
        let slope = self.arch.leaky_slope;
        ws.delta.clear();
        ws.delta.push(dz);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (n_in, n_out) = self.arch.layer_shape(l);
            ws.back.clear();
            ws.back.resize(n_in, 0.0);
            for o in 0..n_out {
                let g = ws.delta[o] * layer.scale[o];
                let row = &layer.weight[o * n_in..(o + 1) * n_in];
                for (b, w) in ws.back.iter_mut().zip(row) {
                    *b += g * w;
                }
            }
            if l > 0 {
                // Through the leaky ReLU of the previous layer; slope 1 at exactly 0.
                for (b, &y) in ws.back.iter_mut().zip(&ws.pre[l - 1]) {
                    if y < 0.0 {
                        *b *= slope;
                    }
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.back);
        }
        Point3::new(ws.delta[0], ws.delta[1], ws.delta[2])
    }

    /// Output logit (pre-sigmoid) at `p`.
    pub fn logit(&self, p: Point3) -> f64 {
        self.logit_into(p, &mut Workspace::new(&self.arch))
    }

    /// Confidence `g(p)` in `(0, 1)`.
    pub fn confidence(&self, p: Point3) -> f64 {
        confidence_of(self.logit(p))
    }

    /// Confidence for every point; identical, bit for bit, to calling
    /// [`confidence`](Self::confidence) on each point separately.
    pub fn forward(&self, points: &[Point3]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.arch);
        points.iter().map(|&p| confidence_of(self.logit_into(p, &mut ws))).collect()
    }

    /// Confidence at `p` and the gradient of `-log g(p)` with respect to `p`.
    pub fn input_gradient(&self, p: Point3) -> (f64, Point3) {
        let mut ws = Workspace::new(&self.arch);
        self.input_gradient_with(p, &mut ws)
    }

    fn input_gradient_with(&self, p: Point3, ws: &mut Workspace) -> (f64, Point3) {
        let z = self.logit_into(p, ws);
        // d(-log sigmoid(z))/dz = sigmoid(z) - 1 = -sigmoid(-z), exact for saturated z.
        let dz = -sigmoid(-z);
        (confidence_of(z), self.input_grad_from(dz, ws))
    }

    /// Batched [`input_gradient`](Self::input_gradient) sharing one workspace.
    pub fn input_gradients(&self, points: &[Point3]) -> Vec<(f64, Point3)> {
        let mut ws = Workspace::new(&self.arch);
        points.iter().map(|&p| self.input_gradient_with(p, &mut ws)).collect()
    }

    /// Smallest `|pre-activation|` over hidden units at `p`; distance to the
    /// nearest leaky-ReLU kink in pre-activation space.
    pub fn kink_margin(&self, p: Point3) -> f64 {
        let mut ws = Workspace::new(&self.arch);
        self.logit_into(p, &mut ws);
        let hidden = self.layers.len() - 1;
        ws.pre[..hidden]
            .iter()
            .flatten()
            .map(|y| y.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean binary cross-entropy of `g` on labeled points.
    pub fn bce_loss(&self, points: &[Point3], labels: &[f64]) -> f64 {
        assert_eq!(points.len(), labels.len());
        let mut ws = Workspace::new(&self.arch);
        let total: f64 = points
            .iter()
            .zip(labels)
            .map(|(&p, &y)| bce_with_logit(self.logit_into(p, &mut ws), y).0)
            .sum();
        total / points.len() as f64
    }

    /// Mean binary cross-entropy and its gradient with respect to the flat
    /// parameter vector (same layout as [`to_flat`](Self::to_flat)).
    pub fn bce_param_gradient(&self, points: &[Point3], labels: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(points.len(), labels.len());
        let n = points.len().max(1) as f64;
        let slope = self.arch.leaky_slope;
        let layout = flat_layout(&self.arch);
        let mut grad = vec![0.0; param_count(&self.arch)];
        let mut ws = Workspace::new(&self.arch);
        let mut loss = 0.0;
        let mut delta: Vec<f64> = Vec::with_capacity(self.arch.max_width());
        let mut back: Vec<f64> = Vec::with_capacity(self.arch.max_width());
        for (&p, &y) in points.iter().zip(labels) {
            let z = self.logit_into(p, &mut ws);
            let (l_i, dz) = bce_with_logit(z, y);
            loss += l_i;
            delta.clear();
            delta.push(dz / n);
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let (n_in, n_out) = self.arch.layer_shape(l);
                let (_, _, w_off, _) = layout[3 * l];
                let (_, _, b_off, _) = layout[3 * l + 1];
                let (_, _, s_off, _) = layout[3 * l + 2];
                let x = &ws.inputs[l];
                back.clear();
                back.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weight[o * n_in..(o + 1) * n_in];
                    let wx: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
                    grad[b_off + o] += d;
                    grad[s_off + o] += d * wx;
                    let ds = d * layer.scale[o];
                    let gw = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for ((g, xi), (b, w)) in gw.iter_mut().zip(x).zip(back.iter_mut().zip(row)) {
                        *g += ds * xi;
                        *b += ds * w;
                    }
                }
                if l > 0 {
                    for (b, &pre) in back.iter_mut().zip(&ws.pre[l - 1]) {
                        if pre < 0.0 {
                            *b *= slope;
                        }
                    }
                }
                std::mem::swap(&mut delta, &mut back);
            }
        }
        (loss / n, grad)
    }

    const MAGIC: [u8; 4] = *b"HOIF";
    const VERSION: u32 = 1;

    /// Writes the versioned binary record: magic, version, arch header, then
    /// the flat parameters as little-endian `f32`. The leaky slope is kept as `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.arch.layer_dims.len() as u32).to_le_bytes())?;
        for &d in &self.arch.layer_dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&self.arch.leaky_slope.to_le_bytes())?;
        for v in self.to_flat() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        let mut next = |r: &mut R| -> Result<[u8; 4]> {
            r.read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated implicit record: {e}")))?;
            Ok(word)
        };
        if next(&mut r)? != Self::MAGIC {
            return Err(Error::Format("not an implicit-function record".into()));
        }
        let version = u32::from_le_bytes(next(&mut r)?);
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported implicit record version {version}")));
        }
        let n_dims = u32::from_le_bytes(next(&mut r)?) as usize;
        if n_dims > 64 {
            return Err(Error::Format(format!("implausible layer count {n_dims}")));
        }
        let dims = (0..n_dims)
            .map(|_| Ok(u32::from_le_bytes(next(&mut r)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let (lo, hi) = (next(&mut r)?, next(&mut r)?);
        let slope = f64::from_le_bytes([lo[0], lo[1], lo[2], lo[3], hi[0], hi[1], hi[2], hi[3]]);
        let arch = MlpArch::new(dims, slope)?;
        let flat = (0..param_count(&arch))
            .map(|_| Ok(f32::from_le_bytes(next(&mut r)?) as f64))
            .collect::<Result<Vec<_>>>()?;
        Self::from_flat(arch, &flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Straight-line scalar evaluation, independent of the workspace code.
    fn reference_logit(params: &ImplicitParams, p: Point3) -> f64 {
        let mut x = p.to_array().to_vec();
        let n = params.layers.len();
        for (l, layer) in params.layers.iter().enumerate() {
            let (n_in, n_out) = params.arch.layer_shape(l);
            let mut y = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = 0.0;
                for i in 0..n_in {
                    acc += layer.weight[o * n_in + i] * x[i];
                }
                y[o] = acc * layer.scale[o] + layer.bias[o];
            }
            if l + 1 < n {
                for v in &mut y {
                    if *v < 0.0 {
                        *v *= params.arch.leaky_slope;
                    }
                }
            }
            x = y;
        }
        x[0]
    }

    fn random_params(arch: &MlpArch, seed: u64) -> ImplicitParams {
        let mut rng = rng_for(seed, &[]);
        let flat: Vec<f64> = flat_layout(arch)
            .into_iter()
            .flat_map(|(_, kind, _, len)| {
                (0..len)
                    .map(|_| {
                        let g: f64 = rng.sample(StandardNormal);
                        match kind {
                            ParamKind::Scale => 1.0 + 0.3 * g,
                            _ => g,
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        ImplicitParams::from_flat(arch.clone(), &flat).unwrap()
    }

    #[test]
    fn param_counts() {
        assert_eq!(param_count(&MlpArch::default()), 1282);
        assert_eq!(param_count(&MlpArch::new(vec![3, 1], 0.2).unwrap()), 5);
        // (3*2 + 2 + 2) + (2*1 + 1 + 1)
        assert_eq!(param_count(&MlpArch::new(vec![3, 2, 1], 0.2).unwrap()), 14);
    }

    #[test]
    fn arch_validation() {
        assert!(MlpArch::new(vec![3], 0.2).is_err());
        assert!(MlpArch::new(vec![2, 1], 0.2).is_err());
        assert!(MlpArch::new(vec![3, 2], 0.2).is_err());
        assert!(MlpArch::new(vec![3, 1], 1.0).is_err());
        assert!(ImplicitParams::from_flat(MlpArch::default(), &[0.0; 10]).is_err());
        let bad = LayerParams { weight: vec![f64::NAN, 0.0, 0.0], bias: vec![0.0], scale: vec![1.0] };
        assert!(matches!(
            ImplicitParams::new(MlpArch::new(vec![3, 1], 0.2).unwrap(), vec![bad]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let arch = MlpArch::default();
        let mut flat = random_params(&arch, 3).to_flat();
        let (_, _, off, _) = flat_layout(&arch)[6];
        flat[off..off + 32].iter_mut().for_each(|v| *v = 0.0);
        flat[off + 32] = 0.0;
        let params = ImplicitParams::from_flat(arch, &flat).unwrap();
        let pts = [Point3::new(0.1, -0.3, 2.0), Point3::new(-5.0, 0.0, 1.0)];
        assert_eq!(params.forward(&pts), vec![0.5, 0.5]);
    }

    #[test]
    fn tiny_arch_hand_evaluated() {
        // Layer 0: W = [[1, -2, 0.5], [0.3, 0.1, -1]], s = [2, 0.5], b = [0.1, -0.2]
        // Layer 1: W = [[1.5, -1]], s = [0.8], b = [0.05]; input p = (0.4, 0.1, -0.2).
        // h0 = (0.4 - 0.2 - 0.1) * 2 + 0.1 = 0.3
        // h1 = (0.12 + 0.01 + 0.2) * 0.5 - 0.2 = -0.035 -> leaky 0.2 -> -0.007
        // z  = (1.5 * 0.3 + 0.007) * 0.8 + 0.05 = 0.4156
        let arch = MlpArch::new(vec![3, 2, 1], 0.2).unwrap();
        let params = ImplicitParams::new(
            arch,
            vec![
                LayerParams {
                    weight: vec![1.0, -2.0, 0.5, 0.3, 0.1, -1.0],
                    bias: vec![0.1, -0.2],
                    scale: vec![2.0, 0.5],
                },
                LayerParams { weight: vec![1.5, -1.0], bias: vec![0.05], scale: vec![0.8] },
            ],
        )
        .unwrap();
        let p = Point3::new(0.4, 0.1, -0.2);
        assert!((params.logit(p) - 0.4156).abs() < 1e-12);
        let expected = 1.0 / (1.0 + (-0.4156f64).exp());
        assert!((params.confidence(p) - expected).abs() < 1e-12);
    }

    #[test]
    fn scale_weight_bilinearity() {
        let arch = MlpArch::default();
        let base = random_params(&arch, 11);
        let mut layers = base.layers.clone();
        layers[1].scale.iter_mut().for_each(|s| *s *= 2.0);
        layers[1].weight.iter_mut().for_each(|w| *w *= 0.5);
        let other = ImplicitParams::new(arch, layers).unwrap();
        let pts: Vec<Point3> = (0..20).map(|i| Point3::new(0.05 * i as f64, -0.3, 0.1)).collect();
        // Powers of two: exact in binary floating point.
        assert_eq!(base.forward(&pts), other.forward(&pts));
    }

    #[test]
    fn batch_equals_single() {
        let params = random_params(&MlpArch::default(), 5);
        let pts: Vec<Point3> = (0..50)
            .map(|i| Point3::new((i as f64).sin(), (i as f64 * 0.7).cos(), 0.01 * i as f64))
            .collect();
        let batch = params.forward(&pts);
        for (p, v) in pts.iter().zip(&batch) {
            assert_eq!(params.confidence(*p).to_bits(), v.to_bits());
            assert_eq!(params.input_gradient(*p).0.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn saturated_output_has_vanishing_gradient() {
        let arch = MlpArch::default();
        let mut flat = random_params(&arch, 8).to_flat();
        let (_, _, b_off, _) = flat_layout(&arch)[7];
        flat[b_off] = 60.0;
        let params = ImplicitParams::from_flat(arch, &flat).unwrap();
        let (c, g) = params.input_gradient(Point3::new(0.01, 0.02, -0.03));
        assert!(c > 0.0 && c < 1.0);
        assert!(g.norm() < 1e-6, "gradient {g:?}");
    }

    #[test]
    fn single_layer_closed_form() {
        let w = [0.7, -1.2, 0.4];
        let arch = MlpArch::new(vec![3, 1], 0.2).unwrap();
        let params = ImplicitParams::from_flat(arch, &[w[0], w[1], w[2], 0.0, 1.0]).unwrap();
        let x = Point3::new(0.3, 0.2, -0.5);
        let wx = w[0] * x.x + w[1] * x.y + w[2] * x.z;
        let s = 1.0 / (1.0 + (-wx).exp());
        let (_, g) = params.input_gradient(x);
        for (a, wi) in g.to_array().iter().zip(w) {
            assert!((a - (s - 1.0) * wi).abs() < 1e-14);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let arch = MlpArch::default();
        let h = 1e-5;
        let mut checked = 0;
        for seed in 0..120u64 {
            let params = random_params(&arch, 1000 + seed);
            let mut rng = rng_for(seed, &[77]);
            let p = Point3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            if params.kink_margin(p) < 1e-3 {
                continue;
            }
            let loss = |q: Point3| softplus(-reference_logit(&params, q));
            let fd: Vec<f64> = (0..3)
                .map(|a| {
                    let mut e = [0.0; 3];
                    e[a] = h;
                    let e = Point3::from(e);
                    (loss(p + e) - loss(p - e)) / (2.0 * h)
                })
                .collect();
            let (_, g) = params.input_gradient(p);
            let diff = (g - Point3::from([fd[0], fd[1], fd[2]])).norm();
            let scale = g.norm().max(Point3::from([fd[0], fd[1], fd[2]]).norm()).max(1e-8);
            assert!(diff / scale <= 1e-4, "seed {seed}: {g:?} vs {fd:?}");
            checked += 1;
        }
        assert!(checked >= 100, "only {checked} probes away from kinks");
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let arch = MlpArch::new(vec![3, 6, 5, 1], 0.2).unwrap();
        let params = random_params(&arch, 21);
        let mut rng = rng_for(4, &[]);
        let pts: Vec<Point3> = (0..30)
            .map(|_| Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect();
        let labels: Vec<f64> = (0..30).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let (loss, grad) = params.bce_param_gradient(&pts, &labels);
        assert!((loss - params.bce_loss(&pts, &labels)).abs() < 1e-14);
        let flat = params.to_flat();
        let h = 1e-6;
        for i in 0..flat.len() {
            let eval = |delta: f64| {
                let mut f = flat.clone();
                f[i] += delta;
                ImplicitParams::from_flat(arch.clone(), &f).unwrap().bce_loss(&pts, &labels)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: fd {fd} vs analytic {}", grad[i]);
        }
    }

    #[test]
    fn binary_record_roundtrip_is_f32_exact() {
        let params = random_params(&MlpArch::default(), 2);
        let rounded: Vec<f64> = params.to_flat().iter().map(|&v| v as f32 as f64).collect();
        let rounded = ImplicitParams::from_flat(MlpArch::default(), &rounded).unwrap();
        let mut buf = Vec::new();
        params.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"HOIF");
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 * 4 + 8 + 4 * 1282);
        assert_eq!(ImplicitParams::read_from(&buf[..]).unwrap(), rounded);
        buf[0] = b'X';
        assert!(ImplicitParams::read_from(&buf[..]).is_err());
    }
}
