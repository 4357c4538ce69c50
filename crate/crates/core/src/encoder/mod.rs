//! The hypernetwork backbone.
//!
//! A partial cloud is reduced to `n_proxies` point proxies (FPS centers, each
//! embedded by an EdgeConv-style max over its nearest input points), passed
//! through pre-norm transformer blocks whose leading blocks also carry a
//! geometric layer over neighboring proxies, max-pooled into one global
//! embedding and finally mapped by one affine head per implicit-function
//! tensor to the weights, biases and scales of that function.
//!
//! The same graph is used for inference and training; training reads the
//! parameter adjoints back from the [`Tape`].

mod checkpoint;

pub use checkpoint::{load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file};

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Var};
use crate::data::QueryBatch;
use crate::geometry::{farthest_point_sample, knn, knn_points, Point3, PointCloud};
use crate::implicit::{flat_layout, param_count, ImplicitParams, MlpArch, ParamKind};
use crate::rng::rng_for;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const EDGE_SLOPE: f64 = 0.2;
/// Spread of the per-object part of generated weights relative to the shared part.
const HEAD_GAIN: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderArch {
    pub n_proxies: usize,
    /// Input points pooled into each proxy.
    pub proxy_knn: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub depth: usize,
    /// Neighboring proxies feeding each geometric embedding.
    pub geo_knn: usize,
    /// Number of leading blocks that carry a geometric layer.
    pub geo_blocks: usize,
    /// Hidden width of each block's feed-forward layer.
    pub ffn_dim: usize,
    pub target_arch: MlpArch,
}

impl Default for EncoderArch {
    fn default() -> Self {
        Self {
            n_proxies: 16,
            proxy_knn: 8,
            embed_dim: 64,
            n_heads: 2,
            depth: 2,
            geo_knn: 4,
            geo_blocks: 1,
            ffn_dim: 128,
            target_arch: MlpArch::default(),
        }
    }
}

impl EncoderArch {
    /// The full-size configuration: 384-dim embeddings, 6 heads, 4 blocks.
    pub fn paper_scale() -> Self {
        Self {
            n_proxies: 128,
            proxy_knn: 16,
            embed_dim: 384,
            n_heads: 6,
            depth: 4,
            geo_knn: 8,
            geo_blocks: 1,
            ffn_dim: 768,
            target_arch: MlpArch::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target_arch.validate()?;
        let ok = self.n_proxies >= 1
            && self.proxy_knn >= 1
            && self.embed_dim >= 1
            && self.n_heads >= 1
            && self.embed_dim % self.n_heads == 0
            && self.depth >= 1
            && self.geo_blocks <= self.depth
            && self.ffn_dim >= 1
            && (self.geo_blocks == 0 || (self.geo_knn >= 1 && self.geo_knn < self.n_proxies));
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("invalid encoder arch {self:?}")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    /// Minimum number of input points a cloud needs.
    pub fn min_points(&self) -> usize {
        self.n_proxies.max(self.proxy_knn)
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

/// Name, shape and initializer of every backbone tensor, in canonical order.
fn tensor_layout(arch: &EncoderArch) -> Vec<(String, usize, usize, Init)> {
    let d = arch.embed_dim;
    let f = arch.ffn_dim;
    let mut out = Vec::new();
    let mut push = |name: String, r: usize, c: usize, init: Init| out.push((name, r, c, init));
    push("proxy.edge1.w".into(), 6, d, Init::Normal((2.0 / 6.0f64).sqrt()));
    push("proxy.edge1.b".into(), 1, d, Init::Zeros);
    push("proxy.edge2.w".into(), d, d, Init::Normal((1.0 / d as f64).sqrt()));
    push("proxy.edge2.b".into(), 1, d, Init::Zeros);
    push("proxy.pos.w".into(), 3, d, Init::Normal(1.0));
    push("proxy.pos.b".into(), 1, d, Init::Zeros);
    let proj = Init::Normal((1.0 / d as f64).sqrt());
    for b in 0..arch.depth {
        push(format!("block{b}.ln1.g"), 1, d, Init::Ones);
        push(format!("block{b}.ln1.b"), 1, d, Init::Zeros);
        push(format!("block{b}.attn.q"), d, d, proj);
        push(format!("block{b}.attn.k"), d, d, proj);
        push(format!("block{b}.attn.v"), d, d, proj);
        push(format!("block{b}.attn.out.w"), d, d, proj);
        push(format!("block{b}.attn.out.b"), 1, d, Init::Zeros);
        if b < arch.geo_blocks {
            push(format!("block{b}.geo.theta"), d, d, proj);
            push(format!("block{b}.geo.phi"), d, d, proj);
            push(format!("block{b}.geo.fuse.w"), 2 * d, d, Init::Normal((1.0 / (2 * d) as f64).sqrt()));
            push(format!("block{b}.geo.fuse.b"), 1, d, Init::Zeros);
        }
        push(format!("block{b}.ln2.g"), 1, d, Init::Ones);
        push(format!("block{b}.ln2.b"), 1, d, Init::Zeros);
        push(format!("block{b}.ffn1.w"), d, f, Init::Normal((2.0 / d as f64).sqrt()));
        push(format!("block{b}.ffn1.b"), 1, f, Init::Zeros);
        push(format!("block{b}.ffn2.w"), f, d, Init::Normal((1.0 / f as f64).sqrt()));
        push(format!("block{b}.ffn2.b"), 1, d, Init::Zeros);
    }
    push("final.ln.g".into(), 1, d, Init::Ones);
    push("final.ln.b".into(), 1, d, Init::Zeros);
    let target = &arch.target_arch;
    for (l, kind, _, len) in flat_layout(target) {
        let fan_in = target.layer_dims[l] as f64;
        let (typical, bias_init) = match kind {
            ParamKind::Weight => ((2.0 / fan_in).sqrt(), Init::Normal((2.0 / fan_in).sqrt())),
            ParamKind::Bias => (0.1, Init::Zeros),
            ParamKind::Scale => (0.1, Init::Ones),
        };
        let name = head_name(l, kind);
        push(format!("{name}.w"), d, len, Init::Normal(HEAD_GAIN * typical / (d as f64).sqrt()));
        push(format!("{name}.b"), 1, len, bias_init);
    }
    out
}

fn head_name(layer: usize, kind: ParamKind) -> String {
    format!("head.l{layer}.{}", kind.tag())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Matrix,
}

/// Every trainable backbone tensor, addressed by a stable name.
///
/// The same type carries gradients: [`backward`] returns a value whose
/// tensors are the loss adjoints of the parameters with the same names.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    arch: EncoderArch,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl BackboneParams {
    /// Randomly initialized parameters; deterministic given `seed`.
    pub fn init(arch: EncoderArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let tensors = tensor_layout(&arch)
            .into_iter()
            .enumerate()
            .map(|(k, (name, r, c, init))| {
                let data = match init {
                    Init::Zeros => vec![0.0; r * c],
                    Init::Ones => vec![1.0; r * c],
                    Init::Normal(std) => {
                        let mut rng = rng_for(seed, &[k as u64]);
                        (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal) * std).collect()
                    }
                };
                Tensor { name, value: Matrix::from_vec(r, c, data) }
            })
            .collect();
        Ok(Self::from_tensors_unchecked(arch, tensors))
    }

    fn from_tensors_unchecked(arch: EncoderArch, tensors: Vec<Tensor>) -> Self {
        let index = tensors.iter().enumerate().map(|(i, t)| (t.name.clone(), i)).collect();
        Self { arch, tensors, index }
    }

    /// Assembles parameters from named tensors, in any order; names and
    /// shapes must match the layout implied by `arch`.
    pub fn from_named(arch: EncoderArch, mut named: HashMap<String, Matrix>) -> Result<Self> {
        arch.validate()?;
        let mut tensors = Vec::new();
        for (name, r, c, _) in tensor_layout(&arch) {
            let value = named
                .remove(&name)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor {name}")))?;
            if value.shape() != (r, c) {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name}: expected {r}x{c}, got {}x{}",
                    value.rows, value.cols
                )));
            }
            if value.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!("tensor {name} has non-finite entries")));
            }
            tensors.push(Tensor { name, value });
        }
        Ok(Self::from_tensors_unchecked(arch, tensors))
    }

    pub fn zeros_like(&self) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|t| Tensor { name: t.name.clone(), value: Matrix::zeros(t.value.rows, t.value.cols) })
            .collect();
        Self::from_tensors_unchecked(self.arch.clone(), tensors)
    }

    pub fn arch(&self) -> &EncoderArch {
        &self.arch
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index.get(name).map(|&i| &self.tensors[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i].value)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.data.len()).sum()
    }

    /// Scalar `i` in canonical tensor order, with the tensor name.
    pub fn scalar(&self, mut i: usize) -> (&str, f64) {
        for t in &self.tensors {
            if i < t.value.data.len() {
                return (&t.name, t.value.data[i]);
            }
            i -= t.value.data.len();
        }
        panic!("scalar index out of range");
    }

    pub fn scalar_mut(&mut self, mut i: usize) -> &mut f64 {
        for t in &mut self.tensors {
            if i < t.value.data.len() {
                return &mut t.value.data[i];
            }
            i -= t.value.data.len();
        }
        panic!("scalar index out of range");
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors.iter().flat_map(|t| &t.value.data).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rounds every entry to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.value.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &BackboneParams) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.value.data.iter_mut().zip(&b.value.data) {
                *x += alpha * y;
            }
        }
    }
}

/// Proxy centers (FPS of the input) and their embeddings, one row per center.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxySet {
    pub centers: Vec<Point3>,
    pub embeddings: Matrix,
}

/// Builds the encoder graph on a tape, creating parameter leaves lazily.
struct Graph<'a> {
    tape: Tape,
    params: &'a BackboneParams,
    leaves: HashMap<&'a str, Var>,
}

impl<'a> Graph<'a> {
    fn new(params: &'a BackboneParams) -> Self {
        Self { tape: Tape::new(), params, leaves: HashMap::new() }
    }

    fn param(&mut self, name: &str) -> Var {
        let idx = *self
            .params
            .index
            .get(name)
            .unwrap_or_else(|| panic!("encoder graph references unknown tensor {name}"));
        let tensor = &self.params.tensors[idx];
        if let Some(&v) = self.leaves.get(tensor.name.as_str()) {
            return v;
        }
        let v = self.tape.leaf(tensor.value.clone());
        self.leaves.insert(tensor.name.as_str(), v);
        v
    }

    fn linear(&mut self, x: Var, prefix: &str) -> Var {
        let w = self.param(&format!("{prefix}.w"));
        let b = self.param(&format!("{prefix}.b"));
        let xw = self.tape.matmul(x, w);
        self.tape.add_row(xw, b)
    }

    fn norm(&mut self, x: Var, prefix: &str) -> Var {
        let n = self.tape.layer_norm(x, LN_EPS);
        let g = self.param(&format!("{prefix}.g"));
        let b = self.param(&format!("{prefix}.b"));
        let scaled = self.tape.mul_row(n, g);
        self.tape.add_row(scaled, b)
    }

    /// EdgeConv proxies plus the positional embedding of their centers.
    fn proxies(&mut self, cloud: &PointCloud) -> Result<(Vec<Point3>, Var)> {
        let arch = &self.params.arch;
        let (k_prox, k_nn) = (arch.n_proxies, arch.proxy_knn);
        if cloud.len() < arch.min_points() {
            return Err(Error::BadArgument(format!(
                "cloud of {} points is smaller than the {} the encoder needs",
                cloud.len(),
                arch.min_points()
            )));
        }
        if cloud.points.iter().any(|p| !p.is_finite()) {
            return Err(Error::BadArgument("cloud has non-finite coordinates".into()));
        }
        let centers_idx = farthest_point_sample(cloud, k_prox, proxy_start(cloud))?;
        let centers: Vec<Point3> = centers_idx.iter().map(|&i| cloud.points[i]).collect();
        let mut edges = Vec::with_capacity(k_prox * k_nn * 6);
        for &c in &centers {
            for j in knn(cloud, c, k_nn)? {
                let off = cloud.points[j] - c;
                edges.extend_from_slice(&[c.x, c.y, c.z, off.x, off.y, off.z]);
            }
        }
        let edges = self.tape.leaf(Matrix::from_vec(k_prox * k_nn, 6, edges));
        let h = self.linear(edges, "proxy.edge1");
        let h = self.tape.leaky_relu(h, EDGE_SLOPE);
        let h = self.linear(h, "proxy.edge2");
        let pooled = self.tape.group_max(h, k_nn);
        let coords = self
            .tape
            .leaf(Matrix::from_vec(k_prox, 3, centers.iter().flat_map(|p| p.to_array()).collect()));
        let pos = self.linear(coords, "proxy.pos");
        Ok((centers, self.tape.add(pooled, pos)))
    }

    /// Multi-head self-attention; returns concatenated heads (before the
    /// output projection) and the per-head attention matrices.
    fn self_attention(&mut self, h: Var, block: usize) -> (Var, Vec<Var>) {
        let arch = &self.params.arch;
        let dk = arch.head_dim();
        let n_heads = arch.n_heads;
        let wq = self.param(&format!("block{block}.attn.q"));
        let wk = self.param(&format!("block{block}.attn.k"));
        let wv = self.param(&format!("block{block}.attn.v"));
        let q = self.tape.matmul(h, wq);
        let k = self.tape.matmul(h, wk);
        let v = self.tape.matmul(h, wv);
        let mut heads = Vec::with_capacity(n_heads);
        let mut weights = Vec::with_capacity(n_heads);
        for head in 0..n_heads {
            let qh = self.tape.slice_cols(q, head * dk, dk);
            let kh = self.tape.slice_cols(k, head * dk, dk);
            let vh = self.tape.slice_cols(v, head * dk, dk);
            let kt = self.tape.transpose(kh);
            let logits = self.tape.matmul(qh, kt);
            let logits = self.tape.scale(logits, 1.0 / (dk as f64).sqrt());
            let a = self.tape.softmax_rows(logits);
            heads.push(self.tape.matmul(a, vh));
            weights.push(a);
        }
        (self.tape.concat_cols(&heads), weights)
    }

    /// Edge embeddings `relu(theta (F_j - F_i) + phi F_i)` over the nearest
    /// proxy centers, max-pooled per proxy.
    fn geometric(&mut self, f: Var, centers: &[Point3], block: usize) -> Result<Var> {
        let n = self.params.arch.geo_knn;
        let mut own = Vec::with_capacity(centers.len() * n);
        let mut nbrs = Vec::with_capacity(centers.len() * n);
        for (i, &c) in centers.iter().enumerate() {
            let mut near = knn_points(centers, c, n + 1)?;
            match near.iter().position(|&j| j == i) {
                Some(pos) => {
                    near.remove(pos);
                }
                None => {
                    near.pop();
                }
            }
            for j in near {
                own.push(i);
                nbrs.push(j);
            }
        }
        let fi = self.tape.gather_rows(f, own);
        let fj = self.tape.gather_rows(f, nbrs);
        let diff = self.tape.sub(fj, fi);
        let theta = self.param(&format!("block{block}.geo.theta"));
        let phi = self.param(&format!("block{block}.geo.phi"));
        let a = self.tape.matmul(diff, theta);
        let b = self.tape.matmul(fi, phi);
        let e = self.tape.add(a, b);
        let e = self.tape.relu(e);
        Ok(self.tape.group_max(e, n))
    }

    fn block(&mut self, x: Var, centers: &[Point3], block: usize) -> Result<BlockVars> {
        let h = self.norm(x, &format!("block{block}.ln1"));
        let (attended, weights) = self.self_attention(h, block);
        let projected = self.linear(attended, &format!("block{block}.attn.out"));
        let (mixed, geometric) = if block < self.params.arch.geo_blocks {
            let g = self.geometric(h, centers, block)?;
            let cat = self.tape.concat_cols(&[projected, g]);
            (self.linear(cat, &format!("block{block}.geo.fuse")), Some(g))
        } else {
            (projected, None)
        };
        let x = self.tape.add(x, mixed);
        let h2 = self.norm(x, &format!("block{block}.ln2"));
        let ff = self.linear(h2, &format!("block{block}.ffn1"));
        let ff = self.tape.gelu(ff);
        let ff = self.linear(ff, &format!("block{block}.ffn2"));
        let output = self.tape.add(x, ff);
        Ok(BlockVars { weights, attended, geometric, output })
    }

    fn final_embeddings(&mut self, cloud: &PointCloud) -> Result<Var> {
        let (centers, mut x) = self.proxies(cloud)?;
        for b in 0..self.params.arch.depth {
            x = self.block(x, &centers, b)?.output;
        }
        Ok(self.norm(x, "final.ln"))
    }

    fn global_embedding(&mut self, cloud: &PointCloud) -> Result<Var> {
        let x = self.final_embeddings(cloud)?;
        let k = self.params.arch.n_proxies;
        Ok(self.tape.group_max(x, k))
    }

    /// Flat implicit-function parameters, `1 x param_count`.
    fn heads(&mut self, e: Var) -> Var {
        let target = self.params.arch.target_arch.clone();
        let parts: Vec<Var> = flat_layout(&target)
            .into_iter()
            .map(|(l, kind, _, _)| self.linear(e, &head_name(l, kind)))
            .collect();
        self.tape.concat_cols(&parts)
    }

    fn gradients(&self, loss: Var) -> BackboneParams {
        let adj = self.tape.backward(loss);
        let mut grads = self.params.zeros_like();
        for t in &mut grads.tensors {
            if let Some(&v) = self.leaves.get(t.name.as_str()) {
                if let Some(g) = &adj[v.index()] {
                    t.value = g.clone();
                }
            }
        }
        grads
    }
}

struct BlockVars {
    weights: Vec<Var>,
    attended: Var,
    geometric: Option<Var>,
    output: Var,
}

/// FPS start for proxy extraction: the point farthest from the bounding-box
/// center, so the result does not depend on input order.
fn proxy_start(cloud: &PointCloud) -> usize {
    let (lo, hi) = cloud.bounding_box().expect("non-empty cloud");
    let mid = (lo + hi) * 0.5;
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, p) in cloud.points.iter().enumerate() {
        let d = p.distance_squared(mid);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub fn extract_proxies(cloud: &PointCloud, params: &BackboneParams) -> Result<ProxySet> {
    let mut g = Graph::new(params);
    let (centers, x) = g.proxies(cloud)?;
    Ok(ProxySet { centers, embeddings: g.tape.value(x).clone() })
}

/// Intermediate values of one transformer block, for inspection.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    /// Attention matrices, one `K x K` per head.
    pub attention: Vec<Matrix>,
    /// Concatenated head outputs before the output projection.
    pub attended: Matrix,
    /// Max-pooled edge embeddings, when the block has a geometric layer.
    pub geometric: Option<Matrix>,
    pub output: Matrix,
}

/// Runs transformer block `block_index` on `K x d` embeddings.
pub fn attention_block(
    embeddings: &Matrix,
    centers: &[Point3],
    params: &BackboneParams,
    block_index: usize,
) -> Result<BlockTrace> {
    let arch = &params.arch;
    if embeddings.shape() != (centers.len(), arch.embed_dim) || block_index >= arch.depth {
        return Err(Error::ShapeMismatch(format!(
            "block {block_index} of {} on {}x{} embeddings with {} centers",
            arch.depth,
            embeddings.rows,
            embeddings.cols,
            centers.len()
        )));
    }
    if block_index < arch.geo_blocks && centers.len() <= arch.geo_knn {
        return Err(Error::ShapeMismatch(format!(
            "geometric layer needs more than {} centers",
            arch.geo_knn
        )));
    }
    let mut g = Graph::new(params);
    let x = g.tape.leaf(embeddings.clone());
    let vars = g.block(x, centers, block_index)?;
    let value = |v: Var| g.tape.value(v).clone();
    Ok(BlockTrace {
        attention: vars.weights.iter().map(|&w| value(w)).collect(),
        attended: value(vars.attended),
        geometric: vars.geometric.map(value),
        output: value(vars.output),
    })
}

/// Final `K x d` proxy embeddings, after the closing normalization.
pub fn proxy_embeddings(cloud: &PointCloud, params: &BackboneParams) -> Result<Matrix> {
    let mut g = Graph::new(params);
    let x = g.final_embeddings(cloud)?;
    Ok(g.tape.value(x).clone())
}

/// Column-wise max of a `K x d` embedding matrix.
pub fn max_pool(embeddings: &Matrix) -> Vec<f64> {
    (0..embeddings.cols)
        .map(|c| (0..embeddings.rows).map(|r| embeddings.get(r, c)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Global embedding `e`: elementwise max over the final proxy embeddings.
pub fn encode(cloud: &PointCloud, params: &BackboneParams) -> Result<Vec<f64>> {
    let mut g = Graph::new(params);
    let e = g.global_embedding(cloud)?;
    Ok(g.tape.value(e).data.clone())
}

/// Maps a global embedding to implicit-function parameters.
pub fn generate_weights(e: &[f64], params: &BackboneParams) -> Result<ImplicitParams> {
    let arch = &params.arch;
    if e.len() != arch.embed_dim {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} entries, expected {}",
            e.len(),
            arch.embed_dim
        )));
    }
    let mut g = Graph::new(params);
    let ev = g.tape.leaf(Matrix::from_vec(1, e.len(), e.to_vec()));
    let flat = g.heads(ev);
    debug_assert_eq!(g.tape.value(flat).cols, param_count(&arch.target_arch));
    ImplicitParams::from_flat(arch.target_arch.clone(), &g.tape.value(flat).data)
}

/// `generate_weights(encode(cloud))`.
pub fn predict(cloud: &PointCloud, params: &BackboneParams) -> Result<ImplicitParams> {
    let mut g = Graph::new(params);
    let e = g.global_embedding(cloud)?;
    let flat = g.heads(e);
    ImplicitParams::from_flat(params.arch.target_arch.clone(), &g.tape.value(flat).data)
}

/// Mean binary cross-entropy of the predicted implicit function on a query batch.
pub fn loss(cloud: &PointCloud, batch: &QueryBatch, params: &BackboneParams) -> Result<f64> {
    let implicit = predict(cloud, params)?;
    Ok(implicit.bce_loss(&batch.points, &batch.labels_f64()))
}

/// Loss and its exact gradient with respect to every backbone tensor.
pub fn backward(
    cloud: &PointCloud,
    batch: &QueryBatch,
    params: &BackboneParams,
) -> Result<(f64, BackboneParams)> {
    if batch.points.is_empty() {
        return Err(Error::BadArgument("empty query batch".into()));
    }
    let mut g = Graph::new(params);
    let e = g.global_embedding(cloud)?;
    let flat = g.heads(e);
    let implicit =
        ImplicitParams::from_flat(params.arch.target_arch.clone(), &g.tape.value(flat).data)?;
    let (loss, grad) = implicit.bce_param_gradient(&batch.points, &batch.labels_f64());
    let n = grad.len();
    let loss_var = g.tape.external(flat, loss, Matrix::from_vec(1, n, grad));
    Ok((loss, g.gradients(loss_var)))
}
