use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Architecture, ExpertKind, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{checkpoint, Graph, ParamId, ParamStore, Tensor, Var};

/// Equal-length sequences packed row-major: row `b * seq_len + t` holds
/// position `t` of sequence `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqBatch {
    pub ids: Vec<usize>,
    pub seq_len: usize,
}

impl SeqBatch {
    pub fn single(seq: &[usize]) -> Self {
        SeqBatch {
            ids: seq.to_vec(),
            seq_len: seq.len(),
        }
    }

    pub fn from_seqs(seqs: &[&[usize]]) -> Result<Self> {
        let seq_len = seqs.first().map_or(0, |s| s.len());
        if seqs.iter().any(|s| s.len() != seq_len) {
            return Err(Error::invalid("sequences in a batch must share one length"));
        }
        Ok(SeqBatch {
            ids: seqs.concat(),
            seq_len,
        })
    }

    pub fn batch_size(&self) -> usize {
        if self.seq_len == 0 {
            0
        } else {
            self.ids.len() / self.seq_len
        }
    }

    /// Row index of the last position of every sequence.
    pub fn last_rows(&self) -> Vec<usize> {
        (0..self.batch_size()).map(|b| (b + 1) * self.seq_len - 1).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub enum GateMode {
    #[default]
    Learned,
    /// Constant expert weights used in place of the gate's softmax.
    Fixed(Vec<f64>),
}

/// Graph handles produced by one forward pass. Everything except `fused`
/// has one row per requested target row.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// Encoder output over all rows (absent for the baseline families).
    pub fused: Option<Var>,
    pub gate_logits: Option<Var>,
    pub gate: Option<Var>,
    pub experts: Vec<Var>,
    pub mixed: Var,
    pub poi_logits: Var,
    pub cat_logits: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct AttnBlock {
    /// Query, key and value weights side by side; keys take no bias since a
    /// shared key offset cancels in the softmax.
    qkv: ParamId,
    q_bias: ParamId,
    v_bias: ParamId,
    out: Linear,
    ff1: Linear,
    ff2: Linear,
    ln1: Norm,
    ln2: Norm,
}

#[derive(Clone, Copy, Debug)]
struct LstmLayer {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
enum Expert {
    Transformer { layers: Vec<AttnBlock>, final_ln: Norm },
    Lstm { layers: Vec<LstmLayer>, proj: Linear },
}

#[derive(Clone, Copy, Debug)]
struct Head {
    l1: Linear,
    l2: Linear,
}

#[derive(Clone, Debug)]
struct Layout {
    embed: ParamId,
    proj: Option<Linear>,
    pos: Option<ParamId>,
    fusion: Vec<AttnBlock>,
    experts: Vec<Expert>,
    gate: Option<Linear>,
    mlp: Vec<Linear>,
    rnn: Vec<LstmLayer>,
    poi_head: Head,
    cat_head: Option<Head>,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.store.add(name, Tensor::new(shape.to_vec(), data).unwrap())
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in),
            b: self.uniform(format!("{name}.b"), &[fan_out], fan_in),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            g: self.store.add(format!("{name}.g"), Tensor::full(&[d], 1.0)),
            b: self.store.add(format!("{name}.b"), Tensor::zeros(&[d])),
        }
    }

    fn embedding(&mut self, name: &str, rows: usize, d: usize) -> ParamId {
        let normal = Normal::new(0.0, 0.02).unwrap();
        let data = (0..rows * d).map(|_| normal.sample(&mut self.rng)).collect();
        self.store.add(name, Tensor::new(vec![rows, d], data).unwrap())
    }

    fn attn_block(&mut self, name: &str, d: usize, ff: usize) -> AttnBlock {
        AttnBlock {
            qkv: self.uniform(format!("{name}.qkv.w"), &[d, 3 * d], d),
            q_bias: self.uniform(format!("{name}.q.b"), &[d], d),
            v_bias: self.uniform(format!("{name}.v.b"), &[d], d),
            out: self.linear(&format!("{name}.out"), d, d),
            ff1: self.linear(&format!("{name}.ff1"), d, ff),
            ff2: self.linear(&format!("{name}.ff2"), ff, d),
            ln1: self.norm(&format!("{name}.ln1"), d),
            ln2: self.norm(&format!("{name}.ln2"), d),
        }
    }

    fn lstm(&mut self, name: &str, input: usize, hidden: usize, layers: usize) -> Vec<LstmLayer> {
        (0..layers)
            .map(|l| {
                let fan_in = if l == 0 { input } else { hidden };
                LstmLayer {
                    wx: self.uniform(format!("{name}.{l}.wx"), &[fan_in, 4 * hidden], fan_in),
                    wh: self.uniform(format!("{name}.{l}.wh"), &[hidden, 4 * hidden], hidden),
                    b: self.uniform(format!("{name}.{l}.b"), &[4 * hidden], fan_in),
                }
            })
            .collect()
    }

    fn head(&mut self, name: &str, input: usize, d: usize, out: usize) -> Head {
        Head {
            l1: self.linear(&format!("{name}.0"), input, d),
            l2: self.linear(&format!("{name}.1"), d, out),
        }
    }
}

/// A network of any supported family together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub gate_mode: GateMode,
    layout: Layout,
}

enum Mix {
    Gated,
    Single(usize),
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut b = Builder {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let c = &config;
        let d = c.d_model;
        let embed = b.embedding("embed.poi", c.poi_count, d);
        let (mut proj, mut pos, mut fusion, mut experts, mut gate) = (None, None, Vec::new(), Vec::new(), None);
        let (mut mlp, mut rnn) = (Vec::new(), Vec::new());
        let head_in = match c.arch {
            Architecture::Moe => {
                proj = Some(b.linear("embed.proj", d, d));
                pos = Some(b.embedding("embed.pos", c.max_seq, d));
                fusion = (0..c.fusion_layers)
                    .map(|l| b.attn_block(&format!("fusion.{l}"), d, c.tf_ff))
                    .collect();
                for (i, kind) in c.experts.iter().enumerate() {
                    let name = format!("expert.{i}");
                    experts.push(match kind {
                        ExpertKind::Transformer => Expert::Transformer {
                            layers: (0..c.tf_layers)
                                .map(|l| b.attn_block(&format!("{name}.layer.{l}"), d, c.tf_ff))
                                .collect(),
                            final_ln: b.norm(&format!("{name}.final_ln"), d),
                        },
                        ExpertKind::Lstm => Expert::Lstm {
                            layers: b.lstm(&format!("{name}.lstm"), d, c.lstm_hidden, c.lstm_layers),
                            proj: b.linear(&format!("{name}.proj"), c.lstm_hidden, d),
                        },
                    });
                }
                if c.gate {
                    gate = Some(b.linear("gate", 2 * d, c.n_experts()));
                }
                d
            }
            Architecture::Mlp => {
                mlp = vec![
                    b.linear("mlp.0", d, c.mlp_hidden),
                    b.linear("mlp.1", c.mlp_hidden, c.mlp_hidden),
                ];
                c.mlp_hidden
            }
            Architecture::Lstm => {
                rnn = b.lstm("rnn", d, c.lstm_hidden, c.lstm_layers);
                c.lstm_hidden
            }
        };
        let poi_head = b.head("head.poi", head_in, d, c.poi_count);
        let cat_head = c.category_head().then(|| b.head("head.cat", head_in, d, c.category_count));
        let layout = Layout {
            embed,
            proj,
            pos,
            fusion,
            experts,
            gate,
            mlp,
            rnn,
            poi_head,
            cat_head,
        };
        Ok(Model {
            config,
            params,
            gate_mode: GateMode::Learned,
            layout,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn has_gate(&self) -> bool {
        self.layout.gate.is_some()
    }

    fn check_batch(&self, batch: &SeqBatch, rows: &[usize]) -> Result<()> {
        let t = batch.seq_len;
        if t == 0 || batch.ids.is_empty() {
            return Err(Error::invalid("empty input sequence"));
        }
        if batch.ids.len() % t != 0 {
            return Err(Error::invalid(format!("{} ids do not split into rows of {t}", batch.ids.len())));
        }
        if self.config.arch == Architecture::Moe && t > self.config.max_seq {
            return Err(Error::invalid(format!("sequence length {t} exceeds max_seq {}", self.config.max_seq)));
        }
        if let Some(&bad) = batch.ids.iter().find(|&&p| p >= self.config.poi_count) {
            return Err(Error::OutOfRange {
                what: "poi vocabulary",
                index: bad,
                size: self.config.poi_count,
            });
        }
        if rows.is_empty() {
            return Err(Error::invalid("no target rows requested"));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= batch.ids.len()) {
            return Err(Error::OutOfRange {
                what: "batch rows",
                index: bad,
                size: batch.ids.len(),
            });
        }
        Ok(())
    }

    /// Forward pass producing outputs for the given rows.
    pub fn forward(&self, g: &mut Graph, batch: &SeqBatch, rows: &[usize]) -> Result<ForwardVars> {
        let mix = if self.layout.gate.is_some() { Mix::Gated } else { Mix::Single(0) };
        self.forward_mix(g, batch, rows, mix)
    }

    /// Same pipeline with the mixture replaced by a single expert's output.
    pub fn expert_only_forward(&self, g: &mut Graph, batch: &SeqBatch, rows: &[usize], expert: usize) -> Result<ForwardVars> {
        if self.config.arch != Architecture::Moe || expert >= self.config.n_experts() {
            return Err(Error::OutOfRange {
                what: "experts",
                index: expert,
                size: self.layout.experts.len(),
            });
        }
        self.forward_mix(g, batch, rows, Mix::Single(expert))
    }

    fn forward_mix(&self, g: &mut Graph, batch: &SeqBatch, rows: &[usize], mix: Mix) -> Result<ForwardVars> {
        self.check_batch(batch, rows)?;
        let t = batch.seq_len;
        let table = g.param(self.layout.embed);
        let emb = g.gather_rows(table, &batch.ids)?;
        match self.config.arch {
            Architecture::Moe => self.forward_moe(g, emb, batch, rows, mix),
            Architecture::Mlp => {
                let pooled = g.prefix_mean(emb, t)?;
                let mut h = g.gather_rows(pooled, rows)?;
                for l in &self.layout.mlp {
                    let z = g.linear(h, l.w, l.b)?;
                    h = g.gelu(z);
                }
                self.finish(g, None, None, None, Vec::new(), h)
            }
            Architecture::Lstm => {
                let hs = lstm_stack(g, emb, batch.batch_size(), t, &self.layout.rnn, self.config.lstm_hidden)?;
                let h = g.gather_rows(hs, rows)?;
                self.finish(g, None, None, None, Vec::new(), h)
            }
        }
    }

    fn forward_moe(&self, g: &mut Graph, emb: Var, batch: &SeqBatch, rows: &[usize], mix: Mix) -> Result<ForwardVars> {
        let t = batch.seq_len;
        let heads = self.config.tf_heads;
        let proj = self.layout.proj.unwrap();
        let z = g.linear(emb, proj.w, proj.b)?;
        let x = g.gelu(z);
        let pos_table = g.param(self.layout.pos.unwrap());
        let positions: Vec<usize> = (0..batch.ids.len()).map(|r| r % t).collect();
        let pos = g.gather_rows(pos_table, &positions)?;
        let mut fused = g.add(x, pos)?;
        for block in &self.layout.fusion {
            fused = post_norm_block(g, fused, block, heads, t)?;
        }

        let mut experts = Vec::with_capacity(self.layout.experts.len());
        for (i, e) in self.layout.experts.iter().enumerate() {
            if matches!(mix, Mix::Single(k) if k != i) {
                continue;
            }
            experts.push(match e {
                Expert::Transformer { layers, final_ln } => {
                    let mut h = fused;
                    for block in layers {
                        h = pre_norm_block(g, h, block, heads, t)?;
                    }
                    let picked = g.gather_rows(h, rows)?;
                    g.layer_norm(picked, final_ln.g, final_ln.b)?
                }
                Expert::Lstm { layers, proj } => {
                    let hs = lstm_stack(g, fused, batch.batch_size(), t, layers, self.config.lstm_hidden)?;
                    let picked = g.gather_rows(hs, rows)?;
                    g.linear(picked, proj.w, proj.b)?
                }
            });
        }

        let (gate_logits, gate, mixed) = match mix {
            Mix::Single(_) => (None, None, experts[0]),
            Mix::Gated => {
                let gl = self.layout.gate.unwrap();
                let pooled = g.prefix_mean(fused, t)?;
                let pooled = g.gather_rows(pooled, rows)?;
                let last = g.gather_rows(fused, rows)?;
                let input = g.concat_cols(&[pooled, last])?;
                let logits = g.linear(input, gl.w, gl.b)?;
                let weights = match &self.gate_mode {
                    GateMode::Learned => g.softmax_rows(logits),
                    GateMode::Fixed(w) => {
                        if w.len() != experts.len() {
                            return Err(Error::invalid(format!(
                                "fixed gate has {} weights for {} experts",
                                w.len(),
                                experts.len()
                            )));
                        }
                        let data = w.iter().copied().cycle().take(rows.len() * w.len()).collect();
                        g.input(Tensor::new(vec![rows.len(), w.len()], data)?)
                    }
                };
                let mut acc: Option<Var> = None;
                for (i, &e) in experts.iter().enumerate() {
                    let part = g.scale_rows_by_col(e, weights, i)?;
                    acc = Some(match acc {
                        None => part,
                        Some(a) => g.add(a, part)?,
                    });
                }
                (Some(logits), Some(weights), acc.unwrap())
            }
        };
        self.finish(g, Some(fused), gate_logits, gate, experts, mixed)
    }

    fn finish(
        &self,
        g: &mut Graph,
        fused: Option<Var>,
        gate_logits: Option<Var>,
        gate: Option<Var>,
        experts: Vec<Var>,
        mixed: Var,
    ) -> Result<ForwardVars> {
        let poi_logits = head(g, mixed, &self.layout.poi_head)?;
        let cat_logits = match &self.layout.cat_head {
            Some(h) => Some(head(g, mixed, h)?),
            None => None,
        };
        Ok(ForwardVars {
            fused,
            gate_logits,
            gate,
            experts,
            mixed,
            poi_logits,
            cat_logits,
        })
    }

    /// Weighted POI and category cross-entropy over the given rows.
    pub fn loss(&self, g: &mut Graph, batch: &SeqBatch, targets: &Targets) -> Result<Var> {
        let out = self.forward(g, batch, &targets.rows)?;
        let poi = g.cross_entropy(out.poi_logits, &targets.poi)?;
        let mut loss = g.scale(poi, self.config.w_poi);
        if let Some(cat_logits) = out.cat_logits {
            let cat = g.cross_entropy(cat_logits, &targets.cat)?;
            let cat = g.scale(cat, self.config.w_cat);
            loss = g.add(loss, cat)?;
        }
        Ok(loss)
    }

    /// POI logits `[rows x poi_count]` without keeping the graph.
    pub fn poi_logits(&self, batch: &SeqBatch, rows: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new(&self.params);
        let out = self.forward(&mut g, batch, rows)?;
        Ok(g.value(out.poi_logits).clone())
    }

    pub const CONFIG_FILE: &'static str = "model.cfg";
    pub const PARAMS_FILE: &'static str = "params.ckpt";

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = dir.join(Self::CONFIG_FILE);
        std::fs::write(&cfg, self.config.to_kv()).map_err(|e| Error::io(&cfg, e))?;
        checkpoint::save(&self.params, &dir.join(Self::PARAMS_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg = dir.join(Self::CONFIG_FILE);
        let text = std::fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
        let mut m = Model::new(ModelConfig::from_kv(&text)?, 0)?;
        checkpoint::load_into(&mut m.params, &dir.join(Self::PARAMS_FILE))?;
        Ok(m)
    }
}

/// Rows to predict with their POI and category labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Targets {
    pub rows: Vec<usize>,
    pub poi: Vec<usize>,
    pub cat: Vec<usize>,
}

fn head(g: &mut Graph, x: Var, h: &Head) -> Result<Var> {
    let z = g.linear(x, h.l1.w, h.l1.b)?;
    let a = g.gelu(z);
    g.linear(a, h.l2.w, h.l2.b)
}

fn self_attention(g: &mut Graph, x: Var, b: &AttnBlock, heads: usize, t: usize) -> Result<Var> {
    let d = g.value(x).cols();
    let w = g.param(b.qkv);
    let qkv = g.matmul(x, w)?;
    let q = g.slice_cols(qkv, 0, d)?;
    let qb = g.param(b.q_bias);
    let q = g.add_bias(q, qb)?;
    let k = g.slice_cols(qkv, d, d)?;
    let v = g.slice_cols(qkv, 2 * d, d)?;
    let vb = g.param(b.v_bias);
    let v = g.add_bias(v, vb)?;
    let a = g.attention(q, k, v, heads, t, true)?;
    g.linear(a, b.out.w, b.out.b)
}

fn feed_forward(g: &mut Graph, x: Var, b: &AttnBlock) -> Result<Var> {
    let z = g.linear(x, b.ff1.w, b.ff1.b)?;
    let a = g.gelu(z);
    g.linear(a, b.ff2.w, b.ff2.b)
}

/// `h = LN(x + Attn(x))`, `out = LN(h + FF(h))`.
fn post_norm_block(g: &mut Graph, x: Var, b: &AttnBlock, heads: usize, t: usize) -> Result<Var> {
    let a = self_attention(g, x, b, heads, t)?;
    let r = g.add(x, a)?;
    let h = g.layer_norm(r, b.ln1.g, b.ln1.b)?;
    let f = feed_forward(g, h, b)?;
    let r = g.add(h, f)?;
    g.layer_norm(r, b.ln2.g, b.ln2.b)
}

/// `x + Attn(LN(x))`, then `+ FF(LN(.))`.
fn pre_norm_block(g: &mut Graph, x: Var, b: &AttnBlock, heads: usize, t: usize) -> Result<Var> {
    let n = g.layer_norm(x, b.ln1.g, b.ln1.b)?;
    let a = self_attention(g, n, b, heads, t)?;
    let x = g.add(x, a)?;
    let n = g.layer_norm(x, b.ln2.g, b.ln2.b)?;
    let f = feed_forward(g, n, b)?;
    g.add(x, f)
}

/// Stacked LSTM from a zero state; returns the top layer's hidden state at
/// every row.
fn lstm_stack(g: &mut Graph, x: Var, batch: usize, t: usize, layers: &[LstmLayer], hidden: usize) -> Result<Var> {
    let mut input = x;
    for layer in layers {
        let xw = g.linear(input, layer.wx, layer.b)?;
        let wh = g.param(layer.wh);
        let mut h: Option<Var> = None;
        let mut c: Option<Var> = None;
        let mut steps = Vec::with_capacity(t);
        for step in 0..t {
            let ids: Vec<usize> = (0..batch).map(|b| b * t + step).collect();
            let mut z = g.gather_rows(xw, &ids)?;
            if let Some(hp) = h {
                let r = g.matmul(hp, wh)?;
                z = g.add(z, r)?;
            }
            let zi = g.slice_cols(z, 0, hidden)?;
            let zf = g.slice_cols(z, hidden, hidden)?;
            let zg = g.slice_cols(z, 2 * hidden, hidden)?;
            let zo = g.slice_cols(z, 3 * hidden, hidden)?;
            let i = g.sigmoid(zi);
            let cand = g.tanh(zg);
            let o = g.sigmoid(zo);
            let ig = g.mul(i, cand)?;
            let cn = match c {
                None => ig,
                Some(cp) => {
                    let f = g.sigmoid(zf);
                    let fc = g.mul(f, cp)?;
                    g.add(fc, ig)?
                }
            };
            let tc = g.tanh(cn);
            let hn = g.mul(o, tc)?;
            c = Some(cn);
            h = Some(hn);
            steps.push(hn);
        }
        input = g.stack_steps(&steps)?;
    }
    Ok(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::sigmoid_scalar;
    use crate::numerics::{grad_check, GradCheckConfig, GraphObjective};

    fn builder(store: &mut ParamStore, seed: u64) -> Builder<'_> {
        Builder {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn lstm_zero_weights_give_zero() {
        let mut store = ParamStore::new();
        let layers = builder(&mut store, 0).lstm("l", 8, 6, 2);
        for p in store.iter_mut() {
            p.value.fill(0.0);
        }
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::zeros(&[4, 8]));
        let h = lstm_stack(&mut g, x, 1, 4, &layers, 6).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_is_one_cell() {
        let mut store = ParamStore::new();
        let layers = builder(&mut store, 3).lstm("l", 5, 4, 1);
        let x = random_input(1, 5, 9);
        let mut g = Graph::new(&store);
        let xv = g.input(x.clone());
        let h = lstm_stack(&mut g, xv, 1, 1, &layers, 4).unwrap();

        let wx = store.value(layers[0].wx);
        let b = store.value(layers[0].b).data();
        let z: Vec<f64> = (0..16)
            .map(|j| b[j] + (0..5).map(|i| x.data()[i] * wx.data()[i * 16 + j]).sum::<f64>())
            .collect();
        for u in 0..4 {
            let c = sigmoid_scalar(z[u]) * z[8 + u].tanh();
            let expect = sigmoid_scalar(z[12 + u]) * c.tanh();
            assert!((g.value(h).data()[u] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn lstm_gradients() {
        for seed in 0..3 {
            let mut store = ParamStore::new();
            let layers = builder(&mut store, seed).lstm("l", 8, 6, 2);
            let x = random_input(8, 8, seed + 10);
            let w = random_input(8, 6, seed + 20);
            let obj = GraphObjective(|g: &mut Graph| {
                let xv = g.input(x.clone());
                let h = lstm_stack(g, xv, 2, 4, &layers, 6)?;
                let wv = g.input(w.clone());
                let p = g.mul(h, wv)?;
                Ok(g.sum(p))
            });
            let cfg = GradCheckConfig { sample_fraction: 1.0, seed, ..Default::default() };
            let err = grad_check(&mut store, &obj, &cfg).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn encoder_blocks_gradients() {
        for seed in 0..3 {
            let mut store = ParamStore::new();
            let (blocks, post) = {
                let mut b = builder(&mut store, seed);
                let blocks: Vec<AttnBlock> = (0..2).map(|l| b.attn_block(&format!("t.{l}"), 8, 8)).collect();
                (blocks, b.attn_block("fusion", 8, 8))
            };
            let x = random_input(10, 8, seed + 5);
            let w = random_input(10, 8, seed + 6);
            let obj = GraphObjective(|g: &mut Graph| {
                let mut h = g.input(x.clone());
                h = post_norm_block(g, h, &post, 2, 5)?;
                for b in &blocks {
                    h = pre_norm_block(g, h, b, 2, 5)?;
                }
                let wv = g.input(w.clone());
                let p = g.mul(h, wv)?;
                Ok(g.sum(p))
            });
            let cfg = GradCheckConfig { sample_fraction: 0.3, seed, ..Default::default() };
            let err = grad_check(&mut store, &obj, &cfg).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zeroed_attention_has_no_cross_position_flow() {
        let mut store = ParamStore::new();
        let block = builder(&mut store, 1).attn_block("f", 8, 8);
        for id in [block.qkv, block.q_bias, block.v_bias, block.out.w, block.out.b] {
            store.get_mut(id).value.fill(0.0);
        }
        let x = random_input(6, 8, 2);
        let mut x2 = x.clone();
        x2.data_mut()[3 * 8] += 1.0;
        let run = |input: &Tensor| {
            let mut g = Graph::new(&store);
            let v = g.input(input.clone());
            let out = post_norm_block(&mut g, v, &block, 2, 6).unwrap();
            g.value(out).clone()
        };
        let (a, b) = (run(&x), run(&x2));
        for r in 0..6 {
            let same = a.row(r) == b.row(r);
            assert_eq!(same, r != 3, "row {r}");
        }
    }
}
