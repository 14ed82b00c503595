//! Parameter layout and the forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::input::{AssemblyInput, PartGrouping};
use crate::autodiff::{Graph, ParamStore, Real, Tensor, Var};
use crate::coupling::CouplingMatrix;
use crate::error::Result;

const LN_EPS: f64 = 1e-5;
/// Added to attention scores between tokens of different parts.
const MASKED: f64 = -1e9;

fn linear<T: Real>(p: &mut ParamStore<T>, name: &str, fan_in: usize, out: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    p.insert_uniform(&format!("{name}.w"), fan_in, out, fan_in, rng)?;
    p.insert_uniform(&format!("{name}.b"), 1, out, fan_in, rng)?;
    Ok(())
}

fn mlp_params<T: Real>(
    p: &mut ParamStore<T>,
    prefix: &str,
    input: usize,
    widths: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut fan_in = input;
    for (l, &w) in widths.iter().enumerate() {
        linear(p, &format!("{prefix}.{l}"), fan_in, w, rng)?;
        fan_in = w;
    }
    Ok(())
}

fn layer_norm_params<T: Real>(p: &mut ParamStore<T>, name: &str, dim: usize) -> Result<()> {
    p.insert(&format!("{name}.g"), Tensor::from_fn(1, dim, |_, _| T::one()))?;
    p.insert(&format!("{name}.b"), Tensor::zeros(1, dim))?;
    Ok(())
}

/// Fresh parameters drawn from `cfg.init_seed`.
pub fn init_params<T: Real>(cfg: &ModelConfig) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let mut p = ParamStore::new();
    let c = cfg.feature_dim;
    let [a, b] = &cfg.sa;
    mlp_params(&mut p, "sa1", 3, &a.mlp, &mut rng)?;
    mlp_params(&mut p, "sa2", 3 + a.mlp.last().unwrap(), &b.mlp, &mut rng)?;
    mlp_params(&mut p, "global", 3 + b.mlp.last().unwrap(), &cfg.global_mlp, &mut rng)?;
    p.insert_uniform("dec.pe", cfg.frames, c, c, &mut rng)?;
    let dh = cfg.head_dim();
    for l in 0..cfg.decoder_layers {
        for h in 0..cfg.heads {
            for m in ["q", "k", "v"] {
                p.insert_uniform(&format!("dec{l}.h{h}.{m}"), c, dh, c, &mut rng)?;
            }
        }
        linear(&mut p, &format!("dec{l}.o"), c, c, &mut rng)?;
        layer_norm_params(&mut p, &format!("dec{l}.ln1"), c)?;
        linear(&mut p, &format!("dec{l}.ff1"), c, cfg.ff_dim, &mut rng)?;
        linear(&mut p, &format!("dec{l}.ff2"), cfg.ff_dim, c, &mut rng)?;
        layer_norm_params(&mut p, &format!("dec{l}.ln2"), c)?;
    }
    mlp_params(&mut p, "head", c, &[c, 6], &mut rng)?;
    // Drawn last so the remaining weights match the model without message
    // passing; the output layer starts at zero, making each update an
    // identity until training moves it.
    if cfg.use_gnn {
        for l in 0..cfg.gnn_layers {
            linear(&mut p, &format!("gnn{l}.0"), 2 * c, c, &mut rng)?;
            p.insert(&format!("gnn{l}.1.w"), Tensor::zeros(c, c))?;
            p.insert(&format!("gnn{l}.1.b"), Tensor::zeros(1, c))?;
        }
    }
    Ok(p)
}

fn apply_linear<T: Real>(g: &mut Graph<T>, x: Var, name: &str) -> Result<Var> {
    let w = g.param_named(&format!("{name}.w"))?;
    let b = g.param_named(&format!("{name}.b"))?;
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// Stack of linear layers with ReLU after each, or after all but the last
/// when `linear_out` is set.
fn apply_mlp<T: Real>(g: &mut Graph<T>, x: Var, prefix: &str, layers: usize, linear_out: bool) -> Result<Var> {
    let mut h = x;
    for l in 0..layers {
        h = apply_linear(g, h, &format!("{prefix}.{l}"))?;
        if !(linear_out && l + 1 == layers) {
            h = g.relu(h);
        }
    }
    Ok(h)
}

fn leaf3<T: Real>(g: &mut Graph<T>, rows: impl Iterator<Item = f64>, n: usize) -> Result<Var> {
    let data: Vec<T> = rows.map(T::of).collect();
    Ok(g.leaf(Tensor::new(n, 3, data)?))
}

/// Features of a stack of parts, `M × C`, rows in part order.
pub fn encode_parts<T: Real>(g: &mut Graph<T>, cfg: &ModelConfig, parts: &[PartGrouping]) -> Result<Var> {
    let [a, b] = &cfg.sa;
    let m = parts.len();
    let rel1 = leaf3(g, parts.iter().flat_map(|p| p.rel1.iter().copied()), m * a.samples * a.max_neighbors)?;
    let h1 = apply_mlp(g, rel1, "sa1", a.mlp.len(), false)?;
    let f1 = g.max_pool_sets(h1, a.max_neighbors)?;

    let idx2: Vec<usize> = parts
        .iter()
        .enumerate()
        .flat_map(|(k, p)| p.idx2.iter().map(move |&i| k * a.samples + i))
        .collect();
    let gathered = g.gather_rows(f1, &idx2)?;
    let rel2 = leaf3(g, parts.iter().flat_map(|p| p.rel2.iter().copied()), m * b.samples * b.max_neighbors)?;
    let x2 = g.concat_cols(&[rel2, gathered])?;
    let h2 = apply_mlp(g, x2, "sa2", b.mlp.len(), false)?;
    let f2 = g.max_pool_sets(h2, b.max_neighbors)?;

    let abs2 = leaf3(g, parts.iter().flat_map(|p| p.abs2.iter().copied()), m * b.samples)?;
    let x3 = g.concat_cols(&[abs2, f2])?;
    let h3 = apply_mlp(g, x3, "global", cfg.global_mlp.len(), false)?;
    g.max_pool_sets(h3, b.samples)
}

/// Feature of a single part, `1 × C`.
pub fn encode_part<T: Real>(g: &mut Graph<T>, cfg: &ModelConfig, part: &PartGrouping) -> Result<Var> {
    encode_parts(g, cfg, std::slice::from_ref(part))
}

/// One message `MLP(f_i, f_j)` for every ordered coupled pair, summed into
/// `f_i` residually, repeated per layer. Without edges the input is returned
/// untouched.
pub fn gnn_refine<T: Real>(g: &mut Graph<T>, cfg: &ModelConfig, f: Var, coupling: &CouplingMatrix) -> Result<Var> {
    let m = coupling.len();
    let mut recv = Vec::new();
    let mut send = Vec::new();
    for i in 0..m {
        for j in coupling.neighbors(i) {
            recv.push(i);
            send.push(j);
        }
    }
    if recv.is_empty() {
        return Ok(f);
    }
    let e = recv.len();
    let mut inc = Tensor::<T>::zeros(m, e);
    for (k, &i) in recv.iter().enumerate() {
        inc.set(i, k, T::one());
    }
    let inc = g.leaf(inc);
    let mut h = f;
    for l in 0..cfg.gnn_layers {
        let fi = g.gather_rows(h, &recv)?;
        let fj = g.gather_rows(h, &send)?;
        let pair = g.concat_cols(&[fi, fj])?;
        let msg = apply_mlp(g, pair, &format!("gnn{l}"), 2, true)?;
        let agg = g.matmul(inc, msg)?;
        h = g.add(h, agg)?;
    }
    Ok(h)
}

/// Per-part sequences of `T` twists, `(M·T) × 6` with row `p·T + t`.
///
/// Each part's feature is repeated over the frames, offset by the learned
/// positional encoding, and passed through post-norm self-attention layers in
/// which tokens only attend within their own part.
pub fn temporal_decode<T: Real>(g: &mut Graph<T>, cfg: &ModelConfig, f: Var) -> Result<Var> {
    let m = g.shape(f)[0];
    let t = cfg.frames;
    let rep: Vec<usize> = (0..m).flat_map(|p| std::iter::repeat(p).take(t)).collect();
    let frame: Vec<usize> = (0..m).flat_map(|_| 0..t).collect();
    let tokens = g.gather_rows(f, &rep)?;
    let pe = g.param_named("dec.pe")?;
    let pe = g.gather_rows(pe, &frame)?;
    let mut x = g.add(tokens, pe)?;

    let mask = (m > 1).then(|| {
        g.leaf(Tensor::from_fn(m * t, m * t, |r, c| {
            if r / t == c / t {
                T::zero()
            } else {
                T::of(MASKED)
            }
        }))
    });
    let scale = T::of(1.0 / (cfg.head_dim() as f64).sqrt());
    for l in 0..cfg.decoder_layers {
        let mut heads = Vec::with_capacity(cfg.heads);
        for h in 0..cfg.heads {
            let wq = g.param_named(&format!("dec{l}.h{h}.q"))?;
            let wk = g.param_named(&format!("dec{l}.h{h}.k"))?;
            let wv = g.param_named(&format!("dec{l}.h{h}.v"))?;
            let q = g.matmul(x, wq)?;
            let k = g.matmul(x, wk)?;
            let v = g.matmul(x, wv)?;
            let s = g.matmul_bt(q, k)?;
            let mut s = g.scale(s, scale);
            if let Some(mk) = mask {
                s = g.add(s, mk)?;
            }
            let a = g.softmax_rows(s);
            heads.push(g.matmul(a, v)?);
        }
        let cat = g.concat_cols(&heads)?;
        let att = apply_linear(g, cat, &format!("dec{l}.o"))?;
        let res = g.add(x, att)?;
        x = layer_norm(g, res, &format!("dec{l}.ln1"))?;
        let ff = apply_linear(g, x, &format!("dec{l}.ff1"))?;
        let ff = g.relu(ff);
        let ff = apply_linear(g, ff, &format!("dec{l}.ff2"))?;
        let res = g.add(x, ff)?;
        x = layer_norm(g, res, &format!("dec{l}.ln2"))?;
    }
    apply_mlp(g, x, "head", 2, true)
}

fn layer_norm<T: Real>(g: &mut Graph<T>, x: Var, name: &str) -> Result<Var> {
    let gamma = g.param_named(&format!("{name}.g"))?;
    let beta = g.param_named(&format!("{name}.b"))?;
    g.layer_norm(x, gamma, beta, T::of(LN_EPS))
}

/// Encoder, optional message passing, decoder.
pub fn forward<T: Real>(g: &mut Graph<T>, cfg: &ModelConfig, input: &AssemblyInput) -> Result<Var> {
    let f = encode_parts(g, cfg, &input.parts)?;
    let f = if cfg.use_gnn {
        gnn_refine(g, cfg, f, &input.coupling)?
    } else {
        f
    };
    temporal_decode(g, cfg, f)
}
