//! Forward pass, loss, and exact reverse-mode gradients for the decoder.
//!
//! Model per step t (targets y_1..y_L, then EOS; y_0 = BOS, y_{-1} = PAD):
//!
//! ```text
//! h_t      = tanh(A·fp + B·emb(y_{t-1}) + C·emb(y_{t-2}) + b)
//! logits_t = U·h_t + c
//! ```
//!
//! Loss is the mean over the batch of each example's summed token-level
//! negative log-likelihood (EOS included; padding never enters).

use super::{LearnerError, ModelConfig, ParamVector, TokenId, BOS_ID, EOS_ID, PAD_ID};

/// One training pair: folded product fingerprint plus reactant token ids
/// (content only; BOS/EOS handled internally).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub targets: Vec<TokenId>,
}

pub(crate) struct Blocks<'a> {
    pub embed: &'a [f64],
    pub fp_proj: &'a [f64],
    pub ctx1_proj: &'a [f64],
    pub ctx2_proj: &'a [f64],
    pub hidden_bias: &'a [f64],
    pub out_proj: &'a [f64],
    pub out_bias: &'a [f64],
}

impl<'a> Blocks<'a> {
    pub fn of(params: &'a ParamVector) -> Blocks<'a> {
        Blocks {
            embed: params.block("embed"),
            fp_proj: params.block("fp_proj"),
            ctx1_proj: params.block("ctx1_proj"),
            ctx2_proj: params.block("ctx2_proj"),
            hidden_bias: params.block("hidden_bias"),
            out_proj: params.block("out_proj"),
            out_bias: params.block("out_bias"),
        }
    }
}

fn check_example(ex: &TrainExample, cfg: &ModelConfig) -> Result<(), LearnerError> {
    if ex.features.len() != cfg.fp_dim {
        return Err(LearnerError::ShapeMismatch(format!(
            "feature dim {} != fp_dim {}",
            ex.features.len(),
            cfg.fp_dim
        )));
    }
    if ex.targets.len() + 1 > cfg.max_len {
        return Err(LearnerError::ShapeMismatch(format!(
            "sequence length {} exceeds max_len {}",
            ex.targets.len(),
            cfg.max_len
        )));
    }
    let v = cfg.vocab_size() as TokenId;
    if ex.targets.iter().any(|&t| t >= v) {
        return Err(LearnerError::ShapeMismatch("token id out of vocabulary".into()));
    }
    Ok(())
}

/// `y = M·x + y0` for row-major `M` of shape `rows × cols`.
fn matvec_into(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// Rank-1 accumulation `M += a ⊗ b` for row-major `M` of shape `a.len() × b.len()`.
fn outer_add(m: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (r, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let row = &mut m[r * cols..(r + 1) * cols];
        for (mv, &bv) in row.iter_mut().zip(b) {
            *mv += av * bv;
        }
    }
}

fn context_ids(targets: &[TokenId], t: usize) -> (TokenId, TokenId) {
    let prev1 = if t == 0 { BOS_ID } else { targets[t - 1] };
    let prev2 = match t {
        0 => PAD_ID,
        1 => BOS_ID,
        _ => targets[t - 2],
    };
    (prev1, prev2)
}

/// Mean batch loss and its exact gradient.
pub fn loss_and_grad(
    params: &ParamVector,
    batch: &[TrainExample],
    cfg: &ModelConfig,
) -> Result<(f64, ParamVector), LearnerError> {
    let refs: Vec<&TrainExample> = batch.iter().collect();
    loss_and_grad_refs(params, &refs, cfg)
}

pub(crate) fn loss_and_grad_refs(
    params: &ParamVector,
    batch: &[&TrainExample],
    cfg: &ModelConfig,
) -> Result<(f64, ParamVector), LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    for ex in batch {
        check_example(ex, cfg)?;
    }
    let v = cfg.vocab_size();
    let h_dim = cfg.hidden_dim;
    let e_dim = cfg.embed_dim;
    let blocks = Blocks::of(params);

    let mut grad = params.zeros_like();
    let mut total_loss = 0.0;
    let scale = 1.0 / batch.len() as f64;

    // scratch buffers reused across steps
    let mut fp_part = vec![0.0; h_dim];
    let mut pre = vec![0.0; h_dim];
    let mut h = vec![0.0; h_dim];
    let mut logits = vec![0.0; v];
    let mut probs = vec![0.0; v];
    let mut dh = vec![0.0; h_dim];
    let mut dpre = vec![0.0; h_dim];
    let mut du = vec![0.0; h_dim];

    for ex in batch {
        fp_part.fill(0.0);
        matvec_into(blocks.fp_proj, &ex.features, &mut fp_part);
        du.fill(0.0);

        let steps = ex.targets.len() + 1; // content tokens then EOS
        for t in 0..steps {
            let (prev1, prev2) = context_ids(&ex.targets, t);
            let target = if t < ex.targets.len() { ex.targets[t] } else { EOS_ID } as usize;

            let e1 = &blocks.embed[prev1 as usize * e_dim..(prev1 as usize + 1) * e_dim];
            let e2 = &blocks.embed[prev2 as usize * e_dim..(prev2 as usize + 1) * e_dim];

            pre.copy_from_slice(&fp_part);
            for (p, b) in pre.iter_mut().zip(blocks.hidden_bias) {
                *p += b;
            }
            matvec_into(blocks.ctx1_proj, e1, &mut pre);
            matvec_into(blocks.ctx2_proj, e2, &mut pre);
            for (hv, &p) in h.iter_mut().zip(pre.iter()) {
                *hv = p.tanh();
            }

            logits.copy_from_slice(blocks.out_bias);
            matvec_into(blocks.out_proj, &h, &mut logits);

            // log-softmax, numerically stable
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (pv, &l) in probs.iter_mut().zip(logits.iter()) {
                let e = (l - max).exp();
                *pv = e;
                z += e;
            }
            total_loss += scale * (z.ln() + max - logits[target]);

            // dlogits = softmax − onehot, scaled by 1/B
            let inv_z = 1.0 / z;
            for pv in probs.iter_mut() {
                *pv *= inv_z * scale;
            }
            probs[target] -= scale;

            // out_bias and out_proj
            let g_out_bias = grad.block_mut("out_bias");
            for (g, &d) in g_out_bias.iter_mut().zip(probs.iter()) {
                *g += d;
            }
            outer_add(grad.block_mut("out_proj"), &probs, &h);

            // dh = U^T · dlogits
            dh.fill(0.0);
            for (r, &d) in probs.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &blocks.out_proj[r * h_dim..(r + 1) * h_dim];
                for (dhv, &u) in dh.iter_mut().zip(row) {
                    *dhv += d * u;
                }
            }

            for i in 0..h_dim {
                dpre[i] = dh[i] * (1.0 - h[i] * h[i]);
            }

            let g_hidden_bias = grad.block_mut("hidden_bias");
            for (g, &d) in g_hidden_bias.iter_mut().zip(dpre.iter()) {
                *g += d;
            }
            outer_add(grad.block_mut("ctx1_proj"), &dpre, e1);
            outer_add(grad.block_mut("ctx2_proj"), &dpre, e2);

            // embedding gradients: de = B^T (or C^T) · dpre
            for (proj, prev) in [(blocks.ctx1_proj, prev1), (blocks.ctx2_proj, prev2)] {
                let g_embed = grad.block_mut("embed");
                let row = &mut g_embed[prev as usize * e_dim..(prev as usize + 1) * e_dim];
                for (r, &d) in dpre.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let prow = &proj[r * e_dim..(r + 1) * e_dim];
                    for (gv, &p) in row.iter_mut().zip(prow) {
                        *gv += d * p;
                    }
                }
            }

            for (uv, &d) in du.iter_mut().zip(dpre.iter()) {
                *uv += d;
            }
        }

        outer_add(grad.block_mut("fp_proj"), &du, &ex.features);
    }

    Ok((total_loss, grad))
}

/// Forward-only decoder used by beam search. The fingerprint projection is
/// computed once per sequence.
pub(crate) struct Decoder<'a> {
    blocks: Blocks<'a>,
    fp_part: Vec<f64>,
    e_dim: usize,
    v: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(params: &'a ParamVector, features: &[f64], cfg: &ModelConfig) -> Decoder<'a> {
        debug_assert_eq!(features.len(), cfg.fp_dim);
        let blocks = Blocks::of(params);
        let mut fp_part = vec![0.0; cfg.hidden_dim];
        matvec_into(blocks.fp_proj, features, &mut fp_part);
        Decoder { blocks, fp_part, e_dim: cfg.embed_dim, v: cfg.vocab_size() }
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    /// Log-probabilities of the next token given the two previous ids.
    pub fn log_probs(&self, prev1: TokenId, prev2: TokenId, out: &mut Vec<f64>) {
        let e1 =
            &self.blocks.embed[prev1 as usize * self.e_dim..(prev1 as usize + 1) * self.e_dim];
        let e2 =
            &self.blocks.embed[prev2 as usize * self.e_dim..(prev2 as usize + 1) * self.e_dim];
        let mut pre = self.fp_part.clone();
        for (p, b) in pre.iter_mut().zip(self.blocks.hidden_bias) {
            *p += b;
        }
        matvec_into(self.blocks.ctx1_proj, e1, &mut pre);
        matvec_into(self.blocks.ctx2_proj, e2, &mut pre);
        let h: Vec<f64> = pre.iter().map(|p| p.tanh()).collect();

        out.clear();
        out.extend_from_slice(self.blocks.out_bias);
        matvec_into(self.blocks.out_proj, &h, out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = out.iter().map(|&l| (l - max).exp()).sum();
        let log_z = z.ln() + max;
        for l in out.iter_mut() {
            *l -= log_z;
        }
        debug_assert_eq!(out.len(), self.v);
    }
}

#[cfg(test)]
mod tests {
    use super::super::{init_params, ModelConfig, Vocab};
    use super::*;
    use std::sync::Arc;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            vocab: Arc::new(Vocab::standard()),
            fp_dim: 8,
            embed_dim: 4,
            hidden_dim: 6,
            max_len: 24,
        }
    }

    fn example(cfg: &ModelConfig, seed: u64) -> TrainExample {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let features = (0..cfg.fp_dim).map(|_| if rng.gen::<f64>() < 0.4 { 1.0 } else { 0.0 }).collect();
        let len = rng.gen_range(1..8);
        let targets =
            (0..len).map(|_| rng.gen_range(4..cfg.vocab_size() as TokenId)).collect();
        TrainExample { features, targets }
    }

    #[test]
    fn uniform_params_give_log_vocab_loss() {
        let cfg = tiny_cfg();
        let params = ParamVector::zeros(Arc::new(super::super::params::model_layout(&cfg)));
        let ex = example(&cfg, 3);
        let steps = (ex.targets.len() + 1) as f64;
        let (loss, _) = loss_and_grad(&params, &[ex], &cfg).unwrap();
        let expected = steps * (cfg.vocab_size() as f64).ln();
        assert!((loss - expected).abs() < 1e-9, "{loss} vs {expected}");
    }

    #[test]
    fn duplicate_example_leaves_mean_unchanged() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 11);
        let ex = example(&cfg, 5);
        let (l1, g1) = loss_and_grad(&params, &[ex.clone()], &cfg).unwrap();
        let (l2, g2) = loss_and_grad(&params, &[ex.clone(), ex], &cfg).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = tiny_cfg();
        let mut worst: f64 = 0.0;
        for draw in 0..3 {
            let params = init_params(&cfg, 100 + draw);
            let batch: Vec<TrainExample> =
                (0..4).map(|i| example(&cfg, draw * 10 + i)).collect();
            let (_, grad) = loss_and_grad(&params, &batch, &cfg).unwrap();
            let step = 1e-4;
            for k in (0..params.len()).step_by(97) {
                let mut plus = params.clone();
                plus.values_mut()[k] += step;
                let (lp, _) = loss_and_grad(&plus, &batch, &cfg).unwrap();
                let mut minus = params.clone();
                minus.values_mut()[k] -= step;
                let (lm, _) = loss_and_grad(&minus, &batch, &cfg).unwrap();
                let numeric = (lp - lm) / (2.0 * step);
                let analytic = grad.values()[k];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                worst = worst.max((numeric - analytic).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn shape_errors_reported() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 1);
        let bad_feat = TrainExample { features: vec![0.0; 3], targets: vec![5] };
        assert!(matches!(
            loss_and_grad(&params, &[bad_feat], &cfg),
            Err(LearnerError::ShapeMismatch(_))
        ));
        let bad_token =
            TrainExample { features: vec![0.0; cfg.fp_dim], targets: vec![u32::MAX] };
        assert!(matches!(
            loss_and_grad(&params, &[bad_token], &cfg),
            Err(LearnerError::ShapeMismatch(_))
        ));
        let too_long = TrainExample {
            features: vec![0.0; cfg.fp_dim],
            targets: vec![5; cfg.max_len],
        };
        assert!(matches!(
            loss_and_grad(&params, &[too_long], &cfg),
            Err(LearnerError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn decoder_log_probs_normalize() {
        let cfg = tiny_cfg();
        let params = init_params(&cfg, 9);
        let features = vec![1.0; cfg.fp_dim];
        let dec = Decoder::new(&params, &features, &cfg);
        let mut lp = Vec::new();
        dec.log_probs(BOS_ID, PAD_ID, &mut lp);
        let total: f64 = lp.iter().map(|&l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
