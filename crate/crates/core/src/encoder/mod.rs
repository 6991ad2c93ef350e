//! Char- and word-level CNN encoders with exact reverse-mode gradients.
//!
//! Mentions and subjects go through the char encoder (max-pooled), patterns
//! and relations through the word encoder (attention-pooled). Both produce
//! vectors of the same dimension `filters * windows.len()`.

mod adam;
mod checkpoint;
mod params;
mod session;
mod tape;
mod tensor;
mod vocab;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use params::{EncoderConfig, EncoderParams, ParamId, Side};
pub use session::Session;
pub use tape::{ConvBank, Gradients, NodeId, Tape};
pub use tensor::Tensor;
pub use vocab::{Vocab, PAD, SLOT, UNK};

/// Encodes a mention or subject with the char CNN.
pub fn encode_char(text: &str, params: &EncoderParams) -> Vec<f64> {
    let mut s = Session::new(params);
    let v = s.char_vector(text);
    s.value(v).to_vec()
}

/// Encodes a pattern or relation with the word CNN and attentive pooling.
/// `context` is the other side's mean position feature, if any.
pub fn encode_word_attentive(text: &str, context: Option<&[f64]>, params: &EncoderParams) -> Vec<f64> {
    let mut s = Session::new(params);
    let ctx = context.map(|c| s.tape.input(Tensor::from_vec(1, c.len(), c.to_vec())));
    let v = s.word_vector(text, ctx);
    s.value(v).to_vec()
}

/// Mean position feature of a word-encoded text.
pub fn word_context(text: &str, params: &EncoderParams) -> Vec<f64> {
    let mut s = Session::new(params);
    let m = s.word_mean(text);
    s.value(m).to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBundle {
    pub mention: Vec<f64>,
    pub pattern: Vec<f64>,
    pub subject: Vec<f64>,
    pub relation: Vec<f64>,
}

impl EmbeddingBundle {
    pub fn encode(mention: &str, pattern: &str, subject: &str, relation: &str, params: &EncoderParams) -> Self {
        let mut s = Session::new(params);
        let m = s.char_vector(mention);
        let sub = s.char_vector(subject);
        let (p, r) = s.paired_word_vectors(pattern, relation);
        Self {
            mention: s.value(m).to_vec(),
            pattern: s.value(p).to_vec(),
            subject: s.value(sub).to_vec(),
            relation: s.value(r).to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64, texts: &[&str]) -> EncoderParams {
        let mut vocab = Vocab::default();
        for t in texts {
            vocab.extend_with(t);
        }
        let cfg = EncoderConfig {
            char_dim: 4,
            word_dim: 5,
            filters: 3,
            windows: vec![2, 3],
            init_range: 0.5,
        };
        EncoderParams::init(cfg, vocab, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn default_output_dim() {
        let p = EncoderParams::init(EncoderConfig::default(), Vocab::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(p.output_dim(), 256);
        assert_eq!(encode_char("obama", &p).len(), 256);
        assert_eq!(encode_word_attentive("where was <e> born", None, &p).len(), 256);
    }

    #[test]
    fn single_char_is_padded() {
        let p = small(1, &["a"]);
        let v = encode_char("a", &p);
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn encoding_is_pure() {
        let p = small(2, &["where was obama born"]);
        assert_eq!(encode_char("obama", &p), encode_char("obama", &p));
        assert_eq!(
            encode_word_attentive("where was <e>", None, &p),
            encode_word_attentive("where was <e>", None, &p)
        );
    }

    #[test]
    fn zero_attention_is_mean_pooling() {
        let mut p = small(3, &["who wrote the book"]);
        let a = p.attention();
        p.get_mut(a).data.iter_mut().for_each(|x| *x = 0.0);
        let pooled = encode_word_attentive("who wrote the book", None, &p);
        let mean = word_context("who wrote the book", &p);
        for (x, y) in pooled.iter().zip(&mean) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_attention_weight_is_one() {
        let p = small(4, &["born"]);
        let mut s = Session::new(&p);
        let h = s.word_features("born");
        let hv = s.value(h).to_vec();
        let v = s.word_vector("born", None);
        assert_eq!(s.value(v), hv.as_slice());
    }

    #[test]
    fn token_order_matters() {
        // Hand-set parameters so the example does not depend on the RNG.
        let mut p = small(0, &["alpha beta gamma"]);
        for (k, t) in p.tensors.iter_mut().enumerate() {
            for (i, x) in t.data.iter_mut().enumerate() {
                *x = 0.3 * (0.7 * i as f64 + 1.3 * k as f64).sin();
            }
        }
        let a = encode_word_attentive("alpha beta gamma", None, &p);
        let b = encode_word_attentive("gamma beta alpha", None, &p);
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6, "diff {diff}");
    }

    #[test]
    fn grad_of_param_sum_is_ones() {
        let p = small(5, &["x"]);
        let mut tape = Tape::new();
        let a = tape.param(&p, p.attention());
        let loss = tape.sum_all(a);
        let g = tape.backward(&p, loss).unwrap();
        assert!(g.get(p.attention()).data.iter().all(|&x| x == 1.0));
        assert!(g.get(p.word_table()).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unused_parameter_has_zero_grad() {
        let p = small(6, &["abc def"]);
        let mut s = Session::new(&p);
        let v = s.char_vector("abc");
        let loss = s.tape.sum_all(v);
        let g = s.tape.backward(&p, loss).unwrap();
        assert!(g.get(p.word_table()).data.iter().all(|&x| x == 0.0));
        assert!(g.get(p.attention()).data.iter().all(|&x| x == 0.0));
        assert!(g.get(p.char_table()).data.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let p = small(7, &["x"]);
        let mut tape = Tape::new();
        let n = tape.constant(f64::NAN);
        assert!(tape.backward(&p, n).is_err());
    }

    /// Central differences over every parameter entry of a word+char graph.
    #[test]
    fn encoder_gradients_match_finite_differences() {
        let texts = ["where was <e> born", "place of birth", "obama"];
        let p = small(8, &texts);
        let build = |p: &EncoderParams| {
            let mut s = Session::new(p);
            let (vp, vr) = s.paired_word_vectors(texts[0], texts[1]);
            let m = s.char_vector(texts[2]);
            let sub = s.char_vector("obam");
            let c1 = s.tape.cosine(vp, vr);
            let c2 = s.tape.cosine(m, sub);
            let iso = s.word_vector_isolated(texts[1]);
            let c3 = s.tape.cosine(iso, vp);
            let sq = s.tape.square(c3);
            let loss = s.tape.sum(vec![c1, c2, sq]);
            (s.tape, loss)
        };
        let (tape, loss) = build(&p);
        let g = tape.backward(&p, loss).unwrap();
        let h = 1e-5;
        let mut q = p.clone();
        for k in 0..p.tensors.len() {
            for i in 0..p.tensors[k].data.len() {
                let orig = q.tensors[k].data[i];
                q.tensors[k].data[i] = orig + h;
                let (t1, l1) = build(&q);
                q.tensors[k].data[i] = orig - h;
                let (t2, l2) = build(&q);
                q.tensors[k].data[i] = orig;
                let numeric = (t1.scalar(l1) - t2.scalar(l2)) / (2.0 * h);
                let analytic = g.tensors[k].data[i];
                let tol = 1e-4 * analytic.abs().max(numeric.abs()) + 1e-8;
                assert!((analytic - numeric).abs() <= tol, "tensor {k} entry {i}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn adam_zero_grad_or_zero_lr_is_identity() {
        let mut p = small(9, &["a b"]);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zero = Gradients::zeros_like(&p);
        for _ in 0..3 {
            adam_step(&mut p, &zero, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);

        let mut g = Gradients::zeros_like(&p);
        g.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|x| *x = 0.3));
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &g, &mut AdamState::new(&before), &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = small(10, &[]);
        let a = p.attention();
        p.get_mut(a).data[0] = 1.0;
        let mut g = Gradients::zeros_like(&p);
        g.tensors[a.0].data[0] = 1.0;
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        // m_hat = v_hat = 1 after bias correction.
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((p.get(a).data[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut p = small(11, &[]);
        let mut g = Gradients::zeros_like(&p);
        g.tensors[0].data[0] = f64::INFINITY;
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut st, &AdamConfig::default()).is_err());
    }

    #[test]
    fn vocab_growth() {
        let mut p = small(12, &["old words here"]);
        let before = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.grow_vocab(["old here"], &mut rng), (0, 0));
        assert_eq!(p, before);

        let v_old = encode_word_attentive("old words here", None, &p);
        let c_old = encode_char("old", &p);
        let rows = p.get(p.word_table()).rows;
        let (_, words) = p.grow_vocab(["brand new tokens"], &mut rng);
        assert_eq!(words, 3);
        assert_eq!(p.get(p.word_table()).rows, rows + 3);
        assert_eq!(encode_word_attentive("old words here", None, &p), v_old);
        assert_eq!(encode_char("old", &p), c_old);
    }

    #[test]
    fn checkpoint_is_bit_faithful() {
        let p = small(13, &["some text with ünïcode"]);
        let mut st = AdamState::new(&p);
        let mut g = Gradients::zeros_like(&p);
        g.tensors.iter_mut().for_each(|t| t.data.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64).sin()));
        let mut q = p.clone();
        adam_step(&mut q, &g, &mut st, &AdamConfig::default()).unwrap();
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            phase: 2,
            params: q,
            adam: Some(st),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta_2.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        for (a, b) in ck.params.tensors.iter().zip(&back.params.tensors) {
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(ck, back);
    }
}
