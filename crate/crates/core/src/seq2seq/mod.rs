//! Attention seq2seq with an optional pointer-generator copy mechanism.
//!
//! The source is `l1 ⊕ <sep> ⊕ l2`; the target is the code-switched
//! sentence. In pointer-generator mode every decoder step mixes the
//! vocabulary softmax with the attention distribution scattered onto the
//! source tokens' extended ids, weighted by a learned gate.

mod beam;
mod decode;
mod model;
mod train;

pub use beam::{beam_search, greedy_decode, BeamError, Hypothesis, StepModel};
pub use decode::{decode_greedy, decode_nbest};
pub use model::{
    attend, final_distribution, generation_gate, DecoderMode, EncoderOutput, Seq2Seq, Seq2SeqConfig,
    Seq2SeqDecoder, StepDistribution,
};
pub use train::{evaluate_nll, train, train_epoch, EpochRecord, LossReport, TrainError, TrainOptions, TrainReport};

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::{encode_example, EncodedExample, ParallelExample, Vocabulary, EOS, SEP_TOKEN};
    use crate::tensor::check_gradients;

    fn vocab_of(words: &[&str], cap: usize) -> Vocabulary {
        let line: Vec<String> = words.iter().map(|s| s.to_string()).collect();
        Vocabulary::build_with_reserved([line], cap, &[SEP_TOKEN])
    }

    fn jitter(model: &mut Seq2Seq, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = model.params_mut();
        for id in store.ids().collect::<Vec<_>>() {
            for v in store.get_mut(id).data_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
    }

    #[test]
    fn full_loss_gradients_match_finite_differences() {
        // 7 words + 5 reserved = |V| 12.
        let v = vocab_of(&["a", "b", "c", "d", "e", "f", "g"], 12);
        assert_eq!(v.len(), 12);
        let ex = encode_example(&ParallelExample::from_text("a b zz", "c yy", Some("a yy d")), &v);
        for mode in [DecoderMode::PointerGenerator, DecoderMode::AttentionOnly] {
            let cfg = Seq2SeqConfig::new(12, mode).with_dims(8, 8).with_seed(1);
            let mut model = Seq2Seq::new(cfg).unwrap();
            jitter(&mut model, 2);
            let m = model.clone();
            let mut store = model.params().clone();
            let report = check_gradients(&mut store, 1e-5, |g, st| Ok(m.loss(g, st, &ex)?.0)).unwrap();
            assert!(report.max_rel_error < 1e-4, "{mode:?}: {report:?}");
        }
    }

    #[test]
    fn distributions_normalize_on_random_models() {
        let v = vocab_of(&["a", "b", "c", "d"], 20);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pool = ["a", "b", "c", "d", "x", "y", "z"];
        for seed in 0..40 {
            let cfg = Seq2SeqConfig::new(v.len(), DecoderMode::PointerGenerator).with_dims(6, 6).with_seed(seed);
            let mut model = Seq2Seq::new(cfg).unwrap();
            jitter(&mut model, seed + 100);
            let mut words = |n: usize| -> String {
                (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect::<Vec<_>>().join(" ")
            };
            let (l1, l2, cs) = (words(3), words(2), words(4));
            let ex = encode_example(&ParallelExample::from_text(&l1, &l2, Some(&cs)), &v);
            for d in model.step_distributions(&ex).unwrap() {
                for dist in [&d.attention, &d.p_vocab, &d.p_final] {
                    assert!(dist.iter().all(|&p| p >= 0.0));
                    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
                let p = d.p_gen.unwrap();
                assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn forced_gate_closes_vocabulary_or_copy_path() {
        let v = vocab_of(&["a", "b", "c", "d"], 20);
        let ex = encode_example(&ParallelExample::from_text("a qq", "rr b", None), &v);
        let mut model = Seq2Seq::new(Seq2SeqConfig::new(v.len(), DecoderMode::PointerGenerator).with_dims(6, 6)).unwrap();
        model.force_gate = Some(0.0);
        let limit = model.config.decode_limit(ex.src_ids.len());
        let mut dec = model.decoder(&ex).unwrap();
        let out = greedy_decode(&mut dec, limit).unwrap();
        for t in &out.tokens {
            assert!(ex.src_extended_ids.contains(t), "{t} not in source");
        }
        model.force_gate = Some(1.0);
        let mut dec = model.decoder(&ex).unwrap();
        for h in beam_search(&mut dec, 5, 5, limit).unwrap() {
            assert!(h.tokens.iter().all(|&t| t < v.len()));
        }
    }

    fn repeated(n: usize) -> (Vocabulary, Vec<EncodedExample>) {
        let v = vocab_of(&["the", "cat", "sat", "猫", "坐"], 20);
        let ex = encode_example(&ParallelExample::from_text("the cat sat", "猫 坐", Some("the 猫 sat")), &v);
        (v, vec![ex; n])
    }

    #[test]
    fn nll_strictly_decreases_on_repeated_example() {
        let (v, data) = repeated(1);
        let mut model = Seq2Seq::new(Seq2SeqConfig::new(v.len(), DecoderMode::PointerGenerator).with_dims(8, 8)).unwrap();
        let opts = TrainOptions { batch_size: 1, ..TrainOptions::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            train_epoch(&mut model, &data, &opts, opts.lr, &mut rng).unwrap();
            let nll = evaluate_nll(&model, &data, 1).unwrap().mean_nll();
            assert!(nll < prev, "{nll} !< {prev}");
            prev = nll;
        }
    }

    #[test]
    fn copy_task_puts_mass_on_source_slots() {
        let v = vocab_of(&[], 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let word = |rng: &mut ChaCha8Rng| format!("w{}", rng.gen_range(0..200));
        let mut make = |n: usize| -> Vec<EncodedExample> {
            (0..n)
                .map(|_| {
                    let l1: Vec<String> = (0..3).map(|_| word(&mut rng)).collect();
                    let l2: Vec<String> = (0..2).map(|_| word(&mut rng)).collect();
                    let cs = l1.clone();
                    encode_example(&ParallelExample::new(l1, l2, Some(cs)), &v)
                })
                .collect()
        };
        let train_set = make(200);
        let test_set = make(30);
        let cfg = Seq2SeqConfig::new(v.len(), DecoderMode::PointerGenerator).with_dims(16, 16).with_seed(5);
        let mut model = Seq2Seq::new(cfg).unwrap();
        let opts = TrainOptions { epochs: 12, batch_size: 8, ..TrainOptions::default() };
        train(&mut model, &train_set, &[], &opts).unwrap();

        let (mut mass, mut steps) = (0.0, 0);
        for ex in &test_set {
            let tgt = ex.tgt_extended_ids.as_ref().unwrap();
            for (d, &t) in model.step_distributions(ex).unwrap().iter().zip(&tgt[1..]) {
                if t != EOS {
                    mass += d.p_final[t];
                    steps += 1;
                }
            }
        }
        let mean = mass / steps as f64;
        assert!(mean > 0.9, "mean copy mass {mean}");
    }

    #[test]
    fn empty_corpus_and_missing_target() {
        let (v, mut data) = repeated(1);
        let mut model = Seq2Seq::new(Seq2SeqConfig::new(v.len(), DecoderMode::AttentionOnly).with_dims(4, 4)).unwrap();
        let opts = TrainOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(train_epoch(&mut model, &[], &opts, 1.0, &mut rng), Err(TrainError::EmptyCorpus)));
        data[0].tgt_ids = None;
        assert!(matches!(
            train_epoch(&mut model, &data, &opts, 1.0, &mut rng),
            Err(TrainError::MissingTarget { index: 0 })
        ));
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let (v, data) = repeated(6);
        let cfg = Seq2SeqConfig::new(v.len(), DecoderMode::PointerGenerator).with_dims(6, 6).with_seed(4);
        let run = |threads| {
            let mut m = Seq2Seq::new(cfg.clone()).unwrap();
            let opts = TrainOptions { epochs: 2, batch_size: 4, threads, ..TrainOptions::default() };
            train(&mut m, &data, &data[..2], &opts).unwrap();
            m.params().clone()
        };
        assert_eq!(run(1), run(3));
    }
}
