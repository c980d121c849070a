use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{named, parse_list, Resolver};
use super::*;
use crate::align::{read_pharaoh, train_bidirectional, write_pharaoh, AlignModel, AlignerConfig, Alignment, Symmetrization};
use crate::corpus::{
    encode_example, language_id, load_parallel_tsv, load_pos_file, read_token_lines, Cleaner, ParallelExample, Vocabulary,
    DEFAULT_VOCAB_CAP, SEP_TOKEN,
};
use crate::eval::{bleu, corpus_stats, ngram_histogram};
use crate::fixtures::{generate_fixture, Fixture, FixtureConfig};
use crate::generate::{
    assemble_augmented_corpus, assemble_available, equivalence_generate, format_nbest_line, random_switch_generate, read_nbest,
    sample_quota, NbestEntry, Policy, DEFAULT_MAX_OUTPUTS,
};
use crate::lm::{perplexity, train_lm, train_lm_with_lr_search, LmConfig, LmData, LmModel, LmTrainOptions};
use crate::nn::CellKind;
use crate::parallel::env_threads;
use crate::seq2seq::{decode_nbest, evaluate_nll, train, DecoderMode, Seq2Seq, Seq2SeqConfig, TrainOptions};
use crate::tensor::{load_checkpoint, save_checkpoint};

pub(super) fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::FixtureGen(a) => fixture_gen(a),
        Command::Align(a) => align(a),
        Command::EcGenerate(a) => ec_generate(a),
        Command::RandomGenerate(a) => random_generate(a),
        Command::TrainGen(a) => train_gen(a),
        Command::DecodeNbest(a) => decode(a),
        Command::Assemble(a) => assemble(a),
        Command::TrainLm(a) => train_language_model(a),
        Command::EvalPpl(a) => eval_ppl(a),
        Command::EvalBleu(a) => eval_bleu(a),
        Command::Stats(a) => stats(a),
    }
}

/// Resolved run context: settings, seed and the files written so far.
struct Run {
    name: &'static str,
    r: Resolver,
    seed: u64,
    threads: usize,
    out: PathBuf,
    written: Vec<String>,
}

impl Run {
    fn start(name: &'static str, common: Common) -> Result<Self, CliError> {
        let mut r = Resolver::new(common.config.as_deref())?;
        let seed = r.get("seed", common.seed, 0u64)?;
        let out = r.out_dir(common.out)?;
        Ok(Self {
            name,
            r,
            seed,
            threads: env_threads(),
            out,
            written: Vec::new(),
        })
    }

    fn path(&mut self, file: &str) -> PathBuf {
        if !self.written.iter().any(|w| w == file) {
            self.written.push(file.to_string());
        }
        self.out.join(file)
    }

    fn write(&mut self, file: &str, body: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(file);
        std::fs::write(&p, body).map_err(|e| CliError::io(format!("{}: {e}", p.display())))
    }

    /// Appends this run's manifest line.
    fn finish(self) -> Result<(), CliError> {
        let digest = |p: &Path| -> Result<serde_json::Value, CliError> {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
            Ok(json!({ "sha256": hex(&Sha256::digest(&bytes)), "bytes": bytes.len() }))
        };
        let mut inputs = Vec::new();
        for p in &self.r.inputs {
            let mut d = digest(p)?;
            d["path"] = json!(p.display().to_string());
            inputs.push(d);
        }
        let mut outputs = Vec::new();
        for f in &self.written {
            let mut d = digest(&self.out.join(f))?;
            d["file"] = json!(f);
            outputs.push(d);
        }
        let record = json!({
            "tool": "csforge",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.name,
            "seed": self.seed,
            "threads": self.threads,
            "config": self.r.resolved,
            "inputs": inputs,
            "outputs": outputs,
        });
        let path = self.out.join("manifest.jsonl");
        let mut line = serde_json::to_string(&record).map_err(|e| CliError::other(e.to_string()))?;
        line.push('\n');
        use std::io::Write;
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_choice<T: std::str::FromStr<Err = String>>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse().map_err(|e: String| CliError::usage(format!("--{key}: {e}")))
}

fn check_name(name: &str) -> Result<(), CliError> {
    if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(CliError::usage(format!("`{name}` is not a usable output name")));
    }
    Ok(())
}

fn load_pairs(path: &Path) -> Result<Vec<ParallelExample>, CliError> {
    Ok(load_parallel_tsv(path, &Cleaner::default())?)
}

fn load_alignments(path: &Path, pairs: &[ParallelExample]) -> Result<Vec<Alignment>, CliError> {
    let aligns = read_pharaoh(path)?;
    if aligns.len() != pairs.len() {
        return Err(CliError::parse(format!(
            "{}: {} alignment lines for {} pairs",
            path.display(),
            aligns.len(),
            pairs.len()
        )));
    }
    for (i, (a, p)) in aligns.iter().zip(pairs).enumerate() {
        if !a.within(p.l1.len(), p.l2.len()) {
            return Err(CliError::parse(format!("{}: line {}: link out of range", path.display(), i + 1)));
        }
    }
    Ok(aligns)
}

/// Writes `<stem>.nbest`, `<stem>.txt` and `<stem>.provenance.tsv`.
fn write_generated(run: &mut Run, stem: &str, method: &str, entries: &[NbestEntry]) -> Result<(), CliError> {
    let nbest: String = entries.iter().map(|e| format_nbest_line(e) + "\n").collect();
    let text: String = entries.iter().map(|e| e.tokens.join(" ") + "\n").collect();
    let prov: String = entries
        .iter()
        .enumerate()
        .map(|(k, e)| format!("{}\t{}\t{method}\t{}\n", k + 1, e.example, e.rank))
        .collect();
    run.write(&format!("{stem}.nbest"), nbest)?;
    run.write(&format!("{stem}.txt"), text)?;
    run.write(&format!("{stem}.provenance.tsv"), prov)
}

fn fixture_gen(a: FixtureGenArgs) -> Result<(), CliError> {
    let mut run = Run::start("fixture-gen", a.common)?;
    let d = FixtureConfig::default();
    let r = &mut run.r;
    let size = r.get("size", a.size, d.size)?;
    let dev = r.get("dev", a.dev, size / 10)?;
    let test = r.get("test", a.test, size / 10)?;
    let cfg = FixtureConfig {
        seed: run.seed,
        size,
        switch_scale: r.get("switch-scale", a.switch_scale, d.switch_scale)?,
        nouns: r.get("nouns", a.nouns, d.nouns)?,
        verbs: r.get("verbs", a.verbs, d.verbs)?,
        adjectives: r.get("adjectives", a.adjectives, d.adjectives)?,
        adverbs: r.get("adverbs", a.adverbs, d.adverbs)?,
        zipf: r.get("zipf", a.zipf, d.zipf)?,
    };
    r.finish()?;
    if size == 0 || dev + test >= size {
        return Err(CliError::usage("need size ≥ 1 and dev + test < size"));
    }
    if !(cfg.switch_scale >= 0.0) {
        return Err(CliError::usage("--switch-scale must be non-negative"));
    }
    let fixture = generate_fixture(cfg);
    let n_train = size - dev - test;
    let splits = [("train", 0..n_train), ("dev", n_train..n_train + dev), ("test", n_train + dev..size)];
    for (split, range) in splits {
        let part = Fixture {
            grammar: fixture.grammar.clone(),
            examples: fixture.examples[range].to_vec(),
        };
        for (file, body) in part.files() {
            if file != "lexicon.tsv" {
                run.write(&format!("{split}.{file}"), body)?;
            }
        }
    }
    let lexicon = fixture.files().into_iter().find(|f| f.0 == "lexicon.tsv").map(|f| f.1).unwrap_or_default();
    run.write("lexicon.tsv", lexicon)?;
    println!(
        "fixture: {n_train} train / {dev} dev / {test} test pairs, {} lexicon entries -> {}",
        fixture.grammar.lexicon.len(),
        run.out.display()
    );
    run.finish()
}

fn align(a: AlignArgs) -> Result<(), CliError> {
    let mut run = Run::start("align", a.common)?;
    let r = &mut run.r;
    let input = r.input("input", a.input)?;
    let model: AlignModel = parse_choice("model", &r.get("model", a.model, "diagonal".to_string())?)?;
    let iterations = r.get("iterations", a.iterations, 5usize)?;
    let method: Symmetrization = parse_choice("symmetrize", &r.get("symmetrize", a.symmetrize, "intersection".to_string())?)?;
    let grid: Vec<f64> = parse_list("lambda-grid", &r.get("lambda-grid", a.lambda_grid, "2,4,6,8".to_string())?)?;
    r.finish()?;
    if iterations == 0 || grid.is_empty() {
        return Err(CliError::usage("need --iterations ≥ 1 and a non-empty --lambda-grid"));
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = load_pairs(&input)?.into_iter().map(|p| (p.l1, p.l2)).collect();
    let cfg = AlignerConfig {
        iterations,
        model,
        lambda_grid: grid,
        threads: run.threads,
    };
    let bi = train_bidirectional(&pairs, &cfg)?;
    let links: Vec<Alignment> = pairs.iter().map(|(l1, l2)| bi.align(l1, l2, method)).collect();
    write_pharaoh(run.path("alignments.align"), &links)?;
    bi.forward.save(run.path("forward.ttable"))?;
    bi.reverse.save(run.path("reverse.ttable"))?;
    let mut log = String::from("direction\titeration\tlog_likelihood\n");
    for (dir, al) in [("forward", &bi.forward), ("reverse", &bi.reverse)] {
        for (k, ll) in al.log_likelihoods.iter().enumerate() {
            log.push_str(&format!("{dir}\t{k}\t{ll:.6}\n"));
        }
    }
    run.write("align.log.tsv", log)?;
    let total: usize = links.iter().map(Alignment::len).sum();
    println!(
        "aligned {} pairs, {total} links; final log-likelihood forward {:.3}, reverse {:.3}",
        pairs.len(),
        bi.forward.log_likelihoods.last().copied().unwrap_or(0.0),
        bi.reverse.log_likelihoods.last().copied().unwrap_or(0.0)
    );
    run.finish()
}

fn ec_generate(a: EcGenerateArgs) -> Result<(), CliError> {
    let mut run = Run::start("ec-generate", a.common)?;
    let r = &mut run.r;
    let input = r.input("input", a.input)?;
    let align_path = r.input("alignments", a.alignments)?;
    let max_outputs = r.get("max-outputs", a.max_outputs, DEFAULT_MAX_OUTPUTS)?;
    let quota: Option<usize> = r.opt("quota", a.quota)?;
    let frame = r.get("frame", a.frame, "l1".to_string())?;
    r.finish()?;
    let swap = match frame.as_str() {
        "l1" => false,
        "l2" => true,
        other => return Err(CliError::usage(format!("--frame: expected l1 or l2, got `{other}`"))),
    };
    let pairs = load_pairs(&input)?;
    let aligns = load_alignments(&align_path, &pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut entries = Vec::new();
    for (i, (p, al)) in pairs.iter().zip(&aligns).enumerate() {
        let cands = if swap {
            let flipped = ParallelExample::new(p.l2.clone(), p.l1.clone(), None);
            equivalence_generate(&flipped, &al.transpose(), max_outputs)
        } else {
            equivalence_generate(p, al, max_outputs)
        };
        let cands = match quota {
            Some(q) => sample_quota(&cands, q, &mut rng),
            None => cands,
        };
        entries.extend(cands.into_iter().enumerate().map(|(k, c)| NbestEntry {
            example: i,
            rank: k + 1,
            log_prob: 0.0,
            tokens: c.tokens,
        }));
    }
    write_generated(&mut run, "ec", "ec", &entries)?;
    println!("equivalence constraint: {} candidates from {} pairs", entries.len(), pairs.len());
    run.finish()
}

fn random_generate(a: RandomGenerateArgs) -> Result<(), CliError> {
    let mut run = Run::start("random-generate", a.common)?;
    let r = &mut run.r;
    let input = r.input("input", a.input)?;
    let align_path = r.input("alignments", a.alignments)?;
    let count = r.get("count", a.count, 3usize)?;
    r.finish()?;
    if count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let pairs = load_pairs(&input)?;
    let aligns = load_alignments(&align_path, &pairs)?;
    let mut entries = Vec::new();
    for (i, (p, al)) in pairs.iter().zip(&aligns).enumerate() {
        let seed = run.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let cands = random_switch_generate(p, al, count, seed);
        entries.extend(cands.into_iter().enumerate().map(|(k, c)| NbestEntry {
            example: i,
            rank: k + 1,
            log_prob: 0.0,
            tokens: c.tokens,
        }));
    }
    write_generated(&mut run, "random", "random", &entries)?;
    println!("random switching: {} candidates from {} pairs", entries.len(), pairs.len());
    run.finish()
}

fn train_gen(a: TrainGenArgs) -> Result<(), CliError> {
    let mut run = Run::start("train-gen", a.common)?;
    let d = TrainOptions::default();
    let r = &mut run.r;
    let train_path = r.input("train", a.train)?;
    let dev_path = r.input_opt("dev", a.dev)?;
    let mode = match r.get("mode", a.mode, "pointer-generator".to_string())?.as_str() {
        "pointer-generator" => DecoderMode::PointerGenerator,
        "attention" | "attention-only" => DecoderMode::AttentionOnly,
        other => return Err(CliError::usage(format!("--mode: unknown mode `{other}`"))),
    };
    let embed = r.get("embed-dim", a.embed_dim, 500usize)?;
    let hidden = r.get("hidden-dim", a.hidden_dim, 500usize)?;
    let opts = TrainOptions {
        epochs: r.get("epochs", a.epochs, d.epochs)?,
        batch_size: r.get("batch-size", a.batch_size, d.batch_size)?,
        lr: r.get("lr", a.lr, d.lr)?,
        lr_decay: r.get("lr-decay", a.lr_decay, d.lr_decay)?,
        clip_norm: r.get("clip", a.clip, d.clip_norm)?,
        seed: run.seed,
        threads: run.threads,
    };
    let cap = r.get("vocab-cap", a.vocab_cap, DEFAULT_VOCAB_CAP)?;
    r.finish()?;
    if opts.epochs == 0 || opts.batch_size == 0 || embed == 0 || hidden == 0 {
        return Err(CliError::usage("epochs, batch size and dimensions must be positive"));
    }
    let train_pairs = load_pairs(&train_path)?;
    let dev_pairs = dev_path.as_deref().map(load_pairs).transpose()?.unwrap_or_default();
    let corpus = train_pairs
        .iter()
        .flat_map(|p| [Some(&p.l1), Some(&p.l2), p.cs.as_ref()])
        .flatten();
    let vocab = Vocabulary::build_with_reserved(corpus, cap, &[SEP_TOKEN]);
    let enc = |ps: &[ParallelExample]| ps.iter().map(|p| encode_example(p, &vocab)).collect::<Vec<_>>();
    let (train_set, dev_set) = (enc(&train_pairs), enc(&dev_pairs));
    let cfg = Seq2SeqConfig::new(vocab.len(), mode).with_dims(embed, hidden).with_seed(run.seed);
    let mut model = Seq2Seq::new(cfg)?;
    let report = train(&mut model, &train_set, &dev_set, &opts)?;
    save_checkpoint(model.params(), run.path("generator.csfg"))?;
    vocab.save(run.path("generator.vocab"))?;
    let mut log = String::from("epoch\tlr\ttrain_nll\tdev_nll\n");
    for e in &report.epochs {
        let dev = e.dev_nll.map_or_else(|| "-".to_string(), |d| format!("{d:.6}"));
        log.push_str(&format!("{}\t{}\t{:.6}\t{dev}\n", e.epoch, e.lr, e.train_nll));
    }
    run.write("train_gen.log.tsv", log)?;
    match report.best_dev_nll {
        Some(nll) => {
            let ppl = evaluate_nll(&model, &dev_set, run.threads)?.perplexity();
            println!(
                "{mode:?}: vocab {}, best epoch {}, dev NLL {nll:.4}, dev PPL {ppl:.4}",
                vocab.len(),
                report.best_epoch
            )
        }
        None => println!("{mode:?}: vocab {}, trained {} epochs", vocab.len(), opts.epochs),
    }
    run.finish()
}

fn decode(a: DecodeNbestArgs) -> Result<(), CliError> {
    let mut run = Run::start("decode-nbest", a.common)?;
    let r = &mut run.r;
    let dir = r.dir("model", a.model)?;
    let (ckpt, vocab_path) = (dir.join("generator.csfg"), dir.join("generator.vocab"));
    r.check_input(&ckpt)?;
    r.check_input(&vocab_path)?;
    let input = r.input("input", a.input)?;
    let beam = r.get("beam", a.beam, 5usize)?;
    let n_best = r.get("nbest", a.nbest, 3usize)?;
    let max_len: Option<usize> = r.opt("max-len", a.max_len)?;
    let name = r.get("name", a.name, "pg".to_string())?;
    r.finish()?;
    check_name(&name)?;
    if beam == 0 || n_best == 0 || n_best > beam {
        return Err(CliError::usage("need 1 ≤ --nbest ≤ --beam"));
    }
    let mut model = Seq2Seq::from_params(load_checkpoint(&ckpt)?)?;
    model.config.max_decode_len = max_len;
    let vocab = Vocabulary::load(&vocab_path)?;
    if vocab.len() != model.vocab_size() {
        return Err(CliError::parse(format!(
            "vocabulary has {} entries, checkpoint expects {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    let pairs = load_pairs(&input)?;
    let encoded: Vec<_> = pairs.iter().map(|p| encode_example(p, &vocab)).collect();
    let entries = decode_nbest(&model, &encoded, &vocab, beam, n_best, run.threads)?;
    write_generated(&mut run, &name, &name, &entries)?;
    let best: String = entries
        .iter()
        .filter(|e| e.rank == 1)
        .map(|e| e.tokens.join(" ") + "\n")
        .collect();
    run.write(&format!("{name}.1best.txt"), best)?;
    println!("decoded {} inputs, beam {beam}, {n_best}-best: {} hypotheses", pairs.len(), entries.len());
    run.finish()
}

fn non_empty(lines: Vec<Vec<String>>) -> Vec<Vec<String>> {
    lines.into_iter().filter(|l| !l.is_empty()).collect()
}

fn assemble(a: AssembleArgs) -> Result<(), CliError> {
    let mut run = Run::start("assemble", a.common)?;
    let r = &mut run.r;
    let real_path = r.input("real", a.real)?;
    let specs = r.list("generated", a.generated)?;
    let mut sets = Vec::new();
    for s in &specs {
        let (method, path) = named(s);
        r.check_input(&path)?;
        sets.push((method, path));
    }
    let policy: Policy = parse_choice("policy", &r.get("policy", a.policy, "3best".to_string())?)?;
    let allow_short = r.get("allow-short", a.allow_short, false)?;
    r.finish()?;
    let real = non_empty(read_token_lines(&real_path)?);
    let mut generated = Vec::new();
    for (method, path) in sets {
        let entries = read_nbest(&path).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        generated.push((method, entries));
    }
    let corpus = if allow_short {
        assemble_available(&real, &generated, policy)
    } else {
        assemble_augmented_corpus(&real, &generated, policy).map_err(|e| CliError::other(e.to_string()))?
    };
    let text: String = corpus.utterances.iter().map(|u| u.join(" ") + "\n").collect();
    run.write("augmented.txt", text)?;
    run.write("augmented.provenance.tsv", corpus.provenance_tsv())?;
    println!(
        "assembled {} real + {} generated = {} utterances",
        corpus.real,
        corpus.generated,
        corpus.utterances.len()
    );
    run.finish()
}

fn parse_cell(raw: &str) -> Result<CellKind, CliError> {
    match raw {
        "lstm" => Ok(CellKind::Lstm),
        "simple-rnn" | "rnn" => Ok(CellKind::SimpleRnn),
        other => Err(CliError::usage(format!("--cell: unknown cell `{other}`"))),
    }
}

/// Word ids plus optional POS ids, with empty utterances dropped.
fn lm_data(
    lines: &[Vec<String>],
    tags: Option<&[Vec<String>]>,
    vocab: &Vocabulary,
    pos_vocab: Option<&Vocabulary>,
) -> Result<LmData, CliError> {
    let keep: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].is_empty()).collect();
    let words = keep.iter().map(|&i| vocab.encode(&lines[i])).collect();
    let pos = match (tags, pos_vocab) {
        (Some(t), Some(pv)) => Some(keep.iter().map(|&i| pv.encode(&t[i])).collect()),
        _ => None,
    };
    Ok(LmData::new(words, pos)?)
}

fn train_language_model(a: TrainLmArgs) -> Result<(), CliError> {
    let mut run = Run::start("train-lm", a.common)?;
    let d = LmTrainOptions::default();
    let r = &mut run.r;
    let train_path = r.input("train", a.train)?;
    let dev_path = r.input_opt("dev", a.dev)?;
    let train_pos = r.input_opt("train-pos", a.train_pos)?;
    let dev_pos = r.input_opt("dev-pos", a.dev_pos)?;
    let extra: Vec<String> = a.vocab_corpus.iter().map(|p| p.display().to_string()).collect();
    let mut extra_paths = Vec::new();
    for s in r.list("vocab-corpus", extra)? {
        let p = PathBuf::from(s);
        r.check_input(&p)?;
        extra_paths.push(p);
    }
    let cap = r.get("vocab-cap", a.vocab_cap, DEFAULT_VOCAB_CAP)?;
    let cell = parse_cell(&r.get("cell", a.cell, "lstm".to_string())?)?;
    let layers = r.get("layers", a.layers, 2usize)?;
    let hidden = r.get("hidden", a.hidden, 500usize)?;
    let pos_dim = r.get("pos-dim", a.pos_dim, 64usize)?;
    let dropout = r.get("dropout", a.dropout, 0.3f64)?;
    let rates: Vec<f64> = parse_list("lr", &r.get("lr", a.lr, "10,20".to_string())?)?;
    let opts = LmTrainOptions {
        epochs: r.get("epochs", a.epochs, d.epochs)?,
        bptt: r.get("bptt", a.bptt, d.bptt)?,
        batch_size: r.get("batch-size", a.batch_size, d.batch_size)?,
        lr: rates.first().copied().unwrap_or(d.lr),
        lr_decay: r.get("lr-decay", a.lr_decay, d.lr_decay)?,
        clip_norm: r.get("clip", a.clip, d.clip_norm)?,
        seed: run.seed,
        threads: run.threads,
    };
    r.finish()?;
    if rates.is_empty() || layers == 0 || hidden == 0 || opts.epochs == 0 || opts.bptt == 0 || opts.batch_size == 0 {
        return Err(CliError::usage("rates, layers, hidden, epochs, bptt and batch size must be non-empty/positive"));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(CliError::usage("--dropout must be in [0, 1)"));
    }
    if dev_pos.is_some() && train_pos.is_none() {
        return Err(CliError::usage("--dev-pos requires --train-pos"));
    }
    if train_pos.is_some() && dev_path.is_some() && dev_pos.is_none() {
        return Err(CliError::usage("--train-pos with --dev requires --dev-pos"));
    }
    if train_pos.is_some() && pos_dim == 0 {
        return Err(CliError::usage("--pos-dim must be positive with --train-pos"));
    }

    let train_lines = read_token_lines(&train_path)?;
    let train_tags = train_pos.as_deref().map(|p| load_pos_file(p, &train_lines)).transpose()?;
    let mut vocab_src: Vec<Vec<String>> = train_lines.clone();
    for p in &extra_paths {
        vocab_src.extend(read_token_lines(p)?);
    }
    let vocab = Vocabulary::build(&vocab_src, cap);
    let pos_vocab = train_tags.as_ref().map(|t| Vocabulary::build(t, usize::MAX));
    let train_data = lm_data(&train_lines, train_tags.as_deref(), &vocab, pos_vocab.as_ref())?;
    let dev_data = match &dev_path {
        Some(p) => {
            let lines = read_token_lines(p)?;
            let tags = dev_pos.as_deref().map(|t| load_pos_file(t, &lines)).transpose()?;
            Some(lm_data(&lines, tags.as_deref(), &vocab, pos_vocab.as_ref())?)
        }
        None => None,
    };
    let mut cfg = LmConfig {
        cell,
        layers,
        hidden,
        dropout,
        seed: run.seed,
        ..LmConfig::new(vocab.len())
    };
    if let Some(pv) = &pos_vocab {
        cfg = cfg.with_pos(pv.len(), pos_dim);
    }
    let (model, report) = match &dev_data {
        Some(dev) => train_lm_with_lr_search(cfg, &train_data, dev, &opts, &rates)?,
        None => train_lm(cfg, &train_data, None, &opts)?,
    };
    save_checkpoint(model.params(), run.path("lm.csfg"))?;
    vocab.save(run.path("lm.vocab"))?;
    if let Some(pv) = &pos_vocab {
        pv.save(run.path("lm.pos.vocab"))?;
    }
    run.write("train_lm.log.tsv", format!("epoch\tlr\ttrain_ppl\tdev_ppl\n{}", report.log_lines()))?;
    match report.best_dev_ppl {
        Some(p) => println!(
            "language model: vocab {}, lr {}, best epoch {}, dev PPL {p:.4}",
            vocab.len(),
            report.lr_init,
            report.best_epoch
        ),
        None => println!("language model: vocab {}, trained {} epochs", vocab.len(), opts.epochs),
    }
    run.finish()
}

fn eval_ppl(a: EvalPplArgs) -> Result<(), CliError> {
    let mut run = Run::start("eval-ppl", a.common)?;
    let r = &mut run.r;
    let mut models = Vec::new();
    for spec in r.list("model", a.model)? {
        let (name, dir) = named(&spec);
        check_name(&name)?;
        if !dir.is_dir() {
            return Err(CliError::io(format!("{}: no such directory", dir.display())));
        }
        r.check_input(&dir.join("lm.csfg"))?;
        r.check_input(&dir.join("lm.vocab"))?;
        let pos_vocab = dir.join("lm.pos.vocab");
        if pos_vocab.is_file() {
            r.check_input(&pos_vocab)?;
        }
        models.push((name, dir));
    }
    if models.is_empty() {
        return Err(CliError::usage("missing required --model"));
    }
    let test = r.input("test", a.test)?;
    let test_pos = r.input_opt("test-pos", a.test_pos)?;
    r.finish()?;
    let lines = read_token_lines(&test)?;
    let tags = test_pos.as_deref().map(|p| load_pos_file(p, &lines)).transpose()?;
    let mut table = String::from("model\ttokens\tperplexity\n");
    for (name, dir) in &models {
        let model = LmModel::from_params(load_checkpoint(dir.join("lm.csfg"))?)?;
        let vocab = Vocabulary::load(dir.join("lm.vocab"))?;
        let pos_vocab = if model.config.has_pos() {
            if tags.is_none() {
                return Err(CliError::usage(format!("model `{name}` has a POS channel; pass --test-pos")));
            }
            Some(Vocabulary::load(dir.join("lm.pos.vocab"))?)
        } else {
            None
        };
        let data = lm_data(&lines, tags.as_deref(), &vocab, pos_vocab.as_ref())?;
        let rep = perplexity(&model, &data, run.threads)?;
        table.push_str(&format!("{name}\t{}\t{:.4}\n", rep.tokens, rep.perplexity()));
    }
    run.write("ppl.tsv", &table)?;
    print!("{table}");
    run.finish()
}

fn eval_bleu(a: EvalBleuArgs) -> Result<(), CliError> {
    let mut run = Run::start("eval-bleu", a.common)?;
    let r = &mut run.r;
    let hyp = r.input("hyp", a.hyp)?;
    let reference = r.input("reference", a.reference)?;
    r.finish()?;
    let rep = bleu(&read_token_lines(&hyp)?, &read_token_lines(&reference)?)?;
    let p = rep.precisions.map(|x| x * 100.0);
    run.write(
        "bleu.tsv",
        format!(
            "bleu\t{:.4}\np1\t{:.4}\np2\t{:.4}\np3\t{:.4}\np4\t{:.4}\nbrevity_penalty\t{:.6}\nhyp_len\t{}\nref_len\t{}\n",
            rep.score, p[0], p[1], p[2], p[3], rep.brevity_penalty, rep.hyp_len, rep.ref_len
        ),
    )?;
    println!(
        "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, hyp_len={}, ref_len={})",
        rep.score, p[0], p[1], p[2], p[3], rep.brevity_penalty, rep.hyp_len, rep.ref_len
    );
    run.finish()
}

fn stats(a: StatsArgs) -> Result<(), CliError> {
    let mut run = Run::start("stats", a.common)?;
    let r = &mut run.r;
    let mut corpora = Vec::new();
    for spec in r.list("corpus", a.corpus)? {
        let (name, path) = named(&spec);
        check_name(&name)?;
        r.check_input(&path)?;
        corpora.push((name, path));
    }
    if corpora.is_empty() {
        return Err(CliError::usage("missing required --corpus"));
    }
    let max_n = r.get("max-n", a.max_n, 4usize)?;
    r.finish()?;
    if !(1..=4).contains(&max_n) {
        return Err(CliError::usage("--max-n must be in 1..=4"));
    }
    let mut table = String::from("corpus\tutterances\ttokens\tsegments\tswitches\tavg_segment\tavg_switches\n");
    let mut summary = String::from("corpus\tn\ttypes\ttotal\tmean\tmedian\tskewness\n");
    for (name, path) in &corpora {
        let lines = read_token_lines(path)?;
        let s = corpus_stats(&lines, language_id);
        table.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\n",
            s.utterances, s.tokens, s.segments, s.switches, s.avg_segment_length, s.avg_switches
        ));
        for n in 1..=max_n {
            let h = ngram_histogram(&lines, n)?;
            summary.push_str(&format!(
                "{name}\t{n}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
                h.counts.len(),
                h.total,
                h.mean,
                h.median,
                h.skewness
            ));
            run.write(&format!("ngram.{name}.{n}.tsv"), h.to_tsv())?;
        }
    }
    run.write("stats.tsv", &table)?;
    run.write("ngram_summary.tsv", summary)?;
    print!("{table}");
    run.finish()
}
