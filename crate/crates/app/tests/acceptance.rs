//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the criteria execute sequentially
//! (criterion 8 times each training stage) and every line is printed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::{Tensor, Var};
use codesep::config::{Preset, TrainConfig};
use codesep::data::load_mixtures;
use codesep::eval::{evaluate, Backend};
use codesep::models::{atsp_from, btd_from, codec_from, separator_from};
use codesep::pipeline::{plan_stages, Jsac};
use codesep::train::{train, TrainReport};
use codesep_core::bitstream::{bitrate_of, pack, unpack, BitstreamHeader, Rational, HEADER_LEN};
use codesep_core::rvq::{Codebook, ResidualQuantizer, TokenFrame};
use codesep_core::signal::{write_wav, Mdct, Waveform};
use codesep_core::synth::{build_datasets, CorpusConfig, Split};
use codesep_nn::atsp::{sub_predictor_input, tf_ce_loss, AtspConfig, AtspModel};
use codesep_nn::btd::{pi_ce_from_logits, pi_ce_loss, BaseDistributions, BtdConfig, BtdModel, PermutationScope};
use codesep_nn::checkpoint::Stage;
use codesep_nn::params::{device, tensor_from, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut notes = Vec::new();
    for (rate, frame) in [(16_000u32, 1280usize), (8000, 160)] {
        let start = Instant::now();
        let t = Mdct::new(frame).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let s: Vec<f64> = (0..rate as usize).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = Waveform::new(s.clone(), rate).unwrap();
            let back = t.inverse(&t.forward(&w)).map_err(|e| e.to_string())?;
            let hop = frame / 2;
            for i in hop..s.len() - hop {
                worst = worst.max((back.samples()[i] - s[i]).abs());
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure(worst < 1e-6, || format!("{rate} Hz/{frame}: max interior error {worst:e}"))?;
        ensure(secs < 10.0, || format!("{rate} Hz/{frame}: 100 signals took {secs:.2} s"))?;
        notes.push(format!("{rate} Hz/{frame}: max interior error {worst:.2e} in {secs:.2} s"));
    }
    Ok(format!("100 signals each; {}", notes.join("; ")))
}

// ---------------------------------------------------------------- 2

fn brute_rvq(books: &[Vec<Vec<f64>>], z: &[f64]) -> (Vec<u32>, Vec<f64>) {
    let mut r = z.to_vec();
    let mut q = vec![0.0; z.len()];
    let mut toks = Vec::new();
    for book in books {
        let d = |w: &Vec<f64>| -> f64 { w.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum() };
        let mut best = 0;
        for (m, w) in book.iter().enumerate() {
            if d(w) < d(&book[best]) {
                best = m;
            }
        }
        for k in 0..r.len() {
            r[k] -= book[best][k];
            q[k] += book[best][k];
        }
        toks.push(best as u32 + 1);
    }
    (toks, q)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..10_000 {
        let (n, m, k) = (rng.random_range(2..6), rng.random_range(2..17), rng.random_range(1..9));
        let books: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| (0..m).map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
            .collect();
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let q = ResidualQuantizer::new(books.iter().map(|b| Codebook::from_rows(b).unwrap()).collect()).unwrap();
        let got = q.quantize(&z).map_err(|e| e.to_string())?;
        let (toks, quantized) = brute_rvq(&books, &z);
        ensure(got.tokens.0 == toks, || format!("case {case}: tokens {:?} vs brute force {toks:?}", got.tokens.0))?;
        ensure(got.quantized.iter().zip(&quantized).all(|(a, b)| (a - b).abs() < 1e-12), || {
            format!("case {case}: quantized vector differs from brute force")
        })?;
    }
    let q = ResidualQuantizer::new(vec![
        Codebook::from_rows(&[vec![-1.0], vec![1.0]]).unwrap(),
        Codebook::from_rows(&[vec![-0.25], vec![0.25]]).unwrap(),
    ])
    .unwrap();
    let r = q.quantize(&[0.6]).unwrap();
    let books = vec![vec![vec![-1.0], vec![1.0]], vec![vec![-0.25], vec![0.25]]];
    let (toks, quantized) = brute_rvq(&books, &[0.6]);
    ensure(r.tokens == TokenFrame(vec![2, 1]) && toks == vec![2, 1], || format!("K=1 tokens {:?}", r.tokens.0))?;
    ensure(r.quantized == vec![0.75] && quantized == vec![0.75], || format!("K=1 quantized {:?}", r.quantized))?;
    Ok("1e4 random instances match brute-force nearest neighbour; K=1 example gives (2,1), 0.75".into())
}

// ---------------------------------------------------------------- 3

fn random_dist<R: Rng>(rng: &mut R, m: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn softmax_rows(logits: &[f64], m: usize) -> Vec<f64> {
    logits
        .chunks(m)
        .flat_map(|row| {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(move |x| x / s)
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let (t, m) = (rng.random_range(1..12), rng.random_range(2..20));
        let p1: Vec<f64> = (0..t).flat_map(|_| random_dist(&mut rng, m)).collect();
        let p2: Vec<f64> = (0..t).flat_map(|_| random_dist(&mut rng, m)).collect();
        let a: Vec<u32> = (0..t).map(|_| rng.random_range(1..=m as u32)).collect();
        let b: Vec<u32> = (0..t).map(|_| rng.random_range(1..=m as u32)).collect();
        let d = BaseDistributions::new(p1.clone(), p2.clone(), t, m).unwrap();
        let got = pi_ce_loss(&d, &a, &b, PermutationScope::Frame).map_err(|e| e.to_string())?;
        let mut brute = 0.0;
        for f in 0..t {
            let perms = [[a[f], b[f]], [b[f], a[f]]];
            let costs: Vec<f64> = perms
                .iter()
                .map(|p| -(p1[f * m + p[0] as usize - 1].ln() + p2[f * m + p[1] as usize - 1].ln()))
                .collect();
            brute += costs[0].min(costs[1]);
        }
        brute /= t as f64;
        ensure((got - brute).abs() < 1e-9, || format!("case {case}: {got} vs brute force {brute}"))?;
        let swapped = BaseDistributions::new(p2, p1, t, m).unwrap();
        ensure(pi_ce_loss(&swapped, &a, &b, PermutationScope::Frame).unwrap() == got, || {
            format!("case {case}: swapping distributions changed the loss")
        })?;
        ensure(pi_ce_loss(&d, &b, &a, PermutationScope::Frame).unwrap() == got, || {
            format!("case {case}: swapping targets changed the loss")
        })?;
        let u = BaseDistributions::new(vec![1.0 / m as f64; t * m], vec![1.0 / m as f64; t * m], t, m).unwrap();
        let uv = pi_ce_loss(&u, &a, &b, PermutationScope::Frame).unwrap();
        let expected = 2.0 * (m as f64).ln();
        ensure((uv - expected).abs() <= 4.0 * f64::EPSILON * expected, || {
            format!("case {case}: uniform loss {uv} vs 2 ln M = {expected}")
        })?;
    }

    // Autograd through the logits path against central differences of the
    // probability-space loss.
    let mut worst: f64 = 0.0;
    for scope in [PermutationScope::Frame, PermutationScope::Utterance] {
        for _ in 0..5 {
            let (t, m) = (6, 5);
            let l: Vec<f64> = (0..2 * t * m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a: Vec<u32> = (0..t).map(|_| rng.random_range(0..m as u32)).collect();
            let b: Vec<u32> = (0..t).map(|_| rng.random_range(0..m as u32)).collect();
            let f = |l: &[f64]| -> f64 {
                let d = BaseDistributions::new(softmax_rows(&l[..t * m], m), softmax_rows(&l[t * m..], m), t, m).unwrap();
                let (a1, b1): (Vec<u32>, Vec<u32>) = (a.iter().map(|x| x + 1).collect(), b.iter().map(|x| x + 1).collect());
                pi_ce_loss(&d, &a1, &b1, scope).unwrap()
            };
            let v1 = Var::from_tensor(&tensor_from(l[..t * m].to_vec(), &[1, t, m]).unwrap()).unwrap();
            let v2 = Var::from_tensor(&tensor_from(l[t * m..].to_vec(), &[1, t, m]).unwrap()).unwrap();
            let ta = Tensor::from_vec(a.clone(), (1, t), &device()).unwrap();
            let tb = Tensor::from_vec(b.clone(), (1, t), &device()).unwrap();
            let loss = pi_ce_from_logits(v1.as_tensor(), v2.as_tensor(), &ta, &tb, scope).unwrap();
            ensure((loss.to_scalar::<f64>().unwrap() - f(&l)).abs() < 1e-9, || "logit and probability losses differ".into())?;
            let g = loss.backward().unwrap();
            let mut grad: Vec<f64> = g.get(v1.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            grad.extend(g.get(v2.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap());
            let eps = 1e-5;
            for i in 0..l.len() {
                let (mut lp, mut lm) = (l.clone(), l.clone());
                lp[i] += eps;
                lm[i] -= eps;
                let fd = (f(&lp) - f(&lm)) / (2.0 * eps);
                let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-3);
                worst = worst.max(err);
            }
        }
    }
    ensure(worst < 1e-3, || format!("gradient relative error {worst:e}"))?;
    let dir = directional_check_btd(&mut rng)?;
    Ok(format!(
        "1e3 instances equal brute force; symmetry exact; uniform = 2 ln M; logit gradient rel err {worst:.1e}, through BTD {dir:.1e}"
    ))
}

/// Directional derivative of a model loss over all parameters versus a
/// central difference along the same direction.
fn directional_check(params: &ParamStore, rng: &mut ChaCha8Rng, loss: &dyn Fn() -> Tensor) -> Result<f64, String> {
    let base = params.export().unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let dir: Vec<Vec<f64>> = base.iter().map(|(_, _, v)| v.iter().map(|_| normal.sample(rng)).collect()).collect();
    let l = loss();
    let grads = l.backward().unwrap();
    let mut analytic = 0.0;
    for ((name, _, _), d) in base.iter().zip(&dir) {
        let var = params.get(name).unwrap();
        if let Some(g) = grads.get(var.as_tensor()) {
            let g: Vec<f64> = g.flatten_all().unwrap().to_vec1().unwrap();
            analytic += g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let eps = 1e-6;
    let shifted = |s: f64| -> f64 {
        let moved: Vec<_> = base
            .iter()
            .zip(&dir)
            .map(|((n, sh, v), d)| (n.clone(), sh.clone(), v.iter().zip(d).map(|(x, y)| x + s * y).collect()))
            .collect();
        params.import(&moved).unwrap();
        loss().to_scalar::<f64>().unwrap()
    };
    let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
    params.import(&base).unwrap();
    let err = rel_err(analytic, fd);
    ensure(err < 1e-3, || format!("directional derivative {analytic} vs finite difference {fd}"))?;
    Ok(err)
}

fn tiny_btd() -> BtdConfig {
    BtdConfig {
        num_mels: 8,
        mel_shift: 10,
        downsample_layers: 3,
        d_model: 8,
        heads: 2,
        intra_depth: 1,
        inter_depth: 1,
        ff_mult: 2,
        codebook_size: 5,
        ..BtdConfig::desk()
    }
}

fn directional_check_btd(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let model = BtdModel::new(tiny_btd(), 7).unwrap();
    let (t, fpt) = (4, model.config().mel_frames_per_token());
    let mel = tensor_from((0..t * fpt * 8).map(|_| rng.random_range(-3.0..0.0)).collect(), &[1, t * fpt, 8]).unwrap();
    let a = Tensor::from_vec((0..t as u32).map(|i| i % 5).collect::<Vec<_>>(), (1, t), &device()).unwrap();
    let b = Tensor::from_vec((0..t as u32).map(|i| (i + 2) % 5).collect::<Vec<_>>(), (1, t), &device()).unwrap();
    directional_check(model.params(), rng, &|| model.training_loss(&mel, &a, &b).unwrap())
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let (n_stages, m, k) = (rng.random_range(2..6), rng.random_range(2..12), rng.random_range(1..9));
        let books: Vec<Vec<Vec<f64>>> = (0..n_stages)
            .map(|_| (0..m).map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect()).collect())
            .collect();
        let q = ResidualQuantizer::new(books.iter().map(|b| Codebook::from_rows(b).unwrap()).collect()).unwrap();
        let n = rng.random_range(1..n_stages);
        let base = rng.random_range(1..=m as u32);
        let prefix: Vec<u32> = (0..n - 1).map(|_| rng.random_range(1..=m as u32)).collect();
        let got = sub_predictor_input(base, &prefix, &q, n).map_err(|e| e.to_string())?;
        let mut expected = books[0][base as usize - 1].clone();
        for (i, &tok) in prefix.iter().enumerate() {
            for d in 0..k {
                expected[d] += books[i + 1][tok as usize - 1][d];
            }
        }
        ensure(got.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-9), || {
            format!("case {case}: {got:?} vs {expected:?}")
        })?;
        let first = sub_predictor_input(base, &[], &q, 1).unwrap();
        ensure(first.as_slice() == q.codebook(1).lookup(base).unwrap(), || format!("case {case}: n=1 differs from lookup"))?;
    }
    Ok("1e3 instances match independent lookup sums; n=1 equals the base codevector exactly".into())
}

// ---------------------------------------------------------------- 5

fn tiny_atsp() -> AtspConfig {
    AtspConfig {
        latent_dim: 3,
        stages: 4,
        codebook_size: 5,
        d_model: 8,
        lstm_layers: 1,
        conformer_blocks: 1,
        heads: 2,
        ff_mult: 2,
        conv_kernel: 3,
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (n, m, t) = (rng.random_range(2..6), rng.random_range(2..30), rng.random_range(1..20));
        let frames: Vec<TokenFrame> = (0..t).map(|_| TokenFrame((0..n).map(|_| rng.random_range(1..=m as u32)).collect())).collect();
        let uniform = vec![vec![1.0 / m as f64; t * m]; n - 1];
        let u = tf_ce_loss(&uniform, &frames, m).map_err(|e| e.to_string())?;
        let expected = (n - 1) as f64 * (m as f64).ln();
        ensure((u - expected).abs() < 1e-9, || format!("uniform {u} vs (N-1) ln M = {expected}"))?;
        let perfect: Vec<Vec<f64>> = (1..n)
            .map(|s| {
                let mut p = vec![0.0; t * m];
                for (f, fr) in frames.iter().enumerate() {
                    p[f * m + fr.0[s] as usize - 1] = 1.0;
                }
                p
            })
            .collect();
        let p = tf_ce_loss(&perfect, &frames, m).unwrap();
        ensure(p == 0.0, || format!("perfect predictor gives {p}"))?;
    }
    let cfg = tiny_atsp();
    let model = AtspModel::new(cfg.clone(), 11).unwrap();
    let books: Vec<Codebook> = (0..cfg.stages)
        .map(|_| Codebook::new((0..cfg.codebook_size * cfg.latent_dim).map(|_| rng.random_range(-1.0..1.0)).collect(), cfg.codebook_size, cfg.latent_dim).unwrap())
        .collect();
    let q = ResidualQuantizer::new(books).unwrap();
    let (b, t) = (2, 6);
    let toks: Vec<u32> = (0..b * t * cfg.stages).map(|_| rng.random_range(0..cfg.codebook_size as u32)).collect();
    let toks = Tensor::from_vec(toks, (b, t, cfg.stages), &device()).unwrap();
    let err = directional_check(model.params(), &mut rng, &|| model.training_loss(&toks, &q).unwrap())?;
    Ok(format!("uniform = (N-1) ln M within 1e-9, perfect = 0 on 200 cases; gradient rel err {err:.1e}"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..10u64 {
        let model = BtdModel::new(tiny_btd(), seed).unwrap();
        let d = model.config().d_model;
        let n = rng.random_range(400..1200);
        let y = Waveform::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 8000).unwrap();
        let mel = model.analyze(&y).unwrap();
        let v1: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v2: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.set_deltas(&v1, &v1).unwrap();
        let same = model.forward(&mel).unwrap();
        ensure(same.p1 == same.p2, || format!("model {seed}: equal biases give different outputs"))?;
        model.set_deltas(&v1, &v2).unwrap();
        let fwd = model.forward(&mel).unwrap();
        model.set_deltas(&v2, &v1).unwrap();
        let rev = model.forward(&mel).unwrap();
        ensure(fwd.p1 == rev.p2 && fwd.p2 == rev.p1, || format!("model {seed}: swapping biases does not swap outputs"))?;
        ensure(fwd.p1 != fwd.p2, || format!("model {seed}: distinct biases give identical outputs"))?;
    }
    Ok("10 random models: equal biases give identical outputs, swapped biases swap them exactly".into())
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..10_000 {
        let h = BitstreamHeader {
            sample_rate_hz: rng.random_range(1..96_000),
            token_rate: Rational::new(rng.random_range(1..2000), rng.random_range(1..20)).unwrap(),
            num_streams: rng.random_range(1..5),
            codebook_size: rng.random_range(2..5000),
            num_frames: rng.random_range(0..60),
        };
        let tokens: Vec<Vec<u32>> = (0..h.num_streams)
            .map(|_| (0..h.num_frames).map(|_| rng.random_range(1..=h.codebook_size)).collect())
            .collect();
        let bytes = pack(&tokens, h).map_err(|e| e.to_string())?;
        let bits = h.num_frames as usize * h.num_streams as usize * (32 - (h.codebook_size - 1).leading_zeros()) as usize;
        ensure(bytes.len() == HEADER_LEN + bits.div_ceil(8), || format!("case {case}: size {} for {bits} payload bits", bytes.len()))?;
        let back = unpack(&bytes).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back.header == h && back.tokens == tokens, || format!("case {case}: round trip differs"))?;
        for cut in 0..bytes.len() {
            ensure(unpack(&bytes[..cut]).is_err(), || format!("case {case}: truncation to {cut} bytes accepted"))?;
        }
    }
    let r100 = Rational::new(100, 1).unwrap();
    let one = bitrate_of(r100, 1024, 1, 1);
    let fstc = bitrate_of(r100, 1024, 2, 4);
    ensure(one.total_bps == 1000.0, || format!("single stream rate {}", one.total_bps))?;
    ensure(fstc.total_bps == 8000.0, || format!("FSTC rate {}", fstc.total_bps))?;
    Ok("1e4 fuzzed round trips exact, every truncation rejected, size formula holds; 1000 and 8000 bps".into())
}

// ---------------------------------------------------------------- 8 and 9

struct Trained {
    reports: Vec<(Stage, TrainReport, f64)>,
    models: PathBuf,
}

fn stage_config(stage: Stage, data: &Path, models: &Path, short: bool) -> TrainConfig {
    let mut cfg = TrainConfig::preset(stage, Preset::Desk, data, models.join(format!("{stage}.ckpt")));
    if stage != Stage::Codec && stage != Stage::Separator {
        cfg.codec_checkpoint = Some(models.join("codec.ckpt"));
    }
    cfg.log_interval = 0;
    if short {
        cfg.max_steps = 12;
        cfg.batch_size = 4;
        cfg.codec_schedule.warmup_steps = 4;
        cfg.codec_schedule.kmeans_crops = 8;
        cfg.codec_schedule.kmeans_iterations = 5;
        cfg.codec_schedule.dead_code_interval = 4;
        cfg.checkpoint_interval = 6;
    }
    cfg
}

fn train_all(data: &Path, models: &Path, short: bool) -> Result<Trained, String> {
    let mut reports = Vec::new();
    for stage in [Stage::Codec, Stage::Btd, Stage::Atsp, Stage::Separator] {
        let start = Instant::now();
        let report = train(&stage_config(stage, data, models, short)).map_err(|e| format!("{stage}: {e}"))?;
        reports.push((stage, report, start.elapsed().as_secs_f64()));
    }
    Ok(Trained { reports, models: models.to_path_buf() })
}

fn jsac_of(t: &Trained) -> Jsac {
    let ck = |s: Stage| t.reports.iter().find(|r| r.0 == s).map(|r| r.1.checkpoint.clone()).unwrap();
    Jsac::new(codec_from(&ck(Stage::Codec)).unwrap(), btd_from(&ck(Stage::Btd)).unwrap(), atsp_from(&ck(Stage::Atsp)).unwrap())
        .unwrap()
}

fn criterion_8(root: &Path) -> Outcome {
    let data = root.join("data");
    let cfg = CorpusConfig::default();
    let (ds, _) = build_datasets(&data, &cfg).map_err(|e| e.to_string())?;
    let trained = train_all(&data, &root.join("models"), false)?;
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for (stage, r, secs) in &trained.reports {
        let s = &r.summary;
        notes.push(format!("{stage} {:.3}->{:.3} in {:.0}s", s.probe_initial_loss, s.probe_final_loss, secs));
        if !(s.probe_final_loss < s.probe_initial_loss) {
            failures.push(format!("{stage} loss did not decrease"));
        }
        if *secs > 1800.0 {
            failures.push(format!("{stage} took {secs:.0} s"));
        }
    }

    let jsac = jsac_of(&trained);
    let codec = jsac.codec();
    let test = load_mixtures(&data, Split::Test, codec.config().sample_rate_hz).map_err(|e| e.to_string())?;
    let sep_ck = &trained.reports.iter().find(|r| r.0 == Stage::Separator).unwrap().1.checkpoint;
    let separator = separator_from(sep_ck).unwrap();
    let rate = jsac.bitrate().unwrap().total_bps;
    let (stages, fcts_rate) = plan_stages(rate, codec, 1).map_err(|e| e.to_string())?;
    let j = evaluate(&Backend::Jsac(&jsac), &test).map_err(|e| e.to_string())?;
    let f = evaluate(&Backend::Fcts { codec, stages, separator: &separator }, &test).map_err(|e| e.to_string())?;
    let (ja, fa) = (&j.aggregate, &f.aggregate);
    if ja.si_sdr_improvement_db < 3.0 {
        failures.push(format!("JSAC SI-SDRi {:.2} dB < 3 dB", ja.si_sdr_improvement_db));
    }
    if !(ja.mel_distance < fa.mel_distance) {
        failures.push(format!("JSAC mel distance {:.4} >= FCTS {:.4}", ja.mel_distance, fa.mel_distance));
    }
    let _ = std::fs::write(root.join("jsac_report.json"), j.to_json().unwrap());
    let _ = std::fs::write(root.join("fcts_report.json"), f.to_json().unwrap());
    let summary = format!(
        "{} utterances, {} test mixtures; {}; JSAC {rate:.0} bps SI-SDRi {:.2} dB mel {:.4}; FCTS {:.0} bps ({stages} stages) SI-SDRi {:.2} dB mel {:.4}",
        ds.records.len(),
        ja.count,
        notes.join(", "),
        ja.si_sdr_improvement_db,
        ja.mel_distance,
        fcts_rate.total_bps,
        fa.si_sdr_improvement_db,
        fa.mel_distance
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}: {summary}", failures.join("; ")))
    }
}

/// Every artifact of one short pipeline run, keyed by relative path.
fn pipeline_artifacts(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let data = root.join("data");
    let cfg = CorpusConfig { utterances_per_speaker: 10, ..CorpusConfig::default() };
    build_datasets(&data, &cfg).map_err(|e| e.to_string())?;
    let trained = train_all(&data, &root.join("models"), true)?;
    let jsac = jsac_of(&trained);
    let out = root.join("out");
    std::fs::create_dir_all(&out).unwrap();
    for m in load_mixtures(&data, Split::Test, 8000).map_err(|e| e.to_string())? {
        let bs = jsac.encode(&m.mix).map_err(|e| e.to_string())?;
        std::fs::write(out.join(format!("{}.cstk", m.id)), bs.to_bytes()).unwrap();
        let [a, b] = jsac.decode(&bs).map_err(|e| e.to_string())?;
        write_wav(out.join(format!("{}_s1.wav", m.id)), &a).unwrap();
        write_wav(out.join(format!("{}_s2.wav", m.id)), &b).unwrap();
    }
    let mut files = Vec::new();
    for dir in [trained.models.clone(), out] {
        let mut entries: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            let rel = p.strip_prefix(root).unwrap().display().to_string();
            files.push((rel, std::fs::read(&p).unwrap()));
        }
    }
    Ok(files)
}

fn criterion_9(root: &Path) -> Outcome {
    let a = pipeline_artifacts(&root.join("run_a"))?;
    let b = pipeline_artifacts(&root.join("run_b"))?;
    ensure(a.len() == b.len(), || format!("{} vs {} artifacts", a.len(), b.len()))?;
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        let (na, nb) = (na.trim_start_matches("run_a/"), nb.trim_start_matches("run_b/"));
        ensure(na == nb, || format!("artifact sets differ: {na} vs {nb}"))?;
        ensure(ba == bb, || format!("{na} differs between runs"))?;
    }
    let count = |ext: &str| a.iter().filter(|(n, _)| n.ends_with(ext)).count();
    ensure(count(".ckpt") >= 4 && count(".cstk") > 0 && count(".wav") > 0, || "missing artifacts".into())?;
    Ok(format!(
        "two seeded runs: {} checkpoints, {} bitstreams, {} WAVs, {} artifacts byte-identical",
        count(".ckpt"),
        count(".cstk"),
        count(".wav"),
        a.len()
    ))
}

fn main() {
    let filter: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(usize, Box<dyn Fn() -> Outcome>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(|| criterion_8(&dir.path().join("desk")))),
        (9, Box::new(|| criterion_9(&dir.path().join("determinism")))),
    ];
    let mut failed = 0;
    for (n, run) in criteria {
        if filter.is_some_and(|f| f != n) {
            continue;
        }
        let start = Instant::now();
        match run() {
            Ok(detail) => emit(&format!("criterion {n}: PASS ({:.1}s) {detail}", start.elapsed().as_secs_f64())),
            Err(why) => {
                failed += 1;
                emit(&format!("criterion {n}: FAIL ({:.1}s) {why}", start.elapsed().as_secs_f64()));
            }
        }
    }
    drop(dir);
    if failed > 0 {
        emit(&format!("{failed} acceptance criteria failed"));
        std::process::exit(1);
    }
}
