//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line
//! and then asserts on the same verdict.

use std::f32::consts::PI;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsrcodec::codec::{bitrate, decode_stream, depacketize, encode_stream, packetize};
use dsrcodec::features::baseline_features;
use dsrcodec::losses::{adv_loss_g, d_loss, fm_loss, recon_loss, total_losses};
use dsrcodec::metrics::{eer, error_rate, ffe, vde};
use dsrcodec::pitch::{extract_f0, flatten_f0, speaker_mean_f0};
use dsrcodec::quantize::{
    f0_encode, kmeans_fit, kmeans_fit_rows, quantize, train_f0_codebook, F0CodeSequence,
    F0VqOptions, KMeansOptions,
};
use dsrcodec::signal::mel_spectrogram;
use dsrcodec::vocoder::{ActivationStack, DiscriminatorConfig, Discriminators, PERIODS, SCALES};
use dsrcodec::{
    AudioClip, Codebook, CodecConfig, F0Track, Generator, GeneratorConfig, LossWeights, MelConfig,
    PitchConfig, ScoredTrial, SpeakerTable, Tensor, UnitSequence,
};

struct Verdict {
    id: u32,
    name: &'static str,
    start: Instant,
    budget: Duration,
    failures: Vec<String>,
}

impl Verdict {
    fn new(id: u32, name: &'static str, budget_secs: u64) -> Self {
        Self {
            id,
            name,
            start: Instant::now(),
            budget: Duration::from_secs(budget_secs),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        if elapsed > self.budget {
            self.failures
                .push(format!("took {:.2?}, budget {:.0?}", elapsed, self.budget));
        }
        let status = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {}: {} ({:.2?})",
            self.id, self.name, status, elapsed
        );
        for f in self.failures.iter().take(10) {
            println!("    {f}");
        }
        assert!(self.failures.is_empty(), "criterion {} failed", self.id);
    }
}

#[test]
fn criterion_1_bitrate_table() {
    let mut v = Verdict::new(1, "bitrate table", 1);
    let rate = |hop: u16, k: u16, kf: u16, group: u8| {
        bitrate(&CodecConfig::new(16000, hop, k, kf, group).unwrap()).unwrap()
    };
    let cases = [
        ("K=100 @100Hz content", rate(160, 100, 20, 8).content_bps, 700.0),
        ("K=100 @50Hz content", rate(320, 100, 20, 4).content_bps, 350.0),
        ("K=256 @100Hz content", rate(160, 256, 20, 8).content_bps, 800.0),
        ("K'=20 @12.5Hz pitch", rate(320, 50, 20, 4).f0_bps, 65.0),
        ("K'=20 @12.5Hz pitch (100Hz content)", rate(160, 100, 20, 8).f0_bps, 65.0),
        ("K=50 @50Hz + pitch total", rate(320, 50, 20, 4).total_bps, 365.0),
    ];
    for (name, got, want) in cases {
        println!("    {name}: {got} bps");
        v.check(got == want, || format!("{name}: {got} != {want}"));
    }
    v.finish();
}

#[test]
fn criterion_2_bitstream_integrity() {
    let mut v = Verdict::new(2, "bitstream integrity", 10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..1000 {
        let hop = if rng.random_bool(0.5) { 160 } else { 320 };
        let cfg = CodecConfig::new(
            16000,
            hop,
            rng.random_range(1..=1024),
            rng.random_range(1..=64),
            rng.random_range(1..=16),
        )
        .unwrap();
        let len = rng.random_range(1..=300usize);
        let content: Vec<u32> = (0..len)
            .map(|_| rng.random_range(0..cfg.content_vocab as u32))
            .collect();
        let f0: Vec<u32> = (0..cfg.f0_count(len))
            .map(|_| rng.random_range(0..cfg.f0_vocab as u32))
            .collect();
        let speaker: u16 = rng.random();

        let stream = encode_stream(&content, &f0, speaker, &cfg).unwrap();
        let parsed = dsrcodec::Bitstream::from_bytes(&stream.to_bytes()).unwrap();
        let d = decode_stream(&parsed).unwrap();
        v.check(
            d.content == content && d.f0 == f0 && d.speaker_id == speaker && d.config == cfg,
            || format!("trial {trial}: round trip differs"),
        );

        let fpp = cfg.f0_group as usize * rng.random_range(1..=8usize);
        let mut packets = packetize(&stream, fpp).unwrap();
        packets.shuffle(&mut rng);
        match depacketize(&packets) {
            Ok(back) => v.check(back == stream, || format!("trial {trial}: packets differ")),
            Err(e) => v.check(false, || format!("trial {trial}: {e}")),
        }
    }
    v.finish();
}

fn blobs(centers: &[[f32; 2]], per: usize, sigma: f32, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let normal = rand_distr::Normal::new(0.0f32, sigma).unwrap();
    let mut rows = Vec::with_capacity(centers.len() * per * 2);
    for c in centers {
        for _ in 0..per {
            rows.push(c[0] + rng.sample(normal));
            rows.push(c[1] + rng.sample(normal));
        }
    }
    rows
}

#[test]
fn criterion_3_quantizer() {
    let mut v = Verdict::new(3, "quantizer correctness", 30);
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    for k in [2usize, 4, 8] {
        let centers: Vec<[f32; 2]> = (0..k)
            .map(|i| [10.0 * (i % 4) as f32, 10.0 * (i / 4) as f32 - 5.0])
            .collect();
        let rows = blobs(&centers, 400, 0.3, &mut rng);
        let mut opts = KMeansOptions::new(k);
        opts.seed = 7;
        let fit = kmeans_fit_rows(&rows, 2, &opts).unwrap();
        let mut worst = 0.0f32;
        for c in &centers {
            let best = (0..k)
                .map(|j| {
                    let q = fit.codebook.vector(j);
                    ((q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2)).sqrt()
                })
                .fold(f32::INFINITY, f32::min);
            worst = worst.max(best);
        }
        println!("    k-means K={k}: worst center error {worst:.4}");
        v.check(worst <= 0.05, || format!("K={k}: center error {worst}"));
        let monotone = fit
            .inertia_history
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        v.check(monotone, || format!("K={k}: inertia rose {:?}", fit.inertia_history));
    }

    // fixed batch of two clusters; every code keeps at least one member
    let batch = blobs(&[[1.0, 2.0], [-3.0, 0.5]], 50, 0.2, &mut rng);
    let mean = |lo: usize| {
        let pts = &batch[lo * 2..(lo + 50) * 2];
        let n = 50.0f64;
        [
            pts.iter().step_by(2).map(|&x| x as f64).sum::<f64>() / n,
            pts.iter().skip(1).step_by(2).map(|&x| x as f64).sum::<f64>() / n,
        ]
    };
    let targets = [mean(0), mean(50)];
    let mut cb = Codebook::from_vectors(vec![0.5, 1.5, -2.5, 0.0], 2)
        .unwrap()
        .with_ema(0.99, 1.0, 1)
        .unwrap();
    for _ in 0..3000 {
        cb.ema_update(&batch).unwrap();
    }
    let mut err = 0.0f64;
    for (j, t) in targets.iter().enumerate() {
        let q = cb.vector(j);
        err = err.max((q[0] as f64 - t[0]).abs().max((q[1] as f64 - t[1]).abs()));
    }
    println!("    EMA fixed-batch error {err:.2e}");
    v.check(err <= 1e-4, || format!("EMA error {err}"));

    // a far-away code never wins and must be restarted
    let mut cb = Codebook::from_vectors(vec![1.0, 2.0, -3.0, 0.5, 1000.0, 1000.0], 2)
        .unwrap()
        .with_ema(0.99, 1.0, 5)
        .unwrap();
    let report = cb.ema_update(&batch).unwrap();
    v.check(report.restarted.contains(&2), || {
        format!("dead code not restarted: {:?}", report.restarted)
    });
    let low = cb.usage_ema().iter().any(|&u| u < cb.restart_threshold() as f64);
    v.check(!low, || format!("usage below threshold: {:?}", cb.usage_ema()));
    v.check(cb.vector(2)[0] < 100.0, || "restarted code still far away".into());
    v.finish();
}

fn sine(freq: f32, secs: f32) -> Vec<f32> {
    let n = (16000.0 * secs) as usize;
    (0..n).map(|i| 0.5 * (2.0 * PI * freq * i as f32 / 16000.0).sin()).collect()
}

fn sawtooth(freq: f32, secs: f32) -> Vec<f32> {
    let n = (16000.0 * secs) as usize;
    (0..n)
        .map(|i| {
            let phase = (freq * i as f32 / 16000.0).fract();
            0.5 * (2.0 * phase - 1.0)
        })
        .collect()
}

#[test]
fn criterion_4_pitch_tracker() {
    let mut v = Verdict::new(4, "pitch tracker", 30);
    let cfg = PitchConfig::default();
    for (kind, make) in [("sine", sine as fn(f32, f32) -> Vec<f32>), ("sawtooth", sawtooth)] {
        for freq in [110.0f32, 220.0, 330.0] {
            let clip = AudioClip::new(make(freq, 1.0), 16000).unwrap();
            let track = extract_f0(&clip, &cfg).unwrap();
            let voiced: Vec<f32> = track
                .f0()
                .iter()
                .zip(track.voiced())
                .filter(|(_, &on)| on)
                .map(|(&f, _)| f)
                .collect();
            let voiced_frac = voiced.len() as f64 / track.len() as f64;
            let mut sorted = voiced.clone();
            sorted.sort_by(f32::total_cmp);
            let median = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
            let gross = voiced
                .iter()
                .filter(|&&f| (f - freq).abs() / freq > 0.2)
                .count() as f64
                / voiced.len().max(1) as f64;
            println!(
                "    {kind} {freq} Hz: voiced {:.1}%, median {median:.2} Hz, gross {:.1}%",
                100.0 * voiced_frac,
                100.0 * gross
            );
            v.check(voiced_frac >= 0.9, || format!("{kind} {freq}: voiced {voiced_frac}"));
            v.check((median - freq).abs() / freq <= 0.05, || {
                format!("{kind} {freq}: median {median}")
            });
            v.check(gross < 0.05, || format!("{kind} {freq}: gross {gross}"));
        }
    }
    let silence = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
    let track = extract_f0(&silence, &cfg).unwrap();
    v.check(track.voiced_count() == 0, || {
        format!("silence has {} voiced frames", track.voiced_count())
    });
    v.finish();
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-2.0f32..2.0)).collect()).unwrap()
}

fn random_stack(rng: &mut ChaCha8Rng, shapes: &[Vec<usize>], score: &[usize]) -> ActivationStack {
    ActivationStack {
        layers: shapes.iter().map(|s| random_tensor(rng, s.clone())).collect(),
        scores: random_tensor(rng, score.to_vec()),
    }
}

fn oracle_adv(s: &Tensor) -> f64 {
    let mut acc = 0.0;
    for &x in s.data() {
        acc += (1.0 - x as f64) * (1.0 - x as f64);
    }
    acc / s.len() as f64
}

fn oracle_d(r: &Tensor, f: &Tensor) -> f64 {
    let mut a = 0.0;
    for &x in r.data() {
        a += (1.0 - x as f64).powi(2);
    }
    let mut b = 0.0;
    for &x in f.data() {
        b += (x as f64).powi(2);
    }
    a / r.len() as f64 + b / f.len() as f64
}

fn oracle_fm(r: &ActivationStack, f: &ActivationStack) -> f64 {
    let mut total = 0.0;
    let rs: Vec<&Tensor> = r.layers.iter().chain([&r.scores]).collect();
    let fs: Vec<&Tensor> = f.layers.iter().chain([&f.scores]).collect();
    for (a, b) in rs.iter().zip(&fs) {
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += (a.data()[i] as f64 - b.data()[i] as f64).abs();
        }
        total += acc / a.len() as f64;
    }
    total
}

fn oracle_recon(x: &AudioClip, y: &AudioClip, cfg: &MelConfig) -> f64 {
    let a = mel_spectrogram(x, cfg).unwrap();
    let b = mel_spectrogram(y, cfg).unwrap();
    let mut acc = 0.0;
    let mut n = 0usize;
    for t in 0..a.num_frames() {
        for m in 0..a.mel_bands() {
            acc += (a.frame(t)[m] - b.frame(t)[m]).abs();
            n += 1;
        }
    }
    acc / n as f64
}

#[test]
fn criterion_5_loss_identities() {
    let mut v = Verdict::new(5, "loss identities", 10);
    let mel = MelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let x = AudioClip::new((0..4096).map(|_| rng.random_range(-0.5f32..0.5)).collect(), 16000).unwrap();
    v.check(recon_loss(&x, &x, &mel).unwrap() == 0.0, || "recon(x, x) != 0".into());
    let s = random_stack(&mut rng, &[vec![4, 9], vec![2, 3, 5]], &[7]);
    v.check(fm_loss(&s, &s).unwrap() == 0.0, || "fm(identical) != 0".into());
    v.check(adv_loss_g(&[vec![1.0f32; 13]]).unwrap() == 0.0, || "adv(1) != 0".into());
    v.check(d_loss(&[vec![1.0f32; 5]], &[vec![0.0f32; 6]]).unwrap() == 0.0, || {
        "d(1, 0) != 0".into()
    });

    let weights = LossWeights::default();
    let mut worst_total = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(1024..3000usize);
        let x = AudioClip::new((0..len).map(|_| rng.random_range(-0.9f32..0.9)).collect(), 16000).unwrap();
        let y = AudioClip::new((0..len).map(|_| rng.random_range(-0.9f32..0.9)).collect(), 16000).unwrap();
        let subs = rng.random_range(1..=8usize);
        let mut reals = Vec::new();
        let mut fakes = Vec::new();
        for _ in 0..subs {
            let depth = rng.random_range(0..4usize);
            let shapes: Vec<Vec<usize>> = (0..depth)
                .map(|_| vec![rng.random_range(1..6), rng.random_range(1..20)])
                .collect();
            let score = [rng.random_range(1..30usize)];
            reals.push(random_stack(&mut rng, &shapes, &score));
            fakes.push(random_stack(&mut rng, &shapes, &score));
        }
        let report = total_losses(&x, &y, &reals, &fakes, weights, &mel).unwrap();

        let recon = oracle_recon(&x, &y, &mel);
        let mut adv = 0.0;
        let mut fm = 0.0;
        let mut disc = 0.0;
        for (j, (r, f)) in reals.iter().zip(&fakes).enumerate() {
            let (a, m, d) = (oracle_adv(&f.scores), oracle_fm(r, f), oracle_d(&r.scores, &f.scores));
            let p = report.per_discriminator[j];
            worst_oracle = worst_oracle
                .max((p.adv - a).abs())
                .max((p.fm - m).abs())
                .max((p.disc - d).abs());
            adv += a;
            fm += m;
            disc += d;
        }
        worst_oracle = worst_oracle.max((report.recon - recon).abs());
        let expected = adv + 2.0 * fm + 45.0 * recon;
        worst_total = worst_total
            .max((report.generator_total - expected).abs())
            .max((report.discriminator_total - disc).abs());
    }
    println!("    combined objective max deviation {worst_total:.2e}, per-term oracle max deviation {worst_oracle:.2e}");
    v.check(worst_total <= 1e-9, || format!("combined deviation {worst_total}"));
    v.check(worst_oracle <= 1e-7, || format!("oracle deviation {worst_oracle}"));
    v.finish();
}

fn f0_codes_for(len: usize, repeat: usize, vocab: usize, rate: f64, rng: &mut ChaCha8Rng) -> F0CodeSequence {
    let n = len.div_ceil(repeat);
    F0CodeSequence::new(
        (0..n).map(|_| rng.random_range(0..vocab as u32)).collect(),
        vocab as u32,
        rate / repeat as f64,
        0,
    )
    .unwrap()
}

#[test]
fn criterion_6_vocoder_contracts() {
    let mut v = Verdict::new(6, "vocoder contracts", 60);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let speakers = SpeakerTable::random(4, 6);

    let mut cached: Vec<(usize, Generator)> = Vec::new();
    for pair in 0..50 {
        let hop = if pair % 2 == 0 { 320 } else { 160 };
        let (repeat, rate) = if hop == 320 { (4, 50.0) } else { (8, 100.0) };
        if !cached.iter().any(|(h, _)| *h == hop) {
            let cfg = GeneratorConfig::for_hop(50, 20, hop).unwrap();
            cached.push((hop, Generator::random(cfg, 11).unwrap()));
        }
        let g = &cached.iter().find(|(h, _)| *h == hop).unwrap().1;
        let len = rng.random_range(1..=24usize);
        let units = UnitSequence::new((0..len).map(|_| rng.random_range(0..50)).collect(), 50, rate).unwrap();
        let f0 = f0_codes_for(len, repeat, 20, rate, &mut rng);
        let spk = speakers.get(rng.random_range(0..4)).unwrap();
        let out = g.generate(&units, &f0, spk).unwrap();
        let product: usize = g.config().upsample_rates.iter().product();
        v.check(out.len() == len * product && product == hop, || {
            format!("pair {pair}: {} samples for L={len}, hop {hop}", out.len())
        });
        if pair < 2 {
            let again = g.generate(&units, &f0, spk).unwrap();
            let same = out
                .samples()
                .iter()
                .zip(again.samples())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            v.check(same, || format!("pair {pair}: not bitwise deterministic"));
        }
    }

    let zero = Generator::zeros(GeneratorConfig::for_hop(50, 20, 320).unwrap()).unwrap();
    let units = UnitSequence::new(vec![3; 9], 50, 50.0).unwrap();
    let f0 = f0_codes_for(9, 4, 20, 50.0, &mut rng);
    let out = zero.generate(&units, &f0, speakers.get(0).unwrap()).unwrap();
    v.check(out.samples().iter().all(|&s| s == 0.0), || "zero weights gave nonzero audio".into());

    let cfg = DiscriminatorConfig::default();
    v.check(cfg.periods == [2, 3, 5, 7, 11] && PERIODS == [2, 3, 5, 7, 11], || {
        format!("periods {:?}", cfg.periods)
    });
    v.check(cfg.scales == [1, 2, 4] && SCALES == [1, 2, 4], || format!("scales {:?}", cfg.scales));
    let d = Discriminators::random(DiscriminatorConfig::desk(), 6).unwrap();
    let x: Vec<f32> = (0..2000).map(|i| (i as f32 * 0.05).sin() * 0.5).collect();
    let mpd = d.discriminate_mpd(&x).unwrap();
    let msd = d.discriminate_msd(&x).unwrap();
    v.check(d.count() == 8 && mpd.len() == 5 && msd.len() == 3, || {
        format!("{} sub-discriminators ({} + {})", d.count(), mpd.len(), msd.len())
    });
    for (stack, p) in mpd.iter().zip(PERIODS) {
        let last = stack.layers.last().unwrap().shape();
        v.check(*last.last().unwrap() == p, || format!("period {p}: lattice {last:?}"));
    }
    v.finish();
}

fn rand_track(rng: &mut ChaCha8Rng, n: usize) -> F0Track {
    let voiced: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    let f0 = voiced
        .iter()
        .map(|&on| if on { rng.random_range(80.0f32..300.0) } else { 0.0 })
        .collect();
    F0Track::new(f0, voiced, 200.0).unwrap()
}

fn brute_vde(r: &F0Track, h: &F0Track) -> f64 {
    let mut bad = 0;
    for i in 0..r.len() {
        if r.voiced()[i] != h.voiced()[i] {
            bad += 1;
        }
    }
    bad as f64 / r.len() as f64
}

fn brute_ffe(r: &F0Track, h: &F0Track) -> f64 {
    let mut bad = 0;
    for i in 0..r.len() {
        let voicing = r.voiced()[i] != h.voiced()[i];
        let both = r.voiced()[i] && h.voiced()[i];
        let far = both && (h.f0()[i] as f64 - r.f0()[i] as f64).abs() > 0.2 * r.f0()[i] as f64;
        if voicing || far {
            bad += 1;
        }
    }
    bad as f64 / r.len() as f64
}

/// Evaluates FAR and FRR at every candidate threshold by direct counting
/// and interpolates the first sign change of FAR - FRR.
fn brute_eer(trials: &[ScoredTrial]) -> f64 {
    let mut th = vec![f64::NEG_INFINITY, f64::INFINITY];
    th.extend(trials.iter().map(|t| t.score));
    th.sort_by(f64::total_cmp);
    th.dedup();
    let targets = trials.iter().filter(|t| t.is_target).count() as f64;
    let others = trials.len() as f64 - targets;
    let mut points = Vec::new();
    for &t in &th {
        let mut fa = 0;
        let mut fr = 0;
        for x in trials {
            if x.is_target && x.score < t {
                fr += 1;
            }
            if !x.is_target && x.score >= t {
                fa += 1;
            }
        }
        points.push((fa as f64 / others, fr as f64 / targets));
    }
    for i in 0..points.len() - 1 {
        let a = points[i].0 - points[i].1;
        let b = points[i + 1].0 - points[i + 1].1;
        if a == 0.0 {
            return points[i].0;
        }
        if a > 0.0 && b <= 0.0 {
            return points[i].0 + a / (a - b) * (points[i + 1].0 - points[i].0);
        }
    }
    unreachable!()
}

/// Exhaustive recursion over edit operations.
fn brute_edit(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ar)), Some((y, br))) => {
            let sub = brute_edit(ar, br) + usize::from(x != y);
            sub.min(brute_edit(ar, b) + 1).min(brute_edit(a, br) + 1)
        }
    }
}

#[test]
fn criterion_7_metric_oracles() {
    let mut v = Verdict::new(7, "metric oracles", 10);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let n = rng.random_range(1..30);
        let (r, h) = (rand_track(&mut rng, n), rand_track(&mut rng, n));
        let (dv, df) = (vde(&r, &h).unwrap(), ffe(&r, &h).unwrap());
        v.check(dv == brute_vde(&r, &h), || format!("vde instance {i}"));
        v.check(df == brute_ffe(&r, &h), || format!("ffe instance {i}"));
        v.check(df >= dv, || format!("ffe < vde on instance {i}"));

        let nt = rng.random_range(1..8);
        let ni = rng.random_range(1..8);
        let trials: Vec<ScoredTrial> = (0..nt + ni)
            .map(|j| ScoredTrial::new(rng.random_range(0..6) as f64 * 0.1, j < nt).unwrap())
            .collect();
        let e = eer(&trials).unwrap();
        v.check(e == brute_eer(&trials), || format!("eer instance {i}: {e}"));

        let a: Vec<u8> = (0..rng.random_range(1..7)).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<u8> = (0..rng.random_range(0..7)).map(|_| rng.random_range(0..3)).collect();
        let want = brute_edit(&a, &b) as f64 / a.len() as f64;
        v.check(error_rate(&a, &b).unwrap() == want, || format!("error_rate instance {i}"));
    }
    let r = F0Track::new(vec![100.0, 100.0], vec![true, true], 200.0).unwrap();
    let boundary = F0Track::new(vec![120.0, 80.0], vec![true, true], 200.0).unwrap();
    v.check(ffe(&r, &boundary).unwrap() == 0.0, || "20% deviation counted".into());
    v.finish();
}

/// Three seconds of a gliding harmonic voice with a pause and a noise burst.
fn desk_clip(rng: &mut ChaCha8Rng) -> AudioClip {
    let sr = 16000.0f32;
    let mut phase = 0.0f32;
    let samples = (0..48000)
        .map(|i| {
            let t = i as f32 / sr;
            let segment = (t / 0.5) as usize;
            match segment {
                2 => 0.0,
                4 => rng.random_range(-0.05f32..0.05),
                _ => {
                    let f0 = 120.0 + 40.0 * (2.0 * PI * 0.7 * t).sin();
                    phase += 2.0 * PI * f0 / sr;
                    let env = 0.6 + 0.4 * (2.0 * PI * 3.0 * t).sin();
                    let voice: f32 = (1..=6).map(|h| (h as f32 * phase).sin() / h as f32).sum();
                    0.25 * env * voice
                }
            }
        })
        .collect();
    AudioClip::new(samples, 16000).unwrap()
}

#[test]
fn criterion_8_end_to_end() {
    let mut v = Verdict::new(8, "end-to-end desk pipeline", 120);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let clip = desk_clip(&mut rng);
    let codec = CodecConfig::hubert50();
    let hop = codec.content_hop as usize;

    let features = baseline_features(&clip, hop).unwrap();
    let mut opts = KMeansOptions::new(50);
    opts.seed = 8;
    let fit = kmeans_fit(std::slice::from_ref(&features), &opts).unwrap();
    let units = quantize(&features, &fit.codebook).unwrap();
    let frames = units.len();

    let pitch_cfg = PitchConfig::default();
    let per_frame = (hop as f64 / pitch_cfg.hop_samples(16000) as f64) as usize;
    let track = extract_f0(&clip, &pitch_cfg).unwrap().resized(frames * per_frame);
    let f0_book = train_f0_codebook(std::slice::from_ref(&track), &F0VqOptions { seed: 8, ..Default::default() }).unwrap();
    let f0_codes = f0_encode(&track, &f0_book).unwrap();
    v.check(f0_codes.len() == frames.div_ceil(codec.f0_group as usize), || {
        format!("{} pitch codes for {frames} frames", f0_codes.len())
    });

    let stream = encode_stream(units.codes(), f0_codes.codes(), 2, &codec).unwrap();
    let nominal = bitrate(&codec).unwrap().total_bps;
    let measured = stream.measured_bps();
    println!(
        "    {frames} frames, {} payload bytes, measured {measured:.1} bps over {:.2} s (clip {:.1} bps), nominal {nominal}",
        stream.payload().len(),
        stream.header().duration_secs(),
        8.0 * stream.payload().len() as f64 / clip.duration_secs(),
    );
    v.check((measured - nominal).abs() <= 8.0, || format!("measured {measured} bps"));

    let decoded = decode_stream(&stream).unwrap();
    v.check(decoded.content == units.codes() && decoded.f0 == f0_codes.codes(), || {
        "decoded codes differ".into()
    });
    let generator = Generator::random(GeneratorConfig::for_hop(50, 20, hop).unwrap(), 8).unwrap();
    let speakers = SpeakerTable::random(4, 8);
    let audio = generator
        .generate(
            &decoded.units().unwrap(),
            &decoded.f0_codes().unwrap(),
            speakers.get(decoded.speaker_id).unwrap(),
        )
        .unwrap();
    v.check(audio.len() == frames * 320 && audio.sample_rate() == 16000, || {
        format!("{} samples at {} Hz for {frames} frames", audio.len(), audio.sample_rate())
    });

    let mean = speaker_mean_f0(std::slice::from_ref(&track)).unwrap();
    let flat = flatten_f0(&track, mean).unwrap();
    let d = vde(&track, &flat).unwrap();
    v.check(d == 0.0, || format!("VDE(original, flattened) = {d}"));
    let all_mean = flat
        .f0()
        .iter()
        .zip(flat.voiced())
        .filter(|(_, &on)| on)
        .all(|(&f, _)| f == mean as f32);
    v.check(all_mean && flat.voiced_count() > 0, || "flattened voiced frames off the mean".into());
    println!("    speaker mean {mean:.2} Hz over {} voiced frames", flat.voiced_count());
    v.finish();
}
