use num_complex::Complex64;
use proptest::prelude::*;

use imix_core::classic::{ls_tone_cancel, mf_receiver, notch_filter, sic_receiver, SicConfig, DEFAULT_NOTCH_RADIUS};
use imix_core::harness::{parse_config, to_csv, BerRecord};
use imix_core::impairments::{apply_cfo, apply_timing_offset, gen_interferer, mix, InterfererKind, MixSpec, NoiseKind};
use imix_core::models::checkpoint::{from_bytes, to_bytes};
use imix_core::models::{Architecture, ClassifierConfig, UnetConfig};
use imix_core::nn::{LayerSpec, Mode, ModelBuilder, Tensor};
use imix_core::pipelines::{
    route_key, run_classic, run_sicunet, run_unet_rx, CfoFlags, ClassicMethod, Classifiers, FixedClass, Identity, RouteKey,
};
use imix_core::scenario::Scenario;
use imix_core::signal::{design_rrc, fir_filter, linear_to_db, measure_power, qfunc, IqBuffer, RngStream};
use imix_core::waveforms::{demap_symbols, map_symbols, score_ber, transmit, BitStream, Scheme, TxConfig, QPSK_GRAY};

fn buffer(seed: u64, n: usize) -> IqBuffer {
    let mut r = RngStream::new(seed, 1).rng();
    IqBuffer::new(imix_core::signal::complex_gaussian(&mut r, n), 4).unwrap()
}

fn power_at(x: &[Complex64], f: f64) -> f64 {
    let acc: Complex64 = x.iter().enumerate().map(|(k, &v)| v * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * k as f64)).sum();
    acc.norm_sqr() / x.len() as f64
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::Qpsk), Just(Scheme::Qam16)]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn fir_filter_is_linear(seed in any::<u64>(), n in 1usize..300, a in -3.0f64..3.0, b in -3.0f64..3.0, sps in 2usize..9) {
        let h = design_rrc(0.35, sps, 6).unwrap();
        let x = buffer(seed, n);
        let y = buffer(seed ^ 0x55, n);
        let lhs = fir_filter(&x.scaled(a).add(&y.scaled(b)).unwrap(), &h);
        let rhs = fir_filter(&x, &h).scaled(a).add(&fir_filter(&y, &h).scaled(b)).unwrap();
        for (l, r) in lhs.samples().iter().zip(rhs.samples()) {
            prop_assert!((l - r).norm() <= 1e-10);
        }
    }

    #[test]
    fn rrc_taps_are_symmetric_and_unit_energy(beta in 0.05f64..1.0, sps in 2usize..17, half_span in 1usize..8) {
        let h = design_rrc(beta, sps, 2 * half_span).unwrap();
        let t = h.taps();
        prop_assert_eq!(t.len() % 2, 1);
        prop_assert!(t.iter().zip(t.iter().rev()).all(|(a, b)| a == b));
        prop_assert!((t.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qfunc_is_a_decreasing_tail(x in -8.0f64..8.0, dx in 1e-3f64..2.0) {
        prop_assert!(qfunc(x + dx) < qfunc(x));
        prop_assert!((qfunc(x) + qfunc(-x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn streams_reproduce_bit_exactly(seed in any::<u64>(), id in any::<u64>(), tag in any::<u64>()) {
        let a = RngStream::new(seed, id).child(tag);
        let b = RngStream::new(seed, id).child(tag);
        let tx = TxConfig::with_defaults(Scheme::Qam16, 4).unwrap();
        prop_assert_eq!(transmit(16, &tx, &a).unwrap(), transmit(16, &tx, &b).unwrap());
        let n1 = imix_core::impairments::gen_noise(NoiseKind::Impulsive { p: 0.05, amp_ratio: 10.0 }, 64, 1.0, &a).unwrap();
        let n2 = imix_core::impairments::gen_noise(NoiseKind::Impulsive { p: 0.05, amp_ratio: 10.0 }, 64, 1.0, &b).unwrap();
        prop_assert_eq!(n1, n2);
    }

    #[test]
    fn map_demap_round_trips(bits in proptest::collection::vec(0u8..2, 1..64), scheme in scheme()) {
        let k = scheme.bits_per_symbol();
        let bits: Vec<u8> = bits.iter().cycle().take(bits.len() * k).copied().collect();
        let stream = BitStream::new(bits).unwrap();
        let symbols = map_symbols(&stream, scheme).unwrap();
        let energy = symbols.symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / symbols.symbols.len() as f64;
        let peak = if scheme == Scheme::Qpsk { 1.0 } else { 1.8 };
        prop_assert!(energy <= peak + 1e-12);
        prop_assert_eq!(demap_symbols(&symbols), stream);
    }

    #[test]
    fn noiseless_chain_is_error_free(seed in any::<u64>(), scheme in scheme(), sps in prop_oneof![Just(4usize), Just(8), Just(16)]) {
        let tx = TxConfig::with_defaults(scheme, sps).unwrap();
        let t = transmit(128, &tx, &RngStream::new(seed, 2)).unwrap();
        let rx = mf_receiver(&t.waveform, &tx, 128).unwrap();
        prop_assert_eq!(score_ber(&t.bits, &rx).unwrap().errors, 0);
    }

    #[test]
    fn mixtures_reconstruct_and_hit_their_targets(
        seed in any::<u64>(),
        es in -5.0f64..20.0,
        sir in -15.0f64..15.0,
        tau in 0usize..60,
        cfo in 0.0f64..0.1,
    ) {
        let tx = TxConfig::with_defaults(Scheme::Qpsk, 8).unwrap();
        let rng = RngStream::new(seed, 3);
        let soi = transmit(64, &tx, &rng.child(0)).unwrap();
        let kind = InterfererKind::Mod { scheme: Scheme::Qpsk, sps: 16, beta: 0.35, span: 12 };
        let int = gen_interferer(kind, soi.waveform.len(), &rng.child(1)).unwrap();
        let spec = MixSpec { tau_int: tau, cfo_int: cfo, cfo_soi: cfo / 2.0, ..MixSpec::with_sir(es, sir) };
        let m = mix(&soi, Some(&int), NoiseKind::Awgn, spec, &rng.child(2)).unwrap();
        let rebuilt = m.y.sub(&m.clean_soi).unwrap().sub(&m.clean_int).unwrap();
        prop_assert_eq!(rebuilt.samples(), m.noise.samples());
        let region = |b: &IqBuffer| b.samples()[tau..].iter().map(|s| s.norm_sqr()).sum::<f64>();
        let achieved_sir = linear_to_db(region(&m.clean_soi) / region(&m.clean_int));
        prop_assert!((achieved_sir - sir).abs() < 0.01, "sir {achieved_sir} vs {sir}");
        let achieved_es = linear_to_db(8.0 / measure_power(&m.noise));
        prop_assert!((achieved_es - es).abs() < 0.01, "es/n0 {achieved_es} vs {es}");
    }

    #[test]
    fn cfo_preserves_power(seed in any::<u64>(), n in 1usize..400, f in -0.5f64..0.5) {
        let x = buffer(seed, n);
        let p0 = x.samples().iter().map(|s| s.norm_sqr()).sum::<f64>();
        let p1 = apply_cfo(&x, f).unwrap().samples().iter().map(|s| s.norm_sqr()).sum::<f64>();
        prop_assert!((p0 - p1).abs() <= 1e-12 * p0);
    }

    #[test]
    fn timing_offset_only_delays(seed in any::<u64>(), n in 1usize..300, tau in 0usize..300) {
        prop_assume!(tau < n);
        let x = buffer(seed, n);
        let y = apply_timing_offset(&x, tau).unwrap();
        let cum = |b: &IqBuffer| b.samples().iter().scan(0.0, |a, s| { *a += s.norm_sqr(); Some(*a) }).collect::<Vec<_>>();
        let (cx, cy) = (cum(&x), cum(&y));
        prop_assert!(cx.iter().zip(&cy).all(|(a, b)| *b <= *a));
    }

    #[test]
    fn tone_cancellers_never_add_tone_power(seed in any::<u64>(), f in -0.45f64..0.45, amp in 0.1f64..10.0, phase in 0.0f64..6.3) {
        let tone = IqBuffer::new(
            (0..512).map(|k| Complex64::from_polar(amp, std::f64::consts::TAU * f * k as f64 + phase)).collect(),
            4,
        )
        .unwrap();
        // the notch is linear, so the tone's share of the output is the notch of the tone alone
        let left = notch_filter(&tone, f, DEFAULT_NOTCH_RADIUS).unwrap();
        prop_assert!(measure_power(&left) <= measure_power(&tone));
        let x = buffer(seed, 512).add(&tone).unwrap();
        let ls = ls_tone_cancel(&x, Some(f)).unwrap();
        prop_assert!(power_at(ls.samples(), f) <= power_at(x.samples(), f));
    }

    #[test]
    fn conv_shapes_follow_the_formulas(
        l in 1usize..60,
        k in 1usize..8,
        s in 1usize..4,
        p in 0usize..4,
        transposed in any::<bool>(),
    ) {
        let spec = if transposed {
            LayerSpec::ConvT1d { in_ch: 2, out_ch: 3, kernel: k, stride: s, padding: p }
        } else {
            LayerSpec::Conv1d { in_ch: 2, out_ch: 3, kernel: k, stride: s, padding: p }
        };
        let want = if transposed { ((l - 1) * s + k).checked_sub(2 * p) } else { (l + 2 * p).checked_sub(k).map(|d| d / s + 1) };
        let want = want.filter(|&w| w > 0);
        let mut b = ModelBuilder::new(2);
        let input = b.input();
        b.add("c", spec, &[input]);
        let model = b.build::<f64>("prop".into(), &RngStream::new(1, 1)).unwrap();
        let x = Tensor::from_f64(vec![1, 2, l], &vec![0.5; 2 * l]).unwrap();
        match (want, model.forward_pure(&x, Mode::Eval)) {
            (Some(w), Ok(out)) => prop_assert_eq!(out.shape(), &[1, 3, w][..]),
            (None, Err(_)) => {}
            (w, r) => prop_assert!(false, "expected {:?}, got {:?}", w, r.map(|t| t.shape().to_vec())),
        }
    }

    #[test]
    fn batchnorm_standardizes_each_channel(seed in any::<u64>(), batch in 2usize..6, len in 1usize..20, shift in -5.0f64..5.0) {
        let mut b = ModelBuilder::new(3);
        let input = b.input();
        b.add("bn", LayerSpec::BatchNorm1d { channels: 3 }, &[input]);
        let mut model = b.build::<f64>("prop".into(), &RngStream::new(2, 2)).unwrap();
        let x = buffer(seed, batch * 3 * len);
        let data: Vec<f64> = x.samples().iter().map(|s| 3.0 * s.re + shift).collect();
        let out = model.forward(&Tensor::from_f64(vec![batch, 3, len], &data).unwrap(), Mode::Train).unwrap();
        for c in 0..3 {
            let vals: Vec<f64> = (0..batch).flat_map(|n| out.item(n)[c * len..(c + 1) * len].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            prop_assert!(mean.abs() < 1e-6);
            // the epsilon in the denominator shrinks variance for nearly constant channels
            let raw: Vec<f64> = (0..batch).flat_map(|n| (0..len).map(move |t| (n, t))).map(|(n, t)| data[(n * 3 + c) * len + t]).collect();
            let raw_mean = raw.iter().sum::<f64>() / raw.len() as f64;
            let raw_var = raw.iter().map(|v| (v - raw_mean).powi(2)).sum::<f64>() / raw.len() as f64;
            let expect = raw_var / (raw_var + 1e-5);
            prop_assert!((var - expect).abs() < 1e-4, "var {var} vs {expect}");
        }
    }

    #[test]
    fn unet_preserves_length(len in 8usize..200, seed in any::<u64>()) {
        let cfg = UnetConfig { levels: 2, base_channels: 2, kernel: 3, ..UnetConfig::desk() };
        prop_assume!(len >= cfg.min_len());
        let model = Architecture::Unet(cfg).build::<f32>(&RngStream::new(seed, 4)).unwrap();
        let x = Tensor::from_f64(vec![1, 2, len], &vec![0.1; 2 * len]).unwrap();
        let out = model.infer(&x).unwrap();
        prop_assert_eq!(out.shape(), &[1, 2, len][..]);
        // eval forward is a pure function of weights and input
        prop_assert_eq!(model.infer(&x).unwrap(), out);
    }

    #[test]
    fn checkpoints_are_byte_stable(seed in any::<u64>(), classes in 2usize..5) {
        let model = Architecture::Classifier(ClassifierConfig::desk(classes)).build::<f32>(&RngStream::new(seed, 5)).unwrap();
        let bytes = to_bytes(&model);
        let back = from_bytes(&bytes).unwrap();
        prop_assert_eq!(to_bytes(&back), bytes);
        let x = Tensor::from_f64(vec![2, 2, 64], &vec![0.3; 256]).unwrap();
        prop_assert_eq!(back.infer(&x).unwrap(), model.infer(&x).unwrap());
    }

    #[test]
    fn identity_surrogates_degenerate_to_classical(seed in any::<u64>(), es in 0.0f64..12.0, sir in -12.0f64..-1.0) {
        let sc = Scenario::preset("qpsk_sps32", 64).unwrap();
        let m = sc.draw(es, sir, &RngStream::new(seed, 6)).unwrap();
        let mf = run_classic(&m, &ClassicMethod::Mf, &sc.soi).unwrap();
        prop_assert_eq!(&run_unet_rx(&m, &Identity, &sc.soi).unwrap().rx_bits, &mf.rx_bits);
        let int_tx = TxConfig::with_defaults(Scheme::Qpsk, 32).unwrap();
        let cfg = SicConfig::new(sc.soi.clone(), int_tx, sir);
        let sic = sic_receiver(&m, &cfg).unwrap();
        prop_assert_eq!(&run_sicunet(&m, &Identity, &Identity, &cfg, CfoFlags::default()).unwrap().rx_bits, &sic);
    }

    #[test]
    fn routing_depends_only_on_classifier_outputs(seed in any::<u64>(), present in 0usize..2, a in 0usize..4, band in 0usize..2) {
        let y = buffer(seed, 128);
        let z = buffer(seed.wrapping_add(1), 128);
        let detector = FixedClass { class: present, n_classes: 2 };
        let noise = FixedClass { class: a, n_classes: 4 };
        let interference = FixedClass { class: a, n_classes: 4 };
        let sir = FixedClass { class: band, n_classes: 2 };
        let c = Classifiers { detector: &detector, noise: &noise, interference: &interference, sir: &sir };
        let key = route_key(&y, &c).unwrap();
        prop_assert_eq!(route_key(&z, &c).unwrap(), key);
        let want = if present == 0 { RouteKey::Clean { noise: a } } else { RouteKey::Interfered { kind: a, sir_band: band } };
        prop_assert_eq!(key, want);
    }

    #[test]
    fn csv_rows_ignore_input_order(order in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle()) {
        let rec = |i: usize| BerRecord {
            scenario: "awgn".into(),
            es_n0_db: (i % 3) as f64 * 2.0,
            sir_db: if i % 2 == 0 { f64::INFINITY } else { -4.0 },
            method: ["mf", "sic"][i / 6].into(),
            trials: 1,
            bits: 512,
            bit_errors: i as u64,
            ber: i as f64 / 512.0,
            rmse: 0.0,
            seed: 1,
        };
        let sorted = to_csv(&(0..12).map(rec).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(to_csv(&order.into_iter().map(rec).collect::<Vec<_>>()).unwrap(), sorted);
    }

    #[test]
    fn configs_round_trip_through_text(seed in any::<u64>(), trials in 1usize..500, es in proptest::collection::vec(-10i32..30, 1..5)) {
        let es: Vec<String> = es.iter().map(|v| v.to_string()).collect();
        let text = format!(
            "[experiment]\nscenario = qpsk_sps32\nseed = {seed}\nn_trials = {trials}\nmethods = mf, sic\n[grid]\nes_n0_db = {}\nsir_db = -10:2:0\n",
            es.join(", ")
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }
}

#[test]
fn adjacent_qpsk_points_differ_in_one_bit() {
    // neighbours share one coordinate and differ in the other
    for a in 0..4usize {
        for b in 0..4usize {
            let (pa, pb) = (QPSK_GRAY[a], QPSK_GRAY[b]);
            let adjacent = (pa.0 == pb.0) != (pa.1 == pb.1);
            if adjacent {
                assert_eq!((a ^ b).count_ones(), 1, "{a} {b}");
            }
        }
    }
}

#[test]
fn sixteen_qam_rails_are_gray_coded() {
    let rail = imix_core::waveforms::QAM16_RAIL_GRAY;
    let mut by_level: Vec<usize> = (0..4).collect();
    by_level.sort_by(|&a, &b| rail[a].total_cmp(&rail[b]));
    assert!(by_level.windows(2).all(|w| (w[0] ^ w[1]).count_ones() == 1));
}
