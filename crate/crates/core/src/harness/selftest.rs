//! Classical receiver checks run by `imix selftest`. Each check draws its own
//! seeded mixtures and reports a measured value next to its bound.

use crate::classic::{estimate_cfo_mpower_refined, ls_tone_cancel, mf_receiver};
use crate::error::Result;
use crate::harness::sweep::trial_stream;
use crate::impairments::apply_cfo;
use crate::pipelines::{run_classic, ClassicMethod};
use crate::scenario::Scenario;
use crate::signal::{fir_filter, linear_to_db, measure_power, theoretical_qpsk_ber, IqBuffer, RngStream};
use crate::waveforms::{score_ber, transmit, BerCount, Scheme, TxConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Trials of 256 symbols per grid point; 200 trials give 102,400 bits.
pub const SELFTEST_TRIALS: usize = 200;

fn count(scenario: &Scenario, es: f64, sir: f64, seed: u64, method: &ClassicMethod) -> Result<BerCount> {
    let mut total = BerCount::default();
    for t in 0..SELFTEST_TRIALS {
        let m = scenario.draw(es, sir, &trial_stream(seed, es, sir, t))?;
        let r = run_classic(&m, method, &scenario.soi)?;
        total.merge(score_ber(&m.tx_bits, &r.rx_bits)?);
    }
    Ok(total)
}

fn within_3_sigma(c: BerCount, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / c.total as f64).sqrt();
    (c.ber() - p).abs() <= 3.0 * sigma
}

/// Matched-filter BER against the closed form at 0, 2, 4 and 6 dB.
pub fn check_theory(seed: u64) -> Result<Check> {
    let sc = Scenario::awgn(256);
    let mut passed = true;
    let mut detail = Vec::new();
    for es in [0.0, 2.0, 4.0, 6.0] {
        let c = count(&sc, es, f64::INFINITY, seed, &ClassicMethod::Mf)?;
        let p = theoretical_qpsk_ber(es);
        passed &= within_3_sigma(c, p) && c.total >= 100_000;
        detail.push(format!("{es} dB: {:.4e} vs {:.4e}", c.ber(), p));
    }
    Ok(Check { name: "mf_theory", passed, detail: detail.join("; ") })
}

/// Worst off-peak symbol-spaced tap of the TX+MF cascade, in dB.
pub fn cascade_isi_db(tx: &TxConfig) -> f64 {
    let taps = tx.rrc.taps();
    let h = IqBuffer::new(taps.iter().map(|&t| t.into()).collect(), tx.sps).expect("nonempty taps");
    let g = fir_filter(&h, &tx.rrc.matched());
    let center = taps.len() - 1;
    let peak = g.samples()[center].norm();
    let worst =
        (1..=center / tx.sps).flat_map(|k| [center - k * tx.sps, center + k * tx.sps]).map(|i| g.samples()[i].norm()).fold(0.0, f64::max);
    20.0 * (worst / peak).log10()
}

/// Cascade ISI at or below -40 dB and error-free noiseless round trips.
pub fn check_zero_isi(seed: u64) -> Result<Check> {
    let mut passed = true;
    let mut detail = Vec::new();
    for scheme in [Scheme::Qpsk, Scheme::Qam16] {
        let tx = TxConfig::with_defaults(scheme, 8)?;
        let isi = cascade_isi_db(&tx);
        let t = transmit(10_000, &tx, &RngStream::new(seed, 0x151))?;
        let errors = score_ber(&t.bits, &mf_receiver(&t.waveform, &tx, 10_000)?)?.errors;
        passed &= isi <= -40.0 && errors == 0;
        detail.push(format!("{scheme}: isi {isi:.1} dB, {errors} errors"));
    }
    Ok(Check { name: "zero_isi", passed, detail: detail.join("; ") })
}

/// Genie cancellation is error free without noise; classical SIC at
/// SIR -10 dB matches interference-free theory at 10 dB.
pub fn check_sic(seed: u64) -> Result<Check> {
    let sc = Scenario::preset("qpsk_sps32", 256)?;
    let int_tx = TxConfig::with_defaults(Scheme::Qpsk, 32)?;
    let mut genie_errors = 0;
    for t in 0..20 {
        let m = sc.draw(300.0, -10.0, &trial_stream(seed, 300.0, -10.0, t))?;
        let r = run_classic(&m, &ClassicMethod::GenieSic(int_tx.clone()), &sc.soi)?;
        genie_errors += score_ber(&m.tx_bits, &r.rx_bits)?.errors;
    }
    let c = count(&sc, 10.0, -10.0, seed, &ClassicMethod::Sic(int_tx))?;
    let p = theoretical_qpsk_ber(10.0);
    Ok(Check {
        name: "sic",
        passed: genie_errors == 0 && within_3_sigma(c, p),
        detail: format!("noiseless genie errors {genie_errors}; sic {:.4e} vs {:.4e}", c.ber(), p),
    })
}

/// In-band tone at SIR -10 dB: notch below 1e-2, plain MF above 1e-1, and the
/// LS canceller removes at least 20 dB of the tone.
pub fn check_tone(seed: u64) -> Result<Check> {
    let sc = Scenario::preset("tone_in", 256)?;
    let notch = count(&sc, 10.0, -10.0, seed, &ClassicMethod::Notch)?;
    let mf = count(&sc, 10.0, -10.0, seed, &ClassicMethod::Mf)?;
    let mut worst = f64::INFINITY;
    for t in 0..20 {
        let m = sc.draw(10.0, -10.0, &trial_stream(seed, 10.0, -10.0, t))?;
        let out = ls_tone_cancel(&m.y, None)?;
        // what is left of the tone once SoI and noise are taken out
        let residual = out.sub(&m.y)?.add(&m.clean_int)?;
        worst = worst.min(linear_to_db(measure_power(&m.clean_int) / measure_power(&residual)));
    }
    Ok(Check {
        name: "tone",
        passed: notch.ber() < 1e-2 && mf.ber() > 1e-1 && worst >= 20.0,
        detail: format!("notch {:.3e}, mf {:.3e}, ls reduction >= {worst:.1} dB", notch.ber(), mf.ber()),
    })
}

/// Refined fourth-power estimator on clean shaped QPSK with offsets across
/// 0.05..0.1 cycles/sample.
pub fn check_cfo(seed: u64) -> Result<Check> {
    let tx = TxConfig::with_defaults(Scheme::Qpsk, 8)?;
    let mut se = 0.0;
    let mut n = 0;
    for (i, f) in [0.05, 0.0625, 0.075, 0.0875, 0.1].into_iter().enumerate() {
        for t in 0..8 {
            let x = transmit(256, &tx, &RngStream::new(seed, 0xcf0).child(i as u64).child(t))?;
            let e = estimate_cfo_mpower_refined(&apply_cfo(&x.waveform, f)?, 4)? - f;
            se += e * e;
            n += 1;
        }
    }
    let rmse = (se / n as f64).sqrt();
    Ok(Check { name: "cfo", passed: rmse < 1e-3, detail: format!("rmse {rmse:.2e} cycles/sample over {n} offsets") })
}

pub fn selftest(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![check_theory(seed)?, check_zero_isi(seed)?, check_sic(seed)?, check_tone(seed)?, check_cfo(seed)?])
}
