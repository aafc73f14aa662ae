//! Fixtures shared by the benchmarks.

use imix_core::models::dataset::iq_to_tensor;
use imix_core::nn::Tensor;
use imix_core::scenario::Scenario;
use imix_core::signal::{IqBuffer, RngStream};

/// `n` desk-length AWGN mixtures at 6 dB.
pub fn mixtures(n: usize) -> Vec<IqBuffer> {
    let sc = Scenario::awgn(256);
    (0..n).map(|k| sc.draw(6.0, f64::INFINITY, &RngStream::new(7, k as u64)).expect("valid scenario").y).collect()
}

/// A `(n, 2, len)` network batch of [`mixtures`].
pub fn batch(n: usize) -> Tensor<f32> {
    let m = mixtures(n);
    iq_to_tensor(&m.iter().collect::<Vec<_>>()).expect("equal lengths")
}
