//! Fixed inputs shared by the benchmarks.

use tfblur::gabor::{make_window, Lattice, Window, WindowKind};
use tfblur::kernels::gaussian_kernel;
use tfblur::operators::BlurSpec;
use tfblur::signal::{gen_signal, Signal, SignalKind};
use tfblur::FeatureConfig;

/// One second of seeded noise at 16 kHz.
pub fn clip() -> Signal {
    gen_signal(&SignalKind::WhiteNoise, 16_000, 16_000, 1).expect("valid noise")
}

pub fn hann(len: usize) -> Window {
    make_window(&WindowKind::Hann, len).expect("positive length")
}

pub fn feature_lattice() -> Lattice {
    FeatureConfig::default().lattice().expect("default lattice")
}

/// The augmentation-strength Gaussian blur on the feature lattice.
pub fn feature_blur() -> BlurSpec {
    BlurSpec::new(
        hann(1024),
        gaussian_kernel(2.0, 4.0, 4.0).expect("valid kernel"),
        feature_lattice(),
    )
}
