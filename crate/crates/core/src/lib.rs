//! Pulse-preserving skin-tone translation lab.
//!
//! Simulated rPPG video ([`optics`]), classical extractors ([`rppg`]),
//! signal processing and metrics ([`dsp`]), an autodiff engine ([`tensor`]),
//! the estimator and generator networks ([`neural`]) and the experiment
//! driver ([`harness`]). The guide lives in `book/`.

pub mod dsp;
pub mod harness;
pub mod neural;
pub mod optics;
pub mod rppg;
pub mod tensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    struct Overview;
    #[doc = include_str!("../../../book/src/simulator.md")]
    struct Simulator;
    #[doc = include_str!("../../../book/src/extractors.md")]
    struct Extractors;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/harness.md")]
    struct Harness;
    #[doc = include_str!("../../../book/src/acceptance.md")]
    struct Acceptance;
}
