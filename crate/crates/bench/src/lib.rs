//! Shared inputs for the benchmarks.

use har_core::dataset::Split;
use har_core::features::FeatureExtractor;
use har_core::nn::Example;
use har_core::synthetic::{synth_split, SyntheticSpec};
use har_core::{LabeledSample, WelchConfig};

/// A small reproducible training split with every class present.
pub fn samples(per_class: usize) -> Vec<LabeledSample> {
    let spec = SyntheticSpec {
        seed: 7,
        train_counts: [per_class; 6],
        test_counts: [0; 6],
    };
    synth_split(&spec, Split::Train)
}

/// Network inputs for `samples`, z-scored over the same set.
pub fn examples(samples: &[LabeledSample]) -> Vec<Example<f32>> {
    let extractor = FeatureExtractor::new(WelchConfig::default()).expect("default config");
    let raw = extractor.extract_all(samples).expect("finite synthetic data");
    let stats = har_core::features::fit_normalizer(&raw, har_core::features::DEFAULT_EPSILON).expect("non-empty");
    raw.iter()
        .zip(samples)
        .map(|(t, s)| {
            let z = har_core::features::apply_normalizer(t, &stats).expect("matching shapes");
            Example::from_features(&z, s.class.index())
        })
        .collect()
}
