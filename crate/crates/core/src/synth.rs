//! Synthetic corpora with known structure, used to validate the training,
//! routing, and attribution stages against ground truth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{FeatureSeries, FeatureVector, Form, Foundation, Label, FEATURE_COUNT};

/// Feature index carrying the class signal in the planted corpus
/// (s_net_overlap).
pub const PLANTED_FEATURE: usize = 5;

/// One stamp feature per foundation; a project's home foundation shows a
/// high value there and near-zero on the other three.
pub const STAMP_FEATURES: [usize; 4] = [2, 10, 11, 12];

/// Sustainability-signal feature per foundation. They are distinct on
/// purpose: a mis-routed project is judged on the wrong feature, so
/// routing mistakes visibly change forecasts.
pub const SIGNAL_FEATURES: [usize; 4] = [5, 6, 4, 7];

fn noise_vector(rng: &mut impl Rng) -> [f64; FEATURE_COUNT] {
    let mut values = [0.0; FEATURE_COUNT];
    for v in values.iter_mut() {
        *v = rng.gen_range(0.0..0.3);
    }
    values
}

fn signal_level(label: Label, rng: &mut impl Rng) -> f64 {
    match label {
        Label::Graduated => rng.gen_range(0.6..0.8),
        Label::Retired => rng.gen_range(0.15..0.35),
    }
}

/// A linearly separable two-class corpus: `months`-long series where one
/// designated feature carries a clean mean shift between graduated and
/// retired projects. Every fifth project is retired (a 4:1 imbalance).
pub fn planted_corpus(n_projects: usize, months: usize, seed: u64) -> Vec<FeatureSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_projects)
        .map(|i| {
            let label = if i % 5 == 4 { Label::Retired } else { Label::Graduated };
            let len = months.saturating_sub(i % 3).max(1);
            let months = (0..len)
                .map(|_| {
                    let mut values = noise_vector(&mut rng);
                    values[PLANTED_FEATURE] = signal_level(label, &mut rng);
                    FeatureVector {
                        values,
                        form: Form::Normalized,
                    }
                })
                .collect();
            FeatureSeries {
                project_id: format!("planted-{i:03}"),
                months,
                label: Some(label),
                foundation: None,
            }
        })
        .collect()
}

/// A series stamped as belonging to `stamp`'s cluster while its outcome
/// signal sits on `signal`'s feature. The two coincide for ordinary
/// corpus members; pulling them apart yields adversarial inputs that an
/// imperfect router sends to the wrong forecaster.
pub fn clustered_series(
    project_id: &str,
    stamp: Foundation,
    signal: Foundation,
    label: Label,
    months: usize,
    rng: &mut impl Rng,
) -> FeatureSeries {
    let stamp_idx = Foundation::ALL.iter().position(|f| *f == stamp).unwrap();
    let signal_idx = Foundation::ALL.iter().position(|f| *f == signal).unwrap();
    let months = (0..months.max(1))
        .map(|_| {
            let mut values = [0.0; FEATURE_COUNT];
            for v in values.iter_mut() {
                *v = rng.gen_range(0.0..0.12);
            }
            for (f, idx) in STAMP_FEATURES.iter().enumerate() {
                values[*idx] = if f == stamp_idx {
                    rng.gen_range(0.7..0.9)
                } else {
                    rng.gen_range(0.0..0.12)
                };
            }
            values[SIGNAL_FEATURES[signal_idx]] = signal_level(label, rng);
            FeatureVector {
                values,
                form: Form::Normalized,
            }
        })
        .collect();
    FeatureSeries {
        project_id: project_id.into(),
        months,
        label: Some(label),
        foundation: Some(signal),
    }
}

/// Four well-separated foundation clusters, each with its own outcome
/// signal and a 3:1 graduated/retired mix.
pub fn four_cluster_corpus(n_per_foundation: usize, months: usize, seed: u64) -> Vec<FeatureSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(4 * n_per_foundation);
    for foundation in Foundation::ALL {
        for i in 0..n_per_foundation {
            let label = if i % 4 == 3 { Label::Retired } else { Label::Graduated };
            let len = months.saturating_sub(i % 3).max(1);
            out.push(clustered_series(
                &format!("{foundation}-{i:03}"),
                foundation,
                foundation,
                label,
                len,
                &mut rng,
            ));
        }
    }
    out
}
