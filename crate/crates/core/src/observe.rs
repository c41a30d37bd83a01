//! Noisy observations of the number of critical messages.

use rand::Rng;

use crate::error::{domain, Result};

/// Slack for probabilities derived as `1 - p`.
pub const PROB_EPS: f64 = 1e-12;

/// A candidate number of critical messages.
pub type State = u32;

/// Observation law over the state space `{1, ..., s_max}`.
///
/// A device reports the true state with probability `1 - q`, where `q` is
/// the missed-detection probability for its distance to the event. A miss
/// reports one of the other states uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    s_max: u32,
    p_01_inside: f64,
    p_01_outside: f64,
    r_d: f64,
}

impl ObservationModel {
    pub fn new(s_max: u32, p_01_inside: f64, p_01_outside: f64, r_d: f64) -> Result<Self> {
        if s_max < 1 {
            return Err(domain("state space is empty"));
        }
        if !(0.0..1.0).contains(&p_01_inside) || !(0.0..1.0).contains(&p_01_outside) {
            return Err(domain("missed-detection probabilities must lie in [0, 1)"));
        }
        if p_01_inside > p_01_outside + PROB_EPS {
            return Err(domain(format!(
                "in-range miss probability {p_01_inside} exceeds out-of-range {p_01_outside}"
            )));
        }
        Ok(ObservationModel {
            s_max,
            p_01_inside,
            p_01_outside,
            r_d,
        })
    }

    pub fn s_max(&self) -> u32 {
        self.s_max
    }

    pub fn p_01_inside(&self) -> f64 {
        self.p_01_inside
    }

    pub fn p_01_outside(&self) -> f64 {
        self.p_01_outside
    }

    pub fn r_d(&self) -> f64 {
        self.r_d
    }

    pub fn contains(&self, s: State) -> bool {
        (1..=self.s_max).contains(&s)
    }

    pub fn miss_probability(&self, dist_to_event: f64) -> f64 {
        if dist_to_event <= self.r_d {
            self.p_01_inside
        } else {
            self.p_01_outside
        }
    }

    /// `Pr(e = observed | truth)` at the given distance.
    pub fn pmf(&self, dist_to_event: f64, truth: State, observed: State) -> f64 {
        if !self.contains(observed) {
            return 0.0;
        }
        if self.s_max == 1 {
            return 1.0;
        }
        let q = self.miss_probability(dist_to_event);
        if observed == truth {
            1.0 - q
        } else {
            q / (self.s_max - 1) as f64
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, dist_to_event: f64, truth: State, rng: &mut R) -> State {
        debug_assert!(self.contains(truth));
        if self.s_max == 1 {
            return truth;
        }
        let q = self.miss_probability(dist_to_event);
        if q == 0.0 || rng.random::<f64>() >= q {
            return truth;
        }
        let pick = rng.random_range(1..self.s_max);
        if pick >= truth {
            pick + 1
        } else {
            pick
        }
    }
}

/// 1 when the observation matches the favored state, else 0.
pub fn binarize(observed: State, favored: State) -> u8 {
    u8::from(observed == favored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frequencies(
        model: &ObservationModel,
        dist: f64,
        truth: State,
        draws: usize,
        seed: u64,
    ) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; model.s_max() as usize + 1];
        for _ in 0..draws {
            counts[model.sample(dist, truth, &mut rng) as usize] += 1;
        }
        counts
    }

    #[test]
    fn perfect_detection_always_truth() {
        let model = ObservationModel::new(11, 0.0, 0.0, 10.0).unwrap();
        let counts = frequencies(&model, 50.0, 4, 1000, 1);
        assert_eq!(counts[4], 1000);
    }

    #[test]
    fn inside_and_outside_frequencies() {
        let model = ObservationModel::new(11, 0.1, 0.9, 10.0).unwrap();
        let n = 100_000;
        let inside = frequencies(&model, 3.0, 6, n, 2);
        assert!((inside[6] as f64 / n as f64 - 0.9).abs() < 0.01);
        let outside = frequencies(&model, 30.0, 6, n, 3);
        assert!((outside[6] as f64 / n as f64 - 0.1).abs() < 0.01);
        // boundary is inside
        assert_eq!(model.miss_probability(10.0), 0.1);
    }

    #[test]
    fn truth_dominates_and_misses_are_uniform() {
        let n = 100_000;
        for (s_max, p01) in [(2u32, 0.3), (5, 0.2), (20, 0.3), (20, 0.05)] {
            let model = ObservationModel::new(s_max, p01, 0.9, 10.0).unwrap();
            let truth = s_max / 2 + 1;
            let counts = frequencies(&model, 0.0, truth, n, s_max as u64);
            let wrong_p = p01 / (s_max - 1) as f64;
            let sigma = (n as f64 * wrong_p * (1.0 - wrong_p)).sqrt();
            for s in 1..=s_max {
                if s == truth {
                    continue;
                }
                assert!(counts[truth as usize] > counts[s as usize]);
                let dev = (counts[s as usize] as f64 - n as f64 * wrong_p).abs();
                assert!(dev < 3.0 * sigma + 1.0, "state {s}: {dev} vs {sigma}");
            }
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        let model = ObservationModel::new(20, 0.1, 0.9, 10.0).unwrap();
        for dist in [0.0, 10.0, 10.5, 80.0] {
            for truth in 1..=20 {
                let total: f64 = (1..=20).map(|s| model.pmf(dist, truth, s)).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_state_is_degenerate() {
        let model = ObservationModel::new(1, 0.5, 0.9, 1.0).unwrap();
        assert_eq!(frequencies(&model, 5.0, 1, 100, 4)[1], 100);
    }

    #[test]
    fn binarize_matches() {
        assert_eq!(binarize(3, 3), 1);
        assert_eq!(binarize(4, 3), 0);
    }

    #[test]
    fn binarized_favored_rate_inside() {
        let model = ObservationModel::new(20, 0.1, 0.9, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let ones: u32 = (0..n)
            .map(|_| binarize(model.sample(1.0, 7, &mut rng), 7) as u32)
            .sum();
        assert!((ones as f64 / n as f64 - 0.9).abs() < 0.01);
    }

    #[test]
    fn rejects_inverted_miss_probabilities() {
        assert!(ObservationModel::new(5, 0.5, 0.1, 1.0).is_err());
        assert!(ObservationModel::new(5, 1.0 - 0.98, 0.02, 1.0).is_ok());
    }
}
