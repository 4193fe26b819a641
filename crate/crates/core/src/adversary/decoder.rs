//! The coin-problem oracle and the majority (maximum-likelihood) decoder.

use super::bits::PackedRow;
use super::instance::HardInstance;
use crate::engine::neumaier_sum;
use crate::error::{param, Result};

/// Exact error probability of majority vote over `n` independent votes,
/// each correct with probability `½ + β`. Ties resolve to `+1`, which is
/// wrong half the time under a symmetric concept.
pub fn coin_oracle(n: usize, beta: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&beta) {
        return Err(param(format!("beta must lie in [0, 1/2), got {beta}")));
    }
    if n == 0 {
        return Ok(0.5);
    }
    let q = 0.5 + beta;
    let wrong = 0.5 - beta;
    // P(k correct votes); error when k < n/2, half of k = n/2
    let weight = |k: usize| -> f64 {
        if 2 * k < n {
            1.0
        } else if 2 * k == n {
            0.5
        } else {
            0.0
        }
    };
    let limit = n / 2;
    if n <= 60 {
        // double-double accumulation, so small cases round correctly
        let mut c: u128 = 1;
        let (q_dd, wrong_dd) = (Dd::two_sum(0.5, beta), Dd::two_sum(0.5, -beta));
        let mut total = Dd::ZERO;
        for k in 0..=limit {
            if k > 0 {
                c = c * (n - k + 1) as u128 / k as u128;
            }
            let w = weight(k);
            if w > 0.0 {
                let term = Dd::from_u128(c).mul(Dd::powi(q_dd, k)).mul(Dd::powi(wrong_dd, n - k));
                total = total.add(term.scale(w));
            }
        }
        return Ok(total.value());
    }
    let (lq, lw) = (q.ln(), wrong.ln());
    let mut log_c = 0.0;
    let mut logs = Vec::with_capacity(limit + 1);
    for k in 0..=limit {
        if k > 0 {
            log_c += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let w = weight(k);
        if w > 0.0 {
            logs.push(w.ln() + log_c + k as f64 * lq + (n - k) as f64 * lw);
        }
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((max + neumaier_sum(logs.iter().map(|l| (l - max).exp())).ln()).exp())
}

/// An unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn renorm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn from_u128(c: u128) -> Dd {
        let hi = c as f64;
        let lo = if hi as u128 >= c {
            -((hi as u128 - c) as f64)
        } else {
            (c - hi as u128) as f64
        };
        Dd::renorm(hi, lo)
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::renorm(s.hi, s.lo + self.lo + o.lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn scale(self, w: f64) -> Dd {
        self.mul(Dd { hi: w, lo: 0.0 })
    }

    fn powi(base: Dd, k: usize) -> Dd {
        (0..k).fold(Dd { hi: 1.0, lo: 0.0 }, |acc, _| acc.mul(base))
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `(1 − 1/(2m))^m`: the chance a fixed point of `[2m]` is missing from
/// `m` uniform draws.
pub fn miss_probability(m: usize) -> f64 {
    let m_f = m as f64;
    (m_f * (-1.0 / (2.0 * m_f)).ln_1p()).exp()
}

/// Expected loss of the majority decoder over `[2m]` with `votes` biased
/// rows of bias `β`.
pub fn expected_majority_loss(m: usize, votes: usize, beta: f64) -> Result<f64> {
    Ok(miss_probability(m) * coin_oracle(votes, beta)?)
}

/// The decoder built only from `(S, c(S), H)` and the public layout: labels
/// on the sample, majority of the biased rows elsewhere.
pub fn majority_vote(
    domain: usize,
    sample: &[usize],
    labels: &[i8],
    rows: &[PackedRow],
    biased: impl IntoIterator<Item = usize>,
) -> PackedRow {
    let mut sums = vec![0i64; domain];
    for r in biased {
        let row = &rows[r];
        for (i, s) in sums.iter_mut().enumerate() {
            *s += i64::from(row.get(i));
        }
    }
    let mut out = PackedRow::from_signs(&sums.iter().map(|&s| if s >= 0 { 1 } else { -1 }).collect::<Vec<i8>>());
    for (&i, &y) in sample.iter().zip(labels) {
        out.set(i, y);
    }
    out
}

/// [`majority_vote`] on an instance; reads the concept only on `sample`.
pub fn majority_decoder(instance: &HardInstance, sample: &[usize]) -> PackedRow {
    let labels = instance.labels_of(sample);
    majority_vote(
        instance.domain(),
        sample,
        &labels,
        instance.rows(),
        instance.layout.biased_rows(),
    )
}

/// Fraction of `[2m]` where `h` disagrees with `c`.
pub fn uniform_loss(h: &PackedRow, concept: &PackedRow) -> f64 {
    h.hamming(concept) as f64 / concept.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::instance::{draw_training_sample, InstanceParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Binomial, Discrete, DiscreteCDF};

    #[test]
    fn coin_examples() {
        assert_eq!(coin_oracle(3, 0.1).unwrap(), 0.352);
        for b in [0.0, 0.05, 0.1, 0.2, 0.3, 0.45] {
            assert!((coin_oracle(1, b).unwrap() - (0.5 - b)).abs() < 1e-15);
        }
        for n in [1, 3, 5, 101, 1001] {
            assert!((coin_oracle(n, 0.0).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!(coin_oracle(3, 0.5).is_err());
        assert!(coin_oracle(3, -0.1).is_err());
    }

    #[test]
    fn coin_matches_binomial_oracle() {
        for n in [2usize, 4, 7, 32, 59, 60, 61, 200, 999] {
            for beta in [0.01, 0.1, 0.25] {
                let b = Binomial::new(0.5 + beta, n as u64).unwrap();
                let below = if n % 2 == 0 { n / 2 - 1 } else { n / 2 };
                let mut want = b.cdf(below as u64);
                if n % 2 == 0 {
                    want += 0.5 * b.pmf((n / 2) as u64);
                }
                let got = coin_oracle(n, beta).unwrap();
                assert!((got - want).abs() < 1e-12 * want.max(1e-300) + 1e-15, "n={n} β={beta}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn coin_monotone() {
        for beta in [0.02, 0.1, 0.2] {
            for parity in 0..2 {
                let mut prev = 1.0;
                for n in (1 + parity..80).step_by(2) {
                    let v = coin_oracle(n, beta).unwrap();
                    assert!(v <= prev + 1e-15);
                    prev = v;
                }
            }
        }
        for n in [1, 4, 9] {
            let mut prev = 1.0;
            for i in 0..49 {
                let v = coin_oracle(n, i as f64 / 100.0).unwrap();
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn decoder_uses_sample_labels_and_matches_view_only_build() {
        let params = InstanceParams::new(40, 1.0, 2, 3, 0.1);
        let inst = HardInstance::generate(params, 5, 1 << 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = draw_training_sample(40, &mut rng);
        let h = majority_decoder(&inst, &s);
        for &i in &s {
            assert_eq!(h.get(i), inst.concept().get(i));
        }
        // rebuild from (S, c(S), H) with the concept row scrubbed
        let labels: Vec<i8> = s.iter().map(|&i| inst.concept().get(i)).collect();
        let rebuilt = majority_vote(inst.domain(), &s, &labels, inst.hypothesis_rows(), inst.layout.biased_rows());
        assert_eq!(h, rebuilt);
    }

    #[test]
    fn single_biased_row_error() {
        // pR = 1: the decoder copies the one biased row off the sample
        let params = InstanceParams::new(2000, 0.5, 1, 1, 0.1);
        let inst = HardInstance::generate(params, 8, 1 << 24).unwrap();
        let h = majority_decoder(&inst, &[]);
        let err = uniform_loss(&h, inst.concept());
        assert!((err - 0.4).abs() < 4.0 * (0.24f64 / 4000.0).sqrt());
    }

    #[test]
    fn miss_probability_small() {
        assert!((miss_probability(1) - 0.5).abs() < 1e-15);
        assert!((miss_probability(2) - 0.5625).abs() < 1e-15);
    }
}
