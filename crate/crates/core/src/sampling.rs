//! Bernoulli trials over long runs of candidate pairs via geometric skipping.

use rand::Rng;

/// Gap sampler: the number of failures before the next success of a
/// Bernoulli(p) sequence is `floor(ln U / ln(1 - p))` for `U ~ (0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct SkipSampler {
    p: f64,
    ln_q: f64,
}

impl SkipSampler {
    pub fn new(p: f64) -> Self {
        Self {
            p,
            ln_q: (-p).ln_1p(),
        }
    }

    pub fn next_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.p <= 0.0 {
            return u64::MAX;
        }
        if self.p >= 1.0 {
            return 0;
        }
        let u = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / self.ln_q).floor();
        if gap >= u64::MAX as f64 {
            u64::MAX
        } else {
            gap as u64
        }
    }
}

/// Run independent Bernoulli(p) trials over `rows` consecutive runs, where
/// run `a` has `row_len(a)` trials, calling `emit(a, offset)` on each success.
/// Trials are consumed in row-major order from a single stream.
pub fn bernoulli_rows<R: Rng + ?Sized>(
    rows: usize,
    row_len: impl Fn(usize) -> u64,
    p: f64,
    rng: &mut R,
    mut emit: impl FnMut(usize, u64),
) {
    if p <= 0.0 {
        return;
    }
    let sampler = SkipSampler::new(p);
    let mut gap = sampler.next_gap(rng);
    for a in 0..rows {
        let len = row_len(a);
        let mut offset = 0u64;
        while gap < len - offset {
            offset += gap;
            emit(a, offset);
            offset += 1;
            gap = sampler.next_gap(rng);
        }
        gap -= len - offset;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn extreme_probabilities() {
        let mut rng = stream(1, "t", &[]);
        let mut hits = Vec::new();
        bernoulli_rows(3, |a| 3 - a as u64, 1.0, &mut rng, |a, o| hits.push((a, o)));
        assert_eq!(hits, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]);
        hits.clear();
        bernoulli_rows(3, |_| 10, 0.0, &mut rng, |a, o| hits.push((a, o)));
        assert!(hits.is_empty());
    }

    #[test]
    fn success_count_matches_binomial_law() {
        // 200 rows x 500 trials, p = 0.03: mean 3000, sd ~ 53.9.
        let (rows, len, p) = (200usize, 500u64, 0.03);
        let total = rows as f64 * len as f64;
        let mut counts = Vec::new();
        let mut per_column = vec![0u64; len as usize];
        for seed in 0..20 {
            let mut rng = stream(seed, "t", &[]);
            let mut c = 0u64;
            bernoulli_rows(rows, |_| len, p, &mut rng, |_, o| {
                c += 1;
                per_column[o as usize] += 1;
            });
            counts.push(c as f64);
        }
        let sd = (total * p * (1.0 - p)).sqrt();
        for c in &counts {
            assert!((c - total * p).abs() < 5.0 * sd, "{c}");
        }
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        assert!((mean - total * p).abs() < 5.0 * sd / (counts.len() as f64).sqrt());
        // Positions are uniform: first and second half of each row get similar mass.
        let first: u64 = per_column[..250].iter().sum();
        let second: u64 = per_column[250..].iter().sum();
        let n = (first + second) as f64;
        assert!(((first as f64) - n / 2.0).abs() < 5.0 * (n / 4.0).sqrt());
    }
}
