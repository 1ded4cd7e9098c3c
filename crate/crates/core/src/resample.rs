//! Subsample index draws and resample count generation.
//!
//! All functions are pure given the generator they are handed; determinism of
//! the drivers comes from giving every work unit its own
//! [`StreamKey`](crate::rng::StreamKey).

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{DataMatrix, IndexSubset, ResampleFlavor, WeightedSample};

fn check_sizes(n: usize, b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidConfig(
            "subset size must be at least 1".into(),
        ));
    }
    if b > n {
        return Err(Error::SubsetTooLarge { b, n });
    }
    Ok(())
}

/// `b` distinct indices from `0..n`, uniform over all size-`b` subsets.
/// Returned in increasing order.
pub fn draw_subset<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<IndexSubset> {
    check_sizes(n, b)?;
    let mut indices = if b == n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, b).into_vec()
    };
    indices.sort_unstable();
    Ok(IndexSubset::from_distinct_unchecked(indices, n))
}

/// Splits a uniformly random permutation of `0..n` into `floor(n / b)`
/// disjoint blocks of size `b`. The trailing `n mod b` indices are dropped.
pub fn draw_partition<R: Rng + ?Sized>(
    n: usize,
    b: usize,
    rng: &mut R,
) -> Result<Vec<IndexSubset>> {
    check_sizes(n, b)?;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    Ok(perm
        .chunks_exact(b)
        .map(|block| {
            let mut block = block.to_vec();
            block.sort_unstable();
            IndexSubset::from_distinct_unchecked(block, n)
        })
        .collect())
}

/// Counts `(n_1, ..., n_b) ~ Multinomial(n, 1_b / b)`.
///
/// Uses sequential conditional binomials: `n_i ~ Binomial(n - Σ_{a<i} n_a, 1/(b - i))`.
pub fn draw_multinomial_counts<R: Rng + ?Sized>(n: u64, b: usize, rng: &mut R) -> Result<Vec<u64>> {
    if n == 0 || b == 0 {
        return Err(Error::InvalidConfig(
            "multinomial needs n >= 1 and b >= 1".into(),
        ));
    }
    let mut counts = Vec::with_capacity(b);
    let mut remaining = n;
    for i in 0..b - 1 {
        let c = if remaining == 0 {
            0
        } else {
            let p = 1.0 / (b - i) as f64;
            Binomial::new(remaining, p)
                .expect("binomial parameters are valid by construction")
                .sample(rng)
        };
        counts.push(c);
        remaining -= c;
    }
    counts.push(remaining);
    debug_assert_eq!(counts.iter().sum::<u64>(), n);
    Ok(counts)
}

/// Independent `Poisson(n / b)` counts for `b` points, with their realized sum.
///
/// A draw whose counts are all zero is redrawn once; a second all-zero draw is
/// an error.
pub fn draw_poisson_counts<R: Rng + ?Sized>(
    n: u64,
    b: usize,
    rng: &mut R,
) -> Result<(Vec<u64>, u64)> {
    if n == 0 || b == 0 {
        return Err(Error::InvalidConfig(
            "Poisson counts need n >= 1 and b >= 1".into(),
        ));
    }
    let rate = n as f64 / b as f64;
    let dist =
        Poisson::new(rate).map_err(|_| Error::InvalidConfig("invalid Poisson rate".into()))?;
    for _ in 0..2 {
        let counts: Vec<u64> = (0..b).map(|_| dist.sample(rng) as u64).collect();
        let total: u64 = counts.iter().sum();
        if total > 0 {
            return Ok((counts, total));
        }
    }
    Err(Error::DegeneratePoisson)
}

/// A resample of nominal size `nominal` supported on the rows of `subset`.
pub fn resample_weighted<R: Rng + ?Sized>(
    subset: &IndexSubset,
    nominal: u64,
    flavor: ResampleFlavor,
    rng: &mut R,
) -> Result<WeightedSample> {
    if nominal == 0 {
        return Err(Error::InvalidConfig(
            "nominal resample size must be at least 1".into(),
        ));
    }
    let rows = subset.indices().to_vec();
    let (weights, total) = match flavor {
        ResampleFlavor::Multinomial => {
            (draw_multinomial_counts(nominal, rows.len(), rng)?, nominal)
        }
        ResampleFlavor::Poisson => draw_poisson_counts(nominal, rows.len(), rng)?,
    };
    Ok(WeightedSample::from_parts_unchecked(rows, weights, total))
}

/// The classical bootstrap resample: `n` draws with replacement from all `n`
/// rows, as one `Multinomial(n, 1_n / n)` count vector.
pub fn resample_classical<R: Rng + ?Sized>(
    data: &DataMatrix,
    rng: &mut R,
) -> Result<WeightedSample> {
    let n = data.n();
    let weights = draw_multinomial_counts(n as u64, n, rng)?;
    Ok(WeightedSample::from_parts_unchecked(
        (0..n).collect(),
        weights,
        n as u64,
    ))
}

/// `m` draws with replacement from `0..n`, aggregated into distinct rows with
/// counts. Equivalent in law to `Multinomial(m, 1_n / n)` but costs `O(m log m)`.
pub fn draw_with_replacement<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<WeightedSample> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidConfig(
            "draws with replacement need n >= 1 and m >= 1".into(),
        ));
    }
    let mut draws: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    draws.sort_unstable();
    let mut rows = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    for idx in draws {
        if rows.last() == Some(&idx) {
            *weights.last_mut().unwrap() += 1;
        } else {
            rows.push(idx);
            weights.push(1);
        }
    }
    Ok(WeightedSample::from_parts_unchecked(
        rows, weights, m as u64,
    ))
}
