use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Shuffled index sets: part sizes differ by at most one, earlier parts larger.
pub fn partition_indices(n: usize, n_parts: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_parts == 0 {
        return Err(Error::invalid("need at least one part"));
    }
    if n_parts > n {
        return Err(Error::invalid(format!("cannot split {n} samples into {n_parts} parts")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[0x5041_5254]));
    let (base, extra) = (n / n_parts, n % n_parts);
    let mut parts = Vec::with_capacity(n_parts);
    let mut start = 0;
    for p in 0..n_parts {
        let len = base + usize::from(p < extra);
        parts.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(parts)
}

/// Random disjoint split into `n_parts` datasets whose union is the input.
pub fn partition_disjoint(dataset: &Dataset, n_parts: usize, seed: u64) -> Result<Vec<Dataset>> {
    Ok(partition_indices(dataset.len(), n_parts, seed)?
        .iter()
        .map(|idx| dataset.select(idx))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_equal_parts() {
        let parts = partition_indices(60_000, 5, 1).unwrap();
        assert!(parts.iter().all(|p| p.len() == 12_000));
    }

    #[test]
    fn remainder_goes_to_earlier_parts() {
        let a = partition_indices(10, 3, 4).unwrap();
        assert_eq!(a.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(a, partition_indices(10, 3, 4).unwrap());
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn single_part_is_everything() {
        let ds = Dataset::new(1, 1, 3, vec![0.1, 0.2, 0.3], vec![0, 1, 2]).unwrap();
        let parts = partition_disjoint(&ds, 1, 9).unwrap();
        let mut labels = parts[0].labels().to_vec();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn too_many_parts() {
        assert!(matches!(partition_indices(3, 4, 0), Err(Error::InvalidArgument(_))));
        assert!(partition_indices(3, 0, 0).is_err());
    }
}
