use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of each fold's training portion held out as the dev set.
pub const DEV_FRACTION_DENOM: usize = 10;

/// Document indices of one fold, each list sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled k-fold split of `n` items. Test folds differ in size by at most
/// one; the dev set is `train.len() / 10` items drawn from the training part.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} documents cannot form {k} folds")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for index in 0..k {
        let size = base + usize::from(index < extra);
        let mut test = order[offset..offset + size].to_vec();
        let mut rest: Vec<usize> = order[..offset].iter().chain(&order[offset + size..]).copied().collect();
        offset += size;

        rest.shuffle(&mut rng);
        let n_dev = rest.len() / DEV_FRACTION_DENOM;
        let mut dev = rest[..n_dev].to_vec();
        let mut train = rest[n_dev..].to_vec();
        test.sort_unstable();
        dev.sort_unstable();
        train.sort_unstable();
        folds.push(Fold {
            index,
            train,
            dev,
            test,
        });
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_folds_over_table_one_sentences() {
        let folds = kfold_split(4272, 10, 7).unwrap();
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        assert!(sizes.iter().all(|s| *s == 427 || *s == 428));
        assert_eq!(sizes.iter().sum::<usize>(), 4272);
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..4272).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.train.len() + f.dev.len() + f.test.len(), 4272);
            assert_eq!(f.dev.len(), (4272 - f.test.len()) / 10);
            assert!(f
                .train
                .iter()
                .all(|i| f.test.binary_search(i).is_err() && f.dev.binary_search(i).is_err()));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(kfold_split(50, 5, 3).unwrap(), kfold_split(50, 5, 3).unwrap());
        assert_ne!(kfold_split(50, 5, 3).unwrap(), kfold_split(50, 5, 4).unwrap());
    }

    #[test]
    fn too_few_documents() {
        assert!(matches!(kfold_split(3, 10, 0), Err(Error::Config(_))));
        assert!(kfold_split(10, 1, 0).is_err());
    }
}
