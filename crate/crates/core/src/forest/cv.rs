use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{mix_seed, ForestError, ForestParams, RandomForest};
use crate::features::FeatureMatrix;

pub const DEFAULT_FOLDS: usize = 6;

/// Assigns every sample to one of `k` folds so each class is spread as
/// evenly as possible. Classes are dealt round-robin, continuing where the
/// previous class stopped, after shuffling within the class.
pub fn stratified_folds(y: &[usize], n_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Mean held-out F1-macro over `k` stratified folds. If the rarest class
/// has fewer than `k` samples, `k` is reduced to that count.
pub fn stratified_cv(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    k: usize,
) -> Result<f64, ForestError> {
    if y.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let (rare_class, rare) = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .min_by_key(|(_, &c)| c)
        .map(|(i, &c)| (i, c))
        .expect("non-empty labels");
    if rare < 2 {
        return Err(ForestError::TooFewSamples {
            class: rare_class,
            count: rare,
        });
    }
    let k_eff = k.min(rare).max(2);
    if k_eff < k {
        log::warn!("class {rare_class} has {rare} samples, using {k_eff} folds instead of {k}");
    }
    let folds = stratified_folds(y, n_classes, k_eff, mix_seed(params.seed, 0xcf));
    let scores = (0..k_eff)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
            let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let y_test: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            let fold_params = ForestParams {
                seed: mix_seed(params.seed, 1000 + f as u64),
                ..params.clone()
            };
            let forest = RandomForest::fit(&x.select_rows(&train), &y_train, n_classes, &fold_params)?;
            Ok(forest.score(&x.select_rows(&test), &y_test))
        })
        .collect::<Result<Vec<f64>, ForestError>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub forest: RandomForest,
    pub params: ForestParams,
    pub score: f64,
    /// CV score of every grid entry, in grid order.
    pub scores: Vec<f64>,
}

/// Cross-validates every entry, keeps the best (first on ties) and
/// retrains it on all of `x`.
pub fn grid_search(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    grid: &[ForestParams],
    k: usize,
) -> Result<GridResult, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::EmptyGrid);
    }
    let scores = grid
        .par_iter()
        .map(|p| stratified_cv(x, y, n_classes, p, k))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    let forest = RandomForest::fit(x, y, n_classes, &grid[best])?;
    Ok(GridResult {
        forest,
        params: grid[best].clone(),
        score: scores[best],
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Column;
    use crate::forest::tests::blobs;
    use rand::Rng;

    #[test]
    fn folds_are_stratified() {
        let y: Vec<usize> = (0..100).map(|i| if i < 70 { 0 } else { 1 }).collect();
        let folds = stratified_folds(&y, 2, 6, 1);
        for f in 0..6 {
            let n0 = (0..100).filter(|&i| folds[i] == f && y[i] == 0).count() as f64;
            let n1 = (0..100).filter(|&i| folds[i] == f && y[i] == 1).count() as f64;
            assert!((n0 - 70.0 / 6.0).abs() <= 1.0);
            assert!((n1 - 30.0 / 6.0).abs() <= 1.0);
        }
    }

    #[test]
    fn separable_scores_one() {
        let (x, y) = blobs(120, 2);
        assert_eq!(stratified_cv(&x, &y, 2, &ForestParams::default(), 6).unwrap(), 1.0);
    }

    #[test]
    fn noise_scores_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..600).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let y: Vec<usize> = (0..600).map(|i| i % 2).collect();
        let x = FeatureMatrix::from_rows(vec![Column::External("a".into()), Column::External("b".into())], &rows);
        let s = stratified_cv(&x, &y, 2, &ForestParams::default(), 6).unwrap();
        assert!((0.3..=0.7).contains(&s), "score {s}");
    }

    #[test]
    fn too_few_samples() {
        let (x, _) = blobs(4, 2);
        let y = vec![0, 0, 0, 1];
        assert!(matches!(
            stratified_cv(&x, &y, 2, &ForestParams::default(), 6),
            Err(ForestError::TooFewSamples { class: 1, count: 1 })
        ));
    }

    #[test]
    fn grid_prefers_depth_for_xor() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..240 {
            let a: bool = rng.gen();
            let b: bool = rng.gen();
            rows.push(vec![a as u8 as f64 + rng.gen_range(0.0..0.3), b as u8 as f64 + rng.gen_range(0.0..0.3)]);
            y.push((a ^ b) as usize);
        }
        let x = FeatureMatrix::from_rows(vec![Column::External("a".into()), Column::External("b".into())], &rows);
        let base = ForestParams {
            n_trees: 4,
            features_per_split: Some(2),
            ..ForestParams::default()
        };
        let grid = vec![
            ForestParams { max_depth: 1, ..base.clone() },
            ForestParams { max_depth: 10, ..base.clone() },
        ];
        let r = grid_search(&x, &y, 2, &grid, 6).unwrap();
        assert!(r.scores[0] < r.scores[1]);
        assert_eq!(r.params.max_depth, 10);
        let again = grid_search(&x, &y, 2, &grid, 6).unwrap();
        assert_eq!(again.forest, r.forest);
    }

    #[test]
    fn single_entry_grid() {
        let (x, y) = blobs(60, 8);
        let p = ForestParams::default();
        let r = grid_search(&x, &y, 2, std::slice::from_ref(&p), 6).unwrap();
        assert_eq!(r.params, p);
        assert_eq!(r.score, stratified_cv(&x, &y, 2, &p, 6).unwrap());
        assert!(matches!(grid_search(&x, &y, 2, &[], 6), Err(ForestError::EmptyGrid)));
    }
}
