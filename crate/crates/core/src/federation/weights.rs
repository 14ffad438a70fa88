//! Aggregation weight computation and the weighted parameter sum.

use rayon::prelude::*;

use crate::fingerprint::FingerprintConfig;
use crate::learner::{ModelConfig, ParamVector};

use super::{ClientNode, FedConfig, FedError, Mode, SimilarityMatrix, WeightMatrix};

/// Pairwise relevance scores: entry (i, k) is client i's mean proxy
/// similarity under client k's model. Entries are independent and computed
/// in parallel; the diagonal is skipped because the self-weight is mu.
pub fn similarity_matrix(
    clients: &[ClientNode],
    cfg: &FedConfig,
    model_cfg: &ModelConfig,
    fp_cfg: &FingerprintConfig,
) -> Result<SimilarityMatrix, FedError> {
    let k = clients.len();
    for c in clients {
        if c.proxy_len() == 0 {
            return Err(FedError::EmptyProxySet(c.id()));
        }
    }
    let pairs: Vec<(usize, usize)> =
        (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).filter(|&(i, j)| i != j).collect();
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| clients[i].score_external(clients[j].params(), cfg, model_cfg, fp_cfg))
        .collect();
    let mut table = vec![f64::NAN; k * k];
    for (&(i, j), &s) in pairs.iter().zip(&scores) {
        table[i * k + j] = s;
    }
    Ok(SimilarityMatrix::from_off_diagonal(k, |i, j| table[i * k + j]))
}

/// Personalized row-stochastic weights: w_ii = mu, and for i != k
/// w_ik = (1 - mu) * exp(s_ik / tau) / sum_j exp(s_ij / tau).
pub fn ckiw_weights(similarities: &SimilarityMatrix, mu: f64, tau: f64) -> WeightMatrix {
    assert!(tau > 0.0, "tau must be positive");
    assert!((0.0..=1.0).contains(&mu), "mu must be in [0, 1]");
    let k = similarities.k();
    if k == 1 {
        return WeightMatrix::from_rows_unchecked(1, vec![1.0]);
    }
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        let row: Vec<(usize, f64)> = (0..k)
            .filter(|&j| j != i)
            .map(|j| (j, similarities.get(i, j).expect("off-diagonal defined")))
            .collect();
        let max = row.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&(_, s)| ((s - max) / tau).exp()).collect();
        let z: f64 = exps.iter().sum();
        values[i * k + i] = mu;
        for (&(j, _), &e) in row.iter().zip(&exps) {
            values[i * k + j] = (1.0 - mu) * e / z;
        }
    }
    let out = WeightMatrix::from_rows_unchecked(k, values);
    out.validate_row_stochastic().expect("softmax rows are stochastic");
    out
}

/// FedAvg: every row is the training-set-size proportion vector.
pub fn fedavg_weights(sizes: &[usize]) -> Result<WeightMatrix, FedError> {
    if sizes.is_empty() || sizes.iter().any(|&n| n == 0) {
        return Err(FedError::ZeroSize);
    }
    let total: usize = sizes.iter().sum();
    let row: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();
    let k = sizes.len();
    let mut values = Vec::with_capacity(k * k);
    for _ in 0..k {
        values.extend_from_slice(&row);
    }
    let out = WeightMatrix::from_rows_unchecked(k, values);
    out.validate_row_stochastic().expect("proportions are stochastic");
    Ok(out)
}

/// Weighted elementwise sum of parameter vectors in fixed client order.
/// A row with a single weight of 1 returns that model bit-for-bit.
pub fn aggregate(models: &[ParamVector], row: &[f64]) -> Result<ParamVector, FedError> {
    if models.is_empty() || models.len() != row.len() {
        return Err(FedError::BadWeights);
    }
    if row.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(FedError::BadWeights);
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > super::ROW_SUM_TOLERANCE {
        return Err(FedError::BadWeights);
    }
    for m in &models[1..] {
        if !m.same_layout(&models[0]) || m.len() != models[0].len() {
            return Err(FedError::LayoutMismatch);
        }
    }
    if let Some(single) = single_unit_weight(row) {
        return Ok(models[single].clone());
    }
    let mut out = models[0].zeros_like();
    let acc = out.values_mut();
    for (model, &w) in models.iter().zip(row) {
        if w == 0.0 {
            continue;
        }
        for (a, &v) in acc.iter_mut().zip(model.values()) {
            *a += w * v;
        }
    }
    Ok(out)
}

fn single_unit_weight(row: &[f64]) -> Option<usize> {
    let mut found = None;
    for (i, &w) in row.iter().enumerate() {
        if w == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        } else if w != 0.0 {
            return None;
        }
    }
    found
}

/// One aggregation step for a whole round: per-client personalized models
/// under `weights`.
pub(crate) fn aggregate_all(
    models: &[ParamVector],
    weights: &WeightMatrix,
) -> Result<Vec<ParamVector>, FedError> {
    (0..weights.k()).map(|i| aggregate(models, weights.row(i))).collect()
}

pub(crate) fn run_mode_uses_aggregation(mode: Mode) -> bool {
    matches!(mode, Mode::Ckif | Mode::Fedavg)
}

#[cfg(test)]
mod tests {
    use super::super::SimilarityMatrix;
    use super::*;
    use crate::learner::{init_params, ModelConfig};

    fn sim_from(rows: &[&[f64]]) -> SimilarityMatrix {
        let k = rows.len();
        SimilarityMatrix::from_off_diagonal(k, |i, j| rows[i][j])
    }

    #[test]
    fn ckiw_worked_example() {
        // K=3, mu=1/3, tau=1.5, row similarities (0.6, 0.3):
        // off-diagonal weights 0.36656 and 0.30011 to five decimals.
        let s = sim_from(&[
            &[f64::NAN, 0.6, 0.3],
            &[0.5, f64::NAN, 0.5],
            &[0.5, 0.5, f64::NAN],
        ]);
        let w = ckiw_weights(&s, 1.0 / 3.0, 1.5);
        assert!((w.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((w.get(0, 1) - 0.36656).abs() < 5e-6, "{}", w.get(0, 1));
        assert!((w.get(0, 2) - 0.30011).abs() < 5e-6, "{}", w.get(0, 2));
    }

    #[test]
    fn ckiw_equal_similarities_give_uniform_rows() {
        let s = sim_from(&[
            &[f64::NAN, 0.4, 0.4],
            &[0.4, f64::NAN, 0.4],
            &[0.4, 0.4, f64::NAN],
        ]);
        let w = ckiw_weights(&s, 1.0 / 3.0, 1.5);
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.get(i, j) - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ckiw_mu_one_is_identity() {
        let s = sim_from(&[&[f64::NAN, 0.9], &[0.1, f64::NAN]]);
        let w = ckiw_weights(&s, 1.0, 1.5);
        assert_eq!(w.get(0, 0), 1.0);
        assert_eq!(w.get(0, 1), 0.0);
        assert_eq!(w.get(1, 1), 1.0);
    }

    #[test]
    fn ckiw_single_client_degenerates() {
        let s = SimilarityMatrix::from_off_diagonal(1, |_, _| unreachable!());
        let w = ckiw_weights(&s, 1.0, 1.5);
        assert_eq!(w.row(0), &[1.0]);
    }

    #[test]
    fn ckiw_shift_invariance_and_order() {
        let s1 = sim_from(&[&[f64::NAN, 0.7, 0.2], &[0.3, f64::NAN, 0.9], &[0.5, 0.1, f64::NAN]]);
        let s2 = sim_from(&[
            // +0.05 on row 0 only
            &[f64::NAN, 0.75, 0.25],
            &[0.3, f64::NAN, 0.9],
            &[0.5, 0.1, f64::NAN],
        ]);
        let w1 = ckiw_weights(&s1, 0.25, 1.5);
        let w2 = ckiw_weights(&s2, 0.25, 1.5);
        for j in 0..3 {
            assert!((w1.get(0, j) - w2.get(0, j)).abs() < 1e-12);
        }
        // higher similarity -> higher weight
        assert!(w1.get(0, 1) > w1.get(0, 2));
        assert!(w1.get(1, 2) > w1.get(1, 0));
    }

    #[test]
    fn fedavg_rows_are_proportions() {
        let w = fedavg_weights(&[10, 30, 60]).unwrap();
        for i in 0..3 {
            assert!((w.get(i, 0) - 0.1).abs() < 1e-15);
            assert!((w.get(i, 1) - 0.3).abs() < 1e-15);
            assert!((w.get(i, 2) - 0.6).abs() < 1e-15);
        }
        let eq = fedavg_weights(&[5, 5, 5, 5]).unwrap();
        for j in 0..4 {
            assert!((eq.get(0, j) - 0.25).abs() < 1e-15);
        }
        assert_eq!(fedavg_weights(&[7]).unwrap().row(0), &[1.0]);
        assert!(matches!(fedavg_weights(&[3, 0]), Err(FedError::ZeroSize)));
    }

    #[test]
    fn aggregate_unit_row_is_exact_copy() {
        let cfg = ModelConfig::default();
        let models = vec![init_params(&cfg, 1), init_params(&cfg, 2), init_params(&cfg, 3)];
        let out = aggregate(&models, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.values(), models[0].values());
    }

    #[test]
    fn aggregate_identical_models_is_fixed_point() {
        let cfg = ModelConfig::default();
        let m = init_params(&cfg, 9);
        let models = vec![m.clone(), m.clone(), m.clone()];
        let out = aggregate(&models, &[0.2, 0.5, 0.3]).unwrap();
        for (a, b) in out.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_mean_of_two() {
        let cfg = ModelConfig::default();
        let a = init_params(&cfg, 1);
        let b = init_params(&cfg, 2);
        let out = aggregate(&[a.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        for ((o, x), y) in out.values().iter().zip(a.values()).zip(b.values()) {
            assert!((o - 0.5 * (x + y)).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_rejects_bad_rows() {
        let cfg = ModelConfig::default();
        let m = init_params(&cfg, 1);
        let models = vec![m.clone(), m];
        assert!(matches!(aggregate(&models, &[0.7, 0.7]), Err(FedError::BadWeights)));
        assert!(matches!(aggregate(&models, &[1.5, -0.5]), Err(FedError::BadWeights)));
        assert!(matches!(aggregate(&models, &[1.0]), Err(FedError::BadWeights)));
    }
}
