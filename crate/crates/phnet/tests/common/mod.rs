//! Independent oracles shared by the integration suites. Everything here is
//! deliberately naive — brute-force pair counting, textbook Jacobi rotations,
//! element-wise formula evaluation — so that agreement with the library is
//! evidence, not tautology.

#![allow(dead_code)]

use ndarray::Array2;

/// Tiny 12-sample run configuration for CLI-level tests: full pipeline,
/// miniature everything.
pub const MICRO_CONFIG: &str = r#"{
  "cohort": {
    "n_per_class": [4, 4, 4], "seed": 0, "noise_sigma": 0.05,
    "rac_params": [
      {"mean": 0.6, "std": 0.08},
      {"mean": 0.15, "std": 0.05},
      {"mean": 0.35, "std": 0.07}
    ],
    "raw_frames": 8, "spacing_range": [1.2, 1.6],
    "flag_rates": {
      "sex": [0.45, 0.4, 0.55], "ihd": [0.1, 0.2, 0.3],
      "dcm": [0.05, 0.1, 0.45], "vhd": [0.05, 0.1, 0.5],
      "copd": [0.1, 0.35, 0.15], "portal_htn": [0.02, 0.05, 0.1],
      "rid": [0.03, 0.15, 0.05], "hyperthyroid": [0.05, 0.25, 0.08],
      "renal_insuff": [0.08, 0.15, 0.3]
    }
  },
  "preprocess": {
    "target_spacing": 1.4, "sax_shape": [16, 16, 4], "ch4_shape": [20, 20],
    "frames_out": 2, "frame_step": 5, "roi_margin_px": 2
  },
  "model": {
    "encoder": {
      "channels": [2, 3], "kernel": 3, "downsample_factor": 2,
      "d_model": 8, "n_heads": 2, "use_positional_encoding": true,
      "n_image_nodes": 3, "frames": 2
    },
    "fusion": {
      "adjacency": "bipartite", "n_clinical_nodes": 11,
      "gcn_widths": [4, 2], "mlp_hidden": 6, "use_gcn": true
    }
  },
  "train": {
    "learning_rate": 0.006, "batch_size": 2, "epochs": 2, "seed": 0,
    "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_eps": 1e-8, "shuffle": true
  },
  "experiment": {
    "repeats": 2, "per_class_test": 1,
    "sweep_min": 6, "sweep_max": 9, "sweep_step": 3, "node_list": [2, 3]
  }
}"#;

/// One-vs-rest AUC for class `k` by exhaustive pair counting, accumulated in
/// integer half-units (a win counts 2, a tie 1) so the only rounding is the
/// single closing division.
pub fn auc_pair_counting(scores: &[f64], labels: &[usize], k: usize) -> Option<f64> {
    let mut halves: u64 = 0;
    let mut n_pos: u64 = 0;
    for (i, (&si, &li)) in scores.iter().zip(labels).enumerate() {
        if li != k {
            continue;
        }
        n_pos += 1;
        for (j, (&sj, &lj)) in scores.iter().zip(labels).enumerate() {
            if i == j || lj == k {
                continue;
            }
            halves += match si.partial_cmp(&sj).expect("NaN score") {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    let n_neg = labels.iter().filter(|&&l| l != k).count() as u64;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    Some(halves as f64 / (2 * n_pos * n_neg) as f64)
}

/// Element-wise Eq. D̃^{-1/2}(A+I)D̃^{-1/2}: the hand computation the library
/// must match. `d[i]` is the self-loop-augmented degree.
pub fn normalized_adjacency_by_hand(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| 1.0 + a.row(i).sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let aij = a[[i, j]] + f64::from(i == j);
        aij / (d[i] * d[j]).sqrt()
    })
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Good to
/// ~1e-12 for the small graphs used in the tests.
pub fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "matrix must be square");
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = c * api - s * aqi;
                    a[[q, i]] = s * api + c * aqi;
                }
            }
        }
    }
    (0..n).map(|i| a[[i, i]]).collect()
}

/// Random binary symmetric zero-diagonal matrix (a valid adjacency) with at
/// least one edge, driven by a caller-owned RNG.
pub fn random_adjacency(rng: &mut impl rand::Rng, n: usize) -> Array2<f64> {
    loop {
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.5) {
                    a[[i, j]] = 1.0;
                    a[[j, i]] = 1.0;
                }
            }
        }
        if a.sum() > 0.0 || n == 1 {
            return a;
        }
    }
}

#[cfg(test)]
mod oracle_sanity {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let mut ev = jacobi_eigenvalues(&m);
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pair_counting_on_known_case() {
        // scores 0.9,0.8 positive vs 0.8,0.1 negative for class 1:
        // pairs (0.9>0.8)=2, (0.9>0.1)=2, (0.8=0.8)=1, (0.8>0.1)=2 → 7/8.
        let auc = auc_pair_counting(&[0.9, 0.8, 0.8, 0.1], &[1, 1, 0, 0], 1).unwrap();
        assert_eq!(auc, 7.0 / 8.0);
    }
}
