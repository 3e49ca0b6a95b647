//! Graph fusion stage: adjacency construction and normalization, two graph
//! convolution layers, and the MLP classifier head.
//!
//! The graph has `n_image_nodes + n_clinical_nodes` nodes, each carrying a
//! single scalar feature. The default topology is the complete bipartite
//! graph between the image side and the clinical side: every image node
//! talks to every clinical node and to nothing on its own side.
//!
//! Why not a complete graph? With self-loops added, the normalized
//! adjacency of the complete graph is the rank-one matrix `J/n`, so one
//! graph convolution replaces every node feature with the same mean value:
//! all per-node information collapses before the classifier ever sees it.
//! The bipartite layout keeps distinct row patterns (image rows average the
//! clinical side and vice versa), which preserves node identity. This
//! failure mode is pinned by a test below.

use ndarray::Array2;

use crate::config::AdjacencyMode;
use crate::error::{PhnetError, Result};
use crate::ops::*;
use crate::real::Real;
use crate::tape::{Tape, Var};

/// Build the 0/1 adjacency matrix (zero diagonal) for `mode`.
///
/// `custom` supplies the matrix in [`AdjacencyMode::Custom`] and must be a
/// symmetric 0/1 square of size `n_img + n_clin` with a zero diagonal.
pub fn build_adjacency(
    mode: AdjacencyMode,
    n_img: usize,
    n_clin: usize,
    custom: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    let n = n_img + n_clin;
    if n == 0 {
        return Err(PhnetError::InvalidConfig("graph must have nodes".into()));
    }
    let a = match mode {
        AdjacencyMode::Bipartite => Array2::from_shape_fn((n, n), |(i, j)| {
            f64::from((i < n_img) != (j < n_img))
        }),
        AdjacencyMode::Complete => Array2::from_shape_fn((n, n), |(i, j)| f64::from(i != j)),
        AdjacencyMode::Custom => {
            let c = custom.ok_or_else(|| {
                PhnetError::InvalidConfig("custom adjacency mode needs a matrix".into())
            })?;
            c.clone()
        }
    };
    validate_adjacency(&a, n)?;
    Ok(a)
}

/// Check the 0/1, symmetry, zero-diagonal, and size contracts.
pub fn validate_adjacency(a: &Array2<f64>, n: usize) -> Result<()> {
    if a.shape() != [n, n] {
        return Err(PhnetError::ShapeMismatch {
            context: "adjacency".into(),
            expected: format!("[{n}, {n}]"),
            got: format!("{:?}", a.shape()),
        });
    }
    for i in 0..n {
        if a[[i, i]] != 0.0 {
            return Err(PhnetError::InvalidConfig(format!(
                "adjacency diagonal must be zero (node {i})"
            )));
        }
        for j in 0..n {
            let v = a[[i, j]];
            if v != 0.0 && v != 1.0 {
                return Err(PhnetError::InvalidConfig(format!(
                    "adjacency entries must be 0 or 1, got {v} at ({i}, {j})"
                )));
            }
            if v != a[[j, i]] {
                return Err(PhnetError::InvalidConfig(format!(
                    "adjacency must be symmetric, differs at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Symmetric normalization with self-loops:
/// `A_hat = D^(-1/2) (A + I) D^(-1/2)` where `D` holds the row sums of
/// `A + I`. Self-loops guarantee every degree is at least one.
pub fn normalize_adjacency(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    validate_adjacency(a, n)?;
    let mut tilde = a.clone();
    for i in 0..n {
        tilde[[i, i]] = 1.0;
    }
    let deg: Vec<f64> = tilde.rows().into_iter().map(|r| r.sum()).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut out = tilde;
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// Load a custom adjacency from a whitespace-separated text file of 0/1
/// rows (one matrix row per line).
pub fn read_adjacency_file(path: &std::path::Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PhnetError::io(path.display().to_string(), e))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        PhnetError::format(path.display().to_string(), format!("bad entry '{t}'"))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PhnetError::format(
            path.display().to_string(),
            "adjacency file must be a non-empty square matrix",
        ));
    }
    let mut a = Array2::zeros((n, n));
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            a[[i, j]] = v;
        }
    }
    Ok(a)
}

/// Tape handles of the two GCN layers.
#[derive(Debug, Clone, Copy)]
pub struct GcnVars {
    pub l1w: Var,
    pub l1b: Var,
    pub l2w: Var,
    pub l2b: Var,
}

/// Tape handles of the classifier MLP.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Two graph convolutions over node features `[n, 1]`:
/// `H' = ReLU(A_hat H W + b)` twice. Returns `[n, gcn_widths[1]]`.
pub fn gcn_forward<T: Real>(
    tape: &mut Tape<T>,
    h0: Var,
    a_hat: &Array2<T>,
    g: &GcnVars,
) -> Var {
    let a = tape.leaf(a_hat.clone().into_dyn());
    let h = matmul(tape, a, h0);
    let h = linear(tape, h, g.l1w, g.l1b);
    let h = relu(tape, h);
    let h = matmul(tape, a, h);
    let h = linear(tape, h, g.l2w, g.l2b);
    relu(tape, h)
}

/// Value-level (tape-free) GCN evaluation returning the output of each
/// layer — used to inspect intermediate node features, e.g. to demonstrate
/// the complete-graph collapse, and as an independent oracle for the taped
/// forward pass.
#[allow(clippy::too_many_arguments)]
pub fn gcn_layer_outputs(
    a_hat: &Array2<f64>,
    h0: &Array2<f64>,
    l1w: &Array2<f64>,
    l1b: &[f64],
    l2w: &Array2<f64>,
    l2b: &[f64],
) -> (Array2<f64>, Array2<f64>) {
    let mut h1 = a_hat.dot(h0).dot(l1w);
    for mut row in h1.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v + l1b[j]).max(0.0);
        }
    }
    let mut h2 = a_hat.dot(&h1).dot(l2w);
    for mut row in h2.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v + l2b[j]).max(0.0);
        }
    }
    (h1, h2)
}

/// Flatten node features and classify: `[n, f]` (or a rank-1 `[n]`) ->
/// hidden ReLU layer -> 3 logits.
pub fn mlp_head<T: Real>(tape: &mut Tape<T>, feats: Var, head: &HeadVars) -> Var {
    let width = tape.val(feats).len();
    let row = reshape(tape, feats, &[1, width]);
    let h = linear(tape, row, head.w1, head.b1);
    let h = relu(tape, h);
    let logits = linear(tape, h, head.w2, head.b2);
    reshape(tape, logits, &[3])
}

/// Full fusion for one sample's node scalars `[n]`: graph convolutions when
/// configured, otherwise the raw scalars feed the head directly (the
/// "no GCN" ablation arm).
pub fn fuse_and_classify<T: Real>(
    tape: &mut Tape<T>,
    nodes: Var,
    gcn: Option<(&Array2<T>, &GcnVars)>,
    head: &HeadVars,
) -> Var {
    match gcn {
        Some((a_hat, g)) => {
            let n = tape.val(nodes).len();
            let h0 = reshape(tape, nodes, &[n, 1]);
            let h = gcn_forward(tape, h0, a_hat, g);
            mlp_head(tape, h, head)
        }
        None => mlp_head(tape, nodes, head),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::fdtest::{check_grads, rand_arr};
    use ndarray::array;

    #[test]
    fn bipartite_adjacency_matches_hand_matrix() {
        let a = build_adjacency(AdjacencyMode::Bipartite, 2, 3, None).unwrap();
        let want = array![
            [0.0, 0.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0, 0.0],
        ];
        assert_eq!(a, want);
    }

    #[test]
    fn normalization_of_two_node_path_is_half_ones() {
        // A+I for the 2-path is the all-ones matrix, both degrees are 2,
        // so A_hat = J / 2 exactly.
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let n = normalize_adjacency(&a).unwrap();
        for &v in n.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_of_complete_graph_is_uniform() {
        let a = build_adjacency(AdjacencyMode::Complete, 2, 2, None).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        for &v in n.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric() {
        let a = build_adjacency(AdjacencyMode::Bipartite, 11, 11, None).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        for i in 0..22 {
            for j in 0..22 {
                assert!((n[[i, j]] - n[[j, i]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adjacency_contract_violations_are_rejected() {
        let bad_diag = array![[1.0, 1.0], [1.0, 0.0]];
        assert!(validate_adjacency(&bad_diag, 2).is_err());
        let bad_entry = array![[0.0, 0.5], [0.5, 0.0]];
        assert!(validate_adjacency(&bad_entry, 2).is_err());
        let bad_sym = array![[0.0, 1.0], [0.0, 0.0]];
        assert!(validate_adjacency(&bad_sym, 2).is_err());
    }

    fn random_head(tape: &mut Tape<f64>, n_in: usize, seed: u64) -> HeadVars {
        HeadVars {
            w1: tape.leaf(rand_arr(&[n_in, 6], seed)),
            b1: tape.leaf(rand_arr(&[6], seed + 1)),
            w2: tape.leaf(rand_arr(&[6, 3], seed + 2)),
            b2: tape.leaf(rand_arr(&[3], seed + 3)),
        }
    }

    fn random_gcn(tape: &mut Tape<f64>, g1: usize, g2: usize, seed: u64) -> GcnVars {
        GcnVars {
            l1w: tape.leaf(rand_arr(&[1, g1], seed)),
            l1b: tape.leaf(rand_arr(&[g1], seed + 1)),
            l2w: tape.leaf(rand_arr(&[g1, g2], seed + 2)),
            l2b: tape.leaf(rand_arr(&[g2], seed + 3)),
        }
    }

    #[test]
    fn complete_graph_collapses_equal_mean_inputs() {
        // On the complete graph, A_hat = J/n is rank one: any two node
        // vectors sharing a mean become indistinguishable after one GCN
        // layer, so the logits coincide to machine precision.
        let n = 6;
        let a = build_adjacency(AdjacencyMode::Complete, 3, 3, None).unwrap();
        let a_hat = normalize_adjacency(&a).unwrap();

        let mut x1 = rand_arr(&[n], 100);
        let x2 = rand_arr(&[n], 101);
        // Shift x1 so both means agree.
        let shift = (x2.sum() - x1.sum()) / n as f64;
        x1.mapv_inplace(|v| v + shift);
        assert!((x1.mean().unwrap() - x2.mean().unwrap()).abs() < 1e-12);

        let run = |x: &ndarray::ArrayD<f64>| {
            let mut tape: Tape<f64> = Tape::new();
            let nodes = tape.leaf(x.clone());
            let gcn = random_gcn(&mut tape, 4, 2, 200);
            let head = random_head(&mut tape, n * 2, 300);
            let out = fuse_and_classify(&mut tape, nodes, Some((&a_hat, &gcn)), &head);
            tape.val(out).clone()
        };
        let l1 = run(&x1);
        let l2 = run(&x2);
        for (a, b) in l1.iter().zip(l2.iter()) {
            assert!((a - b).abs() < 1e-12, "collapse expected: {a} vs {b}");
        }

        // The bipartite graph does NOT collapse the same pair.
        let ab = build_adjacency(AdjacencyMode::Bipartite, 3, 3, None).unwrap();
        let ab_hat = normalize_adjacency(&ab).unwrap();
        let run_b = |x: &ndarray::ArrayD<f64>| {
            let mut tape: Tape<f64> = Tape::new();
            let nodes = tape.leaf(x.clone());
            let gcn = random_gcn(&mut tape, 4, 2, 200);
            let head = random_head(&mut tape, n * 2, 300);
            let out = fuse_and_classify(&mut tape, nodes, Some((&ab_hat, &gcn)), &head);
            tape.val(out).clone()
        };
        let b1 = run_b(&x1);
        let b2 = run_b(&x2);
        let diff: f64 = b1
            .iter()
            .zip(b2.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "bipartite graph should separate the inputs");
    }

    #[test]
    fn gcn_forward_matches_direct_linear_algebra() {
        // Oracle: the same two-layer computation written with plain
        // ndarray calls.
        let n = 22;
        let (g1, g2) = (8, 4);
        let a = build_adjacency(AdjacencyMode::Bipartite, 11, 11, None).unwrap();
        let a_hat = normalize_adjacency(&a).unwrap();

        let x = rand_arr(&[n], 7);
        let l1w = rand_arr(&[1, g1], 8);
        let l1b = rand_arr(&[g1], 9);
        let l2w = rand_arr(&[g1, g2], 10);
        let l2b = rand_arr(&[g2], 11);

        let mut tape: Tape<f64> = Tape::new();
        let nodes = tape.leaf(x.clone());
        let gcn = GcnVars {
            l1w: tape.leaf(l1w.clone()),
            l1b: tape.leaf(l1b.clone()),
            l2w: tape.leaf(l2w.clone()),
            l2b: tape.leaf(l2b.clone()),
        };
        let h0 = reshape(&mut tape, nodes, &[n, 1]);
        let out = gcn_forward(&mut tape, h0, &a_hat, &gcn);

        let to2 = |a: &ndarray::ArrayD<f64>| {
            a.clone().into_dimensionality::<ndarray::Ix2>().unwrap()
        };
        let h0m = x.clone().into_shape_with_order((n, 1)).unwrap();
        let (h1, h2) = gcn_layer_outputs(
            &a_hat,
            &h0m,
            &to2(&l1w),
            l1b.as_slice().unwrap(),
            &to2(&l2w),
            l2b.as_slice().unwrap(),
        );
        assert_eq!(h1.dim(), (n, g1));
        for (got, want) in tape.val(out).iter().zip(h2.iter()) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn grad_gcn_and_head() {
        let n = 5;
        let a = build_adjacency(AdjacencyMode::Bipartite, 2, 3, None).unwrap();
        let a_hat = normalize_adjacency(&a).unwrap();
        let inputs = vec![
            rand_arr(&[n], 20),
            rand_arr(&[1, 4], 21),
            rand_arr(&[4], 22),
            rand_arr(&[4, 2], 23),
            rand_arr(&[2], 24),
            rand_arr(&[n * 2, 6], 25),
            rand_arr(&[6], 26),
            rand_arr(&[6, 3], 27),
            rand_arr(&[3], 28),
        ];
        let a_hat2 = a_hat.clone();
        check_grads(
            &inputs,
            move |tape, v| {
                let gcn = GcnVars {
                    l1w: v[1],
                    l1b: v[2],
                    l2w: v[3],
                    l2b: v[4],
                };
                let head = HeadVars {
                    w1: v[5],
                    b1: v[6],
                    w2: v[7],
                    b2: v[8],
                };
                let logits = fuse_and_classify(tape, v[0], Some((&a_hat2, &gcn)), &head);
                sum_all(tape, logits)
            },
            1e-5,
        );
    }

    #[test]
    fn no_gcn_head_sees_raw_scalars() {
        // With the graph bypassed, zeroing w1 rows corresponding to one
        // node must remove that node's influence entirely.
        let n = 4;
        let mut x = rand_arr(&[n], 40);
        let mut tape: Tape<f64> = Tape::new();
        let mut w1 = rand_arr(&[n, 6], 41);
        w1.index_axis_mut(ndarray::Axis(0), 2).fill(0.0);
        let head = HeadVars {
            w1: tape.leaf(w1),
            b1: tape.leaf(rand_arr(&[6], 42)),
            w2: tape.leaf(rand_arr(&[6, 3], 43)),
            b2: tape.leaf(rand_arr(&[3], 44)),
        };
        let nodes = tape.leaf(x.clone());
        let out1 = fuse_and_classify(&mut tape, nodes, None, &head);
        let v1 = tape.val(out1).clone();
        x[[2]] += 10.0;
        let nodes2 = tape.leaf(x);
        let out2 = fuse_and_classify(&mut tape, nodes2, None, &head);
        assert_eq!(&v1, tape.val(out2));
    }

    #[test]
    fn adjacency_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adj.txt");
        std::fs::write(&path, "0 1 1\n1 0 0\n1 0 0\n").unwrap();
        let a = read_adjacency_file(&path).unwrap();
        assert_eq!(a, array![[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        validate_adjacency(&a, 3).unwrap();
        std::fs::write(&path, "0 1\n1\n").unwrap();
        assert!(read_adjacency_file(&path).is_err());
    }
}
