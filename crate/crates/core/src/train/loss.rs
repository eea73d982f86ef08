//! Symmetric InfoNCE over a batch of matched pairs (row i of the image
//! embeddings pairs with row i of the text embeddings):
//!
//! ```text
//! L = -1/N * sum_i 1/2 * [ log softmax_j(s(v_i, t_j) / tau)_i + log softmax_j(s(t_i, v_j) / tau)_i ]
//! ```

use crate::embed::DenseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct InfoNceGrads {
    pub loss: f64,
    pub d_image: DenseMatrix,
    pub d_text: DenseMatrix,
    pub d_tau: f64,
}

struct Direction {
    /// Row-wise softmax of the logits.
    probs: DenseMatrix,
    log_probs_diag: Vec<f64>,
}

/// Row-wise softmax statistics of `logits`, numerically stabilized by the row max.
fn softmax_rows(logits: &DenseMatrix) -> Direction {
    let n = logits.rows();
    let mut probs = DenseMatrix::zeros(n, logits.cols());
    let mut diag = Vec::with_capacity(n);
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        for (p, v) in probs.row_mut(i).iter_mut().zip(row) {
            *p = (v - lse).exp();
        }
        diag.push(row[i] - lse);
    }
    Direction { probs, log_probs_diag: diag }
}

fn check_inputs(image: &DenseMatrix, text: &DenseMatrix, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("temperature must be positive and finite, got {tau}")));
    }
    if image.shape() != text.shape() {
        return Err(Error::Shape(format!("image batch {:?} vs text batch {:?}", image.shape(), text.shape())));
    }
    if image.rows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if !image.all_finite() || !text.all_finite() {
        return Err(Error::Numeric("non-finite embedding in batch".into()));
    }
    Ok(())
}

fn scaled(mut m: DenseMatrix, tau: f64) -> DenseMatrix {
    m.map_inplace(|v| v / tau);
    m
}

/// Loss and gradients with respect to both embedding batches and `tau`.
pub fn infonce_loss_and_grads(image: &DenseMatrix, text: &DenseMatrix, tau: f64) -> Result<InfoNceGrads> {
    check_inputs(image, text, tau)?;
    let n = image.rows();
    // the text->image logits are computed directly rather than transposed so
    // swapping the towers swaps the two terms bit for bit
    let logits_it = scaled(image.matmul_transposed(text)?, tau);
    let logits_ti = scaled(text.matmul_transposed(image)?, tau);
    let it = softmax_rows(&logits_it);
    let ti = softmax_rows(&logits_ti);

    let mut total = 0.0;
    for i in 0..n {
        total += it.log_probs_diag[i] + ti.log_probs_diag[i];
    }
    let loss = -total / (2.0 * n as f64);

    // dL/dlogits for each direction: (softmax - I) / 2N
    let scale = 1.0 / (2.0 * n as f64);
    let mut g_it = it.probs;
    let mut g_ti = ti.probs;
    for i in 0..n {
        g_it.set(i, i, g_it.get(i, i) - 1.0);
        g_ti.set(i, i, g_ti.get(i, i) - 1.0);
    }
    g_it.map_inplace(|v| v * scale);
    g_ti.map_inplace(|v| v * scale);

    // logits = sim / tau, so dL/dtau = -1/tau * sum(dL/dlogits * logits)
    let weighted: f64 = g_it.values().iter().zip(logits_it.values()).map(|(g, l)| g * l).sum::<f64>()
        + g_ti.values().iter().zip(logits_ti.values()).map(|(g, l)| g * l).sum::<f64>();
    let d_tau = -weighted / tau;

    // similarity gradient in image x text coordinates
    let mut g_sim = g_ti.transpose();
    for (a, b) in g_sim.values_mut().iter_mut().zip(g_it.values()) {
        *a = (*a + b) / tau;
    }
    let d_image = g_sim.matmul(text)?;
    let d_text = g_sim.transpose_matmul(image)?;
    Ok(InfoNceGrads { loss, d_image, d_text, d_tau })
}

/// Loss only.
pub fn infonce_loss(image: &DenseMatrix, text: &DenseMatrix, tau: f64) -> Result<f64> {
    Ok(infonce_loss_and_grads(image, text, tau)?.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scalar evaluation of the loss straight from the definition.
    fn oracle(image: &[Vec<f64>], text: &[Vec<f64>], tau: f64) -> f64 {
        let n = image.len();
        let sim = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut acc = 0.0;
        for i in 0..n {
            let num_v = (sim(&image[i], &text[i]) / tau).exp();
            let den_v: f64 = (0..n).map(|j| (sim(&image[i], &text[j]) / tau).exp()).sum();
            let num_t = (sim(&text[i], &image[i]) / tau).exp();
            let den_t: f64 = (0..n).map(|j| (sim(&text[i], &image[j]) / tau).exp()).sum();
            acc += 0.5 * ((num_v / den_v).ln() + (num_t / den_t).ln());
        }
        -acc / n as f64
    }

    fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
        let mut rows = Vec::new();
        for _ in 0..n {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            rows.push(v.into_iter().map(|x| x / norm).collect::<Vec<_>>());
        }
        DenseMatrix::from_rows(&rows).unwrap()
    }

    fn as_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
        (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
    }

    #[test]
    fn single_pair_loss_is_zero() {
        let v = DenseMatrix::from_rows(&[[0.6, 0.8]]).unwrap();
        let t = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let out = infonce_loss_and_grads(&v, &t, 0.07).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn identity_similarity_closed_form() {
        let eye = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((expected - 0.313262).abs() < 1e-6);
        let loss = infonce_loss(&eye, &eye, 1.0).unwrap();
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
        let oracle_loss = oracle(&as_rows(&eye), &as_rows(&eye), 1.0);
        assert!((oracle_loss - expected).abs() < 1e-15);

        let sharp = infonce_loss(&eye, &eye, 0.07).unwrap();
        assert!(sharp <= 1e-6, "{sharp}");
        assert!((sharp - (1.0 + (-1.0f64 / 0.07).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..6 {
            let v = unit_rows(&mut rng, n, 4);
            let t = unit_rows(&mut rng, n, 4);
            for tau in [0.07, 0.5, 2.0] {
                let loss = infonce_loss(&v, &t, tau).unwrap();
                assert!((loss - oracle(&as_rows(&v), &as_rows(&t), tau)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn embedding_and_tau_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (v, t, tau) = (unit_rows(&mut rng, 4, 3), unit_rows(&mut rng, 4, 3), 0.3);
        let g = infonce_loss_and_grads(&v, &t, tau).unwrap();
        let h = 1e-6;
        for which in 0..2 {
            for idx in 0..12 {
                let bump = |delta: f64| {
                    let (mut a, mut b) = (v.clone(), t.clone());
                    if which == 0 {
                        a.values_mut()[idx] += delta;
                    } else {
                        b.values_mut()[idx] += delta;
                    }
                    infonce_loss(&a, &b, tau).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if which == 0 { g.d_image.values()[idx] } else { g.d_text.values()[idx] };
                assert!((fd - an).abs() < 1e-7, "{which} {idx}: {fd} vs {an}");
            }
        }
        let fd_tau = (infonce_loss(&v, &t, tau + h).unwrap() - infonce_loss(&v, &t, tau - h).unwrap()) / (2.0 * h);
        assert!((fd_tau - g.d_tau).abs() < 1e-7);
    }

    #[test]
    fn errors() {
        let eye = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(infonce_loss(&eye, &eye, 0.0).is_err());
        assert!(infonce_loss(&eye, &eye, -1.0).is_err());
        let nan = DenseMatrix::from_rows(&[[f64::NAN, 0.0], [0.0, 1.0]]).unwrap();
        assert!(infonce_loss(&nan, &eye, 1.0).is_err());
        let short = DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(infonce_loss(&short, &eye, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_in_the_two_towers(seed in 0u64..1000, n in 1usize..9, tau in 0.02f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = unit_rows(&mut rng, n, 5);
            let t = unit_rows(&mut rng, n, 5);
            prop_assert_eq!(infonce_loss(&v, &t, tau).unwrap(), infonce_loss(&t, &v, tau).unwrap());
        }

        #[test]
        fn permutation_invariant_and_non_negative(seed in 0u64..1000, n in 1usize..9, tau in 0.02f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = unit_rows(&mut rng, n, 5);
            let t = unit_rows(&mut rng, n, 5);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let base = infonce_loss(&v, &t, tau).unwrap();
            let permuted = infonce_loss(&v.select_rows(&perm), &t.select_rows(&perm), tau).unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
            prop_assert!(base >= 0.0);
        }
    }
}
