//! Embedding export with a deterministic 2-D PCA projection.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::EncoderParams;
use crate::graph::MolGraph;
use crate::tensor::Tensor;
use crate::trainer::finetune::embed_all;
use crate::trainer::TrainError;

const POWER_ITERATIONS: usize = 1000;
const POWER_TOL: f64 = 1e-15;

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(m: &Tensor, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Leading eigenvector of the symmetric PSD matrix `c` by power
/// iteration, orthogonalized against `against` after every step.
fn leading_eigenvector(c: &Tensor, against: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = c.rows();
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let project_out = |v: &mut Vec<f64>| {
        for u in against {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
    };
    project_out(&mut v);
    normalize(&mut v);
    for _ in 0..POWER_ITERATIONS {
        let mut next = mat_vec(c, &v);
        project_out(&mut next);
        if normalize(&mut next) == 0.0 {
            // Remaining variance is zero: any orthogonal unit vector will do.
            return v;
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < POWER_TOL {
            break;
        }
    }
    // Fix the sign: the largest-magnitude coordinate is positive.
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
    if v.get(imax).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Scores of the centered rows of `h` on its top two principal axes
/// (N × 2). Columns beyond the embedding width are zero.
pub fn pca_2d(h: &Tensor) -> Tensor {
    let (n, d) = (h.rows(), h.cols());
    let mut out = Tensor::zeros(n, 2);
    if n == 0 || d == 0 {
        return out;
    }
    let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| h.get(r, c)).sum::<f64>() / n as f64).collect();
    let mut x = h.clone();
    for r in 0..n {
        x.row_mut(r).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let cov = x.transpose().matmul(&x).expect("square").scale(1.0 / n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..d.min(2) {
        let v = leading_eigenvector(&cov, &axes, &mut rng);
        axes.push(v);
    }
    for r in 0..n {
        for (k, axis) in axes.iter().enumerate() {
            // `+ 0.0` folds −0 into 0 so exports print consistently.
            out.set(r, k, x.row(r).iter().zip(axis).map(|(a, b)| a * b).sum::<f64>() + 0.0);
        }
    }
    out
}

/// Writes `index,smiles,h0..h{D-1},pc1,pc2` rows.
pub fn write_embeddings<W: Write>(out: W, ids: &[String], h: &Tensor) -> Result<Tensor, TrainError> {
    let proj = pca_2d(h);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "smiles".to_string()];
    header.extend((0..h.cols()).map(|i| format!("h{i}")));
    header.extend(["pc1".to_string(), "pc2".to_string()]);
    let csv_err = |e: csv::Error| TrainError::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for r in 0..h.rows() {
        let mut row = vec![r.to_string(), ids.get(r).cloned().unwrap_or_default()];
        row.extend(h.row(r).iter().map(|v| v.to_string()));
        row.extend(proj.row(r).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(proj)
}

/// Encodes `graphs` with `encoder` and writes the embedding table.
pub fn export_embeddings<W: Write>(
    encoder: &EncoderParams,
    graphs: &[MolGraph],
    ids: &[String],
    out: W,
) -> Result<Tensor, TrainError> {
    let h = embed_all(encoder, graphs)?;
    write_embeddings(out, ids, &h)?;
    Ok(h)
}
