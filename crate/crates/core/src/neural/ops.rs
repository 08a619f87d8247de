//! Element-wise and row-wise kernels. Every reduction runs left to right over
//! row-major data, so results are bitwise reproducible.

use super::{Matrix, NeuralError};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `sqrt(2 / pi)` for the tanh GELU approximation.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
pub const GELU_CUBIC: f64 = 0.044_715;

fn mismatch(op: &'static str, detail: String) -> NeuralError {
    NeuralError::ShapeMismatch { op, detail }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, NeuralError> {
    if a.cols() != b.rows() {
        return Err(mismatch(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    let bd = b.data();
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate().take(k) {
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Matrix::new(n, m, out)
}

pub fn add(a: &Matrix, b: &Matrix) -> Result<Matrix, NeuralError> {
    if a.shape() != b.shape() {
        return Err(mismatch("add", format!("{:?} + {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Matrix::new(a.rows(), a.cols(), data)
}

/// Adds a `1 x cols` row to every row of `m`.
pub fn add_row(m: &Matrix, row: &Matrix) -> Result<Matrix, NeuralError> {
    if row.rows() != 1 || row.cols() != m.cols() {
        return Err(mismatch(
            "add_row",
            format!("{:?} + {:?}", m.shape(), row.shape()),
        ));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(row.data()) {
            *v += b;
        }
    }
    Ok(out)
}

/// `x W + b` with `b` a single row.
pub fn linear(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix, NeuralError> {
    add_row(&matmul(x, w)?, b)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Normalizes each row to zero mean and unit variance, then applies
/// `gain`/`bias`. The variance is floored at `eps`, so rows with variance
/// at least `eps` come out with unit variance and constant rows map to zero.
pub fn layer_norm(m: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<Matrix, NeuralError> {
    if gain.len() != m.cols() || bias.len() != m.cols() {
        return Err(mismatch(
            "layer_norm",
            format!("{} columns, gain {}, bias {}", m.cols(), gain.len(), bias.len()),
        ));
    }
    let n = m.cols() as f64;
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let denom = var.max(eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) / denom * g + b;
        }
    }
    Ok(out)
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Column means as a `1 x cols` matrix.
pub fn mean_rows(m: &Matrix) -> Matrix {
    let mut acc = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = m.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Matrix::new(1, m.cols(), acc).expect("finite means of finite rows")
}

/// Column maxima as a `1 x cols` matrix.
pub fn max_rows(m: &Matrix) -> Matrix {
    let mut acc = vec![f64::NEG_INFINITY; m.cols()];
    for row in m.iter_rows() {
        for (a, &v) in acc.iter_mut().zip(row) {
            if v > *a {
                *a = v;
            }
        }
    }
    Matrix::new(1, m.cols(), acc).expect("finite maxima of finite rows")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_cases() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[17.0], &[39.0]]));

        let x = m(&[&[1.5, -2.0, 3.0], &[0.0, 4.0, 1.0], &[7.0, 7.0, 7.0]]);
        assert_eq!(matmul(&Matrix::identity(3), &x).unwrap(), x);

        let row = m(&[&[1.0, 2.0, 3.0]]);
        let col = m(&[&[4.0], &[5.0], &[6.0]]);
        assert_eq!(matmul(&row, &col).unwrap().data(), &[32.0]);

        assert!(matches!(
            matmul(&a, &row),
            Err(NeuralError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn softmax_cases() {
        let s = softmax_rows(&m(&[&[2.0, 2.0, 2.0]]));
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax_rows(&m(&[&[0.0, 3f64.ln()]]));
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);
        let s = softmax_rows(&m(&[&[1.0, 1001.0, 1.0]]));
        assert!(s.get(0, 1) >= 1.0 - 1e-9);
        assert!(s.is_finite());
    }

    #[test]
    fn layer_norm_cases() {
        let out = layer_norm(&m(&[&[5.0, 5.0, 5.0]]), &[1.0; 3], &[0.0; 3], LAYER_NORM_EPS).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);

        let out = layer_norm(&m(&[&[1.0, 3.0]]), &[1.0; 2], &[0.0; 2], LAYER_NORM_EPS).unwrap();
        assert_eq!(out.data(), &[-1.0, 1.0]);

        let out = layer_norm(&m(&[&[1.0, 9.0, -4.0]]), &[0.0; 3], &[0.7; 3], LAYER_NORM_EPS).unwrap();
        assert_eq!(out.data(), &[0.7, 0.7, 0.7]);

        assert!(layer_norm(&m(&[&[1.0, 2.0]]), &[1.0], &[0.0; 2], LAYER_NORM_EPS).is_err());
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        // tanh approximation at x = 1: 0.5 * (1 + tanh(0.79788456 * 1.044715))
        assert!((gelu(1.0) - 0.841_191_990_607_477_2).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn pooling() {
        let x = m(&[&[1.0, -2.0], &[3.0, 4.0]]);
        assert_eq!(mean_rows(&x).data(), &[2.0, 1.0]);
        assert_eq!(max_rows(&x).data(), &[3.0, 4.0]);
    }
}
