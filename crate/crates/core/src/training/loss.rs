use ndarray::Array2;

use crate::dataset::NUM_STAGES;
use crate::error::{Error, Result};
use crate::nn::Scalar;

fn check_labels<F: Scalar>(logits: &Array2<F>, labels: &[usize]) -> Result<()> {
    if logits.nrows() != labels.len() || logits.ncols() != NUM_STAGES {
        return Err(Error::ShapeError(format!(
            "logits {:?} with {} labels",
            logits.dim(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_STAGES) {
        return Err(Error::InvalidLabel(bad));
    }
    Ok(())
}

/// Mean categorical cross-entropy and its gradient with respect to the logits.
pub fn ce_loss_grad<F: Scalar>(logits: &Array2<F>, labels: &[usize]) -> Result<(F, Array2<F>)> {
    check_labels(logits, labels)?;
    let mut grad = Array2::<F>::zeros(logits.dim());
    if labels.is_empty() {
        return Ok((F::zero(), grad));
    }
    let inv_b = F::one() / F::of(labels.len() as f64);
    let mut total = F::zero();
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[y];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - lse).exp() * inv_b;
        }
        g[y] -= inv_b;
    }
    Ok((total * inv_b, grad))
}

pub fn ce_loss<F: Scalar>(logits: &Array2<F>, labels: &[usize]) -> Result<F> {
    Ok(ce_loss_grad(logits, labels)?.0)
}

/// Mean over rows of the squared Euclidean distance, and its gradient with
/// respect to `student`.
pub fn feature_mse_grad<F: Scalar>(
    student: &Array2<F>,
    teacher: &Array2<F>,
) -> Result<(F, Array2<F>)> {
    if student.dim() != teacher.dim() {
        return Err(Error::ShapeError(format!(
            "student features {:?} vs teacher {:?}",
            student.dim(),
            teacher.dim()
        )));
    }
    let b = student.nrows();
    let diff = student - teacher;
    if b == 0 {
        return Ok((F::zero(), diff));
    }
    let inv_b = F::one() / F::of(b as f64);
    let loss = diff.iter().map(|&d| d * d).sum::<F>() * inv_b;
    let two = F::of(2.0) * inv_b;
    Ok((loss, diff.mapv(|d| d * two)))
}

pub fn feature_mse<F: Scalar>(student: &Array2<F>, teacher: &Array2<F>) -> Result<F> {
    Ok(feature_mse_grad(student, teacher)?.0)
}

/// Cross-entropy on the student's logits plus the feature-matching term.
pub fn kd_loss<F: Scalar>(
    student_logits: &Array2<F>,
    student_feat: &Array2<F>,
    teacher_feat: &Array2<F>,
    labels: &[usize],
) -> Result<F> {
    kd_loss_weighted(student_logits, student_feat, teacher_feat, labels, 1.0)
}

/// As [`kd_loss`] with the feature term scaled by `weight`.
pub fn kd_loss_weighted<F: Scalar>(
    student_logits: &Array2<F>,
    student_feat: &Array2<F>,
    teacher_feat: &Array2<F>,
    labels: &[usize],
    weight: f64,
) -> Result<F> {
    let ce = ce_loss(student_logits, labels)?;
    let mse = feature_mse(student_feat, teacher_feat)?;
    Ok(ce + F::of(weight) * mse)
}
