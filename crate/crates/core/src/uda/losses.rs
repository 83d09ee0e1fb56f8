//! Loss terms as standalone operations. The training step recomputes these
//! inline to share forward passes; these entry points define the contracts
//! and back the numeric checks.

use crate::domain::{ImageSample, SegMap};
use crate::error::Error;
use crate::model::{MaskPattern, SegModel, TokenGrid};
use crate::nn::{cross_entropy_masked, mse};
use crate::scalar::Scalar;
use crate::Result;

/// Mean cross-entropy of the student on a labeled image, IGNORE excluded.
pub fn loss_source<T: Scalar>(
    student: &SegModel<T>,
    image: &ImageSample,
    labels: &SegMap,
) -> Result<f64> {
    if labels.height != image.height || labels.width != image.width {
        return Err(Error::ShapeMismatch {
            context: "loss_source",
            expected: alloc::format!("{}x{}", image.height, image.width),
            got: alloc::format!("{}x{}", labels.height, labels.width),
        });
    }
    let (logits, _) = student.forward(image, None)?;
    Ok(cross_entropy_masked(&logits, &labels.labels, student.num_classes).loss)
}

/// Masked-consistency loss: the student sees the masked view, the labels
/// come from the teacher's unmasked view (already composed into `labels`,
/// with IGNORE wherever no pseudo-label was kept).
pub fn loss_masked_target<T: Scalar>(
    student: &SegModel<T>,
    image: &ImageSample,
    labels: &SegMap,
    mask: Option<&MaskPattern>,
) -> Result<f64> {
    let (logits, _) = student.forward(image, mask)?;
    Ok(cross_entropy_masked(&logits, &labels.labels, student.num_classes).loss)
}

/// Feature-distance regularizer: weighted mean squared error between the
/// student's tokens and the frozen reference encoder's tokens.
pub fn loss_fd<T: Scalar>(
    student_tokens: &TokenGrid<T>,
    reference_tokens: &TokenGrid<T>,
    fd_weight: f64,
) -> Result<f64> {
    if student_tokens.grid != reference_tokens.grid || student_tokens.dim != reference_tokens.dim {
        return Err(Error::ShapeMismatch {
            context: "loss_fd",
            expected: alloc::format!(
                "{}x{} tokens of dim {}",
                reference_tokens.grid.0,
                reference_tokens.grid.1,
                reference_tokens.dim
            ),
            got: alloc::format!(
                "{}x{} tokens of dim {}",
                student_tokens.grid.0,
                student_tokens.grid.1,
                student_tokens.dim
            ),
        });
    }
    Ok(fd_weight * mse(&student_tokens.tokens, &reference_tokens.tokens))
}
