//! Exponential-moving-average teacher update. The teacher is never touched
//! by the optimizer; this is its only source of change.

use crate::error::Error;
use crate::scalar::Scalar;
use crate::store::{check_mirror, VarStore};
use crate::Result;

/// Per parameter: t' = alpha·t + (1−alpha)·s.
pub fn ema_update<T: Scalar>(
    teacher: &mut VarStore<T>,
    student: &VarStore<T>,
    alpha: f64,
) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!("EMA alpha {alpha} outside (0,1]")));
    }
    check_mirror(teacher, student)?;
    let a = T::from_f64(alpha);
    let one_m_a = T::from_f64(1.0 - alpha);
    for (t, s) in teacher.iter_mut().zip(student.iter()) {
        for (tv, &sv) in t.value.data_mut().iter_mut().zip(s.value.data().iter()) {
            *tv = a * *tv + one_m_a * sv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn pair(t0: f64, s0: f64) -> (VarStore<f64>, VarStore<f64>) {
        let mut t = VarStore::new();
        t.add("w", Tensor::from_vec(&[1], alloc::vec![t0]));
        let mut s = VarStore::new();
        s.add("w", Tensor::from_vec(&[1], alloc::vec![s0]));
        (t, s)
    }

    #[test]
    fn alpha_one_keeps_the_teacher() {
        let (mut t, s) = pair(1.0, 0.0);
        ema_update(&mut t, &s, 1.0).unwrap();
        assert_eq!(t.value(crate::store::VarId(0)).data()[0], 1.0);
    }

    #[test]
    fn near_zero_alpha_copies_the_student() {
        let (mut t, s) = pair(1.0, 0.25);
        ema_update(&mut t, &s, 1e-12).unwrap();
        let v = t.value(crate::store::VarId(0)).data()[0];
        assert!((v - 0.25).abs() < 1e-9);
    }

    #[test]
    fn published_alpha_single_step() {
        let (mut t, s) = pair(1.0, 0.0);
        ema_update(&mut t, &s, 0.999).unwrap();
        assert_eq!(t.value(crate::store::VarId(0)).data()[0], 0.999);
    }

    #[test]
    fn closed_form_over_many_steps() {
        // Constant student: t_n = alpha^n t0 + (1 - alpha^n) s.
        let (mut t, s) = pair(1.0, 0.5);
        let alpha = 0.999;
        let n = 1000;
        for _ in 0..n {
            ema_update(&mut t, &s, alpha).unwrap();
        }
        let expect = libm::pow(alpha, n as f64) * 1.0 + (1.0 - libm::pow(alpha, n as f64)) * 0.5;
        let got = t.value(crate::store::VarId(0)).data()[0];
        assert!((got - expect).abs() < 1e-12, "got {got}, closed form {expect}");
    }

    #[test]
    fn mismatched_stores_are_rejected() {
        let mut t = VarStore::<f64>::new();
        t.add("w", Tensor::zeros(&[2]));
        let mut s = VarStore::<f64>::new();
        s.add("w", Tensor::zeros(&[3]));
        assert!(ema_update(&mut t, &s, 0.999).is_err());
    }

    #[test]
    fn out_of_range_alpha_is_rejected() {
        let (mut t, s) = pair(0.0, 0.0);
        assert!(ema_update(&mut t, &s, 0.0).is_err());
        assert!(ema_update(&mut t, &s, 1.5).is_err());
    }
}
