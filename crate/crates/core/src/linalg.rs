//! Partial-pivot LU for the 4x4 systems that show up in the inversion step.
//!
//! Rows of the decoupling matrix differ in scale by several decades, so the
//! solve goes through elimination with row pivoting instead of an explicit
//! inverse.

use nalgebra::{Matrix4, Vector4};

/// LU factors of a 4x4 matrix, `P A = L U` packed into one matrix.
#[derive(Debug, Clone, Copy)]
pub struct Lu4 {
    packed: Matrix4<f64>,
    perm: [usize; 4],
    sign: f64,
    singular: bool,
}

impl Lu4 {
    pub fn new(a: &Matrix4<f64>) -> Self {
        let mut m = *a;
        let mut perm = [0, 1, 2, 3];
        let mut sign = 1.0;
        let mut singular = false;

        for k in 0..4 {
            let mut pivot = k;
            let mut best = m[(k, k)].abs();
            for i in (k + 1)..4 {
                let v = m[(i, k)].abs();
                if v > best {
                    best = v;
                    pivot = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if pivot != k {
                m.swap_rows(k, pivot);
                perm.swap(k, pivot);
                sign = -sign;
            }
            let d = m[(k, k)];
            for i in (k + 1)..4 {
                let f = m[(i, k)] / d;
                m[(i, k)] = f;
                for j in (k + 1)..4 {
                    m[(i, j)] -= f * m[(k, j)];
                }
            }
        }

        Self {
            packed: m,
            perm,
            sign,
            singular,
        }
    }

    /// Exactly zero when a pivot column vanishes.
    pub fn determinant(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        self.sign * (0..4).map(|k| self.packed[(k, k)]).product::<f64>()
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn solve(&self, b: &Vector4<f64>) -> Option<Vector4<f64>> {
        if self.singular {
            return None;
        }
        let mut x = Vector4::from_fn(|i, _| b[self.perm[i]]);
        for i in 1..4 {
            for j in 0..i {
                x[i] -= self.packed[(i, j)] * x[j];
            }
        }
        for i in (0..4).rev() {
            for j in (i + 1)..4 {
                x[i] -= self.packed[(i, j)] * x[j];
            }
            x[i] /= self.packed[(i, i)];
        }
        Some(x)
    }

    /// 1-norm condition number, `inf` for a singular matrix.
    pub fn condition_1(&self, a: &Matrix4<f64>) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        let mut inv_norm = 0.0_f64;
        for j in 0..4 {
            let col = self
                .solve(&Vector4::ith(j, 1.0))
                .expect("non-singular factorization");
            inv_norm = inv_norm.max(col.abs().sum());
        }
        norm_1(a) * inv_norm
    }
}

fn norm_1(a: &Matrix4<f64>) -> f64 {
    (0..4)
        .map(|j| a.column(j).abs().sum())
        .fold(0.0, f64::max)
}

pub fn determinant(a: &Matrix4<f64>) -> f64 {
    Lu4::new(a).determinant()
}
