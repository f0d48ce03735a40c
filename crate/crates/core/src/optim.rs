//! Adam with bias correction, dense or restricted to touched rows.

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    fn advance(&mut self) -> f64 {
        self.t += 1;
        let t = self.t as i32;
        self.lr * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t))
    }

    #[inline]
    fn update(&mut self, c: usize, g: f64, lr_t: f64) -> f64 {
        self.m[c] += (1.0 - self.beta1) * (g - self.m[c]);
        self.v[c] += (1.0 - self.beta2) * (g * g - self.v[c]);
        lr_t * self.m[c] / (self.v[c].sqrt() + self.eps)
    }

    /// One step over every coordinate.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let lr_t = self.advance();
        for c in 0..params.len() {
            params[c] -= self.update(c, grad[c], lr_t);
        }
    }

    /// One step over the given rows of a `width`-column parameter matrix.
    /// Moments of other rows are left untouched; the step counter is global.
    pub fn step_rows(&mut self, params: &mut [f64], grad: &[f64], rows: &[usize], width: usize) {
        let lr_t = self.advance();
        for &r in rows {
            for c in r * width..(r + 1) * width {
                params[c] -= self.update(c, grad[c], lr_t);
            }
        }
    }

    /// Same as [`Adam::step`] for 32-bit parameters.
    pub fn step_f32(&mut self, params: &mut [f32], grad: &[f32]) {
        let lr_t = self.advance();
        for c in 0..params.len() {
            params[c] -= self.update(c, grad[c] as f64, lr_t) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(2, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::new(1, 0.05, 0.9, 0.999, 1e-8);
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 1.0)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn row_step_leaves_other_rows() {
        let mut adam = Adam::new(6, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![0.0; 6];
        adam.step_rows(&mut p, &[1.0; 6], &[1], 2);
        assert_eq!(&p[0..2], &[0.0, 0.0]);
        assert!(p[2] < 0.0 && p[3] < 0.0);
        assert_eq!(&p[4..6], &[0.0, 0.0]);
        assert_eq!(adam.steps(), 1);
    }
}
