//! Classical fourth-order Runge-Kutta step on a flat state buffer.

/// Scratch buffers for [`Rk4::step`], sized once per state length.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.k1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k1.is_empty()
    }

    /// Advances `y` by `h` for the autonomous system `f(y, dy)`. The first
    /// call to `f` is always at the unmodified `y`.
    pub fn step<F>(&mut self, y: &mut [f64], h: f64, mut f: F)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        debug_assert_eq!(y.len(), self.len());
        f(y, &mut self.k1);
        for ((t, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *t = yi + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *t = yi + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *t = yi + h * k;
        }
        f(&self.tmp, &mut self.k4);
        let w = h / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += w * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let run = |steps: usize| {
            let mut rk = Rk4::new(1);
            let mut y = [1.0];
            let h = 1.0 / steps as f64;
            for _ in 0..steps {
                rk.step(&mut y, h, |y, d| d[0] = -y[0]);
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let ratio = run(20) / run(40);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn harmonic_oscillator_quarter_period() {
        let mut rk = Rk4::new(2);
        let mut y = [1.0, 0.0];
        let steps = 1000;
        let h = std::f64::consts::FRAC_PI_2 / steps as f64;
        for _ in 0..steps {
            rk.step(&mut y, h, |y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            });
        }
        assert!(y[0].abs() < 1e-12);
        assert!((y[1] + 1.0).abs() < 1e-12);
    }
}
