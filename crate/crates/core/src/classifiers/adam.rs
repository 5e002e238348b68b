/// Adam with bias correction. One instance per parameter tensor; all
/// tensors of a model share the step count through [`Adam::begin_step`].
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Bias-correction factors for step `t` (1-based).
    pub fn begin_step(&self, t: u32) -> (f64, f64) {
        (1.0 - self.beta1.powi(t as i32), 1.0 - self.beta2.powi(t as i32))
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64], correction: (f64, f64)) {
        debug_assert_eq!(params.len(), grads.len());
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (c1, c2) = correction;
        let step = move |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        // Elementwise, so chunking cannot change the result.
        #[cfg(feature = "parallel")]
        if params.len() >= PAR_THRESHOLD {
            use rayon::prelude::*;
            params
                .par_chunks_mut(CHUNK)
                .zip(grads.par_chunks(CHUNK))
                .zip(self.m.par_chunks_mut(CHUNK).zip(self.v.par_chunks_mut(CHUNK)))
                .for_each(|((p, g), (m, v))| step(p, g, m, v));
            return;
        }
        step(params, grads, &mut self.m, &mut self.v);
    }
}

#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 16;
#[cfg(feature = "parallel")]
const CHUNK: usize = 1 << 14;
