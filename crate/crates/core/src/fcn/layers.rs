//! Batched 1-D layers on channel-major buffers `[batch][channel][time]`.

/// Same-length cross-correlation with zero padding and per-channel bias.
///
/// Even kernels put the extra tap on the left: `kernel / 2` samples of
/// padding before the signal and `(kernel - 1) / 2` after it.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][tap]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn pad_left(&self) -> usize {
        self.kernel / 2
    }

    #[inline]
    fn w(&self, o: usize, i: usize, j: usize) -> f64 {
        self.weight[(o * self.in_channels + i) * self.kernel + j]
    }

    /// Output samples `t` for which input `t + j - pad` exists.
    #[inline]
    fn span(&self, j: usize, len: usize) -> (usize, usize) {
        let pl = self.pad_left();
        let lo = pl.saturating_sub(j);
        let hi = (len + pl).saturating_sub(j).min(len);
        (lo, hi)
    }

    pub fn forward(&self, x: &[f64], batch: usize, len: usize) -> Vec<f64> {
        let (ci, co) = (self.in_channels, self.out_channels);
        debug_assert_eq!(x.len(), batch * ci * len);
        let pl = self.pad_left();
        let mut y = vec![0.0; batch * co * len];
        for b in 0..batch {
            for o in 0..co {
                let out = &mut y[(b * co + o) * len..(b * co + o + 1) * len];
                out.fill(self.bias[o]);
                for i in 0..ci {
                    let inp = &x[(b * ci + i) * len..(b * ci + i + 1) * len];
                    for j in 0..self.kernel {
                        let w = self.w(o, i, j);
                        let (lo, hi) = self.span(j, len);
                        if lo >= hi {
                            continue;
                        }
                        let src = &inp[lo + j - pl..hi + j - pl];
                        for (yo, &xi) in out[lo..hi].iter_mut().zip(src) {
                            *yo += w * xi;
                        }
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients into `dw`, `db` and returns the
    /// input gradient when `need_input` is set.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        batch: usize,
        len: usize,
        dw: &mut [f64],
        db: &mut [f64],
        need_input: bool,
    ) -> Option<Vec<f64>> {
        let (ci, co) = (self.in_channels, self.out_channels);
        let pl = self.pad_left();
        let mut dx = need_input.then(|| vec![0.0; batch * ci * len]);
        for b in 0..batch {
            for o in 0..co {
                let g = &dy[(b * co + o) * len..(b * co + o + 1) * len];
                db[o] += g.iter().sum::<f64>();
                for i in 0..ci {
                    let base = (b * ci + i) * len;
                    let inp = &x[base..base + len];
                    for j in 0..self.kernel {
                        let (lo, hi) = self.span(j, len);
                        if lo >= hi {
                            continue;
                        }
                        let src = &inp[lo + j - pl..hi + j - pl];
                        let widx = (o * ci + i) * self.kernel + j;
                        dw[widx] += g[lo..hi].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(dx) = dx.as_mut() {
                            let w = self.weight[widx];
                            let dst = &mut dx[base + lo + j - pl..base + hi + j - pl];
                            for (d, &gv) in dst.iter_mut().zip(&g[lo..hi]) {
                                *d += w * gv;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Per-channel normalization over batch and time.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Intermediate values of a training-mode normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache {
    pub normalized: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl BatchNorm1d {
    pub fn new(channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum,
            epsilon,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&self, y: &[f64], batch: usize, len: usize) -> (Vec<f64>, BatchNormCache) {
        let c = self.channels();
        let count = (batch * len) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for b in 0..batch {
            for ch in 0..c {
                mean[ch] += y[(b * c + ch) * len..(b * c + ch + 1) * len].iter().sum::<f64>();
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        for b in 0..batch {
            for ch in 0..c {
                let m = mean[ch];
                var[ch] += y[(b * c + ch) * len..(b * c + ch + 1) * len]
                    .iter()
                    .map(|v| (v - m) * (v - m))
                    .sum::<f64>();
            }
        }
        for v in &mut var {
            *v /= count;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut normalized = vec![0.0; y.len()];
        let mut out = vec![0.0; y.len()];
        for b in 0..batch {
            for ch in 0..c {
                let r = (b * c + ch) * len..(b * c + ch + 1) * len;
                let (m, s, g, be) = (mean[ch], inv_std[ch], self.gamma[ch], self.beta[ch]);
                for ((n, o), &v) in normalized[r.clone()].iter_mut().zip(&mut out[r.clone()]).zip(&y[r]) {
                    *n = (v - m) * s;
                    *o = g * *n + be;
                }
            }
        }
        (
            out,
            BatchNormCache {
                normalized,
                mean,
                var,
                inv_std,
            },
        )
    }

    pub fn forward_infer(&self, y: &[f64], batch: usize, len: usize) -> Vec<f64> {
        let c = self.channels();
        let mut out = vec![0.0; y.len()];
        for ch in 0..c {
            let s = 1.0 / (self.running_var[ch] + self.epsilon).sqrt();
            let (m, g, be) = (self.running_mean[ch], self.gamma[ch], self.beta[ch]);
            for b in 0..batch {
                let r = (b * c + ch) * len..(b * c + ch + 1) * len;
                for (o, &v) in out[r.clone()].iter_mut().zip(&y[r]) {
                    *o = g * (v - m) * s + be;
                }
            }
        }
        out
    }

    /// `running ← momentum · running + (1 − momentum) · batch`
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let m = self.momentum;
        for ch in 0..self.channels() {
            self.running_mean[ch] = m * self.running_mean[ch] + (1.0 - m) * cache.mean[ch];
            self.running_var[ch] = m * self.running_var[ch] + (1.0 - m) * cache.var[ch];
        }
    }

    /// Returns the input gradient; accumulates into `dgamma`, `dbeta`.
    pub fn backward(
        &self,
        dz: &[f64],
        cache: &BatchNormCache,
        batch: usize,
        len: usize,
        dgamma: &mut [f64],
        dbeta: &mut [f64],
    ) -> Vec<f64> {
        let c = self.channels();
        let count = (batch * len) as f64;
        let mut sum_d = vec![0.0; c];
        let mut sum_dx = vec![0.0; c];
        for b in 0..batch {
            for ch in 0..c {
                let r = (b * c + ch) * len..(b * c + ch + 1) * len;
                for (&d, &n) in dz[r.clone()].iter().zip(&cache.normalized[r]) {
                    sum_d[ch] += d;
                    sum_dx[ch] += d * n;
                }
            }
        }
        for ch in 0..c {
            dgamma[ch] += sum_dx[ch];
            dbeta[ch] += sum_d[ch];
        }
        let mut dy = vec![0.0; dz.len()];
        for b in 0..batch {
            for ch in 0..c {
                let r = (b * c + ch) * len..(b * c + ch + 1) * len;
                let k = self.gamma[ch] * cache.inv_std[ch] / count;
                let (sd, sdx) = (sum_d[ch], sum_dx[ch]);
                for ((o, &d), &n) in dy[r.clone()].iter_mut().zip(&dz[r.clone()]).zip(&cache.normalized[r]) {
                    *o = k * (count * d - sd - n * sdx);
                }
            }
        }
        dy
    }
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Time average of every channel: `[batch][channel]`.
pub fn global_average_pool(x: &[f64], batch: usize, channels: usize, len: usize) -> Vec<f64> {
    (0..batch * channels)
        .map(|k| x[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64)
        .collect()
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−log p_label`, with the argument clamped away from zero.
pub fn cross_entropy(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].max(1e-300).ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(kernel: &[f64]) -> Conv1d {
        Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: kernel.len(),
            weight: kernel.to_vec(),
            bias: vec![0.0],
        }
    }

    #[test]
    fn centered_difference_kernel() {
        let y = conv(&[1.0, 0.0, -1.0]).forward(&[1.0, 2.0, 3.0], 1, 3);
        assert_eq!(y, vec![-2.0, -2.0, 2.0]);
    }

    #[test]
    fn impulse_kernel_sums_channels() {
        let c = Conv1d {
            in_channels: 2,
            out_channels: 1,
            kernel: 3,
            weight: vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
            bias: vec![0.0],
        };
        let y = c.forward(&[1.0, 2.0, 3.0, 10.0, 20.0, 30.0], 1, 3);
        assert_eq!(y, vec![11.0, 22.0, 33.0]);
    }

    #[test]
    fn even_kernel_pads_left_heavy() {
        // taps at offsets -4..=3; a unit weight on the last tap reads t + 3
        let mut k = vec![0.0; 8];
        k[7] = 1.0;
        let y = conv(&k).forward(&[1.0, 2.0, 3.0, 4.0, 5.0], 1, 5);
        assert_eq!(y, vec![4.0, 5.0, 0.0, 0.0, 0.0]);
        let mut k = vec![0.0; 8];
        k[0] = 1.0;
        let y = conv(&k).forward(&[1.0, 2.0, 3.0, 4.0, 5.0], 1, 5);
        assert_eq!(y, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_and_loss() {
        let p = softmax(&[0.0; 5]);
        assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let q = softmax(&[1.0, 2.0, 3.0]);
        let r = softmax(&[701.0, 702.0, 703.0]);
        for (a, b) in q.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
        assert!(cross_entropy(&[1.0, 0.0], 1).is_finite());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn relu_and_pool() {
        let mut x = vec![-1.0, 0.0, 2.0];
        relu_in_place(&mut x);
        assert_eq!(x, vec![0.0, 0.0, 2.0]);
        assert_eq!(global_average_pool(&[1.0, 2.0, 3.0], 1, 1, 3), vec![2.0]);
    }

    #[test]
    fn batch_norm_standardizes_and_matches_inference() {
        let bn = BatchNorm1d::new(2, 0.99, 1e-3);
        let y: Vec<f64> = (0..12).map(|k| (k as f64 * 0.7).sin() * 3.0 + k as f64).collect();
        let (out, cache) = bn.forward_train(&y, 2, 3);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| out[(b * 2 + ch) * 3..(b * 2 + ch + 1) * 3].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / 6.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 6.0;
            assert!(m.abs() < 1e-12);
            // ε in the denominator shrinks the variance slightly
            assert!((v - cache.var[ch] / (cache.var[ch] + 1e-3)).abs() < 1e-12);
        }
        let mut frozen = bn.clone();
        frozen.running_mean = cache.mean.clone();
        frozen.running_var = cache.var.clone();
        let inf = frozen.forward_infer(&y, 2, 3);
        for (a, b) in out.iter().zip(&inf) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
