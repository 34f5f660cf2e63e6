//! Ellipsoid `{x : (x - c)' P^-1 (x - c) <= 1}` with cut updates.

/// Cut depth policy for objective cuts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    /// Depth `-1/(2n)`: keeps a sliver beyond the supporting hyperplane.
    Shallow,
    /// Hyperplane through the centre.
    Central,
    /// Hyperplane shifted by the gap to the best value seen so far.
    Deep,
}

/// Outcome of a cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutResult {
    Updated,
    /// The normal has no length in the ellipsoid metric.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    /// Row-major `n x n` shape matrix.
    pub shape: Vec<f64>,
    /// `ln det P`, tracked analytically across updates.
    pub log_det: f64,
}

impl Ellipsoid {
    /// Ball of radius `radius` around `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let n = center.len();
        let mut shape = vec![0.0; n * n];
        for i in 0..n {
            shape[i * n + i] = radius * radius;
        }
        Self {
            center,
            shape,
            log_det: 2.0 * n as f64 * radius.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Geometric-mean semi-axis `det(P)^(1/2n)`.
    pub fn volume_proxy(&self) -> f64 {
        (self.log_det / (2.0 * self.dim() as f64)).exp()
    }

    /// `sqrt(P_jj)`, the half-width along coordinate `j`.
    pub fn half_width(&self, j: usize) -> f64 {
        self.shape[j * self.dim() + j].max(0.0).sqrt()
    }

    /// Keep `{x : a'x <= a'c - alpha * sqrt(a'Pa)}`.
    ///
    /// `alpha` is the normalised cut depth: negative for shallow cuts, zero
    /// for central cuts, positive for deep cuts. It is clipped to
    /// `[-1/n, 0.999]`.
    pub fn cut(&mut self, a: &[f64], alpha: f64, pa: &mut Vec<f64>) -> CutResult {
        let n = self.dim();
        let nf = n as f64;
        pa.clear();
        pa.resize(n, 0.0);
        for i in 0..n {
            let row = &self.shape[i * n..(i + 1) * n];
            pa[i] = row.iter().zip(a).map(|(p, x)| p * x).sum();
        }
        let apa: f64 = pa.iter().zip(a).map(|(p, x)| p * x).sum();
        if !(apa > 0.0) || !apa.is_finite() {
            return CutResult::Degenerate;
        }
        let alpha = alpha.clamp(-1.0 / nf, 0.999);
        let norm = apa.sqrt();
        for v in pa.iter_mut() {
            *v /= norm;
        }
        let tau = (1.0 + nf * alpha) / (nf + 1.0);
        let sigma = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        let delta = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);
        for i in 0..n {
            self.center[i] -= tau * pa[i];
        }
        for i in 0..n {
            for j in i..n {
                let v = delta * (self.shape[i * n + j] - sigma * pa[i] * pa[j]);
                self.shape[i * n + j] = v;
                self.shape[j * n + i] = v;
            }
        }
        self.log_det += nf * delta.ln() + (1.0 - sigma).ln();
        CutResult::Updated
    }
}
