/// Batch of feature planes laid out as `[batch][plane][time][width]`.
///
/// `width` is the sensor-channel axis; kernels only ever slide along `time`,
/// so a `(b, plane)` slice is one contiguous `time * width` block and a shift
/// of `k` time steps is a shift of `k * width` elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub batch: usize,
    pub planes: usize,
    pub time: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(batch: usize, planes: usize, time: usize, width: usize) -> Self {
        FeatureMap {
            batch,
            planes,
            time,
            width,
            data: vec![0.0; batch * planes * time * width],
        }
    }

    pub fn from_vec(batch: usize, planes: usize, time: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), batch * planes * time * width, "feature map size");
        FeatureMap {
            batch,
            planes,
            time,
            width,
            data,
        }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.time * self.width
    }

    /// Elements per batch entry.
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.planes * self.time * self.width
    }

    #[inline]
    pub fn plane(&self, b: usize, p: usize) -> &[f64] {
        let n = self.plane_len();
        let start = (b * self.planes + p) * n;
        &self.data[start..start + n]
    }

    #[inline]
    pub fn plane_mut(&mut self, b: usize, p: usize) -> &mut [f64] {
        let n = self.plane_len();
        let start = (b * self.planes + p) * n;
        &mut self.data[start..start + n]
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.batch == other.batch
            && self.planes == other.planes
            && self.time == other.time
            && self.width == other.width
    }

    /// Reinterprets the data with a new per-sample geometry of equal size.
    pub fn reshaped(self, planes: usize, time: usize, width: usize) -> Self {
        assert_eq!(planes * time * width, self.sample_len(), "reshape size");
        FeatureMap {
            batch: self.batch,
            planes,
            time,
            width,
            data: self.data,
        }
    }
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
