//! Dense f64 tensor with shape bookkeeping. All network math runs in
//! double precision so the finite-difference gradient audit is exact to
//! rounding.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// Dimensions of a [n, c, h, w] tensor.
    #[inline]
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        debug_assert_eq!(self.shape.len(), 4);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    /// Flat offset of `[n, c, y, 0]` in a [n, c, h, w] tensor.
    #[inline]
    pub fn row_offset(&self, n: usize, c: usize, y: usize) -> usize {
        let (_, ch, h, w) = self.dims4();
        ((n * ch + c) * h + y) * w
    }

    /// Contiguous plane `[n, c, :, :]`.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let (_, ch, h, w) = self.dims4();
        let start = (n * ch + c) * h * w;
        &self.data[start..start + h * w]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let (_, ch, h, w) = self.dims4();
        let start = (n * ch + c) * h * w;
        &mut self.data[start..start + h * w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_indexing() {
        let t = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(|i| i as f64).collect());
        assert_eq!(t.plane(0, 0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(t.plane(1, 2), &[20.0, 21.0, 22.0, 23.0]);
        assert_eq!(t.row_offset(1, 0, 1), 14);
    }
}
