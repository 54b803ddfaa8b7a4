use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};

/// Column-stacks a single channel: element `(i, j)` lands at `j * m + i`.
pub fn vectorize(x: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra storage is column-major, which is exactly column stacking.
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &DVector<f64>, m: usize, n: usize) -> Result<DMatrix<f64>> {
    if v.len() != m * n {
        return Err(shape_err((m * n, 1), (v.len(), 1)));
    }
    Ok(DMatrix::from_column_slice(m, n, v.as_slice()))
}

/// A 1- or 3-channel image with nominal pixel range [0, 1].
///
/// Channels are processed independently everywhere in the crate; library
/// operations never clamp, only export does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    channels: Vec<DMatrix<f64>>,
}

impl Image {
    pub fn new(channels: Vec<DMatrix<f64>>) -> Result<Self> {
        if channels.len() != 1 && channels.len() != 3 {
            return Err(invalid(format!(
                "channel count must be 1 or 3, got {}",
                channels.len()
            )));
        }
        let (m, n) = channels[0].shape();
        if m == 0 || n == 0 {
            return Err(invalid("image dimensions must be at least 1x1"));
        }
        if let Some(bad) = channels.iter().find(|c| c.shape() != (m, n)) {
            return Err(shape_err((m, n), bad.shape()));
        }
        Ok(Self { channels })
    }

    pub fn gray(channel: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![channel])
    }

    pub fn height(&self) -> usize {
        self.channels[0].nrows()
    }

    pub fn width(&self) -> usize {
        self.channels[0].ncols()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[DMatrix<f64>] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &DMatrix<f64> {
        &self.channels[c]
    }

    pub fn into_channels(self) -> Vec<DMatrix<f64>> {
        self.channels
    }

    /// Applies a fallible per-channel map, keeping the channel layout.
    pub fn try_map<F>(&self, mut f: F) -> Result<Image>
    where
        F: FnMut(usize, &DMatrix<f64>) -> Result<DMatrix<f64>>,
    {
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(c, ch)| f(c, ch))
            .collect::<Result<Vec<_>>>()?;
        Image::new(channels)
    }

    /// Copy with every pixel clamped into [0, 1]; used only at export time.
    pub fn clamped(&self) -> Image {
        Image {
            channels: self
                .channels
                .iter()
                .map(|c| c.map(|v| v.clamp(0.0, 1.0)))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_stacking_order() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vectorize(&x).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn single_pixel() {
        let x = DMatrix::from_element(1, 1, 0.25);
        assert_eq!(vectorize(&x).as_slice(), &[0.25]);
    }

    #[test]
    fn element_position_is_j_times_m_plus_i() {
        let x = DMatrix::from_fn(6, 7, |i, j| (10 * i + j) as f64);
        let v = vectorize(&x);
        for i in 0..6 {
            for j in 0..7 {
                assert_eq!(v[j * 6 + i], x[(i, j)]);
            }
        }
    }

    #[test]
    fn unvectorize_rejects_wrong_length() {
        let v = DVector::zeros(5);
        assert!(unvectorize(&v, 2, 3).is_err());
    }

    #[test]
    fn image_rejects_bad_channel_counts() {
        let c = DMatrix::zeros(2, 2);
        assert!(Image::new(vec![c.clone(), c.clone()]).is_err());
        assert!(Image::new(vec![c.clone(), c.clone(), DMatrix::zeros(2, 3)]).is_err());
        assert!(Image::new(vec![DMatrix::zeros(0, 2)]).is_err());
        assert_eq!(Image::new(vec![c.clone(), c.clone(), c]).unwrap().channel_count(), 3);
    }

    proptest::proptest! {
        #[test]
        fn vectorize_round_trip(m in 1usize..9, n in 1usize..9, seed in 0u64..1000) {
            let x = DMatrix::from_fn(m, n, |i, j| ((i * 31 + j * 17) as f64 + seed as f64).sin());
            let back = unvectorize(&vectorize(&x), m, n).unwrap();
            proptest::prop_assert_eq!(back, x);
        }
    }
}
