//! Feature maps: `eta`-scaled RGB channels followed by `C` deep channels.

use alloc::vec::Vec;

use crate::grid::{GridDims, ScalarField};
use crate::{Error, Result};

/// A stack of `3 + C` channels on one grid.
///
/// Channels `0..3` hold the RGB image multiplied by `eta`; the remaining
/// channels are deep features. In the plain RGB model `C = 0` and `eta = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dims: GridDims,
    channels: Vec<ScalarField>,
    eta: f64,
}

impl FeatureMap {
    /// Wrap channels that already carry the `eta` scaling on their first three
    /// entries.
    pub fn from_channels(channels: Vec<ScalarField>, eta: f64) -> Result<Self> {
        crate::energy::positive("eta", eta)?;
        if channels.len() < 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                found: channels.len(),
            });
        }
        let dims = channels[0].dims();
        for c in &channels {
            dims.ensure_same(&c.dims())?;
        }
        Ok(FeatureMap { dims, channels, eta })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Total channel count `3 + C`.
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Number of deep channels `C`.
    pub fn deep_channels(&self) -> usize {
        self.channels.len() - 3
    }

    pub fn channels(&self) -> &[ScalarField] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [ScalarField] {
        &mut self.channels
    }

    /// The image component with the `eta` scaling removed.
    pub fn rgb_image(&self) -> [ScalarField; 3] {
        let s = 1.0 / self.eta;
        [
            self.channels[0].scaled(s),
            self.channels[1].scaled(s),
            self.channels[2].scaled(s),
        ]
    }

    /// `(1 - t) * self + t * other`, channel by channel.
    pub fn blend(&self, other: &FeatureMap, t: f64) -> Result<FeatureMap> {
        self.ensure_compatible(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| {
                let mut out = a.scaled(1.0 - t);
                out.axpy(t, b);
                out
            })
            .collect();
        Ok(FeatureMap {
            dims: self.dims,
            channels,
            eta: self.eta,
        })
    }

    /// Squared grid-averaged norm summed over channels.
    pub fn norm_sq(&self) -> f64 {
        self.channels.iter().map(ScalarField::mean_sq).sum()
    }

    /// `self - other` as a new map.
    pub fn difference(&self, other: &FeatureMap) -> Result<FeatureMap> {
        self.ensure_compatible(other)?;
        Ok(FeatureMap {
            dims: self.dims,
            channels: self.channels.iter().zip(&other.channels).map(|(a, b)| a.sub(b)).collect(),
            eta: self.eta,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().all(ScalarField::is_finite)
    }

    pub(crate) fn ensure_compatible(&self, other: &FeatureMap) -> Result<()> {
        self.dims.ensure_same(&other.dims)?;
        if self.channels.len() != other.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                found: other.channels.len(),
            });
        }
        Ok(())
    }
}

/// Dense deep-feature tensor of `C` single-precision channels.
///
/// Layout is channel-major, each channel row-major like [`ScalarField`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(FeatureTensor {
            width,
            height,
            channels,
            data,
        })
    }

    /// Build from `f64` fields (values are rounded to `f32`).
    pub fn from_fields(fields: &[ScalarField], dims: GridDims) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len() * fields.len());
        for f in fields {
            dims.ensure_same(&f.dims())?;
            data.extend(f.as_slice().iter().map(|&v| v as f32));
        }
        Self::new(dims.width(), dims.height(), fields.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Channel `c` widened to `f64`.
    pub fn channel(&self, c: usize) -> Result<ScalarField> {
        if c >= self.channels {
            return Err(Error::IndexOutOfRange {
                index: c,
                lo: 0,
                hi: self.channels.saturating_sub(1),
            });
        }
        let dims = GridDims::new(self.width, self.height)?;
        let n = dims.len();
        let values = self.data[c * n..(c + 1) * n].iter().map(|&v| v as f64).collect();
        ScalarField::from_vec(dims, values)
    }
}

/// `f = (eta * u, F(u))`: concatenate the scaled image channels and the deep
/// channels of `deep`, if present.
pub fn assemble_feature(rgb: &[ScalarField; 3], deep: Option<&FeatureTensor>, eta: f64) -> Result<FeatureMap> {
    let dims = rgb[0].dims();
    let mut channels: Vec<ScalarField> = rgb.iter().map(|c| c.scaled(eta)).collect();
    if let Some(t) = deep {
        if (t.width, t.height) != dims.as_tuple() {
            return Err(Error::DimsMismatch {
                expected: dims.as_tuple(),
                found: (t.width, t.height),
            });
        }
        for c in 0..t.channels {
            channels.push(t.channel(c)?);
        }
    }
    FeatureMap::from_channels(channels, eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(d: GridDims) -> [ScalarField; 3] {
        [
            ScalarField::from_fn(d, |i, _| i as f64 / 10.0),
            ScalarField::from_fn(d, |_, j| j as f64 / 10.0),
            ScalarField::constant(d, 0.5),
        ]
    }

    #[test]
    fn rgb_mode_is_identity() {
        let d = GridDims::new(4, 5).unwrap();
        let u = rgb(d);
        let f = assemble_feature(&u, None, 1.0).unwrap();
        assert_eq!(f.channel_count(), 3);
        assert_eq!(f.deep_channels(), 0);
        for c in 0..3 {
            assert_eq!(f.channels()[c], u[c]);
        }
    }

    #[test]
    fn deep_mode_scales_and_concatenates() {
        let d = GridDims::new(4, 5).unwrap();
        let u = rgb(d);
        let deep: Vec<f32> = (0..64 * 20).map(|v| v as f32).collect();
        let t = FeatureTensor::new(4, 5, 64, deep).unwrap();
        let f = assemble_feature(&u, Some(&t), 1e-6).unwrap();
        assert_eq!(f.channel_count(), 67);
        for c in 0..3 {
            assert!(f.channels()[c].max() <= 1e-6);
        }
        assert_eq!(f.channels()[3].get(0, 0), 0.0);
        assert_eq!(f.channels()[66].get(3, 4), (63 * 20 + 19) as f64);
        // the image component is recovered unscaled
        let back = f.rgb_image();
        assert!((back[0].get(3, 0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn dims_mismatch_rejected() {
        let d = GridDims::new(4, 5).unwrap();
        let t = FeatureTensor::new(5, 4, 1, alloc::vec![0.0; 20]).unwrap();
        assert!(matches!(
            assemble_feature(&rgb(d), Some(&t), 1.0),
            Err(Error::DimsMismatch { .. })
        ));
        assert!(FeatureTensor::new(2, 2, 2, alloc::vec![0.0; 7]).is_err());
    }
}
