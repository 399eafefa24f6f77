use crate::error::{Error, Result};
use crate::volume::{DataType, Volume3D};

/// `(x - mean) / sd` over all voxels, with the population standard deviation.
pub fn zscore_normalize(vol: &Volume3D) -> Result<Volume3D> {
    let data = vol.data();
    if data.len() < 2 {
        return Err(Error::Degenerate("z-score needs at least 2 voxels".into()));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = data.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(sd > f64::EPSILON * scale) || !sd.is_finite() {
        return Err(Error::Degenerate("zero-variance volume cannot be z-scored".into()));
    }
    let out = data.iter().map(|x| (x - mean) / sd).collect();
    Volume3D::new(vol.grid().clone(), out, DataType::Float64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    fn vol(values: Vec<f64>) -> Volume3D {
        let g = Grid::with_spacing([values.len(), 1, 1], [1.0; 3]).unwrap();
        Volume3D::new(g, values, DataType::Float32).unwrap()
    }

    #[test]
    fn two_values_population_convention() {
        let out = zscore_normalize(&vol(vec![0.0, 10.0])).unwrap();
        assert_eq!(out.data(), &[-1.0, 1.0]);
        // with the sample convention the sd would be 10/sqrt(2), giving ±0.7071
    }

    #[test]
    fn mean_zero_sd_one() {
        let values: Vec<f64> = (0..97).map(|i| ((i * 37) % 101) as f64 * 0.3 + 5.0).collect();
        let out = zscore_normalize(&vol(values)).unwrap();
        let n = out.data().len() as f64;
        let mean = out.data().iter().sum::<f64>() / n;
        let sd = (out.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((sd - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_is_degenerate() {
        assert!(matches!(
            zscore_normalize(&vol(vec![4.0; 10])),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(zscore_normalize(&vol(vec![4.0])), Err(Error::Degenerate(_))));
    }
}
