use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper tail of the chi-square distribution, kept inside (0, 1].
pub fn chi_square_sf(statistic: f64, df: usize) -> f64 {
    if df == 0 || statistic <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df > 0");
    dist.sf(statistic).clamp(f64::MIN_POSITIVE, 1.0)
}
