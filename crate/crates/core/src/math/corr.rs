use super::sum;
use crate::error::{Error, Result, MIN_VARIANCE};

/// Ranks starting at 1; tied values share the average of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// A vector centered on its mean, with its Euclidean norm.
///
/// Pearson correlations against many partners reuse one `Centered`.
#[derive(Debug, Clone)]
pub struct Centered {
    values: Vec<f64>,
    /// Sum of squared deviations.
    ss: f64,
}

impl Centered {
    pub fn new(v: &[f64]) -> Result<Self> {
        if v.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "correlation needs at least 2 values, got {}",
                v.len()
            )));
        }
        let m = sum::mean(v);
        let values: Vec<f64> = v.iter().map(|x| x - m).collect();
        let ss = sum::sum(values.iter().map(|x| x * x));
        let variance = ss / v.len() as f64;
        if variance.is_nan() || variance <= MIN_VARIANCE {
            return Err(Error::ConstantVector { variance });
        }
        Ok(Self { values, ss })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn correlate(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "vectors have lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        // same summation as `ss`, so a vector correlates with itself to exactly 1
        let cross = sum::sum(self.values.iter().zip(&other.values).map(|(a, b)| a * b));
        Ok((cross / (self.ss * other.ss).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Pearson correlation coefficient.
pub fn pearson(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Centered::new(u)?.correlate(&Centered::new(v)?)
}

/// Spearman rank correlation (Pearson on average-tie ranks).
pub fn spearman(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors have lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    // constant input gives constant ranks, caught by Centered
    pearson(&average_ranks(u), &average_ranks(v))
}
