use crate::error::{invalid, Result};

/// Liquidity spread uniformly over `[center − halfwidth, center + halfwidth]`.
///
/// The height `V₀/(2ε)` keeps the total liquidity at `V₀` for every width, so a
/// shrinking sequence concentrates toward a point mass at the limit price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiquidityStep {
    pub center: f64,
    pub halfwidth: f64,
    pub volume: f64,
}

impl LiquidityStep {
    pub fn height(&self) -> f64 {
        self.volume / (2.0 * self.halfwidth)
    }

    pub fn density(&self, price: f64) -> f64 {
        if (price - self.center).abs() <= self.halfwidth {
            self.height()
        } else {
            0.0
        }
    }

    pub fn total(&self) -> f64 {
        self.height() * 2.0 * self.halfwidth
    }
}

pub fn liquidity_step_sequence(
    price: f64,
    volume: f64,
    halfwidths: &[f64],
) -> Result<Vec<LiquidityStep>> {
    if !(price > 0.0) || !(volume >= 0.0) {
        return invalid("liquidity step needs a positive price and nonnegative volume");
    }
    halfwidths
        .iter()
        .map(|&eps| {
            if !(eps.is_finite() && eps > 0.0) {
                return invalid(format!("halfwidth must be positive, got {eps}"));
            }
            Ok(LiquidityStep {
                center: price,
                halfwidth: eps,
                volume,
            })
        })
        .collect()
}
