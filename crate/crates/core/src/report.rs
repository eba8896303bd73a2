//! Soft diagnostics: conditions worth reporting that should not abort
//! a computation (truncated tails, marginal sampling, widened blocks).
//! Hard failures use [`crate::error::CoreError`] instead.

use std::fmt;

/// One soft condition observed during a computation.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Mass near a truncation edge: `magnitude` is the observed edge
    /// size relative to the main term.
    Truncation { context: String, magnitude: f64 },
    /// A sampled function has frequency content near the grid Nyquist
    /// limit; `headroom` is (Nyquist)/(observed bandwidth), < 2 is
    /// suspicious.
    Aliasing { context: String, headroom: f64 },
    /// A reported error bound (interpolation, quadrature) attached to
    /// a result.
    ErrorBound { context: String, bound: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Truncation { context, magnitude } => {
                write!(f, "truncation [{context}]: edge magnitude {magnitude:.3e}")
            }
            Warning::Aliasing { context, headroom } => {
                write!(f, "aliasing [{context}]: Nyquist headroom {headroom:.2}")
            }
            Warning::ErrorBound { context, bound } => {
                write!(f, "error bound [{context}]: {bound:.3e}")
            }
        }
    }
}

/// Accumulator for [`Warning`]s; cheap to pass down call chains.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    warnings: Vec<Warning>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn truncation(&mut self, context: impl Into<String>, magnitude: f64) {
        self.warnings.push(Warning::Truncation {
            context: context.into(),
            magnitude,
        });
    }

    pub fn aliasing(&mut self, context: impl Into<String>, headroom: f64) {
        self.warnings.push(Warning::Aliasing {
            context: context.into(),
            headroom,
        });
    }

    pub fn error_bound(&mut self, context: impl Into<String>, bound: f64) {
        self.warnings.push(Warning::ErrorBound {
            context: context.into(),
            bound,
        });
    }

    pub fn extend(&mut self, other: Diagnostics) {
        self.warnings.extend(other.warnings);
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }

    /// Largest reported error bound, if any were attached.
    pub fn max_error_bound(&self) -> Option<f64> {
        self.warnings
            .iter()
            .filter_map(|w| match w {
                Warning::ErrorBound { bound, .. } => Some(*bound),
                _ => None,
            })
            .fold(None, |acc, b| Some(acc.map_or(b, |a: f64| a.max(b))))
    }
}
