//! Regression with compositional data through the alpha-transformation.
//!
//! * [`simplex`]: compositions, the Helmert sub-matrix, alpha/ilr/alr
//!   transformations and the twice-KL fit divergence.
//! * [`zero_impute`]: detection-limit replacement of zeros refined by EM.
//! * [`alpha_reg`]: compositional responses, alr and alpha-regression with
//!   alpha selection.
//! * [`pcr`]: principal component regression with compositional predictors
//!   and cross-validated choice of alpha and the number of components.
//!
//! ```
//! use coda_alpha::pcr::{pcr_fit, pcr_predict};
//! use coda_alpha::simplex::{alpha_transform, inverse_alpha_transform};
//! use coda_alpha::{AlphaParam, CompositionBatch};
//!
//! let x = CompositionBatch::from_rows(
//!     &[
//!         vec![0.2, 0.3, 0.5],
//!         vec![0.1, 0.6, 0.3],
//!         vec![0.3, 0.3, 0.4],
//!         vec![0.6, 0.2, 0.2],
//!         vec![0.15, 0.15, 0.7],
//!     ],
//!     None,
//! )?;
//! let alpha = AlphaParam::new(0.5)?;
//! let z = alpha_transform(&x.row(0), alpha)?;
//! let back = inverse_alpha_transform(&z, alpha)?;
//! assert!((back.parts()[2] - 0.5).abs() < 1e-12);
//!
//! let y = [1.0, 2.5, 0.7, -0.4, 0.3];
//! let model = pcr_fit(&y, &x, alpha, 1, None)?;
//! let fitted = pcr_predict(&model, &x, None)?;
//! assert_eq!(fitted.len(), 5);
//! # Ok::<(), coda_alpha::CodaError>(())
//! ```

pub mod alpha_reg;
pub mod error;
pub mod linalg;
pub mod optim;
pub mod pcr;
pub mod simplex;
pub mod zero_impute;

pub use error::{CodaError, Result};
pub use simplex::{AlphaParam, Composition, CompositionBatch, TransformKind};
