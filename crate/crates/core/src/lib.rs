//! Binocular convolutional networks.
//!
//! A from-scratch training engine for five-block CNNs plus the wiring that
//! feeds stereo image pairs into one or two "hemisphere" networks:
//!
//! * `mono`: one network, every eye image is its own sample;
//! * `bcnn1`: optic-chiasma routing, one network sees the left visual field
//!   of both eyes, the other the right field;
//! * `bcnn2`: no crossing, one network per eye;
//! * `mono-chiasma`: field routing applied to single (left-eye) images.
//!
//! Concatenated last-pool features are classified by a linear SVM, and the
//! [`harness`] repeats split/train/score over seeded runs.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod rng;
pub mod routing;
pub mod svm;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Axis, Matrix, Shape, Tensor};
