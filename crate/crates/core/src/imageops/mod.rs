//! RGB rasters, bilinear resizing and the augmentation policy.

mod augment;
mod resize;
mod tensor;
mod warp;

pub use augment::{augment, AugmentationPolicy, AugmentDraw};
pub use resize::{resize, resize_to, MODEL_INPUT_HEIGHT, MODEL_INPUT_WIDTH};
pub use tensor::ImageTensor;
pub use warp::{perspective_warp, quad_homography, Homography};
