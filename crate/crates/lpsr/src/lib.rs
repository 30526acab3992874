//! License-plate super-resolution with an OCR-guided layout and character
//! oriented loss, GAN-style training, and synthetic-data experiments.

pub mod alphabet;
pub mod config;
pub mod data;
pub mod error;
pub mod image;
pub mod loss;
pub mod models;
pub mod eval;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
