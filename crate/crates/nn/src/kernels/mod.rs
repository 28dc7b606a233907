pub mod conv;
pub mod norm;
pub mod pool;
pub mod resize;
