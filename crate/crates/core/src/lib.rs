pub mod analytics;
pub mod book;
pub mod coupling;
pub mod dist;
pub mod export;
pub mod lyapunov;
pub mod rng;
pub mod sim;
