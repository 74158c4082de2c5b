pub mod analysis;
pub mod bench;
pub mod engine;
pub mod io;
pub mod proxy;
pub mod search;
pub mod space;
