pub mod error;
pub mod io;
pub mod oracle;
pub mod par;
pub mod penalty;
pub mod problem;
pub mod simulate;
pub mod solver;
pub mod suites;
pub mod thresholding;
