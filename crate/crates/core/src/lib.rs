pub mod adscheck;
pub mod manhattan;
pub mod moebius;
pub mod reps;
pub mod spectrum;
pub mod words;
