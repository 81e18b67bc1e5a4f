//! Bundled case-study datasets: log odds ratios for acute rejection (six
//! studies) and steroid-resistant rejection (three studies) after IL-2
//! receptor antagonist induction in paediatric liver transplantation.

use crate::domain::Dataset;
use crate::io::read_dataset;

pub const CRINS_AR_CSV: &str = include_str!("../data/crins_ar.csv");
pub const CRINS_SRR_CSV: &str = include_str!("../data/crins_srr.csv");

pub fn crins_ar() -> Dataset {
    read_dataset(CRINS_AR_CSV.as_bytes()).expect("bundled AR data is valid")
}

pub fn crins_srr() -> Dataset {
    read_dataset(CRINS_SRR_CSV.as_bytes()).expect("bundled SRR data is valid")
}
