//! Exchangeability diagnostics: the classifier two-sample test and the
//! optimal-assignment pairing check.

mod assignment;
mod c2st;

pub use assignment::{
    assignment_cost, hungarian, pairing_check, pairing_cost, PairingConfig, PairingReport,
    PairingVerdict,
};
pub use c2st::{
    build_c2st_dataset, c2st, c2st_pvalue, C2STReport, C2stConfig, C2stVerdict, FeatureMap,
};

#[cfg(test)]
mod tests;
