//! Column sets of every CSV file the CLI writes. `schema/csv.md` documents
//! the same lists.

use sassc_core::kkt::CSV_COLUMNS;

pub const HISTORY: [&str; 7] = [
    "iteration",
    "max_residual",
    "r4",
    "r5_feas",
    "r5_comp",
    "objective",
    "dual_value",
];

pub const HOMOTOPY: [&str; 5] = ["alpha_prime", "Ez2", "dist_x1", "objective", "kkt_max"];

pub const MMS: [&str; 4] = ["n1d", "h", "max_error", "rate"];

pub const COMPARE: [&str; 6] = [
    "algorithm",
    "status",
    "iterations",
    "objective",
    "kkt_max",
    "dist_x1",
];

pub const KKT: [&str; 13] = CSV_COLUMNS;

/// `(file name, columns)` for every CSV output.
pub fn all() -> [(&'static str, &'static [&'static str]); 5] {
    [
        ("history.csv", &HISTORY),
        ("kkt.csv", &KKT),
        ("homotopy.csv", &HOMOTOPY),
        ("compare.csv", &COMPARE),
        ("mms.csv", &MMS),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn schema_document_lists_every_header() {
        let doc = include_str!("../schema/csv.md");
        for (file, cols) in super::all() {
            let line = format!("{file}: {}", cols.join(","));
            assert!(
                doc.lines().any(|l| l.trim() == line),
                "schema/csv.md lacks `{line}`"
            );
        }
    }
}
