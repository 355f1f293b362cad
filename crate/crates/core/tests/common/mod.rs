//! Shared fixtures for integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use crdsa::success_model::{estimate_success_table, TableSpec};
use crdsa::SuccessTable;

/// Seed of the reference success table.
pub const REFERENCE_SEED: u64 = 2011;

fn cache_path(spec: &TableSpec) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!(
        "q-d{}-ns{}-i{}-t{}-n{}-s{}.txt",
        spec.degree,
        spec.num_slots,
        spec.max_iterations,
        spec.tau_max,
        spec.trials_per_tau,
        spec.master_seed
    ))
}

fn load_matching(path: &Path, spec: &TableSpec) -> Option<SuccessTable> {
    SuccessTable::load_from_path(path).ok().filter(|t| t.spec() == *spec)
}

/// The reference table, built once and cached on disk across runs.
/// `CRDSA_REFERENCE_TABLE` may point at a prebuilt copy; it is only read.
pub fn reference_table() -> &'static SuccessTable {
    static TABLE: OnceLock<SuccessTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let spec = TableSpec::reference(REFERENCE_SEED);
        if let Ok(p) = std::env::var("CRDSA_REFERENCE_TABLE") {
            match load_matching(Path::new(&p), &spec) {
                Some(t) => return t,
                None => eprintln!("ignoring CRDSA_REFERENCE_TABLE={p}: unreadable or built with other parameters"),
            }
        }
        let path = cache_path(&spec);
        if let Some(t) = load_matching(&path, &spec) {
            return t;
        }
        eprintln!("building reference success table at {}", path.display());
        let t = estimate_success_table(spec).expect("reference table");
        let tmp = path.with_extension("partial");
        t.save_to_path(&tmp).expect("write table cache");
        std::fs::rename(&tmp, &path).expect("move table cache");
        t
    })
}
