//! Manifests, experiment orchestration, reference lines, reports and run
//! metadata.

mod experiment;
mod manifest;
mod report;
mod sidecar;
mod stack;

use sha2::{Digest, Sha256};

pub use experiment::{
    clap_t_groups, expected_cell_clips, match_rates, reference_lines, run_experiment, CellRow, ExperimentOptions,
    ExperimentReport, ReferenceLines, ReportMetadata, TrainingReference, BASE_CONFIG, CLIPS_PER_PROMPT,
    DEFAULT_NOISE_POOL, RECONSTRUCTION_TEMPLATE,
};
pub use manifest::{
    load_manifest, parse_manifest, parse_prompt_lines, ClipSource, DatasetManifest, ManifestConcept,
    MAX_CLIPS_PER_CONCEPT,
};
pub use report::{
    emit_report, parse_rows_csv, read_report_json, read_rows_csv, report_json, round4, rows_csv, summarize,
    summary_csv, summary_path, ConfigSummary, ReportFormat, ROW_COLUMNS, SUMMARY_COLUMNS,
};
pub use sidecar::{config_hash, read_sidecar, sidecar_path, write_sidecar, Sidecar, SIDECAR_FORMAT_VERSION};
pub use stack::{build_stack, load_model, save_model, save_stack, LoadedModel, PretrainedStack, StackConfig};

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
