//! Recording ingestion, paired-epoch assembly, LOSO splitting and the
//! synthetic paired scalp / ear generator.

mod container;
mod paired;
mod split;
mod stage;
mod synth;

pub use container::{
    channel_file_name, load_recording_container, write_recording_container, ContainerManifest,
    MANIFEST_FILE,
};
pub use paired::{make_paired_epochs, normalize_epoch, PairedEpoch, SubjectEpochs, STD_FLOOR};
pub use split::{loso_splits, Fold, SplitPlan};
pub use stage::{
    format_hypnogram, load_hypnogram, parse_hypnogram, write_hypnogram, StageLabel, NUM_STAGES,
};
pub use synth::{
    synth_electrode_subject, synth_paired_dataset, synth_subject, synth_subject_epochs, ElectrodeSubject,
    SynthComponents, SynthConfig, SynthSubject, TRANSITIONS,
};
