//! Ear-channel quality rejection and the scalp / ear derivations fed to the
//! sleep stagers.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{bandpass_filter, Recording, Welch, PREPROCESS_BAND};

/// Band used to judge ear-channel contact quality.
pub const REJECTION_BAND: (f64, f64) = (10.0, 35.0);

/// Robust z-score above which a channel counts as an outlier.
pub const REJECTION_Z: f64 = 3.0;

/// Scales a median absolute deviation to a normal standard deviation.
const MAD_TO_SIGMA: f64 = 1.4826;

pub const SCALP_DERIVATIONS: [(&str, &str); 3] = [("C3", "O1"), ("C4", "O2"), ("A1", "A2")];
pub const SCALP_NAMES: [&str; 3] = ["C3-O1", "C4-O2", "A1-A2"];
pub const EAR_NAMES: [&str; 3] = ["L-R", "LE", "RE"];

pub const LEFT_CANAL: [&str; 2] = ["ELA", "ELB"];
pub const LEFT_CONCHA: [&str; 4] = ["ELE", "ELI", "ELG", "ELK"];
pub const RIGHT_CANAL: [&str; 2] = ["ERA", "ERB"];
pub const RIGHT_CONCHA: [&str; 4] = ["ERE", "ERI", "ERG", "ERK"];

/// Electrodes of the 8-channel scalp montage.
pub const SCALP_ELECTRODES: [&str; 8] = ["O1", "O2", "C3", "C4", "A1", "A2", "F3", "F4"];

/// All twelve ear electrodes, left ear first.
pub fn ear_electrodes() -> Vec<&'static str> {
    LEFT_CANAL
        .iter()
        .chain(&LEFT_CONCHA)
        .chain(&RIGHT_CANAL)
        .chain(&RIGHT_CONCHA)
        .copied()
        .collect()
}

/// Symmetric matrix of derivation band powers; the diagonal is undefined and
/// stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPower {
    pub channel_ids: Vec<String>,
    pub values: Array2<f64>,
}

impl PairPower {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (i != j).then(|| self.values[[i, j]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub channel_ids: Vec<String>,
    /// `P_ij` in µV², `None` on the diagonal.
    pub pair_power: Vec<Vec<Option<f64>>>,
    /// `m_i`, the median of row `i` of `pair_power` over `j ≠ i`.
    pub channel_medians: Vec<f64>,
    pub rejected: Vec<String>,
    /// Channels whose median exceeds this power (µV²) are rejected.
    pub threshold_value: f64,
}

impl RejectionReport {
    pub fn usable(&self) -> Vec<String> {
        self.channel_ids
            .iter()
            .filter(|c| !self.rejected.contains(c))
            .cloned()
            .collect()
    }
}

/// Three named derivations sharing the sample clock of their source.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivationSet(Recording);

impl DerivationSet {
    pub fn new(recording: Recording) -> Result<Self> {
        if recording.num_channels() != 3 {
            return Err(Error::ShapeError(format!(
                "derivation set needs 3 channels, got {}",
                recording.num_channels()
            )));
        }
        Ok(Self(recording))
    }

    pub fn names(&self) -> &[String] {
        self.0.channel_ids()
    }

    pub fn data(&self) -> &Array2<f64> {
        self.0.data()
    }

    pub fn recording(&self) -> &Recording {
        &self.0
    }

    pub fn into_recording(self) -> Recording {
        self.0
    }

    pub fn sample_rate(&self) -> f64 {
        self.0.sample_rate()
    }

    pub fn num_samples(&self) -> usize {
        self.0.num_samples()
    }
}

/// `P_ij` = band power of `channel_i − channel_j` in [`REJECTION_BAND`].
pub fn pairwise_band_power(ear: &Recording) -> Result<PairPower> {
    let c = ear.num_channels();
    if c < 2 {
        return Err(Error::NotEnoughChannels(c));
    }
    let welch = Welch::new(ear.sample_rate());
    let columns: Vec<Vec<f64>> = (0..c).map(|i| ear.data().column(i).to_vec()).collect();
    let mut values = Array2::from_elem((c, c), f64::NAN);
    let mut diff = vec![0.0; ear.num_samples()];
    for i in 0..c {
        for j in i + 1..c {
            for ((d, a), b) in diff.iter_mut().zip(&columns[i]).zip(&columns[j]) {
                *d = a - b;
            }
            let p = welch.band_power(&diff, REJECTION_BAND.0, REJECTION_BAND.1)?;
            values[[i, j]] = p;
            values[[j, i]] = p;
        }
    }
    Ok(PairPower {
        channel_ids: ear.channel_ids().to_vec(),
        values,
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags channel `i` when `ln m_i` lies more than [`REJECTION_Z`] robust
/// standard deviations above the median of `ln m`.
pub fn reject_channels(power: &PairPower) -> Result<RejectionReport> {
    let c = power.channel_ids.len();
    if c < 2 {
        return Err(Error::NotEnoughChannels(c));
    }
    let medians: Vec<f64> = (0..c)
        .map(|i| {
            let row: Vec<f64> = (0..c).filter_map(|j| power.get(i, j)).collect();
            median(&row)
        })
        .collect();
    let logs: Vec<f64> = medians.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
    let center = median(&logs);
    let deviations: Vec<f64> = logs.iter().map(|l| (l - center).abs()).collect();
    let spread = MAD_TO_SIGMA * median(&deviations);
    let log_threshold = center + REJECTION_Z * spread;

    let rejected: Vec<String> = logs
        .iter()
        .zip(&power.channel_ids)
        .filter(|(l, _)| **l > log_threshold)
        .map(|(_, name)| name.clone())
        .collect();
    if rejected.len() == c {
        return Err(Error::AllChannelsRejected);
    }
    let pair_power = (0..c)
        .map(|i| (0..c).map(|j| power.get(i, j)).collect())
        .collect();
    Ok(RejectionReport {
        channel_ids: power.channel_ids.clone(),
        pair_power,
        channel_medians: medians,
        rejected,
        threshold_value: log_threshold.exp(),
    })
}

/// C3−O1, C4−O2 and A1−A2.
pub fn scalp_derivations(recording: &Recording) -> Result<DerivationSet> {
    let mut data = Array2::zeros((recording.num_samples(), 3));
    for (k, (a, b)) in SCALP_DERIVATIONS.iter().enumerate() {
        let diff = &recording.channel(a)? - &recording.channel(b)?;
        data.column_mut(k).assign(&diff);
    }
    let names = SCALP_NAMES.iter().map(|s| s.to_string()).collect();
    DerivationSet::new(Recording::new(names, data, recording.sample_rate())?)
}

fn group_mean(recording: &Recording, group: &[&str], usable: &[String]) -> Result<Array1<f64>> {
    let members: Vec<&str> = group
        .iter()
        .copied()
        .filter(|name| usable.iter().any(|u| u == name))
        .collect();
    if members.is_empty() {
        return Err(Error::RecordingRejected(format!(
            "no usable electrode among {}",
            group.join(", ")
        )));
    }
    let mut sum = Array1::zeros(recording.num_samples());
    for name in &members {
        sum += &recording.channel(name)?;
    }
    Ok(sum / members.len() as f64)
}

/// L−R, LE and RE, each a difference of electrode-group means taken over
/// the usable members of the group only.
pub fn ear_derivations(recording: &Recording, usable: &[String]) -> Result<DerivationSet> {
    if let Some(missing) = usable.iter().find(|u| recording.channel_index(u).is_none()) {
        return Err(Error::MissingChannel(missing.clone()));
    }
    let left_canal = group_mean(recording, &LEFT_CANAL, usable)?;
    let left_concha = group_mean(recording, &LEFT_CONCHA, usable)?;
    let right_canal = group_mean(recording, &RIGHT_CANAL, usable)?;
    let right_concha = group_mean(recording, &RIGHT_CONCHA, usable)?;
    let left: Vec<&str> = LEFT_CANAL.iter().chain(&LEFT_CONCHA).copied().collect();
    let right: Vec<&str> = RIGHT_CANAL.iter().chain(&RIGHT_CONCHA).copied().collect();
    let l1 = group_mean(recording, &left, usable)?;
    let r1 = group_mean(recording, &right, usable)?;

    let mut data = Array2::zeros((recording.num_samples(), 3));
    data.column_mut(0).assign(&(&l1 - &r1));
    data.column_mut(1).assign(&(&left_canal - &left_concha));
    data.column_mut(2).assign(&(&right_canal - &right_concha));
    let names = EAR_NAMES.iter().map(|s| s.to_string()).collect();
    DerivationSet::new(Recording::new(names, data, recording.sample_rate())?)
}

/// Zero-phase band-pass of every channel over [`PREPROCESS_BAND`].
pub fn filter_recording(recording: &Recording) -> Result<Recording> {
    let fs = recording.sample_rate();
    let (low, high) = PREPROCESS_BAND;
    recording.map_channels(|x| bandpass_filter(x, fs, low, high))
}

/// Output of [`preprocess_subject`].
#[derive(Debug, Clone)]
pub struct PreprocessedSubject {
    pub scalp: DerivationSet,
    pub ear: DerivationSet,
    pub report: RejectionReport,
}

/// Full pipeline for one subject: band-pass both montages, form the scalp
/// derivations, reject noisy ear electrodes and form the ear derivations from
/// the rest. The report is returned alongside the error when the ear side is
/// rejected as a whole.
pub fn preprocess_subject(
    scalp: &Recording,
    ear: &Recording,
) -> std::result::Result<PreprocessedSubject, (Error, Option<RejectionReport>)> {
    let scalp = filter_recording(scalp).map_err(|e| (e, None))?;
    let ear = filter_recording(ear).map_err(|e| (e, None))?;
    let scalp = scalp_derivations(&scalp).map_err(|e| (e, None))?;
    let power = pairwise_band_power(&ear).map_err(|e| (e, None))?;
    let report = reject_channels(&power).map_err(|e| (e, None))?;
    match ear_derivations(&ear, &report.usable()) {
        Ok(ear) => Ok(PreprocessedSubject { scalp, ear, report }),
        Err(e) => Err((e, Some(report))),
    }
}
