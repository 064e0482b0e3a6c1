use serde::{Deserialize, Serialize};

use super::{
    train_offline_kd, train_online_kd, train_supervised, train_transfer, Domain, PairedSet,
    TrainConfig, TrainResult,
};
use crate::error::{Error, Result};
use crate::models::{build_stager, ModelConfig, SleepStager};
use crate::nn::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SupervisedScalp,
    SupervisedEar,
    Transfer,
    KdOffline,
    KdOnline,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::SupervisedScalp,
        Strategy::SupervisedEar,
        Strategy::Transfer,
        Strategy::KdOffline,
        Strategy::KdOnline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SupervisedScalp => "supervised-scalp",
            Strategy::SupervisedEar => "supervised-ear",
            Strategy::Transfer => "transfer",
            Strategy::KdOffline => "kd-offline",
            Strategy::KdOnline => "kd-online",
        }
    }

    /// Domain the trained model is evaluated on.
    pub fn eval_domain(self) -> Domain {
        match self {
            Strategy::SupervisedScalp => Domain::Scalp,
            _ => Domain::Ear,
        }
    }

    /// Human-readable method name for report tables.
    pub fn method(self) -> &'static str {
        match self {
            Strategy::SupervisedScalp | Strategy::SupervisedEar => "Supervised",
            Strategy::Transfer => "Transfer learning",
            Strategy::KdOffline => "Offline KD",
            Strategy::KdOnline => "Online KD",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

/// Trains one strategy on `data`. Offline distillation uses `teacher` when
/// given and otherwise first trains a scalp-supervised teacher.
pub fn run_strategy<F: Scalar>(
    strategy: Strategy,
    model_config: &ModelConfig,
    data: &PairedSet<F>,
    config: &TrainConfig,
    teacher: Option<&SleepStager<F>>,
) -> Result<TrainResult<F>> {
    match strategy {
        Strategy::SupervisedScalp => train_supervised(build_stager(model_config)?, &data.scalp, config),
        Strategy::SupervisedEar => train_supervised(build_stager(model_config)?, &data.ear, config),
        Strategy::Transfer => train_transfer(model_config, &data.scalp, &data.ear, config),
        Strategy::KdOffline => {
            let trained;
            let teacher = match teacher {
                Some(t) => t,
                None => {
                    trained =
                        train_supervised(build_stager(model_config)?, &data.scalp, config)?.model;
                    &trained
                }
            };
            let mut result = train_offline_kd(teacher, model_config, data, config)?;
            result.teacher = Some(teacher.clone());
            Ok(result)
        }
        Strategy::KdOnline => train_online_kd(model_config, model_config, data, config),
    }
}
