use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_subjects: Vec<String>,
    pub test_subject: String,
}

/// Leave-one-subject-out plan: fold `k` holds out subject `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Fold>,
}

pub fn loso_splits(subject_ids: &[String]) -> Result<SplitPlan> {
    if subject_ids.len() < 2 {
        return Err(Error::NotEnoughSubjects(subject_ids.len()));
    }
    for (i, id) in subject_ids.iter().enumerate() {
        if subject_ids[..i].contains(id) {
            return Err(Error::InvalidConfig(format!("duplicate subject {id}")));
        }
    }
    let folds = subject_ids
        .iter()
        .map(|test| Fold {
            train_subjects: subject_ids.iter().filter(|s| *s != test).cloned().collect(),
            test_subject: test.clone(),
        })
        .collect();
    Ok(SplitPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    #[test]
    fn eight_subjects() {
        let plan = loso_splits(&ids(8)).unwrap();
        assert_eq!(plan.folds.len(), 8);
        for (k, fold) in plan.folds.iter().enumerate() {
            assert_eq!(fold.train_subjects.len(), 7);
            assert_eq!(fold.test_subject, format!("s{k:02}"));
            assert!(!fold.train_subjects.contains(&fold.test_subject));
        }
    }

    #[test]
    fn two_subjects() {
        let plan = loso_splits(&["A".to_string(), "B".to_string()]).unwrap();
        assert_eq!(
            plan.folds,
            vec![
                Fold {
                    train_subjects: vec!["B".into()],
                    test_subject: "A".into()
                },
                Fold {
                    train_subjects: vec!["A".into()],
                    test_subject: "B".into()
                },
            ]
        );
    }

    #[test]
    fn too_few_or_duplicate() {
        assert!(matches!(
            loso_splits(&ids(1)),
            Err(Error::NotEnoughSubjects(1))
        ));
        assert!(loso_splits(&["a".to_string(), "a".to_string()]).is_err());
    }
}
