use super::TrainingExample;
use crate::losses::PseudoCandidateSet;
use crate::N_USER_TYPES;

/// Groups a batch by user type and splits each group by label.
///
/// Sets come out ordered by user type, members by batch index. Sets lacking
/// positives or negatives are kept; callers check [`PseudoCandidateSet::has_pairs`].
pub fn build_pseudo_sets(batch: &[TrainingExample]) -> Vec<PseudoCandidateSet> {
    let user_types: Vec<usize> = batch.iter().map(|e| e.user_type).collect();
    let labels: Vec<u8> = batch.iter().map(|e| e.label).collect();
    pseudo_sets_from(&user_types, &labels)
}

pub(crate) fn pseudo_sets_from(user_types: &[usize], labels: &[u8]) -> Vec<PseudoCandidateSet> {
    let mut groups: Vec<PseudoCandidateSet> = (0..N_USER_TYPES)
        .map(|user_type| PseudoCandidateSet {
            user_type,
            positives: Vec::new(),
            negatives: Vec::new(),
        })
        .collect();
    for (i, (&t, &y)) in user_types.iter().zip(labels).enumerate() {
        let group = &mut groups[t];
        if y == 1 {
            group.positives.push(i);
        } else {
            group.negatives.push(i);
        }
    }
    groups.retain(|g| !g.is_empty());
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(user_type: usize, label: u8) -> TrainingExample {
        TrainingExample {
            user_type,
            features: [0.0; 5],
            label,
        }
    }

    #[test]
    fn single_type_single_set() {
        let batch: Vec<_> = (0..6).map(|i| ex(2, (i % 2) as u8)).collect();
        let sets = build_pseudo_sets(&batch);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].user_type, 2);
    }

    #[test]
    fn partition_by_type_and_label() {
        let batch = [ex(0, 1), ex(0, 0), ex(3, 1), ex(3, 0), ex(3, 0)];
        let sets = build_pseudo_sets(&batch);
        assert_eq!(
            sets,
            vec![
                PseudoCandidateSet { user_type: 0, positives: vec![0], negatives: vec![1] },
                PseudoCandidateSet { user_type: 3, positives: vec![2], negatives: vec![3, 4] },
            ]
        );
    }

    #[test]
    fn negatives_only_are_pair_empty() {
        let batch = [ex(1, 0), ex(4, 0), ex(1, 0)];
        let sets = build_pseudo_sets(&batch);
        assert_eq!(sets.len(), 2);
        assert!(sets.iter().all(|s| !s.has_pairs()));
    }
}
