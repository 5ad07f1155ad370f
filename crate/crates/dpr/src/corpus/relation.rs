//! Relation matrix assembly from curated interaction labels.

use crate::error::{Error, Result};

use super::types::{Direction, DrugId, InteractionClass, LabeledPair, RelationMatrix};

/// Build the M×M directed relation matrix from labeled pairs.
///
/// `Bidirection` populates both directed entries; `AToB`/`BToA` populate one.
/// Unlisted pairs stay `Unknown`. Two labels that assign different classes to
/// the same directed entry are rejected with a conflict report naming every
/// clash.
pub fn build_relation_matrix(pairs: &[LabeledPair], n_drugs: usize) -> Result<RelationMatrix> {
    fn apply(
        matrix: &mut RelationMatrix,
        conflicts: &mut Vec<String>,
        n_drugs: usize,
        from: DrugId,
        to: DrugId,
        class: InteractionClass,
    ) {
        if from == to {
            conflicts.push(format!("self-pair ({from},{to}) cannot be labeled"));
            return;
        }
        if from >= n_drugs || to >= n_drugs {
            conflicts.push(format!("drug id out of range in pair ({from},{to})"));
            return;
        }
        let current = matrix.get(from, to);
        if current != InteractionClass::Unknown && current != class {
            conflicts.push(format!(
                "directed pair ({from},{to}) labeled both {:?} and {:?}",
                current, class
            ));
            return;
        }
        matrix.set(from, to, class);
    }

    let mut matrix = RelationMatrix::new(n_drugs);
    let mut conflicts: Vec<String> = Vec::new();

    for pair in pairs {
        if pair.class == InteractionClass::Unknown {
            conflicts.push(format!(
                "pair ({},{}) explicitly labeled Unknown",
                pair.drug_a, pair.drug_b
            ));
            continue;
        }
        let (a, b, c) = (pair.drug_a, pair.drug_b, pair.class);
        match pair.direction {
            Direction::AToB => apply(&mut matrix, &mut conflicts, n_drugs, a, b, c),
            Direction::BToA => apply(&mut matrix, &mut conflicts, n_drugs, b, a, c),
            Direction::Bidirection => {
                apply(&mut matrix, &mut conflicts, n_drugs, a, b, c);
                apply(&mut matrix, &mut conflicts, n_drugs, b, a, c);
            }
        }
    }

    if conflicts.is_empty() {
        Ok(matrix)
    } else {
        Err(Error::LabelConflict(conflicts.join("; ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: DrugId, b: DrugId, class: InteractionClass, direction: Direction) -> LabeledPair {
        LabeledPair {
            drug_a: a,
            drug_b: b,
            class,
            direction,
        }
    }

    #[test]
    fn a_to_b_sets_only_forward_entry() {
        // Synergism from the first drug onto the second, single direction.
        let m = build_relation_matrix(
            &[pair(0, 1, InteractionClass::Synergism, Direction::AToB)],
            3,
        )
        .unwrap();
        assert_eq!(m.get(0, 1), InteractionClass::Synergism);
        assert_eq!(m.get(1, 0), InteractionClass::Unknown);
    }

    #[test]
    fn b_to_a_sets_only_reverse_entry() {
        let m = build_relation_matrix(
            &[pair(0, 1, InteractionClass::Antagonism, Direction::BToA)],
            3,
        )
        .unwrap();
        assert_eq!(m.get(1, 0), InteractionClass::Antagonism);
        assert_eq!(m.get(0, 1), InteractionClass::Unknown);
    }

    #[test]
    fn bidirection_sets_both_entries() {
        let m = build_relation_matrix(
            &[pair(0, 2, InteractionClass::NoInteraction, Direction::Bidirection)],
            3,
        )
        .unwrap();
        assert_eq!(m.get(0, 2), InteractionClass::NoInteraction);
        assert_eq!(m.get(2, 0), InteractionClass::NoInteraction);
    }

    #[test]
    fn empty_label_list_yields_all_unknown() {
        let m = build_relation_matrix(&[], 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), InteractionClass::Unknown);
            }
        }
    }

    #[test]
    fn conflicting_directed_labels_are_rejected_with_report() {
        let err = build_relation_matrix(
            &[
                pair(0, 1, InteractionClass::Synergism, Direction::AToB),
                pair(0, 1, InteractionClass::Antagonism, Direction::AToB),
            ],
            3,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(0,1)"), "{msg}");
        assert!(msg.contains("Synergism") && msg.contains("Antagonism"), "{msg}");
    }

    #[test]
    fn duplicate_identical_labels_are_fine() {
        let m = build_relation_matrix(
            &[
                pair(0, 1, InteractionClass::Synergism, Direction::AToB),
                pair(0, 1, InteractionClass::Synergism, Direction::AToB),
            ],
            3,
        )
        .unwrap();
        assert_eq!(m.get(0, 1), InteractionClass::Synergism);
    }

    #[test]
    fn opposite_directions_can_carry_different_classes() {
        let m = build_relation_matrix(
            &[
                pair(0, 1, InteractionClass::Synergism, Direction::AToB),
                pair(0, 1, InteractionClass::Antagonism, Direction::BToA),
            ],
            3,
        )
        .unwrap();
        assert_eq!(m.get(0, 1), InteractionClass::Synergism);
        assert_eq!(m.get(1, 0), InteractionClass::Antagonism);
    }
}
