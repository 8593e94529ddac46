use super::Dataset;

/// Sample indices grouped by label: `members(i)` lists every index with label `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    subsets: Vec<Vec<usize>>,
}

impl ClassPartition {
    pub fn from_labels(labels: &[usize], classes: usize) -> Self {
        let mut subsets = vec![Vec::new(); classes];
        for (i, &y) in labels.iter().enumerate() {
            subsets[y].push(i);
        }
        Self { subsets }
    }

    pub fn classes(&self) -> usize {
        self.subsets.len()
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.subsets[class]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.subsets.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.subsets.iter().enumerate().map(|(k, s)| (k, s.as_slice()))
    }
}

pub fn class_partition(dataset: &Dataset) -> ClassPartition {
    ClassPartition::from_labels(dataset.labels(), dataset.classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_example() {
        let p = ClassPartition::from_labels(&[0, 1, 0, 2], 3);
        assert_eq!(p.members(0), &[0, 2]);
        assert_eq!(p.members(1), &[1]);
        assert_eq!(p.members(2), &[3]);
    }

    #[test]
    fn every_index_in_exactly_one_subset() {
        let labels: Vec<usize> = (0..500).map(|i| (i * 7 + i / 3) % 5).collect();
        let p = ClassPartition::from_labels(&labels, 5);
        let mut seen = vec![0u32; labels.len()];
        for (k, members) in p.iter() {
            for &i in members {
                assert_eq!(labels[i], k);
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(p.total(), 500);
    }
}
