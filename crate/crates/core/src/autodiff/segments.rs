use crate::error::{Error, Result};

/// Grouping of edge rows by destination node (CSR-style).
///
/// `segment_of[e]` is the segment that row `e` reduces into; `members`
/// lists each segment's rows in increasing row order, which fixes
/// tie-breaking for max reductions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    segment_of: Vec<usize>,
    offsets: Vec<usize>,
    members: Vec<usize>,
}

impl Segments {
    pub fn new(segment_of: Vec<usize>, count: usize) -> Result<Self> {
        if let Some(&bad) = segment_of.iter().find(|&&s| s >= count) {
            return Err(Error::Parameter(format!(
                "segment index {bad} out of range for {count} segments"
            )));
        }
        let mut sizes = vec![0usize; count];
        for &s in &segment_of {
            sizes[s] += 1;
        }
        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let mut cursor = offsets[..count].to_vec();
        let mut members = vec![0; segment_of.len()];
        for (e, &s) in segment_of.iter().enumerate() {
            members[cursor[s]] = e;
            cursor[s] += 1;
        }
        Ok(Segments { segment_of, offsets, members })
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.segment_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment_of.is_empty()
    }

    pub fn segment_of(&self) -> &[usize] {
        &self.segment_of
    }

    pub fn members(&self, segment: usize) -> &[usize] {
        &self.members[self.offsets[segment]..self.offsets[segment + 1]]
    }

    pub fn size(&self, segment: usize) -> usize {
        self.offsets[segment + 1] - self.offsets[segment]
    }

    pub fn first_empty(&self) -> Option<usize> {
        (0..self.count()).find(|&s| self.size(s) == 0)
    }
}
