use crate::error::{Error, Result};

/// One observed rating `R_ij` of user `i` on item `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Rating { user, item, value }
    }
}

/// Observed entries of an `m x n` rating matrix.
///
/// Triples are kept in insertion order (that order defines SGD visiting
/// order before shuffling); a per-user row view sorted by item index is
/// built alongside for covariance and coupling computations.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRatings {
    num_users: usize,
    num_items: usize,
    triples: Vec<Rating>,
    row_offsets: Vec<usize>,
    row_entries: Vec<(usize, f64)>,
}

impl SparseRatings {
    pub fn new(num_users: usize, num_items: usize, triples: Vec<Rating>) -> Result<Self> {
        for r in &triples {
            if r.user >= num_users || r.item >= num_items {
                return Err(Error::usage(format!(
                    "rating ({}, {}) outside {}x{} matrix",
                    r.user, r.item, num_users, num_items
                )));
            }
            if !r.value.is_finite() {
                return Err(Error::usage(format!(
                    "non-finite rating at ({}, {})",
                    r.user, r.item
                )));
            }
        }

        let mut row_offsets = vec![0usize; num_users + 1];
        for r in &triples {
            row_offsets[r.user + 1] += 1;
        }
        for i in 0..num_users {
            row_offsets[i + 1] += row_offsets[i];
        }
        let mut cursor = row_offsets.clone();
        let mut row_entries = vec![(0usize, 0.0f64); triples.len()];
        for r in &triples {
            row_entries[cursor[r.user]] = (r.item, r.value);
            cursor[r.user] += 1;
        }
        for i in 0..num_users {
            let row = &mut row_entries[row_offsets[i]..row_offsets[i + 1]];
            row.sort_by_key(|&(item, _)| item);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::usage(format!(
                    "duplicate rating for (user {}, item {})",
                    i, w[0].0
                )));
            }
        }

        Ok(SparseRatings {
            num_users,
            num_items,
            triples,
            row_offsets,
            row_entries,
        })
    }

    pub fn empty(num_users: usize, num_items: usize) -> Self {
        SparseRatings {
            num_users,
            num_items,
            triples: Vec::new(),
            row_offsets: vec![0; num_users + 1],
            row_entries: Vec::new(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Number of observed ratings, `|D|`.
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Rating] {
        &self.triples
    }

    /// Items rated by `user`, sorted by item index.
    pub fn user_row(&self, user: usize) -> &[(usize, f64)] {
        &self.row_entries[self.row_offsets[user]..self.row_offsets[user + 1]]
    }

    pub fn mean(&self) -> Option<f64> {
        if self.triples.is_empty() {
            None
        } else {
            Some(self.triples.iter().map(|r| r.value).sum::<f64>() / self.triples.len() as f64)
        }
    }

    pub fn user_counts(&self) -> Vec<usize> {
        (0..self.num_users)
            .map(|i| self.row_offsets[i + 1] - self.row_offsets[i])
            .collect()
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_items];
        for r in &self.triples {
            counts[r.item] += 1;
        }
        counts
    }

    /// Checks that the row view holds exactly the triple list's data.
    pub fn is_consistent(&self) -> bool {
        if self.row_entries.len() != self.triples.len() {
            return false;
        }
        self.triples.iter().all(|r| {
            let row = self.user_row(r.user);
            row.binary_search_by_key(&r.item, |&(item, _)| item)
                .map(|pos| row[pos].1 == r.value)
                .unwrap_or(false)
        })
    }
}
