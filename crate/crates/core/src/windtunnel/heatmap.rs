//! Per-column collision tallies and their exports.

use crate::error::{Error, Result};
use crate::voxel::pgm::{self, PgmFormat, PgmImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    width: usize,
    length: usize,
    counts: Vec<u64>,
}

impl Heatmap {
    pub fn new(width: usize, length: usize) -> Self {
        Self {
            width,
            length,
            counts: vec![0; width * length],
        }
    }

    pub fn from_counts(width: usize, length: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != width * length {
            return Err(Error::mismatch(width * length, counts.len()));
        }
        Ok(Self { width, length, counts })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, x: usize, y: usize) -> u64 {
        self.counts[y * self.width + x]
    }

    pub fn increment(&mut self, x: usize, y: usize) {
        self.counts[y * self.width + x] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Raw tallies, one line per `y` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.counts.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut counts = Vec::new();
        let mut width = None;
        let mut length = 0;
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let line = raw.trim_end_matches(['\n', '\r']);
            if !line.is_empty() {
                let row: Vec<u64> = line
                    .split(',')
                    .map(|c| c.trim().parse::<u64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(offset, "invalid tally"))?;
                if *width.get_or_insert(row.len()) != row.len() {
                    return Err(Error::parse(offset, "ragged heatmap row"));
                }
                counts.extend(row);
                length += 1;
            }
            offset += raw.len();
        }
        let width = width.ok_or_else(|| Error::parse(0, "empty heatmap"))?;
        Self::from_counts(width, length, counts)
    }

    /// Binary PGM, min-max normalised to 0..=255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let min = self.counts.iter().copied().min().unwrap_or(0);
        let max = self.counts.iter().copied().max().unwrap_or(0);
        normalised_pgm(self, min, max)
    }
}

/// Maps tallies linearly from `[min, max]` onto `0..=255`. A degenerate range
/// yields an all-zero image.
pub(crate) fn normalised_pgm(map: &Heatmap, min: u64, max: u64) -> Vec<u8> {
    let span = max.saturating_sub(min);
    let pixels = map
        .counts
        .iter()
        .map(|&c| {
            if span == 0 {
                0
            } else {
                ((c.saturating_sub(min)) as f64 * 255.0 / span as f64).round() as u16
            }
        })
        .collect();
    pgm::encode(
        &PgmImage {
            width: map.width,
            height: map.length,
            maxval: 255,
            pixels,
        },
        PgmFormat::Binary,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_normalises_to_full_range() {
        let map = Heatmap::from_counts(3, 1, vec![2, 4, 6]).unwrap();
        let img = pgm::decode(&map.to_pgm()).unwrap();
        assert_eq!(img.pixels, vec![0, 128, 255]);
    }

    #[test]
    fn flat_heatmap_is_black() {
        let map = Heatmap::from_counts(2, 2, vec![5; 4]).unwrap();
        assert_eq!(pgm::decode(&map.to_pgm()).unwrap().pixels, vec![0; 4]);
    }

    #[test]
    fn csv_round_trip() {
        let map = Heatmap::from_counts(2, 2, vec![0, 1, 20, 3]).unwrap();
        assert_eq!(map.to_csv(), "0,1\n20,3\n");
        assert_eq!(Heatmap::from_csv(&map.to_csv()).unwrap(), map);
        assert!(Heatmap::from_csv("1,2\n3\n").is_err());
    }
}
