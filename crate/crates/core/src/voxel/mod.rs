//! Heightmaps and the solid column voxel model built from them.
//!
//! A [`VoxelGrid`] stores one integer height per `(x, y)` column; voxel
//! `(x, y, z)` is occupied iff `z < height(x, y)`. Storing columns rather than
//! a dense occupancy volume makes internal voids unrepresentable.
//!
//! Grids are indexed row-major: `index = y * width + x`, with `x` running
//! along the flow direction of the wind tunnel.

pub mod pgm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use pgm::PgmFormat;

/// Normalised elevations in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    width: usize,
    length: usize,
    values: Vec<f64>,
}

impl HeightMap {
    pub fn new(width: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || length == 0 {
            return Err(Error::mismatch("width and length >= 1", format!("{width}x{length}")));
        }
        if values.len() != width * length {
            return Err(Error::mismatch(width * length, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config(
                format!("heightmap[{i}]"),
                format!("value {} outside [0, 1]", values[i]),
            ));
        }
        Ok(Self { width, length, values })
    }

    /// Decodes a P2 or P5 PGM file, mapping each pixel to `pixel / maxval`.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let img = pgm::decode(bytes)?;
        let scale = f64::from(img.maxval);
        let values = img.pixels.iter().map(|&p| f64::from(p) / scale).collect();
        Self::new(img.width, img.height, values)
    }

    /// Encodes as PGM, quantising each value to `round(value * maxval)`.
    pub fn to_pgm(&self, format: PgmFormat, maxval: u16) -> Vec<u8> {
        let scale = f64::from(maxval);
        let image = pgm::PgmImage {
            width: self.width,
            height: self.length,
            maxval,
            pixels: self.values.iter().map(|v| (v * scale).round() as u16).collect(),
        };
        pgm::encode(&image, format)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Analytic stand-in shapes for vehicle bodies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Empty tunnel floor; every value is zero regardless of amplitude.
    Flat,
    /// A block covering the whole footprint at `amplitude`.
    Box,
    /// Rises linearly along +x from 0 to `amplitude`.
    Wedge,
    /// A circular arch across y, extruded along x.
    HalfCylinder,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Shape::Flat),
            "box" => Ok(Shape::Box),
            "wedge" => Ok(Shape::Wedge),
            "half-cylinder" => Ok(Shape::HalfCylinder),
            other => Err(Error::config("shape", format!("unknown shape `{other}`"))),
        }
    }
}

pub fn synth_heightmap(shape: Shape, width: usize, length: usize, amplitude: f64) -> Result<HeightMap> {
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(Error::config("amplitude", format!("{amplitude} outside [0, 1]")));
    }
    let mut values = Vec::with_capacity(width * length);
    for y in 0..length {
        for x in 0..width {
            let v = match shape {
                Shape::Flat => 0.0,
                Shape::Box => amplitude,
                Shape::Wedge => {
                    if width == 1 {
                        amplitude
                    } else {
                        amplitude * x as f64 / (width - 1) as f64
                    }
                }
                Shape::HalfCylinder => {
                    let radius = length as f64 / 2.0;
                    let offset = (y as f64 + 0.5 - radius) / radius;
                    amplitude * (1.0 - offset * offset).max(0.0).sqrt()
                }
            };
            values.push(v);
        }
    }
    HeightMap::new(width, length, values)
}

/// Solid column voxel model.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    width: usize,
    length: usize,
    max_height: u32,
    voxel_size: f64,
    heights: Vec<u32>,
}

impl VoxelGrid {
    pub fn new(width: usize, length: usize, max_height: u32, voxel_size: f64, heights: Vec<u32>) -> Result<Self> {
        if width == 0 || length == 0 {
            return Err(Error::mismatch("width and length >= 1", format!("{width}x{length}")));
        }
        if max_height == 0 {
            return Err(Error::config("h_max", "must be at least 1"));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::config(
                "voxel_size",
                format!("{voxel_size} is not a positive length"),
            ));
        }
        if heights.len() != width * length {
            return Err(Error::mismatch(width * length, heights.len()));
        }
        if let Some(i) = heights.iter().position(|&h| h > max_height) {
            return Err(Error::config(
                format!("column_heights[{i}]"),
                format!("{} exceeds h_max {max_height}", heights[i]),
            ));
        }
        Ok(Self {
            width,
            length,
            max_height,
            voxel_size,
            heights,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn max_height(&self) -> u32 {
        self.max_height
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn heights(&self) -> &[u32] {
        &self.heights
    }

    pub fn height(&self, x: usize, y: usize) -> u32 {
        self.heights[y * self.width + x]
    }

    pub fn is_occupied(&self, x: usize, y: usize, z: usize) -> bool {
        x < self.width && y < self.length && (z as u64) < u64::from(self.height(x, y))
    }

    /// Footprint in metres: `(width, length, h_max)` edges times `voxel_size`.
    pub fn extent(&self) -> [f64; 3] {
        [
            self.width as f64 * self.voxel_size,
            self.length as f64 * self.voxel_size,
            f64::from(self.max_height) * self.voxel_size,
        ]
    }

    /// Writes the CSV form: a `width,length,h_max,voxel_size` header, a value
    /// line, then one line of column heights per `y` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("width,length,h_max,voxel_size\n");
        out.push_str(&format!(
            "{},{},{},{}\n",
            self.width, self.length, self.max_height, self.voxel_size
        ));
        for row in self.heights.chunks(self.width) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut offset = 0;
        let mut lines = text.split_inclusive('\n').map(|raw| {
            let at = offset;
            offset += raw.len();
            (at, raw.trim_end_matches(['\n', '\r']))
        });
        let mut next_line = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(text.len(), format!("missing {what}")))
        };

        let (at, header) = next_line("header")?;
        if header.trim() != "width,length,h_max,voxel_size" {
            return Err(Error::parse(at, "expected header `width,length,h_max,voxel_size`"));
        }
        let (at, dims) = next_line("dimension line")?;
        let fields: Vec<&str> = dims.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(at, "dimension line needs 4 fields"));
        }
        let bad = |what: &str| Error::parse(at, format!("invalid {what}"));
        let width: usize = fields[0].parse().map_err(|_| bad("width"))?;
        let length: usize = fields[1].parse().map_err(|_| bad("length"))?;
        let max_height: u32 = fields[2].parse().map_err(|_| bad("h_max"))?;
        let voxel_size: f64 = fields[3].parse().map_err(|_| bad("voxel_size"))?;

        let mut heights = Vec::with_capacity(width * length);
        for row in 0..length {
            let (at, line) = next_line(&format!("height row {row}"))?;
            let mut col_at = at;
            for cell in line.split(',') {
                let h: u32 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(col_at, format!("invalid column height `{cell}`")))?;
                heights.push(h);
                col_at += cell.len() + 1;
            }
            if heights.len() != (row + 1) * width {
                return Err(Error::parse(at, format!("row {row} does not have {width} columns")));
            }
        }
        Self::new(width, length, max_height, voxel_size, heights)
    }
}

/// Per-column immutability flags; `true` freezes the column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMask {
    width: usize,
    length: usize,
    frozen: Vec<bool>,
}

impl VoxelMask {
    /// A mask that freezes nothing.
    pub fn open(width: usize, length: usize) -> Self {
        Self {
            width,
            length,
            frozen: vec![false; width * length],
        }
    }

    pub fn new(width: usize, length: usize, frozen: Vec<bool>) -> Result<Self> {
        if frozen.len() != width * length {
            return Err(Error::mismatch(width * length, frozen.len()));
        }
        Ok(Self { width, length, frozen })
    }

    /// Freezes every column in the half-open rectangle `[x0, x1) x [y0, y1)`,
    /// clipped to the mask bounds.
    pub fn freeze_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0..y1.min(self.length) {
            for x in x0..x1.min(self.width) {
                self.frozen[y * self.width + x] = true;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn is_frozen(&self, x: usize, y: usize) -> bool {
        self.frozen[y * self.width + x]
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }
}

/// Quantises a heightmap to columns of `round(value * h_max)` voxels.
pub fn voxelise(hm: &HeightMap, max_height: u32, voxel_size: f64) -> Result<VoxelGrid> {
    if max_height == 0 {
        return Err(Error::config("h_max", "must be at least 1"));
    }
    let scale = f64::from(max_height);
    let heights = hm.values.iter().map(|v| (v * scale).round() as u32).collect();
    VoxelGrid::new(hm.width, hm.length, max_height, voxel_size, heights)
}

/// Adds `deltas` to every unfrozen column, rounding half away from zero and
/// clamping to `[0, h_max]`.
pub fn apply_height_delta(grid: &VoxelGrid, deltas: &[f64], mask: &VoxelMask) -> Result<VoxelGrid> {
    if deltas.len() != grid.heights.len() {
        return Err(Error::mismatch(
            format!("{} deltas", grid.heights.len()),
            format!("{} deltas", deltas.len()),
        ));
    }
    if mask.width != grid.width || mask.length != grid.length {
        return Err(Error::mismatch(
            format!("{}x{} mask", grid.width, grid.length),
            format!("{}x{} mask", mask.width, mask.length),
        ));
    }
    let ceiling = f64::from(grid.max_height);
    let heights = grid
        .heights
        .iter()
        .zip(deltas)
        .zip(&mask.frozen)
        .map(|((&h, &d), &frozen)| {
            if frozen {
                h
            } else {
                (f64::from(h) + d).round().clamp(0.0, ceiling) as u32
            }
        })
        .collect();
    Ok(VoxelGrid {
        heights,
        ..grid.clone()
    })
}

/// Total of all column heights, in voxels.
pub fn heightmap_sum(grid: &VoxelGrid) -> u64 {
    grid.heights.iter().map(|&h| u64::from(h)).sum()
}
