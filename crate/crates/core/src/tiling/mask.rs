use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary tissue raster (row-major, `true` = tissue).
#[derive(Debug, Clone, PartialEq)]
pub struct TissueMask {
    width: u32,
    height: u32,
    resolution_um: f64,
    bitmap: Vec<bool>,
}

impl TissueMask {
    pub fn new(width: u32, height: u32, resolution_um: f64, bitmap: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("mask must be at least 1x1".into()));
        }
        if bitmap.len() != width as usize * height as usize {
            return Err(Error::Validation(format!(
                "bitmap has {} pixels, expected {}x{}",
                bitmap.len(),
                width,
                height
            )));
        }
        if !(resolution_um.is_finite() && resolution_um > 0.0) {
            return Err(Error::Validation(format!("resolution {resolution_um} µm/px is invalid")));
        }
        Ok(TissueMask {
            width,
            height,
            resolution_um,
            bitmap,
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        resolution_um: f64,
        f: impl Fn(u32, u32) -> bool,
    ) -> Result<Self> {
        let bitmap = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, resolution_um, bitmap)
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn resolution_um(&self) -> f64 {
        self.resolution_um
    }
    pub fn is_tissue(&self, x: u32, y: u32) -> bool {
        self.bitmap[y as usize * self.width as usize + x as usize]
    }

    /// Summed-area table with a zero first row and column.
    fn integral(&self) -> Vec<u64> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut sat = vec![0u64; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            for x in 0..w {
                row += self.bitmap[y * w + x] as u64;
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        sat
    }
}

/// Reads an 8-bit binary PGM (P5; nonzero = tissue) and the resolution from
/// the sidecar file `<mask>.mpp`, a single line holding µm per pixel.
pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<TissueMask> {
    let path = path.as_ref();
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let resolution_um: f64 = text.trim().parse().map_err(|_| {
        Error::Validation(format!("{}: cannot parse µm/pixel from \"{}\"", sidecar.display(), text.trim()))
    })?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format {
            offset: 0,
            message: format!("{} is not a binary (P5) PGM", path.display()),
        });
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Format {
            offset: 0,
            message: format!("{}: {e}", path.display()),
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    TissueMask::new(w, h, resolution_um, img.into_raw().into_iter().map(|v| v != 0).collect())
}

pub fn write_mask_pgm(mask: &TissueMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.bitmap.iter().map(|&t| if t { 255u8 } else { 0 }));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let sidecar = sidecar_path(path);
    std::fs::write(&sidecar, format!("{}\n", mask.resolution_um)).map_err(|e| Error::io(&sidecar, e))
}

pub fn sidecar_path(mask: &Path) -> PathBuf {
    let mut s = mask.as_os_str().to_owned();
    s.push(".mpp");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile_size: u32,
    pub stride: u32,
    /// Lattice dimensions before filtering.
    pub lattice_cols: u32,
    pub lattice_rows: u32,
    pub positions: Vec<(u32, u32)>,
    pub tissue_fraction: Vec<f64>,
}

/// Enumerates the stride lattice of fully contained tiles and keeps those whose
/// tissue fraction is at least `min_tissue_fraction`. Partial edge tiles are
/// never produced.
pub fn enumerate_tiles(
    mask: &TissueMask,
    tile_size: u32,
    stride: u32,
    min_tissue_fraction: f64,
) -> Result<TileGrid> {
    if tile_size == 0 || tile_size > mask.width.min(mask.height) {
        return Err(Error::Precondition(format!(
            "tile size {tile_size} does not fit a {}x{} mask",
            mask.width, mask.height
        )));
    }
    if stride == 0 || stride > tile_size {
        return Err(Error::Precondition(format!(
            "stride {stride} must lie in 1..={tile_size}"
        )));
    }
    let cols = (mask.width - tile_size) / stride + 1;
    let rows = (mask.height - tile_size) / stride + 1;
    let sat = mask.integral();
    let w1 = mask.width as usize + 1;
    let area = tile_size as f64 * tile_size as f64;
    let ts = tile_size as usize;

    let mut positions = Vec::new();
    let mut tissue_fraction = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = ((c * stride) as usize, (r * stride) as usize);
            let count = sat[(y + ts) * w1 + x + ts] + sat[y * w1 + x]
                - sat[y * w1 + x + ts]
                - sat[(y + ts) * w1 + x];
            let fraction = count as f64 / area;
            if fraction >= min_tissue_fraction {
                positions.push((x as u32, y as u32));
                tissue_fraction.push(fraction);
            }
        }
    }
    Ok(TileGrid {
        tile_size,
        stride,
        lattice_cols: cols,
        lattice_rows: rows,
        positions,
        tissue_fraction,
    })
}
