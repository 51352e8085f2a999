//! Sprite assets: RGBA cutouts of named objects.
//!
//! Sprites come from a directory laid out as `<object_name>/<id>.png`, or
//! from a built-in procedural generator of colored polygons so tests and
//! demos run with zero external assets. A SHA-256 digest over the decoded
//! pixels identifies the exact set a manifest was generated from.

use std::path::Path;

use image::RgbaImage;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One named RGBA cutout. Somewhere in the raster the alpha is nonzero.
#[derive(Debug, Clone)]
pub struct Sprite {
    name: String,
    id: String,
    image: RgbaImage,
}

impl Sprite {
    pub fn new(name: impl Into<String>, id: impl Into<String>, image: RgbaImage) -> Result<Self> {
        let (name, id) = (name.into(), id.into());
        if name.is_empty() {
            return Err(Error::Asset("sprite name must be non-empty".into()));
        }
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Asset(format!("sprite {name}/{id} has a zero dimension")));
        }
        if !image.pixels().any(|p| p.0[3] != 0) {
            return Err(Error::Asset(format!("sprite {name}/{id} is fully transparent")));
        }
        Ok(Sprite { name, id, image })
    }

    /// Skips validation so compositor tests can exercise degenerate rasters
    /// (e.g. the fully transparent pass-through case).
    #[cfg(test)]
    pub(crate) fn new_unchecked(name: &str, id: &str, image: RgbaImage) -> Self {
        Sprite { name: name.to_owned(), id: id.to_owned(), image }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image(&self) -> &RgbaImage {
        &self.image
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

/// An ordered sprite collection with a content digest.
#[derive(Debug, Clone)]
pub struct SpriteSet {
    sprites: Vec<Sprite>,
    digest: String,
}

impl SpriteSet {
    /// Builds a set from sprites in the given order. An empty set is
    /// representable; using it for sampling is what fails.
    pub fn from_sprites(sprites: Vec<Sprite>) -> Self {
        let digest = digest_sprites(&sprites);
        SpriteSet { sprites, digest }
    }

    /// Loads `<root>/<object_name>/<id>.<img>` recursively one level deep.
    /// Entries are sorted by (name, id) so the digest does not depend on
    /// directory enumeration order.
    pub fn load_dir(root: &Path) -> Result<Self> {
        let read_dir = |p: &Path| -> Result<Vec<std::path::PathBuf>> {
            let iter = std::fs::read_dir(p)
                .map_err(|e| Error::Asset(format!("cannot read sprite dir {}: {e}", p.display())))?;
            let mut entries = Vec::new();
            for entry in iter {
                entries.push(entry.map_err(|e| Error::io(p, e))?.path());
            }
            entries.sort();
            Ok(entries)
        };

        let mut sprites = Vec::new();
        for dir in read_dir(root)? {
            if !dir.is_dir() {
                continue;
            }
            let name = dir
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Asset(format!("non-UTF-8 sprite dir name in {}", root.display())))?
                .to_owned();
            for file in read_dir(&dir)? {
                if !file.is_file() {
                    continue;
                }
                let id = file
                    .file_stem()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default()
                    .to_owned();
                let image = image::open(&file)
                    .map_err(|e| Error::Asset(format!("cannot decode {}: {e}", file.display())))?
                    .to_rgba8();
                sprites.push(Sprite::new(name.clone(), id, image)?);
            }
        }
        if sprites.is_empty() {
            return Err(Error::Asset(format!(
                "no sprites found under {} (expected <object_name>/<id>.png)",
                root.display()
            )));
        }
        Ok(Self::from_sprites(sprites))
    }

    /// Deterministic test/demo sprites: filled colored polygons, one per
    /// name, at most [`PROCEDURAL_NAMES`] of them.
    pub fn procedural(count: usize) -> Self {
        assert!(
            count <= PROCEDURAL_NAMES.len(),
            "procedural sprite set supports at most {} objects",
            PROCEDURAL_NAMES.len()
        );
        let sprites = (0..count)
            .map(|i| {
                let image = rasterize_polygon(polygon_vertices(i), PALETTE[i % PALETTE.len()]);
                Sprite::new(PROCEDURAL_NAMES[i], "p0", image).expect("procedural sprite is opaque")
            })
            .collect();
        Self::from_sprites(sprites)
    }

    pub fn len(&self) -> usize {
        self.sprites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sprites.is_empty()
    }

    pub fn get(&self, index: usize) -> &Sprite {
        &self.sprites[index]
    }

    pub fn sprites(&self) -> &[Sprite] {
        &self.sprites
    }

    /// Hex SHA-256 over names, ids, dimensions, and raw pixels.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Distinct object names, in first-appearance order.
    pub fn object_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for s in &self.sprites {
            if !names.contains(&s.name.as_str()) {
                names.push(&s.name);
            }
        }
        names
    }
}

fn digest_sprites(sprites: &[Sprite]) -> String {
    let mut order: Vec<usize> = (0..sprites.len()).collect();
    order.sort_by(|&a, &b| {
        (sprites[a].name(), sprites[a].id()).cmp(&(sprites[b].name(), sprites[b].id()))
    });
    let mut hasher = Sha256::new();
    for i in order {
        let s = &sprites[i];
        hasher.update(s.name().as_bytes());
        hasher.update([0u8]);
        hasher.update(s.id().as_bytes());
        hasher.update([0u8]);
        hasher.update(s.width().to_le_bytes());
        hasher.update(s.height().to_le_bytes());
        hasher.update(s.image().as_raw());
    }
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Single-word names so captions stay one-noun-per-object; order is part of
/// the procedural contract (index i always produces the same sprite).
pub const PROCEDURAL_NAMES: [&str; 20] = [
    "triangle",
    "square",
    "pentagon",
    "hexagon",
    "heptagon",
    "octagon",
    "nonagon",
    "decagon",
    "hendecagon",
    "dodecagon",
    "tridecagon",
    "tetradecagon",
    "pentadecagon",
    "hexadecagon",
    "heptadecagon",
    "octadecagon",
    "enneadecagon",
    "icosagon",
    "star",
    "diamond",
];

const PALETTE: [[u8; 3]; 10] = [
    [220, 40, 40],
    [240, 140, 20],
    [235, 220, 40],
    [40, 180, 70],
    [30, 190, 180],
    [50, 90, 220],
    [140, 60, 200],
    [220, 50, 180],
    [150, 90, 40],
    [120, 120, 130],
];

/// Unit-circle vertices for procedural shape `index`, vertex 0 pointing up.
fn polygon_vertices(index: usize) -> Vec<(f64, f64)> {
    let radius = 46.0;
    let ring = |sides: usize, offset_deg: f64, r: f64| -> Vec<(f64, f64)> {
        (0..sides)
            .map(|i| {
                let a = (-90.0 + offset_deg + 360.0 * i as f64 / sides as f64).to_radians();
                (r * a.cos(), r * a.sin())
            })
            .collect()
    };
    match PROCEDURAL_NAMES[index] {
        // Flat-bottomed square; the vertex-up variant is "diamond".
        "square" => ring(4, 45.0, radius),
        "diamond" => ring(4, 0.0, radius),
        "star" => {
            let outer = ring(5, 0.0, radius);
            let inner = ring(5, 36.0, radius * 0.45);
            outer.into_iter().zip(inner).flat_map(|(o, i)| [o, i]).collect()
        }
        _ => ring(index + 3, 0.0, radius),
    }
}

/// Rasterizes a filled polygon with 4x4 supersampled edge coverage as alpha.
///
/// The canvas is centered on the vertex-ring origin — the area centroid of
/// every regular shape — rather than cropped to the tight bounding box, so
/// that placing the canvas center at a pose puts the visible mass there too.
/// Odd-sided shapes pay for this with an asymmetric transparent margin.
fn rasterize_polygon(vertices: Vec<(f64, f64)>, color: [u8; 3]) -> RgbaImage {
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in &vertices {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let margin = 1.5;
    let half_w = max_x.abs().max(min_x.abs()) + margin;
    let half_h = max_y.abs().max(min_y.abs()) + margin;
    let width = (2.0 * half_w).ceil() as u32;
    let height = (2.0 * half_h).ceil() as u32;
    let shifted: Vec<(f64, f64)> = vertices
        .iter()
        .map(|&(x, y)| (x + width as f64 / 2.0, y + height as f64 / 2.0))
        .collect();

    let mut image = RgbaImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let mut hits = 0u32;
            for sy in 0..4 {
                for sx in 0..4 {
                    let px = x as f64 + (sx as f64 + 0.5) / 4.0;
                    let py = y as f64 + (sy as f64 + 0.5) / 4.0;
                    if point_in_polygon(px, py, &shifted) {
                        hits += 1;
                    }
                }
            }
            let alpha = ((hits * 255 + 8) / 16).min(255) as u8;
            image.put_pixel(x, y, image::Rgba([color[0], color[1], color[2], alpha]));
        }
    }
    image
}

/// Even-odd crossing test.
fn point_in_polygon(px: f64, py: f64, vertices: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = vertices.len();
    for i in 0..n {
        let (x1, y1) = vertices[i];
        let (x2, y2) = vertices[(i + 1) % n];
        if (y1 > py) != (y2 > py) {
            let x_cross = x1 + (py - y1) / (y2 - y1) * (x2 - x1);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}
