//! Cube and label-map file formats, labeled-sample selection, and the PGM
//! writers used for cluster maps and affinity heatmaps.
//!
//! On-disk layout for a cube is a plain-text sidecar header (`rows = `,
//! `cols = `, `bands = ` lines) next to a raw little-endian 32-bit float
//! binary with the same stem and a `.f32` extension, band-interleaved by
//! pixel. Label maps are either raw little-endian 32-bit integers (shape
//! supplied by the caller) or portable graymaps (P5/P2).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::clustering::ClusterAssignment;
use crate::error::{Error, Result};
use crate::subspace::AffinityMatrix;

/// A rows x cols x bands hyperspectral raster, values widened to f64.
///
/// Storage is pixel-major, band-fastest: `data[(r * cols + c) * bands + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub data: Vec<f64>,
}

impl HsiCube {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::InvalidArgument(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{bands}"
            )));
        }
        if data.len() != rows * cols * bands {
            return Err(Error::Shape(format!(
                "cube data length {} does not match {rows}x{cols}x{bands} = {}",
                data.len(),
                rows * cols * bands
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cube data at flat index {i}")));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
        })
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize, band: usize) -> f64 {
        self.data[(row * self.cols + col) * self.bands + band]
    }

    /// Contiguous spectrum of one pixel.
    #[inline]
    pub fn spectrum(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cols + col) * self.bands;
        &self.data[start..start + self.bands]
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Extract the sub-cube with rows in `[r0, r1)` and cols in `[c0, c1)`.
    pub fn crop(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<HsiCube> {
        if r0 >= r1 || c0 >= c1 || r1 > self.rows || c1 > self.cols {
            return Err(Error::InvalidArgument(format!(
                "crop [{r0},{r1})x[{c0},{c1}) out of bounds for {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity((r1 - r0) * (c1 - c0) * self.bands);
        for r in r0..r1 {
            for c in c0..c1 {
                data.extend_from_slice(self.spectrum(r, c));
            }
        }
        HsiCube::new(r1 - r0, c1 - c0, self.bands, data)
    }
}

/// Per-pixel class labels; 0 is background, 1..=K are classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::Shape(format!(
                "label map length {} does not match {rows}x{cols}",
                labels.len()
            )));
        }
        Ok(Self { rows, cols, labels })
    }

    pub fn crop(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<LabelMap> {
        if r0 >= r1 || c0 >= c1 || r1 > self.rows || c1 > self.cols {
            return Err(Error::InvalidArgument(format!(
                "crop [{r0},{r1})x[{c0},{c1}) out of bounds for {}x{}",
                self.rows, self.cols
            )));
        }
        let mut labels = Vec::with_capacity((r1 - r0) * (c1 - c0));
        for r in r0..r1 {
            labels.extend_from_slice(&self.labels[r * self.cols + c0..r * self.cols + c1]);
        }
        LabelMap::new(r1 - r0, c1 - c0, labels)
    }
}

/// The labeled pixels of a map, with classes re-coded to a dense 0..K-1
/// range preserving ascending original label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndex {
    /// Flat pixel indices of labeled pixels, strictly increasing.
    pub pixel_ids: Vec<usize>,
    /// Re-coded class per sample, parallel to `pixel_ids`.
    pub truth: Vec<usize>,
    /// Number of distinct classes K.
    pub n_classes: usize,
}

impl SampleIndex {
    pub fn len(&self) -> usize {
        self.pixel_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_ids.is_empty()
    }
}

/// Collect all nonzero pixels of `map` in row-major order.
pub fn select_samples(map: &LabelMap) -> Result<SampleIndex> {
    let mut originals: Vec<u32> = map.labels.iter().copied().filter(|&l| l != 0).collect();
    if originals.is_empty() {
        return Err(Error::InvalidArgument(
            "label map has no labeled (nonzero) pixels".into(),
        ));
    }
    originals.sort_unstable();
    originals.dedup();

    let recode = |label: u32| originals.binary_search(&label).expect("label present");

    let mut pixel_ids = Vec::new();
    let mut truth = Vec::new();
    for (i, &label) in map.labels.iter().enumerate() {
        if label != 0 {
            pixel_ids.push(i);
            truth.push(recode(label));
        }
    }
    Ok(SampleIndex {
        pixel_ids,
        truth,
        n_classes: originals.len(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Path of the raw binary companion of a cube header.
fn binary_path(header: &Path) -> PathBuf {
    header.with_extension("f32")
}

/// Load a cube from its sidecar header; the binary lives next to it with a
/// `.f32` extension.
pub fn load_cube(header_path: &Path) -> Result<HsiCube> {
    let text = fs::read_to_string(header_path).map_err(io_err(header_path))?;
    let mut rows = None;
    let mut cols = None;
    let mut bands = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: header_path.to_path_buf(),
                msg: format!("expected `key = value`, got {line:?}"),
            });
        };
        let value: usize = value.trim().parse().map_err(|_| Error::Parse {
            path: header_path.to_path_buf(),
            msg: format!("invalid integer in line {line:?}"),
        })?;
        match key.trim() {
            "rows" => rows = Some(value),
            "cols" => cols = Some(value),
            "bands" => bands = Some(value),
            other => {
                return Err(Error::Parse {
                    path: header_path.to_path_buf(),
                    msg: format!("unknown header key {other:?}"),
                })
            }
        }
    }
    let (rows, cols, bands) = match (rows, cols, bands) {
        (Some(r), Some(c), Some(b)) => (r, c, b),
        _ => {
            return Err(Error::Parse {
                path: header_path.to_path_buf(),
                msg: "header must declare rows, cols and bands".into(),
            })
        }
    };
    if rows == 0 || cols == 0 || bands == 0 {
        return Err(Error::Parse {
            path: header_path.to_path_buf(),
            msg: format!("declared dimensions must be positive, got {rows}x{cols}x{bands}"),
        });
    }

    let bin = binary_path(header_path);
    let bytes = fs::read(&bin).map_err(io_err(&bin))?;
    let expected = rows * cols * bands * 4;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{}: binary holds {} bytes, header declares {rows}x{cols}x{bands} ({expected} bytes)",
            bin.display(),
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(rows * cols * bands);
    for chunk in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} at value index {}",
                bin.display(),
                data.len()
            )));
        }
        data.push(f64::from(v));
    }
    HsiCube::new(rows, cols, bands, data)
}

/// Write a cube as header + `.f32` binary. Inverse of [`load_cube`] for
/// f32-representable data.
pub fn write_cube(cube: &HsiCube, header_path: &Path) -> Result<()> {
    let header = format!(
        "rows = {}\ncols = {}\nbands = {}\n",
        cube.rows, cube.cols, cube.bands
    );
    fs::write(header_path, header).map_err(io_err(header_path))?;
    let bin = binary_path(header_path);
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for &v in &cube.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(io_err(&bin))
}

/// Load a label map from raw i32-LE binary or a PGM (P5/P2) file.
///
/// PGM files carry their own dimensions, which must match `rows`/`cols`.
pub fn load_labels(path: &Path, rows: usize, cols: usize) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        let (w, h, values) = parse_pgm(&bytes, path)?;
        if h != rows || w != cols {
            return Err(Error::Shape(format!(
                "{}: PGM is {h}x{w}, expected {rows}x{cols}",
                path.display()
            )));
        }
        return LabelMap::new(rows, cols, values);
    }
    if bytes.len() != rows * cols * 4 {
        return Err(Error::Shape(format!(
            "{}: raw label file holds {} bytes, expected {rows}x{cols} i32 ({} bytes)",
            path.display(),
            bytes.len(),
            rows * cols * 4
        )));
    }
    let mut labels = Vec::with_capacity(rows * cols);
    for chunk in bytes.chunks_exact(4) {
        let v = i32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if v < 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: format!("negative label {v} at index {}", labels.len()),
            });
        }
        labels.push(v as u32);
    }
    LabelMap::new(rows, cols, labels)
}

/// True when the file starts with a PGM magic number.
pub fn looks_like_pgm(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 2];
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    use std::io::Read as _;
    let read = file.read(&mut magic).map_err(io_err(path))?;
    Ok(read == 2 && (magic == *b"P5" || magic == *b"P2"))
}

/// Load a PGM label file using its own declared dimensions.
pub fn load_labels_pgm(path: &Path) -> Result<LabelMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (w, h, values) = parse_pgm(&bytes, path)?;
    LabelMap::new(h, w, values)
}

/// Write a label map in the raw i32-LE binary format.
pub fn write_labels_raw(map: &LabelMap, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(map.labels.len() * 4);
    for &l in &map.labels {
        bytes.extend_from_slice(&(l as i32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// Render a clustering as a P5 graymap: background stays 0 and cluster `c`
/// maps to gray level `255 * (c + 1) / (K + 1)`, rounded down.
pub fn write_label_image(
    assignment: &ClusterAssignment,
    index: &SampleIndex,
    rows: usize,
    cols: usize,
    path: &Path,
) -> Result<()> {
    if assignment.labels.len() != index.len() {
        return Err(Error::Shape(format!(
            "assignment covers {} samples, index has {}",
            assignment.labels.len(),
            index.len()
        )));
    }
    let mut gray = vec![0u8; rows * cols];
    for (&pixel, &cluster) in index.pixel_ids.iter().zip(&assignment.labels) {
        if pixel >= gray.len() {
            return Err(Error::Shape(format!(
                "pixel id {pixel} out of range for {rows}x{cols} image"
            )));
        }
        gray[pixel] = (255 * (cluster + 1) / (assignment.k + 1)) as u8;
    }
    write_pgm_p5(path, cols, rows, &gray)
}

/// Render an affinity matrix as an n x n P5 graymap with samples permuted by
/// `order`; values are scaled by the matrix maximum (all-zero renders black).
pub fn write_affinity_heatmap(affinity: &AffinityMatrix, order: &[usize], path: &Path) -> Result<()> {
    let n = affinity.n();
    if order.len() != n {
        return Err(Error::Shape(format!(
            "permutation length {} does not match affinity size {n}",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::InvalidArgument(
                "order is not a permutation of 0..n".into(),
            ));
        }
        seen[i] = true;
    }
    let max = affinity.matrix.max();
    let mut gray = vec![0u8; n * n];
    if max > 0.0 {
        for i in 0..n {
            for j in 0..n {
                let v = affinity.matrix[(order[i], order[j])];
                gray[i * n + j] = (255.0 * v / max).floor().min(255.0) as u8;
            }
        }
    }
    write_pgm_p5(path, n, n, &gray)
}

/// Write `oa = `, `nmi = `, `kappa = ` report lines (4 decimal places).
pub fn write_metrics_report(oa: f64, nmi: f64, kappa: f64, path: &Path) -> Result<()> {
    fs::write(path, crate::metrics::format_report(oa, nmi, kappa)).map_err(io_err(path))
}

fn write_pgm_p5(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    debug_assert_eq!(gray.len(), width * height);
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    write!(file, "P5\n{width} {height}\n255\n").map_err(io_err(path))?;
    file.write_all(gray).map_err(io_err(path))
}

/// Parse P5 (binary, 8- or 16-bit) or P2 (ascii) graymaps.
fn parse_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let parse_err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let binary = bytes.starts_with(b"P5");

    // Header tokens (magic, width, height, maxval) with '#' comments.
    let mut pos = 0usize;
    let mut tokens: Vec<(usize, usize)> = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos > start {
            tokens.push((start, pos));
        }
    }
    if tokens.len() < 4 {
        return Err(parse_err("truncated PGM header".into()));
    }
    let token = |i: usize| std::str::from_utf8(&bytes[tokens[i].0..tokens[i].1]).unwrap_or("");
    let width: usize = token(1)
        .parse()
        .map_err(|_| parse_err(format!("bad PGM width {:?}", token(1))))?;
    let height: usize = token(2)
        .parse()
        .map_err(|_| parse_err(format!("bad PGM height {:?}", token(2))))?;
    let maxval: u32 = token(3)
        .parse()
        .map_err(|_| parse_err(format!("bad PGM maxval {:?}", token(3))))?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(format!("unsupported PGM maxval {maxval}")));
    }

    let n = width * height;
    let mut values = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from raster data.
        let data = &bytes[tokens[3].1 + 1..];
        if maxval < 256 {
            if data.len() != n {
                return Err(parse_err(format!(
                    "P5 raster holds {} bytes, expected {n}",
                    data.len()
                )));
            }
            values.extend(data.iter().map(|&b| u32::from(b)));
        } else {
            if data.len() != 2 * n {
                return Err(parse_err(format!(
                    "P5 raster holds {} bytes, expected {}",
                    data.len(),
                    2 * n
                )));
            }
            for chunk in data.chunks_exact(2) {
                values.push(u32::from(u16::from_be_bytes([chunk[0], chunk[1]])));
            }
        }
    } else {
        let text = std::str::from_utf8(&bytes[tokens[3].1..])
            .map_err(|_| parse_err("P2 raster is not ascii".into()))?;
        for word in text.split_whitespace() {
            let v: u32 = word
                .parse()
                .map_err(|_| parse_err(format!("bad P2 sample {word:?}")))?;
            values.push(v);
        }
        if values.len() != n {
            return Err(parse_err(format!(
                "P2 raster holds {} samples, expected {n}",
                values.len()
            )));
        }
    }
    if let Some(v) = values.iter().find(|&&v| v > maxval) {
        return Err(parse_err(format!("sample {v} exceeds maxval {maxval}")));
    }
    Ok((width, height, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn cube_round_trip_is_identity() {
        let dir = tmpdir();
        let header = dir.path().join("cube.hdr");
        let cube = HsiCube::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_cube(&cube, &header).unwrap();
        let back = load_cube(&header).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn cube_size_mismatch_is_an_error() {
        let dir = tmpdir();
        let header = dir.path().join("cube.hdr");
        fs::write(&header, "rows = 2\ncols = 2\nbands = 1\n").unwrap();
        // 3 floats where 4 are declared.
        fs::write(dir.path().join("cube.f32"), [0u8; 12]).unwrap();
        let err = load_cube(&header).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn cube_nonfinite_is_an_error() {
        let dir = tmpdir();
        let header = dir.path().join("cube.hdr");
        fs::write(&header, "rows = 1\ncols = 1\nbands = 1\n").unwrap();
        fs::write(dir.path().join("cube.f32"), f32::NAN.to_le_bytes()).unwrap();
        let err = load_cube(&header).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)), "{err}");
    }

    // Round-trip oracle over random cubes: bytes written by a fresh
    // write_cube(load_cube(f)) must equal the original file.
    #[test]
    fn cube_file_round_trip_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dir = tmpdir();
        let first = dir.path().join("a.hdr");
        let data: Vec<f64> = (0..5 * 7 * 3)
            .map(|_| f64::from(rng.random::<f32>() * 10.0 - 5.0))
            .collect();
        let cube = HsiCube::new(5, 7, 3, data).unwrap();
        write_cube(&cube, &first).unwrap();

        let second = dir.path().join("b.hdr");
        write_cube(&load_cube(&first).unwrap(), &second).unwrap();
        assert_eq!(
            fs::read(dir.path().join("a.f32")).unwrap(),
            fs::read(dir.path().join("b.f32")).unwrap()
        );
        assert_eq!(fs::read(first).unwrap(), fs::read(second).unwrap());
    }

    #[test]
    fn labels_from_ascii_pgm() {
        let dir = tmpdir();
        let path = dir.path().join("labels.pgm");
        fs::write(&path, "P2\n2 2\n255\n0 1\n1 2\n").unwrap();
        let map = load_labels(&path, 2, 2).unwrap();
        assert_eq!(map.labels, vec![0, 1, 1, 2]);
    }

    #[test]
    fn labels_wrong_length_is_an_error() {
        let dir = tmpdir();
        let path = dir.path().join("labels.i32");
        fs::write(&path, [0u8; 10]).unwrap();
        assert!(matches!(load_labels(&path, 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn labels_negative_is_an_error() {
        let dir = tmpdir();
        let path = dir.path().join("labels.i32");
        let mut bytes = Vec::new();
        for v in [0i32, -3, 1, 2] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_labels(&path, 2, 2), Err(Error::Parse { .. })));
    }

    // Round-trip oracle on random maps.
    #[test]
    fn labels_raw_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dir = tmpdir();
        for case in 0..10 {
            let (rows, cols) = (rng.random_range(1..8), rng.random_range(1..8));
            let labels: Vec<u32> = (0..rows * cols).map(|_| rng.random_range(0..5)).collect();
            let map = LabelMap::new(rows, cols, labels).unwrap();
            let path = dir.path().join(format!("m{case}.i32"));
            write_labels_raw(&map, &path).unwrap();
            assert_eq!(load_labels(&path, rows, cols).unwrap(), map);
        }
    }

    #[test]
    fn select_samples_recodes_in_ascending_label_order() {
        let map = LabelMap::new(2, 2, vec![0, 1, 1, 2]).unwrap();
        let index = select_samples(&map).unwrap();
        assert_eq!(index.pixel_ids, vec![1, 2, 3]);
        assert_eq!(index.truth, vec![0, 0, 1]);
        assert_eq!(index.n_classes, 2);
    }

    #[test]
    fn select_samples_all_nonzero_takes_every_pixel() {
        let map = LabelMap::new(2, 2, vec![5, 9, 5, 9]).unwrap();
        let index = select_samples(&map).unwrap();
        assert_eq!(index.pixel_ids, vec![0, 1, 2, 3]);
        assert_eq!(index.truth, vec![0, 1, 0, 1]);
    }

    #[test]
    fn select_samples_rejects_all_background() {
        let map = LabelMap::new(1, 3, vec![0, 0, 0]).unwrap();
        assert!(select_samples(&map).is_err());
    }

    #[test]
    fn label_image_gray_levels() {
        let dir = tmpdir();
        let path = dir.path().join("out.pgm");
        let map = LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let index = select_samples(&map).unwrap();
        let assignment = ClusterAssignment {
            labels: vec![0, 0],
            k: 1,
        };
        write_label_image(&assignment, &index, 2, 2, &path).unwrap();
        let back = load_labels(&path, 2, 2).unwrap();
        // K = 1: labeled pixels at gray 255 * 1 / 2 = 127, background 0.
        assert_eq!(back.labels, vec![0, 127, 127, 0]);
    }

    // Round-trip oracle: gray levels written for distinct clusters are
    // distinct, so the partition survives a write/read cycle.
    #[test]
    fn label_image_round_trip_preserves_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = tmpdir();
        let path = dir.path().join("out.pgm");
        let k = 4;
        let labels: Vec<u32> = (0..36).map(|_| rng.random_range(0..=k as u32)).collect();
        let map = LabelMap::new(6, 6, labels).unwrap();
        let index = select_samples(&map).unwrap();
        let assignment = ClusterAssignment {
            labels: (0..index.len()).map(|i| i % k).collect(),
            k,
        };
        write_label_image(&assignment, &index, 6, 6, &path).unwrap();
        let back = load_labels(&path, 6, 6).unwrap();
        for (s, &pixel) in index.pixel_ids.iter().enumerate() {
            let expected = (255 * (assignment.labels[s] + 1) / (k + 1)) as u32;
            assert_eq!(back.labels[pixel], expected);
        }
        // Distinct clusters map to distinct gray levels.
        let levels: std::collections::BTreeSet<u32> =
            (0..k).map(|c| (255 * (c + 1) / (k + 1)) as u32).collect();
        assert_eq!(levels.len(), k);
    }

    #[test]
    fn heatmap_identity_diagonal() {
        let dir = tmpdir();
        let path = dir.path().join("aff.pgm");
        let y = AffinityMatrix::new(nalgebra::DMatrix::identity(3, 3)).unwrap();
        write_affinity_heatmap(&y, &[0, 1, 2], &path).unwrap();
        let img = load_labels(&path, 3, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 255 } else { 0 };
                assert_eq!(img.labels[i * 3 + j], expected);
            }
        }
    }

    #[test]
    fn heatmap_is_scale_invariant() {
        let dir = tmpdir();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = nalgebra::DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>());
        let sym = (&raw + raw.transpose()).scale(0.5);
        let y1 = AffinityMatrix::new(sym.clone()).unwrap();
        let y2 = AffinityMatrix::new(sym.scale(3.75)).unwrap();
        let p1 = dir.path().join("a.pgm");
        let p2 = dir.path().join("b.pgm");
        let order: Vec<usize> = (0..6).collect();
        write_affinity_heatmap(&y1, &order, &p1).unwrap();
        write_affinity_heatmap(&y2, &order, &p2).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    // Constructed block matrix: sorting by class shows blocks, and at least
    // 90% of the non-black pixels fall inside them.
    #[test]
    fn heatmap_block_structure_visible() {
        let dir = tmpdir();
        let path = dir.path().join("aff.pgm");
        let n = 30;
        let block = 10;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..n {
            for j in 0..n {
                if i / block == j / block {
                    m[(i, j)] = 0.5 + 0.5 * rng.random::<f64>();
                }
            }
        }
        let m = (&m + m.transpose()).scale(0.5);
        // Scatter the samples, then order them back by class.
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                p.swap(i, rng.random_range(0..=i));
            }
            p
        };
        let mut scattered = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                scattered[(perm[i], perm[j])] = m[(i, j)];
            }
        }
        let y = AffinityMatrix::new(scattered).unwrap();
        write_affinity_heatmap(&y, &perm, &path).unwrap();
        let img = load_labels(&path, n, n).unwrap();
        let mut nonblack = 0usize;
        let mut inside = 0usize;
        for i in 0..n {
            for j in 0..n {
                if img.labels[i * n + j] > 0 {
                    nonblack += 1;
                    if i / block == j / block {
                        inside += 1;
                    }
                }
            }
        }
        assert!(nonblack > 0);
        assert!(inside as f64 >= 0.9 * nonblack as f64);
    }

    #[test]
    fn heatmap_rejects_bad_permutation() {
        let dir = tmpdir();
        let y = AffinityMatrix::new(nalgebra::DMatrix::identity(3, 3)).unwrap();
        assert!(write_affinity_heatmap(&y, &[0, 1], dir.path().join("x.pgm").as_path()).is_err());
        assert!(write_affinity_heatmap(&y, &[0, 1, 1], dir.path().join("y.pgm").as_path()).is_err());
    }

    #[test]
    fn crop_bounds_checked() {
        let cube = HsiCube::new(3, 3, 2, vec![0.0; 18]).unwrap();
        assert!(cube.crop(0, 4, 0, 2).is_err());
        assert!(cube.crop(2, 2, 0, 2).is_err());
        let sub = cube.crop(1, 3, 0, 2).unwrap();
        assert_eq!((sub.rows, sub.cols, sub.bands), (2, 2, 2));
    }
}
