//! 2D to 1D patch orders.
//!
//! The saliency-guided order visits salient patches row by row, choosing
//! each row's direction so that it starts at whichever end lies closer to the
//! previously emitted patch, then appends the non-salient patches in raster
//! order. Fixed baselines (raster "Z", boustrophedon "S", anti-diagonal) and
//! the four SS2D directions live here too, as do the gather/scatter pair that
//! applies a path to a `[H, W, C]` tensor.

use std::fmt::Write as _;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Real, SaliencyMap, ScanPath, Tensor};

/// Patch-level salient / non-salient decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height * width {
            return Err(dim_err!("{height}x{width} mask given {} bits", bits.len()));
        }
        Ok(Self { height, width, bits })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        Self::new(
            height,
            width,
            (0..height * width).map(|i| f(i / width, i % width)).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    fn row_cols(&self, row: usize) -> impl DoubleEndedIterator<Item = usize> + '_ {
        (0..self.width).filter(move |&c| self.get(row, c))
    }
}

/// `bit = value >= threshold`.
pub fn binarize(map: &SaliencyMap, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold {threshold} outside (0, 1)")));
    }
    BinaryMask::new(
        map.height(),
        map.width(),
        map.values().iter().map(|&v| v >= threshold).collect(),
    )
}

/// Salient patch indices in neighbour-scan order.
///
/// Starts on the first row scanning left to right. After each non-empty row,
/// the direction for the next non-empty row is left-to-right when its
/// leftmost salient patch is at most as far (Euclidean, on integer
/// `(row, col)`) from the last emitted patch as its rightmost one, and
/// right-to-left otherwise. Empty rows are skipped and do not change the
/// direction.
pub fn sns_salient_order(mask: &BinaryMask) -> Vec<usize> {
    let w = mask.width;
    let rows: Vec<(usize, Vec<usize>)> = (0..mask.height)
        .map(|r| (r, mask.row_cols(r).collect::<Vec<_>>()))
        .filter(|(_, cols)| !cols.is_empty())
        .collect();
    let mut order = Vec::with_capacity(mask.count());
    let mut left_to_right = true;
    for (i, (row, cols)) in rows.iter().enumerate() {
        if left_to_right {
            order.extend(cols.iter().map(|c| row * w + c));
        } else {
            order.extend(cols.iter().rev().map(|c| row * w + c));
        }
        if let Some((next_row, next_cols)) = rows.get(i + 1) {
            let last = *order.last().unwrap();
            let (lr, lc) = ((last / w) as i64, (last % w) as i64);
            let sq = |r: usize, c: usize| {
                let (dr, dc) = (r as i64 - lr, c as i64 - lc);
                dr * dr + dc * dc
            };
            let dist_left = sq(*next_row, next_cols[0]);
            let dist_right = sq(*next_row, *next_cols.last().unwrap());
            left_to_right = dist_left <= dist_right;
        }
    }
    order
}

/// Non-salient patch indices in raster order.
pub fn non_salient_order(mask: &BinaryMask) -> Vec<usize> {
    (0..mask.bits.len()).filter(|&i| !mask.bits[i]).collect()
}

/// How each path of a [`PathBundle`] was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathRule {
    /// salient then non-salient
    SalientFirst,
    /// non-salient then salient
    NonSalientFirst,
    /// reversed salient then reversed non-salient
    ReversedSalientFirst,
    /// reversed non-salient then reversed salient
    ReversedNonSalientFirst,
    Raster,
    RasterReversed,
    Transposed,
    TransposedReversed,
    Diagonal,
    DiagonalReversed,
    DiagonalTransposed,
    DiagonalTransposedReversed,
}

/// Exactly four scan paths over the same grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathBundle {
    paths: [ScanPath; 4],
    provenance: [PathRule; 4],
}

impl PathBundle {
    pub fn new(paths: [ScanPath; 4], provenance: [PathRule; 4]) -> Result<Self> {
        let (h, w) = (paths[0].height(), paths[0].width());
        if paths.iter().any(|p| p.height() != h || p.width() != w) {
            return Err(dim_err!("paths of a bundle must share one grid"));
        }
        Ok(Self { paths, provenance })
    }

    pub fn paths(&self) -> &[ScanPath; 4] {
        &self.paths
    }

    pub fn provenance(&self) -> &[PathRule; 4] {
        &self.provenance
    }

    pub fn height(&self) -> usize {
        self.paths[0].height()
    }

    pub fn width(&self) -> usize {
        self.paths[0].width()
    }

    /// The fixed SS2D directions: raster, reversed raster, column-major, reversed column-major.
    pub fn ss2d_directions(height: usize, width: usize) -> Result<Self> {
        let raster = raster_scan(height, width)?;
        let transposed = transposed_scan(height, width)?;
        let (raster_rev, transposed_rev) = (raster.reversed(), transposed.reversed());
        Self::new(
            [raster, raster_rev, transposed, transposed_rev],
            [
                PathRule::Raster,
                PathRule::RasterReversed,
                PathRule::Transposed,
                PathRule::TransposedReversed,
            ],
        )
    }
}

/// Order used for the salient subsequence; everything but
/// [`SalientOrder::Neighbour`] exists for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SalientOrder {
    #[default]
    Neighbour,
    /// raster order restricted to salient patches
    Raster,
    /// boustrophedon order restricted to salient patches
    Boustrophedon,
    /// anti-diagonal order restricted to salient patches
    Diagonal,
}

fn restrict(path: &ScanPath, mask: &BinaryMask) -> Vec<usize> {
    path.order().iter().copied().filter(|&i| mask.bits[i]).collect()
}

fn salient_subsequence(mask: &BinaryMask, order: SalientOrder) -> Result<Vec<usize>> {
    let (h, w) = (mask.height, mask.width);
    Ok(match order {
        SalientOrder::Neighbour => sns_salient_order(mask),
        SalientOrder::Raster => restrict(&raster_scan(h, w)?, mask),
        SalientOrder::Boustrophedon => restrict(&boustrophedon_scan(h, w)?, mask),
        SalientOrder::Diagonal => restrict(&diagonal_scan(h, w)?, mask),
    })
}

fn concat_rev(first: &[usize], second: &[usize], reverse: bool) -> Vec<usize> {
    if reverse {
        first.iter().rev().chain(second.iter().rev()).copied().collect()
    } else {
        first.iter().chain(second).copied().collect()
    }
}

/// The base path `I_s ++ I_ns` and its three variants.
pub fn sns_path_bundle(mask: &BinaryMask) -> Result<PathBundle> {
    sns_path_bundle_with(mask, SalientOrder::Neighbour, true)
}

/// Bundle construction with ablation switches: the salient subsequence
/// order, and whether the three variants are replaced by copies of the base
/// path.
pub fn sns_path_bundle_with(mask: &BinaryMask, order: SalientOrder, variants: bool) -> Result<PathBundle> {
    let (h, w) = (mask.height, mask.width);
    let salient = salient_subsequence(mask, order)?;
    let rest = non_salient_order(mask);
    let base = ScanPath::new(h, w, concat_rev(&salient, &rest, false))?;
    if !variants {
        return PathBundle::new(
            [base.clone(), base.clone(), base.clone(), base],
            [PathRule::SalientFirst; 4],
        );
    }
    PathBundle::new(
        [
            base,
            ScanPath::new(h, w, concat_rev(&rest, &salient, false))?,
            ScanPath::new(h, w, concat_rev(&salient, &rest, true))?,
            ScanPath::new(h, w, concat_rev(&rest, &salient, true))?,
        ],
        [
            PathRule::SalientFirst,
            PathRule::NonSalientFirst,
            PathRule::ReversedSalientFirst,
            PathRule::ReversedNonSalientFirst,
        ],
    )
}

/// True iff the neighbour-scan salient order differs from the boustrophedon
/// order restricted to salient patches.
pub fn path_divergence(mask: &BinaryMask) -> Result<bool> {
    Ok(sns_salient_order(mask) != restrict(&boustrophedon_scan(mask.height, mask.width)?, mask))
}

/// "Z" pattern: row-major.
pub fn raster_scan(height: usize, width: usize) -> Result<ScanPath> {
    ScanPath::new(height, width, (0..height * width).collect())
}

/// Column-major.
pub fn transposed_scan(height: usize, width: usize) -> Result<ScanPath> {
    ScanPath::new(
        height,
        width,
        (0..height * width).map(|i| (i % height) * width + i / height).collect(),
    )
}

/// "S" pattern: even rows left to right, odd rows right to left.
pub fn boustrophedon_scan(height: usize, width: usize) -> Result<ScanPath> {
    let order = (0..height)
        .flat_map(|r| {
            let cols: Box<dyn Iterator<Item = usize>> = if r % 2 == 0 {
                Box::new(0..width)
            } else {
                Box::new((0..width).rev())
            };
            cols.map(move |c| r * width + c)
        })
        .collect();
    ScanPath::new(height, width, order)
}

fn anti_diagonals(height: usize, width: usize, column_first: bool) -> Vec<usize> {
    let mut order = Vec::with_capacity(height * width);
    for s in 0..height + width - 1 {
        let rows = s.saturating_sub(width - 1)..=s.min(height - 1);
        if column_first {
            order.extend(rows.rev().map(|r| r * width + (s - r)));
        } else {
            order.extend(rows.map(|r| r * width + (s - r)));
        }
    }
    order
}

/// Anti-diagonals from the top-left corner, each walked top-right to bottom-left.
pub fn diagonal_scan(height: usize, width: usize) -> Result<ScanPath> {
    ScanPath::new(height, width, anti_diagonals(height, width, false))
}

/// The diagonal scan with its reversal, its transposed companion (each
/// anti-diagonal walked bottom-left to top-right) and that one reversed.
pub fn diagonal_scan_set(height: usize, width: usize) -> Result<PathBundle> {
    let diag = diagonal_scan(height, width)?;
    let trans = ScanPath::new(height, width, anti_diagonals(height, width, true))?;
    let (diag_rev, trans_rev) = (diag.reversed(), trans.reversed());
    PathBundle::new(
        [diag, diag_rev, trans, trans_rev],
        [
            PathRule::Diagonal,
            PathRule::DiagonalReversed,
            PathRule::DiagonalTransposed,
            PathRule::DiagonalTransposedReversed,
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Z,
    S,
    DiagonalSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineScan {
    Single(ScanPath),
    Set(PathBundle),
}

pub fn baseline_scan(kind: Baseline, height: usize, width: usize) -> Result<BaselineScan> {
    Ok(match kind {
        Baseline::Z => BaselineScan::Single(raster_scan(height, width)?),
        Baseline::S => BaselineScan::Single(boustrophedon_scan(height, width)?),
        Baseline::DiagonalSet => BaselineScan::Set(diagonal_scan_set(height, width)?),
    })
}

fn check_path<T: Real>(x: &Tensor<T>, path: &ScanPath) -> Result<(usize, usize, usize)> {
    let (h, w, c) = x.dims3()?;
    if (h, w) != (path.height(), path.width()) {
        return Err(dim_err!(
            "path over {}x{} applied to {h}x{w} tensor",
            path.height(),
            path.width()
        ));
    }
    Ok((h, w, c))
}

/// Gathers `[H, W, C]` into `[H*W, C]` along `path`.
pub fn apply_path<T: Real>(x: &Tensor<T>, path: &ScanPath) -> Result<Tensor<T>> {
    let (h, w, c) = check_path(x, path)?;
    let mut out = Vec::with_capacity(x.len());
    for &idx in path.order() {
        out.extend_from_slice(&x.data()[idx * c..(idx + 1) * c]);
    }
    Tensor::new(&[h * w, c], out)
}

/// Scatters `[H*W, C]` back onto the grid; inverse of [`apply_path`].
pub fn invert_path<T: Real>(seq: &Tensor<T>, path: &ScanPath) -> Result<Tensor<T>> {
    let (l, c) = seq.dims2()?;
    let (h, w) = (path.height(), path.width());
    if l != h * w {
        return Err(dim_err!("sequence of length {l} for a {h}x{w} path"));
    }
    let mut out = vec![T::zero(); seq.len()];
    for (pos, &idx) in path.order().iter().enumerate() {
        out[idx * c..(idx + 1) * c].copy_from_slice(&seq.data()[pos * c..(pos + 1) * c]);
    }
    Tensor::new(&[h, w, c], out)
}

/// CSV with one line per path, indices comma-separated.
pub fn bundle_to_csv(bundle: &PathBundle) -> String {
    let mut out = String::new();
    for p in bundle.paths() {
        let line: Vec<String> = p.order().iter().map(usize::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// SVG drawing of the mask with a polyline through the salient subsequence.
pub fn salient_polyline_svg(mask: &BinaryMask, order: &[usize], cell: usize) -> String {
    let (h, w) = (mask.height, mask.width);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w * cell,
        h * cell,
        w * cell,
        h * cell
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="#d0d0d0"/>"##,
                    c * cell,
                    r * cell
                );
            }
        }
    }
    let half = cell as f64 / 2.0;
    let points: Vec<String> = order
        .iter()
        .map(|&i| format!("{},{}", (i % w * cell) as f64 + half, (i / w * cell) as f64 + half))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#d03020" stroke-width="{}"/>"##,
        points.join(" "),
        (cell as f64 / 8.0).max(1.0)
    );
    if let Some(&first) = order.first() {
        let _ = writeln!(
            svg,
            r##"<circle cx="{}" cy="{}" r="{}" fill="#2050d0"/>"##,
            (first % w * cell) as f64 + half,
            (first / w * cell) as f64 + half,
            (cell as f64 / 5.0).max(1.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(h: usize, w: usize, salient: &[(usize, usize)]) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| salient.contains(&(r, c))).unwrap()
    }

    #[test]
    fn binarize_is_inclusive() {
        let m = SaliencyMap::new(1, 3, vec![0.4, 0.5, 0.6]).unwrap();
        assert_eq!(binarize(&m, 0.5).unwrap().bits(), &[false, true, true]);
        let ones = SaliencyMap::filled(2, 2, 1.0).unwrap();
        assert_eq!(binarize(&ones, 0.5).unwrap().count(), 4);
        let zeros = SaliencyMap::filled(2, 2, 0.0).unwrap();
        assert_eq!(binarize(&zeros, 0.5).unwrap().count(), 0);
        assert!(binarize(&zeros, 0.0).is_err());
    }

    #[test]
    fn empty_and_full_masks() {
        assert!(sns_salient_order(&BinaryMask::filled(3, 4, false).unwrap()).is_empty());
        let full = BinaryMask::filled(3, 4, true).unwrap();
        assert_eq!(sns_salient_order(&full), boustrophedon_scan(3, 4).unwrap().order());
        let col = BinaryMask::filled(3, 1, true).unwrap();
        assert_eq!(sns_salient_order(&col), vec![0, 1, 2]);
    }

    #[test]
    fn three_by_three_hand_trace() {
        let m = mask_from(3, 3, &[(0, 0), (0, 2), (1, 2), (2, 0), (2, 1)]);
        assert_eq!(sns_salient_order(&m), vec![0, 2, 5, 7, 6]);
        // the boustrophedon restriction visits row 2 left to right instead
        assert_eq!(restrict(&boustrophedon_scan(3, 3).unwrap(), &m), vec![0, 2, 5, 6, 7]);
        assert!(path_divergence(&m).unwrap());
    }

    #[test]
    fn empty_rows_keep_direction_and_reference() {
        // row 1 empty; reference stays at (0, 3)
        let m = mask_from(3, 4, &[(0, 0), (0, 3), (2, 0), (2, 2)]);
        // dist to (2,0): 4 + 9 = 13, to (2,2): 4 + 1 = 5 -> right to left
        assert_eq!(sns_salient_order(&m), vec![0, 3, 10, 8]);
    }

    #[test]
    fn two_by_two_bundle() {
        let m = mask_from(2, 2, &[(1, 0)]);
        let b = sns_path_bundle(&m).unwrap();
        let orders: Vec<&[usize]> = b.paths().iter().map(|p| p.order()).collect();
        assert_eq!(
            orders,
            vec![&[2, 0, 1, 3][..], &[0, 1, 3, 2], &[2, 3, 1, 0], &[3, 1, 0, 2]]
        );
    }

    #[test]
    fn degenerate_bundles() {
        let empty = sns_path_bundle(&BinaryMask::filled(2, 3, false).unwrap()).unwrap();
        let raster: Vec<usize> = (0..6).collect();
        let rev: Vec<usize> = (0..6).rev().collect();
        assert_eq!(empty.paths()[0].order(), raster.as_slice());
        assert_eq!(empty.paths()[1].order(), raster.as_slice());
        assert_eq!(empty.paths()[2].order(), rev.as_slice());
        assert_eq!(empty.paths()[3].order(), rev.as_slice());

        let full = sns_path_bundle(&BinaryMask::filled(3, 3, true).unwrap()).unwrap();
        let s = boustrophedon_scan(3, 3).unwrap();
        assert_eq!(full.paths()[0], s);
        assert_eq!(full.paths()[1], s);
        assert_eq!(full.paths()[2], s.reversed());
        assert_eq!(full.paths()[3], s.reversed());
    }

    #[test]
    fn baselines() {
        assert_eq!(raster_scan(2, 2).unwrap().order(), &[0, 1, 2, 3]);
        assert_eq!(boustrophedon_scan(2, 2).unwrap().order(), &[0, 1, 3, 2]);
        assert_eq!(diagonal_scan(3, 3).unwrap().order(), &[0, 1, 3, 2, 4, 6, 5, 7, 8]);
        assert_eq!(transposed_scan(2, 3).unwrap().order(), &[0, 3, 1, 4, 2, 5]);
        let set = diagonal_scan_set(3, 3).unwrap();
        assert_eq!(set.paths()[2].order(), &[0, 3, 1, 6, 4, 2, 7, 5, 8]);
        assert_eq!(set.paths()[1], set.paths()[0].reversed());
        let d = diagonal_scan(2, 4).unwrap();
        assert_eq!(d.order(), &[0, 1, 4, 2, 5, 3, 6, 7]);
        assert!(matches!(
            baseline_scan(Baseline::S, 2, 2).unwrap(),
            BaselineScan::Single(_)
        ));
        assert!(matches!(
            baseline_scan(Baseline::DiagonalSet, 2, 2).unwrap(),
            BaselineScan::Set(_)
        ));
        let dirs = PathBundle::ss2d_directions(2, 3).unwrap();
        assert_eq!(dirs.paths()[0].order(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(dirs.paths()[1].order(), &[5, 4, 3, 2, 1, 0]);
        assert_eq!(dirs.paths()[2].order(), &[0, 3, 1, 4, 2, 5]);
        assert_eq!(dirs.paths()[3].order(), &[5, 2, 4, 1, 3, 0]);
    }

    #[test]
    fn ablation_bundles() {
        let m = mask_from(3, 3, &[(0, 0), (0, 2), (1, 2), (2, 0), (2, 1)]);
        let s = sns_path_bundle_with(&m, SalientOrder::Boustrophedon, true).unwrap();
        assert_eq!(&s.paths()[0].order()[..5], &[0, 2, 5, 6, 7]);
        let z = sns_path_bundle_with(&m, SalientOrder::Raster, true).unwrap();
        assert_eq!(&z.paths()[0].order()[..5], &[0, 2, 5, 6, 7]);
        let copies = sns_path_bundle_with(&m, SalientOrder::Neighbour, false).unwrap();
        assert!(copies.paths().iter().all(|p| p == &copies.paths()[0]));
    }

    #[test]
    fn apply_and_invert() {
        let x = Tensor::<f64>::from_fn(&[2, 2, 1], |i| i as f64 * 10.0);
        let s = boustrophedon_scan(2, 2).unwrap();
        assert_eq!(apply_path(&x, &s).unwrap().data(), &[0.0, 10.0, 30.0, 20.0]);
        let r = raster_scan(2, 2).unwrap();
        assert_eq!(apply_path(&x, &r).unwrap().data(), x.data());
        assert!(apply_path(&x, &raster_scan(1, 4).unwrap()).is_err());
    }

    #[test]
    fn svg_and_csv() {
        let m = mask_from(2, 2, &[(1, 0)]);
        let b = sns_path_bundle(&m).unwrap();
        assert_eq!(bundle_to_csv(&b), "2,0,1,3\n0,1,3,2\n2,3,1,0\n3,1,0,2\n");
        let svg = salient_polyline_svg(&m, &sns_salient_order(&m), 10);
        assert!(svg.starts_with("<svg") && svg.contains("polyline points=\"5,15\""));
    }

    proptest! {
        #[test]
        fn paths_are_permutations_and_round_trip(
            h in 1usize..7, w in 1usize..7, bits in proptest::collection::vec(any::<bool>(), 36), seed in any::<u32>()
        ) {
            let m = BinaryMask::new(h, w, bits[..h * w].to_vec()).unwrap();
            let x = Tensor::<f32>::from_fn(&[h, w, 2], |i| (i as u32 ^ seed) as f32);
            let b = sns_path_bundle(&m).unwrap();
            for p in b.paths() {
                let mut sorted = p.order().to_vec();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..h * w).collect::<Vec<_>>());
                prop_assert_eq!(invert_path(&apply_path(&x, p).unwrap(), p).unwrap(), x.clone());
            }
        }
    }
}
