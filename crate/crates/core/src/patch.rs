//! Patch groups: reference grid, block matching, extraction and scatter-back.
//!
//! A patch is the `patch_side x patch_side` block whose top-left corner is a
//! [`Position`]. Patches are vectorized row-major into columns of a group
//! matrix, so a group of `m` patches is an `n x m` matrix with
//! `n = patch_side^2`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Position {
    pub row: usize,
    pub col: usize,
}

impl Position {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGeometry {
    pub patch_side: usize,
    pub group_size: usize,
    pub window_side: usize,
    pub stride: usize,
}

impl PatchGeometry {
    pub fn new(
        patch_side: usize,
        group_size: usize,
        window_side: usize,
        stride: usize,
    ) -> Result<Self> {
        let g = Self {
            patch_side,
            group_size,
            window_side,
            stride,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_side == 0 || self.group_size == 0 || self.stride == 0 {
            return Err(Error::InvalidGeometry(format!(
                "patch side, group size and stride must be positive: {self:?}"
            )));
        }
        if self.stride > self.patch_side {
            return Err(Error::InvalidGeometry(format!(
                "stride {} exceeds patch side {}; reference patches would leave gaps",
                self.stride, self.patch_side
            )));
        }
        if self.window_side < self.patch_side {
            return Err(Error::InvalidGeometry(format!(
                "window side {} is smaller than patch side {}",
                self.window_side, self.patch_side
            )));
        }
        let per_axis = self.window_side - self.patch_side + 1;
        if per_axis * per_axis < self.group_size {
            return Err(Error::InvalidGeometry(format!(
                "a {w}x{w} window holds {} patches of side {}, fewer than the group size {}",
                per_axis * per_axis,
                self.patch_side,
                self.group_size,
                w = self.window_side
            )));
        }
        Ok(())
    }

    /// Number of pixels per patch (`n`).
    #[inline]
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    fn check_image(&self, height: usize, width: usize) -> Result<()> {
        if height < self.patch_side || width < self.patch_side {
            return Err(Error::ImageTooSmall {
                height,
                width,
                patch_side: self.patch_side,
            });
        }
        Ok(())
    }
}

fn axis_grid(len: usize, patch_side: usize, stride: usize) -> Vec<usize> {
    let last = len - patch_side;
    let mut coords: Vec<usize> = (0..=last).step_by(stride).collect();
    if coords.last() != Some(&last) {
        coords.push(last);
    }
    coords
}

/// Reference patch anchors: every `stride` pixels along each axis, plus the
/// last valid anchor so the bottom and right borders are covered.
pub fn reference_grid(
    height: usize,
    width: usize,
    geometry: &PatchGeometry,
) -> Result<Vec<Position>> {
    geometry.check_image(height, width)?;
    let rows = axis_grid(height, geometry.patch_side, geometry.stride);
    let cols = axis_grid(width, geometry.patch_side, geometry.stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| Position::new(r, c)))
        .collect())
}

/// Range of candidate anchors along one axis. The window is centred on the
/// reference patch centre and translated to stay inside the image.
fn window_anchor_range(
    anchor: usize,
    len: usize,
    patch_side: usize,
    window: usize,
) -> (usize, usize) {
    let span = window.min(len);
    let centre = anchor + patch_side / 2;
    let start = centre.saturating_sub(window / 2).min(len - span);
    (start, start + span - patch_side)
}

#[inline]
fn squared_distance(img: &GrayImage, reference: &[f64], at: Position, side: usize) -> f64 {
    let mut acc = 0.0;
    for dr in 0..side {
        let row = &img.row(at.row + dr)[at.col..at.col + side];
        let refrow = &reference[dr * side..(dr + 1) * side];
        for (a, b) in row.iter().zip(refrow) {
            let d = a - b;
            acc += d * d;
        }
    }
    acc
}

/// Copies the patch at `at` into `out` (row-major).
#[inline]
pub fn read_patch(img: &GrayImage, at: Position, side: usize, out: &mut [f64]) {
    for dr in 0..side {
        out[dr * side..(dr + 1) * side]
            .copy_from_slice(&img.row(at.row + dr)[at.col..at.col + side]);
    }
}

/// Finds the `group_size` patches closest (squared L2) to the reference
/// patch inside its search window. The reference comes first; the rest are
/// sorted by ascending distance, ties broken by raster order.
pub fn match_positions(
    img: &GrayImage,
    reference: Position,
    geometry: &PatchGeometry,
) -> Result<Vec<Position>> {
    let side = geometry.patch_side;
    let (h, w) = (img.height(), img.width());
    geometry.check_image(h, w)?;
    if reference.row + side > h || reference.col + side > w {
        return Err(Error::InvalidParameter(format!(
            "reference {reference:?} is not a valid patch anchor in a {h}x{w} image"
        )));
    }
    let (r0, r1) = window_anchor_range(reference.row, h, side, geometry.window_side);
    let (c0, c1) = window_anchor_range(reference.col, w, side, geometry.window_side);
    let available = (r1 - r0 + 1) * (c1 - c0 + 1);
    let m = geometry.group_size;
    if available < m {
        return Err(Error::NotEnoughCandidates {
            available,
            needed: m,
        });
    }

    let mut ref_patch = vec![0.0; side * side];
    read_patch(img, reference, side, &mut ref_patch);

    let mut candidates: Vec<(f64, Position)> = Vec::with_capacity(available - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let p = Position::new(r, c);
            if p != reference {
                candidates.push((squared_distance(img, &ref_patch, p, side), p));
            }
        }
    }
    let order = |a: &(f64, Position), b: &(f64, Position)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let keep = m - 1;
    if keep > 0 && keep < candidates.len() {
        candidates.select_nth_unstable_by(keep - 1, order);
    }
    candidates.truncate(keep);
    candidates.sort_unstable_by(order);

    let mut positions = Vec::with_capacity(m);
    positions.push(reference);
    positions.extend(candidates.into_iter().map(|(_, p)| p));
    Ok(positions)
}

/// Stacks the patches at `positions` as the columns of an `n x m` matrix.
pub fn extract_group(img: &GrayImage, positions: &[Position], patch_side: usize) -> DMatrix<f64> {
    let n = patch_side * patch_side;
    let mut data = vec![0.0; n * positions.len()];
    for (col, &p) in data.chunks_exact_mut(n).zip(positions) {
        read_patch(img, p, patch_side, col);
    }
    DMatrix::from_vec(n, positions.len(), data)
}

/// A group of similar patches: the similarity matrix and where its columns
/// came from. Column 0 is always the reference patch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGroup {
    pub matrix: DMatrix<f64>,
    pub positions: Vec<Position>,
}

impl SimilarityGroup {
    pub const REFERENCE_INDEX: usize = 0;

    pub fn reference(&self) -> Position {
        self.positions[Self::REFERENCE_INDEX]
    }
}

pub fn block_match(
    img: &GrayImage,
    reference: Position,
    geometry: &PatchGeometry,
) -> Result<SimilarityGroup> {
    let positions = match_positions(img, reference, geometry)?;
    let matrix = extract_group(img, &positions, geometry.patch_side);
    Ok(SimilarityGroup { matrix, positions })
}

/// Running weighted sums for patch reprojection.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationAccumulator {
    height: usize,
    width: usize,
    value_sum: Vec<f64>,
    weight_sum: Vec<f64>,
}

impl AggregationAccumulator {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            value_sum: vec![0.0; height * width],
            weight_sum: vec![0.0; height * width],
        }
    }

    pub fn value_sum(&self) -> &[f64] {
        &self.value_sum
    }

    pub fn weight_sum(&self) -> &[f64] {
        &self.weight_sum
    }

    /// Adds column `j` of `denoised`, weighted by `column_weights[j]`, back at
    /// `positions[j]`.
    pub fn scatter_group(
        &mut self,
        denoised: &DMatrix<f64>,
        positions: &[Position],
        column_weights: &[f64],
    ) -> Result<()> {
        let m = positions.len();
        if denoised.ncols() != m || column_weights.len() != m {
            return Err(Error::InvalidParameter(format!(
                "group has {} columns, {} positions and {} weights",
                denoised.ncols(),
                m,
                column_weights.len()
            )));
        }
        if let Some(w) = column_weights
            .iter()
            .find(|w| !(w.is_finite() && **w >= 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "column weight {w} is not finite and non-negative"
            )));
        }
        let side = (denoised.nrows() as f64).sqrt().round() as usize;
        if side * side != denoised.nrows() {
            return Err(Error::InvalidParameter(format!(
                "{} rows is not a square patch",
                denoised.nrows()
            )));
        }
        for ((col, &p), &wj) in denoised.column_iter().zip(positions).zip(column_weights) {
            let col = col.as_slice();
            for dr in 0..side {
                let base = (p.row + dr) * self.width + p.col;
                let vals = &mut self.value_sum[base..base + side];
                let wts = &mut self.weight_sum[base..base + side];
                for ((v, wt), x) in vals.iter_mut().zip(wts.iter_mut()).zip(&col[dr * side..]) {
                    *v += wj * x;
                    *wt += wj;
                }
            }
        }
        Ok(())
    }

    /// Pixel-wise `value_sum / weight_sum`.
    pub fn normalize(&self) -> Result<GrayImage> {
        let mut pixels = Vec::with_capacity(self.value_sum.len());
        for (i, (v, w)) in self.value_sum.iter().zip(&self.weight_sum).enumerate() {
            if !(*w > 0.0) {
                return Err(Error::UncoveredPixel {
                    row: i / self.width,
                    col: i % self.width,
                });
            }
            pixels.push(v / w);
        }
        GrayImage::new(self.height, self.width, pixels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(side: usize, m: usize, w: usize, stride: usize) -> PatchGeometry {
        PatchGeometry::new(side, m, w, stride).unwrap()
    }

    fn random_image(h: usize, w: usize, seed: u64) -> GrayImage {
        let mut src = crate::noise::GaussianSource::new(seed, 0);
        let mut px = vec![0.0; h * w];
        src.fill(&mut px, 40.0);
        GrayImage::new(h, w, px.into_iter().map(|v| v + 128.0).collect()).unwrap()
    }

    #[test]
    fn geometry_validation() {
        assert!(PatchGeometry::new(0, 1, 5, 1).is_err());
        assert!(PatchGeometry::new(7, 1, 5, 1).is_err());
        assert!(PatchGeometry::new(7, 10, 8, 1).is_err()); // 2x2 = 4 candidates
        assert!(PatchGeometry::new(7, 4, 8, 1).is_ok());
        assert!(PatchGeometry::new(3, 1, 8, 4).is_err()); // stride 4 over 3-wide patches
        assert!(PatchGeometry::new(3, 1, 8, 3).is_ok());
    }

    #[test]
    fn grid_appends_last_anchor() {
        let g = reference_grid(12, 12, &geom(7, 1, 45, 4)).unwrap();
        let rows: Vec<usize> = g
            .iter()
            .map(|p| p.row)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(rows, vec![0, 4, 5]);
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn grid_exact_fit() {
        let g = reference_grid(8, 8, &geom(8, 1, 45, 4)).unwrap();
        assert_eq!(g, vec![Position::new(0, 0)]);
    }

    #[test]
    fn grid_last_already_present() {
        let g = reference_grid(16, 16, &geom(8, 1, 45, 4)).unwrap();
        let cols: Vec<usize> = g.iter().filter(|p| p.row == 0).map(|p| p.col).collect();
        assert_eq!(cols, vec![0, 4, 8]);
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn grid_rejects_small_image() {
        assert!(matches!(
            reference_grid(6, 20, &geom(7, 1, 45, 4)),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn constant_image_ties_follow_raster_order() {
        let img = GrayImage::filled(30, 30, 77.0).unwrap();
        let g = geom(5, 5, 15, 4);
        let group = block_match(&img, Position::new(0, 0), &g).unwrap();
        let expected: Vec<Position> = (0..5).map(|c| Position::new(0, c)).collect();
        assert_eq!(group.positions, expected);
    }

    #[test]
    fn constant_image_reference_stays_first() {
        let img = GrayImage::filled(30, 30, 77.0).unwrap();
        let g = geom(5, 4, 15, 4);
        let group = block_match(&img, Position::new(10, 10), &g).unwrap();
        assert_eq!(group.reference(), Position::new(10, 10));
        // window rows/cols start at 10 + 2 - 7 = 5
        assert_eq!(
            &group.positions[1..],
            &[
                Position::new(5, 5),
                Position::new(5, 6),
                Position::new(5, 7)
            ]
        );
    }

    #[test]
    fn single_patch_group_is_self() {
        let img = random_image(20, 20, 3);
        let group = block_match(&img, Position::new(6, 9), &geom(4, 1, 11, 2)).unwrap();
        assert_eq!(group.positions, vec![Position::new(6, 9)]);
        assert_eq!(group.matrix.ncols(), 1);
        assert_eq!(group.matrix[(5, 0)], img.get(7, 10));
    }

    #[test]
    fn planted_duplicate_is_found() {
        let mut px = random_image(40, 40, 11).into_pixels();
        // copy the 6x6 patch at (10, 12) to (20, 25)
        for dr in 0..6 {
            for dc in 0..6 {
                px[(20 + dr) * 40 + 25 + dc] = px[(10 + dr) * 40 + 12 + dc];
            }
        }
        let img = GrayImage::new(40, 40, px).unwrap();
        let g = geom(6, 2, 31, 4);
        let group = block_match(&img, Position::new(10, 12), &g).unwrap();
        assert_eq!(
            group.positions,
            vec![Position::new(10, 12), Position::new(20, 25)]
        );

        // brute-force scan over every anchor in the window agrees
        let (r0, r1) = window_anchor_range(10, 40, 6, 31);
        let (c0, c1) = window_anchor_range(12, 40, 6, 31);
        let mut best = (f64::INFINITY, Position::new(0, 0));
        for r in r0..=r1 {
            for c in c0..=c1 {
                if (r, c) == (10, 12) {
                    continue;
                }
                let mut d = 0.0;
                for dr in 0..6 {
                    for dc in 0..6 {
                        d += (img.get(r + dr, c + dc) - img.get(10 + dr, 12 + dc)).powi(2);
                    }
                }
                if d < best.0 {
                    best = (d, Position::new(r, c));
                }
            }
        }
        assert_eq!(best, (0.0, Position::new(20, 25)));
    }

    #[test]
    fn window_is_translated_at_borders() {
        // 45-wide window in a 100-wide image, reference at the far corner
        assert_eq!(window_anchor_range(93, 100, 7, 45), (55, 93));
        assert_eq!(window_anchor_range(0, 100, 7, 45), (0, 38));
        assert_eq!(window_anchor_range(50, 100, 7, 45), (31, 69));
        // image narrower than the window: whole image
        assert_eq!(window_anchor_range(3, 20, 7, 45), (0, 13));
    }

    #[test]
    fn too_few_candidates() {
        let img = random_image(8, 8, 1);
        assert_eq!(
            block_match(&img, Position::new(1, 1), &geom(7, 4, 45, 4))
                .unwrap()
                .positions
                .len(),
            4
        );
        let g = geom(7, 5, 45, 4);
        assert!(matches!(
            block_match(&img, Position::new(0, 0), &g),
            Err(Error::NotEnoughCandidates {
                available: 4,
                needed: 5
            })
        ));
    }

    #[test]
    fn weighted_overlap_by_hand() {
        // 1x1 patches make single-pixel writes easy to reason about
        let mut acc = AggregationAccumulator::new(1, 1);
        let p = [Position::new(0, 0)];
        acc.scatter_group(&DMatrix::from_element(1, 1, 10.0), &p, &[1.0])
            .unwrap();
        acc.scatter_group(&DMatrix::from_element(1, 1, 20.0), &p, &[3.0])
            .unwrap();
        assert_eq!(acc.normalize().unwrap().pixels(), &[17.5]);
    }

    #[test]
    fn disjoint_groups_untouched() {
        let mut acc = AggregationAccumulator::new(2, 4);
        let a = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_column_slice(4, 1, &[5.0, 6.0, 7.0, 8.0]);
        acc.scatter_group(&a, &[Position::new(0, 0)], &[0.3])
            .unwrap();
        acc.scatter_group(&b, &[Position::new(0, 2)], &[7.0])
            .unwrap();
        let out = acc.normalize().unwrap();
        let expect = [1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0];
        for (o, e) in out.pixels().iter().zip(expect) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn uncovered_pixel_is_an_error() {
        let mut acc = AggregationAccumulator::new(3, 3);
        acc.scatter_group(
            &DMatrix::from_element(4, 1, 1.0),
            &[Position::new(0, 0)],
            &[1.0],
        )
        .unwrap();
        assert!(matches!(
            acc.normalize(),
            Err(Error::UncoveredPixel { row: 0, col: 2 })
        ));
    }

    #[test]
    fn rejects_bad_weights() {
        let mut acc = AggregationAccumulator::new(2, 2);
        let d = DMatrix::from_element(4, 1, 1.0);
        assert!(acc
            .scatter_group(&d, &[Position::new(0, 0)], &[-1.0])
            .is_err());
        assert!(acc
            .scatter_group(&d, &[Position::new(0, 0)], &[f64::NAN])
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scatter_of_extracted_groups_reproduces_image(
            h in 9usize..24, w in 9usize..24, side in 2usize..6, stride_pick in 0usize..5,
            m in 1usize..6, seed in 0u64..1000,
        ) {
            let stride = 1 + stride_pick % side;
            let img = random_image(h, w, seed);
            let g = geom(side, m, 9, stride);
            let mut acc = AggregationAccumulator::new(h, w);
            for p in reference_grid(h, w, &g).unwrap() {
                let group = block_match(&img, p, &g).unwrap();
                // distances are non-decreasing after the reference
                let dists: Vec<f64> = (0..m).map(|j| (group.matrix.column(j) - group.matrix.column(0)).norm_squared()).collect();
                prop_assert!(dists.windows(2).all(|d| d[0] <= d[1]));
                acc.scatter_group(&group.matrix, &group.positions, &vec![1.0; m]).unwrap();
            }
            prop_assert!(acc.weight_sum().iter().all(|&w| w > 0.0));
            let out = acc.normalize().unwrap();
            for (a, b) in out.pixels().iter().zip(img.pixels()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }
}
