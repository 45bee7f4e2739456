//! Rectangular region detection on binarized pages.
//!
//! Candidate notice frames are found as connected components of the
//! thresholded ink, filtered by dimension thresholds and a rectangularity
//! test (how much of the component's bounding-box outline is actually
//! covered by ink), then arranged into a containment hierarchy so nested
//! frames are kept as children of their enclosing frame.

use crate::imagecore::{crop_gray, threshold_binary, BBox, BinaryImage, GrayImage, Threshold};
use serde::{Deserialize, Serialize};

/// One connected component of foreground pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub bbox: BBox,
    pub area: usize,
}

/// A candidate region with its nested sub-regions.
#[derive(Debug, Clone)]
pub struct RegionNode {
    pub bbox: BBox,
    pub children: Vec<usize>,
    pub rectangularity: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub min_w: usize,
    pub min_h: usize,
    /// Region area must not exceed this fraction of the page area.
    pub max_frac: f64,
    pub threshold: Threshold,
    pub invert: bool,
    /// Accept when rectangularity >= 1 - rect_tol.
    pub rect_tol: f64,
    pub connectivity: Connectivity,
}

impl SegmentationParams {
    /// Defaults sized relative to the page: min side 5% of page width.
    pub fn for_page(page_w: usize) -> Self {
        let min = (page_w / 20).max(1);
        Self {
            min_w: min,
            min_h: min,
            max_frac: 0.9,
            threshold: Threshold::Auto,
            invert: true,
            rect_tol: 0.25,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Two-pass union-find labeling. Labels are dense from 1; the component list
/// is sorted by (y, x) of the bbox top-left corner.
pub fn connected_components(
    img: &BinaryImage,
    connectivity: Connectivity,
) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (img.width, img.height);
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0]; // parent[0] unused

    fn find(parent: &mut Vec<u32>, mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    fn union(parent: &mut Vec<u32>, a: u32, b: u32) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi as usize] = lo;
        }
    }

    let mut next = 1u32;
    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) {
                continue;
            }
            // neighbors already scanned: W, N, and for 8-connectivity NW, NE
            let mut neigh: [u32; 4] = [0; 4];
            let mut n = 0;
            if x > 0 && labels[y * w + x - 1] != 0 {
                neigh[n] = labels[y * w + x - 1];
                n += 1;
            }
            if y > 0 {
                if labels[(y - 1) * w + x] != 0 {
                    neigh[n] = labels[(y - 1) * w + x];
                    n += 1;
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && labels[(y - 1) * w + x - 1] != 0 {
                        neigh[n] = labels[(y - 1) * w + x - 1];
                        n += 1;
                    }
                    if x + 1 < w && labels[(y - 1) * w + x + 1] != 0 {
                        neigh[n] = labels[(y - 1) * w + x + 1];
                        n += 1;
                    }
                }
            }
            let lab = if n == 0 {
                parent.push(next);
                let l = next;
                next += 1;
                l
            } else {
                let mut m = neigh[0];
                for &l in &neigh[1..n] {
                    union(&mut parent, m, l);
                    if l < m {
                        m = l;
                    }
                }
                m
            };
            labels[y * w + x] = lab;
        }
    }

    // Resolve equivalences to dense labels, discovered in raster order.
    let mut dense: Vec<u32> = vec![0; parent.len()];
    let mut comps: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let raw = labels[y * w + x];
            if raw == 0 {
                continue;
            }
            let root = find(&mut parent, raw);
            let d = if dense[root as usize] == 0 {
                let d = comps.len() as u32 + 1;
                dense[root as usize] = d;
                comps.push(Component {
                    label: d,
                    bbox: BBox::new(x, y, 1, 1),
                    area: 0,
                });
                d
            } else {
                dense[root as usize]
            };
            labels[y * w + x] = d;
            let c = &mut comps[(d - 1) as usize];
            c.area += 1;
            let x0 = c.bbox.x.min(x);
            let y0 = c.bbox.y.min(y);
            let x1 = (c.bbox.x + c.bbox.w).max(x + 1);
            let y1 = (c.bbox.y + c.bbox.h).max(y + 1);
            c.bbox = BBox::new(x0, y0, x1 - x0, y1 - y0);
        }
    }

    comps.sort_by_key(|c| (c.bbox.y, c.bbox.x));
    // relabel after the sort so labels stay dense in (y, x) order
    let mut remap = vec![0u32; comps.len() + 1];
    for (i, c) in comps.iter_mut().enumerate() {
        remap[c.label as usize] = i as u32 + 1;
        c.label = i as u32 + 1;
    }
    for l in labels.iter_mut() {
        if *l != 0 {
            *l = remap[*l as usize];
        }
    }
    (labels, comps)
}

/// Fraction of the component bbox's 1-pixel outline ring covered by the
/// component's own pixels within a small tolerance band. A drawn frame or a
/// filled block scores ~1; diagonal strokes and blobs score low.
pub fn rectangularity(img: &BinaryImage, labels: &[u32], comp: &Component) -> f64 {
    let b = &comp.bbox;
    if b.w < 2 || b.h < 2 {
        return 1.0;
    }
    let tol = (b.w.min(b.h) / 20).max(1);
    let w = img.width;
    let covered_at = |x: usize, y: usize| -> bool {
        let x0 = x.saturating_sub(tol);
        let y0 = y.saturating_sub(tol);
        let x1 = (x + tol).min(img.width - 1);
        let y1 = (y + tol).min(img.height - 1);
        for yy in y0..=y1 {
            for xx in x0..=x1 {
                if labels[yy * w + xx] == comp.label {
                    return true;
                }
            }
        }
        false
    };
    let mut ring = 0usize;
    let mut hit = 0usize;
    let (x0, y0) = (b.x, b.y);
    let (x1, y1) = (b.x + b.w - 1, b.y + b.h - 1);
    for x in x0..=x1 {
        for y in [y0, y1] {
            ring += 1;
            if covered_at(x, y) {
                hit += 1;
            }
        }
    }
    for y in y0 + 1..y1 {
        for x in [x0, x1] {
            ring += 1;
            if covered_at(x, y) {
                hit += 1;
            }
        }
    }
    hit as f64 / ring as f64
}

fn passes(bbox: &BBox, rect: f64, params: &SegmentationParams, page_area: usize) -> bool {
    bbox.w >= params.min_w
        && bbox.h >= params.min_h
        && (bbox.area() as f64) <= params.max_frac * page_area as f64
        && rect >= 1.0 - params.rect_tol
}

/// Filter components by dimension and rectangularity, then nest accepted
/// boxes: a node's parent is the smallest accepted box strictly containing
/// it. Returns (all nodes, indices of roots).
pub fn build_region_tree(
    img: &BinaryImage,
    params: &SegmentationParams,
) -> (Vec<RegionNode>, Vec<usize>) {
    let (labels, comps) = connected_components(img, params.connectivity);
    let page_area = img.width * img.height;

    let mut nodes: Vec<RegionNode> = Vec::new();
    for c in &comps {
        let rect = rectangularity(img, &labels, c);
        if passes(&c.bbox, rect, params, page_area) {
            nodes.push(RegionNode { bbox: c.bbox, children: Vec::new(), rectangularity: rect });
        }
    }

    // parent = smallest strictly containing accepted box
    let mut parent_of: Vec<Option<usize>> = vec![None; nodes.len()];
    for i in 0..nodes.len() {
        let mut best: Option<usize> = None;
        for j in 0..nodes.len() {
            if i == j || !nodes[j].bbox.strictly_contains(&nodes[i].bbox) {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) if nodes[j].bbox.area() < nodes[b].bbox.area() => Some(j),
                other => other,
            };
        }
        parent_of[i] = best;
    }
    let mut roots = Vec::new();
    for i in 0..nodes.len() {
        match parent_of[i] {
            Some(p) => nodes[p].children.push(i),
            None => roots.push(i),
        }
    }
    (nodes, roots)
}

/// Threshold the page, build the region tree, and crop every accepted node
/// (roots and passing children alike) from the original grayscale page.
/// Output is ordered top-to-bottom then left-to-right, duplicates removed.
pub fn segment_page(
    page: &GrayImage,
    params: &SegmentationParams,
) -> Vec<(BBox, GrayImage)> {
    let bin = threshold_binary(page, params.threshold, params.invert);
    let (nodes, _roots) = build_region_tree(&bin, params);
    let mut boxes: Vec<BBox> = nodes.iter().map(|n| n.bbox).collect();
    boxes.sort_by_key(|b| (b.y, b.x, b.w, b.h));
    boxes.dedup();
    boxes
        .into_iter()
        .map(|b| {
            let crop = crop_gray(page, &b).expect("region bbox within page");
            (b, crop)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::BinaryImage;

    fn img_from_rows(rows: &[&str]) -> BinaryImage {
        let h = rows.len();
        let w = rows[0].len();
        let mut img = BinaryImage::filled(w, h, false);
        for (y, r) in rows.iter().enumerate() {
            for (x, c) in r.chars().enumerate() {
                img.set(x, y, c == '#');
            }
        }
        img
    }

    /// Recursive flood-fill oracle (iterative stack to be safe).
    fn flood_fill_partition(img: &BinaryImage, conn: Connectivity) -> Vec<u32> {
        let (w, h) = (img.width, img.height);
        let mut labels = vec![0u32; w * h];
        let mut next = 1u32;
        for sy in 0..h {
            for sx in 0..w {
                if !img.get(sx, sy) || labels[sy * w + sx] != 0 {
                    continue;
                }
                let mut stack = vec![(sx, sy)];
                labels[sy * w + sx] = next;
                while let Some((x, y)) = stack.pop() {
                    let mut deltas: Vec<(isize, isize)> =
                        vec![(-1, 0), (1, 0), (0, -1), (0, 1)];
                    if conn == Connectivity::Eight {
                        deltas.extend([(-1, -1), (1, -1), (-1, 1), (1, 1)]);
                    }
                    for (dx, dy) in deltas {
                        let nx = x as isize + dx;
                        let ny = y as isize + dy;
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if img.get(nx, ny) && labels[ny * w + nx] == 0 {
                            labels[ny * w + nx] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
                next += 1;
            }
        }
        labels
    }

    fn same_partition(a: &[u32], b: &[u32]) -> bool {
        // label values may differ; require identical grouping
        use std::collections::HashMap;
        let mut fwd: HashMap<u32, u32> = HashMap::new();
        let mut rev: HashMap<u32, u32> = HashMap::new();
        for (&x, &y) in a.iter().zip(b.iter()) {
            if (x == 0) != (y == 0) {
                return false;
            }
            if x == 0 {
                continue;
            }
            if *fwd.entry(x).or_insert(y) != y || *rev.entry(y).or_insert(x) != x {
                return false;
            }
        }
        true
    }

    #[test]
    fn cc_empty_image() {
        let img = BinaryImage::filled(5, 5, false);
        let (_, comps) = connected_components(&img, Connectivity::Eight);
        assert!(comps.is_empty());
    }

    #[test]
    fn cc_two_squares() {
        let img = img_from_rows(&[
            "###....###",
            "###....###",
            "###....###",
        ]);
        let (_, comps) = connected_components(&img, Connectivity::Four);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].bbox, BBox::new(0, 0, 3, 3));
        assert_eq!(comps[1].bbox, BBox::new(7, 0, 3, 3));
        assert_eq!(comps[0].area, 9);
    }

    #[test]
    fn cc_matches_flood_fill_oracle_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            for _ in 0..100 {
                let mut img = BinaryImage::filled(32, 32, false);
                for p in img.data.iter_mut() {
                    *p = rng.gen_bool(0.45);
                }
                let (labels, comps) = connected_components(&img, conn);
                let oracle = flood_fill_partition(&img, conn);
                assert!(same_partition(&labels, &oracle));
                // labels dense from 1
                let max = labels.iter().max().copied().unwrap_or(0);
                assert_eq!(max as usize, comps.len());
            }
        }
    }

    #[test]
    fn cc_diagonal_connectivity_difference() {
        let img = img_from_rows(&["#.", ".#"]);
        let (_, c4) = connected_components(&img, Connectivity::Four);
        let (_, c8) = connected_components(&img, Connectivity::Eight);
        assert_eq!(c4.len(), 2);
        assert_eq!(c8.len(), 1);
    }

    fn draw_frame(img: &mut BinaryImage, b: BBox, stroke: usize) {
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                let on_border = x < b.x + stroke
                    || x >= b.x + b.w - stroke
                    || y < b.y + stroke
                    || y >= b.y + b.h - stroke;
                if on_border {
                    img.set(x, y, true);
                }
            }
        }
    }

    fn params(min: usize) -> SegmentationParams {
        SegmentationParams {
            min_w: min,
            min_h: min,
            max_frac: 0.9,
            threshold: Threshold::Fixed(128),
            invert: true,
            rect_tol: 0.25,
            connectivity: Connectivity::Eight,
        }
    }

    #[test]
    fn tree_single_frame() {
        let mut img = BinaryImage::filled(60, 60, false);
        draw_frame(&mut img, BBox::new(5, 5, 40, 30), 2);
        let (nodes, roots) = build_region_tree(&img, &params(8));
        assert_eq!(roots.len(), 1);
        assert_eq!(nodes[roots[0]].children.len(), 0);
        assert_eq!(nodes[roots[0]].bbox, BBox::new(5, 5, 40, 30));
    }

    #[test]
    fn tree_nested_frames() {
        let mut img = BinaryImage::filled(80, 80, false);
        let outer = BBox::new(4, 4, 60, 60);
        let inner = BBox::new(14, 14, 30, 30);
        draw_frame(&mut img, outer, 2);
        draw_frame(&mut img, inner, 2);
        let (nodes, roots) = build_region_tree(&img, &params(10));
        assert_eq!(roots.len(), 1);
        let root = &nodes[roots[0]];
        assert_eq!(root.bbox, outer);
        assert_eq!(root.children.len(), 1);
        assert_eq!(nodes[root.children[0]].bbox, inner);
        // containment oracle: exhaustive bbox comparison
        for &c in &root.children {
            assert!(root.bbox.strictly_contains(&nodes[c].bbox));
        }
    }

    #[test]
    fn tree_small_frame_excluded() {
        let mut img = BinaryImage::filled(60, 60, false);
        draw_frame(&mut img, BBox::new(5, 5, 6, 6), 1);
        let (nodes, _) = build_region_tree(&img, &params(10));
        assert!(nodes.is_empty());
    }

    #[test]
    fn diagonal_stroke_rejected_by_rectangularity() {
        let mut img = BinaryImage::filled(60, 60, false);
        for i in 0..40 {
            img.set(5 + i, 5 + i, true);
            img.set(6 + i, 5 + i, true);
        }
        let (nodes, _) = build_region_tree(&img, &params(8));
        assert!(nodes.is_empty());
    }

    #[test]
    fn segment_blank_page_empty() {
        let page = GrayImage::filled(100, 100, 255);
        let out = segment_page(&page, &SegmentationParams::for_page(100));
        assert!(out.is_empty());
    }

    #[test]
    fn segment_max_frac_rule() {
        // page-sized frame, max_frac 0.5 -> dropped
        let mut page = GrayImage::filled(100, 100, 255);
        for y in 0..100 {
            for x in 0..100 {
                if x < 3 || x >= 97 || y < 3 || y >= 97 {
                    page.set(x, y, 0);
                }
            }
        }
        let mut p = SegmentationParams::for_page(100);
        p.max_frac = 0.5;
        assert!(segment_page(&page, &p).is_empty());
        p.max_frac = 1.0;
        assert_eq!(segment_page(&page, &p).len(), 1);
    }

    #[test]
    fn segment_translation_invariance_under_padding() {
        let mut page = GrayImage::filled(80, 80, 255);
        for y in 10..40 {
            for x in 10..60 {
                if x < 12 || x >= 58 || y < 12 || y >= 38 {
                    page.set(x, y, 0);
                }
            }
        }
        let p = params(8);
        let base = segment_page(&page, &p);
        // pad 7 background rows on top, 5 columns on the left
        let mut padded = GrayImage::filled(85, 87, 255);
        for y in 0..80 {
            for x in 0..80 {
                padded.set(x + 5, y + 7, page.get(x, y));
            }
        }
        let shifted = segment_page(&padded, &p);
        assert_eq!(base.len(), shifted.len());
        for ((b1, _), (b2, _)) in base.iter().zip(shifted.iter()) {
            assert_eq!(b2.x, b1.x + 5);
            assert_eq!(b2.y, b1.y + 7);
            assert_eq!((b2.w, b2.h), (b1.w, b1.h));
        }
    }

    #[test]
    fn segment_monotone_in_min_dims() {
        let mut page = GrayImage::filled(120, 120, 255);
        for (b, s) in [
            (BBox::new(5, 5, 50, 30), 2usize),
            (BBox::new(60, 50, 40, 40), 2),
            (BBox::new(10, 70, 20, 20), 2),
        ] {
            for y in b.y..b.y + b.h {
                for x in b.x..b.x + b.w {
                    if x < b.x + s || x >= b.x + b.w - s || y < b.y + s || y >= b.y + b.h - s {
                        page.set(x, y, 0);
                    }
                }
            }
        }
        let mut prev = usize::MAX;
        for min in [5usize, 15, 25, 45] {
            let mut p = params(min);
            p.threshold = Threshold::Auto;
            let n = segment_page(&page, &p).len();
            assert!(n <= prev, "raising min dims added regions");
            prev = n;
        }
    }

    #[test]
    fn segment_no_duplicate_bboxes_and_in_bounds() {
        let mut page = GrayImage::filled(100, 100, 255);
        for y in 20..60 {
            for x in 20..80 {
                if x < 22 || x >= 78 || y < 22 || y >= 58 {
                    page.set(x, y, 0);
                }
            }
        }
        let out = segment_page(&page, &SegmentationParams::for_page(100));
        for (i, (b, crop)) in out.iter().enumerate() {
            assert!(b.x + b.w <= 100 && b.y + b.h <= 100);
            assert_eq!((crop.width, crop.height), (b.w, b.h));
            for (j, (b2, _)) in out.iter().enumerate() {
                if i != j {
                    assert_ne!(b, b2);
                }
            }
        }
    }
}
