use crate::error::{Error, Result};
use crate::raster::{Raster, RasterDescriptor};

/// Per-pixel land-cover class labels in `[0, n_classes)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    width: usize,
    height: usize,
    n_classes: usize,
    labels: Vec<u32>,
}

impl ClassMap {
    pub fn new(width: usize, height: usize, n_classes: usize, labels: Vec<u32>) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "class map needs at least 2 classes, got {n_classes}"
            )));
        }
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {width}x{height} class map",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::InvalidParameter(format!(
                "class label {bad} outside [0, {n_classes})"
            )));
        }
        Ok(ClassMap {
            width,
            height,
            n_classes,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn to_raster(&self) -> Raster {
        labels_to_raster(self.width, self.height, &self.labels)
    }

    /// Reads labels back from a single-band raster. `n_classes` defaults to
    /// `max label + 1` (and at least 2).
    pub fn from_raster(raster: &Raster, n_classes: Option<usize>) -> Result<Self> {
        let labels = raster_to_labels(raster)?;
        let n = n_classes
            .unwrap_or_else(|| (labels.iter().copied().max().unwrap_or(0) as usize + 1).max(2));
        ClassMap::new(raster.width(), raster.height(), n, labels)
    }
}

/// Partition of the pixel grid into objects with contiguous ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectMap {
    width: usize,
    height: usize,
    object_count: usize,
    labels: Vec<u32>,
}

impl ObjectMap {
    /// Wraps labels that already use contiguous ids `[0, count)` with every id present.
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {width}x{height} object map",
                labels.len()
            )));
        }
        let count = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        let mut seen = vec![false; count];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "object id {missing} has no pixels; ids must be contiguous"
            )));
        }
        Ok(ObjectMap {
            width,
            height,
            object_count: count,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn object_count(&self) -> usize {
        self.object_count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Pixel count `p_o` of every object.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.object_count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Pixels of each object in ascending row-major order.
    pub fn members(&self) -> ObjectMembers {
        let sizes = self.sizes();
        let mut offsets = Vec::with_capacity(self.object_count + 1);
        offsets.push(0);
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let mut cursor = offsets[..self.object_count].to_vec();
        let mut pixels = vec![0u32; self.labels.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            let slot = &mut cursor[l as usize];
            pixels[*slot] = i as u32;
            *slot += 1;
        }
        ObjectMembers { offsets, pixels }
    }

    pub fn to_raster(&self) -> Raster {
        labels_to_raster(self.width, self.height, &self.labels)
    }
}

/// Compressed object-to-pixel index.
#[derive(Clone, Debug)]
pub struct ObjectMembers {
    offsets: Vec<usize>,
    pixels: Vec<u32>,
}

impl ObjectMembers {
    pub fn of(&self, object: usize) -> &[u32] {
        &self.pixels[self.offsets[object]..self.offsets[object + 1]]
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn labels_to_raster(width: usize, height: usize, labels: &[u32]) -> Raster {
    let data = labels.iter().map(|&l| l as f32).collect();
    Raster::from_parts_unchecked(RasterDescriptor::new(width, height, 1), data)
}

fn raster_to_labels(raster: &Raster) -> Result<Vec<u32>> {
    if raster.bands() != 1 {
        return Err(Error::InvalidParameter(format!(
            "label raster must have one band, found {}",
            raster.bands()
        )));
    }
    raster
        .data()
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < 16_777_216.0 {
                Ok(v as u32)
            } else {
                Err(Error::InvalidParameter(format!(
                    "label value {v} is not a non-negative integer"
                )))
            }
        })
        .collect()
}

/// Labels 4-connected regions whose pixels compare equal under `same`. Ids are
/// assigned in row-major order of each region's first pixel.
pub(crate) fn connected_regions(
    width: usize,
    height: usize,
    same: impl Fn(usize, usize) -> bool,
) -> Vec<u32> {
    const UNSET: u32 = u32::MAX;
    let mut out = vec![UNSET; width * height];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..width * height {
        if out[start] != UNSET {
            continue;
        }
        out[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (r, c) = (p / width, p % width);
            let mut visit = |q: usize| {
                if out[q] == UNSET && same(p, q) {
                    out[q] = next;
                    stack.push(q);
                }
            };
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < width {
                visit(p + 1);
            }
            if r > 0 {
                visit(p - width);
            }
            if r + 1 < height {
                visit(p + width);
            }
        }
        next += 1;
    }
    out
}

/// Normalizes an external segmentation (for example SAM masks) into an
/// [`ObjectMap`]: labels become contiguous, disconnected regions sharing a
/// label are split, and nodata pixels become single-pixel objects.
pub fn ingest_segmentation(labels: &Raster, fine: &Raster) -> Result<ObjectMap> {
    if labels.bands() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "segmentation raster must have one band, found {}",
            labels.bands()
        )));
    }
    if labels.width() != fine.width() || labels.height() != fine.height() {
        return Err(Error::DimensionMismatch(format!(
            "segmentation {}x{} vs fine image {}x{}",
            labels.width(),
            labels.height(),
            fine.width(),
            fine.height()
        )));
    }
    let values = labels.band(0);
    let desc = labels.descriptor();
    let ids = connected_regions(labels.width(), labels.height(), |p, q| {
        let (a, b) = (values[p], values[q]);
        !desc.is_nodata(a) && !desc.is_nodata(b) && a == b
    });
    ObjectMap::new(labels.width(), labels.height(), ids)
}

/// Sets every pixel's class to the modal class of its object, breaking ties
/// toward the smallest class id.
pub fn refine_classmap(classes: &ClassMap, objects: &ObjectMap) -> Result<ClassMap> {
    if classes.width != objects.width || classes.height != objects.height {
        return Err(Error::DimensionMismatch(format!(
            "class map {}x{} vs object map {}x{}",
            classes.width, classes.height, objects.width, objects.height
        )));
    }
    let nc = classes.n_classes;
    let mut counts = vec![0u32; objects.object_count * nc];
    for (&o, &c) in objects.labels.iter().zip(&classes.labels) {
        counts[o as usize * nc + c as usize] += 1;
    }
    let modes: Vec<u32> = counts
        .chunks(nc)
        .map(|h| {
            let mut best = 0;
            for (c, &n) in h.iter().enumerate() {
                if n > h[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect();
    let labels = objects.labels.iter().map(|&o| modes[o as usize]).collect();
    ClassMap::new(classes.width, classes.height, nc, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label_raster(w: usize, h: usize, v: Vec<f32>, nodata: Option<f32>) -> Raster {
        let mut d = RasterDescriptor::new(w, h, 1);
        d.nodata = nodata;
        Raster::new(d, v).unwrap()
    }

    #[test]
    fn ingest_relabels_contiguously() {
        let fine = Raster::filled(4, 2, 1, 0.1).unwrap();
        let labels = label_raster(4, 2, vec![7., 7., 42., 42., 7., 7., 42., 42.], None);
        let objs = ingest_segmentation(&labels, &fine).unwrap();
        assert_eq!(objs.object_count(), 2);
        assert_eq!(objs.labels(), &[0, 0, 1, 1, 0, 0, 1, 1]);
    }

    #[test]
    fn ingest_splits_disconnected_blobs() {
        let fine = Raster::filled(5, 1, 1, 0.1).unwrap();
        let labels = label_raster(5, 1, vec![3., 3., 9., 3., 3.], None);
        let objs = ingest_segmentation(&labels, &fine).unwrap();
        assert_eq!(objs.object_count(), 3);
        assert_eq!(objs.labels(), &[0, 0, 1, 2, 2]);
    }

    #[test]
    fn ingest_nodata_pixels_become_singletons() {
        let fine = Raster::filled(3, 2, 1, 0.1).unwrap();
        let labels = label_raster(3, 2, vec![-1.0; 6], Some(-1.0));
        let objs = ingest_segmentation(&labels, &fine).unwrap();
        assert_eq!(objs.object_count(), 6);
        assert!(objs.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn ingest_dimension_mismatch() {
        let fine = Raster::filled(3, 3, 1, 0.1).unwrap();
        let labels = label_raster(3, 2, vec![0.0; 6], None);
        assert!(matches!(
            ingest_segmentation(&labels, &fine),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn mode_and_tie_break() {
        let objects = ObjectMap::new(5, 1, vec![0, 0, 0, 1, 1]).unwrap();
        let classes = ClassMap::new(5, 1, 3, vec![1, 1, 2, 1, 0]).unwrap();
        let refined = refine_classmap(&classes, &objects).unwrap();
        assert_eq!(refined.labels(), &[1, 1, 1, 0, 0]);
    }

    #[test]
    fn refine_fixed_point_on_uniform_objects() {
        let objects = ObjectMap::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        let classes = ClassMap::new(4, 1, 2, vec![1, 1, 0, 0]).unwrap();
        assert_eq!(refine_classmap(&classes, &objects).unwrap(), classes);
    }

    #[test]
    fn object_map_rejects_gaps() {
        assert!(ObjectMap::new(3, 1, vec![0, 2, 2]).is_err());
    }

    #[test]
    fn members_are_row_major() {
        let objects = ObjectMap::new(3, 2, vec![1, 0, 1, 0, 1, 1]).unwrap();
        let m = objects.members();
        assert_eq!(m.of(0), &[1, 3]);
        assert_eq!(m.of(1), &[0, 2, 4, 5]);
    }

    proptest! {
        #[test]
        fn refine_idempotent_and_object_uniform(
            objs in proptest::collection::vec(0u32..6, 48),
            cls in proptest::collection::vec(0u32..4, 48),
        ) {
            // compact the object ids so they are contiguous
            let mut remap = std::collections::BTreeMap::new();
            for &o in &objs {
                let n = remap.len() as u32;
                remap.entry(o).or_insert(n);
            }
            let objs: Vec<u32> = objs.iter().map(|o| remap[o]).collect();
            let objects = ObjectMap::new(8, 6, objs).unwrap();
            let classes = ClassMap::new(8, 6, 4, cls).unwrap();
            let once = refine_classmap(&classes, &objects).unwrap();
            let twice = refine_classmap(&once, &objects).unwrap();
            prop_assert_eq!(&once, &twice);
            let members = objects.members();
            for o in 0..objects.object_count() {
                let px = members.of(o);
                let first = once.labels()[px[0] as usize];
                prop_assert!(px.iter().all(|&p| once.labels()[p as usize] == first));
            }
        }
    }
}
