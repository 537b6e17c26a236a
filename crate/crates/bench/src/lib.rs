//! Fixtures shared by the benchmarks.

use dronewatch::augment::Scenario;
use dronewatch::eval::iou;
use dronewatch::{BBox, ImageBuffer, ScoredBox};

/// Two consecutive frames of the built-in sequence plus its sprite.
pub fn frame_pair(seed: u64) -> (ImageBuffer, ImageBuffer, Scenario) {
    let scenario = Scenario::canonical(seed);
    let (frames, _) = scenario.render().expect("canonical scenario renders");
    (frames[10].clone(), frames[11].clone(), scenario)
}

/// `images` frames with one ground-truth box each and `per_image` detections
/// scattered around it; deterministic.
pub fn detection_set(images: usize, per_image: usize) -> (Vec<Vec<ScoredBox>>, Vec<Vec<BBox>>) {
    let mut dets = Vec::with_capacity(images);
    let mut gt = Vec::with_capacity(images);
    for i in 0..images {
        let g = BBox::new((i % 50) as f64 * 3.0, (i % 17) as f64 * 5.0, 20.0, 20.0);
        let row: Vec<ScoredBox> = (0..per_image)
            .map(|k| {
                let shift = ((i * 7 + k * 13) % 31) as f64 - 15.0;
                let b = BBox::new(g.x + shift, g.y - shift / 2.0, 20.0, 20.0);
                let score = ((i * 31 + k * 17) % 997) as f64 / 997.0 + iou(&b, &g) * 1e-3;
                ScoredBox::detector(b, score)
            })
            .collect();
        dets.push(row);
        gt.push(vec![g]);
    }
    (dets, gt)
}
