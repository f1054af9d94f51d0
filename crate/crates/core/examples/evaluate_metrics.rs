//! Moment retrieval and highlight detection metrics on hand-made predictions.

use vcka::metrics::{
    default_iou_thresholds, mean_ap, mean_hit_at_1, recall_at_1, temporal_iou, ScoredWindow,
};

fn main() -> vcka::Result<()> {
    println!(
        "IoU([0,10], [5,15]) = {:.4}",
        temporal_iou((0.0, 10.0), (5.0, 15.0))?
    );

    let preds = vec![
        vec![
            ScoredWindow::new(0.0, 8.0, 0.9),
            ScoredWindow::new(20.0, 30.0, 0.6),
        ],
        vec![
            ScoredWindow::new(40.0, 50.0, 0.8),
            ScoredWindow::new(10.0, 22.0, 0.7),
        ],
    ];
    let gts = vec![vec![(0.0, 10.0)], vec![(10.0, 20.0), (44.0, 52.0)]];

    println!("R1@0.5 = {:.3}", recall_at_1(&preds, &gts, 0.5)?);
    println!("R1@0.7 = {:.3}", recall_at_1(&preds, &gts, 0.7)?);
    let map = mean_ap(&preds, &gts, &default_iou_thresholds())?;
    for (t, ap) in map.thresholds.iter().zip(&map.per_threshold) {
        println!("AP@{t:.2} = {ap:.3}");
    }
    println!("mAP = {:.3}", map.average);

    let saliency = vec![vec![0.1, 0.8, 0.3], vec![0.5, 0.5, 0.2]];
    let labels = vec![vec![0, 4, 2], vec![1, 4, 4]];
    println!("HIT@1 = {:.3}", mean_hit_at_1(&saliency, &labels, 4)?);
    Ok(())
}
