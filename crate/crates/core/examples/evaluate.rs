//! Metrics with Hungarian matching: a prediction whose cluster ids are
//! permuted scores the same as the correctly named one.

use leafwood::evalkit::{compute_metrics, compute_metrics_ids, MetricsReport};

fn main() -> leafwood::Result<()> {
    let gt: Vec<u8> = (0..1000).map(|i| u8::from(i % 10 == 0)).collect();
    // 5% of the points flipped
    let pred: Vec<u8> = gt.iter().enumerate().map(|(i, &g)| if i % 20 == 3 { 1 - g } else { g }).collect();
    let swapped: Vec<u8> = pred.iter().map(|&p| 1 - p).collect();
    // three clusters where the ground truth has two classes
    let over: Vec<u32> = pred.iter().enumerate().map(|(i, &p)| if p == 0 && i % 7 == 0 { 2 } else { u32::from(p) }).collect();

    let a = compute_metrics(&gt, &pred, 2)?;
    let b = compute_metrics(&gt, &swapped, 2)?;
    let c = compute_metrics_ids(&gt, &over, 2)?;
    println!(
        "{}",
        MetricsReport::table(&[("named", &a), ("ids swapped", &b), ("three clusters", &c)])
    );
    println!("assignment for three clusters: {:?}", c.assignment);
    println!("{}", c.to_json()?);
    Ok(())
}
