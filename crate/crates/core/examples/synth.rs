//! Generates a labeled synthetic plot and writes it as an MSPC file.
//!
//! ```text
//! cargo run --release --example synth -- [out.mspc] [seed]
//! ```

use leafwood::pcdata::{is_missing, save_tile, WOOD};
use leafwood::synthforest::{generate_plot, wood_fraction, ForestParams, ReflectancePreset};

fn main() -> leafwood::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synth_plot.mspc".into());
    let seed = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));

    let params = ForestParams {
        plot_radius: 8.0,
        tree_count: 12,
        seed,
        ..ForestParams::default().with_preset(ReflectancePreset::Easy)
    };
    let plot = generate_plot(&params)?;
    println!("{} points, {:.1}% wood", plot.len(), 100.0 * wood_fraction(&plot));

    let labels = plot.labels.as_deref().unwrap_or_default();
    for (c, channel) in plot.reflectance.iter().enumerate() {
        let mut sum = [0.0f64; 2];
        let mut cnt = [0usize; 2];
        let mut missing = 0;
        for (&v, &l) in channel.iter().zip(labels) {
            if is_missing(v) {
                missing += 1;
                continue;
            }
            let k = usize::from(l == WOOD);
            sum[k] += f64::from(v);
            cnt[k] += 1;
        }
        println!(
            "channel {}: foliage mean {:.3}, wood mean {:.3}, {:.1}% missing",
            c + 1,
            sum[0] / cnt[0].max(1) as f64,
            sum[1] / cnt[1].max(1) as f64,
            100.0 * missing as f64 / plot.len() as f64
        );
    }
    save_tile(&plot, &out)?;
    println!("wrote {out}");
    Ok(())
}
