// SPDX-License-Identifier: MIT OR Apache-2.0

//! The second phase on its own: weights in, localized and merged events out.

use ausentinel::detector::detect_weights;
use ausentinel::WindowConfig;

fn show(label: &str, weights: &[f64], cfg: &WindowConfig) {
    println!("{label}");
    for e in detect_weights(weights, cfg).unwrap() {
        println!(
            "  detected at {:>2}, starts at {:>2}, score {:.2}{}",
            e.detected_at,
            e.estimated_start,
            e.score,
            if e.merged { " (merged)" } else { "" }
        );
    }
}

fn main() {
    let cfg = WindowConfig::default();
    let mut w = vec![0.0; 5];
    w.extend([1.0; 6]);
    show("six full weights after five zeros", &w, &cfg);

    show("five full weights never fire", &[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &cfg);

    let mut long = vec![0.0; 3];
    long.extend([0.9; 16]);
    long.extend([0.0; 12]);
    long.extend([0.8; 11]);
    show("a sustained reaction, then a separate one", &long, &cfg);

    show(
        "same trace with a 9.0 threshold",
        &long,
        &WindowConfig {
            threshold: 9.0,
            ..cfg
        },
    );
}
