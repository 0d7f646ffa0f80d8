// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two cameras, one face: confidence arbitration and per-timestep
//! aggregation.

use ausentinel::ingest::{arbitrate, assemble_timesteps, write_frames_csv};
use ausentinel::types::AU_COUNT;
use ausentinel::{ArbitrationPolicy, AssemblerConfig, AuFrame, AuVector};

fn frame(source: &str, tick: usize, confidence: f64, level: f64) -> AuFrame {
    AuFrame {
        source_id: source.into(),
        t: tick as f64 / 30.0,
        au: AuVector::new([level; AU_COUNT]).unwrap(),
        occurrences: [level >= 1.0; AU_COUNT],
        confidence,
        valid_face: true,
    }
}

fn main() -> ausentinel::Result<()> {
    let policy = ArbitrationPolicy::default();

    let a = frame("cam0", 0, 0.9, 1.0);
    let b = frame("cam1", 0, 0.7, 3.0);
    let won = arbitrate(Some(&a), Some(&b), &policy).unwrap();
    println!("0.9 vs 0.7 -> {} (AU01 {})", won.source_id, won.au.get(0));

    let tie = arbitrate(Some(&frame("cam1", 0, 0.8, 1.0)), Some(&frame("cam0", 0, 0.8, 2.0)), &policy).unwrap();
    println!("tie at 0.8 -> {}", tie.source_id);

    let lost = arbitrate(Some(&frame("cam0", 0, 0.4, 1.0)), Some(&frame("cam1", 0, 0.5, 1.0)), &policy).unwrap();
    println!("0.4 vs 0.5 -> valid_face {} zero {}", lost.valid_face, lost.au.is_zero());

    // 20 frames per camera: cam1 looks away during the second timestep
    let mut frames = Vec::new();
    for tick in 0..20 {
        frames.push(frame("cam0", tick, 0.85, 0.5 + tick as f64 * 0.1));
        let c1 = if tick >= 10 { 0.3 } else { 0.95 };
        frames.push(frame("cam1", tick, c1, 2.0));
    }
    let (steps, stats) = assemble_timesteps(&frames, AssemblerConfig::new(policy))?;
    for ts in &steps {
        println!(
            "timestep {} [{:.3}, {:.3}) AU01 {:.3} valid {}",
            ts.index,
            ts.t_start,
            ts.t_end,
            ts.au.get(0),
            ts.valid_face
        );
    }
    println!("{stats:?}");

    let mut csv = Vec::new();
    write_frames_csv(&mut csv, &frames[..2])?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
