// SPDX-License-Identifier: MIT OR Apache-2.0

//! Which action units separate error from no-error timesteps?

use ausentinel::eval::{welch_table, welch_ttest};
use ausentinel::simgen::generate;
use ausentinel::stats::welch;
use ausentinel::ScenarioSpec;

fn main() -> ausentinel::Result<()> {
    let r = welch(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0])?;
    println!("t {:?} dof {:?} p {:?}", r.t, r.dof, r.p);

    let corpus = generate(&ScenarioSpec::default())?.records();
    let rows = welch_ttest(&corpus)?;
    print!("{}", welch_table(&rows));
    Ok(())
}
