//! Delimited-text exports of patterns for controllers and plotting.

use std::fmt::Write as _;

use crate::data::types::JointChannel;
use crate::error::Result;
use crate::trajectory::pattern::{sample_pattern, ChannelTrajectory, GaitPattern};

fn header(p: &GaitPattern) -> String {
    format!(
        "# kind={}\n# cycle_time_s={}\n# speed_kmh={}\n# subject_hash={}\n",
        p.kind, p.cycle_time, p.speed, p.subject_hash
    )
}

/// Real-time reference series: `time` then position, velocity and
/// acceleration of every channel.
pub fn pattern_csv(p: &GaitPattern, dt: f64, n_cycles: usize) -> Result<String> {
    let series = sample_pattern(p, dt, n_cycles)?;
    let mut out = header(p);
    out.push_str("time_s");
    for (channel, _) in &series.channels {
        let u = channel.unit();
        let _ = write!(out, ",{channel}_{u},{channel}_vel_{u}_s,{channel}_acc_{u}_s2");
    }
    out.push('\n');
    for (k, t) in series.time.iter().enumerate() {
        let _ = write!(out, "{t}");
        for s in series.channels.values() {
            let _ = write!(out, ",{},{},{}", s[0][k], s[1][k], s[2][k]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Positions of every channel on a grid of `n` points over 0..=100 %.
pub fn plot_data_csv(p: &GaitPattern, n: usize) -> Result<String> {
    let mut out = header(p);
    out.push_str("percent");
    for c in JointChannel::ALL {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    let grids: Vec<Vec<f64>> = JointChannel::ALL
        .iter()
        .map(|&c| p.grid(c, n))
        .collect::<Result<_>>()?;
    for i in 0..n {
        let _ = write!(out, "{}", 100.0 * i as f64 / (n - 1) as f64);
        for g in &grids {
            let _ = write!(out, ",{}", g[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Key-event markers of the spline channels.
pub fn events_csv(p: &GaitPattern) -> String {
    let mut out = header(p);
    out.push_str("channel,detector_id,t_percent,y,ydot,yddot\n");
    for (channel, traj) in &p.channels {
        if let ChannelTrajectory::Spline(s) = traj {
            for e in &s.knots {
                let _ = writeln!(out, "{channel},{},{},{},{},{}", e.detector_id, e.t, e.y, e.ydot, e.yddot);
            }
        }
    }
    out
}
