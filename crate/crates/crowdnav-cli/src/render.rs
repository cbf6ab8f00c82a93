//! SVG rendering of logged episodes, one frame per recorded step.
//!
//! World coordinates are drawn y-up by negating y on the way out. Each frame
//! shows the arena, the robot with its sensor ring, the goal star, every
//! human (filled when visible to the robot, outlined red when not), the
//! ground-truth future positions in gray, and the predictor output in orange.

use std::fmt::Write as _;
use std::path::Path;

use crowdnav_sim::{EpisodeMeta, EpisodeRecord, StepRecord};

fn circle(out: &mut String, x: f64, y: f64, r: f64, style: &str) {
    let _ = writeln!(
        out,
        r##"  <circle cx="{x:.4}" cy="{:.4}" r="{r:.4}" {style}/>"##,
        -y
    );
}

fn star_points(cx: f64, cy: f64, outer: f64, inner: f64) -> String {
    let mut points = String::new();
    for k in 0..5 {
        let a_outer = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / 5.0;
        let a_inner = a_outer + std::f64::consts::TAU / 10.0;
        let _ = write!(
            points,
            "{:.4},{:.4} {:.4},{:.4} ",
            cx + outer * a_outer.cos(),
            -(cy + outer * a_outer.sin()),
            cx + inner * a_inner.cos(),
            -(cy + inner * a_inner.sin()),
        );
    }
    points.trim_end().to_string()
}

/// One SVG frame for a recorded step.
pub fn frame_svg(meta: &EpisodeMeta, step: &StepRecord) -> String {
    let w = meta.arena_half_width;
    let pad = 1.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.2} {:.2} {:.2} {:.2}" width="640" height="640">"##,
        -w - pad,
        -w - pad,
        2.0 * (w + pad),
        2.0 * (w + pad)
    );
    let _ = writeln!(
        svg,
        r##"  <rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="#444444" stroke-width="0.04"/>"##,
        -w,
        -w,
        2.0 * w,
        2.0 * w
    );

    let robot = step.robot_position();
    circle(
        &mut svg,
        robot.x,
        robot.y,
        meta.sensor_range,
        r##"fill="none" stroke="#999999" stroke-width="0.03" stroke-dasharray="0.25 0.18""##,
    );

    for futures in &step.gt_futures {
        for p in futures {
            circle(
                &mut svg,
                p[0],
                p[1],
                0.06,
                r##"fill="#aaaaaa" stroke="none""##,
            );
        }
    }
    for predicted in step.preds.iter().flatten() {
        for p in predicted {
            circle(
                &mut svg,
                p[0],
                p[1],
                0.06,
                r##"fill="#ff8c00" stroke="none""##,
            );
        }
    }

    for human in &step.humans {
        let radius = meta.human_radii[human.id];
        let style = if human.visible {
            r##"fill="#4878cf" fill-opacity="0.85" stroke="#1f3b6e" stroke-width="0.03""##
        } else {
            r##"fill="none" stroke="#cc2222" stroke-width="0.04""##
        };
        circle(&mut svg, human.px, human.py, radius, style);
    }

    circle(
        &mut svg,
        robot.x,
        robot.y,
        meta.robot_radius,
        r##"fill="#ffd700" stroke="#b8860b" stroke-width="0.03""##,
    );
    let _ = writeln!(
        svg,
        r##"  <polygon points="{}" fill="#d62728" stroke="none"/>"##,
        star_points(meta.goal.x, meta.goal.y, 0.35, 0.14)
    );
    let _ = writeln!(
        svg,
        r##"  <text x="{:.2}" y="{:.2}" font-size="0.45" fill="#333333">t = {}</text>"##,
        -w + 0.25,
        -(w - 0.6),
        step.t
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes one SVG per step into `out_dir` and returns how many were written.
pub fn render_episode(record: &EpisodeRecord, out_dir: &Path) -> std::io::Result<usize> {
    std::fs::create_dir_all(out_dir)?;
    for step in &record.steps {
        let name = format!("frame_{:04}.svg", step.t);
        std::fs::write(out_dir.join(name), frame_svg(&record.meta, step))?;
    }
    Ok(record.steps.len())
}
