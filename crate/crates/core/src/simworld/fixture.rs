//! Line-oriented text form of a scenario.
//!
//! ```text
//! # gfmatch scenario v1
//! camera fx fy cx cy width height baseline min_depth
//! config seed n_points depth_min depth_max motion_translation motion_rotation map_sigma pixel_sigma max_pyramid_level pyramid_scale_factor
//! pose r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2
//! point id visible x y z map_x map_y map_z
//! meas point_id level u v [u_right v_right]
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing a written
//! scenario gives back the same bits.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};

use super::{generate_scenario, Scenario, ScenarioConfig, SimMeasurement};

pub const HEADER: &str = "# gfmatch scenario v1";

pub fn write_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let c = &s.config;
    let cam = &c.camera;
    // writing to a String cannot fail
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(
        out,
        "camera {} {} {} {} {} {} {} {}",
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, cam.baseline, cam.min_depth
    );
    let _ = writeln!(
        out,
        "config {} {} {} {} {} {} {} {} {} {}",
        c.seed,
        c.n_points,
        c.depth_min,
        c.depth_max,
        c.motion_translation,
        c.motion_rotation,
        c.map_sigma,
        c.pixel_sigma,
        c.max_pyramid_level,
        c.pyramid_scale_factor
    );
    let r = s.true_pose.rotation();
    let t = s.true_pose.translation();
    let _ = write!(out, "pose");
    for i in 0..3 {
        for j in 0..3 {
            let _ = write!(out, " {}", r[(i, j)]);
        }
    }
    let _ = writeln!(out, " {} {} {}", t.x, t.y, t.z);
    for (i, (p, m)) in s.points_true.iter().zip(&s.points_map).enumerate() {
        let _ = writeln!(
            out,
            "point {i} {} {} {} {} {} {} {}",
            u8::from(s.visible[i]),
            p.x,
            p.y,
            p.z,
            m.x,
            m.y,
            m.z
        );
    }
    for m in &s.measurements {
        let _ = write!(out, "meas {} {} {} {}", m.point, m.level, m.pixel.x, m.pixel.y);
        if let Some(r) = m.right {
            let _ = write!(out, " {} {}", r.x, r.y);
        }
        out.push('\n');
    }
    out
}

struct Fields<'a> {
    line: usize,
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, message: message.into() }
    }

    fn next<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.iter.next().ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse().map_err(|_| self.err(format!("bad {what} `{tok}`")))
    }

    fn rest(&mut self) -> Vec<&'a str> {
        self.iter.by_ref().collect()
    }

    fn finish(&mut self) -> Result<()> {
        match self.iter.next() {
            None => Ok(()),
            Some(tok) => Err(self.err(format!("unexpected trailing field `{tok}`"))),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut camera = None;
    let mut config: Option<ScenarioConfig> = None;
    let mut pose = None;
    let mut points: Vec<(usize, bool, Vector3<f64>, Vector3<f64>)> = Vec::new();
    let mut measurements = Vec::new();
    let mut saw_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            saw_header |= line == HEADER;
            continue;
        }
        let mut f = Fields { line: idx + 1, iter: line.split_whitespace() };
        let kind: String = f.next("record kind")?;
        match kind.as_str() {
            "camera" => {
                let mut vals = [0.0; 8];
                for v in vals.iter_mut() {
                    *v = f.next("camera field")?;
                }
                camera = Some(CameraModel {
                    fx: vals[0],
                    fy: vals[1],
                    cx: vals[2],
                    cy: vals[3],
                    width: vals[4],
                    height: vals[5],
                    baseline: vals[6],
                    min_depth: vals[7],
                });
            }
            "config" => {
                config = Some(ScenarioConfig {
                    seed: f.next("seed")?,
                    n_points: f.next("n_points")?,
                    depth_min: f.next("depth_min")?,
                    depth_max: f.next("depth_max")?,
                    motion_translation: f.next("motion_translation")?,
                    motion_rotation: f.next("motion_rotation")?,
                    map_sigma: f.next("map_sigma")?,
                    pixel_sigma: f.next("pixel_sigma")?,
                    max_pyramid_level: f.next("max_pyramid_level")?,
                    pyramid_scale_factor: f.next("pyramid_scale_factor")?,
                    camera: CameraModel::default(),
                });
            }
            "pose" => {
                let mut vals = [0.0; 12];
                for v in vals.iter_mut() {
                    *v = f.next("pose field")?;
                }
                let r = Matrix3::from_row_slice(&vals[..9]);
                let t = Vector3::new(vals[9], vals[10], vals[11]);
                pose = Some(Pose::new(r, t).map_err(|e| f.err(e.to_string()))?);
            }
            "point" => {
                let id: usize = f.next("point id")?;
                if id != points.len() {
                    return Err(f.err(format!("point id {id} out of order")));
                }
                let visible: u8 = f.next("visible flag")?;
                let mut v = [0.0; 6];
                for x in v.iter_mut() {
                    *x = f.next("point coordinate")?;
                }
                points.push((id, visible == 1, Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])));
            }
            "meas" => {
                let point: usize = f.next("point id")?;
                let level: u32 = f.next("level")?;
                let pixel = Vector2::new(f.next("u")?, f.next("v")?);
                let rest = f.rest();
                let right = match rest.as_slice() {
                    [] => None,
                    [u, v] => {
                        let parse = |s: &str| s.parse::<f64>().map_err(|_| f.err(format!("bad right pixel `{s}`")));
                        Some(Vector2::new(parse(u)?, parse(v)?))
                    }
                    _ => return Err(f.err("right pixel needs two fields")),
                };
                measurements.push(SimMeasurement { point, pixel, level, right });
            }
            other => return Err(f.err(format!("unknown record `{other}`"))),
        }
        f.finish()?;
    }

    let missing = |what: &str| Error::Parse { line: 0, message: format!("missing {what} record") };
    if !saw_header {
        return Err(missing("header"));
    }
    let mut config = config.ok_or_else(|| missing("config"))?;
    config.camera = camera.ok_or_else(|| missing("camera"))?;
    let true_pose = pose.ok_or_else(|| missing("pose"))?;
    if points.len() != config.n_points {
        return Err(Error::Parse {
            line: 0,
            message: format!("expected {} points, found {}", config.n_points, points.len()),
        });
    }
    for m in &measurements {
        if m.point >= points.len() || !points[m.point].1 {
            return Err(Error::Parse { line: 0, message: format!("measurement of invisible point {}", m.point) });
        }
    }
    Ok(Scenario {
        config,
        true_pose,
        visible: points.iter().map(|p| p.1).collect(),
        points_true: points.iter().map(|p| p.2).collect(),
        points_map: points.iter().map(|p| p.3).collect(),
        measurements,
    })
}

/// Parses a fixture, regenerates the scenario from its config, and checks
/// that both agree bit for bit.
pub fn verify_fixture(text: &str) -> Result<Scenario> {
    let parsed = parse_scenario(text)?;
    let regenerated = generate_scenario(&parsed.config)?;
    if parsed != regenerated {
        return Err(Error::InvalidInput(format!(
            "fixture for seed {} does not match the regenerated scenario",
            parsed.config.seed
        )));
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        for cfg in [
            ScenarioConfig::default().with_seed(11),
            ScenarioConfig {
                camera: CameraModel::default().with_baseline(0.12).unwrap(),
                max_pyramid_level: 3,
                seed: 12,
                ..ScenarioConfig::default()
            },
        ] {
            let s = generate_scenario(&cfg).unwrap();
            let text = write_scenario(&s);
            assert_eq!(parse_scenario(&text).unwrap(), s);
            verify_fixture(&text).unwrap();
        }
    }

    #[test]
    fn tampered_fixture_fails_verification() {
        let s = generate_scenario(&ScenarioConfig::default().with_seed(13)).unwrap();
        let text = write_scenario(&s);
        let meas_line = text.lines().position(|l| l.starts_with("meas")).unwrap();
        let tampered: Vec<String> = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                if i == meas_line {
                    let f: Vec<&str> = l.split_whitespace().collect();
                    format!("meas {} {} 1.5 2.5", f[1], f[2])
                } else {
                    l.to_string()
                }
            })
            .collect();
        assert!(verify_fixture(&tampered.join("\n")).is_err());
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_scenario("# gfmatch scenario v1\ncamera 1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_scenario("# gfmatch scenario v1\nbogus 1\n").is_err());
        assert!(parse_scenario("").is_err());
    }
}
