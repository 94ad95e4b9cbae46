//! Maze scenes and their plain-text file format.
//!
//! ```text
//! AMRPG-SCENES 1
//! count <n>
//! scene
//! arena <side>
//! start <x> <y> <heading>
//! goal <x> <y>
//! wall_color <r> <g> <b>
//! box <min_x> <min_y> <max_x> <max_y> <r> <g> <b>    (zero or more)
//! end
//! ```

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const SCENE_MAGIC: &str = "AMRPG-SCENES 1";

/// Axis-aligned colored box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub min: (f64, f64),
    pub max: (f64, f64),
    pub color: [f64; 3],
}

impl Box2 {
    pub fn centered(center: (f64, f64), size: f64, color: [f64; 3]) -> Self {
        let h = size / 2.0;
        Self {
            min: (center.0 - h, center.1 - h),
            max: (center.0 + h, center.1 + h),
            color,
        }
    }

    /// Strict interior test; points on a face are outside.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        self.min.0 < p.0 && p.0 < self.max.0 && self.min.1 < p.1 && p.1 < self.max.1
    }
}

/// One maze: square arena with colored walls, obstacles, start pose and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub arena: f64,
    pub start: (f64, f64),
    pub heading: f64,
    pub goal: (f64, f64),
    pub wall_color: [f64; 3],
    pub obstacles: Vec<Box2>,
}

impl Scene {
    /// Equal up to colors.
    pub fn same_geometry(&self, other: &Scene) -> bool {
        self.arena == other.arena
            && self.start == other.start
            && self.heading == other.heading
            && self.goal == other.goal
            && self.obstacles.len() == other.obstacles.len()
            && self
                .obstacles
                .iter()
                .zip(&other.obstacles)
                .all(|(a, b)| a.min == b.min && a.max == b.max)
    }
}

pub fn write_scenes<W: Write>(scenes: &[Scene], mut w: W) -> Result<()> {
    writeln!(w, "{SCENE_MAGIC}")?;
    writeln!(w, "count {}", scenes.len())?;
    for s in scenes {
        writeln!(w, "scene")?;
        writeln!(w, "arena {}", s.arena)?;
        writeln!(w, "start {} {} {}", s.start.0, s.start.1, s.heading)?;
        writeln!(w, "goal {} {}", s.goal.0, s.goal.1)?;
        let [r, g, b] = s.wall_color;
        writeln!(w, "wall_color {r} {g} {b}")?;
        for o in &s.obstacles {
            let [r, g, b] = o.color;
            writeln!(
                w,
                "box {} {} {} {} {r} {g} {b}",
                o.min.0, o.min.1, o.max.0, o.max.1
            )?;
        }
        writeln!(w, "end")?;
    }
    Ok(())
}

pub fn read_scenes<R: BufRead>(r: R) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    let mut expected = None;
    let mut current: Option<Scene> = None;
    let mut saw_magic = false;

    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let err = |m: String| Error::Parse {
            line: lineno,
            message: m,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_magic {
            if trimmed != SCENE_MAGIC {
                return Err(err(format!("bad magic `{trimmed}`")));
            }
            saw_magic = true;
            continue;
        }
        let mut tok = trimmed.split_whitespace();
        let key = tok.next().unwrap_or_default();
        let nums: Vec<f64> = tok
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        let want = |n: usize| -> Result<()> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(err(format!("`{key}` takes {n} values, got {}", nums.len())))
            }
        };
        match key {
            "count" => {
                want(1)?;
                expected = Some(nums[0] as usize);
            }
            "scene" => {
                if current.is_some() {
                    return Err(err("nested `scene`".into()));
                }
                current = Some(Scene {
                    arena: 0.0,
                    start: (0.0, 0.0),
                    heading: 0.0,
                    goal: (0.0, 0.0),
                    wall_color: [0.0; 3],
                    obstacles: Vec::new(),
                });
            }
            "end" => scenes.push(current.take().ok_or_else(|| err("`end` outside scene".into()))?),
            _ => {
                let s = current
                    .as_mut()
                    .ok_or_else(|| err(format!("`{key}` outside scene")))?;
                match key {
                    "arena" => {
                        want(1)?;
                        s.arena = nums[0];
                    }
                    "start" => {
                        want(3)?;
                        s.start = (nums[0], nums[1]);
                        s.heading = nums[2];
                    }
                    "goal" => {
                        want(2)?;
                        s.goal = (nums[0], nums[1]);
                    }
                    "wall_color" => {
                        want(3)?;
                        s.wall_color = [nums[0], nums[1], nums[2]];
                    }
                    "box" => {
                        want(7)?;
                        s.obstacles.push(Box2 {
                            min: (nums[0], nums[1]),
                            max: (nums[2], nums[3]),
                            color: [nums[4], nums[5], nums[6]],
                        });
                    }
                    _ => return Err(err(format!("unknown key `{key}`"))),
                }
            }
        }
    }
    if current.is_some() {
        return Err(Error::Parse {
            line: 0,
            message: "unterminated scene".into(),
        });
    }
    if let Some(n) = expected {
        if n != scenes.len() {
            return Err(Error::Parse {
                line: 0,
                message: format!("count says {n} scenes, found {}", scenes.len()),
            });
        }
    }
    Ok(scenes)
}
