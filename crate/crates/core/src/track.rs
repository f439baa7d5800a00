//! Track geometry, surface reflectance, and obstacles.
//!
//! A track is an ordered chain of straight and circular-arc segments forming
//! the line centerline, plus the dark/light reflectance pair and a set of
//! circular obstacles (optionally time-windowed). The track answers the
//! ground-truth queries the rest of the stack needs: signed lateral error,
//! reflectance under a point, and ray distance to the nearest obstacle.
//!
//! Tracks are immutable once built and safe to share across parallel trials.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::geom::{wrap_positive, Vec2, TAU};

/// Winding direction of an arc segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcDir {
    Ccw,
    Cw,
}

#[derive(Debug, Clone, Copy)]
pub enum Segment {
    Straight {
        start: Vec2,
        end: Vec2,
    },
    Arc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
        dir: ArcDir,
    },
}

impl Segment {
    pub fn start_point(&self) -> Vec2 {
        match *self {
            Segment::Straight { start, .. } => start,
            Segment::Arc {
                center,
                radius,
                start_angle,
                ..
            } => center + Vec2::from_angle(start_angle) * radius,
        }
    }

    pub fn end_point(&self) -> Vec2 {
        match *self {
            Segment::Straight { end, .. } => end,
            Segment::Arc {
                center,
                radius,
                end_angle,
                ..
            } => center + Vec2::from_angle(end_angle) * radius,
        }
    }

    /// Swept angle magnitude for arcs, in (0, 2*pi].
    pub fn sweep(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc {
                start_angle,
                end_angle,
                dir,
                ..
            } => {
                let raw = match dir {
                    ArcDir::Ccw => wrap_positive(end_angle - start_angle),
                    ArcDir::Cw => wrap_positive(start_angle - end_angle),
                };
                if raw == 0.0 {
                    TAU
                } else {
                    raw
                }
            }
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { start, end } => start.dist(end),
            Segment::Arc { radius, .. } => radius * self.sweep(),
        }
    }

    /// Closest centerline point to `p` and the unit tangent there.
    pub fn closest(&self, p: Vec2) -> (f64, Vec2, Vec2) {
        match *self {
            Segment::Straight { start, end } => {
                let d = end - start;
                let len = d.norm();
                let t = if len > 0.0 {
                    ((p - start).dot(d) / (len * len)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = start + d * t;
                let tangent = if len > 0.0 { d * (1.0 / len) } else { Vec2::new(1.0, 0.0) };
                (p.dist(q), q, tangent)
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                end_angle,
                dir,
            } => {
                let sweep = self.sweep();
                let phi = (p - center).angle();
                let offset = match dir {
                    ArcDir::Ccw => wrap_positive(phi - start_angle),
                    ArcDir::Cw => wrap_positive(start_angle - phi),
                };
                let tan_at = |angle: f64| {
                    let radial = Vec2::from_angle(angle);
                    match dir {
                        ArcDir::Ccw => radial.perp_left(),
                        ArcDir::Cw => -radial.perp_left(),
                    }
                };
                if offset <= sweep {
                    let q = center + Vec2::from_angle(phi) * radius;
                    (p.dist(q), q, tan_at(phi))
                } else {
                    // Off the angular span: nearest endpoint wins.
                    let a = self.start_point();
                    let b = self.end_point();
                    let (da, db) = (p.dist(a), p.dist(b));
                    if da <= db {
                        (da, a, tan_at(start_angle))
                    } else {
                        (db, b, tan_at(end_angle))
                    }
                }
            }
        }
    }

    /// Point and tangent angle at arclength `s` from the segment start.
    /// `s` must be within [0, length].
    pub fn point_at(&self, s: f64) -> (Vec2, f64) {
        match *self {
            Segment::Straight { start, end } => {
                let d = end - start;
                let len = d.norm();
                let u = if len > 0.0 { d * (1.0 / len) } else { Vec2::new(1.0, 0.0) };
                (start + u * s, u.angle())
            }
            Segment::Arc {
                center,
                radius,
                start_angle,
                dir,
                ..
            } => {
                let dphi = s / radius;
                let phi = match dir {
                    ArcDir::Ccw => start_angle + dphi,
                    ArcDir::Cw => start_angle - dphi,
                };
                let radial = Vec2::from_angle(phi);
                let tangent = match dir {
                    ArcDir::Ccw => radial.perp_left(),
                    ArcDir::Cw => -radial.perp_left(),
                };
                (center + radial * radius, tangent.angle())
            }
        }
    }
}

/// Circular obstacle, optionally present only during a time window.
#[derive(Debug, Clone, Copy)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
    /// `(present_from, present_until)` in seconds; `None` means always present.
    pub window: Option<(f64, f64)>,
}

impl Obstacle {
    pub fn active_at(&self, t: f64) -> bool {
        match self.window {
            None => true,
            Some((t0, t1)) => t >= t0 && t < t1,
        }
    }
}

/// Validated track: centerline chain, reflectances, and obstacles.
#[derive(Debug, Clone)]
pub struct Track {
    segments: Vec<Segment>,
    pub line_width: f64,
    pub reflect_line: f64,
    pub reflect_surface: f64,
    /// Optional linear reflectance blend width beyond the line edge (m).
    /// Zero keeps the hard edge.
    pub edge_blend: f64,
    pub obstacles: Vec<Obstacle>,
}

/// Distance beyond which a pose counts as off-track (m).
pub const OFF_TRACK_DISTANCE: f64 = 1.0;

/// Segment chain continuity tolerance (m).
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Half-width of the ultrasonic beam cone (rad); three rays are cast at
/// 0 and +/- this angle.
pub const BEAM_HALF_ANGLE: f64 = 7.5 * core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq)]
pub enum TrackError {
    Parse { line: usize, col: usize, msg: String },
    Continuity { segment: usize, gap: f64 },
    Invariant { what: String },
}

impl core::fmt::Display for TrackError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrackError::Parse { line, col, msg } => {
                write!(f, "parse error at line {line}, column {col}: {msg}")
            }
            TrackError::Continuity { segment, gap } => write!(
                f,
                "segment {segment} does not start where the previous segment ends (gap {gap:.3e} m)"
            ),
            TrackError::Invariant { what } => write!(f, "invalid track: {what}"),
        }
    }
}

impl core::error::Error for TrackError {}

impl Track {
    /// Build a track from parts, checking every invariant.
    pub fn new(
        segments: Vec<Segment>,
        line_width: f64,
        reflect_line: f64,
        reflect_surface: f64,
        obstacles: Vec<Obstacle>,
    ) -> Result<Track, TrackError> {
        if segments.is_empty() {
            return Err(TrackError::Invariant {
                what: String::from("track has no segments"),
            });
        }
        let width_ok = line_width.is_finite() && line_width > 0.0;
        if !width_ok {
            return Err(TrackError::Invariant {
                what: format!("line_width must be positive, got {line_width}"),
            });
        }
        if !(0.0 <= reflect_line && reflect_line < reflect_surface && reflect_surface <= 1.0) {
            return Err(TrackError::Invariant {
                what: format!(
                    "reflectances must satisfy 0 <= line < surface <= 1, got line={reflect_line} surface={reflect_surface}"
                ),
            });
        }
        for (i, seg) in segments.iter().enumerate() {
            if let Segment::Arc { radius, .. } = seg {
                let radius_ok = radius.is_finite() && *radius > 0.0;
                if !radius_ok {
                    return Err(TrackError::Invariant {
                        what: format!("segment {i}: arc radius must be positive"),
                    });
                }
            }
            if i > 0 {
                let gap = segments[i - 1].end_point().dist(seg.start_point());
                if gap > CONTINUITY_TOL {
                    return Err(TrackError::Continuity { segment: i, gap });
                }
            }
        }
        for (i, ob) in obstacles.iter().enumerate() {
            let radius_ok = ob.radius.is_finite() && ob.radius > 0.0;
            if !radius_ok {
                return Err(TrackError::Invariant {
                    what: format!("obstacle {i}: radius must be positive"),
                });
            }
            if let Some((t0, t1)) = ob.window {
                let window_ok = t0 < t1;
                if !window_ok {
                    return Err(TrackError::Invariant {
                        what: format!("obstacle {i}: present_from must precede present_until"),
                    });
                }
            }
        }
        Ok(Track {
            segments,
            line_width,
            reflect_line,
            reflect_surface,
            edge_blend: 0.0,
            obstacles,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn path_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    /// Whether the last segment ends where the first begins.
    pub fn is_closed(&self) -> bool {
        let first = self.segments[0].start_point();
        let last = self.segments[self.segments.len() - 1].end_point();
        first.dist(last) <= CONTINUITY_TOL
    }

    /// Nearest centerline point: (distance, point, unit tangent).
    pub fn closest_point(&self, p: Vec2) -> (f64, Vec2, Vec2) {
        let mut best = (f64::INFINITY, Vec2::ZERO, Vec2::new(1.0, 0.0));
        for seg in &self.segments {
            let c = seg.closest(p);
            if c.0 < best.0 {
                best = c;
            }
        }
        best
    }

    /// Point and tangent angle at arclength `s` along the chain. `s` wraps on
    /// closed tracks and clamps to the ends on open ones.
    pub fn point_at(&self, s: f64) -> (Vec2, f64) {
        let total = self.path_length();
        let mut s = if self.is_closed() {
            let mut m = libm::fmod(s, total);
            if m < 0.0 {
                m += total;
            }
            m
        } else {
            s.clamp(0.0, total)
        };
        for seg in &self.segments {
            let len = seg.length();
            if s <= len {
                return seg.point_at(s);
            }
            s -= len;
        }
        let last = self.segments.last().expect("validated non-empty");
        last.point_at(last.length())
    }

    /// Surface reflectance under a point: the line value inside the half-width
    /// (boundary inclusive), optionally blended linearly over `edge_blend`,
    /// the background value beyond.
    pub fn reflectance_at(&self, p: Vec2) -> f64 {
        let (d, _, _) = self.closest_point(p);
        let half = self.line_width / 2.0;
        if d <= half {
            self.reflect_line
        } else if self.edge_blend > 0.0 && d <= half + self.edge_blend {
            let frac = (d - half) / self.edge_blend;
            self.reflect_line + frac * (self.reflect_surface - self.reflect_line)
        } else {
            self.reflect_surface
        }
    }

    /// Signed lateral error of a reference point in centimeters, positive when
    /// the line lies to the robot's left. `None` marks the pose as off-track
    /// (more than [`OFF_TRACK_DISTANCE`] from the centerline).
    pub fn lateral_error(&self, reference: Vec2, heading: f64) -> Option<f64> {
        let (d, q, _) = self.closest_point(reference);
        if d > OFF_TRACK_DISTANCE {
            return None;
        }
        let left = Vec2::from_angle(heading).perp_left();
        let sign = if (q - reference).dot(left) >= 0.0 { 1.0 } else { -1.0 };
        Some(sign * d * 100.0)
    }

    /// Distance along the heading to the nearest obstacle active at time `t`,
    /// probing a three-ray cone (center and +/- [`BEAM_HALF_ANGLE`]).
    /// `None` when nothing is hit within `max_range`.
    pub fn ray_distance(&self, origin: Vec2, heading: f64, max_range: f64, t: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for da in [-BEAM_HALF_ANGLE, 0.0, BEAM_HALF_ANGLE] {
            let dir = Vec2::from_angle(heading + da);
            for ob in &self.obstacles {
                if !ob.active_at(t) {
                    continue;
                }
                if let Some(s) = ray_circle(origin, dir, ob.center, ob.radius) {
                    if s <= max_range && best.is_none_or(|b| s < b) {
                        best = Some(s);
                    }
                }
            }
        }
        best
    }

    /// Parse the line-oriented track format. One directive per line:
    ///
    /// ```text
    /// line_width 0.02
    /// reflect line 0.08 surface 0.92
    /// straight x0 y0 x1 y1
    /// arc cx cy r a0 a1 ccw|cw
    /// obstacle x y r [t0 t1]
    /// # comment
    /// ```
    ///
    /// Lengths in meters, angles in radians.
    pub fn parse(source: &str) -> Result<Track, TrackError> {
        let mut line_width = 0.02;
        let mut reflect_line = 0.08;
        let mut reflect_surface = 0.92;
        let mut edge_blend = 0.0;
        let mut segments = Vec::new();
        let mut obstacles = Vec::new();

        for (idx, raw) in source.lines().enumerate() {
            let lineno = idx + 1;
            let toks = tokenize(raw);
            if toks.is_empty() {
                continue;
            }
            let (word, col0) = toks[0];
            let err = |col: usize, msg: String| TrackError::Parse {
                line: lineno,
                col,
                msg,
            };
            let num = |i: usize, name: &str| -> Result<f64, TrackError> {
                let (tok, col) = toks
                    .get(i)
                    .copied()
                    .ok_or_else(|| err(raw.len() + 1, format!("missing {name}")))?;
                tok.parse::<f64>()
                    .map_err(|_| err(col, format!("expected a number for {name}, got `{tok}`")))
            };
            match word {
                "line_width" => {
                    line_width = num(1, "line_width")?;
                    expect_len(&toks, 2, raw, lineno)?;
                }
                "blend" => {
                    edge_blend = num(1, "blend width")?;
                    expect_len(&toks, 2, raw, lineno)?;
                }
                "reflect" => {
                    if toks.len() != 5 || toks[1].0 != "line" || toks[3].0 != "surface" {
                        return Err(err(
                            col0,
                            String::from("expected `reflect line <v> surface <v>`"),
                        ));
                    }
                    reflect_line = num(2, "line reflectance")?;
                    reflect_surface = num(4, "surface reflectance")?;
                }
                "straight" => {
                    let x0 = num(1, "x0")?;
                    let y0 = num(2, "y0")?;
                    let x1 = num(3, "x1")?;
                    let y1 = num(4, "y1")?;
                    expect_len(&toks, 5, raw, lineno)?;
                    segments.push(Segment::Straight {
                        start: Vec2::new(x0, y0),
                        end: Vec2::new(x1, y1),
                    });
                }
                "arc" => {
                    let cx = num(1, "cx")?;
                    let cy = num(2, "cy")?;
                    let r = num(3, "radius")?;
                    let a0 = num(4, "start angle")?;
                    let a1 = num(5, "end angle")?;
                    let (dir_tok, dir_col) = toks
                        .get(6)
                        .copied()
                        .ok_or_else(|| err(raw.len() + 1, String::from("missing direction")))?;
                    let dir = match dir_tok {
                        "ccw" => ArcDir::Ccw,
                        "cw" => ArcDir::Cw,
                        other => {
                            return Err(err(
                                dir_col,
                                format!("expected `ccw` or `cw`, got `{other}`"),
                            ))
                        }
                    };
                    expect_len(&toks, 7, raw, lineno)?;
                    segments.push(Segment::Arc {
                        center: Vec2::new(cx, cy),
                        radius: r,
                        start_angle: a0,
                        end_angle: a1,
                        dir,
                    });
                }
                "obstacle" => {
                    let x = num(1, "x")?;
                    let y = num(2, "y")?;
                    let r = num(3, "radius")?;
                    let window = match toks.len() {
                        4 => None,
                        6 => Some((num(4, "t0")?, num(5, "t1")?)),
                        _ => {
                            return Err(err(
                                col0,
                                String::from("expected `obstacle x y r [t0 t1]`"),
                            ))
                        }
                    };
                    obstacles.push(Obstacle {
                        center: Vec2::new(x, y),
                        radius: r,
                        window,
                    });
                }
                other => {
                    return Err(err(col0, format!("unknown directive `{other}`")));
                }
            }
        }

        let mut track = Track::new(segments, line_width, reflect_line, reflect_surface, obstacles)?;
        track.edge_blend = edge_blend;
        Ok(track)
    }
}

fn expect_len(
    toks: &[(&str, usize)],
    want: usize,
    raw: &str,
    lineno: usize,
) -> Result<(), TrackError> {
    if toks.len() > want {
        let (tok, col) = toks[want];
        return Err(TrackError::Parse {
            line: lineno,
            col,
            msg: format!("unexpected trailing token `{tok}`"),
        });
    }
    let _ = raw;
    Ok(())
}

/// Split a directive line into (token, 1-based column) pairs; `#` starts a comment.
fn tokenize(line: &str) -> Vec<(&str, usize)> {
    let line = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((&line[s..i], s + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((&line[s..], s + 1));
    }
    out
}

/// Nearest non-negative ray parameter hitting the circle, if any.
fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = center - origin;
    let proj = oc.dot(dir);
    let closest_sq = oc.dot(oc) - proj * proj;
    let r_sq = radius * radius;
    if closest_sq > r_sq {
        return None;
    }
    let half_chord = libm::sqrt(r_sq - closest_sq);
    let s = proj - half_chord;
    if s >= 0.0 {
        Some(s)
    } else if proj + half_chord >= 0.0 {
        // Origin inside the circle: contact at zero range.
        Some(0.0)
    } else {
        None
    }
}
