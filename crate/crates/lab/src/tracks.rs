//! Bundled tracks and track resolution.

use linesim_core::track::{Track, TrackError};

pub const COURSE: &str = include_str!("../assets/tracks/course.track");
pub const DEMO: &str = include_str!("../assets/tracks/demo.track");
pub const TUNING: &str = include_str!("../assets/tracks/tuning.track");
pub const STRAIGHT: &str = include_str!("../assets/tracks/straight.track");
pub const CIRCLE: &str = include_str!("../assets/tracks/circle.track");

pub const BUILTIN_NAMES: [&str; 5] = ["course", "demo", "tuning", "straight", "circle"];

#[derive(Debug)]
pub enum TrackLoadError {
    Io(std::io::Error),
    Parse(TrackError),
}

impl std::fmt::Display for TrackLoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrackLoadError::Io(e) => write!(f, "cannot read track file: {e}"),
            TrackLoadError::Parse(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for TrackLoadError {}

/// Source text for a builtin track name, if it is one.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "course" => Some(COURSE),
        "demo" => Some(DEMO),
        "tuning" => Some(TUNING),
        "straight" => Some(STRAIGHT),
        "circle" => Some(CIRCLE),
        _ => None,
    }
}

/// Resolve a track reference: a builtin name or a filesystem path.
pub fn load(reference: &str) -> Result<Track, TrackLoadError> {
    let source = match builtin(reference) {
        Some(text) => text.to_string(),
        None => std::fs::read_to_string(reference).map_err(TrackLoadError::Io)?,
    };
    Track::parse(&source).map_err(TrackLoadError::Parse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_parse() {
        for name in BUILTIN_NAMES {
            let track = load(name).unwrap();
            assert!(track.path_length() > 1.0, "{name}");
        }
    }

    #[test]
    fn course_and_demo_are_closed_loops() {
        assert!(load("course").unwrap().is_closed());
        assert!(load("demo").unwrap().is_closed());
        assert!(!load("straight").unwrap().is_closed());
    }

    #[test]
    fn demo_length_matches_hand_arithmetic() {
        // Straights: 5 + 0.3 + 0.15 + 4.75 + 0.7 = 10.9 m.
        // Arcs: (3 * 0.5 + 2 * 0.3 + 0.15) * pi/2 = 2.25 * pi/2.
        let expect = 10.9 + 2.25 * std::f64::consts::FRAC_PI_2;
        let got = load("demo").unwrap().path_length();
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn course_length_matches_hand_arithmetic() {
        let expect = 4.0 + 2.0 * std::f64::consts::PI * 3.0;
        let got = load("course").unwrap().path_length();
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn missing_path_is_io_error() {
        assert!(matches!(
            load("/nonexistent/track.file"),
            Err(TrackLoadError::Io(_))
        ));
    }
}
