//! G-code subset used between path generation and the cell.
//!
//! Supported: `G0`/`G1` linear moves with `X Y Z F` words, `G92` to set the
//! current position, `M106`/`M107` extruder on/off and `M42 P<n> S<0|1>`
//! for the UV light. Arcs are rejected; everything else is skipped with a
//! warning.

use std::fmt;
use std::fmt::Write as _;

use crate::error::GcodeError;
use crate::geometry::Vec3;
use crate::toolpath::{Segment, Toolpath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.line, self.severity, self.message)
    }
}

/// Axis and feed words of a move. Absent words are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MoveWords {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    /// mm/min
    pub feed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GcodeCommand {
    RapidMove(MoveWords),
    LinearMove(MoveWords),
    SetPosition(MoveWords),
    ToolOn,
    ToolOff,
    UvOn,
    UvOff,
    Comment(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceCommand {
    pub line: usize,
    pub command: GcodeCommand,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GcodeProgram {
    pub commands: Vec<SourceCommand>,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl GcodeProgram {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Motion {
    Rapid,
    Linear,
}

struct LineParser<'a> {
    line: usize,
    diags: &'a mut Vec<ParseDiagnostic>,
}

impl LineParser<'_> {
    fn error(&mut self, msg: impl Into<String>) {
        self.diags.push(ParseDiagnostic { line: self.line, severity: Severity::Error, message: msg.into() });
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.diags.push(ParseDiagnostic { line: self.line, severity: Severity::Warning, message: msg.into() });
    }
}

/// Splits a line into code text and comments. Unterminated parentheses
/// comment out the rest of the line.
fn split_comments(raw: &str) -> (String, Vec<String>) {
    let mut code = String::new();
    let mut comments = Vec::new();
    let mut chars = raw.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            ';' => {
                comments.push(raw[i + 1..].trim().to_string());
                break;
            }
            '(' => {
                let rest = &raw[i + 1..];
                match rest.find(')') {
                    Some(end) => {
                        comments.push(rest[..end].trim().to_string());
                        // skip the comment body and the closing paren
                        for _ in 0..rest[..=end].chars().count() {
                            chars.next();
                        }
                    }
                    None => {
                        comments.push(rest.trim().to_string());
                        break;
                    }
                }
            }
            _ => code.push(c),
        }
    }
    (code, comments)
}

/// Tokenizes `G1 X10.5 Y-3` (whitespace between letter and number allowed)
/// into `(letter, number text)` pairs.
fn words(code: &str) -> Vec<(char, String)> {
    let mut out: Vec<(char, String)> = Vec::new();
    let mut cur: Option<(char, String)> = None;
    for c in code.chars() {
        if c.is_ascii_alphabetic() {
            if let Some(w) = cur.take() {
                out.push(w);
            }
            cur = Some((c.to_ascii_uppercase(), String::new()));
        } else if c.is_whitespace() {
            continue;
        } else {
            match cur.as_mut() {
                Some((_, num)) => num.push(c),
                None => cur = Some(('?', c.to_string())),
            }
        }
    }
    if let Some(w) = cur {
        out.push(w);
    }
    out
}

fn parse_number(text: &str) -> Option<f64> {
    if text.is_empty() {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn parse(text: &str) -> GcodeProgram {
    let mut prog = GcodeProgram::default();
    let mut modal = Motion::Linear;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let (code, comments) = split_comments(raw);
        for c in comments {
            prog.commands.push(SourceCommand { line, command: GcodeCommand::Comment(c) });
        }
        let mut p = LineParser { line, diags: &mut prog.diagnostics };
        if let Some(cmd) = parse_code(&code, &mut modal, &mut p) {
            prog.commands.push(SourceCommand { line, command: cmd });
        }
    }
    prog
}

fn parse_code(code: &str, modal: &mut Motion, p: &mut LineParser<'_>) -> Option<GcodeCommand> {
    let ws = words(code);
    if ws.is_empty() {
        return None;
    }
    let mut values = Vec::with_capacity(ws.len());
    for (letter, num) in &ws {
        if *letter == '?' {
            p.error(format!("stray characters '{num}'"));
            return None;
        }
        match parse_number(num) {
            Some(v) => values.push((*letter, v)),
            None => {
                p.error(format!("malformed number '{num}' after {letter}"));
                return None;
            }
        }
    }

    let commands: Vec<(char, f64)> = values.iter().copied().filter(|(l, _)| matches!(l, 'G' | 'M')).collect();
    if commands.len() > 1 {
        p.error("more than one G/M command on a line");
        return None;
    }
    let params: Vec<(char, f64)> = values.iter().copied().filter(|(l, _)| !matches!(l, 'G' | 'M' | 'N')).collect();

    let Some(&(letter, num)) = commands.first() else {
        // Bare words continue the modal motion.
        return move_words(&params, p).map(|w| match modal {
            Motion::Rapid => GcodeCommand::RapidMove(w),
            Motion::Linear => GcodeCommand::LinearMove(w),
        });
    };
    if num.fract() != 0.0 {
        p.warn(format!("unsupported command {letter}{num}, skipped"));
        return None;
    }
    match (letter, num as i64) {
        ('G', 0) => {
            *modal = Motion::Rapid;
            move_words(&params, p).map(GcodeCommand::RapidMove)
        }
        ('G', 1) => {
            *modal = Motion::Linear;
            move_words(&params, p).map(GcodeCommand::LinearMove)
        }
        ('G', 92) => move_words(&params, p).map(GcodeCommand::SetPosition),
        ('G', 2) | ('G', 3) => {
            p.error("arc moves (G2/G3) are not supported; tessellate curves into G1 segments");
            None
        }
        ('M', 106) => Some(GcodeCommand::ToolOn),
        ('M', 107) => Some(GcodeCommand::ToolOff),
        ('M', 42) => {
            let s = params.iter().find(|(l, _)| *l == 'S').map(|(_, v)| *v);
            match s {
                Some(0.0) => Some(GcodeCommand::UvOff),
                Some(1.0) => Some(GcodeCommand::UvOn),
                _ => {
                    p.error("M42 needs S0 or S1");
                    None
                }
            }
        }
        _ => {
            p.warn(format!("unsupported command {letter}{num}, skipped"));
            None
        }
    }
}

fn move_words(params: &[(char, f64)], p: &mut LineParser<'_>) -> Option<MoveWords> {
    let mut w = MoveWords::default();
    for &(letter, v) in params {
        let slot = match letter {
            'X' => &mut w.x,
            'Y' => &mut w.y,
            'Z' => &mut w.z,
            'F' => &mut w.feed,
            other => {
                p.warn(format!("ignored word {other}"));
                continue;
            }
        };
        if slot.is_some() {
            p.error(format!("duplicate {letter} word"));
            return None;
        }
        *slot = Some(v);
    }
    if let Some(f) = w.feed {
        if f <= 0.0 {
            p.error(format!("feed must be positive, got {f}"));
            return None;
        }
    }
    if w == MoveWords::default() {
        p.error("move without axis or feed words");
        return None;
    }
    Some(w)
}

/// Modal defaults for interpreting a program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolpathDefaults {
    /// Speed used before the first feed word, mm/s.
    pub speed: Option<f64>,
    pub layer_height: f64,
}

/// Interprets a parsed program: feed words persist, the extruder flag holds
/// between `M106` and `M107`, rapid moves never extrude.
pub fn to_toolpath(p: &GcodeProgram, defaults: &ToolpathDefaults, start: Vec3) -> Result<Toolpath, GcodeError> {
    let errors = p.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    if errors > 0 {
        return Err(GcodeError::Diagnostics(errors));
    }
    let mut t = Toolpath::new();
    let mut pos = start;
    let mut speed = defaults.speed;
    let mut tool = false;
    let mut uv = false;
    for sc in &p.commands {
        match &sc.command {
            GcodeCommand::RapidMove(w) | GcodeCommand::LinearMove(w) => {
                if let Some(f) = w.feed {
                    speed = Some(f / 60.0);
                }
                let v = speed.ok_or(GcodeError::MissingFeed { line: sc.line })?;
                let target = Vec3::new(w.x.unwrap_or(pos.x), w.y.unwrap_or(pos.y), w.z.unwrap_or(pos.z));
                let extruding = tool && matches!(sc.command, GcodeCommand::LinearMove(_));
                t.push(Segment::new(pos, target, v, extruding, uv));
                pos = target;
            }
            GcodeCommand::SetPosition(w) => {
                pos = Vec3::new(w.x.unwrap_or(pos.x), w.y.unwrap_or(pos.y), w.z.unwrap_or(pos.z));
                if let Some(f) = w.feed {
                    speed = Some(f / 60.0);
                }
            }
            GcodeCommand::ToolOn => tool = true,
            GcodeCommand::ToolOff => tool = false,
            GcodeCommand::UvOn => uv = true,
            GcodeCommand::UvOff => uv = false,
            GcodeCommand::Comment(_) => {}
        }
    }
    t.assign_layers(defaults.layer_height);
    Ok(t)
}

/// UV pin number written in `M42` commands.
pub const UV_PIN: u32 = 4;

fn num(v: f64) -> String {
    // Shortest representation that parses back to the same value.
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Writes a toolpath as g-code. Non-extruding moves with the UV light off are
/// written as rapids; every move carries its own feed word.
pub fn emit(t: &Toolpath) -> String {
    let mut out = String::from("; ramcell toolpath\n");
    let Some(first) = t.segments.first() else {
        return out;
    };
    let _ = writeln!(out, "G92 X{} Y{} Z{}", num(first.start.x), num(first.start.y), num(first.start.z));
    let mut tool = false;
    let mut uv = false;
    let mut pos = first.start;
    for s in &t.segments {
        if s.start != pos {
            let _ = writeln!(out, "G92 X{} Y{} Z{}", num(s.start.x), num(s.start.y), num(s.start.z));
        }
        if s.uv_on != uv {
            uv = s.uv_on;
            let _ = writeln!(out, "M42 P{UV_PIN} S{}", uv as u8);
        }
        if s.extruding != tool {
            tool = s.extruding;
            out.push_str(if tool { "M106\n" } else { "M107\n" });
        }
        let code = if !s.extruding && !s.uv_on { "G0" } else { "G1" };
        let _ = writeln!(out, "{code} X{} Y{} Z{} F{}", num(s.end.x), num(s.end.y), num(s.end.z), num(s.speed * 60.0));
        pos = s.end;
    }
    if tool {
        out.push_str("M107\n");
    }
    if uv {
        let _ = writeln!(out, "M42 P{UV_PIN} S0");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DEFAULTS: ToolpathDefaults = ToolpathDefaults { speed: None, layer_height: 0.85 };

    fn only_errors(p: &GcodeProgram) -> Vec<&ParseDiagnostic> {
        p.diagnostics.iter().filter(|d| d.severity == Severity::Error).collect()
    }

    #[test]
    fn linear_move_with_feed() {
        let p = parse("G1 X90 Y0 F180");
        assert!(p.diagnostics.is_empty());
        let t = to_toolpath(&p, &DEFAULTS, Vec3::ZERO).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.segments[0].end, Vec3::new(90.0, 0.0, 0.0));
        assert!((t.segments[0].speed - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_source() {
        let p = parse("");
        assert!(p.commands.is_empty() && p.diagnostics.is_empty());
    }

    #[test]
    fn duplicate_axis_is_an_error() {
        let p = parse("G1 X1 X2");
        let e = only_errors(&p);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, 1);
        assert!(e[0].message.contains("duplicate"));
        assert!(to_toolpath(&p, &DEFAULTS, Vec3::ZERO).is_err());
    }

    #[test]
    fn malformed_number_reports_line() {
        let p = parse("G1 X1\nG1 X1.2.3 F100\n");
        let e = only_errors(&p);
        assert_eq!(e[0].line, 2);
        assert_eq!(e[0].to_string(), "2:error:malformed number '1.2.3' after X");
    }

    #[test]
    fn arcs_are_rejected_and_unknowns_warned() {
        let p = parse("G2 X1 Y1 I1 J0\nG28\nG1 X1 E0.5 F60");
        assert_eq!(only_errors(&p).len(), 1);
        assert_eq!(p.diagnostics.iter().filter(|d| d.severity == Severity::Warning).count(), 2);
    }

    #[test]
    fn comments_are_kept() {
        let p = parse("G1 X1 F60 ; go\n(setup) M106");
        let comments: Vec<_> = p
            .commands
            .iter()
            .filter_map(|c| match &c.command {
                GcodeCommand::Comment(s) => Some(s.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(comments, ["go", "setup"]);
        assert!(p.commands.iter().any(|c| c.command == GcodeCommand::ToolOn));
    }

    #[test]
    fn rectangle_program() {
        let src = "M106\nG1 X90 Y0 F180\nG1 X90 Y60\nG1 X0 Y60\nG1 X0 Y0\nM107\n";
        let t = to_toolpath(&parse(src), &DEFAULTS, Vec3::ZERO).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.segments.iter().all(|s| s.extruding));
        let len: f64 = t.segments.iter().map(|s| s.length()).sum();
        assert!((len - 300.0).abs() < 1e-12);
    }

    #[test]
    fn tool_off_stops_extrusion() {
        let t = to_toolpath(&parse("M106\nG1 X5 F60\nM107\nG1 X10"), &DEFAULTS, Vec3::ZERO).unwrap();
        assert!(t.segments[0].extruding);
        assert!(!t.segments[1].extruding);
    }

    #[test]
    fn rapid_then_linear() {
        let d = ToolpathDefaults { speed: Some(10.0), layer_height: 0.85 };
        let t = to_toolpath(&parse("M106\nG0 X10\nG1 X20 F240"), &d, Vec3::ZERO).unwrap();
        assert!(!t.segments[0].extruding);
        assert!(t.segments[1].extruding);
        assert!((t.segments[1].speed - 4.0).abs() < 1e-12);
    }

    #[test]
    fn move_without_feed_fails() {
        assert_eq!(to_toolpath(&parse("G1 X10"), &DEFAULTS, Vec3::ZERO), Err(GcodeError::MissingFeed { line: 1 }));
    }

    #[test]
    fn emit_examples() {
        assert_eq!(emit(&Toolpath::new()), "; ramcell toolpath\n");
        let t =
            Toolpath { segments: vec![Segment::new(Vec3::ZERO, Vec3::new(10.0, 0.0, 0.0), 3.0, true, false).unwrap()] };
        assert_eq!(emit(&t), "; ramcell toolpath\nG92 X0 Y0 Z0\nM106\nG1 X10 Y0 Z0 F180\nM107\n");
    }

    fn arb_path() -> impl Strategy<Value = Toolpath> {
        prop::collection::vec(
            (-300.0..300.0f64, -300.0..300.0f64, 0.0..20.0f64, 0.5..10.0f64, any::<bool>(), any::<bool>()),
            1..20,
        )
        .prop_map(|pts| {
            let mut t = Toolpath::new();
            let mut a = Vec3::new(1.5, -2.25, 0.0);
            for (x, y, z, v, e, u) in pts {
                let b = Vec3::new(x, y, z);
                t.push(Segment::new(a, b, v, e, u));
                a = b;
            }
            t
        })
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(t in arb_path()) {
            let back = to_toolpath(&parse(&emit(&t)), &DEFAULTS, Vec3::new(999.0, 0.0, 0.0)).unwrap();
            prop_assert_eq!(back.len(), t.len());
            for (a, b) in t.segments.iter().zip(&back.segments) {
                prop_assert!(a.start.distance(b.start) <= 1e-6);
                prop_assert!(a.end.distance(b.end) <= 1e-6);
                prop_assert!((a.speed - b.speed).abs() <= 1e-6);
                prop_assert_eq!(a.extruding, b.extruding);
                prop_assert_eq!(a.uv_on, b.uv_on);
            }
        }

        #[test]
        fn parser_is_total(src in "\\PC{0,200}") {
            let p = parse(&src);
            for d in &p.diagnostics {
                prop_assert!(d.line >= 1);
            }
        }

        #[test]
        fn feed_is_modal(moves in prop::collection::vec((1.0..100.0f64, prop::option::of(60.0..600.0f64)), 1..15)) {
            let mut src = String::from("G1 F120\n");
            let mut expect = Vec::new();
            let mut feed = 120.0;
            for (i, (dx, f)) in moves.iter().enumerate() {
                let x = (i as f64 + 1.0) * 200.0 + dx;
                match f {
                    Some(f) => { feed = *f; src.push_str(&format!("G1 X{x} F{f}\n")); }
                    None => src.push_str(&format!("G1 X{x}\n")),
                }
                expect.push(feed / 60.0);
            }
            let t = to_toolpath(&parse(&src), &DEFAULTS, Vec3::ZERO).unwrap();
            let speeds: Vec<f64> = t.segments.iter().map(|s| s.speed).collect();
            prop_assert_eq!(speeds, expect);
        }
    }
}
