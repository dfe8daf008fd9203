//! Compile constrained English instructions into an [`AdjustmentPlan`].
//!
//! The accepted language is documented as EBNF in `docs/prompt-grammar.md`.
//! In short: one or more clauses joined by `and`, `then` or commas, each a
//! verb (`brighten`, `darken`, `increase`, `decrease`, `warm`, `cool`,
//! `sharpen`, `smooth`) with an optional target and an optional amount
//! (an adverb from [`ADVERB_TABLE`] or `by N%`).
//!
//! Amounts are signed fractions whose effect is a multiplier `1 + f`.
//! Brightening by an adverb intensity `r` gives `+r`; darkening by the same
//! adverb gives `-r / (1 + r)`, so the two verbs cancel exactly. An explicit
//! `by N%` is taken literally in either direction.

use std::fmt::{self, Write as _};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::toolset::{ColorOp, DEFAULT_SHARPEN_RADIUS};

pub const MAX_PROMPT_BYTES: usize = 1024;
/// Allowed range of the compiled brightness ratio.
pub const RATIO_RANGE: (f64, f64) = (-0.9, 4.0);

/// Vague intensity words and the fraction each one stands for.
///
/// This table is the only place vague language is turned into numbers.
pub const ADVERB_TABLE: &[(&str, f64)] = &[
    ("a little", 0.10),
    ("slightly", 0.10),
    ("moderately", 0.30),
    ("somewhat", 0.30),
    ("a lot", 1.00),
    ("strongly", 1.00),
    ("dramatically", 1.50),
];

/// Intensity used when a clause names no amount.
pub const DEFAULT_ADVERB: &str = "moderately";

/// Smoothing radius that `smooth by 0%` would produce.
pub const SMOOTH_BASE_RADIUS: f64 = 1.0;

pub fn adverb_intensity(adverb: &str) -> Option<f64> {
    ADVERB_TABLE
        .iter()
        .find(|(name, _)| *name == adverb)
        .map(|&(_, v)| v)
}

/// Fraction that undoes a boost of `r`: `(1 + r)(1 + inverse(r)) = 1`.
pub fn inverse_fraction(r: f64) -> f64 {
    -r / (1.0 + r)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "phrase", rename_all = "snake_case")]
pub enum TargetSpec {
    WholeImage,
    NamedRegion(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentPlan {
    pub target: TargetSpec,
    pub brightness_ratio: f64,
    pub color_ops: Vec<ColorOp>,
    pub raw_prompt: String,
}

impl AdjustmentPlan {
    /// Equality with a tolerance on every numeric field; `raw_prompt` ignored.
    pub fn approx_eq(&self, other: &AdjustmentPlan, tol: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        self.target == other.target
            && close(self.brightness_ratio, other.brightness_ratio)
            && self.color_ops.len() == other.color_ops.len()
            && self
                .color_ops
                .iter()
                .zip(&other.color_ops)
                .all(|(a, b)| match (a, b) {
                    (ColorOp::Brightness(x), ColorOp::Brightness(y))
                    | (ColorOp::Contrast(x), ColorOp::Contrast(y))
                    | (ColorOp::Saturation(x), ColorOp::Saturation(y))
                    | (ColorOp::WhiteBalance(x), ColorOp::WhiteBalance(y))
                    | (ColorOp::ToneTint(x), ColorOp::ToneTint(y))
                    | (ColorOp::Gamma(x), ColorOp::Gamma(y))
                    | (ColorOp::Smooth(x), ColorOp::Smooth(y)) => close(*x, *y),
                    (
                        ColorOp::Sharpen {
                            amount: a1,
                            radius: r1,
                        },
                        ColorOp::Sharpen {
                            amount: a2,
                            radius: r2,
                        },
                    ) => close(*a1, *a2) && close(*r1, *r2),
                    _ => false,
                })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("empty prompt")]
    Empty,
    #[error("prompt is {0} bytes; limit is {MAX_PROMPT_BYTES}")]
    TooLong(usize),
    #[error("unexpected {found:?} at bytes {}..{}: expected {expected}", span.start, span.end)]
    Syntax {
        span: Range<usize>,
        found: String,
        expected: String,
    },
    #[error("amount {value}% at bytes {}..{} is outside [{min}%, {max}%]", span.start, span.end)]
    Range {
        span: Range<usize>,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("target at bytes {}..{} conflicts with earlier target {previous:?}", span.start, span.end)]
    ConflictingTarget {
        span: Range<usize>,
        previous: String,
    },
    #[error("too many color operations ({0})")]
    TooManyOps(usize),
}

impl PromptError {
    /// Byte span of the offending input, when there is one.
    pub fn span(&self) -> Option<Range<usize>> {
        match self {
            PromptError::Syntax { span, .. }
            | PromptError::Range { span, .. }
            | PromptError::ConflictingTarget { span, .. } => Some(span.clone()),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(f64),
    Percent,
    Comma,
    Period,
    Quoted(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Range<usize>,
}

fn lex(src: &str) -> Result<Vec<Token>, PromptError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = src[i..].chars().next().expect("in bounds");
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let tok = if c.is_ascii_alphabetic() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'-') {
                i += 1;
            }
            Tok::Word(src[start..i].to_ascii_lowercase())
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            Tok::Number(src[start..i].parse().expect("digits parse"))
        } else if c == '\'' {
            let close = src[i + 1..].find('\'').ok_or_else(|| PromptError::Syntax {
                span: start..src.len(),
                found: src[start..].to_string(),
                expected: "closing quote".into(),
            })?;
            let inner = &src[i + 1..i + 1 + close];
            i += close + 2;
            Tok::Quoted(normalize_phrase(inner))
        } else {
            i += c.len_utf8();
            match c {
                '%' => Tok::Percent,
                ',' => Tok::Comma,
                '.' => Tok::Period,
                _ => {
                    return Err(PromptError::Syntax {
                        span: start..i,
                        found: c.to_string(),
                        expected: "a word, number, '%', ',' or '.'".into(),
                    })
                }
            }
        };
        tokens.push(Token {
            tok,
            span: start..i,
        });
    }
    Ok(tokens)
}

fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Parser

const VERBS: &str = "a verb (brighten, darken, increase, decrease, warm, cool, sharpen, smooth)";
const QUALITIES: &str = "a quality (brightness, saturation, contrast, warmth, sharpness)";
const WHOLE_IMAGE_WORDS: &[&str] = &["image", "photo", "picture", "scene", "frame"];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Quality {
    Brightness,
    Saturation,
    Contrast,
    Warmth,
    Sharpness,
    Smoothness,
}

#[derive(Debug, Clone, Copy)]
enum Amount {
    Adverb(f64),
    Percent(f64, usize, usize),
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_word(&self, offset: usize) -> Option<&str> {
        match self.tokens.get(self.pos + offset).map(|t| &t.tok) {
            Some(Tok::Word(w)) => Some(w.as_str()),
            _ => None,
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if self.peek_word(0) == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error_here(&self, expected: &str) -> PromptError {
        match self.peek() {
            Some(t) => PromptError::Syntax {
                span: t.span.clone(),
                found: self.src[t.span.clone()].to_string(),
                expected: expected.to_string(),
            },
            None => PromptError::Syntax {
                span: self.src.len()..self.src.len(),
                found: "end of input".into(),
                expected: expected.to_string(),
            },
        }
    }

    /// Length in tokens of an adverb starting at the cursor, with its value.
    fn adverb_at(&self, offset: usize) -> Option<(usize, f64)> {
        let w0 = self.peek_word(offset)?;
        if w0 == "a" {
            let w1 = self.peek_word(offset + 1)?;
            return adverb_intensity(&format!("a {w1}")).map(|v| (2, v));
        }
        adverb_intensity(w0).map(|v| (1, v))
    }

    fn parse_adverb(&mut self) -> Option<f64> {
        let (len, v) = self.adverb_at(0)?;
        self.pos += len;
        Some(v)
    }

    fn parse_percent(&mut self) -> Result<Option<(f64, Range<usize>)>, PromptError> {
        if !self.eat_word("by") {
            return Ok(None);
        }
        let start = self.tokens[self.pos - 1].span.start;
        let value = match self.peek().map(|t| &t.tok) {
            Some(Tok::Number(v)) => *v,
            _ => return Err(self.error_here("a number after 'by'")),
        };
        self.pos += 1;
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Percent) => self.pos += 1,
            Some(Tok::Word(w)) if w == "percent" => self.pos += 1,
            _ => return Err(self.error_here("'%' or 'percent'")),
        }
        let end = self.tokens[self.pos - 1].span.end;
        Ok(Some((value, start..end)))
    }

    /// Adverb and/or `by N%` in either order; the percentage wins.
    fn parse_amount(&mut self, leading: Option<f64>) -> Result<Option<Amount>, PromptError> {
        let mut adverb = leading;
        let mut percent = None;
        for _ in 0..2 {
            if adverb.is_none() {
                if let Some(v) = self.parse_adverb() {
                    adverb = Some(v);
                    continue;
                }
            }
            if percent.is_none() {
                if let Some(p) = self.parse_percent()? {
                    percent = Some(p);
                    continue;
                }
            }
            break;
        }
        Ok(match (percent, adverb) {
            (Some((v, span)), _) => Some(Amount::Percent(v, span.start, span.end)),
            (None, Some(v)) => Some(Amount::Adverb(v)),
            (None, None) => None,
        })
    }

    fn at_phrase_end(&self) -> bool {
        match self.peek().map(|t| &t.tok) {
            None | Some(Tok::Comma) | Some(Tok::Period) => true,
            Some(Tok::Word(w)) => {
                matches!(w.as_str(), "and" | "then" | "by") || self.adverb_at(0).is_some()
            }
            Some(_) => true,
        }
    }

    fn parse_target(&mut self) -> Result<Option<(TargetSpec, Range<usize>)>, PromptError> {
        let Some(tok) = self.peek().cloned() else {
            return Ok(None);
        };
        let word = match &tok.tok {
            Tok::Word(w) => w.clone(),
            _ => return Ok(None),
        };
        match word.as_str() {
            "it" | "everything" | "image" => {
                self.pos += 1;
                Ok(Some((TargetSpec::WholeImage, tok.span)))
            }
            "region" => {
                self.pos += 1;
                match self.peek().map(|t| t.tok.clone()) {
                    Some(Tok::Quoted(p)) if !p.is_empty() => {
                        let end = self.peek().expect("peeked").span.end;
                        self.pos += 1;
                        Ok(Some((TargetSpec::NamedRegion(p), tok.span.start..end)))
                    }
                    _ => Err(self.error_here("a quoted region name such as 'sky'")),
                }
            }
            "the" => {
                self.pos += 1;
                let mut words = Vec::new();
                let mut end = tok.span.end;
                while !self.at_phrase_end() {
                    match self.peek().map(|t| t.tok.clone()) {
                        Some(Tok::Word(w)) => {
                            end = self.tokens[self.pos].span.end;
                            words.push(w);
                            self.pos += 1;
                        }
                        _ => return Err(self.error_here("a target phrase")),
                    }
                }
                if words.is_empty() {
                    return Err(self.error_here("a target phrase after 'the'"));
                }
                let span = tok.span.start..end;
                let core: Vec<&str> = words
                    .iter()
                    .map(String::as_str)
                    .skip_while(|w| matches!(*w, "whole" | "entire"))
                    .collect();
                if core.len() == 1 && WHOLE_IMAGE_WORDS.contains(&core[0]) {
                    Ok(Some((TargetSpec::WholeImage, span)))
                } else {
                    Ok(Some((TargetSpec::NamedRegion(words.join(" ")), span)))
                }
            }
            _ => Ok(None),
        }
    }

    fn parse_quality(&mut self) -> Result<Quality, PromptError> {
        self.eat_word("the");
        let q = match self.peek_word(0) {
            Some("brightness") => Quality::Brightness,
            Some("saturation") => Quality::Saturation,
            Some("contrast") => Quality::Contrast,
            Some("warmth") => Quality::Warmth,
            Some("sharpness") => Quality::Sharpness,
            _ => return Err(self.error_here(QUALITIES)),
        };
        self.pos += 1;
        Ok(q)
    }

    fn parse_clause(&mut self) -> Result<Clause, PromptError> {
        let start = self.peek().map(|t| t.span.start).unwrap_or(self.src.len());
        let leading = self.parse_adverb();
        let verb = self.peek_word(0).map(str::to_string);
        let (quality, direction, target) = match verb.as_deref() {
            Some("brighten") | Some("darken") | Some("warm") | Some("cool") | Some("sharpen")
            | Some("smooth") => {
                self.pos += 1;
                let (q, d) = match verb.as_deref() {
                    Some("brighten") => (Quality::Brightness, Direction::Up),
                    Some("darken") => (Quality::Brightness, Direction::Down),
                    Some("warm") => (Quality::Warmth, Direction::Up),
                    Some("cool") => (Quality::Warmth, Direction::Down),
                    Some("sharpen") => (Quality::Sharpness, Direction::Up),
                    _ => (Quality::Smoothness, Direction::Up),
                };
                (q, d, self.parse_target()?)
            }
            Some("increase") | Some("decrease") => {
                self.pos += 1;
                let d = if verb.as_deref() == Some("increase") {
                    Direction::Up
                } else {
                    Direction::Down
                };
                let q = self.parse_quality()?;
                let target = if self.eat_word("of") || self.eat_word("in") {
                    match self.parse_target()? {
                        Some(t) => Some(t),
                        None => return Err(self.error_here("a target after 'of'")),
                    }
                } else {
                    None
                };
                (q, d, target)
            }
            _ => return Err(self.error_here(VERBS)),
        };
        let amount = self.parse_amount(leading)?;
        let end = self
            .pos
            .checked_sub(1)
            .map(|p| self.tokens[p].span.end)
            .unwrap_or(start);
        Ok(Clause {
            quality,
            direction,
            target,
            amount,
            span: start..end,
        })
    }

    fn parse_connector(&mut self) -> bool {
        let mut any = false;
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Comma)) {
            self.pos += 1;
            any = true;
        }
        if self.eat_word("and") {
            any = true;
        }
        if self.eat_word("then") {
            any = true;
        }
        any
    }
}

struct Clause {
    quality: Quality,
    direction: Direction,
    target: Option<(TargetSpec, Range<usize>)>,
    amount: Option<Amount>,
    span: Range<usize>,
}

impl Clause {
    /// Signed fraction for this clause.
    fn fraction(&self) -> Result<f64, PromptError> {
        let default = adverb_intensity(DEFAULT_ADVERB).expect("default adverb in table");
        match (self.amount, self.direction) {
            (Some(Amount::Percent(v, s, e)), dir) => {
                let (min, max) = match dir {
                    Direction::Up => (0.0, RATIO_RANGE.1 * 100.0),
                    Direction::Down => (0.0, -RATIO_RANGE.0 * 100.0),
                };
                if !(min..=max).contains(&v) {
                    return Err(PromptError::Range {
                        span: s..e,
                        value: v,
                        min,
                        max,
                    });
                }
                Ok(match dir {
                    Direction::Up => v / 100.0,
                    Direction::Down => -v / 100.0,
                })
            }
            (Some(Amount::Adverb(r)), Direction::Up) => Ok(r),
            (None, Direction::Up) => Ok(default),
            (Some(Amount::Adverb(r)), Direction::Down) => Ok(inverse_fraction(r)),
            (None, Direction::Down) => Ok(inverse_fraction(default)),
        }
    }
}

/// Parse a prompt into a plan.
pub fn parse(prompt: &str) -> Result<AdjustmentPlan, PromptError> {
    if prompt.len() > MAX_PROMPT_BYTES {
        return Err(PromptError::TooLong(prompt.len()));
    }
    if prompt.trim().is_empty() {
        return Err(PromptError::Empty);
    }
    let mut parser = Parser {
        src: prompt,
        tokens: lex(prompt)?,
        pos: 0,
    };

    let mut clauses = vec![parser.parse_clause()?];
    loop {
        if parser.peek().is_none() {
            break;
        }
        if matches!(parser.peek().map(|t| &t.tok), Some(Tok::Period))
            && parser.pos + 1 == parser.tokens.len()
        {
            parser.pos += 1;
            break;
        }
        if !parser.parse_connector() {
            return Err(parser.error_here("'and', ',' or end of prompt"));
        }
        clauses.push(parser.parse_clause()?);
    }

    let mut target: Option<TargetSpec> = None;
    let mut brightness: Option<f64> = None;
    let mut color_ops = Vec::new();
    for clause in &clauses {
        // "it" never conflicts: it stands for whatever the prompt names.
        let explicit = clause
            .target
            .as_ref()
            .filter(|(_, span)| !prompt[span.clone()].eq_ignore_ascii_case("it"));
        if let Some((t, span)) = explicit {
            match &target {
                Some(prev) if prev != t => {
                    return Err(PromptError::ConflictingTarget {
                        span: span.clone(),
                        previous: describe_target(prev),
                    })
                }
                _ => target = Some(t.clone()),
            }
        }
        let f = clause.fraction()?;
        match clause.quality {
            Quality::Brightness => {
                brightness = Some(match brightness {
                    None => f,
                    Some(prev) => (1.0 + prev) * (1.0 + f) - 1.0,
                });
            }
            Quality::Saturation => color_ops.push(ColorOp::Saturation(f)),
            Quality::Contrast => color_ops.push(ColorOp::Contrast(f)),
            Quality::Warmth => color_ops.push(ColorOp::WhiteBalance(f)),
            Quality::Sharpness => color_ops.push(ColorOp::Sharpen {
                amount: f,
                radius: DEFAULT_SHARPEN_RADIUS,
            }),
            Quality::Smoothness => color_ops.push(ColorOp::Smooth(SMOOTH_BASE_RADIUS * (1.0 + f))),
        }
        if let Some(op) = color_ops.last() {
            op.validate().map_err(|_| PromptError::Range {
                span: clause.span.clone(),
                value: f * 100.0,
                min: RATIO_RANGE.0 * 100.0,
                max: RATIO_RANGE.1 * 100.0,
            })?;
        }
    }
    if color_ops.len() > crate::toolset::MAX_COMPOSE_LEN {
        return Err(PromptError::TooManyOps(color_ops.len()));
    }
    let brightness_ratio = brightness.unwrap_or(0.0);
    if !(RATIO_RANGE.0..=RATIO_RANGE.1).contains(&brightness_ratio) {
        return Err(PromptError::Range {
            span: 0..prompt.len(),
            value: brightness_ratio * 100.0,
            min: RATIO_RANGE.0 * 100.0,
            max: RATIO_RANGE.1 * 100.0,
        });
    }
    Ok(AdjustmentPlan {
        target: target.unwrap_or(TargetSpec::WholeImage),
        brightness_ratio,
        color_ops,
        raw_prompt: prompt.to_string(),
    })
}

fn describe_target(t: &TargetSpec) -> String {
    match t {
        TargetSpec::WholeImage => "image".into(),
        TargetSpec::NamedRegion(p) => format!("region '{p}'"),
    }
}

/// Percentage with at most six decimals and no trailing zeros.
fn pct(fraction: f64) -> String {
    let s = format!("{:.6}", fraction.abs() * 100.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Deterministic English rendering of a plan.
///
/// Plans produced by [`parse`] render into sentences that parse back to an
/// equal plan (up to six-decimal percentage rounding). Ops the grammar cannot
/// express render as `apply <op>`.
pub fn explain(plan: &AdjustmentPlan) -> String {
    let target = describe_target(&plan.target);
    let mut clauses: Vec<String> = Vec::new();
    let mut target_used = false;

    if plan.brightness_ratio != 0.0 || plan.color_ops.is_empty() {
        let verb = if plan.brightness_ratio < 0.0 {
            "darken"
        } else {
            "brighten"
        };
        clauses.push(format!(
            "{verb} {target} by {}%",
            pct(plan.brightness_ratio)
        ));
        target_used = true;
    }
    for op in &plan.color_ops {
        let mut s = String::new();
        // `of <target>` for increase/decrease, bare target for the other verbs
        let mut with_target = |s: &mut String, verb: &str, of: bool| {
            s.push_str(verb);
            if !target_used {
                let _ = write!(s, "{}{target}", if of { " of " } else { " " });
                target_used = true;
            }
        };
        match *op {
            ColorOp::Saturation(f) | ColorOp::Contrast(f) => {
                let q = if matches!(op, ColorOp::Saturation(_)) {
                    "saturation"
                } else {
                    "contrast"
                };
                let dir = if f < 0.0 { "decrease" } else { "increase" };
                with_target(&mut s, &format!("{dir} {q}"), true);
                let _ = write!(s, " by {}%", pct(f));
            }
            ColorOp::WhiteBalance(f) => {
                with_target(&mut s, if f < 0.0 { "cool" } else { "warm" }, false);
                let _ = write!(s, " by {}%", pct(f));
            }
            ColorOp::Sharpen { amount, radius } if radius == DEFAULT_SHARPEN_RADIUS => {
                if amount < 0.0 {
                    with_target(&mut s, "decrease sharpness", true);
                } else {
                    with_target(&mut s, "sharpen", false);
                }
                let _ = write!(s, " by {}%", pct(amount));
            }
            ColorOp::Smooth(r) if r >= SMOOTH_BASE_RADIUS => {
                with_target(&mut s, "smooth", false);
                let _ = write!(s, " by {}%", pct(r / SMOOTH_BASE_RADIUS - 1.0));
            }
            other => {
                let _ = write!(s, "apply {other}");
            }
        }
        clauses.push(s);
    }
    clauses.join(" and ")
}

impl fmt::Display for AdjustmentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&explain(self))
    }
}
