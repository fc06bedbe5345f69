use super::GestureClass;

pub type Point = (f64, f64);

/// One piece of a stroke. Angles are in degrees with `u` to the right and `v`
/// downward, so a positive sweep runs clockwise on screen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    Line { from: Point, to: Point },
    Arc { centre: Point, radius: f64, start_deg: f64, sweep_deg: f64 },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to.0 - from.0).hypot(to.1 - from.1),
            Segment::Arc { radius, sweep_deg, .. } => radius * sweep_deg.abs().to_radians(),
        }
    }

    /// Point at fraction `s` in `[0, 1]` along the segment.
    pub fn point_at(&self, s: f64) -> Point {
        match *self {
            Segment::Line { from, to } => (from.0 + s * (to.0 - from.0), from.1 + s * (to.1 - from.1)),
            Segment::Arc { centre, radius, start_deg, sweep_deg } => {
                let a = (start_deg + s * sweep_deg).to_radians();
                (centre.0 + radius * a.cos(), centre.1 + radius * a.sin())
            }
        }
    }

    pub fn start(&self) -> Point {
        self.point_at(0.0)
    }

    pub fn end(&self) -> Point {
        self.point_at(1.0)
    }
}

/// Canonical single-stroke glyph on the unit pad.
#[derive(Clone, Debug, PartialEq)]
pub struct GesturePath {
    pub class: GestureClass,
    pub segments: Vec<Segment>,
}

impl GesturePath {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn start(&self) -> Point {
        self.segments[0].start()
    }

    pub fn end(&self) -> Point {
        self.segments[self.segments.len() - 1].end()
    }

    /// Stroke endpoints and corners, in drawing order.
    pub fn control_points(&self) -> Vec<Point> {
        let mut pts = vec![self.start()];
        pts.extend(self.segments.iter().map(Segment::end));
        pts
    }

    /// Point at arc-length fraction `s` in `[0, 1]`.
    pub fn point_at(&self, s: f64) -> Point {
        let total = self.length();
        let mut remaining = s.clamp(0.0, 1.0) * total;
        for seg in &self.segments {
            let len = seg.length();
            if remaining <= len {
                return seg.point_at(if len > 0.0 { remaining / len } else { 0.0 });
            }
            remaining -= len;
        }
        self.end()
    }

    /// `n` points evenly spaced in arc length, both ends included.
    pub fn sample(&self, n: usize) -> Vec<Point> {
        match n {
            0 => Vec::new(),
            1 => vec![self.start()],
            _ => (0..n).map(|i| self.point_at(i as f64 / (n - 1) as f64)).collect(),
        }
    }
}

struct Builder {
    class: GestureClass,
    at: Point,
    segments: Vec<Segment>,
}

impl Builder {
    fn new(class: GestureClass, start: Point) -> Self {
        Builder { class, at: start, segments: Vec::new() }
    }

    fn line_to(mut self, to: Point) -> Self {
        self.segments.push(Segment::Line { from: self.at, to });
        self.at = to;
        self
    }

    /// Straight line to where the arc begins, when not already there.
    fn arc(mut self, centre: Point, radius: f64, start_deg: f64, sweep_deg: f64) -> Self {
        let arc = Segment::Arc { centre, radius, start_deg, sweep_deg };
        let s = arc.start();
        if (s.0 - self.at.0).hypot(s.1 - self.at.1) > 1e-9 {
            self = self.line_to(s);
        }
        self.segments.push(arc);
        self.at = arc.end();
        self
    }

    fn build(self) -> GesturePath {
        GesturePath { class: self.class, segments: self.segments }
    }
}

fn polar(centre: Point, radius: f64, deg: f64) -> Point {
    let a = deg.to_radians();
    (centre.0 + radius * a.cos(), centre.1 + radius * a.sin())
}

/// Canonical stroke for each class, drawn in the usual handwriting direction.
pub fn path_for_class(class: GestureClass) -> GesturePath {
    use GestureClass::*;
    match class {
        Three => {
            let c1 = (0.5, 0.32);
            Builder::new(class, polar(c1, 0.18, -150.0))
                .arc(c1, 0.18, -150.0, 240.0)
                .arc((0.5, 0.68), 0.18, -90.0, 240.0)
        }
        Five => Builder::new(class, (0.7, 0.18))
            .line_to((0.36, 0.18))
            .arc((0.5, 0.63), 0.2, -135.0, 270.0),
        I => Builder::new(class, (0.5, 0.15)).line_to((0.5, 0.85)),
        J => Builder::new(class, (0.62, 0.15))
            .line_to((0.62, 0.62))
            .arc((0.45, 0.62), 0.17, 0.0, 180.0),
        L => Builder::new(class, (0.3, 0.15)).line_to((0.3, 0.85)).line_to((0.75, 0.85)),
        M => Builder::new(class, (0.18, 0.85))
            .line_to((0.18, 0.15))
            .line_to((0.5, 0.6))
            .line_to((0.82, 0.15))
            .line_to((0.82, 0.85)),
        O => {
            let c = (0.5, 0.5);
            Builder::new(class, polar(c, 0.33, -90.0)).arc(c, 0.33, -90.0, -350.0)
        }
        S => {
            let c1 = (0.5, 0.325);
            Builder::new(class, polar(c1, 0.175, -30.0))
                .arc(c1, 0.175, -30.0, -240.0)
                .arc((0.5, 0.675), 0.175, -90.0, 240.0)
        }
        V => Builder::new(class, (0.2, 0.15)).line_to((0.5, 0.85)).line_to((0.8, 0.15)),
        W => Builder::new(class, (0.12, 0.15))
            .line_to((0.3, 0.85))
            .line_to((0.5, 0.35))
            .line_to((0.7, 0.85))
            .line_to((0.88, 0.15)),
        Z => Builder::new(class, (0.2, 0.15))
            .line_to((0.8, 0.15))
            .line_to((0.2, 0.85))
            .line_to((0.8, 0.85)),
        Question => {
            let c = (0.5, 0.35);
            Builder::new(class, polar(c, 0.18, -160.0))
                .arc(c, 0.18, -160.0, 250.0)
                .line_to((0.5, 0.8))
        }
    }
    .build()
}
