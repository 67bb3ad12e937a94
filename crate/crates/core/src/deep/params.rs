//! Flat parameter storage with a named layout.
//!
//! Text checkpoint format, version 1:
//!
//! ```text
//! cq-params 1
//! segments 2
//! segment trunk1.w trunk 4 8
//! segment trunk1.b trunk 1 8
//! values 40
//! 0.125
//! ...
//! ```
//!
//! Segments are listed in storage order with `rows cols`; values follow one
//! per line in shortest round-trip decimal form.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Trunk,
    TruncHeads,
    ShiftHeads,
    QHead,
    Actor,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        Self::Trunk,
        Self::TruncHeads,
        Self::ShiftHeads,
        Self::QHead,
        Self::Actor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Trunk => "trunk",
            Self::TruncHeads => "trunc_heads",
            Self::ShiftHeads => "shift_heads",
            Self::QHead => "q_head",
            Self::Actor => "actor",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Layout(format!("unknown parameter group `{s}`")))
    }
}

/// Per-group scalars, e.g. learning rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates(pub [f64; 5]);

impl GroupRates {
    pub fn uniform(rate: f64) -> Self {
        Self([rate; 5])
    }

    pub fn get(&self, g: ParamGroup) -> f64 {
        self.0[g.index()]
    }

    pub fn with(mut self, g: ParamGroup, rate: f64) -> Self {
        self.0[g.index()] = rate;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub group: ParamGroup,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, contiguous segments covering a parameter vector exactly once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    segments: Vec<Segment>,
    len: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a segment and returns its index.
    pub fn push(&mut self, name: impl Into<String>, group: ParamGroup, rows: usize, cols: usize) -> usize {
        let seg = Segment {
            name: name.into(),
            group,
            offset: self.len,
            rows,
            cols,
        };
        self.len += seg.len();
        self.segments.push(seg);
        self.segments.len() - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// Group label of every entry.
    pub fn group_map(&self) -> Vec<ParamGroup> {
        let mut out = Vec::with_capacity(self.len);
        for s in &self.segments {
            out.extend(std::iter::repeat_n(s.group, s.len()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape {
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segment(&self, index: usize) -> &[f64] {
        &self.values[self.layout.segments[index].range()]
    }

    pub fn segment_mut(&mut self, index: usize) -> &mut [f64] {
        let r = self.layout.segments[index].range();
        &mut self.values[r]
    }

    pub fn fill(&mut self, v: f64) {
        self.values.fill(v);
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    /// Entries belonging to `group`, in storage order.
    pub fn group_values(&self, group: ParamGroup) -> Vec<f64> {
        self.layout
            .segments
            .iter()
            .filter(|s| s.group == group)
            .flat_map(|s| self.values[s.range()].iter().copied())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "cq-params 1");
        let _ = writeln!(out, "segments {}", self.layout.segments.len());
        for s in &self.layout.segments {
            let _ = writeln!(out, "segment {} {} {} {}", s.name, s.group, s.rows, s.cols);
        }
        let _ = writeln!(out, "values {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

        let (no, l) = next("header")?;
        if l != "cq-params 1" {
            return Err(err(no, "expected `cq-params 1`"));
        }
        let (no, l) = next("segment count")?;
        let count: usize = l
            .strip_prefix("segments ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(no, "bad segment count"))?;
        let mut layout = Layout::new();
        for _ in 0..count {
            let (no, l) = next("segment")?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 5 || toks[0] != "segment" {
                return Err(err(no, "bad segment line"));
            }
            let group: ParamGroup = toks[2].parse().map_err(|_| err(no, "bad group"))?;
            let rows: usize = toks[3].parse().map_err(|_| err(no, "bad rows"))?;
            let cols: usize = toks[4].parse().map_err(|_| err(no, "bad cols"))?;
            layout.push(toks[1], group, rows, cols);
        }
        let (no, l) = next("value count")?;
        let n: usize = l
            .strip_prefix("values ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(no, "bad value count"))?;
        if n != layout.len() {
            return Err(err(no, "value count does not match layout"));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, l) = next("value")?;
            values.push(l.parse::<f64>().map_err(|_| err(no, "bad value"))?);
        }
        if let Some((no, l)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(err(no, &format!("trailing content `{l}`")));
        }
        Self::from_values(Arc::new(layout), values)
    }
}

/// `target <- (1 - tau) target + tau online`, elementwise.
pub fn polyak_update(target: &mut ParamVector, online: &ParamVector, tau: f64) -> Result<()> {
    if !target.same_layout(online) {
        return Err(Error::Layout("polyak update between different layouts".into()));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Precondition(format!("tau {tau} not in [0, 1]")));
    }
    if tau == 1.0 {
        target.values.copy_from_slice(&online.values);
        return Ok(());
    }
    // Written as an increment so that equal parameters stay bitwise equal.
    for (t, &o) in target.values.iter_mut().zip(&online.values) {
        *t += tau * (o - *t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> Arc<Layout> {
        let mut l = Layout::new();
        l.push("a.w", ParamGroup::Trunk, 2, 3);
        l.push("a.b", ParamGroup::Trunk, 1, 3);
        l.push("q.w", ParamGroup::QHead, 1, 3);
        Arc::new(l)
    }

    #[test]
    fn layout_partitions_vector() {
        let l = layout();
        assert_eq!(l.len(), 12);
        let mut covered = vec![0; l.len()];
        for s in l.segments() {
            for i in s.range() {
                covered[i] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        let groups = l.group_map();
        assert_eq!(groups.iter().filter(|&&g| g == ParamGroup::QHead).count(), 3);
    }

    #[test]
    fn polyak_examples() {
        let l = layout();
        let online = ParamVector::from_values(l.clone(), vec![1.0; 12]).unwrap();
        let mut target = ParamVector::zeros(l.clone());
        polyak_update(&mut target, &online, 0.005).unwrap();
        assert!(target.values().iter().all(|&v| v == 0.005));
        let before = target.clone();
        polyak_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target, before);
        polyak_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target, online);

        let mut other = Layout::new();
        other.push("x", ParamGroup::Actor, 12, 1);
        let mut wrong = ParamVector::zeros(Arc::new(other));
        assert!(matches!(polyak_update(&mut wrong, &online, 0.5), Err(Error::Layout(_))));
    }

    #[test]
    fn text_round_trip() {
        let l = layout();
        let values: Vec<f64> = (0..12).map(|i| (i as f64).sin() / 3.0).collect();
        let p = ParamVector::from_values(l, values).unwrap();
        let back = ParamVector::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        assert!(ParamVector::from_text("cq-params 2\n").is_err());
        let truncated: String = p.to_text().lines().take(8).collect::<Vec<_>>().join("\n");
        assert!(ParamVector::from_text(&truncated).is_err());
    }

    proptest! {
        #[test]
        fn polyak_idempotent_at_equal_params(vals in prop::collection::vec(-1e3f64..1e3, 12), tau in 0.0f64..=1.0) {
            let p = ParamVector::from_values(layout(), vals).unwrap();
            let mut t = p.clone();
            polyak_update(&mut t, &p, tau).unwrap();
            prop_assert_eq!(t, p);
        }
    }
}
