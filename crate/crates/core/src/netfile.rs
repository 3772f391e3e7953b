//! Line-oriented net description language.
//!
//! ```text
//! net cycle2
//! place p1 tau 1 m0 2
//! place p2 tau 2
//! transition q1
//! transition q2
//! arc p1 -> q1
//! arc q1 -> p2 weight 1
//! route p3 conflict q2 0.2 q3 0.3 q4 0.5
//! route p2 priority high q5 low q6
//! ```

use std::fmt;

use num_traits::{One, Zero};

use crate::net::{NetBuilder, NetError, PetriNet, Place, RoutingSpec};
use crate::rational::{format_exact, parse_rat, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.col, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", render(.0))]
pub struct ParseError(pub Vec<Diagnostic>);

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(Diagnostic::to_string).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Place { id: String, tau: Rat, m0: Option<Rat>, w0: Option<Rat> },
    Transition { id: String },
    Arc { src: String, dst: String, weight: Option<u64> },
    Conflict { place: String, weights: Vec<(String, Rat)> },
    Priority { place: String, high: String, low: String },
}

#[derive(Debug, Clone)]
pub struct NetDocument {
    pub name: String,
    pub statements: Vec<Statement>,
    pub spans: Vec<Span>,
}

/// Spans are positional bookkeeping and do not take part in equality.
impl PartialEq for NetDocument {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.statements == other.statements
    }
}

impl Eq for NetDocument {}

struct Token<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in body.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Token { text: &body[s..i], col: body[..s].chars().count() + 1 });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &body[s..], col: body[..s].chars().count() + 1 });
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '-')
        && !s.contains("->")
}

struct Cursor<'a, 'b> {
    tokens: &'b [Token<'a>],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a, 'b> Cursor<'a, 'b> {
    fn here(&self) -> Span {
        let col = self.tokens.get(self.pos).map(|t| t.col).unwrap_or(self.end_col);
        Span { line: self.line, col }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, Diagnostic> {
        Err(Diagnostic { span: self.here(), message: message.into() })
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(|t| t.text)
    }

    fn next_raw(&mut self, what: &str) -> Result<&'a str, Diagnostic> {
        match self.peek() {
            Some(t) => {
                self.pos += 1;
                Ok(t)
            }
            None => self.fail(format!("expected {what}")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        let span = self.here();
        let t = self.next_raw(what)?;
        if is_ident(t) {
            Ok(t.to_string())
        } else {
            Err(Diagnostic { span, message: format!("expected {what}, found `{t}`") })
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), Diagnostic> {
        let span = self.here();
        let t = self.next_raw(&format!("`{kw}`"))?;
        if t == kw {
            Ok(())
        } else {
            Err(Diagnostic { span, message: format!("expected `{kw}`, found `{t}`") })
        }
    }

    fn rational(&mut self, what: &str) -> Result<Rat, Diagnostic> {
        let span = self.here();
        let t = self.next_raw(what)?;
        parse_rat(t).map_err(|e| Diagnostic { span, message: format!("invalid {what} `{t}`: {e}") })
    }

    fn finish(&self) -> Result<(), Diagnostic> {
        match self.peek() {
            None => Ok(()),
            Some(t) => self.fail(format!("unexpected `{t}`")),
        }
    }
}

pub fn parse_document(text: &str) -> Result<NetDocument, ParseError> {
    let mut doc = NetDocument { name: String::new(), statements: Vec::new(), spans: Vec::new() };
    let mut diags = Vec::new();
    let mut named = false;
    for (i, line) in text.lines().enumerate() {
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let mut cur = Cursor { tokens: &tokens, pos: 0, line: i + 1, end_col: line.chars().count() + 1 };
        let span = cur.here();
        match parse_statement(&mut cur) {
            Ok(None) => {
                if named {
                    diags.push(Diagnostic { span, message: "duplicate `net` statement".into() });
                }
                named = true;
                doc.name = tokens[1].text.to_string();
            }
            Ok(Some(stmt)) => {
                doc.statements.push(stmt);
                doc.spans.push(span);
            }
            Err(d) => diags.push(d),
        }
    }
    if !named && diags.is_empty() {
        diags.push(Diagnostic { span: Span { line: 1, col: 1 }, message: "missing `net NAME` statement".into() });
    }
    if diags.is_empty() {
        Ok(doc)
    } else {
        Err(ParseError(diags))
    }
}

/// `Ok(None)` is the `net NAME` header.
fn parse_statement(cur: &mut Cursor) -> Result<Option<Statement>, Diagnostic> {
    let kw_span = cur.here();
    let stmt = match cur.next_raw("statement")? {
        "net" => {
            cur.ident("net name")?;
            cur.finish()?;
            return Ok(None);
        }
        "place" => {
            let id = cur.ident("place identifier")?;
            cur.keyword("tau")?;
            let tau = cur.rational("holding time")?;
            let (mut m0, mut w0) = (None, None);
            while let Some(key) = cur.peek() {
                let slot = match key {
                    "m0" => &mut m0,
                    "w0" => &mut w0,
                    other => return cur.fail(format!("unexpected `{other}`, expected `m0` or `w0`")),
                };
                if slot.is_some() {
                    return cur.fail(format!("`{key}` given twice"));
                }
                cur.pos += 1;
                *slot = Some(cur.rational(key)?);
            }
            Statement::Place { id, tau, m0, w0 }
        }
        "transition" => Statement::Transition { id: cur.ident("transition identifier")? },
        "arc" => {
            let src = cur.ident("arc source")?;
            cur.keyword("->")?;
            let dst = cur.ident("arc target")?;
            let weight = match cur.peek() {
                Some("weight") => {
                    cur.pos += 1;
                    let span = cur.here();
                    let t = cur.next_raw("arc weight")?;
                    match t.parse::<u64>() {
                        Ok(w) if w > 0 => Some(w),
                        _ => {
                            return Err(Diagnostic {
                                span,
                                message: format!("arc weight must be a positive integer, found `{t}`"),
                            })
                        }
                    }
                }
                _ => None,
            };
            Statement::Arc { src, dst, weight }
        }
        "route" => {
            let place = cur.ident("place identifier")?;
            match cur.next_raw("`conflict` or `priority`")? {
                "conflict" => {
                    let mut weights = Vec::new();
                    let mut sum = Rat::zero();
                    while cur.peek().is_some() {
                        let q = cur.ident("transition identifier")?;
                        let w = cur.rational("conflict weight")?;
                        sum += &w;
                        weights.push((q, w));
                    }
                    if weights.is_empty() {
                        return cur.fail("expected at least one `TRANSITION WEIGHT` pair");
                    }
                    if !sum.is_one() {
                        return Err(Diagnostic {
                            span: kw_span,
                            message: format!("conflict weights must sum to 1 (got {})", format_exact(&sum)),
                        });
                    }
                    Statement::Conflict { place, weights }
                }
                "priority" => {
                    cur.keyword("high")?;
                    let high = cur.ident("transition identifier")?;
                    cur.keyword("low")?;
                    let low = cur.ident("transition identifier")?;
                    Statement::Priority { place, high, low }
                }
                other => {
                    cur.pos -= 1;
                    return cur.fail(format!("unknown routing `{other}`, expected `conflict` or `priority`"));
                }
            }
        }
        other => {
            return Err(Diagnostic { span: kw_span, message: format!("unknown statement `{other}`") });
        }
    };
    cur.finish()?;
    Ok(Some(stmt))
}

impl NetDocument {
    pub fn to_net(&self) -> Result<PetriNet, ParseError> {
        let mut b = NetBuilder::new(self.name.clone());
        for stmt in &self.statements {
            b = match stmt {
                Statement::Place { id, tau, m0, w0 } => b.place_full(Place {
                    id: id.clone(),
                    tau: tau.clone(),
                    m0: m0.clone().unwrap_or_else(Rat::zero),
                    w0: w0.clone().unwrap_or_else(Rat::zero),
                }),
                Statement::Transition { id } => b.transition(id),
                Statement::Arc { src, dst, weight } => b.arc(src, dst, weight.unwrap_or(1)),
                Statement::Conflict { place, weights } => {
                    let ws: Vec<(&str, Rat)> = weights.iter().map(|(q, w)| (q.as_str(), w.clone())).collect();
                    b.conflict(place, &ws)
                }
                Statement::Priority { place, high, low } => b.priority(place, high, low),
            };
        }
        b.build().map_err(|e| ParseError(vec![self.locate(&e)]))
    }

    /// Best-effort position for a semantic error raised while building.
    fn locate(&self, err: &NetError) -> Diagnostic {
        let key = match err {
            NetError::Duplicate(id)
            | NetError::UnknownPlace(id)
            | NetError::UnknownTransition(id)
            | NetError::UnknownNode(id)
            | NetError::NonPositiveTau(id)
            | NetError::NegativeMarking(id)
            | NetError::NonPositiveWeight(id)
            | NetError::WeightSum(id, _)
            | NetError::DuplicateRoute(id)
            | NetError::PriorityPair(id)
            | NetError::ArcEndpoints(id, _) => Some(id.as_str()),
            NetError::ZeroWeight => None,
        };
        let mentions = |s: &Statement| -> bool {
            let Some(k) = key else { return false };
            match s {
                Statement::Place { id, .. } | Statement::Transition { id } => id == k,
                Statement::Arc { src, dst, .. } => src == k || dst == k,
                Statement::Conflict { place, weights } => place == k || weights.iter().any(|(q, _)| q == k),
                Statement::Priority { place, high, low } => place == k || high == k || low == k,
            }
        };
        let idx = match err {
            NetError::Duplicate(_) => self.statements.iter().enumerate().filter(|(_, s)| mentions(s)).nth(1).map(|x| x.0),
            _ => self.statements.iter().position(mentions),
        };
        Diagnostic { span: idx.map(|i| self.spans[i]).unwrap_or_default(), message: err.to_string() }
    }

    pub fn from_net(net: &PetriNet) -> NetDocument {
        let mut statements = Vec::new();
        for p in net.places() {
            statements.push(Statement::Place {
                id: p.id.clone(),
                tau: p.tau.clone(),
                m0: (!p.m0.is_zero()).then(|| p.m0.clone()),
                w0: (!p.w0.is_zero()).then(|| p.w0.clone()),
            });
        }
        for q in net.transitions() {
            statements.push(Statement::Transition { id: q.clone() });
        }
        for (p, q, w, to_transition) in net.arcs() {
            let (pid, qid) = (net.place(p).id.clone(), net.transitions()[q].clone());
            let (src, dst) = if to_transition { (pid, qid) } else { (qid, pid) };
            statements.push(Statement::Arc { src, dst, weight: (w != 1).then_some(w) });
        }
        for p in 0..net.n_places() {
            let place = net.place(p).id.clone();
            match net.routing(p) {
                RoutingSpec::Plain => {}
                RoutingSpec::Conflict(ws) => statements.push(Statement::Conflict {
                    place,
                    weights: ws.iter().map(|(q, w)| (net.transitions()[*q].clone(), w.clone())).collect(),
                }),
                RoutingSpec::Priority { high, low } => statements.push(Statement::Priority {
                    place,
                    high: net.transitions()[*high].clone(),
                    low: net.transitions()[*low].clone(),
                }),
            }
        }
        let spans = vec![Span::default(); statements.len()];
        NetDocument { name: net.name.clone(), statements, spans }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Place { id, tau, m0, w0 } => {
                write!(f, "place {id} tau {}", format_exact(tau))?;
                if let Some(m0) = m0 {
                    write!(f, " m0 {}", format_exact(m0))?;
                }
                if let Some(w0) = w0 {
                    write!(f, " w0 {}", format_exact(w0))?;
                }
                Ok(())
            }
            Statement::Transition { id } => write!(f, "transition {id}"),
            Statement::Arc { src, dst, weight } => {
                write!(f, "arc {src} -> {dst}")?;
                match weight {
                    Some(w) => write!(f, " weight {w}"),
                    None => Ok(()),
                }
            }
            Statement::Conflict { place, weights } => {
                write!(f, "route {place} conflict")?;
                for (q, w) in weights {
                    write!(f, " {q} {}", format_exact(w))?;
                }
                Ok(())
            }
            Statement::Priority { place, high, low } => write!(f, "route {place} priority high {high} low {low}"),
        }
    }
}

impl fmt::Display for NetDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "net {}", self.name)?;
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

pub fn parse_net(text: &str) -> Result<PetriNet, ParseError> {
    parse_document(text)?.to_net()
}

pub fn print_net(net: &PetriNet) -> String {
    NetDocument::from_net(net).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, ratio};

    const CYCLE: &str = "net cycle2\nplace p1 tau 1 m0 2\nplace p2 tau 2\ntransition q1\ntransition q2\n\
                         arc p1 -> q1\narc q1 -> p2\narc p2 -> q2\narc q2 -> p1\n";

    #[test]
    fn parses_cycle() {
        let net = parse_net(CYCLE).unwrap();
        assert_eq!(net.name, "cycle2");
        assert_eq!(net.place(0).m0, rat(2));
        assert_eq!(net.place(1).tau, rat(2));
        assert_eq!(net.pre(0, 0), 1);
        assert_eq!(net.post(0, 1), 1);
    }

    #[test]
    fn decimal_weights_are_exact() {
        let doc = parse_document("net x\nroute p3 conflict q2 0.2 q3 0.3 q4 0.5 # dispatch\n").unwrap();
        assert_eq!(
            doc.statements[0],
            Statement::Conflict {
                place: "p3".into(),
                weights: vec![("q2".into(), ratio(1, 5)), ("q3".into(), ratio(3, 10)), ("q4".into(), ratio(1, 2))],
            }
        );
    }

    #[test]
    fn weight_sum_diagnostic() {
        let err = parse_document("net x\nroute p3 conflict q2 0.4 q3 0.5\n").unwrap_err();
        assert_eq!(err.0[0].span, Span { line: 2, col: 1 });
        assert!(err.0[0].message.starts_with("conflict weights must sum to 1"));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_document("net x\nplace p1 tau abc\narc p1 => q1\nfrobnicate\n").unwrap_err();
        let spans: Vec<Span> = err.0.iter().map(|d| d.span).collect();
        assert_eq!(spans, vec![Span { line: 2, col: 14 }, Span { line: 3, col: 8 }, Span { line: 4, col: 1 }]);
    }

    #[test]
    fn unknown_nodes_are_located() {
        let err = parse_net("net x\nplace p tau 1\ntransition q\narc p -> r\n").unwrap_err();
        assert_eq!(err.0[0].span.line, 4);
    }

    #[test]
    fn round_trip() {
        let doc = parse_document(CYCLE).unwrap();
        assert_eq!(parse_document(&doc.to_string()).unwrap(), doc);
        let net = doc.to_net().unwrap();
        assert_eq!(parse_net(&print_net(&net)).unwrap(), net);
    }
}
