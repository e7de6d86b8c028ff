//! Tool registry and the interpreter for `name(args)` instructions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::executor::world::ScriptedWorld;
use crate::navigation::fnv1a;
use crate::plan::NodeId;

pub struct ToolSpec {
    pub name: &'static str,
    pub signature: &'static str,
    pub description: &'static str,
    /// Whether arguments are split at top-level commas.
    pub split_args: bool,
}

pub const TOOLS: &[ToolSpec] = &[
    ToolSpec { name: "lookup", signature: "lookup(relation, entity)", description: "value of a relation for an entity", split_args: true },
    ToolSpec { name: "search", signature: "search(query)", description: "free-text search; may return nothing", split_args: false },
    ToolSpec { name: "calc", signature: "calc(expression)", description: "arithmetic with + - * / and parentheses", split_args: false },
    ToolSpec { name: "resolve", signature: "resolve(a, b, ...)", description: "majority answer among candidates, ties to the last", split_args: true },
    ToolSpec { name: "join", signature: "join(a, b, ...)", description: "comma-separated list of the arguments", split_args: true },
    ToolSpec { name: "echo", signature: "echo(text)", description: "returns its argument", split_args: false },
    ToolSpec { name: "note", signature: "note(text)", description: "records a note and returns it", split_args: false },
];

pub fn tool_names() -> Vec<&'static str> {
    TOOLS.iter().map(|t| t.name).collect()
}

pub fn tool_docs() -> String {
    let mut s = String::from("Tools:\n");
    for t in TOOLS {
        let _ = writeln!(s, "- {}: {}", t.signature, t.description);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolCall {
    pub tool: String,
    pub args: Vec<String>,
}

/// Parses `name(args)`. Arguments are raw; references are not substituted.
pub fn parse_call(text: &str) -> Result<ToolCall, String> {
    let text = text.trim();
    let open = text.find('(').ok_or_else(|| format!("not a tool call: `{text}`"))?;
    if !text.ends_with(')') {
        return Err(format!("unterminated tool call: `{text}`"));
    }
    let tool = text[..open].trim().to_string();
    let spec = TOOLS
        .iter()
        .find(|t| t.name == tool)
        .ok_or_else(|| format!("unknown tool `{tool}`"))?;
    let inner = &text[open + 1..text.len() - 1];
    let args = if spec.split_args {
        split_top_level(inner)
    } else {
        vec![inner.trim().to_string()]
    };
    Ok(ToolCall { tool, args })
}

fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() || !out.is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Replaces each `$ID` with the result of node `ID`.
pub fn substitute_refs(arg: &str, resolved: &BTreeMap<NodeId, String>) -> Result<String, String> {
    let mut out = String::with_capacity(arg.len());
    let mut chars = arg.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if c != '$' {
            out.push(c);
            continue;
        }
        let mut id = String::new();
        while let Some(&(_, d)) = chars.peek() {
            if d.is_ascii_alphanumeric() || d == '_' || d == '-' {
                id.push(d);
                chars.next();
            } else {
                break;
            }
        }
        if id.is_empty() {
            out.push('$');
            continue;
        }
        let value = resolved
            .get(&NodeId::new(id.clone()))
            .ok_or_else(|| format!("unresolved reference ${id}"))?;
        out.push_str(value);
    }
    Ok(out)
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// Identity of the calling node, used to vary search results reproducibly.
#[derive(Clone, Copy, Debug)]
pub struct CallSite<'a> {
    pub seed: u64,
    pub node: &'a str,
    pub attempt: u32,
}

/// Runs one parsed call against the world. `Err` means the tool failed.
pub fn run_tool(world: &ScriptedWorld, call: &ToolCall, site: CallSite<'_>) -> Result<String, String> {
    let args: Vec<&str> = call.args.iter().map(|a| unquote(a)).collect();
    match call.tool.as_str() {
        "lookup" => {
            let [relation, entity] = args[..] else {
                return Err(format!("lookup takes 2 arguments, got {}", args.len()));
            };
            world
                .lookup(relation, entity)
                .map(str::to_string)
                .ok_or_else(|| format!("no {relation} known for {entity}"))
        }
        "search" => {
            let query = args.first().copied().unwrap_or("");
            let hits = world.candidates("search", query);
            if hits.is_empty() {
                return Err(format!("no results for `{query}`"));
            }
            let key = format!("{}:{}:{}:{query}", site.seed, site.node, site.attempt);
            Ok(hits[(fnv1a(key.as_bytes()) % hits.len() as u64) as usize].clone())
        }
        "calc" => eval_arith(args.first().copied().unwrap_or("")).map(format_number),
        "resolve" => resolve_majority(&args).ok_or_else(|| "resolve needs at least one candidate".to_string()),
        "join" => Ok(args.join(", ")),
        "echo" | "note" => Ok(args.first().copied().unwrap_or("").to_string()),
        other => Err(format!("unknown tool `{other}`")),
    }
}

/// Most frequent normalized candidate; ties go to the latest argument.
fn resolve_majority(args: &[&str]) -> Option<String> {
    use crate::executor::judge::normalize_answer;
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, a) in args.iter().enumerate() {
        if a.trim().is_empty() {
            continue;
        }
        let e = counts.entry(normalize_answer(a)).or_insert((0, i));
        e.0 += 1;
        e.1 = i;
    }
    counts
        .values()
        .max_by_key(|(count, last)| (*count, *last))
        .map(|(_, last)| args[*last].trim().to_string())
}

/// Integral values print without a fractional part.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn eval_arith(expr: &str) -> Result<f64, String> {
    let tokens: Vec<char> = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let mut p = Arith { t: &tokens, i: 0 };
    let v = p.expr()?;
    if p.i != tokens.len() {
        return Err(format!("unexpected `{}` in expression", tokens[p.i]));
    }
    if !v.is_finite() {
        return Err("arithmetic result is not finite".into());
    }
    Ok(v)
}

struct Arith<'a> {
    t: &'a [char],
    i: usize,
}

impl Arith<'_> {
    fn peek(&self) -> Option<char> {
        self.t.get(self.i).copied()
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut v = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.i += 1;
            let r = self.term()?;
            v = if op == '+' { v + r } else { v - r };
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut v = self.factor()?;
        while let Some(op @ ('*' | '/')) = self.peek() {
            self.i += 1;
            let r = self.factor()?;
            if op == '/' && r == 0.0 {
                return Err("division by zero".into());
            }
            v = if op == '*' { v * r } else { v / r };
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some('-') => {
                self.i += 1;
                Ok(-self.factor()?)
            }
            Some('+') => {
                self.i += 1;
                self.factor()
            }
            Some('(') => {
                self.i += 1;
                let v = self.expr()?;
                if self.peek() != Some(')') {
                    return Err("missing `)`".into());
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.i;
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                    self.i += 1;
                }
                let s: String = self.t[start..self.i].iter().collect();
                s.parse().map_err(|_| format!("bad number `{s}`"))
            }
            Some(c) => Err(format!("unexpected `{c}` in expression")),
            None => Err("unexpected end of expression".into()),
        }
    }
}
