//! Agent backends that carry out one directive.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use crate::executor::llm::{ChatBackend, ChatMessage, ChatRequest};
use crate::executor::tools::{self, parse_call, run_tool, substitute_refs, CallSite};
use crate::executor::world::ScriptedWorld;
use crate::plan::{Directive, NodeId};
use crate::planner::approx_tokens;

/// What an agent may see and touch while executing.
pub struct ExecEnv<'a> {
    pub world: &'a ScriptedWorld,
    /// Results of finished nodes, for `$ID` substitution.
    pub resolved: &'a BTreeMap<NodeId, String>,
    pub allowed_tools: Vec<String>,
    pub seed: u64,
    /// 1 for the first dispatch of a node.
    pub attempt: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub call: String,
    pub output: String,
    pub ok: bool,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeOutcome {
    pub succeeded: bool,
    /// The result on success, the error otherwise.
    pub output: String,
    pub turns: Vec<Turn>,
    pub wall_ms: u64,
}

impl NodeOutcome {
    pub fn tokens_in(&self) -> u64 {
        self.turns.iter().map(|t| t.tokens_in).sum()
    }
    pub fn tokens_out(&self) -> u64 {
        self.turns.iter().map(|t| t.tokens_out).sum()
    }
}

pub trait AgentBackend: Send + Sync {
    fn execute(&self, directive: &Directive, context: &str, env: &ExecEnv<'_>) -> NodeOutcome;
}

/// Parses, permission-checks, substitutes and runs one tool call.
pub fn run_call_text(text: &str, directive: &Directive, env: &ExecEnv<'_>) -> Result<String, String> {
    let mut call = parse_call(text)?;
    if !env.allowed_tools.iter().any(|t| *t == call.tool) {
        return Err(format!("role `{}` may not use tool `{}`", directive.role, call.tool));
    }
    for a in &mut call.args {
        *a = substitute_refs(a, env.resolved)?;
    }
    run_tool(
        env.world,
        &call,
        CallSite { seed: env.seed, node: directive.node.as_str(), attempt: env.attempt },
    )
}

/// Executes the instruction itself as a single tool call.
pub struct ScriptedAgent;

impl AgentBackend for ScriptedAgent {
    fn execute(&self, directive: &Directive, context: &str, env: &ExecEnv<'_>) -> NodeOutcome {
        let result = run_call_text(&directive.instruction, directive, env);
        let (ok, output) = match result {
            Ok(v) => (true, v),
            Err(e) => (false, e),
        };
        NodeOutcome {
            succeeded: ok,
            turns: vec![Turn {
                call: directive.instruction.clone(),
                tokens_in: approx_tokens(context) + approx_tokens(&directive.instruction),
                tokens_out: approx_tokens(&output),
                output: output.clone(),
                ok,
            }],
            output,
            wall_ms: 0,
        }
    }
}

pub const AGENT_SYSTEM: &str = "You are the {role} agent in a team. Carry out the directive using tools. \
To call a tool reply with one line `CALL tool(args)`; the result comes back as `OBSERVATION: ...`. \
When you know the answer reply `FINAL: <answer>` with the bare answer only.";

/// A chat model that converses in `CALL` / `FINAL` lines.
pub struct LlmAgent {
    pub backend: Arc<dyn ChatBackend>,
    pub model: String,
    pub max_turns: u32,
}

impl LlmAgent {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        LlmAgent { backend, model: model.into(), max_turns: 6 }
    }
}

fn after_marker<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.trim().strip_prefix(marker).map(str::trim))
}

impl AgentBackend for LlmAgent {
    fn execute(&self, directive: &Directive, context: &str, env: &ExecEnv<'_>) -> NodeOutcome {
        let allowed: Vec<&str> = env.allowed_tools.iter().map(String::as_str).collect();
        let docs: String = tools::TOOLS
            .iter()
            .filter(|t| allowed.contains(&t.name))
            .map(|t| format!("- {}: {}\n", t.signature, t.description))
            .collect();
        let mut messages = vec![
            ChatMessage::system(format!("{}\nTools:\n{docs}", AGENT_SYSTEM.replace("{role}", &directive.role))),
            ChatMessage::user(format!("{context}\ndirective: {}", directive.instruction)),
        ];
        let mut turns = Vec::new();
        for _ in 0..self.max_turns {
            let req = ChatRequest { model: self.model.clone(), messages: messages.clone(), temperature: 0.0, max_tokens: 512 };
            let resp = match self.backend.chat(&req) {
                Ok(r) => r,
                Err(e) => {
                    return NodeOutcome { succeeded: false, output: e.to_string(), turns, wall_ms: 0 };
                }
            };
            if let Some(answer) = after_marker(&resp.content, "FINAL:") {
                turns.push(Turn {
                    call: "final".into(),
                    output: answer.to_string(),
                    ok: true,
                    tokens_in: resp.tokens_in,
                    tokens_out: resp.tokens_out,
                });
                return NodeOutcome { succeeded: true, output: answer.to_string(), turns, wall_ms: 0 };
            }
            messages.push(ChatMessage::assistant(resp.content.clone()));
            match after_marker(&resp.content, "CALL") {
                Some(call) => {
                    let (ok, output) = match run_call_text(call, directive, env) {
                        Ok(v) => (true, v),
                        Err(e) => (false, format!("error: {e}")),
                    };
                    messages.push(ChatMessage::user(format!("OBSERVATION: {output}")));
                    turns.push(Turn { call: call.to_string(), output, ok, tokens_in: resp.tokens_in, tokens_out: resp.tokens_out });
                }
                None => {
                    messages.push(ChatMessage::user("Reply with a `CALL tool(args)` line or a `FINAL: answer` line."));
                    turns.push(Turn {
                        call: "none".into(),
                        output: "no call or answer".into(),
                        ok: false,
                        tokens_in: resp.tokens_in,
                        tokens_out: resp.tokens_out,
                    });
                }
            }
        }
        NodeOutcome { succeeded: false, output: format!("no answer within {} turns", self.max_turns), turns, wall_ms: 0 }
    }
}

/// Runs one directive, honouring an injected failure and timing the work.
pub fn execute_directive(
    directive: &Directive,
    context: &str,
    backend: &dyn AgentBackend,
    env: &ExecEnv<'_>,
    forced_failure: bool,
) -> NodeOutcome {
    let start = Instant::now();
    let mut outcome = if forced_failure {
        let output = "injected failure".to_string();
        NodeOutcome {
            succeeded: false,
            turns: vec![Turn {
                call: directive.instruction.clone(),
                tokens_in: approx_tokens(context) + approx_tokens(&directive.instruction),
                tokens_out: approx_tokens(&output),
                output: output.clone(),
                ok: false,
            }],
            output,
            wall_ms: 0,
        }
    } else {
        backend.execute(directive, context, env)
    };
    outcome.wall_ms = start.elapsed().as_millis() as u64;
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::BackendError;
    use crate::executor::llm::ChatResponse;
    use std::sync::Mutex;

    fn world() -> ScriptedWorld {
        let mut w = ScriptedWorld::new();
        w.add_fact("France", "capital", "Paris");
        w
    }

    fn directive(instr: &str) -> Directive {
        Directive { node: "B".into(), instruction: instr.into(), role: "searcher".into(), issued_at_step: 1 }
    }

    fn env<'a>(w: &'a ScriptedWorld, resolved: &'a BTreeMap<NodeId, String>) -> ExecEnv<'a> {
        ExecEnv { world: w, resolved, allowed_tools: tools::tool_names().iter().map(|s| s.to_string()).collect(), seed: 0, attempt: 1 }
    }

    #[test]
    fn scripted_agent_substitutes_and_runs() {
        let w = world();
        let resolved = BTreeMap::from([(NodeId::from("A"), "France".to_string())]);
        let out = ScriptedAgent.execute(&directive("lookup(capital, $A)"), "ctx", &env(&w, &resolved));
        assert!(out.succeeded);
        assert_eq!(out.output, "Paris");
        assert_eq!(out.turns.len(), 1);
        assert_eq!(out.tokens_in(), 1 + approx_tokens("lookup(capital, $A)"));
    }

    #[test]
    fn forbidden_tool_fails() {
        let w = world();
        let resolved = BTreeMap::new();
        let mut e = env(&w, &resolved);
        e.allowed_tools = vec!["calc".into()];
        let out = ScriptedAgent.execute(&directive("lookup(capital, France)"), "", &e);
        assert!(!out.succeeded);
        assert!(out.output.contains("may not use"));
    }

    #[test]
    fn forced_failure_skips_backend() {
        let w = world();
        let resolved = BTreeMap::new();
        let out = execute_directive(&directive("lookup(capital, France)"), "", &ScriptedAgent, &env(&w, &resolved), true);
        assert!(!out.succeeded);
        assert_eq!(out.output, "injected failure");
    }

    struct Script(Mutex<Vec<String>>);
    impl ChatBackend for Script {
        fn chat(&self, _req: &ChatRequest) -> Result<ChatResponse, BackendError> {
            let mut v = self.0.lock().unwrap();
            if v.is_empty() {
                return Err(BackendError::Transport("closed".into()));
            }
            Ok(ChatResponse { content: v.remove(0), tokens_in: 5, tokens_out: 2 })
        }
    }

    #[test]
    fn llm_agent_calls_tool_then_answers() {
        let w = world();
        let resolved = BTreeMap::new();
        let backend = Arc::new(Script(Mutex::new(vec!["CALL lookup(capital, France)".into(), "FINAL: Paris".into()])));
        let out = LlmAgent::new(backend, "m").execute(&directive("find the capital"), "", &env(&w, &resolved));
        assert!(out.succeeded);
        assert_eq!(out.output, "Paris");
        assert_eq!(out.turns[0].output, "Paris");
        assert_eq!(out.tokens_in(), 10);
    }

    #[test]
    fn llm_agent_turn_cap_and_transport_failure() {
        let w = world();
        let resolved = BTreeMap::new();
        let chatter = Arc::new(Script(Mutex::new(vec!["thinking".into(); 10])));
        let out = LlmAgent::new(chatter, "m").execute(&directive("x"), "", &env(&w, &resolved));
        assert!(!out.succeeded);
        assert_eq!(out.turns.len(), 6);
        let dead = Arc::new(Script(Mutex::new(vec![])));
        let out = LlmAgent::new(dead, "m").execute(&directive("x"), "", &env(&w, &resolved));
        assert!(!out.succeeded && out.output.contains("transport"));
    }
}
