//! Communication graph and the lockstep runtimes that execute the agents.
//!
//! Robot states travel only along graph edges, one message per directed edge
//! per round. A control plane (a barrier with a shared board) carries the
//! "everyone done" flag of each round and the per-path outcomes of each
//! sampled instant; it never carries robot states.
//!
//! [`Runtime::Threaded`] runs one thread per robot; [`Runtime::Sequential`]
//! steps the same agents round-robin on the calling thread. Both produce
//! bit-identical results.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::cost::Predicate;
use crate::expr::RobotId;
use crate::planner::{plan_problem, Agent, Control, PathOutcome, PlanError, PlanOutcome, Problem};

/// Undirected graph: an edge per pair of robots sharing a predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommGraph {
    nodes: Vec<RobotId>,
    edges: BTreeSet<(RobotId, RobotId)>,
}

impl CommGraph {
    pub fn build<'a>(robots: impl IntoIterator<Item = RobotId>, predicates: impl IntoIterator<Item = &'a Predicate>) -> CommGraph {
        let mut nodes: Vec<RobotId> = robots.into_iter().collect();
        nodes.sort();
        nodes.dedup();
        let edges = predicates
            .into_iter()
            .filter(|p| p.is_coupled())
            .map(|p| (p.owners()[0], p.owners()[1]))
            .collect();
        CommGraph { nodes, edges }
    }

    pub fn nodes(&self) -> &[RobotId] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (RobotId, RobotId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: RobotId, b: RobotId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, i: RobotId) -> Vec<RobotId> {
        let mut out: Vec<RobotId> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }
}

/// A robot state sent along an edge.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMessage {
    pub sender: RobotId,
    pub j: usize,
    pub k: usize,
    pub state: Vec<f64>,
}

/// One delivered message. `k` counts descent rounds; the exchange of final
/// states after the last round carries the next `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageRecord {
    pub branch: usize,
    pub j: usize,
    pub k: usize,
    pub sender: RobotId,
    pub receiver: RobotId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Runtime {
    Threaded,
    Sequential,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub runtime: Runtime,
    pub log_messages: bool,
    /// A round that waits longer than this is reported as a protocol error.
    pub round_timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            runtime: Runtime::Threaded,
            log_messages: false,
            round_timeout: Duration::from_secs(60),
        }
    }
}

/// Plan the problem with one agent per robot.
pub fn run(problem: &Problem, options: &RunOptions) -> Result<PlanOutcome, PlanError> {
    plan_problem(problem, options)
}

fn merge(mut all: Vec<PathOutcome>) -> Vec<PathOutcome> {
    all.sort_by_key(|o| o.path);
    all
}

fn finish_outcome(agents: Vec<Agent>, mut messages: Vec<MessageRecord>) -> PlanOutcome {
    messages.sort();
    let report = agents[0].report();
    let iterations = agents[0].iterations();
    let resets = agents[0].resets();
    let max_agent_time = agents.iter().map(|a| a.busy_time()).max().unwrap_or_default();
    let trees = agents.into_iter().map(|a| (a.id(), a.into_tree())).collect();
    PlanOutcome {
        branch: 0,
        branch_formula: crate::formula::Formula::True,
        trees,
        report,
        iterations,
        resets,
        total_iterations: iterations,
        messages,
        max_agent_time,
    }
}

/// Drive a set of agents (one per robot, in id order) to success or budget
/// exhaustion.
pub fn execute(agents: Vec<Agent>, graph: &CommGraph, options: &RunOptions) -> Result<PlanOutcome, PlanError> {
    match options.runtime {
        Runtime::Sequential => execute_sequential(agents, options),
        Runtime::Threaded => execute_threaded(agents, graph, options),
    }
}

fn execute_sequential(mut agents: Vec<Agent>, options: &RunOptions) -> Result<PlanOutcome, PlanError> {
    let mut log = Vec::new();
    let branch = 0;
    let index: BTreeMap<RobotId, usize> = agents.iter().enumerate().map(|(k, a)| (a.id(), k)).collect();
    let gather = |agents: &[Agent], log: &mut Vec<MessageRecord>, j: usize, k: usize| -> Vec<Vec<(RobotId, Vec<f64>)>> {
        agents
            .iter()
            .map(|a| {
                a.neighbors()
                    .iter()
                    .map(|n| {
                        if options.log_messages {
                            log.push(MessageRecord {
                                branch,
                                j,
                                k,
                                sender: *n,
                                receiver: a.id(),
                            });
                        }
                        (*n, agents[index[n]].outgoing().to_vec())
                    })
                    .collect()
            })
            .collect()
    };
    loop {
        let j = agents[0].iterations();
        for a in agents.iter_mut() {
            a.plan_iteration();
        }
        let mut k = 0;
        loop {
            let inbox = gather(&agents, &mut log, j, k);
            for (a, nb) in agents.iter_mut().zip(&inbox) {
                a.observe(nb)?;
            }
            k += 1;
            if agents.iter().all(|a| a.is_done()) {
                break;
            }
        }
        let inbox = gather(&agents, &mut log, j, k);
        let mut outcomes = Vec::new();
        for (a, nb) in agents.iter_mut().zip(&inbox) {
            outcomes.extend(a.finish(nb)?);
        }
        let merged = merge(outcomes);
        let mut done = false;
        for a in agents.iter_mut() {
            done = a.apply(&merged);
        }
        if done {
            let mut cert = Vec::new();
            for a in &agents {
                cert.extend(a.certification()?);
            }
            let merged = merge(cert);
            for a in agents.iter_mut() {
                done = a.apply_certification(&merged);
            }
            if done {
                return Ok(finish_outcome(agents, log));
            }
        }
        let mut control = Control::Continue;
        for a in agents.iter_mut() {
            control = a.end_iteration();
        }
        if control == Control::Exhausted {
            return Err(PlanError::Budget {
                iterations: agents[0].iterations(),
                unsatisfied: agents[0].unsatisfied(),
            });
        }
    }
}

/// Reusable barrier that gives up after a timeout or when any party aborts.
struct Board {
    parties: usize,
    state: Mutex<BoardState>,
    cv: Condvar,
}

struct BoardState {
    arrived: usize,
    generation: u64,
    aborted: Option<String>,
    /// Double-buffered slots: reduction `r` uses buffer `r % 2`, so a fast
    /// agent writing reduction `r + 1` never clobbers what a slow agent is
    /// still reading from reduction `r`.
    done: [Vec<bool>; 2],
    outcomes: [Vec<Vec<PathOutcome>>; 2],
}

impl Board {
    fn new(parties: usize) -> Board {
        Board {
            parties,
            state: Mutex::new(BoardState {
                arrived: 0,
                generation: 0,
                aborted: None,
                done: [vec![false; parties], vec![false; parties]],
                outcomes: [vec![Vec::new(); parties], vec![Vec::new(); parties]],
            }),
            cv: Condvar::new(),
        }
    }

    fn abort(&self, why: String) {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.aborted.get_or_insert(why);
        self.cv.notify_all();
    }

    fn aborted(&self) -> Option<String> {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).aborted.clone()
    }

    fn wait(&self, timeout: Duration) -> Result<(), PlanError> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(why) = &s.aborted {
            return Err(PlanError::Protocol(format!("run aborted: {why}")));
        }
        let gen = s.generation;
        s.arrived += 1;
        if s.arrived == self.parties {
            s.arrived = 0;
            s.generation += 1;
            self.cv.notify_all();
            return Ok(());
        }
        let deadline = Instant::now() + timeout;
        while s.generation == gen {
            if let Some(why) = &s.aborted {
                return Err(PlanError::Protocol(format!("run aborted: {why}")));
            }
            let now = Instant::now();
            if now >= deadline {
                let why = "barrier timed out".to_string();
                s.aborted.get_or_insert(why.clone());
                self.cv.notify_all();
                return Err(PlanError::Protocol(why));
            }
            s = self.cv.wait_timeout(s, deadline - now).unwrap_or_else(|e| e.into_inner()).0;
        }
        Ok(())
    }

    fn all_done(&self, slot: usize, me: usize, done: bool, round: u64, timeout: Duration) -> Result<bool, PlanError> {
        let b = (round % 2) as usize;
        self.state.lock().unwrap_or_else(|e| e.into_inner()).done[b][slot] = done;
        let _ = me;
        self.wait(timeout)?;
        Ok(self.state.lock().unwrap_or_else(|e| e.into_inner()).done[b].iter().all(|d| *d))
    }

    fn gather(&self, slot: usize, mine: Vec<PathOutcome>, round: u64, timeout: Duration) -> Result<Vec<PathOutcome>, PlanError> {
        let b = (round % 2) as usize;
        self.state.lock().unwrap_or_else(|e| e.into_inner()).outcomes[b][slot] = mine;
        self.wait(timeout)?;
        let all = self.state.lock().unwrap_or_else(|e| e.into_inner()).outcomes[b].concat();
        Ok(merge(all))
    }
}

struct Links {
    tx: Vec<(RobotId, Sender<RoundMessage>)>,
    rx: Vec<(RobotId, Receiver<RoundMessage>)>,
}

fn recv(board: &Board, rx: &Receiver<RoundMessage>, timeout: Duration) -> Result<RoundMessage, PlanError> {
    let deadline = Instant::now() + timeout;
    loop {
        match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(m) => return Ok(m),
            Err(RecvTimeoutError::Timeout) => {
                if let Some(why) = board.aborted() {
                    return Err(PlanError::Protocol(format!("run aborted: {why}")));
                }
                if Instant::now() >= deadline {
                    return Err(PlanError::Protocol("round timed out waiting for a neighbor".into()));
                }
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(PlanError::Protocol("neighbor channel closed".into()));
            }
        }
    }
}

enum AgentEnd {
    Success,
    Exhausted,
}

fn agent_loop(
    agent: &mut Agent,
    slot: usize,
    links: &Links,
    board: &Board,
    options: &RunOptions,
    log: &mut Vec<MessageRecord>,
) -> Result<AgentEnd, PlanError> {
    let timeout = options.round_timeout;
    let mut reduction = 0u64;
    let exchange = |agent: &Agent, log: &mut Vec<MessageRecord>, j: usize, k: usize| -> Result<Vec<(RobotId, Vec<f64>)>, PlanError> {
        for (_, tx) in &links.tx {
            let msg = RoundMessage {
                sender: agent.id(),
                j,
                k,
                state: agent.outgoing().to_vec(),
            };
            tx.send(msg).map_err(|_| PlanError::Protocol("neighbor channel closed".into()))?;
        }
        let mut inbox = Vec::with_capacity(links.rx.len());
        for (from, rx) in &links.rx {
            let m = recv(board, rx, timeout)?;
            if m.sender != *from || m.j != j || m.k != k {
                return Err(PlanError::Protocol(format!(
                    "robot {} expected round ({j}, {k}) from {}, got ({}, {}) from {}",
                    agent.id().0,
                    from.0,
                    m.j,
                    m.k,
                    m.sender.0
                )));
            }
            if options.log_messages {
                log.push(MessageRecord {
                    branch: 0,
                    j,
                    k,
                    sender: *from,
                    receiver: agent.id(),
                });
            }
            inbox.push((*from, m.state));
        }
        Ok(inbox)
    };
    loop {
        let j = agent.iterations();
        agent.plan_iteration();
        let mut k = 0;
        loop {
            let inbox = exchange(agent, log, j, k)?;
            let done = agent.observe(&inbox)?;
            k += 1;
            let all = board.all_done(slot, slot, done, reduction, timeout)?;
            reduction += 1;
            if all {
                break;
            }
        }
        let inbox = exchange(agent, log, j, k)?;
        let mine = agent.finish(&inbox)?;
        let merged = board.gather(slot, mine, reduction, timeout)?;
        reduction += 1;
        if agent.apply(&merged) {
            let cert = agent.certification()?;
            let merged = board.gather(slot, cert, reduction, timeout)?;
            reduction += 1;
            if agent.apply_certification(&merged) {
                return Ok(AgentEnd::Success);
            }
        }
        if agent.end_iteration() == Control::Exhausted {
            return Ok(AgentEnd::Exhausted);
        }
    }
}

fn execute_threaded(agents: Vec<Agent>, graph: &CommGraph, options: &RunOptions) -> Result<PlanOutcome, PlanError> {
    let n = agents.len();
    let mut senders: BTreeMap<(RobotId, RobotId), Sender<RoundMessage>> = BTreeMap::new();
    let mut receivers: BTreeMap<(RobotId, RobotId), Receiver<RoundMessage>> = BTreeMap::new();
    for (a, b) in graph.edges() {
        for (from, to) in [(a, b), (b, a)] {
            let (tx, rx) = channel();
            senders.insert((from, to), tx);
            receivers.insert((from, to), rx);
        }
    }
    let links: Vec<Links> = agents
        .iter()
        .map(|a| Links {
            tx: a
                .neighbors()
                .iter()
                .map(|nb| (*nb, senders.remove(&(a.id(), *nb)).expect("edge")))
                .collect(),
            rx: a
                .neighbors()
                .iter()
                .map(|nb| (*nb, receivers.remove(&(*nb, a.id())).expect("edge")))
                .collect(),
        })
        .collect();
    let board = Board::new(n);
    let results: Vec<(Agent, Result<AgentEnd, PlanError>, Vec<MessageRecord>)> = std::thread::scope(|s| {
        let handles: Vec<_> = agents
            .into_iter()
            .zip(links)
            .enumerate()
            .map(|(slot, (mut agent, links))| {
                let board = &board;
                s.spawn(move || {
                    let mut log = Vec::new();
                    let id = agent.id();
                    let r = catch_unwind(AssertUnwindSafe(|| agent_loop(&mut agent, slot, &links, board, options, &mut log)));
                    let r = match r {
                        Ok(Ok(end)) => Ok(end),
                        Ok(Err(e)) => {
                            board.abort(format!("robot {} failed: {e}", id.0));
                            Err(e)
                        }
                        Err(_) => {
                            board.abort(format!("robot {} panicked", id.0));
                            Err(PlanError::Agent {
                                robot: id.0,
                                message: "agent panicked".into(),
                            })
                        }
                    };
                    (agent, r, log)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("agent thread result")).collect()
    });
    // Report the first agent error that is not a knock-on abort.
    let mut first_err = None;
    for (_, r, _) in &results {
        if let Err(e) = r {
            let knock_on = matches!(e, PlanError::Protocol(m) if m.starts_with("run aborted"));
            if first_err.is_none() || !knock_on {
                if !knock_on || first_err.is_none() {
                    first_err = Some(match e {
                        PlanError::Agent { robot, message } => PlanError::Agent {
                            robot: *robot,
                            message: message.clone(),
                        },
                        other => PlanError::Protocol(other.to_string()),
                    });
                }
                if !knock_on {
                    break;
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let exhausted = matches!(results[0].1, Ok(AgentEnd::Exhausted));
    let log: Vec<MessageRecord> = results.iter().flat_map(|(_, _, l)| l.iter().copied()).collect();
    let agents: Vec<Agent> = results.into_iter().map(|(a, _, _)| a).collect();
    if exhausted {
        return Err(PlanError::Budget {
            iterations: agents[0].iterations(),
            unsatisfied: agents[0].unsatisfied(),
        });
    }
    Ok(finish_outcome(agents, log))
}
