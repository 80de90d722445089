//! The phased negotiation protocol: a deterministic state machine over
//! rounds, phases, proposals and acceptances.
//!
//! Every round each agent sends exactly one message, applied in ascending
//! agent-id order. Phases follow a fixed per-scenario schedule of round
//! budgets. The protocol is strategy free; all negotiating behaviour lives in
//! the policies.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Deal, Scenario};
use crate::error::{Error, Result};

pub const TRANSCRIPT_FORMAT: &str = "diplomat-transcript/1";
pub const DEFAULT_REVEAL_BUCKETS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initialization,
    Exploration,
    ProposalExchange,
    Argumentation,
    Convergence,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Initialization,
        Phase::Exploration,
        Phase::ProposalExchange,
        Phase::Argumentation,
        Phase::Convergence,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Tags a phase admits before standing-proposal preconditions are applied.
    pub fn tags(self) -> TagSet {
        use MessageTag::*;
        match self {
            Phase::Initialization => TagSet::of(&[Reveal, Pass]),
            Phase::Exploration => TagSet::of(&[Reveal, Argue, Pass]),
            Phase::ProposalExchange => TagSet::of(&[Propose, Accept, Reject, Counteroffer, Pass]),
            Phase::Argumentation => TagSet::of(&[Argue, Accept, Reject, Pass]),
            Phase::Convergence => TagSet::of(&[Accept, Counteroffer, Pass]),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Round budget per phase, in phase order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseBudgets(pub [usize; 5]);

impl Default for PhaseBudgets {
    fn default() -> Self {
        PhaseBudgets([1, 2, 4, 2, 3])
    }
}

impl PhaseBudgets {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn phase_of(&self, round: usize) -> Result<Phase> {
        phase_of(round, self)
    }
}

/// Phase whose cumulative budget interval contains `round`.
pub fn phase_of(round: usize, budgets: &PhaseBudgets) -> Result<Phase> {
    let mut end = 0;
    for (phase, &len) in Phase::ALL.iter().zip(&budgets.0) {
        end += len;
        if round < end {
            return Ok(*phase);
        }
    }
    Err(Error::OutOfEpisode {
        round,
        total: budgets.total(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Raise,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Propose { deal: Deal },
    Accept { proposal_id: usize },
    Reject { proposal_id: usize },
    Counteroffer { proposal_id: usize, deal: Deal },
    Argue { issue: usize, direction: Direction, strength: f64 },
    Reveal { issue: usize, bucket: usize },
    Pass,
}

impl Message {
    pub fn tag(&self) -> MessageTag {
        match self {
            Message::Propose { .. } => MessageTag::Propose,
            Message::Accept { .. } => MessageTag::Accept,
            Message::Reject { .. } => MessageTag::Reject,
            Message::Counteroffer { .. } => MessageTag::Counteroffer,
            Message::Argue { .. } => MessageTag::Argue,
            Message::Reveal { .. } => MessageTag::Reveal,
            Message::Pass => MessageTag::Pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageTag {
    Propose,
    Accept,
    Reject,
    Counteroffer,
    Argue,
    Reveal,
    Pass,
}

pub const TAG_COUNT: usize = 7;

impl MessageTag {
    pub const ALL: [MessageTag; TAG_COUNT] = [
        MessageTag::Propose,
        MessageTag::Accept,
        MessageTag::Reject,
        MessageTag::Counteroffer,
        MessageTag::Argue,
        MessageTag::Reveal,
        MessageTag::Pass,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Whether the tag refers to the standing proposal.
    pub fn needs_standing(self) -> bool {
        matches!(
            self,
            MessageTag::Accept | MessageTag::Reject | MessageTag::Counteroffer
        )
    }

    pub fn carries_deal(self) -> bool {
        matches!(self, MessageTag::Propose | MessageTag::Counteroffer)
    }
}

impl fmt::Display for MessageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Small bitset of message tags.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TagSet(u8);

impl TagSet {
    pub const FULL: TagSet = TagSet(0b111_1111);

    pub fn of(tags: &[MessageTag]) -> Self {
        let mut set = TagSet::default();
        for &t in tags {
            set.insert(t);
        }
        set
    }

    pub fn insert(&mut self, tag: MessageTag) {
        self.0 |= 1 << tag.index();
    }

    pub fn remove(&mut self, tag: MessageTag) {
        self.0 &= !(1 << tag.index());
    }

    pub fn contains(&self, tag: MessageTag) -> bool {
        self.0 & (1 << tag.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: TagSet) -> TagSet {
        TagSet(self.0 | other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = MessageTag> + '_ {
        MessageTag::ALL.into_iter().filter(|t| self.contains(*t))
    }

    /// Boolean mask in tag-index order.
    pub fn mask(&self) -> [bool; TAG_COUNT] {
        let mut m = [false; TAG_COUNT];
        for t in self.iter() {
            m[t.index()] = true;
        }
        m
    }
}

impl fmt::Debug for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub id: usize,
    pub author: usize,
    pub deal: Deal,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub round: usize,
    pub phase: Phase,
    pub agent: usize,
    pub message: Message,
}

/// How an episode ended. `round` counts the rounds consumed, so a failure
/// always reports the full budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    Agreement { deal: Deal, round: usize },
    Failure { round: usize },
}

impl Outcome {
    pub fn rounds(&self) -> usize {
        match self {
            Outcome::Agreement { round, .. } | Outcome::Failure { round } => *round,
        }
    }

    pub fn deal(&self) -> Option<&Deal> {
        match self {
            Outcome::Agreement { deal, .. } => Some(deal),
            Outcome::Failure { .. } => None,
        }
    }

    pub fn is_agreement(&self) -> bool {
        matches!(self, Outcome::Agreement { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ongoing,
    Finished(Outcome),
}

/// Static parameters the state machine checks messages against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRules {
    pub num_agents: usize,
    pub value_counts: Vec<usize>,
    pub budgets: PhaseBudgets,
    pub reveal_buckets: usize,
    /// Lift per-phase tag restrictions (the protocol-free ablation).
    pub phase_free: bool,
}

impl ProtocolRules {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            num_agents: scenario.num_agents,
            value_counts: scenario.value_counts(),
            budgets: scenario.round_budgets,
            reveal_buckets: DEFAULT_REVEAL_BUCKETS,
            phase_free: false,
        }
    }

    pub fn with_phase_free(mut self, phase_free: bool) -> Self {
        self.phase_free = phase_free;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolState {
    pub rules: ProtocolRules,
    pub round: usize,
    pub phase: Phase,
    /// Agent whose message is applied next within the current round.
    pub next_agent: usize,
    pub proposal_log: Vec<ProposalRecord>,
    pub standing: Option<usize>,
    pub acceptances: Vec<bool>,
    pub message_log: Vec<LoggedMessage>,
    pub terminated: Option<Outcome>,
}

impl ProtocolState {
    pub fn new(rules: ProtocolRules) -> Result<Self> {
        if rules.num_agents < 2 {
            return Err(Error::InvalidScenario("protocol needs at least two agents".into()));
        }
        if rules.reveal_buckets < 2 {
            return Err(Error::InvalidScenario("at least two reveal buckets required".into()));
        }
        let phase = phase_of(0, &rules.budgets)?;
        Ok(Self {
            acceptances: vec![false; rules.num_agents],
            rules,
            round: 0,
            phase,
            next_agent: 0,
            proposal_log: Vec::new(),
            standing: None,
            message_log: Vec::new(),
            terminated: None,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.rules.num_agents
    }

    pub fn total_budget(&self) -> usize {
        self.rules.budgets.total()
    }

    pub fn standing_proposal(&self) -> Option<&ProposalRecord> {
        self.standing.map(|id| &self.proposal_log[id])
    }

    pub fn acceptance_count(&self) -> usize {
        self.acceptances.iter().filter(|a| **a).count()
    }

    pub fn outcome(&self) -> Status {
        match &self.terminated {
            Some(o) => Status::Finished(o.clone()),
            None => Status::Ongoing,
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.is_some()
    }

    /// Tags `agent` may send now.
    pub fn legal_moves(&self, agent: usize) -> Result<TagSet> {
        if self.terminated.is_some() {
            return Err(Error::ProtocolClosed);
        }
        if agent >= self.num_agents() {
            return Err(Error::Contract(format!(
                "agent {agent} out of range for {} agents",
                self.num_agents()
            )));
        }
        let mut tags = if self.rules.phase_free {
            Phase::ALL.iter().fold(TagSet::default(), |acc, p| acc.union(p.tags()))
        } else {
            self.phase.tags()
        };
        let foreign_standing = self
            .standing_proposal()
            .is_some_and(|p| p.author != agent);
        if !foreign_standing {
            tags.remove(MessageTag::Accept);
            tags.remove(MessageTag::Reject);
            tags.remove(MessageTag::Counteroffer);
        }
        Ok(tags)
    }

    fn violation(&self, agent: usize, tag: MessageTag, reason: impl Into<String>) -> Error {
        Error::ProtocolViolation {
            agent,
            phase: self.phase.to_string(),
            tag: tag.to_string(),
            reason: reason.into(),
        }
    }

    fn check_deal(&self, agent: usize, tag: MessageTag, deal: &Deal) -> Result<()> {
        let counts = &self.rules.value_counts;
        if deal.values.len() != counts.len()
            || deal.values.iter().zip(counts).any(|(&v, &c)| v >= c)
        {
            return Err(self.violation(agent, tag, format!("deal {:?} invalid", deal.values)));
        }
        Ok(())
    }

    fn check_target(&self, agent: usize, tag: MessageTag, proposal_id: usize) -> Result<()> {
        if self.standing != Some(proposal_id) {
            return Err(self.violation(
                agent,
                tag,
                format!("proposal {proposal_id} is not the standing proposal"),
            ));
        }
        Ok(())
    }

    /// Validate a message without changing state.
    pub fn check_message(&self, agent: usize, msg: &Message) -> Result<()> {
        let legal = self.legal_moves(agent)?;
        let tag = msg.tag();
        if agent != self.next_agent {
            return Err(self.violation(
                agent,
                tag,
                format!("out of turn, agent {} moves next", self.next_agent),
            ));
        }
        if !legal.contains(tag) {
            return Err(self.violation(agent, tag, format!("legal tags are {legal:?}")));
        }
        match msg {
            Message::Propose { deal } => self.check_deal(agent, tag, deal),
            Message::Counteroffer { proposal_id, deal } => {
                self.check_target(agent, tag, *proposal_id)?;
                self.check_deal(agent, tag, deal)
            }
            Message::Accept { proposal_id } | Message::Reject { proposal_id } => {
                self.check_target(agent, tag, *proposal_id)
            }
            Message::Argue { issue, strength, .. } => {
                if *issue >= self.rules.value_counts.len() {
                    return Err(self.violation(agent, tag, format!("no issue {issue}")));
                }
                if !(0.0..=1.0).contains(strength) {
                    return Err(self.violation(agent, tag, "strength outside [0, 1]"));
                }
                Ok(())
            }
            Message::Reveal { issue, bucket } => {
                if *issue >= self.rules.value_counts.len() {
                    return Err(self.violation(agent, tag, format!("no issue {issue}")));
                }
                if *bucket >= self.rules.reveal_buckets {
                    return Err(self.violation(agent, tag, format!("no bucket {bucket}")));
                }
                Ok(())
            }
            Message::Pass => Ok(()),
        }
    }

    /// Apply `agent`'s message. The state is untouched when an error is returned.
    pub fn apply_message(&mut self, agent: usize, msg: Message) -> Result<()> {
        self.check_message(agent, &msg)?;
        match &msg {
            Message::Propose { deal } | Message::Counteroffer { deal, .. } => {
                let id = self.proposal_log.len();
                self.proposal_log.push(ProposalRecord {
                    id,
                    author: agent,
                    deal: deal.clone(),
                    round: self.round,
                });
                self.standing = Some(id);
                self.acceptances.iter_mut().for_each(|a| *a = false);
                self.acceptances[agent] = true;
            }
            Message::Accept { proposal_id } => {
                self.acceptances[agent] = true;
                if self.acceptance_count() == self.num_agents() {
                    self.terminated = Some(Outcome::Agreement {
                        deal: self.proposal_log[*proposal_id].deal.clone(),
                        round: self.round + 1,
                    });
                }
            }
            Message::Reject { .. } => {
                self.standing = None;
                self.acceptances.iter_mut().for_each(|a| *a = false);
            }
            Message::Argue { .. } | Message::Reveal { .. } | Message::Pass => {}
        }
        self.message_log.push(LoggedMessage {
            round: self.round,
            phase: self.phase,
            agent,
            message: msg,
        });
        if self.terminated.is_none() {
            self.advance_turn();
        }
        Ok(())
    }

    /// Functional form of [`apply_message`](Self::apply_message).
    pub fn applied(&self, agent: usize, msg: Message) -> Result<Self> {
        let mut next = self.clone();
        next.apply_message(agent, msg)?;
        Ok(next)
    }

    fn advance_turn(&mut self) {
        self.next_agent += 1;
        if self.next_agent < self.num_agents() {
            return;
        }
        self.next_agent = 0;
        self.round += 1;
        let total = self.total_budget();
        if self.round >= total {
            self.terminated = Some(Outcome::Failure { round: total });
        } else {
            self.phase = phase_of(self.round, &self.rules.budgets)
                .expect("round below total budget has a phase");
        }
    }

    /// Message for `tag` aimed at the current standing proposal, if one exists.
    pub fn targeted(&self, tag: MessageTag, deal: Option<Deal>) -> Option<Message> {
        let proposal_id = self.standing?;
        match tag {
            MessageTag::Accept => Some(Message::Accept { proposal_id }),
            MessageTag::Reject => Some(Message::Reject { proposal_id }),
            MessageTag::Counteroffer => Some(Message::Counteroffer {
                proposal_id,
                deal: deal?,
            }),
            _ => None,
        }
    }
}

#[derive(Serialize)]
struct TranscriptHeader<'a> {
    format: &'a str,
    num_agents: usize,
    budgets: &'a PhaseBudgets,
}

#[derive(Serialize)]
struct TranscriptFooter<'a> {
    outcome: &'a Outcome,
}

/// Write a transcript: a header line, one JSON line per message, and a final
/// line carrying the outcome.
pub fn write_transcript<W: Write>(out: &mut W, state: &ProtocolState) -> Result<()> {
    let header = TranscriptHeader {
        format: TRANSCRIPT_FORMAT,
        num_agents: state.num_agents(),
        budgets: &state.rules.budgets,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for m in &state.message_log {
        writeln!(out, "{}", serde_json::to_string(m)?)?;
    }
    if let Some(outcome) = &state.terminated {
        writeln!(out, "{}", serde_json::to_string(&TranscriptFooter { outcome })?)?;
    }
    Ok(())
}
