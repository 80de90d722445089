//! Walk the phased protocol by hand: legal tags per phase, a proposal,
//! an acceptance, and the JSON-lines transcript.

use diplomat::domain::Deal;
use diplomat::protocol::{write_transcript, Direction, Message, PhaseBudgets, ProtocolRules, ProtocolState};

fn main() -> diplomat::Result<()> {
    let rules = ProtocolRules {
        num_agents: 2,
        value_counts: vec![3, 4],
        budgets: PhaseBudgets([1, 1, 2, 1, 1]),
        reveal_buckets: 3,
        phase_free: false,
    };
    let mut state = ProtocolState::new(rules)?;

    let script = [
        (0, Message::Reveal { issue: 0, bucket: 2 }),
        (1, Message::Pass),
        (0, Message::Argue { issue: 1, direction: Direction::Lower, strength: 0.7 }),
        (1, Message::Reveal { issue: 1, bucket: 0 }),
        (0, Message::Propose { deal: Deal::new(vec![0, 3]) }),
        (1, Message::Counteroffer { proposal_id: 0, deal: Deal::new(vec![1, 2]) }),
        (0, Message::Accept { proposal_id: 1 }),
    ];
    for (agent, msg) in script {
        println!(
            "round {} {:<16} agent {agent} may send {:?}",
            state.round,
            state.phase.to_string(),
            state.legal_moves(agent)?
        );
        state.apply_message(agent, msg)?;
    }

    // anything after termination is refused
    let refused = state.apply_message(1, Message::Pass).unwrap_err();
    println!("after the deal: {refused}");

    write_transcript(&mut std::io::stdout(), &state)
}
