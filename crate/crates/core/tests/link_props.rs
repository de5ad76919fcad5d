use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinn_gateway::aer::{build_mc_packet, SpinnPacket};
use spinn_gateway::link::{
    decode_transition, deframe_symbols, encode_symbol, frame_packet, link_transfer,
    transfer_budget, AckPolicy, Direction, Link, LinkConfig, LinkError, LinkSymbol,
};

fn packet_strategy() -> impl Strategy<Value = SpinnPacket> {
    (any::<u32>(), any::<Option<u32>>()).prop_map(|(k, p)| build_mc_packet(k, p))
}

fn policy_strategy() -> impl Strategy<Value = AckPolicy> {
    prop_oneof![
        Just(AckPolicy::Normal),
        Just(AckPolicy::NeverAck),
        (0u64..5).prop_map(AckPolicy::DelayTicks),
    ]
}

#[test]
fn every_transition_decodes_to_its_symbol() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let symbols: Vec<LinkSymbol> = LinkSymbol::all().collect();
    assert_eq!(symbols.len(), 17);
    for _ in 0..200 {
        let prev: u8 = rng.random_range(0..128);
        for &sym in &symbols {
            let next = encode_symbol(prev, sym);
            assert_eq!((prev ^ next).count_ones(), 2);
            assert_eq!(next & 0x80, 0);
            assert_eq!(decode_transition(prev, next), Ok(Some(sym)));
        }
    }
}

#[test]
fn only_the_seventeen_pairs_decode() {
    for prev in 0u8..128 {
        let mut valid = 0;
        for next in 0u8..128 {
            match decode_transition(prev, next) {
                Ok(Some(_)) => valid += 1,
                Ok(None) => assert_eq!(prev, next),
                Err(LinkError::InvalidTransition { .. }) => {}
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert_eq!(valid, 17);
    }
}

#[test]
fn frame_examples() {
    use LinkSymbol::{Data, EndOfPacket};
    let zero = frame_packet(&build_mc_packet(0, None));
    let mut expected = vec![Data(1)];
    expected.extend([Data(0); 9]);
    expected.push(EndOfPacket);
    assert_eq!(zero, expected);

    let six = frame_packet(&build_mc_packet(6, None));
    assert_eq!(&six[..3], &[Data(1), Data(0), Data(6)]);
    assert_eq!(six.len(), 11);

    assert!(matches!(
        deframe_symbols(
            &[Data(0); 9]
                .iter()
                .copied()
                .chain([EndOfPacket])
                .collect::<Vec<_>>()
        ),
        Err(LinkError::FramingError { nibbles: 9 })
    ));
    assert_eq!(
        deframe_symbols(&[Data(1), Data(0)]),
        Err(LinkError::MissingEop)
    );
}

#[test]
fn transfer_examples() {
    let cfg = LinkConfig::default();
    let one = [build_mc_packet(0, None)];
    let report = link_transfer(&one, cfg, transfer_budget(&one, cfg)).unwrap();
    assert_eq!((report.delivered.len(), report.symbols_sent), (1, 11));
    assert!(report.stall.is_none());

    let never = LinkConfig {
        ack_policy: AckPolicy::NeverAck,
        ..cfg
    };
    let report = link_transfer(&one, never, transfer_budget(&one, never)).unwrap();
    assert_eq!(report.delivered.len(), 0);
    assert_eq!(report.symbols_sent, 1);
    assert_eq!(report.stall.unwrap().symbol_index, 1);
    assert_eq!(report.summary(), "delivered 0, stalled at symbol 1");

    let report = link_transfer(&[], cfg, 10).unwrap();
    assert_eq!((report.delivered.len(), report.symbols_sent), (0, 0));
    assert_eq!(link_transfer(&[], cfg, 0), Err(LinkError::ZeroBudget));

    let three = [build_mc_packet(0, None); 3];
    let report = link_transfer(&three, cfg, transfer_budget(&three, cfg)).unwrap();
    assert_eq!(report.summary(), "delivered 3, symbols 33");
}

#[test]
fn garbage_transition_resyncs_at_end_of_packet() {
    let mut link = Link::new(Direction::Tx, LinkConfig::default());
    let good = build_mc_packet(6, None);
    link.tx
        .enqueue_symbols([LinkSymbol::Data(3), LinkSymbol::Data(4)]);
    let mut t = 0;
    while !link.is_idle() {
        link.step(t);
        t += 1;
    }
    // Three wires toggled at once: not a code word.
    let mut rx = link.rx.clone();
    let wires = link.tx.wires();
    assert_eq!(rx.step(t, wires ^ 0b0000111), None);
    assert_eq!(rx.framing_errors(), 1);
    assert!(rx.is_resyncing());
    let mut prev = wires ^ 0b0000111;
    let mut delivered = Vec::new();
    for sym in frame_packet(&good).into_iter().chain(frame_packet(&good)) {
        t += 1;
        prev = encode_symbol(prev, sym);
        delivered.extend(rx.step(t, prev));
    }
    // The first frame is swallowed by the resync, the second comes through.
    assert_eq!(delivered, vec![good.to_word()]);
    assert_eq!(rx.framing_errors(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn frame_round_trip(packet in packet_strategy()) {
        let symbols = frame_packet(&packet);
        prop_assert_eq!(symbols.len(), if packet.payload.is_some() { 19 } else { 11 });
        prop_assert_eq!(symbols.last(), Some(&LinkSymbol::EndOfPacket));
        prop_assert_eq!(deframe_symbols(&symbols), Ok(packet.to_word()));
    }
}

proptest! {
    #[test]
    fn flow_control_and_delivery(
        packets in proptest::collection::vec(packet_strategy(), 0..8),
        policy in policy_strategy(),
    ) {
        let cfg = LinkConfig { ack_policy: policy, ack_timeout: 50 };
        let mut link = Link::new(Direction::Tx, cfg);
        for p in &packets {
            link.tx.enqueue_word(p.to_word());
        }
        let mut delivered = Vec::new();
        let budget = transfer_budget(&packets, cfg);
        for t in 0..budget {
            delivered.extend(link.step(t));
            let in_flight = link.tx.symbols_sent() - link.tx.acks_received();
            prop_assert!(in_flight <= 1);
            prop_assert_eq!(link.tx.wires() & 0x80, 0);
        }
        let expected: Vec<_> = packets.iter().map(SpinnPacket::to_word).collect();
        match policy {
            AckPolicy::NeverAck if !packets.is_empty() => {
                prop_assert!(delivered.is_empty());
                prop_assert_eq!(link.tx.symbols_sent(), 1);
                prop_assert_eq!(link.tx.stall().map(|s| s.symbol_index), Some(1));
            }
            _ => {
                prop_assert_eq!(delivered, expected);
                prop_assert!(link.tx.stall().is_none());
            }
        }
        prop_assert!(link.max_in_flight() <= 1);
    }

    #[test]
    fn transfers_are_deterministic(
        packets in proptest::collection::vec(packet_strategy(), 0..6),
        policy in policy_strategy(),
    ) {
        let cfg = LinkConfig { ack_policy: policy, ack_timeout: 20 };
        let budget = transfer_budget(&packets, cfg);
        let a = link_transfer(&packets, cfg, budget).unwrap();
        let b = link_transfer(&packets, cfg, budget).unwrap();
        prop_assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn emitted_transitions_toggle_two_wires(packets in proptest::collection::vec(packet_strategy(), 1..4)) {
        let mut link = Link::new(Direction::Tx, LinkConfig::default()).with_trace();
        for p in &packets {
            link.tx.enqueue_word(p.to_word());
        }
        let mut t = 0;
        while !link.is_idle() {
            link.step(t);
            t += 1;
        }
        let mut prev = 0u8;
        for row in link.trace() {
            if row.wires.data != prev {
                prop_assert_eq!((row.wires.data ^ prev).count_ones(), 2);
                prev = row.wires.data;
            }
        }
    }
}
