//! Property-based invariants: the congestion state register as a bounded
//! multiset of pending signals, fairness-index algebra, hash behavior, and
//! key involution.

use proptest::prelude::*;

use rpmsim::metrics::jain_index;
use rpmsim::packet::{Ecn, FlowKey, Packet, TcpFlags};
use rpmsim::rpm::{flow_hash, CongestionStateRegister};
use rpmsim::time::{serialization_time, SimTime};

fn key_strategy() -> impl Strategy<Value = FlowKey> {
    (any::<u32>(), any::<u32>(), any::<u8>(), any::<u16>(), any::<u16>()).prop_map(
        |(src_ip, dst_ip, proto, src_port, dst_port)| FlowKey {
            src_ip,
            dst_ip,
            proto,
            src_port,
            dst_port,
        },
    )
}

fn ack_packet(key: FlowKey) -> Packet {
    // A pure ACK travelling in the *reverse* direction of `key`'s flow.
    let rev = key.swapped();
    Packet {
        src_ip: rev.src_ip,
        dst_ip: rev.dst_ip,
        proto: rev.proto,
        src_port: rev.src_port,
        dst_port: rev.dst_port,
        ecn: Ecn::NotEct,
        tcp_flags: TcpFlags::ACK,
        seq: 0,
        ack_no: 1,
        size: 40,
        enqueue_time: SimTime::ZERO,
        created_at: SimTime::ZERO,
        flow: 0,
    }
}

proptest! {
    #[test]
    fn swapped_is_an_involution(key in key_strategy()) {
        prop_assert_eq!(key.swapped().swapped(), key);
    }

    #[test]
    fn flow_hash_in_range_and_deterministic(key in key_strategy(), shift in 4usize..16) {
        let size = 1usize << shift;
        let h = flow_hash(&key, size);
        prop_assert!(h < size);
        prop_assert_eq!(h, flow_hash(&key, size));
    }

    /// Random interleavings of signals and reverse ACKs over a small key set:
    /// cells stay within [0, counter_max], marked ACKs equal drained signals,
    /// and the register sum never exceeds signals minus drains.
    #[test]
    fn register_is_a_bounded_signal_multiset(
        ops in prop::collection::vec((0usize..4, prop::bool::ANY), 1..400),
        counter_max in 1u32..8,
    ) {
        let keys: Vec<FlowKey> = (0..4).map(|i| FlowKey {
            src_ip: 10 + i,
            dst_ip: 20 + i,
            proto: 6,
            src_port: 1000 + i as u16,
            dst_port: 2000,
        }).collect();
        let mut reg = CongestionStateRegister::new(1 << 12, counter_max);
        let mut signals = 0u64;
        let mut saturated_losses = 0u64;
        let mut marked = 0u64;
        for (k, is_signal) in ops {
            if is_signal {
                let idx = flow_hash(&keys[k], reg.size());
                if reg.cell(idx) == counter_max {
                    saturated_losses += 1;
                }
                reg.on_congestion_signal(&keys[k]);
                signals += 1;
            } else {
                let mut pkt = ack_packet(keys[k]);
                if reg.on_reverse_packet(&mut pkt) {
                    prop_assert!(pkt.tcp_flags.contains(TcpFlags::ECE));
                    marked += 1;
                } else {
                    prop_assert!(!pkt.tcp_flags.contains(TcpFlags::ECE));
                }
            }
            prop_assert!((0..reg.size()).all(|i| reg.cell(i) <= counter_max));
        }
        prop_assert_eq!(reg.sum() + marked + saturated_losses, signals);
    }

    #[test]
    fn jain_in_unit_interval_and_scale_invariant(
        xs in prop::collection::vec(0.0f64..1e9, 1..40),
        scale in 1e-6f64..1e6,
    ) {
        prop_assume!(xs.iter().any(|&x| x > 0.0));
        let j = jain_index(&xs).unwrap();
        prop_assert!(j > 0.0 && j <= 1.0 + 1e-12);
        let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        let js = jain_index(&scaled).unwrap();
        prop_assert!((j - js).abs() < 1e-9);
    }

    #[test]
    fn jain_equal_shares_is_one(x in 1.0f64..1e9, n in 1usize..50) {
        let xs = vec![x; n];
        let j = jain_index(&xs).unwrap();
        prop_assert!((j - 1.0).abs() < 1e-12);
    }

    #[test]
    fn serialization_time_monotone_in_size(
        bytes in 1u64..100_000,
        extra in 1u64..10_000,
        rate in 1_000_000u64..100_000_000_000,
    ) {
        let t1 = serialization_time(bytes, rate);
        let t2 = serialization_time(bytes + extra, rate);
        prop_assert!(t2 >= t1);
        prop_assert!(t1 > SimTime::ZERO);
    }
}

/// Deterministic birthday check: hashing 10^4 distinct 5-tuples into 2^16
/// cells must land within 3 sigma of the expected distinct-cell count.
#[test]
fn hash_collision_rate_within_birthday_bound() {
    let m = 1usize << 16;
    let n = 10_000usize;
    let mut seen = vec![false; m];
    let mut distinct = 0usize;
    for i in 0..n {
        let key = FlowKey {
            src_ip: 0x0a00_0000 + i as u32,
            dst_ip: 0x0b00_0000 + (i as u32).rotate_left(7),
            proto: 6,
            src_port: (10_000 + i % 50_000) as u16,
            dst_port: 443,
        };
        let h = flow_hash(&key, m);
        if !seen[h] {
            seen[h] = true;
            distinct += 1;
        }
    }
    // Occupancy of n balls in m bins: E[distinct] = m(1-(1-1/m)^n),
    // Var <= n. Use 3*sqrt(n) as a generous band.
    let expected = m as f64 * (1.0 - (1.0 - 1.0 / m as f64).powi(n as i32));
    let dev = (distinct as f64 - expected).abs();
    assert!(
        dev < 3.0 * (n as f64).sqrt(),
        "distinct cells {distinct} vs expected {expected:.1} (deviation {dev:.1})"
    );
}
