//! The schedule enumerator run against the real registry at the bounds the
//! checker is meant for.

use ori_core::{enumerate_schedules, ExploreConfig, Mode, Topology, ViolationKind};

#[test]
fn ori_on_two_agents_two_shards_is_clean() {
    for steps in 1..=3 {
        for topology in [Topology::Dedicated, Topology::Shared] {
            let cfg = ExploreConfig::new(2, 2, steps, Mode::OriOn, topology);
            let r = enumerate_schedules(&cfg).unwrap();
            assert_eq!(r.schedules as u128, cfg.schedule_count());
            assert_eq!(r.total_violations(), 0, "{steps} steps {topology:?}: {:?}", r.examples);
            assert_eq!(r.invariant_failures, 0);
        }
    }
}

#[test]
fn ori_off_shared_finds_violations() {
    for steps in 1..=3 {
        let r = enumerate_schedules(&ExploreConfig::new(2, 2, steps, Mode::OriOff, Topology::Shared)).unwrap();
        assert!(r.total_violations() >= 1);
        assert!(r.count(ViolationKind::SrcPresent) >= 1);
        // nobody writes the sibling shard in this topology
        assert_eq!(r.count(ViolationKind::CrossShardStaleAccepted), 0);
    }
}

#[test]
fn ori_off_dedicated_accepts_stale_siblings() {
    let r = enumerate_schedules(&ExploreConfig::new(2, 2, 1, Mode::OriOff, Topology::Dedicated)).unwrap();
    assert!(r.count(ViolationKind::CrossShardStaleAccepted) >= 1);
    assert_eq!(r.count(ViolationKind::SrcPresent), 0);
}

#[test]
fn three_agents_one_shard_ori_on() {
    let r = enumerate_schedules(&ExploreConfig::new(3, 1, 2, Mode::OriOn, Topology::Shared)).unwrap();
    assert_eq!(r.total_violations(), 0);
    assert!(r.src_rejected > 0);
}
