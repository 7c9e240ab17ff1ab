use distembed::transport::{
    run_world, MessageBuffer, Phase, ReduceOp, RequestHandle, ScheduleMode, TransportError, WorldConfig, WorldError,
};
use distembed::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det(p: usize) -> WorldConfig {
    WorldConfig::deterministic(p, 7)
}

#[test]
fn all_to_all_swap() {
    let report = run_world(&det(2), |ep| {
        let me = ep.rank();
        let mut sends = vec![Vec::new(), Vec::new()];
        sends[1 - me].push(if me == 0 { 'x' } else { 'y' });
        Ok(ep.all_to_all_v(sends)?)
    })
    .unwrap();
    // indexed by source rank
    assert_eq!(report.results[0], vec![vec![], vec!['y']]);
    assert_eq!(report.results[1], vec![vec!['x'], vec![]]);
}

#[test]
fn all_to_all_identity() {
    let report = run_world(&det(1), |ep| Ok(ep.all_to_all_v(vec![vec!["a", "b"]])?)).unwrap();
    assert_eq!(report.results[0], vec![vec!["a", "b"]]);
}

#[test]
fn all_to_all_matches_routing_oracle() {
    let p = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // matrix[s][d] is what s sends to d
    let matrix: Vec<Vec<Vec<u64>>> = (0..p)
        .map(|s| {
            (0..p)
                .map(|d| {
                    let n = rng.gen_range(0..=17);
                    (0..n).map(|i| (s * 1000 + d * 100 + i) as u64).collect()
                })
                .collect()
        })
        .collect();
    let m = &matrix;
    let report = run_world(&det(p), |ep| Ok(ep.all_to_all_v(m[ep.rank()].clone())?)).unwrap();
    let mut sent = 0u64;
    let mut received = 0u64;
    for d in 0..p {
        let expected: Vec<Vec<u64>> = (0..p).map(|s| matrix[s][d].clone()).collect();
        assert_eq!(report.results[d], expected);
    }
    for c in &report.counters {
        sent += c.setup.all_to_all_entries;
        received += c.setup.all_to_all_entries_received;
    }
    assert_eq!(sent, received);
    let total: usize = matrix.iter().flatten().map(Vec::len).sum();
    assert_eq!(sent as usize, total);
}

#[test]
fn all_reduce_max_and_sum() {
    let vals = [1u64, 5, 2];
    let report = run_world(&det(3), |ep| {
        let v = vals[ep.rank()];
        Ok((ep.all_reduce(v, ReduceOp::Max)?, ep.all_reduce(v, ReduceOp::Sum)?))
    })
    .unwrap();
    assert!(report.results.iter().all(|&r| r == (5, 8)));
}

#[test]
fn all_reduce_sum_matches_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vals: Vec<u64> = (0..8).map(|_| rng.gen::<u64>() >> 4).collect();
    let expected: u64 = vals.iter().sum();
    let v = &vals;
    let report = run_world(&WorldConfig::fuzzed(8, 5), |ep| Ok(ep.all_reduce(v[ep.rank()], ReduceOp::Sum)?)).unwrap();
    assert!(report.results.iter().all(|&r| r == expected));
}

#[test]
fn all_reduce_op_mismatch_is_protocol_error() {
    let err = run_world(&det(2), |ep| {
        let op = if ep.rank() == 0 { ReduceOp::Max } else { ReduceOp::Sum };
        Ok(ep.all_reduce(1, op)?)
    })
    .unwrap_err();
    assert!(matches!(err, WorldError::Protocol(_)), "{err}");
}

#[test]
fn ibarrier_single_rank_completes_on_first_test() {
    let report = run_world(&det(1), |ep| {
        let h = ep.ibarrier()?;
        Ok(ep.test(h)?)
    })
    .unwrap();
    assert!(report.results[0]);
}

#[test]
fn ibarrier_waits_for_late_rank() {
    let report = run_world(&det(2), |ep| {
        if ep.rank() == 1 {
            for _ in 0..100 {
                ep.tick()?;
            }
            let entered = ep.step();
            let h = ep.ibarrier()?;
            while !ep.test(h)? {}
            Ok(vec![(entered, true)])
        } else {
            let h = ep.ibarrier()?;
            let mut seen = Vec::new();
            loop {
                let at = ep.step();
                let done = ep.test(h)?;
                seen.push((at, done));
                if done {
                    break;
                }
            }
            Ok(seen)
        }
    })
    .unwrap();
    let entered = report.results[1][0].0;
    let seen = &report.results[0];
    assert!(seen.len() > 50, "rank 0 polled only {} times", seen.len());
    for &(at, done) in seen {
        assert_eq!(done, at > entered, "test at step {at} with entry at {entered}");
    }
}

#[test]
fn ibarrier_completion_never_precedes_last_entry() {
    for seed in 0..500u64 {
        let cfg = WorldConfig::fuzzed(4, seed);
        let report = run_world(&cfg, |ep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + ep.rank() as u64);
            for _ in 0..rng.gen_range(0..20) {
                ep.tick()?;
            }
            let entry = ep.step();
            let h = ep.ibarrier()?;
            let done_at = loop {
                let at = ep.step();
                if ep.test(h)? {
                    break at;
                }
            };
            Ok((entry, done_at))
        })
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let last_entry = report.results.iter().map(|r| r.0).max().unwrap();
        for &(_, done) in &report.results {
            assert!(done >= last_entry, "seed {seed}: completed at {done} before entry at {last_entry}");
        }
    }
}

#[test]
fn testing_a_null_handle_is_usage_error() {
    let err = run_world(&det(1), |ep| Ok(ep.test(RequestHandle::NULL)?)).unwrap_err();
    match err {
        WorldError::RankFailed { source, .. } => {
            assert!(matches!(*source, Error::Transport(TransportError::Usage(_))))
        }
        other => panic!("unexpected {other}"),
    }
}

fn wait(ep: &mut distembed::transport::Endpoint, h: RequestHandle) -> Result<(), Error> {
    while !ep.test(h)? {}
    Ok(())
}

#[test]
fn full_buffer_and_exit_marker() {
    let report = run_world(&det(2), |ep| {
        if ep.rank() == 0 {
            ep.set_neighbors(&[], &[1])?;
            let entries: Vec<(u32, u32)> = (0..128).map(|i| (i, i + 1)).collect();
            let a = ep.isend(1, MessageBuffer::from_entries(128, entries))?;
            let b = ep.isend(1, MessageBuffer::exit_marker())?;
            wait(ep, a)?;
            wait(ep, b)?;
            Ok(vec![])
        } else {
            ep.set_neighbors(&[0], &[])?;
            let a = ep.irecv_prepost(0)?;
            let b = ep.irecv_prepost(0)?;
            wait(ep, a)?;
            wait(ep, b)?;
            Ok(vec![ep.get_count(a)?, ep.get_count(b)?])
        }
    })
    .unwrap();
    assert_eq!(report.results[1], vec![128, 0]);
    assert_eq!(report.counters[0].setup.p2p_entries, 128);
    assert_eq!(report.counters[0].setup.exit_markers, 1);
    assert_eq!(report.counters[1].setup.p2p_entries_received, 128);
}

#[test]
fn send_outside_targets_is_usage_error() {
    let err = run_world(&det(2), |ep| {
        if ep.rank() == 0 {
            ep.isend(1, MessageBuffer::exit_marker())?;
        }
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, WorldError::RankFailed { rank: 0, .. }), "{err}");
}

#[test]
fn channel_is_fifo_under_fuzzing() {
    for seed in 0..200u64 {
        let cfg = WorldConfig::fuzzed(3, seed);
        let report = run_world(&cfg, |ep| {
            let me = ep.rank();
            match me {
                0 => {
                    ep.set_neighbors(&[], &[1])?;
                    let mut hs = Vec::new();
                    for tag in 0..5u32 {
                        hs.push(ep.isend(1, MessageBuffer::from_entries(4, vec![(tag, tag)]))?);
                        ep.tick()?;
                    }
                    for h in hs {
                        wait(ep, h)?;
                    }
                    Ok(vec![])
                }
                1 => {
                    ep.set_neighbors(&[0], &[])?;
                    let hs: Vec<_> = (0..5).map(|_| ep.irecv_prepost(0)).collect::<Result<_, _>>()?;
                    let mut got = Vec::new();
                    for h in hs {
                        wait(ep, h)?;
                        got.push(ep.take_message(h)?.entries()[0].0);
                    }
                    Ok(got)
                }
                _ => {
                    for _ in 0..10 {
                        ep.tick()?;
                    }
                    Ok(vec![])
                }
            }
        })
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(report.results[1], vec![0, 1, 2, 3, 4], "seed {seed}");
    }
}

fn ping_pong(mode: ScheduleMode, seed: u64) -> (Vec<String>, Vec<u64>) {
    let cfg = WorldConfig::new(2, seed, mode).with_transcript();
    let report = run_world(&cfg, |ep| {
        let peer = 1 - ep.rank();
        ep.set_neighbors(&[peer], &[peer])?;
        let mut last = 0;
        for round in 0..10u32 {
            if (round as usize % 2) == ep.rank() {
                let h = ep.isend(peer, MessageBuffer::from_entries(1, vec![(round, last)]))?;
                wait(ep, h)?;
            } else {
                let h = ep.irecv_prepost(peer)?;
                wait(ep, h)?;
                last = ep.take_message(h)?.entries()[0].0;
            }
        }
        Ok(last as u64)
    })
    .unwrap();
    let transcript = report
        .transcript
        .iter()
        .map(|e| format!("{} {} {}", e.step, e.rank, e.what))
        .collect();
    (transcript, report.results)
}

#[test]
fn deterministic_transcripts_repeat() {
    let first = ping_pong(ScheduleMode::Deterministic, 1);
    assert!(!first.0.is_empty());
    for _ in 0..2 {
        assert_eq!(ping_pong(ScheduleMode::Deterministic, 1), first);
    }
    assert_eq!(first.1, vec![9, 8]);
    let fuzzed = ping_pong(ScheduleMode::Fuzzed, 4);
    assert_eq!(fuzzed.1, first.1);
    assert_eq!(ping_pong(ScheduleMode::Fuzzed, 4), fuzzed);
}

#[test]
fn skipped_collective_names_the_missing_rank() {
    let err = run_world(&det(2), |ep| {
        if ep.rank() == 0 {
            ep.all_reduce(1, ReduceOp::Sum)?;
        }
        Ok(())
    })
    .unwrap_err();
    match err {
        WorldError::Deadlock(report) => {
            assert_eq!(report.missing_participants, vec![1]);
            assert_eq!(report.blocked_ranks(), vec![0]);
            assert!(report.to_string().contains("rank(s) [1]"));
        }
        other => panic!("expected deadlock, got {other}"),
    }
}

#[test]
fn polling_forever_is_reported() {
    let err = run_world(&det(2), |ep| {
        let peer = 1 - ep.rank();
        ep.set_neighbors(&[peer], &[peer])?;
        let h = ep.irecv_prepost(peer)?;
        wait(ep, h)?;
        Ok(())
    })
    .unwrap_err();
    match err {
        WorldError::Deadlock(report) => assert!(report.livelock),
        other => panic!("expected livelock, got {other}"),
    }
}

#[test]
fn counters_follow_phase() {
    let report = run_world(&det(2), |ep| {
        ep.set_phase(Phase::Sampling);
        ep.all_reduce(1, ReduceOp::Sum)?;
        ep.set_phase(Phase::Training);
        ep.all_to_all_v(vec![vec![1u8], vec![2u8]])?;
        Ok(())
    })
    .unwrap();
    for c in &report.counters {
        assert_eq!(c.sampling.all_reduce, 1);
        assert_eq!(c.sampling.all_to_all, 0);
        assert_eq!(c.training.all_to_all, 1);
        assert_eq!(c.training.all_to_all_entries, 2);
    }
}

#[test]
fn request_reply_counts_once() {
    let report = run_world(&det(3), |ep| {
        let me = ep.rank() as u32;
        let reqs: Vec<Vec<u32>> = (0..3).map(|d| vec![me * 10 + d]).collect();
        let replies = ep.all_to_all_request(reqs, |src, qs: Vec<u32>| -> Result<Vec<u32>, Error> {
            Ok(qs.iter().map(|q| q + 1000 * src as u32).collect())
        })?;
        Ok(replies)
    })
    .unwrap();
    // rank 1 asked rank 2 for 12; rank 2 answered 12 + 1000 * 1
    assert_eq!(report.results[1][2], vec![1012]);
    assert_eq!(report.counters[0].setup.all_to_all, 1);
}

#[test]
fn rank_panic_is_reported() {
    let err = run_world(&det(2), |ep| {
        if ep.rank() == 1 {
            panic!("boom");
        }
        ep.all_reduce(0, ReduceOp::Max)?;
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, WorldError::RankPanicked { rank: 1, .. }), "{err}");
}
