mod common;

use common::first_crossing;
use csaudit::dataio::synthetic_manifest;
use csaudit::engine::{AuditSession, Mode, OverallStatus, SessionConfig, StrategyKind};
use csaudit::population::ContestResult;
use csaudit::simulator::{
    bravo_stopping_time, simulate, simulate_contest, simulate_risk, stopping_times, Analysis,
    Method, ReportedTotals, Scenario,
};

/// apK factors for a population of `n` ones tested at one half.
fn apk_unanimous_factors(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| {
            let c = (n as f64 / 2.0 - (i - 1) as f64) / (n - i + 1) as f64;
            if c <= 0.0 {
                1.0
            } else {
                1.0 + 2f64.min(1.0 / c) * (1.0 - c)
            }
        })
        .collect()
}

#[test]
fn unanimous_apk_stopping_time_matches_product_oracle() {
    let oracle = first_crossing(apk_unanimous_factors(5000), 0.05).unwrap();
    assert_eq!(oracle, 5);
    let s = Scenario {
        replications: Some(3),
        ..Scenario::new(5000, 0, 0)
    };
    let times = stopping_times(&s, Method::Apk).unwrap();
    assert!(times.iter().all(|&t| t == Some(oracle as u64)), "{times:?}");
}

#[test]
fn unanimous_bravo_stopping_time_matches_product_oracle() {
    let oracle = first_crossing(std::iter::repeat(2.0), 0.05).unwrap();
    assert_eq!(oracle, 5);
    let reported = ReportedTotals {
        winner_votes: 5000,
        loser_votes: 0,
    };
    let t = bravo_stopping_time(reported, (5000, 0, 0), 0.05, 3).unwrap();
    assert_eq!(t, Some(oracle as u64));
}

#[test]
fn bravo_ignores_nuisance_ballots() {
    // All nuisance ballots come first or not: the ratio only moves on votes,
    // so with two candidate ballots it can never reach 20.
    let reported = ReportedTotals {
        winner_votes: 2,
        loser_votes: 1,
    };
    assert_eq!(
        bravo_stopping_time(reported, (2, 0, 50), 0.05, 9).unwrap(),
        None
    );
}

#[test]
fn false_assertion_is_rarely_certified() {
    let s = Scenario {
        methods: vec![Method::Sqkelly, Method::Dkelly, Method::Apk],
        reported: Some(ReportedTotals {
            winner_votes: 550,
            loser_votes: 450,
        }),
        replications: Some(300),
        seed: 5,
        ..Scenario::new(450, 550, 0)
    };
    let report = simulate_risk(&s).unwrap();
    for r in &report.risk {
        assert!(r.within_bound, "{r:?}");
        assert!(r.rate <= 0.01, "{r:?}");
    }
}

#[test]
fn single_replication_smoke() {
    let text =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/smoke.toml"))
            .unwrap();
    let s = Scenario::from_toml(&text).unwrap();
    let report = simulate(&s).unwrap();
    assert_eq!(report.analysis, Analysis::Workload);
    assert_eq!(report.workload.len(), 1);
    assert_eq!(report.workload[0].stopping_times.len(), 1);
}

#[test]
fn reports_are_bit_for_bit_reproducible() {
    let s = Scenario {
        methods: vec![Method::Apk, Method::Linkelly, Method::Bravo],
        replications: Some(40),
        seed: 77,
        ..Scenario::new(300, 200, 100)
    };
    assert_eq!(
        simulate(&s).unwrap().to_json(),
        simulate(&s).unwrap().to_json()
    );
    let other = Scenario {
        seed: 78,
        ..s.clone()
    };
    assert_ne!(
        simulate(&s).unwrap().to_json(),
        simulate(&other).unwrap().to_json()
    );
}

#[test]
fn contest_simulation_reproduces_engine_sessions() {
    let contest =
        ContestResult::from_counts("three", &[("A", 300), ("B", 150), ("C", 100)], 600).unwrap();
    let votes = synthetic_manifest(&contest).unwrap();
    let votes = votes.votes();
    let seeds = [1, 2, 3, 4];
    let runs = simulate_contest(&contest, StrategyKind::Sqkelly, 0.05, &seeds).unwrap();
    for run in runs {
        let config = SessionConfig::new(0.05, StrategyKind::Sqkelly, Mode::Rla, run.seed);
        let mut session = AuditSession::create(contest.clone(), config).unwrap();
        while session.status().overall == OverallStatus::Open {
            let id = session.draw_next().unwrap();
            session.record_ballot(&id, votes[id.as_str()]).unwrap();
        }
        assert_eq!(
            session.status().certified_at,
            run.certified_at,
            "seed {}",
            run.seed
        );
    }
}
