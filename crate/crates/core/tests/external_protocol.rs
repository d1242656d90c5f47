use std::time::Duration;

use poca::bracket::FidelityLadder;
use poca::objective::{ExternalObjective, ExternalOptions, Objective};
use poca::orchestrator::{run, LogRecord, Mode, RunConfig};
use poca::space::{Condition, ConfigSpace, Configuration, ParamSpec, Value};
use poca::EvalError;

const WORKER: &str = env!("CARGO_BIN_EXE_poca-echo-worker");

fn space() -> ConfigSpace {
    let mut momentum = ParamSpec::continuous("momentum", 0.0, 0.99);
    momentum.condition = Some(Condition {
        parent: 1,
        value: Value::Cat(1),
    });
    ConfigSpace::new(vec![
        ParamSpec::continuous("x", 0.0, 1.0),
        ParamSpec::categorical("opt", &["adam", "sgd"]),
        momentum,
    ])
    .unwrap()
}

fn cfg(x: f64) -> Configuration {
    Configuration::new(vec![Value::Float(x), Value::Cat(0), Value::Inactive])
}

fn worker(args: &str, in_flight: usize) -> ExternalObjective {
    let options = ExternalOptions {
        timeout: Duration::from_secs(20),
        max_in_flight: in_flight,
    };
    ExternalObjective::spawn(&format!("{WORKER} {args}"), space(), options).unwrap()
}

#[test]
fn echo_round_trip() {
    let w = worker("", 1);
    for (i, x) in [0.0, 0.25, 0.125, 1.0].into_iter().enumerate() {
        assert_eq!(w.evaluate(&cfg(x), 3, i as u64), Ok(x));
    }
    assert!(w.is_alive());
}

#[test]
fn worker_error_reply_is_a_failed_evaluation() {
    // The echo worker answers with an error when its parameter is missing.
    let s = ConfigSpace::new(vec![ParamSpec::categorical("opt", &["adam", "sgd"]), {
        let mut m = ParamSpec::continuous("momentum", 0.0, 0.99);
        m.condition = Some(Condition {
            parent: 0,
            value: Value::Cat(1),
        });
        m
    }])
    .unwrap();
    let w = ExternalObjective::spawn(WORKER, s, ExternalOptions::default()).unwrap();
    let inactive = Configuration::new(vec![Value::Cat(0), Value::Inactive]);
    assert!(matches!(
        w.evaluate(&inactive, 1, 0),
        Err(EvalError::Worker { .. })
    ));
    let active = Configuration::new(vec![Value::Cat(1), Value::Float(0.5)]);
    assert_eq!(w.evaluate(&active, 1, 0), Ok(0.5));
}

#[test]
fn out_of_order_responses_are_matched_by_id() {
    let w = worker("--shuffle 2", 2);
    for round in 0..20 {
        let (a, b) = (round as f64 / 40.0, 0.5 + round as f64 / 40.0);
        let (ra, rb) = std::thread::scope(|s| {
            let ha = s.spawn(|| w.evaluate(&cfg(a), 1, 0));
            let hb = s.spawn(|| w.evaluate(&cfg(b), 1, 0));
            (ha.join().unwrap(), hb.join().unwrap())
        });
        assert_eq!((ra, rb), (Ok(a), Ok(b)));
    }
}

#[test]
fn worker_death_fails_pending_and_later_requests() {
    let w = worker("--die-after 3", 1);
    assert_eq!(w.evaluate(&cfg(0.1), 1, 0), Ok(0.1));
    assert_eq!(w.evaluate(&cfg(0.2), 1, 0), Ok(0.2));
    assert!(matches!(
        w.evaluate(&cfg(0.3), 1, 0),
        Err(EvalError::Disconnected { .. })
    ));
    assert!(w.evaluate(&cfg(0.4), 1, 0).is_err());
    assert!(!w.is_alive());
}

#[test]
fn silent_worker_times_out() {
    let options = ExternalOptions {
        timeout: Duration::from_millis(200),
        max_in_flight: 1,
    };
    let w = ExternalObjective::spawn("cat > /dev/null", space(), options).unwrap();
    assert!(matches!(
        w.evaluate(&cfg(0.5), 1, 0),
        Err(EvalError::Timeout { .. })
    ));
}

#[test]
fn malformed_reply_fails_only_its_request() {
    let script = r#"read hello; read a; echo '{"type":"result","id":0,"loss":"oops"}'; read b; echo '{"type":"result","id":1,"loss":2.5}'; read s"#;
    let w = ExternalObjective::spawn(script, space(), ExternalOptions::default()).unwrap();
    assert!(matches!(
        w.evaluate(&cfg(0.5), 1, 0),
        Err(EvalError::Protocol(_))
    ));
    assert_eq!(w.evaluate(&cfg(0.5), 1, 0), Ok(2.5));
}

#[test]
fn run_completes_when_worker_dies_mid_rung() {
    let w = worker("--die-after 5", 1);
    let rc = RunConfig::new(
        Mode::Poca,
        200,
        FidelityLadder::new(1, 9, 1.0 / 3.0).unwrap(),
        4,
    );
    let result = run(&rc, &w).unwrap();
    let evals: Vec<_> = result
        .log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Eval {
                loss,
                budget,
                error,
                ..
            } => Some((*loss, *budget, error.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(evals.iter().take(4).filter(|e| e.0.is_some()).count(), 4);
    assert!(evals[4..].iter().all(|e| e.0.is_none() && e.2.is_some()));
    // Failed evaluations are still charged.
    assert_eq!(
        result.consumed_budget,
        evals.iter().map(|e| e.1).sum::<u64>()
    );
    let summary = result.summary().unwrap();
    assert_eq!(summary.failed_evaluations, evals.len() as u64 - 4);
    assert!(summary.incumbent.is_some());
}

#[test]
fn parallel_rungs_with_a_shuffling_worker_match_serial_run() {
    let rc = RunConfig::new(
        Mode::Poca,
        400,
        FidelityLadder::new(1, 9, 1.0 / 3.0).unwrap(),
        8,
    );
    let serial = run(&rc, &worker("", 1)).unwrap();
    let parallel = run(
        &RunConfig {
            jobs: 3,
            ..rc.clone()
        },
        &worker("--shuffle 3", 3),
    )
    .unwrap();
    assert_eq!(serial.log, parallel.log);
}
