use std::io::Write;

use kerbwsn::energy::{lifetime_vs_energy, run_lifetime_detailed, traffic_vs_users};
use kerbwsn::scenario::Scenario;
use kerbwsn::threat::{all_attacks, AttackOutcome, Attempt};

use crate::{Failure, EXIT_ATTACK};

fn verdict(a: &Attempt) -> String {
    match (a.served, a.rejection) {
        (true, _) => "SERVED".into(),
        (false, Some(kind)) => format!("refused: {kind}"),
        (false, None) => "refused".into(),
    }
}

fn outcome(o: &AttackOutcome) -> String {
    match (o.served, o.rejection) {
        (true, _) => "served".into(),
        (false, Some(kind)) => format!("not served ({kind})"),
        (false, None) => "not served".into(),
    }
}

/// Replayed sealed messages have nothing to gain when nothing is sealed,
/// so they are not expected to succeed without authentication.
fn expected_open_success(attack: &str) -> bool {
    attack != "replay"
}

pub(crate) fn attack_report(scenario: &Scenario, out: &mut dyn Write) -> Result<(), Failure> {
    let on = all_attacks(scenario, true).map_err(Failure::scenario)?;
    let off = all_attacks(scenario, false).map_err(Failure::scenario)?;

    writeln!(
        out,
        "{:<24} {:<52} {:<30} auth off",
        "attack", "strategy", "auth on"
    )?;
    for (a_on, a_off) in on.iter().zip(&off) {
        for (s_on, s_off) in a_on.attempts.iter().zip(&a_off.attempts) {
            writeln!(
                out,
                "{:<24} {:<52} {:<30} {}",
                a_on.attack_name,
                s_on.strategy,
                verdict(s_on),
                verdict(s_off)
            )?;
        }
    }
    writeln!(out)?;

    let mut failures = Vec::new();
    for (a_on, a_off) in on.iter().zip(&off) {
        writeln!(
            out,
            "{:<24} auth on: {:<32} auth off: {}",
            a_on.attack_name,
            outcome(a_on),
            outcome(a_off)
        )?;
        if a_on.served {
            failures.push(format!(
                "{} was served with authentication on",
                a_on.attack_name
            ));
        }
        if expected_open_success(&a_off.attack_name) && !a_off.served {
            failures.push(format!(
                "{} was not served with authentication off",
                a_off.attack_name
            ));
        }
    }
    if failures.is_empty() {
        writeln!(out, "result: PASS")?;
        Ok(())
    } else {
        writeln!(out, "result: FAIL")?;
        Err(Failure {
            code: EXIT_ATTACK,
            msg: failures.join("; "),
        })
    }
}

fn pairs<A: std::fmt::Display, B: std::fmt::Display>(items: &[(A, B)]) -> String {
    items
        .iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn summary(scenario: &Scenario, out: &mut dyn Write) -> Result<(), Failure> {
    let stations: usize = scenario.realms.iter().map(|r| r.services.len()).sum();
    writeln!(
        out,
        "seed {}: {} realms, {} base stations, {} sensor nodes each",
        scenario.seed,
        scenario.realms.len(),
        stations,
        scenario.topology.n_nodes
    )?;

    let traffic =
        traffic_vs_users(scenario, &scenario.run.user_counts).map_err(Failure::scenario)?;
    writeln!(out, "traffic (users:bytes): {}", pairs(&traffic))?;

    for (label, auth) in [("without", false), ("with", true)] {
        let run = run_lifetime_detailed(scenario, auth).map_err(Failure::scenario)?;
        writeln!(
            out,
            "lifetime {label} authentication: {} ticks; served {}, denied {}; energy audit {}",
            run.trace.lifetime,
            run.stats.served,
            run.stats.denied,
            if run.energy.audit() {
                "balanced"
            } else {
                "UNBALANCED"
            }
        )?;
    }

    let energy = lifetime_vs_energy(scenario, &scenario.run.energies).map_err(Failure::scenario)?;
    writeln!(
        out,
        "lifetime by initial energy (energy:ticks): {}",
        pairs(&energy)
    )?;

    let attacks = all_attacks(scenario, true).map_err(Failure::scenario)?;
    let served = attacks.iter().filter(|a| a.served).count();
    writeln!(
        out,
        "attacks served with authentication: {served} of {}",
        attacks.len()
    )?;
    Ok(())
}
