# The full life of one experiment: pre-register, start, measure,
# stop, decide. Every transition lands in an append-only audit trail
# and the registry state is a pure function of that trail.

from splitlab import (EffectModel, LossModel, Platform, PlatformConfig,
                      PreRegistration, Scenario, TrafficProfile)

platform = Platform(PlatformConfig(), clock=lambda: 1_700_000_000_000)

# Pre-registration is the anti-p-hacking safeguard: hypothesis, primary
# metric, and expected direction are declared before any traffic flows,
# and become immutable the moment the experiment starts.
prereg = PreRegistration(
    hypothesis="a one-page checkout lifts completed purchases",
    primary_metric="conversion",
    expected_direction="increase",
    secondary_metrics=("revenue",),
)
# The salt is normally rolled fresh at creation; fixing it makes this
# walkthrough print the same numbers every run.
record = platform.create_experiment(
    "one-page-checkout", "cookie", [1, 1], exposure_buckets=1000,
    preregistration=prereg, team="payments", product_area="checkout",
    actor="ana", salt="2fd5ae3c1b09876654321009cafe0042")
print("created:", record.experiment_key, "| state:", record.state.value,
      "| salt:", record.salt)

platform.start_experiment("one-page-checkout", actor="ana")

# Simulated traffic stands in for production: 20,000 visitors, a true
# +1.5pp lift on a 5% baseline, nothing lost in transit.
scenario = Scenario(
    name="lifecycle-demo",
    profile=TrafficProfile(n_visitors=20_000, seed=42),
    effect=EffectModel(baseline_rate=0.05, lifts=(0.015,)),
    loss=LossModel(),
    experiment=platform.registry.assignment_spec("one-page-checkout"),
)
truth = platform.simulate(scenario)
print("ground truth recruited:", truth.recruited,
      "converters:", truth.converters)

report = platform.compose_report("one-page-checkout")
print("report status:", report.status)
primary = report.blocks[0]
for cell in primary.cells:
    print(f"  variant {cell.variant_index}: {cell.x}/{cell.n}"
          f" = {cell.mean:.4f}")
test = primary.comparisons[0].test
print(f"  diff {test.estimate_diff:+.4f}"
      f"  ci [{test.ci_low:.4f}, {test.ci_high:.4f}]"
      f"  p {test.p_value:.2g}")
print("  direction as pre-registered:", primary.direction_ok)

# Stopping freezes the numbers and the rendered report; the audit entry
# records who pulled the trigger and why.
platform.stop_experiment("one-page-checkout", actor="ana",
                         reason="planned sample size reached")
platform.record_decision("one-page-checkout", outcome="ship",
                         rationale="primary metric up, direction as "
                                   "pre-registered", decided_by="ana",
                         actor="ana")

final = platform.registry.get("one-page-checkout")
print("final state:", final.state.value,
      "| decision:", final.decision.outcome)
print("frozen report snapshots:", len(final.report_snapshots))
print("audit trail:")
for entry in platform.registry.audit_entries():
    print(f"  #{entry['seq']} {entry['action']:<14} by {entry['actor']}")

platform.close()
