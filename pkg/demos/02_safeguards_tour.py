# The safeguards in action: sample-ratio-mismatch gating, pipeline
# divergence monitoring, and the live guardrail readout that makes a
# fast human kill switch possible. Each section injects one specific
# failure and shows how the platform surfaces it.

from splitlab import (EffectModel, LossModel, Platform, PlatformConfig,
                      PreRegistration, Scenario, TrafficProfile)

PREREG = PreRegistration(
    hypothesis="demo probe",
    primary_metric="conversion",
    expected_direction="increase",
    secondary_metrics=("revenue",),
)


def fresh_platform():
    return Platform(PlatformConfig(), clock=lambda: 1_700_000_000_000)


def scenario_for(platform, key, n, lifts=(0.0,), loss=None, seed=7):
    # Fixed salt so the walkthrough prints the same numbers every run.
    platform.create_experiment(key, "cookie", [1, 1], 1000,
                               preregistration=PREREG, actor="demo",
                               salt="ab" * 16)
    platform.start_experiment(key, actor="demo")
    return Scenario(name=f"demo-{key}",
                    profile=TrafficProfile(n_visitors=n, seed=seed),
                    effect=EffectModel(baseline_rate=0.05, lifts=lifts),
                    loss=loss or LossModel(),
                    experiment=platform.registry.assignment_spec(key))


# --- Selective attrition: treatment visitors silently vanish ---------
# 5% of treatment visitors drop out before any event is captured. The
# arms are no longer comparable, so every comparative number is hidden;
# showing them would invite a confidently wrong decision.
platform = fresh_platform()
platform.simulate(scenario_for(platform, "attrition-probe", 20_000,
                               loss=LossModel(attrition=(0.0, 0.05)),
                               seed=30))
report = platform.compose_report("attrition-probe")
print("SRM chi-square:", round(report.srm.chi_square, 2),
      "p:", f"{report.srm.p_value:.2e}", "flagged:", report.srm.flagged)
print("report status:", report.status)
for block in report.blocks:
    print(f"  {block.metric_name:<11} hidden={block.hidden}  {block.note}")
platform.close()

# --- Pipeline divergence: the streaming feed quietly loses data ------
# 1% of goal events never reach the streaming pipeline. The batch
# pipeline replays the full log, the comparison localizes the gap to
# the conversion counters, and the report carries the warning.
platform = fresh_platform()
platform.simulate(scenario_for(platform, "lossy-feed", 100_000,
                               loss=LossModel(rt_only_loss=0.01)))
divergence = platform.last_divergence
print("\ndivergence flagged:", divergence.any_flagged)
for row in divergence.flagged_rows:
    print(f"  variant {row.variant_index} {row.metric_name}.{row.field}:"
          f" rt={row.rt_value:.0f} batch={row.batch_value:.0f}"
          f" off by {row.relative_diff:.2%}")
platform.close()

# --- Kill path: a treatment bug zeroes conversion outright -----------
# Guardrail deltas come from the streaming side, so the collapse shows
# up within a tick or two of the events landing. Stopping remains a
# human act: the platform shows, a person decides.
platform = fresh_platform()
scenario = scenario_for(platform, "broken-deploy", 4_000, lifts=(-0.05,))
scenario.run(platform.log, platform.methods)

ticks = 0
while ticks < 10:
    platform.tick(max_records=platform.log.head // 2 + 1)
    ticks += 1
    rows = [r for r in platform.guardrail_status("broken-deploy").rows
            if r.metric_name == "conversion"]
    if rows and rows[0].relative_delta is not None \
            and rows[0].relative_delta <= -0.95:
        break
row = rows[0]
print(f"\ncollapse visible after {ticks} tick(s):"
      f" treatment conversion {row.relative_delta:+.0%} vs control"
      f" (z = {row.z:.1f})")
platform.stop_experiment("broken-deploy", actor="oncall",
                         reason="conversion collapsed on guardrails")
print("stopped by:", platform.registry.audit_entries()[-1]["actor"],
      "| reason:",
      platform.registry.audit_entries()[-1]["payload"]["reason"])
platform.close()
